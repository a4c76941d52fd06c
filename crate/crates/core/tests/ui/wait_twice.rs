use smpi::{InProcWorld, Session, SessionConfig};

fn main() {
    let world = InProcWorld::new(1);
    let s = Session::init(SessionConfig::inproc(&world, 0)).unwrap();
    let mut comm = s.world().unwrap();
    let req = comm.irecv(vec![0u8; 1], 0, 0).unwrap();
    let _ = req.wait();
    let _ = req.wait();
}
