use smpi::{InProcWorld, Session, SessionConfig};

fn main() {
    let world = InProcWorld::new(1);
    let s = Session::init(SessionConfig::inproc(&world, 0)).unwrap();
    let mut comm = s.world().unwrap();
    let mut v = vec![0u8; 4];
    let _ = comm.send_recv(&v, 0, 0, &mut v, 0, 0);
}
