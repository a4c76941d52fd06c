use smpi::{InProcWorld, Session, SessionConfig};

fn main() {
    let world = InProcWorld::new(1);
    let s = Session::init(SessionConfig::inproc(&world, 0)).unwrap();
    let mut comm = s.world().unwrap();
    let data = vec![0u16; 8];
    let _ = comm.recv(&data, 0, 0);
}
