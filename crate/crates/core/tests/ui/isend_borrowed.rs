use smpi::{InProcWorld, Session, SessionConfig};

fn main() {
    let world = InProcWorld::new(1);
    let s = Session::init(SessionConfig::inproc(&world, 0)).unwrap();
    let mut comm = s.world().unwrap();
    let data = vec![1u8, 2, 3];
    let _req = comm.isend(&data[..], 0, 0);
}
