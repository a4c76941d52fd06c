use smpi::{InProcWorld, Session, SessionConfig, Sum};

fn main() {
    let world = InProcWorld::new(1);
    let s = Session::init(SessionConfig::inproc(&world, 0)).unwrap();
    let mut comm = s.world().unwrap();
    let _ = comm.allreduce(vec![true, false], Sum);
}
