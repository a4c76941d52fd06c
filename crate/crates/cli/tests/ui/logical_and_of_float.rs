use smpi::{InProcWorld, LogicalAnd, Session, SessionConfig};

fn main() {
    let world = InProcWorld::new(1);
    let s = Session::init(SessionConfig::inproc(&world, 0)).unwrap();
    let mut comm = s.world().unwrap();
    let _ = comm.reduce(vec![1.0f32], LogicalAnd, 0);
}
