use smpi::{InProcWorld, Session, SessionConfig};

fn main() {
    let world = InProcWorld::new(1);
    let s = Session::init(SessionConfig::inproc(&world, 0)).unwrap();
    let mut comm = s.world().unwrap();
    let mut data = vec![0i32; 8];
    let _req = comm.irecv(&mut data, 0, 0);
}
