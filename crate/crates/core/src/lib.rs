//! Message passing with owned, typed buffers.
//!
//! A [`Session`] attaches one rank to a transport. Groups are taken from its
//! process sets, and [`Communicator`]s are built from groups. Buffers carry
//! their own type information (see [`buffer`]); derived layouts are described
//! with [`datatype::DatatypeTree`] and committed before use.
//!
//! ```
//! use smpi::{InProcWorld, Session, SessionConfig};
//!
//! let world = InProcWorld::new(2);
//! std::thread::scope(|s| {
//!     for rank in 0..2 {
//!         let world = world.clone();
//!         s.spawn(move || {
//!             let session = Session::init(SessionConfig::inproc(&world, rank)).unwrap();
//!             let mut comm = session.world().unwrap();
//!             if comm.rank() == 0 {
//!                 comm.send(&[1i32, 2, 3][..], 1, 0).unwrap();
//!             } else {
//!                 let (v, status) = comm.recv(vec![0i32; 8], 0, 0).unwrap();
//!                 assert_eq!((&v[..3], status.count), (&[1, 2, 3][..], 3));
//!             }
//!         });
//!     }
//! });
//! ```

pub mod buffer;
pub mod comm;
mod communicator;
pub mod datatype;
pub mod error;
pub mod pool;
pub mod request;
mod runtime;
pub mod serialize;
mod session;
pub mod transport;

pub use buffer::{buffer_adapter, buffer_adapter_counted, irregular, single, Irregular, Single, Typed};
pub use comm::{LogicalAnd, LogicalOr, Max, Min, Prod, ReduceOp, Sum};
pub use communicator::{Communicator, ProbeStatus, Status};
pub use error::{abort_code_of, AbortMode, Aborted, AssertLevel, Error, Result};
pub use pool::TypePool;
pub use request::{Failed, RecvRequest, RequestState, SendRequest};
pub use session::{Group, Session, SessionConfig, Transport};
pub use transport::{InProcWorld, TcpConfig, ANY_SOURCE, ANY_TAG};
