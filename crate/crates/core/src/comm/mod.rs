//! Point-to-point and collective operations on a [`Communicator`].
//!
//! Every buffer argument decides its own calling mode. Owned containers are
//! moved in and returned in the result; references are borrowed and the
//! result carries `()` in their place. Nonblocking operations only accept
//! owned buffers.
//!
//! [`Communicator`]: crate::Communicator

mod collective;
mod op;
mod p2p;

pub use op::{Arithmetic, LogicalAnd, LogicalOr, Logical, Max, Min, Prod, ReduceOp, ReductionOp, Sum};
