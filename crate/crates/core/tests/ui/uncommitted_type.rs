use smpi::buffer_adapter;
use smpi::datatype::{DatatypeTree, FundamentalKind};

fn main() {
    let tree = DatatypeTree::fundamental(FundamentalKind::Int32);
    let _ = buffer_adapter(vec![0u32; 4], &tree);
}
