use smpi::datatype::{DatatypeTree, FundamentalKind};

fn main() {
    let tree = DatatypeTree::fundamental(FundamentalKind::Int32);
    let _committed = tree.commit().unwrap();
    let _again = tree.size();
}
