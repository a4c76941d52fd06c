use super::{DatatypeTree, Fundamental, FundamentalKind};
use crate::error::{Error, Result};

/// One field of a [`LayoutDescriptor`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayoutField {
    Kind(FundamentalKind),
    /// Fixed-size array of a fundamental kind.
    Array(FundamentalKind, usize),
    Nested(LayoutDescriptor),
}

impl From<FundamentalKind> for LayoutField {
    fn from(kind: FundamentalKind) -> Self {
        LayoutField::Kind(kind)
    }
}

impl From<LayoutDescriptor> for LayoutField {
    fn from(d: LayoutDescriptor) -> Self {
        LayoutField::Nested(d)
    }
}

/// Explicit description of a plain-old-data composite: field offsets and
/// kinds plus the total extent (normally `size_of` the host type).
///
/// ```
/// use smpi::datatype::{DatatypeTree, FundamentalKind::*, LayoutDescriptor, LayoutField};
///
/// let my_type = LayoutDescriptor::new(32)
///     .field(0, Int32)
///     .field(4, LayoutField::Array(Int32, 3))
///     .field(16, Float64)
///     .field(24, Int8);
/// let committed = DatatypeTree::for_layout(&my_type).unwrap().commit().unwrap();
/// assert_eq!((committed.size(), committed.extent()), (25, 32));
/// ```
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayoutDescriptor {
    fields: Vec<(usize, LayoutField)>,
    extent: usize,
}

impl LayoutDescriptor {
    pub fn new(extent: usize) -> Self {
        LayoutDescriptor {
            fields: Vec::new(),
            extent,
        }
    }

    pub fn field(mut self, offset: usize, field: impl Into<LayoutField>) -> Self {
        self.fields.push((offset, field.into()));
        self
    }

    pub fn fields(&self) -> &[(usize, LayoutField)] {
        &self.fields
    }

    pub fn extent(&self) -> usize {
        self.extent
    }

    pub fn to_tree(&self) -> Result<DatatypeTree> {
        if self.fields.is_empty() {
            return Err(Error::invalid("layout descriptor has no fields"));
        }
        let fields = self
            .fields
            .iter()
            .map(|(offset, field)| {
                let tree = match field {
                    LayoutField::Kind(kind) => DatatypeTree::Fundamental(*kind),
                    LayoutField::Array(kind, len) => {
                        DatatypeTree::contiguous(*len, DatatypeTree::Fundamental(*kind))?
                    }
                    LayoutField::Nested(inner) => inner.to_tree()?,
                };
                Ok((*offset, tree))
            })
            .collect::<Result<Vec<_>>>()?;
        DatatypeTree::struct_type(fields, self.extent)
    }
}

/// Host field types that [`layout_of!`](crate::layout_of) can describe.
pub trait LayoutFieldType {
    fn layout_field() -> LayoutField;
}

impl<T: Fundamental> LayoutFieldType for T {
    fn layout_field() -> LayoutField {
        LayoutField::Kind(T::KIND)
    }
}

impl<T: Fundamental, const N: usize> LayoutFieldType for [T; N] {
    fn layout_field() -> LayoutField {
        LayoutField::Array(T::KIND, N)
    }
}

#[doc(hidden)]
pub fn field_of<S, F: LayoutFieldType>(_project: fn(&S) -> &F) -> LayoutField {
    F::layout_field()
}

/// Builds a [`LayoutDescriptor`] for a `#[repr(C)]` struct from its field
/// names, using `offset_of!` and `size_of`.
///
/// ```
/// #[repr(C)]
/// struct MyType { a: i32, b: [i32; 3], c: f64, d: i8 }
///
/// let desc = smpi::layout_of!(MyType { a, b, c, d });
/// assert_eq!(desc.extent(), 32);
/// assert_eq!(desc.fields()[2].0, 16);
/// ```
#[macro_export]
macro_rules! layout_of {
    ($ty:ty { $($field:ident),+ $(,)? }) => {{
        let desc = $crate::datatype::LayoutDescriptor::new(::core::mem::size_of::<$ty>());
        $(
            let desc = desc.field(
                ::core::mem::offset_of!($ty, $field),
                $crate::datatype::field_of(|v: &$ty| &v.$field),
            );
        )+
        desc
    }};
}

#[cfg(test)]
mod tests {
    use super::*;
    use FundamentalKind::*;

    #[repr(C)]
    struct MyType {
        a: i32,
        b: [i32; 3],
        c: f64,
        d: i8,
    }

    fn my_type_tree() -> DatatypeTree {
        DatatypeTree::struct_type(
            vec![
                (0, DatatypeTree::Fundamental(Int32)),
                (4, DatatypeTree::contiguous(3, DatatypeTree::Fundamental(Int32)).unwrap()),
                (16, DatatypeTree::Fundamental(Float64)),
                (24, DatatypeTree::Fundamental(Int8)),
            ],
            32,
        )
        .unwrap()
    }

    #[test]
    fn descriptor_matches_struct_constructor() {
        let d = LayoutDescriptor::new(32)
            .field(0, Int32)
            .field(4, LayoutField::Array(Int32, 3))
            .field(16, Float64)
            .field(24, Int8);
        assert_eq!(DatatypeTree::for_layout(&d).unwrap(), my_type_tree());
    }

    #[test]
    fn macro_matches_struct_constructor() {
        let d = crate::layout_of!(MyType { a, b, c, d });
        assert_eq!(d.to_tree().unwrap(), my_type_tree());
    }

    #[test]
    fn degenerate_descriptors() {
        assert!(LayoutDescriptor::new(8).to_tree().is_err());
        let one = LayoutDescriptor::new(1).field(0, FundamentalKind::Byte).to_tree().unwrap();
        assert_eq!(one.size().unwrap(), 1);
        assert!(matches!(one, DatatypeTree::Struct { .. }));
        assert!(LayoutDescriptor::new(4).field(0, LayoutField::Array(Int8, 0)).to_tree().is_err());
    }

    #[test]
    fn nested_descriptor() {
        let inner = LayoutDescriptor::new(8).field(0, Int32).field(4, Float32);
        let outer = LayoutDescriptor::new(16).field(0, inner).field(8, Float64);
        let c = outer.to_tree().unwrap().commit().unwrap();
        assert_eq!((c.size(), c.extent()), (16, 16));
        assert_eq!(c.spans(), vec![(0, 4), (4, 4), (8, 8)]);
    }
}
