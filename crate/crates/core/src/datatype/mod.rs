//! Datatypes: layout trees, the commit type-state and pack/unpack.
//!
//! A [`DatatypeTree`] describes the memory layout of one element. It cannot be
//! used for communication directly; [`DatatypeTree::commit`] consumes it and
//! yields a [`CommittedDatatype`], which carries the derived packed size,
//! extent, flattened segment list and type signature. Only committed types are
//! accepted by buffers.
//!
//! Flattening merges adjacent byte runs that share a fundamental kind, so the
//! segment list of a struct keeps one segment per run of like-typed fields.

pub(crate) mod encoding;
mod kind;
mod layout;

use std::sync::Arc;

use crate::error::{Error, Result};

pub use encoding::{fnv1a64, FNV_OFFSET_BASIS, FNV_PRIME};
pub use kind::{Byte, Fundamental, FundamentalKind};
pub use layout::{field_of, LayoutDescriptor, LayoutField, LayoutFieldType};

/// Recursive description of one element's memory layout.
///
/// Build trees through the checked constructors; a hand-assembled tree is
/// re-validated by [`DatatypeTree::commit`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum DatatypeTree {
    Fundamental(FundamentalKind),
    Contiguous {
        count: usize,
        inner: Box<DatatypeTree>,
    },
    /// `count` blocks of `blocklength` inner elements, block starts `stride`
    /// inner extents apart.
    Vector {
        count: usize,
        blocklength: usize,
        stride: i64,
        inner: Box<DatatypeTree>,
    },
    Struct {
        fields: Vec<(usize, DatatypeTree)>,
        extent: usize,
    },
}

/// A contiguous byte run within one element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Segment {
    pub offset: usize,
    pub length: usize,
    kind: FundamentalKind,
}

impl Segment {
    pub fn kind(&self) -> FundamentalKind {
        self.kind
    }

    pub fn end(&self) -> usize {
        self.offset + self.length
    }
}

impl DatatypeTree {
    pub fn fundamental(kind: FundamentalKind) -> Self {
        DatatypeTree::Fundamental(kind)
    }

    pub fn contiguous(count: usize, inner: DatatypeTree) -> Result<Self> {
        let tree = DatatypeTree::Contiguous {
            count,
            inner: Box::new(inner),
        };
        tree.validate()?;
        Ok(tree)
    }

    pub fn vector(count: usize, blocklength: usize, stride: i64, inner: DatatypeTree) -> Result<Self> {
        let tree = DatatypeTree::Vector {
            count,
            blocklength,
            stride,
            inner: Box::new(inner),
        };
        tree.validate()?;
        Ok(tree)
    }

    pub fn struct_type(fields: Vec<(usize, DatatypeTree)>, extent: usize) -> Result<Self> {
        let tree = DatatypeTree::Struct { fields, extent };
        tree.validate()?;
        Ok(tree)
    }

    /// Struct tree equivalent to an explicit layout description.
    pub fn for_layout(descriptor: &LayoutDescriptor) -> Result<Self> {
        descriptor.to_tree()
    }

    /// Checks every structural invariant, including arithmetic overflow.
    pub fn validate(&self) -> Result<()> {
        self.measure().map(|_| ())
    }

    /// Packed bytes per element.
    pub fn size(&self) -> Result<usize> {
        self.measure().map(|(size, _)| size)
    }

    /// Bytes spanned by one element in memory, gaps included.
    pub fn extent(&self) -> Result<usize> {
        self.measure().map(|(_, extent)| extent)
    }

    // Returns (size, extent) after validating the subtree.
    fn measure(&self) -> Result<(usize, usize)> {
        let overflow = || Error::invalid("datatype size overflows");
        match self {
            DatatypeTree::Fundamental(kind) => Ok((kind.size(), kind.size())),
            DatatypeTree::Contiguous { count, inner } => {
                if *count == 0 {
                    return Err(Error::invalid("contiguous count must be at least 1"));
                }
                let (size, extent) = inner.measure()?;
                Ok((
                    size.checked_mul(*count).ok_or_else(overflow)?,
                    checked_span(extent, *count).ok_or_else(overflow)?,
                ))
            }
            DatatypeTree::Vector {
                count,
                blocklength,
                stride,
                inner,
            } => {
                if *count == 0 || *blocklength == 0 {
                    return Err(Error::invalid("vector count and blocklength must be at least 1"));
                }
                let stride = usize::try_from(*stride)
                    .ok()
                    .filter(|s| s >= blocklength)
                    .ok_or_else(|| {
                        Error::invalid(format!(
                            "vector stride {stride} is smaller than blocklength {blocklength}; blocks would overlap"
                        ))
                    })?;
                let (size, extent) = inner.measure()?;
                let elements = (count - 1)
                    .checked_mul(stride)
                    .and_then(|v| v.checked_add(*blocklength))
                    .ok_or_else(overflow)?;
                let packed = size
                    .checked_mul(*count)
                    .and_then(|v| v.checked_mul(*blocklength))
                    .ok_or_else(overflow)?;
                Ok((packed, checked_span(extent, elements).ok_or_else(overflow)?))
            }
            DatatypeTree::Struct { fields, extent } => {
                if fields.is_empty() {
                    return Err(Error::invalid("struct needs at least one field"));
                }
                let mut spans = Vec::with_capacity(fields.len());
                let mut size = 0usize;
                for (offset, inner) in fields {
                    let (field_size, field_extent) = inner.measure()?;
                    let end = offset.checked_add(field_extent).ok_or_else(overflow)?;
                    if end > *extent {
                        return Err(Error::invalid(format!(
                            "struct field at offset {offset} spans to {end}, past extent {extent}"
                        )));
                    }
                    spans.push((*offset, end));
                    size = size.checked_add(field_size).ok_or_else(overflow)?;
                }
                spans.sort_unstable();
                if let Some(w) = spans.windows(2).find(|w| w[1].0 < w[0].1) {
                    return Err(Error::invalid(format!(
                        "struct fields at offsets {} and {} overlap",
                        w[0].0, w[1].0
                    )));
                }
                Ok((size, *extent))
            }
        }
    }

    /// Sorted, disjoint byte runs of one element, adjacent runs of the same
    /// fundamental kind merged.
    pub fn flatten(&self) -> Result<Vec<Segment>> {
        self.validate()?;
        let mut out = Vec::new();
        self.flatten_at(0, &mut out);
        out.sort_by_key(|s| s.offset);
        let mut merged: Vec<Segment> = Vec::with_capacity(out.len());
        for seg in out {
            push_merged(&mut merged, seg);
        }
        Ok(merged)
    }

    // Only called on validated trees.
    fn flatten_at(&self, base: usize, out: &mut Vec<Segment>) {
        match self {
            DatatypeTree::Fundamental(kind) => push_merged(
                out,
                Segment {
                    offset: base,
                    length: kind.size(),
                    kind: *kind,
                },
            ),
            DatatypeTree::Contiguous { count, inner } => {
                let extent = inner.extent().expect("validated");
                let mut unit = Vec::new();
                inner.flatten_at(0, &mut unit);
                repeat_segments(&unit, extent, base, (0..*count).map(|i| i * extent), out);
            }
            DatatypeTree::Vector {
                count,
                blocklength,
                stride,
                inner,
            } => {
                let extent = inner.extent().expect("validated");
                let stride = *stride as usize;
                let mut unit = Vec::new();
                inner.flatten_at(0, &mut unit);
                let starts = (0..*count)
                    .flat_map(|b| (0..*blocklength).map(move |j| (b * stride + j) * extent));
                repeat_segments(&unit, extent, base, starts, out);
            }
            DatatypeTree::Struct { fields, .. } => {
                let mut order: Vec<&(usize, DatatypeTree)> = fields.iter().collect();
                order.sort_by_key(|(offset, _)| *offset);
                for (offset, inner) in order {
                    inner.flatten_at(base + offset, out);
                }
            }
        }
    }

    /// Freezes the tree. The uncommitted value is consumed.
    pub fn commit(self) -> Result<CommittedDatatype> {
        let (size, extent) = self.measure()?;
        let segments = self.flatten()?;
        let signature = self.signature();
        Ok(CommittedDatatype {
            inner: Arc::new(Committed {
                tree: self,
                size,
                extent,
                segments,
                signature,
            }),
        })
    }
}

fn checked_span(extent: usize, count: usize) -> Option<usize> {
    extent.checked_mul(count).filter(|v| *v <= isize::MAX as usize)
}

fn push_merged(out: &mut Vec<Segment>, seg: Segment) {
    if let Some(last) = out.last_mut() {
        if last.kind == seg.kind && last.end() == seg.offset {
            last.length += seg.length;
            return;
        }
    }
    out.push(seg);
}

// Repeats one element's segments at each start offset. A dense single-kind
// unit collapses to one run per start.
fn repeat_segments(
    unit: &[Segment],
    extent: usize,
    base: usize,
    starts: impl Iterator<Item = usize>,
    out: &mut Vec<Segment>,
) {
    for start in starts {
        if let [only] = unit {
            if only.offset == 0 && only.length == extent {
                push_merged(
                    out,
                    Segment {
                        offset: base + start,
                        length: extent,
                        kind: only.kind,
                    },
                );
                continue;
            }
        }
        for seg in unit {
            push_merged(
                out,
                Segment {
                    offset: base + start + seg.offset,
                    ..*seg
                },
            );
        }
    }
}

/// Free-function form of [`DatatypeTree::commit`].
pub fn commit(tree: DatatypeTree) -> Result<CommittedDatatype> {
    tree.commit()
}

#[derive(Debug)]
struct Committed {
    tree: DatatypeTree,
    size: usize,
    extent: usize,
    segments: Vec<Segment>,
    signature: u64,
}

/// An immutable, committed datatype. Cloning is cheap and shares the layout.
#[derive(Debug, Clone)]
pub struct CommittedDatatype {
    inner: Arc<Committed>,
}

impl PartialEq for CommittedDatatype {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner) || self.inner.tree == other.inner.tree
    }
}

impl Eq for CommittedDatatype {}

impl CommittedDatatype {
    /// Committed form of a fundamental kind.
    pub fn of_kind(kind: FundamentalKind) -> Self {
        DatatypeTree::Fundamental(kind)
            .commit()
            .expect("fundamental trees are always valid")
    }

    pub fn tree(&self) -> &DatatypeTree {
        &self.inner.tree
    }

    pub fn size(&self) -> usize {
        self.inner.size
    }

    pub fn extent(&self) -> usize {
        self.inner.extent
    }

    pub fn segments(&self) -> &[Segment] {
        &self.inner.segments
    }

    /// Segments as `(offset, length)` pairs.
    pub fn spans(&self) -> Vec<(usize, usize)> {
        self.segments().iter().map(|s| (s.offset, s.length)).collect()
    }

    pub fn signature(&self) -> u64 {
        self.inner.signature
    }

    /// True when one element is a single gap-free run of one kind.
    pub fn is_dense(&self) -> bool {
        self.size() == self.extent() && self.segments().len() == 1
    }

    /// Packs `count` elements laid out at `extent` spacing from `source`.
    pub fn pack(&self, source: &[u8], count: usize) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        self.pack_into(source, count, &mut out)?;
        Ok(out)
    }

    /// Appends the packed form of `count` elements to `out`.
    pub fn pack_into(&self, source: &[u8], count: usize, out: &mut Vec<u8>) -> Result<()> {
        let need = self.span_of(count)?;
        if source.len() < need {
            return Err(Error::invalid(format!(
                "source holds {} bytes, {count} elements need {need}",
                source.len()
            )));
        }
        let extent = self.extent();
        out.reserve(count * self.size());
        if self.is_dense() {
            out.extend_from_slice(&source[..need]);
            return Ok(());
        }
        for i in 0..count {
            let base = i * extent;
            for seg in self.segments() {
                out.extend_from_slice(&source[base + seg.offset..base + seg.end()]);
            }
        }
        Ok(())
    }

    /// Inverse of [`pack`](Self::pack). Bytes outside the segments of each
    /// element are left untouched.
    pub fn unpack(&self, packed: &[u8], count: usize, destination: &mut [u8]) -> Result<()> {
        let expected = count
            .checked_mul(self.size())
            .ok_or_else(|| Error::invalid("element count overflows"))?;
        if packed.len() > expected {
            return Err(Error::Truncation {
                actual_bytes: packed.len() as u64,
            });
        }
        if packed.len() < expected {
            return Err(Error::invalid(format!(
                "packed data holds {} bytes, {count} elements need {expected}",
                packed.len()
            )));
        }
        let need = self.span_of(count)?;
        if destination.len() < need {
            return Err(Error::invalid(format!(
                "destination holds {} bytes, {count} elements need {need}",
                destination.len()
            )));
        }
        if self.is_dense() {
            destination[..need].copy_from_slice(packed);
            return Ok(());
        }
        let extent = self.extent();
        let mut cursor = 0;
        for i in 0..count {
            let base = i * extent;
            for seg in self.segments() {
                destination[base + seg.offset..base + seg.end()]
                    .copy_from_slice(&packed[cursor..cursor + seg.length]);
                cursor += seg.length;
            }
        }
        Ok(())
    }

    fn span_of(&self, count: usize) -> Result<usize> {
        count
            .checked_mul(self.extent())
            .ok_or_else(|| Error::invalid("element count overflows"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use FundamentalKind::*;

    fn f(kind: FundamentalKind) -> DatatypeTree {
        DatatypeTree::fundamental(kind)
    }

    pub(crate) fn my_type() -> DatatypeTree {
        DatatypeTree::struct_type(
            vec![
                (0, f(Int32)),
                (4, DatatypeTree::contiguous(3, f(Int32)).unwrap()),
                (16, f(Float64)),
                (24, f(Int8)),
            ],
            32,
        )
        .unwrap()
    }

    #[test]
    fn fundamental_sizes() {
        assert_eq!(f(Int32).size().unwrap(), 4);
        assert_eq!(f(Float64).size().unwrap(), 8);
        assert_eq!(f(FundamentalKind::Byte).extent().unwrap(), 1);
    }

    #[test]
    fn contiguous_layouts() {
        let t = DatatypeTree::contiguous(3, f(Int32)).unwrap();
        assert_eq!((t.size().unwrap(), t.extent().unwrap()), (12, 12));
        let one = DatatypeTree::contiguous(1, f(Float64)).unwrap();
        assert_eq!((one.size().unwrap(), one.extent().unwrap()), (8, 8));
        let two = DatatypeTree::contiguous(2, my_type()).unwrap();
        assert_eq!((two.size().unwrap(), two.extent().unwrap()), (50, 64));
        assert!(matches!(
            DatatypeTree::contiguous(0, f(Int32)),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn vector_layouts() {
        let v = DatatypeTree::vector(2, 1, 2, f(Int32)).unwrap();
        assert_eq!((v.size().unwrap(), v.extent().unwrap()), (8, 12));
        let v = DatatypeTree::vector(1, 1, 1, f(Float64)).unwrap();
        assert_eq!((v.size().unwrap(), v.extent().unwrap()), (8, 8));
        let v = DatatypeTree::vector(3, 2, 3, f(Uint8)).unwrap();
        assert_eq!((v.size().unwrap(), v.extent().unwrap()), (6, 8));
        assert!(DatatypeTree::vector(2, 3, 2, f(Int32)).is_err());
        assert!(DatatypeTree::vector(2, 1, -1, f(Int32)).is_err());
        assert!(DatatypeTree::vector(0, 1, 1, f(Int32)).is_err());
    }

    #[test]
    fn struct_layouts() {
        let t = my_type();
        assert_eq!((t.size().unwrap(), t.extent().unwrap()), (25, 32));
        let single = DatatypeTree::struct_type(vec![(0, f(Int32))], 4).unwrap();
        assert_eq!((single.size().unwrap(), single.extent().unwrap()), (4, 4));
        assert!(DatatypeTree::struct_type(vec![(0, f(Int32)), (2, f(Int32))], 8).is_err());
        assert!(DatatypeTree::struct_type(vec![(6, f(Int32))], 8).is_err());
        assert!(DatatypeTree::struct_type(vec![], 8).is_err());
    }

    #[test]
    fn commit_my_type() {
        let c = my_type().commit().unwrap();
        assert_eq!(c.size(), 25);
        assert_eq!(c.extent(), 32);
        assert_eq!(c.spans(), vec![(0, 16), (16, 8), (24, 1)]);
        assert!(!c.is_dense());
    }

    #[test]
    fn commit_simple() {
        let c = f(Int32).commit().unwrap();
        assert_eq!((c.size(), c.extent(), c.spans()), (4, 4, vec![(0, 4)]));
        let v = DatatypeTree::vector(2, 1, 2, f(Int32)).unwrap().commit().unwrap();
        assert_eq!(v.spans(), vec![(0, 4), (8, 4)]);
        let c = DatatypeTree::contiguous(3, f(Int32)).unwrap().commit().unwrap();
        assert_eq!(c.spans(), vec![(0, 12)]);
        assert!(c.is_dense());
    }

    #[test]
    fn hand_built_invalid_tree_is_rejected_at_commit() {
        let bad = DatatypeTree::Vector {
            count: 2,
            blocklength: 4,
            stride: 1,
            inner: Box::new(f(Int8)),
        };
        assert!(bad.commit().is_err());
    }

    #[test]
    fn unordered_struct_fields_flatten_sorted() {
        let t = DatatypeTree::struct_type(vec![(8, f(Int32)), (0, f(Int32))], 12).unwrap();
        let c = t.commit().unwrap();
        assert_eq!(c.spans(), vec![(0, 4), (8, 4)]);
    }

    #[test]
    fn pack_vector_picks_strided_ints() {
        let v = DatatypeTree::vector(2, 1, 2, f(Int32)).unwrap().commit().unwrap();
        // Two elements of extent 12 need 24 bytes; only indices 0,2 and 3,5 are covered.
        let ints = [1i32, 2, 3, 4, 5, 6];
        let src: Vec<u8> = ints.iter().flat_map(|i| i.to_le_bytes()).collect();
        let packed = v.pack(&src, 2).unwrap();
        let expected: Vec<u8> = [1i32, 3, 4, 6].iter().flat_map(|i| i.to_le_bytes()).collect();
        assert_eq!(packed, expected);

        let mut dst = vec![0xAAu8; 24];
        v.unpack(&packed, 2, &mut dst).unwrap();
        assert_eq!(&dst[0..4], &1i32.to_le_bytes());
        assert_eq!(&dst[4..8], &[0xAA; 4]);
        assert_eq!(&dst[8..12], &3i32.to_le_bytes());
    }

    #[test]
    fn pack_edge_cases() {
        let c = f(Int32).commit().unwrap();
        assert_eq!(c.pack(&7i32.to_le_bytes(), 1).unwrap(), 7i32.to_le_bytes());
        assert!(c.pack(&[], 0).unwrap().is_empty());
        assert!(c.pack(&[0u8; 3], 1).is_err());
        let mut empty: [u8; 0] = [];
        c.unpack(&[], 0, &mut empty).unwrap();
        assert!(matches!(
            c.unpack(&[0u8; 8], 1, &mut [0u8; 4]),
            Err(Error::Truncation { actual_bytes: 8 })
        ));
        assert!(matches!(
            c.unpack(&[0u8; 3], 1, &mut [0u8; 4]),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn commit_is_idempotent_in_effect() {
        let a = my_type().commit().unwrap();
        let b = my_type().commit().unwrap();
        assert_eq!(a, b);
        assert_eq!(a.signature(), b.signature());
        assert_eq!(a.spans(), b.spans());
    }
}
