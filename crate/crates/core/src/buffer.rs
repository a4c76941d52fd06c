//! Data buffers: contiguous, sized, typed views of memory that take part in
//! communication.
//!
//! Readable buffers implement [`SendBuffer`], writable ones [`RecvBuffer`].
//! Shared references (`&[T]`, `&Vec<T>`) are send-only, so a receive into
//! read-only storage does not compile. Every buffer also picks a calling mode
//! through [`DataBuffer::Output`]: owned containers are moved into the call
//! and handed back, references are borrowed and nothing is returned.
//! Nonblocking operations accept only [`OwnedBuffer`]s.
//!
//! Adapters cover what plain containers cannot express:
//! [`Typed`] pairs storage with a [`CommittedDatatype`], [`Single`] wraps one
//! scalar, and [`Irregular`] adds per-rank counts and displacements.

use bytemuck::Pod;

use crate::datatype::{CommittedDatatype, DatatypeTree, Fundamental, FundamentalKind};
use crate::error::{Error, Result};

/// Type information attached to a buffer.
#[derive(Debug, Clone, Copy)]
pub enum TypeInfo<'a> {
    Fundamental(FundamentalKind),
    Committed(&'a CommittedDatatype),
}

impl TypeInfo<'_> {
    /// Packed bytes per element.
    pub fn size(&self) -> usize {
        match self {
            TypeInfo::Fundamental(kind) => kind.size(),
            TypeInfo::Committed(dt) => dt.size(),
        }
    }

    pub fn extent(&self) -> usize {
        match self {
            TypeInfo::Fundamental(kind) => kind.size(),
            TypeInfo::Committed(dt) => dt.extent(),
        }
    }

    pub fn signature(&self) -> u64 {
        match self {
            TypeInfo::Fundamental(kind) => DatatypeTree::Fundamental(*kind).signature(),
            TypeInfo::Committed(dt) => dt.signature(),
        }
    }

    pub fn fundamental_kind(&self) -> Option<FundamentalKind> {
        match self {
            TypeInfo::Fundamental(kind) => Some(*kind),
            TypeInfo::Committed(dt) => match dt.tree() {
                DatatypeTree::Fundamental(kind) => Some(*kind),
                _ => None,
            },
        }
    }
}

/// Common contract of every buffer: element count, type, and calling mode.
pub trait DataBuffer {
    /// What a call hands back once it is done with the buffer: the buffer
    /// itself for owning mode, `()` for borrowing mode.
    type Output;

    fn type_info(&self) -> TypeInfo<'_>;

    fn element_count(&self) -> usize;

    /// Bytes of underlying storage; at least `element_count * extent`.
    fn byte_capacity(&self) -> usize;

    fn into_output(self) -> Self::Output;

    /// Packed bytes of all elements.
    fn packed_len(&self) -> usize {
        self.element_count() * self.type_info().size()
    }
}

/// A buffer whose contents can be read for sending.
pub trait SendBuffer: DataBuffer {
    /// Appends the packed form of elements `first..first + count`.
    fn pack_elements(&self, first: usize, count: usize, out: &mut Vec<u8>) -> Result<()>;

    fn pack_all(&self, out: &mut Vec<u8>) -> Result<()> {
        self.pack_elements(0, self.element_count(), out)
    }
}

/// A buffer that can be written exclusively by a receive.
pub trait RecvBuffer: DataBuffer {
    /// Unpacks whole elements into the buffer starting at element `first` and
    /// returns how many were written. Never grows the underlying storage.
    fn unpack_elements(&mut self, first: usize, packed: &[u8]) -> Result<usize>;
}

/// Marker for buffers passed by value. Only these may back a request.
pub trait OwnedBuffer: DataBuffer {}

/// Buffers of one fundamental element type, usable in reductions.
pub trait Elements: DataBuffer {
    type Elem: Fundamental;
}

// Shared logic for fundamental element slices.

fn pack_slice<T: Fundamental>(items: &[T], first: usize, count: usize, out: &mut Vec<u8>) -> Result<()> {
    let window = first
        .checked_add(count)
        .and_then(|end| items.get(first..end))
        .ok_or_else(|| {
            Error::invalid(format!(
                "elements {first}..{} outside buffer of {}",
                first.saturating_add(count),
                items.len()
            ))
        })?;
    out.reserve(count * T::KIND.size());
    for item in window {
        item.write_le(out);
    }
    Ok(())
}

fn unpack_slice<T: Fundamental>(items: &mut [T], first: usize, packed: &[u8]) -> Result<usize> {
    let size = T::KIND.size();
    if !packed.len().is_multiple_of(size) {
        return Err(Error::invalid(format!(
            "{} bytes is not a whole number of {} elements",
            packed.len(),
            T::KIND
        )));
    }
    let n = packed.len() / size;
    let room = items.len().saturating_sub(first);
    if n > room {
        return Err(Error::Truncation {
            actual_bytes: packed.len() as u64,
        });
    }
    for (slot, chunk) in items[first..first + n].iter_mut().zip(packed.chunks_exact(size)) {
        *slot = T::read_le(chunk);
    }
    Ok(n)
}

macro_rules! fundamental_send {
    ($(impl[$($gen:tt)*] $ty:ty => $out:ty, |$s:ident| $into:expr;)*) => {$(
        impl<$($gen)*> DataBuffer for $ty {
            type Output = $out;

            fn type_info(&self) -> TypeInfo<'_> {
                TypeInfo::Fundamental(T::KIND)
            }

            fn element_count(&self) -> usize {
                self.len()
            }

            fn byte_capacity(&self) -> usize {
                self.len() * T::KIND.size()
            }

            fn into_output(self) -> Self::Output {
                let $s = self;
                $into
            }
        }

        impl<$($gen)*> SendBuffer for $ty {
            fn pack_elements(&self, first: usize, count: usize, out: &mut Vec<u8>) -> Result<()> {
                pack_slice(&self[..], first, count, out)
            }
        }
    )*};
}

fundamental_send! {
    impl[T: Fundamental] Vec<T> => Vec<T>, |s| s;
    impl[T: Fundamental] Box<[T]> => Box<[T]>, |s| s;
    impl['a, T: Fundamental] &'a [T] => (), |_s| ();
    impl['a, T: Fundamental] &'a Vec<T> => (), |_s| ();
    impl['a, T: Fundamental, const N: usize] &'a [T; N] => (), |_s| ();
    impl['a, T: Fundamental] &'a mut [T] => (), |_s| ();
    impl['a, T: Fundamental] &'a mut Vec<T> => (), |_s| ();
    impl['a, T: Fundamental, const N: usize] &'a mut [T; N] => (), |_s| ();
}

macro_rules! fundamental_recv {
    ($(impl[$($gen:tt)*] $ty:ty;)*) => {$(
        impl<$($gen)*> RecvBuffer for $ty {
            fn unpack_elements(&mut self, first: usize, packed: &[u8]) -> Result<usize> {
                unpack_slice(&mut self[..], first, packed)
            }
        }

        impl<$($gen)*> Elements for $ty {
            type Elem = T;
        }
    )*};
}

fundamental_recv! {
    impl[T: Fundamental] Vec<T>;
    impl[T: Fundamental] Box<[T]>;
    impl['a, T: Fundamental] &'a mut [T];
    impl['a, T: Fundamental] &'a mut Vec<T>;
    impl['a, T: Fundamental, const N: usize] &'a mut [T; N];
}

impl<T: Fundamental> OwnedBuffer for Vec<T> {}
impl<T: Fundamental> OwnedBuffer for Box<[T]> {}

/// A single scalar treated as a one-element buffer.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Single<T>(pub T);

/// Wraps one value as a buffer of count 1.
pub fn single<T: Fundamental>(value: T) -> Single<T> {
    Single(value)
}

impl<T: Fundamental> Single<T> {
    pub fn value(&self) -> T {
        self.0
    }
}

impl<T: Fundamental> DataBuffer for Single<T> {
    type Output = T;

    fn type_info(&self) -> TypeInfo<'_> {
        TypeInfo::Fundamental(T::KIND)
    }

    fn element_count(&self) -> usize {
        1
    }

    fn byte_capacity(&self) -> usize {
        T::KIND.size()
    }

    fn into_output(self) -> T {
        self.0
    }
}

impl<T: Fundamental> SendBuffer for Single<T> {
    fn pack_elements(&self, first: usize, count: usize, out: &mut Vec<u8>) -> Result<()> {
        pack_slice(std::slice::from_ref(&self.0), first, count, out)
    }
}

impl<T: Fundamental> RecvBuffer for Single<T> {
    fn unpack_elements(&mut self, first: usize, packed: &[u8]) -> Result<usize> {
        unpack_slice(std::slice::from_mut(&mut self.0), first, packed)
    }
}

impl<T: Fundamental> OwnedBuffer for Single<T> {}

impl<T: Fundamental> Elements for Single<T> {
    type Elem = T;
}

/// Plain-old-data storage viewed as bytes, for [`Typed`] buffers.
pub trait ByteStorage {
    type Output;

    fn bytes(&self) -> &[u8];

    fn into_output(self) -> Self::Output;
}

/// Byte storage that may be written.
pub trait ByteStorageMut: ByteStorage {
    fn bytes_mut(&mut self) -> &mut [u8];
}

impl<P: Pod> ByteStorage for Vec<P> {
    type Output = Vec<P>;

    fn bytes(&self) -> &[u8] {
        bytemuck::cast_slice(self)
    }

    fn into_output(self) -> Vec<P> {
        self
    }
}

impl<P: Pod> ByteStorageMut for Vec<P> {
    fn bytes_mut(&mut self) -> &mut [u8] {
        bytemuck::cast_slice_mut(self)
    }
}

impl<P: Pod> ByteStorage for &[P] {
    type Output = ();

    fn bytes(&self) -> &[u8] {
        bytemuck::cast_slice(self)
    }

    fn into_output(self) {}
}

impl<P: Pod> ByteStorage for &Vec<P> {
    type Output = ();

    fn bytes(&self) -> &[u8] {
        bytemuck::cast_slice(self)
    }

    fn into_output(self) {}
}

impl<P: Pod> ByteStorage for &mut [P] {
    type Output = ();

    fn bytes(&self) -> &[u8] {
        bytemuck::cast_slice(self)
    }

    fn into_output(self) {}
}

impl<P: Pod> ByteStorageMut for &mut [P] {
    fn bytes_mut(&mut self) -> &mut [u8] {
        bytemuck::cast_slice_mut(self)
    }
}

impl<P: Pod> ByteStorage for &mut Vec<P> {
    type Output = ();

    fn bytes(&self) -> &[u8] {
        bytemuck::cast_slice(self)
    }

    fn into_output(self) {}
}

impl<P: Pod> ByteStorageMut for &mut Vec<P> {
    fn bytes_mut(&mut self) -> &mut [u8] {
        bytemuck::cast_slice_mut(self)
    }
}

/// Storage interpreted through a committed datatype.
///
/// When built from a fundamental container, the committed type overrides the
/// element type the container would imply.
#[derive(Debug, Clone)]
pub struct Typed<S> {
    storage: S,
    datatype: CommittedDatatype,
    count: usize,
}

impl<S: ByteStorage> Typed<S> {
    /// Count is `floor(byte_capacity / extent)`.
    pub fn new(storage: S, datatype: &CommittedDatatype) -> Result<Self> {
        let capacity = storage.bytes().len();
        let extent = datatype.extent();
        if capacity > 0 && extent > capacity {
            return Err(Error::invalid(format!(
                "storage of {capacity} bytes cannot hold one element of extent {extent}"
            )));
        }
        Ok(Typed {
            storage,
            datatype: datatype.clone(),
            count: capacity / extent,
        })
    }

    /// Explicit element count; the storage may have slack.
    pub fn with_count(storage: S, datatype: &CommittedDatatype, count: usize) -> Result<Self> {
        let capacity = storage.bytes().len();
        let need = count
            .checked_mul(datatype.extent())
            .ok_or_else(|| Error::invalid("element count overflows"))?;
        if need > capacity {
            return Err(Error::invalid(format!(
                "{count} elements of extent {} need {need} bytes, storage has {capacity}",
                datatype.extent()
            )));
        }
        Ok(Typed {
            storage,
            datatype: datatype.clone(),
            count,
        })
    }

    pub fn datatype(&self) -> &CommittedDatatype {
        &self.datatype
    }

    pub fn storage(&self) -> &S {
        &self.storage
    }

    pub fn into_storage(self) -> S {
        self.storage
    }
}

/// Pairs storage with a committed type; count derived from the capacity.
pub fn buffer_adapter<S: ByteStorage>(storage: S, datatype: &CommittedDatatype) -> Result<Typed<S>> {
    Typed::new(storage, datatype)
}

/// Pairs storage with a committed type and an explicit element count.
pub fn buffer_adapter_counted<S: ByteStorage>(
    storage: S,
    datatype: &CommittedDatatype,
    count: usize,
) -> Result<Typed<S>> {
    Typed::with_count(storage, datatype, count)
}

impl<S: ByteStorage> DataBuffer for Typed<S> {
    type Output = S::Output;

    fn type_info(&self) -> TypeInfo<'_> {
        TypeInfo::Committed(&self.datatype)
    }

    fn element_count(&self) -> usize {
        self.count
    }

    fn byte_capacity(&self) -> usize {
        self.storage.bytes().len()
    }

    fn into_output(self) -> S::Output {
        self.storage.into_output()
    }
}

impl<S: ByteStorage> SendBuffer for Typed<S> {
    fn pack_elements(&self, first: usize, count: usize, out: &mut Vec<u8>) -> Result<()> {
        if first.checked_add(count).is_none_or(|end| end > self.count) {
            return Err(Error::invalid(format!(
                "elements {first}..{} outside buffer of {}",
                first.saturating_add(count),
                self.count
            )));
        }
        let start = first * self.datatype.extent();
        self.datatype.pack_into(&self.storage.bytes()[start..], count, out)
    }
}

impl<S: ByteStorageMut> RecvBuffer for Typed<S> {
    fn unpack_elements(&mut self, first: usize, packed: &[u8]) -> Result<usize> {
        let size = self.datatype.size();
        if !packed.len().is_multiple_of(size) {
            return Err(Error::invalid(format!(
                "{} bytes is not a whole number of elements of size {size}",
                packed.len()
            )));
        }
        let n = packed.len() / size;
        if n > self.count.saturating_sub(first) {
            return Err(Error::Truncation {
                actual_bytes: packed.len() as u64,
            });
        }
        let start = first * self.datatype.extent();
        self.datatype.unpack(packed, n, &mut self.storage.bytes_mut()[start..])?;
        Ok(n)
    }
}

impl<P: Pod> OwnedBuffer for Typed<Vec<P>> {}

/// A buffer with one `(count, displacement)` window per rank, for
/// varying-count collectives. Displacements are in elements.
#[derive(Debug, Clone)]
pub struct Irregular<B> {
    base: B,
    counts: Vec<usize>,
    displacements: Vec<usize>,
}

/// Adds per-rank counts and displacements to a buffer.
pub fn irregular<B: DataBuffer>(base: B, counts: Vec<usize>, displacements: Vec<usize>) -> Result<Irregular<B>> {
    Irregular::new(base, counts, displacements)
}

impl<B: DataBuffer> Irregular<B> {
    pub fn new(base: B, counts: Vec<usize>, displacements: Vec<usize>) -> Result<Self> {
        if counts.len() != displacements.len() {
            return Err(Error::invalid(format!(
                "{} counts but {} displacements",
                counts.len(),
                displacements.len()
            )));
        }
        let total = base.element_count();
        for (rank, (&c, &d)) in counts.iter().zip(&displacements).enumerate() {
            if d.checked_add(c).is_none_or(|end| end > total) {
                return Err(Error::invalid(format!(
                    "window of rank {rank} ({d}+{c}) exceeds {total} elements"
                )));
            }
        }
        Ok(Irregular {
            base,
            counts,
            displacements,
        })
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn displacements(&self) -> &[usize] {
        &self.displacements
    }

    pub fn base(&self) -> &B {
        &self.base
    }

    pub(crate) fn base_mut(&mut self) -> &mut B {
        &mut self.base
    }

    pub fn into_base(self) -> B {
        self.base
    }

    /// Receive windows must not overlap; send windows may.
    pub fn check_disjoint(&self) -> Result<()> {
        let mut windows: Vec<(usize, usize)> = self
            .counts
            .iter()
            .zip(&self.displacements)
            .filter(|(c, _)| **c > 0)
            .map(|(&c, &d)| (d, d + c))
            .collect();
        windows.sort_unstable();
        match windows.windows(2).find(|w| w[1].0 < w[0].1) {
            Some(w) => Err(Error::invalid(format!(
                "receive windows [{}, {}) and [{}, {}) overlap",
                w[0].0, w[0].1, w[1].0, w[1].1
            ))),
            None => Ok(()),
        }
    }
}

impl<B: DataBuffer> DataBuffer for Irregular<B> {
    type Output = B::Output;

    fn type_info(&self) -> TypeInfo<'_> {
        self.base.type_info()
    }

    fn element_count(&self) -> usize {
        self.base.element_count()
    }

    fn byte_capacity(&self) -> usize {
        self.base.byte_capacity()
    }

    fn into_output(self) -> B::Output {
        self.base.into_output()
    }
}
