use std::fmt;

/// Predefined element kinds with a direct host representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FundamentalKind {
    Int8,
    Uint8,
    Int16,
    Uint16,
    Int32,
    Uint32,
    Int64,
    Uint64,
    Float32,
    Float64,
    Bool,
    Byte,
}

impl FundamentalKind {
    pub const ALL: [FundamentalKind; 12] = [
        FundamentalKind::Int8,
        FundamentalKind::Uint8,
        FundamentalKind::Int16,
        FundamentalKind::Uint16,
        FundamentalKind::Int32,
        FundamentalKind::Uint32,
        FundamentalKind::Int64,
        FundamentalKind::Uint64,
        FundamentalKind::Float32,
        FundamentalKind::Float64,
        FundamentalKind::Bool,
        FundamentalKind::Byte,
    ];

    /// Wire code, 1..=12.
    pub const fn code(self) -> u8 {
        match self {
            FundamentalKind::Int8 => 1,
            FundamentalKind::Uint8 => 2,
            FundamentalKind::Int16 => 3,
            FundamentalKind::Uint16 => 4,
            FundamentalKind::Int32 => 5,
            FundamentalKind::Uint32 => 6,
            FundamentalKind::Int64 => 7,
            FundamentalKind::Uint64 => 8,
            FundamentalKind::Float32 => 9,
            FundamentalKind::Float64 => 10,
            FundamentalKind::Bool => 11,
            FundamentalKind::Byte => 12,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(usize::from(code).checked_sub(1)?).copied()
    }

    /// Size in bytes of one value.
    pub const fn size(self) -> usize {
        match self {
            FundamentalKind::Int8 | FundamentalKind::Uint8 => 1,
            FundamentalKind::Bool | FundamentalKind::Byte => 1,
            FundamentalKind::Int16 | FundamentalKind::Uint16 => 2,
            FundamentalKind::Int32 | FundamentalKind::Uint32 | FundamentalKind::Float32 => 4,
            FundamentalKind::Int64 | FundamentalKind::Uint64 | FundamentalKind::Float64 => 8,
        }
    }

    pub fn is_bool(self) -> bool {
        self == FundamentalKind::Bool
    }

    pub fn is_float(self) -> bool {
        matches!(self, FundamentalKind::Float32 | FundamentalKind::Float64)
    }

    pub fn of<T: Fundamental>() -> Self {
        T::KIND
    }
}

impl fmt::Display for FundamentalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            FundamentalKind::Int8 => "INT8",
            FundamentalKind::Uint8 => "UINT8",
            FundamentalKind::Int16 => "INT16",
            FundamentalKind::Uint16 => "UINT16",
            FundamentalKind::Int32 => "INT32",
            FundamentalKind::Uint32 => "UINT32",
            FundamentalKind::Int64 => "INT64",
            FundamentalKind::Uint64 => "UINT64",
            FundamentalKind::Float32 => "FLOAT32",
            FundamentalKind::Float64 => "FLOAT64",
            FundamentalKind::Bool => "BOOL",
            FundamentalKind::Byte => "BYTE",
        };
        f.write_str(name)
    }
}

/// An opaque byte, distinct from `u8` (which maps to `UINT8`).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
#[repr(transparent)]
pub struct Byte(pub u8);

mod sealed {
    pub trait Sealed {}
}

/// Host value types with a predefined kind. Sealed: the set is fixed.
///
/// Values cross the wire in little-endian order.
pub trait Fundamental:
    Copy + Default + PartialEq + fmt::Debug + Send + Sync + 'static + sealed::Sealed
{
    const KIND: FundamentalKind;

    fn write_le(self, out: &mut Vec<u8>);

    /// `bytes.len()` must equal `Self::KIND.size()`.
    fn read_le(bytes: &[u8]) -> Self;
}

macro_rules! numeric_fundamental {
    ($($ty:ty => $kind:ident),* $(,)?) => {$(
        impl sealed::Sealed for $ty {}
        impl Fundamental for $ty {
            const KIND: FundamentalKind = FundamentalKind::$kind;

            #[inline]
            fn write_le(self, out: &mut Vec<u8>) {
                out.extend_from_slice(&self.to_le_bytes());
            }

            #[inline]
            fn read_le(bytes: &[u8]) -> Self {
                let mut raw = [0u8; std::mem::size_of::<$ty>()];
                raw.copy_from_slice(bytes);
                <$ty>::from_le_bytes(raw)
            }
        }
    )*};
}

numeric_fundamental! {
    i8 => Int8,
    u8 => Uint8,
    i16 => Int16,
    u16 => Uint16,
    i32 => Int32,
    u32 => Uint32,
    i64 => Int64,
    u64 => Uint64,
    f32 => Float32,
    f64 => Float64,
}

impl sealed::Sealed for bool {}
impl Fundamental for bool {
    const KIND: FundamentalKind = FundamentalKind::Bool;

    fn write_le(self, out: &mut Vec<u8>) {
        out.push(u8::from(self));
    }

    // Any nonzero byte reads as true, so foreign bytes never produce an
    // invalid bool.
    fn read_le(bytes: &[u8]) -> Self {
        bytes[0] != 0
    }
}

impl sealed::Sealed for Byte {}
impl Fundamental for Byte {
    const KIND: FundamentalKind = FundamentalKind::Byte;

    fn write_le(self, out: &mut Vec<u8>) {
        out.push(self.0);
    }

    fn read_le(bytes: &[u8]) -> Self {
        Byte(bytes[0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;
    use std::mem::size_of;

    #[test]
    fn codes_unique_and_roundtrip() {
        let codes: HashSet<u8> = FundamentalKind::ALL.iter().map(|k| k.code()).collect();
        assert_eq!(codes.len(), 12);
        for k in FundamentalKind::ALL {
            assert_eq!(FundamentalKind::from_code(k.code()), Some(k));
        }
        assert_eq!(FundamentalKind::from_code(0), None);
        assert_eq!(FundamentalKind::from_code(13), None);
    }

    #[test]
    fn sizes_match_host() {
        assert_eq!(i8::KIND.size(), size_of::<i8>());
        assert_eq!(u8::KIND.size(), size_of::<u8>());
        assert_eq!(i16::KIND.size(), size_of::<i16>());
        assert_eq!(u16::KIND.size(), size_of::<u16>());
        assert_eq!(i32::KIND.size(), size_of::<i32>());
        assert_eq!(u32::KIND.size(), size_of::<u32>());
        assert_eq!(i64::KIND.size(), size_of::<i64>());
        assert_eq!(u64::KIND.size(), size_of::<u64>());
        assert_eq!(f32::KIND.size(), size_of::<f32>());
        assert_eq!(f64::KIND.size(), size_of::<f64>());
        assert_eq!(bool::KIND.size(), size_of::<bool>());
        assert_eq!(Byte::KIND.size(), size_of::<Byte>());
        let sizes: Vec<usize> = FundamentalKind::ALL.iter().map(|k| k.size()).collect();
        assert_eq!(sizes, [1, 1, 2, 2, 4, 4, 8, 8, 4, 8, 1, 1]);
    }

    #[test]
    fn le_roundtrip() {
        let mut out = Vec::new();
        (-5i32).write_le(&mut out);
        2.5f64.write_le(&mut out);
        true.write_le(&mut out);
        assert_eq!(i32::read_le(&out[0..4]), -5);
        assert_eq!(f64::read_le(&out[4..12]), 2.5);
        assert!(bool::read_le(&out[12..13]));
        assert!(bool::read_le(&[7]));
    }
}
