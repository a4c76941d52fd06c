use crate::datatype::{Fundamental, FundamentalKind};
use crate::error::{Error, Result};

/// Elementwise reduction operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReduceOp {
    Sum,
    Prod,
    Min,
    Max,
    LogicalAnd,
    LogicalOr,
}

mod sealed {
    pub trait Sealed {}
}

/// Element types with `+`, `*`, `min` and `max`. Integer arithmetic wraps.
pub trait Arithmetic: Fundamental + sealed::Sealed {
    fn add(self, other: Self) -> Self;
    fn mul(self, other: Self) -> Self;
    fn min_of(self, other: Self) -> Self;
    fn max_of(self, other: Self) -> Self;
}

/// Element types with a truth value.
pub trait Logical: Fundamental + sealed::Sealed {
    fn truth(self) -> bool;
    fn from_truth(b: bool) -> Self;
}

macro_rules! int_ops {
    ($($t:ty)*) => {$(
        impl sealed::Sealed for $t {}

        impl Arithmetic for $t {
            fn add(self, other: Self) -> Self { self.wrapping_add(other) }
            fn mul(self, other: Self) -> Self { self.wrapping_mul(other) }
            fn min_of(self, other: Self) -> Self { Ord::min(self, other) }
            fn max_of(self, other: Self) -> Self { Ord::max(self, other) }
        }

        impl Logical for $t {
            fn truth(self) -> bool { self != 0 }
            fn from_truth(b: bool) -> Self { b as $t }
        }
    )*};
}

int_ops!(i8 i16 i32 i64 u8 u16 u32 u64);

macro_rules! float_ops {
    ($($t:ty)*) => {$(
        impl sealed::Sealed for $t {}

        impl Arithmetic for $t {
            fn add(self, other: Self) -> Self { self + other }
            fn mul(self, other: Self) -> Self { self * other }
            // Keeps the accumulated value unless `other` is strictly smaller.
            fn min_of(self, other: Self) -> Self { if other < self { other } else { self } }
            fn max_of(self, other: Self) -> Self { if other > self { other } else { self } }
        }
    )*};
}

float_ops!(f32 f64);

impl sealed::Sealed for bool {}

impl Logical for bool {
    fn truth(self) -> bool {
        self
    }

    fn from_truth(b: bool) -> Self {
        b
    }
}

/// Type-level operator. `reduce` only accepts an operator that implements
/// `ReductionOp` for the buffer's element type, so an undefined combination
/// such as summing `bool`s is rejected at compile time.
pub trait ReductionOp<T: Fundamental>: Copy {
    const OP: ReduceOp;
}

macro_rules! marker {
    ($($name:ident: $bound:ident => $op:ident;)*) => {$(
        #[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
        pub struct $name;

        impl<T: $bound> ReductionOp<T> for $name {
            const OP: ReduceOp = ReduceOp::$op;
        }
    )*};
}

marker! {
    Sum: Arithmetic => Sum;
    Prod: Arithmetic => Prod;
    Min: Arithmetic => Min;
    Max: Arithmetic => Max;
    LogicalAnd: Logical => LogicalAnd;
    LogicalOr: Logical => LogicalOr;
}

fn fold<T: Fundamental>(acc: &mut [u8], other: &[u8], f: impl Fn(T, T) -> T) {
    let size = T::KIND.size();
    let mut tmp = Vec::with_capacity(size);
    for (a, b) in acc.chunks_exact_mut(size).zip(other.chunks_exact(size)) {
        tmp.clear();
        f(T::read_le(a), T::read_le(b)).write_le(&mut tmp);
        a.copy_from_slice(&tmp);
    }
}

fn arith<T: Arithmetic>(op: ReduceOp, acc: &mut [u8], other: &[u8]) {
    match op {
        ReduceOp::Sum => fold(acc, other, T::add),
        ReduceOp::Prod => fold(acc, other, T::mul),
        ReduceOp::Min => fold(acc, other, T::min_of),
        ReduceOp::Max => fold(acc, other, T::max_of),
        ReduceOp::LogicalAnd | ReduceOp::LogicalOr => unreachable!("not arithmetic"),
    }
}

fn logic<T: Logical>(op: ReduceOp, acc: &mut [u8], other: &[u8]) {
    match op {
        ReduceOp::LogicalAnd => fold(acc, other, |a: T, b: T| T::from_truth(a.truth() && b.truth())),
        ReduceOp::LogicalOr => fold(acc, other, |a: T, b: T| T::from_truth(a.truth() || b.truth())),
        _ => unreachable!("not logical"),
    }
}

impl ReduceOp {
    pub fn is_logical(self) -> bool {
        matches!(self, ReduceOp::LogicalAnd | ReduceOp::LogicalOr)
    }

    /// Whether the operator is defined for elements of `kind`.
    pub fn supports(self, kind: FundamentalKind) -> bool {
        use FundamentalKind::*;
        match kind {
            Byte => false,
            Bool => self.is_logical(),
            Float32 | Float64 => !self.is_logical(),
            _ => true,
        }
    }

    /// `acc[i] = acc[i] op other[i]` over packed little-endian elements.
    pub fn combine(self, kind: FundamentalKind, acc: &mut [u8], other: &[u8]) -> Result<()> {
        if !self.supports(kind) {
            return Err(Error::invalid(format!("{self:?} is not defined for {kind}")));
        }
        if acc.len() != other.len() || !acc.len().is_multiple_of(kind.size()) {
            return Err(Error::invalid(format!(
                "cannot combine {} bytes with {} bytes of {kind}",
                acc.len(),
                other.len()
            )));
        }
        use FundamentalKind::*;
        let logical = self.is_logical();
        match kind {
            Int8 if logical => logic::<i8>(self, acc, other),
            Int16 if logical => logic::<i16>(self, acc, other),
            Int32 if logical => logic::<i32>(self, acc, other),
            Int64 if logical => logic::<i64>(self, acc, other),
            Uint8 if logical => logic::<u8>(self, acc, other),
            Uint16 if logical => logic::<u16>(self, acc, other),
            Uint32 if logical => logic::<u32>(self, acc, other),
            Uint64 if logical => logic::<u64>(self, acc, other),
            Bool => logic::<bool>(self, acc, other),
            Int8 => arith::<i8>(self, acc, other),
            Int16 => arith::<i16>(self, acc, other),
            Int32 => arith::<i32>(self, acc, other),
            Int64 => arith::<i64>(self, acc, other),
            Uint8 => arith::<u8>(self, acc, other),
            Uint16 => arith::<u16>(self, acc, other),
            Uint32 => arith::<u32>(self, acc, other),
            Uint64 => arith::<u64>(self, acc, other),
            Float32 => arith::<f32>(self, acc, other),
            Float64 => arith::<f64>(self, acc, other),
            Byte => unreachable!("rejected above"),
        }
        Ok(())
    }

    pub(crate) fn code(self) -> u64 {
        self as u64
    }
}
