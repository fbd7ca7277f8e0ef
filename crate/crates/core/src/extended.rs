//! Extended-real values for objectives that may be `+∞` (indicator terms).
//!
//! `+∞` is a distinct variant, not a float that happened to overflow: finite
//! arithmetic that produces an infinity or NaN is reported as such by the
//! solvers rather than silently absorbed.

use std::cmp::Ordering;
use std::fmt;
use std::ops::Add;

use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtReal<T> {
    Finite(T),
    PosInfinity,
}

impl<T: Real> ExtReal<T> {
    pub fn is_finite(&self) -> bool {
        matches!(self, ExtReal::Finite(v) if v.is_finite())
    }

    pub fn finite(self) -> Option<T> {
        match self {
            ExtReal::Finite(v) => Some(v),
            ExtReal::PosInfinity => None,
        }
    }

    /// Float view; `+∞` maps to `T::infinity()`.
    pub fn to_float(self) -> T {
        match self {
            ExtReal::Finite(v) => v,
            ExtReal::PosInfinity => T::infinity(),
        }
    }

    pub fn zero() -> Self {
        ExtReal::Finite(T::zero())
    }
}

impl<T: Real> Add for ExtReal<T> {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        match (self, rhs) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => ExtReal::Finite(a + b),
            _ => ExtReal::PosInfinity,
        }
    }
}

impl<T: Real> Add<T> for ExtReal<T> {
    type Output = Self;

    fn add(self, rhs: T) -> Self {
        self + ExtReal::Finite(rhs)
    }
}

impl<T: Real> PartialOrd for ExtReal<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match (self, other) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => a.partial_cmp(b),
            (ExtReal::PosInfinity, ExtReal::PosInfinity) => Some(Ordering::Equal),
            (ExtReal::PosInfinity, _) => Some(Ordering::Greater),
            (_, ExtReal::PosInfinity) => Some(Ordering::Less),
        }
    }
}

impl<T: Real> From<T> for ExtReal<T> {
    fn from(v: T) -> Self {
        ExtReal::Finite(v)
    }
}

impl<T: Real> fmt::Display for ExtReal<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::Finite(v) => write!(f, "{v}"),
            ExtReal::PosInfinity => f.write_str("inf"),
        }
    }
}
