use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Reduce to `[0, 1)`. Values that round up to exactly 1 map to 0.
#[inline]
pub fn wrap<T: Real>(x: T) -> T {
    let y = x - x.floor();
    if y >= T::one() {
        T::zero()
    } else {
        y
    }
}

/// Point of the torus `R^m / Z^m`, coordinates in `[0, 1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<T>", into = "Vec<T>", bound = "T: Real")]
pub struct TorusPoint<T> {
    coords: Vec<T>,
}

impl<T: Real> TorusPoint<T> {
    /// Wraps arbitrary finite coordinates into the fundamental domain.
    pub fn new(coords: &[T]) -> Result<Self> {
        if coords.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidPoint("non-finite torus coordinate".into()));
        }
        Ok(Self { coords: coords.iter().map(|&x| wrap(x)).collect() })
    }

    pub fn zero(m: usize) -> Self {
        Self { coords: vec![T::zero(); m] }
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// In-place translation by `theta`.
    #[inline]
    pub fn shift(&mut self, theta: &[T]) {
        Self::shift_slice(&mut self.coords, theta);
    }

    /// Translation of raw coordinates already in `[0, 1)`.
    #[inline]
    pub fn shift_slice(coords: &mut [T], theta: &[T]) {
        for (c, &t) in coords.iter_mut().zip(theta) {
            *c = wrap(*c + t);
        }
    }

    /// Largest coordinate-wise circular distance.
    pub fn dist(&self, other: &Self) -> T {
        self.coords
            .iter()
            .zip(&other.coords)
            .map(|(&a, &b)| {
                let d = wrap(a - b);
                d.min(T::one() - d)
            })
            .fold(T::zero(), T::max)
    }
}

impl<T: Real> TryFrom<Vec<T>> for TorusPoint<T> {
    type Error = Error;

    fn try_from(v: Vec<T>) -> Result<Self> {
        Self::new(&v)
    }
}

impl<T: Real> From<TorusPoint<T>> for Vec<T> {
    fn from(p: TorusPoint<T>) -> Vec<T> {
        p.coords
    }
}

pub fn torus_add<T: Real>(t: &TorusPoint<T>, theta: &TorusPoint<T>) -> TorusPoint<T> {
    assert_eq!(t.dim(), theta.dim(), "torus dimension mismatch");
    let mut out = t.clone();
    out.shift(theta.as_slice());
    out
}
