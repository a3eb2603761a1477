use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::cocycle::ProbabilityVector;
use crate::contraction::ContractionCertificate;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Complex weights `z` with `sum z = 1`.
///
/// Serialized as a list of `[re, im]` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[T; 2]>", into = "Vec<[T; 2]>", bound = "T: Real")]
pub struct ComplexWeights<T> {
    z: Vec<Complex<T>>,
}

impl<T: Real> ComplexWeights<T> {
    pub fn new(z: Vec<Complex<T>>) -> Result<Self> {
        if z.is_empty() {
            return Err(Error::InvalidPoint("empty weight vector".into()));
        }
        if z.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::InvalidPoint("non-finite weight".into()));
        }
        let s: Complex<T> = z.iter().copied().sum();
        let tol = T::lit(1e-12).max(T::lit(16.0) * T::epsilon() * T::from_usize_lossy(z.len()));
        if (s - Complex::new(T::one(), T::zero())).norm() > tol {
            return Err(Error::InvalidPoint(format!("weights sum to {s}, expected 1")));
        }
        Ok(Self { z })
    }

    /// Real weights on the simplex.
    pub fn real(q: &[T]) -> Result<Self> {
        Self::new(q.iter().map(|&x| Complex::new(x, T::zero())).collect())
    }

    pub fn from_probability(p: &ProbabilityVector<T>) -> Self {
        Self { z: p.as_slice().iter().map(|&x| Complex::new(x, T::zero())).collect() }
    }

    /// `p + w delta`; requires `sum delta = 0`.
    pub fn on_slice(p: &ProbabilityVector<T>, delta: &[T], w: Complex<T>) -> Result<Self> {
        if delta.len() != p.len() {
            return Err(Error::Dimension("direction length differs from p".into()));
        }
        Self::new(p.as_slice().iter().zip(delta).map(|(&pi, &di)| Complex::new(pi, T::zero()) + w * di).collect())
    }

    /// No `sum z = 1` check; only for homogeneity experiments.
    pub fn unconstrained(z: Vec<Complex<T>>) -> Self {
        Self { z }
    }

    pub fn as_slice(&self) -> &[Complex<T>] {
        &self.z
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn sum_abs(&self) -> T {
        self.z.iter().fold(T::zero(), |a, c| a + c.norm())
    }
}

impl<T: Real> TryFrom<Vec<[T; 2]>> for ComplexWeights<T> {
    type Error = Error;

    fn try_from(v: Vec<[T; 2]>) -> Result<Self> {
        Self::new(v.into_iter().map(|[re, im]| Complex::new(re, im)).collect())
    }
}

impl<T: Real> From<ComplexWeights<T>> for Vec<[T; 2]> {
    fn from(w: ComplexWeights<T>) -> Self {
        w.z.into_iter().map(|c| [c.re, c.im]).collect()
    }
}

/// `D_gamma = { max_i |z_i| / p_i < 1/gamma, sum z = 1 }`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct DomainGamma<T> {
    p: ProbabilityVector<T>,
    gamma: T,
}

impl<T: Real> DomainGamma<T> {
    pub fn new(p: ProbabilityVector<T>, gamma: T) -> Result<Self> {
        if !(gamma > T::zero() && gamma < T::one()) {
            return Err(Error::InvalidParameter(format!("gamma = {gamma} is outside (0, 1)")));
        }
        Ok(Self { p, gamma })
    }

    /// Midpoint `(1 + exp(-zeta)) / 2` of the admissible interval.
    pub fn default_gamma(cert: &ContractionCertificate<T>) -> T {
        (T::one() + (-cert.zeta).exp()) / T::lit(2.0)
    }

    pub fn from_certificate(p: ProbabilityVector<T>, cert: &ContractionCertificate<T>) -> Result<Self> {
        let d = Self::new(p, Self::default_gamma(cert))?;
        d.check_certificate(cert)?;
        Ok(d)
    }

    pub fn p(&self) -> &ProbabilityVector<T> {
        &self.p
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    /// `max_i |z_i| / p_i`.
    pub fn ratio(&self, z: &ComplexWeights<T>) -> T {
        z.as_slice().iter().zip(self.p.as_slice()).fold(T::zero(), |m, (c, &pi)| m.max(c.norm() / pi))
    }

    pub fn contains(&self, z: &ComplexWeights<T>) -> bool {
        z.len() == self.p.len() && self.ratio(z) < T::one() / self.gamma
    }

    pub fn check(&self, z: &ComplexWeights<T>) -> Result<()> {
        if z.len() != self.p.len() {
            return Err(Error::Dimension("weight count differs from p".into()));
        }
        if !self.contains(z) {
            return Err(Error::DomainViolation(format!(
                "max |z_i|/p_i = {} is not below 1/gamma = {}",
                self.ratio(z),
                T::one() / self.gamma
            )));
        }
        Ok(())
    }

    /// The tail bound needs `gamma > exp(-zeta)`.
    pub fn check_certificate(&self, cert: &ContractionCertificate<T>) -> Result<()> {
        cert.validate()?;
        if !(self.gamma > (-cert.zeta).exp()) {
            return Err(Error::DomainViolation(format!(
                "gamma = {} must exceed exp(-zeta) = {}",
                self.gamma,
                (-cert.zeta).exp()
            )));
        }
        Ok(())
    }

    /// Sufficient radius bound for the slice `p + w delta`: the disk
    /// `|w| < r` lies in the domain when `r max_i |delta_i| / p_i < 1/gamma - 1`.
    pub fn slice_radius(&self, delta: &[T]) -> T {
        let s = delta.iter().zip(self.p.as_slice()).fold(T::zero(), |m, (&di, &pi)| m.max(di.abs() / pi));
        if s > T::zero() {
            (T::one() / self.gamma - T::one()) / s
        } else {
            T::infinity()
        }
    }
}
