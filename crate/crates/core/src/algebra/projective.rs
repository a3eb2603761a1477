use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use super::matrix::{norm2, Matrix};
use super::decomp::svd;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// A direction in projective space: a unit vector whose first nonzero
/// coordinate is positive, so `v` and `-v` are the same point.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "Vec<T>", into = "Vec<T>", bound = "T: Real")]
pub struct ProjectivePoint<T> {
    v: Vec<T>,
}

impl<T: Real> ProjectivePoint<T> {
    pub fn new(v: &[T]) -> Result<Self> {
        if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidPoint("projective point needs finite coordinates".into()));
        }
        let n = norm2(v);
        if n == T::zero() {
            return Err(Error::InvalidPoint("zero vector has no direction".into()));
        }
        let sign = match v.iter().find(|x| **x != T::zero()) {
            Some(&x) if x < T::zero() => -T::one(),
            _ => T::one(),
        };
        Ok(Self { v: v.iter().map(|&x| sign * x / n).collect() })
    }

    pub fn axis(d: usize, i: usize) -> Self {
        let mut v = vec![T::zero(); d];
        v[i] = T::one();
        Self { v }
    }

    /// Direction at angle `phi` in the plane (`d = 2`).
    pub fn from_angle(phi: T) -> Self {
        Self::new(&[phi.cos(), phi.sin()]).expect("unit circle point")
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.v
    }

    pub fn dim(&self) -> usize {
        self.v.len()
    }

    pub fn into_vec(self) -> Vec<T> {
        self.v
    }
}

impl<T: Real> TryFrom<Vec<T>> for ProjectivePoint<T> {
    type Error = Error;

    fn try_from(v: Vec<T>) -> Result<Self> {
        Self::new(&v)
    }
}

impl<T: Real> From<ProjectivePoint<T>> for Vec<T> {
    fn from(p: ProjectivePoint<T>) -> Vec<T> {
        p.v
    }
}

impl<T: Real> PartialEq for ProjectivePoint<T> {
    fn eq(&self, other: &Self) -> bool {
        self.v == other.v
    }
}

impl<T: Real> Eq for ProjectivePoint<T> {}

impl<T: Real> Hash for ProjectivePoint<T> {
    fn hash<H: Hasher>(&self, state: &mut H) {
        for x in &self.v {
            // +0.0 and -0.0 must hash alike
            let x = if *x == T::zero() { 0.0 } else { x.to_f64_lossy() };
            x.to_bits().hash(state);
        }
    }
}

/// Projective distance `|u ^ v| / (|u| |v|)`, the sine of the angle between the lines.
pub fn proj_dist<T: Real>(u: &ProjectivePoint<T>, v: &ProjectivePoint<T>) -> T {
    wedge_ratio(u.as_slice(), v.as_slice())
}

/// `|u ^ v| / (|u| |v|)` for arbitrary nonzero vectors.
pub fn wedge_ratio<T: Real>(u: &[T], v: &[T]) -> T {
    let (nu, nv) = (norm2(u), norm2(v));
    let mut acc = T::zero();
    for i in 0..u.len() {
        for j in i + 1..u.len() {
            let a = (u[i] / nu) * (v[j] / nv) - (u[j] / nu) * (v[i] / nv);
            acc += a * a;
        }
    }
    acc.sqrt().min(T::one())
}

/// Sine of the largest principal angle between the spans of two frames with
/// orthonormal columns: `||(I - B B^T) A||_2`.
pub fn grassmann_dist<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> Result<T> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(Error::Dimension(format!(
            "frames {}x{} and {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let proj = b.matmul(&b.transpose().matmul(a));
    let resid = a.sub(&proj);
    Ok(svd(&resid)?.s[0].min(T::one()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn sign_identification() {
        let a = ProjectivePoint::new(&[1.0_f64, -2.0]).unwrap();
        let b = ProjectivePoint::new(&[-3.0_f64, 6.0]).unwrap();
        assert_eq!(a, b);
        let mut set = HashSet::new();
        set.insert(a);
        assert!(set.contains(&b));
        assert!(ProjectivePoint::new(&[0.0_f64, 0.0]).is_err());
    }

    #[test]
    fn distance_examples() {
        let e1 = ProjectivePoint::<f64>::axis(2, 0);
        let e2 = ProjectivePoint::<f64>::axis(2, 1);
        let diag = ProjectivePoint::new(&[1.0, 1.0]).unwrap();
        assert_eq!(proj_dist(&e1, &e2), 1.0);
        assert_eq!(proj_dist(&e1, &e1), 0.0);
        assert!((proj_dist(&e1, &diag) - 0.5_f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn grassmann_of_planes() {
        let a = Matrix::<f64>::from_columns(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]).unwrap();
        let b = Matrix::from_columns(&[vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 0.0]]).unwrap();
        assert!(grassmann_dist(&a, &b).unwrap() < 1e-15);
        let c = Matrix::from_columns(&[vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0]]).unwrap();
        assert!((grassmann_dist(&a, &c).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn json_round_trip_canonicalizes() {
        let p: ProjectivePoint<f64> = serde_json::from_str("[0.0, -2.0]").unwrap();
        assert_eq!(p.as_slice(), &[0.0, 1.0]);
        assert!(serde_json::from_str::<ProjectivePoint<f64>>("[0.0, 0.0]").is_err());
    }
}
