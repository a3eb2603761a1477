use super::fiber::FiberScratch;
use super::system::{CocycleSystem, Word};
use crate::algebra::{op_norm, Matrix, TorusPoint};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Renormalized orbit product: the true product is `exp(sum(log_norm_trace)) * matrix`.
#[derive(Clone, Debug)]
pub struct OrbitProduct<T> {
    pub matrix: Matrix<T>,
    pub end: TorusPoint<T>,
    pub log_norm_trace: Vec<T>,
}

impl<T: Real> OrbitProduct<T> {
    pub fn log_scale(&self) -> T {
        self.log_norm_trace.iter().copied().sum()
    }

    /// `log ||A^n_x(t)||` (operator norm), computed without overflow.
    pub fn log_norm(&self) -> Result<T> {
        Ok(self.log_scale() + op_norm(&self.matrix)?.ln())
    }

    /// The unscaled product; may overflow for long orbits.
    pub fn full_matrix(&self) -> Matrix<T> {
        self.matrix.scale(self.log_scale().exp())
    }
}

/// `A^n_x(t) = A_{x_{n-1}}(f^{n-1}_x t) ... A_{x_0}(t)` and the endpoint `f^n_x(t)`.
///
/// After every factor the running product is divided by its largest entry
/// and the log of that factor is recorded.
pub fn orbit_product<T: Real>(sys: &CocycleSystem<T>, w: &Word, t: &TorusPoint<T>) -> Result<OrbitProduct<T>> {
    if t.dim() != sys.m() {
        return Err(Error::Dimension(format!("t has dimension {}, expected {}", t.dim(), sys.m())));
    }
    if let Some(&x) = w.letters().iter().find(|&&x| x >= sys.n_generators()) {
        return Err(Error::InvalidParameter(format!("letter {x} out of range")));
    }
    let d = sys.d();
    let mut prod = Matrix::identity(d);
    let mut fiber = Matrix::zeros(d, d);
    let mut tmp = Matrix::zeros(d, d);
    let mut scratch = FiberScratch::default();
    let mut pos = t.clone();
    let mut trace = Vec::with_capacity(w.len());
    for &i in w.letters() {
        sys.eval_into(i, pos.as_slice(), &mut fiber, &mut scratch);
        fiber.matmul_into(&prod, &mut tmp);
        let s = tmp.max_abs();
        if !(s > T::zero()) || !s.is_finite() {
            return Err(Error::SingularFiber { det: 0.0, tol: 0.0 });
        }
        tmp.scale_mut(T::one() / s);
        std::mem::swap(&mut prod, &mut tmp);
        trace.push(s.ln());
        pos.shift(sys.theta(i));
    }
    Ok(OrbitProduct { matrix: prod, end: pos, log_norm_trace: trace })
}

/// Endpoint of the base orbit only.
pub fn base_orbit<T: Real>(sys: &CocycleSystem<T>, w: &Word, t: &TorusPoint<T>) -> TorusPoint<T> {
    let mut pos = t.clone();
    for &i in w.letters() {
        pos.shift(sys.theta(i));
    }
    pos
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cocycle::{Fiber, GeneratorRep};

    fn const_sys() -> CocycleSystem<f64> {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![0.5, 3.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![0.0, 1.0], vec![-1.0, 0.4]]).unwrap();
        CocycleSystem::from_generators(vec![
            GeneratorRep::new(TorusPoint::new(&[0.3]).unwrap(), Fiber::constant(a)),
            GeneratorRep::new(TorusPoint::new(&[0.7]).unwrap(), Fiber::constant(b)),
        ])
        .unwrap()
    }

    #[test]
    fn empty_word_is_identity() {
        let sys = const_sys();
        let t = TorusPoint::new(&[0.42]).unwrap();
        let o = orbit_product(&sys, &Word::empty(), &t).unwrap();
        assert_eq!(o.matrix, Matrix::identity(2));
        assert_eq!(o.end, t);
        assert!(o.log_norm_trace.is_empty());
    }

    #[test]
    fn constant_product_in_reversed_order() {
        let sys = const_sys();
        let w = Word::new(vec![0, 1, 1], 2).unwrap();
        let t = TorusPoint::new(&[0.1]).unwrap();
        let o = orbit_product(&sys, &w, &t).unwrap();
        let a = sys.eval(0, &[0.0]);
        let b = sys.eval(1, &[0.0]);
        let direct = b.matmul(&b).matmul(&a);
        assert!(o.full_matrix().sub(&direct).max_abs() < 1e-12);
        assert!((o.end.as_slice()[0] - 0.8).abs() < 1e-12);
    }
}
