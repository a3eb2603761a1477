use std::collections::BTreeMap;

use super::fiber::{Fiber, FourierTerm, GridFiber};
use super::system::GeneratorRep;
use crate::algebra::{torus_add, Matrix};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Group law `(theta2, A2) . (theta1, A1) = (theta2 + theta1, A2(. + theta1) A1(.))`.
///
/// Constant and Fourier fibers compose exactly; grid fibers are resampled on
/// the finer of the involved grids.
pub fn group_compose<T: Real>(g2: &GeneratorRep<T>, g1: &GeneratorRep<T>) -> Result<GeneratorRep<T>> {
    let (d, m) = (g1.fiber.dim(), g1.theta.dim());
    if g2.fiber.dim() != d || g2.theta.dim() != m {
        return Err(Error::Dimension(format!(
            "cannot compose d={}, m={} with d={d}, m={m}",
            g2.fiber.dim(),
            g2.theta.dim()
        )));
    }
    let theta = torus_add(&g2.theta, &g1.theta);
    let th1 = g1.theta.as_slice();
    let fiber = match (&g2.fiber, &g1.fiber) {
        (Fiber::Compound(_), _) | (_, Fiber::Compound(_)) => {
            return Err(Error::InvalidSystem("compound fibers do not compose".into()))
        }
        (Fiber::Constant { matrix: b }, Fiber::Constant { matrix: a }) => Fiber::constant(b.matmul(a)),
        (Fiber::Grid(_), _) | (_, Fiber::Grid(_)) => {
            let res = grid_resolution(&g2.fiber, &g1.fiber, m);
            let grid = GridFiber::sample(res, |t| {
                let shifted: Vec<T> = t.iter().zip(th1).map(|(&x, &y)| x + y).collect();
                g2.fiber.eval(&shifted).matmul(&g1.fiber.eval(t))
            })?;
            Fiber::Grid(grid)
        }
        _ => {
            let t2 = shift_terms(&fourier_terms(&g2.fiber, m), th1);
            let t1 = fourier_terms(&g1.fiber, m);
            Fiber::Fourier { terms: multiply_terms(&t2, &t1, d) }
        }
    };
    Ok(GeneratorRep::new(theta, fiber))
}

fn grid_resolution<T: Real>(a: &Fiber<T>, b: &Fiber<T>, m: usize) -> Vec<usize> {
    let res = |f: &Fiber<T>| match f {
        Fiber::Grid(g) => g.resolution().to_vec(),
        _ => vec![1; m],
    };
    res(a).into_iter().zip(res(b)).map(|(x, y)| x.max(y)).collect()
}

fn fourier_terms<T: Real>(f: &Fiber<T>, m: usize) -> Vec<FourierTerm<T>> {
    match f {
        Fiber::Constant { matrix } => {
            vec![FourierTerm { k: vec![0; m], cos: matrix.clone(), sin: Matrix::zeros(matrix.rows(), matrix.cols()) }]
        }
        Fiber::Fourier { terms } => terms.clone(),
        _ => unreachable!("only constant and Fourier fibers reach the exact path"),
    }
}

/// Coefficients of `t -> A(t + theta)`.
fn shift_terms<T: Real>(terms: &[FourierTerm<T>], theta: &[T]) -> Vec<FourierTerm<T>> {
    terms
        .iter()
        .map(|term| {
            let phase: T = term.k.iter().zip(theta).map(|(&k, &x)| T::lit(k as f64) * x).sum();
            let (s, c) = (T::TAU() * phase).sin_cos();
            let mut cos = term.cos.scale(c);
            cos.axpy(s, &term.sin);
            let mut sin = term.sin.scale(c);
            sin.axpy(-s, &term.cos);
            FourierTerm { k: term.k.clone(), cos, sin }
        })
        .collect()
}

/// Canonical representative of `{k, -k}`: first nonzero entry positive.
/// Returns the representative and `true` if `k` was negated.
fn canonical(k: Vec<i64>) -> (Vec<i64>, bool) {
    match k.iter().find(|&&x| x != 0) {
        Some(&x) if x < 0 => (k.iter().map(|&x| -x).collect(), true),
        _ => (k, false),
    }
}

fn multiply_terms<T: Real>(t2: &[FourierTerm<T>], t1: &[FourierTerm<T>], d: usize) -> Vec<FourierTerm<T>> {
    let half = T::lit(0.5);
    let mut acc: BTreeMap<Vec<i64>, (Matrix<T>, Matrix<T>)> = BTreeMap::new();
    let mut add = |k: Vec<i64>, c: Matrix<T>, s: Matrix<T>| {
        let (key, negated) = canonical(k);
        let entry = acc.entry(key).or_insert_with(|| (Matrix::zeros(d, d), Matrix::zeros(d, d)));
        entry.0.axpy(T::one(), &c);
        entry.1.axpy(if negated { -T::one() } else { T::one() }, &s);
    };
    for a in t2 {
        for b in t1 {
            let cc = a.cos.matmul(&b.cos);
            let ss = a.sin.matmul(&b.sin);
            let cs = a.cos.matmul(&b.sin);
            let sc = a.sin.matmul(&b.cos);
            let sum_k: Vec<i64> = a.k.iter().zip(&b.k).map(|(x, y)| x + y).collect();
            let diff_k: Vec<i64> = a.k.iter().zip(&b.k).map(|(x, y)| x - y).collect();
            add(sum_k, cc.sub(&ss).scale(half), cs.add(&sc).scale(half));
            add(diff_k, cc.add(&ss).scale(half), sc.sub(&cs).scale(half));
        }
    }
    acc.into_iter()
        .map(|(k, (cos, sin))| {
            // sin(0) = 0, so the zero frequency carries no sine part
            let sin = if k.iter().all(|&x| x == 0) { Matrix::zeros(d, d) } else { sin };
            FourierTerm { k, cos, sin }
        })
        .collect()
}
