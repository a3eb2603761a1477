use std::collections::BTreeMap;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::algebra::{norm2, proj_dist, Matrix, ProjectivePoint, TorusPoint};
use crate::cocycle::{validation_grid, CocycleSystem, FiberScratch, ProbabilityVector};
use crate::error::{Error, Result};
use crate::lyapunov::{push_vector, Walker};
use crate::sampling::{par_samples, random_unit};
use crate::scalar::{mean_stderr, Real};

use super::ComplexWeights;

pub const DEFAULT_WORD_CAP: u128 = 1_000_000;
pub const DEFAULT_COEFF_CAP: u128 = 1_000_000;

/// `phi_j(t, v) = log |A_j(t) v| / |v|`.
pub fn phi_j<T: Real>(sys: &CocycleSystem<T>, j: usize, t: &[T], v: &[T]) -> Result<T> {
    if j >= sys.n_generators() {
        return Err(Error::InvalidParameter(format!("generator {j} out of range")));
    }
    if v.len() != sys.d() || t.len() != sys.m() {
        return Err(Error::Dimension("phi_j argument has the wrong dimension".into()));
    }
    let nv = norm2(v);
    let av = norm2(&sys.eval(j, t).mat_vec(v));
    let out = (av / nv).ln();
    if !out.is_finite() {
        return Err(Error::SingularFiber { det: 0.0, tol: 0.0 });
    }
    Ok(out)
}

/// Function of `(t, v)` fed to the transfer operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Observable {
    /// `phi_j`.
    Phi(usize),
    /// `sum_j z_j phi_j`, which adds one degree in `z`.
    Xi,
}

impl Observable {
    fn check(&self, n_gen: usize) -> Result<()> {
        match *self {
            Observable::Phi(j) if j >= n_gen => Err(Error::InvalidParameter(format!("generator {j} out of range"))),
            _ => Ok(()),
        }
    }
}

fn z_pow<T: Real>(z: &[Complex<T>], counts: &[u32]) -> Complex<T> {
    z.iter().zip(counts).fold(Complex::new(T::one(), T::zero()), |acc, (zi, &c)| acc * zi.powu(c))
}

/// Depth-first walk over all words of length `n` from `(t, v)`.
struct Enumerator<'a, T: Real> {
    sys: &'a CocycleSystem<T>,
    ts: Vec<Vec<T>>,
    us: Vec<Vec<T>>,
    counts: Vec<u32>,
    fiber: Matrix<T>,
    scratch: FiberScratch<T>,
    tmp: Vec<T>,
}

impl<'a, T: Real> Enumerator<'a, T> {
    fn new(sys: &'a CocycleSystem<T>, n: usize, t: &[T], v: &[T]) -> Self {
        let d = sys.d();
        let nv = norm2(v);
        let mut us = vec![vec![T::zero(); d]; n + 1];
        us[0] = v.iter().map(|&x| x / nv).collect();
        let mut ts = vec![vec![T::zero(); sys.m()]; n + 1];
        ts[0] = t.to_vec();
        Self {
            sys,
            ts,
            us,
            counts: vec![0; sys.n_generators()],
            fiber: Matrix::zeros(d, d),
            scratch: FiberScratch::default(),
            tmp: vec![T::zero(); d],
        }
    }

    /// Calls `visit(k, counts, t_k, u_k)` at every node of depth `k <= n`,
    /// in depth-first order.
    fn run(&mut self, n: usize, visit: &mut impl FnMut(usize, &[u32], &[T], &[T]) -> Result<()>) -> Result<()> {
        self.rec(0, n, visit)
    }

    fn rec(&mut self, k: usize, n: usize, visit: &mut impl FnMut(usize, &[u32], &[T], &[T]) -> Result<()>) -> Result<()> {
        visit(k, &self.counts, &self.ts[k], &self.us[k])?;
        if k == n {
            return Ok(());
        }
        for j in 0..self.sys.n_generators() {
            self.sys.eval_into(j, &self.ts[k], &mut self.fiber, &mut self.scratch);
            let (lo, hi) = self.us.split_at_mut(k + 1);
            hi[0].copy_from_slice(&lo[k]);
            let g = push_vector(&self.fiber, &mut hi[0], &mut self.tmp);
            if !g.is_finite() {
                return Err(Error::SingularFiber { det: 0.0, tol: 0.0 });
            }
            let (lo, hi) = self.ts.split_at_mut(k + 1);
            hi[0].copy_from_slice(&lo[k]);
            TorusPoint::shift_slice(&mut hi[0], self.sys.theta(j));
            self.counts[j] += 1;
            self.rec(k + 1, n, visit)?;
            self.counts[j] -= 1;
        }
        Ok(())
    }
}

fn check_word_cap(n_gen: usize, n: usize, cap: u128) -> Result<()> {
    let size = (n_gen as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if size > cap {
        return Err(Error::CapExceeded { what: "word count", size, cap });
    }
    Ok(())
}

/// Values `phi_j(t, u)` for all `j`.
fn phi_all<T: Real>(sys: &CocycleSystem<T>, t: &[T], u: &[T], fiber: &mut Matrix<T>, scratch: &mut FiberScratch<T>, tmp: &mut [T]) -> Result<Vec<T>> {
    (0..sys.n_generators())
        .map(|j| {
            sys.eval_into(j, t, fiber, scratch);
            fiber.mat_vec_into(u, tmp);
            let g = norm2(tmp).ln();
            if g.is_finite() {
                Ok(g)
            } else {
                Err(Error::SingularFiber { det: 0.0, tol: 0.0 })
            }
        })
        .collect()
}

/// `T_z^n obs (t, v) = sum_{|w| = n} z^w obs(f_w^n t, A_w^n(t) v)` by full
/// enumeration of the `N^n` words.
pub fn apply_tz_exact<T: Real>(
    sys: &CocycleSystem<T>,
    obs: Observable,
    z: &ComplexWeights<T>,
    n: usize,
    t: &[T],
    v: &[T],
    word_cap: u128,
) -> Result<Complex<T>> {
    obs.check(sys.n_generators())?;
    if z.len() != sys.n_generators() {
        return Err(Error::Dimension("weight count differs from generator count".into()));
    }
    if v.len() != sys.d() || t.len() != sys.m() {
        return Err(Error::Dimension("T_z argument has the wrong dimension".into()));
    }
    if !(norm2(v) > T::zero()) {
        return Err(Error::InvalidPoint("zero direction".into()));
    }
    check_word_cap(sys.n_generators(), n, word_cap)?;
    let zs = z.as_slice();
    let mut fiber = Matrix::zeros(sys.d(), sys.d());
    let mut scratch = FiberScratch::default();
    let mut tmp = vec![T::zero(); sys.d()];
    let (mut re, mut im) = (crate::scalar::CompensatedSum::new(), crate::scalar::CompensatedSum::new());
    let mut en = Enumerator::new(sys, n, t, v);
    en.run(n, &mut |k, counts, tk, uk| {
        if k < n {
            return Ok(());
        }
        let w = z_pow(zs, counts);
        let val = match obs {
            Observable::Phi(j) => {
                sys.eval_into(j, tk, &mut fiber, &mut scratch);
                fiber.mat_vec_into(uk, &mut tmp);
                w * norm2(&tmp).ln()
            }
            Observable::Xi => {
                let ph = phi_all(sys, tk, uk, &mut fiber, &mut scratch, &mut tmp)?;
                ph.iter().zip(zs).fold(Complex::new(T::zero(), T::zero()), |a, (&g, &zj)| a + w * zj * g)
            }
        };
        re.add(val.re);
        im.add(val.im);
        Ok(())
    })?;
    Ok(Complex::new(re.value(), im.value()))
}

/// Real polynomial in `z` with exponent vectors as keys.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Polynomial<T> {
    pub n_vars: usize,
    pub terms: BTreeMap<Vec<u32>, T>,
}

impl<T: Real> Polynomial<T> {
    pub fn new(n_vars: usize) -> Self {
        Self { n_vars, terms: BTreeMap::new() }
    }

    pub fn add_term(&mut self, exps: &[u32], c: T) {
        *self.terms.entry(exps.to_vec()).or_insert_with(T::zero) += c;
    }

    pub fn eval(&self, z: &[Complex<T>]) -> Complex<T> {
        let (mut re, mut im) = (crate::scalar::CompensatedSum::new(), crate::scalar::CompensatedSum::new());
        for (e, &c) in &self.terms {
            let v = z_pow(z, e) * c;
            re.add(v.re);
            im.add(v.im);
        }
        Complex::new(re.value(), im.value())
    }

    pub fn degree(&self) -> Option<u32> {
        self.terms.keys().map(|e| e.iter().sum()).max()
    }
}

/// Exact coefficients of `z -> T_z^n obs (t, v)`, homogeneous of degree `n`
/// (degree `n + 1` for [`Observable::Xi`]).
pub fn poly_coeffs_tz<T: Real>(
    sys: &CocycleSystem<T>,
    obs: Observable,
    n: usize,
    t: &[T],
    v: &[T],
    word_cap: u128,
    coeff_cap: u128,
) -> Result<Polynomial<T>> {
    let n_gen = sys.n_generators();
    obs.check(n_gen)?;
    if v.len() != sys.d() || t.len() != sys.m() {
        return Err(Error::Dimension("T_z argument has the wrong dimension".into()));
    }
    if !(norm2(v) > T::zero()) {
        return Err(Error::InvalidPoint("zero direction".into()));
    }
    check_word_cap(n_gen, n, word_cap)?;
    let deg = n as u128 + matches!(obs, Observable::Xi) as u128;
    let coeffs = crate::algebra::binomial(deg as usize + n_gen - 1, n_gen - 1);
    if coeffs > coeff_cap {
        return Err(Error::CapExceeded { what: "coefficient count", size: coeffs, cap: coeff_cap });
    }
    let mut poly = Polynomial::new(n_gen);
    let mut fiber = Matrix::zeros(sys.d(), sys.d());
    let mut scratch = FiberScratch::default();
    let mut tmp = vec![T::zero(); sys.d()];
    let mut key = vec![0u32; n_gen];
    let mut en = Enumerator::new(sys, n, t, v);
    en.run(n, &mut |k, counts, tk, uk| {
        if k < n {
            return Ok(());
        }
        match obs {
            Observable::Phi(j) => {
                sys.eval_into(j, tk, &mut fiber, &mut scratch);
                fiber.mat_vec_into(uk, &mut tmp);
                poly.add_term(counts, norm2(&tmp).ln());
            }
            Observable::Xi => {
                let ph = phi_all(sys, tk, uk, &mut fiber, &mut scratch, &mut tmp)?;
                for (j, g) in ph.into_iter().enumerate() {
                    key.copy_from_slice(counts);
                    key[j] += 1;
                    poly.add_term(&key, g);
                }
            }
        }
        Ok(())
    })?;
    Ok(poly)
}

/// Exact polynomials `P_k(z) = mean_{t in grid} sum_{|w| = k+1} z^w phi_{w_{k+1}}(t_k, u_k)`
/// for `k = 0..=depth`, on the full grid and on its even-index subgrid.
pub(crate) fn lambda_polys<T: Real>(
    sys: &CocycleSystem<T>,
    v: &[T],
    depth: usize,
    per_dim: usize,
) -> Result<(Vec<Polynomial<T>>, Vec<Polynomial<T>>)> {
    let m = sys.m();
    let n_gen = sys.n_generators();
    let (grid, per_dim) = if sys.all_constant() { (vec![vec![T::zero(); m]], 1) } else { (validation_grid::<T>(m, per_dim), per_dim) };
    let even: Vec<bool> = (0..grid.len())
        .map(|flat| {
            let mut rem = flat;
            (0..m).all(|_| {
                let ok = (rem % per_dim) % 2 == 0;
                rem /= per_dim;
                ok
            })
        })
        .collect();
    use rayon::prelude::*;
    let per_node: Vec<Vec<BTreeMap<Vec<u32>, T>>> = grid
        .par_iter()
        .map(|t| {
            let mut levels = vec![BTreeMap::new(); depth + 1];
            let mut fiber = Matrix::zeros(sys.d(), sys.d());
            let mut scratch = FiberScratch::default();
            let mut tmp = vec![T::zero(); sys.d()];
            let mut key = vec![0u32; n_gen];
            let mut en = Enumerator::new(sys, depth, t, v);
            en.run(depth, &mut |k, counts, tk, uk| {
                let ph = phi_all(sys, tk, uk, &mut fiber, &mut scratch, &mut tmp)?;
                for (j, g) in ph.into_iter().enumerate() {
                    key.copy_from_slice(counts);
                    key[j] += 1;
                    *levels[k].entry(key.clone()).or_insert_with(T::zero) += g;
                }
                Ok(())
            })?;
            Ok(levels)
        })
        .collect::<Result<_>>()?;
    let n_full = T::from_usize_lossy(grid.len());
    let n_even = T::from_usize_lossy(even.iter().filter(|&&e| e).count());
    let mut full = vec![Polynomial::new(n_gen); depth + 1];
    let mut half = vec![Polynomial::new(n_gen); depth + 1];
    for (node, levels) in per_node.iter().enumerate() {
        for (k, level) in levels.iter().enumerate() {
            for (e, &c) in level {
                full[k].add_term(e, c / n_full);
                if even[node] {
                    half[k].add_term(e, c / n_even);
                }
            }
        }
    }
    Ok((full, half))
}

/// Importance-sampled `T_z^n obs (t, v)`: words drawn from `p`, each
/// reweighted by `prod_k z_{x_k} / p_{x_k}`.
///
/// The mean is post-stratified on the last `s` letters (the ones `obs` at the
/// end of the orbit depends on most), with `s < n`, `s <= 8` and every
/// stratum expecting at least 32 samples; the first letter is always drawn
/// freely. Returns the estimate and the standard
/// error of its real and imaginary parts combined.
#[allow(clippy::too_many_arguments)]
pub fn apply_tz_importance<T: Real>(
    sys: &CocycleSystem<T>,
    obs: Observable,
    z: &ComplexWeights<T>,
    p: &ProbabilityVector<T>,
    n: usize,
    t: &[T],
    v: &[T],
    samples: usize,
    seed: u64,
) -> Result<(Complex<T>, T)> {
    obs.check(sys.n_generators())?;
    p.check_len(sys.n_generators())?;
    if z.len() != sys.n_generators() {
        return Err(Error::Dimension("weight count differs from generator count".into()));
    }
    if v.len() != sys.d() || t.len() != sys.m() {
        return Err(Error::Dimension("T_z argument has the wrong dimension".into()));
    }
    if samples == 0 {
        return Err(Error::InvalidParameter("samples must be at least 1".into()));
    }
    let n_gen = sys.n_generators();
    let ratio: Vec<Complex<T>> = z.as_slice().iter().zip(p.as_slice()).map(|(&zi, &pi)| zi / pi).collect();
    let p_min = p.as_slice().iter().fold(T::one(), |m, &x| m.min(x)).to_f64_lossy();
    let mut strata = 0usize;
    while strata + 1 < n && strata < 8 && p_min.powi(strata as i32 + 1) * samples as f64 >= 32.0 {
        strata += 1;
    }
    let nv = norm2(v);
    let vals = par_samples(samples, seed, |_, rng| {
        let mut walker = Walker::new(sys, p, t.to_vec());
        let mut u: Vec<T> = v.iter().map(|&x| x / nv).collect();
        let mut tmp = vec![T::zero(); sys.d()];
        let mut w = Complex::new(T::one(), T::zero());
        let mut code = 0usize;
        for k in 0..n {
            let i = walker.step(rng);
            w = w * ratio[i];
            if k + strata >= n {
                code = code * n_gen + i;
            }
            push_vector(&walker.fiber, &mut u, &mut tmp);
        }
        let mut fiber = Matrix::zeros(sys.d(), sys.d());
        let mut scratch = FiberScratch::default();
        let ph = phi_all(sys, &walker.t, &u, &mut fiber, &mut scratch, &mut tmp)?;
        let val = match obs {
            Observable::Phi(j) => w * ph[j],
            Observable::Xi => ph.iter().zip(z.as_slice()).fold(Complex::new(T::zero(), T::zero()), |a, (&g, &zj)| a + w * zj * g),
        };
        Ok((code, val))
    })?;
    let n_strata = n_gen.pow(strata as u32);
    let mut groups: Vec<Vec<Complex<T>>> = vec![Vec::new(); n_strata];
    for (code, val) in vals {
        groups[code].push(val);
    }
    if groups.iter().any(|g| g.len() < 2) {
        let all: Vec<Complex<T>> = groups.into_iter().flatten().collect();
        return Ok(complex_mean(&all));
    }
    let mut mean = Complex::new(T::zero(), T::zero());
    let mut var = T::zero();
    for (code, g) in groups.iter().enumerate() {
        let mut weight = T::one();
        let mut c = code;
        for _ in 0..strata {
            weight = weight * p.as_slice()[c % n_gen];
            c /= n_gen;
        }
        let (m, se) = complex_mean(g);
        mean = mean + m * weight;
        var += weight * weight * se * se;
    }
    Ok((mean, var.sqrt()))
}

/// Mean and standard error `sqrt(se_re^2 + se_im^2)`.
pub(crate) fn complex_mean<T: Real>(vals: &[Complex<T>]) -> (Complex<T>, T) {
    let re: Vec<T> = vals.iter().map(|c| c.re).collect();
    let im: Vec<T> = vals.iter().map(|c| c.im).collect();
    let (mr, sr) = mean_stderr(&re);
    let (mi, si) = mean_stderr(&im);
    (Complex::new(mr, mi), (sr * sr + si * si).sqrt())
}

/// Grid estimate of `sup_t Lip(phi_j(t, .))` with respect to the projective
/// metric, times a 1.5 safety factor.
///
/// Uses all pairs of `v_points` directions plus a close neighbor of each, at
/// `t` on a `t_per_dim^m` grid (one point for constant fibers).
pub fn lip_bound_phi<T: Real>(sys: &CocycleSystem<T>, v_points: usize, t_per_dim: usize) -> Result<T> {
    let d = sys.d();
    if d == 1 {
        return Ok(T::zero());
    }
    let dirs: Vec<ProjectivePoint<T>> = if d == 2 {
        (0..v_points)
            .map(|i| ProjectivePoint::from_angle(T::lit(std::f64::consts::PI * (i as f64 + 0.5) / v_points as f64)))
            .collect()
    } else {
        let mut rng = crate::sampling::substream(0x11b_0017, 0);
        (0..v_points).map(|_| ProjectivePoint::new(&random_unit::<T, _>(d, &mut rng)).expect("unit")).collect()
    };
    let eps = T::lit(1e-3);
    let near: Vec<ProjectivePoint<T>> = dirs
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let mut x = a.as_slice().to_vec();
            x[(i + 1) % d] += eps;
            ProjectivePoint::new(&x).expect("nonzero")
        })
        .collect();
    let mut pairs: Vec<(usize, Option<usize>)> = Vec::new();
    for i in 0..dirs.len() {
        for j in i + 1..dirs.len() {
            pairs.push((i, Some(j)));
        }
        pairs.push((i, None));
    }
    let grid = if sys.all_constant() { vec![vec![T::zero(); sys.m()]] } else { validation_grid(sys.m(), t_per_dim.max(1)) };
    let mut best = T::zero();
    for j in 0..sys.n_generators() {
        for t in &grid {
            let a = sys.eval(j, t);
            let phi = |v: &ProjectivePoint<T>| norm2(&a.mat_vec(v.as_slice())).ln();
            let base: Vec<T> = dirs.iter().map(phi).collect();
            let nb: Vec<T> = near.iter().map(phi).collect();
            for &(i, k) in &pairs {
                let (q, dist) = match k {
                    Some(k) => (base[k], proj_dist(&dirs[i], &dirs[k])),
                    None => (nb[i], proj_dist(&dirs[i], &near[i])),
                };
                if dist > T::zero() {
                    best = best.max((base[i] - q).abs() / dist);
                }
            }
        }
    }
    if !best.is_finite() {
        return Err(Error::SingularFiber { det: 0.0, tol: 0.0 });
    }
    Ok(best * T::lit(1.5))
}
