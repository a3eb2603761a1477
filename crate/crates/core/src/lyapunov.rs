//! Monte Carlo and quadrature estimators of Lyapunov exponents.
//!
//! Every estimator draws, for sample `i`, a uniform torus point and then the
//! letters of the word from substream `i` of the run seed. Two runs with the
//! same seed therefore see the same torus points and the same uniforms for
//! the letters, which makes estimates at nearby weights, for different
//! directions, or for different exterior degrees strongly correlated.

use serde::{Deserialize, Serialize};

use crate::algebra::{log_abs_det, norm2, op_norm, qr_in_place, Matrix, ProjectivePoint};
use crate::cocycle::{validation_grid, CocycleSystem, FiberScratch, ProbabilityVector};
use crate::error::{Error, Result};
use crate::sampling::{aux_substream, par_samples, random_unit, uniform_torus};
use crate::scalar::{mean_stderr, Real};

pub const DEFAULT_N: usize = 2000;
pub const DEFAULT_SAMPLES: usize = 400;
pub const DEFAULT_GAP_TOL: f64 = 1e-2;
/// Largest compound dimension `C(d,k)` the exterior method will build.
pub const DEFAULT_COMPOUND_CAP: usize = 256;

/// Orbit length, sample count, seed and optional burn-in.
///
/// With `burn_in = 0` the top exponent is `(1/n) log ||A^n||`. With a
/// positive burn-in, a random initial vector (or QR frame) is first pushed
/// through `burn_in` steps and the growth over the following `n` steps is
/// averaged; this removes most of the `O(1/n)` bias of the norm estimator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct McParams {
    pub n: usize,
    pub samples: usize,
    pub seed: u64,
    #[serde(default)]
    pub burn_in: usize,
}

impl McParams {
    pub fn new(n: usize, samples: usize, seed: u64) -> Self {
        Self { n, samples, seed, burn_in: 0 }
    }

    pub fn with_burn_in(mut self, burn_in: usize) -> Self {
        self.burn_in = burn_in;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.samples == 0 {
            return Err(Error::InvalidParameter("orbit length and sample count must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// `(1/n) log ||A^n||`.
    NormMc,
    /// Vector growth after a burn-in.
    BurnInMc,
    Directional,
    Qr,
    Exterior,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::NormMc => "norm-mc",
            Method::BurnInMc => "burn-in-mc",
            Method::Directional => "directional",
            Method::Qr => "qr",
            Method::Exterior => "exterior",
        }
    }
}

/// A Monte Carlo estimate in nats per step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct LyapEstimate<T> {
    pub value: T,
    pub stderr: T,
    pub n: usize,
    pub samples: usize,
    pub method: Method,
    pub seed: u64,
}

impl<T: Real> LyapEstimate<T> {
    fn from_samples(values: &[T], params: &McParams, method: Method) -> Result<Self> {
        let (value, stderr) = mean_stderr(values);
        if !value.is_finite() {
            return Err(Error::SingularFiber { det: 0.0, tol: 0.0 });
        }
        Ok(Self { value, stderr, n: params.n, samples: params.samples, method, seed: params.seed })
    }
}

/// Exponents in descending order with per-exponent standard errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SpectrumResult<T> {
    pub exponents: Vec<T>,
    pub stderr: Vec<T>,
    /// Number of distinct exponents at resolution `gap_tol`.
    pub kappa: usize,
    pub n: usize,
    pub samples: usize,
    pub method: Method,
    pub seed: u64,
}

impl<T: Real> SpectrumResult<T> {
    pub fn sum(&self) -> T {
        self.exponents.iter().copied().sum()
    }

    pub fn total_stderr(&self) -> T {
        self.stderr.iter().copied().sum()
    }

    pub fn with_gap_tol(mut self, gap_tol: T) -> Self {
        self.kappa = count_distinct(&self.exponents, gap_tol);
        self
    }
}

fn count_distinct<T: Real>(desc: &[T], gap_tol: T) -> usize {
    if desc.is_empty() {
        return 0;
    }
    1 + desc.windows(2).filter(|w| w[0] - w[1] > gap_tol).count()
}

fn check_inputs<T: Real>(sys: &CocycleSystem<T>, p: &ProbabilityVector<T>, params: &McParams) -> Result<()> {
    params.validate()?;
    p.check_len(sys.n_generators())
}

/// Reusable per-sample state: torus position and fiber buffers.
pub(crate) struct Walker<'a, T: Real> {
    pub sys: &'a CocycleSystem<T>,
    pub p: &'a ProbabilityVector<T>,
    pub t: Vec<T>,
    pub fiber: Matrix<T>,
    scratch: FiberScratch<T>,
}

impl<'a, T: Real> Walker<'a, T> {
    pub fn new(sys: &'a CocycleSystem<T>, p: &'a ProbabilityVector<T>, t: Vec<T>) -> Self {
        let d = sys.d();
        Self { sys, p, t, fiber: Matrix::zeros(d, d), scratch: FiberScratch::default() }
    }

    /// Starts at a uniform torus point drawn from `rng`.
    pub fn uniform<R: rand::Rng + ?Sized>(sys: &'a CocycleSystem<T>, p: &'a ProbabilityVector<T>, rng: &mut R) -> Self {
        Self::new(sys, p, uniform_torus(sys.m(), rng))
    }

    /// Draws a letter, evaluates its fiber at the current point into
    /// `self.fiber`, then translates the point. Returns the letter.
    #[inline]
    pub fn step<R: rand::Rng + ?Sized>(&mut self, rng: &mut R) -> usize {
        let i = self.p.sample(rng);
        self.step_letter(i);
        i
    }

    #[inline]
    pub fn step_letter(&mut self, i: usize) {
        self.sys.eval_into(i, &self.t, &mut self.fiber, &mut self.scratch);
        crate::algebra::TorusPoint::shift_slice(&mut self.t, self.sys.theta(i));
    }
}

/// `v <- A v / |A v|`, returns `log |A v|` (with `|v| = 1` on entry).
#[inline]
pub(crate) fn push_vector<T: Real>(a: &Matrix<T>, v: &mut [T], tmp: &mut [T]) -> T {
    a.mat_vec_into(v, tmp);
    let nv = norm2(tmp);
    for (x, &y) in v.iter_mut().zip(tmp.iter()) {
        *x = y / nv;
    }
    nv.ln()
}

fn sample_norm<T: Real, R: rand::Rng + ?Sized>(
    sys: &CocycleSystem<T>,
    p: &ProbabilityVector<T>,
    n: usize,
    rng: &mut R,
) -> Result<T> {
    let d = sys.d();
    let mut w = Walker::uniform(sys, p, rng);
    let mut prod = Matrix::identity(d);
    let mut tmp = Matrix::zeros(d, d);
    let mut log_scale = T::zero();
    for _ in 0..n {
        w.step(rng);
        w.fiber.matmul_into(&prod, &mut tmp);
        let s = tmp.max_abs();
        if !(s > T::zero()) || !s.is_finite() {
            return Err(Error::SingularFiber { det: 0.0, tol: 0.0 });
        }
        tmp.scale_mut(T::one() / s);
        std::mem::swap(&mut prod, &mut tmp);
        log_scale += s.ln();
    }
    Ok((log_scale + op_norm(&prod)?.ln()) / T::from_usize_lossy(n))
}

fn sample_growth<T: Real, R: rand::Rng + ?Sized>(
    sys: &CocycleSystem<T>,
    p: &ProbabilityVector<T>,
    v0: &[T],
    burn_in: usize,
    n: usize,
    rng: &mut R,
) -> Result<T> {
    let mut w = Walker::uniform(sys, p, rng);
    let mut v = v0.to_vec();
    let mut tmp = vec![T::zero(); sys.d()];
    for _ in 0..burn_in {
        w.step(rng);
        push_vector(&w.fiber, &mut v, &mut tmp);
    }
    let mut acc = T::zero();
    for _ in 0..n {
        w.step(rng);
        acc += push_vector(&w.fiber, &mut v, &mut tmp);
    }
    let out = acc / T::from_usize_lossy(n);
    if !out.is_finite() {
        return Err(Error::SingularFiber { det: 0.0, tol: 0.0 });
    }
    Ok(out)
}

/// Per-sample values of the top-exponent estimator, in sample order.
pub fn top_exponent_samples<T: Real>(
    sys: &CocycleSystem<T>,
    p: &ProbabilityVector<T>,
    params: &McParams,
) -> Result<Vec<T>> {
    check_inputs(sys, p, params)?;
    let McParams { n, samples, seed, burn_in } = *params;
    par_samples(samples, seed, |i, rng| {
        if burn_in == 0 {
            sample_norm(sys, p, n, rng)
        } else {
            let v0 = random_unit(sys.d(), &mut aux_substream(seed, i as u64));
            sample_growth(sys, p, &v0, burn_in, n, rng)
        }
    })
}

/// Top exponent: mean over samples of `(1/n) log ||A^n_x(t)||`, `(x, t) ~ p^n x Leb`.
pub fn top_exponent_mc<T: Real>(
    sys: &CocycleSystem<T>,
    p: &ProbabilityVector<T>,
    params: &McParams,
) -> Result<LyapEstimate<T>> {
    let values = top_exponent_samples(sys, p, params)?;
    let method = if params.burn_in == 0 { Method::NormMc } else { Method::BurnInMc };
    LyapEstimate::from_samples(&values, params, method)
}

/// `(1/n) E log |A^n_x(t) v|` for a fixed direction `v`.
pub fn directional_exponent<T: Real>(
    sys: &CocycleSystem<T>,
    p: &ProbabilityVector<T>,
    v: &ProjectivePoint<T>,
    params: &McParams,
) -> Result<LyapEstimate<T>> {
    let values = directional_samples(sys, p, v, params)?;
    LyapEstimate::from_samples(&values, params, Method::Directional)
}

pub fn directional_samples<T: Real>(
    sys: &CocycleSystem<T>,
    p: &ProbabilityVector<T>,
    v: &ProjectivePoint<T>,
    params: &McParams,
) -> Result<Vec<T>> {
    check_inputs(sys, p, params)?;
    if v.dim() != sys.d() {
        return Err(Error::Dimension(format!("direction has dimension {}, expected {}", v.dim(), sys.d())));
    }
    par_samples(params.samples, params.seed, |_, rng| {
        sample_growth(sys, p, v.as_slice(), params.burn_in, params.n, rng)
    })
}

fn qr_rank_tol<T: Real>() -> T {
    T::epsilon() * T::lit(64.0)
}

fn sample_qr<T: Real, R: rand::Rng + ?Sized>(
    sys: &CocycleSystem<T>,
    p: &ProbabilityVector<T>,
    params: &McParams,
    rng: &mut R,
) -> Result<Vec<T>> {
    let d = sys.d();
    let mut w = Walker::uniform(sys, p, rng);
    let mut q = Matrix::identity(d);
    let mut r = Matrix::zeros(d, d);
    let mut scratch = vec![T::zero(); d];
    let mut acc = vec![T::zero(); d];
    let tol = qr_rank_tol();
    for step in 0..params.burn_in + params.n {
        w.step(rng);
        w.fiber.matmul_into(&q, &mut r);
        qr_in_place(&mut r, &mut q, &mut scratch, tol)?;
        if step >= params.burn_in {
            for (a, k) in acc.iter_mut().zip(0..d) {
                *a += r[(k, k)].ln();
            }
        }
    }
    let nf = T::from_usize_lossy(params.n);
    Ok(acc.into_iter().map(|a| a / nf).collect())
}

fn spectrum_from_columns<T: Real>(cols: Vec<Vec<T>>, params: &McParams, method: Method) -> SpectrumResult<T> {
    let mut pairs: Vec<(T, T)> = cols.iter().map(|c| mean_stderr(c)).collect();
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite exponents"));
    let exponents: Vec<T> = pairs.iter().map(|p| p.0).collect();
    SpectrumResult {
        kappa: count_distinct(&exponents, T::lit(DEFAULT_GAP_TOL)),
        stderr: pairs.iter().map(|p| p.1).collect(),
        exponents,
        n: params.n,
        samples: params.samples,
        method,
        seed: params.seed,
    }
}

fn transpose_samples<T: Real>(rows: Vec<Vec<T>>, d: usize) -> Vec<Vec<T>> {
    (0..d).map(|k| rows.iter().map(|r| r[k]).collect()).collect()
}

/// Full spectrum by QR (Benettin) deflation: per sample, the logs of the
/// diagonal of `R` are accumulated along the orbit.
pub fn spectrum_qr<T: Real>(
    sys: &CocycleSystem<T>,
    p: &ProbabilityVector<T>,
    params: &McParams,
) -> Result<SpectrumResult<T>> {
    check_inputs(sys, p, params)?;
    let rows = par_samples(params.samples, params.seed, |_, rng| sample_qr(sys, p, params, rng))?;
    if rows.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::RankDeficient { index: 0, value: 0.0 });
    }
    Ok(spectrum_from_columns(transpose_samples(rows, sys.d()), params, Method::Qr))
}

/// Per-sample top exponents of every exterior power `k = 1..=d`.
///
/// Returned as `values[k-1][sample]`.
pub fn exterior_top_samples<T: Real>(
    sys: &CocycleSystem<T>,
    p: &ProbabilityVector<T>,
    params: &McParams,
    size_cap: usize,
) -> Result<Vec<Vec<T>>> {
    check_inputs(sys, p, params)?;
    let d = sys.d();
    (1..=d)
        .map(|k| {
            let size = crate::algebra::binomial(d, k);
            if size > size_cap as u128 {
                return Err(Error::CapExceeded { what: "compound dimension", size, cap: size_cap as u128 });
            }
            let ck = sys.compound(k)?;
            top_exponent_samples(&ck, p, params)
        })
        .collect()
}

/// Spectrum from exterior powers: `lambda_k = top(wedge^k) - top(wedge^{k-1})`.
///
/// All degrees use the same seed, so per-sample differences are paired.
pub fn spectrum_exterior<T: Real>(
    sys: &CocycleSystem<T>,
    p: &ProbabilityVector<T>,
    params: &McParams,
    size_cap: usize,
) -> Result<SpectrumResult<T>> {
    let tops = exterior_top_samples(sys, p, params, size_cap)?;
    let cols: Vec<Vec<T>> = (0..tops.len())
        .map(|k| {
            if k == 0 {
                tops[0].clone()
            } else {
                tops[k].iter().zip(&tops[k - 1]).map(|(&a, &b)| a - b).collect()
            }
        })
        .collect();
    Ok(spectrum_from_columns(cols, params, Method::Exterior))
}

/// `sum_i p_i * mean over a uniform Q^m grid of log|det A_i(t)|`.
pub fn det_average<T: Real>(sys: &CocycleSystem<T>, p: &ProbabilityVector<T>, q: usize) -> Result<T> {
    p.check_len(sys.n_generators())?;
    if q == 0 {
        return Err(Error::InvalidParameter("quadrature size must be at least 1".into()));
    }
    let grid = if sys.all_constant() { vec![vec![T::zero(); sys.m()]] } else { validation_grid(sys.m(), q) };
    let mut total = T::zero();
    for (i, &pi) in p.as_slice().iter().enumerate() {
        let mut acc = crate::scalar::CompensatedSum::new();
        for t in &grid {
            let l = log_abs_det(&sys.eval(i, t));
            if !l.is_finite() {
                return Err(Error::SingularFiber { det: 0.0, tol: 0.0 });
            }
            acc.add(l);
        }
        total += pi * acc.value() / T::from_usize_lossy(grid.len());
    }
    Ok(total)
}

/// One row of a continuity sweep.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SweepPoint<T> {
    pub p: Vec<T>,
    pub estimate: LyapEstimate<T>,
    /// Difference to the previous point, `None` for the first.
    pub diff: Option<T>,
}

/// Top exponent along a path of weight vectors, same seed at every point.
pub fn continuity_sweep<T: Real>(
    sys: &CocycleSystem<T>,
    path: &[ProbabilityVector<T>],
    params: &McParams,
) -> Result<Vec<SweepPoint<T>>> {
    if path.is_empty() {
        return Err(Error::InvalidParameter("empty sweep path".into()));
    }
    let mut out: Vec<SweepPoint<T>> = Vec::with_capacity(path.len());
    for p in path {
        let estimate = top_exponent_mc(sys, p, params)?;
        let diff = out.last().map(|prev| estimate.value - prev.estimate.value);
        out.push(SweepPoint { p: p.as_slice().to_vec(), estimate, diff });
    }
    Ok(out)
}

/// Paired central difference `(lambda(p + h delta) - lambda(p - h delta)) / 2h`
/// with common random numbers at both ends.
pub fn central_difference<T: Real>(
    sys: &CocycleSystem<T>,
    p: &ProbabilityVector<T>,
    delta: &[T],
    h: T,
    params: &McParams,
) -> Result<LyapEstimate<T>> {
    let shifted = |s: T| -> Result<ProbabilityVector<T>> {
        let v: Vec<T> = p.as_slice().iter().zip(delta).map(|(&a, &b)| a + s * b).collect();
        ProbabilityVector::new(&v)
    };
    let plus = top_exponent_samples(sys, &shifted(h)?, params)?;
    let minus = top_exponent_samples(sys, &shifted(-h)?, params)?;
    let two_h = T::lit(2.0) * h;
    let diffs: Vec<T> = plus.iter().zip(&minus).map(|(&a, &b)| (a - b) / two_h).collect();
    LyapEstimate::from_samples(&diffs, params, if params.burn_in == 0 { Method::NormMc } else { Method::BurnInMc })
}
