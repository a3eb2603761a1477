//! Projective contraction of the random cocycle and the constants of its
//! exponential decay.
//!
//! For a pair of directions `v1 != v2` the ratio
//! `psi_n = d(A^n v1, A^n v2) / d(v1, v2)` is computed in log form as
//! `log |wedge^2 A^n (v1 ^ v2)| - log |A^n v1| - log |A^n v2| - log |v1 ^ v2|`
//! for unit `v1`, `v2`,
//! with all three vectors renormalized every step. This stays accurate long
//! after `A^n v1` and `A^n v2` have become numerically parallel.
//!
//! `K_n(alpha)` is the supremum over pairs of `E[psi_n^alpha]`. The supremum
//! is replaced by a maximum over a deterministic pair grid (plus a local
//! refinement around the maximizers), so every reported value is a
//! statistical lower bound of the true one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::algebra::{norm2, svd, wedge2, CompoundMap, Matrix, ProjectivePoint};
use crate::cocycle::{validation_grid, CocycleSystem, ProbabilityVector, Word};
use crate::error::{Error, Result};
use crate::lyapunov::{push_vector, Walker};
use crate::sampling::{par_samples, random_unit};
use crate::scalar::{mean_stderr, Real};

pub const DEFAULT_PAIRS_2D: usize = 64;
pub const DEFAULT_PAIRS_HIGHER: usize = 256;
pub const DEFAULT_M_GRID: usize = 256;

/// Default grid size: 64 pairs for `d = 2`, 256 otherwise.
pub fn default_pair_count(d: usize) -> usize {
    if d <= 2 {
        DEFAULT_PAIRS_2D
    } else {
        DEFAULT_PAIRS_HIGHER
    }
}

/// Ordered pair of distinct directions.
pub type Pair<T> = (ProjectivePoint<T>, ProjectivePoint<T>);

/// Deterministic grid of direction pairs.
///
/// In the plane the pair angles follow a rank-1 lattice
/// `((i + 1/2)/G, frac((i + 1/2) g))` scaled to `[0, pi)^2` with `g` the
/// golden ratio; in higher dimension the directions come from a fixed-seed
/// Gaussian stream. Pairs closer than `1e-6` are skipped.
pub fn pair_grid<T: Real>(d: usize, size: usize) -> Vec<Pair<T>> {
    let min_dist = T::lit(1e-6);
    let mut out = Vec::with_capacity(size);
    if d == 2 {
        let g = (5.0_f64.sqrt() - 1.0) / 2.0;
        let mut i = 0usize;
        while out.len() < size && i < 4 * size + 8 {
            let u = (i as f64 + 0.5) / size as f64;
            let w = ((i as f64 + 0.5) * g).fract();
            let a = ProjectivePoint::from_angle(T::lit(std::f64::consts::PI * u));
            let b = ProjectivePoint::from_angle(T::lit(std::f64::consts::PI * w));
            if crate::algebra::proj_dist(&a, &b) > min_dist {
                out.push((a, b));
            }
            i += 1;
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0f_9a12);
        while out.len() < size {
            let a = ProjectivePoint::new(&random_unit::<T, _>(d, &mut rng)).expect("unit");
            let b = ProjectivePoint::new(&random_unit::<T, _>(d, &mut rng)).expect("unit");
            if crate::algebra::proj_dist(&a, &b) > min_dist {
                out.push((a, b));
            }
        }
    }
    out
}

/// Neighbors of a pair used for local refinement of the maximum.
fn pair_neighbors<T: Real>(pair: &Pair<T>, step: T) -> Vec<Pair<T>> {
    let (a, b) = pair;
    let d = a.dim();
    let mut out = Vec::new();
    let min_dist = T::lit(1e-6);
    let mut push = |x: Vec<T>, y: Vec<T>| {
        if let (Ok(x), Ok(y)) = (ProjectivePoint::new(&x), ProjectivePoint::new(&y)) {
            if crate::algebra::proj_dist(&x, &y) > min_dist {
                out.push((x, y));
            }
        }
    };
    for axis in 0..d {
        for s in [step, -step] {
            let mut x = a.as_slice().to_vec();
            x[axis] += s;
            push(x, b.as_slice().to_vec());
            let mut y = b.as_slice().to_vec();
            y[axis] += s;
            push(a.as_slice().to_vec(), y);
        }
    }
    out
}

/// Incremental state for `log psi` along one orbit and one pair.
struct PairState<T> {
    v1: Vec<T>,
    v2: Vec<T>,
    w: Vec<T>,
    log_v1: T,
    log_v2: T,
    log_w: T,
}

impl<T: Real> PairState<T> {
    fn new(a: &[T], b: &[T]) -> Self {
        let w = wedge2(a, b);
        let nw = norm2(&w);
        Self {
            v1: a.to_vec(),
            v2: b.to_vec(),
            w: w.iter().map(|&x| x / nw).collect(),
            log_v1: T::zero(),
            log_v2: T::zero(),
            log_w: T::zero(),
        }
    }

    #[inline]
    fn push(&mut self, a: &Matrix<T>, a2: &Matrix<T>, tmp: &mut [T], tmp2: &mut [T]) -> T {
        self.log_v1 += push_vector(a, &mut self.v1, tmp);
        self.log_v2 += push_vector(a, &mut self.v2, tmp);
        self.log_w += push_vector(a2, &mut self.w, tmp2);
        self.log_w - self.log_v1 - self.log_v2
    }
}

/// Second exterior power of a fiber, scalar `det` when `d = 2`.
struct Wedge2 {
    map: Option<CompoundMap>,
}

impl Wedge2 {
    fn new(d: usize) -> Result<Self> {
        Ok(Self { map: if d >= 2 { Some(CompoundMap::new(d, 2)?) } else { None } })
    }

    fn apply<T: Real>(&self, a: &Matrix<T>, out: &mut Matrix<T>) {
        if let Some(m) = &self.map {
            m.apply_into(a, out);
        }
    }
}

/// `log psi_n` for an explicit word and base point.
pub fn log_psi_n<T: Real>(
    sys: &CocycleSystem<T>,
    w: &Word,
    t: &[T],
    v1: &ProjectivePoint<T>,
    v2: &ProjectivePoint<T>,
) -> Result<T> {
    let d = sys.d();
    if d < 2 {
        return Err(Error::Dimension("projective contraction needs d >= 2".into()));
    }
    if crate::algebra::proj_dist(v1, v2) <= T::lit(1e-10) {
        return Err(Error::InvalidPoint("degenerate pair: directions coincide".into()));
    }
    if t.len() != sys.m() || v1.dim() != d || v2.dim() != d {
        return Err(Error::Dimension("pair or base point has the wrong dimension".into()));
    }
    let p = ProbabilityVector::uniform(sys.n_generators());
    let mut walker = Walker::new(sys, &p, t.to_vec());
    let wedge = Wedge2::new(d)?;
    let d2 = d * (d - 1) / 2;
    let mut a2 = Matrix::zeros(d2, d2);
    let (mut tmp, mut tmp2) = (vec![T::zero(); d], vec![T::zero(); d2]);
    let mut state = PairState::new(v1.as_slice(), v2.as_slice());
    let mut out = T::zero();
    for &i in w.letters() {
        if i >= sys.n_generators() {
            return Err(Error::InvalidParameter(format!("letter {i} out of range")));
        }
        walker.step_letter(i);
        wedge.apply(&walker.fiber, &mut a2);
        out = state.push(&walker.fiber, &a2, &mut tmp, &mut tmp2);
    }
    Ok(out)
}

/// `psi_n = d(A^n v1, A^n v2) / d(v1, v2)`.
pub fn psi_n<T: Real>(
    sys: &CocycleSystem<T>,
    w: &Word,
    t: &[T],
    v1: &ProjectivePoint<T>,
    v2: &ProjectivePoint<T>,
) -> Result<T> {
    Ok(log_psi_n(sys, w, t, v1, v2)?.exp())
}

/// Maximum over pairs of a per-pair statistic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct PairMax<T> {
    pub value: T,
    pub stderr: T,
    pub pair_index: usize,
}

/// `log psi_n` for every pair, sample and `n <= n_max`, with common random
/// numbers: sample `s` uses the same torus point and word for every pair.
#[derive(Clone, Debug)]
pub struct ContractionSampler<T> {
    n_max: usize,
    samples: usize,
    seed: u64,
    pairs: Vec<Pair<T>>,
    /// `log_psi[pair][sample * n_max + (n - 1)]`.
    log_psi: Vec<Vec<T>>,
}

impl<T: Real> ContractionSampler<T> {
    pub fn new(
        sys: &CocycleSystem<T>,
        p: &ProbabilityVector<T>,
        pairs: Vec<Pair<T>>,
        n_max: usize,
        samples: usize,
        seed: u64,
    ) -> Result<Self> {
        p.check_len(sys.n_generators())?;
        if sys.d() < 2 {
            return Err(Error::Dimension("projective contraction needs d >= 2".into()));
        }
        if n_max == 0 || samples == 0 {
            return Err(Error::InvalidParameter("n_max and samples must be at least 1".into()));
        }
        let mut s = Self { n_max, samples, seed, pairs: Vec::new(), log_psi: Vec::new() };
        s.add_pairs(sys, p, pairs)?;
        Ok(s)
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn pairs(&self) -> &[Pair<T>] {
        &self.pairs
    }

    /// Evaluates additional pairs on the same sample paths.
    pub fn add_pairs(&mut self, sys: &CocycleSystem<T>, p: &ProbabilityVector<T>, pairs: Vec<Pair<T>>) -> Result<()> {
        if pairs.is_empty() {
            return Ok(());
        }
        let d = sys.d();
        if pairs.iter().any(|(a, b)| a.dim() != d || b.dim() != d) {
            return Err(Error::Dimension("pair dimension differs from the system".into()));
        }
        let n_max = self.n_max;
        let np = pairs.len();
        let wedge = Wedge2::new(d)?;
        let d2 = d * (d - 1) / 2;
        let rows = par_samples(self.samples, self.seed, |_, rng| {
            let mut walker = Walker::uniform(sys, p, rng);
            let mut states: Vec<PairState<T>> =
                pairs.iter().map(|(a, b)| PairState::new(a.as_slice(), b.as_slice())).collect();
            let mut a2 = Matrix::zeros(d2, d2);
            let (mut tmp, mut tmp2) = (vec![T::zero(); d], vec![T::zero(); d2]);
            let mut row = vec![T::zero(); np * n_max];
            for n in 0..n_max {
                walker.step(rng);
                wedge.apply(&walker.fiber, &mut a2);
                for (k, st) in states.iter_mut().enumerate() {
                    let l = st.push(&walker.fiber, &a2, &mut tmp, &mut tmp2);
                    if !l.is_finite() {
                        return Err(Error::SingularFiber { det: 0.0, tol: 0.0 });
                    }
                    row[k * n_max + n] = l;
                }
            }
            Ok(row)
        })?;
        for k in 0..np {
            let mut col = Vec::with_capacity(self.samples * n_max);
            for row in &rows {
                col.extend_from_slice(&row[k * n_max..(k + 1) * n_max]);
            }
            self.log_psi.push(col);
        }
        self.pairs.extend(pairs);
        Ok(())
    }

    fn column(&self, pair: usize, n: usize) -> impl Iterator<Item = T> + '_ {
        let n_max = self.n_max;
        self.log_psi[pair].iter().skip(n - 1).step_by(n_max).copied()
    }

    fn check_n(&self, n: usize) -> Result<()> {
        if n > self.n_max {
            return Err(Error::InvalidParameter(format!("n = {n} exceeds sampled n_max = {}", self.n_max)));
        }
        Ok(())
    }

    fn max_over_pairs(&self, stat: impl Fn(usize) -> (T, T)) -> PairMax<T> {
        let mut best = PairMax { value: T::neg_infinity(), stderr: T::zero(), pair_index: 0 };
        for k in 0..self.pairs.len() {
            let (v, se) = stat(k);
            if v > best.value {
                best = PairMax { value: v, stderr: se, pair_index: k };
            }
        }
        best
    }

    /// `max over pairs of E log psi_n`; zero at `n = 0`.
    pub fn drift(&self, n: usize) -> Result<PairMax<T>> {
        self.check_n(n)?;
        if n == 0 {
            return Ok(PairMax { value: T::zero(), stderr: T::zero(), pair_index: 0 });
        }
        Ok(self.max_over_pairs(|k| mean_stderr(&self.column(k, n).collect::<Vec<_>>())))
    }

    /// `max over pairs of E psi_n^alpha`; exactly one at `n = 0`.
    pub fn kn(&self, n: usize, alpha: T) -> Result<PairMax<T>> {
        self.check_n(n)?;
        if !(alpha > T::zero() && alpha <= T::one()) {
            return Err(Error::InvalidParameter(format!("alpha = {alpha} is outside (0, 1]")));
        }
        if n == 0 {
            return Ok(PairMax { value: T::one(), stderr: T::zero(), pair_index: 0 });
        }
        // expm1 keeps the tiny departures from 1 at small alpha
        Ok(self.max_over_pairs(|k| {
            let vals: Vec<T> = self.column(k, n).map(|l| (alpha * l).exp_m1()).collect();
            let (m, se) = mean_stderr(&vals);
            (T::one() + m, se)
        }))
    }

    /// Largest `|log psi_n|` over all pairs and samples.
    pub fn max_abs_log_psi(&self, n: usize) -> Result<T> {
        self.check_n(n)?;
        if n == 0 {
            return Ok(T::zero());
        }
        Ok((0..self.pairs.len()).flat_map(|k| self.column(k, n)).fold(T::zero(), |m, x| m.max(x.abs())))
    }

    /// Adds neighbors of the drift-maximizing pair for every `n <= n_max`.
    pub fn refine(&mut self, sys: &CocycleSystem<T>, p: &ProbabilityVector<T>) -> Result<()> {
        let step = T::lit(std::f64::consts::PI) / T::from_usize_lossy(self.pairs.len()).sqrt() / T::lit(4.0);
        let mut best: Vec<usize> = (1..=self.n_max).map(|n| self.drift(n).map(|m| m.pair_index)).collect::<Result<_>>()?;
        best.sort_unstable();
        best.dedup();
        let extra: Vec<Pair<T>> = best.iter().flat_map(|&k| pair_neighbors(&self.pairs[k], step)).collect();
        self.add_pairs(sys, p, extra)
    }
}

/// `K_n(alpha)` estimated as a maximum over a refined pair grid.
pub fn estimate_kn<T: Real>(
    sys: &CocycleSystem<T>,
    p: &ProbabilityVector<T>,
    n: usize,
    alpha: T,
    pair_grid_size: usize,
    mc_samples: usize,
    seed: u64,
) -> Result<T> {
    if n == 0 {
        return Ok(T::one());
    }
    let mut s = ContractionSampler::new(sys, p, pair_grid(sys.d(), pair_grid_size), n, mc_samples, seed)?;
    s.refine(sys, p)?;
    Ok(s.kn(n, alpha)?.value)
}

/// `max over pairs of E log psi_n` on the default refined pair grid.
pub fn drift_integral<T: Real>(
    sys: &CocycleSystem<T>,
    p: &ProbabilityVector<T>,
    n: usize,
    mc_samples: usize,
    seed: u64,
) -> Result<T> {
    if n == 0 {
        return Ok(T::zero());
    }
    let mut s = ContractionSampler::new(sys, p, pair_grid(sys.d(), default_pair_count(sys.d())), n, mc_samples, seed)?;
    s.refine(sys, p)?;
    Ok(s.drift(n)?.value)
}

/// `M = max_i max_t kappa(A_i(t))^2` over a uniform grid with `per_dim` points
/// per torus dimension; bounds the one-step projective distortion.
pub fn lipschitz_bound_m<T: Real>(sys: &CocycleSystem<T>, per_dim: usize) -> Result<T> {
    let grid = if sys.all_constant() { vec![vec![T::zero(); sys.m()]] } else { validation_grid(sys.m(), per_dim.max(1)) };
    let mut m = T::one();
    for i in 0..sys.n_generators() {
        for t in &grid {
            let k = svd(&sys.eval(i, t))?.condition();
            if !k.is_finite() {
                return Err(Error::SingularFiber { det: 0.0, tol: 0.0 });
            }
            m = m.max(k * k);
        }
    }
    Ok(m)
}

/// `alpha_0 = 2 / (n0^2 (log M)^2 M^n0)`, defined for `M > 1`.
pub fn alpha0_formula<T: Real>(n0: usize, m: T) -> Option<T> {
    let lm = m.ln();
    if !(lm > T::zero()) {
        return None;
    }
    let n = T::from_usize_lossy(n0);
    let v = T::lit(2.0) / (n * n * lm * lm * m.powi(n0 as i32));
    (v > T::zero()).then_some(v)
}

/// Search and sampling settings for [`build_certificate`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateParams {
    pub n_max: usize,
    /// Pair grid size; `None` selects the dimension default.
    pub pair_grid: Option<usize>,
    pub samples: usize,
    pub seed: u64,
    pub refine: bool,
    pub m_grid: usize,
}

impl CertificateParams {
    pub fn new(seed: u64) -> Self {
        Self { n_max: 20, pair_grid: None, samples: 2000, seed, refine: true, m_grid: DEFAULT_M_GRID }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct KnRow<T> {
    pub n: usize,
    pub alpha: T,
    pub k: T,
    pub stderr: T,
    /// `C0 exp(-zeta n)`.
    pub envelope: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct DriftRow<T> {
    pub n: usize,
    pub drift: T,
    pub stderr: T,
}

/// Constants of the exponential contraction `K_n(alpha) <= C0 exp(-zeta n)`.
///
/// Built from Monte Carlo lower bounds of `K_n`, so this is numerical
/// evidence rather than a proof.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ContractionCertificate<T> {
    #[serde(rename = "M")]
    pub m_bound: T,
    pub n0: usize,
    pub alpha0: T,
    /// Exponent used for `K_n`: `alpha0 / 2`.
    pub alpha: T,
    pub zeta: T,
    #[serde(rename = "C0")]
    pub c0: T,
    #[serde(rename = "Kn_table")]
    pub kn_table: Vec<KnRow<T>>,
    pub drift_table: Vec<DriftRow<T>>,
    pub samples: usize,
    pub pairs: usize,
    pub seed: u64,
}

impl<T: Real> ContractionCertificate<T> {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.zeta > T::zero()) || !(self.c0 >= T::one()) || self.n0 == 0 || !(self.m_bound >= T::one()) {
            return Err(Error::CertificateMissing("certificate constants out of range".into()));
        }
        Ok(())
    }

    /// Short content hash used to tie downstream results to this certificate.
    pub fn id(&self) -> String {
        let digest = Sha256::digest(serde_json::to_string(self).expect("serializes").as_bytes());
        hex::encode(&digest[..8])
    }

    pub fn envelope(&self, n: usize) -> T {
        self.c0 * (-self.zeta * T::from_usize_lossy(n)).exp()
    }
}

/// Finds the smallest `n0 <= n_max` with drift `< -1`, sets `alpha0` by the
/// closed formula, checks `K_{n0}(alpha0 / 2) < 1` and derives `zeta` and
/// `C0`. The `K_n` table covers `n <= 3 n0`.
pub fn build_certificate<T: Real>(
    sys: &CocycleSystem<T>,
    p: &ProbabilityVector<T>,
    params: &CertificateParams,
) -> Result<ContractionCertificate<T>> {
    if sys.d() < 2 {
        return Err(Error::Dimension("projective contraction needs d >= 2".into()));
    }
    let m_bound = lipschitz_bound_m(sys, params.m_grid)?;
    let grid_size = params.pair_grid.unwrap_or_else(|| default_pair_count(sys.d()));
    let sample = |n_max: usize| -> Result<ContractionSampler<T>> {
        let mut s = ContractionSampler::new(sys, p, pair_grid(sys.d(), grid_size), n_max, params.samples, params.seed)?;
        if params.refine {
            s.refine(sys, p)?;
        }
        Ok(s)
    };
    let mut sampler = sample(params.n_max)?;
    let mut drift_table = Vec::new();
    let mut n0 = None;
    for n in 1..=params.n_max {
        let dr = sampler.drift(n)?;
        drift_table.push(DriftRow { n, drift: dr.value, stderr: dr.stderr });
        if dr.value < -T::one() {
            n0 = Some(n);
            break;
        }
    }
    let last_drift = drift_table.last().map_or(0.0, |r| r.drift.to_f64_lossy());
    let n0 = n0.ok_or(Error::NoContractionFound { n_max: params.n_max, last_drift })?;
    let alpha0 = alpha0_formula(n0, m_bound).ok_or(Error::NoContractionFound { n_max: params.n_max, last_drift })?;
    let alpha = alpha0 / T::lit(2.0);
    if 3 * n0 > sampler.n_max() {
        sampler = sample(3 * n0)?;
    }
    let k_n0 = sampler.kn(n0, alpha)?;
    if !(k_n0.value < T::one()) {
        return Err(Error::NoContractionFound { n_max: params.n_max, last_drift });
    }
    let zeta = -(k_n0.value.ln()) / T::from_usize_lossy(n0);
    let mut c0 = T::one();
    for j in 1..n0 {
        c0 = c0.max(sampler.kn(j, alpha)?.value);
    }
    let mut kn_table = Vec::with_capacity(3 * n0 + 1);
    for n in 0..=3 * n0 {
        let k = sampler.kn(n, alpha)?;
        let envelope = c0 * (-zeta * T::from_usize_lossy(n)).exp();
        kn_table.push(KnRow { n, alpha, k: k.value, stderr: k.stderr, envelope });
    }
    Ok(ContractionCertificate {
        m_bound,
        n0,
        alpha0,
        alpha,
        zeta,
        c0,
        kn_table,
        drift_table,
        samples: params.samples,
        pairs: sampler.pairs().len(),
        seed: params.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{proj_dist, TorusPoint};
    use crate::cocycle::{fixture_default, Fiber, GeneratorRep};
    use proptest::prelude::*;

    fn single(m: Matrix<f64>) -> CocycleSystem<f64> {
        CocycleSystem::from_generators(vec![GeneratorRep::new(TorusPoint::new(&[0.3]).unwrap(), Fiber::constant(m))])
            .unwrap()
    }

    #[test]
    fn psi_of_diag_matches_direct_formula() {
        let a = Matrix::from_diag(&[2.0, 0.5]);
        let sys = single(a.clone());
        let e1 = ProjectivePoint::axis(2, 0);
        let diag = ProjectivePoint::new(&[1.0, 1.0]).unwrap();
        let w = Word::new(vec![0], 1).unwrap();
        let psi = psi_n(&sys, &w, &[0.0], &e1, &diag).unwrap();
        let u = ProjectivePoint::new(&a.mat_vec(e1.as_slice())).unwrap();
        let v = ProjectivePoint::new(&a.mat_vec(diag.as_slice())).unwrap();
        let direct = proj_dist(&u, &v) / proj_dist(&e1, &diag);
        assert!((psi - direct).abs() < 1e-14);
        // d(e1, (2, 1/2)) = (1/2)/sqrt(4.25), d(e1, 45 deg) = 1/sqrt(2)
        assert!((psi - 0.5 / 4.25_f64.sqrt() * 2.0_f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn psi_is_one_for_isometries() {
        let (c, s) = (0.7_f64.cos(), 0.7_f64.sin());
        let sys = single(Matrix::from_rows(&[vec![c, -s], vec![s, c]]).unwrap());
        let w = Word::new(vec![0; 25], 1).unwrap();
        let a = ProjectivePoint::from_angle(0.1);
        let b = ProjectivePoint::from_angle(1.3);
        assert!((psi_n(&sys, &w, &[0.0], &a, &b).unwrap() - 1.0).abs() < 1e-12);
        assert!(psi_n(&sys, &w, &[0.0], &a, &a).is_err());
    }

    #[test]
    fn long_orbit_log_psi_is_additive_for_constants() {
        // for a constant diagonal matrix and e1 vs a generic direction, log psi_n ~ -n log 4
        let sys = single(Matrix::from_diag(&[2.0, 0.5]));
        let w = Word::new(vec![0; 200], 1).unwrap();
        let a = ProjectivePoint::axis(2, 0);
        let b = ProjectivePoint::from_angle(1.0);
        let l = log_psi_n(&sys, &w, &[0.0], &a, &b).unwrap();
        assert!((l / 200.0 + 4.0_f64.ln()).abs() < 0.01);
    }

    #[test]
    fn identity_kn_and_drift() {
        let f = fixture_default::<f64>("identity").unwrap();
        let s = ContractionSampler::new(&f.system, &f.p, pair_grid(2, 16), 4, 10, 0).unwrap();
        for n in 0..=4 {
            assert!((s.kn(n, 0.5).unwrap().value - 1.0).abs() < 1e-12);
            assert!(s.drift(n).unwrap().value.abs() < 1e-12);
        }
        assert_eq!(lipschitz_bound_m(&f.system, 8).unwrap(), 1.0);
        assert!(matches!(
            build_certificate(&f.system, &f.p, &CertificateParams { n_max: 3, samples: 8, ..CertificateParams::new(1) }),
            Err(Error::NoContractionFound { .. })
        ));
    }

    #[test]
    fn diag_m_bound_and_one_step_range() {
        let sys = single(Matrix::from_diag(&[2.0, 0.5]));
        let m = lipschitz_bound_m(&sys, 4).unwrap();
        assert!((m - 16.0).abs() < 1e-12);
        let w = Word::new(vec![0], 1).unwrap();
        for (a, b) in pair_grid::<f64>(2, 64) {
            let psi = psi_n(&sys, &w, &[0.0], &a, &b).unwrap();
            assert!(psi >= 1.0 / 16.0 - 1e-12 && psi <= 16.0 + 1e-12);
        }
    }

    #[test]
    fn rotation_band_has_zero_drift() {
        let f = fixture_default::<f64>("rotation-band").unwrap();
        let s = ContractionSampler::new(&f.system, &f.p, pair_grid(2, 16), 5, 20, 3).unwrap();
        for n in 1..=5 {
            assert!(s.drift(n).unwrap().value.abs() < 1e-12);
        }
    }

    #[test]
    fn alpha_formula() {
        assert_eq!(alpha0_formula(1, 1.0_f64), None);
        let a = alpha0_formula(2, 16.0_f64).unwrap();
        assert!((a - 2.0 / (4.0 * 16.0_f64.ln().powi(2) * 256.0)).abs() < 1e-18);
    }

    #[test]
    fn pair_grid_is_deterministic_and_nondegenerate() {
        for d in [2, 3] {
            let g1 = pair_grid::<f64>(d, 40);
            let g2 = pair_grid::<f64>(d, 40);
            assert_eq!(g1.len(), 40);
            assert_eq!(g1, g2);
            assert!(g1.iter().all(|(a, b)| proj_dist(a, b) > 1e-10));
        }
    }

    proptest! {
        #[test]
        fn exp_second_order_bound(t in -20.0_f64..20.0) {
            prop_assert!(t.exp() <= 1.0 + t + 0.5 * t * t * t.abs().exp() * (1.0 + 1e-12));
        }
    }
}
