//! Evaluation of `Lambda_n(z, v) = sum_j z_j int T_z^n phi_j(t, v) dt`.
//!
//! `Lambda_n` is assembled as a telescoping sum
//! `P_L(z) + [Lambda_R - P_L](z) + [Lambda_n - Lambda_R](z)` with `L < R < n`.
//! `P_L` is the exact polynomial for words of `L + 1` letters (enumeration
//! plus a uniform `t` grid). Each bracket is an importance-sampled remainder
//! `sum_w z^w [phi(step m + 1 from v at time 0) - phi(step m + 1 from v at time m - l)]`:
//! because `sum z = 1`, the leading letters of the second term sum out, so it
//! reproduces the shorter quantity exactly in expectation. The remainders are
//! small once the cocycle has forgotten its initial direction, which keeps
//! the weights `prod (z_i / p_i)^{c_i}` from dominating the variance. The
//! middle bracket uses many short paths, the last few long ones.
//!
//! All samples share one set of words, so every estimate is an explicit
//! holomorphic function of `z` and each evaluation point costs
//! `O(samples * N)`.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::algebra::binomial;
use crate::cocycle::{CocycleSystem, ProbabilityVector};
use crate::contraction::ContractionCertificate;
use crate::error::{Error, Result};
use crate::lyapunov::{push_vector, Walker};
use crate::sampling::{par_samples, tagged_seed};
use crate::scalar::Real;

use super::transfer::{complex_mean, lambda_polys, lip_bound_phi, Polynomial};
use super::{ComplexWeights, DomainGamma};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyticParams {
    /// Target for the certified tail bound; selects `n`.
    pub tol: f64,
    /// Fixed `n`; bypasses the tolerance search and the certificate.
    pub n: Option<usize>,
    /// Also evaluate `Lambda_{n+1}, ..., Lambda_{n+extra}`.
    pub extra_checkpoints: usize,
    pub samples: usize,
    pub seed: u64,
    /// Exactly enumerated word length `L`.
    pub window: usize,
    /// Restart distance `R` of the long paths.
    pub restart: usize,
    /// Paths for the `Lambda_R - P_L` bracket.
    pub short_samples: usize,
    pub quad_per_dim: usize,
    /// Cap on `Q * N^(L+1)` for the exact part.
    pub enum_cap: u128,
    pub n_cap: usize,
    /// Initial direction; the first axis when absent.
    pub v: Option<Vec<f64>>,
    pub lip_v_points: usize,
    pub lip_t_per_dim: usize,
}

impl Default for AnalyticParams {
    fn default() -> Self {
        Self {
            tol: 1e-2,
            n: None,
            extra_checkpoints: 0,
            samples: 256,
            seed: 0,
            window: 10,
            restart: 40,
            short_samples: 8192,
            quad_per_dim: 64,
            enum_cap: 1 << 22,
            n_cap: 2_000_000,
            v: None,
            lip_v_points: 64,
            lip_t_per_dim: 32,
        }
    }
}

/// One value of the extension with its error budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct AnalyticEval<T> {
    pub z: ComplexWeights<T>,
    pub value: Complex<T>,
    pub stderr: T,
    /// Certified bound on `|Lambda_n - lim|`; `None` when uncertified.
    pub tail_bound: Option<T>,
    /// `|P_L(full grid) - P_L(half grid)|`.
    pub quad_error: T,
    pub n: usize,
    pub gamma: T,
    pub certificate_id: Option<String>,
}

impl<T: Real> AnalyticEval<T> {
    /// `tail + 3 stderr + quadrature`; infinite when uncertified.
    pub fn budget(&self) -> T {
        self.tail_bound.unwrap_or_else(T::infinity) + T::lit(3.0) * self.stderr + self.quad_error
    }

    /// Statistical part of the budget only.
    pub fn noise(&self) -> T {
        T::lit(3.0) * self.stderr + self.quad_error
    }
}

/// Residuals and letter counts of the sampled remainder.
#[derive(Clone, Debug)]
pub struct ImportanceBatch<T> {
    n_gen: usize,
    checkpoints: Vec<usize>,
    samples: usize,
    /// `counts[(s * checkpoints + c) * n_gen + i]`: letters in the first `n_c + 1` steps.
    counts: Vec<u32>,
    residual: Vec<T>,
    log_ratio_p: Vec<T>,
}

impl<T: Real> ImportanceBatch<T> {
    /// Samples `samples` paths of length `max(checkpoints) + 1` from `p`,
    /// starting at uniform torus points.
    pub fn run(
        sys: &CocycleSystem<T>,
        p: &ProbabilityVector<T>,
        v: &[T],
        window: usize,
        checkpoints: &[usize],
        samples: usize,
        seed: u64,
    ) -> Result<Self> {
        p.check_len(sys.n_generators())?;
        let n_gen = sys.n_generators();
        let d = sys.d();
        let mut cps = checkpoints.to_vec();
        cps.sort_unstable();
        cps.dedup();
        if cps.iter().any(|&c| c < window) {
            return Err(Error::InvalidParameter("checkpoints must be at least the window".into()));
        }
        let last = cps.last().copied().unwrap_or(0);
        let nc = cps.len();
        let rows = par_samples(samples, seed, |_, rng| {
            let mut walker = Walker::uniform(sys, p, rng);
            let mut u = v.to_vec();
            let mut tmp = vec![T::zero(); d];
            let mut counts = vec![0u32; n_gen];
            let mut out_counts = Vec::with_capacity(nc * n_gen);
            let mut out_res = Vec::with_capacity(nc);
            // active restarted vectors, in checkpoint order
            let mut aux: Vec<(usize, Vec<T>)> = Vec::new();
            let mut next_start = 0;
            let mut next_cp = 0;
            for k in 0..=last {
                while next_start < nc && cps[next_start] - window == k {
                    aux.push((cps[next_start], v.to_vec()));
                    next_start += 1;
                }
                let i = walker.step(rng);
                counts[i] += 1;
                while next_cp < nc && cps[next_cp] == k {
                    let (c, mut a) = aux.remove(0);
                    debug_assert_eq!(c, k);
                    let g_main = {
                        walker.fiber.mat_vec_into(&u, &mut tmp);
                        crate::algebra::norm2(&tmp).ln()
                    };
                    let g_aux = push_vector(&walker.fiber, &mut a, &mut tmp);
                    let r = g_main - g_aux;
                    if !r.is_finite() {
                        return Err(Error::SingularFiber { det: 0.0, tol: 0.0 });
                    }
                    out_counts.extend_from_slice(&counts);
                    out_res.push(r);
                    next_cp += 1;
                }
                if k < last {
                    push_vector(&walker.fiber, &mut u, &mut tmp);
                    for (_, a) in aux.iter_mut() {
                        push_vector(&walker.fiber, a, &mut tmp);
                    }
                }
            }
            Ok((out_counts, out_res))
        })?;
        let mut counts = Vec::with_capacity(samples * nc * n_gen);
        let mut residual = Vec::with_capacity(samples * nc);
        for (c, r) in rows {
            counts.extend(c);
            residual.extend(r);
        }
        Ok(Self {
            n_gen,
            checkpoints: cps,
            samples,
            counts,
            residual,
            log_ratio_p: p.as_slice().iter().map(|&x| x.ln()).collect(),
        })
    }

    pub fn checkpoints(&self) -> &[usize] {
        &self.checkpoints
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    /// Sampled remainders at checkpoint index `c`, one per sample.
    pub fn residuals(&self, c: usize) -> Vec<T> {
        let nc = self.checkpoints.len();
        (0..self.samples).map(|s| self.residual[s * nc + c]).collect()
    }

    /// `W_s(z) = prod_i (z_i / p_i)^{c_i}` for sample `s` at checkpoint `c`.
    fn weight(&self, s: usize, c: usize, z: &[Complex<T>]) -> Complex<T> {
        let base = (s * self.checkpoints.len() + c) * self.n_gen;
        let mut w = Complex::new(T::one(), T::zero());
        for i in 0..self.n_gen {
            let cnt = self.counts[base + i];
            if cnt > 0 {
                let ratio = z[i] * (-self.log_ratio_p[i]).exp();
                w = w * ratio.powu(cnt);
            }
        }
        w
    }

    /// Per-sample values of `sum_m a_m W_s(z_m) r_s`.
    fn functional_samples(&self, c: usize, terms: &[(Complex<T>, &[Complex<T>])]) -> Vec<Complex<T>> {
        let nc = self.checkpoints.len();
        (0..self.samples)
            .map(|s| {
                let r = self.residual[s * nc + c];
                terms.iter().fold(Complex::new(T::zero(), T::zero()), |acc, (a, z)| acc + *a * self.weight(s, c, z) * r)
            })
            .collect()
    }
}

/// Everything needed to evaluate `Lambda_n` at many `z` with shared samples.
#[derive(Clone, Debug)]
pub struct AnalyticContext<T: Real> {
    domain: DomainGamma<T>,
    d: usize,
    n_gen: usize,
    n: usize,
    window: usize,
    checkpoints: Vec<usize>,
    polys: Vec<Polynomial<T>>,
    polys_half: Vec<Polynomial<T>>,
    restart: usize,
    short: Option<ImportanceBatch<T>>,
    long: Option<ImportanceBatch<T>>,
    cert: Option<(T, T, String)>,
    lip: T,
}

impl<T: Real> AnalyticContext<T> {
    /// Chooses `n` (fixed, or the smallest with certified tail at most
    /// `tol` uniformly on the domain), enumerates the exact part and draws
    /// the remainder samples.
    pub fn new(
        sys: &CocycleSystem<T>,
        domain: DomainGamma<T>,
        cert: Option<&ContractionCertificate<T>>,
        params: &AnalyticParams,
    ) -> Result<Self> {
        let p = domain.p().clone();
        p.check_len(sys.n_generators())?;
        if let Some(c) = cert {
            domain.check_certificate(c)?;
        }
        let d = sys.d();
        let n_gen = sys.n_generators();
        let v: Vec<T> = match &params.v {
            Some(v) if v.len() == d => {
                let v: Vec<T> = v.iter().map(|&x| T::lit(x)).collect();
                let nv = crate::algebra::norm2(&v);
                if !(nv > T::zero()) || !nv.is_finite() {
                    return Err(Error::InvalidPoint("zero or non-finite direction".into()));
                }
                v.iter().map(|&x| x / nv).collect()
            }
            Some(_) => return Err(Error::Dimension("direction length differs from d".into())),
            None => {
                let mut e = vec![T::zero(); d];
                e[0] = T::one();
                e
            }
        };
        let lip = if d == 1 || cert.is_none() { T::zero() } else { lip_bound_phi(sys, params.lip_v_points, params.lip_t_per_dim)? };
        let certd = cert.map(|c| (c.c0, c.zeta, c.id()));
        let mut ctx = Self {
            domain,
            d,
            n_gen,
            n: 0,
            window: 0,
            checkpoints: Vec::new(),
            polys: Vec::new(),
            polys_half: Vec::new(),
            restart: 0,
            short: None,
            long: None,
            cert: certd,
            lip,
        };
        let n = match (params.n, &ctx.cert) {
            (Some(n), _) => n,
            (None, _) if d == 1 => 0,
            (None, Some(_)) => ctx.n_for_tolerance(T::lit(params.tol), params.n_cap)?,
            (None, None) => return Err(Error::CertificateMissing("no certificate and no fixed n".into())),
        };
        if n > params.n_cap {
            return Err(Error::ToleranceUnreachable { tol: params.tol, needed: n as u128, cap: params.n_cap });
        }
        let q = if sys.all_constant() { 1u128 } else { (params.quad_per_dim as u128).saturating_pow(sys.m() as u32) };
        let mut window = params.window.min(n);
        while window > 0 && q.saturating_mul((n_gen as u128).saturating_pow(window as u32 + 1)) > params.enum_cap {
            window -= 1;
        }
        let top = n + params.extra_checkpoints;
        let size = q.saturating_mul((n_gen as u128).saturating_pow(window as u32 + 1));
        if size > params.enum_cap {
            return Err(Error::CapExceeded { what: "exact enumeration size", size, cap: params.enum_cap });
        }
        let (polys, polys_half) = lambda_polys(sys, &v, window, params.quad_per_dim)?;
        let restart = params.restart.max(window);
        let mut short_cps: Vec<usize> = (n..=top).filter(|&c| c > window && c <= restart).collect();
        let long_cps: Vec<usize> = (n..=top).filter(|&c| c > restart).collect();
        if !long_cps.is_empty() && restart > window {
            short_cps.push(restart);
        }
        let run = |cps: &[usize], l: usize, samples: usize, seed: u64| -> Result<Option<ImportanceBatch<T>>> {
            if cps.is_empty() || d == 1 {
                return Ok(None);
            }
            if samples == 0 {
                return Err(Error::InvalidParameter("sample counts must be at least 1".into()));
            }
            ImportanceBatch::run(sys, &p, &v, l, cps, samples, seed).map(Some)
        };
        ctx.short = run(&short_cps, window, params.short_samples, params.seed)?;
        ctx.long = run(&long_cps, restart, params.samples, tagged_seed(params.seed, 1))?;
        ctx.n = n;
        ctx.window = window;
        ctx.restart = restart;
        ctx.checkpoints = (n..=top).collect();
        ctx.polys = polys;
        ctx.polys_half = polys_half;
        Ok(ctx)
    }

    pub fn domain(&self) -> &DomainGamma<T> {
        &self.domain
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn checkpoints(&self) -> &[usize] {
        &self.checkpoints
    }

    pub fn lip(&self) -> T {
        self.lip
    }

    pub fn certificate_id(&self) -> Option<&str> {
        self.cert.as_ref().map(|c| c.2.as_str())
    }

    fn ratio(&self) -> Option<T> {
        self.cert.as_ref().map(|&(_, zeta, _)| (-zeta).exp() / self.domain.gamma())
    }

    /// `C0 N L sum|z_j| gamma^-1 sum_{k >= n} (e^-zeta / gamma)^k`; zero in
    /// dimension one, `None` without a certificate.
    pub fn tail_bound(&self, n: usize, sum_abs_z: T) -> Option<T> {
        if self.d == 1 {
            return Some(T::zero());
        }
        let (c0, _, _) = self.cert.as_ref()?;
        let r = self.ratio()?;
        let g = self.domain.gamma();
        let pre = *c0 * T::from_usize_lossy(self.n_gen) * self.lip * sum_abs_z / g;
        Some(pre * (T::from_usize_lossy(n) * r.ln()).exp() / (T::one() - r))
    }

    fn n_for_tolerance(&self, tol: T, cap: usize) -> Result<usize> {
        if !(tol > T::zero()) {
            return Err(Error::InvalidParameter("tolerance must be positive".into()));
        }
        let r = self.ratio().ok_or_else(|| Error::CertificateMissing("tail bound needs a certificate".into()))?;
        if !(r < T::one()) {
            return Err(Error::DomainViolation("exp(-zeta)/gamma is not below 1".into()));
        }
        // uniform over the domain: sum |z_j| < 1/gamma
        let worst = T::one() / self.domain.gamma();
        let t0 = self.tail_bound(0, worst).unwrap_or_else(T::zero);
        if t0 <= tol {
            return Ok(0);
        }
        let n = ((tol / t0).ln() / r.ln()).ceil().to_f64_lossy();
        if !n.is_finite() || n > cap as f64 {
            return Err(Error::ToleranceUnreachable { tol: tol.to_f64_lossy(), needed: n.min(1e30) as u128, cap });
        }
        let mut n = n.max(0.0) as usize;
        while self.tail_bound(n, worst).is_some_and(|b| b > tol) {
            n += 1;
        }
        Ok(n)
    }

    /// Exact `P_k(z)`, `k = 0..=window`, on the full grid.
    pub fn exact_values(&self, z: &ComplexWeights<T>) -> Vec<Complex<T>> {
        self.polys.iter().map(|p| p.eval(z.as_slice())).collect()
    }

    /// Arithmetic means of `P_0(z), ..., P_l(z)` for `l = 0..=window`.
    pub fn cesaro_means(&self, z: &ComplexWeights<T>) -> Vec<Complex<T>> {
        cesaro(&self.exact_values(z))
    }

    fn check_point(&self, z: &ComplexWeights<T>) -> Result<()> {
        if z.len() != self.n_gen {
            return Err(Error::Dimension("weight count differs from generator count".into()));
        }
        self.domain.check(z)
    }

    /// `sum_m a_m Lambda_n(z_m)` with a joint standard error; `checkpoint` is
    /// an index into [`Self::checkpoints`].
    pub fn functional(&self, checkpoint: usize, terms: &[(Complex<T>, ComplexWeights<T>)]) -> Result<(Complex<T>, T, T)> {
        let n = *self
            .checkpoints
            .get(checkpoint)
            .ok_or_else(|| Error::InvalidParameter(format!("checkpoint index {checkpoint} out of range")))?;
        for (_, z) in terms {
            self.check_point(z)?;
        }
        let l = self.window;
        let mut exact = Complex::new(T::zero(), T::zero());
        let mut quad = Complex::new(T::zero(), T::zero());
        for (a, z) in terms {
            let full = self.polys[n.min(l)].eval(z.as_slice());
            exact = exact + *a * full;
            quad = quad + *a * (full - self.polys_half[n.min(l)].eval(z.as_slice()));
        }
        let refs: Vec<(Complex<T>, &[Complex<T>])> = terms.iter().map(|(a, z)| (*a, z.as_slice())).collect();
        let part = |batch: &Option<ImportanceBatch<T>>, m: usize| -> (Complex<T>, T) {
            let b = batch.as_ref().expect("sampled checkpoints have a batch");
            let c = b.checkpoints().iter().position(|&x| x == m).expect("checkpoint sampled");
            complex_mean(&b.functional_samples(c, &refs))
        };
        let mut value = exact;
        let mut var = T::zero();
        // one-dimensional fibers: the window level is already exact
        if self.d > 1 && n > l && self.restart > l {
            let (m, se) = part(&self.short, n.min(self.restart));
            value = value + m;
            var += se * se;
        }
        if self.d > 1 && n > self.restart {
            let (m, se) = part(&self.long, n);
            value = value + m;
            var += se * se;
        }
        Ok((value, var.sqrt(), quad.norm()))
    }

    pub fn eval_at(&self, checkpoint: usize, z: &ComplexWeights<T>) -> Result<AnalyticEval<T>> {
        let (value, stderr, quad_error) = self.functional(checkpoint, &[(Complex::new(T::one(), T::zero()), z.clone())])?;
        let n = self.checkpoints[checkpoint];
        Ok(AnalyticEval {
            z: z.clone(),
            value,
            stderr,
            tail_bound: self.tail_bound(n, z.sum_abs()),
            quad_error,
            n,
            gamma: self.domain.gamma(),
            certificate_id: self.certificate_id().map(str::to_owned),
        })
    }

    pub fn eval(&self, z: &ComplexWeights<T>) -> Result<AnalyticEval<T>> {
        self.eval_at(0, z)
    }

    fn slice_point(&self, delta: &[T], w: Complex<T>) -> Result<ComplexWeights<T>> {
        ComplexWeights::on_slice(self.domain.p(), delta, w)
    }

    fn check_direction(&self, delta: &[T]) -> Result<()> {
        if delta.len() != self.n_gen {
            return Err(Error::Dimension("direction length differs from generator count".into()));
        }
        let s = delta.iter().fold(T::zero(), |a, &x| a + x);
        let scale = delta.iter().fold(T::zero(), |a, &x| a.max(x.abs()));
        if !(scale > T::zero()) || s.abs() > T::lit(1e-12) * scale.max(T::one()) {
            return Err(Error::InvalidParameter("direction must be nonzero with zero sum".into()));
        }
        Ok(())
    }

    /// Cauchy coefficients `c_k` of `w -> Lambda_n(p + w delta)` from a
    /// `nodes`-point trapezoid rule on `|w| = radius`.
    pub fn taylor_coeffs(&self, delta: &[T], radius: T, k_max: usize, nodes: usize) -> Result<TaylorCoeffs<T>> {
        self.check_direction(delta)?;
        let nodes = nodes.max(32).max(2 * k_max + 2);
        let limit = self.domain.slice_radius(delta);
        if !(radius > T::zero() && radius < limit) {
            return Err(Error::DomainViolation(format!("circle radius {radius} is not inside the slice radius {limit}")));
        }
        let pts: Vec<(Complex<T>, ComplexWeights<T>)> = (0..nodes)
            .map(|m| {
                let th = T::lit(2.0 * std::f64::consts::PI * m as f64 / nodes as f64);
                let w = Complex::from_polar(radius, th);
                Ok((Complex::from_polar(T::one(), th), self.slice_point(delta, w)?))
            })
            .collect::<Result<_>>()?;
        let mut max_abs = T::zero();
        for (_, z) in &pts {
            max_abs = max_abs.max(self.eval(z)?.value.norm());
        }
        let nf = T::from_usize_lossy(nodes);
        let mut coeffs = Vec::with_capacity(k_max + 1);
        let mut stderr = Vec::with_capacity(k_max + 1);
        let mut noise_floor = Vec::with_capacity(k_max + 1);
        let mut tail = Vec::with_capacity(k_max + 1);
        let worst = self.tail_bound(self.n, T::one() / self.domain.gamma());
        for k in 0..=k_max {
            let rk = radius.powi(k as i32);
            let terms: Vec<(Complex<T>, ComplexWeights<T>)> =
                pts.iter().map(|(e, z)| (e.powu(k as u32).inv() / (nf * rk), z.clone())).collect();
            let (c, se, quad) = self.functional(0, &terms)?;
            coeffs.push(c);
            stderr.push(se);
            noise_floor.push(T::lit(3.0) * se + quad + T::lit(64.0) * T::epsilon() * max_abs / rk);
            tail.push(worst.map(|b| b / rk));
        }
        Ok(TaylorCoeffs { delta: delta.to_vec(), radius, nodes, coeffs, stderr, noise_floor, tail, n: self.n })
    }

    /// Cauchy-Riemann residual `|d/dRe w + i d/dIm w|` by centered differences
    /// with step `h` on a `grid x grid` square inscribed in `|w| < radius`.
    pub fn verify_holomorphy(&self, delta: &[T], radius: T, grid: usize, h: T) -> Result<HolomorphyReport<T>> {
        self.check_direction(delta)?;
        if grid < 2 {
            return Err(Error::InvalidParameter("grid needs at least 2 points per side".into()));
        }
        let half = radius / T::lit(2.0_f64.sqrt()) - h;
        if !(half > T::zero()) {
            return Err(Error::InvalidParameter("difference step too large for the disk".into()));
        }
        let inv = Complex::new(T::one() / (T::lit(2.0) * h), T::zero());
        let i = Complex::new(T::zero(), T::one());
        let mut points = Vec::with_capacity(grid * grid);
        for a in 0..grid {
            for b in 0..grid {
                let x = -half + T::lit(2.0) * half * T::from_usize_lossy(a) / T::from_usize_lossy(grid - 1);
                let y = -half + T::lit(2.0) * half * T::from_usize_lossy(b) / T::from_usize_lossy(grid - 1);
                let w = Complex::new(x, y);
                let hz = Complex::new(h, T::zero());
                let hi = Complex::new(T::zero(), h);
                let terms = vec![
                    (inv, self.slice_point(delta, w + hz)?),
                    (-inv, self.slice_point(delta, w - hz)?),
                    (i * inv, self.slice_point(delta, w + hi)?),
                    (-(i * inv), self.slice_point(delta, w - hi)?),
                ];
                let (r, se, _) = self.functional(0, &terms)?;
                points.push(HolomorphyPoint { w: [x, y], residual: r.norm(), stderr: se });
            }
        }
        let max_residual = points.iter().fold(T::zero(), |m, p| m.max(p.residual));
        Ok(HolomorphyReport { radius, h, points, max_residual })
    }
}

/// Arithmetic means of the leading partial sequences.
pub fn cesaro<T: Real>(values: &[Complex<T>]) -> Vec<Complex<T>> {
    let mut acc = Complex::new(T::zero(), T::zero());
    values
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            acc = acc + v;
            acc / T::from_usize_lossy(k + 1)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct TaylorCoeffs<T> {
    pub delta: Vec<T>,
    pub radius: T,
    pub nodes: usize,
    pub coeffs: Vec<Complex<T>>,
    pub stderr: Vec<T>,
    /// `3 se_k + quadrature + 64 eps max|f| / r^k`.
    pub noise_floor: Vec<T>,
    /// Certified `tail / r^k` (Cauchy estimate), when available.
    pub tail: Vec<Option<T>>,
    pub n: usize,
}

impl<T: Real> TaylorCoeffs<T> {
    /// Degree-`K` Taylor polynomial at `w`.
    pub fn eval(&self, w: Complex<T>) -> Complex<T> {
        self.coeffs.iter().rev().fold(Complex::new(T::zero(), T::zero()), |acc, &c| acc * w + c)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct HolomorphyPoint<T> {
    pub w: [T; 2],
    pub residual: T,
    pub stderr: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct HolomorphyReport<T> {
    pub radius: T,
    pub h: T,
    pub points: Vec<HolomorphyPoint<T>>,
    pub max_residual: T,
}

/// Certified extension of the top exponent at one `z`.
pub fn analytic_lambda<T: Real>(
    sys: &CocycleSystem<T>,
    p: &ProbabilityVector<T>,
    gamma: T,
    z: &ComplexWeights<T>,
    cert: &ContractionCertificate<T>,
    params: &AnalyticParams,
) -> Result<AnalyticEval<T>> {
    let domain = DomainGamma::new(p.clone(), gamma)?;
    domain.check(z)?;
    AnalyticContext::new(sys, domain, Some(cert), params)?.eval(z)
}

/// `lambda_k(z) = Lambda(wedge^k A)(z) - Lambda(wedge^(k-1) A)(z)` for
/// `k = 1..=d`, each compound evaluated at the fixed `params.n`.
///
/// Compound systems carry no contraction certificate, so only the
/// one-dimensional top power has a (zero) tail bound.
pub fn spectrum_extension<T: Real>(
    sys: &CocycleSystem<T>,
    p: &ProbabilityVector<T>,
    gamma: T,
    z: &ComplexWeights<T>,
    params: &AnalyticParams,
    compound_cap: u128,
) -> Result<Vec<AnalyticEval<T>>> {
    let domain = DomainGamma::new(p.clone(), gamma)?;
    domain.check(z)?;
    let d = sys.d();
    if params.n.is_none() {
        return Err(Error::InvalidParameter("spectrum extension needs a fixed n".into()));
    }
    let mut prev: Option<AnalyticEval<T>> = None;
    let mut out = Vec::with_capacity(d);
    for k in 1..=d {
        let size = binomial(d, k);
        if size > compound_cap {
            return Err(Error::CapExceeded { what: "compound dimension", size, cap: compound_cap });
        }
        let ck = if k == 1 { sys.clone() } else { sys.compound(k)? };
        let mut pk = params.clone();
        pk.v = None;
        let e = AnalyticContext::new(&ck, domain.clone(), None, &pk)?.eval(z)?;
        let diff = match &prev {
            None => e.clone(),
            Some(q) => AnalyticEval {
                value: e.value - q.value,
                stderr: e.stderr + q.stderr,
                tail_bound: match (e.tail_bound, q.tail_bound) {
                    (Some(a), Some(b)) => Some(a + b),
                    _ => None,
                },
                quad_error: e.quad_error + q.quad_error,
                ..e.clone()
            },
        };
        out.push(diff);
        prev = Some(e);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cocycle::fixture_default;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    fn fixed(n: usize) -> AnalyticParams {
        AnalyticParams { n: Some(n), samples: 32, short_samples: 256, seed: 5, ..Default::default() }
    }

    #[test]
    fn identity_is_zero() {
        let f = fixture_default::<f64>("identity").unwrap();
        let dom = DomainGamma::new(f.p.clone(), 0.5).unwrap();
        let ctx = AnalyticContext::new(&f.system, dom, None, &fixed(50)).unwrap();
        let z = ComplexWeights::new(vec![c(0.3, 0.4), c(0.7, -0.4)]).unwrap();
        let e = ctx.eval(&z).unwrap();
        assert_eq!(e.value, c(0.0, 0.0));
        assert_eq!(e.tail_bound, None);
        let tc = ctx.taylor_coeffs(&[1.0, -1.0], 0.3, 4, 32).unwrap();
        assert!(tc.coeffs.iter().all(|x| x.norm() == 0.0));
    }

    #[test]
    fn diagonal_branch_is_affine() {
        let f = fixture_default::<f64>("diagonal-const").unwrap();
        let (la, lb) = (2.0_f64.ln(), 3.0_f64.ln());
        let dom = DomainGamma::new(f.p.clone(), 0.5).unwrap();
        let ctx = AnalyticContext::new(&f.system, dom, None, &fixed(60)).unwrap();
        for w in [c(0.1, 0.2), c(-0.3, 0.05), c(0.0, -0.4)] {
            let z = ComplexWeights::on_slice(&f.p, &[1.0, -1.0], w).unwrap();
            let e = ctx.eval(&z).unwrap();
            let zs = z.as_slice();
            assert!((e.value - (zs[0] * la + zs[1] * lb)).norm() < 1e-12);
        }
        let tc = ctx.taylor_coeffs(&[1.0, -1.0], 0.4, 5, 32).unwrap();
        assert!((tc.coeffs[0] - c(0.5 * (la + lb), 0.0)).norm() < 1e-12);
        assert!((tc.coeffs[1] - c(la - lb, 0.0)).norm() < 1e-12);
        for k in 2..=5 {
            assert!(tc.coeffs[k].norm() <= tc.noise_floor[k], "c_{k} = {}", tc.coeffs[k]);
        }
        let h = ctx.verify_holomorphy(&[1.0, -1.0], 0.4, 5, 0.01).unwrap();
        assert!(h.max_residual < 1e-10);
    }

    #[test]
    fn domain_errors() {
        let f = fixture_default::<f64>("diagonal-const").unwrap();
        let dom = DomainGamma::new(f.p.clone(), 0.5).unwrap();
        let ctx = AnalyticContext::new(&f.system, dom, None, &fixed(20)).unwrap();
        assert!(matches!(ctx.taylor_coeffs(&[1.0, -1.0], 0.6, 3, 32), Err(Error::DomainViolation(_))));
        let far = ComplexWeights::new(vec![c(1.2, 0.0), c(-0.2, 0.0)]).unwrap();
        assert!(matches!(ctx.eval(&far), Err(Error::DomainViolation(_))));
        assert!(ctx.taylor_coeffs(&[1.0, 1.0], 0.1, 3, 32).is_err());
        let dom = DomainGamma::new(f.p.clone(), 0.5).unwrap();
        assert!(matches!(
            AnalyticContext::new(&f.system, dom, None, &AnalyticParams::default()),
            Err(Error::CertificateMissing(_))
        ));
    }

    #[test]
    fn taylor_polynomial_reproduces_values() {
        let f = fixture_default::<f64>("triangular-fourier").unwrap();
        let dom = DomainGamma::new(f.p.clone(), 0.7).unwrap();
        let ctx = AnalyticContext::new(&f.system, dom.clone(), None, &fixed(30)).unwrap();
        let delta = [1.0, -1.0];
        let r = 0.8 * dom.slice_radius(&delta);
        let k = 12;
        let tc = ctx.taylor_coeffs(&delta, r, k, 64).unwrap();
        let max_f = (0..64)
            .map(|m| {
                let w = Complex::from_polar(r, 2.0 * std::f64::consts::PI * m as f64 / 64.0);
                ctx.eval(&ComplexWeights::on_slice(&f.p, &delta, w).unwrap()).unwrap().value.norm()
            })
            .fold(0.0, f64::max);
        for th in [0.3, 1.9, 4.0] {
            let w = Complex::from_polar(r / 2.0, th);
            let e = ctx.eval(&ComplexWeights::on_slice(&f.p, &delta, w).unwrap()).unwrap();
            let bound = 2.0 * max_f * 0.5_f64.powi(k as i32 + 1) + 1e-12;
            assert!((tc.eval(w) - e.value).norm() <= bound, "{} vs {}", tc.eval(w), e.value);
        }
    }

    #[test]
    fn spectrum_extension_of_diagonal() {
        let f = fixture_default::<f64>("diagonal-const").unwrap();
        let z = ComplexWeights::real(&[0.4, 0.6]).unwrap();
        let out = spectrum_extension(&f.system, &f.p, 0.5, &z, &fixed(40), 256).unwrap();
        let la = 0.4 * 2.0_f64.ln() + 0.6 * 3.0_f64.ln();
        let lb = 0.4 * 0.5_f64.ln() + 0.6 * (1.0_f64 / 3.0).ln();
        assert!((out[0].value - c(la, 0.0)).norm() < 1e-12);
        assert!((out[1].value - c(lb, 0.0)).norm() < 1e-12);
        assert_eq!(out[1].tail_bound, None);
        // the top power is one-dimensional: exactly affine, zero tail
        let zc = ComplexWeights::new(vec![c(0.4, 0.3), c(0.6, -0.3)]).unwrap();
        let out = spectrum_extension(&f.system, &f.p, 0.5, &zc, &fixed(40), 256).unwrap();
        let det = zc.as_slice()[0] * (2.0_f64 * 0.5).ln() + zc.as_slice()[1] * (3.0_f64 / 3.0).ln();
        assert!((out[0].value + out[1].value - det).norm() < 1e-12);
    }

    #[test]
    fn cesaro_of_constant_sequence() {
        let v = vec![c(1.0, 0.0), c(3.0, 0.0), c(2.0, 0.0)];
        assert_eq!(cesaro(&v), vec![c(1.0, 0.0), c(2.0, 0.0), c(2.0, 0.0)]);
    }
}
