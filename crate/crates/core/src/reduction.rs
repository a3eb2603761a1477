//! Invariant sections, restricted and quotient cocycles, the max formula
//! `lambda_+(A) = max(lambda_+(A^V), lambda_+(A^{R^d/V}))`, and reduction chains.
//!
//! Frames are orthonormal. A section `V` with frame `J(t)` gives the
//! restricted fiber `J(t+theta)^T A(t) J(t)`; with an orthonormal complement
//! `K(t)` the quotient fiber is `K(t+theta)^T A(t) K(t)`, which is the
//! induced map on `R^d / V` written in the coordinates of `V^perp`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra::{dot, grassmann_dist, norm2, svd, Matrix};
use crate::cocycle::{validation_grid, CocycleSystem, Fiber, FourierTerm, GridFiber, ProbabilityVector};
use crate::error::{Error, Result};
use crate::lyapunov::{top_exponent_mc, LyapEstimate, McParams};
use crate::sampling::uniform_torus;
use crate::scalar::Real;

/// Invariance tolerance for constant (exactly representable) sections.
pub const CONSTANT_TOL: f64 = 1e-8;
/// Invariance tolerance for grid sections, limited by interpolation.
pub const GRID_TOL: f64 = 1e-4;
/// Largest principal-angle sine allowed between adjacent grid frames.
pub const GRID_JUMP_MAX: f64 = 0.5;
/// Torus points per dimension for invariance checks (reduced for large `m`).
pub const CHECK_PER_DIM: usize = 32;
/// Resolution per dimension when a non-constant restriction must be sampled.
pub const SAMPLE_PER_DIM: usize = 64;

const MAX_GRID_POINTS: usize = 1 << 14;
const RANK_TOL: f64 = 1e-10;
const NEST_TOL_CONSTANT: f64 = 1e-6;
const NEST_TOL_GRID: f64 = 1e-3;

/// Points per dimension, halved until `per^m` stays below a fixed budget.
pub fn grid_per_dim(m: usize, per_dim: usize) -> usize {
    let mut per = per_dim.max(1);
    while per > 2 && per.saturating_pow(m as u32) > MAX_GRID_POINTS {
        per /= 2;
    }
    per
}

/// Modified Gram-Schmidt (two passes) with positive `R` diagonal.
pub fn orthonormal_frame<T: Real>(a: &Matrix<T>) -> Result<Matrix<T>> {
    let (d, k) = (a.rows(), a.cols());
    if k == 0 || k > d {
        return Err(Error::Dimension(format!("frame with {k} columns in dimension {d}")));
    }
    if !a.is_finite() {
        return Err(Error::InvalidPoint("non-finite frame".into()));
    }
    let scale = (0..k).map(|j| norm2(&a.column(j))).fold(T::zero(), T::max);
    let mut out = Matrix::zeros(d, k);
    for j in 0..k {
        let mut c = a.column(j);
        for _ in 0..2 {
            for i in 0..j {
                let q = out.column(i);
                let r = dot(&q, &c);
                for (x, &y) in c.iter_mut().zip(&q) {
                    *x -= r * y;
                }
            }
        }
        let n = norm2(&c);
        if !(n > T::lit(RANK_TOL) * scale) {
            return Err(Error::RankDeficient { index: j, value: n.to_f64_lossy() });
        }
        let c: Vec<T> = c.iter().map(|&x| x / n).collect();
        out.set_column(j, &c);
    }
    Ok(out)
}

/// Orthonormal basis of `span(j)^perp`, built by pivoted Gram-Schmidt over
/// the coordinate vectors, so coordinate-aligned sections get coordinate
/// complements.
pub fn complement_frame<T: Real>(j: &Matrix<T>) -> Result<Matrix<T>> {
    let (d, k) = (j.rows(), j.cols());
    let mut basis: Vec<Vec<T>> = (0..k).map(|c| j.column(c)).collect();
    let mut out = Vec::with_capacity(d - k);
    let mut used = vec![false; d];
    for _ in k..d {
        let mut best: Option<(usize, Vec<T>, T)> = None;
        for (i, u) in used.iter().enumerate() {
            if *u {
                continue;
            }
            let mut c = vec![T::zero(); d];
            c[i] = T::one();
            for _ in 0..2 {
                for b in &basis {
                    let r = dot(b, &c);
                    for (x, &y) in c.iter_mut().zip(b) {
                        *x -= r * y;
                    }
                }
            }
            let n = norm2(&c);
            if best.as_ref().is_none_or(|b| n > b.2 + T::lit(1e-12)) {
                best = Some((i, c, n));
            }
        }
        let (i, c, n) = best.ok_or(Error::RankDeficient { index: k, value: 0.0 })?;
        if !(n > T::lit(RANK_TOL)) {
            return Err(Error::RankDeficient { index: basis.len(), value: n.to_f64_lossy() });
        }
        used[i] = true;
        let c: Vec<T> = c.iter().map(|&x| x / n).collect();
        basis.push(c.clone());
        out.push(c);
    }
    if out.is_empty() {
        return Ok(Matrix::zeros(d, 0));
    }
    Matrix::from_columns(&out)
}

fn align_signs<T: Real>(frame: &mut Matrix<T>, reference: &Matrix<T>) {
    for c in 0..frame.cols() {
        if dot(&frame.column(c), &reference.column(c)) < T::zero() {
            let flipped: Vec<T> = frame.column(c).iter().map(|&x| -x).collect();
            frame.set_column(c, &flipped);
        }
    }
}

/// A measurable choice of `k`-dimensional subspaces `V(t)`.
///
/// Stored as orthonormal frames. Grid frames sit at nodes `idx / r` (last
/// coordinate fastest) and are interpolated multilinearly between nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSection<T>", into = "RawSection<T>", bound = "T: Real")]
pub enum Section<T> {
    Constant { basis: Matrix<T> },
    /// `complements` are orthonormal frames of `V^perp` transported along
    /// the grid; derived from `frames` and not serialized.
    Grid { resolution: Vec<usize>, frames: Vec<Matrix<T>>, complements: Vec<Matrix<T>> },
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", bound = "T: Real", deny_unknown_fields)]
enum RawSection<T> {
    Constant { basis: Matrix<T> },
    Grid { resolution: Vec<usize>, frames: Vec<Matrix<T>> },
}

impl<T: Real> TryFrom<RawSection<T>> for Section<T> {
    type Error = Error;

    fn try_from(raw: RawSection<T>) -> Result<Self> {
        match raw {
            RawSection::Constant { basis } => Section::constant(&basis),
            RawSection::Grid { resolution, frames } => Section::grid(resolution, frames),
        }
    }
}

impl<T: Real> From<Section<T>> for RawSection<T> {
    fn from(s: Section<T>) -> Self {
        match s {
            Section::Constant { basis } => RawSection::Constant { basis },
            Section::Grid { resolution, frames, .. } => RawSection::Grid { resolution, frames },
        }
    }
}

impl<T: Real> Section<T> {
    /// Constant section spanned by the columns of `basis` (full column rank).
    pub fn constant(basis: &Matrix<T>) -> Result<Self> {
        Ok(Section::Constant { basis: orthonormal_frame(basis)? })
    }

    /// `span(e_1, ..., e_k)` in `R^d`.
    pub fn coordinate(d: usize, k: usize) -> Result<Self> {
        Self::constant(&Matrix::from_fn(d, k, |i, j| if i == j { T::one() } else { T::zero() }))
    }

    /// Grid section from one basis per node. Frames are orthonormalized,
    /// sign-aligned to the previous node, and adjacent nodes (with wrap) must
    /// differ by at most [`GRID_JUMP_MAX`] in principal-angle sine.
    pub fn grid(resolution: Vec<usize>, bases: Vec<Matrix<T>>) -> Result<Self> {
        if resolution.is_empty() || resolution.iter().any(|&r| r == 0) {
            return Err(Error::InvalidParameter("section grid resolution must be positive".into()));
        }
        let count: usize = resolution.iter().product();
        if bases.len() != count {
            return Err(Error::InvalidParameter(format!("section grid expects {count} frames, got {}", bases.len())));
        }
        let (d, k) = (bases[0].rows(), bases[0].cols());
        if bases.iter().any(|b| b.rows() != d || b.cols() != k) {
            return Err(Error::Dimension("section frames differ in shape".into()));
        }
        let mut frames: Vec<Matrix<T>> = Vec::with_capacity(count);
        for b in &bases {
            let mut f = orthonormal_frame(b)?;
            if let Some(prev) = frames.last() {
                align_signs(&mut f, prev);
            }
            frames.push(f);
        }
        let m = resolution.len();
        for flat in 0..count {
            let idx = unflatten(flat, &resolution);
            for j in 0..m {
                let mut nb = idx.clone();
                nb[j] = (nb[j] + 1) % resolution[j];
                let jump = grassmann_dist(&frames[flat], &frames[flatten(&nb, &resolution)])?;
                if jump > T::lit(GRID_JUMP_MAX) {
                    return Err(Error::InvalidParameter(format!(
                        "section frames jump by {jump} between adjacent nodes"
                    )));
                }
            }
        }
        let complements = transport_complements(&resolution, &frames)?;
        Ok(Section::Grid { resolution, frames, complements })
    }

    /// Samples `f` at the nodes of a grid.
    pub fn sample_grid(resolution: Vec<usize>, mut f: impl FnMut(&[T]) -> Result<Matrix<T>>) -> Result<Self> {
        let count: usize = resolution.iter().product();
        let bases = (0..count)
            .map(|flat| {
                let t: Vec<T> = unflatten(flat, &resolution)
                    .iter()
                    .zip(&resolution)
                    .map(|(&i, &r)| T::from_usize_lossy(i) / T::from_usize_lossy(r))
                    .collect();
                f(&t)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::grid(resolution, bases)
    }

    pub fn d(&self) -> usize {
        match self {
            Section::Constant { basis } => basis.rows(),
            Section::Grid { frames, .. } => frames[0].rows(),
        }
    }

    pub fn k(&self) -> usize {
        match self {
            Section::Constant { basis } => basis.cols(),
            Section::Grid { frames, .. } => frames[0].cols(),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Section::Constant { .. })
    }

    pub fn resolution(&self) -> Option<&[usize]> {
        match self {
            Section::Constant { .. } => None,
            Section::Grid { resolution, .. } => Some(resolution),
        }
    }

    /// Default invariance tolerance for this kind of section.
    pub fn default_tol(&self) -> T {
        T::lit(if self.is_constant() { CONSTANT_TOL } else { GRID_TOL })
    }

    /// Orthonormal frame `J(t)`.
    pub fn frame_at(&self, t: &[T]) -> Result<Matrix<T>> {
        match self {
            Section::Constant { basis } => Ok(basis.clone()),
            Section::Grid { resolution, frames, .. } => orthonormal_frame(&blend(resolution, frames, t)?),
        }
    }

    /// Orthonormal frame `K(t)` of `V(t)^perp`. Grid sections interpolate
    /// complements transported node to node, so `K` is continuous wherever
    /// the bundle allows it.
    pub fn complement_at(&self, t: &[T]) -> Result<Matrix<T>> {
        match self {
            Section::Constant { basis } => complement_frame(basis),
            Section::Grid { resolution, complements, .. } => {
                let j = self.frame_at(t)?;
                if complements[0].cols() == 0 {
                    return Ok(Matrix::zeros(j.rows(), 0));
                }
                let k = blend(resolution, complements, t)?;
                orthonormal_frame(&k.sub(&j.matmul(&j.transpose().matmul(&k))))
            }
        }
    }
}

/// Multilinear blend of node frames around `t`, each corner sign-aligned
/// to the first.
fn blend<T: Real>(resolution: &[usize], frames: &[Matrix<T>], t: &[T]) -> Result<Matrix<T>> {
    let m = resolution.len();
    if t.len() != m {
        return Err(Error::Dimension(format!("torus point of dimension {}, expected {m}", t.len())));
    }
    let mut acc = Matrix::zeros(frames[0].rows(), frames[0].cols());
    let mut reference: Option<Matrix<T>> = None;
    for corner in 0..(1usize << m) {
        let mut weight = T::one();
        let mut idx = vec![0usize; m];
        for j in 0..m {
            let r = resolution[j];
            let s = t[j] * T::from_usize_lossy(r);
            let base = s.floor();
            let frac = s - base;
            let i0 = base.to_usize().unwrap_or(0) % r;
            let hi = (corner >> j) & 1 == 1;
            idx[j] = if hi { (i0 + 1) % r } else { i0 };
            weight *= if hi { frac } else { T::one() - frac };
        }
        let mut f = frames[flatten(&idx, resolution)].clone();
        match &reference {
            None => reference = Some(f.clone()),
            Some(r) => align_signs(&mut f, r),
        }
        if weight != T::zero() {
            acc.axpy(weight, &f);
        }
    }
    Ok(acc)
}

/// Complements along a spanning tree of the grid: each node projects its
/// predecessor's complement onto `V^perp`, falling back to the pivoted
/// complement when that projection is badly conditioned.
fn transport_complements<T: Real>(resolution: &[usize], frames: &[Matrix<T>]) -> Result<Vec<Matrix<T>>> {
    let mut out: Vec<Matrix<T>> = Vec::with_capacity(frames.len());
    for (flat, j) in frames.iter().enumerate() {
        if flat == 0 || j.cols() == j.rows() {
            out.push(complement_frame(j)?);
            continue;
        }
        let mut idx = unflatten(flat, resolution);
        let axis = (0..idx.len()).rev().find(|&a| idx[a] > 0).expect("flat > 0");
        idx[axis] -= 1;
        let prev = &out[flatten(&idx, resolution)];
        let proj = prev.sub(&j.matmul(&j.transpose().matmul(prev)));
        let well = svd(&proj)?.s.last().is_some_and(|&s| s > T::lit(0.5));
        let next = if well {
            orthonormal_frame(&proj)?
        } else {
            let mut c = complement_frame(j)?;
            align_signs(&mut c, prev);
            c
        };
        out.push(next);
    }
    Ok(out)
}

fn unflatten(mut flat: usize, res: &[usize]) -> Vec<usize> {
    let mut idx = vec![0; res.len()];
    for j in (0..res.len()).rev() {
        idx[j] = flat % res[j];
        flat /= res[j];
    }
    idx
}

fn flatten(idx: &[usize], res: &[usize]) -> usize {
    idx.iter().zip(res).fold(0, |acc, (&i, &r)| acc * r + i)
}

fn shifted<T: Real>(t: &[T], theta: &[T]) -> Vec<T> {
    t.iter().zip(theta).map(|(&a, &b)| crate::algebra::wrap(a + b)).collect()
}

/// Result of an invariance check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct InvarianceCheck<T> {
    /// Largest principal-angle sine between `A_j(t) V(t)` and `V(t + theta_j)`.
    pub defect: T,
    pub tol: T,
    pub invariant: bool,
    pub points: usize,
}

/// Maximum Grassmann defect over all generators and a `per_dim^m` torus grid
/// (a single point when both the system and the section are constant).
pub fn check_invariant<T: Real>(
    sys: &CocycleSystem<T>,
    v: &Section<T>,
    tol: T,
    per_dim: usize,
) -> Result<InvarianceCheck<T>> {
    if v.d() != sys.d() {
        return Err(Error::Dimension(format!("section lives in R^{}, system in R^{}", v.d(), sys.d())));
    }
    let grid: Vec<Vec<T>> = if sys.all_constant() && v.is_constant() {
        vec![vec![T::zero(); sys.m()]]
    } else {
        validation_grid(sys.m(), grid_per_dim(sys.m(), per_dim))
    };
    let jobs: Vec<(usize, &Vec<T>)> = (0..sys.n_generators()).flat_map(|j| grid.iter().map(move |t| (j, t))).collect();
    let defects = jobs
        .par_iter()
        .map(|&(j, t)| {
            let pushed = sys.eval(j, t).matmul(&v.frame_at(t)?);
            let pushed = orthonormal_frame(&pushed)?;
            grassmann_dist(&pushed, &v.frame_at(&shifted(t, sys.theta(j)))?)
        })
        .collect::<Result<Vec<T>>>()?;
    let defect = defects.into_iter().fold(T::zero(), T::max);
    Ok(InvarianceCheck { defect, tol, invariant: defect <= tol, points: jobs.len() })
}

/// [`check_invariant`] at the section's default tolerance, failing with
/// [`Error::InvarianceDefect`] above it.
pub fn ensure_invariant<T: Real>(sys: &CocycleSystem<T>, v: &Section<T>) -> Result<T> {
    let c = check_invariant(sys, v, v.default_tol(), CHECK_PER_DIM)?;
    if !c.invariant {
        return Err(Error::InvarianceDefect { defect: c.defect.to_f64_lossy(), tol: c.tol.to_f64_lossy() });
    }
    Ok(c.defect)
}

#[derive(Clone, Copy)]
enum Side {
    Restricted,
    Quotient,
}

fn side_frame<T: Real>(v: &Section<T>, side: Side, t: &[T]) -> Result<Matrix<T>> {
    match side {
        Side::Restricted => v.frame_at(t),
        Side::Quotient => v.complement_at(t),
    }
}

fn induced<T: Real>(sys: &CocycleSystem<T>, v: &Section<T>, side: Side) -> Result<CocycleSystem<T>> {
    ensure_invariant(sys, v)?;
    let k = match side {
        Side::Restricted => v.k(),
        Side::Quotient => v.d() - v.k(),
    };
    if k == 0 {
        return Err(Error::Dimension("induced system would be zero-dimensional".into()));
    }
    let m = sys.m();
    let fibers = (0..sys.n_generators())
        .map(|j| {
            let fiber = &sys.generator(j).fiber;
            if v.is_constant() {
                let f = side_frame(v, side, &vec![T::zero(); m])?;
                let ft = f.transpose();
                let conj = |a: &Matrix<T>| ft.matmul(&a.matmul(&f));
                match fiber {
                    Fiber::Constant { matrix } => return Ok(Fiber::constant(conj(matrix))),
                    Fiber::Fourier { terms } => {
                        return Ok(Fiber::Fourier {
                            terms: terms
                                .iter()
                                .map(|term| FourierTerm { k: term.k.clone(), cos: conj(&term.cos), sin: conj(&term.sin) })
                                .collect(),
                        })
                    }
                    Fiber::Grid(g) => {
                        return Ok(Fiber::Grid(GridFiber::new(
                            g.resolution().to_vec(),
                            g.nodes().iter().map(conj).collect(),
                        )?))
                    }
                    Fiber::Compound(_) => {}
                }
            }
            let res: Vec<usize> = match v.resolution() {
                Some(r) => r.to_vec(),
                None => vec![grid_per_dim(m, SAMPLE_PER_DIM); m],
            };
            let nodes = validation_grid_res::<T>(&res)
                .iter()
                .map(|t| {
                    let left = side_frame(v, side, &shifted(t, sys.theta(j)))?;
                    let right = side_frame(v, side, t)?;
                    Ok(left.transpose().matmul(&sys.eval(j, t).matmul(&right)))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Fiber::Grid(GridFiber::new(res, nodes)?))
        })
        .collect::<Result<Vec<_>>>()?;
    sys.with_fibers(fibers)
}

fn validation_grid_res<T: Real>(res: &[usize]) -> Vec<Vec<T>> {
    let count: usize = res.iter().product();
    (0..count)
        .map(|flat| {
            unflatten(flat, res).iter().zip(res).map(|(&i, &r)| T::from_usize_lossy(i) / T::from_usize_lossy(r)).collect()
        })
        .collect()
}

/// The `k`-dimensional cocycle `J(t+theta)^T A(t) J(t)` on `V`.
///
/// Constant sections keep the fiber representation (constant, Fourier or
/// grid); otherwise the result is a grid fiber sampled at the section nodes.
pub fn restrict<T: Real>(sys: &CocycleSystem<T>, v: &Section<T>) -> Result<CocycleSystem<T>> {
    induced(sys, v, Side::Restricted)
}

/// The `(d-k)`-dimensional cocycle induced on `R^d / V`.
pub fn quotient<T: Real>(sys: &CocycleSystem<T>, v: &Section<T>) -> Result<CocycleSystem<T>> {
    induced(sys, v, Side::Quotient)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    Restricted,
    Quotient,
}

/// Three top-exponent estimates and the max-formula verdict.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct KiferCheck<T> {
    pub ambient: LyapEstimate<T>,
    pub restricted: LyapEstimate<T>,
    pub quotient: LyapEstimate<T>,
    /// Branch with the larger estimate.
    pub dominant: Branch,
    /// `|ambient - max(restricted, quotient)|`.
    pub discrepancy: T,
    /// `sqrt(se_ambient^2 + se_dominant^2)`.
    pub combined_stderr: T,
    /// True when the two branches are within three combined standard errors.
    pub tie: bool,
    pub pass: bool,
}

impl<T: Real> KiferCheck<T> {
    fn from_estimates(ambient: LyapEstimate<T>, restricted: LyapEstimate<T>, quotient: LyapEstimate<T>) -> Self {
        let dominant = if restricted.value >= quotient.value { Branch::Restricted } else { Branch::Quotient };
        let top = match dominant {
            Branch::Restricted => &restricted,
            Branch::Quotient => &quotient,
        };
        let discrepancy = (ambient.value - top.value).abs();
        let combined_stderr = (ambient.stderr.powi(2) + top.stderr.powi(2)).sqrt();
        // floor for exactly deterministic estimates
        let slack = T::lit(1e-12) * (T::one() + ambient.value.abs());
        let pass = discrepancy <= T::lit(3.0) * combined_stderr + slack;
        let branch_se = (restricted.stderr.powi(2) + quotient.stderr.powi(2)).sqrt();
        let tie = (restricted.value - quotient.value).abs() <= T::lit(3.0) * branch_se + slack;
        Self { ambient, restricted, quotient, dominant, discrepancy, combined_stderr, tie, pass }
    }
}

fn restricted_and_quotient<T: Real>(
    sys: &CocycleSystem<T>,
    v: &Section<T>,
) -> Result<(CocycleSystem<T>, CocycleSystem<T>)> {
    Ok((restrict(sys, v)?, quotient(sys, v)?))
}

/// Estimates the three top exponents with the same parameters and seed and
/// tests the max formula within three combined standard errors.
pub fn kifer_max_check<T: Real>(
    sys: &CocycleSystem<T>,
    p: &ProbabilityVector<T>,
    v: &Section<T>,
    params: &McParams,
) -> Result<KiferCheck<T>> {
    let (r, q) = restricted_and_quotient(sys, v)?;
    kifer_from_parts(sys, &r, &q, p, params)
}

fn kifer_from_parts<T: Real>(
    sys: &CocycleSystem<T>,
    r: &CocycleSystem<T>,
    q: &CocycleSystem<T>,
    p: &ProbabilityVector<T>,
    params: &McParams,
) -> Result<KiferCheck<T>> {
    Ok(KiferCheck::from_estimates(
        top_exponent_mc(sys, p, params)?,
        top_exponent_mc(r, p, params)?,
        top_exponent_mc(q, p, params)?,
    ))
}

/// Settings for [`detect_constant_section`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectParams {
    /// Random words whose eigen-decompositions propose candidates.
    pub words: usize,
    pub max_word_len: usize,
    /// Torus grid for the final invariance test.
    pub per_dim: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for DetectParams {
    fn default() -> Self {
        Self { words: 4, max_word_len: 3, per_dim: CHECK_PER_DIM, tol: CONSTANT_TOL, seed: 0 }
    }
}

const MAX_BLOCKS: usize = 10;

/// Right singular vectors of `a` with singular value at most `cutoff`.
fn kernel<T: Real>(a: &Matrix<T>, cutoff: T) -> Result<Option<Matrix<T>>> {
    let f = svd(a)?;
    let idx: Vec<usize> = (0..a.cols()).filter(|&j| f.s[j] <= cutoff).collect();
    if idx.is_empty() {
        return Ok(None);
    }
    Ok(Some(Matrix::from_columns(&idx.iter().map(|&j| f.v.column(j)).collect::<Vec<_>>())?))
}

/// Real invariant blocks of `w`: eigenspaces of real eigenvalue clusters and
/// the real planes of complex pairs.
fn invariant_blocks<T: Real>(w: &Matrix<T>) -> Result<Vec<Matrix<T>>> {
    let d = w.rows();
    let scale = w.max_abs().max(T::min_positive_value());
    let mut ev = crate::algebra::eigenvalues(w);
    ev.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap_or(std::cmp::Ordering::Equal));
    let ctol = T::lit(1e-6) * scale;
    let mut clusters: Vec<Vec<num_complex::Complex<T>>> = Vec::new();
    for e in ev {
        match clusters.iter_mut().find(|c| (c[0] - e).norm() <= ctol) {
            Some(c) => c.push(e),
            None => clusters.push(vec![e]),
        }
    }
    let id = Matrix::identity(d);
    let mut blocks = Vec::new();
    for c in clusters {
        let n = T::from_usize_lossy(c.len());
        let mean = c.iter().fold(num_complex::Complex::new(T::zero(), T::zero()), |a, &b| a + b) / n;
        if mean.im.abs() <= ctol {
            let mut a = w.clone();
            a.axpy(-mean.re, &id);
            if let Some(k) = kernel(&a, T::lit(1e-5) * scale)? {
                blocks.push(k);
            }
        } else if mean.im > T::zero() {
            // (W - lambda)(W - conj lambda) = W^2 - 2 Re(lambda) W + |lambda|^2
            let mut a = w.matmul(w);
            a.axpy(-T::lit(2.0) * mean.re, w);
            a.axpy(mean.norm_sqr(), &id);
            if let Some(k) = kernel(&a, T::lit(1e-5) * scale * scale)? {
                blocks.push(k);
            }
        }
    }
    Ok(blocks)
}

fn candidate_subspaces<T: Real>(blocks: &[Matrix<T>], d: usize) -> Result<Vec<Matrix<T>>> {
    let mut out: Vec<Matrix<T>> = Vec::new();
    for b in blocks {
        if b.cols() > 1 {
            for c in 0..b.cols() {
                out.push(b.columns_range(c, c + 1));
            }
        }
    }
    let nb = blocks.len().min(MAX_BLOCKS);
    for mask in 1u32..(1 << nb) {
        let cols: Vec<Vec<T>> =
            (0..nb).filter(|i| mask >> i & 1 == 1).flat_map(|i| (0..blocks[i].cols()).map(move |c| blocks[i].column(c))).collect();
        if cols.len() >= d {
            continue;
        }
        if let Ok(f) = orthonormal_frame(&Matrix::from_columns(&cols)?) {
            out.push(f);
        }
    }
    Ok(out)
}

/// Searches for a constant subspace invariant under every fiber.
///
/// Candidates are sums of invariant blocks of a few random words (products
/// of fibers along an orbit); each is tested with [`check_invariant`] and the
/// lowest-dimensional passing one is returned. Finding nothing does not
/// prove irreducibility.
pub fn detect_constant_section<T: Real>(sys: &CocycleSystem<T>, params: &DetectParams) -> Option<Section<T>> {
    let d = sys.d();
    if d < 2 {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut candidates: Vec<Matrix<T>> = Vec::new();
    for _ in 0..params.words.max(1) {
        let len = rng.random_range(1..=params.max_word_len.max(1));
        let mut t: Vec<T> = uniform_torus(sys.m(), &mut rng);
        let mut w = Matrix::identity(d);
        for _ in 0..len {
            let j = rng.random_range(0..sys.n_generators());
            w = sys.eval(j, &t).matmul(&w);
            t = shifted(&t, sys.theta(j));
        }
        let Ok(blocks) = invariant_blocks(&w) else { continue };
        let Ok(cands) = candidate_subspaces(&blocks, d) else { continue };
        for c in cands {
            let dup = candidates
                .iter()
                .any(|o| o.cols() == c.cols() && grassmann_dist(o, &c).is_ok_and(|g| g < T::lit(1e-6)));
            if !dup {
                candidates.push(c);
            }
        }
    }
    candidates.sort_by_key(|c| c.cols());
    let tol = T::lit(params.tol);
    candidates.into_iter().find_map(|c| {
        let s = Section::constant(&c).ok()?;
        let check = check_invariant(sys, &s, tol, params.per_dim).ok()?;
        check.invariant.then_some(s)
    })
}

/// One level of a reduction chain, in the coordinates of the previous level.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ChainLink<T> {
    pub level: usize,
    pub dim: usize,
    pub section: Section<T>,
    pub defect: T,
    pub restricted: CocycleSystem<T>,
    pub quotient: CocycleSystem<T>,
    pub check: KiferCheck<T>,
    /// Branch carrying the top exponent at this level.
    pub attribution: Branch,
}

/// The block whose top exponent equals the ambient one.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct TerminalBlock<T> {
    /// Number of links above the block.
    pub level: usize,
    /// `None` for the ambient system of a chain without sections.
    pub branch: Option<Branch>,
    pub dim: usize,
    pub system: CocycleSystem<T>,
    pub lambda: LyapEstimate<T>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ReductionChain<T> {
    pub d: usize,
    pub links: Vec<ChainLink<T>>,
    pub terminal: TerminalBlock<T>,
}

impl<T: Real> ReductionChain<T> {
    /// `d, d_1, d_2, ...`: ambient dimension followed by restricted dimensions.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.d).chain(self.links.iter().map(|l| l.restricted.d())).collect()
    }

    pub fn all_pass(&self) -> bool {
        self.links.iter().all(|l| l.check.pass)
    }
}

/// Frame of the current level in ambient coordinates: product of the
/// frames of the sections used so far.
fn cumulative_frame<T: Real>(used: &[Section<T>], d: usize, t: &[T]) -> Result<Matrix<T>> {
    let mut c = Matrix::identity(d);
    for s in used {
        c = c.matmul(&s.frame_at(t)?);
    }
    Ok(c)
}

fn check_nested<T: Real>(outer: &Section<T>, inner: &Section<T>, m: usize) -> Result<()> {
    if inner.k() >= outer.k() {
        return Err(Error::NonNested(format!("dimension {} does not drop below {}", inner.k(), outer.k())));
    }
    let constant = outer.is_constant() && inner.is_constant();
    let (grid, tol) = if constant {
        (vec![vec![T::zero(); m]], T::lit(NEST_TOL_CONSTANT))
    } else {
        (validation_grid(m, grid_per_dim(m, CHECK_PER_DIM)), T::lit(NEST_TOL_GRID))
    };
    for t in grid {
        let (o, i) = (outer.frame_at(&t)?, inner.frame_at(&t)?);
        let resid = i.sub(&o.matmul(&o.transpose().matmul(&i)));
        let gap = svd(&resid)?.s[0];
        if gap > tol {
            return Err(Error::NonNested(format!("inner section leaves the outer one by {gap}")));
        }
    }
    Ok(())
}

/// Builds the chain `d > d_1 > d_2 > ...` from nested ambient sections
/// (largest first) and attributes the top exponent at each level by the
/// max formula. The terminal block is the first dominant quotient, or the
/// innermost restriction when every level is dominated by its restriction.
pub fn reduce_chain<T: Real>(
    sys: &CocycleSystem<T>,
    p: &ProbabilityVector<T>,
    sections: &[Section<T>],
    params: &McParams,
) -> Result<ReductionChain<T>> {
    let d = sys.d();
    let m = sys.m();
    for s in sections {
        if s.d() != d {
            return Err(Error::Dimension(format!("section lives in R^{}, system in R^{d}", s.d())));
        }
        if s.k() == 0 || s.k() >= d {
            return Err(Error::NonNested(format!("section dimension {} is not in 1..{d}", s.k())));
        }
    }
    for w in sections.windows(2) {
        check_nested(&w[0], &w[1], m)?;
    }
    let mut links = Vec::with_capacity(sections.len());
    let mut used: Vec<Section<T>> = Vec::new();
    let mut current = sys.clone();
    let mut terminal: Option<TerminalBlock<T>> = None;
    for (level, s) in sections.iter().enumerate() {
        let local = if used.is_empty() {
            s.clone()
        } else if s.is_constant() && used.iter().all(Section::is_constant) {
            let c = cumulative_frame(&used, d, &vec![T::zero(); m])?;
            Section::constant(&c.transpose().matmul(&s.frame_at(&vec![T::zero(); m])?))?
        } else {
            let res = sections[..=level]
                .iter()
                .rev()
                .find_map(|x| x.resolution().map(<[usize]>::to_vec))
                .expect("some section is a grid");
            Section::sample_grid(res, |t| Ok(cumulative_frame(&used, d, t)?.transpose().matmul(&s.frame_at(t)?)))?
        };
        let defect = ensure_invariant(&current, &local)?;
        let (r, q) = restricted_and_quotient(&current, &local)?;
        let check = kifer_from_parts(&current, &r, &q, p, params)?;
        let attribution = check.dominant;
        if terminal.is_none() && attribution == Branch::Quotient {
            terminal = Some(TerminalBlock {
                level: level + 1,
                branch: Some(Branch::Quotient),
                dim: q.d(),
                system: q.clone(),
                lambda: check.quotient.clone(),
            });
        }
        links.push(ChainLink {
            level: level + 1,
            dim: current.d(),
            section: local.clone(),
            defect,
            restricted: r.clone(),
            quotient: q,
            check,
            attribution,
        });
        used.push(local);
        current = r;
    }
    let terminal = match terminal {
        Some(t) => t,
        None => match links.last() {
            Some(l) => TerminalBlock {
                level: links.len(),
                branch: Some(Branch::Restricted),
                dim: l.restricted.d(),
                system: l.restricted.clone(),
                lambda: l.check.restricted.clone(),
            },
            None => TerminalBlock {
                level: 0,
                branch: None,
                dim: d,
                system: sys.clone(),
                lambda: top_exponent_mc(sys, p, params)?,
            },
        },
    };
    Ok(ReductionChain { d, links, terminal })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cocycle::{fixture_default, GeneratorRep};
    use crate::algebra::TorusPoint;

    fn rows(r: &[&[f64]]) -> Matrix<f64> {
        Matrix::from_rows(&r.iter().map(|x| x.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn single(a: Matrix<f64>) -> CocycleSystem<f64> {
        CocycleSystem::from_generators(vec![GeneratorRep::new(TorusPoint::new(&[0.618]).unwrap(), Fiber::constant(a))])
            .unwrap()
    }

    #[test]
    fn frames() {
        let a = rows(&[&[3.0, 1.0], &[0.0, 1.0], &[4.0, 0.0]]);
        let q = orthonormal_frame(&a).unwrap();
        assert!(q.transpose().matmul(&q).sub(&Matrix::identity(2)).max_abs() < 1e-14);
        assert!(grassmann_dist(&q, &orthonormal_frame(&a.scale(-2.0)).unwrap()).unwrap() < 1e-14);
        assert!(orthonormal_frame(&rows(&[&[1.0, 2.0], &[1.0, 2.0]])).is_err());
        let k = complement_frame(&Matrix::from_columns(&[vec![1.0, 0.0, 0.0]]).unwrap()).unwrap();
        assert_eq!(k, rows(&[&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]]));
    }

    #[test]
    fn triangular_const_section_is_exactly_invariant() {
        let f = fixture_default::<f64>("triangular-const").unwrap();
        let s = Section::constant(&f.sections[0]).unwrap();
        let c = check_invariant(&f.system, &s, 1e-8, 8).unwrap();
        assert_eq!(c.defect, 0.0);
        assert!(c.invariant);
    }

    #[test]
    fn identity_any_constant_section() {
        let f = fixture_default::<f64>("identity").unwrap();
        let s = Section::constant(&Matrix::from_columns(&[vec![0.3, -0.8]]).unwrap()).unwrap();
        assert!(check_invariant(&f.system, &s, 1e-8, 8).unwrap().defect < 1e-15);
        let r = restrict(&f.system, &s).unwrap();
        let q = quotient(&f.system, &s).unwrap();
        for j in 0..2 {
            assert!(r.eval(j, &[0.2]).sub(&Matrix::identity(1)).max_abs() < 1e-15);
            assert!(q.eval(j, &[0.2]).sub(&Matrix::identity(1)).max_abs() < 1e-15);
        }
    }

    #[test]
    fn random_section_of_irreducible_fixture_is_not_invariant() {
        let f = fixture_default::<f64>("irreducible-2d").unwrap();
        let s = Section::constant(&Matrix::from_columns(&[vec![0.6, 0.8]]).unwrap()).unwrap();
        let c = check_invariant(&f.system, &s, 1e-8, 16).unwrap();
        assert!(c.defect > 0.1, "{}", c.defect);
        assert!(matches!(restrict(&f.system, &s), Err(Error::InvarianceDefect { .. })));
    }

    #[test]
    fn block_triangular_gives_diagonal_blocks() {
        let a = rows(&[&[2.0, 1.0, 0.3], &[0.5, 3.0, -1.0], &[0.0, 0.0, 0.7]]);
        let sys = single(a);
        let v = Section::coordinate(3, 2).unwrap();
        let r = restrict(&sys, &v).unwrap();
        let q = quotient(&sys, &v).unwrap();
        assert!(r.eval(0, &[0.0]).sub(&rows(&[&[2.0, 1.0], &[0.5, 3.0]])).max_abs() < 1e-15);
        assert!(q.eval(0, &[0.0]).sub(&rows(&[&[0.7]])).max_abs() < 1e-15);
    }

    #[test]
    fn fourier_fibers_stay_fourier() {
        let f = fixture_default::<f64>("triangular-fourier").unwrap();
        let v = Section::constant(&f.sections[0]).unwrap();
        let r = restrict(&f.system, &v).unwrap();
        assert!(matches!(r.generator(0).fiber, Fiber::Fourier { .. }));
        for t in [0.0, 0.3, 0.77] {
            let a = f.system.eval(1, &[t]);
            assert!((r.eval(1, &[t])[(0, 0)] - a[(0, 0)]).abs() < 1e-15);
            assert!((quotient(&f.system, &v).unwrap().eval(1, &[t])[(0, 0)] - a[(1, 1)]).abs() < 1e-15);
        }
    }

    #[test]
    fn kifer_examples() {
        let params = McParams::new(200, 16, 3).with_burn_in(50);
        let f = fixture_default::<f64>("identity").unwrap();
        let s = Section::coordinate(2, 1).unwrap();
        let k = kifer_max_check(&f.system, &f.p, &s, &params).unwrap();
        assert_eq!((k.ambient.value, k.restricted.value, k.quotient.value), (0.0, 0.0, 0.0));
        assert!(k.pass);

        let sys = single(rows(&[&[2.0, 1.0], &[0.0, 0.5]]));
        let p = ProbabilityVector::uniform(1);
        let k = kifer_max_check(&sys, &p, &s, &params).unwrap();
        let l2 = 2.0_f64.ln();
        assert!((k.ambient.value - l2).abs() < 1e-12);
        assert!((k.restricted.value - l2).abs() < 1e-12);
        assert!((k.quotient.value + l2).abs() < 1e-12);
        assert!(k.pass && k.dominant == Branch::Restricted);

        let f = fixture_default::<f64>("diagonal-const").unwrap();
        let k = kifer_max_check(&f.system, &f.p, &s, &params).unwrap();
        let top = f.closed_form_spectrum(&f.p).unwrap()[0];
        assert!((k.ambient.value - top).abs() < 4.0 * k.ambient.stderr);
        assert!((k.restricted.value - top).abs() < 4.0 * k.restricted.stderr);
        assert!(k.pass);
    }

    #[test]
    fn detection() {
        let dp = DetectParams::default();
        let f = fixture_default::<f64>("triangular-const").unwrap();
        let s = detect_constant_section(&f.system, &dp).expect("span(e1)");
        assert_eq!(s.k(), 1);
        assert!(grassmann_dist(&s.frame_at(&[0.0]).unwrap(), &f.sections[0]).unwrap() < 1e-8);
        for name in ["rotation-band", "irreducible-2d", "schrodinger-like"] {
            let f = fixture_default::<f64>(name).unwrap();
            assert!(detect_constant_section(&f.system, &dp).is_none(), "{name}");
        }
        let f = fixture_default::<f64>("identity").unwrap();
        assert_eq!(detect_constant_section(&f.system, &dp).map(|s| s.k()), Some(1));
        let f = fixture_default::<f64>("triangular-fourier").unwrap();
        let s = detect_constant_section(&f.system, &dp).expect("span(e1)");
        assert!(grassmann_dist(&s.frame_at(&[0.0]).unwrap(), &f.sections[0]).unwrap() < 1e-8);
    }

    #[test]
    fn chain_on_triangular_3() {
        let f = fixture_default::<f64>("triangular-3").unwrap();
        let secs: Vec<Section<f64>> = f.sections.iter().map(|b| Section::constant(b).unwrap()).collect();
        let params = McParams::new(300, 32, 1).with_burn_in(50);
        let chain = reduce_chain(&f.system, &f.p, &secs, &params).unwrap();
        assert_eq!(chain.dims(), vec![3, 2, 1]);
        assert!(chain.links.iter().all(|l| l.attribution == Branch::Restricted));
        assert!(chain.all_pass());
        assert_eq!(chain.terminal.dim, 1);
        let branches = f.closed_form.as_ref().unwrap().branches(f.p.as_slice());
        let lam = &chain.terminal.lambda;
        assert!((lam.value - branches[0]).abs() < 4.0 * lam.stderr, "{} vs {}", lam.value, branches[0]);
        let json = serde_json::to_string(&chain).unwrap();
        let back: ReductionChain<f64> = serde_json::from_str(&json).unwrap();
        assert_eq!(back.dims(), chain.dims());

        let bad = vec![secs[1].clone(), secs[0].clone()];
        assert!(matches!(reduce_chain(&f.system, &f.p, &bad, &params), Err(Error::NonNested(_))));
        let skew = Section::constant(&Matrix::from_columns(&[vec![0.0, 0.0, 1.0]]).unwrap()).unwrap();
        assert!(matches!(reduce_chain(&f.system, &f.p, &[secs[0].clone(), skew], &params), Err(Error::NonNested(_))));
        let empty = reduce_chain(&f.system, &f.p, &[], &params).unwrap();
        assert!(empty.links.is_empty() && empty.terminal.dim == 3 && empty.terminal.branch.is_none());
    }

    #[test]
    fn quotient_dominant_chain() {
        let sys = single(rows(&[&[0.5, 1.0], &[0.0, 3.0]]));
        let p = ProbabilityVector::uniform(1);
        let params = McParams::new(100, 8, 0).with_burn_in(20);
        let chain = reduce_chain(&sys, &p, &[Section::coordinate(2, 1).unwrap()], &params).unwrap();
        assert_eq!(chain.links[0].attribution, Branch::Quotient);
        assert_eq!(chain.terminal.branch, Some(Branch::Quotient));
        assert!((chain.terminal.lambda.value - 3.0_f64.ln()).abs() < 1e-12);
    }

    /// `A(t) = R(w (t + theta)) diag(2, 1/2) R(-w t)` leaves `V(t) = span(R(w t) e1)`
    /// invariant. In `2 pi t` frequencies it is a constant plus harmonic `k = w / pi`.
    fn rotating(w: f64) -> CocycleSystem<f64> {
        let theta = 0.3819660112501051;
        let (c, s) = ((w * theta).cos(), (w * theta).sin());
        let (g, h) = ((2.0 + 0.5) / 2.0, (2.0 - 0.5) / 2.0);
        let f1 = rows(&[&[1.0, 0.0], &[0.0, -1.0]]);
        let f2 = rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let k = (w / std::f64::consts::PI).round() as i64;
        let fiber = Fiber::Fourier {
            terms: vec![
                FourierTerm { k: vec![0], cos: rows(&[&[c, -s], &[s, c]]).scale(g), sin: Matrix::zeros(2, 2) },
                FourierTerm {
                    k: vec![k],
                    cos: f1.scale(h * c).add(&f2.scale(h * s)),
                    sin: f2.scale(h * c).sub(&f1.scale(h * s)),
                },
            ],
        };
        CocycleSystem::from_generators(vec![GeneratorRep::new(TorusPoint::new(&[theta]).unwrap(), fiber)]).unwrap()
    }

    fn line_field(w: f64, res: usize) -> Section<f64> {
        Section::sample_grid(vec![res], |t: &[f64]| Matrix::from_columns(&[vec![(w * t[0]).cos(), (w * t[0]).sin()]]))
            .unwrap()
    }

    #[test]
    fn grid_sections() {
        let pi = std::f64::consts::PI;
        let p = ProbabilityVector::uniform(1);
        let params = McParams::new(200, 8, 0);
        let sys = rotating(2.0 * pi);
        let v = line_field(2.0 * pi, 256);
        let c = check_invariant(&sys, &v, GRID_TOL, 64).unwrap();
        assert!(c.invariant, "defect {}", c.defect);
        let e = top_exponent_mc(&restrict(&sys, &v).unwrap(), &p, &params).unwrap();
        assert!((e.value - 2.0_f64.ln()).abs() < 1e-3, "{}", e.value);
        let e = top_exponent_mc(&quotient(&sys, &v).unwrap(), &p, &params).unwrap();
        assert!((e.value + 2.0_f64.ln()).abs() < 1e-3, "{}", e.value);

        // a half-turning line field admits no continuous frame; the sign jump
        // costs two interpolation cells of the sampled restriction
        let res = 256;
        let sys = rotating(pi);
        let v = line_field(pi, res);
        assert!(check_invariant(&sys, &v, GRID_TOL, 64).unwrap().invariant);
        let e = top_exponent_mc(&restrict(&sys, &v).unwrap(), &p, &params).unwrap();
        assert!((e.value - 2.0_f64.ln()).abs() < 4.0 / res as f64, "{}", e.value);

        let s = serde_json::to_string(&v).unwrap();
        assert!(s.starts_with(r#"{"kind":"grid""#));
        let back: Section<f64> = serde_json::from_str(&s).unwrap();
        assert_eq!(back.k(), 1);
        let jumpy = vec![
            Matrix::from_columns(&[vec![1.0, 0.0]]).unwrap(),
            Matrix::from_columns(&[vec![0.0, 1.0]]).unwrap(),
        ];
        assert!(Section::<f64>::grid(vec![2], jumpy).is_err());
    }

    #[test]
    fn section_json() {
        let s = Section::<f64>::coordinate(3, 1).unwrap();
        let j = serde_json::to_string(&s).unwrap();
        assert_eq!(j, r#"{"kind":"constant","basis":[[1.0],[0.0],[0.0]]}"#);
        let b: Section<f64> = serde_json::from_str(r#"{"kind":"constant","basis":[[2.0],[0.0]]}"#).unwrap();
        assert_eq!(b, Section::coordinate(2, 1).unwrap());
        assert!(serde_json::from_str::<Section<f64>>(r#"{"kind":"constant","basis":[[0.0],[0.0]]}"#).is_err());
    }
}
