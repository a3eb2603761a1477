use serde::{Deserialize, Serialize};

use crate::algebra::{check_invertible, CompoundMap, Matrix};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// One trigonometric term `C cos(2 pi <k,t>) + S sin(2 pi <k,t>)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct FourierTerm<T> {
    pub k: Vec<i64>,
    pub cos: Matrix<T>,
    pub sin: Matrix<T>,
}

/// Matrix values sampled on a uniform periodic grid, interpolated multilinearly.
///
/// `nodes` is flattened with the last torus coordinate varying fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGrid<T>", into = "RawGrid<T>", bound = "T: Real")]
pub struct GridFiber<T> {
    resolution: Vec<usize>,
    nodes: Vec<Matrix<T>>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Real")]
struct RawGrid<T> {
    resolution: Vec<usize>,
    nodes: Vec<Matrix<T>>,
}

impl<T: Real> TryFrom<RawGrid<T>> for GridFiber<T> {
    type Error = Error;

    fn try_from(raw: RawGrid<T>) -> Result<Self> {
        GridFiber::new(raw.resolution, raw.nodes)
    }
}

impl<T: Real> From<GridFiber<T>> for RawGrid<T> {
    fn from(g: GridFiber<T>) -> Self {
        RawGrid { resolution: g.resolution, nodes: g.nodes }
    }
}

impl<T: Real> GridFiber<T> {
    pub fn new(resolution: Vec<usize>, nodes: Vec<Matrix<T>>) -> Result<Self> {
        if resolution.is_empty() || resolution.iter().any(|&r| r == 0) {
            return Err(Error::InvalidSystem("grid resolution must be positive".into()));
        }
        let count: usize = resolution.iter().product();
        if nodes.len() != count {
            return Err(Error::InvalidSystem(format!(
                "grid expects {count} node matrices, got {}",
                nodes.len()
            )));
        }
        let d = nodes[0].rows();
        if nodes.iter().any(|n| n.rows() != d || n.cols() != d) {
            return Err(Error::InvalidSystem("grid nodes must share a square shape".into()));
        }
        Ok(Self { resolution, nodes })
    }

    /// Samples `f` at the grid nodes `t = idx / resolution`.
    pub fn sample(resolution: Vec<usize>, mut f: impl FnMut(&[T]) -> Matrix<T>) -> Result<Self> {
        let count: usize = resolution.iter().product();
        let mut nodes = Vec::with_capacity(count);
        let mut t = vec![T::zero(); resolution.len()];
        for flat in 0..count {
            let mut rem = flat;
            for j in (0..resolution.len()).rev() {
                t[j] = T::from_usize_lossy(rem % resolution[j]) / T::from_usize_lossy(resolution[j]);
                rem /= resolution[j];
            }
            nodes.push(f(&t));
        }
        Self::new(resolution, nodes)
    }

    pub fn resolution(&self) -> &[usize] {
        &self.resolution
    }

    pub fn nodes(&self) -> &[Matrix<T>] {
        &self.nodes
    }

    fn eval_into(&self, t: &[T], out: &mut Matrix<T>) {
        let m = self.resolution.len();
        for x in out.as_mut_slice() {
            *x = T::zero();
        }
        // 2^m corners of the enclosing cell
        for corner in 0..(1usize << m) {
            let mut weight = T::one();
            let mut flat = 0usize;
            for j in 0..m {
                let r = self.resolution[j];
                let s = t[j] * T::from_usize_lossy(r);
                let base = s.floor();
                let frac = s - base;
                let i0 = base.to_usize().unwrap_or(0) % r;
                let hi = (corner >> j) & 1 == 1;
                let idx = if hi { (i0 + 1) % r } else { i0 };
                weight *= if hi { frac } else { T::one() - frac };
                flat = flat * r + idx;
            }
            if weight != T::zero() {
                out.axpy(weight, &self.nodes[flat]);
            }
        }
    }
}

/// `k`-th exterior power of another fiber.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "RawCompound<T>", into = "RawCompound<T>", bound = "T: Real")]
pub struct CompoundFiber<T> {
    base: Box<Fiber<T>>,
    map: CompoundMap,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Real")]
struct RawCompound<T> {
    k: usize,
    base: Box<Fiber<T>>,
}

impl<T: Real> TryFrom<RawCompound<T>> for CompoundFiber<T> {
    type Error = Error;

    fn try_from(raw: RawCompound<T>) -> Result<Self> {
        CompoundFiber::new(*raw.base, raw.k)
    }
}

impl<T: Real> From<CompoundFiber<T>> for RawCompound<T> {
    fn from(c: CompoundFiber<T>) -> Self {
        RawCompound { k: c.map.degree(), base: c.base }
    }
}

impl<T: PartialEq> PartialEq for CompoundFiber<T> {
    fn eq(&self, other: &Self) -> bool {
        self.map.degree() == other.map.degree() && self.base == other.base
    }
}

impl<T: Real> CompoundFiber<T> {
    pub fn new(base: Fiber<T>, k: usize) -> Result<Self> {
        let map = CompoundMap::new(base.dim(), k)?;
        Ok(Self { base: Box::new(base), map })
    }

    pub fn base(&self) -> &Fiber<T> {
        &self.base
    }

    pub fn degree(&self) -> usize {
        self.map.degree()
    }
}

/// Matrix-valued map on the torus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", bound = "T: Real")]
pub enum Fiber<T> {
    Constant { matrix: Matrix<T> },
    Fourier { terms: Vec<FourierTerm<T>> },
    Grid(GridFiber<T>),
    Compound(CompoundFiber<T>),
}

/// Reusable buffers for fiber evaluation in hot loops.
#[derive(Clone, Debug, Default)]
pub struct FiberScratch<T> {
    base: Vec<Matrix<T>>,
}

impl<T: Real> Fiber<T> {
    pub fn constant(matrix: Matrix<T>) -> Self {
        Fiber::Constant { matrix }
    }

    pub fn dim(&self) -> usize {
        match self {
            Fiber::Constant { matrix } => matrix.rows(),
            Fiber::Fourier { terms } => terms.first().map_or(0, |t| t.cos.rows()),
            Fiber::Grid(g) => g.nodes[0].rows(),
            Fiber::Compound(c) => c.map.dim(),
        }
    }

    /// Constant and Fourier fibers are smooth, so fiber-Lipschitz bounds derived
    /// from them are reliable; grid fibers only give heuristic bounds.
    pub fn is_smooth(&self) -> bool {
        match self {
            Fiber::Constant { .. } | Fiber::Fourier { .. } => true,
            Fiber::Grid(_) => false,
            Fiber::Compound(c) => c.base.is_smooth(),
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            Fiber::Constant { .. } => true,
            Fiber::Fourier { terms } => terms.iter().all(|t| t.k.iter().all(|&k| k == 0)),
            Fiber::Grid(g) => g.nodes.iter().all(|n| *n == g.nodes[0]),
            Fiber::Compound(c) => c.base.is_constant(),
        }
    }

    /// Evaluates without any singularity check.
    pub fn eval(&self, t: &[T]) -> Matrix<T> {
        let d = self.dim();
        let mut out = Matrix::zeros(d, d);
        self.eval_into(t, &mut out, &mut FiberScratch::default());
        out
    }

    pub fn eval_into(&self, t: &[T], out: &mut Matrix<T>, scratch: &mut FiberScratch<T>) {
        self.eval_into_level(t, out, scratch, 0);
    }

    fn eval_into_level(&self, t: &[T], out: &mut Matrix<T>, scratch: &mut FiberScratch<T>, level: usize) {
        match self {
            Fiber::Constant { matrix } => out.as_mut_slice().copy_from_slice(matrix.as_slice()),
            Fiber::Fourier { terms } => {
                for x in out.as_mut_slice() {
                    *x = T::zero();
                }
                let two_pi = T::TAU();
                for term in terms {
                    let phase: T = term
                        .k
                        .iter()
                        .zip(t)
                        .map(|(&k, &x)| T::lit(k as f64) * x)
                        .sum();
                    let (s, c) = (two_pi * phase).sin_cos();
                    out.axpy(c, &term.cos);
                    if s != T::zero() {
                        out.axpy(s, &term.sin);
                    }
                }
            }
            Fiber::Grid(g) => g.eval_into(t, out),
            Fiber::Compound(c) => {
                let bd = c.base.dim();
                if scratch.base.len() <= level {
                    scratch.base.resize(level + 1, Matrix::zeros(bd, bd));
                }
                let mut buf = std::mem::replace(&mut scratch.base[level], Matrix::zeros(0, 0));
                if buf.rows() != bd {
                    buf = Matrix::zeros(bd, bd);
                }
                c.base.eval_into_level(t, &mut buf, scratch, level + 1);
                c.map.apply_into(&buf, out);
                scratch.base[level] = buf;
            }
        }
    }

    /// `k`-th exterior power; constants are expanded directly.
    pub fn compound(&self, k: usize) -> Result<Self> {
        if k == 1 {
            return Ok(self.clone());
        }
        match self {
            Fiber::Constant { matrix } => Ok(Fiber::Constant { matrix: crate::algebra::compound(matrix, k)? }),
            _ => Ok(Fiber::Compound(CompoundFiber::new(self.clone(), k)?)),
        }
    }

    pub(crate) fn validate_shape(&self, d: usize, m: usize) -> Result<()> {
        match self {
            Fiber::Constant { matrix } => {
                if matrix.rows() != d || matrix.cols() != d {
                    return Err(Error::InvalidSystem(format!("constant fiber is not {d}x{d}")));
                }
            }
            Fiber::Fourier { terms } => {
                if terms.is_empty() {
                    return Err(Error::InvalidSystem("Fourier fiber without terms".into()));
                }
                for term in terms {
                    if term.k.len() != m {
                        return Err(Error::InvalidSystem(format!(
                            "frequency {:?} does not have torus dimension {m}",
                            term.k
                        )));
                    }
                    for mat in [&term.cos, &term.sin] {
                        if mat.rows() != d || mat.cols() != d {
                            return Err(Error::InvalidSystem(format!("Fourier coefficient is not {d}x{d}")));
                        }
                    }
                }
            }
            Fiber::Grid(g) => {
                if g.resolution.len() != m {
                    return Err(Error::InvalidSystem(format!("grid resolution is not {m}-dimensional")));
                }
                if g.nodes[0].rows() != d {
                    return Err(Error::InvalidSystem(format!("grid nodes are not {d}x{d}")));
                }
            }
            Fiber::Compound(c) => {
                c.base.validate_shape(c.base.dim(), m)?;
                if c.map.dim() != d {
                    return Err(Error::InvalidSystem(format!("compound fiber is not {d}x{d}")));
                }
            }
        }
        Ok(())
    }

    /// Checks invertibility on a validation grid of `per_dim^m` points.
    pub(crate) fn validate_invertible(&self, m: usize, per_dim: usize) -> Result<()> {
        if let Fiber::Compound(c) = self {
            return c.base.validate_invertible(m, per_dim);
        }
        if self.is_constant() {
            check_invertible(&self.eval(&vec![T::zero(); m]))?;
            return Ok(());
        }
        for t in validation_grid::<T>(m, per_dim) {
            check_invertible(&self.eval(&t))?;
        }
        Ok(())
    }
}

/// Uniform grid `{idx / per_dim}` on `[0,1)^m`, last coordinate fastest.
pub fn validation_grid<T: Real>(m: usize, per_dim: usize) -> Vec<Vec<T>> {
    let count = per_dim.pow(m as u32);
    (0..count)
        .map(|flat| {
            let mut rem = flat;
            let mut t = vec![T::zero(); m];
            for j in (0..m).rev() {
                t[j] = T::from_usize_lossy(rem % per_dim) / T::from_usize_lossy(per_dim);
                rem /= per_dim;
            }
            t
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m2(a: f64, b: f64, c: f64, d: f64) -> Matrix<f64> {
        Matrix::from_rows(&[vec![a, b], vec![c, d]]).unwrap()
    }

    #[test]
    fn constant_and_zero_frequency() {
        let c = m2(1.0, 2.0, 3.0, 4.0);
        assert_eq!(Fiber::constant(c.clone()).eval(&[0.37]), c);
        let f = Fiber::Fourier { terms: vec![FourierTerm { k: vec![0], cos: c.clone(), sin: m2(9.0, 9.0, 9.0, 9.0) }] };
        assert_eq!(f.eval(&[0.81]), c);
    }

    #[test]
    fn fourier_pointwise() {
        let c = m2(1.0, 0.0, 0.0, 0.0);
        let f = Fiber::Fourier { terms: vec![FourierTerm { k: vec![1], cos: c, sin: Matrix::zeros(2, 2) }] };
        let a = f.eval(&[0.25]);
        assert!(a.max_abs() < 1e-15);
        let t = 0.1_f64;
        assert!((f.eval(&[t])[(0, 0)] - (std::f64::consts::TAU * t).cos()).abs() < 1e-15);
    }

    #[test]
    fn grid_interpolates_linearly_and_wraps() {
        let g = GridFiber::new(vec![2], vec![m2(1.0, 0.0, 0.0, 1.0), m2(3.0, 0.0, 0.0, 3.0)]).unwrap();
        let f = Fiber::Grid(g);
        assert!((f.eval(&[0.25])[(0, 0)] - 2.0).abs() < 1e-15);
        // between node 1 (t = 0.5) and node 0 again (t = 1)
        assert!((f.eval(&[0.75])[(0, 0)] - 2.0).abs() < 1e-15);
        assert!((f.eval(&[0.5])[(0, 0)] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn json_tags() {
        let f = Fiber::constant(m2(1.0, 0.0, 0.0, 2.0));
        let s = serde_json::to_string(&f).unwrap();
        assert_eq!(s, r#"{"type":"constant","matrix":[[1.0,0.0],[0.0,2.0]]}"#);
        let c = Fiber::Compound(CompoundFiber::new(Fiber::Fourier {
            terms: vec![FourierTerm { k: vec![1], cos: Matrix::identity(3), sin: Matrix::zeros(3, 3) }],
        }, 2).unwrap());
        let back: Fiber<f64> = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        assert!(serde_json::from_str::<Fiber<f64>>(r#"{"type":"grid","resolution":[3],"nodes":[[[1.0]]]}"#).is_err());
    }

    #[test]
    fn nested_compound_evaluates() {
        let base = Fiber::Fourier {
            terms: vec![
                FourierTerm { k: vec![0], cos: Matrix::from_diag(&[2.0, 3.0, 5.0]), sin: Matrix::zeros(3, 3) },
                FourierTerm { k: vec![1], cos: Matrix::zeros(3, 3), sin: Matrix::identity(3) },
            ],
        };
        let t = [0.2_f64];
        let top = base.compound(3).unwrap();
        let direct = crate::algebra::det(&base.eval(&t));
        assert!((top.eval(&t)[(0, 0)] - direct).abs() < 1e-12);
    }
}
