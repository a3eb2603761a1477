//! Named test systems with known structure.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{Map, Value};

use super::fiber::{Fiber, FourierTerm};
use super::system::{CocycleSystem, GeneratorRep, ProbabilityVector};
use crate::algebra::{Matrix, TorusPoint};
use crate::error::{Error, Result};
use crate::scalar::Real;

pub const FIXTURE_NAMES: &[&str] = &[
    "identity",
    "diagonal-const",
    "triangular-const",
    "rotation-band",
    "schrodinger-like",
    "irreducible-2d",
    "triangular-fourier",
    "triangular-3",
    "random-const",
];

/// Exact spectrum of an upper-triangular cocycle: the exponents are the
/// `p`-weighted torus averages of `log|diagonal entry|`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClosedForm<T> {
    /// `log_means[i][j]` = mean over the torus of `log|A_i(t)_{jj}|`.
    pub log_means: Vec<Vec<T>>,
}

impl<T: Real> ClosedForm<T> {
    /// Per-diagonal-position exponents, in position order.
    pub fn branches(&self, p: &[T]) -> Vec<T> {
        let d = self.log_means[0].len();
        (0..d).map(|j| self.log_means.iter().zip(p).map(|(l, &pi)| pi * l[j]).sum()).collect()
    }

    /// Exponents sorted descending.
    pub fn spectrum(&self, p: &[T]) -> Vec<T> {
        let mut s = self.branches(p);
        s.sort_by(|a, b| b.partial_cmp(a).expect("finite exponents"));
        s
    }

    pub fn top(&self, p: &[T]) -> T {
        self.spectrum(p)[0]
    }
}

/// A fixture system with default weights and ground-truth metadata.
#[derive(Clone, Debug)]
pub struct Fixture<T> {
    pub name: String,
    pub system: CocycleSystem<T>,
    pub p: ProbabilityVector<T>,
    pub closed_form: Option<ClosedForm<T>>,
    /// Declared constant invariant sections as basis columns, nested, largest first.
    pub sections: Vec<Matrix<T>>,
}

impl<T: Real> Fixture<T> {
    pub fn closed_form_spectrum(&self, p: &ProbabilityVector<T>) -> Option<Vec<T>> {
        self.closed_form.as_ref().map(|c| c.spectrum(p.as_slice()))
    }
}

struct Params<'a> {
    map: &'a Map<String, Value>,
    used: Vec<&'static str>,
}

impl<'a> Params<'a> {
    fn f64(&mut self, key: &'static str, default: f64) -> Result<f64> {
        self.used.push(key);
        match self.map.get(key) {
            None => Ok(default),
            Some(v) => v.as_f64().ok_or_else(|| bad(key, "a number")),
        }
    }

    fn usize(&mut self, key: &'static str, default: usize) -> Result<usize> {
        self.used.push(key);
        match self.map.get(key) {
            None => Ok(default),
            Some(v) => v.as_u64().map(|x| x as usize).ok_or_else(|| bad(key, "a non-negative integer")),
        }
    }

    fn vec(&mut self, key: &'static str, default: &[f64]) -> Result<Vec<f64>> {
        self.used.push(key);
        match self.map.get(key) {
            None => Ok(default.to_vec()),
            Some(Value::Array(a)) => a.iter().map(|x| x.as_f64().ok_or_else(|| bad(key, "an array of numbers"))).collect(),
            Some(_) => Err(bad(key, "an array of numbers")),
        }
    }

    fn finish(self) -> Result<()> {
        if let Some(k) = self.map.keys().find(|k| !self.used.contains(&k.as_str())) {
            return Err(Error::InvalidParameter(format!("unknown fixture parameter `{k}`")));
        }
        Ok(())
    }
}

fn bad(key: &str, what: &str) -> Error {
    Error::InvalidParameter(format!("fixture parameter `{key}` must be {what}"))
}

fn same_len(name: &str, lens: &[usize]) -> Result<usize> {
    let n = lens[0];
    if n == 0 || lens.iter().any(|&l| l != n) {
        return Err(Error::InvalidParameter(format!("{name}: parameter arrays must be non-empty and of equal length")));
    }
    Ok(n)
}

/// Translation of generator `i`: coordinate `j` is `frac((i+1) g_j)` with
/// `g_0` the golden-ratio conjugate and `g_j = frac(sqrt(prime_j))` after that.
pub fn default_theta<T: Real>(i: usize, m: usize) -> TorusPoint<T> {
    const PRIMES: [f64; 8] = [2.0, 3.0, 5.0, 7.0, 11.0, 13.0, 17.0, 19.0];
    let coords: Vec<T> = (0..m)
        .map(|j| {
            let g = if j == 0 { (5.0_f64.sqrt() - 1.0) / 2.0 } else { PRIMES[(j - 1) % 8].sqrt().fract() };
            T::lit(((i + 1) as f64 * g).fract())
        })
        .collect();
    TorusPoint::new(&coords).expect("finite")
}

fn mat<T: Real>(rows: &[&[f64]]) -> Matrix<T> {
    Matrix::from_rows(&rows.iter().map(|r| r.iter().map(|&x| T::lit(x)).collect()).collect::<Vec<_>>())
        .expect("well-formed literal")
}

fn rot(x: f64) -> [[f64; 2]; 2] {
    [[x.cos(), -x.sin()], [x.sin(), x.cos()]]
}

fn mul2(a: [[f64; 2]; 2], b: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let mut c = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

fn from2<T: Real>(a: [[f64; 2]; 2]) -> Matrix<T> {
    mat(&[&a[0], &a[1]])
}

fn e0(m: usize) -> Vec<i64> {
    let mut k = vec![0; m];
    k[0] = 1;
    k
}

fn build<T: Real>(m: usize, fibers: Vec<Fiber<T>>) -> Result<CocycleSystem<T>> {
    let gens = fibers.into_iter().enumerate().map(|(i, f)| GeneratorRep::new(default_theta(i, m), f)).collect();
    CocycleSystem::from_generators(gens)
}

fn basis<T: Real>(d: usize, k: usize) -> Matrix<T> {
    Matrix::from_fn(d, k, |i, j| if i == j { T::one() } else { T::zero() })
}

/// Builds a catalog system. `params` may override the documented defaults;
/// unknown keys are rejected.
pub fn fixture<T: Real>(name: &str, params: &Map<String, Value>) -> Result<Fixture<T>> {
    let mut ps = Params { map: params, used: Vec::new() };
    let m = ps.usize("m", 1)?;
    if m == 0 {
        return Err(bad("m", "positive"));
    }
    let (system, closed_form, sections) = match name {
        "identity" => {
            let d = ps.usize("d", 2)?;
            let n = ps.usize("generators", 2)?;
            if d == 0 || n == 0 {
                return Err(Error::InvalidParameter("identity: d and generators must be positive".into()));
            }
            let sys = build(m, (0..n).map(|_| Fiber::constant(Matrix::identity(d))).collect())?;
            (sys, Some(ClosedForm { log_means: vec![vec![T::zero(); d]; n] }), Vec::new())
        }
        "diagonal-const" => {
            let a = ps.vec("a", &[2.0, 3.0])?;
            let b = ps.vec("b", &[0.5, 1.0 / 3.0])?;
            same_len(name, &[a.len(), b.len()])?;
            let fibers = a.iter().zip(&b).map(|(&x, &y)| Fiber::constant(mat(&[&[x, 0.0], &[0.0, y]]))).collect();
            let logs = a.iter().zip(&b).map(|(&x, &y)| vec![T::lit(x.abs().ln()), T::lit(y.abs().ln())]).collect();
            (build(m, fibers)?, Some(ClosedForm { log_means: logs }), Vec::new())
        }
        "triangular-const" => {
            let a = ps.vec("a", &[2.0, 1.5])?;
            let b = ps.vec("b", &[0.5, 0.8])?;
            let c = ps.vec("c", &[1.0, -0.5])?;
            let n = same_len(name, &[a.len(), b.len(), c.len()])?;
            let fibers = (0..n).map(|i| Fiber::constant(mat(&[&[a[i], c[i]], &[0.0, b[i]]]))).collect();
            let logs = (0..n).map(|i| vec![T::lit(a[i].abs().ln()), T::lit(b[i].abs().ln())]).collect();
            (build(m, fibers)?, Some(ClosedForm { log_means: logs }), vec![basis(2, 1)])
        }
        "rotation-band" => {
            let c = ps.vec("c", &[0.0, 0.7])?;
            same_len(name, &[c.len()])?;
            let j = [[0.0, -1.0], [1.0, 0.0]];
            let fibers = c
                .iter()
                .map(|&ci| Fiber::Fourier {
                    terms: vec![FourierTerm { k: e0(m), cos: from2(rot(ci)), sin: from2(mul2(rot(ci), j)) }],
                })
                .collect();
            let n = c.len();
            (build(m, fibers)?, Some(ClosedForm { log_means: vec![vec![T::zero(); 2]; n] }), Vec::new())
        }
        "schrodinger-like" => {
            let e = ps.vec("E", &[0.0, 0.5])?;
            let lam = ps.vec("lambda", &[3.0, 3.5])?;
            same_len(name, &[e.len(), lam.len()])?;
            let fibers = e
                .iter()
                .zip(&lam)
                .map(|(&ei, &li)| Fiber::Fourier {
                    terms: vec![
                        FourierTerm { k: vec![0; m], cos: mat(&[&[ei, -1.0], &[1.0, 0.0]]), sin: Matrix::zeros(2, 2) },
                        FourierTerm { k: e0(m), cos: mat(&[&[-li, 0.0], &[0.0, 0.0]]), sin: Matrix::zeros(2, 2) },
                    ],
                })
                .collect();
            (build(m, fibers)?, None, Vec::new())
        }
        "irreducible-2d" => {
            // A_i(t) = diag(s_i, 1/s_i) R(2 pi t + c_i) E, E a fixed mild stretch
            let sig = ps.vec("sigma", &[3.4, 3.8])?;
            let c = ps.vec("c", &[0.0, std::f64::consts::FRAC_PI_2])?;
            let log_tau = ps.f64("log_tau", 0.045)?;
            let tau_angle = ps.f64("tau_angle", std::f64::consts::FRAC_PI_4)?;
            same_len(name, &[sig.len(), c.len()])?;
            let tau = log_tau.exp();
            let stretch = mul2(mul2(rot(tau_angle), [[tau, 0.0], [0.0, 1.0 / tau]]), rot(-tau_angle));
            let j = [[0.0, -1.0], [1.0, 0.0]];
            let fibers = sig
                .iter()
                .zip(&c)
                .map(|(&s, &ci)| {
                    let dr = mul2([[s, 0.0], [0.0, 1.0 / s]], rot(ci));
                    Fiber::Fourier {
                        terms: vec![FourierTerm {
                            k: e0(m),
                            cos: from2(mul2(dr, stretch)),
                            sin: from2(mul2(mul2(dr, j), stretch)),
                        }],
                    }
                })
                .collect();
            (build(m, fibers)?, None, Vec::new())
        }
        "triangular-fourier" => {
            // [[alpha + beta cos(2 pi t), c + s sin(2 pi t)], [0, b]]
            let alpha = ps.vec("alpha", &[2.0, 1.5])?;
            let beta = ps.vec("beta", &[0.5, 0.3])?;
            let b = ps.vec("b", &[0.6, 0.9])?;
            let c = ps.vec("c", &[0.7, -0.4])?;
            let s = ps.vec("s", &[0.2, 0.1])?;
            let n = same_len(name, &[alpha.len(), beta.len(), b.len(), c.len(), s.len()])?;
            if (0..n).any(|i| alpha[i].abs() <= beta[i].abs()) {
                return Err(Error::InvalidParameter("triangular-fourier needs |alpha| > |beta|".into()));
            }
            let fibers = (0..n)
                .map(|i| Fiber::Fourier {
                    terms: vec![
                        FourierTerm { k: vec![0; m], cos: mat(&[&[alpha[i], c[i]], &[0.0, b[i]]]), sin: Matrix::zeros(2, 2) },
                        FourierTerm { k: e0(m), cos: mat(&[&[beta[i], 0.0], &[0.0, 0.0]]), sin: mat(&[&[0.0, s[i]], &[0.0, 0.0]]) },
                    ],
                })
                .collect();
            // mean of log|a + b cos| over the circle is log((|a| + sqrt(a^2 - b^2)) / 2)
            let logs = (0..n)
                .map(|i| {
                    let a = alpha[i].abs();
                    vec![T::lit(((a + (a * a - beta[i] * beta[i]).sqrt()) / 2.0).ln()), T::lit(b[i].abs().ln())]
                })
                .collect();
            (build(m, fibers)?, Some(ClosedForm { log_means: logs }), vec![basis(2, 1)])
        }
        "triangular-3" => {
            let diag1 = ps.vec("diag1", &[2.0, 1.0, 0.5])?;
            let diag2 = ps.vec("diag2", &[1.5, 1.2, 0.4])?;
            let up1 = ps.vec("upper1", &[0.5, 0.3, -0.2])?;
            let up2 = ps.vec("upper2", &[-0.4, 0.6, 0.1])?;
            if [diag1.len(), diag2.len(), up1.len(), up2.len()].iter().any(|&l| l != 3) {
                return Err(Error::InvalidParameter("triangular-3 parameters have length 3".into()));
            }
            let tri = |dg: &[f64], up: &[f64]| -> Matrix<T> {
                mat(&[&[dg[0], up[0], up[1]], &[0.0, dg[1], up[2]], &[0.0, 0.0, dg[2]]])
            };
            let fibers = vec![Fiber::constant(tri(&diag1, &up1)), Fiber::constant(tri(&diag2, &up2))];
            let logs = [&diag1, &diag2].iter().map(|dg| dg.iter().map(|x| T::lit(x.abs().ln())).collect()).collect();
            (build(m, fibers)?, Some(ClosedForm { log_means: logs }), vec![basis(3, 2), basis(3, 1)])
        }
        "random-const" => {
            let d = ps.usize("d", 3)?;
            let n = ps.usize("generators", 2)?;
            let seed = ps.usize("seed", 7)? as u64;
            if d == 0 || n == 0 {
                return Err(Error::InvalidParameter("random-const: d and generators must be positive".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let fibers = (0..n)
                .map(|_| {
                    Fiber::constant(Matrix::from_fn(d, d, |i, j| {
                        let x: f64 = rng.random_range(-1.0..1.0);
                        T::lit(if i == j { x + 1.0 } else { x })
                    }))
                })
                .collect();
            (build(m, fibers)?, None, Vec::new())
        }
        other => return Err(Error::UnknownFixture(other.to_string())),
    };
    ps.finish()?;
    let p = ProbabilityVector::uniform(system.n_generators());
    Ok(Fixture { name: name.to_string(), system, p, closed_form, sections })
}

/// Catalog fixture with default parameters.
pub fn fixture_default<T: Real>(name: &str) -> Result<Fixture<T>> {
    fixture(name, &Map::new())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn catalog_builds() {
        for name in FIXTURE_NAMES {
            let f = fixture_default::<f64>(name).unwrap();
            assert_eq!(f.system.n_generators(), f.p.len());
            for s in &f.sections {
                assert_eq!(s.rows(), f.system.d());
            }
        }
        assert!(matches!(fixture_default::<f64>("nope"), Err(Error::UnknownFixture(_))));
    }

    #[test]
    fn diagonal_closed_form() {
        let f = fixture_default::<f64>("diagonal-const").unwrap();
        let s = f.closed_form_spectrum(&f.p).unwrap();
        let l = (2.0_f64.ln() + 3.0_f64.ln()) / 2.0;
        assert!((s[0] - l).abs() < 1e-15 && (s[1] + l).abs() < 1e-15);
        assert!((s[0] - 0.8959).abs() < 1e-4);
        let one = fixture::<f64>("diagonal-const", json!({"a": [1.0, 1.0], "b": [1.0, 1.0]}).as_object().unwrap()).unwrap();
        assert_eq!(one.closed_form_spectrum(&one.p).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn params_are_checked() {
        let bad = json!({"a": [2.0], "b": [0.5, 0.5]});
        assert!(fixture::<f64>("diagonal-const", bad.as_object().unwrap()).is_err());
        let unknown = json!({"zzz": 1});
        assert!(fixture::<f64>("identity", unknown.as_object().unwrap()).is_err());
    }

    #[test]
    fn rotation_band_is_orthogonal() {
        let f = fixture_default::<f64>("rotation-band").unwrap();
        let a = f.system.eval(1, &[0.37]);
        assert!(a.transpose().matmul(&a).sub(&Matrix::identity(2)).max_abs() < 1e-14);
        let direct = rot(std::f64::consts::TAU * 0.37 + 0.7);
        assert!((a[(0, 1)] - direct[0][1]).abs() < 1e-14);
    }

    #[test]
    fn thetas_are_golden_multiples() {
        let t: TorusPoint<f64> = default_theta(1, 2);
        assert!((t.as_slice()[0] - (5.0_f64.sqrt() - 1.0).fract()).abs() < 1e-15);
        assert!((t.as_slice()[1] - (2.0 * 2.0_f64.sqrt().fract()).fract()).abs() < 1e-15);
    }
}
