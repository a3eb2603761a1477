use rand::Rng;
use serde::{Deserialize, Serialize};

use super::fiber::{Fiber, FiberScratch};
use crate::algebra::{binomial, check_invertible, Matrix, TorusPoint};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Default number of validation points per torus dimension.
pub const VALIDATION_PER_DIM: usize = 64;
const VALIDATION_MAX_POINTS: usize = 4096;

/// A quasi-periodic generator: translation `theta` and fiber map `A(t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct GeneratorRep<T> {
    pub theta: TorusPoint<T>,
    pub fiber: Fiber<T>,
}

impl<T: Real> GeneratorRep<T> {
    pub fn new(theta: TorusPoint<T>, fiber: Fiber<T>) -> Self {
        Self { theta, fiber }
    }
}

/// `A(t)` with a singular-fiber check.
pub fn eval_fiber<T: Real>(g: &GeneratorRep<T>, t: &TorusPoint<T>) -> Result<Matrix<T>> {
    if t.dim() != g.theta.dim() {
        return Err(Error::Dimension(format!("t has dimension {}, expected {}", t.dim(), g.theta.dim())));
    }
    let a = g.fiber.eval(t.as_slice());
    check_invertible(&a)?;
    Ok(a)
}

/// Validated family of generators sharing fiber dimension `d` and torus dimension `m`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSystem<T>", into = "RawSystem<T>", bound = "T: Real")]
pub struct CocycleSystem<T> {
    d: usize,
    m: usize,
    generators: Vec<GeneratorRep<T>>,
    irrational_flags: Vec<bool>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Real", deny_unknown_fields)]
struct RawSystem<T> {
    d: usize,
    m: usize,
    generators: Vec<GeneratorRep<T>>,
    irrational_flags: Vec<bool>,
}

impl<T: Real> TryFrom<RawSystem<T>> for CocycleSystem<T> {
    type Error = Error;

    fn try_from(r: RawSystem<T>) -> Result<Self> {
        CocycleSystem::new(r.d, r.m, r.generators, r.irrational_flags)
    }
}

impl<T: Real> From<CocycleSystem<T>> for RawSystem<T> {
    fn from(s: CocycleSystem<T>) -> Self {
        RawSystem { d: s.d, m: s.m, generators: s.generators, irrational_flags: s.irrational_flags }
    }
}

impl<T: Real> CocycleSystem<T> {
    /// Validates shapes and invertibility of every fiber on a validation grid.
    ///
    /// Rational independence of a translation cannot be decided in floating
    /// point, so the caller flags it; at least one generator must be flagged.
    pub fn new(d: usize, m: usize, generators: Vec<GeneratorRep<T>>, irrational_flags: Vec<bool>) -> Result<Self> {
        let sys = Self::new_unchecked_invertibility(d, m, generators, irrational_flags)?;
        let per_dim = validation_per_dim(m);
        for g in &sys.generators {
            g.fiber.validate_invertible(m, per_dim)?;
        }
        Ok(sys)
    }

    fn new_unchecked_invertibility(
        d: usize,
        m: usize,
        generators: Vec<GeneratorRep<T>>,
        irrational_flags: Vec<bool>,
    ) -> Result<Self> {
        if d == 0 || m == 0 {
            return Err(Error::InvalidSystem("d and m must be positive".into()));
        }
        if generators.is_empty() {
            return Err(Error::InvalidSystem("at least one generator is required".into()));
        }
        if irrational_flags.len() != generators.len() {
            return Err(Error::InvalidSystem(format!(
                "{} irrational flags for {} generators",
                irrational_flags.len(),
                generators.len()
            )));
        }
        if !irrational_flags.iter().any(|&f| f) {
            return Err(Error::InvalidSystem("no translation is flagged rationally independent".into()));
        }
        for g in &generators {
            if g.theta.dim() != m {
                return Err(Error::InvalidSystem(format!("theta has dimension {}, expected {m}", g.theta.dim())));
            }
            g.fiber.validate_shape(d, m)?;
        }
        Ok(Self { d, m, generators, irrational_flags })
    }

    /// Convenience constructor with every translation flagged irrational.
    pub fn from_generators(generators: Vec<GeneratorRep<T>>) -> Result<Self> {
        let first = generators
            .first()
            .ok_or_else(|| Error::InvalidSystem("at least one generator is required".into()))?;
        let (d, m) = (first.fiber.dim(), first.theta.dim());
        let n = generators.len();
        Self::new(d, m, generators, vec![true; n])
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("system serializes")
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn m(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn n_generators(&self) -> usize {
        self.generators.len()
    }

    pub fn generators(&self) -> &[GeneratorRep<T>] {
        &self.generators
    }

    pub fn generator(&self, i: usize) -> &GeneratorRep<T> {
        &self.generators[i]
    }

    pub fn irrational_flags(&self) -> &[bool] {
        &self.irrational_flags
    }

    #[inline]
    pub fn theta(&self, i: usize) -> &[T] {
        self.generators[i].theta.as_slice()
    }

    /// Evaluates `A_i(t)` into `out` without a singularity check (fibers were
    /// validated at construction).
    #[inline]
    pub fn eval_into(&self, i: usize, t: &[T], out: &mut Matrix<T>, scratch: &mut FiberScratch<T>) {
        self.generators[i].fiber.eval_into(t, out, scratch);
    }

    pub fn eval(&self, i: usize, t: &[T]) -> Matrix<T> {
        self.generators[i].fiber.eval(t)
    }

    pub fn all_smooth(&self) -> bool {
        self.generators.iter().all(|g| g.fiber.is_smooth())
    }

    pub fn all_constant(&self) -> bool {
        self.generators.iter().all(|g| g.fiber.is_constant())
    }

    /// The `k`-th exterior power system: same translations, compound fibers.
    pub fn compound(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.d {
            return Err(Error::DegreeOutOfRange { k, d: self.d });
        }
        let generators = self
            .generators
            .iter()
            .map(|g| Ok(GeneratorRep::new(g.theta.clone(), g.fiber.compound(k)?)))
            .collect::<Result<Vec<_>>>()?;
        let dk = binomial(self.d, k) as usize;
        // compounds of validated invertible fibers are invertible
        Self::new_unchecked_invertibility(dk, self.m, generators, self.irrational_flags.clone())
    }

    /// Replaces fibers, keeping translations and flags; validates the result.
    pub fn with_fibers(&self, fibers: Vec<Fiber<T>>) -> Result<Self> {
        if fibers.len() != self.generators.len() {
            return Err(Error::InvalidSystem("one fiber per generator expected".into()));
        }
        let d = fibers[0].dim();
        let generators =
            self.generators.iter().zip(fibers).map(|(g, f)| GeneratorRep::new(g.theta.clone(), f)).collect();
        Self::new(d, self.m, generators, self.irrational_flags.clone())
    }

    pub fn cast<U: Real>(&self) -> Result<CocycleSystem<U>> {
        let json = serde_json::to_value(self)?;
        Ok(serde_json::from_value(json)?)
    }
}

fn validation_per_dim(m: usize) -> usize {
    let mut per = VALIDATION_PER_DIM;
    while per > 2 && per.pow(m as u32) > VALIDATION_MAX_POINTS {
        per /= 2;
    }
    per
}

/// Strictly positive weights summing to one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<T>", into = "Vec<T>", bound = "T: Real")]
pub struct ProbabilityVector<T> {
    p: Vec<T>,
    cumulative: Vec<T>,
}

impl<T: Real> ProbabilityVector<T> {
    pub fn new(p: &[T]) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::InvalidProbability("empty vector".into()));
        }
        if let Some(x) = p.iter().find(|x| !(**x > T::zero()) || !x.is_finite()) {
            return Err(Error::InvalidProbability(format!("entry {x} is not strictly positive")));
        }
        let sum: T = p.iter().copied().sum();
        let tol = T::lit(1e-12).max(T::lit(16.0) * T::epsilon() * T::from_usize_lossy(p.len()));
        if (sum - T::one()).abs() > tol {
            return Err(Error::InvalidProbability(format!("entries sum to {sum}")));
        }
        let mut acc = T::zero();
        let cumulative = p
            .iter()
            .map(|&x| {
                acc += x;
                acc
            })
            .collect();
        Ok(Self { p: p.to_vec(), cumulative })
    }

    pub fn uniform(n: usize) -> Self {
        let w = T::one() / T::from_usize_lossy(n);
        let mut p = vec![w; n];
        // absorb rounding so the sum is within tolerance
        let rest: T = p[1..].iter().copied().sum();
        p[0] = T::one() - rest;
        Self::new(&p).expect("uniform weights")
    }

    /// Renormalizes positive weights.
    pub fn normalized(w: &[T]) -> Result<Self> {
        let s: T = w.iter().copied().sum();
        if !(s > T::zero()) {
            return Err(Error::InvalidProbability("weights do not have positive sum".into()));
        }
        Self::new(&w.iter().map(|&x| x / s).collect::<Vec<_>>())
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.p
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    /// Inverse-CDF draw of a letter in `0..len`.
    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u = T::lit(rng.random::<f64>());
        let last = self.p.len() - 1;
        self.cumulative[..last].iter().position(|&c| u < c).unwrap_or(last)
    }

    pub fn check_len(&self, n: usize) -> Result<()> {
        if self.p.len() != n {
            return Err(Error::InvalidProbability(format!("{} weights for {n} generators", self.p.len())));
        }
        Ok(())
    }
}

impl<T: Real> TryFrom<Vec<T>> for ProbabilityVector<T> {
    type Error = Error;

    fn try_from(v: Vec<T>) -> Result<Self> {
        Self::new(&v)
    }
}

impl<T: Real> From<ProbabilityVector<T>> for Vec<T> {
    fn from(p: ProbabilityVector<T>) -> Vec<T> {
        p.p
    }
}

/// Finite word over the generator alphabet `0..N` (letters are 0-based).
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Word {
    letters: Vec<usize>,
}

impl Word {
    pub fn new(letters: Vec<usize>, n_generators: usize) -> Result<Self> {
        if let Some(&x) = letters.iter().find(|&&x| x >= n_generators) {
            return Err(Error::InvalidParameter(format!("letter {x} out of range 0..{n_generators}")));
        }
        Ok(Self { letters })
    }

    pub fn empty() -> Self {
        Self { letters: Vec::new() }
    }

    pub fn random<T: Real, R: Rng + ?Sized>(p: &ProbabilityVector<T>, n: usize, rng: &mut R) -> Self {
        Self { letters: (0..n).map(|_| p.sample(rng)).collect() }
    }

    pub fn letters(&self) -> &[usize] {
        &self.letters
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    /// `(prefix of length n, remaining suffix)`.
    pub fn split_at(&self, n: usize) -> (Word, Word) {
        let (a, b) = self.letters.split_at(n);
        (Word { letters: a.to_vec() }, Word { letters: b.to_vec() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gen(theta: f64, m: Matrix<f64>) -> GeneratorRep<f64> {
        GeneratorRep::new(TorusPoint::new(&[theta]).unwrap(), Fiber::constant(m))
    }

    #[test]
    fn rejects_inconsistent_systems() {
        let a = gen(0.3, Matrix::identity(2));
        let b = gen(0.3, Matrix::identity(3));
        assert!(CocycleSystem::from_generators(vec![a.clone(), b]).is_err());
        assert!(CocycleSystem::new(2, 1, vec![a.clone()], vec![false]).is_err());
        assert!(CocycleSystem::from_generators(vec![gen(0.1, Matrix::zeros(2, 2))]).is_err());
        assert!(CocycleSystem::from_generators(vec![a]).is_ok());
    }

    #[test]
    fn json_round_trip_and_validation() {
        let sys = CocycleSystem::from_generators(vec![gen(0.3, Matrix::from_diag(&[2.0, 0.5]))]).unwrap();
        let s = sys.to_json();
        assert!(s.starts_with(r#"{"d":2,"m":1,"generators":[{"theta":[0.3],"fiber":{"type":"constant""#));
        assert_eq!(CocycleSystem::<f64>::from_json(&s).unwrap(), sys);
        let bad = s.replace("0.5", "0.0");
        assert!(CocycleSystem::<f64>::from_json(&bad).is_err());
    }

    #[test]
    fn probability_vector_checks() {
        assert!(ProbabilityVector::new(&[0.5_f64, 0.5]).is_ok());
        assert!(ProbabilityVector::new(&[1.0_f64, 0.0]).is_err());
        assert!(ProbabilityVector::new(&[0.6_f64, 0.5]).is_err());
        let u = ProbabilityVector::<f64>::uniform(3);
        assert!((u.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sampling_frequencies() {
        let p = ProbabilityVector::new(&[0.2_f64, 0.8]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let hits = (0..20000).filter(|_| p.sample(&mut rng) == 0).count();
        assert!((hits as f64 / 20000.0 - 0.2).abs() < 0.01);
    }

    #[test]
    fn word_range_check() {
        assert!(Word::new(vec![0, 1, 2], 3).is_ok());
        assert!(Word::new(vec![3], 3).is_err());
    }

    #[test]
    fn compound_system_dimensions() {
        let sys = CocycleSystem::from_generators(vec![gen(0.3, Matrix::from_diag(&[2.0, 3.0, 0.5]))]).unwrap();
        let c2 = sys.compound(2).unwrap();
        assert_eq!(c2.d(), 3);
        assert!(sys.compound(4).is_err());
        let c3 = sys.compound(3).unwrap();
        assert!((c3.eval(0, &[0.0])[(0, 0)] - 3.0).abs() < 1e-15);
    }
}
