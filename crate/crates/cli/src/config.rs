//! Experiment configuration. Every field except `system` and `seed` has a
//! default, and the resolved configuration (defaults filled in) is what gets
//! hashed and echoed into the outputs.

use std::path::Path;

use qpcocycle::analytic::AnalyticParams;
use qpcocycle::cocycle::fixture;
use qpcocycle::contraction::{CertificateParams, DEFAULT_M_GRID};
use qpcocycle::lyapunov::{DEFAULT_COMPOUND_CAP, DEFAULT_GAP_TOL};
use qpcocycle::reduction::Section;
use qpcocycle::{CocycleSystem, ComplexWeights, McParams, Matrix, ProbabilityVector};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SystemSpec {
    Fixture {
        name: String,
        #[serde(default)]
        params: Map<String, Value>,
    },
    Inline {
        system: CocycleSystem<f64>,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemSpec,
    /// Transition probabilities; uniform when absent.
    #[serde(default)]
    pub p: Option<Vec<f64>>,
    /// Required here or through `--seed`.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub top: TopConfig,
    #[serde(default)]
    pub spectrum: SpectrumConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub contraction: ContractionConfig,
    #[serde(default)]
    pub analytic: AnalyticConfig,
    #[serde(default)]
    pub reduce: ReduceConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopConfig {
    pub n: usize,
    pub samples: usize,
    pub burn_in: usize,
    /// Extra probability vectors; the run uses `p` when absent.
    pub ps: Option<Vec<Vec<f64>>>,
    /// Extra orbit lengths; the run uses `n` when absent.
    pub ns: Option<Vec<usize>>,
}

impl Default for TopConfig {
    fn default() -> Self {
        Self { n: 2000, samples: 400, burn_in: 0, ps: None, ns: None }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumConfig {
    pub n: usize,
    pub samples: usize,
    pub burn_in: usize,
    pub compound_cap: usize,
    pub gap_tol: f64,
    /// Torus grid per dimension for the determinant average.
    pub det_quad: usize,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self {
            n: 2000,
            samples: 400,
            burn_in: 0,
            compound_cap: DEFAULT_COMPOUND_CAP,
            gap_tol: DEFAULT_GAP_TOL,
            det_quad: 256,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SweepPath {
    Points { points: Vec<Vec<f64>> },
    /// `steps` equally spaced points from `from` to `to`, endpoints included.
    Line { from: Vec<f64>, to: Vec<f64>, steps: usize },
    /// All `k / resolution` with positive integer `k` summing to `resolution`.
    Simplex { resolution: usize },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub n: usize,
    pub samples: usize,
    pub burn_in: usize,
    /// Single point `p` when absent.
    pub path: Option<SweepPath>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { n: 1000, samples: 200, burn_in: 0, path: None }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContractionConfig {
    pub n_max: usize,
    pub pair_grid: Option<usize>,
    pub samples: usize,
    pub refine: bool,
    pub m_grid: usize,
    /// Optional extra `K_n(alpha)` table for `n <= n_max`.
    pub alpha: Option<f64>,
}

impl Default for ContractionConfig {
    fn default() -> Self {
        Self { n_max: 20, pair_grid: None, samples: 2000, refine: true, m_grid: DEFAULT_M_GRID, alpha: None }
    }
}

impl ContractionConfig {
    pub fn certificate_params(&self, seed: u64) -> CertificateParams {
        CertificateParams {
            n_max: self.n_max,
            pair_grid: self.pair_grid,
            samples: self.samples,
            seed,
            refine: self.refine,
            m_grid: self.m_grid,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SliceConfig {
    /// Zero-sum direction of the slice `p + w delta`.
    pub delta: Vec<f64>,
    /// Circle radius; `radius_fraction` times the slice radius when absent.
    pub radius: Option<f64>,
    pub radius_fraction: f64,
    pub k_max: usize,
    pub nodes: usize,
    /// Points per side of the Cauchy-Riemann grid.
    pub grid: usize,
    /// Difference step as a fraction of the radius.
    pub h_fraction: f64,
}

impl Default for SliceConfig {
    fn default() -> Self {
        Self { delta: Vec::new(), radius: None, radius_fraction: 0.8, k_max: 8, nodes: 64, grid: 5, h_fraction: 0.02 }
    }
}

/// Whether the analytic run builds a contraction certificate first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Certify {
    /// Certify, falling back to an uncertified run when no contraction is
    /// found or `d = 1`.
    Auto,
    /// Certify or fail with exit code 3.
    Required,
    Off,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyticConfig {
    /// Certificates use the `contraction` settings.
    pub certify: Certify,
    /// Domain parameter; certified runs default to `(1 + e^-zeta) / 2`,
    /// uncertified ones to 0.5.
    pub gamma: Option<f64>,
    /// Orbit length of uncertified runs when `params.n` is absent.
    pub fallback_n: usize,
    /// Complex weights `[[re, im], ...]`; `p` when absent.
    pub points: Option<Vec<ComplexWeights<f64>>>,
    pub slice: Option<SliceConfig>,
    pub params: AnalyticParams,
}

impl Default for AnalyticConfig {
    fn default() -> Self {
        Self { certify: Certify::Auto, gamma: None, fallback_n: 200, points: None, slice: None, params: AnalyticParams::default() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReduceConfig {
    /// Nested sections, largest first.
    pub sections: Option<Vec<Section<f64>>>,
    /// Use the sections declared by the fixture.
    pub declared: bool,
    /// Search for a constant section when none is given.
    pub detect: bool,
    pub n: usize,
    pub samples: usize,
    pub burn_in: usize,
}

impl Default for ReduceConfig {
    fn default() -> Self {
        Self { sections: None, declared: false, detect: false, n: 1000, samples: 200, burn_in: 100 }
    }
}

impl ReduceConfig {
    pub fn mc(&self, seed: u64) -> McParams {
        McParams::new(self.n, self.samples, seed).with_burn_in(self.burn_in)
    }
}

/// Configuration after defaults, seed override and system construction.
pub struct Resolved {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub hash: String,
    pub system: CocycleSystem<f64>,
    pub p: ProbabilityVector<f64>,
    pub declared_sections: Vec<Matrix<f64>>,
}

pub fn load(path: &Path, seed_override: Option<u64>) -> Result<Resolved, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    parse(&text, seed_override)
}

pub fn parse(text: &str, seed_override: Option<u64>) -> Result<Resolved, CliError> {
    let mut config: ExperimentConfig =
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))?;
    if let Some(s) = seed_override {
        config.seed = Some(s);
    }
    let seed = config.seed.ok_or_else(|| CliError::Config("`seed` is required (config or --seed)".into()))?;
    let (system, default_p, declared_sections) = match &config.system {
        SystemSpec::Fixture { name, params } => {
            let f = fixture::<f64>(name, params).map_err(CliError::config)?;
            (f.system, f.p, f.sections)
        }
        SystemSpec::Inline { system } => {
            let n = system.n_generators();
            (system.clone(), ProbabilityVector::uniform(n), Vec::new())
        }
    };
    let p = match &config.p {
        Some(v) => {
            let p = ProbabilityVector::new(v).map_err(CliError::config)?;
            p.check_len(system.n_generators()).map_err(CliError::config)?;
            p
        }
        None => default_p,
    };
    let canonical = serde_json::to_string(&config).expect("config serializes");
    let hash = hex::encode(Sha256::digest(canonical.as_bytes()));
    Ok(Resolved { config, seed, hash, system, p, declared_sections })
}

pub fn probability(v: &[f64], n: usize) -> Result<ProbabilityVector<f64>, CliError> {
    let p = ProbabilityVector::new(v).map_err(CliError::config)?;
    p.check_len(n).map_err(CliError::config)?;
    Ok(p)
}
