//! Lyapunov spectra of random products of quasi-periodic cocycles.
//!
//! A system is a finite family of generators `(theta_i, A_i)`: a torus
//! translation `t -> t + theta_i` and a matrix-valued fiber `A_i(t)`. Letters
//! are drawn i.i.d. with probabilities `p`, and the products
//! `A_{x_n}(t + ...) ... A_{x_1}(t)` define the exponents.
//!
//! * [`lyapunov`]: Monte Carlo estimators of the top exponent, the full
//!   spectrum (QR and exterior powers) and continuity sweeps in `p`.
//! * [`contraction`]: the projective contraction coefficients `K_n(alpha, p)`
//!   and certificates `K_n <= C_0 e^{-zeta n}`.
//! * [`analytic`]: the complex transfer operator `T_z` and the holomorphic
//!   extension of `lambda_+` to complex weights `z` near `p`.
//! * [`reduction`]: invariant sections, restricted and quotient cocycles and
//!   reduction chains.
//!
//! Everything is generic over [`Real`] (`f32` or `f64`); the aliases below
//! fix the scalar to `f64`, or to `f32` with a `32` suffix.

pub mod algebra;
pub mod analytic;
pub mod cocycle;
pub mod contraction;
pub mod error;
pub mod lyapunov;
pub mod reduction;
pub mod sampling;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

pub use algebra::{Matrix, ProjectivePoint, TorusPoint};
pub use analytic::{AnalyticContext, AnalyticEval, AnalyticParams, ComplexWeights, DomainGamma, TaylorCoeffs};
pub use cocycle::{fixture, fixture_default, CocycleSystem, Fiber, Fixture, GeneratorRep, ProbabilityVector, Word};
pub use contraction::{build_certificate, CertificateParams, ContractionCertificate};
pub use lyapunov::{LyapEstimate, McParams, SpectrumResult};
pub use reduction::{KiferCheck, ReductionChain, Section};

pub type Matrix64 = Matrix<f64>;
pub type TorusPoint64 = TorusPoint<f64>;
pub type ProjectivePoint64 = ProjectivePoint<f64>;
pub type CocycleSystem64 = CocycleSystem<f64>;
pub type ProbabilityVector64 = ProbabilityVector<f64>;
pub type Fixture64 = Fixture<f64>;
pub type LyapEstimate64 = LyapEstimate<f64>;
pub type SpectrumResult64 = SpectrumResult<f64>;
pub type ContractionCertificate64 = ContractionCertificate<f64>;
pub type ComplexWeights64 = ComplexWeights<f64>;
pub type DomainGamma64 = DomainGamma<f64>;
pub type AnalyticContext64 = AnalyticContext<f64>;
pub type AnalyticEval64 = AnalyticEval<f64>;
pub type Section64 = Section<f64>;
pub type ReductionChain64 = ReductionChain<f64>;

pub type Matrix32 = Matrix<f32>;
pub type CocycleSystem32 = CocycleSystem<f32>;
pub type ProbabilityVector32 = ProbabilityVector<f32>;
pub type LyapEstimate32 = LyapEstimate<f32>;
pub type SpectrumResult32 = SpectrumResult<f32>;
pub type ContractionCertificate32 = ContractionCertificate<f32>;
pub type Section32 = Section<f32>;
