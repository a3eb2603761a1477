//! Complex transfer operator `T_z` and the holomorphic extension of the top
//! exponent in the weights.

mod extension;
mod transfer;
mod weights;

pub use extension::{
    analytic_lambda, cesaro, spectrum_extension, AnalyticContext, AnalyticEval, AnalyticParams, HolomorphyPoint,
    HolomorphyReport, ImportanceBatch, TaylorCoeffs,
};
pub use transfer::{
    apply_tz_exact, apply_tz_importance, lip_bound_phi, phi_j, poly_coeffs_tz, Observable, Polynomial,
    DEFAULT_COEFF_CAP, DEFAULT_WORD_CAP,
};
pub use weights::{ComplexWeights, DomainGamma};
