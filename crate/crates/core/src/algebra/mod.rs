//! Small dense linear algebra, compound matrices, projective and torus geometry.

pub mod decomp;
pub mod exterior;
pub mod matrix;
pub mod projective;
pub mod torus;

pub use decomp::{
    char_poly, check_invertible, det, eigenvalues, inverse, log_abs_det, null_space, op_norm,
    orthogonal_complement, orthonormal_basis, qr, qr_in_place, qr_step, singular_tolerance,
    singular_values, svd, Svd,
};
pub use exterior::{binomial, compound, k_subsets, wedge2, CompoundMap};
pub use matrix::{dot, norm2, Matrix};
pub use projective::{grassmann_dist, proj_dist, wedge_ratio, ProjectivePoint};
pub use torus::{torus_add, wrap, TorusPoint};
