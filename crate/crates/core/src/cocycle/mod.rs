//! Quasi-periodic cocycle generators, their group law and orbit products.

pub mod compose;
pub mod fiber;
pub mod fixtures;
pub mod orbit;
pub mod system;

pub use compose::group_compose;
pub use fiber::{validation_grid, CompoundFiber, Fiber, FiberScratch, FourierTerm, GridFiber};
pub use fixtures::{default_theta, fixture, fixture_default, ClosedForm, Fixture, FIXTURE_NAMES};
pub use orbit::{base_orbit, orbit_product, OrbitProduct};
pub use system::{eval_fiber, CocycleSystem, GeneratorRep, ProbabilityVector, Word};
