//! Desk-scale numerical checks of group-relative convexity conditions:
//! quasiconvexity, left/right lower invariance under diffeomorphism groups,
//! generalized Legendre–Hadamard inequalities, null lagrangians (classical
//! and character based), exponential invariance and polyconvexity.
//!
//! Module map:
//! - [`algebra`]: small matrices, jet predicates, characters, jet sampling.
//! - [`kinematics`]: compactly supported generators and their RK4 flows.
//! - [`energies`]: energy densities with first and second derivatives.
//! - [`functional`]: box quadrature, deformation maps, integral identities.
//! - [`testers`]: sampled verdicts returning [`report::TestReport`]s.

pub mod algebra;
pub mod energies;
pub mod functional;
pub mod kinematics;
pub mod report;
pub mod rng;
pub mod testers;

use thiserror::Error;

pub use algebra::{GroupKind, GroupSpec, Point, SquareMatrix};
pub use energies::{Catalog, EnergyDensity, EnergySpec};
pub use functional::BoxDomain;
pub use kinematics::{FieldSpec, FlowMap, VectorField};
pub use report::{TestReport, Verdict};

/// Any failure raised by the toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Algebra(#[from] algebra::AlgebraError),
    #[error(transparent)]
    Kinematics(#[from] kinematics::KinematicsError),
    #[error(transparent)]
    Energy(#[from] energies::EnergyError),
    #[error(transparent)]
    Functional(#[from] functional::FunctionalError),
    #[error(transparent)]
    Tester(#[from] testers::TesterError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
