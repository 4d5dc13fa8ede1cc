//! Evaluation of `I(u; Omega) = int_Omega W(x, u(x), grad u(x)) dx` on boxes.
//!
//! All integrals use composite tensor Gauss–Legendre rules and sum node
//! contributions in a fixed order with compensated summation, so repeated
//! evaluations are bit-identical.

mod boundary;
mod domain;
mod maps;
pub mod quadrature;

use thiserror::Error;

pub use boundary::{
    boundary_integrals, image_volume_monte_carlo, image_volume_scanline, BoundaryIntegrals, ImageVolumeMethod,
};
pub use domain::{default_cells, BoxDomain, Cells, DomainSpec, Face, QuadNode, DEFAULT_ORDER};
pub use maps::{compose, BumpTerm, CompositeMap, DeformationMap, DeformationSpec, Map};

use crate::algebra::Point;
use crate::energies::{EnergyDensity, EnergyError};
use crate::kinematics::KinematicsError;
use quadrature::CompensatedSum;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FunctionalError {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("invalid map: {0}")]
    InvalidMap(String),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("integrand is {value} at node {node:?}")]
    NonFinite { node: Vec<f64>, value: f64 },
    #[error("energy not defined at node {node:?}: {source}")]
    Energy { node: Vec<f64>, source: EnergyError },
    #[error("det grad u = {det:e} is not positive at node {node:?}")]
    NotOrientationPreserving { node: Vec<f64>, det: f64 },
    #[error("inner map sends {point:?} outside the region where the outer flow is defined")]
    RangeEscape { point: Vec<f64> },
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
}

fn coords(d: &BoxDomain, x: &Point) -> Vec<f64> {
    x[..d.dim()].to_vec()
}

/// Integral of a scalar function over the box.
pub fn integrate(domain: &BoxDomain, f: impl Fn(&Point) -> f64) -> Result<f64, FunctionalError> {
    try_integrate(domain, |x| Ok(f(x)))
}

/// Integral of a fallible integrand; the first failing node aborts.
pub fn try_integrate(
    domain: &BoxDomain,
    f: impl Fn(&Point) -> Result<f64, FunctionalError>,
) -> Result<f64, FunctionalError> {
    let mut sum = CompensatedSum::default();
    for q in domain.nodes() {
        let v = f(&q.x)?;
        if !v.is_finite() {
            return Err(FunctionalError::NonFinite { node: coords(domain, &q.x), value: v });
        }
        sum.add(q.w * v);
    }
    Ok(sum.value())
}

/// `I(u; domain)`.
pub fn functional_eval(w: &dyn EnergyDensity, u: &Map, domain: &BoxDomain) -> Result<f64, FunctionalError> {
    if u.dim() != domain.dim() {
        return Err(FunctionalError::DimensionMismatch(u.dim(), domain.dim()));
    }
    try_integrate(domain, |x| {
        let (y, g) = u.eval(x);
        w.value(x, &y, &g)
            .map_err(|source| FunctionalError::Energy { node: coords(domain, x), source })
    })
}
