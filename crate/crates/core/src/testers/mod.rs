//! Sampled and deterministic verdicts for the convexity, invariance and
//! null-lagrangian conditions.
//!
//! Inequality testers evaluate a signed margin per sample, normalized by
//! `|E| (1 + |W(x0, y0, F)|)`; two-sided (equality) testers use
//! `-|deviation|`. A run fails iff its worst margin is below `-tolerance`.
//! A pass only states that no violation was found among the samples.
//!
//! Sampled generators are single-bump fields with radius 30–48% of the
//! smallest box extent and centres on the half-cell lattice of the
//! quadrature grid, so that the composite Gauss–Legendre nodes are
//! symmetric about each centre. Flows are scaled so that
//! `tau * max |grad eta|` lies in `[0.003, 0.015]`.

mod invariance;
mod legendre;
mod theta;
mod variation;

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{point, symmetric_eigen, AlgebraError, GroupKind, GroupSpec, Point, SquareMatrix, MAX_DIM};
use crate::energies::{EnergyDensity, EnergyError};
use crate::functional::{BoxDomain, FunctionalError};
use crate::kinematics::{FieldSpec, KinematicsError, ScalarBump, VectorBump, VectorField};
use crate::rng;

pub use invariance::{
    conjugation_cells, conjugation_residual, lower_invariance_margin, lower_invariance_on_bank,
    null_lagrangian_on_bank, quasiconvexity_margin, test_character_nll, test_conjugation_identity,
    test_conjugation_sampled, test_exp_invariance, test_exp_invariance_sampled, test_flow_consistency, test_lower_invariance, test_null_lagrangian,
    test_polyconvex_jensen, test_quasiconvexity, test_semicontinuity, ExpInvariance, Subject,
};
pub use legendre::{
    gram_matrix, legh_domain, legh_field, symmetric_eigenvalues, test_legh, test_lh_pointwise, test_parhl, LeghMode,
    LeghResult, LhMode, LhResult, ParhlResult,
};
pub use theta::{test_theta_convexity, theta_functional, Potential, ThetaProblem, ThetaProfile};
pub use variation::{test_equilibrium_residual, test_first_variation, FirstVariation, VARIATION_STEP};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TesterError {
    #[error("F is not in the jet of {group} (deviation {deviation:e})")]
    JetViolation { group: String, deviation: f64 },
    #[error("sampled flow leaves {group}: jet deviation {deviation:e}")]
    FlowDrift { group: String, deviation: f64 },
    #[error("character and group do not match: {0}")]
    Mismatch(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Functional(#[from] FunctionalError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

/// The triplet `(x0, y0, F)` at which a condition is tested.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TestPointSpec", into = "TestPointSpec")]
pub struct TestPoint {
    pub x0: Point,
    pub y0: Point,
    pub f: SquareMatrix,
}

/// Serialized [`TestPoint`]; `f` is row-major, `x0` and `y0` default to 0.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestPointSpec {
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub y0: Option<Vec<f64>>,
    pub f: Vec<f64>,
}

impl TryFrom<TestPointSpec> for TestPoint {
    type Error = TesterError;
    fn try_from(s: TestPointSpec) -> Result<Self, TesterError> {
        let n = (1..=MAX_DIM)
            .find(|n| n * n == s.f.len())
            .ok_or_else(|| TesterError::InvalidInput(format!("F has {} entries, not a square", s.f.len())))?;
        let f = SquareMatrix::new(n, &s.f)?;
        let pt = |v: Option<Vec<f64>>| -> Result<Point, TesterError> {
            match v {
                None => Ok([0.0; MAX_DIM]),
                Some(v) if v.len() == n => Ok(point(&v)),
                Some(v) => Err(TesterError::InvalidInput(format!("point {v:?} needs {n} coordinates"))),
            }
        };
        Ok(TestPoint { x0: pt(s.x0)?, y0: pt(s.y0)?, f })
    }
}

impl From<TestPoint> for TestPointSpec {
    fn from(t: TestPoint) -> Self {
        let n = t.f.dim();
        TestPointSpec { x0: Some(t.x0[..n].to_vec()), y0: Some(t.y0[..n].to_vec()), f: t.f.to_vec() }
    }
}

impl TestPoint {
    /// `(0, 0, F)`.
    pub fn at(f: SquareMatrix) -> Self {
        Self { x0: [0.0; MAX_DIM], y0: [0.0; MAX_DIM], f }
    }

    pub fn dim(&self) -> usize {
        self.f.dim()
    }

    pub fn value(&self, w: &dyn EnergyDensity) -> Result<f64, EnergyError> {
        w.value(&self.x0, &self.y0, &self.f)
    }

    /// `W(x0, y0, M)`.
    pub fn eval(&self, w: &dyn EnergyDensity, m: &SquareMatrix) -> Result<f64, EnergyError> {
        w.value(&self.x0, &self.y0, m)
    }

    fn require_jet(&self, g: &GroupSpec) -> Result<(), TesterError> {
        if g.n != self.dim() {
            return Err(TesterError::InvalidInput(format!(
                "F is {}x{} but the group acts in dimension {}",
                self.dim(),
                self.dim(),
                g.n
            )));
        }
        let check = g.jet_member(&self.f)?;
        if check.member {
            Ok(())
        } else {
            Err(TesterError::JetViolation { group: g.kind.label(), deviation: check.deviation })
        }
    }
}

/// Sample count, seed and tolerance of a sampled run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub samples: usize,
    pub seed: u64,
    pub tolerance: f64,
    /// Multiplies every sampled amplitude; 0 yields identity flows.
    pub amplitude_scale: f64,
    /// Budget of margin evaluations spent refining a violation witness.
    pub refine_steps: usize,
}

pub const DEFAULT_TOLERANCE: f64 = 1e-7;
pub const DEFAULT_SAMPLES: usize = 200;
pub const REFINE_BUDGET: usize = 100;

impl Default for SamplingPlan {
    fn default() -> Self {
        Self {
            samples: DEFAULT_SAMPLES,
            seed: 0,
            tolerance: DEFAULT_TOLERANCE,
            amplitude_scale: 1.0,
            refine_steps: REFINE_BUDGET,
        }
    }
}

impl SamplingPlan {
    pub fn new(samples: usize, seed: u64) -> Self {
        Self { samples, seed, ..Self::default() }
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn with_amplitude_scale(mut self, s: f64) -> Self {
        self.amplitude_scale = s;
        self
    }

    pub fn without_refinement(mut self) -> Self {
        self.refine_steps = 0;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// `F grad phi`.
    Left,
    /// `grad phi F`.
    Right,
}

impl Side {
    pub fn apply(&self, f: &SquareMatrix, g: &SquareMatrix) -> SquareMatrix {
        match self {
            Side::Left => *f * *g,
            Side::Right => *g * *f,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }
}

/// Ranges of the generator sampler.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSampler {
    /// Radius as a fraction of the smallest box extent.
    pub radius: (f64, f64),
    /// Target of `tau * max |grad eta|`.
    pub deformation: (f64, f64),
    pub tau: (f64, f64),
}

impl Default for FieldSampler {
    fn default() -> Self {
        Self { radius: (0.3, 0.48), deformation: (0.003, 0.015), tau: (0.005, 0.02) }
    }
}

/// Picks a coordinate on the half-cell lattice of `domain` along `axis`
/// such that `[c - r, c + r]` stays strictly inside; falls back to the
/// midpoint, which is itself a lattice point.
fn lattice_center(domain: &BoxDomain, axis: usize, r: f64, rng: &mut rng::Stream) -> f64 {
    let lo = domain.lower()[axis];
    let hi = domain.upper()[axis];
    let half = (hi - lo) / domain.cells()[axis] as f64 / 2.0;
    let slack = 1e-9 * (hi - lo);
    let count = 2 * domain.cells()[axis];
    let admissible: Vec<f64> = (1..count)
        .map(|k| lo + k as f64 * half)
        .filter(|c| c - r > lo + slack && c + r < hi - slack)
        .collect();
    if admissible.is_empty() {
        0.5 * (lo + hi)
    } else {
        admissible[rng.random_range(0..admissible.len())]
    }
}

fn unit_vector(n: usize, rng: &mut rng::Stream) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.1 && norm <= 1.0 {
            return v.iter().map(|x| x / norm).collect();
        }
    }
}

/// Largest `|grad eta|` entry over a uniform grid.
fn gradient_scale(field: &VectorField, domain: &BoxDomain) -> f64 {
    let k = match domain.dim() {
        1 => 64,
        2 => 32,
        _ => 14,
    };
    domain.grid(k).iter().map(|x| field.eval(x).1.max_abs()).fold(0.0, f64::max)
}

/// Unit-amplitude generator of the kind matching `g`.
pub fn sample_field_shape(
    kind: &GroupKind,
    domain: &BoxDomain,
    sampler: &FieldSampler,
    rng: &mut rng::Stream,
) -> Result<FieldSpec, TesterError> {
    let n = domain.dim();
    let min_extent = (0..n).map(|a| domain.extent(a)).fold(f64::INFINITY, f64::min);
    let radius = rng.random_range(sampler.radius.0..sampler.radius.1) * min_extent;
    let center = |rng: &mut rng::Stream| -> Vec<f64> { (0..n).map(|a| lattice_center(domain, a, radius, rng)).collect() };
    let sign = |rng: &mut rng::Stream| if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    Ok(match kind {
        GroupKind::FullDiff => {
            let c = center(rng);
            FieldSpec::GenericBump { bumps: vec![VectorBump { center: c, radius, amplitude: unit_vector(n, rng) }] }
        }
        GroupKind::VolumePreserving | GroupKind::Symplectic2D => match n {
            2 => {
                let b = ScalarBump { center: center(rng), radius, amplitude: sign(rng) };
                if matches!(kind, GroupKind::Symplectic2D) {
                    FieldSpec::Hamiltonian2D { hamiltonian: vec![b] }
                } else {
                    FieldSpec::DivFree2D { stream: vec![b] }
                }
            }
            3 if matches!(kind, GroupKind::VolumePreserving) => {
                let c = center(rng);
                FieldSpec::DivFree3D { potential: vec![VectorBump { center: c, radius, amplitude: unit_vector(3, rng) }] }
            }
            _ => {
                return Err(TesterError::InvalidInput(format!(
                    "no sampled generators for {} in dimension {n}",
                    kind.label()
                )))
            }
        },
        GroupKind::Shear { p, q } => {
            let r = rng.random_range(sampler.radius.0..sampler.radius.1) * domain.extent(*q);
            FieldSpec::Shear { p: *p, q: *q, center: lattice_center(domain, *q, r, rng), radius: r, amplitude: sign(rng) }
        }
        GroupKind::Separable1D => {
            let r = rng.random_range(sampler.radius.0..sampler.radius.1) * domain.extent(0);
            FieldSpec::Separable1D { center: lattice_center(domain, 0, r, rng), radius: r, amplitude: sign(rng) }
        }
    })
}

/// Sampled generator with its flow time.
#[derive(Debug, Clone)]
pub struct FieldDraw {
    pub spec: FieldSpec,
    pub field: Arc<VectorField>,
    pub tau: f64,
}

/// Draws sample `index` of a seeded sequence of `g`-admissible generators;
/// the amplitude is set so that `tau * max |grad eta|` hits a sampled target.
pub fn draw_field(
    g: &GroupSpec,
    domain: &BoxDomain,
    sampler: &FieldSampler,
    seed: u64,
    index: u64,
    amplitude_scale: f64,
) -> Result<FieldDraw, TesterError> {
    let mut r = rng::sample_stream(seed, index);
    let shape = sample_field_shape(&g.kind, domain, sampler, &mut r)?;
    let tau = r.random_range(sampler.tau.0..sampler.tau.1);
    let target = r.random_range(sampler.deformation.0..sampler.deformation.1);
    let unit = VectorField::new(&shape, domain)?;
    let scale = gradient_scale(&unit, domain);
    let s = if scale > 0.0 { amplitude_scale * target / (scale * tau) } else { 0.0 };
    let spec = shape.scaled(s);
    let field = Arc::new(VectorField::new(&spec, domain)?);
    Ok(FieldDraw { spec, field, tau })
}

/// Flow data at one quadrature node inside the generator's support.
#[derive(Debug, Clone, Copy)]
pub struct FlowNode {
    pub w: f64,
    pub x: Point,
    pub phi: Point,
    pub grad: SquareMatrix,
}

/// Flow of `field` for time `tau` at the quadrature nodes of `domain` inside
/// its support.
pub fn flow_nodes(field: &Arc<VectorField>, tau: f64, domain: &BoxDomain) -> Vec<FlowNode> {
    let flow = field.flow(tau);
    domain
        .nodes()
        .into_iter()
        .filter(|q| flow.in_support(&q.x))
        .map(|q| {
            let (phi, grad) = flow.eval(&q.x);
            FlowNode { w: q.w, x: q.x, phi, grad }
        })
        .collect()
}

/// One sampled flow evaluated at the quadrature nodes of a domain. Nodes
/// outside the support (where `phi = id` exactly) are omitted.
#[derive(Debug, Clone)]
pub struct FlowSample {
    pub index: usize,
    pub spec: FieldSpec,
    pub field: Arc<VectorField>,
    pub tau: f64,
    pub nodes: Vec<FlowNode>,
}

impl FlowSample {
    pub fn evaluate(
        index: usize,
        spec: FieldSpec,
        field: Arc<VectorField>,
        tau: f64,
        domain: &BoxDomain,
    ) -> FlowSample {
        let nodes = flow_nodes(&field, tau, domain);
        FlowSample { index, spec, field, tau, nodes }
    }

    pub fn witness(&self, seed: u64) -> crate::report::Witness {
        crate::report::Witness {
            sample: Some(self.index),
            seed: Some(seed),
            field: Some(self.spec.clone()),
            tau: Some(self.tau),
            ..Default::default()
        }
    }
}

/// Seeded family of `g`-admissible flows evaluated once and shared across
/// densities and jets.
#[derive(Debug, Clone)]
pub struct FlowBank {
    pub group: GroupSpec,
    pub domain: BoxDomain,
    pub seed: u64,
    pub samples: Vec<FlowSample>,
    /// Largest jet deviation of `grad phi` over all stored nodes.
    pub max_group_deviation: f64,
}

/// Largest jet deviation tolerated for a sampled flow.
pub fn flow_tolerance(g: &GroupSpec) -> f64 {
    g.tolerance.max(1e-8)
}

impl FlowBank {
    pub fn build(g: &GroupSpec, domain: &BoxDomain, plan: &SamplingPlan) -> Result<Self, TesterError> {
        Self::build_with(g, domain, plan, &FieldSampler::default())
    }

    pub fn build_with(
        g: &GroupSpec,
        domain: &BoxDomain,
        plan: &SamplingPlan,
        sampler: &FieldSampler,
    ) -> Result<Self, TesterError> {
        g.validate()?;
        if g.n != domain.dim() {
            return Err(TesterError::InvalidInput(format!(
                "group dimension {} does not match domain dimension {}",
                g.n,
                domain.dim()
            )));
        }
        let mut samples = Vec::with_capacity(plan.samples);
        let mut dev: f64 = 0.0;
        for k in 0..plan.samples {
            let d = draw_field(g, domain, sampler, plan.seed, k as u64, plan.amplitude_scale)?;
            let s = FlowSample::evaluate(k, d.spec, d.field, d.tau, domain);
            for node in &s.nodes {
                dev = dev.max(g.jet_deviation(&node.grad));
            }
            samples.push(s);
        }
        if dev > flow_tolerance(g) {
            return Err(TesterError::FlowDrift { group: g.kind.label(), deviation: dev });
        }
        Ok(Self { group: *g, domain: domain.clone(), seed: plan.seed, samples, max_group_deviation: dev })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// `|E| (1 + |W(x0, y0, F)|)`.
pub(crate) fn normalizer(domain: &BoxDomain, wf: f64) -> f64 {
    domain.volume() * (1.0 + wf.abs())
}

/// Smallest singular value of `f`.
pub(crate) fn sigma_min(f: &SquareMatrix) -> f64 {
    let (ev, _) = symmetric_eigen(&(f.transpose() * *f));
    ev[..f.dim()].iter().fold(f64::INFINITY, |m, v| m.min(*v)).max(0.0).sqrt()
}

/// Multiplicative coordinate descent on positive parameters, used to push a
/// violation witness further. Returns the best parameters, their margin and
/// the evaluations spent.
pub(crate) fn refine_witness(
    mut eval: impl FnMut(&[f64]) -> Option<f64>,
    start: &[f64],
    start_margin: f64,
    bounds: &[(f64, f64)],
    budget: usize,
) -> (Vec<f64>, f64, usize) {
    let mut best = start.to_vec();
    let mut best_m = start_margin;
    let mut factor = 1.5;
    let mut spent = 0;
    while spent < budget && factor > 1.01 {
        let mut improved = false;
        for c in 0..best.len() {
            for dir in [factor, 1.0 / factor] {
                if spent >= budget {
                    break;
                }
                let mut trial = best.clone();
                trial[c] = (trial[c] * dir).clamp(bounds[c].0, bounds[c].1);
                if trial[c] == best[c] {
                    continue;
                }
                spent += 1;
                if let Some(m) = eval(&trial) {
                    if m.is_finite() && m < best_m {
                        best_m = m;
                        best = trial;
                        improved = true;
                        break;
                    }
                }
            }
        }
        if !improved {
            factor = factor.sqrt();
        }
    }
    (best, best_m, spent)
}
