//! Compactly supported generators, their flows and affine conjugation.
//!
//! Every generator is assembled from the smooth bump
//! `b(x) = A exp(-1 / (1 - r^2))`, `r = |x - c| / R`, which vanishes with
//! all derivatives for `r >= 1`. Flows are integrated per query point with
//! classical RK4 on the position and on the variational equation
//! `d/dt grad(phi_t) = grad(eta)(phi_t) grad(phi_t)`, so the returned
//! gradient is the exact Jacobian of the discrete flow map.
//!
//! Flows reach only the exponential part of a group (endpoints of
//! one-parameter flows); verdicts built on them are relative to that class.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{point, GroupKind, GroupSpec, Point, SquareMatrix, MAX_DIM};
use crate::functional::BoxDomain;
use crate::report::{ReportBuilder, SampleOutcome, TestReport, Witness};

/// RK4 steps per unit of flow time.
pub const STEPS_PER_UNIT_TIME: usize = 1000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KinematicsError {
    #[error("field of dimension {field} used on a domain of dimension {domain}")]
    DimensionMismatch { field: usize, domain: usize },
    #[error("support of bump {index} touches or leaves the domain")]
    SupportNotInterior { index: usize },
    #[error("shear generator requires p != q and both below n (got p = {p}, q = {q})")]
    BadShear { p: usize, q: usize },
    #[error("invalid field parameter: {0}")]
    InvalidParameter(String),
}

/// Scalar bump `A exp(-1/(1 - |x - c|^2 / R^2))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BumpProfile {
    n: usize,
    center: Point,
    radius: f64,
    amplitude: f64,
}

/// Value, gradient and Hessian of a scalar function at a point.
#[derive(Debug, Clone, Copy)]
pub struct ScalarJet {
    pub value: f64,
    pub grad: Point,
    pub hess: SquareMatrix,
}

impl BumpProfile {
    pub fn new(center: &[f64], radius: f64, amplitude: f64) -> Result<Self, KinematicsError> {
        if !(1..=MAX_DIM).contains(&center.len()) {
            return Err(KinematicsError::InvalidParameter(format!(
                "bump centre has {} coordinates",
                center.len()
            )));
        }
        if !(radius > 0.0 && radius.is_finite()) || !amplitude.is_finite() {
            return Err(KinematicsError::InvalidParameter(format!(
                "bump radius {radius} / amplitude {amplitude} invalid"
            )));
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(KinematicsError::InvalidParameter("bump centre not finite".into()));
        }
        Ok(Self { n: center.len(), center: point(center), radius, amplitude })
    }

    pub fn center(&self) -> &Point {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    fn q(&self, x: &Point) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            let d = x[i] - self.center[i];
            s += d * d;
        }
        s / (self.radius * self.radius)
    }

    /// Open support ball membership.
    pub fn contains(&self, x: &Point) -> bool {
        self.q(x) < 1.0
    }

    /// Ball strictly inside the box.
    pub fn inside(&self, d: &BoxDomain) -> bool {
        (0..self.n).all(|i| {
            self.center[i] - self.radius > d.lower()[i] && self.center[i] + self.radius < d.upper()[i]
        })
    }

    pub fn value(&self, x: &Point) -> f64 {
        let q = self.q(x);
        if q >= 1.0 {
            0.0
        } else {
            self.amplitude * (-1.0 / (1.0 - q)).exp()
        }
    }

    /// Value and gradient.
    pub fn jet1(&self, x: &Point) -> (f64, Point) {
        let q = self.q(x);
        if q >= 1.0 {
            return (0.0, [0.0; MAX_DIM]);
        }
        let s = 1.0 / (1.0 - q);
        let f = (-s).exp();
        let df = -f * s * s;
        let c = 2.0 / (self.radius * self.radius);
        let mut g = [0.0; MAX_DIM];
        for i in 0..self.n {
            g[i] = self.amplitude * df * c * (x[i] - self.center[i]);
        }
        (self.amplitude * f, g)
    }

    /// Value, gradient and Hessian.
    pub fn jet2(&self, x: &Point) -> ScalarJet {
        let n = self.n;
        let q = self.q(x);
        if q >= 1.0 {
            return ScalarJet { value: 0.0, grad: [0.0; MAX_DIM], hess: SquareMatrix::zeros(n) };
        }
        let s = 1.0 / (1.0 - q);
        let f = (-s).exp();
        let df = -f * s * s;
        let d2f = f * (s * s * s * s - 2.0 * s * s * s);
        let c = 2.0 / (self.radius * self.radius);
        let mut dq = [0.0; MAX_DIM];
        for i in 0..n {
            dq[i] = c * (x[i] - self.center[i]);
        }
        let a = self.amplitude;
        let mut grad = [0.0; MAX_DIM];
        for i in 0..n {
            grad[i] = a * df * dq[i];
        }
        let hess = SquareMatrix::from_fn(n, |i, j| {
            a * (d2f * dq[i] * dq[j] + if i == j { df * c } else { 0.0 })
        });
        ScalarJet { value: a * f, grad, hess }
    }
}

/// Scalar bump with serialized centre.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalarBump {
    pub center: Vec<f64>,
    pub radius: f64,
    pub amplitude: f64,
}

/// Bump times a constant vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VectorBump {
    pub center: Vec<f64>,
    pub radius: f64,
    pub amplitude: Vec<f64>,
}

/// Serializable description of a generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldSpec {
    /// `eta = sum_k b_k(x) v_k`.
    GenericBump { bumps: Vec<VectorBump> },
    /// `eta = (d2 psi, -d1 psi)` for a bump stream function `psi`.
    #[serde(rename = "div_free2d")]
    DivFree2D { stream: Vec<ScalarBump> },
    /// `eta = curl A`, `A = sum_k b_k(x) v_k`.
    #[serde(rename = "div_free3d")]
    DivFree3D { potential: Vec<VectorBump> },
    /// Hamiltonian field of a bump Hamiltonian; same formula as `div_free2d`.
    #[serde(rename = "hamiltonian2d")]
    Hamiltonian2D { hamiltonian: Vec<ScalarBump> },
    /// `eta_p = s(x_q)` with a one-dimensional bump `s`; other components 0.
    Shear { p: usize, q: usize, center: f64, radius: f64, amplitude: f64 },
    /// Scalar bump on an interval.
    #[serde(rename = "separable1d")]
    Separable1D { center: f64, radius: f64, amplitude: f64 },
}

impl FieldSpec {
    /// Largest absolute amplitude parameter.
    pub fn amplitude(&self) -> f64 {
        let vmax = |v: &[f64]| v.iter().fold(0.0f64, |m, a| m.max(a.abs()));
        match self {
            FieldSpec::GenericBump { bumps } | FieldSpec::DivFree3D { potential: bumps } => {
                bumps.iter().map(|b| vmax(&b.amplitude)).fold(0.0, f64::max)
            }
            FieldSpec::DivFree2D { stream: b } | FieldSpec::Hamiltonian2D { hamiltonian: b } => {
                b.iter().map(|b| b.amplitude.abs()).fold(0.0, f64::max)
            }
            FieldSpec::Shear { amplitude, .. } | FieldSpec::Separable1D { amplitude, .. } => amplitude.abs(),
        }
    }

    /// Same field with every amplitude multiplied by `s`.
    pub fn scaled(&self, s: f64) -> FieldSpec {
        let mut out = self.clone();
        match &mut out {
            FieldSpec::GenericBump { bumps } | FieldSpec::DivFree3D { potential: bumps } => {
                bumps.iter_mut().for_each(|b| b.amplitude.iter_mut().for_each(|a| *a *= s))
            }
            FieldSpec::DivFree2D { stream: b } | FieldSpec::Hamiltonian2D { hamiltonian: b } => {
                b.iter_mut().for_each(|b| b.amplitude *= s)
            }
            FieldSpec::Shear { amplitude, .. } | FieldSpec::Separable1D { amplitude, .. } => *amplitude *= s,
        }
        out
    }

    /// Centre and radius of the support when it is a single ball.
    pub fn support_ball(&self) -> Option<(Vec<f64>, f64)> {
        match self {
            FieldSpec::GenericBump { bumps: b } | FieldSpec::DivFree3D { potential: b } if b.len() == 1 => {
                Some((b[0].center.clone(), b[0].radius))
            }
            FieldSpec::DivFree2D { stream: b } | FieldSpec::Hamiltonian2D { hamiltonian: b } if b.len() == 1 => {
                Some((b[0].center.clone(), b[0].radius))
            }
            FieldSpec::Separable1D { center, radius, .. } => Some((vec![*center], *radius)),
            _ => None,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            FieldSpec::GenericBump { .. } => "generic_bump",
            FieldSpec::DivFree2D { .. } => "div_free2d",
            FieldSpec::DivFree3D { .. } => "div_free3d",
            FieldSpec::Hamiltonian2D { .. } => "hamiltonian2d",
            FieldSpec::Shear { .. } => "shear",
            FieldSpec::Separable1D { .. } => "separable1d",
        }
    }
}

#[derive(Debug, Clone)]
enum FieldKind {
    Generic(Vec<(BumpProfile, Point)>),
    Stream(Vec<BumpProfile>),
    Curl(Vec<(BumpProfile, Point)>),
    Shear { p: usize, q: usize, profile: BumpProfile },
    Interval(BumpProfile),
    Linear(SquareMatrix),
    Pullback { matrix: SquareMatrix, inverse: SquareMatrix, inner: Arc<VectorField> },
}

/// Smooth vector field with analytic gradient `(grad eta)_ij = d eta_i / d x_j`.
#[derive(Debug, Clone)]
pub struct VectorField {
    n: usize,
    kind: FieldKind,
    spec: Option<FieldSpec>,
    domain: Option<BoxDomain>,
}

fn check_len(what: &str, got: usize, want: usize) -> Result<(), KinematicsError> {
    if got == want {
        Ok(())
    } else {
        Err(KinematicsError::InvalidParameter(format!("{what} has {got} entries, expected {want}")))
    }
}

impl VectorField {
    /// Builds the generator described by `spec` on `domain`, rejecting
    /// supports that are not strictly interior.
    pub fn new(spec: &FieldSpec, domain: &BoxDomain) -> Result<Self, KinematicsError> {
        let n = domain.dim();
        let need = |want: usize| {
            if n == want {
                Ok(())
            } else {
                Err(KinematicsError::DimensionMismatch { field: want, domain: n })
            }
        };
        let vector_bumps = |bumps: &[VectorBump]| -> Result<Vec<(BumpProfile, Point)>, KinematicsError> {
            bumps
                .iter()
                .enumerate()
                .map(|(index, b)| {
                    check_len("bump centre", b.center.len(), n)?;
                    check_len("bump amplitude", b.amplitude.len(), n)?;
                    if b.amplitude.iter().any(|a| !a.is_finite()) {
                        return Err(KinematicsError::InvalidParameter("amplitude not finite".into()));
                    }
                    let p = BumpProfile::new(&b.center, b.radius, 1.0)?;
                    if !p.inside(domain) {
                        return Err(KinematicsError::SupportNotInterior { index });
                    }
                    Ok((p, point(&b.amplitude)))
                })
                .collect()
        };
        let scalar_bumps = |bumps: &[ScalarBump]| -> Result<Vec<BumpProfile>, KinematicsError> {
            bumps
                .iter()
                .enumerate()
                .map(|(index, b)| {
                    check_len("bump centre", b.center.len(), n)?;
                    let p = BumpProfile::new(&b.center, b.radius, b.amplitude)?;
                    if !p.inside(domain) {
                        return Err(KinematicsError::SupportNotInterior { index });
                    }
                    Ok(p)
                })
                .collect()
        };
        let interval = |axis: usize, center: f64, radius: f64, amplitude: f64| {
            let p = BumpProfile::new(&[center], radius, amplitude)?;
            if center - radius > domain.lower()[axis] && center + radius < domain.upper()[axis] {
                Ok(p)
            } else {
                Err(KinematicsError::SupportNotInterior { index: 0 })
            }
        };
        let kind = match spec {
            FieldSpec::GenericBump { bumps } => FieldKind::Generic(vector_bumps(bumps)?),
            FieldSpec::DivFree2D { stream } | FieldSpec::Hamiltonian2D { hamiltonian: stream } => {
                need(2)?;
                FieldKind::Stream(scalar_bumps(stream)?)
            }
            FieldSpec::DivFree3D { potential } => {
                need(3)?;
                FieldKind::Curl(vector_bumps(potential)?)
            }
            FieldSpec::Shear { p, q, center, radius, amplitude } => {
                if p == q || *p >= n || *q >= n {
                    return Err(KinematicsError::BadShear { p: *p, q: *q });
                }
                FieldKind::Shear { p: *p, q: *q, profile: interval(*q, *center, *radius, *amplitude)? }
            }
            FieldSpec::Separable1D { center, radius, amplitude } => {
                need(1)?;
                FieldKind::Interval(interval(0, *center, *radius, *amplitude)?)
            }
        };
        Ok(Self { n, kind, spec: Some(spec.clone()), domain: Some(domain.clone()) })
    }

    /// `eta(x) = A x`. Not compactly supported; used as a closed-form
    /// reference for the integrator.
    pub fn linear(a: SquareMatrix) -> Self {
        Self { n: a.dim(), kind: FieldKind::Linear(a), spec: None, domain: None }
    }

    /// Pullback `xi(y) = M^{-1} eta(M y)` whose flow is `M^{-1} phi_t M`.
    pub fn pullback(inner: Arc<VectorField>, matrix: SquareMatrix) -> Result<Self, KinematicsError> {
        if matrix.dim() != inner.n {
            return Err(KinematicsError::DimensionMismatch { field: inner.n, domain: matrix.dim() });
        }
        let inverse = matrix
            .inverse()
            .map_err(|e| KinematicsError::InvalidParameter(format!("pullback matrix: {e}")))?;
        Ok(Self { n: inner.n, kind: FieldKind::Pullback { matrix, inverse, inner }, spec: None, domain: None })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn spec(&self) -> Option<&FieldSpec> {
        self.spec.as_ref()
    }

    /// The set the generator was declared on.
    pub fn domain(&self) -> Option<&BoxDomain> {
        self.domain.as_ref()
    }

    pub fn amplitude(&self) -> f64 {
        self.spec.as_ref().map_or(0.0, FieldSpec::amplitude)
    }

    /// False only where the field and its gradient vanish on a neighbourhood.
    pub fn in_support(&self, x: &Point) -> bool {
        match &self.kind {
            FieldKind::Generic(b) | FieldKind::Curl(b) => b.iter().any(|(p, _)| p.contains(x)),
            FieldKind::Stream(b) => b.iter().any(|p| p.contains(x)),
            FieldKind::Shear { q, profile, .. } => profile.contains(&[x[*q], 0.0, 0.0]),
            FieldKind::Interval(p) => p.contains(x),
            FieldKind::Linear(_) => true,
            FieldKind::Pullback { matrix, inner, .. } => inner.in_support(&matrix.mul_vec(x)),
        }
    }

    pub fn value(&self, x: &Point) -> Point {
        self.eval(x).0
    }

    /// `(eta(x), grad eta(x))`.
    pub fn eval(&self, x: &Point) -> (Point, SquareMatrix) {
        let n = self.n;
        let mut v = [0.0; MAX_DIM];
        let mut g = SquareMatrix::zeros(n);
        match &self.kind {
            FieldKind::Generic(bumps) => {
                for (b, a) in bumps {
                    if !b.contains(x) {
                        continue;
                    }
                    let (f, df) = b.jet1(x);
                    for i in 0..n {
                        v[i] += a[i] * f;
                        for j in 0..n {
                            g[(i, j)] += a[i] * df[j];
                        }
                    }
                }
            }
            FieldKind::Stream(bumps) => {
                for b in bumps {
                    if !b.contains(x) {
                        continue;
                    }
                    let s = b.jet2(x);
                    v[0] += s.grad[1];
                    v[1] -= s.grad[0];
                    g[(0, 0)] += s.hess[(1, 0)];
                    g[(0, 1)] += s.hess[(1, 1)];
                    g[(1, 0)] -= s.hess[(0, 0)];
                    g[(1, 1)] -= s.hess[(0, 1)];
                }
            }
            FieldKind::Curl(bumps) => {
                for (b, a) in bumps {
                    if !b.contains(x) {
                        continue;
                    }
                    let s = b.jet2(x);
                    // eta_i = eps_ijm a_m d_j b
                    for (i, j, m, sign) in LEVI_CIVITA {
                        v[i] += sign * a[m] * s.grad[j];
                        for l in 0..3 {
                            g[(i, l)] += sign * a[m] * s.hess[(j, l)];
                        }
                    }
                }
            }
            FieldKind::Shear { p, q, profile } => {
                let (s, ds) = profile.jet1(&[x[*q], 0.0, 0.0]);
                v[*p] = s;
                g[(*p, *q)] = ds[0];
            }
            FieldKind::Interval(profile) => {
                let (s, ds) = profile.jet1(x);
                v[0] = s;
                g[(0, 0)] = ds[0];
            }
            FieldKind::Linear(a) => {
                v = a.mul_vec(x);
                g = *a;
            }
            FieldKind::Pullback { matrix, inverse, inner } => {
                let (iv, ig) = inner.eval(&matrix.mul_vec(x));
                v = inverse.mul_vec(&iv);
                g = *inverse * ig * *matrix;
            }
        }
        (v, g)
    }

    /// Flow of this field up to time `tau` at the default resolution.
    pub fn flow(self: &Arc<Self>, tau: f64) -> FlowMap {
        FlowMap::with_default_steps(self.clone(), tau)
    }
}

const LEVI_CIVITA: [(usize, usize, usize, f64); 6] =
    [(0, 1, 2, 1.0), (1, 2, 0, 1.0), (2, 0, 1, 1.0), (0, 2, 1, -1.0), (2, 1, 0, -1.0), (1, 0, 2, -1.0)];

/// Free-function constructor matching [`VectorField::new`].
pub fn field_make(spec: &FieldSpec, domain: &BoxDomain) -> Result<VectorField, KinematicsError> {
    VectorField::new(spec, domain)
}

/// Checks the infinitesimal jet condition of `g` at the given points:
/// trace-free gradient for volume-preserving and symplectic groups, the
/// single `(p, q)` entry for shears, nothing for the full group.
pub fn field_in_tg(field: &VectorField, g: &GroupSpec, points: &[Point]) -> TestReport {
    let condition = format!("field_in_tg[{}]", g.kind.label());
    if field.dim() != g.n {
        let mut r = TestReport::single(condition, -1.0, g.tolerance, Witness::default());
        r.caveat = format!("field dimension {} does not match group dimension {}", field.dim(), g.n);
        return r;
    }
    let mut b = ReportBuilder::new(condition, g.tolerance, 0);
    for x in points {
        let (_, grad) = field.eval(x);
        let dev = tangent_deviation(&g.kind, &grad);
        b.push(SampleOutcome {
            margin: -dev,
            tau: 0.0,
            amplitude: field.amplitude(),
            witness: Witness {
                point: Some(x[..g.n].to_vec()),
                field: field.spec().cloned(),
                ..Witness::default()
            },
        });
    }
    b.finish()
}

fn tangent_deviation(kind: &GroupKind, grad: &SquareMatrix) -> f64 {
    match kind {
        GroupKind::FullDiff | GroupKind::Separable1D => 0.0,
        GroupKind::VolumePreserving | GroupKind::Symplectic2D => grad.trace().abs(),
        GroupKind::Shear { p, q } => {
            let mut dev: f64 = 0.0;
            for i in 0..grad.dim() {
                for j in 0..grad.dim() {
                    if (i, j) != (*p, *q) {
                        dev = dev.max(grad[(i, j)].abs());
                    }
                }
            }
            dev
        }
    }
}

/// `f(x) = x1 + eps (x - x0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineRescale {
    n: usize,
    x0: Point,
    x1: Point,
    eps: f64,
}

impl AffineRescale {
    pub fn new(x0: &[f64], x1: &[f64], eps: f64) -> Result<Self, KinematicsError> {
        if x0.len() != x1.len() || !(1..=MAX_DIM).contains(&x0.len()) {
            return Err(KinematicsError::InvalidParameter("rescale points must share a dimension".into()));
        }
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(KinematicsError::InvalidParameter(format!("rescale factor {eps} must be positive")));
        }
        Ok(Self { n: x0.len(), x0: point(x0), x1: point(x1), eps })
    }

    pub fn identity(n: usize) -> Self {
        Self { n, x0: [0.0; MAX_DIM], x1: [0.0; MAX_DIM], eps: 1.0 }
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn apply(&self, x: &Point) -> Point {
        let mut y = [0.0; MAX_DIM];
        for i in 0..self.n {
            y[i] = self.x1[i] + self.eps * (x[i] - self.x0[i]);
        }
        y
    }

    pub fn invert(&self, y: &Point) -> Point {
        let mut x = [0.0; MAX_DIM];
        for i in 0..self.n {
            x[i] = self.x0[i] + (y[i] - self.x1[i]) / self.eps;
        }
        x
    }

    /// `self o inner`.
    pub fn after(&self, inner: &AffineRescale) -> AffineRescale {
        let mut x1 = [0.0; MAX_DIM];
        for i in 0..self.n {
            x1[i] = self.x1[i] + self.eps * (inner.x1[i] - self.x0[i]);
        }
        AffineRescale { n: self.n, x0: inner.x0, x1, eps: self.eps * inner.eps }
    }
}

/// One-parameter flow `phi_tau` of an autonomous field, possibly viewed
/// through an affine rescaling `f o phi_tau o f^{-1}`.
#[derive(Debug, Clone)]
pub struct FlowMap {
    field: Arc<VectorField>,
    time: f64,
    steps: usize,
    frame: AffineRescale,
}

impl FlowMap {
    pub fn new(field: Arc<VectorField>, time: f64, steps: usize) -> Self {
        let n = field.dim();
        Self { field, time, steps: steps.max(1), frame: AffineRescale::identity(n) }
    }

    /// `ceil(1000 |tau|)` steps, at least one.
    pub fn with_default_steps(field: Arc<VectorField>, time: f64) -> Self {
        let steps = (STEPS_PER_UNIT_TIME as f64 * time.abs()).ceil() as usize;
        Self::new(field, time, steps)
    }

    pub fn field(&self) -> &Arc<VectorField> {
        &self.field
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dim(&self) -> usize {
        self.field.dim()
    }

    pub fn in_support(&self, x: &Point) -> bool {
        self.field.in_support(&self.frame.invert(x))
    }

    /// Whether `x` lies in the (rescaled) set the generator was declared on;
    /// always true for generators without a declared set.
    pub fn defined_at(&self, x: &Point) -> bool {
        self.field.domain().is_none_or(|d| d.contains(&self.frame.invert(x)))
    }

    /// `(phi(x), grad phi(x))`.
    pub fn eval(&self, x: &Point) -> (Point, SquareMatrix) {
        let z = self.frame.invert(x);
        let (p, g) = self.integrate(&z);
        (self.frame.apply(&p), g)
    }

    pub fn apply(&self, x: &Point) -> Point {
        self.eval(x).0
    }

    fn integrate(&self, x: &Point) -> (Point, SquareMatrix) {
        let n = self.dim();
        let mut pos = *x;
        let mut grad = SquareMatrix::identity(n);
        if self.time == 0.0 || !self.field.in_support(x) {
            return (pos, grad);
        }
        let h = self.time / self.steps as f64;
        let axpy = |p: &Point, k: &Point, s: f64| -> Point {
            let mut o = *p;
            for i in 0..n {
                o[i] += s * k[i];
            }
            o
        };
        for _ in 0..self.steps {
            let (k1, d1) = self.field.eval(&pos);
            let g1 = d1 * grad;
            let p2 = axpy(&pos, &k1, 0.5 * h);
            let (k2, d2) = self.field.eval(&p2);
            let g2 = d2 * (grad + g1 * (0.5 * h));
            let p3 = axpy(&pos, &k2, 0.5 * h);
            let (k3, d3) = self.field.eval(&p3);
            let g3 = d3 * (grad + g2 * (0.5 * h));
            let p4 = axpy(&pos, &k3, h);
            let (k4, d4) = self.field.eval(&p4);
            let g4 = d4 * (grad + g3 * h);
            for i in 0..n {
                pos[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            grad = grad + (g1 + g2 * 2.0 + g3 * 2.0 + g4) * (h / 6.0);
        }
        (pos, grad)
    }

    /// Time reversal: the flow of the same field for `-tau`.
    pub fn inverse(&self) -> FlowMap {
        FlowMap { field: self.field.clone(), time: -self.time, steps: self.steps, frame: self.frame }
    }

    /// Largest jet deviation of `grad phi` over `points`.
    pub fn group_deviation(&self, g: &GroupSpec, points: &[Point]) -> f64 {
        points.iter().map(|x| g.jet_deviation(&self.eval(x).1)).fold(0.0, f64::max)
    }

    /// `r o phi o r^{-1}`; the gradient at `r(x)` equals `grad phi(x)`.
    pub fn conjugate(&self, r: &AffineRescale) -> FlowMap {
        FlowMap { field: self.field.clone(), time: self.time, steps: self.steps, frame: r.after(&self.frame) }
    }
}

pub fn flow_advance(field: Arc<VectorField>, tau: f64, steps: usize) -> FlowMap {
    FlowMap::new(field, tau, steps)
}

pub fn flow_inverse(f: &FlowMap) -> FlowMap {
    f.inverse()
}

pub fn flow_group_check(f: &FlowMap, g: &GroupSpec, points: &[Point]) -> f64 {
    f.group_deviation(g, points)
}

pub fn rescale_conjugate(f: &FlowMap, r: &AffineRescale) -> FlowMap {
    f.conjugate(r)
}
