//! Closed-form deformation maps and their composition with flows.

use serde::{Deserialize, Serialize};

use super::{BoxDomain, FunctionalError};
use crate::algebra::{point, Point, SquareMatrix, MAX_DIM};
use crate::kinematics::{BumpProfile, FlowMap};

/// Bump added to one component of an affine map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpTerm {
    pub center: Vec<f64>,
    pub radius: f64,
    pub amplitude: f64,
    /// Component receiving the bump (zero-based).
    pub axis: usize,
}

/// Serialized form of a [`DeformationMap`]; matrices are row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DeformationSpec {
    /// `u(x) = F x + b`.
    Affine {
        f: Vec<f64>,
        #[serde(default)]
        b: Option<Vec<f64>>,
    },
    /// `u(x) = F x + b + sum_k bump_k(x) e_{axis_k}`.
    AffineBump {
        f: Vec<f64>,
        #[serde(default)]
        b: Option<Vec<f64>>,
        bumps: Vec<BumpTerm>,
    },
    /// `u_i(x) = F_ij x_j + b_i + Q_ijk x_j x_k`, `q` indexed `(i * n + j) * n + k`.
    Quadratic {
        n: usize,
        #[serde(default)]
        f: Option<Vec<f64>>,
        #[serde(default)]
        b: Option<Vec<f64>>,
        q: Vec<f64>,
    },
}

/// Map `u: R^n -> R^n` with analytic first and second derivatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DeformationSpec", into = "DeformationSpec")]
pub struct DeformationMap {
    n: usize,
    f: SquareMatrix,
    b: Point,
    bumps: Vec<(BumpProfile, usize)>,
    quad: Option<[f64; 27]>,
    spec: DeformationSpec,
}

fn square(n_hint: Option<usize>, f: &[f64]) -> Result<SquareMatrix, FunctionalError> {
    let n = match n_hint {
        Some(n) => n,
        None => (1..=MAX_DIM)
            .find(|n| n * n == f.len())
            .ok_or_else(|| FunctionalError::InvalidMap(format!("matrix with {} entries is not square", f.len())))?,
    };
    SquareMatrix::new(n, f).map_err(|e| FunctionalError::InvalidMap(e.to_string()))
}

fn offset(n: usize, b: &Option<Vec<f64>>) -> Result<Point, FunctionalError> {
    match b {
        None => Ok([0.0; MAX_DIM]),
        Some(b) if b.len() == n && b.iter().all(|v| v.is_finite()) => Ok(point(b)),
        Some(b) => Err(FunctionalError::InvalidMap(format!("offset {b:?} needs {n} finite entries"))),
    }
}

impl TryFrom<DeformationSpec> for DeformationMap {
    type Error = FunctionalError;

    fn try_from(spec: DeformationSpec) -> Result<Self, FunctionalError> {
        let (f, b, bumps, quad) = match &spec {
            DeformationSpec::Affine { f, b } => {
                let f = square(None, f)?;
                (f, offset(f.dim(), b)?, Vec::new(), None)
            }
            DeformationSpec::AffineBump { f, b, bumps } => {
                let f = square(None, f)?;
                let n = f.dim();
                let bumps = bumps
                    .iter()
                    .map(|t| {
                        if t.center.len() != n || t.axis >= n {
                            return Err(FunctionalError::InvalidMap(format!(
                                "bump centre {:?} / axis {} do not fit n = {n}",
                                t.center, t.axis
                            )));
                        }
                        Ok((BumpProfile::new(&t.center, t.radius, t.amplitude)?, t.axis))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                (f, offset(n, b)?, bumps, None)
            }
            DeformationSpec::Quadratic { n, f, b, q } => {
                if !(1..=MAX_DIM).contains(n) || q.len() != n * n * n || q.iter().any(|v| !v.is_finite()) {
                    return Err(FunctionalError::InvalidMap(format!(
                        "quadratic map with n = {n} needs {} finite coefficients",
                        n * n * n
                    )));
                }
                let f = match f {
                    Some(f) => square(Some(*n), f)?,
                    None => SquareMatrix::zeros(*n),
                };
                let mut quad = [0.0; 27];
                for i in 0..*n {
                    for j in 0..*n {
                        for k in 0..*n {
                            quad[(i * MAX_DIM + j) * MAX_DIM + k] = q[(i * n + j) * n + k];
                        }
                    }
                }
                (f, offset(*n, b)?, Vec::new(), Some(quad))
            }
        };
        Ok(Self { n: f.dim(), f, b, bumps, quad, spec })
    }
}

impl From<DeformationMap> for DeformationSpec {
    fn from(m: DeformationMap) -> Self {
        m.spec
    }
}

impl DeformationMap {
    pub fn affine(f: SquareMatrix, b: &[f64]) -> Result<Self, FunctionalError> {
        DeformationSpec::Affine { f: f.to_vec(), b: Some(b.to_vec()) }.try_into()
    }

    pub fn affine_bump(f: SquareMatrix, b: &[f64], bumps: Vec<BumpTerm>) -> Result<Self, FunctionalError> {
        DeformationSpec::AffineBump { f: f.to_vec(), b: Some(b.to_vec()), bumps }.try_into()
    }

    pub fn identity(n: usize) -> Self {
        Self::affine(SquareMatrix::identity(n), &vec![0.0; n]).expect("identity is a valid map")
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Linear part `F`.
    pub fn linear_part(&self) -> &SquareMatrix {
        &self.f
    }

    pub fn offset(&self) -> &Point {
        &self.b
    }

    pub fn spec(&self) -> &DeformationSpec {
        &self.spec
    }

    /// Whether `u` is affine outside the union of bump supports.
    pub fn is_affine_near_boundary(&self, domain: &BoxDomain) -> bool {
        self.quad.is_none() && self.bumps.iter().all(|(p, _)| p.inside(domain))
    }

    /// `(u(x), grad u(x))`.
    pub fn eval(&self, x: &Point) -> (Point, SquareMatrix) {
        let n = self.n;
        let mut v = self.f.mul_vec(x);
        for i in 0..n {
            v[i] += self.b[i];
        }
        let mut g = self.f;
        for (p, axis) in &self.bumps {
            let (s, ds) = p.jet1(x);
            v[*axis] += s;
            for j in 0..n {
                g[(*axis, j)] += ds[j];
            }
        }
        if let Some(q) = &self.quad {
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        let c = q[(i * MAX_DIM + j) * MAX_DIM + k];
                        v[i] += c * x[j] * x[k];
                        g[(i, j)] += c * x[k];
                        g[(i, k)] += c * x[j];
                    }
                }
            }
        }
        (v, g)
    }

    pub fn value(&self, x: &Point) -> Point {
        self.eval(x).0
    }

    /// Second derivatives: entry `i` holds `d2 u_i / dx_j dx_k`.
    pub fn second_derivatives(&self, x: &Point) -> [SquareMatrix; MAX_DIM] {
        let n = self.n;
        let mut h = [SquareMatrix::zeros(n); MAX_DIM];
        for (p, axis) in &self.bumps {
            h[*axis] = h[*axis] + p.jet2(x).hess;
        }
        if let Some(q) = &self.quad {
            for (i, hi) in h.iter_mut().enumerate().take(n) {
                for j in 0..n {
                    for k in 0..n {
                        let c = q[(i * MAX_DIM + j) * MAX_DIM + k];
                        hi[(j, k)] += c;
                        hi[(k, j)] += c;
                    }
                }
            }
        }
        h
    }

    /// Solves `u(x) = y` by Newton iteration from the affine inverse.
    /// Returns `None` if the iteration does not converge.
    pub fn invert(&self, y: &Point) -> Option<Point> {
        let n = self.n;
        let finv = self.f.inverse().ok()?;
        let mut r = *y;
        for i in 0..n {
            r[i] -= self.b[i];
        }
        let mut x = finv.mul_vec(&r);
        for _ in 0..60 {
            let (v, g) = self.eval(&x);
            let mut res = [0.0; MAX_DIM];
            for i in 0..n {
                res[i] = v[i] - y[i];
            }
            let err = res[..n].iter().fold(0.0f64, |m, r| m.max(r.abs()));
            if err <= 1e-14 * (1.0 + y[..n].iter().fold(0.0f64, |m, r| m.max(r.abs()))) {
                return Some(x);
            }
            let step = g.inverse().ok()?.mul_vec(&res);
            for i in 0..n {
                x[i] -= step[i];
            }
            if !x[..n].iter().all(|c| c.is_finite()) {
                return None;
            }
        }
        None
    }
}

/// Map used inside a functional: a deformation, a flow, or a composition.
#[derive(Debug, Clone)]
pub enum Map {
    Deformation(DeformationMap),
    Flow(FlowMap),
    Composite(Box<CompositeMap>),
}

impl Map {
    pub fn dim(&self) -> usize {
        match self {
            Map::Deformation(d) => d.dim(),
            Map::Flow(f) => f.dim(),
            Map::Composite(c) => c.inner.dim(),
        }
    }

    pub fn eval(&self, x: &Point) -> (Point, SquareMatrix) {
        match self {
            Map::Deformation(d) => d.eval(x),
            Map::Flow(f) => f.eval(x),
            Map::Composite(c) => c.eval(x),
        }
    }

    pub fn value(&self, x: &Point) -> Point {
        self.eval(x).0
    }
}

impl From<DeformationMap> for Map {
    fn from(d: DeformationMap) -> Self {
        Map::Deformation(d)
    }
}

impl From<FlowMap> for Map {
    fn from(f: FlowMap) -> Self {
        Map::Flow(f)
    }
}

impl From<CompositeMap> for Map {
    fn from(c: CompositeMap) -> Self {
        Map::Composite(Box::new(c))
    }
}

/// `outer o inner` with chain-rule gradient.
#[derive(Debug, Clone)]
pub struct CompositeMap {
    pub outer: Map,
    pub inner: Map,
}

impl CompositeMap {
    pub fn eval(&self, x: &Point) -> (Point, SquareMatrix) {
        let (y, gi) = self.inner.eval(x);
        let (z, go) = self.outer.eval(&y);
        (z, go * gi)
    }
}

/// Composes two maps. When `outer` is a flow whose generator was declared
/// on a box, the image of `domain` (sampled at quadrature and face nodes)
/// under `inner` must stay in that box.
pub fn compose(outer: Map, inner: Map, domain: &BoxDomain) -> Result<CompositeMap, FunctionalError> {
    if outer.dim() != inner.dim() {
        return Err(FunctionalError::DimensionMismatch(outer.dim(), inner.dim()));
    }
    if inner.dim() != domain.dim() {
        return Err(FunctionalError::DimensionMismatch(inner.dim(), domain.dim()));
    }
    if let Map::Flow(flow) = &outer {
        let faces = domain.faces();
        let probes = domain.nodes().into_iter().chain(faces.into_iter().flat_map(|f| f.nodes));
        for q in probes {
            let y = inner.value(&q.x);
            if !flow.defined_at(&y) {
                return Err(FunctionalError::RangeEscape { point: q.x[..domain.dim()].to_vec() });
            }
        }
    }
    Ok(CompositeMap { outer, inner })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bumpy() -> DeformationMap {
        let f = SquareMatrix::new(2, &[1.2, 0.1, -0.2, 0.9]).unwrap();
        DeformationMap::affine_bump(
            f,
            &[0.1, -0.2],
            vec![
                BumpTerm { center: vec![0.4, 0.5], radius: 0.3, amplitude: 0.05, axis: 0 },
                BumpTerm { center: vec![0.6, 0.4], radius: 0.25, amplitude: -0.04, axis: 1 },
            ],
        )
        .unwrap()
    }

    #[test]
    fn gradient_matches_differences() {
        let u = bumpy();
        let h = 1e-6;
        for x in BoxDomain::unit(2).grid(5) {
            let (_, g) = u.eval(&x);
            for j in 0..2 {
                let (mut xp, mut xm) = (x, x);
                xp[j] += h;
                xm[j] -= h;
                let (up, um) = (u.value(&xp), u.value(&xm));
                for i in 0..2 {
                    assert!(((up[i] - um[i]) / (2.0 * h) - g[(i, j)]).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn newton_inverse_round_trip() {
        let u = bumpy();
        for x in BoxDomain::unit(2).grid(7) {
            let back = u.invert(&u.value(&x)).unwrap();
            assert!((back[0] - x[0]).abs() < 1e-12 && (back[1] - x[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn quadratic_second_derivatives() {
        // u = (x^2 - y^2, 2xy)
        let u: DeformationMap = serde_json::from_str(
            r#"{"kind":"quadratic","n":2,"q":[1,0,0,-1, 0,1,1,0]}"#,
        )
        .unwrap();
        let x = [0.3, 0.7, 0.0];
        let (v, g) = u.eval(&x);
        assert!((v[0] - (0.09 - 0.49)).abs() < 1e-15 && (v[1] - 0.42).abs() < 1e-15);
        assert_eq!(g, SquareMatrix::new(2, &[0.6, -1.4, 1.4, 0.6]).unwrap());
        let h = u.second_derivatives(&x);
        assert_eq!(h[0], SquareMatrix::diag(&[2.0, -2.0]));
        assert_eq!(h[1], SquareMatrix::new(2, &[0.0, 2.0, 2.0, 0.0]).unwrap());
    }

    #[test]
    fn serde_round_trip() {
        let u = bumpy();
        let s = serde_json::to_string(&u).unwrap();
        let back: DeformationMap = serde_json::from_str(&s).unwrap();
        assert_eq!(u, back);
    }
}
