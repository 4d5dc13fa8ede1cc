//! Energy densities `W(x, y, F)` with value, first and second
//! `F`-derivatives, a catalog of named densities, and finite-difference
//! verification of analytic derivatives.
//!
//! Derivatives are plain arrays: `gradient` returns `dW/dF_ij` as a matrix
//! and `hessian` returns `d2W/dF_ij dF_kl` as a [`Hessian`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{CharacterSpec, Point, SquareMatrix, MAX_DIM};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnergyError {
    #[error("unknown energy density `{0}`")]
    UnknownName(String),
    #[error("invalid parameters for `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },
    #[error("`{name}` is not defined at this F: {reason}")]
    Domain { name: String, reason: String },
    #[error("`{name}` expects {expected}x{expected} matrices, got {got}x{got}")]
    Dimension { name: String, expected: usize, got: usize },
}

/// Rank-four array `d2W / dF_ij dF_kl`.
#[derive(Clone, Copy, PartialEq)]
pub struct Hessian {
    n: usize,
    d: [f64; 81],
}

impl std::fmt::Debug for Hessian {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Hessian(n = {}, max |entry| = {:e})", self.n, self.max_abs())
    }
}

fn each_index(n: usize, mut f: impl FnMut(usize, usize, usize, usize)) {
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    f(i, j, k, l);
                }
            }
        }
    }
}

#[inline]
fn idx(i: usize, j: usize, k: usize, l: usize) -> usize {
    ((i * MAX_DIM + j) * MAX_DIM + k) * MAX_DIM + l
}

impl Hessian {
    pub fn zeros(n: usize) -> Self {
        Self { n, d: [0.0; 81] }
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize, usize, usize) -> f64) -> Self {
        let mut h = Self::zeros(n);
        each_index(n, |i, j, k, l| h.d[idx(i, j, k, l)] = f(i, j, k, l));
        h
    }

    fn for_each_index(&self, f: impl FnMut(usize, usize, usize, usize)) {
        each_index(self.n, f)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.d[idx(i, j, k, l)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, l: usize, v: f64) {
        self.d[idx(i, j, k, l)] = v;
    }

    pub fn add_scaled(&mut self, other: &Hessian, s: f64) {
        for (a, b) in self.d.iter_mut().zip(other.d.iter()) {
            *a += s * b;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.d.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `sum H_ijkl A_ij B_kl`.
    pub fn bilinear(&self, a: &SquareMatrix, b: &SquareMatrix) -> f64 {
        let mut s = 0.0;
        self.for_each_index(|i, j, k, l| s += self.get(i, j, k, l) * a[(i, j)] * b[(k, l)]);
        s
    }

    /// `C_ij = sum_kl H_ijkl A_kl`.
    pub fn apply(&self, a: &SquareMatrix) -> SquareMatrix {
        let mut out = SquareMatrix::zeros(self.n);
        self.for_each_index(|i, j, k, l| out[(i, j)] += self.get(i, j, k, l) * a[(k, l)]);
        out
    }

    /// Largest `|H_ijkl - H_klij|`.
    pub fn asymmetry(&self) -> f64 {
        let mut m: f64 = 0.0;
        self.for_each_index(|i, j, k, l| m = m.max((self.get(i, j, k, l) - self.get(k, l, i, j)).abs()));
        m
    }

    /// Average with the `(ij) <-> (kl)` transpose; returns the asymmetry removed.
    pub fn symmetrize(&mut self) -> f64 {
        let asym = self.asymmetry();
        let src = *self;
        each_index(self.n, |i, j, k, l| {
            self.d[idx(i, j, k, l)] = 0.5 * (src.get(i, j, k, l) + src.get(k, l, i, j))
        });
        asym
    }
}

/// Which arguments a density depends on besides `F`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Arity {
    pub depends_on_x: bool,
    pub depends_on_y: bool,
}

impl Arity {
    pub fn homogeneous(&self) -> bool {
        !self.depends_on_x && !self.depends_on_y
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeMode {
    Analytic,
    FiniteDifference,
}

/// Integrand `W(x, y, F)` of a functional `I(u) = int W(x, u, grad u) dx`.
///
/// Densities are assumed continuous; only catalog entries guarantee it.
pub trait EnergyDensity: Send + Sync {
    fn name(&self) -> String;

    fn arity(&self) -> Arity {
        Arity::default()
    }

    fn mode(&self) -> DerivativeMode {
        DerivativeMode::FiniteDifference
    }

    fn value(&self, x: &Point, y: &Point, f: &SquareMatrix) -> Result<f64, EnergyError>;

    fn gradient(&self, x: &Point, y: &Point, f: &SquareMatrix) -> Result<SquareMatrix, EnergyError> {
        fd_gradient(|m| self.value(x, y, m), f)
    }

    fn hessian(&self, x: &Point, y: &Point, f: &SquareMatrix) -> Result<Hessian, EnergyError> {
        fd_hessian(|m| self.value(x, y, m), f)
    }
}

/// Relative step of the finite-difference gradient.
pub const FD_GRADIENT_STEP: f64 = 1e-5;
/// Relative step of the finite-difference Hessian (second differences of
/// values lose `eps / h^2`, so this step is larger than the gradient's).
pub const FD_HESSIAN_STEP: f64 = 1e-3;

fn fd_scale(f: &SquareMatrix) -> f64 {
    f.frobenius_norm().max(1.0)
}

fn bump(f: &SquareMatrix, i: usize, j: usize, h: f64) -> SquareMatrix {
    let mut m = *f;
    m[(i, j)] += h;
    m
}

/// Richardson-extrapolated central-difference gradient.
pub fn fd_gradient(
    w: impl Fn(&SquareMatrix) -> Result<f64, EnergyError>,
    f: &SquareMatrix,
) -> Result<SquareMatrix, EnergyError> {
    let n = f.dim();
    let h = FD_GRADIENT_STEP * fd_scale(f);
    let mut g = SquareMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            let d = |h: f64| -> Result<f64, EnergyError> {
                Ok((w(&bump(f, i, j, h))? - w(&bump(f, i, j, -h))?) / (2.0 * h))
            };
            let (d1, d2) = (d(h)?, d(0.5 * h)?);
            g[(i, j)] = (4.0 * d2 - d1) / 3.0;
        }
    }
    Ok(g)
}

/// Richardson-extrapolated second differences; symmetric by construction.
pub fn fd_hessian(
    w: impl Fn(&SquareMatrix) -> Result<f64, EnergyError>,
    f: &SquareMatrix,
) -> Result<Hessian, EnergyError> {
    let n = f.dim();
    let h = FD_HESSIAN_STEP * fd_scale(f);
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    let mut out = Hessian::zeros(n);
    for (a, &(i, j)) in pairs.iter().enumerate() {
        for &(k, l) in &pairs[a..] {
            let d = |h: f64| -> Result<f64, EnergyError> {
                let at = |s: f64, t: f64| w(&bump(&bump(f, i, j, s * h), k, l, t * h));
                Ok((at(1.0, 1.0)? - at(1.0, -1.0)? - at(-1.0, 1.0)? + at(-1.0, -1.0)?) / (4.0 * h * h))
            };
            let (d1, d2) = (d(h)?, d(0.5 * h)?);
            let v = (4.0 * d2 - d1) / 3.0;
            out.set(i, j, k, l, v);
            out.set(k, l, i, j, v);
        }
    }
    Ok(out)
}

/// Convex outer function of a polyconvex density, `g: R^m -> R`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConvexFn {
    /// `sum t_k^2`.
    Square,
    /// `exp(sum t_k)`.
    Exp,
    /// `offset + sum c_k t_k`.
    Linear { coefficients: Vec<f64>, #[serde(default)] offset: f64 },
}

impl ConvexFn {
    pub fn value(&self, t: &[f64]) -> f64 {
        match self {
            ConvexFn::Square => t.iter().map(|v| v * v).sum(),
            ConvexFn::Exp => t.iter().sum::<f64>().exp(),
            ConvexFn::Linear { coefficients, offset } => {
                offset + coefficients.iter().zip(t).map(|(c, v)| c * v).sum::<f64>()
            }
        }
    }

    pub fn gradient(&self, t: &[f64]) -> Vec<f64> {
        match self {
            ConvexFn::Square => t.iter().map(|v| 2.0 * v).collect(),
            ConvexFn::Exp => vec![t.iter().sum::<f64>().exp(); t.len()],
            ConvexFn::Linear { coefficients, .. } => coefficients.clone(),
        }
    }

    /// Row-major `m x m` Hessian.
    pub fn hessian(&self, t: &[f64]) -> Vec<f64> {
        let m = t.len();
        match self {
            ConvexFn::Square => (0..m * m).map(|k| if k / m == k % m { 2.0 } else { 0.0 }).collect(),
            ConvexFn::Exp => vec![t.iter().sum::<f64>().exp(); m * m],
            ConvexFn::Linear { .. } => vec![0.0; m * m],
        }
    }
}

/// Named catalog densities and their parameters. Indices are zero-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum EnergySpec {
    /// `|F|^2`.
    Frobenius2,
    /// `-|F|^2`.
    NegFrobenius2,
    /// `det F`.
    Det,
    /// `adj(F)_ij`.
    AdjComponent { i: usize, j: usize },
    /// `F_ij`.
    LinearComponent { i: usize, j: usize },
    /// `sum L_ij F_ij + sum A_ij adj(F)_ij + c det F`, coefficients row-major.
    ClassicalNll { n: usize, linear: Vec<f64>, adj: Vec<f64>, det: f64 },
    /// `log det F`, defined for `det F > 1e-12`.
    Logdet,
    /// Saint Venant–Kirchhoff: `(lambda/2) tr(E)^2 + mu tr(E^2)`, `E = (F^T F - I)/2`.
    Stvk { lambda: f64, mu: f64 },
    /// `log chi(F)` for a group character `chi`.
    CharLog { character: CharacterSpec },
    /// `g(w_1(F), ..., w_m(F))` with `g` convex and `w_k` null lagrangians.
    Polyconvex { g: ConvexFn, w: Vec<EnergySpec> },
}

/// Catalog names with one-line descriptions, sorted by name.
pub const CATALOG: &[(&str, &str)] = &[
    ("adj_component", "adjugate entry adj(F)_ij, classical null lagrangian"),
    ("char_log", "logarithm of a group character, null lagrangian of the character's local group"),
    ("classical_nll", "linear combination of F_ij, adj(F)_ij and det F, classical null lagrangian"),
    ("det", "classical null lagrangian"),
    ("frobenius2", "squared Frobenius norm |F|^2, strictly convex"),
    ("linear_component", "matrix entry F_ij, classical null lagrangian"),
    ("logdet", "log det F, invariant under volume preserving inner variations"),
    ("neg_frobenius2", "-|F|^2, concave counterexample"),
    ("polyconvex", "convex function of null lagrangians"),
    ("stvk", "Saint Venant-Kirchhoff, loses ellipticity under strong compression"),
];

/// Validated catalog density.
#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    spec: EnergySpec,
    parts: Vec<Catalog>,
}

fn invalid(name: &str, reason: impl Into<String>) -> EnergyError {
    EnergyError::InvalidParameter { name: name.into(), reason: reason.into() }
}

impl Catalog {
    pub fn new(spec: EnergySpec) -> Result<Self, EnergyError> {
        let name = spec_name(&spec);
        let mut parts = Vec::new();
        match &spec {
            EnergySpec::AdjComponent { i, j } | EnergySpec::LinearComponent { i, j } => {
                if *i >= MAX_DIM || *j >= MAX_DIM {
                    return Err(invalid(name, format!("index ({i},{j}) out of range")));
                }
            }
            EnergySpec::ClassicalNll { n, linear, adj, det } => {
                if !(2..=MAX_DIM).contains(n) {
                    return Err(invalid(name, format!("n = {n} must be 2 or 3")));
                }
                if linear.len() != n * n || adj.len() != n * n {
                    return Err(invalid(name, format!("coefficient arrays need {} entries", n * n)));
                }
                if linear.iter().chain(adj).chain(std::iter::once(det)).any(|c| !c.is_finite()) {
                    return Err(invalid(name, "coefficients must be finite"));
                }
            }
            EnergySpec::Stvk { lambda, mu } => {
                if !lambda.is_finite() || !mu.is_finite() || *mu < 0.0 {
                    return Err(invalid(name, format!("need finite lambda and mu >= 0 (got {lambda}, {mu})")));
                }
            }
            EnergySpec::CharLog { character } => {
                character.validate().map_err(|e| invalid(name, e.to_string()))?;
            }
            EnergySpec::Polyconvex { g, w } => {
                if w.is_empty() {
                    return Err(invalid(name, "need at least one inner density"));
                }
                if let ConvexFn::Linear { coefficients, offset } = g {
                    if coefficients.len() != w.len() || !offset.is_finite() {
                        return Err(invalid(name, "linear g needs one coefficient per inner density"));
                    }
                }
                parts = w.iter().cloned().map(Catalog::new).collect::<Result<_, _>>()?;
            }
            _ => {}
        }
        Ok(Self { spec, parts })
    }

    pub fn spec(&self) -> &EnergySpec {
        &self.spec
    }

    /// Dimension fixed by the parameters, if any.
    pub fn fixed_dim(&self) -> Option<usize> {
        match &self.spec {
            EnergySpec::ClassicalNll { n, .. } => Some(*n),
            EnergySpec::CharLog { character } => Some(character.dim()),
            EnergySpec::Polyconvex { .. } => self.parts.iter().find_map(Catalog::fixed_dim),
            _ => None,
        }
    }

    fn check_dim(&self, f: &SquareMatrix) -> Result<(), EnergyError> {
        let n = f.dim();
        let name = spec_name(&self.spec);
        if let Some(expected) = self.fixed_dim() {
            if expected != n {
                return Err(EnergyError::Dimension { name: name.into(), expected, got: n });
            }
        }
        match &self.spec {
            EnergySpec::AdjComponent { i, j } if n < 2 || *i >= n || *j >= n => Err(EnergyError::Domain {
                name: name.into(),
                reason: format!("adj({i},{j}) needs n >= 2 and indices below n = {n}"),
            }),
            EnergySpec::LinearComponent { i, j } if *i >= n || *j >= n => Err(EnergyError::Domain {
                name: name.into(),
                reason: format!("entry ({i},{j}) out of range for n = {n}"),
            }),
            _ => Ok(()),
        }
    }

    fn domain_error(&self, reason: impl Into<String>) -> EnergyError {
        EnergyError::Domain { name: spec_name(&self.spec).into(), reason: reason.into() }
    }

    fn value_at(&self, f: &SquareMatrix) -> Result<f64, EnergyError> {
        self.check_dim(f)?;
        let n = f.dim();
        Ok(match &self.spec {
            EnergySpec::Frobenius2 => f.dot(f),
            EnergySpec::NegFrobenius2 => -f.dot(f),
            EnergySpec::Det => f.det(),
            EnergySpec::AdjComponent { i, j } => f.adjugate().expect("n >= 2")[(*i, *j)],
            EnergySpec::LinearComponent { i, j } => f[(*i, *j)],
            EnergySpec::ClassicalNll { linear, adj, det, .. } => {
                let l = SquareMatrix::new(n, linear).expect("validated");
                let a = SquareMatrix::new(n, adj).expect("validated");
                l.dot(f) + a.dot(&f.adjugate().expect("n >= 2")) + det * f.det()
            }
            EnergySpec::Logdet => {
                let d = f.det();
                if d <= LOGDET_FLOOR {
                    return Err(self.domain_error(format!("det F = {d:e} is not above {LOGDET_FLOOR:e}")));
                }
                d.ln()
            }
            EnergySpec::Stvk { lambda, mu } => {
                let e = green_strain(f);
                let tr = e.trace();
                0.5 * lambda * tr * tr + mu * e.dot(&e)
            }
            EnergySpec::CharLog { character } => {
                if let CharacterSpec::DiagonalPower { .. } = character {
                    if (0..n).any(|i| f[(i, i)] <= 0.0) {
                        return Err(self.domain_error("diagonal entries must be positive"));
                    }
                }
                character.log_value(f)
            }
            EnergySpec::Polyconvex { g, .. } => {
                let t: Vec<f64> = self.parts.iter().map(|p| p.value_at(f)).collect::<Result<_, _>>()?;
                g.value(&t)
            }
        })
    }

    fn gradient_at(&self, f: &SquareMatrix) -> Result<SquareMatrix, EnergyError> {
        self.check_dim(f)?;
        let n = f.dim();
        Ok(match &self.spec {
            EnergySpec::Frobenius2 => *f * 2.0,
            EnergySpec::NegFrobenius2 => *f * -2.0,
            EnergySpec::Det => f.cofactor(),
            EnergySpec::AdjComponent { i, j } => adj_gradient(f, *i, *j),
            EnergySpec::LinearComponent { i, j } => unit(n, *i, *j),
            EnergySpec::ClassicalNll { linear, adj, det, .. } => {
                let mut g = SquareMatrix::new(n, linear).expect("validated") + f.cofactor() * *det;
                for i in 0..n {
                    for j in 0..n {
                        let c = adj[i * n + j];
                        if c != 0.0 {
                            g = g + adj_gradient(f, i, j) * c;
                        }
                    }
                }
                g
            }
            EnergySpec::Logdet => {
                self.value_at(f)?;
                f.inverse().expect("det > 0").transpose()
            }
            EnergySpec::Stvk { lambda, mu } => *f * stvk_stress(f, *lambda, *mu),
            EnergySpec::CharLog { character } => match character {
                CharacterSpec::ShearExp { c, p, q, .. } => unit(n, *p, *q) * *c,
                CharacterSpec::DiagonalPower { exponents } => {
                    self.value_at(f)?;
                    SquareMatrix::from_fn(n, |i, j| if i == j { exponents[i] / f[(i, i)] } else { 0.0 })
                }
            },
            EnergySpec::Polyconvex { g, .. } => {
                let t: Vec<f64> = self.parts.iter().map(|p| p.value_at(f)).collect::<Result<_, _>>()?;
                let dg = g.gradient(&t);
                let mut out = SquareMatrix::zeros(n);
                for (p, c) in self.parts.iter().zip(dg) {
                    out = out + p.gradient_at(f)? * c;
                }
                out
            }
        })
    }

    fn hessian_at(&self, f: &SquareMatrix) -> Result<Hessian, EnergyError> {
        self.check_dim(f)?;
        let n = f.dim();
        let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
        Ok(match &self.spec {
            EnergySpec::Frobenius2 => Hessian::from_fn(n, |i, j, k, l| 2.0 * d(i, k) * d(j, l)),
            EnergySpec::NegFrobenius2 => Hessian::from_fn(n, |i, j, k, l| -2.0 * d(i, k) * d(j, l)),
            EnergySpec::Det => det_hessian(f),
            EnergySpec::AdjComponent { i, j } => adj_hessian(n, *i, *j),
            EnergySpec::LinearComponent { .. } => Hessian::zeros(n),
            EnergySpec::ClassicalNll { adj, det, .. } => {
                let mut h = Hessian::zeros(n);
                h.add_scaled(&det_hessian(f), *det);
                for i in 0..n {
                    for j in 0..n {
                        let c = adj[i * n + j];
                        if c != 0.0 {
                            h.add_scaled(&adj_hessian(n, i, j), c);
                        }
                    }
                }
                h
            }
            EnergySpec::Logdet => {
                self.value_at(f)?;
                let inv = f.inverse().expect("det > 0");
                Hessian::from_fn(n, |i, j, k, l| -inv[(j, k)] * inv[(l, i)])
            }
            EnergySpec::Stvk { lambda, mu } => {
                let s = stvk_stress(f, *lambda, *mu);
                let f_ft = *f * f.transpose();
                Hessian::from_fn(n, |i, j, k, l| {
                    d(i, k) * s[(l, j)]
                        + lambda * f[(i, j)] * f[(k, l)]
                        + mu * (f[(i, l)] * f[(k, j)] + f_ft[(i, k)] * d(j, l))
                })
            }
            EnergySpec::CharLog { character } => match character {
                CharacterSpec::ShearExp { .. } => Hessian::zeros(n),
                CharacterSpec::DiagonalPower { exponents } => {
                    self.value_at(f)?;
                    Hessian::from_fn(n, |i, j, k, l| {
                        if i == j && k == l && i == k {
                            -exponents[i] / (f[(i, i)] * f[(i, i)])
                        } else {
                            0.0
                        }
                    })
                }
            },
            EnergySpec::Polyconvex { g, .. } => {
                let t: Vec<f64> = self.parts.iter().map(|p| p.value_at(f)).collect::<Result<_, _>>()?;
                let m = t.len();
                let dg = g.gradient(&t);
                let d2g = g.hessian(&t);
                let grads: Vec<SquareMatrix> =
                    self.parts.iter().map(|p| p.gradient_at(f)).collect::<Result<_, _>>()?;
                let mut h = Hessian::zeros(n);
                for (p, c) in self.parts.iter().zip(&dg) {
                    h.add_scaled(&p.hessian_at(f)?, *c);
                }
                for a in 0..m {
                    for b in 0..m {
                        let c = d2g[a * m + b];
                        if c != 0.0 {
                            let (ga, gb) = (grads[a], grads[b]);
                            h.add_scaled(&Hessian::from_fn(n, |i, j, k, l| ga[(i, j)] * gb[(k, l)]), c);
                        }
                    }
                }
                h
            }
        })
    }
}

/// Lower bound of `det F` accepted by `logdet`.
pub const LOGDET_FLOOR: f64 = 1e-12;

fn spec_name(spec: &EnergySpec) -> &'static str {
    match spec {
        EnergySpec::Frobenius2 => "frobenius2",
        EnergySpec::NegFrobenius2 => "neg_frobenius2",
        EnergySpec::Det => "det",
        EnergySpec::AdjComponent { .. } => "adj_component",
        EnergySpec::LinearComponent { .. } => "linear_component",
        EnergySpec::ClassicalNll { .. } => "classical_nll",
        EnergySpec::Logdet => "logdet",
        EnergySpec::Stvk { .. } => "stvk",
        EnergySpec::CharLog { .. } => "char_log",
        EnergySpec::Polyconvex { .. } => "polyconvex",
    }
}

fn unit(n: usize, i: usize, j: usize) -> SquareMatrix {
    SquareMatrix::from_fn(n, |a, b| if (a, b) == (i, j) { 1.0 } else { 0.0 })
}

fn green_strain(f: &SquareMatrix) -> SquareMatrix {
    let n = f.dim();
    (f.transpose() * *f - SquareMatrix::identity(n)) * 0.5
}

/// Second Piola–Kirchhoff stress `lambda tr(E) I + 2 mu E`.
fn stvk_stress(f: &SquareMatrix, lambda: f64, mu: f64) -> SquareMatrix {
    let e = green_strain(f);
    SquareMatrix::identity(f.dim()) * (lambda * e.trace()) + e * (2.0 * mu)
}

fn eps2(i: usize, j: usize) -> f64 {
    match (i, j) {
        (0, 1) => 1.0,
        (1, 0) => -1.0,
        _ => 0.0,
    }
}

fn eps3(i: usize, j: usize, k: usize) -> f64 {
    if i == j || j == k || i == k {
        0.0
    } else if (i, j, k) == (0, 1, 2) || (i, j, k) == (1, 2, 0) || (i, j, k) == (2, 0, 1) {
        1.0
    } else {
        -1.0
    }
}

fn det_hessian(f: &SquareMatrix) -> Hessian {
    let n = f.dim();
    match n {
        1 => Hessian::zeros(1),
        2 => Hessian::from_fn(2, |i, j, k, l| eps2(i, k) * eps2(j, l)),
        _ => Hessian::from_fn(3, |i, j, k, l| {
            let mut s = 0.0;
            for m in 0..3 {
                for p in 0..3 {
                    s += eps3(i, k, m) * eps3(j, l, p) * f[(m, p)];
                }
            }
            s
        }),
    }
}

/// `d adj(F)_ij / dF_ab`.
fn adj_gradient(f: &SquareMatrix, i: usize, j: usize) -> SquareMatrix {
    match f.dim() {
        2 => SquareMatrix::from_fn(2, |a, b| eps2(i, b) * eps2(j, a)),
        _ => SquareMatrix::from_fn(3, |a, b| {
            let mut s = 0.0;
            for m in 0..3 {
                for q in 0..3 {
                    s += eps3(j, a, m) * eps3(i, b, q) * f[(m, q)];
                }
            }
            s
        }),
    }
}

fn adj_hessian(n: usize, i: usize, j: usize) -> Hessian {
    match n {
        2 => Hessian::zeros(2),
        _ => Hessian::from_fn(3, |a, b, c, d| eps3(j, a, c) * eps3(i, b, d)),
    }
}

impl EnergyDensity for Catalog {
    fn name(&self) -> String {
        spec_name(&self.spec).to_string()
    }

    fn mode(&self) -> DerivativeMode {
        DerivativeMode::Analytic
    }

    fn value(&self, _x: &Point, _y: &Point, f: &SquareMatrix) -> Result<f64, EnergyError> {
        self.value_at(f)
    }

    fn gradient(&self, _x: &Point, _y: &Point, f: &SquareMatrix) -> Result<SquareMatrix, EnergyError> {
        self.gradient_at(f)
    }

    fn hessian(&self, _x: &Point, _y: &Point, f: &SquareMatrix) -> Result<Hessian, EnergyError> {
        self.hessian_at(f)
    }
}

/// Looks up a catalog density by name; `params` holds the remaining fields.
pub fn catalog_get(name: &str, params: serde_json::Value) -> Result<Catalog, EnergyError> {
    if !CATALOG.iter().any(|(n, _)| *n == name) {
        return Err(EnergyError::UnknownName(name.to_string()));
    }
    let mut obj = match params {
        serde_json::Value::Null => serde_json::Map::new(),
        serde_json::Value::Object(m) => m,
        other => return Err(invalid(name, format!("parameters must be an object, got {other}"))),
    };
    obj.insert("name".into(), serde_json::Value::String(name.to_string()));
    let spec: EnergySpec =
        serde_json::from_value(serde_json::Value::Object(obj)).map_err(|e| invalid(name, e.to_string()))?;
    Catalog::new(spec)
}

/// User-supplied density; derivatives by finite differences.
pub struct FnDensity<F> {
    name: String,
    arity: Arity,
    f: F,
}

impl<F> FnDensity<F>
where
    F: Fn(&Point, &Point, &SquareMatrix) -> f64 + Send + Sync,
{
    pub fn new(name: impl Into<String>, arity: Arity, f: F) -> Self {
        Self { name: name.into(), arity, f }
    }
}

impl<F> EnergyDensity for FnDensity<F>
where
    F: Fn(&Point, &Point, &SquareMatrix) -> f64 + Send + Sync,
{
    fn name(&self) -> String {
        self.name.clone()
    }

    fn arity(&self) -> Arity {
        self.arity
    }

    fn value(&self, x: &Point, y: &Point, f: &SquareMatrix) -> Result<f64, EnergyError> {
        let v = (self.f)(x, y, f);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EnergyError::Domain { name: self.name.clone(), reason: format!("value {v} is not finite") })
        }
    }
}

/// Value and derivatives at one point; `asymmetry` is the `(ij) <-> (kl)`
/// asymmetry removed from the Hessian.
#[derive(Debug, Clone, Copy)]
pub struct Derivatives {
    pub value: f64,
    pub grad: SquareMatrix,
    pub hess: Hessian,
    pub asymmetry: f64,
}

pub fn energy_derivatives(
    w: &dyn EnergyDensity,
    x: &Point,
    y: &Point,
    f: &SquareMatrix,
) -> Result<Derivatives, EnergyError> {
    let value = w.value(x, y, f)?;
    let grad = w.gradient(x, y, f)?;
    let mut hess = w.hessian(x, y, f)?;
    let asymmetry = hess.symmetrize();
    Ok(Derivatives { value, grad, hess, asymmetry })
}

/// Max-norm discrepancies between analytic and central-difference derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdCheck {
    pub grad_error: f64,
    pub hess_error: f64,
}

/// Compares `w`'s derivatives at `f` (with `x = y = 0`) against central
/// differences of step `h`: values for the gradient, the reported gradient
/// for the Hessian.
pub fn fd_derivative_check(w: &dyn EnergyDensity, f: &SquareMatrix, h: f64) -> Result<FdCheck, EnergyError> {
    let o = [0.0; MAX_DIM];
    let n = f.dim();
    let grad = w.gradient(&o, &o, f)?;
    let hess = w.hessian(&o, &o, f)?;
    let mut grad_error: f64 = 0.0;
    let mut hess_error: f64 = 0.0;
    for k in 0..n {
        for l in 0..n {
            let (fp, fm) = (bump(f, k, l, h), bump(f, k, l, -h));
            let dv = (w.value(&o, &o, &fp)? - w.value(&o, &o, &fm)?) / (2.0 * h);
            grad_error = grad_error.max((dv - grad[(k, l)]).abs());
            let dg = (w.gradient(&o, &o, &fp)? - w.gradient(&o, &o, &fm)?) * (1.0 / (2.0 * h));
            for i in 0..n {
                for j in 0..n {
                    hess_error = hess_error.max((dg[(i, j)] - hess.get(i, j, k, l)).abs());
                }
            }
        }
    }
    Ok(FdCheck { grad_error, hess_error })
}
