//! Small dense matrices, jet predicates of the supported diffeomorphism
//! groups, group characters and seeded jet sampling.
//!
//! Dimensions are capped at three, so determinants, adjugates and inverses
//! are closed-form. Indices are zero-based throughout: `Shear { p: 0, q: 1 }`
//! is the shear `I + s E_12` of the usual one-based notation.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

pub const MAX_DIM: usize = 3;

/// A point of `R^n`, `n <= 3`; unused trailing coordinates are zero.
pub type Point = [f64; MAX_DIM];

/// Default tolerance of jet predicates for numerically produced jets.
pub const JET_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AlgebraError {
    #[error("dimension {0} is not supported (expected 1, 2 or 3)")]
    BadDimension(usize),
    #[error("expected {expected} entries, got {got}")]
    EntryCount { expected: usize, got: usize },
    #[error("matrix entry ({row}, {col}) is not finite")]
    NonFinite { row: usize, col: usize },
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("adjugate is not defined for 1x1 matrices")]
    ScalarAdjugate,
    #[error("matrix is singular (det = {0:e})")]
    Singular(f64),
    #[error("invalid group: {0}")]
    InvalidGroup(String),
    #[error("invalid character: {0}")]
    InvalidCharacter(String),
    #[error("matrix is not in the group of the character (deviation {0:e})")]
    NotInCharacterGroup(f64),
}

/// Dense `n x n` real matrix, `1 <= n <= 3`. Serialized as its `n * n`
/// row-major entries.
#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SquareMatrix {
    n: usize,
    e: [[f64; MAX_DIM]; MAX_DIM],
}

impl fmt::Debug for SquareMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<&[f64]> = (0..self.n).map(|i| &self.e[i][..self.n]).collect();
        write!(f, "SquareMatrix{:?}", rows)
    }
}

impl TryFrom<Vec<f64>> for SquareMatrix {
    type Error = AlgebraError;
    fn try_from(v: Vec<f64>) -> Result<Self, AlgebraError> {
        let n = (1..=MAX_DIM).find(|n| n * n == v.len()).ok_or(AlgebraError::BadDimension(v.len()))?;
        SquareMatrix::new(n, &v)
    }
}

impl From<SquareMatrix> for Vec<f64> {
    fn from(m: SquareMatrix) -> Self {
        m.to_vec()
    }
}

fn check_dim(n: usize) -> Result<(), AlgebraError> {
    if (1..=MAX_DIM).contains(&n) {
        Ok(())
    } else {
        Err(AlgebraError::BadDimension(n))
    }
}

impl SquareMatrix {
    /// Builds a matrix from `n * n` row-major entries.
    pub fn new(n: usize, row_major: &[f64]) -> Result<Self, AlgebraError> {
        check_dim(n)?;
        if row_major.len() != n * n {
            return Err(AlgebraError::EntryCount { expected: n * n, got: row_major.len() });
        }
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                let v = row_major[i * n + j];
                if !v.is_finite() {
                    return Err(AlgebraError::NonFinite { row: i, col: j });
                }
                m.e[i][j] = v;
            }
        }
        Ok(m)
    }

    pub fn zeros(n: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&n), "dimension {n} out of range");
        Self { n, e: [[0.0; MAX_DIM]; MAX_DIM] }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn diag(d: &[f64]) -> Self {
        Self::from_fn(d.len(), |i, j| if i == j { d[i] } else { 0.0 })
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.e[i][j] = f(i, j);
            }
        }
        m
    }

    /// `a b^T`.
    pub fn outer(n: usize, a: &Point, b: &Point) -> Self {
        Self::from_fn(n, |i, j| a[i] * b[j])
    }

    /// `I + s E_pq`.
    pub fn shear(n: usize, p: usize, q: usize, s: f64) -> Self {
        let mut m = Self::identity(n);
        m.e[p][q] += s;
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.n * self.n);
        for i in 0..self.n {
            v.extend_from_slice(&self.e[i][..self.n]);
        }
        v
    }

    pub fn is_finite(&self) -> bool {
        (0..self.n).all(|i| (0..self.n).all(|j| self.e[i][j].is_finite()))
    }

    pub fn det(&self) -> f64 {
        let e = &self.e;
        match self.n {
            1 => e[0][0],
            2 => e[0][0] * e[1][1] - e[0][1] * e[1][0],
            _ => {
                e[0][0] * (e[1][1] * e[2][2] - e[1][2] * e[2][1])
                    - e[0][1] * (e[1][0] * e[2][2] - e[1][2] * e[2][0])
                    + e[0][2] * (e[1][0] * e[2][1] - e[1][1] * e[2][0])
            }
        }
    }

    /// Classical adjugate, `adj(M) M = det(M) I`.
    pub fn adjugate(&self) -> Result<Self, AlgebraError> {
        let e = &self.e;
        match self.n {
            1 => Err(AlgebraError::ScalarAdjugate),
            2 => Ok(Self::from_fn(2, |i, j| match (i, j) {
                (0, 0) => e[1][1],
                (0, 1) => -e[0][1],
                (1, 0) => -e[1][0],
                _ => e[0][0],
            })),
            _ => Ok(Self::from_fn(3, |i, j| {
                // adj_ij = cofactor_ji
                let (r0, r1) = ((j + 1) % 3, (j + 2) % 3);
                let (c0, c1) = ((i + 1) % 3, (i + 2) % 3);
                e[r0][c0] * e[r1][c1] - e[r0][c1] * e[r1][c0]
            })),
        }
    }

    /// Cofactor matrix `adj(M)^T`, the derivative of `det` at `M`.
    pub fn cofactor(&self) -> Self {
        match self.n {
            1 => Self::identity(1),
            _ => self.adjugate().expect("n >= 2").transpose(),
        }
    }

    pub fn inverse(&self) -> Result<Self, AlgebraError> {
        let d = self.det();
        if d == 0.0 || !d.is_finite() {
            return Err(AlgebraError::Singular(d));
        }
        match self.n {
            1 => Ok(Self::diag(&[1.0 / self.e[0][0]])),
            _ => Ok(self.adjugate()? * (1.0 / d)),
        }
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.n, |i, j| self.e[j][i])
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.e[i][i]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Entrywise inner product `sum_ij A_ij B_ij`.
    pub fn dot(&self, other: &Self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                s += self.e[i][j] * other.e[i][j];
            }
        }
        s
    }

    pub fn max_abs(&self) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                m = m.max(self.e[i][j].abs());
            }
        }
        m
    }

    pub fn mul_vec(&self, v: &Point) -> Point {
        let mut out = [0.0; MAX_DIM];
        for i in 0..self.n {
            for j in 0..self.n {
                out[i] += self.e[i][j] * v[j];
            }
        }
        out
    }

    /// Largest over smallest singular value, from the eigenvalues of `M^T M`.
    pub fn condition_number(&self) -> f64 {
        let (vals, _) = symmetric_eigen(&(self.transpose() * *self));
        let lo = vals[0].max(0.0).sqrt();
        let hi = vals[self.n - 1].max(0.0).sqrt();
        hi / lo
    }
}

impl Index<(usize, usize)> for SquareMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.n && j < self.n);
        &self.e[i][j]
    }
}

impl IndexMut<(usize, usize)> for SquareMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.n && j < self.n);
        &mut self.e[i][j]
    }
}

impl Mul for SquareMatrix {
    type Output = SquareMatrix;
    fn mul(self, rhs: SquareMatrix) -> SquareMatrix {
        debug_assert_eq!(self.n, rhs.n);
        let n = self.n;
        let mut out = SquareMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.e[i][k];
                for j in 0..n {
                    out.e[i][j] += a * rhs.e[k][j];
                }
            }
        }
        out
    }
}

impl Mul<f64> for SquareMatrix {
    type Output = SquareMatrix;
    fn mul(self, s: f64) -> SquareMatrix {
        SquareMatrix::from_fn(self.n, |i, j| self.e[i][j] * s)
    }
}

impl Add for SquareMatrix {
    type Output = SquareMatrix;
    fn add(self, rhs: SquareMatrix) -> SquareMatrix {
        debug_assert_eq!(self.n, rhs.n);
        SquareMatrix::from_fn(self.n, |i, j| self.e[i][j] + rhs.e[i][j])
    }
}

impl Sub for SquareMatrix {
    type Output = SquareMatrix;
    fn sub(self, rhs: SquareMatrix) -> SquareMatrix {
        debug_assert_eq!(self.n, rhs.n);
        SquareMatrix::from_fn(self.n, |i, j| self.e[i][j] - rhs.e[i][j])
    }
}

impl Neg for SquareMatrix {
    type Output = SquareMatrix;
    fn neg(self) -> SquareMatrix {
        self * -1.0
    }
}

pub fn dot(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm(a: &Point) -> f64 {
    dot(a, a).sqrt()
}

/// Point from the first `n` entries of a slice.
pub fn point(coords: &[f64]) -> Point {
    let mut p = [0.0; MAX_DIM];
    p[..coords.len()].copy_from_slice(coords);
    p
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in ascending order (trailing unused slots are
/// `+inf`) and the matching unit eigenvectors as matrix columns.
pub fn symmetric_eigen(m: &SquareMatrix) -> ([f64; MAX_DIM], SquareMatrix) {
    let n = m.n;
    let mut a = *m;
    let mut v = SquareMatrix::identity(n);
    for _sweep in 0..64 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += a.e[p][q] * a.e[p][q];
            }
        }
        if off <= 1e-300 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a.e[p][q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a.e[q][q] - a.e[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a.e[k][p];
                    let akq = a.e[k][q];
                    a.e[k][p] = c * akp - s * akq;
                    a.e[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a.e[p][k];
                    let aqk = a.e[q][k];
                    a.e[p][k] = c * apk - s * aqk;
                    a.e[q][k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v.e[k][p];
                    let vkq = v.e[k][q];
                    v.e[k][p] = c * vkp - s * vkq;
                    v.e[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.e[i][i].total_cmp(&a.e[j][j]));
    let mut vals = [f64::INFINITY; MAX_DIM];
    let mut vecs = SquareMatrix::zeros(n);
    for (slot, &k) in order.iter().enumerate() {
        vals[slot] = a.e[k][k];
        for r in 0..n {
            vecs.e[r][slot] = v.e[r][k];
        }
    }
    (vals, vecs)
}

/// Matrix group described by its first-order jet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GroupKind {
    /// All compactly supported diffeomorphisms; jets `GL+_n`.
    FullDiff,
    /// Volume preserving diffeomorphisms; jets `SL_n`.
    VolumePreserving,
    /// Area preserving (symplectic) maps of the plane; jets `Sp_1 = SL_2`.
    #[serde(rename = "symplectic2d")]
    Symplectic2D,
    /// Shears along `e_p` driven by `x_q`; jets `{I + s E_pq}`.
    Shear { p: usize, q: usize },
    /// Increasing diffeomorphisms of an interval; jets `(0, inf)`.
    #[serde(rename = "separable1d")]
    Separable1D,
}

impl GroupKind {
    pub fn label(&self) -> String {
        match self {
            GroupKind::FullDiff => "full_diff".into(),
            GroupKind::VolumePreserving => "volume_preserving".into(),
            GroupKind::Symplectic2D => "symplectic2d".into(),
            GroupKind::Shear { p, q } => format!("shear({p},{q})"),
            GroupKind::Separable1D => "separable1d".into(),
        }
    }

    /// Whether the generators can move every point of the domain in every
    /// direction. Recorded for reference only; no tester depends on it.
    pub fn acts_transitively(&self) -> bool {
        !matches!(self, GroupKind::Shear { .. })
    }
}

/// A group kind in a fixed ambient dimension, with a membership tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    #[serde(flatten)]
    pub kind: GroupKind,
    pub n: usize,
    #[serde(default = "default_jet_tolerance")]
    pub tolerance: f64,
}

fn default_jet_tolerance() -> f64 {
    JET_TOLERANCE
}

/// Outcome of a jet predicate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JetCheck {
    pub member: bool,
    pub deviation: f64,
}

impl GroupSpec {
    pub fn new(kind: GroupKind, n: usize) -> Result<Self, AlgebraError> {
        let g = Self { kind, n, tolerance: JET_TOLERANCE };
        g.validate()?;
        Ok(g)
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn validate(&self) -> Result<(), AlgebraError> {
        check_dim(self.n)?;
        match self.kind {
            GroupKind::Symplectic2D if self.n != 2 => {
                Err(AlgebraError::InvalidGroup("symplectic2d requires n = 2".into()))
            }
            GroupKind::Separable1D if self.n != 1 => {
                Err(AlgebraError::InvalidGroup("separable1d requires n = 1".into()))
            }
            GroupKind::Shear { p, q } if p == q => {
                Err(AlgebraError::InvalidGroup(format!("shear requires p != q (got p = q = {p})")))
            }
            GroupKind::Shear { p, q } if p >= self.n || q >= self.n => Err(AlgebraError::InvalidGroup(
                format!("shear indices ({p},{q}) out of range for n = {}", self.n),
            )),
            _ if !(self.tolerance >= 0.0) => {
                Err(AlgebraError::InvalidGroup("tolerance must be non-negative".into()))
            }
            _ => Ok(()),
        }
    }

    /// Distance of `m` from exact membership in the jet set.
    pub fn jet_deviation(&self, m: &SquareMatrix) -> f64 {
        match self.kind {
            GroupKind::FullDiff | GroupKind::Separable1D => (-m.det()).max(0.0),
            GroupKind::VolumePreserving => (m.det() - 1.0).abs(),
            GroupKind::Symplectic2D => {
                let omega = SquareMatrix::new(2, &[0.0, 1.0, -1.0, 0.0]).expect("static");
                (*m * omega * m.transpose() - omega).max_abs()
            }
            GroupKind::Shear { p, q } => {
                let mut dev: f64 = 0.0;
                for i in 0..m.n {
                    for j in 0..m.n {
                        if (i, j) != (p, q) {
                            let target = if i == j { 1.0 } else { 0.0 };
                            dev = dev.max((m[(i, j)] - target).abs());
                        }
                    }
                }
                dev
            }
        }
    }

    /// Jet predicate `m in J(G)` within `self.tolerance`.
    ///
    /// For `FullDiff` and `Separable1D` the predicate is `det m > 0` and the
    /// deviation is the amount by which the determinant is negative.
    pub fn jet_member(&self, m: &SquareMatrix) -> Result<JetCheck, AlgebraError> {
        if m.dim() != self.n {
            return Err(AlgebraError::DimensionMismatch(self.n, m.dim()));
        }
        let deviation = self.jet_deviation(m);
        let member = match self.kind {
            GroupKind::FullDiff | GroupKind::Separable1D => m.det() > 0.0,
            _ => deviation <= self.tolerance,
        };
        Ok(JetCheck { member, deviation })
    }

    /// Seeded sample of `J(G)`.
    ///
    /// `GL+` jets are `R1 diag(s) R2` with rotations `R1, R2` and singular
    /// values `s_i in [0.5, 2]` (condition number at most 4); `SL` and `Sp`
    /// jets rescale `s` to unit product (condition number at most 16);
    /// shears draw `s in [-2, 2]`.
    pub fn random_jet_element(&self, seed: u64) -> SquareMatrix {
        let mut r = rng::stream(seed);
        let n = self.n;
        match self.kind {
            GroupKind::Shear { p, q } => SquareMatrix::shear(n, p, q, r.random_range(-2.0..=2.0)),
            GroupKind::Separable1D => SquareMatrix::diag(&[r.random_range(0.5..=2.0)]),
            GroupKind::FullDiff | GroupKind::VolumePreserving | GroupKind::Symplectic2D => {
                let mut s: Vec<f64> = (0..n).map(|_| r.random_range(0.5..=2.0)).collect();
                if self.kind != GroupKind::FullDiff {
                    let gm = s.iter().map(|v| v.ln()).sum::<f64>() / n as f64;
                    s.iter_mut().for_each(|v| *v /= gm.exp());
                }
                let r1 = random_rotation(n, &mut r);
                let r2 = random_rotation(n, &mut r);
                let mut m = r1 * SquareMatrix::diag(&s) * r2;
                if self.kind != GroupKind::FullDiff {
                    // polish the determinant to unit value
                    let d = m.det();
                    m = m * d.powf(-1.0 / n as f64);
                }
                m
            }
        }
    }
}

/// Free-function form of [`GroupSpec::jet_member`].
pub fn jet_member(g: &GroupSpec, m: &SquareMatrix) -> Result<JetCheck, AlgebraError> {
    g.jet_member(m)
}

/// Free-function form of [`GroupSpec::random_jet_element`].
pub fn random_jet_element(g: &GroupSpec, seed: u64) -> SquareMatrix {
    g.random_jet_element(seed)
}

/// Uniformly distributed rotation in dimension `n`.
pub fn random_rotation(n: usize, r: &mut rng::Stream) -> SquareMatrix {
    match n {
        1 => SquareMatrix::identity(1),
        2 => {
            let t: f64 = r.random_range(0.0..std::f64::consts::TAU);
            SquareMatrix::new(2, &[t.cos(), -t.sin(), t.sin(), t.cos()]).expect("finite")
        }
        _ => {
            let q = loop {
                let q: [f64; 4] = std::array::from_fn(|_| r.random_range(-1.0..=1.0));
                let len2: f64 = q.iter().map(|v| v * v).sum();
                if len2 > 1e-4 && len2 <= 1.0 {
                    let l = len2.sqrt();
                    break q.map(|v| v / l);
                }
            };
            let [w, x, y, z] = q;
            SquareMatrix::new(
                3,
                &[
                    1.0 - 2.0 * (y * y + z * z),
                    2.0 * (x * y - z * w),
                    2.0 * (x * z + y * w),
                    2.0 * (x * y + z * w),
                    1.0 - 2.0 * (x * x + z * z),
                    2.0 * (y * z - x * w),
                    2.0 * (x * z - y * w),
                    2.0 * (y * z + x * w),
                    1.0 - 2.0 * (x * x + y * y),
                ],
            )
            .expect("finite")
        }
    }
}

/// Continuous homomorphism from a matrix group into `(0, inf)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CharacterSpec {
    /// `chi(F) = exp(c F_pq)` on the unipotent shears `I + s E_pq`.
    ShearExp { c: f64, p: usize, q: usize, n: usize },
    /// `chi(F) = prod F_ii^{a_i}` on positive diagonal matrices.
    DiagonalPower { exponents: Vec<f64> },
}

impl CharacterSpec {
    pub fn dim(&self) -> usize {
        match self {
            CharacterSpec::ShearExp { n, .. } => *n,
            CharacterSpec::DiagonalPower { exponents } => exponents.len(),
        }
    }

    pub fn validate(&self) -> Result<(), AlgebraError> {
        check_dim(self.dim())?;
        match self {
            CharacterSpec::ShearExp { c, p, q, n } => {
                if !c.is_finite() {
                    return Err(AlgebraError::InvalidCharacter("c must be finite".into()));
                }
                GroupSpec { kind: GroupKind::Shear { p: *p, q: *q }, n: *n, tolerance: JET_TOLERANCE }
                    .validate()
                    .map_err(|e| AlgebraError::InvalidCharacter(e.to_string()))
            }
            CharacterSpec::DiagonalPower { exponents } => {
                if exponents.iter().all(|a| a.is_finite()) {
                    Ok(())
                } else {
                    Err(AlgebraError::InvalidCharacter("exponents must be finite".into()))
                }
            }
        }
    }

    /// The local group whose jets form the character's domain, if it is one
    /// of the supported group kinds.
    pub fn group(&self) -> Option<GroupSpec> {
        match self {
            CharacterSpec::ShearExp { p, q, n, .. } => Some(GroupSpec {
                kind: GroupKind::Shear { p: *p, q: *q },
                n: *n,
                tolerance: JET_TOLERANCE,
            }),
            CharacterSpec::DiagonalPower { .. } => None,
        }
    }

    /// `log chi(m)` through the formula's natural extension, without a
    /// membership check. Non-positive diagonal entries give `NaN`/`-inf`.
    pub fn log_value(&self, m: &SquareMatrix) -> f64 {
        match self {
            CharacterSpec::ShearExp { c, p, q, .. } => c * m[(*p, *q)],
            CharacterSpec::DiagonalPower { exponents } => {
                exponents.iter().enumerate().map(|(i, a)| a * m[(i, i)].ln()).sum()
            }
        }
    }

    fn membership_deviation(&self, m: &SquareMatrix) -> f64 {
        match self {
            CharacterSpec::ShearExp { .. } => self.group().expect("shear").jet_deviation(m),
            CharacterSpec::DiagonalPower { .. } => {
                let mut dev: f64 = 0.0;
                for i in 0..m.dim() {
                    for j in 0..m.dim() {
                        if i != j {
                            dev = dev.max(m[(i, j)].abs());
                        } else if m[(i, i)] <= 0.0 {
                            dev = dev.max(1.0 - m[(i, i)]);
                        }
                    }
                }
                dev
            }
        }
    }
}

/// `chi(m)`, after checking that `m` lies in the character's group.
pub fn character_eval(c: &CharacterSpec, m: &SquareMatrix) -> Result<f64, AlgebraError> {
    c.validate()?;
    if m.dim() != c.dim() {
        return Err(AlgebraError::DimensionMismatch(c.dim(), m.dim()));
    }
    let dev = c.membership_deviation(m);
    if dev > JET_TOLERANCE {
        return Err(AlgebraError::NotInCharacterGroup(dev));
    }
    Ok(c.log_value(m).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn m2(a: f64, b: f64, c: f64, d: f64) -> SquareMatrix {
        SquareMatrix::new(2, &[a, b, c, d]).unwrap()
    }

    #[test]
    fn determinant_examples() {
        assert_eq!(SquareMatrix::identity(2).det(), 1.0);
        assert_eq!(SquareMatrix::diag(&[2.0, 3.0]).det(), 6.0);
        assert_eq!(m2(1.0, 2.0, 3.0, 4.0).det(), -2.0);
    }

    #[test]
    fn adjugate_examples() {
        assert_eq!(SquareMatrix::identity(3).adjugate().unwrap(), SquareMatrix::identity(3));
        assert_eq!(m2(1.0, 2.0, 3.0, 4.0).adjugate().unwrap(), m2(4.0, -2.0, -3.0, 1.0));
        assert_eq!(SquareMatrix::identity(1).adjugate(), Err(AlgebraError::ScalarAdjugate));
    }

    #[test]
    fn construction_rejects_non_finite() {
        assert!(matches!(
            SquareMatrix::new(2, &[1.0, f64::NAN, 0.0, 1.0]),
            Err(AlgebraError::NonFinite { row: 0, col: 1 })
        ));
        assert!(SquareMatrix::new(4, &[0.0; 16]).is_err());
        assert!(SquareMatrix::new(2, &[0.0; 3]).is_err());
    }

    #[test]
    fn jet_member_examples() {
        let vp = GroupSpec::new(GroupKind::VolumePreserving, 2).unwrap();
        let c = vp.jet_member(&SquareMatrix::diag(&[2.0, 0.5])).unwrap();
        assert!(c.member);
        assert_eq!(c.deviation, 0.0);

        let full = GroupSpec::new(GroupKind::FullDiff, 2).unwrap();
        assert!(!full.jet_member(&SquareMatrix::diag(&[-1.0, 1.0])).unwrap().member);

        let sp = GroupSpec::new(GroupKind::Symplectic2D, 2).unwrap();
        let m = m2(2.0, 3.0, 1.0, 2.0);
        assert_eq!(m.det(), 1.0);
        assert!(sp.jet_member(&m).unwrap().member);

        assert!(matches!(
            vp.jet_member(&SquareMatrix::identity(3)),
            Err(AlgebraError::DimensionMismatch(2, 3))
        ));
    }

    #[test]
    fn group_validation() {
        assert!(GroupSpec::new(GroupKind::Symplectic2D, 3).is_err());
        assert!(GroupSpec::new(GroupKind::Shear { p: 1, q: 1 }, 2).is_err());
        assert!(GroupSpec::new(GroupKind::Shear { p: 0, q: 2 }, 2).is_err());
        assert!(GroupSpec::new(GroupKind::Separable1D, 2).is_err());
        assert!(GroupSpec::new(GroupKind::Shear { p: 0, q: 1 }, 2).is_ok());
    }

    #[test]
    fn random_jet_examples() {
        let vp = GroupSpec::new(GroupKind::VolumePreserving, 2).unwrap();
        assert!((vp.random_jet_element(1).det() - 1.0).abs() <= 1e-12);
        let full = GroupSpec::new(GroupKind::FullDiff, 2).unwrap();
        assert!(full.random_jet_element(2).det() > 0.0);
        let sh = GroupSpec::new(GroupKind::Shear { p: 0, q: 1 }, 2).unwrap();
        let m = sh.random_jet_element(3);
        assert_eq!(sh.jet_deviation(&m), 0.0);
        assert!(m[(0, 1)].abs() <= 2.0);
        assert_eq!(vp.random_jet_element(9), vp.random_jet_element(9));
    }

    #[test]
    fn character_examples() {
        let chi = CharacterSpec::ShearExp { c: 1.0, p: 0, q: 1, n: 2 };
        let v = character_eval(&chi, &SquareMatrix::shear(2, 0, 1, 0.7)).unwrap();
        assert_relative_eq!(v, 0.7f64.exp(), max_relative = 1e-15);
        assert_eq!(character_eval(&chi, &SquareMatrix::identity(2)).unwrap(), 1.0);
        let dp = CharacterSpec::DiagonalPower { exponents: vec![1.5, -0.5, 2.0] };
        assert_eq!(character_eval(&dp, &SquareMatrix::identity(3)).unwrap(), 1.0);

        let a = SquareMatrix::shear(2, 0, 1, 0.3);
        let b = SquareMatrix::shear(2, 0, 1, -1.1);
        let lhs = character_eval(&chi, &(a * b)).unwrap();
        let rhs = character_eval(&chi, &a).unwrap() * character_eval(&chi, &b).unwrap();
        assert!(((lhs - rhs) / rhs).abs() <= 1e-12);

        assert!(matches!(
            character_eval(&chi, &SquareMatrix::diag(&[2.0, 0.5])),
            Err(AlgebraError::NotInCharacterGroup(_))
        ));
    }

    #[test]
    fn symmetric_eigen_diagonalizes() {
        let m = SquareMatrix::new(3, &[4.0, 1.0, -2.0, 1.0, 3.0, 0.5, -2.0, 0.5, 1.0]).unwrap();
        let (vals, vecs) = symmetric_eigen(&m);
        assert!(vals[0] <= vals[1] && vals[1] <= vals[2]);
        let recon = vecs * SquareMatrix::diag(&vals[..3]) * vecs.transpose();
        assert!((recon - m).max_abs() < 1e-12);
    }
}
