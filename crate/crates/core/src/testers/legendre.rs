//! Legendre–Hadamard type conditions on the Hessian of `W`.
//!
//! With `H = d2W(F)` and the pushed tensor
//! `G_{kj,pr} = sum_{i,m} H_{ij,mr} F_ik F_mp`, the pointwise form is
//! `q(a, b) = sum G_{kj,pr} a_k b_j a_p b_r` and the integrated form pairs
//! `G` with the Gram matrix `M_{(k,j),(p,r)} = int d_j eta_k d_r eta_p`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{TestPoint, TesterError};
use crate::algebra::{symmetric_eigen, Point, SquareMatrix, MAX_DIM};
use crate::energies::{EnergyDensity, Hessian};
use crate::functional::quadrature::CompensatedSum;
use crate::functional::BoxDomain;
use crate::kinematics::{FieldSpec, VectorBump, VectorField};
use crate::report::{TestReport, Witness};
use crate::rng;

/// Eigenvalues of a dense symmetric `m x m` matrix (row-major), ascending,
/// by cyclic Jacobi sweeps.
pub fn symmetric_eigenvalues(a: &[f64], m: usize) -> Vec<f64> {
    assert_eq!(a.len(), m * m, "matrix must be m x m");
    let mut a = a.to_vec();
    for _ in 0..100 {
        let off: f64 = (0..m).flat_map(|i| (0..m).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i * m + j].powi(2)).sum();
        let scale: f64 = a.iter().map(|x| x * x).sum::<f64>();
        if off <= 1e-30 * scale || off == 0.0 {
            break;
        }
        for p in 0..m {
            for q in p + 1..m {
                let apq = a[p * m + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * m + q] - a[p * m + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..m {
                    let akp = a[k * m + p];
                    let akq = a[k * m + q];
                    a[k * m + p] = c * akp - s * akq;
                    a[k * m + q] = s * akp + c * akq;
                }
                for k in 0..m {
                    let apk = a[p * m + k];
                    let aqk = a[q * m + k];
                    a[p * m + k] = c * apk - s * aqk;
                    a[q * m + k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..m).map(|i| a[i * m + i]).collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// `G_{kj,pr}` as an `n^2 x n^2` row-major matrix indexed by `k n + j`.
fn pushed_tensor(h: &Hessian, f: &SquareMatrix) -> Vec<f64> {
    let n = f.dim();
    let m = n * n;
    let mut g = vec![0.0; m * m];
    for k in 0..n {
        for j in 0..n {
            for p in 0..n {
                for r in 0..n {
                    let mut s = 0.0;
                    for i in 0..n {
                        for mm in 0..n {
                            s += h.get(i, j, mm, r) * f[(i, k)] * f[(mm, p)];
                        }
                    }
                    g[(k * n + j) * m + p * n + r] = s;
                }
            }
        }
    }
    g
}

/// `M_{(k,j),(p,r)} = int d_j eta_k d_r eta_p`, row-major `n^2 x n^2`.
pub fn gram_matrix(field: &VectorField, domain: &BoxDomain) -> Vec<f64> {
    let n = domain.dim();
    let m = n * n;
    let mut sums = vec![CompensatedSum::default(); m * m];
    for q in domain.nodes() {
        if !field.in_support(&q.x) {
            continue;
        }
        let d = field.eval(&q.x).1;
        for a in 0..m {
            for b in 0..m {
                sums[a * m + b].add(q.w * d[(a / n, a % n)] * d[(b / n, b % n)]);
            }
        }
    }
    sums.iter().map(CompensatedSum::value).collect()
}

/// Unit box with the resolution the Gram quadrature needs: 64 cells in one
/// dimension, 48 per axis in two, 24 in three.
pub fn legh_domain(n: usize) -> Result<BoxDomain, TesterError> {
    let cells = match n {
        1 => 64,
        2 => 48,
        _ => 24,
    };
    Ok(BoxDomain::unit(n).with_cells(cells)?)
}

/// Centred bump perturbation for the integrated test: radius in
/// `[0.4, 0.48]`, random unit direction.
pub fn legh_field(n: usize, seed: u64) -> FieldSpec {
    let mut r = rng::stream(seed);
    let radius = r.random_range(0.4..0.48);
    let amplitude = loop {
        let v: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.1 {
            break v.iter().map(|x| x / norm).collect();
        }
    };
    FieldSpec::GenericBump { bumps: vec![VectorBump { center: vec![0.5; n], radius, amplitude }] }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeghMode {
    /// `Q >= -tolerance`.
    Inequality,
    /// `|Q| <= tolerance`.
    Equality,
}

#[derive(Debug, Clone)]
pub struct LeghResult {
    /// `sum G M`.
    pub q: f64,
    /// `Q / tr M`, on which the verdict is taken.
    pub normalized: f64,
    pub gram_min_eigenvalue: f64,
    pub report: TestReport,
}

/// Integrated Legendre–Hadamard quantity `Q = sum G_{kj,pr} M_{kj,pr}` for
/// the perturbation `field` on `domain`.
pub fn test_legh(
    w: &dyn EnergyDensity,
    tp: &TestPoint,
    field: &VectorField,
    domain: &BoxDomain,
    mode: LeghMode,
    tolerance: f64,
) -> Result<LeghResult, TesterError> {
    if field.dim() != tp.dim() || domain.dim() != tp.dim() {
        return Err(TesterError::InvalidInput("field, domain and F dimensions differ".into()));
    }
    let h = w.hessian(&tp.x0, &tp.y0, &tp.f)?;
    let g = pushed_tensor(&h, &tp.f);
    let gram = gram_matrix(field, domain);
    let m = tp.dim() * tp.dim();
    let q: f64 = g.iter().zip(&gram).map(|(a, b)| a * b).sum();
    let trace: f64 = (0..m).map(|i| gram[i * m + i]).sum();
    if trace <= 0.0 {
        return Err(TesterError::InvalidInput("perturbation has zero gradient on the quadrature nodes".into()));
    }
    let normalized = q / trace;
    let gram_min = symmetric_eigenvalues(&gram, m)[0];
    let margin = match mode {
        LeghMode::Inequality => normalized,
        LeghMode::Equality => -normalized.abs(),
    };
    let mut report = TestReport::single(
        format!("integrated Legendre-Hadamard ({}) for {}", mode_label(mode), w.name()),
        margin,
        tolerance,
        Witness { f: Some(tp.f.to_vec()), field: field.spec().cloned(), raw_margin: Some(q), ..Default::default() },
    );
    report.notes.push(format!("Q = {q:e}, tr M = {trace:e}, min eig M = {gram_min:e}"));
    Ok(LeghResult { q, normalized, gram_min_eigenvalue: gram_min, report })
}

fn mode_label(m: LeghMode) -> &'static str {
    match m {
        LeghMode::Inequality => "inequality",
        LeghMode::Equality => "equality",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LhMode {
    /// All unit pairs `(a, b)`.
    AllPairs,
    /// Unit pairs with `a . b = 0`.
    OrthogonalPairs,
}

#[derive(Debug, Clone)]
pub struct LhResult {
    pub min: f64,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub report: TestReport,
}

fn contract(g: &[f64], n: usize, fixed: &Point, fixed_is_b: bool) -> SquareMatrix {
    let m = n * n;
    SquareMatrix::from_fn(n, |x, y| {
        let mut s = 0.0;
        for u in 0..n {
            for v in 0..n {
                let (row, col) = if fixed_is_b { (x * n + u, y * n + v) } else { (u * n + x, v * n + y) };
                s += g[row * m + col] * fixed[u] * fixed[v];
            }
        }
        s
    })
}

fn lh_value(g: &[f64], n: usize, a: &Point, b: &Point) -> f64 {
    let m = n * n;
    let mut s = 0.0;
    for k in 0..n {
        for j in 0..n {
            for p in 0..n {
                for r in 0..n {
                    s += g[(k * n + j) * m + p * n + r] * a[k] * b[j] * a[p] * b[r];
                }
            }
        }
    }
    s
}

/// Orthonormal basis of the complement of the unit vector `v`.
fn complement(v: &Point, n: usize) -> Vec<Point> {
    let mut basis: Vec<Point> = vec![*v];
    for e in 0..n {
        let mut w = [0.0; MAX_DIM];
        w[e] = 1.0;
        for u in &basis {
            let d: f64 = (0..n).map(|i| w[i] * u[i]).sum();
            for i in 0..n {
                w[i] -= d * u[i];
            }
        }
        let norm = (0..n).map(|i| w[i] * w[i]).sum::<f64>().sqrt();
        if norm > 1e-8 && basis.len() < n {
            for x in w.iter_mut().take(n) {
                *x /= norm;
            }
            basis.push(w);
        }
    }
    basis.remove(0);
    basis
}

/// Unit minimizer of `x^T A x`, optionally restricted to `x . v = 0`.
fn min_direction(a: &SquareMatrix, orth_to: Option<&Point>) -> (f64, Point) {
    let n = a.dim();
    let sym = SquareMatrix::from_fn(n, |i, j| 0.5 * (a[(i, j)] + a[(j, i)]));
    match orth_to {
        None => {
            let (ev, vecs) = symmetric_eigen(&sym);
            let mut x = [0.0; MAX_DIM];
            for (i, xi) in x.iter_mut().enumerate().take(n) {
                *xi = vecs[(i, 0)];
            }
            (ev[0], x)
        }
        Some(v) => {
            let basis = complement(v, n);
            let k = basis.len();
            let reduced = SquareMatrix::from_fn(k, |p, q| {
                let mut s = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        s += basis[p][i] * sym[(i, j)] * basis[q][j];
                    }
                }
                s
            });
            let (ev, vecs) = symmetric_eigen(&reduced);
            let mut x = [0.0; MAX_DIM];
            for (p, b) in basis.iter().enumerate() {
                for i in 0..n {
                    x[i] += vecs[(p, 0)] * b[i];
                }
            }
            (ev[0], x)
        }
    }
}

fn random_unit(n: usize, r: &mut rng::Stream) -> Point {
    loop {
        let mut v = [0.0; MAX_DIM];
        for x in v.iter_mut().take(n) {
            *x = r.random_range(-1.0..1.0);
        }
        let norm = (0..n).map(|i| v[i] * v[i]).sum::<f64>().sqrt();
        if norm > 0.1 && norm <= 1.0 {
            for x in v.iter_mut().take(n) {
                *x /= norm;
            }
            return v;
        }
    }
}

fn normalized(mut v: Point, n: usize) -> Point {
    let norm = (0..n).map(|i| v[i] * v[i]).sum::<f64>().sqrt();
    for x in v.iter_mut().take(n) {
        *x /= norm;
    }
    v
}

/// Coarse starting directions: an angle grid in two dimensions, the axes
/// plus `extra` random unit vectors otherwise.
fn start_directions(n: usize, extra: usize, r: &mut rng::Stream) -> Vec<Point> {
    match n {
        1 => vec![[1.0, 0.0, 0.0]],
        2 => (0..360)
            .map(|k| {
                let t = std::f64::consts::PI * k as f64 / 360.0;
                [t.cos(), t.sin(), 0.0]
            })
            .collect(),
        _ => {
            let mut v: Vec<Point> = (0..n)
                .map(|i| {
                    let mut e = [0.0; MAX_DIM];
                    e[i] = 1.0;
                    e
                })
                .collect();
            v.extend((0..extra).map(|_| random_unit(n, r)));
            v
        }
    }
}

/// Pointwise minimum of `q(a, b)` over unit pairs. For each `a` the best
/// `b` is an exact (restricted) eigenvector; `a` is searched over the
/// sphere from a coarse set of starts refined by pattern search.
pub fn test_lh_pointwise(
    w: &dyn EnergyDensity,
    tp: &TestPoint,
    mode: LhMode,
    starts: usize,
    seed: u64,
    tolerance: f64,
) -> Result<LhResult, TesterError> {
    let n = tp.dim();
    if mode == LhMode::OrthogonalPairs && n < 2 {
        return Err(TesterError::InvalidInput("orthogonal pairs need n >= 2".into()));
    }
    let h = w.hessian(&tp.x0, &tp.y0, &tp.f)?;
    let g = pushed_tensor(&h, &tp.f);
    let orth = mode == LhMode::OrthogonalPairs;
    let profile = |a: &Point| -> (f64, Point) { min_direction(&contract(&g, n, a, false), orth.then_some(a)) };
    let mut r = rng::stream(seed);
    let mut coarse: Vec<(f64, Point)> =
        start_directions(n, starts, &mut r).into_iter().map(|a| (profile(&a).0, a)).collect();
    coarse.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut best = (f64::INFINITY, [0.0; MAX_DIM], [0.0; MAX_DIM]);
    for &(mut value, mut a) in coarse.iter().take(4) {
        let mut step = 0.1;
        while n > 1 && step > 1e-10 {
            let mut moved = false;
            for t in complement(&a, n) {
                for sign in [1.0, -1.0] {
                    let mut trial = a;
                    for i in 0..n {
                        trial[i] += sign * step * t[i];
                    }
                    let trial = normalized(trial, n);
                    let v = profile(&trial).0;
                    if v < value {
                        value = v;
                        a = trial;
                        moved = true;
                    }
                }
            }
            if !moved {
                step *= 0.5;
            }
        }
        let b = profile(&a).1;
        let v = lh_value(&g, n, &a, &b);
        if v < best.0 {
            best = (v, a, b);
        }
    }
    let (min, a, b) = best;
    let label = if orth { "orthogonal" } else { "all" };
    let report = TestReport::single(
        format!("pointwise Legendre-Hadamard ({label} pairs) for {}", w.name()),
        min,
        tolerance,
        Witness {
            f: Some(tp.f.to_vec()),
            directions: Some((a[..n].to_vec(), b[..n].to_vec())),
            raw_margin: Some(min),
            seed: Some(seed),
            ..Default::default()
        },
    );
    Ok(LhResult { min, a: a[..n].to_vec(), b: b[..n].to_vec(), report })
}

#[derive(Debug, Clone)]
pub struct ParhlResult {
    /// `max |H_ijkl + H_ilkj|`.
    pub residual: f64,
    pub report: TestReport,
}

/// Residual of the antisymmetry `H_ijkl = -H_ilkj` of the Hessian at `F`.
pub fn test_parhl(w: &dyn EnergyDensity, tp: &TestPoint, tolerance: f64) -> Result<ParhlResult, TesterError> {
    let n = tp.dim();
    let h = w.hessian(&tp.x0, &tp.y0, &tp.f)?;
    let mut residual: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    residual = residual.max((h.get(i, j, k, l) + h.get(i, l, k, j)).abs());
                }
            }
        }
    }
    let report = TestReport::single(
        format!("Hessian antisymmetry for {}", w.name()),
        -residual,
        tolerance,
        Witness { f: Some(tp.f.to_vec()), raw_margin: Some(residual), ..Default::default() },
    );
    Ok(ParhlResult { residual, report })
}
