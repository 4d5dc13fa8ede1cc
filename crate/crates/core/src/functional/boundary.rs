//! Volume and boundary integrals of deformation maps, and independent
//! estimates of the image volume `|u(Omega)|`.
//!
//! The adjugate surface term uses the divergence form of the cofactor
//! rows. With `A = grad u`:
//! - `n = 2`: `adj(A)_ij = eps_ik eps_jl d_k u_l`, so the surface density
//!   is `(u wedge n)_ij = eps_ik eps_jl u_l n_k`;
//! - `n = 3`: `adj(A)_ij = 1/2 eps_jmn eps_ipq d_p (u_m d_q u_n)`, so the
//!   surface density is `1/2 eps_jmn eps_ipq u_m (d_q u_n) n_p`.
//!
//! Both reduce to `adj(F) |Omega|` for affine maps, which fixes the index
//! convention.

use rand::Rng;

use super::quadrature::{gauss_legendre, CompensatedSum};
use super::{BoxDomain, DeformationMap, FunctionalError};
use crate::algebra::{Point, SquareMatrix, MAX_DIM};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageVolumeMethod {
    /// Deterministic line-by-line measurement of `{y : u^{-1}(y) in Omega}`.
    Scanline,
    /// Uniform sampling of a bounding box.
    MonteCarlo,
    /// No independent estimate; the value is `int det grad u`.
    DetIntegral,
}

#[derive(Debug, Clone)]
pub struct BoundaryIntegrals {
    pub vol_det: f64,
    pub vol_grad: SquareMatrix,
    pub vol_adj: SquareMatrix,
    pub surf_u_n: SquareMatrix,
    pub surf_u_wedge_n: SquareMatrix,
    pub image_volume: f64,
    pub image_method: ImageVolumeMethod,
}

impl BoundaryIntegrals {
    /// `max |int grad u - oint u n|`.
    pub fn gradient_residual(&self) -> f64 {
        (self.vol_grad - self.surf_u_n).max_abs()
    }

    /// `max |int adj grad u - oint u wedge n|`.
    pub fn adjugate_residual(&self) -> f64 {
        (self.vol_adj - self.surf_u_wedge_n).max_abs()
    }

    /// `|int det grad u - |u(Omega)||`; zero when no independent oracle ran.
    pub fn volume_residual(&self) -> f64 {
        (self.vol_det - self.image_volume).abs()
    }
}

struct MatrixSum {
    n: usize,
    s: [[CompensatedSum; MAX_DIM]; MAX_DIM],
}

impl MatrixSum {
    fn new(n: usize) -> Self {
        Self { n, s: Default::default() }
    }

    fn add(&mut self, w: f64, m: &SquareMatrix) {
        for i in 0..self.n {
            for j in 0..self.n {
                self.s[i][j].add(w * m[(i, j)]);
            }
        }
    }

    fn value(&self) -> SquareMatrix {
        SquareMatrix::from_fn(self.n, |i, j| self.s[i][j].value())
    }
}

fn eps2(i: usize, j: usize) -> f64 {
    match (i, j) {
        (0, 1) => 1.0,
        (1, 0) => -1.0,
        _ => 0.0,
    }
}

fn eps3(i: usize, j: usize, k: usize) -> f64 {
    ((j as f64 - i as f64) * (k as f64 - i as f64) * (k as f64 - j as f64)) / 2.0
}

fn wedge(u: &Point, g: &SquareMatrix, nrm: &Point) -> SquareMatrix {
    let n = g.dim();
    if n == 2 {
        return SquareMatrix::from_fn(2, |i, j| {
            let mut s = 0.0;
            for k in 0..2 {
                for l in 0..2 {
                    s += eps2(i, k) * eps2(j, l) * u[l] * nrm[k];
                }
            }
            s
        });
    }
    SquareMatrix::from_fn(3, |i, j| {
        let mut s = 0.0;
        for m in 0..3 {
            for nn in 0..3 {
                let e1 = eps3(j, m, nn);
                if e1 == 0.0 {
                    continue;
                }
                for p in 0..3 {
                    for q in 0..3 {
                        s += e1 * eps3(i, p, q) * u[m] * g[(nn, q)] * nrm[p];
                    }
                }
            }
        }
        0.5 * s
    })
}

/// Volume integrals of `det`, `grad` and `adj grad` of `u`, the matching
/// surface integrals over the faces of `domain`, and `|u(Omega)|`.
pub fn boundary_integrals(u: &DeformationMap, domain: &BoxDomain) -> Result<BoundaryIntegrals, FunctionalError> {
    let n = domain.dim();
    if u.dim() != n {
        return Err(FunctionalError::DimensionMismatch(u.dim(), n));
    }
    if n < 2 {
        return Err(FunctionalError::InvalidDomain("boundary integrals need n = 2 or 3".into()));
    }
    let mut det = CompensatedSum::default();
    let mut grad = MatrixSum::new(n);
    let mut adj = MatrixSum::new(n);
    for q in domain.nodes() {
        let (_, g) = u.eval(&q.x);
        let d = g.det();
        if d.is_nan() || d <= 0.0 {
            return Err(FunctionalError::NotOrientationPreserving { node: q.x[..n].to_vec(), det: d });
        }
        det.add(q.w * d);
        grad.add(q.w, &g);
        adj.add(q.w, &g.adjugate().expect("n >= 2"));
    }
    let mut un = MatrixSum::new(n);
    let mut uw = MatrixSum::new(n);
    for face in domain.faces() {
        let nrm = face.normal();
        for q in &face.nodes {
            let (v, g) = u.eval(&q.x);
            un.add(q.w, &SquareMatrix::outer(n, &v, &nrm));
            uw.add(q.w, &wedge(&v, &g, &nrm));
        }
    }
    let vol_det = det.value();
    let (image_volume, image_method) = if n == 2 {
        (image_volume_scanline(u, domain)?, ImageVolumeMethod::Scanline)
    } else {
        (vol_det, ImageVolumeMethod::DetIntegral)
    };
    Ok(BoundaryIntegrals {
        vol_det,
        vol_grad: grad.value(),
        vol_adj: adj.value(),
        surf_u_n: un.value(),
        surf_u_wedge_n: uw.value(),
        image_volume,
        image_method,
    })
}

fn member(u: &DeformationMap, domain: &BoxDomain, y: &Point) -> bool {
    u.invert(y).is_some_and(|x| domain.contains(&x))
}

/// Bounding box of `u(domain)` from boundary and interior nodes, padded by 2%.
fn image_bounds(u: &DeformationMap, domain: &BoxDomain) -> (Point, Point) {
    let n = domain.dim();
    let mut lo = [f64::INFINITY; MAX_DIM];
    let mut hi = [f64::NEG_INFINITY; MAX_DIM];
    let probes = domain.nodes().into_iter().chain(domain.faces().into_iter().flat_map(|f| f.nodes));
    for q in probes {
        let v = u.value(&q.x);
        for i in 0..n {
            lo[i] = lo[i].min(v[i]);
            hi[i] = hi[i].max(v[i]);
        }
    }
    for i in 0..n {
        let pad = 0.02 * (hi[i] - lo[i]);
        lo[i] -= pad;
        hi[i] += pad;
    }
    (lo, hi)
}

const LINE_SAMPLES: usize = 256;
const PIECE_CELLS: usize = 48;
const LINE_ORDER: usize = 4;

/// Length of `{t : (t, y) in u(Omega)}` inside `[a, b]`: membership on a
/// uniform grid, transitions refined by bisection.
fn chord_length(u: &DeformationMap, domain: &BoxDomain, y: f64, a: f64, b: f64) -> f64 {
    let at = |t: f64| member(u, domain, &[t, y, 0.0]);
    let h = (b - a) / LINE_SAMPLES as f64;
    let mut len = 0.0;
    let mut prev = at(a);
    let mut start = a;
    for k in 1..=LINE_SAMPLES {
        let t = a + k as f64 * h;
        let cur = at(t);
        if cur != prev {
            let (mut l, mut r) = (t - h, t);
            while r - l > 1e-14 * (1.0 + r.abs()) {
                let m = 0.5 * (l + r);
                if at(m) == prev {
                    l = m;
                } else {
                    r = m;
                }
            }
            let edge = 0.5 * (l + r);
            if prev {
                len += edge - start;
            } else {
                start = edge;
            }
            prev = cur;
        }
    }
    if prev {
        len += b - start;
    }
    len
}

/// Deterministic `|u(Omega)|` for planar maps: chord lengths of horizontal
/// lines integrated with Gauss–Legendre rules on pieces split at the
/// images of the box corners.
pub fn image_volume_scanline(u: &DeformationMap, domain: &BoxDomain) -> Result<f64, FunctionalError> {
    if domain.dim() != 2 || u.dim() != 2 {
        return Err(FunctionalError::InvalidDomain("scanline image volume is planar".into()));
    }
    let (lo, hi) = image_bounds(u, domain);
    let mut breaks = vec![lo[1], hi[1]];
    for cx in [domain.lower()[0], domain.upper()[0]] {
        for cy in [domain.lower()[1], domain.upper()[1]] {
            let y = u.value(&[cx, cy, 0.0])[1];
            if y > lo[1] && y < hi[1] {
                breaks.push(y);
            }
        }
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let (gx, gw) = gauss_legendre(LINE_ORDER);
    let mut total = CompensatedSum::default();
    for piece in breaks.windows(2) {
        let h = (piece[1] - piece[0]) / PIECE_CELLS as f64;
        for c in 0..PIECE_CELLS {
            let a = piece[0] + c as f64 * h;
            for (x, w) in gx.iter().zip(&gw) {
                let y = a + 0.5 * h * (x + 1.0);
                total.add(0.5 * h * w * chord_length(u, domain, y, lo[0], hi[0]));
            }
        }
    }
    Ok(total.value())
}

/// Monte-Carlo `|u(Omega)|` with its standard error.
pub fn image_volume_monte_carlo(
    u: &DeformationMap,
    domain: &BoxDomain,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64), FunctionalError> {
    let n = domain.dim();
    if u.dim() != n {
        return Err(FunctionalError::DimensionMismatch(u.dim(), n));
    }
    if samples == 0 {
        return Err(FunctionalError::InvalidDomain("need at least one sample".into()));
    }
    let (lo, hi) = image_bounds(u, domain);
    let bbox: f64 = (0..n).map(|i| hi[i] - lo[i]).product();
    let mut r = rng::stream(seed);
    let mut hits = 0usize;
    for _ in 0..samples {
        let mut y = [0.0; MAX_DIM];
        for i in 0..n {
            y[i] = r.random_range(lo[i]..hi[i]);
        }
        if member(u, domain, &y) {
            hits += 1;
        }
    }
    let p = hits as f64 / samples as f64;
    Ok((bbox * p, bbox * (p * (1.0 - p) / samples as f64).sqrt()))
}
