//! Axis-aligned boxes with composite tensor Gauss–Legendre rules.

use serde::{Deserialize, Serialize};

use super::quadrature::gauss_legendre;
use super::FunctionalError;
use crate::algebra::{Point, MAX_DIM};

pub const DEFAULT_ORDER: usize = 5;

/// Default cells per axis: 8 in one and two dimensions, 4 in three.
pub fn default_cells(n: usize) -> usize {
    if n >= 3 {
        4
    } else {
        8
    }
}

/// Quadrature node with its weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadNode {
    pub x: Point,
    pub w: f64,
}

/// One face of a box with its outward unit normal `sign * e_axis`.
#[derive(Debug, Clone)]
pub struct Face {
    pub axis: usize,
    pub sign: f64,
    pub nodes: Vec<QuadNode>,
}

impl Face {
    pub fn normal(&self) -> Point {
        let mut nrm = [0.0; MAX_DIM];
        nrm[self.axis] = self.sign;
        nrm
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DomainSpec", into = "DomainSpec")]
pub struct BoxDomain {
    n: usize,
    lower: Point,
    upper: Point,
    cells: [usize; MAX_DIM],
    order: usize,
}

/// Serialized form of a [`BoxDomain`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    #[serde(default)]
    pub cells: Option<Cells>,
    #[serde(default)]
    pub order: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cells {
    Uniform(usize),
    PerAxis(Vec<usize>),
}

impl TryFrom<DomainSpec> for BoxDomain {
    type Error = FunctionalError;
    fn try_from(s: DomainSpec) -> Result<Self, FunctionalError> {
        let mut d = BoxDomain::new(&s.lower, &s.upper)?;
        match s.cells {
            Some(Cells::Uniform(c)) => d = d.with_cells(c)?,
            Some(Cells::PerAxis(c)) => d = d.with_cells_per_axis(&c)?,
            None => {}
        }
        if let Some(o) = s.order {
            d = d.with_order(o)?;
        }
        Ok(d)
    }
}

impl From<BoxDomain> for DomainSpec {
    fn from(d: BoxDomain) -> Self {
        DomainSpec {
            lower: d.lower[..d.n].to_vec(),
            upper: d.upper[..d.n].to_vec(),
            cells: Some(Cells::PerAxis(d.cells[..d.n].to_vec())),
            order: Some(d.order),
        }
    }
}

impl BoxDomain {
    pub fn new(lower: &[f64], upper: &[f64]) -> Result<Self, FunctionalError> {
        let n = lower.len();
        if !(1..=MAX_DIM).contains(&n) || upper.len() != n {
            return Err(FunctionalError::InvalidDomain(format!(
                "corner dimensions {} and {} must agree and lie in 1..=3",
                lower.len(),
                upper.len()
            )));
        }
        let mut lo = [0.0; MAX_DIM];
        let mut hi = [0.0; MAX_DIM];
        for i in 0..n {
            if !(lower[i].is_finite() && upper[i].is_finite() && upper[i] > lower[i]) {
                return Err(FunctionalError::InvalidDomain(format!(
                    "axis {i} has non-positive extent [{}, {}]",
                    lower[i], upper[i]
                )));
            }
            lo[i] = lower[i];
            hi[i] = upper[i];
        }
        let c = default_cells(n);
        Ok(Self { n, lower: lo, upper: hi, cells: [c; MAX_DIM], order: DEFAULT_ORDER })
    }

    /// `[0, 1]^n` at default resolution.
    pub fn unit(n: usize) -> Self {
        Self::new(&vec![0.0; n], &vec![1.0; n]).expect("valid unit box")
    }

    pub fn with_cells(self, cells: usize) -> Result<Self, FunctionalError> {
        let per_axis = vec![cells; self.n];
        self.with_cells_per_axis(&per_axis)
    }

    pub fn with_cells_per_axis(mut self, cells: &[usize]) -> Result<Self, FunctionalError> {
        if cells.len() != self.n || cells.contains(&0) {
            return Err(FunctionalError::InvalidDomain(format!(
                "need {} positive cell counts, got {:?}",
                self.n, cells
            )));
        }
        self.cells[..self.n].copy_from_slice(cells);
        Ok(self)
    }

    pub fn with_order(mut self, order: usize) -> Result<Self, FunctionalError> {
        if !(1..=32).contains(&order) {
            return Err(FunctionalError::InvalidDomain(format!("order {order} not in 1..=32")));
        }
        self.order = order;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower[..self.n]
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper[..self.n]
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells[..self.n]
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    pub fn volume(&self) -> f64 {
        (0..self.n).map(|i| self.extent(i)).product()
    }

    pub fn center(&self) -> Point {
        let mut c = [0.0; MAX_DIM];
        for i in 0..self.n {
            c[i] = 0.5 * (self.lower[i] + self.upper[i]);
        }
        c
    }

    /// Closed-box membership.
    pub fn contains(&self, x: &Point) -> bool {
        (0..self.n).all(|i| x[i] >= self.lower[i] && x[i] <= self.upper[i])
    }

    /// Distance from `x` to the complement of the box; negative outside.
    pub fn inner_margin(&self, x: &Point) -> f64 {
        (0..self.n)
            .map(|i| (x[i] - self.lower[i]).min(self.upper[i] - x[i]))
            .fold(f64::INFINITY, f64::min)
    }

    fn axis_rule(&self, axis: usize) -> Vec<(f64, f64)> {
        let (gx, gw) = gauss_legendre(self.order);
        let c = self.cells[axis];
        let h = self.extent(axis) / c as f64;
        let mut out = Vec::with_capacity(c * self.order);
        for k in 0..c {
            let a = self.lower[axis] + k as f64 * h;
            for (x, w) in gx.iter().zip(&gw) {
                out.push((a + 0.5 * h * (x + 1.0), 0.5 * h * w));
            }
        }
        out
    }

    /// Tensor-product nodes in lexicographic order (last axis fastest).
    pub fn nodes(&self) -> Vec<QuadNode> {
        let rules: Vec<Vec<(f64, f64)>> = (0..self.n).map(|a| self.axis_rule(a)).collect();
        tensor(&rules, &[0.0; MAX_DIM])
    }

    pub fn node_count(&self) -> usize {
        (0..self.n).map(|a| self.cells[a] * self.order).product()
    }

    /// Faces in the order axis 0 low, axis 0 high, axis 1 low, ...
    pub fn faces(&self) -> Vec<Face> {
        let rules: Vec<Vec<(f64, f64)>> = (0..self.n).map(|a| self.axis_rule(a)).collect();
        let mut faces = Vec::with_capacity(2 * self.n);
        for axis in 0..self.n {
            for (sign, value) in [(-1.0, self.lower[axis]), (1.0, self.upper[axis])] {
                let mut fixed = [0.0; MAX_DIM];
                fixed[axis] = value;
                let face_rules: Vec<Vec<(f64, f64)>> = (0..self.n)
                    .map(|a| if a == axis { vec![(value, 1.0)] } else { rules[a].clone() })
                    .collect();
                faces.push(Face { axis, sign, nodes: tensor(&face_rules, &fixed) });
            }
        }
        faces
    }

    /// Uniform grid of `k^n` cell-centred points.
    pub fn grid(&self, k: usize) -> Vec<Point> {
        let rules: Vec<Vec<(f64, f64)>> = (0..self.n)
            .map(|a| {
                let h = self.extent(a) / k as f64;
                (0..k).map(|i| (self.lower[a] + (i as f64 + 0.5) * h, 1.0)).collect()
            })
            .collect();
        tensor(&rules, &[0.0; MAX_DIM]).into_iter().map(|q| q.x).collect()
    }
}

fn tensor(rules: &[Vec<(f64, f64)>], base: &Point) -> Vec<QuadNode> {
    let mut out = vec![QuadNode { x: *base, w: 1.0 }];
    for (axis, rule) in rules.iter().enumerate() {
        let mut next = Vec::with_capacity(out.len() * rule.len());
        for q in &out {
            for &(x, w) in rule {
                let mut p = q.x;
                p[axis] = x;
                next.push(QuadNode { x: p, w: q.w * w });
            }
        }
        out = next;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn volume_matches_weight_sum() {
        let d = BoxDomain::new(&[0.0, -1.0, 2.0], &[1.5, 1.0, 2.5]).unwrap();
        let s: f64 = d.nodes().iter().map(|q| q.w).sum();
        assert!((s - d.volume()).abs() < 1e-12);
        assert_eq!(d.nodes().len(), d.node_count());
    }

    #[test]
    fn rejects_degenerate_boxes() {
        assert!(BoxDomain::new(&[0.0, 0.0], &[1.0, 0.0]).is_err());
        assert!(BoxDomain::new(&[0.0], &[1.0, 1.0]).is_err());
        assert!(BoxDomain::unit(2).with_cells(0).is_err());
        assert!(BoxDomain::unit(2).with_order(0).is_err());
    }

    #[test]
    fn faces_have_full_measure() {
        let d = BoxDomain::new(&[0.0, 0.0, 0.0], &[1.0, 2.0, 3.0]).unwrap();
        let faces = d.faces();
        assert_eq!(faces.len(), 6);
        let area: f64 = faces.iter().map(|f| f.nodes.iter().map(|q| q.w).sum::<f64>()).sum();
        assert!((area - 2.0 * (2.0 + 3.0 + 6.0)).abs() < 1e-12);
    }

    #[test]
    fn serde_round_trip() {
        let d = BoxDomain::unit(3).with_cells_per_axis(&[2, 3, 4]).unwrap();
        let s = serde_json::to_string(&d).unwrap();
        let back: BoxDomain = serde_json::from_str(&s).unwrap();
        assert_eq!(d, back);
        let parsed: BoxDomain =
            serde_json::from_str(r#"{"lower":[0,0],"upper":[1,1],"cells":8,"order":5}"#).unwrap();
        assert_eq!(parsed, BoxDomain::unit(2));
    }
}
