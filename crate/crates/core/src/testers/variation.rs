//! First variation of `I` under inner variations `u o phi_{-t}` and the
//! strong-form equilibrium residual.

use std::sync::Arc;

use super::{conjugation_cells, TesterError};
use crate::algebra::Point;
use crate::energies::EnergyDensity;
use crate::functional::quadrature::CompensatedSum;
use crate::functional::{compose, functional_eval, BoxDomain, DeformationMap, Map};
use crate::kinematics::{FlowMap, VectorField};
use crate::report::{TestReport, Witness};

/// Step of the central difference in the flow time.
pub const VARIATION_STEP: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct FirstVariation {
    /// `int H_{ij,kl}(grad u) u_{k,lj} u_{i,p} eta_p`.
    pub direct: f64,
    /// Central difference of `t -> I(u o phi_{-t})` at 0.
    pub finite_difference: f64,
    pub agreement: f64,
    pub report: TestReport,
}

fn require_homogeneous(w: &dyn EnergyDensity) -> Result<(), TesterError> {
    if w.arity().homogeneous() {
        Ok(())
    } else {
        Err(TesterError::InvalidInput(format!("{} depends on x or u; only W(F) is supported", w.name())))
    }
}

/// `sum_{j,k,l} H_{ij,kl} u_{k,lj}`, the divergence of `dW(grad u)`.
fn divergence(w: &dyn EnergyDensity, u: &DeformationMap, x: &Point) -> Result<[f64; 3], TesterError> {
    let n = u.dim();
    let (y, du) = u.eval(x);
    let h = w.hessian(x, &y, &du)?;
    let second = u.second_derivatives(x);
    let mut out = [0.0; 3];
    for (i, oi) in out.iter_mut().enumerate().take(n) {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    *oi += h.get(i, j, k, l) * second[k][(l, j)];
                }
            }
        }
    }
    Ok(out)
}

fn composed_value(
    w: &dyn EnergyDensity,
    u: &DeformationMap,
    field: &Arc<VectorField>,
    t: f64,
    domain: &BoxDomain,
) -> Result<f64, TesterError> {
    let flow = FlowMap::with_default_steps(field.clone(), -t);
    let map = compose(Map::Deformation(u.clone()), Map::Flow(flow), domain)?;
    Ok(functional_eval(w, &Map::Composite(Box::new(map)), domain)?)
}

/// `domain` with at least [`conjugation_cells`] per axis. A bump whose
/// radius spans only a few reference cells is under-resolved, and the
/// central difference amplifies that quadrature error by `1 / (2 h)`.
fn refined(domain: &BoxDomain) -> Result<BoxDomain, TesterError> {
    let min = conjugation_cells(domain.dim());
    let cells: Vec<usize> = domain.cells().iter().map(|&c| c.max(min)).collect();
    Ok(domain.clone().with_cells_per_axis(&cells)?)
}

/// Derivative of `I(u o phi_{-t})` at `t = 0`, by direct quadrature of the
/// integrated-by-parts form and by central differences, both on `domain`
/// refined to at least [`conjugation_cells`] per axis. The verdict is
/// taken on the direct value (`-|direct|` against `tolerance`).
pub fn test_first_variation(
    w: &dyn EnergyDensity,
    u: &DeformationMap,
    field: &Arc<VectorField>,
    domain: &BoxDomain,
    tolerance: f64,
) -> Result<FirstVariation, TesterError> {
    require_homogeneous(w)?;
    if u.dim() != domain.dim() || field.dim() != domain.dim() {
        return Err(TesterError::InvalidInput("map, field and domain dimensions differ".into()));
    }
    let domain = &refined(domain)?;
    let n = domain.dim();
    let mut s = CompensatedSum::default();
    for q in domain.nodes() {
        if !field.in_support(&q.x) {
            continue;
        }
        let div = divergence(w, u, &q.x)?;
        let du = u.eval(&q.x).1;
        let eta = field.value(&q.x);
        let mut v = 0.0;
        for (i, di) in div.iter().enumerate().take(n) {
            for p in 0..n {
                v += di * du[(i, p)] * eta[p];
            }
        }
        s.add(q.w * v);
    }
    let direct = s.value();
    let plus = composed_value(w, u, field, VARIATION_STEP, domain)?;
    let minus = composed_value(w, u, field, -VARIATION_STEP, domain)?;
    let finite_difference = (plus - minus) / (2.0 * VARIATION_STEP);
    let agreement = (finite_difference - direct).abs();
    let mut report = TestReport::single(
        format!("first inner variation of I for {}", w.name()),
        -direct.abs(),
        tolerance,
        Witness { field: field.spec().cloned(), raw_margin: Some(direct), ..Default::default() },
    );
    report.notes.push(format!("direct {direct:e}, finite difference {finite_difference:e}, |difference| {agreement:e}"));
    Ok(FirstVariation { direct, finite_difference, agreement, report })
}

/// `sqrt(int sum_i |sum_{j,k,l} H_{ij,kl}(grad u) u_{k,lj}|^2)`.
pub fn test_equilibrium_residual(w: &dyn EnergyDensity, u: &DeformationMap, domain: &BoxDomain) -> Result<f64, TesterError> {
    require_homogeneous(w)?;
    if u.dim() != domain.dim() {
        return Err(TesterError::InvalidInput("map and domain dimensions differ".into()));
    }
    let mut s = CompensatedSum::default();
    for q in domain.nodes() {
        let d = divergence(w, u, &q.x)?;
        s.add(q.w * d.iter().map(|v| v * v).sum::<f64>());
    }
    Ok(s.value().sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energies::{Catalog, EnergySpec};
    use crate::functional::DeformationSpec;
    use crate::kinematics::{FieldSpec, VectorBump};

    /// `u = (x^2, y)`.
    fn x_squared() -> DeformationMap {
        let mut q = vec![0.0; 8];
        q[0] = 1.0;
        DeformationMap::try_from(DeformationSpec::Quadratic {
            n: 2,
            f: Some(vec![0.0, 0.0, 0.0, 1.0]),
            b: None,
            q,
        })
        .unwrap()
    }

    #[test]
    fn frobenius_equilibrium_residual_of_parabola() {
        let w = Catalog::new(EnergySpec::Frobenius2).unwrap();
        let r = test_equilibrium_residual(&w, &x_squared(), &BoxDomain::unit(2)).unwrap();
        assert!((r - 4.0).abs() < 1e-12, "{r}");
    }

    #[test]
    fn det_variation_vanishes() {
        let w = Catalog::new(EnergySpec::Det).unwrap();
        let spec = FieldSpec::GenericBump {
            bumps: vec![VectorBump { center: vec![0.5, 0.5], radius: 0.4, amplitude: vec![0.3, -0.2] }],
        };
        let field = Arc::new(VectorField::new(&spec, &BoxDomain::unit(2)).unwrap());
        let r = test_first_variation(&w, &x_squared(), &field, &BoxDomain::unit(2), 1e-6).unwrap();
        assert!(r.direct.abs() < 1e-12);
        assert!(r.agreement < 1e-5);
    }
}
