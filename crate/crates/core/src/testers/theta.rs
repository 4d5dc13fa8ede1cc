//! One-dimensional reparametrization functional
//! `I(phi; theta) = int_0^L (k/2) theta'(s)^2 / phi'(s) + lambda P(theta(s)) phi'(s) ds`,
//! the energy of `theta o phi^{-1}`, which is convex in `phi'`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{draw_field, FieldSampler, TesterError};
use crate::algebra::{GroupKind, GroupSpec};
use crate::functional::quadrature::CompensatedSum;
use crate::functional::BoxDomain;
use crate::report::{ReportBuilder, SampleOutcome, TestReport, Witness};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThetaProfile {
    /// `slope * s + offset`.
    Linear { slope: f64, offset: f64 },
    /// `amplitude * sin(frequency * s + phase)`.
    Sine { amplitude: f64, frequency: f64, phase: f64 },
}

impl ThetaProfile {
    /// `(theta(s), theta'(s))`.
    pub fn eval(&self, s: f64) -> (f64, f64) {
        match *self {
            ThetaProfile::Linear { slope, offset } => (slope * s + offset, slope),
            ThetaProfile::Sine { amplitude, frequency, phase } => {
                let a = frequency * s + phase;
                (amplitude * a.sin(), amplitude * frequency * a.cos())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Potential {
    Zero,
    /// `theta^2`.
    Square,
    /// `1 - cos theta`.
    OneMinusCos,
}

impl Potential {
    pub fn value(&self, t: f64) -> f64 {
        match self {
            Potential::Zero => 0.0,
            Potential::Square => t * t,
            Potential::OneMinusCos => 1.0 - t.cos(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaProblem {
    pub k: f64,
    pub lambda: f64,
    pub potential: Potential,
    pub theta: ThetaProfile,
    #[serde(default = "unit_length")]
    pub length: f64,
}

fn unit_length() -> f64 {
    1.0
}

impl ThetaProblem {
    pub fn validate(&self) -> Result<(), TesterError> {
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(TesterError::InvalidInput(format!("k = {} must be positive", self.k)));
        }
        if !(self.length > 0.0 && self.length.is_finite()) || !self.lambda.is_finite() {
            return Err(TesterError::InvalidInput("length must be positive and lambda finite".into()));
        }
        Ok(())
    }

    /// `[0, L]` with 64 cells.
    pub fn domain(&self) -> Result<BoxDomain, TesterError> {
        Ok(BoxDomain::new(&[0.0], &[self.length])?.with_cells(64)?)
    }
}

/// `I(phi; theta)` from the values of `phi'` at the quadrature nodes of
/// [`ThetaProblem::domain`].
pub fn theta_functional(p: &ThetaProblem, dphi: &[f64]) -> Result<f64, TesterError> {
    p.validate()?;
    let nodes = p.domain()?.nodes();
    if dphi.len() != nodes.len() {
        return Err(TesterError::InvalidInput(format!("need {} values of phi', got {}", nodes.len(), dphi.len())));
    }
    let mut sum = CompensatedSum::default();
    for (q, &d) in nodes.iter().zip(dphi) {
        if !(d > 0.0) {
            return Err(TesterError::InvalidInput(format!("phi' = {d} is not positive at s = {}", q.x[0])));
        }
        let (t, dt) = p.theta.eval(q.x[0]);
        sum.add(q.w * (0.5 * p.k * dt * dt / d + p.lambda * p.potential.value(t) * d));
    }
    Ok(sum.value())
}

/// Midpoint convexity `I(phi_m) <= (I(phi_a) + I(phi_b)) / 2` with
/// `phi_m' = (phi_a' + phi_b') / 2`, over random pairs of flows of
/// interval bumps; margins normalized by `L + |I(phi_m)|`.
pub fn test_theta_convexity(
    p: &ThetaProblem,
    segments: usize,
    seed: u64,
    tolerance: f64,
) -> Result<TestReport, TesterError> {
    p.validate()?;
    let domain = p.domain()?;
    let nodes = domain.nodes();
    let g = GroupSpec::new(GroupKind::Separable1D, 1)?;
    let sampler = FieldSampler { deformation: (0.1, 0.8), ..FieldSampler::default() };
    let derivative = |index: u64| -> Result<(Vec<f64>, super::FieldDraw), TesterError> {
        let d = draw_field(&g, &domain, &sampler, seed, index, 1.0)?;
        let flow = Arc::clone(&d.field).flow(d.tau);
        let v = nodes.iter().map(|q| flow.eval(&q.x).1[(0, 0)]).collect();
        Ok((v, d))
    };
    let mut b = ReportBuilder::new(
        format!("midpoint convexity of the theta functional (k = {}, lambda = {})", p.k, p.lambda),
        tolerance,
        seed,
    );
    for s in 0..segments {
        let (da, fa) = derivative(2 * s as u64)?;
        let (db, _) = derivative(2 * s as u64 + 1)?;
        let dm: Vec<f64> = da.iter().zip(&db).map(|(a, b)| 0.5 * (a + b)).collect();
        let ia = theta_functional(p, &da)?;
        let ib = theta_functional(p, &db)?;
        let im = theta_functional(p, &dm)?;
        let raw = 0.5 * (ia + ib) - im;
        b.push(SampleOutcome {
            margin: raw / (p.length + im.abs()),
            tau: fa.tau,
            amplitude: fa.spec.amplitude(),
            witness: Witness {
                sample: Some(s),
                seed: Some(seed),
                field: Some(fa.spec),
                tau: Some(fa.tau),
                raw_margin: Some(raw),
                ..Default::default()
            },
        });
    }
    Ok(b.finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_reparametrization_of_a_line() {
        let p = ThetaProblem {
            k: 1.0,
            lambda: 0.0,
            potential: Potential::Zero,
            theta: ThetaProfile::Linear { slope: 1.0, offset: 0.0 },
            length: 1.0,
        };
        let n = p.domain().unwrap().node_count();
        assert!((theta_functional(&p, &vec![1.0; n]).unwrap() - 0.5).abs() < 1e-14);
        assert!(theta_functional(&p, &vec![0.0; n]).is_err());
    }
}
