//! Dispatch from a prepared configuration to the core testers.

use std::sync::Arc;

use varinv_core::energies::EnergyDensity;
use varinv_core::kinematics::VectorField;
use varinv_core::report::{TestReport, Verdict, Witness};
use varinv_core::testers::{self, legh_field, Subject, TesterError};

use crate::config::{Prepared, TestSpec};
use crate::CliError;

/// Runs the tester. Input errors map to [`CliError::Config`]; numerical
/// breakdowns (a failed precondition, flow drift, an energy evaluated off
/// its domain) become an inconclusive report carrying the reason.
pub fn execute(p: &Prepared) -> Result<TestReport, CliError> {
    match dispatch(p) {
        Ok(r) => Ok(r),
        Err(e @ (TesterError::Precondition(_) | TesterError::FlowDrift { .. } | TesterError::Energy(_))) => {
            let mut r = TestReport::single(p.config.test.name(), 0.0, p.config.tolerance, Witness::default());
            r.verdict = Verdict::Inconclusive;
            r.caveat = e.to_string();
            r.seed = p.config.seed;
            Ok(r)
        }
        Err(e) => Err(CliError::Config(format!("{}: {e}", p.config.test.name()))),
    }
}

fn dispatch(p: &Prepared) -> Result<TestReport, TesterError> {
    let plan = &p.plan;
    let tol = p.config.tolerance;
    let tp = &p.point;
    let d = &p.domain;
    let w = || p.energy.as_ref().expect("validated energy");
    let g = || p.group.as_ref().expect("validated group");
    let subject = |s: &Option<Subject>| s.clone().unwrap_or(Subject::Jet { f: tp.f });
    let mut report = match &p.config.test {
        TestSpec::LowerInvariance { side } => testers::test_lower_invariance(w(), g(), *side, tp, d, plan)?,
        TestSpec::NullLagrangian { side } => testers::test_null_lagrangian(w(), g(), *side, tp, d, plan)?,
        TestSpec::CharacterNll { character } => testers::test_character_nll(character, g(), tp, d, plan)?,
        TestSpec::PolyconvexJensen { g: outer, w: inner } => {
            testers::test_polyconvex_jensen(outer, inner, tp, g(), d, plan)?
        }
        TestSpec::Quasiconvexity => testers::test_quasiconvexity(w(), tp, d, plan)?,
        TestSpec::FlowConsistency => testers::test_flow_consistency(w(), g(), tp, d, plan)?,
        TestSpec::Conjugation => testers::test_conjugation_sampled(w(), g(), d, plan)?,
        TestSpec::ExpInvariance { subject: s } => {
            testers::test_exp_invariance_sampled(w(), g(), &subject(s), d, plan)?.report
        }
        TestSpec::Semicontinuity { subject: s, levels } => {
            testers::test_semicontinuity(w(), g(), &subject(s), d, plan, *levels)?
        }
        TestSpec::Legh { mode } => {
            let field = VectorField::new(&legh_field(d.dim(), p.config.seed), d)?;
            testers::test_legh(w(), tp, &field, d, *mode, tol)?.report
        }
        TestSpec::LhPointwise { mode, starts } => {
            testers::test_lh_pointwise(w(), tp, *mode, *starts, p.config.seed, tol)?.report
        }
        TestSpec::Parhl => testers::test_parhl(w(), tp, tol)?.report,
        TestSpec::FirstVariation { map, field } => {
            let field = Arc::new(VectorField::new(field, d)?);
            testers::test_first_variation(w(), map, &field, d, tol)?.report
        }
        TestSpec::Equilibrium { map } => {
            let r = testers::test_equilibrium_residual(w(), map, d)?;
            TestReport::single(
                format!("equilibrium residual for {}", w().name()),
                -r,
                tol,
                Witness { raw_margin: Some(r), ..Default::default() },
            )
        }
        TestSpec::ThetaConvexity { problem } => {
            testers::test_theta_convexity(problem, p.config.samples, p.config.seed, tol)?
        }
    };
    report.seed = p.config.seed;
    Ok(report)
}
