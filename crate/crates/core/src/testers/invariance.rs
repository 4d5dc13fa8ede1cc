//! Quasiconvexity, lower invariance, null lagrangians and the identities
//! relating them.

use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    draw_field, flow_nodes, normalizer, refine_witness, sample_field_shape, sigma_min, FieldSampler, FlowBank,
    FlowNode, FlowSample, SamplingPlan, Side, TestPoint, TesterError,
};
use crate::algebra::{CharacterSpec, GroupKind, GroupSpec, Point, SquareMatrix, MAX_DIM};
use crate::energies::{Catalog, ConvexFn, EnergyDensity, EnergySpec};
use crate::functional::quadrature::CompensatedSum;
use crate::functional::{BoxDomain, DeformationMap};
use crate::kinematics::{FieldSpec, VectorField};
use crate::report::{ReportBuilder, SampleOutcome, TestReport, Witness};
use crate::rng;

fn sum_nodes(
    nodes: &[FlowNode],
    mut term: impl FnMut(&FlowNode) -> Result<f64, TesterError>,
) -> Result<f64, TesterError> {
    let mut s = CompensatedSum::default();
    for node in nodes {
        s.add(node.w * term(node)?);
    }
    Ok(s.value())
}

fn li_raw(w: &dyn EnergyDensity, tp: &TestPoint, side: Side, nodes: &[FlowNode]) -> Result<f64, TesterError> {
    let wf = tp.value(w)?;
    sum_nodes(nodes, |n| Ok(tp.eval(w, &side.apply(&tp.f, &n.grad))? - wf))
}

/// Normalized `int_E W(F grad phi) - W(F)` (left) or `W(grad phi F)` (right).
pub fn lower_invariance_margin(
    w: &dyn EnergyDensity,
    tp: &TestPoint,
    side: Side,
    sample: &FlowSample,
    domain: &BoxDomain,
) -> Result<f64, TesterError> {
    Ok(li_raw(w, tp, side, &sample.nodes)? / normalizer(domain, tp.value(w)?))
}

/// Per-sample margin with its unnormalized value.
type Margin = (f64, f64);

/// Runs `margin` over every bank sample and, after a violation, refines the
/// worst sample by rescaling its amplitude and flow time.
fn run_bank(
    condition: String,
    bank: &FlowBank,
    plan: &SamplingPlan,
    tp: &TestPoint,
    margin: impl Fn(&FlowSample) -> Result<Margin, TesterError>,
) -> Result<TestReport, TesterError> {
    let mut b = ReportBuilder::new(condition, plan.tolerance, bank.seed);
    let mut worst: Option<(usize, f64)> = None;
    for s in &bank.samples {
        let (m, raw) = margin(s)?;
        let mut wit = s.witness(bank.seed);
        wit.f = Some(tp.f.to_vec());
        wit.raw_margin = Some(raw);
        b.push(SampleOutcome { margin: m, tau: s.tau, amplitude: s.spec.amplitude(), witness: wit });
        if m.is_finite() && worst.is_none_or(|(_, w)| m < w) {
            worst = Some((s.index, m));
        }
    }
    b.note(format!("max flow jet deviation {:e}", bank.max_group_deviation));
    let mut report = b.finish();
    if let Some((k, m0)) = worst {
        if m0 < -plan.tolerance && plan.refine_steps > 0 {
            let s = &bank.samples[k];
            let eval = |p: &[f64]| -> Option<f64> {
                let spec = s.spec.scaled(p[0]);
                let field = Arc::new(VectorField::new(&spec, &bank.domain).ok()?);
                let trial = FlowSample::evaluate(k, spec, field, s.tau * p[1], &bank.domain);
                margin(&trial).ok().map(|m| m.0)
            };
            let (p, m, spent) = refine_witness(eval, &[1.0, 1.0], m0, &[(0.25, 8.0), (0.25, 3.0)], plan.refine_steps);
            if m < m0 {
                let spec = s.spec.scaled(p[0]);
                let field = Arc::new(VectorField::new(&spec, &bank.domain)?);
                let trial = FlowSample::evaluate(k, spec, field, s.tau * p[1], &bank.domain);
                let (m, raw) = margin(&trial)?;
                let mut wit = trial.witness(bank.seed);
                wit.f = Some(tp.f.to_vec());
                wit.raw_margin = Some(raw);
                report.refine_violation(m, wit);
                report.notes.push(format!("witness of sample {k} refined from {m0:e} in {spent} evaluations"));
            }
        }
    }
    Ok(report)
}

/// Lower invariance of `W` at `F` under flows of `g`; margins
/// `int_E W(F grad phi) - |E| W(F)` (left) or with `grad phi F` (right).
/// Requires `F` in the jet of `g`.
pub fn test_lower_invariance(
    w: &dyn EnergyDensity,
    g: &GroupSpec,
    side: Side,
    tp: &TestPoint,
    domain: &BoxDomain,
    plan: &SamplingPlan,
) -> Result<TestReport, TesterError> {
    tp.require_jet(g)?;
    let bank = FlowBank::build(g, domain, plan)?;
    lower_invariance_on_bank(w, side, tp, &bank, plan)
}

/// [`test_lower_invariance`] on a prebuilt bank.
pub fn lower_invariance_on_bank(
    w: &dyn EnergyDensity,
    side: Side,
    tp: &TestPoint,
    bank: &FlowBank,
    plan: &SamplingPlan,
) -> Result<TestReport, TesterError> {
    check_dim(tp, &bank.domain)?;
    let norm = normalizer(&bank.domain, tp.value(w)?);
    run_bank(
        format!("{}-lower-invariance of {} under {}", side.as_str(), w.name(), bank.group.kind.label()),
        bank,
        plan,
        tp,
        |s| {
            let raw = li_raw(w, tp, side, &s.nodes)?;
            Ok((raw / norm, raw))
        },
    )
}

fn check_dim(tp: &TestPoint, domain: &BoxDomain) -> Result<(), TesterError> {
    if tp.dim() != domain.dim() {
        return Err(TesterError::InvalidInput(format!(
            "F is {0}x{0} but the domain has dimension {1}",
            tp.dim(),
            domain.dim()
        )));
    }
    Ok(())
}

/// Two-sided test of `int_E W(F grad phi) = |E| W(F)` for `F` in the jet
/// of `g`; margins are `-|deviation|`.
pub fn test_null_lagrangian(
    w: &dyn EnergyDensity,
    g: &GroupSpec,
    side: Side,
    tp: &TestPoint,
    domain: &BoxDomain,
    plan: &SamplingPlan,
) -> Result<TestReport, TesterError> {
    tp.require_jet(g)?;
    let bank = FlowBank::build(g, domain, plan)?;
    null_lagrangian_on_bank(w, side, tp, &bank, plan)
}

/// [`test_null_lagrangian`] on a prebuilt bank.
pub fn null_lagrangian_on_bank(
    w: &dyn EnergyDensity,
    side: Side,
    tp: &TestPoint,
    bank: &FlowBank,
    plan: &SamplingPlan,
) -> Result<TestReport, TesterError> {
    check_dim(tp, &bank.domain)?;
    let norm = normalizer(&bank.domain, tp.value(w)?);
    run_bank(
        format!("{}-null lagrangian {} under {}", side.as_str(), w.name(), bank.group.kind.label()),
        bank,
        plan,
        tp,
        |s| {
            let raw = li_raw(w, tp, side, &s.nodes)?;
            Ok((-(raw / norm).abs(), raw))
        },
    )
}

/// `log chi` is a null lagrangian of the character's group: two-sided
/// margins at `F` in that group.
pub fn test_character_nll(
    c: &CharacterSpec,
    g: &GroupSpec,
    tp: &TestPoint,
    domain: &BoxDomain,
    plan: &SamplingPlan,
) -> Result<TestReport, TesterError> {
    c.validate()?;
    match c.group() {
        Some(cg) if cg.kind == g.kind && cg.n == g.n => {}
        Some(cg) => {
            return Err(TesterError::Mismatch(format!(
                "character acts on {} in dimension {}, not {} in dimension {}",
                cg.kind.label(),
                cg.n,
                g.kind.label(),
                g.n
            )))
        }
        None => {
            return Err(TesterError::Mismatch(format!(
                "character has no sampled flow group, requested {}",
                g.kind.label()
            )))
        }
    }
    tp.require_jet(g)?;
    let w = Catalog::new(EnergySpec::CharLog { character: c.clone() })?;
    test_null_lagrangian(&w, g, Side::Left, tp, domain, plan)
}

/// Jensen's inequality for `g(w_1, ..., w_m)` with `w_k` null lagrangians
/// of `group`, after checking that precondition on the same flows. Each
/// sample's margin is the smaller of the Jensen gap and the lower
/// invariance margin of the composed density.
pub fn test_polyconvex_jensen(
    g: &ConvexFn,
    w_list: &[EnergySpec],
    tp: &TestPoint,
    group: &GroupSpec,
    domain: &BoxDomain,
    plan: &SamplingPlan,
) -> Result<TestReport, TesterError> {
    if w_list.is_empty() {
        return Err(TesterError::InvalidInput("polyconvex density needs at least one null lagrangian".into()));
    }
    check_dim(tp, domain)?;
    let bank = FlowBank::build(group, domain, plan)?;
    let parts = w_list.iter().cloned().map(Catalog::new).collect::<Result<Vec<_>, _>>()?;
    for (k, p) in parts.iter().enumerate() {
        let r = null_lagrangian_on_bank(p, Side::Left, tp, &bank, &plan.without_refinement())?;
        if !r.passed() {
            return Err(TesterError::Precondition(format!(
                "w[{k}] = {} is not a null lagrangian of {} at F (margin {:e})",
                p.name(),
                group.kind.label(),
                r.margin
            )));
        }
    }
    let composed = Catalog::new(EnergySpec::Polyconvex { g: g.clone(), w: w_list.to_vec() })?;
    let norm = normalizer(domain, tp.value(&composed)?);
    let at_f = parts.iter().map(|p| tp.value(p)).collect::<Result<Vec<_>, _>>()?;
    let volume = domain.volume();
    let jensen = |s: &FlowSample| -> Result<f64, TesterError> {
        let inside: f64 = s.nodes.iter().map(|n| n.w).sum();
        let outside = volume - inside;
        let mut mean = at_f.iter().map(|v| v * outside).collect::<Vec<_>>();
        let mut g_mean = CompensatedSum::default();
        g_mean.add(outside * g.value(&at_f));
        for n in &s.nodes {
            let m = tp.f * n.grad;
            let t = parts.iter().map(|p| tp.eval(p, &m)).collect::<Result<Vec<_>, _>>()?;
            for (acc, v) in mean.iter_mut().zip(&t) {
                *acc += n.w * v;
            }
            g_mean.add(n.w * g.value(&t));
        }
        let mean: Vec<f64> = mean.iter().map(|v| v / volume).collect();
        Ok(g_mean.value() - volume * g.value(&mean))
    };
    let mut report = run_bank(
        format!("polyconvex Jensen for {} under {}", composed.name(), group.kind.label()),
        &bank,
        plan,
        tp,
        |s| {
            let j = jensen(s)?;
            let li = li_raw(&composed, tp, Side::Left, &s.nodes)?;
            Ok(((j / norm).min(li / norm), j.min(li)))
        },
    )?;
    report.notes.push(format!("null-lagrangian precondition passed for {} components", parts.len()));
    Ok(report)
}

/// Sampled bump perturbation for the quasiconvexity test, scaled so that
/// `max |grad eta| = target * sigma_min(F)` before GL+ rescaling.
fn draw_perturbation(
    tp: &TestPoint,
    domain: &BoxDomain,
    plan: &SamplingPlan,
    index: u64,
) -> Result<(FieldSpec, f64), TesterError> {
    let mut r = rng::sample_stream(plan.seed, index);
    let shape = sample_field_shape(&GroupKind::FullDiff, domain, &FieldSampler::default(), &mut r)?;
    let target = r.random_range(0.05..0.5) * sigma_min(&tp.f).max(1e-3);
    let unit = VectorField::new(&shape, domain)?;
    let scale = super::gradient_scale(&unit, domain);
    let s = if scale > 0.0 { plan.amplitude_scale * target / scale } else { 0.0 };
    Ok((shape, s))
}

/// Normalized `int_E W(F + grad eta) - |E| W(F)`.
pub fn quasiconvexity_margin(
    w: &dyn EnergyDensity,
    tp: &TestPoint,
    domain: &BoxDomain,
    grad_eta: &dyn Fn(&Point) -> SquareMatrix,
) -> Result<f64, TesterError> {
    check_dim(tp, domain)?;
    let wf = tp.value(w)?;
    let mut s = CompensatedSum::default();
    for q in domain.nodes() {
        let d = grad_eta(&q.x);
        if d.max_abs() == 0.0 {
            continue;
        }
        s.add(q.w * (tp.eval(w, &(tp.f + d))? - wf));
    }
    Ok(s.value() / normalizer(domain, wf))
}

fn keeps_orientation(tp: &TestPoint, field: &VectorField, domain: &BoxDomain) -> bool {
    domain.nodes().iter().all(|q| (tp.f + field.eval(&q.x).1).det() > 0.0)
}

/// Quasiconvexity at `F`: `int_E W(F + grad eta) >= |E| W(F)` over sampled
/// compactly supported `eta`. Perturbations leaving GL+ are halved until
/// they do not.
pub fn test_quasiconvexity(
    w: &dyn EnergyDensity,
    tp: &TestPoint,
    domain: &BoxDomain,
    plan: &SamplingPlan,
) -> Result<TestReport, TesterError> {
    check_dim(tp, domain)?;
    if tp.f.det() <= 0.0 {
        return Err(TesterError::InvalidInput(format!("det F = {:e} is not positive", tp.f.det())));
    }
    let mut b = ReportBuilder::new(format!("quasiconvexity of {}", w.name()), plan.tolerance, plan.seed);
    let mut rescales = 0usize;
    let mut worst: Option<(usize, f64, FieldSpec)> = None;
    let eval = |spec: &FieldSpec| -> Result<f64, TesterError> {
        let field = VectorField::new(spec, domain)?;
        quasiconvexity_margin(w, tp, domain, &|x| field.eval(x).1)
    };
    for k in 0..plan.samples {
        let (shape, mut s) = draw_perturbation(tp, domain, plan, k as u64)?;
        let mut spec = shape.scaled(s);
        {
            let mut tries = 0;
            while !keeps_orientation(tp, &VectorField::new(&spec, domain)?, domain) && tries < 60 {
                s *= 0.5;
                spec = shape.scaled(s);
                rescales += 1;
                tries += 1;
            }
        }
        let m = eval(&spec)?;
        let wit = Witness {
            sample: Some(k),
            seed: Some(plan.seed),
            field: Some(spec.clone()),
            f: Some(tp.f.to_vec()),
            raw_margin: Some(m * normalizer(domain, tp.value(w)?)),
            ..Default::default()
        };
        b.push(SampleOutcome { margin: m, tau: 0.0, amplitude: spec.amplitude(), witness: wit });
        if m.is_finite() && worst.as_ref().is_none_or(|(_, w, _)| m < *w) {
            worst = Some((k, m, spec));
        }
    }
    if rescales > 0 {
        b.note(format!("{rescales} halvings kept F + grad eta in GL+"));
    }
    let mut report = b.finish();
    if let Some((k, m0, spec)) = worst {
        if m0 < -plan.tolerance && plan.refine_steps > 0 {
            let ok = |s: &FieldSpec| -> bool {
                VectorField::new(s, domain).is_ok_and(|f| keeps_orientation(tp, &f, domain))
            };
            let f = |p: &[f64]| -> Option<f64> {
                let s = spec.scaled(p[0]);
                if !ok(&s) {
                    return None;
                }
                eval(&s).ok()
            };
            let (p, m, spent) = refine_witness(f, &[1.0], m0, &[(0.25, 4.0)], plan.refine_steps);
            if m < m0 {
                let refined = spec.scaled(p[0]);
                let raw = m * normalizer(domain, tp.value(w)?);
                report.refine_violation(
                    m,
                    Witness {
                        sample: Some(k),
                        seed: Some(plan.seed),
                        field: Some(refined),
                        f: Some(tp.f.to_vec()),
                        raw_margin: Some(raw),
                        ..Default::default()
                    },
                );
                report.notes.push(format!("witness of sample {k} refined from {m0:e} in {spent} evaluations"));
            }
        }
    }
    Ok(report)
}

/// Agreement of the quasiconvexity margin with `eta = F (phi - id)` and the
/// left lower-invariance margin of `phi`, both built from the same stored
/// flow gradients; each sample's margin is `-|difference|`.
pub fn test_flow_consistency(
    w: &dyn EnergyDensity,
    g: &GroupSpec,
    tp: &TestPoint,
    domain: &BoxDomain,
    plan: &SamplingPlan,
) -> Result<TestReport, TesterError> {
    check_dim(tp, domain)?;
    let bank = FlowBank::build(g, domain, plan)?;
    let norm = normalizer(domain, tp.value(w)?);
    let id = SquareMatrix::identity(tp.dim());
    let zero = SquareMatrix::zeros(tp.dim());
    run_bank(
        format!("quasiconvexity / left-invariance consistency of {}", w.name()),
        &bank,
        &plan.without_refinement(),
        tp,
        |s| {
            let grads: HashMap<[u64; MAX_DIM], SquareMatrix> =
                s.nodes.iter().map(|n| (key(&n.x), tp.f * (n.grad - id))).collect();
            let qc = quasiconvexity_margin(w, tp, domain, &|x| *grads.get(&key(x)).unwrap_or(&zero))?;
            let li = li_raw(w, tp, Side::Left, &s.nodes)? / norm;
            Ok((-(qc - li).abs(), qc - li))
        },
    )
}

fn key(x: &Point) -> [u64; MAX_DIM] {
    x.map(f64::to_bits)
}

/// Integration box for the pulled-back flow with cells no wider than `h`.
///
/// For a generator supported in one ball `B(c, R)` the box is centred at
/// `F^{-1} c` with an even number of cells per axis and bounds the ellipse
/// `F^{-1} B(c, R)`, so that its nodes are point-symmetric about the
/// centre. Otherwise it is centred at `F^{-1}` of the domain centre and
/// contains `F^{-1} E`.
fn pullback_box(
    f_inv: &SquareMatrix,
    domain: &BoxDomain,
    support: Option<(Vec<f64>, f64)>,
    h: f64,
) -> Result<BoxDomain, TesterError> {
    let n = domain.dim();
    let (center, half) = match support {
        Some((c, r)) => {
            let center = f_inv.mul_vec(&crate::algebra::point(&c));
            let half: Vec<f64> =
                (0..n).map(|a| 1.01 * r * (0..n).map(|j| f_inv[(a, j)].powi(2)).sum::<f64>().sqrt()).collect();
            (center, half)
        }
        None => {
            let center = f_inv.mul_vec(&domain.center());
            let mut half = vec![0.0f64; n];
            for corner in 0..(1usize << n) {
                let mut x = [0.0; MAX_DIM];
                for (a, xa) in x.iter_mut().enumerate().take(n) {
                    *xa = if corner >> a & 1 == 1 { domain.upper()[a] } else { domain.lower()[a] };
                }
                let y = f_inv.mul_vec(&x);
                for a in 0..n {
                    half[a] = half[a].max(1.01 * (y[a] - center[a]).abs());
                }
            }
            (center, half)
        }
    };
    let cells: Vec<usize> = half.iter().map(|w| 2 * (w / h).ceil() as usize).collect();
    let lo: Vec<f64> = (0..n).map(|a| center[a] - cells[a] as f64 * h / 2.0).collect();
    let hi: Vec<f64> = (0..n).map(|a| center[a] + cells[a] as f64 * h / 2.0).collect();
    Ok(BoxDomain::new(&lo, &hi)?.with_cells_per_axis(&cells)?.with_order(domain.order())?)
}

/// Minimum cells per axis of both quadratures in the conjugation identity.
pub fn conjugation_cells(n: usize) -> usize {
    if n >= 3 {
        16
    } else {
        32
    }
}

/// Normalized residual of
/// `int_E W(grad phi F) - W(F) = det F int_B W(F grad psi) - W(F)`
/// with `psi = F^{-1} phi F` the flow of the pulled-back generator and `B`
/// a box containing the pulled-back support, integrated on its own grid.
/// `E` is refined to at least [`conjugation_cells`] per axis and `B` gets
/// cells two thirds as wide.
pub fn conjugation_residual(
    w: &dyn EnergyDensity,
    f: &SquareMatrix,
    field: &Arc<VectorField>,
    tau: f64,
    domain: &BoxDomain,
) -> Result<f64, TesterError> {
    let tp = TestPoint::at(*f);
    check_dim(&tp, domain)?;
    let det = f.det();
    if det <= 0.0 {
        return Err(TesterError::InvalidInput(format!("det F = {det:e} is not positive")));
    }
    let cells = conjugation_cells(domain.dim());
    let fine: Vec<usize> = domain.cells().iter().map(|&c| c.max(cells)).collect();
    let e = domain.clone().with_cells_per_axis(&fine)?;
    let lhs = li_raw(w, &tp, Side::Right, &flow_nodes(field, tau, &e))?;
    let f_inv = f.inverse()?;
    let h = (0..e.dim()).map(|a| e.extent(a) / e.cells()[a] as f64).fold(f64::INFINITY, f64::min);
    let support = field.spec().and_then(FieldSpec::support_ball);
    let b = pullback_box(&f_inv, domain, support, h * 2.0 / 3.0)?;
    let pulled = Arc::new(VectorField::pullback(field.clone(), *f)?);
    let rhs = det * li_raw(w, &tp, Side::Left, &flow_nodes(&pulled, tau, &b))?;
    Ok((lhs - rhs).abs() / normalizer(domain, tp.value(w)?))
}

/// Conjugation identity for one `(F, phi)` pair; `F` and `F^{-1}` must be
/// jets of `g`. The report's margin is `-residual`.
pub fn test_conjugation_identity(
    w: &dyn EnergyDensity,
    g: &GroupSpec,
    f: &SquareMatrix,
    field: &Arc<VectorField>,
    tau: f64,
    domain: &BoxDomain,
    tolerance: f64,
) -> Result<(f64, TestReport), TesterError> {
    let tp = TestPoint::at(*f);
    tp.require_jet(g)?;
    TestPoint::at(f.inverse()?).require_jet(g)?;
    let r = conjugation_residual(w, f, field, tau, domain)?;
    let report = TestReport::single(
        format!("conjugation identity for {} under {}", w.name(), g.kind.label()),
        -r,
        tolerance,
        Witness {
            field: field.spec().cloned(),
            tau: Some(tau),
            f: Some(f.to_vec()),
            raw_margin: Some(r),
            ..Default::default()
        },
    );
    Ok((r, report))
}

/// Conjugation identity over sampled `(F, phi)` pairs with `F` a random jet
/// of `g`; margins are `-residual`.
pub fn test_conjugation_sampled(
    w: &dyn EnergyDensity,
    g: &GroupSpec,
    domain: &BoxDomain,
    plan: &SamplingPlan,
) -> Result<TestReport, TesterError> {
    let mut b = ReportBuilder::new(
        format!("conjugation identity for {} under {}", w.name(), g.kind.label()),
        plan.tolerance,
        plan.seed,
    );
    for k in 0..plan.samples {
        let f = g.random_jet_element(rng::mix(plan.seed ^ rng::mix(k as u64 + 1)));
        let d = draw_field(g, domain, &FieldSampler::default(), plan.seed, k as u64, plan.amplitude_scale)?;
        let r = conjugation_residual(w, &f, &d.field, d.tau, domain)?;
        b.push(SampleOutcome {
            margin: -r,
            tau: d.tau,
            amplitude: d.spec.amplitude(),
            witness: Witness {
                sample: Some(k),
                seed: Some(plan.seed),
                field: Some(d.spec),
                tau: Some(d.tau),
                f: Some(f.to_vec()),
                raw_margin: Some(r),
                ..Default::default()
            },
        });
    }
    Ok(b.finish())
}

/// What an inner variation acts on: a deformation `u` or a constant jet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Subject {
    Map { map: DeformationMap },
    Jet { f: SquareMatrix },
}

impl Subject {
    fn dim(&self) -> usize {
        match self {
            Subject::Map { map } => map.dim(),
            Subject::Jet { f } => f.dim(),
        }
    }

    fn eval(&self, x: &Point) -> (Point, SquareMatrix) {
        match self {
            Subject::Map { map } => map.eval(x),
            Subject::Jet { f } => (f.mul_vec(x), *f),
        }
    }
}

/// Outcome of [`test_exp_invariance_sampled`].
#[derive(Debug, Clone)]
pub struct ExpInvariance {
    /// Largest `|I(u o phi) - I(u)|` over the samples.
    pub max_abs_change: f64,
    pub report: TestReport,
}

fn composed_change(w: &dyn EnergyDensity, subject: &Subject, nodes: &[FlowNode]) -> Result<f64, TesterError> {
    sum_nodes(nodes, |n| {
        let (y, du) = subject.eval(&n.phi);
        let (y0, du0) = subject.eval(&n.x);
        Ok(w.value(&n.x, &y, &(du * n.grad))? - w.value(&n.x, &y0, &du0)?)
    })
}

fn subject_scale(w: &dyn EnergyDensity, subject: &Subject, domain: &BoxDomain) -> Result<f64, TesterError> {
    let mut s = CompensatedSum::default();
    for q in domain.nodes() {
        let (y, du) = subject.eval(&q.x);
        s.add(q.w * w.value(&q.x, &y, &du)?);
    }
    Ok(domain.volume() + s.value().abs())
}

/// `|I(u o phi_tau) - I(u)|` for one generator of `g` (for a jet subject,
/// `|int W(F grad phi_tau) - |E| W(F)|`), with a two-sided report
/// normalized by `|E| + |I(u)|`.
pub fn test_exp_invariance(
    w: &dyn EnergyDensity,
    g: &GroupSpec,
    subject: &Subject,
    field: &Arc<VectorField>,
    tau: f64,
    domain: &BoxDomain,
    tolerance: f64,
) -> Result<(f64, TestReport), TesterError> {
    if subject.dim() != domain.dim() || field.dim() != domain.dim() {
        return Err(TesterError::InvalidInput("subject, field and domain dimensions differ".into()));
    }
    let check = crate::kinematics::field_in_tg(field, g, &domain.grid(12));
    if !check.passed() {
        return Err(TesterError::InvalidInput(format!(
            "generator is not tangent to {} (deviation {:e})",
            g.kind.label(),
            -check.margin
        )));
    }
    if let Subject::Jet { f } = subject {
        TestPoint::at(*f).require_jet(g)?;
    }
    let d = composed_change(w, subject, &flow_nodes(field, tau, domain))?;
    let scale = subject_scale(w, subject, domain)?;
    let report = TestReport::single(
        format!("invariance of I under {} for {}", g.kind.label(), w.name()),
        -(d / scale).abs(),
        tolerance,
        Witness { field: field.spec().cloned(), tau: Some(tau), raw_margin: Some(d), ..Default::default() },
    );
    Ok((d.abs(), report))
}

/// Invariance `I(u o phi) = I(u)` under sampled flows of `g`; two-sided
/// margins normalized by `|E| + |I(u)|`.
pub fn test_exp_invariance_sampled(
    w: &dyn EnergyDensity,
    g: &GroupSpec,
    subject: &Subject,
    domain: &BoxDomain,
    plan: &SamplingPlan,
) -> Result<ExpInvariance, TesterError> {
    if subject.dim() != domain.dim() {
        return Err(TesterError::InvalidInput("subject and domain dimensions differ".into()));
    }
    let bank = FlowBank::build(g, domain, plan)?;
    let scale = subject_scale(w, subject, domain)?;
    let mut max_abs: f64 = 0.0;
    let mut b = ReportBuilder::new(
        format!("invariance of I under {} for {}", g.kind.label(), w.name()),
        plan.tolerance,
        plan.seed,
    );
    for s in &bank.samples {
        let d = composed_change(w, subject, &s.nodes)?;
        max_abs = max_abs.max(d.abs());
        let mut wit = s.witness(plan.seed);
        wit.raw_margin = Some(d);
        b.push(SampleOutcome { margin: -(d / scale).abs(), tau: s.tau, amplitude: s.spec.amplitude(), witness: wit });
    }
    b.note(format!("max |I(u o phi) - I(u)| = {max_abs:e}"));
    Ok(ExpInvariance { max_abs_change: max_abs, report: b.finish() })
}

/// Lower invariance along `tau_k = tau / 2^k`, `k = 0..=levels`, for each
/// sampled generator. A consistency check of the sampled verdict as the
/// flows shrink to the identity, not a proof of semicontinuity.
pub fn test_semicontinuity(
    w: &dyn EnergyDensity,
    g: &GroupSpec,
    subject: &Subject,
    domain: &BoxDomain,
    plan: &SamplingPlan,
    levels: usize,
) -> Result<TestReport, TesterError> {
    if subject.dim() != domain.dim() {
        return Err(TesterError::InvalidInput("subject and domain dimensions differ".into()));
    }
    let scale = subject_scale(w, subject, domain)?;
    let mut b = ReportBuilder::new(
        format!("consistency of lower invariance of {} as flows shrink", w.name()),
        plan.tolerance,
        plan.seed,
    );
    let mut ratios = Vec::new();
    for k in 0..plan.samples {
        let d = draw_field(g, domain, &FieldSampler::default(), plan.seed, k as u64, plan.amplitude_scale)?;
        let mut prev: Option<f64> = None;
        for level in 0..=levels {
            let tau = d.tau / f64::powi(2.0, level as i32);
            let s = FlowSample::evaluate(k, d.spec.clone(), d.field.clone(), tau, domain);
            let raw = composed_change(w, subject, &s.nodes)?;
            if let Some(p) = prev {
                if raw.abs() > 0.0 {
                    ratios.push(p / raw);
                }
            }
            prev = Some(raw);
            let mut wit = s.witness(plan.seed);
            wit.raw_margin = Some(raw);
            b.push(SampleOutcome { margin: raw / scale, tau, amplitude: d.spec.amplitude(), witness: wit });
        }
    }
    if !ratios.is_empty() {
        ratios.sort_by(f64::total_cmp);
        b.note(format!(
            "median ratio of successive margins under tau halving: {:.3}",
            ratios[ratios.len() / 2]
        ));
    }
    Ok(b.finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frob() -> Catalog {
        Catalog::new(EnergySpec::Frobenius2).unwrap()
    }

    #[test]
    fn identity_flows_have_zero_margin() {
        let g = GroupSpec::new(GroupKind::FullDiff, 2).unwrap();
        let plan = SamplingPlan::new(3, 4).with_amplitude_scale(0.0);
        let tp = TestPoint::at(SquareMatrix::diag(&[1.2, 0.7]));
        let r = test_lower_invariance(&frob(), &g, Side::Left, &tp, &BoxDomain::unit(2), &plan).unwrap();
        assert_eq!(r.margin, 0.0);
        let q = test_quasiconvexity(&frob(), &tp, &BoxDomain::unit(2), &plan).unwrap();
        assert_eq!(q.margin, 0.0);
    }

    #[test]
    fn concave_density_fails_quasiconvexity() {
        let w = Catalog::new(EnergySpec::NegFrobenius2).unwrap();
        let plan = SamplingPlan::new(5, 1);
        let r = test_quasiconvexity(&w, &TestPoint::at(SquareMatrix::identity(2)), &BoxDomain::unit(2), &plan).unwrap();
        assert!(!r.passed());
        assert!(r.witness.unwrap().field.is_some());
    }

    #[test]
    fn right_side_needs_jet_member() {
        let g = GroupSpec::new(GroupKind::VolumePreserving, 2).unwrap();
        let tp = TestPoint::at(SquareMatrix::diag(&[2.0, 1.0]));
        let e = test_lower_invariance(&frob(), &g, Side::Right, &tp, &BoxDomain::unit(2), &SamplingPlan::new(1, 0));
        assert!(matches!(e, Err(TesterError::JetViolation { .. })));
    }

    #[test]
    fn character_group_mismatch() {
        let c = CharacterSpec::ShearExp { c: 1.0, p: 0, q: 1, n: 2 };
        let g = GroupSpec::new(GroupKind::VolumePreserving, 2).unwrap();
        let tp = TestPoint::at(SquareMatrix::identity(2));
        let e = test_character_nll(&c, &g, &tp, &BoxDomain::unit(2), &SamplingPlan::new(1, 0));
        assert!(matches!(e, Err(TesterError::Mismatch(_))));
    }

    #[test]
    fn pullback_box_contains_image() {
        let f = SquareMatrix::new(2, &[1.3, 0.4, -0.2, 0.9]).unwrap();
        let b = pullback_box(&f.inverse().unwrap(), &BoxDomain::unit(2), None, 0.25).unwrap();
        for x in BoxDomain::unit(2).grid(5) {
            assert!(b.contains(&f.inverse().unwrap().mul_vec(&x)));
        }
        let b = pullback_box(&f.inverse().unwrap(), &BoxDomain::unit(2), Some((vec![0.5, 0.5], 0.3)), 0.05).unwrap();
        assert!(b.cells().iter().all(|c| c % 2 == 0));
        let mid = f.inverse().unwrap().mul_vec(&[0.5, 0.5, 0.0]);
        assert!((b.center()[0] - mid[0]).abs() < 1e-14 && (b.center()[1] - mid[1]).abs() < 1e-14);
    }
}
