use std::sync::Arc;

use proptest::prelude::*;
use varinv_core::algebra::{GroupKind, GroupSpec, SquareMatrix};
use varinv_core::energies::{Catalog, EnergySpec};
use varinv_core::functional::{default_cells, BoxDomain, DeformationMap, DeformationSpec};
use varinv_core::kinematics::{FieldSpec, VectorBump, VectorField};
use varinv_core::report::Verdict;
use varinv_core::testers::{
    self, gram_matrix, legh_domain, legh_field, lower_invariance_margin, FlowSample, LeghMode, SamplingPlan, Side,
    TestPoint,
};

fn unit(n: usize) -> BoxDomain {
    BoxDomain::unit(n).with_cells(default_cells(n)).unwrap()
}

fn classical(n: usize, linear: Vec<f64>, adj: Vec<f64>, det: f64) -> Catalog {
    Catalog::new(EnergySpec::ClassicalNll { n, linear, adj, det }).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn gram_matrices_are_positive_semidefinite(seed in any::<u64>(), n in 2usize..=3) {
        let d = if n == 2 { legh_domain(2).unwrap() } else { unit(3) };
        let field = VectorField::new(&legh_field(n, seed), &d).unwrap();
        let m = n * n;
        let gram = gram_matrix(&field, &d);
        let ours = testers::symmetric_eigenvalues(&gram, m);
        let oracle = nalgebra::DMatrix::from_row_slice(m, m, &gram).symmetric_eigenvalues();
        let mut oracle: Vec<f64> = oracle.iter().copied().collect();
        oracle.sort_by(f64::total_cmp);
        prop_assert!(ours[0] >= -1e-10, "min eigenvalue {}", ours[0]);
        for (a, b) in ours.iter().zip(&oracle) {
            prop_assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    // Classical null lagrangians satisfy the pointwise antisymmetry, and that
    // propagates to a vanishing integrated LH quantity and first variation.
    #[test]
    fn pointwise_antisymmetry_propagates(
        linear in prop::collection::vec(-1.0..1.0f64, 4),
        adj in prop::collection::vec(-1.0..1.0f64, 4),
        c in -1.0..1.0f64,
        q in prop::collection::vec(-0.4..0.4f64, 8),
        seed in any::<u64>(),
    ) {
        let w = classical(2, linear, adj, c);
        let tp = TestPoint::at(SquareMatrix::new(2, &[1.1, 0.2, -0.1, 0.9]).unwrap());
        let parhl = testers::test_parhl(&w, &tp, 1e-10).unwrap();
        prop_assert!(parhl.residual <= 1e-10, "{}", parhl.residual);

        let d = legh_domain(2).unwrap();
        let field = VectorField::new(&legh_field(2, seed), &d).unwrap();
        let legh = testers::test_legh(&w, &tp, &field, &d, LeghMode::Equality, 1e-7).unwrap();
        prop_assert!(legh.q.abs() <= 1e-7, "Q = {}", legh.q);

        let d = unit(2);
        let u = DeformationMap::try_from(DeformationSpec::Quadratic { n: 2, f: Some(tp.f.to_vec()), b: None, q }).unwrap();
        let spec = FieldSpec::GenericBump {
            bumps: vec![VectorBump { center: vec![0.5, 0.5], radius: 0.4, amplitude: vec![0.2, -0.3] }],
        };
        let eta = Arc::new(VectorField::new(&spec, &d).unwrap());
        let v = testers::test_first_variation(&w, &u, &eta, &d, 1e-6).unwrap();
        prop_assert!(v.direct.abs() <= 1e-6, "{}", v.direct);
    }

    #[test]
    fn zero_amplitude_runs_have_zero_margins(seed in any::<u64>()) {
        let g = GroupSpec::new(GroupKind::FullDiff, 2).unwrap();
        let plan = SamplingPlan::new(6, seed).with_amplitude_scale(0.0);
        let tp = TestPoint::at(SquareMatrix::new(2, &[1.3, 0.2, 0.1, 0.8]).unwrap());
        for spec in [EnergySpec::Frobenius2, EnergySpec::NegFrobenius2, EnergySpec::Stvk { lambda: 1.0, mu: 0.7 }] {
            let w = Catalog::new(spec).unwrap();
            let li = testers::test_lower_invariance(&w, &g, Side::Left, &tp, &unit(2), &plan).unwrap();
            prop_assert_eq!(li.margin, 0.0);
            let qc = testers::test_quasiconvexity(&w, &tp, &unit(2), &plan).unwrap();
            prop_assert!(qc.margin.abs() <= 1e-15, "{}", qc.margin);
        }
    }
}

#[test]
fn reports_are_deterministic() {
    let w = Catalog::new(EnergySpec::NegFrobenius2).unwrap();
    let tp = TestPoint::at(SquareMatrix::identity(2));
    let plan = SamplingPlan::new(30, 17);
    let a = testers::test_quasiconvexity(&w, &tp, &unit(2), &plan).unwrap();
    let b = testers::test_quasiconvexity(&w, &tp, &unit(2), &plan).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.margin.to_bits(), b.margin.to_bits());
    assert_eq!(a.series_csv(), b.series_csv());
}

// Every volume preserving flow is a diffeomorphism, so a witness against
// invariance under the smaller group is one under the larger group too.
#[test]
fn volume_preserving_witness_is_a_full_diff_witness() {
    let w = Catalog::new(EnergySpec::NegFrobenius2).unwrap();
    let tp = TestPoint::at(SquareMatrix::identity(2));
    let d = unit(2);
    let vp = GroupSpec::new(GroupKind::VolumePreserving, 2).unwrap();
    let full = GroupSpec::new(GroupKind::FullDiff, 2).unwrap();
    let plan = SamplingPlan::new(40, 23).without_refinement();
    let report = testers::test_lower_invariance(&w, &vp, Side::Left, &tp, &d, &plan).unwrap();
    assert_eq!(report.verdict, Verdict::Fail);

    let wit = report.witness.expect("failing runs carry a witness");
    let spec = wit.field.expect("witness field");
    let field = Arc::new(VectorField::new(&spec, &d).unwrap());
    let sample = FlowSample::evaluate(0, spec, field, wit.tau.expect("witness tau"), &d);
    for node in &sample.nodes {
        assert!(full.jet_deviation(&node.grad) <= 1e-12);
        assert!(vp.jet_deviation(&node.grad) <= 1e-8);
    }
    let m = lower_invariance_margin(&w, &tp, Side::Left, &sample, &d).unwrap();
    assert_eq!(m.to_bits(), report.margin.to_bits());
    assert!(m < -plan.tolerance);
}

#[test]
fn conjugation_identity_holds_in_three_dimensions() {
    let w = Catalog::new(EnergySpec::Stvk { lambda: 1.0, mu: 0.5 }).unwrap();
    let g = GroupSpec::new(GroupKind::FullDiff, 3).unwrap();
    let d = unit(3);
    let f = SquareMatrix::new(3, &[1.1, 0.2, 0.0, -0.1, 0.9, 0.1, 0.05, 0.0, 1.2]).unwrap();
    let spec = FieldSpec::GenericBump {
        bumps: vec![VectorBump { center: vec![0.5; 3], radius: 0.35, amplitude: vec![0.3, -0.2, 0.1] }],
    };
    let field = Arc::new(VectorField::new(&spec, &d).unwrap());
    let (r, report) = testers::test_conjugation_identity(&w, &g, &f, &field, 0.02, &d, 1e-7).unwrap();
    assert!(report.passed(), "residual {r:e}");
}
