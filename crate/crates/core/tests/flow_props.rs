use std::sync::Arc;

use proptest::prelude::*;
use varinv_core::algebra::{point, GroupKind, GroupSpec, Point};
use varinv_core::functional::BoxDomain;
use varinv_core::kinematics::{flow_group_check, FieldSpec, ScalarBump, VectorBump, VectorField};

fn generic(center: [f64; 3], radius: f64, amplitude: [f64; 3], n: usize) -> Arc<VectorField> {
    let spec = FieldSpec::GenericBump {
        bumps: vec![VectorBump { center: center[..n].to_vec(), radius, amplitude: amplitude[..n].to_vec() }],
    };
    Arc::new(VectorField::new(&spec, &BoxDomain::unit(n)).unwrap())
}

fn dist(a: &Point, b: &Point) -> f64 {
    (0..3).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>().sqrt()
}

fn field_params() -> impl Strategy<Value = ([f64; 3], f64, [f64; 3])> {
    (
        prop::array::uniform3(0.45..0.55f64),
        0.2..0.4f64,
        prop::array::uniform3(-0.3..0.3f64),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn flows_are_identity_outside_the_support((c, r, a) in field_params(), probe in prop::array::uniform2(0.0..1.0f64)) {
        let field = generic(c, r, a, 2);
        let phi = field.clone().flow(0.7);
        let x = point(&probe);
        prop_assume!(dist(&x, &point(&c[..2])) > r);
        let (y, g) = phi.eval(&x);
        prop_assert_eq!(y, x);
        prop_assert_eq!((g - varinv_core::SquareMatrix::identity(2)).max_abs(), 0.0);
    }

    #[test]
    fn group_law_holds((c, r, a) in field_params()) {
        let d = BoxDomain::unit(2);
        let field = generic(c, r, a, 2);
        for (s, t) in [(0.25, 0.25), (0.25, 0.5), (0.5, 0.5)] {
            let (fs, ft, fst) = (field.clone().flow(s), field.clone().flow(t), field.clone().flow(s + t));
            for x in d.grid(8) {
                prop_assert!(dist(&fst.apply(&x), &fs.apply(&ft.apply(&x))) <= 1e-8);
            }
        }
    }

    #[test]
    fn variational_gradient_matches_differences((c, r, a) in field_params()) {
        let phi = generic(c, r, a, 3).flow(1.0);
        let h = 1e-5;
        for x in BoxDomain::unit(3).grid(4) {
            let g = phi.eval(&x).1;
            for j in 0..3 {
                let (mut xp, mut xm) = (x, x);
                xp[j] += h;
                xm[j] -= h;
                let (p, m) = (phi.apply(&xp), phi.apply(&xm));
                for i in 0..3 {
                    prop_assert!(((p[i] - m[i]) / (2.0 * h) - g[(i, j)]).abs() <= 1e-6);
                }
            }
        }
    }

    #[test]
    fn divergence_free_flows_keep_unit_jacobian(c in prop::array::uniform3(0.45..0.55f64), r in 0.2..0.4f64, a in -0.05..0.05f64, v in prop::array::uniform3(-0.05..0.05f64)) {
        let d2 = BoxDomain::unit(2);
        let stream = FieldSpec::DivFree2D { stream: vec![ScalarBump { center: c[..2].to_vec(), radius: r, amplitude: a }] };
        let f2 = Arc::new(VectorField::new(&stream, &d2).unwrap()).flow(1.0);
        let g2 = GroupSpec::new(GroupKind::VolumePreserving, 2).unwrap();
        prop_assert!(flow_group_check(&f2, &g2, &d2.grid(10)) <= 1e-8);

        let d3 = BoxDomain::unit(3);
        let curl = FieldSpec::DivFree3D { potential: vec![VectorBump { center: c.to_vec(), radius: r, amplitude: v.to_vec() }] };
        let f3 = Arc::new(VectorField::new(&curl, &d3).unwrap()).flow(1.0);
        let g3 = GroupSpec::new(GroupKind::VolumePreserving, 3).unwrap();
        prop_assert!(flow_group_check(&f3, &g3, &d3.grid(5)) <= 1e-8);
    }
}
