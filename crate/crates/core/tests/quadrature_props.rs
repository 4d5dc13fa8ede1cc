use proptest::prelude::*;
use varinv_core::algebra::SquareMatrix;
use varinv_core::energies::{Catalog, EnergySpec};
use varinv_core::functional::{boundary_integrals, functional_eval, integrate, BoxDomain, BumpTerm, DeformationMap, Map};
use varinv_core::functional::default_cells;

fn monomial_integral(lo: f64, hi: f64, k: u32) -> f64 {
    (hi.powi(k as i32 + 1) - lo.powi(k as i32 + 1)) / f64::from(k + 1)
}

proptest! {
    #[test]
    fn per_axis_polynomials_are_exact(
        lo in prop::array::uniform3(-1.0..0.0f64),
        len in prop::array::uniform3(0.5..1.5f64),
        exps in prop::array::uniform3(0u32..10),
        order in 1usize..=5,
    ) {
        for n in [1, 2, 3] {
            let hi: Vec<f64> = (0..n).map(|i| lo[i] + len[i]).collect();
            let d = BoxDomain::new(&lo[..n], &hi).unwrap().with_cells(2).unwrap().with_order(order).unwrap();
            let e: Vec<u32> = exps[..n].iter().map(|&k| k.min(2 * order as u32 - 1)).collect();
            let got = integrate(&d, |x| (0..n).map(|i| x[i].powi(e[i] as i32)).product()).unwrap();
            let exact: f64 = (0..n).map(|i| monomial_integral(lo[i], hi[i], e[i])).product();
            prop_assert!((got - exact).abs() <= 1e-12 * exact.abs().max(1.0), "{got} vs {exact}");
            prop_assert!((integrate(&d, |_| 1.0).unwrap() - d.volume()).abs() <= 1e-12);
        }
    }

    // Gauss nodes are symmetric about every half-cell point, so a bump centred
    // there with support inside the box integrates its odd part exactly.
    #[test]
    fn divergence_identities_close_for_lattice_centred_bumps(
        f in prop::collection::vec(-0.3..0.3f64, 9),
        k in prop::array::uniform3(-1i32..=1),
        radius in 0.2..0.3f64,
        amp in -0.1..0.1f64,
        axis in 0usize..3,
    ) {
        for n in [2, 3] {
            let d = BoxDomain::unit(n);
            let h = 0.5 / default_cells(n) as f64;
            let center: Vec<f64> = (0..n).map(|i| 0.5 + f64::from(k[i]) * h).collect();
            let m = SquareMatrix::from_fn(n, |i, j| f64::from(u8::from(i == j)) + f[i * n + j]);
            let bump = BumpTerm { center, radius, amplitude: amp, axis: axis % n };
            let u = DeformationMap::affine_bump(m, &vec![0.1; n], vec![bump]).unwrap();
            let r = boundary_integrals(&u, &d).unwrap();
            prop_assert!(r.gradient_residual() <= 1e-7, "{}", r.gradient_residual());
            prop_assert!(r.adjugate_residual() <= 1e-7, "{}", r.adjugate_residual());
        }
    }
}

#[test]
fn functional_values_are_bit_reproducible() {
    let w = Catalog::new(EnergySpec::Stvk { lambda: 1.0, mu: 0.5 }).unwrap();
    let bump = BumpTerm { center: vec![0.5, 0.5, 0.5], radius: 0.3, amplitude: 0.05, axis: 1 };
    let u = DeformationMap::affine_bump(SquareMatrix::identity(3) * 1.1, &[0.0; 3], vec![bump]).unwrap();
    let d = BoxDomain::unit(3);
    let a = functional_eval(&w, &Map::Deformation(u.clone()), &d).unwrap();
    let b = functional_eval(&w, &Map::Deformation(u), &d).unwrap();
    assert_eq!(a.to_bits(), b.to_bits());
}

#[test]
fn off_lattice_bump_needs_refinement() {
    let bump = BumpTerm { center: vec![0.45, 0.45], radius: 0.35, amplitude: 0.1, axis: 0 };
    let u = DeformationMap::affine_bump(SquareMatrix::identity(2), &[0.0; 2], vec![bump]).unwrap();
    let coarse = boundary_integrals(&u, &BoxDomain::unit(2)).unwrap().gradient_residual();
    let fine = boundary_integrals(&u, &BoxDomain::unit(2).with_cells(64).unwrap()).unwrap().gradient_residual();
    assert!(coarse > 1e-7, "{coarse}");
    assert!(fine <= 1e-10, "{fine}");
}
