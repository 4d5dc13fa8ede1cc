use rand::Rng;
use varinv_core::algebra::{CharacterSpec, SquareMatrix, MAX_DIM};
use varinv_core::energies::{fd_derivative_check, Catalog, ConvexFn, DerivativeMode, EnergyDensity, EnergySpec};
use varinv_core::rng;

const O: [f64; MAX_DIM] = [0.0; MAX_DIM];

fn catalog(n: usize) -> Vec<Catalog> {
    let mut specs = vec![
        EnergySpec::Frobenius2,
        EnergySpec::NegFrobenius2,
        EnergySpec::Det,
        EnergySpec::Logdet,
        EnergySpec::Stvk { lambda: 1.3, mu: 0.7 },
        EnergySpec::CharLog { character: CharacterSpec::ShearExp { c: 0.9, p: 0, q: 1, n } },
        EnergySpec::Polyconvex { g: ConvexFn::Exp, w: vec![EnergySpec::Det, EnergySpec::AdjComponent { i: 1, j: 0 }] },
        EnergySpec::ClassicalNll {
            n,
            linear: (0..n * n).map(|k| 0.1 * k as f64).collect(),
            adj: (0..n * n).map(|k| 0.3 - 0.05 * k as f64).collect(),
            det: -0.4,
        },
    ];
    for i in 0..n {
        for j in 0..n {
            specs.push(EnergySpec::AdjComponent { i, j });
            specs.push(EnergySpec::LinearComponent { i, j });
        }
    }
    specs.into_iter().map(|s| Catalog::new(s).unwrap()).collect()
}

fn jets(n: usize, seed: u64, count: usize) -> Vec<SquareMatrix> {
    let mut r = rng::stream(seed);
    let mut out = Vec::new();
    while out.len() < count {
        let v: Vec<f64> = (0..n * n).map(|_| r.random_range(-0.5..0.5)).collect();
        let f = SquareMatrix::from_fn(n, |i, j| f64::from(u8::from(i == j)) + v[i * n + j]);
        if f.det() > 0.2 {
            out.push(f);
        }
    }
    out
}

#[test]
fn analytic_derivatives_match_differences() {
    for n in [2, 3] {
        for w in catalog(n).iter().filter(|w| w.mode() == DerivativeMode::Analytic) {
            for f in jets(n, 10 + n as u64, 50) {
                let c = fd_derivative_check(w, &f, 1e-6).unwrap();
                assert!(c.grad_error <= 1e-6, "{} gradient {:e}", w.name(), c.grad_error);
                assert!(c.hess_error <= 1e-4, "{} hessian {:e}", w.name(), c.hess_error);
            }
        }
    }
}

#[test]
fn hessians_are_symmetric() {
    for n in [2, 3] {
        for w in catalog(n) {
            for f in jets(n, 20 + n as u64, 10) {
                let h = w.hessian(&O, &O, &f).unwrap();
                let bound = if w.mode() == DerivativeMode::Analytic { 1e-10 } else { 0.0 };
                assert!(h.asymmetry() <= bound, "{}: {:e}", w.name(), h.asymmetry());
            }
        }
    }
}

#[test]
fn classical_null_lagrangian_hessians_are_antisymmetric_under_column_swap() {
    for n in [2, 3] {
        for w in catalog(n).into_iter().filter(|w| {
            matches!(
                w.spec(),
                EnergySpec::Det | EnergySpec::AdjComponent { .. } | EnergySpec::LinearComponent { .. } | EnergySpec::ClassicalNll { .. }
            )
        }) {
            for f in jets(n, 30 + n as u64, 10) {
                let h = w.hessian(&O, &O, &f).unwrap();
                let mut worst: f64 = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        for k in 0..n {
                            for l in 0..n {
                                worst = worst.max((h.get(i, j, k, l) + h.get(i, l, k, j)).abs());
                            }
                        }
                    }
                }
                assert!(worst <= 1e-10, "{}: {worst:e}", w.name());
            }
        }
    }
}
