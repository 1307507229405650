use proptest::prelude::*;

use mscahn::cli::initial::perturbed_uniform;
use mscahn::diagnostics::{energy_delta, entropy_delta, masses};
use mscahn::scheme::{h_delta, h_delta_prime, step, EntropyParams, SchemeParams, State};
use mscahn::{FrictionModel, Grid1D, Matrix};

fn model(kind: u8, n: usize) -> FrictionModel {
    let k = Matrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { 1.0 + 0.25 * ((i + j) % 3) as f64 });
    match kind {
        0 => FrictionModel::elliott_garcke(vec![1.0; n]).unwrap(),
        1 => FrictionModel::maxwell_stefan(k).unwrap(),
        _ => FrictionModel::vapor_deposition(k).unwrap(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn step_conserves_mass_and_dissipates_energy(
        kind in 0u8..3,
        n in 2usize..5,
        amplitude in 0.0..0.2f64,
        seed in any::<u64>(),
    ) {
        let g = Grid1D::new(20, 1.0).unwrap();
        let m = model(kind, n);
        let p = SchemeParams::new(2e-4, 1e-3, &m);
        let c = perturbed_uniform(n, amplitude, &[1, 2, 4], seed, &g);
        let mut s = State::new(c, p.delta, &g).unwrap();
        let e = p.entropy();
        let m0 = masses(&s.c, &g);
        for _ in 0..3 {
            let next = step(&s, &m, &p, &g).unwrap().state;
            prop_assert!(energy_delta(&next.c, e, &g) <= energy_delta(&s.c, e, &g) + 1e-10);
            // convexity of the regularized entropy
            let lhs: f64 = (0..n)
                .map(|i| (0..20).map(|j| (next.c[i][j] - s.c[i][j]) * h_delta_prime(next.c[i][j], e)).sum::<f64>())
                .sum::<f64>() * g.h();
            prop_assert!(lhs >= entropy_delta(&next.c, e, &g) - entropy_delta(&s.c, e, &g) - 1e-12);
            s = next;
        }
        for (a, b) in masses(&s.c, &g).iter().zip(&m0) {
            prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
        for j in 0..20 {
            let head: f64 = (0..n - 1).map(|i| s.c[i][j]).sum();
            prop_assert_eq!(s.c[n - 1][j], 1.0 - head);
        }
    }

    #[test]
    fn regularized_entropy_is_convex(delta in 1e-4..0.4f64, a in -0.5..1.5f64, b in -0.5..1.5f64) {
        let e = EntropyParams::new(delta).unwrap();
        let mid = 0.5 * (a + b);
        prop_assert!(h_delta(mid, e) <= 0.5 * (h_delta(a, e) + h_delta(b, e)) + 1e-12);
    }
}
