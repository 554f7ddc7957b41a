use latent_langevin::grid::{ImageGrid, NoiseSource};
use latent_langevin::prior::*;
use proptest::prelude::*;

fn field(seed: u64, rows: usize, cols: usize, scale: f64) -> ImageGrid {
    NoiseSource::new(seed, 0).standard_normal_field(rows, cols).scaled(scale)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn tv_prox_is_firmly_nonexpansive(seed in 0u64..1000, w in 0.01f64..3.0) {
        let x = field(seed, 8, 9, 2.0);
        let y = field(seed + 7919, 8, 9, 2.0);
        let (px, py) = (prox_tv(&x, w).unwrap(), prox_tv(&y, w).unwrap());
        let d = px.sub(&py);
        // ||Px - Py||^2 <= <Px - Py, x - y>, up to the inner solver tolerance.
        prop_assert!(d.norm_sq() <= d.dot(&x.sub(&y)) + 1e-3 * x.sub(&y).norm_sq());
    }

    #[test]
    fn tv_prox_preserves_mean_and_reduces_tv(seed in 0u64..1000, w in 0.01f64..3.0) {
        let x = field(seed, 7, 6, 1.0);
        let r = TvSolver::default().prox_report(&x, w).unwrap();
        prop_assert!((r.u.mean() - x.mean()).abs() < 1e-10);
        prop_assert!(tv(&r.u) <= tv(&x) + 1e-9);
        prop_assert!(r.gap >= 0.0 && r.gap <= 1e-6 * (1.0 + r.objective.abs()), "gap {} obj {}", r.gap, r.objective);
    }

    #[test]
    fn l1_prox_is_soft_threshold(seed in 0u64..1000, w in 0.0f64..2.0) {
        let x = field(seed, 3, 5, 2.0);
        let p = prox_l1(&x, w).unwrap();
        for (u, v) in p.as_slice().iter().zip(x.as_slice()) {
            // Scalar minimiser of w|u| + (u - v)^2 / 2 checked against its
            // optimality conditions.
            if *u == 0.0 {
                prop_assert!(v.abs() <= w + 1e-15);
            } else {
                prop_assert!((v - u - w * u.signum()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn envelope_sandwich(seed in 0u64..1000, theta in 0.1f64..3.0, lambda in 0.01f64..2.0, tvp in any::<bool>()) {
        let reg = if tvp { Regulariser::default() } else { Regulariser::L1 };
        let prior = PriorDescriptor::new(theta, lambda, reg).unwrap();
        let x = field(seed, 5, 5, 1.5);
        let env = my_envelope_value(&x, &prior).unwrap();
        let g = prior.potential(&x);
        // g - lambda ||grad g||^2 / 2 <= env <= g for Lipschitz g.
        prop_assert!(env <= g + 1e-8);
        let lip = if tvp { 8f64.sqrt() } else { 1.0 } * theta;
        prop_assert!(env >= g - lambda * lip * lip * x.len() as f64 / 2.0 - 1e-8);
        let grad = my_envelope_grad(&x, &prior).unwrap();
        prop_assert!(grad.norm() <= lip * (x.len() as f64).sqrt() + 1e-6);
    }

    #[test]
    fn homogeneity(seed in 0u64..1000, t in 0.0f64..50.0) {
        let x = field(seed, 6, 4, 1.0);
        for reg in [Regulariser::default(), Regulariser::L1] {
            let lhs = reg.value(&x.scaled(t));
            prop_assert!((lhs - t * reg.value(&x)).abs() <= 1e-12 * (1.0 + lhs));
            prop_assert_eq!(reg.homogeneity(), 1.0);
        }
    }
}

#[test]
fn envelope_gradient_of_l1_is_clipped_identity() {
    let prior = PriorDescriptor::new(2.0, 0.5, Regulariser::L1).unwrap();
    let x = ImageGrid::new(1, 4, vec![-3.0, -0.2, 0.7, 1.5]).unwrap();
    let g = my_envelope_grad(&x, &prior).unwrap();
    assert_eq!(g.as_slice(), &[-2.0, -0.4, 1.4, 2.0]);
    assert!((prior.lipschitz() - 2.0).abs() < 1e-15);
}
