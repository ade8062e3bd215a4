use eps_planner::perturbation::{delta_coeff, materialize, noise_sigma, noise_sigma_prime};
use eps_planner::NoiseDraw;
use proptest::prelude::*;

proptest! {
    #[test]
    fn sigma_and_ridge_decrease_in_epsilon(
        zeta in 0.1f64..10.0,
        delta in 1e-8f64..0.5,
        e1 in 1e-3f64..50.0,
        gap in 1e-3f64..50.0,
    ) {
        let e2 = e1 + gap;
        prop_assert!(noise_sigma(zeta, delta, e2).unwrap() < noise_sigma(zeta, delta, e1).unwrap());
        prop_assert!(delta_coeff(1.0, e2).unwrap() < delta_coeff(1.0, e1).unwrap());
        prop_assert!(noise_sigma_prime(zeta, delta, e1).unwrap() < 0.0);
    }

    #[test]
    fn draws_are_deterministic_and_shared_across_epsilon(seed in any::<u64>(), p in 1usize..12, e1 in 0.01f64..10.0, e2 in 0.01f64..10.0) {
        let a = NoiseDraw::from_seed(seed, p);
        prop_assert!(a.same_draw(&NoiseDraw::from_seed(seed, p)));
        let (m1, m2) = (materialize(&a, 1.0, 1e-3, e1, 0.25).unwrap(), materialize(&a, 1.0, 1e-3, e2, 0.25).unwrap());
        for j in 0..p {
            prop_assert_eq!(m1.b[j].to_bits(), (m1.sigma * a.base_u()[j]).to_bits());
            prop_assert_eq!(m2.b[j].to_bits(), (m2.sigma * a.base_u()[j]).to_bits());
            prop_assert_eq!(m1.b_prime[j].to_bits(), (m1.sigma_prime * a.base_u()[j]).to_bits());
        }
    }
}

#[test]
fn distinct_seeds_give_distinct_draws() {
    let a = NoiseDraw::from_seed(1, 8);
    let b = NoiseDraw::from_seed(2, 8);
    assert!(!a.same_draw(&b));
    assert_ne!(a.base_u(), b.base_u());
}

#[test]
fn invalid_inputs_are_domain_errors() {
    assert!(noise_sigma(1.0, 0.1, 0.0).is_err());
    assert!(noise_sigma(1.0, 1.0, 1.0).is_err());
    assert!(noise_sigma(-1.0, 0.1, 1.0).is_err());
    assert!(delta_coeff(1.0, -2.0).is_err());
}
