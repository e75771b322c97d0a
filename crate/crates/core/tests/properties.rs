use bb84_flaws::entropy::{balance, h2, h2_inv_low, Probability};
use bb84_flaws::keyrate::{rate, rate_delta_balanced, rate_tagging, rate_tagging_simple, FlawModel};
use bb84_flaws::quantum::{
    fidelity_root, hermitian_eig, identity, kron, purify, random, sup_norm, trace_norm,
};
use bb84_flaws::wcp::photon_stats;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn p(x: f64) -> Probability {
    Probability::new(x).unwrap()
}

proptest! {
    #[test]
    fn h2_is_concave(a in 0.0..=1.0f64, b in 0.0..=1.0f64) {
        let mid = h2(p(0.5 * (a + b)));
        prop_assert!(mid >= 0.5 * (h2(p(a)) + h2(p(b))) - 1e-15);
    }

    #[test]
    fn h2_inverse_round_trips(y in 0.0..=1.0f64) {
        let x = h2_inv_low(y).unwrap();
        prop_assert!(x.value() <= 0.5);
        prop_assert!((h2(x) - y).abs() < 1e-9, "y={y} x={}", x.value());
    }

    #[test]
    fn balance_is_monotone(a in 0.0..=0.5f64, b in 0.0..=0.5f64) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(balance(p(lo)).unwrap() <= balance(p(hi)).unwrap() + 1e-12);
    }

    #[test]
    fn tagging_dominates_simple(delta in 0.0..0.3f64, tag in 0.0..0.95f64) {
        let (full, simple) = (rate_tagging(p(delta), p(tag)), rate_tagging_simple(p(delta), p(tag)));
        if full.feasible && simple.feasible {
            prop_assert!(full.raw >= simple.raw);
        }
    }

    #[test]
    fn balanced_rate_decreases(delta in 0.0..0.2f64, big in 0.0..0.3f64, step in 0.0..0.05f64) {
        let r = rate_delta_balanced(p(delta), p(big)).unwrap().raw;
        prop_assert!(rate_delta_balanced(p(delta + step), p(big)).unwrap().raw <= r + 1e-15);
        prop_assert!(rate_delta_balanced(p(delta), p(big + step)).unwrap().raw <= r + 1e-15);
    }

    #[test]
    fn misalignment_rate_decreases(delta in 0.0..0.1f64, theta in 0.0..0.7f64, step in 0.0..0.08f64) {
        let at = |t: f64| rate(&FlawModel::Misalignment { delta, theta: t }).unwrap().clamped;
        prop_assert!(at((theta + step).min(std::f64::consts::FRAC_PI_4)) <= at(theta) + 1e-15);
    }

    #[test]
    fn poisson_probabilities_sum_to_one(mu in 1e-8..20.0f64) {
        let s = photon_stats(mu).unwrap();
        prop_assert!(s.p0 >= 0.0 && s.p1 >= 0.0 && s.p_m >= 0.0);
        prop_assert!((s.p0 + s.p1 + s.p_m - 1.0).abs() < 1e-14);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn fidelity_symmetric_and_fuchs_van_de_graaf(seed in any::<u64>(), d in 2usize..=4, r0 in 1usize..=4, r1 in 1usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rho0 = random::density(d, r0.min(d), &mut rng);
        let rho1 = random::density(d, r1.min(d), &mut rng);
        let f01 = fidelity_root(&rho0, &rho1).unwrap();
        let f10 = fidelity_root(&rho1, &rho0).unwrap();
        prop_assert!((f01 - f10).abs() < 1e-8);
        let half_tr = 0.5 * trace_norm(&(rho0.matrix() - rho1.matrix())).unwrap();
        prop_assert!(1.0 - f01 <= half_tr + 1e-9);
        prop_assert!(half_tr <= (1.0 - f01 * f01).max(0.0).sqrt() + 1e-7);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn uhlmann_bounds_random_purifications(seed in any::<u64>(), d in 2usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rho0 = random::density(d, d, &mut rng);
        let rho1 = random::density(d, d, &mut rng);
        let f = fidelity_root(&rho0, &rho1).unwrap();
        let a = purify(&rho0, d).unwrap();
        let b = purify(&rho1, d).unwrap();
        let mut best = 0.0_f64;
        for _ in 0..100 {
            let v = kron(&identity(d), &random::unitary(d, &mut rng)).unwrap();
            let overlap = a.inner(&b.apply(&v).unwrap()).norm();
            prop_assert!(overlap <= f + 1e-10);
            best = best.max(overlap);
        }
        prop_assert!(best > 0.0);
    }

    #[test]
    fn sup_below_trace_and_multiplicative(seed in any::<u64>(), m in 1usize..=4, n in 1usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random::ginibre(m, n, &mut rng);
        let b = random::ginibre(n, m, &mut rng);
        let (sa, sb) = (sup_norm(&a).unwrap(), sup_norm(&b).unwrap());
        prop_assert!(sa <= trace_norm(&a).unwrap() * (1.0 + 1e-12));
        let sab = sup_norm(&kron(&a, &b).unwrap()).unwrap();
        prop_assert!((sab - sa * sb).abs() <= 1e-9 * sa * sb.max(1.0));
    }

    #[test]
    fn eigendecomposition_reconstructs(seed in any::<u64>(), d in 1usize..=64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = random::hermitian(d, &mut rng);
        let e = hermitian_eig(&h).unwrap();
        let back = e.map(|x| x);
        let scale = h.norm().max(1.0);
        prop_assert!((back - &h).norm() <= 1e-10 * scale);
        let gram = e.vectors.adjoint() * &e.vectors;
        prop_assert!((gram - identity(d)).norm() <= 1e-10);
        prop_assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
    }
}
