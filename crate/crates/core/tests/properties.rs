use std::sync::Arc;

use fredholm_core::allocation::{allocate_from_proxies, cost, minimum_budget, phi};
use fredholm_core::confidence::{entropy_h, v_star, PsiFunction};
use fredholm_core::problem::{natural_distance, registry};
use fredholm_core::{DomainSpec, MetricKind};
use proptest::prelude::*;

fn decaying_proxies() -> impl Strategy<Value = Vec<f64>> {
    (1usize..8, 0.05f64..0.9, 0.1f64..2.0).prop_map(|(n, beta, c)| (1..=n).map(|m| c * beta.powi(m as i32)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weights_spend_the_budget(proxies in decaying_proxies(), n in 100u64..1_000_000) {
        let a = allocate_from_proxies(&proxies, n).unwrap();
        let spent: f64 = a.theta.iter().enumerate().map(|(i, th)| (i + 1) as f64 * th).sum();
        prop_assert!((spent - 1.0).abs() < 1e-12);
        prop_assert!(a.cost_b >= n);
        prop_assert!(a.cost_b <= n + minimum_budget(a.n_terms));
        prop_assert!(a.counts.iter().all(|&c| c >= 1));
    }

    #[test]
    fn lagrange_stationarity(proxies in decaying_proxies()) {
        // n(m)² · m / r_m is the same for every term at the continuous optimum.
        let a = allocate_from_proxies(&proxies, 1_000_000).unwrap();
        let k: Vec<f64> = a.theta.iter().zip(&proxies).enumerate()
            .map(|(i, (th, r))| th * th * (i + 1) as f64 / r).collect();
        for v in &k {
            prop_assert!((v - k[0]).abs() <= 1e-9 * k[0]);
        }
    }

    #[test]
    fn moving_replicates_does_not_help(proxies in decaying_proxies(), n in 10_000u64..1_000_000, shift in 1u64..20) {
        prop_assume!(proxies.len() >= 2);
        let a = allocate_from_proxies(&proxies, n).unwrap();
        let base = a.phi_predicted;
        // Trade `shift` replicates of term 1 for replicates of term 2 at equal or lower cost.
        let mut c = a.counts.clone();
        if c[1] > shift {
            c[1] -= shift;
            c[0] += 2 * shift;
            prop_assert_eq!(cost(&c), a.cost_b);
            prop_assert!(phi(&proxies, &c) >= base * (1.0 - 1e-3));
        }
        let mut c = a.counts.clone();
        if c[0] > 2 * shift {
            c[0] -= 2 * shift;
            c[1] += shift;
            prop_assert!(phi(&proxies, &c) >= base * (1.0 - 1e-3));
        }
    }

    #[test]
    fn v_star_is_below_every_candidate(x in 0.0f64..50.0, y in 0.001f64..1.0, beta in 0.1f64..2.0) {
        let psi = PsiFunction::power(beta).unwrap();
        let v = v_star(&psi, x);
        prop_assert!(v <= x * y + psi.eval(1.0 / y).ln() + 1e-9);
    }

    #[test]
    fn entropy_non_increasing(e1 in 1e-4f64..2.0, e2 in 1e-4f64..2.0, alpha in 0.2f64..1.0, c in 0.1f64..3.0) {
        let d = DomainSpec::new(vec![(0.0, 1.0), (-1.0, 2.0)], 5).unwrap();
        let m = MetricKind::Holder { alpha, c };
        let (lo, hi) = if e1 < e2 { (e1, e2) } else { (e2, e1) };
        prop_assert!(entropy_h(&d, &m, lo).unwrap() >= entropy_h(&d, &m, hi).unwrap());
        let lp = MetricKind::LogPower { gamma: 1.0 + alpha, c };
        prop_assert!(entropy_h(&d, &lp, lo).unwrap() >= entropy_h(&d, &lp, hi).unwrap());
    }

    #[test]
    fn natural_distance_axioms(t in 0.0f64..1.0, s in 0.0f64..1.0, u in 0.0f64..1.0) {
        let spec = registry::separable_poly(&[0.5, 1.0, -0.3], &[0.0, 1.0], &[1.0], (0.0, 1.0), 11).unwrap();
        let d = |a: f64, b: f64| natural_distance(&spec, &[a], &[b]);
        prop_assert_eq!(d(t, t), 0.0);
        prop_assert!(d(t, s) >= 0.0);
        prop_assert!((d(t, s) - d(s, t)).abs() < 1e-15);
        prop_assert!(d(t, u) <= d(t, s) + d(s, u) + 1e-12);
        // The kernel increment is controlled by the envelope.
        for x in [0.1, 0.5, 0.9] {
            let dk = ((spec.kernel)(&[t], &[x]) - (spec.kernel)(&[s], &[x])).abs();
            prop_assert!(dk <= (spec.envelope_r)(&[x]) * d(t, s) + 1e-12);
        }
    }
}

#[test]
fn psi_analytic_accepts_closures() {
    let f = Arc::new(|p: f64| p.ln() + 1.0);
    let psi = PsiFunction::analytic(1.0, 100.0, move |p| f(p)).unwrap();
    assert!(psi.is_valid());
}
