use std::collections::BTreeMap;

use growdp::accountant::{cdp_compose, dp_of_zcdp, nsg_ledger, zcdp_of_pure, PrivacyLedger};
use growdp::blackbox::BlackBoxContract;
use growdp::db::relative_entropy;
use growdp::harness::{adaptive_distinguisher, fmt_num};
use growdp::pmwg::{mw_update, uniform_update};
use growdp::schedulers::schedule_fixed;
use growdp::sparse::{SparseConfig, SparseState};
use growdp::{DatabaseStream, Histogram, LinearQuery, NoiseFunction, RandomSource, Universe};
use proptest::prelude::*;

fn on_simplex(h: &Histogram) -> bool {
    let w = h.weights();
    w.iter().all(|v| *v >= 0.0) && (w.iter().sum::<f64>() - 1.0).abs() <= 1e-9
}

fn positive_simplex(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1e-3f64..1.0, n).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    })
}

fn counts(max_types: usize) -> impl Strategy<Value = Vec<u64>> {
    (1..=max_types)
        .prop_flat_map(|n| prop::collection::vec(0u64..6, n))
        .prop_filter("nonempty database", |c| c.iter().sum::<u64>() > 0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn updates_stay_on_simplex(
        (y, r) in (2usize..8).prop_flat_map(|n| (positive_simplex(n), prop::collection::vec(0.0f64..1.0, n))),
        rate in 0.01f64..5.0,
        t in 1u64..50,
        grow in 0u64..50,
    ) {
        let y = Histogram::from_weights(y, t).unwrap();
        let m = mw_update(&y, &r, rate).unwrap();
        prop_assert!(on_simplex(&m));
        prop_assert!(m.weights().iter().all(|w| *w > 0.0));
        let u = uniform_update(&m, t, t + grow).unwrap();
        prop_assert!(on_simplex(&u));
        prop_assert!(u.weights().iter().all(|w| *w > 0.0));
        prop_assert_eq!(u.size(), t + grow);
    }

    #[test]
    fn one_entry_drift(c in counts(5), arrivals in prop::collection::vec(0usize..5, 1..20), mask in any::<u32>()) {
        let n_types = c.len();
        let arrivals: Vec<usize> = arrivals.into_iter().map(|a| a % n_types).collect();
        let stream = DatabaseStream::new(c, arrivals).unwrap();
        let weights: Vec<f64> = (0..n_types).map(|i| ((mask >> i) & 1) as f64).collect();
        let f = LinearQuery::new("f", weights).unwrap();
        let hs: Vec<Histogram> = stream.histograms().collect();
        for pair in hs.windows(2) {
            prop_assert!(on_simplex(&pair[1]));
            let d = (f.eval(&pair[1]).unwrap() - f.eval(&pair[0]).unwrap()).abs();
            prop_assert!(d <= 1.0 / pair[1].size() as f64 + 1e-12);
        }
    }

    #[test]
    fn relative_entropy_zero_iff_equal(c in counts(6), other in counts(6)) {
        let x = Histogram::from_counts(&c).unwrap();
        prop_assert!(relative_entropy(&x, &x).unwrap().abs() < 1e-12);
        if other.len() == c.len() {
            let y = Histogram::from_counts(&other.iter().map(|v| v + 1).collect::<Vec<_>>()).unwrap();
            let re = relative_entropy(&x, &y).unwrap();
            prop_assert!(re >= -1e-12);
            if x.total_variation(&y).unwrap() > 1e-6 {
                prop_assert!(re > 0.0);
            }
        }
    }

    #[test]
    fn distinguisher_attains_half_l1(x in counts(8), seed in any::<u64>()) {
        let xh = Histogram::from_counts(&x).unwrap();
        let n = x.len();
        let rng = RandomSource::seeded(seed);
        let raw: Vec<f64> = (0..n as u64).map(|i| 0.01 + rng.uniform(i, 0, growdp::Purpose::Other(1))).collect();
        let s: f64 = raw.iter().sum();
        let y = Histogram::from_weights(raw.into_iter().map(|v| v / s).collect(), xh.size()).unwrap();
        let f = adaptive_distinguisher(&xh, &y, "d").unwrap();
        let gap = f.eval(&xh).unwrap() - f.eval(&y).unwrap();
        let half_l1 = 0.5 * xh.weights().iter().zip(y.weights()).map(|(a, b)| (a - b).abs()).sum::<f64>();
        prop_assert!((gap - half_l1).abs() < 1e-12);
        for mask in 0u32..(1 << n) {
            let g = LinearQuery::new("g", (0..n).map(|i| ((mask >> i) & 1) as f64).collect()).unwrap();
            prop_assert!(g.eval(&xh).unwrap() - g.eval(&y).unwrap() <= gap + 1e-12);
        }
    }

    #[test]
    fn cdp_matches_zcdp_pipeline(eps0 in 1e-4f64..0.5, k in 1usize..200, delta in 1e-9f64..0.3) {
        let ledger = PrivacyLedger::from_epsilons("prop", &vec![eps0; k]).unwrap();
        let cdp = cdp_compose(&ledger, delta).unwrap();
        let rho = k as f64 * zcdp_of_pure(eps0).unwrap();
        let z = dp_of_zcdp(rho, delta).unwrap();
        prop_assert!((cdp.budget.eps - z.eps).abs() <= 1e-12 * z.eps.max(1.0));
        if cdp.simplified_applies {
            prop_assert!(cdp.budget.eps <= cdp.simplified + 1e-12);
        }
    }

    #[test]
    fn nsg_ledger_additive(
        a in prop::collection::btree_map(100u64..200, 0u64..4, 0..6),
        b in prop::collection::btree_map(200u64..300, 0u64..4, 0..6),
        c in 0.1f64..3.0,
        p in 0.0f64..0.9,
    ) {
        let xi = NoiseFunction::new(c, p).unwrap();
        let base = nsg_ledger(&xi, 100, &BTreeMap::new()).unwrap();
        let la = nsg_ledger(&xi, 100, &a).unwrap();
        let lb = nsg_ledger(&xi, 100, &b).unwrap();
        let mut joint = a.clone();
        joint.extend(b.iter().map(|(k, v)| (*k, *v)));
        let lj = nsg_ledger(&xi, 100, &joint).unwrap();
        prop_assert!((lj - (la + lb - base)).abs() < 1e-12);
    }

    #[test]
    fn nsg_report_never_decreases(values in prop::collection::vec((0u64..3, 0.0f64..1.0), 1..60), seed in any::<u64>()) {
        let config = SparseConfig::new(0.5, NoiseFunction::new(1.0, 0.5).unwrap(), 50).unwrap();
        let mut s = SparseState::nsg(config, RandomSource::seeded(seed));
        let mut t = 50;
        let mut last = s.privacy_report();
        for (dt, v) in values {
            t += dt;
            s.step(t, v).unwrap();
            let now = s.privacy_report();
            prop_assert!(now >= last);
            prop_assert!((now - nsg_ledger(&NoiseFunction::new(1.0, 0.5).unwrap(), 50, s.hard_counts()).unwrap()).abs() < 1e-15);
            last = now;
        }
    }

    #[test]
    fn epoch_starts_grow(n in 1u64..500, eps in 0.1f64..1.0) {
        let contract = BlackBoxContract::new(1.0, 0.5).unwrap();
        if let Ok(s) = schedule_fixed(eps, 0.0, 0.1, n, contract) {
            let epochs = s.epochs(20 * n);
            prop_assert_eq!(epochs[0].start, n);
            for w in epochs.windows(2) {
                prop_assert!(w[1].start > w[0].start);
            }
            let spent: f64 = (0..10_000).map(|i| s.eps_i(i)).sum();
            prop_assert!(spent <= eps + 1e-12);
        }
    }

    #[test]
    fn fmt_num_keeps_twelve_digits(v in -1e6f64..1e6) {
        let parsed: f64 = fmt_num(v).parse().unwrap();
        prop_assert!((parsed - v).abs() <= 1e-11 * v.abs().max(1e-5));
    }

    #[test]
    fn same_path_same_noise(seed in any::<u64>(), t in 0u64..1000, j in 0u64..1000) {
        let a = RandomSource::seeded(seed);
        let b = RandomSource::seeded(seed);
        let p = growdp::Purpose::QueryNoise;
        prop_assert_eq!(a.laplace(2.0, t, j, p).to_bits(), b.laplace(2.0, t, j, p).to_bits());
    }
}

#[test]
fn universe_rejects_zero() {
    assert!(Universe::new(0).is_err());
}
