//! Runtime invariant checks, runnable from the command line.

use rand::Rng;
use serde::Serialize;

use crate::accountant::{cdp_compose, nsg_ledger, PrivacyLedger};
use crate::blackbox::BlackBoxContract;
use crate::db::{relative_entropy, Histogram, Universe};
use crate::error::Result;
use crate::harness::workload::adaptive_distinguisher;
use crate::noise::{NoiseFunction, Purpose, RandomSource};
use crate::pmwg::{uniform_update, Pmwg, PmwgAnswer, PmwgConfig};
use crate::schedulers::{schedule_fixed, schedule_improver};
use crate::QueryEvent;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// All count vectors of length `parts` summing to `total`.
pub fn compositions(parts: usize, total: u64) -> Vec<Vec<u64>> {
    fn go(pos: usize, left: u64, cur: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
        if pos + 1 == cur.len() {
            cur[pos] = left;
            out.push(cur.clone());
            return;
        }
        for c in 0..=left {
            cur[pos] = c;
            go(pos + 1, left - c, cur, out);
        }
    }
    let mut out = Vec::new();
    go(0, total, &mut vec![0; parts], &mut out);
    out
}

/// Outcome of the exhaustive drift check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DriftCheck {
    pub cases: u64,
    pub violations: u64,
    /// Largest `|x_τ(f) − x_t(f)| − (τ−t)/τ` seen.
    pub worst_slack: f64,
}

/// For every universe size up to `max_universe`, every database of size
/// `t ≤ max_size`, every later size `τ ≤ max_size`, every multiset of
/// `τ − t` arrivals and every 0/1 query: `|x_τ(f) − x_t(f)| ≤ γ/(1+γ)` with
/// `γ = τ/t − 1`.
pub fn drift_check(max_universe: usize, max_size: u64) -> DriftCheck {
    let mut result = DriftCheck {
        cases: 0,
        violations: 0,
        worst_slack: f64::NEG_INFINITY,
    };
    for n_types in 1..=max_universe {
        let queries: Vec<Vec<f64>> = (0..1u32 << n_types)
            .map(|mask| (0..n_types).map(|i| ((mask >> i) & 1) as f64).collect())
            .collect();
        for t in 1..=max_size {
            for base in compositions(n_types, t) {
                for tau in (t + 1)..=max_size {
                    let gamma = tau as f64 / t as f64 - 1.0;
                    let bound = gamma / (1.0 + gamma);
                    for added in compositions(n_types, tau - t) {
                        for f in &queries {
                            let before: f64 = f.iter().zip(&base).map(|(w, c)| w * *c as f64).sum::<f64>() / t as f64;
                            let after: f64 = f
                                .iter()
                                .zip(base.iter().zip(&added))
                                .map(|(w, (c, d))| w * (c + d) as f64)
                                .sum::<f64>()
                                / tau as f64;
                            let slack = (after - before).abs() - bound;
                            result.cases += 1;
                            result.worst_slack = result.worst_slack.max(slack);
                            if slack > 1e-12 {
                                result.violations += 1;
                            }
                        }
                    }
                }
            }
        }
    }
    result
}

/// Outcome of the randomized entropy-increase check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EntropyCheck {
    pub cases: u64,
    pub violations: u64,
    pub worst_slack: f64,
}

/// Draws `instances` random exact `x` (size ≤ 20, `N ≤ 5`) and positive
/// `y`, and checks for every arrival `i` that relative entropy grows by at
/// most `ln N/(t+1) + ln t/(t+1) + ln((t+1)/t)` under one arrival and one
/// uniform update.
pub fn entropy_increase_check(instances: u64, seed: u64) -> Result<EntropyCheck> {
    let root = RandomSource::seeded(seed);
    let mut result = EntropyCheck {
        cases: 0,
        violations: 0,
        worst_slack: f64::NEG_INFINITY,
    };
    for k in 0..instances {
        let mut rng = root.rng(k, 0, Purpose::Other(42));
        let n_types = rng.gen_range(1..=5usize);
        let t = rng.gen_range(1..=20u64);
        let mut counts = vec![0u64; n_types];
        for _ in 0..t {
            counts[rng.gen_range(0..n_types)] += 1;
        }
        let x = Histogram::from_counts(&counts)?;
        let raw: Vec<f64> = (0..n_types).map(|_| rng.gen_range(1e-3..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let y = Histogram::from_weights(raw.iter().map(|w| w / total).collect(), t)?;
        let before = relative_entropy(&x, &y)?;
        let y_next = uniform_update(&y, t, t + 1)?;
        let tf = t as f64;
        let bound = (n_types as f64).ln() / (tf + 1.0) + tf.ln() / (tf + 1.0) + ((tf + 1.0) / tf).ln();
        for i in 0..n_types {
            let x_next = x.add_entry(i)?;
            let slack = relative_entropy(&x_next, &y_next)? - before - bound;
            result.cases += 1;
            result.worst_slack = result.worst_slack.max(slack);
            if slack > 1e-9 {
                result.violations += 1;
            }
        }
    }
    Ok(result)
}

fn check(name: &'static str, passed: bool, detail: impl Into<String>) -> CheckResult {
    CheckResult {
        name,
        passed,
        detail: detail.into(),
    }
}

/// Noiseless PMWG against the adaptive distinguisher on a random stream:
/// no ⊥ and every answer within α.
fn pmwg_soundness(seed: u64) -> Result<CheckResult> {
    let config = PmwgConfig::new(0.4, 1.0, 0.0, 30, 8, None)?;
    let spec = crate::harness::stream::StreamSpec::Iid {
        horizon: 90,
        weights: Some(vec![8.0, 4.0, 2.0, 1.0, 1.0, 1.0, 1.0, 1.0]),
    };
    let stream = crate::harness::stream::generate_stream(&spec, 30, 8, &RandomSource::seeded(seed))?;
    let mut m = Pmwg::new(config, RandomSource::noiseless())?;
    let mut worst = 0.0f64;
    let mut bottoms = 0;
    for (t, x) in (30u64..).zip(stream.histograms()) {
        for j in 1..=10 {
            m.advance(t)?;
            let f = adaptive_distinguisher(&x, m.public_histogram(), "d")?;
            let truth = f.eval(&x)?;
            match m.answer(&QueryEvent::new(t, j, f), &x)? {
                PmwgAnswer::Bottom => bottoms += 1,
                a => worst = worst.max((a.value().expect("answered") - truth).abs()),
            }
        }
    }
    Ok(check(
        "pmwg-noiseless-soundness",
        bottoms == 0 && worst <= 0.4 + 1e-9,
        format!("bottoms={bottoms} worst_error={worst:.6} hard={}", m.hard_total()),
    ))
}

/// Runs every check.
pub fn validate_all(seed: u64) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();

    let ledger = PrivacyLedger::from_epsilons("validate", &[0.1, 0.1])?;
    let cdp = cdp_compose(&ledger, (-1f64).exp())?.budget.eps;
    out.push(check("cdp-example", (cdp - 0.21).abs() < 1e-9, format!("{cdp}")));

    let xi = NoiseFunction::new(1.0, 0.5)?;
    let nsg = nsg_ledger(&xi, 100, &[(100, 2)].into_iter().collect())?;
    out.push(check("nsg-ledger-example", (nsg - 0.325).abs() < 1e-9, format!("{nsg}")));

    let sched = schedule_fixed(1.0, 0.0, 0.1, 1000, BlackBoxContract::new(1.0, 1.0)?)?;
    let eps_sum: f64 = (0..=10_000).map(|i| sched.eps_i(i)).sum();
    let beta_sum: f64 = (0..=2_000).map(|i| sched.beta_i(i)).sum();
    out.push(check(
        "scheduler-series",
        (1.0 - 1e-6..=1.0 + 1e-12).contains(&eps_sum) && (beta_sum - 0.1).abs() < 1e-12,
        format!("sum_eps={eps_sum} sum_beta={beta_sum}"),
    ));

    let imp = schedule_improver(0.5, (-1f64).exp(), 0.1, 100, 0.1, BlackBoxContract::new(1.0, 1.0)?)?;
    let ledger = PrivacyLedger::from_epsilons("validate", &(100..=100_000).map(|t| imp.eps_t(t)).collect::<Vec<_>>())?;
    let total = cdp_compose(&ledger, (-1f64).exp())?.budget.eps;
    out.push(check("improver-cdp-total", total <= 0.5, format!("{total}")));

    let ent = entropy_increase_check(2_000, seed)?;
    out.push(check(
        "entropy-increase",
        ent.violations == 0,
        format!("cases={} worst_slack={:.3e}", ent.cases, ent.worst_slack),
    ));

    let drift = drift_check(3, 8);
    out.push(check(
        "epoch-drift",
        drift.violations == 0,
        format!("cases={} worst_slack={:.3e}", drift.cases, drift.worst_slack),
    ));

    out.push(pmwg_soundness(seed)?);

    let rng = RandomSource::seeded(seed);
    let draws = 200_000u64;
    let tail = (0..draws)
        .filter(|&k| rng.laplace(1.0, k, 0, Purpose::Other(7)).abs() > 2.0)
        .count() as f64
        / draws as f64;
    let expected = (-2f64).exp();
    out.push(check(
        "laplace-tail",
        (tail / expected - 1.0).abs() < 0.1,
        format!("empirical={tail:.5} expected={expected:.5}"),
    ));

    let u = Universe::new(3)?;
    let y = Histogram::uniform(u, 5);
    let z = uniform_update(&y, 5, 17)?;
    let tv = y.total_variation(&z)?;
    out.push(check("uniform-fixed-point", tv < 1e-15, format!("tv={tv:e}")));

    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tight_drift_case() {
        // x_2 = (1, 0), one arrival of type 2, τ = 3: error 1/3 = γ/(1+γ), γ = ½.
        let before = 1.0;
        let after = 2.0 / 3.0;
        let gamma: f64 = 0.5;
        assert!(((before - after) - gamma / (1.0 + gamma)).abs() < 1e-15);
        let d = drift_check(2, 3);
        assert_eq!(d.violations, 0);
        assert!(d.worst_slack.abs() < 1e-12);
    }

    #[test]
    fn entropy_worked_instance() {
        let x = Histogram::from_counts(&[1, 0]).unwrap();
        let y = Histogram::from_weights(vec![0.5, 0.5], 1).unwrap();
        let lhs = relative_entropy(&x.add_entry(1).unwrap(), &uniform_update(&y, 1, 2).unwrap()).unwrap()
            - relative_entropy(&x, &y).unwrap();
        assert!((lhs + 2f64.ln()).abs() < 1e-12);
        let rhs = 2f64.ln() / 2.0 + 0.0 + 2f64.ln();
        assert!((rhs - 1.039721).abs() < 1e-6);
    }

    #[test]
    fn suite_passes() {
        for c in validate_all(1).unwrap() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
