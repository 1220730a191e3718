//! Privacy-loss bookkeeping.
//!
//! The accountant is descriptive: algorithms fix their budgets up front and
//! never consult it. It composes recorded per-event losses (basic and CDP
//! composition, zCDP conversions) and evaluates the closed-form losses of
//! the sparse-vector family and PMWG.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::noise::NoiseFunction;
use crate::pmwg::budget_b;

/// An `(ε, δ)` pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PrivacyBudget {
    pub eps: f64,
    pub delta: f64,
}

impl PrivacyBudget {
    pub fn new(eps: f64, delta: f64) -> Result<Self> {
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(invalid(format!("eps must be nonnegative, got {eps}")));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(invalid(format!("delta must lie in [0,1), got {delta}")));
        }
        Ok(PrivacyBudget { eps, delta })
    }

    pub fn pure(eps: f64) -> Result<Self> {
        PrivacyBudget::new(eps, 0.0)
    }
}

/// Where a privacy event came from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EventLabel {
    pub module: &'static str,
    pub t: u64,
    pub j: u64,
}

impl fmt::Display for EventLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@({},{})", self.module, self.t, self.j)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LedgerEntry {
    pub label: EventLabel,
    pub eps: f64,
}

/// Append-only record of per-event ε values.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct PrivacyLedger {
    events: Vec<LedgerEntry>,
}

impl PrivacyLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_epsilons(module: &'static str, eps: &[f64]) -> Result<Self> {
        let mut ledger = PrivacyLedger::new();
        for (k, &e) in eps.iter().enumerate() {
            ledger.record(
                EventLabel {
                    module,
                    t: k as u64,
                    j: 0,
                },
                e,
            )?;
        }
        Ok(ledger)
    }

    pub fn record(&mut self, label: EventLabel, eps: f64) -> Result<()> {
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(invalid(format!("event eps must be nonnegative, got {eps}")));
        }
        self.events.push(LedgerEntry { label, eps });
        Ok(())
    }

    pub fn events(&self) -> &[LedgerEntry] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn epsilons(&self) -> impl Iterator<Item = f64> + '_ {
        self.events.iter().map(|e| e.eps)
    }

    fn sum_of_squares(&self) -> f64 {
        self.epsilons().map(|e| e * e).sum()
    }
}

/// Basic composition: `(Σ ε_i, 0)`.
pub fn basic_compose(ledger: &PrivacyLedger) -> PrivacyBudget {
    PrivacyBudget {
        eps: ledger.epsilons().sum(),
        delta: 0.0,
    }
}

/// Result of CDP composition.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CdpTotal {
    pub budget: PrivacyBudget,
    /// `2√((Σε_i²) ln(1/δ))`, an upper bound on `budget.eps` when
    /// `δ ≤ e^{-1}` and `Σε_i² ≤ 1`.
    pub simplified: f64,
    /// Whether the simplified bound's preconditions hold.
    pub simplified_applies: bool,
}

/// CDP composition of pure-DP events:
/// `ε = ½Σε_i² + √(2(Σε_i²) ln(1/δ))`.
pub fn cdp_compose(ledger: &PrivacyLedger, delta: f64) -> Result<CdpTotal> {
    check_delta(delta)?;
    let ssq = ledger.sum_of_squares();
    let log_inv = (1.0 / delta).ln();
    let eps = 0.5 * ssq + (2.0 * ssq * log_inv).sqrt();
    Ok(CdpTotal {
        budget: PrivacyBudget { eps, delta },
        simplified: 2.0 * (ssq * log_inv).sqrt(),
        simplified_applies: delta <= (-1f64).exp() && ssq <= 1.0,
    })
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid(format!("delta must lie in (0,1), got {delta}")));
    }
    Ok(())
}

/// An `ε`-DP mechanism is `½ε²`-zCDP.
pub fn zcdp_of_pure(eps: f64) -> Result<f64> {
    if !(eps >= 0.0) {
        return Err(invalid(format!("eps must be nonnegative, got {eps}")));
    }
    Ok(0.5 * eps * eps)
}

/// zCDP composes additively.
pub fn zcdp_compose(rhos: &[f64]) -> Result<f64> {
    if let Some(r) = rhos.iter().find(|r| !(**r >= 0.0)) {
        return Err(invalid(format!("rho must be nonnegative, got {r}")));
    }
    Ok(rhos.iter().sum())
}

/// `ρ`-zCDP implies `(ρ + 2√(ρ ln(1/δ)), δ)`-DP.
pub fn dp_of_zcdp(rho: f64, delta: f64) -> Result<PrivacyBudget> {
    if !(rho >= 0.0) {
        return Err(invalid(format!("rho must be nonnegative, got {rho}")));
    }
    check_delta(delta)?;
    Ok(PrivacyBudget {
        eps: rho + 2.0 * (rho * (1.0 / delta).ln()).sqrt(),
        delta,
    })
}

/// Above Threshold loss for a run starting at `t0`: `ξ_{t0}Δ_{t0}`.
pub fn atg_loss(xi: &NoiseFunction, t0: u64) -> f64 {
    xi.times_sensitivity(t0)
}

/// Numeric Above Threshold loss for a run from `t0` halting at `t_halt`:
/// `ξ_{t0}Δ_{t0} + ξ_{t'}Δ_{t'}/8`.
pub fn natg_loss(xi: &NoiseFunction, t0: u64, t_halt: u64) -> Result<f64> {
    if t_halt < t0 {
        return Err(invalid(format!("halt time {t_halt} precedes start {t0}")));
    }
    Ok(xi.times_sensitivity(t0) + xi.times_sensitivity(t_halt) / 8.0)
}

/// Numeric Sparse loss with `h_t` hard queries answered at time `t`:
/// `ξ_nΔ_n + (9/8) Σ_t h_t ξ_tΔ_t`.
pub fn nsg_ledger(xi: &NoiseFunction, n: u64, hard_counts: &BTreeMap<u64, u64>) -> Result<f64> {
    if let Some((&t, _)) = hard_counts.iter().find(|(&t, _)| t < n) {
        return Err(invalid(format!("hard query at time {t} precedes start {n}")));
    }
    let hard: f64 = hard_counts
        .iter()
        .map(|(&t, &h)| h as f64 * xi.times_sensitivity(t))
        .sum();
    Ok(xi.times_sensitivity(n) + 9.0 / 8.0 * hard)
}

/// Partial sum of the PMWG pure-DP loss up to `horizon`:
/// `(1 + 81 ln N/(2α²)) ξ_nΔ_n + (81/(2α²)) Σ_{t=n+1}^{horizon} b_t ξ_tΔ_t`.
pub fn pmwg_eps_bound(
    xi: &NoiseFunction,
    alpha: f64,
    universe: usize,
    n: u64,
    horizon: u64,
) -> Result<f64> {
    if horizon < n {
        return Err(invalid(format!("horizon {horizon} precedes start {n}")));
    }
    if !(alpha > 0.0) {
        return Err(invalid("alpha must be positive"));
    }
    let k = 81.0 / (2.0 * alpha * alpha);
    let head = (1.0 + k * (universe as f64).ln()) * xi.times_sensitivity(n);
    let mut tail = 0.0;
    for t in (n + 1)..=horizon {
        tail += budget_b(t, universe)? * xi.times_sensitivity(t);
    }
    Ok(head + k * tail)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ledger(eps: &[f64]) -> PrivacyLedger {
        PrivacyLedger::from_epsilons("test", eps).unwrap()
    }

    fn sqrt_t() -> NoiseFunction {
        NoiseFunction::new(1.0, 0.5).unwrap()
    }

    #[test]
    fn basic_composition() {
        assert_abs_diff_eq!(basic_compose(&ledger(&[0.1, 0.2, 0.3])).eps, 0.6, epsilon = 1e-12);
        assert_eq!(basic_compose(&ledger(&[])).eps, 0.0);
        assert_abs_diff_eq!(basic_compose(&ledger(&[0.01; 100])).eps, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn cdp_composition() {
        let delta = (-1f64).exp();
        let total = cdp_compose(&ledger(&[0.1, 0.1]), delta).unwrap();
        assert_abs_diff_eq!(total.budget.eps, 0.21, epsilon = 1e-12);
        assert_eq!(total.budget.delta, delta);
        assert!(total.simplified_applies);
        assert!(total.budget.eps <= total.simplified);
        assert_eq!(cdp_compose(&ledger(&[]), delta).unwrap().budget.eps, 0.0);
        assert!(cdp_compose(&ledger(&[0.1]), 0.0).is_err());
        assert!(cdp_compose(&ledger(&[0.1]), 1.0).is_err());
    }

    #[test]
    fn single_event_cdp_matches_zcdp_pipeline() {
        let delta = 1e-5;
        for eps0 in [0.01, 0.3, 1.0, 2.5] {
            let cdp = cdp_compose(&ledger(&[eps0]), delta).unwrap().budget.eps;
            let direct = 0.5 * eps0 * eps0 + eps0 * (2.0 * (1.0 / delta).ln()).sqrt();
            let via = dp_of_zcdp(zcdp_of_pure(eps0).unwrap(), delta).unwrap().eps;
            assert_abs_diff_eq!(cdp, direct, epsilon = 1e-12);
            assert_abs_diff_eq!(cdp, via, epsilon = 1e-12);
        }
    }

    #[test]
    fn zcdp_examples() {
        assert_abs_diff_eq!(zcdp_of_pure(0.2).unwrap(), 0.02, epsilon = 1e-15);
        assert_abs_diff_eq!(zcdp_compose(&[0.01, 0.01]).unwrap(), 0.02, epsilon = 1e-15);
        let b = dp_of_zcdp(0.02, (-1f64).exp()).unwrap();
        assert_abs_diff_eq!(b.eps, 0.302843, epsilon = 1e-6);
        assert!(zcdp_of_pure(-1.0).is_err());
        assert!(zcdp_compose(&[0.1, -0.1]).is_err());
        assert!(dp_of_zcdp(-0.1, 0.1).is_err());
    }

    #[test]
    fn sparse_ledgers() {
        let xi = sqrt_t();
        let mut h = BTreeMap::new();
        assert_abs_diff_eq!(nsg_ledger(&xi, 100, &h).unwrap(), 0.1, epsilon = 1e-12);
        h.insert(100, 2);
        assert_abs_diff_eq!(nsg_ledger(&xi, 100, &h).unwrap(), 0.325, epsilon = 1e-12);
        assert_abs_diff_eq!(natg_loss(&xi, 100, 400).unwrap(), 0.10625, epsilon = 1e-12);
        assert_abs_diff_eq!(atg_loss(&xi, 100), 0.1, epsilon = 1e-12);
        h.insert(50, 1);
        assert!(nsg_ledger(&xi, 100, &h).is_err());
        assert!(natg_loss(&xi, 100, 99).is_err());
    }

    #[test]
    fn pmwg_bound_degenerate_and_monotone() {
        let xi = NoiseFunction::new(0.3, 0.5).unwrap();
        assert_abs_diff_eq!(
            pmwg_eps_bound(&xi, 1.0, 1, 50, 50).unwrap(),
            xi.times_sensitivity(50),
            epsilon = 1e-15
        );
        let mut prev = 0.0;
        for horizon in (50..400).step_by(17) {
            let v = pmwg_eps_bound(&xi, 0.5, 8, 50, horizon).unwrap();
            assert!(v >= prev);
            prev = v;
        }
        assert!(pmwg_eps_bound(&xi, 0.5, 8, 50, 49).is_err());
    }

    #[test]
    fn pmwg_bound_stays_within_budget() {
        let xi = crate::noise::xi_pmwg(0.5, 100, 16, 1.0, 0.0, None).unwrap();
        let v = pmwg_eps_bound(&xi, 0.5, 16, 100, 1000).unwrap();
        let closed = 162.0 * xi.coefficient() * (16f64.ln() + 100f64.ln()) / (0.25 * 10.0);
        assert!(v <= closed, "{v} > {closed}");
        assert!(v <= 1.0, "{v}");
    }
}
