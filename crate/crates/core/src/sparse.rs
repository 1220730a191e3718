//! Sparse vector on a growing database.
//!
//! Three state machines share one implementation:
//!
//!  - ATG (Above Threshold): answers ⊥ until the first query whose noisy
//!    value clears the noisy threshold, then outputs ⊤ and halts.
//!  - NATG (Numeric Above Threshold): as ATG, but releases a noisy numeric
//!    answer on halting.
//!  - NSG (Numeric Sparse): restarts NATG after every halt and never stops.
//!
//! The machines are data-agnostic. Callers pass the true answer
//! `f_{t,i}(x_t)` of a sensitivity-`1/t` query and the machine adds noise
//! scaled by `ξ_t`:
//!
//!  - threshold `T̂ = T + Lap(2/ξ_t)`, drawn on the first query of each run
//!    and again whenever the run sees its first query at a new time;
//!  - comparison noise `Lap(4/ξ_t)` per query, test `value + ν ≥ T̂`;
//!  - numeric answers `value + Lap(8/ξ_t)`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::accountant::{atg_loss, natg_loss, nsg_ledger};
use crate::error::{invalid, Error, Result};
use crate::noise::{NoiseFunction, Purpose, RandomSource};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SparseMode {
    Atg,
    Natg,
    Nsg,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SparseConfig {
    pub threshold: f64,
    pub xi: NoiseFunction,
    /// Size of the database when the machine starts.
    pub n: u64,
}

impl SparseConfig {
    pub fn new(threshold: f64, xi: NoiseFunction, n: u64) -> Result<Self> {
        if !threshold.is_finite() {
            return Err(invalid("threshold must be finite"));
        }
        if n == 0 {
            return Err(invalid("start size n must be positive"));
        }
        Ok(SparseConfig { threshold, xi, n })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum SparseAnswer {
    /// Below threshold.
    Below,
    /// Above threshold (ATG only).
    Above,
    /// Noisy numeric answer to an above-threshold query.
    Numeric(f64),
}

impl SparseAnswer {
    pub fn is_above(&self) -> bool {
        !matches!(self, SparseAnswer::Below)
    }

    pub fn kind(&self) -> &'static str {
        match self {
            SparseAnswer::Below => "below",
            SparseAnswer::Above => "above",
            SparseAnswer::Numeric(_) => "numeric",
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            SparseAnswer::Numeric(v) => Some(*v),
            _ => None,
        }
    }
}

/// A threshold draw: which run drew it and at which time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ThresholdDraw {
    pub run: u64,
    pub t: u64,
}

/// One sparse-vector state machine.
#[derive(Clone, Debug)]
pub struct SparseState {
    mode: SparseMode,
    config: SparseConfig,
    rng: RandomSource,
    /// Time of the most recent query.
    t: Option<u64>,
    /// Queries seen so far at time `t`.
    index_in_t: u64,
    run: u64,
    /// `(T̂, time drawn)` of the live run; `None` before its first query.
    noisy_threshold: Option<(f64, u64)>,
    run_start: Option<u64>,
    halted_at: Option<u64>,
    hard: BTreeMap<u64, u64>,
    draws: Vec<ThresholdDraw>,
}

impl SparseState {
    pub fn new(mode: SparseMode, config: SparseConfig, rng: RandomSource) -> Self {
        SparseState {
            mode,
            config,
            rng,
            t: None,
            index_in_t: 0,
            run: 0,
            noisy_threshold: None,
            run_start: None,
            halted_at: None,
            hard: BTreeMap::new(),
            draws: Vec::new(),
        }
    }

    pub fn atg(config: SparseConfig, rng: RandomSource) -> Self {
        Self::new(SparseMode::Atg, config, rng)
    }

    pub fn natg(config: SparseConfig, rng: RandomSource) -> Self {
        Self::new(SparseMode::Natg, config, rng)
    }

    pub fn nsg(config: SparseConfig, rng: RandomSource) -> Self {
        Self::new(SparseMode::Nsg, config, rng)
    }

    pub fn mode(&self) -> SparseMode {
        self.mode
    }

    pub fn config(&self) -> &SparseConfig {
        &self.config
    }

    pub fn is_halted(&self) -> bool {
        self.halted_at.is_some()
    }

    /// Current noisy threshold of the live run, if drawn.
    pub fn noisy_threshold(&self) -> Option<f64> {
        self.noisy_threshold.map(|(v, _)| v)
    }

    /// Above-threshold answers per time `t`.
    pub fn hard_counts(&self) -> &BTreeMap<u64, u64> {
        &self.hard
    }

    pub fn hard_total(&self) -> u64 {
        self.hard.values().sum()
    }

    /// Every threshold draw so far, in order.
    pub fn threshold_draws(&self) -> &[ThresholdDraw] {
        &self.draws
    }

    /// Processes the next query, whose true answer is `value`, at time `t`.
    pub fn step(&mut self, t: u64, value: f64) -> Result<SparseAnswer> {
        if self.halted_at.is_some() {
            return Err(Error::Halted);
        }
        if t < self.config.n {
            return Err(Error::TimeRegression(format!(
                "query at time {t} precedes start {}",
                self.config.n
            )));
        }
        match self.t {
            Some(prev) if t < prev => {
                return Err(Error::TimeRegression(format!("time {t} after {prev}")));
            }
            Some(prev) if t == prev => self.index_in_t += 1,
            _ => {
                self.t = Some(t);
                self.index_in_t = 1;
            }
        }
        let i = self.index_in_t;
        let xi_t = self.config.xi.at(t);

        if self.run_start.is_none() {
            self.run_start = Some(t);
        }
        let threshold = match self.noisy_threshold {
            Some((v, drawn)) if drawn == t => v,
            _ => {
                let v = self.config.threshold
                    + self.rng.laplace(2.0 / xi_t, t, self.run, Purpose::Threshold);
                self.noisy_threshold = Some((v, t));
                self.draws.push(ThresholdDraw { run: self.run, t });
                v
            }
        };

        let nu = self.rng.laplace(4.0 / xi_t, t, i, Purpose::QueryNoise);
        if value + nu < threshold {
            return Ok(SparseAnswer::Below);
        }

        *self.hard.entry(t).or_insert(0) += 1;
        let answer = match self.mode {
            SparseMode::Atg => SparseAnswer::Above,
            _ => SparseAnswer::Numeric(
                value + self.rng.laplace(8.0 / xi_t, t, i, Purpose::NumericNoise),
            ),
        };
        match self.mode {
            SparseMode::Nsg => {
                self.run += 1;
                self.noisy_threshold = None;
                self.run_start = None;
            }
            _ => self.halted_at = Some(t),
        }
        Ok(answer)
    }

    /// Privacy loss spent so far.
    ///
    /// NSG reports `ξ_nΔ_n + (9/8)Σ_t h_t ξ_tΔ_t`; ATG reports `ξ_nΔ_n`;
    /// NATG adds `ξ_{t'}Δ_{t'}/8` once it has halted at `t'`.
    pub fn privacy_report(&self) -> f64 {
        let xi = &self.config.xi;
        let n = self.config.n;
        match self.mode {
            SparseMode::Nsg => nsg_ledger(xi, n, &self.hard).expect("hard counts start at n"),
            SparseMode::Atg => atg_loss(xi, n),
            SparseMode::Natg => match self.halted_at {
                Some(t) => natg_loss(xi, n, t).expect("halt time is at least n"),
                None => atg_loss(xi, n),
            },
        }
    }
}

/// Finite-horizon failure probability of NSG at accuracy `α`:
/// `exp(−αξ_n/8) + Σ_t (ℓ_t + 2h_t) exp(−αξ_t/8)`.
///
/// Values above 1 are valid but vacuous.
pub fn accuracy_beta(
    xi: &NoiseFunction,
    alpha: f64,
    n: u64,
    query_counts: &BTreeMap<u64, u64>,
    hard_counts: &BTreeMap<u64, u64>,
) -> Result<f64> {
    check_alpha(alpha)?;
    let tail = |t: u64| (-alpha * xi.at(t) / 8.0).exp();
    let mut beta = tail(n);
    for (&t, &l) in query_counts {
        beta += l as f64 * tail(t);
    }
    for (&t, &h) in hard_counts {
        beta += 2.0 * h as f64 * tail(t);
    }
    Ok(beta)
}

/// Failure probability when at most `k_t` queries arrive at each time:
/// `exp(−αξ_n/8) + 3Σ_t k_t exp(−αξ_t/8)`.
pub fn accuracy_beta_budget(
    xi: &NoiseFunction,
    alpha: f64,
    n: u64,
    budget: &BTreeMap<u64, u64>,
) -> Result<f64> {
    check_alpha(alpha)?;
    let tail = |t: u64| (-alpha * xi.at(t) / 8.0).exp();
    Ok(tail(n) + 3.0 * budget.iter().map(|(&t, &k)| k as f64 * tail(t)).sum::<f64>())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(invalid(format!("alpha must be positive, got {alpha}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn config(threshold: f64) -> SparseConfig {
        SparseConfig::new(threshold, NoiseFunction::new(1.0, 0.5).unwrap(), 1).unwrap()
    }

    #[test]
    fn noiseless_atg_trace() {
        let mut s = SparseState::atg(config(0.5), RandomSource::noiseless());
        assert_eq!(s.step(1, 0.3).unwrap(), SparseAnswer::Below);
        assert_eq!(s.step(1, 0.4).unwrap(), SparseAnswer::Below);
        assert_eq!(s.step(1, 0.6).unwrap(), SparseAnswer::Above);
        assert!(s.is_halted());
        assert!(matches!(s.step(2, 0.1), Err(Error::Halted)));
    }

    #[test]
    fn noiseless_nsg_trace() {
        let mut s = SparseState::nsg(config(0.2), RandomSource::noiseless());
        let answers: Vec<_> = [0.1, 0.3, 0.1, 0.25]
            .iter()
            .map(|&v| s.step(1, v).unwrap())
            .collect();
        assert_eq!(
            answers,
            vec![
                SparseAnswer::Below,
                SparseAnswer::Numeric(0.3),
                SparseAnswer::Below,
                SparseAnswer::Numeric(0.25)
            ]
        );
        assert_eq!(s.hard_total(), 2);
        assert!(!s.is_halted());
    }

    #[test]
    fn natg_tie_is_above() {
        let mut s = SparseState::natg(config(0.4), RandomSource::noiseless());
        assert_eq!(s.step(3, 0.4).unwrap(), SparseAnswer::Numeric(0.4));
        assert!(s.is_halted());
    }

    #[test]
    fn time_regression_rejected() {
        let mut s = SparseState::nsg(config(0.9), RandomSource::seeded(1));
        s.step(5, 0.0).unwrap();
        assert!(matches!(s.step(4, 0.0), Err(Error::TimeRegression(_))));
        let mut early = SparseState::nsg(
            SparseConfig::new(0.9, NoiseFunction::new(1.0, 0.5).unwrap(), 10).unwrap(),
            RandomSource::seeded(1),
        );
        assert!(early.step(9, 0.0).is_err());
    }

    #[test]
    fn nsg_report() {
        let xi = NoiseFunction::new(1.0, 0.5).unwrap();
        let cfg = SparseConfig::new(0.0, xi, 100).unwrap();
        let mut s = SparseState::nsg(cfg, RandomSource::noiseless());
        assert_abs_diff_eq!(s.privacy_report(), 0.1, epsilon = 1e-12);
        s.step(100, 1.0).unwrap();
        s.step(100, 1.0).unwrap();
        assert_abs_diff_eq!(s.privacy_report(), 0.325, epsilon = 1e-12);
    }

    #[test]
    fn threshold_redrawn_per_run_and_time() {
        let mut s = SparseState::nsg(config(0.5), RandomSource::noiseless());
        s.step(1, 0.0).unwrap();
        s.step(1, 0.0).unwrap();
        s.step(2, 0.0).unwrap();
        s.step(2, 0.9).unwrap();
        s.step(2, 0.0).unwrap();
        let draws: Vec<_> = s.threshold_draws().iter().map(|d| (d.run, d.t)).collect();
        assert_eq!(draws, vec![(0, 1), (0, 2), (1, 2)]);
    }

    #[test]
    fn beta_examples() {
        let xi = NoiseFunction::new(1.0, 0.5).unwrap();
        let empty = BTreeMap::new();
        assert_abs_diff_eq!(
            accuracy_beta(&xi, 1.0, 100, &empty, &empty).unwrap(),
            (-1.25f64).exp(),
            epsilon = 1e-15
        );
        let l = BTreeMap::from([(100, 10)]);
        let h = BTreeMap::from([(100, 1)]);
        let beta = accuracy_beta(&xi, 1.0, 100, &l, &h).unwrap();
        assert_abs_diff_eq!(beta, 13.0 * (-1.25f64).exp(), epsilon = 1e-12);
        assert_abs_diff_eq!(beta, 3.7242, epsilon = 5e-4);
        // Leading term equals u when αξ_n = 8 ln(1/u).
        let u: f64 = 0.03;
        let c = 8.0 * (1.0 / u).ln() / 10.0;
        let xi = NoiseFunction::new(c, 0.5).unwrap();
        assert_abs_diff_eq!(
            accuracy_beta(&xi, 1.0, 100, &empty, &empty).unwrap(),
            u,
            epsilon = 1e-12
        );
    }
}
