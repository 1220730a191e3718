//! Private multiplicative weights for growing databases.
//!
//! The public histogram `y` starts uniform. When the database grows from
//! `t'` to `t`, `y` is mixed with the uniform distribution with weight
//! `(t−t')/t`. Each query `f` is checked for hardness by feeding
//! `f(x) − f(y)` and `f(y) − f(x)` to a shared Numeric Sparse instance with
//! threshold `2α/3`. Easy queries are answered with `f(y)`. Hard queries get
//! a noisy answer and trigger a multiplicative-weights step of rate `α/6`,
//! subject to the cumulative hard-query cap
//! `B_t = (36/α²)(ln N + Σ_{τ=n+1}^t b_τ)`.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::accountant::PrivacyBudget;
use crate::db::{Histogram, LinearQuery, QueryEvent, Universe};
use crate::error::{invalid, Error, Result};
use crate::noise::{xi_pmwg, NoiseFunction, RandomSource};
use crate::sparse::{SparseAnswer, SparseConfig, SparseState};

/// Weights below this are clamped after a multiplicative step.
pub const WEIGHT_FLOOR: f64 = 1e-300;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PmwgConfig {
    pub alpha: f64,
    pub budget: PrivacyBudget,
    pub n: u64,
    pub universe: Universe,
    /// Noise exponent; `None` selects the default `ξ_t ∝ √t` calibration.
    pub p: Option<f64>,
}

impl PmwgConfig {
    pub fn new(
        alpha: f64,
        eps: f64,
        delta: f64,
        n: u64,
        universe: usize,
        p: Option<f64>,
    ) -> Result<Self> {
        let config = PmwgConfig {
            alpha,
            budget: PrivacyBudget::new(eps, delta)?,
            n,
            universe: Universe::new(universe)?,
            p,
        };
        config.noise_function()?;
        Ok(config)
    }

    pub fn noise_function(&self) -> Result<NoiseFunction> {
        xi_pmwg(
            self.alpha,
            self.n,
            self.universe.size(),
            self.budget.eps,
            self.budget.delta,
            self.p,
        )
    }

    /// Hardness threshold `2α/3`.
    pub fn threshold(&self) -> f64 {
        2.0 * self.alpha / 3.0
    }

    /// Multiplicative-weights learning rate `α/6`.
    pub fn rate(&self) -> f64 {
        self.alpha / 6.0
    }

    fn cap_scale(&self) -> f64 {
        36.0 / (self.alpha * self.alpha)
    }
}

/// `b_t = ln N/t + ln(t−1)/t + ln(t/(t−1))`.
pub fn budget_b(t: u64, universe: usize) -> Result<f64> {
    budget_b_with_log(t, (universe as f64).ln())
}

/// [`budget_b`] with `ln N` supplied directly.
pub fn budget_b_with_log(t: u64, ln_universe: f64) -> Result<f64> {
    if t <= 1 {
        return Err(invalid(format!("b_t needs t > 1, got {t}")));
    }
    let tf = t as f64;
    let prev = tf - 1.0;
    Ok(ln_universe / tf + prev.ln() / tf + (tf / prev).ln())
}

/// Cumulative hard-query cap `B_t`.
pub fn hard_budget_cap(config: &PmwgConfig, t: u64) -> Result<f64> {
    if t < config.n {
        return Err(invalid(format!("time {t} precedes start {}", config.n)));
    }
    let mut sum = (config.universe.size() as f64).ln();
    for tau in (config.n + 1)..=t {
        sum += budget_b(tau, config.universe.size())?;
    }
    Ok(config.cap_scale() * sum)
}

/// Admissible cumulative query count up to time `t`: `Σ_{τ=n}^t κ·exp(E_τ)`.
///
/// The exponent depends on the calibration:
///
/// | calibration | `E_τ` |
/// |---|---|
/// | δ = 0, default | `α³ε√(nτ) / (8262 ln Nn)` |
/// | δ = 0, exponent p | `α³(1−p)²ε n^{1−p} τ^p / (6048 ln Nn)` |
/// | δ > 0 | `α²(1−p)ε n^{1−p} τ^p / (1152 √ln Nn √ln(1/δ))`, p = ½ by default |
pub fn theorem_query_budget(config: &PmwgConfig, t: u64, kappa: f64) -> Result<f64> {
    if t < config.n {
        return Err(invalid(format!("time {t} precedes start {}", config.n)));
    }
    (config.n..=t).map(|tau| query_budget_term(config, tau, kappa)).sum()
}

/// The summand `κ·exp(E_τ)` of [`theorem_query_budget`].
pub fn query_budget_term(config: &PmwgConfig, tau: u64, kappa: f64) -> Result<f64> {
    if !(kappa >= 1.0) {
        return Err(invalid(format!("kappa must be at least 1, got {kappa}")));
    }
    let a = config.alpha;
    let eps = config.budget.eps;
    let delta = config.budget.delta;
    let nf = config.n as f64;
    let tau = tau as f64;
    let ln_nn = (config.universe.size() as f64 * nf).ln();
    let exponent = match (delta > 0.0, config.p) {
        (false, None) => a.powi(3) * eps * (nf * tau).sqrt() / (8262.0 * ln_nn),
        (false, Some(p)) => {
            a.powi(3) * (1.0 - p).powi(2) * eps * nf.powf(1.0 - p) * tau.powf(p) / (6048.0 * ln_nn)
        }
        (true, p) => {
            let p = p.unwrap_or(0.5);
            a * a * (1.0 - p) * eps * nf.powf(1.0 - p) * tau.powf(p)
                / (1152.0 * ln_nn.sqrt() * (1.0 / delta).ln().sqrt())
        }
    };
    Ok(kappa * exponent.exp())
}

/// `y ← (t'/t)·y + ((t−t')/t)·uniform`.
pub fn uniform_update(y: &Histogram, t_prev: u64, t_now: u64) -> Result<Histogram> {
    if t_now < t_prev {
        return Err(Error::TimeRegression(format!("{t_now} < {t_prev}")));
    }
    if t_now == t_prev {
        return Ok(y.clone());
    }
    if t_prev == 0 {
        return Err(invalid("uniform update needs t' ≥ 1"));
    }
    let keep = t_prev as f64 / t_now as f64;
    let fresh = (1.0 - keep) / y.weights().len() as f64;
    let weights = y.weights().iter().map(|w| keep * w + fresh).collect();
    Ok(Histogram::with_weights(weights, t_now))
}

/// `y^i ← exp(−rate·r^i)·y^i`, then normalize.
pub fn mw_update(y: &Histogram, r: &[f64], rate: f64) -> Result<Histogram> {
    if r.len() != y.weights().len() {
        return Err(Error::DimensionMismatch {
            expected: y.weights().len(),
            actual: r.len(),
        });
    }
    if !(rate > 0.0) {
        return Err(invalid(format!("rate must be positive, got {rate}")));
    }
    let mut weights: Vec<f64> = y
        .weights()
        .iter()
        .zip(r)
        .map(|(w, ri)| w * (-rate * ri).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w = (*w / total).max(WEIGHT_FLOOR);
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(Histogram::with_weights(weights, y.size()))
}

/// Update direction for a hard query: `f` if the released answer is below
/// `f(y)`, else `1 − f`.
pub fn update_direction(query: &LinearQuery, released: f64, public_answer: f64) -> Vec<f64> {
    if released < public_answer {
        query.weights().to_vec()
    } else {
        query.weights().iter().map(|w| 1.0 - w).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum PmwgAnswer {
    /// Answered from the public histogram.
    Easy(f64),
    /// Noisy answer that triggered an update.
    Hard(f64),
    /// Hard-query budget exhausted; the instance stops answering.
    Bottom,
}

impl PmwgAnswer {
    pub fn value(&self) -> Option<f64> {
        match self {
            PmwgAnswer::Easy(v) | PmwgAnswer::Hard(v) => Some(*v),
            PmwgAnswer::Bottom => None,
        }
    }

    pub fn is_hard(&self) -> bool {
        matches!(self, PmwgAnswer::Hard(_))
    }
}

/// One released answer, as seen by the analyst.
#[derive(Clone, Debug, PartialEq)]
pub struct TranscriptEntry {
    pub t: u64,
    pub j: u64,
    pub query: LinearQuery,
    pub answer: PmwgAnswer,
}

#[derive(Clone, Debug)]
pub struct Pmwg {
    config: PmwgConfig,
    xi: NoiseFunction,
    nsg: SparseState,
    y: Histogram,
    t: u64,
    last_j: Option<u64>,
    /// `ln N + Σ_{τ=n+1}^t b_τ`.
    cap_sum: f64,
    hard: BTreeMap<u64, u64>,
    hard_total: u64,
    halted: bool,
}

impl Pmwg {
    pub fn new(config: PmwgConfig, rng: RandomSource) -> Result<Self> {
        let xi = config.noise_function()?;
        let nsg = SparseState::nsg(SparseConfig::new(config.threshold(), xi, config.n)?, rng);
        Ok(Pmwg {
            y: Histogram::uniform(config.universe, config.n),
            t: config.n,
            last_j: None,
            cap_sum: (config.universe.size() as f64).ln(),
            hard: BTreeMap::new(),
            hard_total: 0,
            halted: false,
            xi,
            nsg,
            config,
        })
    }

    pub fn config(&self) -> &PmwgConfig {
        &self.config
    }

    pub fn noise_function(&self) -> NoiseFunction {
        self.xi
    }

    pub fn public_histogram(&self) -> &Histogram {
        &self.y
    }

    pub fn time(&self) -> u64 {
        self.t
    }

    pub fn is_halted(&self) -> bool {
        self.halted
    }

    /// Hard queries answered by PMWG, per time.
    pub fn hard_counts(&self) -> &BTreeMap<u64, u64> {
        &self.hard
    }

    pub fn hard_total(&self) -> u64 {
        self.hard_total
    }

    /// `B_t` at the current time.
    pub fn budget_cap(&self) -> f64 {
        self.config.cap_scale() * self.cap_sum
    }

    /// The underlying Numeric Sparse instance.
    pub fn sparse(&self) -> &SparseState {
        &self.nsg
    }

    /// Privacy spent so far according to the Numeric Sparse ledger.
    pub fn privacy_report(&self) -> f64 {
        self.nsg.privacy_report()
    }

    /// Moves the clock to `t`, applying the uniform update.
    pub fn advance(&mut self, t: u64) -> Result<()> {
        if t < self.t {
            return Err(Error::TimeRegression(format!("time {t} after {}", self.t)));
        }
        if t == self.t {
            return Ok(());
        }
        for tau in (self.t + 1)..=t {
            self.cap_sum += budget_b(tau, self.config.universe.size())?;
        }
        self.y = uniform_update(&self.y, self.t, t)?;
        self.t = t;
        self.last_j = None;
        Ok(())
    }

    /// Answers `event` against the true database `x` (which must have size
    /// `event.t`).
    pub fn answer(&mut self, event: &QueryEvent, x: &Histogram) -> Result<PmwgAnswer> {
        if event.t < self.t || (event.t == self.t && self.last_j.is_some_and(|j| event.j <= j)) {
            return Err(Error::TimeRegression(format!(
                "event ({},{}) out of order",
                event.t, event.j
            )));
        }
        if x.size() != event.t {
            return Err(invalid(format!(
                "database has size {} at time {}",
                x.size(),
                event.t
            )));
        }
        self.advance(event.t)?;
        self.last_j = Some(event.j);
        if self.halted {
            return Ok(PmwgAnswer::Bottom);
        }

        let t = event.t;
        let f = &event.query;
        let fx = f.eval(x)?;
        let fy = f.eval(&self.y)?;
        let up = self.nsg.step(t, fx - fy)?;
        let down = self.nsg.step(t, fy - fx)?;
        let released = match (up, down) {
            (SparseAnswer::Numeric(a), _) => fy + a,
            (_, SparseAnswer::Numeric(a)) => fy - a,
            _ => return Ok(PmwgAnswer::Easy(fy)),
        };

        *self.hard.entry(t).or_insert(0) += 1;
        self.hard_total += 1;
        if self.hard_total as f64 > self.budget_cap() {
            self.halted = true;
            return Ok(PmwgAnswer::Bottom);
        }
        let r = update_direction(f, released, fy);
        self.y = mw_update(&self.y, &r, self.config.rate())?;
        Ok(PmwgAnswer::Hard(released))
    }
}

/// Recomputes the public histogram after each transcript entry from the
/// released answers alone.
pub fn replay_public_histograms(
    config: &PmwgConfig,
    transcript: &[TranscriptEntry],
) -> Result<Vec<Histogram>> {
    let mut y = Histogram::uniform(config.universe, config.n);
    let mut t = config.n;
    let mut out = Vec::with_capacity(transcript.len());
    for entry in transcript {
        if entry.t != t {
            y = uniform_update(&y, t, entry.t)?;
            t = entry.t;
        }
        if let PmwgAnswer::Hard(a) = entry.answer {
            let fy = entry.query.eval(&y)?;
            y = mw_update(&y, &update_direction(&entry.query, a, fy), config.rate())?;
        }
        out.push(y.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn hist(w: &[f64], t: u64) -> Histogram {
        Histogram::from_weights(w.to_vec(), t).unwrap()
    }

    #[test]
    fn budget_b_examples() {
        assert_abs_diff_eq!(budget_b_with_log(2, 1.0).unwrap(), 1.193147, epsilon = 1e-6);
        assert_abs_diff_eq!(budget_b(101, 16).unwrap(), 0.082998, epsilon = 1e-6);
        assert!(budget_b(1, 16).is_err());
        let mut prev = budget_b(3, 3).unwrap();
        for t in 4..2000 {
            let b = budget_b(t, 3).unwrap();
            assert!(b < prev);
            prev = b;
        }
    }

    #[test]
    fn uniform_update_examples() {
        let y = hist(&[0.3, 0.7], 5);
        assert_eq!(uniform_update(&y, 5, 5).unwrap().weights(), y.weights());
        let y = hist(&[1.0 - 1e-12, 1e-12], 1);
        let z = uniform_update(&y, 1, 2).unwrap();
        assert_abs_diff_eq!(z.weights()[0], 0.75, epsilon = 1e-9);
        assert_abs_diff_eq!(z.weights()[1], 0.25, epsilon = 1e-9);
        let u = Histogram::uniform(Universe::new(4).unwrap(), 3);
        let z = uniform_update(&u, 3, 11).unwrap();
        for w in z.weights() {
            assert_abs_diff_eq!(*w, 0.25, epsilon = 1e-15);
        }
        assert!(uniform_update(&u, 4, 3).is_err());
    }

    #[test]
    fn mw_update_examples() {
        let y = hist(&[0.2, 0.3, 0.5], 4);
        let same = mw_update(&y, &[0.0; 3], 1.0).unwrap();
        let shifted = mw_update(&y, &[0.7; 3], 1.0).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(same.weights()[i], y.weights()[i], epsilon = 1e-15);
            assert_abs_diff_eq!(shifted.weights()[i], y.weights()[i], epsilon = 1e-15);
        }
        let z = mw_update(&hist(&[0.5, 0.5], 2), &[1.0, 0.0], 1.0).unwrap();
        assert_abs_diff_eq!(z.weights()[0], 0.268941, epsilon = 1e-6);
        assert_abs_diff_eq!(z.weights()[1], 0.731059, epsilon = 1e-6);
    }

    #[test]
    fn query_budget_single_term() {
        let cfg = PmwgConfig::new(0.5, 1.0, 0.0, 100, 16, None).unwrap();
        let v = theorem_query_budget(&cfg, 100, 1.0).unwrap();
        assert_abs_diff_eq!(v, 1.000205, epsilon = 1e-6);
        let later = theorem_query_budget(&cfg, 150, 1.0).unwrap();
        assert!(later > v);
        assert!(theorem_query_budget(&cfg, 100, 0.5).is_err());
    }

    fn noiseless(alpha: f64) -> Pmwg {
        let cfg = PmwgConfig::new(alpha, 1.0, 0.0, 20, 5, None).unwrap();
        Pmwg::new(cfg, RandomSource::noiseless()).unwrap()
    }

    /// `f = e_1` against a uniform public histogram on five types, so
    /// `f(y) = 0.2`, and a size-20 database with `f(x) = fx`.
    fn instance(fx: f64) -> (Histogram, QueryEvent) {
        let first = (fx * 20.0).round() as u64;
        let x = Histogram::from_counts(&[first, 20 - first, 0, 0, 0]).unwrap();
        let q = LinearQuery::new("f", vec![1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        (x, QueryEvent::new(20, 1, q))
    }

    #[test]
    fn noiseless_hard_query() {
        let mut m = noiseless(0.3);
        let (x, ev) = instance(0.5);
        let ans = m.answer(&ev, &x).unwrap();
        match ans {
            PmwgAnswer::Hard(a) => assert_abs_diff_eq!(a, 0.5, epsilon = 1e-12),
            other => panic!("expected hard, got {other:?}"),
        }
        // Direction 1 − f moves mass toward the first type, raising f(y).
        assert!(ev.query.eval(m.public_histogram()).unwrap() > 0.2);
        assert_eq!(m.hard_total(), 1);
    }

    #[test]
    fn noiseless_easy_queries() {
        let mut m = noiseless(0.3);
        let (x, ev) = instance(0.25);
        let a = m.answer(&ev, &x).unwrap();
        assert!(!a.is_hard());
        assert_abs_diff_eq!(a.value().unwrap(), 0.2, epsilon = 1e-12);
        let (x, mut ev) = instance(0.2);
        ev.j = 2;
        let a = m.answer(&ev, &x).unwrap().value().unwrap();
        assert_abs_diff_eq!(a, 0.2, epsilon = 1e-12);
        assert_eq!(m.hard_total(), 0);
    }

    #[test]
    fn out_of_order_events_rejected() {
        let mut m = noiseless(0.3);
        let (x, ev) = instance(0.25);
        m.answer(&ev, &x).unwrap();
        assert!(matches!(m.answer(&ev, &x), Err(Error::TimeRegression(_))));
    }
}
