//! Running a static mechanism on a growing database.
//!
//! [`EpochSchedule`] reruns the mechanism whenever the database has grown by
//! a factor `1 + γ`, giving roughly constant accuracy over time.
//! [`ImproverSchedule`] reruns it at every step with a slowly shrinking
//! budget, so accuracy improves as the database grows. ERMG is the latter
//! applied to grid ERM.

use serde::Serialize;

use crate::accountant::{EventLabel, PrivacyLedger};
use crate::blackbox::{Answerer, BlackBoxContract, ErmProblem, GridErm, MechanismParams, StaticMechanism};
use crate::db::{DatabaseStream, Histogram, QueryEvent};
use crate::error::{invalid, Error, Result};
use crate::noise::RandomSource;

/// Relative slack used when rounding `(1+γ)^i n` up to an integer.
const CEIL_TOL: f64 = 1e-9;

fn ceil_tolerant(v: f64) -> u64 {
    let r = v.round();
    if (v - r).abs() <= CEIL_TOL * v.abs().max(1.0) {
        r as u64
    } else {
        v.ceil() as u64
    }
}

fn check_common(eps: f64, delta: f64, beta: f64, n: u64) -> Result<()> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(invalid(format!("eps must lie in (0,1], got {eps}")));
    }
    if !(0.0..1.0).contains(&delta) {
        return Err(invalid(format!("delta must lie in [0,1), got {delta}")));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(invalid(format!("beta must lie in (0,1), got {beta}")));
    }
    if n == 0 {
        return Err(invalid("start size n must be positive"));
    }
    Ok(())
}

/// One rerun of the mechanism.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Epoch {
    /// Index whose parameters the run uses (the last of any merged indices).
    pub index: u64,
    /// All schedule indices starting at this time.
    pub merged: Vec<u64>,
    pub start: u64,
    pub eps: f64,
    /// `Σ ε_i` over the merged indices.
    pub eps_spent: f64,
    pub beta: f64,
    pub alpha: f64,
}

/// Epoch schedule with `t_i = ⌈(1+γ)^i n⌉`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochSchedule {
    pub eps: f64,
    pub delta: f64,
    pub beta: f64,
    pub n: u64,
    pub contract: BlackBoxContract,
    pub gamma: f64,
}

/// Builds the epoch schedule for a `(p, g)` black box.
///
/// `γ = g^{1/(2p+1)}·(ln(1/β)/(εn))^{p/(2p+1)}` for `δ = 0`; with `δ > 0`
/// the denominators become `1.5p + 1`.
pub fn schedule_fixed(
    eps: f64,
    delta: f64,
    beta: f64,
    n: u64,
    contract: BlackBoxContract,
) -> Result<EpochSchedule> {
    check_common(eps, delta, beta, n)?;
    if delta > 0.0 && eps >= 1.0 {
        return Err(invalid("eps must be below 1 when delta > 0"));
    }
    let p = contract.p;
    let denom = if delta > 0.0 { 1.5 * p + 1.0 } else { 2.0 * p + 1.0 };
    let base = (1.0 / beta).ln() / (eps * n as f64);
    let gamma = contract.g.powf(1.0 / denom) * base.powf(p / denom);
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(invalid(format!(
            "gamma = {gamma} is outside (0,1); the database is too small for this contract"
        )));
    }
    Ok(EpochSchedule {
        eps,
        delta,
        beta,
        n,
        contract,
        gamma,
    })
}

impl EpochSchedule {
    pub fn eps_i(&self, i: u64) -> f64 {
        let g = self.gamma;
        let k = (i + 1) as f64;
        if self.delta > 0.0 {
            g.powf(1.5) * k / (1.0 + g).powf(i as f64 + 1.5) * self.eps
                / (3.0 * (1.0 / self.delta).ln().sqrt())
        } else {
            g * g * k / (1.0 + g).powf(i as f64 + 2.0) * self.eps
        }
    }

    /// `(β/(1+β))^{i+1}`.
    pub fn beta_i(&self, i: u64) -> f64 {
        (self.beta / (1.0 + self.beta)).powf(i as f64 + 1.0)
    }

    /// `g·(ln(1/β_i)/(ε_i(1+γ)^i n))^p`.
    pub fn alpha_i(&self, i: u64) -> f64 {
        let size = (1.0 + self.gamma).powf(i as f64) * self.n as f64;
        self.contract.alpha(self.eps_i(i), self.beta_i(i), size)
    }

    pub fn start(&self, i: u64) -> u64 {
        ceil_tolerant((1.0 + self.gamma).powf(i as f64) * self.n as f64)
    }

    /// Drift bound `γ/(1+γ)` between an epoch start and any later time in
    /// the epoch.
    pub fn drift(&self) -> f64 {
        self.gamma / (1.0 + self.gamma)
    }

    /// Epochs starting at or before `horizon`, with coinciding starts
    /// merged.
    pub fn epochs(&self, horizon: u64) -> Vec<Epoch> {
        let mut out: Vec<Epoch> = Vec::new();
        let mut i = 0;
        loop {
            let start = self.start(i);
            if start > horizon {
                break;
            }
            let eps = self.eps_i(i);
            match out.last_mut() {
                Some(last) if last.start == start => {
                    last.index = i;
                    last.merged.push(i);
                    last.eps = eps;
                    last.eps_spent += eps;
                    last.beta = self.beta_i(i);
                    last.alpha = self.alpha_i(i);
                }
                _ => out.push(Epoch {
                    index: i,
                    merged: vec![i],
                    start,
                    eps,
                    eps_spent: eps,
                    beta: self.beta_i(i),
                    alpha: self.alpha_i(i),
                }),
            }
            i += 1;
        }
        out
    }
}

/// Per-step schedule `ε_t = √c/(3√ln(1/δ))·ε/t^{1/2+c}`, `β_t = β/(2t²)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ImproverSchedule {
    pub eps: f64,
    pub delta: f64,
    pub beta: f64,
    pub n: u64,
    pub c: f64,
    pub contract: BlackBoxContract,
}

pub const DEFAULT_IMPROVER_C: f64 = 0.1;

pub fn schedule_improver(
    eps: f64,
    delta: f64,
    beta: f64,
    n: u64,
    c: f64,
    contract: BlackBoxContract,
) -> Result<ImproverSchedule> {
    check_common(eps, delta, beta, n)?;
    if delta == 0.0 {
        return Err(invalid("the improving schedule needs delta > 0"));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(invalid(format!("c must be positive, got {c}")));
    }
    Ok(ImproverSchedule {
        eps,
        delta,
        beta,
        n,
        c,
        contract,
    })
}

impl ImproverSchedule {
    fn log_inv_delta(&self) -> f64 {
        (1.0 / self.delta).ln()
    }

    pub fn eps_t(&self, t: u64) -> f64 {
        self.c.sqrt() / (3.0 * self.log_inv_delta().sqrt()) * self.eps
            / (t as f64).powf(0.5 + self.c)
    }

    pub fn beta_t(&self, t: u64) -> f64 {
        self.beta / (2.0 * (t as f64).powi(2))
    }

    /// Accuracy the mechanism is asked for at time `t`:
    /// `g·(1/(ε_t t))^p·ln^{p″} t·ln^{p′}(1/β_t)`.
    pub fn alpha_t(&self, t: u64) -> f64 {
        self.contract
            .alpha_extended(self.eps_t(t), self.beta_t(t), t as f64)
    }

    /// Reported envelope `g·ln^{p′}(1/β)·(√ln(1/δ)/(√c·ε·t^{1/2−2c}))^p`.
    pub fn alpha_envelope(&self, t: u64) -> f64 {
        let p = self.contract.p;
        self.contract.g
            * (1.0 / self.beta).ln().powf(self.contract.p_beta())
            * (self.log_inv_delta().sqrt()
                / (self.c.sqrt() * self.eps * (t as f64).powf(0.5 - 2.0 * self.c)))
            .powf(p)
    }
}

/// One answered query.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScheduledAnswer {
    pub t: u64,
    pub j: u64,
    pub query_id: String,
    pub truth: f64,
    pub released: f64,
    pub abs_error: f64,
    /// Epoch index (fixed schedule) or time of the last rerun (improver).
    pub epoch: u64,
    pub eps_spent_cum: f64,
    pub alpha_promised: f64,
}

#[derive(Clone, Debug)]
pub struct ScheduledRun {
    pub answers: Vec<ScheduledAnswer>,
    pub ledger: PrivacyLedger,
    pub mechanism_calls: u64,
}

/// Running privacy total: basic composition for `δ = 0`, CDP otherwise.
struct Spend {
    delta: f64,
    sum: f64,
    sum_sq: f64,
}

impl Spend {
    fn new(delta: f64) -> Self {
        Spend {
            delta,
            sum: 0.0,
            sum_sq: 0.0,
        }
    }

    fn add(&mut self, eps: f64) {
        self.sum += eps;
        self.sum_sq += eps * eps;
    }

    fn total(&self) -> f64 {
        if self.delta > 0.0 {
            0.5 * self.sum_sq + (2.0 * self.sum_sq * (1.0 / self.delta).ln()).sqrt()
        } else {
            self.sum
        }
    }
}

fn check_events(stream: &DatabaseStream, events: &[QueryEvent]) -> Result<()> {
    for w in events.windows(2) {
        if (w[1].t, w[1].j) <= (w[0].t, w[0].j) {
            return Err(Error::TimeRegression(format!(
                "event ({},{}) after ({},{})",
                w[1].t, w[1].j, w[0].t, w[0].j
            )));
        }
    }
    if let Some(e) = events.first() {
        if e.t < stream.start() {
            return Err(invalid(format!("query at time {} precedes the stream", e.t)));
        }
    }
    if let Some(e) = events.last() {
        if e.t > stream.horizon() {
            return Err(invalid(format!("query at time {} is past the stream horizon", e.t)));
        }
    }
    Ok(())
}

/// Runs the epoch schedule over the stream, answering `events` (sorted by
/// `(t, j)`) from the latest mechanism output.
///
/// Epoch `i` draws from `rng.derive(i)`.
pub fn run_fixed<M>(
    schedule: &EpochSchedule,
    mechanism: &M,
    stream: &DatabaseStream,
    events: &[QueryEvent],
    rng: &RandomSource,
) -> Result<ScheduledRun>
where
    M: StaticMechanism,
    M::Output: Answerer,
{
    if stream.start() != schedule.n {
        return Err(invalid("stream and schedule start sizes differ"));
    }
    check_events(stream, events)?;
    let epochs = schedule.epochs(stream.horizon());
    let mut ledger = PrivacyLedger::new();
    let mut spend = Spend::new(schedule.delta);
    let mut answers = Vec::with_capacity(events.len());
    let mut pending = events.iter().peekable();
    let mut calls = 0;

    for (k, epoch) in epochs.iter().enumerate() {
        let end = epochs.get(k + 1).map_or(stream.horizon() + 1, |e| e.start);
        let x = stream.histogram_at(epoch.start)?;
        let params = MechanismParams {
            eps: epoch.eps,
            alpha: epoch.alpha,
            beta: epoch.beta,
            epoch: epoch.index,
        };
        let output = mechanism.run(&x, &params, &rng.derive(epoch.index))?;
        calls += 1;
        for &i in &epoch.merged {
            let eps = schedule.eps_i(i);
            ledger.record(
                EventLabel {
                    module: "scheduler",
                    t: epoch.start,
                    j: i,
                },
                eps,
            )?;
            spend.add(eps);
        }
        let promised = epoch.alpha + schedule.drift();

        let mut current: Option<(u64, Histogram)> = None;
        while let Some(ev) = pending.next_if(|e| e.t < end) {
            let x_t = match &current {
                Some((t, h)) if *t == ev.t => h.clone(),
                _ => {
                    let h = stream.histogram_at(ev.t)?;
                    current = Some((ev.t, h.clone()));
                    h
                }
            };
            let truth = ev.query.eval(&x_t)?;
            let released = output.answer(&ev.query)?;
            answers.push(ScheduledAnswer {
                t: ev.t,
                j: ev.j,
                query_id: ev.query.id().to_string(),
                truth,
                released,
                abs_error: (released - truth).abs(),
                epoch: epoch.index,
                eps_spent_cum: spend.total(),
                alpha_promised: promised,
            });
        }
    }
    Ok(ScheduledRun {
        answers,
        ledger,
        mechanism_calls: calls,
    })
}

/// One per-step rerun of the improving schedule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ImproverStep {
    pub t: u64,
    pub eps: f64,
    pub beta: f64,
    pub alpha: f64,
    /// CDP-composed spend after this step.
    pub eps_spent_cum: f64,
}

/// Reruns the mechanism at every `t` from `n` to `horizon`, handing each
/// output to `visit`. Step `t` draws from `rng.derive(t)`.
pub fn improver_releases<M, F>(
    schedule: &ImproverSchedule,
    mechanism: &M,
    stream: &DatabaseStream,
    horizon: u64,
    rng: &RandomSource,
    mut visit: F,
) -> Result<PrivacyLedger>
where
    M: StaticMechanism,
    F: FnMut(&ImproverStep, &M::Output, &Histogram) -> Result<()>,
{
    if stream.start() != schedule.n {
        return Err(invalid("stream and schedule start sizes differ"));
    }
    if horizon > stream.horizon() {
        return Err(invalid(format!(
            "horizon {horizon} is past the stream's last time {}",
            stream.horizon()
        )));
    }
    let mut ledger = PrivacyLedger::new();
    let mut spend = Spend::new(schedule.delta);
    for (t, x) in (schedule.n..=horizon).zip(stream.histograms()) {
        let step = ImproverStep {
            t,
            eps: schedule.eps_t(t),
            beta: schedule.beta_t(t),
            alpha: schedule.alpha_t(t),
            eps_spent_cum: 0.0,
        };
        let params = MechanismParams {
            eps: step.eps,
            alpha: step.alpha,
            beta: step.beta,
            epoch: t,
        };
        let output = mechanism.run(&x, &params, &rng.derive(t))?;
        ledger.record(
            EventLabel {
                module: "improver",
                t,
                j: 0,
            },
            step.eps,
        )?;
        spend.add(step.eps);
        let step = ImproverStep {
            eps_spent_cum: spend.total(),
            ..step
        };
        visit(&step, &output, &x)?;
    }
    Ok(ledger)
}

/// Runs the improving schedule up to the stream horizon and answers
/// `events` from the output of the same step.
pub fn run_improver<M>(
    schedule: &ImproverSchedule,
    mechanism: &M,
    stream: &DatabaseStream,
    events: &[QueryEvent],
    rng: &RandomSource,
) -> Result<ScheduledRun>
where
    M: StaticMechanism,
    M::Output: Answerer,
{
    check_events(stream, events)?;
    let mut answers = Vec::with_capacity(events.len());
    let mut pending = events.iter().peekable();
    let mut calls = 0;
    let ledger = improver_releases(
        schedule,
        mechanism,
        stream,
        stream.horizon(),
        rng,
        |step, output, x| {
            calls += 1;
            while let Some(ev) = pending.next_if(|e| e.t == step.t) {
                let truth = ev.query.eval(x)?;
                let released = output.answer(&ev.query)?;
                answers.push(ScheduledAnswer {
                    t: ev.t,
                    j: ev.j,
                    query_id: ev.query.id().to_string(),
                    truth,
                    released,
                    abs_error: (released - truth).abs(),
                    epoch: step.t,
                    eps_spent_cum: step.eps_spent_cum,
                    alpha_promised: schedule.alpha_envelope(step.t),
                });
            }
            Ok(())
        },
    )?;
    Ok(ScheduledRun {
        answers,
        ledger,
        mechanism_calls: calls,
    })
}

/// Excess empirical risk of the ERMG classifier at one time step.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErmgStep {
    pub t: u64,
    pub theta: Vec<f64>,
    pub risk: f64,
    pub min_risk: f64,
    pub excess_risk: f64,
    pub eps_spent_cum: f64,
}

/// ERMG: the improving schedule around grid ERM, reporting the excess
/// empirical risk against the exact grid minimum at every step.
pub fn run_ermg(
    problem: &ErmProblem,
    stream: &DatabaseStream,
    eps: f64,
    delta: f64,
    beta: f64,
    c: f64,
    rng: &RandomSource,
) -> Result<Vec<ErmgStep>> {
    let mechanism = GridErm::new(problem.clone());
    let schedule = schedule_improver(eps, delta, beta, stream.start(), c, mechanism.contract())?;
    let mut out = Vec::new();
    improver_releases(
        &schedule,
        &mechanism,
        stream,
        stream.horizon(),
        rng,
        |step, theta, x| {
            let risk = problem.risk(theta.index, x)?;
            let (_, min_risk) = problem.minimum(x)?;
            out.push(ErmgStep {
                t: step.t,
                theta: theta.theta.clone(),
                risk,
                min_risk,
                excess_risk: risk - min_risk,
                eps_spent_cum: step.eps_spent_cum,
            });
            Ok(())
        },
    )?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn unit_contract() -> BlackBoxContract {
        BlackBoxContract::new(1.0, 1.0).unwrap()
    }

    fn example() -> EpochSchedule {
        schedule_fixed(1.0, 0.0, (-1f64).exp(), 1000, unit_contract()).unwrap()
    }

    #[test]
    fn fixed_schedule_examples() {
        let s = example();
        assert_abs_diff_eq!(s.gamma, 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(s.eps_i(0), 0.01 / 1.21, epsilon = 1e-12);
        assert_abs_diff_eq!(s.beta_i(0), 0.268941, epsilon = 1e-6);
        let starts: Vec<_> = s.epochs(1331).iter().map(|e| e.start).collect();
        assert_eq!(starts, vec![1000, 1100, 1210, 1331]);
    }

    #[test]
    fn fixed_schedule_rejections() {
        assert!(schedule_fixed(1.0, 0.1, 0.1, 1000, unit_contract()).is_err());
        assert!(schedule_fixed(0.5, 0.0, 0.1, 3, unit_contract()).is_err());
        assert!(schedule_fixed(1.5, 0.0, 0.1, 1000, unit_contract()).is_err());
    }

    #[test]
    fn merged_epochs_spend_every_index() {
        let s = schedule_fixed(0.9, 0.0, 0.1, 20, unit_contract()).unwrap();
        let epochs = s.epochs(200);
        let spent: f64 = epochs.iter().map(|e| e.eps_spent).sum();
        let last = epochs.last().unwrap().merged.last().copied().unwrap();
        let direct: f64 = (0..=last).map(|i| s.eps_i(i)).sum();
        assert_abs_diff_eq!(spent, direct, epsilon = 1e-12);
        for w in epochs.windows(2) {
            assert!(w[0].start < w[1].start);
        }
    }

    #[test]
    fn improver_examples() {
        let s = schedule_improver(1.0, (-1f64).exp(), 0.1, 100, 0.5, unit_contract()).unwrap();
        assert_abs_diff_eq!(s.eps_t(100), 2.35702e-3, epsilon = 1e-8);
        assert_abs_diff_eq!(s.beta_t(10), 5e-4, epsilon = 1e-15);
        assert!(schedule_improver(1.0, 0.0, 0.1, 100, 0.5, unit_contract()).is_err());
        assert!(schedule_improver(0.5, 0.1, 0.1, 100, 0.0, unit_contract()).is_err());
    }

    #[test]
    fn improver_squared_sum_bound() {
        let s = schedule_improver(1.0, (-1f64).exp(), 0.1, 100, 0.5, unit_contract()).unwrap();
        let total: f64 = (100..=1_000_000u64).map(|t| s.eps_t(t).powi(2)).sum();
        assert!(total <= 1.0 / 9.0);
    }
}
