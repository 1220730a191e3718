use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::audit::{atg_audit, laplace_audit, AuditReport};
use super::stream::{generate_stream, StreamSpec};
use super::workload::{adaptive_distinguisher, query_class, workload_events, WorkloadKind, WorkloadSpec};
use crate::accountant::{basic_compose, cdp_compose, dp_of_zcdp, zcdp_compose, zcdp_of_pure, PrivacyLedger};
use crate::blackbox::{ErmProblem, LaplaceRelease, Loss, SmallDb, StaticMechanism};
use crate::db::{DatabaseStream, LinearQuery, QueryEvent, Universe, SIMPLEX_TOL};
use crate::error::{invalid, Result};
use crate::noise::{NoiseFunction, RandomSource};
use crate::pmwg::{query_budget_term, Pmwg, PmwgAnswer, PmwgConfig};
use crate::schedulers::{
    run_ermg, run_fixed, run_improver, schedule_fixed, schedule_improver, ScheduledRun, DEFAULT_IMPROVER_C,
};
use crate::sparse::{SparseAnswer, SparseConfig, SparseMode, SparseState};

/// Derivation labels under a trial's source.
const STREAM_LABEL: u64 = 1;
const WORKLOAD_LABEL: u64 = 2;
const ALGORITHM_LABEL: u64 = 3;

/// Renders a number with 12 significant digits.
pub fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let magnitude = v.abs().log10().floor() as i32;
    if (-5..=15).contains(&magnitude) {
        let decimals = (11 - magnitude).max(0) as usize;
        let s = format!("{v:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{v:.11e}")
    }
}

/// Aggregate results of an experiment.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Summary {
    pub trials: u64,
    pub max_abs_error: f64,
    /// Share of trials with at least one answer less accurate than promised.
    pub failure_fraction_at_alpha: f64,
    pub hard_total: u64,
    /// Largest per-trial privacy spend.
    pub eps_ledger_total: f64,
    /// Trials whose workload exceeded the admissible query budget.
    pub budget_violations: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentOutput {
    pub csv: String,
    pub summary: Summary,
    /// Runtime invariant failures; non-empty means the run is suspect.
    pub violations: Vec<String>,
}

impl ExperimentOutput {
    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary).expect("summary serializes")
    }
}

#[derive(Default)]
struct TrialResult {
    rows: String,
    max_abs_error: f64,
    failed: bool,
    hard: u64,
    eps: f64,
    budget_violation: bool,
    violations: Vec<String>,
}

fn collect(header: &str, trials: Vec<TrialResult>) -> ExperimentOutput {
    let mut csv = String::from(header);
    csv.push('\n');
    let mut summary = Summary {
        trials: trials.len() as u64,
        ..Summary::default()
    };
    let mut violations = Vec::new();
    let mut failures = 0;
    for t in trials {
        csv.push_str(&t.rows);
        summary.max_abs_error = summary.max_abs_error.max(t.max_abs_error);
        summary.hard_total += t.hard;
        summary.eps_ledger_total = summary.eps_ledger_total.max(t.eps);
        summary.budget_violations += t.budget_violation as u64;
        failures += t.failed as u64;
        violations.extend(t.violations);
    }
    if summary.trials > 0 {
        summary.failure_fraction_at_alpha = failures as f64 / summary.trials as f64;
    }
    ExperimentOutput {
        csv,
        summary,
        violations,
    }
}

fn run_trials<F>(trials: u64, f: F) -> Result<Vec<TrialResult>>
where
    F: Fn(u64) -> Result<TrialResult> + Sync + Send,
{
    (0..trials).into_par_iter().map(f).collect()
}

fn trial_source(seed: u64, trial: u64) -> RandomSource {
    RandomSource::seeded(seed).derive(trial)
}

fn algorithm_source(root: &RandomSource, noiseless: bool) -> RandomSource {
    if noiseless {
        RandomSource::noiseless()
    } else {
        root.derive(ALGORITHM_LABEL)
    }
}

/// Command-line overrides shared by every experiment config.
pub trait Overrides {
    fn apply(&mut self, seed: Option<u64>, trials: Option<u64>, out: Option<PathBuf>);
    fn out(&self) -> Option<&Path>;
}

macro_rules! overrides {
    ($($ty:ty),*) => {$(
        impl Overrides for $ty {
            fn apply(&mut self, seed: Option<u64>, trials: Option<u64>, out: Option<PathBuf>) {
                if let Some(s) = seed {
                    self.seed = s;
                }
                if let Some(t) = trials {
                    self.trials = t;
                }
                if out.is_some() {
                    self.out = out;
                }
            }

            fn out(&self) -> Option<&Path> {
                self.out.as_deref()
            }
        }
    )*};
}

fn one() -> u64 {
    1
}

fn one_f64() -> f64 {
    1.0
}

fn default_beta() -> f64 {
    0.1
}

fn default_c() -> f64 {
    DEFAULT_IMPROVER_C
}

fn default_p() -> f64 {
    0.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PmwgExperiment {
    pub alpha: f64,
    pub eps: f64,
    #[serde(default)]
    pub delta: f64,
    pub n: u64,
    #[serde(rename = "N")]
    pub universe: usize,
    #[serde(default)]
    pub p: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub noiseless: bool,
    pub stream: StreamSpec,
    pub workload: WorkloadSpec,
    #[serde(default = "one")]
    pub trials: u64,
    #[serde(default = "one_f64")]
    pub kappa: f64,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MechanismKind {
    Laplace,
    Smalldb,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchedulerExperiment {
    pub mechanism: MechanismKind,
    pub eps: f64,
    #[serde(default)]
    pub delta: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    pub n: u64,
    #[serde(rename = "N")]
    pub universe: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub noiseless: bool,
    pub stream: StreamSpec,
    pub workload: WorkloadSpec,
    #[serde(default = "one")]
    pub trials: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImproverExperiment {
    pub mechanism: MechanismKind,
    pub eps: f64,
    pub delta: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_c")]
    pub c: f64,
    pub n: u64,
    #[serde(rename = "N")]
    pub universe: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub noiseless: bool,
    pub stream: StreamSpec,
    pub workload: WorkloadSpec,
    #[serde(default = "one")]
    pub trials: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

/// A true query answer supplied directly to a sparse-vector machine.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValueEvent {
    pub t: u64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SparseExperiment {
    pub mode: SparseMode,
    pub threshold: f64,
    /// Noise coefficient `c` in `ξ_t = c·t^p`.
    pub c: f64,
    #[serde(default = "default_p")]
    pub p: f64,
    pub n: u64,
    #[serde(rename = "N", default)]
    pub universe: Option<usize>,
    /// Accuracy level used for the failure fraction.
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub noiseless: bool,
    #[serde(default)]
    pub stream: Option<StreamSpec>,
    #[serde(default)]
    pub workload: Option<WorkloadSpec>,
    #[serde(default)]
    pub values: Option<Vec<ValueEvent>>,
    #[serde(default = "one")]
    pub trials: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErmgExperiment {
    /// Number of evenly spaced classifiers on `[0, 1]`.
    pub grid_size: usize,
    /// Data point of each universe type; `N` is the length.
    pub data: Vec<f64>,
    #[serde(default = "default_loss")]
    pub loss: Loss,
    pub eps: f64,
    pub delta: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_c")]
    pub c: f64,
    pub n: u64,
    /// Excess-risk level used for the failure fraction.
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub noiseless: bool,
    pub stream: StreamSpec,
    #[serde(default = "one")]
    pub trials: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn default_loss() -> Loss {
    Loss::ClippedSquared
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AuditTarget {
    Laplace,
    /// Negative control: Laplace release with half the required noise.
    LaplaceHalved,
    Atg,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditExperiment {
    pub target: AuditTarget,
    #[serde(default = "default_audit_eps")]
    pub eps: f64,
    #[serde(default = "default_samples")]
    pub samples: u64,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default)]
    pub seed: u64,
    /// Unused; accepted so the shared `--trials` flag applies uniformly.
    #[serde(default = "one")]
    pub trials: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn default_audit_eps() -> f64 {
    0.5
}

fn default_samples() -> u64 {
    1_000_000
}

fn default_bins() -> usize {
    20
}

overrides!(
    PmwgExperiment,
    SchedulerExperiment,
    ImproverExperiment,
    SparseExperiment,
    ErmgExperiment,
    AuditExperiment
);

pub const PMWG_HEADER: &str =
    "trial,t,j,query_id,true_answer,released,abs_error,hard_flag,hard_cum,budget_cap,eps_ledger";
pub const SCHEDULER_HEADER: &str =
    "trial,t,j,query_id,true,released,abs_error,epoch,eps_spent_cum,alpha_promised";
pub const SPARSE_HEADER: &str = "trial,t,j,answer_kind,answer,hard_cum,eps_report";
pub const ERMG_HEADER: &str = "trial,t,theta,risk,min_risk,excess_risk,eps_spent_cum";

pub fn run_pmwg(cfg: &PmwgExperiment) -> Result<ExperimentOutput> {
    let config = PmwgConfig::new(cfg.alpha, cfg.eps, cfg.delta, cfg.n, cfg.universe, cfg.p)?;
    if !(cfg.kappa >= 1.0) {
        return Err(invalid("kappa must be at least 1"));
    }
    let universe = config.universe;
    let trials = run_trials(cfg.trials, |trial| {
        let root = trial_source(cfg.seed, trial);
        let stream = generate_stream(&cfg.stream, cfg.n, cfg.universe, &root.derive(STREAM_LABEL))?;
        let offline = match cfg.workload.kind {
            WorkloadKind::AdaptiveDistinguisher => None,
            _ => Some(workload_events(
                &cfg.workload,
                universe,
                cfg.n,
                stream.horizon(),
                &root.derive(WORKLOAD_LABEL),
            )?),
        };
        let mut pmwg = Pmwg::new(config.clone(), algorithm_source(&root, cfg.noiseless))?;
        let mut out = TrialResult::default();
        let (mut asked, mut admissible) = (0u64, 0.0);
        let mut next = 0usize;

        'time: for (t, x) in (cfg.n..).zip(stream.histograms()) {
            admissible += query_budget_term(&config, t, cfg.kappa)?;
            for j in 1..=cfg.workload.per_step {
                let event = match &offline {
                    Some(events) => {
                        let e = events[next].clone();
                        next += 1;
                        e
                    }
                    None => {
                        pmwg.advance(t)?;
                        let q = adaptive_distinguisher(&x, pmwg.public_histogram(), format!("d{t}_{j}"))?;
                        QueryEvent::new(t, j, q)
                    }
                };
                asked += 1;
                let truth = event.query.eval(&x)?;
                let answer = pmwg.answer(&event, &x)?;
                let y = pmwg.public_histogram();
                let mass: f64 = y.weights().iter().sum();
                if (mass - 1.0).abs() > SIMPLEX_TOL || y.weights().iter().any(|w| !(*w > 0.0)) {
                    out.violations.push(format!("trial {trial}: public histogram left the open simplex at ({t},{j})"));
                }
                if pmwg.hard_total() as f64 > pmwg.budget_cap() {
                    out.violations.push(format!("trial {trial}: hard count above cap at t={t}"));
                }
                let (released, err) = match answer.value() {
                    Some(a) => (fmt_num(a), (a - truth).abs()),
                    None => (String::new(), f64::INFINITY),
                };
                if cfg.noiseless && err > cfg.alpha + 1e-9 {
                    out.violations.push(format!(
                        "trial {trial}: noiseless answer at ({t},{j}) off by {err} > alpha"
                    ));
                }
                if err > cfg.alpha {
                    out.failed = true;
                }
                if err.is_finite() {
                    out.max_abs_error = out.max_abs_error.max(err);
                }
                writeln!(
                    out.rows,
                    "{trial},{t},{j},{},{},{released},{},{},{},{},{}",
                    event.query.id(),
                    fmt_num(truth),
                    if err.is_finite() { fmt_num(err) } else { String::new() },
                    answer.is_hard() as u8,
                    pmwg.hard_total(),
                    fmt_num(pmwg.budget_cap()),
                    fmt_num(pmwg.privacy_report()),
                )
                .expect("write to string");
                if answer == PmwgAnswer::Bottom {
                    break 'time;
                }
            }
            if asked as f64 > admissible {
                out.budget_violation = true;
            }
        }
        out.hard = pmwg.hard_total();
        out.eps = pmwg.privacy_report();
        Ok(out)
    })?;
    Ok(collect(PMWG_HEADER, trials))
}

fn scheduled_trial(trial: u64, run: ScheduledRun, eps_total: f64) -> TrialResult {
    let mut out = TrialResult {
        eps: eps_total,
        ..TrialResult::default()
    };
    for a in &run.answers {
        out.max_abs_error = out.max_abs_error.max(a.abs_error);
        if a.abs_error > a.alpha_promised {
            out.failed = true;
        }
        writeln!(
            out.rows,
            "{trial},{},{},{},{},{},{},{},{},{}",
            a.t,
            a.j,
            a.query_id,
            fmt_num(a.truth),
            fmt_num(a.released),
            fmt_num(a.abs_error),
            a.epoch,
            fmt_num(a.eps_spent_cum),
            fmt_num(a.alpha_promised)
        )
        .expect("write to string");
    }
    out
}

fn ledger_total(ledger: &PrivacyLedger, delta: f64) -> Result<f64> {
    if delta > 0.0 {
        Ok(cdp_compose(ledger, delta)?.budget.eps)
    } else {
        Ok(basic_compose(ledger).eps)
    }
}

struct TrialInputs {
    stream: DatabaseStream,
    class: Vec<LinearQuery>,
    events: Vec<QueryEvent>,
    rng: RandomSource,
}

fn scheduler_inputs(
    seed: u64,
    trial: u64,
    n: u64,
    universe: usize,
    noiseless: bool,
    stream: &StreamSpec,
    workload: &WorkloadSpec,
) -> Result<TrialInputs> {
    let root = trial_source(seed, trial);
    let stream = generate_stream(stream, n, universe, &root.derive(STREAM_LABEL))?;
    let u = Universe::new(universe)?;
    let wl_rng = root.derive(WORKLOAD_LABEL);
    let class = query_class(workload, u, &wl_rng.derive(0))?.ok_or_else(|| {
        invalid("scheduler workloads need a fixed query class: use fixed-list or set class_size")
    })?;
    let events = workload_events(workload, u, n, stream.horizon(), &wl_rng)?;
    Ok(TrialInputs {
        stream,
        class,
        events,
        rng: algorithm_source(&root, noiseless),
    })
}

pub fn run_scheduler(cfg: &SchedulerExperiment) -> Result<ExperimentOutput> {
    let trials = run_trials(cfg.trials, |trial| {
        let inputs = scheduler_inputs(
            cfg.seed,
            trial,
            cfg.n,
            cfg.universe,
            cfg.noiseless,
            &cfg.stream,
            &cfg.workload,
        )?;
        let run = match cfg.mechanism {
            MechanismKind::Laplace => {
                let m = LaplaceRelease::new(inputs.class)?;
                let s = schedule_fixed(cfg.eps, cfg.delta, cfg.beta, cfg.n, m.contract())?;
                run_fixed(&s, &m, &inputs.stream, &inputs.events, &inputs.rng)?
            }
            MechanismKind::Smalldb => {
                let m = SmallDb::new(inputs.class)?;
                let s = schedule_fixed(cfg.eps, cfg.delta, cfg.beta, cfg.n, m.contract())?;
                run_fixed(&s, &m, &inputs.stream, &inputs.events, &inputs.rng)?
            }
        };
        let total = ledger_total(&run.ledger, cfg.delta)?;
        Ok(scheduled_trial(trial, run, total))
    })?;
    Ok(collect(SCHEDULER_HEADER, trials))
}

pub fn run_improver_experiment(cfg: &ImproverExperiment) -> Result<ExperimentOutput> {
    let trials = run_trials(cfg.trials, |trial| {
        let inputs = scheduler_inputs(
            cfg.seed,
            trial,
            cfg.n,
            cfg.universe,
            cfg.noiseless,
            &cfg.stream,
            &cfg.workload,
        )?;
        let run = match cfg.mechanism {
            MechanismKind::Laplace => {
                let m = LaplaceRelease::new(inputs.class)?;
                let s = schedule_improver(cfg.eps, cfg.delta, cfg.beta, cfg.n, cfg.c, m.contract())?;
                run_improver(&s, &m, &inputs.stream, &inputs.events, &inputs.rng)?
            }
            MechanismKind::Smalldb => {
                let m = SmallDb::new(inputs.class)?;
                let s = schedule_improver(cfg.eps, cfg.delta, cfg.beta, cfg.n, cfg.c, m.contract())?;
                run_improver(&s, &m, &inputs.stream, &inputs.events, &inputs.rng)?
            }
        };
        let total = ledger_total(&run.ledger, cfg.delta)?;
        Ok(scheduled_trial(trial, run, total))
    })?;
    Ok(collect(SCHEDULER_HEADER, trials))
}

pub fn run_sparse(cfg: &SparseExperiment) -> Result<ExperimentOutput> {
    let xi = NoiseFunction::new(cfg.c, cfg.p)?;
    let config = SparseConfig::new(cfg.threshold, xi, cfg.n)?;
    match (&cfg.values, &cfg.workload) {
        (Some(_), None) | (None, Some(_)) => {}
        _ => return Err(invalid("give exactly one of `values` or `workload`")),
    }
    let trials = run_trials(cfg.trials, |trial| {
        let root = trial_source(cfg.seed, trial);
        let values: Vec<(u64, u64, f64)> = match (&cfg.values, &cfg.workload) {
            (Some(v), _) => {
                let mut out = Vec::with_capacity(v.len());
                let mut last: Option<(u64, u64)> = None;
                for e in v {
                    let j = match last {
                        Some((t, j)) if t == e.t => j + 1,
                        _ => 1,
                    };
                    last = Some((e.t, j));
                    out.push((e.t, j, e.value));
                }
                out
            }
            (None, Some(w)) => {
                let spec = cfg
                    .stream
                    .as_ref()
                    .ok_or_else(|| invalid("a workload needs a `stream`"))?;
                let universe = cfg.universe.ok_or_else(|| invalid("a workload needs `N`"))?;
                let stream = generate_stream(spec, cfg.n, universe, &root.derive(STREAM_LABEL))?;
                let events = workload_events(w, Universe::new(universe)?, cfg.n, stream.horizon(), &root.derive(WORKLOAD_LABEL))?;
                let mut out = Vec::with_capacity(events.len());
                let mut cached: Option<(u64, crate::db::Histogram)> = None;
                for e in &events {
                    if cached.as_ref().is_none_or(|(t, _)| *t != e.t) {
                        cached = Some((e.t, stream.histogram_at(e.t)?));
                    }
                    let x = &cached.as_ref().expect("just set").1;
                    out.push((e.t, e.j, e.query.eval(x)?));
                }
                out
            }
            _ => unreachable!("checked above"),
        };
        let mut state = SparseState::new(cfg.mode, config, algorithm_source(&root, cfg.noiseless));
        let mut out = TrialResult::default();
        for (t, j, value) in values {
            let answer = state.step(t, value)?;
            if let Some(alpha) = cfg.alpha {
                let wrong = match answer {
                    SparseAnswer::Below => value >= cfg.threshold + alpha,
                    SparseAnswer::Above => value <= cfg.threshold - alpha,
                    SparseAnswer::Numeric(a) => (a - value).abs() > alpha || value <= cfg.threshold - alpha,
                };
                out.failed |= wrong;
            }
            if let SparseAnswer::Numeric(a) = answer {
                out.max_abs_error = out.max_abs_error.max((a - value).abs());
            }
            writeln!(
                out.rows,
                "{trial},{t},{j},{},{},{},{}",
                answer.kind(),
                answer.value().map(fmt_num).unwrap_or_default(),
                state.hard_total(),
                fmt_num(state.privacy_report())
            )
            .expect("write to string");
            if state.is_halted() {
                break;
            }
        }
        out.hard = state.hard_total();
        out.eps = state.privacy_report();
        Ok(out)
    })?;
    Ok(collect(SPARSE_HEADER, trials))
}

pub fn run_ermg_experiment(cfg: &ErmgExperiment) -> Result<ExperimentOutput> {
    let problem = ErmProblem::evenly_spaced(cfg.grid_size, &cfg.data, cfg.loss)?;
    let trials = run_trials(cfg.trials, |trial| {
        let root = trial_source(cfg.seed, trial);
        let stream = generate_stream(&cfg.stream, cfg.n, cfg.data.len(), &root.derive(STREAM_LABEL))?;
        let steps = run_ermg(
            &problem,
            &stream,
            cfg.eps,
            cfg.delta,
            cfg.beta,
            cfg.c,
            &algorithm_source(&root, cfg.noiseless),
        )?;
        let mut out = TrialResult::default();
        for s in &steps {
            out.max_abs_error = out.max_abs_error.max(s.excess_risk);
            if cfg.alpha.is_some_and(|a| s.excess_risk > a) {
                out.failed = true;
            }
            out.eps = s.eps_spent_cum;
            writeln!(
                out.rows,
                "{trial},{},{},{},{},{},{}",
                s.t,
                fmt_num(s.theta[0]),
                fmt_num(s.risk),
                fmt_num(s.min_risk),
                fmt_num(s.excess_risk),
                fmt_num(s.eps_spent_cum)
            )
            .expect("write to string");
        }
        Ok(out)
    })?;
    Ok(collect(ERMG_HEADER, trials))
}

/// Totals for a list of per-event ε values.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComposeReport {
    pub events: usize,
    pub basic_eps: f64,
    pub delta: f64,
    pub cdp_eps: f64,
    pub cdp_simplified: f64,
    pub cdp_simplified_applies: bool,
    pub zcdp_rho: f64,
    pub zcdp_eps: f64,
}

pub fn compose_report(eps: &[f64], delta: f64) -> Result<ComposeReport> {
    let ledger = PrivacyLedger::from_epsilons("compose", eps)?;
    let cdp = cdp_compose(&ledger, delta)?;
    let rhos = eps.iter().map(|&e| zcdp_of_pure(e)).collect::<Result<Vec<_>>>()?;
    let rho = zcdp_compose(&rhos)?;
    Ok(ComposeReport {
        events: eps.len(),
        basic_eps: basic_compose(&ledger).eps,
        delta,
        cdp_eps: cdp.budget.eps,
        cdp_simplified: cdp.simplified,
        cdp_simplified_applies: cdp.simplified_applies,
        zcdp_rho: rho,
        zcdp_eps: dp_of_zcdp(rho, delta)?.eps,
    })
}

/// Runs the configured audit. A flag on a real mechanism, or no flag on
/// the negative control, is an invariant violation.
pub fn run_audit(cfg: &AuditExperiment) -> Result<(AuditReport, Vec<String>)> {
    let report = match cfg.target {
        AuditTarget::Laplace => laplace_audit(cfg.eps, cfg.samples, cfg.bins, cfg.seed, false)?,
        AuditTarget::LaplaceHalved => laplace_audit(cfg.eps, cfg.samples, cfg.bins, cfg.seed, true)?,
        AuditTarget::Atg => atg_audit(cfg.samples, cfg.seed)?,
    };
    let mut violations = Vec::new();
    if report.flagged && cfg.target != AuditTarget::LaplaceHalved {
        violations.push(format!(
            "audit flagged: ratio − 3σ = {} exceeds {}",
            report.max_lower, report.bound
        ));
    }
    if !report.flagged && cfg.target == AuditTarget::LaplaceHalved {
        violations.push("negative control was not flagged; the audit lacks power".into());
    }
    Ok((report, violations))
}

/// CSV rendering of an audit's bins.
pub fn audit_csv(report: &AuditReport) -> String {
    let mut csv = String::from("bin,count_original,count_neighbor,ratio,sigma,compared\n");
    for b in &report.bins {
        writeln!(
            csv,
            "{},{},{},{},{},{}",
            b.bin,
            b.count_original,
            b.count_neighbor,
            if b.compared { fmt_num(b.ratio) } else { String::new() },
            if b.compared { fmt_num(b.sigma) } else { String::new() },
            b.compared as u8
        )
        .expect("write to string");
    }
    csv
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_rendering() {
        assert_eq!(fmt_num(0.0), "0");
        assert_eq!(fmt_num(0.25), "0.25");
        assert_eq!(fmt_num(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_num(1234.5), "1234.5");
        assert_eq!(fmt_num(-2.0), "-2");
        assert_eq!(fmt_num(1e-9), "1.00000000000e-9");
    }

    #[test]
    fn compose_example() {
        let r = compose_report(&[0.1, 0.1], (-1f64).exp()).unwrap();
        assert!((r.basic_eps - 0.2).abs() < 1e-12);
        assert!((r.cdp_eps - 0.21).abs() < 1e-12);
        assert!((r.cdp_eps - r.zcdp_eps).abs() < 1e-12);
    }
}
