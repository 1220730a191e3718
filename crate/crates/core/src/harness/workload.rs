use serde::{Deserialize, Serialize};

use crate::db::{Histogram, LinearQuery, QueryEvent, Universe};
use crate::error::{invalid, Result};
use crate::noise::{Purpose, RandomSource};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WorkloadKind {
    /// Weights drawn uniformly from `[0, 1]`.
    RandomLinear,
    /// 0/1 weights, each type included with probability ½.
    Counting,
    /// The query maximizing `f(x_t) − f(y)` against the current public
    /// histogram. PMWG only.
    AdaptiveDistinguisher,
    /// The queries in `queries`, cycled.
    FixedList,
}

/// Which queries arrive and how many per time step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSpec {
    pub kind: WorkloadKind,
    /// `ℓ_t`, the number of queries at every time step.
    #[serde(default = "one")]
    pub per_step: u64,
    /// Draw a fixed class of this many queries and pick from it at random,
    /// instead of drawing a fresh query per event.
    #[serde(default)]
    pub class_size: Option<usize>,
    /// Weight vectors for `fixed-list`.
    #[serde(default)]
    pub queries: Option<Vec<Vec<f64>>>,
}

fn one() -> u64 {
    1
}

impl WorkloadSpec {
    pub fn new(kind: WorkloadKind, per_step: u64) -> Self {
        WorkloadSpec {
            kind,
            per_step,
            class_size: None,
            queries: None,
        }
    }
}

fn random_query(kind: WorkloadKind, id: String, universe: Universe, rng: &RandomSource, t: u64, j: u64) -> Result<LinearQuery> {
    let n = universe.size() as u64;
    let weights = (0..n)
        .map(|i| {
            let u = rng.uniform(t, j * n + i, Purpose::Workload);
            match kind {
                WorkloadKind::Counting => {
                    if u < 0.5 {
                        1.0
                    } else {
                        0.0
                    }
                }
                _ => u,
            }
        })
        .collect();
    LinearQuery::new(id, weights)
}

/// The query class a static mechanism must support, if the workload has one.
pub fn query_class(spec: &WorkloadSpec, universe: Universe, rng: &RandomSource) -> Result<Option<Vec<LinearQuery>>> {
    match spec.kind {
        WorkloadKind::FixedList => {
            let lists = spec
                .queries
                .as_ref()
                .filter(|q| !q.is_empty())
                .ok_or_else(|| invalid("fixed-list workload needs a non-empty `queries` list"))?;
            lists
                .iter()
                .enumerate()
                .map(|(k, w)| {
                    if w.len() != universe.size() {
                        return Err(invalid(format!(
                            "query {k} has {} weights, expected {}",
                            w.len(),
                            universe.size()
                        )));
                    }
                    LinearQuery::new(format!("q{k}"), w.clone())
                })
                .collect::<Result<Vec<_>>>()
                .map(Some)
        }
        WorkloadKind::AdaptiveDistinguisher => Ok(None),
        kind => match spec.class_size {
            None => Ok(None),
            Some(0) => Err(invalid("class_size must be positive")),
            Some(k) => (0..k as u64)
                .map(|c| random_query(kind, format!("q{c}"), universe, rng, 0, c))
                .collect::<Result<Vec<_>>>()
                .map(Some),
        },
    }
}

/// Non-adaptive query events for times `n..=horizon`, `per_step` per time.
///
/// Event `(t, j)` draws from path `(t, j, Workload)`.
pub fn workload_events(
    spec: &WorkloadSpec,
    universe: Universe,
    n: u64,
    horizon: u64,
    rng: &RandomSource,
) -> Result<Vec<QueryEvent>> {
    if spec.kind == WorkloadKind::AdaptiveDistinguisher {
        return Err(invalid("the adaptive distinguisher needs a public histogram; use it with PMWG"));
    }
    let class = query_class(spec, universe, &rng.derive(0))?;
    let mut events = Vec::new();
    let mut cursor = 0usize;
    for t in n..=horizon {
        for j in 1..=spec.per_step {
            let query = match (&class, spec.kind) {
                (Some(list), WorkloadKind::FixedList) => {
                    let q = list[cursor % list.len()].clone();
                    cursor += 1;
                    q
                }
                (Some(list), _) => {
                    let u = rng.uniform(t, j, Purpose::Workload);
                    list[((u * list.len() as f64) as usize).min(list.len() - 1)].clone()
                }
                (None, kind) => random_query(kind, format!("t{t}j{j}"), universe, rng, t, j)?,
            };
            events.push(QueryEvent::new(t, j, query));
        }
    }
    Ok(events)
}

/// `f^i = 1` where `x^i > y^i`, else 0. Maximizes `f(x) − f(y)` over
/// `[0,1]^N`, with value `½‖x − y‖₁`.
pub fn adaptive_distinguisher(x: &Histogram, y: &Histogram, id: impl Into<String>) -> Result<LinearQuery> {
    if x.weights().len() != y.weights().len() {
        return Err(crate::error::Error::DimensionMismatch {
            expected: x.weights().len(),
            actual: y.weights().len(),
        });
    }
    let weights = x
        .weights()
        .iter()
        .zip(y.weights())
        .map(|(a, b)| if a > b { 1.0 } else { 0.0 })
        .collect();
    LinearQuery::new(id, weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn distinguisher_example() {
        let x = Histogram::from_weights(vec![0.8, 0.2], 5).unwrap();
        let y = Histogram::from_weights(vec![0.5, 0.5], 5).unwrap();
        let f = adaptive_distinguisher(&x, &y, "d").unwrap();
        assert_eq!(f.weights(), &[1.0, 0.0]);
        let gap = f.eval(&x).unwrap() - f.eval(&y).unwrap();
        assert_abs_diff_eq!(gap, 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(gap, x.total_variation(&y).unwrap(), epsilon = 1e-12);
        let same = adaptive_distinguisher(&x, &x, "d").unwrap();
        assert_abs_diff_eq!(same.eval(&x).unwrap() - same.eval(&x).unwrap(), 0.0);
    }

    #[test]
    fn fixed_list_cycles() {
        let spec = WorkloadSpec {
            kind: WorkloadKind::FixedList,
            per_step: 2,
            class_size: None,
            queries: Some(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.5, 0.5]]),
        };
        let u = Universe::new(2).unwrap();
        let ev = workload_events(&spec, u, 3, 4, &RandomSource::seeded(0)).unwrap();
        let ids: Vec<_> = ev.iter().map(|e| e.query.id().to_string()).collect();
        assert_eq!(ids, vec!["q0", "q1", "q2", "q0"]);
        assert_eq!((ev[3].t, ev[3].j), (4, 2));
    }

    #[test]
    fn random_class_is_reused() {
        let mut spec = WorkloadSpec::new(WorkloadKind::Counting, 5);
        spec.class_size = Some(3);
        let u = Universe::new(4).unwrap();
        let ev = workload_events(&spec, u, 1, 20, &RandomSource::seeded(2)).unwrap();
        let mut ids: Vec<_> = ev.iter().map(|e| e.query.id().to_string()).collect();
        ids.sort();
        ids.dedup();
        assert!(ids.len() <= 3);
        assert!(ev.iter().all(|e| e.query.weights().iter().all(|w| *w == 0.0 || *w == 1.0)));
    }

    #[test]
    fn adaptive_rejected_offline() {
        let spec = WorkloadSpec::new(WorkloadKind::AdaptiveDistinguisher, 1);
        assert!(workload_events(&spec, Universe::new(2).unwrap(), 1, 2, &RandomSource::seeded(0)).is_err());
    }
}
