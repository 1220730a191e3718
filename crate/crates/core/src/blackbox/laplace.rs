use std::collections::HashMap;

use super::{check_eps, Answerer, BlackBoxContract, MechanismParams, StaticMechanism};
use crate::db::{Histogram, LinearQuery};
use crate::error::{invalid, Result};
use crate::noise::{Purpose, RandomSource};

/// Releases every query of a fixed class with independent Laplace noise of
/// scale `k/(εt)`.
#[derive(Clone, Debug)]
pub struct LaplaceRelease {
    queries: Vec<LinearQuery>,
}

impl LaplaceRelease {
    pub fn new(queries: Vec<LinearQuery>) -> Result<Self> {
        if queries.is_empty() {
            return Err(invalid("Laplace release needs at least one query"));
        }
        Ok(LaplaceRelease { queries })
    }

    pub fn queries(&self) -> &[LinearQuery] {
        &self.queries
    }
}

/// Noisy answers keyed by query id.
#[derive(Clone, Debug, PartialEq)]
pub struct ReleasedAnswers {
    answers: HashMap<String, f64>,
}

impl ReleasedAnswers {
    pub fn get(&self, id: &str) -> Option<f64> {
        self.answers.get(id).copied()
    }
}

impl Answerer for ReleasedAnswers {
    fn answer(&self, query: &LinearQuery) -> Result<f64> {
        self.get(query.id())
            .ok_or_else(|| invalid(format!("query {} was not released", query.id())))
    }
}

/// Answers `f ↦ f(x) + Lap(k/(εt))` for each of the `k` queries. Draw `i`
/// uses path `(t, i, Release)`.
pub fn laplace_release(
    x: &Histogram,
    queries: &[LinearQuery],
    eps: f64,
    rng: &RandomSource,
) -> Result<ReleasedAnswers> {
    check_eps(eps)?;
    let t = x.size();
    let scale = queries.len() as f64 / (eps * t as f64);
    let mut answers = HashMap::with_capacity(queries.len());
    for (i, q) in queries.iter().enumerate() {
        let noisy = q.eval(x)? + rng.laplace(scale, t, i as u64, Purpose::Release);
        answers.insert(q.id().to_string(), noisy);
    }
    Ok(ReleasedAnswers { answers })
}

impl StaticMechanism for LaplaceRelease {
    type Output = ReleasedAnswers;

    fn name(&self) -> &'static str {
        "laplace"
    }

    /// `α = (k/(εt))·ln(k/β) ≤ k(1 + ln k)·ln(1/β)/(εt)` whenever `β ≤ 1/e`.
    fn contract(&self) -> BlackBoxContract {
        let k = self.queries.len() as f64;
        BlackBoxContract::new(1.0, k * (1.0 + k.ln())).expect("k ≥ 1")
    }

    fn run(
        &self,
        x: &Histogram,
        params: &MechanismParams,
        rng: &RandomSource,
    ) -> Result<ReleasedAnswers> {
        laplace_release(x, &self.queries, params.eps, rng)
    }
}
