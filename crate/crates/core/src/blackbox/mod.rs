//! Static ε-DP mechanisms and their accuracy contracts.
//!
//! A mechanism is a `(p, g)` black box when, run on a database of size `n`
//! with budget `ε`, it is `(α, β)`-accurate for
//! `α ≥ g·(ln(1/β)/(εn))^p`. The extended `(p, p′, p″, g)` form reads
//! `α ≥ g·(1/(εn))^p·ln^{p″} n·ln^{p′}(1/β)`.

mod erm;
mod exponential;
mod laplace;
mod smalldb;

pub use erm::{grid_erm, ErmProblem, GridErm, GridErmOutput, Loss};
pub use exponential::exponential_mechanism;
pub use laplace::{laplace_release, LaplaceRelease, ReleasedAnswers};
pub use smalldb::{multiset_count, smalldb, synthetic_size, SmallDb, MAX_CANDIDATES};

use serde::Serialize;

use crate::db::{Histogram, LinearQuery};
use crate::error::{invalid, Result};
use crate::noise::RandomSource;

/// Accuracy parameters of a static mechanism.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BlackBoxContract {
    pub p: f64,
    pub g: f64,
    /// Exponent of `ln(1/β)`; defaults to `p`.
    pub p_beta: Option<f64>,
    /// Exponent of `ln n`; defaults to 0.
    pub p_size: Option<f64>,
}

impl BlackBoxContract {
    pub fn new(p: f64, g: f64) -> Result<Self> {
        if !(p > 0.0 && p.is_finite()) {
            return Err(invalid(format!("contract exponent p must be positive, got {p}")));
        }
        if !(g > 0.0 && g.is_finite()) {
            return Err(invalid(format!("contract constant g must be positive, got {g}")));
        }
        Ok(BlackBoxContract {
            p,
            g,
            p_beta: None,
            p_size: None,
        })
    }

    pub fn extended(p: f64, p_beta: f64, p_size: f64, g: f64) -> Result<Self> {
        let mut c = BlackBoxContract::new(p, g)?;
        if !(p_beta >= 0.0 && p_size >= 0.0) {
            return Err(invalid("log exponents must be nonnegative"));
        }
        c.p_beta = Some(p_beta);
        c.p_size = Some(p_size);
        Ok(c)
    }

    pub fn p_beta(&self) -> f64 {
        self.p_beta.unwrap_or(self.p)
    }

    pub fn p_size(&self) -> f64 {
        self.p_size.unwrap_or(0.0)
    }

    /// `g·(ln(1/β)/(εn))^p`.
    pub fn alpha(&self, eps: f64, beta: f64, n: f64) -> f64 {
        self.g * ((1.0 / beta).ln() / (eps * n)).powf(self.p)
    }

    /// `g·(1/(εn))^p·ln^{p″} n·ln^{p′}(1/β)`.
    pub fn alpha_extended(&self, eps: f64, beta: f64, n: f64) -> f64 {
        self.g
            * (1.0 / (eps * n)).powf(self.p)
            * n.ln().powf(self.p_size())
            * (1.0 / beta).ln().powf(self.p_beta())
    }
}

/// Parameters of one mechanism invocation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MechanismParams {
    pub eps: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Epoch (scheduler) or time step (improver) of the invocation.
    pub epoch: u64,
}

/// Anything that answers linear queries.
pub trait Answerer {
    fn answer(&self, query: &LinearQuery) -> Result<f64>;
}

impl Answerer for Histogram {
    fn answer(&self, query: &LinearQuery) -> Result<f64> {
        query.eval(self)
    }
}

/// A static mechanism run on a single database.
pub trait StaticMechanism {
    type Output;

    fn name(&self) -> &'static str;

    fn contract(&self) -> BlackBoxContract;

    /// Runs the mechanism on `x`. Implementations must be `params.eps`-DP
    /// with respect to replacing one record of `x`.
    fn run(&self, x: &Histogram, params: &MechanismParams, rng: &RandomSource)
        -> Result<Self::Output>;
}

/// Runs a different mechanism per epoch; the last one repeats once the list
/// is exhausted. Lets the query class change over time.
#[derive(Clone, Debug)]
pub struct PerEpoch<M> {
    mechanisms: Vec<M>,
}

impl<M: StaticMechanism> PerEpoch<M> {
    pub fn new(mechanisms: Vec<M>) -> Result<Self> {
        if mechanisms.is_empty() {
            return Err(invalid("need at least one mechanism"));
        }
        Ok(PerEpoch { mechanisms })
    }

    fn pick(&self, epoch: u64) -> &M {
        let last = self.mechanisms.len() - 1;
        &self.mechanisms[(epoch as usize).min(last)]
    }
}

impl<M: StaticMechanism> StaticMechanism for PerEpoch<M> {
    type Output = M::Output;

    fn name(&self) -> &'static str {
        self.mechanisms[0].name()
    }

    /// The pointwise weakest contract across the list.
    fn contract(&self) -> BlackBoxContract {
        let mut c = self.mechanisms[0].contract();
        for m in &self.mechanisms[1..] {
            let d = m.contract();
            c.p = c.p.min(d.p);
            c.g = c.g.max(d.g);
        }
        c
    }

    fn run(
        &self,
        x: &Histogram,
        params: &MechanismParams,
        rng: &RandomSource,
    ) -> Result<Self::Output> {
        self.pick(params.epoch).run(x, params, rng)
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(invalid(format!("eps must be positive and finite, got {eps}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn contract_forms_agree_for_basic_box() {
        let c = BlackBoxContract::new(0.5, 2.0).unwrap();
        let basic = c.alpha(0.3, 0.05, 400.0);
        let ext = c.alpha_extended(0.3, 0.05, 400.0);
        assert_abs_diff_eq!(basic, ext, epsilon = 1e-12);
        assert!(BlackBoxContract::new(0.0, 1.0).is_err());
        assert!(BlackBoxContract::new(1.0, -1.0).is_err());
    }
}
