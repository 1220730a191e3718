use serde::{Deserialize, Serialize};

use super::{check_eps, exponential_mechanism, BlackBoxContract, MechanismParams, StaticMechanism};
use crate::db::Histogram;
use crate::error::{invalid, Error, Result};
use crate::noise::RandomSource;

/// Pointwise losses, clipped to `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Loss {
    /// `min(1, ‖θ − z‖²)`.
    ClippedSquared,
    /// `min(1, ‖θ − z‖₁)`.
    ClippedAbsolute,
}

impl Loss {
    pub fn eval(self, theta: &[f64], z: &[f64]) -> f64 {
        let raw: f64 = match self {
            Loss::ClippedSquared => theta.iter().zip(z).map(|(a, b)| (a - b).powi(2)).sum(),
            Loss::ClippedAbsolute => theta.iter().zip(z).map(|(a, b)| (a - b).abs()).sum(),
        };
        raw.min(1.0)
    }
}

/// Empirical risk minimization over a finite grid of classifiers.
///
/// Universe type `i` is the data point `data[i]`, so the empirical risk
/// `𝓛(θ; x) = Σ_i x^i L(θ, z_i)` is a linear query in `x`.
#[derive(Clone, Debug)]
pub struct ErmProblem {
    grid: Vec<Vec<f64>>,
    data: Vec<Vec<f64>>,
    loss: Loss,
    strong_convexity: Option<f64>,
    /// `losses[c][i] = L(θ_c, z_i)`.
    losses: Vec<Vec<f64>>,
}

impl ErmProblem {
    pub fn new(grid: Vec<Vec<f64>>, data: Vec<Vec<f64>>, loss: Loss) -> Result<Self> {
        if grid.is_empty() {
            return Err(invalid("classifier grid must be non-empty"));
        }
        if data.is_empty() {
            return Err(invalid("data universe must be non-empty"));
        }
        let d = grid[0].len();
        let in_cube = |p: &Vec<f64>| p.len() == d && p.iter().all(|v| (0.0..=1.0).contains(v));
        if d == 0 || !grid.iter().all(in_cube) || !data.iter().all(in_cube) {
            return Err(invalid("grid and data points must lie in [0,1]^d"));
        }
        let losses = grid
            .iter()
            .map(|theta| data.iter().map(|z| loss.eval(theta, z)).collect())
            .collect();
        Ok(ErmProblem {
            grid,
            data,
            loss,
            strong_convexity: None,
            losses,
        })
    }

    /// One-dimensional problem with an evenly spaced grid of `grid_size`
    /// points on `[0, 1]`.
    pub fn evenly_spaced(grid_size: usize, data: &[f64], loss: Loss) -> Result<Self> {
        if grid_size == 0 {
            return Err(invalid("grid size must be positive"));
        }
        let grid = (0..grid_size)
            .map(|k| {
                if grid_size == 1 {
                    vec![0.5]
                } else {
                    vec![k as f64 / (grid_size - 1) as f64]
                }
            })
            .collect();
        ErmProblem::new(grid, data.iter().map(|&z| vec![z]).collect(), loss)
    }

    pub fn with_strong_convexity(mut self, constant: f64) -> Result<Self> {
        if !(constant > 0.0) {
            return Err(invalid("strong-convexity constant must be positive"));
        }
        self.strong_convexity = Some(constant);
        Ok(self)
    }

    pub fn strong_convexity(&self) -> Option<f64> {
        self.strong_convexity
    }

    pub fn dimension(&self) -> usize {
        self.grid[0].len()
    }

    pub fn grid(&self) -> &[Vec<f64>] {
        &self.grid
    }

    pub fn data(&self) -> &[Vec<f64>] {
        &self.data
    }

    pub fn loss(&self) -> Loss {
        self.loss
    }

    fn check(&self, x: &Histogram) -> Result<()> {
        if x.weights().len() != self.data.len() {
            return Err(Error::DimensionMismatch {
                expected: self.data.len(),
                actual: x.weights().len(),
            });
        }
        Ok(())
    }

    /// `𝓛(θ_c; x)` for grid index `c`.
    pub fn risk(&self, c: usize, x: &Histogram) -> Result<f64> {
        self.check(x)?;
        let row = self
            .losses
            .get(c)
            .ok_or(Error::IndexOutOfRange {
                index: c,
                size: self.grid.len(),
            })?;
        Ok(row.iter().zip(x.weights()).map(|(l, w)| l * w).sum())
    }

    /// Risk of every grid point.
    pub fn risks(&self, x: &Histogram) -> Result<Vec<f64>> {
        (0..self.grid.len()).map(|c| self.risk(c, x)).collect()
    }

    /// `min_c 𝓛(θ_c; x)` and a minimizing index.
    pub fn minimum(&self, x: &Histogram) -> Result<(usize, f64)> {
        let risks = self.risks(x)?;
        Ok(risks
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::INFINITY), |b, (c, r)| if r < b.1 { (c, r) } else { b }))
    }

    /// `𝓛(θ_c; x) − min 𝓛(·; x)`.
    pub fn excess_risk(&self, c: usize, x: &Histogram) -> Result<f64> {
        Ok(self.risk(c, x)? - self.minimum(x)?.1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridErmOutput {
    pub index: usize,
    pub theta: Vec<f64>,
}

/// Exponential mechanism over the grid with utility `−𝓛(θ; x)` and
/// sensitivity `1/t`. The draw uses path `(t, 0, Selection)`.
pub fn grid_erm(
    x: &Histogram,
    problem: &ErmProblem,
    eps: f64,
    rng: &RandomSource,
) -> Result<GridErmOutput> {
    check_eps(eps)?;
    let utilities: Vec<f64> = problem.risks(x)?.into_iter().map(|r| -r).collect();
    let t = x.size();
    let index = exponential_mechanism(&utilities, 1.0 / t as f64, eps, rng, t, 0)?;
    Ok(GridErmOutput {
        index,
        theta: problem.grid[index].clone(),
    })
}

#[derive(Clone, Debug)]
pub struct GridErm {
    problem: ErmProblem,
}

impl GridErm {
    pub fn new(problem: ErmProblem) -> Self {
        GridErm { problem }
    }

    pub fn problem(&self) -> &ErmProblem {
        &self.problem
    }
}

impl StaticMechanism for GridErm {
    type Output = GridErmOutput;

    fn name(&self) -> &'static str {
        "grid-erm"
    }

    /// Excess risk is at most `2(ln|C| + ln(1/β))/(εt)`, which is below
    /// `2(1 + ln|C|)·ln(1/β)/(εt)` for `β ≤ 1/e`.
    fn contract(&self) -> BlackBoxContract {
        let size = self.problem.grid.len() as f64;
        BlackBoxContract::new(1.0, 2.0 * (1.0 + size.ln())).expect("positive")
    }

    fn run(
        &self,
        x: &Histogram,
        params: &MechanismParams,
        rng: &RandomSource,
    ) -> Result<GridErmOutput> {
        grid_erm(x, &self.problem, params.eps, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_limit_finds_minimizer() {
        let problem = ErmProblem::evenly_spaced(101, &[0.0, 0.5, 1.0], Loss::ClippedSquared).unwrap();
        let x = Histogram::from_counts(&[0, 100, 0]).unwrap();
        for seed in 0..10 {
            let out = grid_erm(&x, &problem, 1e3, &RandomSource::seeded(seed)).unwrap();
            assert!(problem.excess_risk(out.index, &x).unwrap() <= 0.01f64.powi(2) + 1e-12);
            assert!((out.theta[0] - 0.5).abs() < 0.1);
        }
        let exact = grid_erm(&x, &problem, 1.0, &RandomSource::noiseless()).unwrap();
        assert_eq!(exact.index, 50);
    }

    #[test]
    fn single_point_grid() {
        let problem = ErmProblem::evenly_spaced(1, &[0.0, 1.0], Loss::ClippedAbsolute).unwrap();
        let x = Histogram::from_counts(&[3, 1]).unwrap();
        let out = grid_erm(&x, &problem, 1.0, &RandomSource::seeded(1)).unwrap();
        assert_eq!(problem.excess_risk(out.index, &x).unwrap(), 0.0);
    }

    #[test]
    fn invalid_problems() {
        assert!(ErmProblem::new(vec![], vec![vec![0.0]], Loss::ClippedSquared).is_err());
        assert!(ErmProblem::new(vec![vec![2.0]], vec![vec![0.0]], Loss::ClippedSquared).is_err());
        assert!(ErmProblem::new(vec![vec![0.0, 0.0]], vec![vec![0.0]], Loss::ClippedSquared).is_err());
    }
}
