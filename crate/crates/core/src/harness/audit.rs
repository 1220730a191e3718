//! Monte Carlo privacy audits.
//!
//! A mechanism is sampled many times on each of two neighboring inputs and
//! its outputs are binned. For every bin the empirical probability ratio is
//! compared with `e^ε` in both directions, with a delta-method standard
//! error.

use rayon::prelude::*;
use serde::Serialize;

use crate::blackbox::laplace_release;
use crate::db::{Histogram, LinearQuery};
use crate::error::{invalid, Result};
use crate::noise::{NoiseFunction, RandomSource};
use crate::sparse::{SparseConfig, SparseState};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Original,
    Neighbor,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AuditOptions {
    pub samples: u64,
    pub eps: f64,
    /// Multiplicative slack on `e^ε`.
    pub slack: f64,
    /// Bins where either side has fewer hits are not compared.
    pub min_count: u64,
}

impl AuditOptions {
    pub fn new(samples: u64, eps: f64) -> Self {
        AuditOptions {
            samples,
            eps,
            slack: 0.05,
            min_count: 100,
        }
    }

    /// `e^ε(1 + slack)`.
    pub fn bound(&self) -> f64 {
        self.eps.exp() * (1.0 + self.slack)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BinReport {
    pub bin: usize,
    pub count_original: u64,
    pub count_neighbor: u64,
    /// Larger of the two probability ratios.
    pub ratio: f64,
    pub sigma: f64,
    pub compared: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditReport {
    pub options: AuditOptions,
    pub bound: f64,
    pub bins: Vec<BinReport>,
    pub max_ratio: f64,
    /// Largest `ratio − 3σ` over compared bins.
    pub max_lower: f64,
    pub flagged: bool,
}

/// Sample counts per bin from `sample(side, k)` for `k < samples`.
fn histogram_counts<F>(bins: usize, samples: u64, side: Side, sample: &F) -> Result<Vec<u64>>
where
    F: Fn(Side, u64) -> usize + Sync,
{
    let counts = (0..samples)
        .into_par_iter()
        .fold(
            || vec![0u64; bins + 1],
            |mut acc, k| {
                let b = sample(side, k);
                acc[b.min(bins)] += 1;
                acc
            },
        )
        .reduce(
            || vec![0u64; bins + 1],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    if counts[bins] > 0 {
        return Err(invalid(format!("sampler returned a bin index ≥ {bins}")));
    }
    Ok(counts[..bins].to_vec())
}

/// Runs the audit. `sample(side, k)` returns the bin of the `k`-th output
/// on the given side; it must be deterministic in `(side, k)`.
pub fn dp_audit<F>(bins: usize, options: AuditOptions, sample: F) -> Result<AuditReport>
where
    F: Fn(Side, u64) -> usize + Sync,
{
    if bins == 0 {
        return Err(invalid("audit needs at least one bin"));
    }
    if options.samples == 0 {
        return Err(invalid("audit needs at least one sample"));
    }
    let a = histogram_counts(bins, options.samples, Side::Original, &sample)?;
    let b = histogram_counts(bins, options.samples, Side::Neighbor, &sample)?;
    let n = options.samples as f64;
    let bound = options.bound();
    let mut reports = Vec::with_capacity(bins);
    let (mut max_ratio, mut max_lower) = (0.0f64, 0.0f64);
    for (bin, (&ca, &cb)) in a.iter().zip(&b).enumerate() {
        let compared = ca.min(cb) >= options.min_count;
        let (ratio, sigma) = if compared {
            let p = ca as f64 / n;
            let q = cb as f64 / n;
            let ratio = (p / q).max(q / p);
            let rel = ((1.0 - p) / (n * p) + (1.0 - q) / (n * q)).sqrt();
            (ratio, ratio * rel)
        } else {
            (f64::NAN, f64::NAN)
        };
        if compared {
            max_ratio = max_ratio.max(ratio);
            max_lower = max_lower.max(ratio - 3.0 * sigma);
        }
        reports.push(BinReport {
            bin,
            count_original: ca,
            count_neighbor: cb,
            ratio,
            sigma,
            compared,
        });
    }
    Ok(AuditReport {
        options,
        bound,
        bins: reports,
        max_ratio,
        max_lower,
        flagged: max_lower > bound,
    })
}

/// Equal-width bins on `[lo, hi]`; values outside fold into the edge bins.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Binning {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
}

impl Binning {
    pub fn index(&self, v: f64) -> usize {
        let width = (self.hi - self.lo) / self.bins as f64;
        let k = ((v - self.lo) / width).floor();
        if k < 0.0 || k.is_nan() {
            0
        } else {
            (k as usize).min(self.bins - 1)
        }
    }
}

/// Laplace release of `f = (1, 0)` on the size-2 databases `{0, 1}` and
/// `{0, 0}`. With `halved`, the noise is half what `ε` requires.
pub fn laplace_audit(eps: f64, samples: u64, bins: usize, seed: u64, halved: bool) -> Result<AuditReport> {
    let x = Histogram::from_counts(&[1, 1])?;
    let x_prime = Histogram::from_counts(&[2, 0])?;
    let queries = vec![LinearQuery::new("f", vec![1.0, 0.0])?];
    let run_eps = if halved { 2.0 * eps } else { eps };
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(invalid(format!("eps must be positive, got {eps}")));
    }
    let binning = Binning {
        lo: -3.0,
        hi: 4.5,
        bins,
    };
    let root = RandomSource::seeded(seed);
    dp_audit(bins, AuditOptions::new(samples, eps), |side, k| {
        let (db, label) = match side {
            Side::Original => (&x, 0),
            Side::Neighbor => (&x_prime, 1),
        };
        let out = laplace_release(db, &queries, run_eps, &root.derive(label).derive(k))
            .expect("valid release");
        binning.index(out.get("f").expect("released"))
    })
}

/// Above Threshold on `N = 2`, `n = 2` with queries `(1,0), (0,1), (1,0)`
/// at threshold ½ and `ξ_t = √(t/2)`, so `ξ_nΔ_n = ½`. Databases `{0,0}`
/// and `{0,1}`. Bins are the halting position 1, 2, 3 or never.
pub fn atg_audit(samples: u64, seed: u64) -> Result<AuditReport> {
    let xi = NoiseFunction::new(std::f64::consts::FRAC_1_SQRT_2, 0.5)?;
    let config = SparseConfig::new(0.5, xi, 2)?;
    let queries = [
        LinearQuery::new("a", vec![1.0, 0.0])?,
        LinearQuery::new("b", vec![0.0, 1.0])?,
        LinearQuery::new("c", vec![1.0, 0.0])?,
    ];
    let x = Histogram::from_counts(&[2, 0])?;
    let x_prime = Histogram::from_counts(&[1, 1])?;
    let values = |db: &Histogram| -> Result<Vec<f64>> { queries.iter().map(|q| q.eval(db)).collect() };
    let (va, vb) = (values(&x)?, values(&x_prime)?);
    let root = RandomSource::seeded(seed);
    let eps = xi.times_sensitivity(2);
    dp_audit(4, AuditOptions::new(samples, eps), |side, k| {
        let (vals, label) = match side {
            Side::Original => (&va, 0),
            Side::Neighbor => (&vb, 1),
        };
        let mut state = SparseState::atg(config, root.derive(label).derive(k));
        for (pos, &v) in vals.iter().enumerate() {
            if state.step(2, v).expect("not halted").is_above() {
                return pos;
            }
        }
        3
    })
}
