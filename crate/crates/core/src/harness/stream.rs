use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::db::DatabaseStream;
use crate::error::{invalid, Result};
use crate::noise::{Purpose, RandomSource};

/// How to obtain a database stream.
///
/// Generated streams draw the `n` initial records and every arrival
/// independently from a categorical distribution (uniform when `weights`
/// is absent). The shift variant switches from `before` to `after` for
/// arrivals at times `t ≥ shift_at`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StreamSpec {
    Iid {
        horizon: u64,
        #[serde(default)]
        weights: Option<Vec<f64>>,
    },
    Shift {
        horizon: u64,
        before: Vec<f64>,
        after: Vec<f64>,
        shift_at: u64,
    },
    File {
        path: PathBuf,
    },
}

/// Cumulative distribution of a categorical law, validated.
fn cumulative(weights: &[f64], universe: usize) -> Result<Vec<f64>> {
    if weights.len() != universe {
        return Err(invalid(format!(
            "category weights have length {}, expected {universe}",
            weights.len()
        )));
    }
    if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
        return Err(invalid("category weights must be nonnegative"));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(invalid("category weights must not all be zero"));
    }
    let mut acc = 0.0;
    Ok(weights
        .iter()
        .map(|w| {
            acc += w / total;
            acc
        })
        .collect())
}

fn draw(cdf: &[f64], u: f64) -> usize {
    cdf.iter()
        .position(|&c| u < c)
        .unwrap_or(cdf.len() - 1)
}

/// Draws a stream of start size `n` over `N` types. Record `k` (0-based,
/// initial records first) uses the draw at `(k, 0, Stream)`.
pub fn generate_stream(
    spec: &StreamSpec,
    n: u64,
    universe: usize,
    rng: &RandomSource,
) -> Result<DatabaseStream> {
    if n == 0 || universe == 0 {
        return Err(invalid("n and N must be positive"));
    }
    let (horizon, before, after, shift_at) = match spec {
        StreamSpec::File { path } => {
            let stream = DatabaseStream::read_jsonl(BufReader::new(File::open(path)?))?;
            if stream.start() != n || stream.universe().size() != universe {
                return Err(invalid(format!(
                    "stream file has n = {}, N = {}; config says n = {n}, N = {universe}",
                    stream.start(),
                    stream.universe().size()
                )));
            }
            return Ok(stream);
        }
        StreamSpec::Iid { horizon, weights } => {
            let w = weights.clone().unwrap_or_else(|| vec![1.0; universe]);
            let cdf = cumulative(&w, universe)?;
            (*horizon, cdf.clone(), cdf, u64::MAX)
        }
        StreamSpec::Shift {
            horizon,
            before,
            after,
            shift_at,
        } => (
            *horizon,
            cumulative(before, universe)?,
            cumulative(after, universe)?,
            *shift_at,
        ),
    };
    if horizon < n {
        return Err(invalid(format!("horizon {horizon} precedes start {n}")));
    }
    let sample = |k: u64, cdf: &[f64]| draw(cdf, rng.uniform(k, 0, Purpose::Stream));
    let mut initial = vec![0u64; universe];
    for k in 0..n {
        initial[sample(k, &before)] += 1;
    }
    let arrivals = ((n + 1)..=horizon)
        .map(|t| {
            let cdf = if t >= shift_at { &after } else { &before };
            sample(t - 1, cdf)
        })
        .collect();
    DatabaseStream::new(initial, arrivals)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iid_initial_size() {
        let spec = StreamSpec::Iid {
            horizon: 10,
            weights: None,
        };
        let s = generate_stream(&spec, 4, 2, &RandomSource::seeded(1)).unwrap();
        assert_eq!(s.start(), 4);
        assert_eq!(s.horizon(), 10);
        assert_eq!(s.initial_counts().iter().sum::<u64>(), 4);
    }

    #[test]
    fn shift_frequencies() {
        let spec = StreamSpec::Shift {
            horizon: 20_010,
            before: vec![0.9, 0.1],
            after: vec![0.2, 0.8],
            shift_at: 10_011,
        };
        let s = generate_stream(&spec, 10, 2, &RandomSource::seeded(9)).unwrap();
        let (early, late) = s.arrivals().split_at(10_000);
        let share = |xs: &[usize]| xs.iter().filter(|&&a| a == 0).count() as f64 / xs.len() as f64;
        assert!((share(early) - 0.9).abs() < 0.015);
        assert!((share(late) - 0.2).abs() < 0.015);
    }

    #[test]
    fn deterministic_given_seed() {
        let spec = StreamSpec::Iid {
            horizon: 50,
            weights: Some(vec![1.0, 2.0, 3.0]),
        };
        let a = generate_stream(&spec, 5, 3, &RandomSource::seeded(4)).unwrap();
        let b = generate_stream(&spec, 5, 3, &RandomSource::seeded(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bad_specs() {
        let rng = RandomSource::seeded(0);
        let wrong_len = StreamSpec::Iid {
            horizon: 5,
            weights: Some(vec![1.0]),
        };
        assert!(generate_stream(&wrong_len, 2, 2, &rng).is_err());
        let short = StreamSpec::Iid {
            horizon: 1,
            weights: None,
        };
        assert!(generate_stream(&short, 2, 2, &rng).is_err());
    }
}
