//! Data model: universes, fractional histograms, growing database streams and
//! linear queries.
//!
//! Universe indices are 0-based throughout the API and in the stream file
//! format.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Tolerance for simplex and integrality checks.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Drift beyond which weights are renormalized after a floating-point update.
pub const RENORMALIZE_DRIFT: f64 = 1e-12;

/// A finite data universe of `N` types.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Universe(usize);

impl Universe {
    pub fn new(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(invalid("universe size must be at least 1"));
        }
        Ok(Universe(size))
    }

    pub fn size(self) -> usize {
        self.0
    }

    fn check_index(self, index: usize) -> Result<()> {
        if index >= self.0 {
            return Err(Error::IndexOutOfRange {
                index,
                size: self.0,
            });
        }
        Ok(())
    }
}

/// Sensitivity `Δ_t = 1/t` of a linear query on a database of size `t`.
pub fn sensitivity(t: u64) -> f64 {
    assert!(t >= 1, "database size must be positive");
    1.0 / t as f64
}

/// A database of size `t` represented as a distribution over the universe.
///
/// Concrete databases are built from counts and flagged `exact`; public
/// estimates such as the PMWG histogram are arbitrary points of the simplex.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    weights: Vec<f64>,
    size: u64,
    exact: bool,
}

impl Histogram {
    /// Builds the exact histogram of a multiset given by per-type counts.
    pub fn from_counts(counts: &[u64]) -> Result<Self> {
        if counts.is_empty() {
            return Err(invalid("counts must cover a non-empty universe"));
        }
        let size: u64 = counts.iter().sum();
        if size == 0 {
            return Err(invalid("database must contain at least one record"));
        }
        let weights = counts.iter().map(|&c| c as f64 / size as f64).collect();
        Ok(Histogram {
            weights,
            size,
            exact: true,
        })
    }

    /// Builds a (non-exact) histogram from weights on the simplex.
    pub fn from_weights(weights: Vec<f64>, size: u64) -> Result<Self> {
        if weights.is_empty() {
            return Err(invalid("weights must cover a non-empty universe"));
        }
        if size == 0 {
            return Err(invalid("histogram size must be positive"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(invalid("weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(invalid(format!("weights sum to {total}, not 1")));
        }
        let mut h = Histogram {
            weights,
            size,
            exact: false,
        };
        h.renormalize();
        Ok(h)
    }

    /// The uniform distribution over `N` types, labelled with size `t`.
    pub fn uniform(universe: Universe, size: u64) -> Self {
        let n = universe.size();
        Histogram {
            weights: vec![1.0 / n as f64; n],
            size: size.max(1),
            exact: false,
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn size(&self) -> u64 {
        self.size
    }

    pub fn universe(&self) -> Universe {
        Universe(self.weights.len())
    }

    pub fn is_exact(&self) -> bool {
        self.exact
    }

    /// Recovers integer counts of an exact histogram.
    pub fn counts(&self) -> Option<Vec<u64>> {
        if !self.exact {
            return None;
        }
        let t = self.size as f64;
        Some(self.weights.iter().map(|w| (w * t).round() as u64).collect())
    }

    /// Histogram after one record of type `index` joins: `(t·x + e_i)/(t+1)`.
    pub fn add_entry(&self, index: usize) -> Result<Histogram> {
        self.universe().check_index(index)?;
        let t = self.size as f64;
        let next = t + 1.0;
        let mut weights: Vec<f64> = self.weights.iter().map(|w| w * t / next).collect();
        weights[index] += 1.0 / next;
        let mut h = Histogram {
            weights,
            size: self.size + 1,
            exact: self.exact,
        };
        h.renormalize();
        Ok(h)
    }

    /// Rescales onto the simplex if floating-point drift exceeds
    /// [`RENORMALIZE_DRIFT`].
    pub(crate) fn renormalize(&mut self) {
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > RENORMALIZE_DRIFT {
            self.weights.iter_mut().for_each(|w| *w /= total);
        }
    }

    pub(crate) fn with_weights(weights: Vec<f64>, size: u64) -> Self {
        let mut h = Histogram {
            weights,
            size,
            exact: false,
        };
        h.renormalize();
        h
    }

    /// `½‖x − y‖₁`.
    pub fn total_variation(&self, other: &Histogram) -> Result<f64> {
        check_same_universe(self.weights.len(), other.weights.len())?;
        Ok(0.5
            * self
                .weights
                .iter()
                .zip(&other.weights)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>())
    }
}

fn check_same_universe(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

/// Relative entropy `Σ x^i ln(x^i / y^i)` with `0·ln 0 = 0`.
pub fn relative_entropy(x: &Histogram, y: &Histogram) -> Result<f64> {
    check_same_universe(x.weights.len(), y.weights.len())?;
    let mut total = 0.0;
    for (i, (&xi, &yi)) in x.weights.iter().zip(&y.weights).enumerate() {
        if xi <= 0.0 {
            continue;
        }
        if yi <= 0.0 {
            return Err(Error::SupportViolation(i));
        }
        total += xi * (xi / yi).ln();
    }
    // Rounding can leave a tiny negative value when x == y.
    Ok(total.max(0.0))
}

/// A linear query `f ∈ [0,1]^N`, answered on `x` as `⟨f, x⟩`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearQuery {
    id: String,
    weights: Vec<f64>,
}

impl LinearQuery {
    pub fn new(id: impl Into<String>, weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(invalid("query must cover a non-empty universe"));
        }
        if let Some(w) = weights.iter().find(|w| !(0.0..=1.0).contains(*w)) {
            return Err(invalid(format!("query weight {w} outside [0,1]")));
        }
        Ok(LinearQuery {
            id: id.into(),
            weights,
        })
    }

    /// Counting query for a set of universe indices.
    pub fn counting(id: impl Into<String>, universe: Universe, members: &[usize]) -> Result<Self> {
        let mut weights = vec![0.0; universe.size()];
        for &m in members {
            universe.check_index(m)?;
            weights[m] = 1.0;
        }
        LinearQuery::new(id, weights)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn universe(&self) -> Universe {
        Universe(self.weights.len())
    }

    /// `Σ_i f^i x^i`.
    pub fn eval(&self, x: &Histogram) -> Result<f64> {
        check_same_universe(self.weights.len(), x.weights.len())?;
        Ok(self.eval_weights(&x.weights))
    }

    pub(crate) fn eval_weights(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(f, w)| f * w).sum()
    }

    /// The query `1 − f`.
    pub fn complement(&self) -> LinearQuery {
        LinearQuery {
            id: format!("{}'", self.id),
            weights: self.weights.iter().map(|w| 1.0 - w).collect(),
        }
    }
}

/// A query arriving as the `j`-th query (1-based) at time `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryEvent {
    pub t: u64,
    pub j: u64,
    pub query: LinearQuery,
}

impl QueryEvent {
    pub fn new(t: u64, j: u64, query: LinearQuery) -> Self {
        QueryEvent { t, j, query }
    }
}

/// A database stream starting at size `n` and growing by one arrival per
/// time step: the record at position `k` of `arrivals` joins at time `n+k+1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatabaseStream {
    universe: Universe,
    initial: Vec<u64>,
    arrivals: Vec<usize>,
}

impl DatabaseStream {
    pub fn new(initial: Vec<u64>, arrivals: Vec<usize>) -> Result<Self> {
        let universe = Universe::new(initial.len())?;
        if initial.iter().sum::<u64>() == 0 {
            return Err(invalid("initial database must be non-empty"));
        }
        for &a in &arrivals {
            universe.check_index(a)?;
        }
        Ok(DatabaseStream {
            universe,
            initial,
            arrivals,
        })
    }

    pub fn universe(&self) -> Universe {
        self.universe
    }

    /// Starting size `n`.
    pub fn start(&self) -> u64 {
        self.initial.iter().sum()
    }

    /// Last time step for which the stream defines a database.
    pub fn horizon(&self) -> u64 {
        self.start() + self.arrivals.len() as u64
    }

    pub fn initial_counts(&self) -> &[u64] {
        &self.initial
    }

    pub fn arrivals(&self) -> &[usize] {
        &self.arrivals
    }

    /// Type of the record arriving at time `t > n`.
    pub fn arrival_at(&self, t: u64) -> Option<usize> {
        let n = self.start();
        if t <= n {
            return None;
        }
        self.arrivals.get((t - n - 1) as usize).copied()
    }

    pub fn initial_histogram(&self) -> Histogram {
        Histogram::from_counts(&self.initial).expect("validated at construction")
    }

    /// Counts of the database at time `t`.
    pub fn counts_at(&self, t: u64) -> Result<Vec<u64>> {
        let n = self.start();
        if t < n || t > self.horizon() {
            return Err(invalid(format!(
                "time {t} outside stream range [{n}, {}]",
                self.horizon()
            )));
        }
        let mut counts = self.initial.clone();
        for &a in &self.arrivals[..(t - n) as usize] {
            counts[a] += 1;
        }
        Ok(counts)
    }

    /// Exact histogram `x_t`.
    pub fn histogram_at(&self, t: u64) -> Result<Histogram> {
        Histogram::from_counts(&self.counts_at(t)?)
    }

    /// Histograms `x_n, x_{n+1}, …, x_horizon` built incrementally.
    pub fn histograms(&self) -> impl Iterator<Item = Histogram> + '_ {
        let mut counts = self.initial.clone();
        std::iter::once(None)
            .chain(self.arrivals.iter().map(Some))
            .map(move |arrival| {
                if let Some(&a) = arrival {
                    counts[a] += 1;
                }
                Histogram::from_counts(&counts).expect("non-empty counts")
            })
    }

    /// Prefix of the stream ending at time `t`.
    pub fn truncated(&self, t: u64) -> Result<DatabaseStream> {
        let n = self.start();
        if t < n {
            return Err(invalid(format!("cannot truncate before start {n}")));
        }
        let keep = ((t - n) as usize).min(self.arrivals.len());
        Ok(DatabaseStream {
            universe: self.universe,
            initial: self.initial.clone(),
            arrivals: self.arrivals[..keep].to_vec(),
        })
    }

    /// Writes the JSONL stream format: a header line with `n`, `N` and the
    /// initial counts, then one `{"arrival": i}` line per time step.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        let header = StreamHeader {
            n: self.start(),
            universe: self.universe.size(),
            initial: self.initial.clone(),
        };
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n")?;
        for &a in &self.arrivals {
            serde_json::to_writer(&mut out, &ArrivalLine { arrival: a })?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header_line = loop {
            match lines.next() {
                Some(line) => {
                    let line = line?;
                    if !line.trim().is_empty() {
                        break line;
                    }
                }
                None => return Err(Error::Format("empty stream file".into())),
            }
        };
        let header: StreamHeader = serde_json::from_str(&header_line)?;
        if header.initial.len() != header.universe {
            return Err(Error::Format(format!(
                "initial counts have length {}, expected N = {}",
                header.initial.len(),
                header.universe
            )));
        }
        if header.initial.iter().sum::<u64>() != header.n {
            return Err(Error::Format(format!(
                "initial counts sum to {}, expected n = {}",
                header.initial.iter().sum::<u64>(),
                header.n
            )));
        }
        let mut arrivals = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let a: ArrivalLine = serde_json::from_str(&line)?;
            arrivals.push(a.arrival);
        }
        DatabaseStream::new(header.initial, arrivals)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StreamHeader {
    n: u64,
    #[serde(rename = "N")]
    universe: usize,
    initial: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArrivalLine {
    arrival: usize,
}

/// Whether two streams are neighbors: identical up to some time, then
/// differing in exactly one substituted record from that time on.
pub fn neighboring(a: &DatabaseStream, b: &DatabaseStream) -> bool {
    if a.universe != b.universe || a.start() != b.start() || a.arrivals.len() != b.arrivals.len()
    {
        return false;
    }
    let initial_l1: u64 = a
        .initial
        .iter()
        .zip(&b.initial)
        .map(|(x, y)| x.abs_diff(*y))
        .sum();
    let arrival_diffs = a
        .arrivals
        .iter()
        .zip(&b.arrivals)
        .filter(|(x, y)| x != y)
        .count();
    matches!((initial_l1, arrival_diffs), (2, 0) | (0, 1))
}
