use super::{
    check_eps, exponential_mechanism, BlackBoxContract, MechanismParams, StaticMechanism,
};
use crate::db::{Histogram, LinearQuery};
use crate::error::{invalid, Error, Result};
use crate::noise::RandomSource;

/// Largest number of candidate databases SmallDB will enumerate.
pub const MAX_CANDIDATES: u64 = 1_000_000;

/// Synthetic database size `m = max(1, ⌈ln k / α²⌉)`.
pub fn synthetic_size(k: usize, alpha: f64) -> Result<usize> {
    if k == 0 {
        return Err(invalid("SmallDB needs at least one query"));
    }
    if !(alpha > 0.0) {
        return Err(invalid(format!("alpha must be positive, got {alpha}")));
    }
    let m = ((k as f64).ln() / (alpha * alpha)).ceil();
    if m > MAX_CANDIDATES as f64 {
        return Err(Error::InstanceTooLarge(format!("synthetic size {m}")));
    }
    Ok((m as usize).max(1))
}

/// Number of multisets of size `m` over `N` types, `C(N+m−1, m)`, or
/// `None` past `u64`.
pub fn multiset_count(universe: usize, m: usize) -> Option<u64> {
    let mut c: u128 = 1;
    for i in 1..=m as u128 {
        c = c * (universe as u128 + i - 1) / i;
        if c > u64::MAX as u128 {
            return None;
        }
    }
    Some(c as u64)
}

/// All count vectors of length `universe` summing to `m`, in lexicographic
/// order.
fn compositions(universe: usize, m: usize) -> Vec<Vec<u64>> {
    let mut out = Vec::new();
    let mut current = vec![0u64; universe];
    fn fill(pos: usize, left: u64, current: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
        if pos + 1 == current.len() {
            current[pos] = left;
            out.push(current.clone());
            return;
        }
        for c in (0..=left).rev() {
            current[pos] = c;
            fill(pos + 1, left - c, current, out);
        }
    }
    fill(0, m as u64, &mut current, &mut out);
    out
}

/// Samples a synthetic database of size `m = ⌈ln k/α²⌉` with the
/// exponential mechanism, utility `−max_f |f(x) − f(z)|` and sensitivity
/// `1/t`. The draw uses path `(t, 0, Selection)`.
pub fn smalldb(
    x: &Histogram,
    queries: &[LinearQuery],
    eps: f64,
    alpha: f64,
    rng: &RandomSource,
) -> Result<Histogram> {
    check_eps(eps)?;
    let m = synthetic_size(queries.len(), alpha)?;
    let n_types = x.weights().len();
    match multiset_count(n_types, m) {
        Some(c) if c <= MAX_CANDIDATES => {}
        _ => {
            return Err(Error::InstanceTooLarge(format!(
                "{n_types} types with synthetic size {m}"
            )))
        }
    }
    let truth: Vec<f64> = queries.iter().map(|q| q.eval(x)).collect::<Result<_>>()?;
    let candidates: Vec<Histogram> = compositions(n_types, m)
        .iter()
        .map(|c| Histogram::from_counts(c))
        .collect::<Result<_>>()?;
    let utilities: Vec<f64> = candidates
        .iter()
        .map(|z| {
            queries
                .iter()
                .zip(&truth)
                .map(|(q, fx)| (q.eval_weights(z.weights()) - fx).abs())
                .fold(0.0, f64::max)
        })
        .map(|worst| -worst)
        .collect();
    let t = x.size();
    let pick = exponential_mechanism(&utilities, 1.0 / t as f64, eps, rng, t, 0)?;
    Ok(candidates.into_iter().nth(pick).expect("index in range"))
}

/// SmallDB over a fixed query class.
#[derive(Clone, Debug)]
pub struct SmallDb {
    queries: Vec<LinearQuery>,
    universe: usize,
}

impl SmallDb {
    pub fn new(queries: Vec<LinearQuery>) -> Result<Self> {
        let universe = queries
            .first()
            .ok_or_else(|| invalid("SmallDB needs at least one query"))?
            .weights()
            .len();
        if queries.iter().any(|q| q.weights().len() != universe) {
            return Err(invalid("queries must share a universe"));
        }
        Ok(SmallDb { queries, universe })
    }

    pub fn queries(&self) -> &[LinearQuery] {
        &self.queries
    }
}

impl StaticMechanism for SmallDb {
    type Output = Histogram;

    fn name(&self) -> &'static str {
        "smalldb"
    }

    /// `p = 1/3`, `g = (64·ln N·ln k)^{1/3}` with both logs floored at 1.
    fn contract(&self) -> BlackBoxContract {
        let ln_n = (self.universe as f64).ln().max(1.0);
        let ln_k = (self.queries.len() as f64).ln().max(1.0);
        BlackBoxContract::new(1.0 / 3.0, (64.0 * ln_n * ln_k).cbrt()).expect("positive")
    }

    fn run(&self, x: &Histogram, params: &MechanismParams, rng: &RandomSource) -> Result<Histogram> {
        smalldb(x, &self.queries, params.eps, params.alpha.min(1.0), rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes() {
        assert_eq!(synthetic_size(3, 0.4).unwrap(), 7);
        assert_eq!(synthetic_size(1, 0.4).unwrap(), 1);
        assert_eq!(multiset_count(4, 7), Some(120));
        assert_eq!(compositions(4, 7).len(), 120);
        assert_eq!(compositions(3, 2).len(), multiset_count(3, 2).unwrap() as usize);
    }

    #[test]
    fn argmax_limit() {
        let x = Histogram::from_counts(&[5, 5]).unwrap();
        let f = LinearQuery::new("f", vec![1.0, 0.0]).unwrap();
        for seed in 0..20 {
            // ln 2 / 0.3² gives m = 8, so z = (4,4) answers exactly.
            let z = smalldb(&x, &[f.clone(), f.complement()], 1e6, 0.3, &RandomSource::seeded(seed))
                .unwrap();
            assert!((f.eval(&z).unwrap() - 0.5).abs() < 1e-12);
        }
    }

    /// For every 0/1 query the best size-`m` database is within `1/(2m)`.
    /// No single rounding achieves this for all queries at once:
    /// `x = (⅓,⅓,⅓)`, `m = 2` already misses.
    #[test]
    fn per_query_rounding_bound() {
        for m in 1..=6usize {
            let candidates: Vec<Histogram> = compositions(3, m)
                .iter()
                .map(|c| Histogram::from_counts(c).unwrap())
                .collect();
            for t in 1..=12u64 {
                for a in 0..=t {
                    for b in 0..=(t - a) {
                        let x = Histogram::from_counts(&[a, b, t - a - b]).unwrap();
                        for mask in 0..8u32 {
                            let f = LinearQuery::new("f", (0..3).map(|i| ((mask >> i) & 1) as f64).collect())
                                .unwrap();
                            let fx = f.eval(&x).unwrap();
                            let best = candidates
                                .iter()
                                .map(|z| (f.eval(z).unwrap() - fx).abs())
                                .fold(f64::INFINITY, f64::min);
                            assert!(best <= 0.5 / m as f64 + 1e-12, "m={m} x=({a},{b},{}) f={mask}", t - a - b);
                        }
                    }
                }
            }
        }
        let x = Histogram::from_counts(&[1, 1, 1]).unwrap();
        let joint = compositions(3, 2)
            .iter()
            .map(|c| {
                let z = Histogram::from_counts(c).unwrap();
                0.5 * x.weights().iter().zip(z.weights()).map(|(p, q)| (p - q).abs()).sum::<f64>()
            })
            .fold(f64::INFINITY, f64::min);
        assert!(joint > 0.25);
    }

    #[test]
    fn too_large_rejected() {
        let x = Histogram::from_counts(&[1; 40]).unwrap();
        let f = LinearQuery::new("f", vec![0.5; 40]).unwrap();
        let qs = vec![f; 3];
        assert!(matches!(
            smalldb(&x, &qs, 1.0, 0.1, &RandomSource::seeded(0)),
            Err(Error::InstanceTooLarge(_))
        ));
    }
}
