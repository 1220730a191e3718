use crate::error::{invalid, Result};
use crate::noise::{Purpose, RandomSource};

/// Samples index `i` with probability proportional to
/// `exp(ε·u_i / (2Δu))`, using the draw at `(t, j, Selection)`.
///
/// A noiseless source returns the first maximizer. `ε = 0` samples
/// uniformly.
pub fn exponential_mechanism(
    utilities: &[f64],
    sensitivity: f64,
    eps: f64,
    rng: &RandomSource,
    t: u64,
    j: u64,
) -> Result<usize> {
    if utilities.is_empty() {
        return Err(invalid("exponential mechanism needs at least one candidate"));
    }
    if !(sensitivity > 0.0) {
        return Err(invalid(format!("sensitivity must be positive, got {sensitivity}")));
    }
    if !(eps >= 0.0) {
        return Err(invalid(format!("eps must be nonnegative, got {eps}")));
    }
    if let Some(u) = utilities.iter().find(|u| !u.is_finite()) {
        return Err(invalid(format!("utility {u} is not finite")));
    }
    let best = utilities
        .iter()
        .enumerate()
        .fold(0, |b, (i, &u)| if u > utilities[b] { i } else { b });
    if rng.is_noiseless() || utilities.len() == 1 {
        return Ok(best);
    }

    let scale = eps / (2.0 * sensitivity);
    let top = utilities[best];
    let weights: Vec<f64> = utilities.iter().map(|u| (scale * (u - top)).exp()).collect();
    let total: f64 = weights.iter().sum();
    let target = rng.uniform(t, j, Purpose::Selection) * total;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if target < acc {
            return Ok(i);
        }
    }
    // Rounding left `target` at the very top.
    Ok(weights.iter().rposition(|&w| w > 0.0).unwrap_or(best))
}
