//! Seeded randomness, Laplace sampling and noise-scaling functions.
//!
//! Every draw is addressed by a derivation path `(seed, labels…, t, j,
//! purpose)` and computed statelessly from it, so results never depend on
//! the order in which draws happen. A [`RandomSource::noiseless`] source
//! returns zero for every Laplace draw, which turns the algorithms into
//! deterministic traces.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};

/// What a draw is used for. Part of the derivation path.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Purpose {
    /// Noisy threshold of a sparse-vector run.
    Threshold,
    /// Per-query comparison noise.
    QueryNoise,
    /// Noise on a released numeric answer.
    NumericNoise,
    /// Exponential-mechanism selection.
    Selection,
    /// Laplace release of a static query answer.
    Release,
    /// Stream generation.
    Stream,
    /// Workload generation.
    Workload,
    Other(u32),
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Threshold => 1,
            Purpose::QueryNoise => 2,
            Purpose::NumericNoise => 3,
            Purpose::Selection => 4,
            Purpose::Release => 5,
            Purpose::Stream => 6,
            Purpose::Workload => 7,
            Purpose::Other(k) => 0x100 + k as u64,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Mode {
    Seeded { key: u64 },
    Noiseless,
}

/// Path-addressed randomness.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RandomSource {
    mode: Mode,
}

// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn combine(key: u64, component: u64) -> u64 {
    mix(key ^ mix(component))
}

impl RandomSource {
    pub fn seeded(seed: u64) -> Self {
        RandomSource {
            mode: Mode::Seeded { key: mix(seed) },
        }
    }

    pub fn noiseless() -> Self {
        RandomSource {
            mode: Mode::Noiseless,
        }
    }

    pub fn is_noiseless(&self) -> bool {
        matches!(self.mode, Mode::Noiseless)
    }

    /// Child source for a sub-path (a trial, an epoch, an algorithm
    /// instance). Noiseless sources stay noiseless.
    pub fn derive(&self, label: u64) -> Self {
        match self.mode {
            Mode::Seeded { key } => RandomSource {
                mode: Mode::Seeded {
                    key: combine(key, label),
                },
            },
            Mode::Noiseless => *self,
        }
    }

    /// A generator for the draw at `(t, j, purpose)`. Noiseless sources hand
    /// out a fixed generator; callers that must behave deterministically in
    /// noiseless mode should check [`RandomSource::is_noiseless`] first.
    pub fn rng(&self, t: u64, j: u64, purpose: Purpose) -> ChaCha8Rng {
        let key = match self.mode {
            Mode::Seeded { key } => key,
            Mode::Noiseless => 0,
        };
        let k = combine(combine(combine(key, t), j), purpose.tag());
        ChaCha8Rng::seed_from_u64(k)
    }

    /// Uniform draw in the open interval (0, 1). Noiseless sources return ½.
    pub fn uniform(&self, t: u64, j: u64, purpose: Purpose) -> f64 {
        if self.is_noiseless() {
            return 0.5;
        }
        open_unit(self.rng(t, j, purpose).next_u64())
    }

    /// Laplace draw with scale `b` at `(t, j, purpose)`.
    pub fn laplace(&self, scale: f64, t: u64, j: u64, purpose: Purpose) -> f64 {
        sample_laplace(scale, self, t, j, purpose)
    }
}

/// Maps 64 random bits to (0, 1) using the top 53 bits.
pub(crate) fn open_unit(bits: u64) -> f64 {
    ((bits >> 11) as f64 + 0.5) / (1u64 << 53) as f64
}

/// Standard Laplace by inverse CDF of a single uniform `u ∈ (0,1)`.
pub fn standard_laplace(u: f64) -> f64 {
    let centered = u - 0.5;
    -centered.signum() * (1.0 - 2.0 * centered.abs()).ln()
}

/// Laplace draw with density `(1/2b) e^{−|z|/b}`. Zero for a noiseless
/// source.
pub fn sample_laplace(scale: f64, rng: &RandomSource, t: u64, j: u64, purpose: Purpose) -> f64 {
    assert!(scale > 0.0 && scale.is_finite(), "Laplace scale must be positive");
    if rng.is_noiseless() {
        return 0.0;
    }
    scale * standard_laplace(rng.uniform(t, j, purpose))
}

/// Noise function `ξ_t = c·t^p` with `c > 0` and `p ∈ [0,1]`.
///
/// The exponent range is exactly what keeps `ξ` nondecreasing and
/// `ξ_t·Δ_t = c·t^{p−1}` nonincreasing, which the sparse-vector privacy
/// analysis requires.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseFunction {
    c: f64,
    p: f64,
}

impl NoiseFunction {
    pub fn new(c: f64, p: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(invalid(format!("noise coefficient must be positive, got {c}")));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(invalid(format!("noise exponent must lie in [0,1], got {p}")));
        }
        Ok(NoiseFunction { c, p })
    }

    pub fn coefficient(&self) -> f64 {
        self.c
    }

    pub fn exponent(&self) -> f64 {
        self.p
    }

    /// `ξ_t`.
    pub fn at(&self, t: u64) -> f64 {
        self.c * (t as f64).powf(self.p)
    }

    /// `ξ_t · Δ_t` with `Δ_t = 1/t`.
    pub fn times_sensitivity(&self, t: u64) -> f64 {
        self.c * (t as f64).powf(self.p - 1.0)
    }
}

/// Noise function used by PMWG.
///
/// With `p = None` this is the `t^{1/2}` calibration; with `Some(p)`,
/// `p ∈ [1/4, 1)`, the generalized family. `delta > 0` selects the
/// CDP-based calibration.
pub fn xi_pmwg(
    alpha: f64,
    n: u64,
    universe: usize,
    eps: f64,
    delta: f64,
    p: Option<f64>,
) -> Result<NoiseFunction> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(invalid(format!("alpha must lie in (0,1], got {alpha}")));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(invalid(format!("eps must be positive, got {eps}")));
    }
    if n == 0 || universe == 0 {
        return Err(invalid("n and N must be at least 1"));
    }
    if !(0.0..1.0).contains(&delta) {
        return Err(invalid(format!("delta must lie in [0,1), got {delta}")));
    }
    let log_nn = ((universe as f64) * (n as f64)).ln();
    if log_nn <= 0.0 {
        return Err(invalid("N·n must exceed 1"));
    }
    let nf = n as f64;
    let log_inv_delta = if delta > 0.0 { (1.0 / delta).ln() } else { 0.0 };
    let (c, exponent) = match p {
        None if delta == 0.0 => (alpha * alpha * nf.sqrt() * eps / (162.0 * log_nn), 0.5),
        None => (
            alpha * nf.sqrt() * eps / (48.0 * log_nn.sqrt() * log_inv_delta.sqrt()),
            0.5,
        ),
        Some(p) => {
            if !(0.25..1.0).contains(&p) {
                return Err(invalid(format!("noise exponent must lie in [1/4,1), got {p}")));
            }
            let q = 1.0 - p;
            let c = if delta == 0.0 {
                alpha * alpha * q * q * nf.powf(q) * eps / (126.0 * log_nn)
            } else {
                alpha * q * nf.powf(q) * eps / (24.0 * log_nn.sqrt() * log_inv_delta.sqrt())
            };
            (c, p)
        }
    };
    NoiseFunction::new(c, exponent)
}
