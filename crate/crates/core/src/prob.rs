//! Probability primitives: reproducible RNG streams, the three samplers the
//! environments need, and their log densities.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Maximum rejection attempts for [`TruncatedNormalSpec::sample`].
pub const MAX_REJECTIONS: usize = 10_000;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// A ChaCha8 stream addressed by `(seed, stream_id)`.
///
/// Streams with the same seed and different ids are independent keystreams
/// of the same key, so parallel workers can each own one without
/// coordination.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// A fresh stream under the same seed.
    pub fn substream(&self, stream_id: u64) -> Self {
        Self::new(self.seed, stream_id)
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianSpec {
    pub mean: f64,
    pub std: f64,
}

impl GaussianSpec {
    pub fn new(mean: f64, std: f64) -> Result<Self> {
        if !(std > 0.0 && std.is_finite()) || !mean.is_finite() {
            return Err(Error::config(
                "std",
                format!("must be positive and finite, got {std}"),
            ));
        }
        Ok(Self { mean, std })
    }

    /// Draws `mean + std * z`. A zero `std` returns `mean` exactly.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.mean + self.std * z
    }

    pub fn log_density(&self, y: f64) -> f64 {
        log_density_gaussian(y, self.mean, self.std)
    }
}

#[inline]
pub fn log_density_gaussian(y: f64, mean: f64, std: f64) -> f64 {
    let z = (y - mean) / std;
    -0.5 * z * z - std.ln() - 0.5 * LN_2PI
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncatedNormalSpec {
    pub mean: f64,
    pub std: f64,
    pub lower: f64,
    pub upper: f64,
}

impl TruncatedNormalSpec {
    pub fn new(mean: f64, std: f64, lower: f64, upper: f64) -> Result<Self> {
        if !(std > 0.0 && std.is_finite()) {
            return Err(Error::config(
                "std",
                format!("must be positive and finite, got {std}"),
            ));
        }
        if lower.is_nan() || upper.is_nan() || lower >= upper {
            return Err(Error::config(
                "lower",
                format!("need lower < upper, got [{lower}, {upper}]"),
            ));
        }
        Ok(Self {
            mean,
            std,
            lower,
            upper,
        })
    }

    /// Rejection sampling from the parent Gaussian.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        for _ in 0..MAX_REJECTIONS {
            let z: f64 = StandardNormal.sample(rng);
            let x = self.mean + self.std * z;
            if x >= self.lower && x <= self.upper {
                return Ok(x);
            }
        }
        Err(Error::RejectionLimit(MAX_REJECTIONS))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinomialSpec {
    pub trials: u64,
    pub success_prob: f64,
}

impl BinomialSpec {
    pub fn new(trials: u64, success_prob: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&success_prob) {
            return Err(Error::config(
                "success_prob",
                format!("must lie in [0, 1], got {success_prob}"),
            ));
        }
        Ok(Self {
            trials,
            success_prob,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        // Binomial::new only fails for p outside [0, 1], which `new` rules out.
        Binomial::new(self.trials, self.success_prob)
            .expect("validated binomial parameters")
            .sample(rng)
    }

    /// Log probability of `y` successes. Returns `-inf` for impossible outcomes.
    pub fn log_pmf(&self, y: u64) -> f64 {
        let p = self.success_prob;
        log_pmf_binomial_from_logs(y, self.trials, p.ln(), (-p).ln_1p())
    }
}

/// `log C(n, k)` through log-gamma.
pub fn ln_choose(n: u64, k: u64) -> f64 {
    debug_assert!(k <= n);
    libm::lgamma(n as f64 + 1.0) - libm::lgamma(k as f64 + 1.0) - libm::lgamma((n - k) as f64 + 1.0)
}

/// Binomial log pmf given `ln p` and `ln(1 - p)` directly.
///
/// Callers that know `ln(1 - p)` in closed form (the death process has
/// `ln(1 - p) = -theta * xi`) avoid cancellation this way. Uses
/// `0 * ln 0 = 0`.
pub fn log_pmf_binomial_from_logs(y: u64, trials: u64, ln_p: f64, ln_q: f64) -> f64 {
    assert!(y <= trials, "binomial outcome {y} exceeds {trials} trials");
    let success = if y == 0 { 0.0 } else { y as f64 * ln_p };
    let failure = if y == trials {
        0.0
    } else {
        (trials - y) as f64 * ln_q
    };
    let total = success + failure;
    if total == f64::NEG_INFINITY {
        return total;
    }
    ln_choose(trials, y) + total
}

/// `ln(sum(exp(xs)))`, stable for large magnitudes. Empty input gives `-inf`.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    if max == f64::INFINITY {
        return max;
    }
    let sum: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Mean and standard error of the mean.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_err: f64,
    pub count: usize,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                std_err: f64::NAN,
                count: 0,
            };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let std_err = if n > 1 {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            f64::NAN
        };
        Self {
            mean,
            std_err,
            count: n,
        }
    }
}
