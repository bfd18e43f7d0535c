//! Deterministic, seedable sampling of attribute-value indices under the
//! supported distribution families, plus the closed-form expected-count math
//! used by attestation.
//!
//! All randomness flows through [`RngStream`]: a ChaCha8 generator whose
//! 256-bit seed is derived as SHA-256(master_seed || stream_id). Identical
//! (master_seed, stream_id) pairs always reproduce the same sequence, and
//! distinct stream ids under one master seed give independent streams, so
//! per-attribute columns can be drawn concurrently without losing
//! reproducibility.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use sha2::{Digest, Sha256};

use crate::normal::{phi, phi_complement};
use crate::spec::DistributionSpec;

/// Sum tolerance for a valid probability vector.
pub const MASS_SUM_TOLERANCE: f64 = 1e-12;

/// Truncation mass below which a Normal spec is rejected as unusable.
const DEGENERATE_TRUNCATION_FLOOR: f64 = 1e-300;

/// Acceptance probability below which rejection sampling is abandoned in
/// favor of inverse-CDF sampling over the bin masses.
const REJECTION_MIN_ACCEPTANCE: f64 = 0.01;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SamplingError {
    #[error("value count must be at least 1, got {0}")]
    InvalidValueCount(usize),
    #[error("poisson lambda must be positive and finite, got {0}")]
    InvalidLambda(f64),
    #[error("normal variance must be positive and finite, got {0}")]
    InvalidVariance(f64),
    #[error("normal mean must be finite, got {0}")]
    InvalidMean(f64),
    #[error(
        "truncated normal mass on [0, {n}] underflows for mean={mu}, variance={variance}: \
         the distribution is unusable on this value range"
    )]
    DegenerateTruncation { mu: f64, variance: f64, n: usize },
    #[error("bin masses invalid: {0}")]
    InvalidMasses(String),
}

/// A named, seedable random stream.
///
/// The stream id is conventionally the attribute name (e.g. `"SA_2"`), which
/// ties every draw sequence to the attribute it serves.
#[derive(Debug, Clone)]
pub struct RngStream {
    master_seed: u64,
    stream_id: String,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: &str) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(master_seed.to_le_bytes());
        hasher.update(stream_id.as_bytes());
        let digest = hasher.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        RngStream {
            master_seed,
            stream_id: stream_id.to_string(),
            rng: ChaCha8Rng::from_seed(seed),
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_id(&self) -> &str {
        &self.stream_id
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform draw in [0, 1) with 53-bit resolution.
    pub fn next_f64(&mut self) -> f64 {
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        (self.next_u64() >> 11) as f64 * SCALE
    }

    /// Uniform draw in [0, bound) without modulo bias.
    pub fn next_u128_below(&mut self, bound: u128) -> u128 {
        assert!(bound > 0, "bound must be positive");
        if bound == 1 {
            return 0;
        }
        let bits = 128 - (bound - 1).leading_zeros();
        let mask = if bits == 128 {
            u128::MAX
        } else {
            (1u128 << bits) - 1
        };
        loop {
            let raw = ((self.next_u64() as u128) << 64) | self.next_u64() as u128;
            let candidate = raw & mask;
            if candidate < bound {
                return candidate;
            }
        }
    }
}

/// A normalized probability vector over the value indices of one attribute.
#[derive(Debug, Clone, PartialEq)]
pub struct BinMasses(Vec<f64>);

impl BinMasses {
    /// Validates non-negativity and that the masses sum to 1 within
    /// [`MASS_SUM_TOLERANCE`].
    pub fn new(masses: Vec<f64>) -> Result<Self, SamplingError> {
        if masses.is_empty() {
            return Err(SamplingError::InvalidMasses("empty mass vector".into()));
        }
        for (i, &p) in masses.iter().enumerate() {
            if !p.is_finite() || p < 0.0 {
                return Err(SamplingError::InvalidMasses(format!(
                    "mass[{i}] = {p} is not a probability"
                )));
            }
        }
        let sum: f64 = masses.iter().sum();
        if (sum - 1.0).abs() > MASS_SUM_TOLERANCE {
            return Err(SamplingError::InvalidMasses(format!(
                "masses sum to {sum}, expected 1"
            )));
        }
        Ok(BinMasses(masses))
    }

    fn from_weights(mut weights: Vec<f64>) -> Result<Self, SamplingError> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(SamplingError::InvalidMasses(format!(
                "weights sum to {total}"
            )));
        }
        for w in &mut weights {
            *w /= total;
        }
        BinMasses::new(weights)
    }

    pub fn masses(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Draws a 1-based index uniformly from [1, n] with a single uniform draw.
pub fn sample_uniform_index(n: usize, rng: &mut RngStream) -> Result<usize, SamplingError> {
    if n < 1 {
        return Err(SamplingError::InvalidValueCount(n));
    }
    let u = rng.next_f64();
    Ok(((u * n as f64) as usize + 1).min(n))
}

/// Probability that a Normal(mu, variance) draw truncated to [0, n] lands in
/// each of the n unit bins: p_k proportional to phi((k-mu)/sigma) -
/// phi((k-1-mu)/sigma), renormalized over the interval.
///
/// Each difference is evaluated through whichever tail of the CDF keeps
/// relative precision, then the vector is normalized by its own sum so the
/// masses always add to exactly 1.
pub fn truncated_normal_bin_masses(
    mu: f64,
    variance: f64,
    n: usize,
) -> Result<BinMasses, SamplingError> {
    check_normal_params(mu, variance)?;
    if n < 1 {
        return Err(SamplingError::InvalidValueCount(n));
    }
    let sigma = variance.sqrt();
    let z = truncation_mass(mu, sigma, n);
    if !(z > DEGENERATE_TRUNCATION_FLOOR) {
        return Err(SamplingError::DegenerateTruncation { mu, variance, n });
    }
    let mut weights = Vec::with_capacity(n);
    for k in 1..=n {
        let lo = (k as f64 - 1.0 - mu) / sigma;
        let hi = (k as f64 - mu) / sigma;
        weights.push(cdf_interval_mass(lo, hi));
    }
    BinMasses::from_weights(weights)
}

// P(lo < Z <= hi) for a standard normal, choosing the tail that avoids
// cancellation: both endpoints on the right use the complement form.
fn cdf_interval_mass(lo: f64, hi: f64) -> f64 {
    debug_assert!(lo <= hi);
    let mass = if lo + hi >= 0.0 {
        phi_complement(lo) - phi_complement(hi)
    } else {
        phi(hi) - phi(lo)
    };
    mass.max(0.0)
}

fn truncation_mass(mu: f64, sigma: f64, n: usize) -> f64 {
    cdf_interval_mass((0.0 - mu) / sigma, (n as f64 - mu) / sigma)
}

fn check_normal_params(mu: f64, variance: f64) -> Result<(), SamplingError> {
    if !mu.is_finite() {
        return Err(SamplingError::InvalidMean(mu));
    }
    if !variance.is_finite() || variance <= 0.0 {
        return Err(SamplingError::InvalidVariance(variance));
    }
    Ok(())
}

/// Draws x from Normal(mu, variance) truncated to [0, n] and returns the
/// 1-based bin index ceil(x), with x = 0 mapping to bin 1.
///
/// Fast path: rejection from the untruncated normal (Box-Muller, two uniform
/// draws per candidate). When the truncation mass is below
/// [`REJECTION_MIN_ACCEPTANCE`] the draw falls back to inverse-CDF sampling
/// over the bin masses, which has the same index distribution.
pub fn sample_truncated_normal_index(
    mu: f64,
    variance: f64,
    n: usize,
    rng: &mut RngStream,
) -> Result<usize, SamplingError> {
    check_normal_params(mu, variance)?;
    if n < 1 {
        return Err(SamplingError::InvalidValueCount(n));
    }
    let sigma = variance.sqrt();
    let z = truncation_mass(mu, sigma, n);
    if !(z > DEGENERATE_TRUNCATION_FLOOR) {
        return Err(SamplingError::DegenerateTruncation { mu, variance, n });
    }
    if n == 1 {
        return Ok(1);
    }
    if z >= REJECTION_MIN_ACCEPTANCE {
        // Expected iterations 1/z <= 100; the cap is unreachable in practice
        // but bounds the loop deterministically.
        for _ in 0..10_000 {
            let x = mu + sigma * standard_normal(rng);
            if (0.0..=n as f64).contains(&x) {
                return Ok(bin_for(x, n));
            }
        }
    }
    let masses = truncated_normal_bin_masses(mu, variance, n)?;
    Ok(sample_categorical(&masses, rng))
}

fn bin_for(x: f64, n: usize) -> usize {
    (x.ceil() as usize).clamp(1, n)
}

// Box-Muller transform, cosine branch only: exactly two uniform draws per
// standard-normal sample.
fn standard_normal(rng: &mut RngStream) -> f64 {
    let u1 = rng.next_f64().max(f64::MIN_POSITIVE);
    let u2 = rng.next_f64();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Normalized Poisson weights w_k proportional to lambda^k / k! over the
/// support k = 1..n.
///
/// Uses the recurrence w_{k+1} = w_k * lambda / (k + 1); the e^-lambda factor
/// cancels under normalization. Intermediate weights are rescaled when they
/// grow large so the recurrence never overflows.
pub fn poisson_weights(lambda: f64, n: usize) -> Result<BinMasses, SamplingError> {
    if !lambda.is_finite() || lambda <= 0.0 {
        return Err(SamplingError::InvalidLambda(lambda));
    }
    if n < 1 {
        return Err(SamplingError::InvalidValueCount(n));
    }
    const RESCALE_ABOVE: f64 = 1e250;
    let mut weights = Vec::with_capacity(n);
    let mut w = 1.0f64; // proportional to lambda^1 / 1!
    for k in 1..=n {
        weights.push(w);
        if w > RESCALE_ABOVE {
            for v in &mut weights {
                *v /= RESCALE_ABOVE;
            }
            w /= RESCALE_ABOVE;
        }
        w *= lambda / (k as f64 + 1.0);
    }
    BinMasses::from_weights(weights)
}

/// Inverse-CDF draw over a discrete mass vector: a single uniform draw walked
/// against the cumulative sums. Returns a 1-based index.
pub fn sample_categorical(masses: &BinMasses, rng: &mut RngStream) -> usize {
    let u = rng.next_f64();
    let mut cum = 0.0;
    for (i, &p) in masses.masses().iter().enumerate() {
        cum += p;
        if u < cum {
            return i + 1;
        }
    }
    masses.len()
}

/// Expected per-value assignment counts for `population` entities under the
/// given distribution over `n` values.
pub fn expected_counts(
    dist: &DistributionSpec,
    n: usize,
    population: u64,
) -> Result<Vec<f64>, SamplingError> {
    if n < 1 {
        return Err(SamplingError::InvalidValueCount(n));
    }
    let pop = population as f64;
    match dist {
        DistributionSpec::Uniform => Ok(vec![pop / n as f64; n]),
        DistributionSpec::Normal { mean, variance } => {
            let masses = truncated_normal_bin_masses(*mean, *variance, n)?;
            Ok(masses.masses().iter().map(|p| p * pop).collect())
        }
        DistributionSpec::Poisson { lambda } => {
            let weights = poisson_weights(*lambda, n)?;
            Ok(weights.masses().iter().map(|p| p * pop).collect())
        }
    }
}

/// Draws one 1-based value index according to `dist`.
pub fn sample_index(
    dist: &DistributionSpec,
    n: usize,
    rng: &mut RngStream,
) -> Result<usize, SamplingError> {
    match dist {
        DistributionSpec::Uniform => sample_uniform_index(n, rng),
        DistributionSpec::Normal { mean, variance } => {
            sample_truncated_normal_index(*mean, *variance, n, rng)
        }
        DistributionSpec::Poisson { lambda } => {
            let weights = poisson_weights(*lambda, n)?;
            Ok(sample_categorical(&weights, rng))
        }
    }
}
