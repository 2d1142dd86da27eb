//! Named, seeded random streams.
//!
//! Every workload dimension draws from its own stream so that changing one
//! generator never perturbs the sequence seen by another. A stream is a
//! ChaCha8 generator seeded from the run seed with the ChaCha stream word set
//! from a stable hash of the label.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistError {
    #[error("invalid distribution parameters: {0}")]
    InvalidDistributionParams(String),
}

/// Distribution accepted by [`RngStream::draw`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Dist {
    Constant(f64),
    Uniform { low: f64, high: f64 },
    Normal { mean: f64, std_dev: f64 },
    /// Normal conditioned on `x > lower`, sampled by rejection.
    TruncatedNormal { mean: f64, std_dev: f64, lower: f64 },
    Poisson { lambda: f64 },
}

// Beyond this many standard deviations above the mean the acceptance rate is
// below 1e-15 and rejection sampling would not terminate in practice.
const MAX_TRUNCATION_Z: f64 = 8.0;

impl Dist {
    pub fn validate(&self) -> Result<(), DistError> {
        let bad = |msg: String| Err(DistError::InvalidDistributionParams(msg));
        match *self {
            Dist::Constant(v) if !v.is_finite() => bad(format!("constant {v} is not finite")),
            Dist::Uniform { low, high } if !(low.is_finite() && high.is_finite() && low <= high) => {
                bad(format!("uniform bounds [{low}, {high}]"))
            }
            Dist::Normal { mean, std_dev } if !(mean.is_finite() && std_dev.is_finite() && std_dev >= 0.0) => {
                bad(format!("normal mean={mean} sigma={std_dev}"))
            }
            Dist::TruncatedNormal { mean, std_dev, lower } => {
                if !(mean.is_finite() && std_dev.is_finite() && std_dev >= 0.0 && lower.is_finite()) {
                    return bad(format!("truncated normal mean={mean} sigma={std_dev} lower={lower}"));
                }
                let unreachable = if std_dev == 0.0 {
                    mean <= lower
                } else {
                    (lower - mean) / std_dev > MAX_TRUNCATION_Z
                };
                if unreachable {
                    return bad(format!("truncation at {lower} leaves no mass for mean={mean} sigma={std_dev}"));
                }
                Ok(())
            }
            Dist::Poisson { lambda } if !(lambda.is_finite() && lambda >= 0.0) => bad(format!("poisson lambda={lambda}")),
            _ => Ok(()),
        }
    }
}

/// FNV-1a, used only to turn stream labels into stable 64-bit stream words.
fn label_hash(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// A deterministic random stream identified by `(seed, stream_id)`.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: String,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: &str) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(label_hash(stream_id));
        RngStream { seed, stream_id: stream_id.to_owned(), rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> &str {
        &self.stream_id
    }

    /// Next value of the stream under `dist`.
    pub fn draw(&mut self, dist: &Dist) -> Result<f64, DistError> {
        dist.validate()?;
        Ok(match *dist {
            Dist::Constant(v) => v,
            Dist::Uniform { low, high } => {
                if low == high {
                    low
                } else {
                    self.rng.random_range(low..high)
                }
            }
            Dist::Normal { mean, std_dev } => self.normal(mean, std_dev),
            Dist::TruncatedNormal { mean, std_dev, lower } => loop {
                let x = self.normal(mean, std_dev);
                if x > lower {
                    break x;
                }
            },
            Dist::Poisson { lambda } => {
                if lambda == 0.0 {
                    0.0
                } else {
                    Poisson::new(lambda).expect("validated").sample(&mut self.rng)
                }
            }
        })
    }

    fn normal(&mut self, mean: f64, std_dev: f64) -> f64 {
        if std_dev == 0.0 {
            return mean;
        }
        Normal::new(mean, std_dev).expect("validated").sample(&mut self.rng)
    }

    /// Direct access for callers that need `rand` helpers (ranges, shuffles).
    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}
