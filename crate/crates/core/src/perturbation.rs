//! Reproducible random streams and exponential perturbations.
//!
//! A [`Stream`] names an independent source of randomness by
//! `(master seed, replication, purpose tag)`; a *position* inside the stream
//! (typically the round index) selects an independent sub-sequence. Two
//! calls with the same stream and position always produce the same numbers,
//! so frozen-σ and fresh-σ play share the same plumbing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Identifies an independent random stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Stream {
    seed: u64,
    replication: u64,
    tag: u64,
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Stream {
            seed,
            replication: 0,
            tag: 0,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn replication_index(&self) -> u64 {
        self.replication
    }

    pub fn tag(&self) -> u64 {
        self.tag
    }

    /// Same master seed, different replication.
    pub fn replication(self, replication: u64) -> Self {
        Stream {
            replication,
            ..self
        }
    }

    /// Derive a sub-stream for a distinct purpose. Tags compose, so
    /// `s.child(a).child(b)` differs from `s.child(b).child(a)`.
    pub fn child(self, tag: u64) -> Self {
        Stream {
            tag: splitmix64(self.tag ^ splitmix64(tag.wrapping_add(0xA076_1D64_78BD_642F))),
            ..self
        }
    }

    /// A generator positioned at `position` inside this stream.
    pub fn rng_at(&self, position: u64) -> ChaCha8Rng {
        let mut state = self.seed;
        let mut key = [0u8; 32];
        let words = [
            splitmix64(state),
            {
                state ^= splitmix64(self.replication ^ 0x9E37_79B9_7F4A_7C15);
                splitmix64(state)
            },
            {
                state ^= splitmix64(self.tag ^ 0xBF58_476D_1CE4_E5B9);
                splitmix64(state)
            },
            splitmix64(state ^ 0x94D0_49BB_1331_11EB),
        ];
        for (chunk, w) in key.chunks_exact_mut(8).zip(words) {
            chunk.copy_from_slice(&w.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(position);
        rng
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A perturbation vector σ with i.i.d. `Exp(η)` coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpPerturbation {
    pub eta: f64,
    pub stream: Stream,
    pub position: u64,
    pub sigma: Vec<f64>,
}

impl ExpPerturbation {
    pub fn l1_norm(&self) -> f64 {
        self.sigma.iter().sum()
    }
}

/// Inverse-CDF draw of `Exp(η)` from a uniform `u ∈ [0, 1)`:
/// `−ln(1 − u)/η`, so that `P(σ ≥ s) = exp(−ηs)`.
///
/// `η = +∞` is accepted and yields `σ = 0` (a deterministic learner).
pub fn exp_inverse_cdf(u: f64, eta: f64) -> f64 {
    if eta.is_infinite() {
        return 0.0;
    }
    -(-u).ln_1p() / eta
}

/// Draw `d` i.i.d. `Exp(η)` coordinates from `stream` at `position`.
pub fn sample_perturbation(
    eta: f64,
    d: usize,
    stream: Stream,
    position: u64,
) -> Result<ExpPerturbation> {
    if !(eta > 0.0) {
        return Err(Error::param("eta", format!("must be positive, got {eta}")));
    }
    if d == 0 {
        return Err(Error::param("d", "must be at least 1"));
    }
    let mut rng = stream.rng_at(position);
    let sigma = (0..d)
        .map(|_| exp_inverse_cdf(rng.gen::<f64>(), eta))
        .collect();
    Ok(ExpPerturbation {
        eta,
        stream,
        position,
        sigma,
    })
}
