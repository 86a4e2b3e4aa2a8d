//! Stochastic gradient descent and stochastic heavy ball, plus the machinery
//! to verify their convergence behaviour empirically: synthetic objectives with
//! certified smoothness metadata, assumption-compliant gradient oracles,
//! polynomially decaying step schedules with validity gates, per-run
//! diagnostics, and rate/envelope checks over seeded ensembles.

pub mod error;
pub mod objectives;
pub mod optim;
pub mod oracle;
pub mod presets;
pub mod rates;
pub mod seqkit;
pub mod suite;

pub use error::{Error, Result};
pub use objectives::Objective;
pub use optim::{ShbConstants, ShbState, StepSchedule, Trajectory};
pub use oracle::{GradientSample, NoiseConstants, StochasticOracle};
pub use rates::{Ensemble, RateReport};
pub use seqkit::{RecursionVerdict, SequencePrefix, TrendReport};

/// Derives the per-seed RNG for `(master_seed, seed_index)`.
///
/// The stream is a ChaCha8 cipher keyed by splitmix64-style mixing of the two
/// inputs, so adding seeds to an ensemble never perturbs existing ones.
pub fn seed_rng(master_seed: u64, seed_index: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    let mut key = [0u8; 32];
    let mut state = master_seed;
    for (lane, chunk) in key.chunks_exact_mut(8).enumerate() {
        state = state
            .wrapping_add(0x9e37_79b9_7f4a_7c15)
            .wrapping_add(seed_index.rotate_left(17) ^ (lane as u64));
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
        chunk.copy_from_slice(&z.to_le_bytes());
    }
    rand_chacha::ChaCha8Rng::from_seed(key)
}

/// Euclidean norm squared.
pub(crate) fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Inner product of two equal-length slices.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
