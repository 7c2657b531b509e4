use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::kernel::{ResultDigest, TaskResult};

/// Per-task and per-message failure probabilities for one worker.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultProfile {
    #[serde(default)]
    pub crash_prob: f64,
    #[serde(default)]
    pub byzantine_prob: f64,
    #[serde(default)]
    pub drop_prob: f64,
    #[serde(default)]
    pub rng_seed: u64,
}

impl Default for FaultProfile {
    fn default() -> Self {
        Self::honest()
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("{field} must be a probability in [0, 1], got {value}")]
pub struct InvalidProbability {
    pub field: &'static str,
    pub value: f64,
}

impl FaultProfile {
    pub fn honest() -> Self {
        Self {
            crash_prob: 0.0,
            byzantine_prob: 0.0,
            drop_prob: 0.0,
            rng_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), InvalidProbability> {
        for (field, value) in [
            ("crash_prob", self.crash_prob),
            ("byzantine_prob", self.byzantine_prob),
            ("drop_prob", self.drop_prob),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(InvalidProbability { field, value });
            }
        }
        Ok(())
    }

    /// Independent draw stream for worker number `stream`.
    pub fn rng_for(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
        rng.set_stream(stream);
        rng
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FaultOutcome {
    Honest(TaskResult),
    Corrupted(TaskResult),
    /// The worker hung on the task and emits nothing.
    Crashed,
}

/// Draw order per task: one uniform for crash; if not crashed, one uniform
/// for corruption; if corrupted, one bit index in 0..64.
pub fn apply_faults(profile: &FaultProfile, result: TaskResult, rng: &mut impl Rng) -> FaultOutcome {
    if rng.random::<f64>() < profile.crash_prob {
        return FaultOutcome::Crashed;
    }
    if rng.random::<f64>() < profile.byzantine_prob {
        let bit = rng.random_range(0..64u32);
        return FaultOutcome::Corrupted(TaskResult {
            digest: result.digest.flip_bit(bit),
            ..result
        });
    }
    FaultOutcome::Honest(result)
}

impl FaultOutcome {
    pub fn digest(&self) -> Option<ResultDigest> {
        match self {
            FaultOutcome::Honest(r) | FaultOutcome::Corrupted(r) => Some(r.digest),
            FaultOutcome::Crashed => None,
        }
    }
}
