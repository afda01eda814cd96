//! Seed derivation.
//!
//! All randomness in an experiment flows from one integer. Each component gets
//! `seed + offset` with a fixed offset per role; per-task seeds add
//! `TASK_STRIDE * (task + 1)` before the role offset.
//!
//! | role              | offset |
//! |-------------------|--------|
//! | synthetic data    | 1      |
//! | stream partition  | 2      |
//! | pretrain split    | 3      |
//! | task: queries     | 11     |
//! | task: labeler     | 12     |
//! | task: holdout     | 13     |

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const SYNTH: u64 = 1;
pub const STREAM: u64 = 2;
pub const PRETRAIN: u64 = 3;
pub const QUERY: u64 = 11;
pub const LABELER: u64 = 12;
pub const HOLDOUT: u64 = 13;

pub const TASK_STRIDE: u64 = 1000;

pub fn derive(seed: u64, offset: u64) -> u64 {
    seed.wrapping_add(offset)
}

/// Base seed for task `task` (1-based tasks are fine; 0 is reserved for none).
pub fn task(seed: u64, task: usize) -> u64 {
    seed.wrapping_add(TASK_STRIDE.wrapping_mul(task as u64 + 1))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
