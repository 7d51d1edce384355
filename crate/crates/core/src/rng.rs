//! Deterministic randomness.
//!
//! Every stream is a ChaCha8 generator (`rand_chacha::ChaCha8Rng`). The key is
//! derived with `seed_from_u64(seed ^ purpose_constant)` and the ChaCha stream
//! id selects a substream inside that purpose (usually the loop iteration).
//! ChaCha8 output is specified bit-for-bit, so identical seeds give identical
//! streams on every platform.
//!
//! Uniform bounded draws go through [`below`], which samples in `u64` rather
//! than `usize` so 32-bit and 64-bit targets agree.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type DetRng = ChaCha8Rng;

/// Purposes that get their own independent stream family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamPurpose {
    Selection,
    Evaluation,
    Training,
    OracleNoise,
    Synthesis,
}

impl StreamPurpose {
    /// Constant XOR-ed into the run seed.
    pub const fn constant(self) -> u64 {
        match self {
            StreamPurpose::Selection => 0x5e1e_c710_0000_0001,
            StreamPurpose::Evaluation => 0xe7a1_0a7e_0000_0002,
            StreamPurpose::Training => 0x7a41_0000_0000_0003,
            StreamPurpose::OracleNoise => 0x0a0c_1e00_0000_0004,
            StreamPurpose::Synthesis => 0x5a7e_0000_0000_0005,
        }
    }
}

/// The root stream for a seed.
pub fn new_rng(seed: u64) -> DetRng {
    DetRng::seed_from_u64(seed)
}

/// Substream `stream` of the family belonging to `purpose`.
pub fn substream(seed: u64, purpose: StreamPurpose, stream: u64) -> DetRng {
    let mut rng = DetRng::seed_from_u64(seed ^ purpose.constant());
    rng.set_stream(stream);
    rng
}

/// Uniform integer in `0..n`. Panics when `n == 0`.
pub fn below<R: Rng + ?Sized>(rng: &mut R, n: usize) -> usize {
    rng.random_range(0..n as u64) as usize
}

/// Uniform real in `[0, 1)`.
pub fn unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // 53 random mantissa bits.
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// In-place Fisher-Yates shuffle.
pub fn shuffle<T, R: Rng + ?Sized>(rng: &mut R, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = below(rng, i + 1);
        items.swap(i, j);
    }
}

/// `m` distinct indices from `0..n`, uniformly, in draw order.
///
/// Partial Fisher-Yates over an index vector. Panics when `m > n`.
pub fn sample_indices<R: Rng + ?Sized>(rng: &mut R, n: usize, m: usize) -> Vec<usize> {
    assert!(m <= n, "cannot sample {m} of {n}");
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..m {
        let j = i + below(rng, n - i);
        idx.swap(i, j);
    }
    idx.truncate(m);
    idx
}
