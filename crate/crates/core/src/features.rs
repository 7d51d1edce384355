//! Hashed character n-gram features.
//!
//! A text is split into Unicode scalar values; every contiguous run of `n`
//! scalars for each requested order `n` is hashed with 64-bit FNV-1a over its
//! UTF-8 bytes, and the hash masked to `feature_dim - 1` picks the slot.
//! Colliding n-grams add up. The count vector is then L2-normalized.

use alloc::vec::Vec;
use core::hash::Hasher;

use fnv::FnvHasher;

use crate::types::Pool;

/// Sparse vector with strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVector {
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl SparseVector {
    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().zip(&self.values).map(|(&i, &v)| (i as usize, v))
    }

    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.iter().map(|(i, v)| dense[i] * v).sum()
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.values.iter().map(|v| v * v).sum())
    }
}

/// FNV-1a 64 of the n-gram's UTF-8 bytes.
pub fn hash_ngram(ngram: &str) -> u64 {
    let mut h = FnvHasher::default();
    h.write(ngram.as_bytes());
    h.finish()
}

/// Slot of an n-gram in a `feature_dim`-wide space (`feature_dim` a power of two).
pub fn slot(ngram: &str, feature_dim: usize) -> u32 {
    (hash_ngram(ngram) & (feature_dim as u64 - 1)) as u32
}

/// L2-normalized hashed n-gram counts of `text`.
///
/// Texts shorter than an order contribute nothing for that order. An input
/// with no n-grams at all yields the empty vector.
pub fn featurize(text: &str, ngram_orders: &[usize], feature_dim: usize) -> SparseVector {
    debug_assert!(feature_dim.is_power_of_two());
    // Byte offset of every scalar plus the end, so n-grams slice without copying.
    let mut bounds: Vec<usize> = text.char_indices().map(|(i, _)| i).collect();
    bounds.push(text.len());
    let chars = bounds.len() - 1;

    let mut slots: Vec<u32> = Vec::new();
    for &n in ngram_orders {
        if n == 0 || n > chars {
            continue;
        }
        for start in 0..=chars - n {
            slots.push(slot(&text[bounds[start]..bounds[start + n]], feature_dim));
        }
    }
    slots.sort_unstable();

    let mut out = SparseVector::default();
    for s in slots {
        match out.indices.last() {
            Some(&last) if last == s => *out.values.last_mut().unwrap() += 1.0,
            _ => {
                out.indices.push(s);
                out.values.push(1.0);
            }
        }
    }
    let norm = out.norm();
    if norm > 0.0 {
        out.values.iter_mut().for_each(|v| *v /= norm);
    }
    out
}

/// Features of every pool point, in pool order.
pub fn featurize_pool(pool: &Pool, ngram_orders: &[usize], feature_dim: usize) -> Vec<SparseVector> {
    pool.iter()
        .map(|p| featurize(p.text(), ngram_orders, feature_dim))
        .collect()
}
