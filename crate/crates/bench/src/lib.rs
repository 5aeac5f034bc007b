// SPDX-License-Identifier: Apache-2.0

//! Seeded fixtures shared by the benchmarks.

use curriculum_core::corpus::{Corpus, Document, Stage};
use curriculum_core::gradstore::{CheckpointGradients, CheckpointSet};
use curriculum_core::influence::{influence_matrix, InfluenceConfig, InfluenceMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn gradients(checkpoint: u32, n: usize, d: usize, seed: u64) -> CheckpointGradients {
    let mut r = ChaCha8Rng::seed_from_u64(seed ^ (u64::from(checkpoint) << 32));
    let vals = (0..n * d).map(|_| r.gen_range(-1.0f32..1.0)).collect();
    CheckpointGradients::new(checkpoint, (0..n as u64).collect(), d, vals).expect("valid shape")
}

pub fn checkpoint_set(t: u32, n: usize, d: usize, seed: u64) -> CheckpointSet {
    CheckpointSet::new((0..t).map(|c| gradients(c, n, d, seed)).collect()).expect("consistent checkpoints")
}

pub fn corpus(n: usize, seed: u64) -> Corpus {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let docs = (0..n)
        .map(|i| {
            let len = r.gen_range(5..200);
            let words: Vec<String> = (0..len).map(|_| format!("w{}", r.gen_range(0..2000))).collect();
            let stage = Stage::ALL[r.gen_range(0..Stage::COUNT)];
            Document::new(i as u64, "bench", stage, &words.join(" "))
        })
        .collect();
    Corpus::new("bench", docs).expect("non-empty corpus")
}

pub fn phi(t: u32, n: usize, seed: u64) -> InfluenceMatrix {
    influence_matrix(&checkpoint_set(t, n, 16, seed), InfluenceConfig::default()).expect("influence")
}

/// Paired samples with roughly `levels` distinct values per side.
pub fn tied_pairs(n: usize, levels: u32, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| (f64::from(r.gen_range(0..levels)), f64::from(r.gen_range(0..levels))))
        .unzip()
}
