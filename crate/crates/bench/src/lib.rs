//! Shared inputs for the criterion benches.

use stancebench::corpus::{stratified_split, CorpusSplit, LabeledPost, Stance};

/// A synthetic unanimous corpus of `n` posts with a 48/43/9 class mix.
pub fn synthetic_corpus(n: usize) -> Vec<LabeledPost> {
    (0..n)
        .map(|i| {
            let gold = match i % 100 {
                0..=47 => Stance::InFavor,
                48..=90 => Stance::Against,
                _ => Stance::NeutralOrUnclear,
            };
            LabeledPost {
                post_id: format!("b{i:05}"),
                text: format!(
                    "Synthetic post {i} about the HPV vaccine and whether teens should get the shot this year."
                ),
                gold,
            }
        })
        .collect()
}

pub fn synthetic_split(n: usize, seed: u64) -> CorpusSplit {
    stratified_split(&synthetic_corpus(n), seed).expect("non-empty corpus")
}
