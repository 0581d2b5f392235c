//! BPE vocabulary-size selection: train a fixed model at log-spaced
//! vocabulary sizes and pick the smallest size where the entropy-adjusted
//! validation loss stops improving materially (the elbow).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{train_bpe, train_word_tokenizer, TokenizedCorpus, TokenizerError};
use crate::corpus::CorpusSplit;
use crate::model::{train_gpt, Chromosome, ModelError, TrainConfig, NATS_PER_BIT};

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("need at least 3 sweep points, got {0}")]
    TooFewPoints(usize),
    #[error("degenerate corpus: word vocab {word} must exceed char vocab {chars}")]
    DegenerateCorpus { chars: usize, word: usize },
    #[error("cannot fit {n} strictly increasing sizes between {lo} and {hi}")]
    RangeTooNarrow { lo: usize, hi: usize, n: usize },
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// How the best validation loss is adjusted by the baseline entropy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntropyAdjustment {
    /// loss_bits / entropy_bits (dimensionless loss per bit); the default.
    Ratio,
    /// loss_bits - entropy_bits.
    Difference,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BpeSweepResult {
    pub vocab_sizes: Vec<usize>,
    pub adjusted_losses: Vec<f64>,
    pub selected_vocab_size: usize,
}

/// `n` log-spaced integer sizes from `lo` to `hi` inclusive, strictly
/// increasing with constant ratio up to rounding.
pub(crate) fn log_spaced_sizes(lo: usize, hi: usize, n: usize) -> Result<Vec<usize>, SweepError> {
    if hi.saturating_sub(lo) < n - 1 {
        return Err(SweepError::RangeTooNarrow { lo, hi, n });
    }
    let (la, lb) = ((lo as f64).ln(), (hi as f64).ln());
    let mut sizes = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / (n - 1) as f64;
        sizes.push((la + (lb - la) * t).exp().round() as usize);
    }
    sizes[0] = lo;
    sizes[n - 1] = hi;
    for i in 1..n {
        if sizes[i] <= sizes[i - 1] {
            sizes[i] = sizes[i - 1] + 1;
        }
    }
    debug_assert_eq!(*sizes.last().unwrap(), hi);
    Ok(sizes)
}

/// First size at which the relative improvement over the previous point
/// drops below 2%; the last size when the curve never stabilizes.
pub fn select_stabilized(sizes: &[usize], adjusted: &[f64]) -> usize {
    for i in 1..sizes.len() {
        let prev = adjusted[i - 1];
        let improvement = (prev - adjusted[i]) / prev.abs().max(f64::MIN_POSITIVE);
        if improvement < 0.02 {
            return sizes[i];
        }
    }
    *sizes.last().expect("sweep has points")
}

/// Runs the sweep: for each log-spaced vocabulary size between the character
/// and word vocabulary sizes of the corpus, trains a BPE tokenizer and the
/// fixed chromosome for `iters` iterations, and records the entropy-adjusted
/// best bootstrap validation loss.
pub fn bpe_vocab_sweep(
    split: &CorpusSplit,
    n_points: usize,
    fixed_chromosome: &Chromosome,
    iters: usize,
    n_boot: usize,
    adjustment: EntropyAdjustment,
    seed: u64,
) -> Result<BpeSweepResult, SweepError> {
    if n_points < 3 {
        return Err(SweepError::TooFewPoints(n_points));
    }
    let full_text = format!("{}{}", split.train_text, split.valid_text);
    let chars = full_text.chars().collect::<std::collections::BTreeSet<_>>().len();
    let word = train_word_tokenizer(&full_text)?.vocab_size();
    if word <= chars {
        return Err(SweepError::DegenerateCorpus { chars, word });
    }

    let sizes = log_spaced_sizes(chars, word, n_points)?;
    let mut adjusted = Vec::with_capacity(sizes.len());
    for (i, &size) in sizes.iter().enumerate() {
        // The lower bound is the character vocabulary itself: a BPE
        // tokenizer with zero merges.
        let tok = if size <= chars {
            zero_merge_bpe(&full_text)
        } else {
            train_bpe(&full_text, size)?
        };
        let data = TokenizedCorpus::build("sweep", &tok, split)?;
        let mut cfg = TrainConfig::new(iters, seed.wrapping_add(i as u64));
        cfg.n_boot = n_boot;
        let record = train_gpt(fixed_chromosome, &data, &cfg)?;
        let loss_bits = record.best_val_loss / NATS_PER_BIT;
        let h = data.baseline_entropy_bits;
        adjusted.push(match adjustment {
            EntropyAdjustment::Ratio => loss_bits / h,
            EntropyAdjustment::Difference => loss_bits - h,
        });
    }

    let selected_vocab_size = select_stabilized(&sizes, &adjusted);
    Ok(BpeSweepResult {
        vocab_sizes: sizes,
        adjusted_losses: adjusted,
        selected_vocab_size,
    })
}

/// BPE tokenizer with no merges: just the character alphabet of the text.
fn zero_merge_bpe(text: &str) -> super::Tokenizer {
    let alphabet: std::collections::BTreeSet<char> = text.chars().collect();
    super::Tokenizer::assemble(
        super::TokenMethod::Bpe,
        alphabet.into_iter().map(String::from).collect(),
        Vec::new(),
        Vec::new(),
        None,
    )
}
