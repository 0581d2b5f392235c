//! The decoder-only transformer, its optimizer and learning-rate schedule,
//! and the training loop that turns a [`Chromosome`] into a
//! [`FitnessRecord`].
//!
//! Losses are cross-entropies in nats throughout this module; the analysis
//! module divides by [`NATS_PER_BIT`] before mixing losses with bit-valued
//! entropies.

mod gpt;
mod optim;
mod schedule;
mod trainer;

pub use gpt::{Gpt, GptConfig, INIT_STD};
pub use optim::{clip_global_norm, AdamW};
pub use schedule::lr_at;
pub use trainer::{estimate_loss, sample_batch, train_gpt};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// ln(2): losses in nats divided by this are losses in bits.
pub const NATS_PER_BIT: f64 = std::f64::consts::LN_2;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("n_embd {n_embd} is not divisible by n_head {n_head}")]
    InfeasibleShape { n_embd: usize, n_head: usize },
    #[error("vocabulary size {0} is too small to model")]
    VocabTooSmall(usize),
    #[error("{split} stream has {len} tokens; need more than block_size {block_size}")]
    SplitTooShort {
        split: &'static str,
        len: usize,
        block_size: usize,
    },
    #[error("n_boot must be at least 1")]
    NoBootstraps,
    #[error("chromosome out of bounds: {0}")]
    InvalidChromosome(String),
}

/// Legal ranges for every evolved gene. The defaults are the search space
/// used for the headline experiments; tests and desk-scale runs narrow them.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GeneBounds {
    pub n_layer: (usize, usize),
    pub n_head_choices: Vec<usize>,
    /// Base-2 exponent range for n_embd (inclusive).
    pub n_embd_log2: (u32, u32),
    pub batch_log2: (u32, u32),
    pub block_log2: (u32, u32),
    pub dropout: (f64, f64),
    pub learning_rate: (f64, f64),
    pub min_lr: (f64, f64),
    pub beta1: (f64, f64),
    pub beta2: (f64, f64),
    pub weight_decay: (f64, f64),
}

impl Default for GeneBounds {
    fn default() -> Self {
        Self {
            n_layer: (2, 12),
            n_head_choices: vec![1, 2, 4, 8, 16],
            n_embd_log2: (5, 9),  // 32..=512
            batch_log2: (1, 8),   // 2..=256
            block_log2: (3, 11),  // 8..=2048
            dropout: (0.0, 0.5),
            learning_rate: (1e-4, 1e-3),
            min_lr: (1e-5, 1e-4),
            beta1: (0.1, 0.98),
            beta2: (0.1, 0.99),
            weight_decay: (0.0, 0.1),
        }
    }
}

impl GeneBounds {
    /// A reduced space for laptop-scale runs and tests: tiny models, short
    /// contexts, small batches.
    pub fn desk_scale() -> Self {
        Self {
            n_layer: (2, 3),
            n_head_choices: vec![1, 2, 4],
            n_embd_log2: (4, 5), // 16..=32
            batch_log2: (1, 2),  // 2..=4
            block_log2: (3, 4),  // 8..=16
            ..Self::default()
        }
    }
}

/// One individual: transformer architecture plus training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chromosome {
    pub n_layer: usize,
    pub n_head: usize,
    pub n_embd: usize,
    pub batch_size: usize,
    pub block_size: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    pub min_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
}

impl Chromosome {
    /// Checks every gene against `bounds` plus the head-divisibility and
    /// power-of-two constraints.
    pub fn validate(&self, bounds: &GeneBounds) -> Result<(), ModelError> {
        let fail = |msg: String| Err(ModelError::InvalidChromosome(msg));
        if !self.n_embd.is_multiple_of(self.n_head) {
            return Err(ModelError::InfeasibleShape {
                n_embd: self.n_embd,
                n_head: self.n_head,
            });
        }
        if self.n_layer < bounds.n_layer.0 || self.n_layer > bounds.n_layer.1 {
            return fail(format!("n_layer {} outside {:?}", self.n_layer, bounds.n_layer));
        }
        if !bounds.n_head_choices.contains(&self.n_head) {
            return fail(format!("n_head {} not in {:?}", self.n_head, bounds.n_head_choices));
        }
        for (name, value, range) in [
            ("n_embd", self.n_embd, bounds.n_embd_log2),
            ("batch_size", self.batch_size, bounds.batch_log2),
            ("block_size", self.block_size, bounds.block_log2),
        ] {
            if !value.is_power_of_two() {
                return fail(format!("{name} {value} is not a power of two"));
            }
            let exp = value.trailing_zeros();
            if exp < range.0 || exp > range.1 {
                return fail(format!("{name} {value} outside 2^{}..2^{}", range.0, range.1));
            }
        }
        for (name, value, (lo, hi)) in [
            ("dropout", self.dropout, bounds.dropout),
            ("learning_rate", self.learning_rate, bounds.learning_rate),
            ("min_lr", self.min_lr, bounds.min_lr),
            ("beta1", self.beta1, bounds.beta1),
            ("beta2", self.beta2, bounds.beta2),
            ("weight_decay", self.weight_decay, bounds.weight_decay),
        ] {
            if !(value >= lo && value <= hi) {
                return fail(format!("{name} {value} outside [{lo}, {hi}]"));
            }
        }
        Ok(())
    }

    /// Parameter count of the transformer this chromosome builds, given a
    /// vocabulary size.
    pub fn param_count(&self, vocab_size: usize) -> usize {
        let e = self.n_embd;
        vocab_size * e + self.block_size * e + self.n_layer * (12 * e * e + 4 * e) + 2 * e
    }

    /// A small fixed shape, handy as the sweep's probe model and in tests.
    pub fn small(n_embd: usize, block_size: usize) -> Self {
        Self {
            n_layer: 2,
            n_head: 2,
            n_embd,
            batch_size: 4,
            block_size,
            dropout: 0.1,
            learning_rate: 6e-4,
            min_lr: 6e-5,
            beta1: 0.9,
            beta2: 0.95,
            weight_decay: 0.05,
        }
    }
}

/// Fixed (non-evolved) training parameters.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TrainConfig {
    pub max_iters: usize,
    /// Bootstrap loss estimates are recorded every `eval_iters` iterations.
    pub eval_iters: usize,
    /// Batches per bootstrap estimate.
    pub n_boot: usize,
    pub warmup_iters: usize,
    pub lr_decay_iters: usize,
    pub decay_lr: bool,
    pub seed: u64,
}

impl TrainConfig {
    /// Experiment defaults: eval every 10 iterations from 30 bootstraps,
    /// warmup for half the run, decay to the end.
    pub fn new(max_iters: usize, seed: u64) -> Self {
        Self {
            max_iters,
            eval_iters: 10,
            n_boot: 30,
            warmup_iters: max_iters / 2,
            lr_decay_iters: max_iters,
            decay_lr: true,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.warmup_iters > self.lr_decay_iters || self.lr_decay_iters > self.max_iters {
            return Err(ModelError::InvalidChromosome(format!(
                "need warmup_iters <= lr_decay_iters <= max_iters, got {} / {} / {}",
                self.warmup_iters, self.lr_decay_iters, self.max_iters
            )));
        }
        if self.eval_iters == 0 {
            return Err(ModelError::InvalidChromosome("eval_iters must be >= 1".into()));
        }
        if self.n_boot == 0 {
            return Err(ModelError::NoBootstraps);
        }
        Ok(())
    }
}

/// One bootstrap evaluation point in a training trajectory.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct Checkpoint {
    pub iter: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
}

/// The full training trajectory of one individual plus its fitness.
///
/// A diverged individual carries `best_val_loss = +inf` (serialized as JSON
/// null) and ranks strictly last in selection.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitnessRecord {
    pub chromosome: Chromosome,
    pub checkpoints: Vec<Checkpoint>,
    #[serde(with = "crate::util::inf_as_null")]
    pub best_val_loss: f64,
    #[serde(with = "crate::util::inf_as_null")]
    pub train_loss_at_best: f64,
    pub param_count: usize,
    pub wall_time_secs: f64,
    pub diverged: bool,
}

impl FitnessRecord {
    /// Sentinel for an individual whose training produced a non-finite loss
    /// or failed outright.
    pub fn diverged(chromosome: Chromosome, param_count: usize, checkpoints: Vec<Checkpoint>) -> Self {
        Self {
            chromosome,
            checkpoints,
            best_val_loss: f64::INFINITY,
            train_loss_at_best: f64::INFINITY,
            param_count,
            wall_time_secs: 0.0,
            diverged: true,
        }
    }
}
