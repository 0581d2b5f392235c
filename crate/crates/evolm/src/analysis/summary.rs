//! Per-generation aggregates and hyperparameter rank correlations over a
//! finished simulation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{calibrated_loss, information_gain, spearman, AnalysisError};
use crate::evolve::SimulationResult;
use crate::model::{Chromosome, NATS_PER_BIT};

/// Aggregates behind the by-generation loss and ratio curves.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerationSummary {
    pub generation: usize,
    /// Minimum best validation loss (nats) over the generation.
    pub best_valid_loss: f64,
    /// Mean best validation loss (nats) over non-diverged individuals.
    pub mean_valid_loss: f64,
    /// Mean valid/train loss ratio per checkpoint iteration.
    pub mean_ratio_by_checkpoint: Vec<(usize, f64)>,
    /// Mean calibrated loss (bits).
    pub mean_calibrated_loss: f64,
    /// Mean information gain (bits).
    pub mean_information_gain: f64,
    pub n_diverged: usize,
}

/// Summarizes each generation. `entropy_bits` is the corpus baseline
/// entropy, `hmin_bits` the dataset-wide entropy floor used by the
/// calibration. Diverged individuals are excluded from the means.
pub fn generation_summary(
    sim: &SimulationResult,
    entropy_bits: f64,
    hmin_bits: f64,
) -> Result<Vec<GenerationSummary>, AnalysisError> {
    let mut out = Vec::with_capacity(sim.generations.len());
    for gen in &sim.generations {
        let alive: Vec<_> = gen.individuals.iter().filter(|r| !r.diverged).collect();
        if alive.is_empty() {
            out.push(GenerationSummary {
                generation: gen.generation_index,
                best_valid_loss: f64::INFINITY,
                mean_valid_loss: f64::INFINITY,
                mean_ratio_by_checkpoint: Vec::new(),
                mean_calibrated_loss: f64::INFINITY,
                mean_information_gain: f64::INFINITY,
                n_diverged: gen.individuals.len(),
            });
            continue;
        }
        let n = alive.len() as f64;
        let best = alive
            .iter()
            .map(|r| r.best_val_loss)
            .fold(f64::INFINITY, f64::min);
        let mean = alive.iter().map(|r| r.best_val_loss).sum::<f64>() / n;

        let mut ratios: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for record in &alive {
            for c in &record.checkpoints {
                if c.train_loss > 0.0 {
                    ratios.entry(c.iter).or_default().push(c.valid_loss / c.train_loss);
                }
            }
        }
        let mean_ratio_by_checkpoint = ratios
            .into_iter()
            .map(|(iter, rs)| (iter, rs.iter().sum::<f64>() / rs.len() as f64))
            .collect();

        let mut calibrated_sum = 0.0;
        let mut ig_sum = 0.0;
        for record in &alive {
            let lv_bits = record.best_val_loss / NATS_PER_BIT;
            let lt_bits = record.train_loss_at_best / NATS_PER_BIT;
            calibrated_sum += calibrated_loss(lv_bits, lt_bits, entropy_bits, hmin_bits)?;
            ig_sum += information_gain(lv_bits, entropy_bits)?;
        }

        out.push(GenerationSummary {
            generation: gen.generation_index,
            best_valid_loss: best,
            mean_valid_loss: mean,
            mean_ratio_by_checkpoint,
            mean_calibrated_loss: calibrated_sum / n,
            mean_information_gain: ig_sum / n,
            n_diverged: gen.individuals.len() - alive.len(),
        });
    }
    Ok(out)
}

pub const HYPERPARAM_NAMES: [&str; 11] = [
    "n_layer",
    "n_head",
    "n_embd",
    "batch_size",
    "block_size",
    "dropout",
    "learning_rate",
    "min_lr",
    "beta1",
    "beta2",
    "weight_decay",
];

fn gene_value(chrom: &Chromosome, name: &str) -> f64 {
    match name {
        "n_layer" => chrom.n_layer as f64,
        "n_head" => chrom.n_head as f64,
        "n_embd" => chrom.n_embd as f64,
        "batch_size" => chrom.batch_size as f64,
        "block_size" => chrom.block_size as f64,
        "dropout" => chrom.dropout,
        "learning_rate" => chrom.learning_rate,
        "min_lr" => chrom.min_lr,
        "beta1" => chrom.beta1,
        "beta2" => chrom.beta2,
        "weight_decay" => chrom.weight_decay,
        other => unreachable!("unknown gene {other}"),
    }
}

/// Spearman correlation of each hyperparameter against validation loss and
/// against generation, over all non-diverged individuals. `None` marks an
/// undefined correlation (zero rank variance in a tiny run).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HyperparamCorrelation {
    pub hyperparameter: String,
    pub vs_valid_loss: Option<f64>,
    pub vs_generation: Option<f64>,
}

pub fn hyperparameter_spearman(sim: &SimulationResult) -> Vec<HyperparamCorrelation> {
    let mut losses = Vec::new();
    let mut generations = Vec::new();
    let mut genes: Vec<Vec<f64>> = vec![Vec::new(); HYPERPARAM_NAMES.len()];
    for gen in &sim.generations {
        for record in &gen.individuals {
            if record.diverged {
                continue;
            }
            losses.push(record.best_val_loss);
            generations.push(gen.generation_index as f64);
            for (k, name) in HYPERPARAM_NAMES.iter().enumerate() {
                genes[k].push(gene_value(&record.chromosome, name));
            }
        }
    }
    HYPERPARAM_NAMES
        .iter()
        .enumerate()
        .map(|(k, name)| HyperparamCorrelation {
            hyperparameter: name.to_string(),
            vs_valid_loss: spearman(&genes[k], &losses).ok(),
            vs_generation: spearman(&genes[k], &generations).ok(),
        })
        .collect()
}
