//! Cross-corpus learnability analytics: loss calibration, information gain,
//! overfitting weights, rank correlations, and Gamma GLM factor tables.
//!
//! Everything here works in bits. Training records losses in nats, so
//! [`collect_observations`] divides by ln 2 when lifting a simulation into
//! [`LossObservation`]s.

mod glm;
mod spearman;
mod summary;

pub use glm::{cox_snell_r2, factor_table, fit_gamma_glm, FactorRow, ModelFit};
pub use spearman::spearman;
pub use summary::{
    generation_summary, hyperparameter_spearman, GenerationSummary, HyperparamCorrelation,
    HYPERPARAM_NAMES,
};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evolve::SimulationResult;
use crate::model::NATS_PER_BIT;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("input is empty")]
    Empty,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {need} observations, got {got}")]
    TooFew { need: usize, got: usize },
    #[error("correlation undefined: {0} has zero rank variance")]
    ZeroVariance(&'static str),
    #[error("design matrix is rank deficient (pivot {pivot:.3e} at column {col})")]
    RankDeficient { col: usize, pivot: f64 },
    #[error("IRLS did not converge after {iters} iterations (last deviance {deviance})")]
    NoConvergence { iters: usize, deviance: f64 },
    #[error("invalid regression input: {0}")]
    BadInput(String),
}

fn ensure_positive(name: &'static str, value: f64) -> Result<(), AnalysisError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(AnalysisError::NonPositive { name, value })
    }
}

/// Gaussian overfitting penalty times relative-entropy scaling:
/// `Lv * exp(((Lv/Lt) - 1)^2) * (Hmin / H)`. Equals `Lv` when validation
/// tracks training and the corpus sits at the entropy floor.
pub fn calibrated_loss(lv: f64, lt: f64, h: f64, hmin: f64) -> Result<f64, AnalysisError> {
    ensure_positive("valid_loss", lv)?;
    ensure_positive("train_loss", lt)?;
    ensure_positive("entropy", h)?;
    ensure_positive("min_entropy", hmin)?;
    let d = lv / lt - 1.0;
    Ok(lv * (d * d).exp() * (hmin / h))
}

/// Credibility weight `exp(-((Lv/Lt) - 1)^2)` in (0, 1]; the reciprocal of
/// the calibration penalty.
pub fn overfit_weight(lv: f64, lt: f64) -> Result<f64, AnalysisError> {
    ensure_positive("valid_loss", lv)?;
    ensure_positive("train_loss", lt)?;
    let d = lv / lt - 1.0;
    Ok((-(d * d)).exp())
}

/// Validation loss minus the baseline entropy; negative when the model beats
/// the unigram floor.
pub fn information_gain(lv: f64, h: f64) -> Result<f64, AnalysisError> {
    ensure_positive("valid_loss", lv)?;
    ensure_positive("entropy", h)?;
    Ok(lv - h)
}

/// Translates the whole set so its minimum is exactly 0.01, making it
/// strictly positive for Gamma modeling. Ordering and pairwise differences
/// are preserved.
pub fn shift_information_gain(values: &[f64]) -> Result<Vec<f64>, AnalysisError> {
    if values.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(values.iter().map(|v| v - min + 0.01).collect())
}

/// One `(corpus, method, generation)` best-loss observation, all in bits.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LossObservation {
    pub corpus: String,
    pub method: String,
    pub generation: usize,
    pub valid_loss_bits: f64,
    pub train_loss_bits: f64,
    pub entropy_bits: f64,
}

/// Lifts every non-diverged individual of a simulation into observations,
/// converting nats to bits.
pub fn collect_observations(sim: &SimulationResult, entropy_bits: f64) -> Vec<LossObservation> {
    let mut out = Vec::new();
    for gen in &sim.generations {
        for record in &gen.individuals {
            if record.diverged {
                continue;
            }
            out.push(LossObservation {
                corpus: sim.corpus_name.clone(),
                method: sim.method.clone(),
                generation: gen.generation_index,
                valid_loss_bits: record.best_val_loss / NATS_PER_BIT,
                train_loss_bits: record.train_loss_at_best / NATS_PER_BIT,
                entropy_bits,
            });
        }
    }
    out
}

/// Designs and responses for the corpus-factor regressions.
pub struct RegressionDataset {
    pub design: Array2<f64>,
    pub feature_names: Vec<String>,
    /// Calibrated validation loss (method 1 response).
    pub calibrated: Array1<f64>,
    /// Shifted information gain (method 2 response).
    pub shifted_information_gain: Array1<f64>,
    /// Gaussian overfitting weights, not inverted.
    pub weights: Array1<f64>,
    pub baseline: String,
}

/// Builds intercept + corpus-indicator (baseline held out) + optional
/// generation covariate, with both normalized responses and the overfitting
/// weights. `Hmin` is the minimum entropy over the observations.
pub fn build_regression_dataset(
    observations: &[LossObservation],
    baseline: &str,
    include_generation: bool,
) -> Result<RegressionDataset, AnalysisError> {
    if observations.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let mut corpora: Vec<String> = observations.iter().map(|o| o.corpus.clone()).collect();
    corpora.sort();
    corpora.dedup();
    if !corpora.iter().any(|c| c == baseline) {
        return Err(AnalysisError::BadInput(format!(
            "baseline corpus {baseline:?} not among observations"
        )));
    }
    let hmin = observations
        .iter()
        .map(|o| o.entropy_bits)
        .fold(f64::INFINITY, f64::min);

    let indicator_corpora: Vec<&String> = corpora.iter().filter(|c| c.as_str() != baseline).collect();
    let mut feature_names = vec!["Intercept".to_string()];
    feature_names.extend(indicator_corpora.iter().map(|c| (*c).clone()));
    if include_generation {
        feature_names.push("Generation".to_string());
    }

    let n = observations.len();
    let p = feature_names.len();
    let mut design = Array2::zeros((n, p));
    let mut calibrated = Array1::zeros(n);
    let mut ig = Array1::zeros(n);
    let mut weights = Array1::zeros(n);
    for (i, obs) in observations.iter().enumerate() {
        design[[i, 0]] = 1.0;
        for (j, c) in indicator_corpora.iter().enumerate() {
            if obs.corpus == ***c {
                design[[i, j + 1]] = 1.0;
            }
        }
        if include_generation {
            design[[i, p - 1]] = obs.generation as f64;
        }
        calibrated[i] =
            calibrated_loss(obs.valid_loss_bits, obs.train_loss_bits, obs.entropy_bits, hmin)?;
        ig[i] = information_gain(obs.valid_loss_bits, obs.entropy_bits)?;
        weights[i] = overfit_weight(obs.valid_loss_bits, obs.train_loss_bits)?;
    }
    let shifted = shift_information_gain(ig.as_slice().unwrap())?;
    Ok(RegressionDataset {
        design,
        feature_names,
        calibrated,
        shifted_information_gain: Array1::from_vec(shifted),
        weights,
        baseline: baseline.to_string(),
    })
}
