//! The genetic algorithm over transformer architectures and training
//! hyperparameters: feasible-architecture table, genetic operators, and the
//! generational driver.

mod arch;
mod driver;
mod ops;

pub use arch::{build_architecture_table, cost_proxy_bytes, ArchCostModel, ArchRow, ArchitectureTable};
pub use driver::{
    rank_individuals, run_evolution, EvolutionConfig, EvolutionSink, FitnessFn, GenerationRecord,
    MockFitness, NullSink, SimulationResult, TrainFitness,
};
pub use ops::{continuous_step, crossover, mutate, mutate_traced, random_chromosome, GeneGroup};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::GeneBounds;

#[derive(Debug, Error)]
pub enum EvolveError {
    #[error("no feasible architecture fits the memory budget of {budget} bytes")]
    EmptyTable { budget: u64 },
    #[error("invalid evolution config: {0}")]
    BadConfig(String),
    #[error("persistence sink failed: {0}")]
    Sink(String),
}

/// Gene bounds plus the feasible-architecture table they induce.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SearchSpace {
    pub bounds: GeneBounds,
    pub table: ArchitectureTable,
}

impl SearchSpace {
    pub fn new(
        bounds: GeneBounds,
        cost: &ArchCostModel,
        memory_budget_bytes: u64,
    ) -> Result<Self, EvolveError> {
        let table = build_architecture_table(&bounds, cost, memory_budget_bytes)?;
        Ok(Self { bounds, table })
    }

    /// The full experiment search space under a memory budget.
    pub fn table3(memory_budget_bytes: u64) -> Result<Self, EvolveError> {
        Self::new(GeneBounds::default(), &ArchCostModel::default(), memory_budget_bytes)
    }

    /// Tiny models and short contexts for laptop-scale runs and tests.
    pub fn desk_scale() -> Result<Self, EvolveError> {
        Self::new(
            GeneBounds::desk_scale(),
            &ArchCostModel {
                vocab_upper_bound: 512,
                bytes_per_param: 8,
            },
            u64::MAX,
        )
    }
}
