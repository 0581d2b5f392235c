//! Evolutionary benchmarking of the machine learnability of text corpora.
//!
//! `evolm` trains populations of small decoder-only transformers whose
//! architectures and training hyperparameters are tuned by a genetic
//! algorithm, then normalizes validation performance across corpora and
//! tokenization methods so that learnability can be compared statistically.
//!
//! The pipeline has five stages, each usable as a library module or through
//! the `evolm` binary:
//!
//! 1. [`corpus`] — ingest a directory of source files, clean it, and produce
//!    a deterministic train/validation split.
//! 2. [`tokenizer`] — character, word, byte-pair and external-vocabulary
//!    tokenization, plus unigram Shannon entropy baselines and the BPE
//!    vocabulary-size sweep.
//! 3. [`model`] — the transformer, its AdamW optimizer and warmup/cosine
//!    schedule, and the training loop that turns a [`model::Chromosome`]
//!    into a [`model::FitnessRecord`].
//! 4. [`evolve`] — the genetic algorithm: feasible-architecture table,
//!    random initialization, crossover, mutation and the generational driver.
//! 5. [`analysis`] — loss calibration, information gain, Spearman
//!    correlations and weighted Gamma GLM factor tables.
//!
//! [`store`] persists every run artifact under a run id, and [`report`]
//! renders stored runs as CSV tables and static SVG charts.
//!
//! See the crate's `examples/` directory for one runnable program per
//! capability; `examples/end_to_end.rs` exercises the whole pipeline on two
//! synthetic corpora.

pub mod analysis;
pub mod cli;
pub mod corpus;
pub mod evolve;
pub mod model;
pub mod report;
pub mod store;
pub mod tokenizer;

mod util;

pub use corpus::{CorpusSplit, LanguageProfile, RawCorpus};
pub use evolve::{
    ArchitectureTable, EvolutionConfig, GenerationRecord, SearchSpace, SimulationResult,
};
pub use model::{Chromosome, FitnessRecord, TrainConfig};
pub use tokenizer::{TokenMethod, TokenizedCorpus, Tokenizer};
