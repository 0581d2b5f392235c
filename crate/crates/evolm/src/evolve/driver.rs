//! The generational driver: evaluate, rank, select elites, breed, repeat.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{crossover, mutate, random_chromosome, EvolveError, SearchSpace};
use crate::model::{train_gpt, Checkpoint, Chromosome, FitnessRecord, TrainConfig};
use crate::tokenizer::TokenizedCorpus;
use crate::util::derive_seed;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EvolutionConfig {
    pub n_generations: usize,
    pub population_size: usize,
    /// Fraction of the ranked population forming the parent pool.
    pub elite_percent: f64,
    pub crossover_probability: f64,
    pub mutation_probability: f64,
    /// Training iterations per individual (forwarded to the fitness function).
    pub max_iters: usize,
    pub seed: u64,
    /// When set, the generation's best individual replaces the last offspring
    /// unchanged.
    pub elitism: bool,
}

impl EvolutionConfig {
    pub fn elite_count(&self) -> usize {
        (self.elite_percent * self.population_size as f64).floor() as usize
    }

    pub fn validate(&self) -> Result<(), EvolveError> {
        if self.n_generations == 0 {
            return Err(EvolveError::BadConfig("n_generations must be >= 1".into()));
        }
        if self.population_size < 2 {
            return Err(EvolveError::BadConfig("population_size must be >= 2".into()));
        }
        if !(self.elite_percent > 0.0 && self.elite_percent <= 1.0) {
            return Err(EvolveError::BadConfig(format!(
                "elite_percent {} outside (0, 1]",
                self.elite_percent
            )));
        }
        if self.elite_count() < 2 {
            return Err(EvolveError::BadConfig(format!(
                "elite pool floor({} * {}) = {} is too small to sample two parents",
                self.elite_percent,
                self.population_size,
                self.elite_count()
            )));
        }
        for (name, p) in [
            ("crossover_probability", self.crossover_probability),
            ("mutation_probability", self.mutation_probability),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(EvolveError::BadConfig(format!("{name} {p} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// One evaluated generation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerationRecord {
    /// 1-based generation number.
    pub generation_index: usize,
    pub individuals: Vec<FitnessRecord>,
    /// Indices into `individuals`, sorted by ascending fitness.
    pub elite_ids: Vec<usize>,
    pub rng_state_digest: String,
}

impl GenerationRecord {
    /// Index and record of the fittest individual.
    pub fn best(&self) -> (usize, &FitnessRecord) {
        let idx = self.elite_ids[0];
        (idx, &self.individuals[idx])
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationResult {
    pub config: EvolutionConfig,
    pub corpus_name: String,
    pub method: String,
    pub generations: Vec<GenerationRecord>,
}

/// Maps a chromosome to its fitness. Implementations must be deterministic
/// in `(chromosome, seed)` so parallel evaluation is reproducible, and must
/// return the divergence sentinel rather than fail.
pub trait FitnessFn: Sync {
    fn evaluate(&self, chrom: &Chromosome, seed: u64) -> FitnessRecord;
}

/// The real fitness: train a GPT on the tokenized corpus.
pub struct TrainFitness<'a> {
    pub data: &'a TokenizedCorpus,
    pub train_cfg: TrainConfig,
}

impl FitnessFn for TrainFitness<'_> {
    fn evaluate(&self, chrom: &Chromosome, seed: u64) -> FitnessRecord {
        let mut cfg = self.train_cfg.clone();
        cfg.seed = seed;
        match train_gpt(chrom, self.data, &cfg) {
            Ok(record) => record,
            Err(err) => {
                log::warn!("individual failed to train ({err}); recording as diverged");
                FitnessRecord::diverged(
                    chrom.clone(),
                    chrom.param_count(self.data.vocab_size),
                    Vec::new(),
                )
            }
        }
    }
}

/// Deterministic convex bowl over (dropout, learning_rate); every other gene
/// is neutral. Used to exercise the genetic algorithm without training.
pub struct MockFitness {
    pub dropout_target: f64,
    pub lr_target: f64,
}

impl Default for MockFitness {
    fn default() -> Self {
        Self {
            dropout_target: 0.2,
            lr_target: 5.5e-4,
        }
    }
}

impl MockFitness {
    pub fn loss(&self, chrom: &Chromosome) -> f64 {
        let u = (chrom.dropout - self.dropout_target) / 0.5;
        let v = (chrom.learning_rate - self.lr_target) / 9e-4;
        1.0 + u * u + v * v
    }
}

impl FitnessFn for MockFitness {
    fn evaluate(&self, chrom: &Chromosome, _seed: u64) -> FitnessRecord {
        let loss = self.loss(chrom);
        FitnessRecord {
            chromosome: chrom.clone(),
            checkpoints: vec![Checkpoint {
                iter: 0,
                train_loss: loss,
                valid_loss: loss,
            }],
            best_val_loss: loss,
            train_loss_at_best: loss,
            param_count: chrom.param_count(128),
            wall_time_secs: 0.0,
            diverged: false,
        }
    }
}

/// Observes the run; `on_generation_end` runs before the next generation is
/// evaluated, so persistence is generation-atomic.
pub trait EvolutionSink {
    fn on_generation_start(&mut self, _generation: usize) {}
    fn on_individual(&mut self, _generation: usize, _index: usize, _record: &FitnessRecord) {}
    fn on_generation_end(&mut self, _record: &GenerationRecord) -> Result<(), EvolveError> {
        Ok(())
    }
}

/// Discards all events.
pub struct NullSink;

impl EvolutionSink for NullSink {}

/// Ranks individuals ascending by fitness; diverged individuals (loss =
/// +inf) sort last, ties broken by lower parameter count then index.
pub fn rank_individuals(individuals: &[FitnessRecord]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..individuals.len()).collect();
    order.sort_by(|&a, &b| {
        individuals[a]
            .best_val_loss
            .total_cmp(&individuals[b].best_val_loss)
            .then(individuals[a].param_count.cmp(&individuals[b].param_count))
            .then(a.cmp(&b))
    });
    order
}

fn rng_digest(rng: &ChaCha8Rng) -> String {
    let mut hasher = Sha256::new();
    hasher.update(rng.get_seed());
    hasher.update(rng.get_word_pos().to_le_bytes());
    let digest = hasher.finalize();
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Runs the full genetic algorithm. Generation 1 is random; each later
/// generation is bred from the elite pool by crossover and mutation. Every
/// generation is handed to the sink before the next one starts.
pub fn run_evolution(
    cfg: &EvolutionConfig,
    space: &SearchSpace,
    corpus_name: &str,
    method: &str,
    fitness: &dyn FitnessFn,
    sink: &mut dyn EvolutionSink,
) -> Result<SimulationResult, EvolveError> {
    cfg.validate()?;
    if space.table.is_empty() {
        return Err(EvolveError::EmptyTable { budget: 0 });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut population: Vec<Chromosome> = (0..cfg.population_size)
        .map(|_| random_chromosome(space, &mut rng))
        .collect();

    let mut generations: Vec<GenerationRecord> = Vec::with_capacity(cfg.n_generations);
    for generation in 1..=cfg.n_generations {
        sink.on_generation_start(generation);

        // Embarrassingly parallel fitness evaluation; per-individual seeds
        // keep results independent of scheduling.
        let individuals: Vec<FitnessRecord> = population
            .par_iter()
            .enumerate()
            .map(|(idx, chrom)| {
                let seed = derive_seed(cfg.seed, ((generation as u64) << 32) | idx as u64);
                fitness.evaluate(chrom, seed)
            })
            .collect();
        for (idx, record) in individuals.iter().enumerate() {
            sink.on_individual(generation, idx, record);
        }

        let ranking = rank_individuals(&individuals);
        let elite_ids: Vec<usize> = ranking[..cfg.elite_count()].to_vec();

        // Breed the next generation before sealing this record, so the rng
        // digest captures the driver stream right after selection.
        let next = if generation < cfg.n_generations || cfg.elitism {
            let elites: Vec<&Chromosome> =
                elite_ids.iter().map(|&i| &individuals[i].chromosome).collect();
            let mut next: Vec<Chromosome> = Vec::with_capacity(cfg.population_size);
            while next.len() < cfg.population_size {
                let i = rng.random_range(0..elites.len());
                let mut j = rng.random_range(0..elites.len() - 1);
                if j >= i {
                    j += 1;
                }
                let (mut a, mut b) = crossover(elites[i], elites[j], cfg.crossover_probability, &mut rng);
                if rng.random::<f64>() < cfg.mutation_probability {
                    a = mutate(&a, space, &mut rng);
                }
                if rng.random::<f64>() < cfg.mutation_probability {
                    b = mutate(&b, space, &mut rng);
                }
                next.push(a);
                if next.len() < cfg.population_size {
                    next.push(b);
                }
            }
            if cfg.elitism {
                let best = &individuals[elite_ids[0]].chromosome;
                let last = next.len() - 1;
                next[last] = best.clone();
            }
            Some(next)
        } else {
            None
        };

        let record = GenerationRecord {
            generation_index: generation,
            individuals,
            elite_ids,
            rng_state_digest: rng_digest(&rng),
        };
        sink.on_generation_end(&record)?;
        generations.push(record);

        if let Some(next) = next {
            population = next;
        }
    }

    Ok(SimulationResult {
        config: cfg.clone(),
        corpus_name: corpus_name.to_string(),
        method: method.to_string(),
        generations,
    })
}
