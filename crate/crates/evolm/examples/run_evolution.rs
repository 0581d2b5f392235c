//! Run the genetic algorithm against the deterministic mock fitness (a
//! convex bowl over dropout and learning rate) and watch selection pull the
//! population toward the optimum, no model training involved.
//!
//! ```sh
//! cargo run --example run_evolution
//! ```

use evolm::evolve::{
    run_evolution, EvolutionConfig, EvolutionSink, EvolveError, GenerationRecord, MockFitness,
    SearchSpace,
};

struct PrintSink;

impl EvolutionSink for PrintSink {
    fn on_generation_end(&mut self, record: &GenerationRecord) -> Result<(), EvolveError> {
        let (_, best) = record.best();
        let mean: f64 = record
            .individuals
            .iter()
            .map(|r| r.best_val_loss)
            .sum::<f64>()
            / record.individuals.len() as f64;
        println!
            (
            "gen {:>2}  best {:.5}  mean {:.5}  best (dropout, lr) = ({:.3}, {:.2e})",
            record.generation_index,
            best.best_val_loss,
            mean,
            best.chromosome.dropout,
            best.chromosome.learning_rate,
        );
        Ok(())
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let space = SearchSpace::desk_scale()?;
    let cfg = EvolutionConfig {
        n_generations: 12,
        population_size: 16,
        elite_percent: 0.25,
        crossover_probability: 0.6,
        mutation_probability: 0.9,
        max_iters: 0, // unused by the mock fitness
        seed: 7,
        elitism: true,
    };
    let mock = MockFitness::default();
    println!(
        "optimum at dropout {:.2}, learning rate {:.2e}; fitness floor 1.0\n",
        mock.dropout_target, mock.lr_target
    );
    let sim = run_evolution(&cfg, &space, "mock", "character", &mock, &mut PrintSink)?;

    let last = sim.generations.last().unwrap();
    let best = last.best().1;
    println!(
        "\nfinal best fitness {:.5} with dropout {:.3} and learning rate {:.3e}",
        best.best_val_loss, best.chromosome.dropout, best.chromosome.learning_rate
    );
    Ok(())
}
