//! Train one chromosome on a character-tokenized corpus and print its
//! bootstrap loss trajectory.
//!
//! ```sh
//! cargo run --example train_single_gpt
//! ```

use evolm::corpus::split_text;
use evolm::model::{train_gpt, Chromosome, TrainConfig};
use evolm::tokenizer::{train_character_tokenizer, TokenizedCorpus};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let text = "def fib : Nat -> Nat\n| 0 => 0\n| 1 => 1\n| (n+2) => fib (n+1) + fib n\n".repeat(40);
    let tokenizer = train_character_tokenizer(&text)?;
    let data = TokenizedCorpus::build("fib", &tokenizer, &split_text(&text, 0.8)?)?;
    println!(
        "corpus: vocab {} | {} train / {} valid tokens | baseline entropy {:.4} bits",
        data.vocab_size,
        data.train_ids.len(),
        data.valid_ids.len(),
        data.baseline_entropy_bits
    );

    let chrom = Chromosome {
        n_layer: 2,
        n_head: 4,
        n_embd: 32,
        batch_size: 8,
        block_size: 16,
        dropout: 0.05,
        learning_rate: 1e-3,
        min_lr: 1e-4,
        beta1: 0.9,
        beta2: 0.95,
        weight_decay: 0.01,
    };
    let mut cfg = TrainConfig::new(400, 42); // warmup 200, cosine decay to 400
    cfg.eval_iters = 50;
    cfg.n_boot = 8;

    let record = train_gpt(&chrom, &data, &cfg)?;
    println!(
        "model: {} parameters | trained in {:.2}s\n",
        record.param_count, record.wall_time_secs
    );
    println!("iter   train_loss  valid_loss   (nats)");
    for c in &record.checkpoints {
        println!("{:>4}   {:>9.4}  {:>9.4}", c.iter, c.train_loss, c.valid_loss);
    }
    println!(
        "\nbest validation loss {:.4} nats (train {:.4} at the same checkpoint)",
        record.best_val_loss, record.train_loss_at_best
    );
    Ok(())
}
