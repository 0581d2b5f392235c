//! Sweep BPE vocabulary sizes on a small corpus and pick the stabilization
//! elbow: the smallest size whose entropy-adjusted validation loss stops
//! improving by at least 2%.
//!
//! ```sh
//! cargo run --example bpe_sweep
//! ```

use evolm::corpus::split_text;
use evolm::model::Chromosome;
use evolm::tokenizer::{bpe_vocab_sweep, EntropyAdjustment};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // enough distinct identifiers that the word vocabulary (upper sweep
    // bound) clearly exceeds the character vocabulary (lower bound)
    let text: String = (0..80)
        .map(|i| {
            format!(
                "Lemma lem_{i} : forall x_{i} y_{i}, f_{i} x_{i} y_{i} = f_{i} y_{i} x_{i}. \
                 Proof. intros. apply comm_{i}. Qed.\n"
            )
        })
        .collect();
    let split = split_text(&text, 0.8)?;

    // a small fixed probe model; the sweep holds the architecture constant
    let probe = Chromosome::small(16, 8);
    let result = bpe_vocab_sweep(&split, 6, &probe, 120, 4, EntropyAdjustment::Ratio, 7)?;

    println!("vocab_size  adjusted_loss");
    for (size, loss) in result.vocab_sizes.iter().zip(&result.adjusted_losses) {
        let marker = if *size == result.selected_vocab_size { "  <- selected" } else { "" };
        println!("{size:>10}  {loss:.6}{marker}");
    }
    Ok(())
}
