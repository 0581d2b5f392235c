//! Train the character, word and BPE tokenizers on one text and print a
//! vocabulary/entropy row per method, plus a round-trip demonstration.
//!
//! ```sh
//! cargo run --example train_tokenizers
//! ```

use evolm::corpus::split_text;
use evolm::tokenizer::{
    token_entropy, train_bpe, train_character_tokenizer, train_word_tokenizer, TokenizedCorpus,
    Tokenizer,
};

const SAMPLE: &str = "theorem add_comm (a b : Nat) : a + b = b + a := by\n\
  induction a with\n\
  | zero => simp\n\
  | succ n ih => simp [Nat.succ_add, ih]\n";

fn row(name: &str, tokenizer: &Tokenizer, text: &str) -> Result<(), Box<dyn std::error::Error>> {
    let split = split_text(text, 0.8)?;
    let corpus = TokenizedCorpus::build("sample", tokenizer, &split)?;
    println!(
        "{name:<10} vocab {:>5}   entropy {:.6} bits   {} train / {} valid tokens",
        corpus.vocab_size,
        corpus.baseline_entropy_bits,
        corpus.train_ids.len(),
        corpus.valid_ids.len()
    );
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let text = SAMPLE.repeat(12);

    let character = train_character_tokenizer(&text)?;
    let word = train_word_tokenizer(&text)?;
    let bpe = train_bpe(&text, character.vocab_size() + 24)?;

    println!("corpus: {} chars of Lean-flavored text\n", text.chars().count());
    row("character", &character, &text)?;
    row("word", &word, &text)?;
    row("bpe", &bpe, &text)?;

    // lossless round trip for character and BPE
    let probe = "theorem add_comm (a b : Nat)";
    for (name, tok) in [("character", &character), ("bpe", &bpe)] {
        let ids = tok.encode(probe)?;
        assert_eq!(tok.decode(&ids)?, probe);
        println!("\n{name} encodes {probe:?} into {} tokens (round trip ok)", ids.len());
    }

    // the first few BPE merges learned from this text
    let merges: Vec<String> = bpe
        .merges()
        .take(8)
        .map(|(l, r)| format!("{l:?}+{r:?}"))
        .collect();
    println!("\nfirst BPE merges: {}", merges.join(", "));

    // entropy floor behaves as expected on degenerate streams
    println!(
        "\nuniform 4-symbol stream entropy: {} bits",
        token_entropy(&[0, 1, 2, 3, 0, 1, 2, 3])?
    );
    Ok(())
}
