//! Ingest a source tree into a cleaned, deterministically split corpus.
//!
//! Builds a tiny Coq-flavored corpus on disk, ingests it with and without
//! comment stripping, splits 80/20, and prints the manifest.
//!
//! ```sh
//! cargo run --example ingest_corpus
//! ```

use evolm::corpus::{ingest_corpus, split_corpus, CorpusManifest, LanguageProfile};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    std::fs::write(
        dir.path().join("nat.v"),
        "(* arithmetic lemmas *)\n\
         Lemma add_comm : forall n m, n + m = m + n.\n\
         Proof. intros. lia. Qed.\n",
    )?;
    std::fs::write(
        dir.path().join("list.v"),
        "Lemma app_nil : forall (l : list nat), l ++ nil = l.\n\
         Proof. induction l. (* base case *) auto. simpl. now rewrite IHl. Qed.\n",
    )?;

    let profile = LanguageProfile::coq();
    for strip_comments in [false, true] {
        let corpus = ingest_corpus(dir.path(), &profile, strip_comments)?;
        println!(
            "strip_comments={strip_comments}: {} files, {} chars",
            corpus.documents.len(),
            corpus.total_chars
        );
        for (path, text) in &corpus.documents {
            println!("  {path}: {} chars", text.chars().count());
        }

        let split = split_corpus(&corpus, 0.8)?;
        println!(
            "  split 80/20 -> train {} chars, valid {} chars",
            split.train_chars(),
            split.valid_chars()
        );
        let manifest = CorpusManifest::new("demo", &corpus, &split, strip_comments);
        println!("  manifest: {}", serde_json::to_string(&manifest)?);
    }

    Ok(())
}
