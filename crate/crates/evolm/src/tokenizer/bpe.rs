//! Byte-pair-encoding training and the external vocabulary/merges loader.

use std::collections::HashMap;
use std::path::Path;

use super::{merge_pair_in_place, TokenMethod, Tokenizer, TokenizerError};

/// Trains BPE from the character vocabulary of `text`, repeatedly merging
/// the most frequent adjacent pair (ties broken by earliest first occurrence
/// in the current token stream) until `vocab_size` is reached or no pair
/// occurs at least twice.
pub fn train_bpe(text: &str, vocab_size: usize) -> Result<Tokenizer, TokenizerError> {
    if text.is_empty() {
        return Err(TokenizerError::EmptyText);
    }
    let alphabet: std::collections::BTreeSet<char> = text.chars().collect();
    let base = alphabet.len();
    if vocab_size <= base {
        return Err(TokenizerError::VocabTooSmall {
            requested: vocab_size,
            base,
        });
    }

    let mut vocab: Vec<String> = alphabet.iter().map(|&c| String::from(c)).collect();
    let char_ids: HashMap<char, u32> = alphabet
        .iter()
        .enumerate()
        .map(|(i, &c)| (c, i as u32))
        .collect();
    let mut seq: Vec<u32> = text.chars().map(|c| char_ids[&c]).collect();

    let mut merges: Vec<(u32, u32)> = Vec::new();
    let mut merge_targets: Vec<u32> = Vec::new();

    while vocab.len() < vocab_size {
        let Some((left, right)) = best_pair(&seq) else {
            break;
        };
        let target = vocab.len() as u32;
        let merged = format!("{}{}", vocab[left as usize], vocab[right as usize]);
        vocab.push(merged);
        merge_pair_in_place(&mut seq, left, right, target);
        merges.push((left, right));
        merge_targets.push(target);
    }

    Ok(Tokenizer::assemble(
        TokenMethod::Bpe,
        vocab,
        merges,
        merge_targets,
        None,
    ))
}

/// Most frequent adjacent pair with count >= 2; ties resolved by the
/// earliest first occurrence in the stream.
fn best_pair(seq: &[u32]) -> Option<(u32, u32)> {
    let mut counts: HashMap<(u32, u32), (u64, usize)> = HashMap::new();
    for (i, pair) in seq.windows(2).enumerate() {
        let key = (pair[0], pair[1]);
        let entry = counts.entry(key).or_insert((0, i));
        entry.0 += 1;
    }
    counts
        .into_iter()
        .filter(|&(_, (count, _))| count >= 2)
        .min_by(|a, b| {
            // max count first, then min first-occurrence
            b.1 .0.cmp(&a.1 .0).then(a.1 .1.cmp(&b.1 .1))
        })
        .map(|(pair, _)| pair)
}

/// Loads a tokenizer from an external vocabulary JSON (token -> id map with
/// dense ids) and an ordered merges file (one `left right` pair per line;
/// lines starting with `#` are skipped).
pub fn load_external_tokenizer(
    vocab_file: &Path,
    merges_file: &Path,
) -> Result<Tokenizer, TokenizerError> {
    let vocab_text = std::fs::read_to_string(vocab_file)?;
    let raw: HashMap<String, u32> =
        serde_json::from_str(&vocab_text).map_err(|e| TokenizerError::Parse {
            path: vocab_file.to_path_buf(),
            line: e.line(),
            msg: format!("vocabulary must be a token-to-id object: {e}"),
        })?;
    if raw.is_empty() {
        return Err(TokenizerError::Parse {
            path: vocab_file.to_path_buf(),
            line: 1,
            msg: "empty vocabulary".into(),
        });
    }
    let mut vocab = vec![String::new(); raw.len()];
    let mut seen = vec![false; raw.len()];
    for (tok, id) in &raw {
        let idx = *id as usize;
        if idx >= vocab.len() || seen[idx] {
            return Err(TokenizerError::Parse {
                path: vocab_file.to_path_buf(),
                line: 1,
                msg: format!("ids must be dense 0..{} without repeats (token {tok:?} has id {id})", raw.len()),
            });
        }
        seen[idx] = true;
        vocab[idx] = tok.clone();
    }

    let mut ids: HashMap<&str, u32> = HashMap::with_capacity(vocab.len());
    for (i, tok) in vocab.iter().enumerate() {
        ids.insert(tok.as_str(), i as u32);
    }

    let merges_text = std::fs::read_to_string(merges_file)?;
    let mut merges = Vec::new();
    let mut merge_targets = Vec::new();
    for (lineno, line) in merges_text.lines().enumerate() {
        let line = line.trim_end();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split(' ');
        let (Some(l), Some(r), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(TokenizerError::Parse {
                path: merges_file.to_path_buf(),
                line: lineno + 1,
                msg: format!("expected `left right`, got {line:?}"),
            });
        };
        let parse_tok = |t: &str| {
            ids.get(t).copied().ok_or_else(|| TokenizerError::Parse {
                path: merges_file.to_path_buf(),
                line: lineno + 1,
                msg: format!("merge part {t:?} not in vocabulary"),
            })
        };
        let lid = parse_tok(l)?;
        let rid = parse_tok(r)?;
        let merged = format!("{l}{r}");
        let tid = ids.get(merged.as_str()).copied().ok_or_else(|| {
            TokenizerError::Parse {
                path: merges_file.to_path_buf(),
                line: lineno + 1,
                msg: format!("merged token {merged:?} not in vocabulary"),
            }
        })?;
        merges.push((lid, rid));
        merge_targets.push(tid);
    }

    // Guarantee an unknown-token fallback even for vocabularies without one.
    let unk_id = match ids.get(super::WORD_UNK) {
        Some(&id) => Some(id),
        None => {
            vocab.push(super::WORD_UNK.to_string());
            Some((vocab.len() - 1) as u32)
        }
    };

    Ok(Tokenizer::assemble(
        TokenMethod::External,
        vocab,
        merges,
        merge_targets,
        unk_id,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    #[test]
    fn merges_most_frequent_pair_first() {
        // "abababab": pair (a,b) occurs 4 times, (b,a) 3 times
        let tok = train_bpe("abababab", 3).unwrap();
        assert_eq!(tok.vocab_size(), 3);
        assert_eq!(tok.token(2), Some("ab"));
        let ids = tok.encode("abababab").unwrap();
        assert_eq!(ids, vec![2, 2, 2, 2]);
    }

    #[test]
    fn stops_when_no_pair_repeats() {
        // every adjacent pair is unique
        let tok = train_bpe("abcdef", 100).unwrap();
        assert_eq!(tok.vocab_size(), 6);
    }

    #[test]
    fn tie_broken_by_earliest_occurrence() {
        // "xy", "yz" and "zq" all occur twice; "xy" first appears at index 0.
        let tok = train_bpe("xyzqxyzq", 5).unwrap();
        assert_eq!(tok.token(4), Some("xy"));
    }

    #[test]
    fn rejects_vocab_not_above_alphabet() {
        assert!(matches!(
            train_bpe("abab", 2),
            Err(TokenizerError::VocabTooSmall { requested: 2, base: 2 })
        ));
    }

    #[test]
    fn deterministic_across_runs() {
        let text = "the quick brown fox jumps over the lazy dog the end";
        let a = train_bpe(text, 30).unwrap();
        let b = train_bpe(text, 30).unwrap();
        assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn external_loader_round_trip_and_effective_usage() {
        let dir = tempfile::tempdir().unwrap();
        let vocab_path = dir.path().join("vocab.json");
        let merges_path = dir.path().join("merges.txt");
        std::fs::write(
            &vocab_path,
            r#"{"a": 0, "b": 1, "ab": 2, "c": 3, "abc": 4}"#,
        )
        .unwrap();
        let mut f = std::fs::File::create(&merges_path).unwrap();
        writeln!(f, "#version: test").unwrap();
        writeln!(f, "a b").unwrap();
        writeln!(f, "ab c").unwrap();
        drop(f);
        let tok = load_external_tokenizer(&vocab_path, &merges_path).unwrap();
        // encoding of "ab" uses only vocabulary ids
        assert_eq!(tok.encode("ab").unwrap(), vec![2]);
        assert_eq!(tok.encode("abc").unwrap(), vec![4]);
        // round trip on in-vocab tokens
        assert_eq!(tok.decode(&tok.encode("abcab").unwrap()).unwrap(), "abcab");
        // unknown char falls back to unk (appended id)
        let unk = tok.unk_id().unwrap();
        assert_eq!(tok.encode("z").unwrap(), vec![unk]);
    }

    #[test]
    fn external_loader_reports_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let vocab_path = dir.path().join("vocab.json");
        let merges_path = dir.path().join("merges.txt");
        std::fs::write(&vocab_path, r#"{"a": 0, "b": 1}"#).unwrap();
        std::fs::write(&merges_path, "a b\n").unwrap();
        // merged token "ab" missing from the vocabulary
        let err = load_external_tokenizer(&vocab_path, &merges_path).unwrap_err();
        match err {
            TokenizerError::Parse { line, .. } => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn bpe_round_trip(s in "[abcd]{2,120}", extra in 1usize..24) {
            let base = s.chars().collect::<std::collections::HashSet<_>>().len();
            let tok = train_bpe(&s, base + extra).unwrap();
            let ids = tok.encode(&s).unwrap();
            prop_assert_eq!(tok.decode(&ids).unwrap(), s);
        }
    }
}
