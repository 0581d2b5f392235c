//! The four tokenization methods (character, word, BPE, external
//! vocabulary), token-stream persistence, and unigram Shannon entropy
//! baselines.
//!
//! Character and BPE tokenizers are lossless over their training alphabet.
//! The word tokenizer maps out-of-vocabulary tokens to an unknown token
//! reserved at id 0. External tokenizers are loaded from a vocabulary JSON
//! plus an ordered merge list and fall back per character (then per UTF-8
//! byte, then unknown) on spans outside the vocabulary.

mod bpe;
mod sweep;

pub use bpe::{load_external_tokenizer, train_bpe};
pub use sweep::{bpe_vocab_sweep, select_stabilized, BpeSweepResult, EntropyAdjustment, SweepError};

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("cannot train a tokenizer on empty text")]
    EmptyText,
    #[error("token sequence is empty")]
    EmptySequence,
    #[error("BPE vocab size {requested} must exceed the base alphabet size {base}")]
    VocabTooSmall { requested: usize, base: usize },
    #[error("symbol {0:?} is not in the tokenizer vocabulary")]
    UnknownSymbol(char),
    #[error("token id {0} out of range for vocabulary of {1}")]
    IdOutOfRange(u32, usize),
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed token stream: {0}")]
    BadStream(String),
    #[error("tokenized corpus needs a vocabulary of at least 2, got {0}")]
    DegenerateVocab(usize),
    #[error("malformed tokenizer json: {0}")]
    BadJson(String),
}

/// How text is segmented into tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenMethod {
    Character,
    Word,
    Bpe,
    External,
}

impl std::fmt::Display for TokenMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            TokenMethod::Character => "character",
            TokenMethod::Word => "word",
            TokenMethod::Bpe => "bpe",
            TokenMethod::External => "external",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for TokenMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "character" | "char" => Ok(TokenMethod::Character),
            "word" => Ok(TokenMethod::Word),
            "bpe" => Ok(TokenMethod::Bpe),
            "external" | "starcoder" => Ok(TokenMethod::External),
            other => Err(format!("unknown tokenization method {other:?}")),
        }
    }
}

/// A trained tokenizer: dense-id vocabulary plus, for BPE-style methods, the
/// ordered merge list that reproduces it.
#[derive(Debug, Clone)]
pub struct Tokenizer {
    method: TokenMethod,
    vocab: Vec<String>,
    token_ids: HashMap<String, u32>,
    /// Fast path for single-character tokens.
    char_ids: HashMap<char, u32>,
    /// `(left_id, right_id)` in application order.
    merges: Vec<(u32, u32)>,
    /// Id produced by each merge, parallel to `merges`.
    merge_targets: Vec<u32>,
    unk_id: Option<u32>,
}

/// Serialized form: vocab as token strings in id order, merges as
/// `[left, right]` string pairs.
#[derive(Serialize, Deserialize)]
struct TokenizerFile {
    method: TokenMethod,
    vocab: Vec<String>,
    merges: Vec<(String, String)>,
    unk_id: Option<u32>,
}

impl Tokenizer {
    pub(crate) fn assemble(
        method: TokenMethod,
        vocab: Vec<String>,
        merges: Vec<(u32, u32)>,
        merge_targets: Vec<u32>,
        unk_id: Option<u32>,
    ) -> Self {
        let mut token_ids = HashMap::with_capacity(vocab.len());
        let mut char_ids = HashMap::new();
        for (id, tok) in vocab.iter().enumerate() {
            token_ids.insert(tok.clone(), id as u32);
            let mut chars = tok.chars();
            if let (Some(c), None) = (chars.next(), chars.next()) {
                char_ids.insert(c, id as u32);
            }
        }
        Self {
            method,
            vocab,
            token_ids,
            char_ids,
            merges,
            merge_targets,
            unk_id,
        }
    }

    pub fn method(&self) -> TokenMethod {
        self.method
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn unk_id(&self) -> Option<u32> {
        self.unk_id
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.vocab.get(id as usize).map(|s| s.as_str())
    }

    pub fn id_of(&self, token: &str) -> Option<u32> {
        self.token_ids.get(token).copied()
    }

    pub fn merges(&self) -> impl Iterator<Item = (&str, &str)> {
        self.merges
            .iter()
            .map(|&(l, r)| (self.vocab[l as usize].as_str(), self.vocab[r as usize].as_str()))
    }

    pub fn encode(&self, text: &str) -> Result<Vec<u32>, TokenizerError> {
        match self.method {
            TokenMethod::Character => text
                .chars()
                .map(|c| {
                    self.char_ids
                        .get(&c)
                        .copied()
                        .ok_or(TokenizerError::UnknownSymbol(c))
                })
                .collect(),
            TokenMethod::Word => {
                let unk = self.unk_id.expect("word tokenizer always has unk");
                Ok(split_words(text)
                    .map(|tok| self.token_ids.get(tok).copied().unwrap_or(unk))
                    .collect())
            }
            TokenMethod::Bpe => {
                let mut seq: Vec<u32> = Vec::with_capacity(text.len());
                for c in text.chars() {
                    seq.push(
                        self.char_ids
                            .get(&c)
                            .copied()
                            .ok_or(TokenizerError::UnknownSymbol(c))?,
                    );
                }
                self.apply_merges(&mut seq);
                Ok(seq)
            }
            TokenMethod::External => {
                let mut seq: Vec<u32> = Vec::with_capacity(text.len());
                let mut buf = [0u8; 4];
                for c in text.chars() {
                    if let Some(&id) = self.char_ids.get(&c) {
                        seq.push(id);
                        continue;
                    }
                    // Byte-level fallback when the vocabulary carries the
                    // individual bytes of the character.
                    let bytes = c.encode_utf8(&mut buf).as_bytes();
                    let byte_ids: Option<Vec<u32>> = bytes
                        .iter()
                        .map(|&b| self.char_ids.get(&(b as char)).copied())
                        .collect();
                    match (byte_ids, self.unk_id) {
                        (Some(ids), _) => seq.extend(ids),
                        (None, Some(unk)) => seq.push(unk),
                        (None, None) => return Err(TokenizerError::UnknownSymbol(c)),
                    }
                }
                self.apply_merges(&mut seq);
                Ok(seq)
            }
        }
    }

    /// Applies every merge in training order, leftmost-first within each.
    fn apply_merges(&self, seq: &mut Vec<u32>) {
        for (m, &(left, right)) in self.merges.iter().enumerate() {
            let target = self.merge_targets[m];
            merge_pair_in_place(seq, left, right, target);
        }
    }

    pub fn decode(&self, ids: &[u32]) -> Result<String, TokenizerError> {
        match self.method {
            TokenMethod::Word => {
                // Word decoding is approximate: original whitespace is gone.
                let mut out = String::new();
                for &id in ids {
                    let tok = self
                        .token(id)
                        .ok_or(TokenizerError::IdOutOfRange(id, self.vocab.len()))?;
                    if tok == "\n" {
                        out.push('\n');
                    } else {
                        if !out.is_empty() && !out.ends_with('\n') {
                            out.push(' ');
                        }
                        out.push_str(tok);
                    }
                }
                Ok(out)
            }
            _ => {
                let mut out = String::new();
                for &id in ids {
                    out.push_str(
                        self.token(id)
                            .ok_or(TokenizerError::IdOutOfRange(id, self.vocab.len()))?,
                    );
                }
                Ok(out)
            }
        }
    }

    pub fn to_json(&self) -> String {
        let file = TokenizerFile {
            method: self.method,
            vocab: self.vocab.clone(),
            merges: self
                .merges
                .iter()
                .map(|&(l, r)| (self.vocab[l as usize].clone(), self.vocab[r as usize].clone()))
                .collect(),
            unk_id: self.unk_id,
        };
        serde_json::to_string_pretty(&file).expect("tokenizer serializes")
    }

    pub fn from_json(json: &str) -> Result<Self, TokenizerError> {
        let file: TokenizerFile =
            serde_json::from_str(json).map_err(|e| TokenizerError::BadJson(e.to_string()))?;
        let mut ids: HashMap<&str, u32> = HashMap::with_capacity(file.vocab.len());
        for (i, tok) in file.vocab.iter().enumerate() {
            ids.insert(tok.as_str(), i as u32);
        }
        let mut merges = Vec::with_capacity(file.merges.len());
        let mut targets = Vec::with_capacity(file.merges.len());
        for (i, (l, r)) in file.merges.iter().enumerate() {
            let lid = *ids
                .get(l.as_str())
                .ok_or_else(|| TokenizerError::BadJson(format!("merge {i}: unknown token {l:?}")))?;
            let rid = *ids
                .get(r.as_str())
                .ok_or_else(|| TokenizerError::BadJson(format!("merge {i}: unknown token {r:?}")))?;
            let merged = format!("{l}{r}");
            let tid = *ids.get(merged.as_str()).ok_or_else(|| {
                TokenizerError::BadJson(format!("merge {i}: merged token {merged:?} not in vocab"))
            })?;
            merges.push((lid, rid));
            targets.push(tid);
        }
        if let Some(unk) = file.unk_id {
            if unk as usize >= file.vocab.len() {
                return Err(TokenizerError::BadJson(format!("unk_id {unk} out of range")));
            }
        }
        Ok(Self::assemble(
            file.method,
            file.vocab,
            merges,
            targets,
            file.unk_id,
        ))
    }
}

/// Replaces every non-overlapping `left,right` adjacency with `target`,
/// scanning left to right.
pub(crate) fn merge_pair_in_place(seq: &mut Vec<u32>, left: u32, right: u32, target: u32) {
    let mut write = 0usize;
    let mut read = 0usize;
    while read < seq.len() {
        if read + 1 < seq.len() && seq[read] == left && seq[read + 1] == right {
            seq[write] = target;
            read += 2;
        } else {
            seq[write] = seq[read];
            read += 1;
        }
        write += 1;
    }
    seq.truncate(write);
}

/// Vocabulary = distinct characters of the text in code-point order.
pub fn train_character_tokenizer(text: &str) -> Result<Tokenizer, TokenizerError> {
    if text.is_empty() {
        return Err(TokenizerError::EmptyText);
    }
    let mut alphabet: Vec<char> = {
        let set: std::collections::BTreeSet<char> = text.chars().collect();
        set.into_iter().collect()
    };
    alphabet.sort_unstable();
    let vocab: Vec<String> = alphabet.into_iter().map(String::from).collect();
    Ok(Tokenizer::assemble(
        TokenMethod::Character,
        vocab,
        Vec::new(),
        Vec::new(),
        None,
    ))
}

/// Splits into word tokens: maximal alphanumeric/underscore runs, every
/// other non-whitespace character alone, whitespace dropped except newline.
pub(crate) fn split_words(text: &str) -> impl Iterator<Item = &str> {
    WordSplit { rest: text }
}

struct WordSplit<'a> {
    rest: &'a str,
}

impl<'a> Iterator for WordSplit<'a> {
    type Item = &'a str;

    fn next(&mut self) -> Option<&'a str> {
        loop {
            let mut chars = self.rest.char_indices();
            let (_, first) = chars.next()?;
            if first == '\n' {
                let (tok, rest) = self.rest.split_at(1);
                self.rest = rest;
                return Some(tok);
            }
            if first.is_whitespace() {
                self.rest = &self.rest[first.len_utf8()..];
                continue;
            }
            if first.is_alphanumeric() || first == '_' {
                let mut end = first.len_utf8();
                for (i, c) in chars {
                    if c.is_alphanumeric() || c == '_' {
                        end = i + c.len_utf8();
                    } else {
                        break;
                    }
                }
                let (tok, rest) = self.rest.split_at(end);
                self.rest = rest;
                return Some(tok);
            }
            let (tok, rest) = self.rest.split_at(first.len_utf8());
            self.rest = rest;
            return Some(tok);
        }
    }
}

pub const WORD_UNK: &str = "<unk>";

/// Vocabulary = the unknown token at id 0, then distinct word tokens in
/// first-occurrence order.
pub fn train_word_tokenizer(text: &str) -> Result<Tokenizer, TokenizerError> {
    if text.is_empty() {
        return Err(TokenizerError::EmptyText);
    }
    let mut vocab: Vec<String> = vec![WORD_UNK.to_string()];
    let mut seen: HashMap<&str, ()> = HashMap::new();
    for tok in split_words(text) {
        if seen.insert(tok, ()).is_none() {
            vocab.push(tok.to_string());
        }
    }
    Ok(Tokenizer::assemble(
        TokenMethod::Word,
        vocab,
        Vec::new(),
        Vec::new(),
        Some(0),
    ))
}

/// Shannon entropy (bits) of the empirical unigram distribution.
pub fn token_entropy(ids: &[u32]) -> Result<f64, TokenizerError> {
    if ids.is_empty() {
        return Err(TokenizerError::EmptySequence);
    }
    let mut counts: HashMap<u32, u64> = HashMap::new();
    for &id in ids {
        *counts.entry(id).or_insert(0) += 1;
    }
    let n = ids.len() as f64;
    let mut bits = 0.0;
    for &c in counts.values() {
        let p = c as f64 / n;
        bits -= p * p.log2();
    }
    Ok(bits.max(0.0))
}

/// Encoded train/validation streams of one corpus under one method.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TokenizedCorpus {
    pub corpus_name: String,
    pub method: TokenMethod,
    pub train_ids: Vec<u32>,
    pub valid_ids: Vec<u32>,
    pub vocab_size: usize,
    pub baseline_entropy_bits: f64,
}

impl TokenizedCorpus {
    /// Encodes both splits and computes the corpus-wide baseline entropy.
    ///
    /// For the external method the ids are remapped to a dense range over the
    /// tokens actually observed on this corpus, and `vocab_size` is that
    /// observed count; entropy is invariant under the remap.
    pub fn build(
        corpus_name: &str,
        tokenizer: &Tokenizer,
        split: &crate::corpus::CorpusSplit,
    ) -> Result<Self, TokenizerError> {
        let mut train_ids = tokenizer.encode(&split.train_text)?;
        let mut valid_ids = tokenizer.encode(&split.valid_text)?;

        let vocab_size = if tokenizer.method() == TokenMethod::External {
            let mut observed: Vec<u32> = {
                let set: std::collections::BTreeSet<u32> = train_ids
                    .iter()
                    .chain(valid_ids.iter())
                    .copied()
                    .collect();
                set.into_iter().collect()
            };
            observed.sort_unstable();
            let remap: HashMap<u32, u32> = observed
                .iter()
                .enumerate()
                .map(|(dense, &orig)| (orig, dense as u32))
                .collect();
            for id in train_ids.iter_mut().chain(valid_ids.iter_mut()) {
                *id = remap[id];
            }
            observed.len()
        } else {
            tokenizer.vocab_size()
        };
        if vocab_size < 2 {
            return Err(TokenizerError::DegenerateVocab(vocab_size));
        }

        let all: Vec<u32> = train_ids
            .iter()
            .chain(valid_ids.iter())
            .copied()
            .collect();
        let baseline_entropy_bits = token_entropy(&all)?;
        Ok(Self {
            corpus_name: corpus_name.to_string(),
            method: tokenizer.method(),
            train_ids,
            valid_ids,
            vocab_size,
            baseline_entropy_bits,
        })
    }
}

const STREAM_MAGIC: &[u8; 8] = b"EVOLMTS1";

/// Writes a token stream: 8-byte magic, u32 LE vocab size, u32 LE count,
/// then the ids as u32 LE.
pub fn write_stream<W: Write>(
    mut w: W,
    vocab_size: usize,
    ids: &[u32],
) -> Result<(), TokenizerError> {
    w.write_all(STREAM_MAGIC)?;
    w.write_all(&(vocab_size as u32).to_le_bytes())?;
    w.write_all(&(ids.len() as u32).to_le_bytes())?;
    for &id in ids {
        w.write_all(&id.to_le_bytes())?;
    }
    Ok(())
}

/// Reads a token stream written by [`write_stream`]; validates magic,
/// length and id range.
pub fn read_stream<R: Read>(mut r: R) -> Result<(usize, Vec<u32>), TokenizerError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| TokenizerError::BadStream("truncated header".into()))?;
    if &magic != STREAM_MAGIC {
        return Err(TokenizerError::BadStream(format!(
            "bad magic {magic:?}, expected {STREAM_MAGIC:?}"
        )));
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word)
        .map_err(|_| TokenizerError::BadStream("missing vocab size".into()))?;
    let vocab_size = u32::from_le_bytes(word) as usize;
    r.read_exact(&mut word)
        .map_err(|_| TokenizerError::BadStream("missing id count".into()))?;
    let count = u32::from_le_bytes(word) as usize;
    let mut ids = Vec::with_capacity(count);
    for _ in 0..count {
        r.read_exact(&mut word)
            .map_err(|_| TokenizerError::BadStream("truncated id array".into()))?;
        let id = u32::from_le_bytes(word);
        if id as usize >= vocab_size {
            return Err(TokenizerError::BadStream(format!(
                "id {id} out of range for vocab {vocab_size}"
            )));
        }
        ids.push(id);
    }
    Ok((vocab_size, ids))
}
