//! Corpus ingestion, language-aware cleaning and deterministic
//! train/validation splitting.
//!
//! A corpus is a directory tree of source files. Files are selected by
//! extension, read in sorted path order (so ingestion is reproducible across
//! filesystems), optionally stripped of comments, and concatenated with a
//! single newline between documents. The split is a contiguous
//! character-level prefix/suffix cut; no shuffling.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use walkdir::WalkDir;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read corpus root {path}: {source}")]
    UnreadableRoot {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("no files matching extensions {extensions:?} under {path}")]
    EmptyCorpus {
        path: PathBuf,
        extensions: Vec<String>,
    },
    #[error("corpus text has {len} chars; need at least 2 to split")]
    TextTooShort { len: usize },
    #[error("split ratio {0} outside (0, 1)")]
    BadRatio(f64),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Comment syntax and file extensions for one source language.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct LanguageProfile {
    pub name: String,
    /// Suffixes without the leading dot, e.g. `["v"]`.
    pub file_extensions: Vec<String>,
    /// `(open, close)` pairs, matched non-nested, leftmost first.
    pub block_comment_delims: Vec<(String, String)>,
    pub line_comment_prefixes: Vec<String>,
}

impl LanguageProfile {
    pub fn new(
        name: &str,
        file_extensions: &[&str],
        block_comment_delims: &[(&str, &str)],
        line_comment_prefixes: &[&str],
    ) -> Self {
        let profile = Self {
            name: name.to_string(),
            file_extensions: file_extensions.iter().map(|s| s.to_string()).collect(),
            block_comment_delims: block_comment_delims
                .iter()
                .map(|(o, c)| (o.to_string(), c.to_string()))
                .collect(),
            line_comment_prefixes: line_comment_prefixes.iter().map(|s| s.to_string()).collect(),
        };
        assert!(
            !profile.file_extensions.is_empty(),
            "profile needs at least one file extension"
        );
        assert!(
            profile
                .block_comment_delims
                .iter()
                .all(|(o, c)| !o.is_empty() && !c.is_empty()),
            "block comment delimiters must be non-empty"
        );
        profile
    }

    /// Lean 3/4: `/- ... -/` blocks and `--` line comments.
    pub fn lean() -> Self {
        Self::new("lean", &["lean"], &[("/-", "-/")], &["--"])
    }

    /// Coq: `(* ... *)` blocks only.
    pub fn coq() -> Self {
        Self::new("coq", &["v"], &[("(*", "*)")], &[])
    }

    /// HOL Light (OCaml sources): `(* ... *)` blocks only.
    pub fn hol_light() -> Self {
        Self::new("hol_light", &["ml"], &[("(*", "*)")], &[])
    }

    /// HOL 4 (Standard ML sources): `(* ... *)` blocks only.
    pub fn hol4() -> Self {
        Self::new("hol4", &["sml"], &[("(*", "*)")], &[])
    }

    /// Looks up a built-in profile by name.
    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "lean" => Some(Self::lean()),
            "coq" => Some(Self::coq()),
            "hol_light" => Some(Self::hol_light()),
            "hol4" => Some(Self::hol4()),
            _ => None,
        }
    }

    fn matches_path(&self, path: &Path) -> bool {
        path.extension()
            .and_then(|e| e.to_str())
            .map(|e| self.file_extensions.iter().any(|x| x == e))
            .unwrap_or(false)
    }
}

/// An ingested corpus: cleaned documents in sorted path order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawCorpus {
    pub profile: LanguageProfile,
    /// `(relative path, cleaned text)` sorted lexicographically by path.
    pub documents: Vec<(String, String)>,
    /// Total characters across documents (Unicode scalar values).
    pub total_chars: usize,
}

impl RawCorpus {
    /// All documents joined with a single `\n` separator.
    pub fn concatenated(&self) -> String {
        let mut out = String::with_capacity(self.total_chars + self.documents.len());
        for (i, (_, text)) in self.documents.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            out.push_str(text);
        }
        out
    }
}

/// Deterministic contiguous train/validation split of a cleaned corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusSplit {
    pub train_text: String,
    pub valid_text: String,
    pub split_ratio: f64,
}

impl CorpusSplit {
    pub fn train_chars(&self) -> usize {
        self.train_text.chars().count()
    }

    pub fn valid_chars(&self) -> usize {
        self.valid_text.chars().count()
    }
}

/// Manifest persisted next to the split text files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub corpus_name: String,
    pub profile: String,
    pub file_count: usize,
    pub total_chars: usize,
    pub train_chars: usize,
    pub valid_chars: usize,
    pub split_ratio: f64,
    pub strip_comments: bool,
    /// SHA-256 of train text followed by valid text, hex encoded.
    pub content_sha256: String,
}

impl CorpusManifest {
    pub fn new(
        corpus_name: &str,
        corpus: &RawCorpus,
        split: &CorpusSplit,
        strip_comments: bool,
    ) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(split.train_text.as_bytes());
        hasher.update(split.valid_text.as_bytes());
        let digest = hasher.finalize();
        let mut hex = String::with_capacity(64);
        for b in digest {
            let _ = write!(hex, "{b:02x}");
        }
        Self {
            corpus_name: corpus_name.to_string(),
            profile: corpus.profile.name.clone(),
            file_count: corpus.documents.len(),
            total_chars: corpus.total_chars,
            train_chars: split.train_chars(),
            valid_chars: split.valid_chars(),
            split_ratio: split.split_ratio,
            strip_comments,
            content_sha256: hex,
        }
    }
}

/// Reads every file under `root` whose suffix matches the profile, in sorted
/// path order. Non-UTF8 bytes are replaced with U+FFFD and counted in a
/// warning. With `strip_comments`, block-comment spans and line-comment tails
/// are removed; a document with an unbalanced block comment is kept verbatim
/// with a logged warning.
pub fn ingest_corpus(
    root: &Path,
    profile: &LanguageProfile,
    strip_comments: bool,
) -> Result<RawCorpus, CorpusError> {
    if !root.is_dir() {
        return Err(CorpusError::UnreadableRoot {
            path: root.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory"),
        });
    }

    let mut paths: Vec<PathBuf> = Vec::new();
    for entry in WalkDir::new(root).follow_links(false) {
        let entry = entry.map_err(|e| CorpusError::UnreadableRoot {
            path: root.to_path_buf(),
            source: e.into(),
        })?;
        if entry.file_type().is_file() && profile.matches_path(entry.path()) {
            paths.push(entry.into_path());
        }
    }
    if paths.is_empty() {
        return Err(CorpusError::EmptyCorpus {
            path: root.to_path_buf(),
            extensions: profile.file_extensions.clone(),
        });
    }
    // Sort by the relative path string so ordering does not depend on the
    // directory-walk order of the filesystem.
    let mut keyed: Vec<(String, PathBuf)> = paths
        .into_iter()
        .map(|p| {
            let rel = p
                .strip_prefix(root)
                .unwrap_or(&p)
                .to_string_lossy()
                .into_owned();
            (rel, p)
        })
        .collect();
    keyed.sort_by(|a, b| a.0.cmp(&b.0));

    let mut documents = Vec::with_capacity(keyed.len());
    let mut total_chars = 0usize;
    for (rel, path) in keyed {
        let bytes = std::fs::read(&path).map_err(|source| CorpusError::Io {
            path: path.clone(),
            source,
        })?;
        let text = match String::from_utf8(bytes) {
            Ok(s) => s,
            Err(e) => {
                let lossy = String::from_utf8_lossy(e.as_bytes()).into_owned();
                log::warn!(
                    "{}: invalid UTF-8, replaced {} byte run(s) with U+FFFD",
                    rel,
                    lossy.matches('\u{FFFD}').count()
                );
                lossy
            }
        };
        let cleaned = if strip_comments {
            match strip_all_comments(&text, profile) {
                Some(s) => s,
                None => {
                    log::warn!("{rel}: unbalanced block comment, keeping document verbatim");
                    text
                }
            }
        } else {
            text
        };
        total_chars += cleaned.chars().count();
        documents.push((rel, cleaned));
    }

    Ok(RawCorpus {
        profile: profile.clone(),
        documents,
        total_chars,
    })
}

/// Removes block-comment spans (non-nested, leftmost first) and line-comment
/// tails. Returns `None` when a block comment is left unclosed.
fn strip_all_comments(text: &str, profile: &LanguageProfile) -> Option<String> {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    loop {
        // Earliest opener among all block delimiters and line prefixes.
        let mut next: Option<(usize, CommentKind)> = None;
        for (i, (open, _)) in profile.block_comment_delims.iter().enumerate() {
            if let Some(pos) = rest.find(open.as_str()) {
                if next.is_none_or(|(p, _)| pos < p) {
                    next = Some((pos, CommentKind::Block(i)));
                }
            }
        }
        for prefix in &profile.line_comment_prefixes {
            if let Some(pos) = rest.find(prefix.as_str()) {
                if next.is_none_or(|(p, _)| pos < p) {
                    next = Some((pos, CommentKind::Line(prefix.len())));
                }
            }
        }
        match next {
            None => {
                out.push_str(rest);
                return Some(out);
            }
            Some((pos, CommentKind::Block(i))) => {
                let (open, close) = &profile.block_comment_delims[i];
                out.push_str(&rest[..pos]);
                let after_open = &rest[pos + open.len()..];
                let close_pos = after_open.find(close.as_str())?;
                rest = &after_open[close_pos + close.len()..];
            }
            Some((pos, CommentKind::Line(prefix_len))) => {
                out.push_str(&rest[..pos]);
                let tail = &rest[pos + prefix_len..];
                match tail.find('\n') {
                    Some(nl) => rest = &tail[nl..], // keep the newline
                    None => return Some(out),
                }
            }
        }
    }
}

#[derive(Clone, Copy)]
enum CommentKind {
    Block(usize),
    Line(usize),
}

/// Cuts the concatenated corpus at `round(ratio * chars)` characters.
pub fn split_corpus(corpus: &RawCorpus, ratio: f64) -> Result<CorpusSplit, CorpusError> {
    split_text(&corpus.concatenated(), ratio)
}

/// Character-level contiguous split of already-cleaned text.
pub fn split_text(text: &str, ratio: f64) -> Result<CorpusSplit, CorpusError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(CorpusError::BadRatio(ratio));
    }
    let n = text.chars().count();
    if n < 2 {
        return Err(CorpusError::TextTooShort { len: n });
    }
    // Both sides stay non-empty even at extreme ratios on tiny texts.
    let cut = ((ratio * n as f64).round() as usize).clamp(1, n - 1);
    let byte_cut = text
        .char_indices()
        .nth(cut)
        .map(|(b, _)| b)
        .unwrap_or(text.len());
    Ok(CorpusSplit {
        train_text: text[..byte_cut].to_string(),
        valid_text: text[byte_cut..].to_string(),
        split_ratio: ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn coq() -> LanguageProfile {
        LanguageProfile::coq()
    }

    #[test]
    fn strips_single_block_comment_span() {
        let got = strip_all_comments("a (* c *) b", &coq()).unwrap();
        assert_eq!(got, "a  b");
    }

    #[test]
    fn strips_lean_block_comment() {
        let got = strip_all_comments("x /- y -/ z", &LanguageProfile::lean()).unwrap();
        assert_eq!(got, "x  z");
    }

    #[test]
    fn strips_lean_line_comment_tail_keeping_newline() {
        let got = strip_all_comments("a -- note\nb", &LanguageProfile::lean()).unwrap();
        assert_eq!(got, "a \nb");
    }

    #[test]
    fn unbalanced_block_comment_returns_none() {
        assert!(strip_all_comments("a (* never closed", &coq()).is_none());
    }

    #[test]
    fn block_comments_are_not_nested() {
        // Non-nested matching: the first close ends the span.
        let got = strip_all_comments("a (* x (* y *) b *) c", &coq()).unwrap();
        assert_eq!(got, "a  b *) c");
    }

    #[test]
    fn ingest_orders_documents_lexicographically() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("c.v"), "three").unwrap();
        fs::write(dir.path().join("a.v"), "one").unwrap();
        fs::write(dir.path().join("b.v"), "two").unwrap();
        fs::write(dir.path().join("ignored.txt"), "nope").unwrap();
        let corpus = ingest_corpus(dir.path(), &coq(), false).unwrap();
        let names: Vec<&str> = corpus.documents.iter().map(|(p, _)| p.as_str()).collect();
        assert_eq!(names, vec!["a.v", "b.v", "c.v"]);
        assert_eq!(corpus.total_chars, 3 + 3 + 5);
    }

    #[test]
    fn ingest_is_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.v"), "alpha (* c *) beta").unwrap();
        fs::write(dir.path().join("b.v"), "gamma").unwrap();
        let one = ingest_corpus(dir.path(), &coq(), true).unwrap();
        let two = ingest_corpus(dir.path(), &coq(), true).unwrap();
        assert_eq!(one.documents, two.documents);
        assert_eq!(one.total_chars, two.total_chars);
    }

    #[test]
    fn no_strip_concatenation_matches_raw_bytes_with_newline_separator() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.v"), "first (* kept *)").unwrap();
        fs::write(dir.path().join("b.v"), "second").unwrap();
        let corpus = ingest_corpus(dir.path(), &coq(), false).unwrap();
        assert_eq!(corpus.concatenated(), "first (* kept *)\nsecond");
    }

    #[test]
    fn ingest_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            ingest_corpus(&dir.path().join("missing"), &coq(), false),
            Err(CorpusError::UnreadableRoot { .. })
        ));
        assert!(matches!(
            ingest_corpus(dir.path(), &coq(), false),
            Err(CorpusError::EmptyCorpus { .. })
        ));
    }

    #[test]
    fn non_utf8_bytes_are_replaced() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.v"), b"ok \xff\xfe end").unwrap();
        let corpus = ingest_corpus(dir.path(), &coq(), false).unwrap();
        assert!(corpus.documents[0].1.contains('\u{FFFD}'));
    }

    #[test]
    fn split_80_20() {
        let text: String = std::iter::repeat_n('x', 100).collect();
        let split = split_text(&text, 0.8).unwrap();
        assert_eq!(split.train_chars(), 80);
        assert_eq!(split.valid_chars(), 20);
    }

    #[test]
    fn split_even() {
        let split = split_text("abcdefghij", 0.5).unwrap();
        assert_eq!(split.train_chars(), 5);
        assert_eq!(split.valid_chars(), 5);
    }

    #[test]
    fn split_rounds_99_chars() {
        let text: String = std::iter::repeat_n('y', 99).collect();
        let split = split_text(&text, 0.8).unwrap();
        assert_eq!(split.train_chars(), 79);
        assert_eq!(split.valid_chars(), 20);
    }

    #[test]
    fn split_reconstructs_cleaned_corpus() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.v"), "alpha (* drop *) beta").unwrap();
        fs::write(dir.path().join("b.v"), "gamma delta").unwrap();
        let corpus = ingest_corpus(dir.path(), &coq(), true).unwrap();
        let split = split_corpus(&corpus, 0.8).unwrap();
        let rebuilt = format!("{}{}", split.train_text, split.valid_text);
        assert_eq!(rebuilt, corpus.concatenated());
    }

    #[test]
    fn split_respects_multibyte_boundaries() {
        let text = "αβγδε"; // 5 chars, 10 bytes
        let split = split_text(text, 0.6).unwrap();
        assert_eq!(split.train_chars(), 3);
        assert_eq!(split.valid_chars(), 2);
    }

    #[test]
    fn split_rejects_short_text_and_bad_ratio() {
        assert!(matches!(
            split_text("a", 0.8),
            Err(CorpusError::TextTooShort { len: 1 })
        ));
        assert!(matches!(split_text("ab", 1.0), Err(CorpusError::BadRatio(_))));
        assert!(matches!(split_text("ab", 0.0), Err(CorpusError::BadRatio(_))));
    }

    #[test]
    fn split_fraction_tracks_ratio_within_half_percent() {
        use proptest::prelude::*;
        proptest!(|(n in 200usize..5000, ratio in 0.1f64..0.9)| {
            let text: String = std::iter::repeat_n('z', n).collect();
            let split = split_text(&text, ratio).unwrap();
            let fraction = split.train_chars() as f64 / n as f64;
            prop_assert!((fraction - ratio).abs() <= 0.005);
        });
    }

    #[test]
    fn manifest_captures_counts_and_hash() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.v"), "hello world this is a corpus").unwrap();
        let corpus = ingest_corpus(dir.path(), &coq(), false).unwrap();
        let split = split_corpus(&corpus, 0.8).unwrap();
        let m = CorpusManifest::new("demo", &corpus, &split, false);
        assert_eq!(m.file_count, 1);
        assert_eq!(m.train_chars + m.valid_chars, m.total_chars);
        assert_eq!(m.content_sha256.len(), 64);
        // Same inputs, same hash.
        let m2 = CorpusManifest::new("demo", &corpus, &split, false);
        assert_eq!(m.content_sha256, m2.content_sha256);
    }
}
