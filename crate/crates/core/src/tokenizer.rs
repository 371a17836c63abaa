//! Byte-pair style subword tokenizer over lowercased, whitespace-split words,
//! plus corpus-restricted pruning of its vocabulary and merge files.
//!
//! Assets use the common plain-text layout:
//!
//! ```text
//! vocab.txt    one token per line, line number = id
//! merges.txt   "left right" per line, line order = priority
//! ```

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub const UNK_TOKEN: &str = "[UNK]";
pub const PAD_TOKEN: &str = "[PAD]";
pub const CLS_TOKEN: &str = "[CLS]";
pub const SEP_TOKEN: &str = "[SEP]";
pub const MASK_TOKEN: &str = "[MASK]";

/// Reserved tokens recognised in a vocabulary file. They never come out of
/// text tokenization (text is lowercased) and are never pruned.
pub const SPECIAL_TOKENS: [&str; 5] = [PAD_TOKEN, UNK_TOKEN, CLS_TOKEN, SEP_TOKEN, MASK_TOKEN];

pub const DEFAULT_MAX_LEN: usize = 512;

pub type TokenId = u32;

#[derive(Debug, thiserror::Error)]
pub enum TokenizerError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("duplicate token `{token}` at line {line}")]
    DuplicateToken { token: String, line: usize },
    #[error("empty token at line {0}")]
    EmptyToken(usize),
    #[error("vocabulary has no `{UNK_TOKEN}` token")]
    MissingUnknown,
    #[error("malformed merge at line {line}: `{text}`")]
    MalformedMerge { line: usize, text: String },
    #[error("merge `{left} {right}` refers to a token not in the vocabulary")]
    UnknownMergePart { left: String, right: String },
    #[error("merge `{left} {right}` produces `{left}{right}`, which is not in the vocabulary")]
    MergeOutputMissing { left: String, right: String },
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> TokenizerError + '_ {
    move |source| TokenizerError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    specials: BTreeSet<String>,
}

impl Vocabulary {
    pub fn new(tokens: Vec<String>) -> Result<Self, TokenizerError> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (line, token) in tokens.iter().enumerate() {
            if token.is_empty() {
                return Err(TokenizerError::EmptyToken(line));
            }
            if index.insert(token.clone(), line as TokenId).is_some() {
                return Err(TokenizerError::DuplicateToken {
                    token: token.clone(),
                    line,
                });
            }
        }
        let specials = SPECIAL_TOKENS
            .iter()
            .filter(|s| index.contains_key(**s))
            .map(|s| s.to_string())
            .collect();
        Ok(Self {
            tokens,
            index,
            specials,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn specials(&self) -> &BTreeSet<String> {
        &self.specials
    }

    pub fn is_special(&self, id: TokenId) -> bool {
        self.token(id).is_some_and(|t| self.specials.contains(t))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MergeTable {
    merges: Vec<(String, String)>,
}

impl MergeTable {
    pub fn new(merges: Vec<(String, String)>) -> Self {
        Self { merges }
    }

    pub fn len(&self) -> usize {
        self.merges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.merges.is_empty()
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.merges
    }
}

#[derive(Debug, Clone, Copy)]
struct MergeRule {
    rank: u32,
    output: TokenId,
}

/// Token ids for a text, with a flag marking the first token of each word
/// so that any slice can be rendered back to text.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Encoding {
    pub ids: Vec<TokenId>,
    pub word_starts: Vec<bool>,
}

impl Encoding {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct Tokenizer {
    vocab: Vocabulary,
    merges: MergeTable,
    rules: HashMap<(TokenId, TokenId), MergeRule>,
    unk: TokenId,
    max_len: usize,
}

impl Tokenizer {
    pub fn new(vocab: Vocabulary, merges: MergeTable, max_len: usize) -> Result<Self, TokenizerError> {
        let unk = vocab.id(UNK_TOKEN).ok_or(TokenizerError::MissingUnknown)?;
        let mut rules = HashMap::with_capacity(merges.len());
        for (rank, (left, right)) in merges.pairs().iter().enumerate() {
            let (Some(l), Some(r)) = (vocab.id(left), vocab.id(right)) else {
                return Err(TokenizerError::UnknownMergePart {
                    left: left.clone(),
                    right: right.clone(),
                });
            };
            let output = vocab.id(&format!("{left}{right}")).ok_or_else(|| {
                TokenizerError::MergeOutputMissing {
                    left: left.clone(),
                    right: right.clone(),
                }
            })?;
            // A repeated pair keeps its first (highest) priority.
            rules.entry((l, r)).or_insert(MergeRule {
                rank: rank as u32,
                output,
            });
        }
        Ok(Self {
            vocab,
            merges,
            rules,
            unk,
            max_len,
        })
    }

    pub fn from_files(
        vocab_path: impl AsRef<Path>,
        merges_path: impl AsRef<Path>,
        max_len: usize,
    ) -> Result<Self, TokenizerError> {
        let vocab_path = vocab_path.as_ref();
        let merges_path = merges_path.as_ref();
        let vocab_text = fs::read_to_string(vocab_path).map_err(io_error(vocab_path))?;
        let merges_text = fs::read_to_string(merges_path).map_err(io_error(merges_path))?;
        Self::new(parse_vocab(&vocab_text)?, parse_merges(&merges_text)?, max_len)
    }

    /// Writes `vocab.txt` and `merges.txt` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), TokenizerError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(io_error(dir))?;
        let vocab_path = dir.join("vocab.txt");
        let merges_path = dir.join("merges.txt");
        fs::write(&vocab_path, render_lines(self.vocab.tokens().iter().map(String::as_str)))
            .map_err(io_error(&vocab_path))?;
        let merges: Vec<String> = self.merges.pairs().iter().map(|(l, r)| format!("{l} {r}")).collect();
        fs::write(&merges_path, render_lines(merges.iter().map(String::as_str)))
            .map_err(io_error(&merges_path))?;
        Ok(())
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn merges(&self) -> &MergeTable {
        &self.merges
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn with_max_len(mut self, max_len: usize) -> Self {
        self.max_len = max_len;
        self
    }

    pub fn unk_id(&self) -> TokenId {
        self.unk
    }

    pub fn encode(&self, text: &str) -> Encoding {
        self.encode_traced(text, &mut |_| {}, &mut |_| {})
    }

    pub fn tokenize(&self, text: &str) -> Vec<TokenId> {
        self.encode(text).ids
    }

    pub fn count_tokens(&self, text: &str) -> usize {
        let mut count = 0;
        let mut symbols = Vec::new();
        for word in text.to_lowercase().split_whitespace() {
            self.encode_word(word, &mut symbols, &mut |_| {}, &mut |_| {});
            count += symbols.len();
        }
        count
    }

    /// Token strings for `text`, unknown characters rendered as `[UNK]`.
    pub fn token_strings(&self, text: &str) -> Vec<String> {
        self.tokenize(text)
            .into_iter()
            .map(|id| self.vocab.token(id).unwrap_or(UNK_TOKEN).to_string())
            .collect()
    }

    pub fn decode(&self, encoding: &Encoding) -> String {
        self.decode_slice(&encoding.ids, &encoding.word_starts)
    }

    /// Renders a run of tokens. Tokens flagged as word starts get a
    /// separating space unless they open the slice.
    pub fn decode_slice(&self, ids: &[TokenId], word_starts: &[bool]) -> String {
        let mut out = String::new();
        for (i, &id) in ids.iter().enumerate() {
            if i > 0 && word_starts.get(i).copied().unwrap_or(true) {
                out.push(' ');
            }
            out.push_str(self.vocab.token(id).unwrap_or(UNK_TOKEN));
        }
        out
    }

    fn encode_traced(
        &self,
        text: &str,
        on_symbol: &mut dyn FnMut(TokenId),
        on_merge: &mut dyn FnMut(u32),
    ) -> Encoding {
        let mut encoding = Encoding::default();
        let mut symbols = Vec::new();
        for word in text.to_lowercase().split_whitespace() {
            self.encode_word(word, &mut symbols, on_symbol, on_merge);
            encoding.word_starts.extend((0..symbols.len()).map(|i| i == 0));
            encoding.ids.extend_from_slice(&symbols);
        }
        encoding
    }

    /// Greedy merge-priority BPE on a single word. Each round merges every
    /// non-overlapping occurrence (left to right) of the best-ranked pair.
    fn encode_word(
        &self,
        word: &str,
        symbols: &mut Vec<TokenId>,
        on_symbol: &mut dyn FnMut(TokenId),
        on_merge: &mut dyn FnMut(u32),
    ) {
        symbols.clear();
        let mut buf = [0u8; 4];
        for c in word.chars() {
            let id = self.vocab.id(c.encode_utf8(&mut buf)).unwrap_or(self.unk);
            if id != self.unk {
                on_symbol(id);
            }
            symbols.push(id);
        }
        loop {
            let best = symbols
                .windows(2)
                .filter_map(|w| self.rule(w[0], w[1]).map(|rule| (rule, w[0], w[1])))
                .min_by_key(|(rule, _, _)| rule.rank);
            let Some((rule, left, right)) = best else {
                break;
            };
            on_merge(rule.rank);
            on_symbol(rule.output);
            let mut merged = Vec::with_capacity(symbols.len());
            let mut i = 0;
            while i < symbols.len() {
                if i + 1 < symbols.len() && symbols[i] == left && symbols[i + 1] == right {
                    merged.push(rule.output);
                    i += 2;
                } else {
                    merged.push(symbols[i]);
                    i += 1;
                }
            }
            *symbols = merged;
        }
    }

    fn rule(&self, left: TokenId, right: TokenId) -> Option<MergeRule> {
        if left == self.unk || right == self.unk {
            return None;
        }
        self.rules.get(&(left, right)).copied()
    }
}

fn render_lines<'a>(lines: impl Iterator<Item = &'a str>) -> String {
    let mut out = String::new();
    for line in lines {
        out.push_str(line);
        out.push('\n');
    }
    out
}

pub fn parse_vocab(text: &str) -> Result<Vocabulary, TokenizerError> {
    let tokens: Vec<String> = text
        .strip_suffix('\n')
        .unwrap_or(text)
        .split('\n')
        .map(|l| l.strip_suffix('\r').unwrap_or(l).to_string())
        .collect();
    if text.is_empty() {
        return Vocabulary::new(Vec::new());
    }
    Vocabulary::new(tokens)
}

pub fn parse_merges(text: &str) -> Result<MergeTable, TokenizerError> {
    let mut merges = Vec::new();
    for (line, raw) in text.lines().enumerate() {
        let raw = raw.trim_end_matches('\r');
        if raw.is_empty() || raw.starts_with("#version") {
            continue;
        }
        let mut parts = raw.split(' ');
        match (parts.next(), parts.next(), parts.next()) {
            (Some(l), Some(r), None) if !l.is_empty() && !r.is_empty() => {
                merges.push((l.to_string(), r.to_string()))
            }
            _ => {
                return Err(TokenizerError::MalformedMerge {
                    line,
                    text: raw.to_string(),
                })
            }
        }
    }
    Ok(MergeTable::new(merges))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruneStats {
    pub original_vocab: usize,
    pub pruned_vocab: usize,
    pub original_merges: usize,
    pub pruned_merges: usize,
}

impl PruneStats {
    /// Fraction of vocabulary entries removed.
    pub fn vocab_reduction(&self) -> f64 {
        reduction(self.original_vocab, self.pruned_vocab)
    }

    pub fn merge_reduction(&self) -> f64 {
        reduction(self.original_merges, self.pruned_merges)
    }
}

fn reduction(before: usize, after: usize) -> f64 {
    if before == 0 {
        0.0
    } else {
        1.0 - after as f64 / before as f64
    }
}

/// Restricts a tokenizer to what `corpus` actually exercises.
///
/// The pruned vocabulary keeps the specials plus every symbol that appears
/// while tokenizing the corpus: initial characters and merge outputs alike,
/// since intermediate merge products are needed to replay the same merges.
/// The merge table keeps each merge applied at least once, in original
/// priority order. Ids are remapped contiguously in original order.
pub fn prune_vocab<S: AsRef<str>>(tok: &Tokenizer, corpus: &[S]) -> (Tokenizer, PruneStats) {
    let mut used_tokens = vec![false; tok.vocab.len()];
    let mut used_merges = vec![false; tok.merges.len()];
    for id in tok.vocab.tokens().iter().filter_map(|t| {
        tok.vocab.specials().contains(t).then(|| tok.vocab.id(t)).flatten()
    }) {
        used_tokens[id as usize] = true;
    }
    for text in corpus {
        tok.encode_traced(
            text.as_ref(),
            &mut |id| used_tokens[id as usize] = true,
            &mut |rank| used_merges[rank as usize] = true,
        );
    }

    let tokens: Vec<String> = tok
        .vocab
        .tokens()
        .iter()
        .zip(&used_tokens)
        .filter(|(_, used)| **used)
        .map(|(t, _)| t.clone())
        .collect();
    // Only the first occurrence of a pair ever fires; later duplicates are dead.
    let merges: Vec<(String, String)> = tok
        .merges
        .pairs()
        .iter()
        .zip(&used_merges)
        .filter(|(_, used)| **used)
        .map(|(m, _)| m.clone())
        .collect();
    let stats = PruneStats {
        original_vocab: tok.vocab.len(),
        pruned_vocab: tokens.len(),
        original_merges: tok.merges.len(),
        pruned_merges: merges.len(),
    };
    let vocab = Vocabulary::new(tokens).expect("subset of a valid vocabulary");
    let pruned = Tokenizer::new(vocab, MergeTable::new(merges), tok.max_len)
        .expect("retained merges only reference retained tokens");
    (pruned, stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(tokens: &[&str], merges: &[(&str, &str)]) -> Tokenizer {
        let mut all: Vec<String> = vec![UNK_TOKEN.to_string()];
        all.extend(tokens.iter().map(|t| t.to_string()));
        let merges = merges.iter().map(|(l, r)| (l.to_string(), r.to_string())).collect();
        Tokenizer::new(Vocabulary::new(all).unwrap(), MergeTable::new(merges), DEFAULT_MAX_LEN).unwrap()
    }

    #[test]
    fn empty_text_has_no_tokens() {
        let tok = toy(&["a"], &[]);
        assert!(tok.tokenize("").is_empty());
        assert_eq!(tok.count_tokens(""), 0);
        assert_eq!(tok.count_tokens("   \n\t"), 0);
    }

    #[test]
    fn applies_merge_per_word() {
        let tok = toy(&["a", "b", "ab"], &[("a", "b")]);
        let ab = tok.vocab().id("ab").unwrap();
        assert_eq!(tok.tokenize("ab ab"), vec![ab, ab]);
        assert_eq!(tok.tokenize("AB"), vec![ab]);
        assert_eq!(tok.count_tokens("ab"), 1);
    }

    #[test]
    fn merge_priority_decides_between_overlaps() {
        // "abc": (b,c) outranks (a,b), so the result is a + bc.
        let tok = toy(&["a", "b", "c", "ab", "bc"], &[("b", "c"), ("a", "b")]);
        assert_eq!(tok.token_strings("abc"), ["a", "bc"]);
        let tok = toy(&["a", "b", "c", "ab", "bc"], &[("a", "b"), ("b", "c")]);
        assert_eq!(tok.token_strings("abc"), ["ab", "c"]);
    }

    #[test]
    fn merges_do_not_overlap_within_a_round() {
        let tok = toy(&["a", "aa"], &[("a", "a")]);
        assert_eq!(tok.token_strings("aaa"), ["aa", "a"]);
    }

    #[test]
    fn unknown_characters_map_to_unk() {
        let tok = toy(&["a", "b", "ab"], &[("a", "b")]);
        assert_eq!(tok.token_strings("azb"), ["a", UNK_TOKEN, "b"]);
        assert_eq!(tok.tokenize("z"), vec![tok.unk_id()]);
    }

    #[test]
    fn decode_restores_normalized_text() {
        let tok = toy(&["a", "b", "c", "ab"], &[("a", "b")]);
        let enc = tok.encode("  AB\tc  abab ");
        assert_eq!(tok.decode(&enc), "ab c abab");
        assert_eq!(tok.encode("ab c abab"), tok.encode("AB   C\nABAB"));
    }

    #[test]
    fn rejects_inconsistent_assets() {
        let vocab = Vocabulary::new(vec!["a".into(), "b".into()]).unwrap();
        assert!(matches!(
            Tokenizer::new(vocab, MergeTable::default(), 8),
            Err(TokenizerError::MissingUnknown)
        ));
        let vocab = Vocabulary::new(vec![UNK_TOKEN.into(), "a".into(), "b".into()]).unwrap();
        let merges = MergeTable::new(vec![("a".into(), "b".into())]);
        assert!(matches!(
            Tokenizer::new(vocab, merges, 8),
            Err(TokenizerError::MergeOutputMissing { .. })
        ));
        assert!(matches!(
            Vocabulary::new(vec!["a".into(), "a".into()]),
            Err(TokenizerError::DuplicateToken { line: 1, .. })
        ));
        assert!(parse_merges("a b c\n").is_err());
        assert_eq!(parse_merges("#version: 0.2\na b\n\n").unwrap().len(), 1);
    }

    #[test]
    fn files_round_trip() {
        let tok = toy(&["a", "b", "ab", "ü"], &[("a", "b")]);
        let dir = tempfile::tempdir().unwrap();
        tok.save(dir.path()).unwrap();
        let loaded = Tokenizer::from_files(
            dir.path().join("vocab.txt"),
            dir.path().join("merges.txt"),
            DEFAULT_MAX_LEN,
        )
        .unwrap();
        assert_eq!(loaded.vocab(), tok.vocab());
        assert_eq!(loaded.merges(), tok.merges());
    }

    #[test]
    fn pruning_keeps_used_symbols_and_merges() {
        let tok = toy(
            &["a", "b", "c", "d", "ab", "abc", "cd"],
            &[("a", "b"), ("ab", "c"), ("c", "d")],
        );
        let (pruned, stats) = prune_vocab(&tok, &["abc abc"]);
        let kept: Vec<&str> = pruned.vocab().tokens().iter().map(String::as_str).collect();
        assert_eq!(kept, [UNK_TOKEN, "a", "b", "c", "ab", "abc"]);
        assert_eq!(pruned.merges().pairs().len(), 2);
        assert_eq!(stats.original_vocab, 8);
        assert_eq!(stats.pruned_vocab, 6);
        assert_eq!(stats.original_merges, 3);
        assert_eq!(stats.pruned_merges, 2);
        assert_eq!(pruned.token_strings("abc abc"), tok.token_strings("abc abc"));
    }

    #[test]
    fn pruning_with_full_coverage_is_identity() {
        let tok = toy(&["a", "b", "c", "ab"], &[("a", "b")]);
        let (pruned, stats) = prune_vocab(&tok, &["ab c"]);
        assert_eq!(pruned.vocab(), tok.vocab());
        assert_eq!(pruned.merges(), tok.merges());
        assert_eq!(stats.vocab_reduction(), 0.0);
    }
}
