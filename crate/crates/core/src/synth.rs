//! Synthetic patent corpora and matching tokenizer assets, for tests,
//! benchmarks and desk-scale runs of the full pipeline.
//!
//! Relevant patents carry a planted keyword in their claims; irrelevant
//! ones never do, so a bag-of-tokens model can separate them.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, Label, PatentRecord};
use crate::tokenizer::{MergeTable, Tokenizer, Vocabulary, DEFAULT_MAX_LEN, SPECIAL_TOKENS};

pub const PLANTED_KEYWORD: &str = "geophone";
pub const TITLE_KEYWORD: &str = "seismic";

const ONSETS: [&str; 16] = ["b", "c", "d", "f", "g", "l", "m", "n", "p", "r", "s", "t", "v", "pr", "st", "tr"];
const VOWELS: [&str; 6] = ["a", "e", "i", "o", "u", "io"];
const CODAS: [&str; 6] = ["", "", "n", "r", "s", "l"];

/// Builds a lexicon of `size` distinct pseudo-words (plus the two keywords).
pub fn lexicon(size: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen: HashSet<String> = [PLANTED_KEYWORD, TITLE_KEYWORD].iter().map(|s| s.to_string()).collect();
    let mut words = Vec::with_capacity(size);
    while words.len() < size {
        let syllables = rng.gen_range(1..=4);
        let word: String = (0..syllables)
            .map(|_| {
                format!(
                    "{}{}{}",
                    ONSETS.choose(&mut rng).unwrap(),
                    VOWELS.choose(&mut rng).unwrap(),
                    CODAS.choose(&mut rng).unwrap()
                )
            })
            .collect();
        if seen.insert(word.clone()) {
            words.push(word);
        }
    }
    words
}

/// Tokenizer whose merges assemble each given word left to right. Merge
/// priority follows first appearance, so words sharing prefixes may end
/// up split into several subwords.
pub fn tokenizer_for_words<S: AsRef<str>>(words: &[S], max_len: usize) -> Tokenizer {
    let mut tokens: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
    let alphabet = ('a'..='z').chain('0'..='9').chain(".,;:()-".chars());
    tokens.extend(alphabet.map(String::from));
    let mut known: HashSet<String> = tokens.iter().cloned().collect();
    let mut merges = Vec::new();
    let mut seen_merges = HashSet::new();
    for word in words {
        let chars: Vec<String> = word.as_ref().chars().map(String::from).collect();
        for c in &chars {
            if known.insert(c.clone()) {
                tokens.push(c.clone());
            }
        }
        let mut prefix = chars.first().cloned().unwrap_or_default();
        for c in chars.iter().skip(1) {
            let merged = format!("{prefix}{c}");
            if seen_merges.insert((prefix.clone(), c.clone())) {
                merges.push((prefix.clone(), c.clone()));
            }
            if known.insert(merged.clone()) {
                tokens.push(merged.clone());
            }
            prefix = merged;
        }
    }
    Tokenizer::new(
        Vocabulary::new(tokens).expect("tokens are deduplicated"),
        MergeTable::new(merges),
        max_len,
    )
    .expect("every merge output was added to the vocabulary")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub patents: usize,
    pub relevant_fraction: f64,
    /// Inclusive range of claim lengths in tokens.
    pub min_tokens: usize,
    pub max_tokens: usize,
    /// Planted keyword occurrences per relevant patent; the first one
    /// always lands within the first 100 tokens.
    pub keyword_occurrences: usize,
    pub id_prefix: String,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            patents: 1000,
            relevant_fraction: 0.1,
            min_tokens: 60,
            max_tokens: 300,
            keyword_occurrences: 3,
            id_prefix: "S".into(),
            seed: 0,
        }
    }
}

/// Word source with precomputed token counts.
pub struct CorpusGenerator<'a> {
    tokenizer: &'a Tokenizer,
    words: Vec<(String, usize)>,
    keyword_len: usize,
}

impl<'a> CorpusGenerator<'a> {
    pub fn new<S: AsRef<str>>(tokenizer: &'a Tokenizer, words: &[S]) -> Self {
        let words = words
            .iter()
            .map(|w| w.as_ref())
            .filter(|w| *w != PLANTED_KEYWORD && *w != TITLE_KEYWORD)
            .map(|w| (w.to_string(), tokenizer.count_tokens(w)))
            .filter(|(_, n)| *n > 0)
            .collect();
        Self {
            tokenizer,
            words,
            keyword_len: tokenizer.count_tokens(PLANTED_KEYWORD),
        }
    }

    /// Claims text of exactly `target` tokens. `keyword_at` lists token
    /// offsets at which the planted keyword should start, best effort.
    pub fn claims(&self, rng: &mut ChaCha8Rng, target: usize, keyword_at: &[usize]) -> String {
        let mut pending: Vec<usize> = keyword_at.to_vec();
        pending.sort_unstable();
        pending.reverse();
        let mut parts: Vec<String> = Vec::new();
        let mut used = 0;
        let mut claim = 1;
        let mut next_claim_at = 0;
        while used < target {
            let remaining = target - used;
            if used >= next_claim_at {
                let number = format!("{claim}.");
                let n = self.tokenizer.count_tokens(&number);
                if n <= remaining {
                    parts.push(number);
                    used += n;
                    claim += 1;
                    next_claim_at = used + rng.gen_range(40..160);
                    continue;
                }
            }
            if pending.last().is_some_and(|&at| used >= at) && self.keyword_len <= remaining {
                pending.pop();
                parts.push(PLANTED_KEYWORD.to_string());
                used += self.keyword_len;
                continue;
            }
            let (word, n) = &self.words[rng.gen_range(0..self.words.len())];
            if *n <= remaining {
                parts.push(word.clone());
                used += n;
            } else {
                // single letters are always one token
                parts.push(((b'a' + rng.gen_range(0..26u8)) as char).to_string());
                used += 1;
            }
        }
        parts.join(" ")
    }

    fn title(&self, rng: &mut ChaCha8Rng, relevant: bool) -> String {
        let n = rng.gen_range(3..=6);
        let mut words: Vec<String> = (0..n)
            .map(|_| self.words[rng.gen_range(0..self.words.len())].0.clone())
            .collect();
        let with_keyword = if relevant { rng.gen_bool(0.6) } else { rng.gen_bool(0.05) };
        if with_keyword {
            let at = rng.gen_range(0..=words.len());
            words.insert(at, TITLE_KEYWORD.to_string());
        }
        let mut title = words.join(" ");
        if let Some(first) = title.get_mut(0..1) {
            first.make_ascii_uppercase();
        }
        title
    }

    pub fn dataset(&self, name: &str, cfg: &SynthConfig) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let relevant_count = (cfg.patents as f64 * cfg.relevant_fraction).round() as usize;
        let mut labels: Vec<bool> = (0..cfg.patents).map(|i| i < relevant_count).collect();
        labels.shuffle(&mut rng);
        let records = labels
            .into_iter()
            .enumerate()
            .map(|(i, relevant)| {
                let target = rng.gen_range(cfg.min_tokens..=cfg.max_tokens.max(cfg.min_tokens));
                let keyword_at: Vec<usize> = if relevant {
                    (0..cfg.keyword_occurrences)
                        .map(|k| {
                            let bound = if k == 0 { target.min(100) } else { target };
                            rng.gen_range(0..bound.max(1))
                        })
                        .collect()
                } else {
                    Vec::new()
                };
                let claims = self.claims(&mut rng, target, &keyword_at);
                let title = self.title(&mut rng, relevant);
                let label = if relevant { Label::Relevant } else { Label::Irrelevant };
                PatentRecord::new(format!("{}-{i:05}", cfg.id_prefix), title, claims, label)
            })
            .collect();
        Dataset::new(name, records).expect("generated ids are unique and claims non-empty")
    }
}

/// Lexicon-backed tokenizer (max length 512) plus its lexicon.
pub fn standard_assets(lexicon_size: usize, seed: u64) -> (Tokenizer, Vec<String>) {
    // keywords first so their merges outrank everything else
    let mut words = vec![PLANTED_KEYWORD.to_string(), TITLE_KEYWORD.to_string()];
    words.extend(lexicon(lexicon_size, seed));
    let tokenizer = tokenizer_for_words(&words, DEFAULT_MAX_LEN);
    (tokenizer, words)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn claims_hit_the_target_length() {
        let (tok, words) = standard_assets(300, 1);
        let generator = CorpusGenerator::new(&tok, &words);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for target in [1, 2, 17, 512, 1100] {
            let text = generator.claims(&mut rng, target, &[0, target / 2]);
            assert_eq!(tok.count_tokens(&text), target, "{text}");
        }
    }

    #[test]
    fn keyword_only_in_relevant_patents() {
        let (tok, words) = standard_assets(300, 1);
        let generator = CorpusGenerator::new(&tok, &words);
        let cfg = SynthConfig { patents: 200, min_tokens: 50, max_tokens: 300, ..Default::default() };
        let ds = generator.dataset("S1", &cfg);
        assert_eq!(ds.class_counts(), (20, 180));
        for r in &ds.records {
            let has = r.claims.split_whitespace().any(|w| w == PLANTED_KEYWORD);
            assert_eq!(has, r.label.is_relevant(), "{}", r.id);
        }
        assert_eq!(generator.dataset("S1", &cfg), ds);
    }

    #[test]
    fn the_keyword_is_a_single_token() {
        let (tok, _) = standard_assets(500, 3);
        assert_eq!(tok.count_tokens(PLANTED_KEYWORD), 1);
        assert!(tok.merges().len() > 500);
    }
}
