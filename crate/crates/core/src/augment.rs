//! Synonym-replacement augmentation driven by a file-backed lexicon.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Rng;
use crate::textpipe::{tokenize_spans, URL_TOKEN, USER_TOKEN};

const BUNDLED_LEXICON: &str = include_str!("../data/lexicon.tsv");

pub const DEFAULT_REPLACE_PROB: f64 = 0.1;

/// Headword -> synonyms. Lists are non-empty, lowercase and never contain their headword.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SynonymLexicon {
    entries: BTreeMap<String, Vec<String>>,
    skipped_lines: usize,
}

impl SynonymLexicon {
    pub fn new() -> Self {
        Self::default()
    }

    /// The starter lexicon compiled into the crate.
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_LEXICON)
    }

    /// Adds synonyms to `headword`, merging with any existing entry. Returns false
    /// if nothing usable remained after dropping self-references.
    pub fn insert<S: AsRef<str>>(&mut self, headword: &str, synonyms: &[S]) -> bool {
        let head = headword.trim().to_lowercase();
        if head.is_empty() {
            return false;
        }
        let fresh: Vec<String> = synonyms
            .iter()
            .map(|s| s.as_ref().trim().to_lowercase())
            .filter(|s| !s.is_empty() && *s != head)
            .collect();
        if fresh.is_empty() {
            return self.entries.contains_key(&head);
        }
        let list = self.entries.entry(head).or_default();
        for s in fresh {
            if !list.contains(&s) {
                list.push(s);
            }
        }
        true
    }

    pub fn get(&self, token: &str) -> Option<&[String]> {
        self.entries.get(token).map(Vec::as_slice)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.entries.contains_key(token)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[String])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    /// Lines dropped at load time because no synonym survived.
    pub fn skipped_lines(&self) -> usize {
        self.skipped_lines
    }

    pub fn parse(text: &str) -> Self {
        let mut lex = SynonymLexicon::new();
        for line in text.lines() {
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split('\t');
            let head = fields.next().unwrap_or_default();
            let syns: Vec<&str> = fields.collect();
            if !lex.insert(head, &syns) {
                lex.skipped_lines += 1;
            }
        }
        lex
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (head, syns) in &self.entries {
            out.push_str(head);
            for s in syns {
                out.push('\t');
                out.push_str(s);
            }
            out.push('\n');
        }
        out
    }
}

pub fn load_lexicon(path: &Path) -> Result<SynonymLexicon> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = String::from_utf8(bytes)
        .map_err(|e| Error::Format(format!("{}: invalid UTF-8 ({e})", path.display())))?;
    Ok(SynonymLexicon::parse(&text))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig {
    pub p: f64,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            p: DEFAULT_REPLACE_PROB,
            seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::InvalidArgument(format!(
                "replacement probability must lie in [0, 1], got {}",
                self.p
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AugmentStats {
    /// Positions whose token has a lexicon entry (sentinels excluded).
    pub covered: usize,
    pub replaced: usize,
}

impl AugmentStats {
    pub fn merge(&mut self, other: AugmentStats) {
        self.covered += other.covered;
        self.replaced += other.replaced;
    }

    pub fn rate(&self) -> f64 {
        if self.covered == 0 {
            0.0
        } else {
            self.replaced as f64 / self.covered as f64
        }
    }
}

fn is_sentinel(token: &str) -> bool {
    token == URL_TOKEN || token == USER_TOKEN
}

/// Per covered position: one Bernoulli(p) draw, then (only on success) one uniform
/// draw choosing the synonym.
fn maybe_replace<'a>(
    token: &str,
    lexicon: &'a SynonymLexicon,
    p: f64,
    rng: &mut Rng,
    stats: &mut AugmentStats,
) -> Option<&'a str> {
    if is_sentinel(token) {
        return None;
    }
    let synonyms = lexicon.get(token)?;
    stats.covered += 1;
    if rng.bernoulli(p) {
        stats.replaced += 1;
        Some(synonyms[rng.below(synonyms.len())].as_str())
    } else {
        None
    }
}

pub fn augment<S: AsRef<str>>(
    tokens: &[S],
    lexicon: &SynonymLexicon,
    config: &AugmentConfig,
    rng: &mut Rng,
) -> Vec<String> {
    augment_with_stats(tokens, lexicon, config.p, rng).0
}

pub fn augment_with_stats<S: AsRef<str>>(
    tokens: &[S],
    lexicon: &SynonymLexicon,
    p: f64,
    rng: &mut Rng,
) -> (Vec<String>, AugmentStats) {
    let mut stats = AugmentStats::default();
    let out = tokens
        .iter()
        .map(|t| {
            let t = t.as_ref();
            maybe_replace(t, lexicon, p, rng, &mut stats)
                .unwrap_or(t)
                .to_string()
        })
        .collect();
    (out, stats)
}

/// Augments raw text in place: replaced tokens are substituted at their source
/// span, every other byte is kept. Draw order matches [`augment`] on `tokenize(text)`.
pub fn augment_text(
    text: &str,
    lexicon: &SynonymLexicon,
    p: f64,
    rng: &mut Rng,
) -> (String, AugmentStats) {
    let mut stats = AugmentStats::default();
    let mut out = String::with_capacity(text.len());
    let mut cursor = 0;
    for tok in tokenize_spans(text) {
        if let Some(synonym) = maybe_replace(&tok.token, lexicon, p, rng, &mut stats) {
            out.push_str(&text[cursor..tok.span.start]);
            out.push_str(synonym);
            cursor = tok.span.end;
        }
    }
    out.push_str(&text[cursor..]);
    (out, stats)
}
