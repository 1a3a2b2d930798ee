//! Tokenization, frequency-ranked vocabulary and fixed-length id encoding.

use std::collections::HashMap;
use std::fmt;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";
pub const URL_TOKEN: &str = "<url>";
pub const USER_TOKEN: &str = "<user>";
pub const DEFAULT_MAX_VOCAB: usize = 15_000;
pub const DEFAULT_SEQ_LEN: usize = 128;

/// Three-way label scheme; the discriminant is the class id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Normal = 0,
    Offensive = 1,
    Hatespeech = 2,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Normal, Label::Offensive, Label::Hatespeech];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: usize) -> Option<Label> {
        Label::ALL.get(id).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Normal => "normal",
            Label::Offensive => "offensive",
            Label::Hatespeech => "hatespeech",
        }
    }

    /// Accepts the canonical names, common dataset aliases and numeric class ids.
    pub fn parse(s: &str) -> Option<Label> {
        match s.trim().to_ascii_lowercase().as_str() {
            "normal" | "neither" | "0" => Some(Label::Normal),
            "offensive" | "offensive_language" | "1" => Some(Label::Offensive),
            "hatespeech" | "hate_speech" | "hate" | "2" => Some(Label::Hatespeech),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A token together with the byte range of the source text it was read from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpannedToken {
    pub token: String,
    pub span: Range<usize>,
}

pub fn tokenize(text: &str) -> Vec<String> {
    tokenize_spans(text).into_iter().map(|t| t.token).collect()
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '\''
}

fn is_url(chunk: &str) -> bool {
    let lower = chunk.to_lowercase();
    lower.starts_with("http://") || lower.starts_with("https://") || lower.starts_with("www.")
}

/// Lowercases, maps URLs to `<url>` and @-mentions to `<user>`, and splits each
/// whitespace chunk into runs of word characters and runs of punctuation.
pub fn tokenize_spans(text: &str) -> Vec<SpannedToken> {
    let mut out = Vec::new();
    let mut chunk_start = None;
    for (i, c) in text.char_indices().chain(std::iter::once((text.len(), ' '))) {
        if c.is_whitespace() {
            if let Some(start) = chunk_start.take() {
                split_chunk(text, start, i, &mut out);
            }
        } else if chunk_start.is_none() {
            chunk_start = Some(i);
        }
    }
    out
}

fn split_chunk(text: &str, start: usize, end: usize, out: &mut Vec<SpannedToken>) {
    let chunk = &text[start..end];
    if is_url(chunk) {
        out.push(SpannedToken {
            token: URL_TOKEN.to_string(),
            span: start..end,
        });
        return;
    }
    let mut pos = start;
    if let Some(rest) = chunk.strip_prefix('@') {
        let name_len: usize = rest
            .chars()
            .take_while(|&c| c.is_alphanumeric() || c == '_')
            .map(char::len_utf8)
            .sum();
        if name_len > 0 {
            out.push(SpannedToken {
                token: USER_TOKEN.to_string(),
                span: start..start + 1 + name_len,
            });
            pos = start + 1 + name_len;
        }
    }
    while pos < end {
        let first = text[pos..end].chars().next().expect("non-empty remainder");
        let word = is_word_char(first);
        let run_len: usize = text[pos..end]
            .chars()
            .take_while(|&c| is_word_char(c) == word)
            .map(char::len_utf8)
            .sum();
        out.push(SpannedToken {
            token: text[pos..pos + run_len].to_lowercase(),
            span: pos..pos + run_len,
        });
        pos += run_len;
    }
}

/// Token/id bijection with `<pad>` = 0 and `<unk>` = 1 reserved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    max_size: usize,
}

impl Vocabulary {
    fn from_tokens(tokens: Vec<String>, max_size: usize) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (id, tok) in tokens.iter().enumerate() {
            if index.insert(tok.clone(), id as u32).is_some() {
                return Err(Error::Format(format!("duplicate vocabulary token {tok:?}")));
            }
        }
        Ok(Vocabulary {
            tokens,
            index,
            max_size,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn max_size(&self) -> usize {
        self.max_size
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Text form: one token per line, line number = id.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for t in &self.tokens {
            s.push_str(t);
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let tokens: Vec<String> = text.lines().map(str::to_string).collect();
        if tokens.len() < 2 || tokens[0] != PAD_TOKEN || tokens[1] != UNK_TOKEN {
            return Err(Error::Format(
                "vocabulary must start with <pad> and <unk> lines".into(),
            ));
        }
        if let Some(bad) = tokens.iter().position(|t| t.is_empty()) {
            return Err(Error::Format(format!("empty vocabulary entry on line {bad}")));
        }
        let n = tokens.len().max(DEFAULT_MAX_VOCAB);
        Vocabulary::from_tokens(tokens, n)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let text = String::from_utf8(bytes)
            .map_err(|_| Error::Format(format!("{} is not valid UTF-8", path.display())))?;
        Vocabulary::from_text(&text)
    }

    /// Hex SHA-256 of the text form; pairs checkpoints with their vocabulary.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Ranks tokens by descending frequency (ties ascending lexicographically) and admits
/// the top `max_size - 2` after the reserved entries.
pub fn build_vocab<S: AsRef<str>>(corpus: &[Vec<S>], max_size: usize) -> Result<Vocabulary> {
    if max_size < 3 {
        return Err(Error::InvalidArgument(format!(
            "vocabulary max_size must be >= 3, got {max_size}"
        )));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for doc in corpus {
        for tok in doc {
            let tok = tok.as_ref();
            if tok.is_empty() || tok == PAD_TOKEN || tok == UNK_TOKEN || tok.contains('\n') {
                continue;
            }
            *counts.entry(tok).or_insert(0) += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let mut tokens = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
    tokens.extend(ranked.into_iter().take(max_size - 2).map(|(t, _)| t.to_string()));
    Vocabulary::from_tokens(tokens, max_size)
}

/// Fixed-length id sequence; positions at or past `true_length` hold `PAD_ID`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedExample {
    pub ids: Vec<u32>,
    pub true_length: usize,
    pub label: Label,
}

impl EncodedExample {
    pub fn seq_len(&self) -> usize {
        self.ids.len()
    }
}

pub fn encode<S: AsRef<str>>(
    tokens: &[S],
    vocab: &Vocabulary,
    seq_len: usize,
    label: Label,
) -> EncodedExample {
    assert!(seq_len >= 1, "seq_len must be >= 1");
    let true_length = tokens.len().min(seq_len);
    let mut ids = vec![PAD_ID; seq_len];
    for (slot, tok) in ids.iter_mut().zip(tokens) {
        *slot = vocab.id(tok.as_ref()).unwrap_or(UNK_ID);
    }
    EncodedExample {
        ids,
        true_length,
        label,
    }
}

/// Tokens for the first `true_length` ids.
pub fn decode(example: &EncodedExample, vocab: &Vocabulary) -> Vec<String> {
    example.ids[..example.true_length]
        .iter()
        .map(|&id| vocab.token(id).unwrap_or(UNK_TOKEN).to_string())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(words: &[&str]) -> Vec<String> {
        words.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("You are WRONG!"), toks(&["you", "are", "wrong", "!"]));
        assert_eq!(tokenize("@bob see http://x.co"), toks(&["<user>", "see", "<url>"]));
        assert!(tokenize("").is_empty());
        assert!(tokenize("   \t\n ").is_empty());
    }

    #[test]
    fn tokenize_edge_cases() {
        assert_eq!(tokenize("what?!? no..."), toks(&["what", "?!?", "no", "..."]));
        assert_eq!(tokenize("@user_1: hi"), toks(&["<user>", ":", "hi"]));
        assert_eq!(tokenize("don't"), toks(&["don't"]));
        assert_eq!(tokenize("WWW.Example.com/x rt"), toks(&["<url>", "rt"]));
        assert_eq!(tokenize("#Tag"), toks(&["#", "tag"]));
        assert_eq!(tokenize("@ alone"), toks(&["@", "alone"]));
    }

    #[test]
    fn spans_point_back_into_the_source() {
        let text = "Hey @Al, LOOK: https://a.b ok";
        for t in tokenize_spans(text) {
            let raw = &text[t.span.clone()];
            if t.token.starts_with('<') {
                continue;
            }
            assert_eq!(raw.to_lowercase(), t.token);
        }
    }

    #[test]
    fn build_vocab_examples() {
        let corpus = vec![toks(&["a", "b", "c"]), toks(&["d", "e"])];
        assert_eq!(build_vocab(&corpus, 15_000).unwrap().len(), 7);

        let corpus = vec![toks(&["a", "b", "c", "a", "b"])];
        let v = build_vocab(&corpus, 4).unwrap();
        assert_eq!(v.tokens(), &toks(&["<pad>", "<unk>", "a", "b"])[..]);

        let empty: Vec<Vec<String>> = vec![];
        let v = build_vocab(&empty, 10).unwrap();
        assert_eq!(v.tokens(), &toks(&["<pad>", "<unk>"])[..]);

        assert!(matches!(build_vocab(&empty, 2), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn build_vocab_breaks_ties_lexicographically() {
        let corpus = vec![toks(&["zeta", "alpha", "mid", "zeta", "alpha", "mid"])];
        let v = build_vocab(&corpus, 4).unwrap();
        assert_eq!(v.tokens()[2..], toks(&["alpha", "mid"])[..]);
    }

    #[test]
    fn encode_examples() {
        let v = build_vocab(&[toks(&["x", "y", "z"])], 100).unwrap();
        let e = encode(&toks(&["x", "y", "z"]), &v, 5, Label::Normal);
        assert_eq!(e.true_length, 3);
        assert_eq!(&e.ids[3..], &[PAD_ID, PAD_ID]);
        assert!(e.ids[..3].iter().all(|&id| id >= 2));

        let long: Vec<String> = (0..200).map(|i| ["x", "y", "z"][i % 3].to_string()).collect();
        let e = encode(&long, &v, 128, Label::Offensive);
        assert_eq!(e.ids.len(), 128);
        assert_eq!(e.true_length, 128);
        assert_eq!(decode(&e, &v), long[..128].to_vec());

        let e = encode(&toks(&["zzz-not-in-vocab"]), &v, 4, Label::Hatespeech);
        assert_eq!(e.ids, vec![UNK_ID, PAD_ID, PAD_ID, PAD_ID]);
        assert_eq!(e.true_length, 1);
    }

    #[test]
    fn vocab_text_round_trip_and_hash() {
        let v = build_vocab(&[toks(&["b", "a", "b"])], 10).unwrap();
        let text = v.to_text();
        assert_eq!(text, "<pad>\n<unk>\nb\na\n");
        let back = Vocabulary::from_text(&text).unwrap();
        assert_eq!(back.tokens(), v.tokens());
        assert_eq!(back.hash(), v.hash());
        assert!(Vocabulary::from_text("a\nb\n").is_err());
        assert!(Vocabulary::from_text("<pad>\n<unk>\nx\nx\n").is_err());
    }

    #[test]
    fn label_mapping_is_fixed() {
        assert_eq!(Label::Normal.id(), 0);
        assert_eq!(Label::Offensive.id(), 1);
        assert_eq!(Label::Hatespeech.id(), 2);
        assert_eq!(Label::parse("neither"), Some(Label::Normal));
        assert_eq!(Label::parse("hatespeech"), Some(Label::Hatespeech));
        assert_eq!(Label::parse("2"), Some(Label::Hatespeech));
        assert_eq!(Label::parse("undecided"), None);
    }

    proptest! {
        #[test]
        fn encode_tokenize_is_deterministic(text in "\\PC{0,80}") {
            let v = build_vocab(&[tokenize(&text)], 50).unwrap();
            let a = encode(&tokenize(&text), &v, 16, Label::Normal);
            let b = encode(&tokenize(&text), &v, 16, Label::Normal);
            prop_assert_eq!(a, b);
        }

        #[test]
        fn tokens_are_never_empty(text in "\\PC{0,80}") {
            prop_assert!(tokenize(&text).iter().all(|t| !t.is_empty()));
        }

        #[test]
        fn vocab_cap_and_frequency_admission(
            corpus in proptest::collection::vec(
                proptest::collection::vec("[a-f]{1,2}", 0..12), 0..8),
            max_size in 3usize..12,
        ) {
            let v = build_vocab(&corpus, max_size).unwrap();
            prop_assert!(v.len() <= max_size);
            let mut counts: HashMap<&str, usize> = HashMap::new();
            for doc in &corpus {
                for t in doc {
                    *counts.entry(t.as_str()).or_insert(0) += 1;
                }
            }
            let mut freqs: Vec<usize> = counts.values().copied().collect();
            freqs.sort_unstable_by(|a, b| b.cmp(a));
            if freqs.len() > max_size - 2 {
                let cutoff = freqs[max_size - 3];
                for (tok, c) in &counts {
                    if *c > cutoff {
                        prop_assert!(v.id(tok).is_some());
                    }
                }
            }
        }

        #[test]
        fn decode_reproduces_in_vocab_prefix(
            tokens in proptest::collection::vec("[a-d]{1,3}", 0..40),
            seq_len in 1usize..32,
        ) {
            let v = build_vocab(std::slice::from_ref(&tokens), 1000).unwrap();
            let e = encode(&tokens, &v, seq_len, Label::Normal);
            let n = tokens.len().min(seq_len);
            prop_assert_eq!(decode(&e, &v), tokens[..n].to_vec());
            prop_assert!(e.ids[n..].iter().all(|&id| id == PAD_ID));
        }
    }
}
