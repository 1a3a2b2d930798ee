use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::Deserialize;

use crate::augment::SynonymLexicon;
use crate::error::{Error, Result};
use crate::numerics::Rng;
use crate::textpipe::{tokenize, Label};
use crate::train::TrainExample;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    HateXplain,
    Hsol,
    Tsv,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Content {
    Text(String),
    /// Pre-tokenized, already lowercased.
    Tokens(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawExample {
    pub id: String,
    pub content: Content,
    pub label: Label,
    pub source: Source,
}

impl RawExample {
    pub fn tokens(&self) -> Vec<String> {
        match &self.content {
            Content::Text(text) => tokenize(text),
            Content::Tokens(tokens) => tokens.clone(),
        }
    }

    /// Text form; token lists are joined with single spaces.
    pub fn text(&self) -> String {
        match &self.content {
            Content::Text(text) => text.clone(),
            Content::Tokens(tokens) => tokens.join(" "),
        }
    }

    pub fn to_train(&self) -> TrainExample {
        TrainExample {
            tokens: self.tokens(),
            label: self.label,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    HateXplain,
    Hsol,
    Tsv,
}

impl FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hatexplain" => Ok(DatasetFormat::HateXplain),
            "hsol" => Ok(DatasetFormat::Hsol),
            "tsv" => Ok(DatasetFormat::Tsv),
            other => Err(Error::Config(format!(
                "dataset format must be hatexplain, hsol or tsv, got {other:?}"
            ))),
        }
    }
}

/// Loader output. `records` counts every record read, before any filtering.
#[derive(Debug, Clone, PartialEq)]
pub struct Loaded {
    pub examples: Vec<RawExample>,
    pub records: usize,
    pub skipped: usize,
}

pub fn load(format: DatasetFormat, path: &Path) -> Result<Loaded> {
    match format {
        DatasetFormat::HateXplain => load_hatexplain(path),
        DatasetFormat::Hsol => load_hsol(path),
        DatasetFormat::Tsv => load_tsv(path),
    }
}

#[derive(Deserialize)]
struct HxAnnotator {
    label: String,
}

#[derive(Deserialize)]
struct HxRecord {
    annotators: Vec<HxAnnotator>,
    post_tokens: Vec<String>,
}

/// Posts whose annotators reach no strict majority are skipped.
pub fn load_hatexplain(path: &Path) -> Result<Loaded> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let posts: BTreeMap<String, serde_json::Value> = serde_json::from_slice(&bytes)
        .map_err(|e| Error::Format(format!("{}: not a post map: {e}", path.display())))?;
    let mut examples = Vec::new();
    let mut skipped = 0;
    for (post_id, value) in &posts {
        let record: HxRecord = serde_json::from_value(value.clone())
            .map_err(|e| Error::Format(format!("post {post_id}: {e}")))?;
        let mut votes = [0usize; 3];
        for annotator in &record.annotators {
            let label = match annotator.label.as_str() {
                "hatespeech" => Label::Hatespeech,
                "offensive" => Label::Offensive,
                "normal" => Label::Normal,
                other => {
                    return Err(Error::Format(format!(
                        "post {post_id}: unknown annotator label {other:?}"
                    )))
                }
            };
            votes[label.id()] += 1;
        }
        let n = record.annotators.len();
        match votes.iter().position(|&v| 2 * v > n) {
            Some(winner) => examples.push(RawExample {
                id: post_id.clone(),
                content: Content::Tokens(
                    record.post_tokens.iter().map(|t| t.to_lowercase()).collect(),
                ),
                label: Label::from_id(winner).expect("three classes"),
                source: Source::HateXplain,
            }),
            None => skipped += 1,
        }
    }
    Ok(Loaded {
        examples,
        records: posts.len(),
        skipped,
    })
}

/// `class` column: 0 hate speech, 1 offensive, 2 neither.
pub fn load_hsol(path: &Path) -> Result<Loaded> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Format(format!("{}: {other:?}", path.display())),
        })?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Format(format!("{}: header: {e}", path.display())))?
        .clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Format(format!("{}: missing column {name:?}", path.display())))
    };
    let class_col = column("class")?;
    let tweet_col = column("tweet")?;
    let mut examples = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Format(format!("row {row}: {e}")))?;
        let field = |col: usize| {
            record
                .get(col)
                .ok_or_else(|| Error::Format(format!("row {row}: too few fields")))
        };
        let label = match field(class_col)?.trim() {
            "0" => Label::Hatespeech,
            "1" => Label::Offensive,
            "2" => Label::Normal,
            other => return Err(Error::Format(format!("row {row}: bad class {other:?}"))),
        };
        let id = match record.get(0).map(str::trim) {
            Some(first) if class_col != 0 && tweet_col != 0 && !first.is_empty() => first.to_string(),
            _ => row.to_string(),
        };
        examples.push(RawExample {
            id,
            content: Content::Text(field(tweet_col)?.to_string()),
            label,
            source: Source::Hsol,
        });
    }
    let records = examples.len();
    Ok(Loaded {
        examples,
        records,
        skipped: 0,
    })
}

/// One `label<TAB>text` example per line; blank lines are ignored.
pub fn parse_tsv(text: &str) -> Result<Vec<RawExample>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (label, body) = line
            .split_once('\t')
            .ok_or_else(|| Error::Format(format!("line {line_no}: expected label<TAB>text")))?;
        let label = Label::parse(label.trim())
            .ok_or_else(|| Error::Format(format!("line {line_no}: unknown label {label:?}")))?;
        out.push(RawExample {
            id: line_no.to_string(),
            content: Content::Text(body.to_string()),
            label,
            source: Source::Tsv,
        });
    }
    Ok(out)
}

pub fn load_tsv(path: &Path) -> Result<Loaded> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = String::from_utf8(bytes)
        .map_err(|_| Error::Format(format!("{}: not valid UTF-8", path.display())))?;
    let examples = parse_tsv(&text)?;
    Ok(Loaded {
        records: examples.len(),
        examples,
        skipped: 0,
    })
}

/// Tabs and line breaks inside a text become spaces so each example stays one line.
pub fn to_tsv(examples: &[RawExample]) -> String {
    let mut out = String::new();
    for ex in examples {
        let text: String = ex
            .text()
            .chars()
            .map(|c| if matches!(c, '\t' | '\n' | '\r') { ' ' } else { c })
            .collect();
        let _ = writeln!(out, "{}\t{}", ex.label.name(), text);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train: 0.8,
            val: 0.1,
            test: 0.1,
            seed: 0,
            stratified: true,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let fractions = [self.train, self.val, self.test];
        if fractions.iter().any(|f| !(*f > 0.0)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "split fractions must be positive and sum to 1, got {fractions:?}"
            )));
        }
        Ok(())
    }

    /// Exact split sizes for `n` items (largest remainder, ties to the earlier split).
    pub fn sizes(&self, n: usize) -> [usize; 3] {
        let quotas = [self.train, self.val, self.test].map(|f| f * n as f64);
        let mut sizes = quotas.map(|q| q.floor() as usize);
        let mut order = [0, 1, 2];
        order.sort_by(|&a, &b| {
            let ra = quotas[a] - quotas[a].floor();
            let rb = quotas[b] - quotas[b].floor();
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        let missing = n - sizes.iter().sum::<usize>();
        for &i in order.iter().take(missing) {
            sizes[i] += 1;
        }
        sizes
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Splits {
    pub train: Vec<RawExample>,
    pub val: Vec<RawExample>,
    pub test: Vec<RawExample>,
}

const SPLIT_STREAM: u64 = 11;
const FEW_SHOT_STREAM: u64 = 12;

/// Seeded shuffled split. When stratified, each class is shuffled on its own and
/// the classes are interleaved by within-class rank before cutting, so every split
/// keeps the class proportions up to rounding while global sizes stay exact.
pub fn split(examples: &[RawExample], spec: &SplitSpec) -> Result<Splits> {
    spec.validate()?;
    let order: Vec<usize> = if spec.stratified {
        let mut by_class: [Vec<usize>; 3] = Default::default();
        for (i, ex) in examples.iter().enumerate() {
            by_class[ex.label.id()].push(i);
        }
        if let Some(c) = by_class.iter().position(|v| v.is_empty()) {
            return Err(Error::InvalidArgument(format!(
                "cannot stratify: class {} has no examples",
                Label::from_id(c).expect("three classes")
            )));
        }
        let mut keyed = Vec::with_capacity(examples.len());
        for (c, members) in by_class.iter_mut().enumerate() {
            Rng::derive(spec.seed, &[SPLIT_STREAM, c as u64]).shuffle(members);
            let n = members.len() as f64;
            for (rank, &i) in members.iter().enumerate() {
                keyed.push(((rank as f64 + 0.5) / n, c, i));
            }
        }
        keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        keyed.into_iter().map(|(_, _, i)| i).collect()
    } else {
        let mut order: Vec<usize> = (0..examples.len()).collect();
        Rng::derive(spec.seed, &[SPLIT_STREAM]).shuffle(&mut order);
        order
    };
    let [n_train, n_val, _] = spec.sizes(examples.len());
    let pick = |range: &[usize]| range.iter().map(|&i| examples[i].clone()).collect();
    Ok(Splits {
        train: pick(&order[..n_train]),
        val: pick(&order[n_train..n_train + n_val]),
        test: pick(&order[n_train + n_val..]),
    })
}

/// Exactly `k` examples per class, drawn without replacement, grouped by class.
pub fn sample_few_shot(examples: &[RawExample], k: usize, seed: u64) -> Result<Vec<RawExample>> {
    let mut out = Vec::with_capacity(3 * k);
    for c in 0..3 {
        let label = Label::from_id(c).expect("three classes");
        let mut members: Vec<usize> = (0..examples.len())
            .filter(|&i| examples[i].label == label)
            .collect();
        if members.len() < k {
            return Err(Error::InvalidArgument(format!(
                "class {label} has {} examples, fewer than k = {k}",
                members.len()
            )));
        }
        Rng::derive(seed, &[FEW_SHOT_STREAM, c as u64]).shuffle(&mut members);
        out.extend(members[..k].iter().map(|&i| examples[i].clone()));
    }
    Ok(out)
}

const KEYWORDS_PER_CLASS: usize = 12;
const FILLERS: usize = 24;
const FAMILY_PREFIX: [&str; 3] = ["nm", "of", "hs"];

fn keyword(class: usize, i: usize) -> String {
    format!("{}{i:02}", FAMILY_PREFIX[class])
}

fn synonym(class: usize, i: usize, which: usize) -> String {
    format!("{}{i:02}v{which}", FAMILY_PREFIX[class])
}

fn filler(i: usize) -> String {
    format!("zz{i:02}")
}

fn synthetic_examples(
    n_per_class: usize,
    noise: f64,
    seed: u64,
    stream: u64,
    mut family_token: impl FnMut(usize, &mut Rng) -> String,
) -> Vec<RawExample> {
    let noise = noise.clamp(0.0, 1.0);
    let mut out = Vec::with_capacity(3 * n_per_class);
    for c in 0..3 {
        for i in 0..n_per_class {
            let mut rng = Rng::derive(seed, &[stream, c as u64, i as u64]);
            let len = 8 + rng.below(13);
            let tokens: Vec<String> = (0..len)
                .map(|_| {
                    if rng.bernoulli(noise) {
                        filler(rng.below(FILLERS))
                    } else {
                        family_token(c, &mut rng)
                    }
                })
                .collect();
            out.push(RawExample {
                id: format!("syn-{stream}-{c}-{i}"),
                content: Content::Text(tokens.join(" ")),
                label: Label::from_id(c).expect("three classes"),
                source: Source::Synthetic,
            });
        }
    }
    out
}

/// Three disjoint keyword families (one per class) plus shared fillers; each token is a
/// filler with probability `noise`. The lexicon links every keyword with two in-family
/// synonyms that never occur in the generated text.
pub fn gen_synthetic(n_per_class: usize, noise: f64, seed: u64) -> (Vec<RawExample>, SynonymLexicon) {
    let examples = synthetic_examples(n_per_class, noise, seed, 21, |c, rng| {
        keyword(c, rng.below(KEYWORDS_PER_CLASS))
    });
    (examples, synthetic_lexicon())
}

/// Same generator, but every family token is one of the keywords' synonyms: a
/// lexical-shift test set for models trained on [`gen_synthetic`] output.
pub fn gen_synthetic_shifted(n_per_class: usize, noise: f64, seed: u64) -> Vec<RawExample> {
    synthetic_examples(n_per_class, noise, seed, 22, |c, rng| {
        let i = rng.below(KEYWORDS_PER_CLASS);
        synonym(c, i, 1 + rng.below(2))
    })
}

/// Symmetric: each member of a `{keyword, v1, v2}` triple maps to the other two.
pub fn synthetic_lexicon() -> SynonymLexicon {
    let mut lexicon = SynonymLexicon::new();
    for c in 0..3 {
        for i in 0..KEYWORDS_PER_CLASS {
            let group = [keyword(c, i), synonym(c, i, 1), synonym(c, i, 2)];
            for (j, head) in group.iter().enumerate() {
                let others: Vec<&str> = group
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| *k != j)
                    .map(|(_, s)| s.as_str())
                    .collect();
                lexicon.insert(head, &others);
            }
        }
    }
    lexicon
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::{BTreeSet, HashMap};
    use std::io::Write;

    fn write_temp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn numbered(n_per_class: [usize; 3]) -> Vec<RawExample> {
        let mut out = Vec::new();
        for (c, &n) in n_per_class.iter().enumerate() {
            for i in 0..n {
                out.push(RawExample {
                    id: format!("{c}-{i}"),
                    content: Content::Text(format!("text {c} {i}")),
                    label: Label::from_id(c).unwrap(),
                    source: Source::Tsv,
                });
            }
        }
        out
    }

    const HATEXPLAIN_FIXTURE: &str = r#"{
      "p1": {"post_id": "p1", "annotators": [
          {"label": "hatespeech", "annotator_id": 1, "target": ["None"]},
          {"label": "hatespeech", "annotator_id": 2, "target": ["None"]},
          {"label": "normal", "annotator_id": 3, "target": ["None"]}],
        "rationales": [], "post_tokens": ["Some", "HATEFUL", "words"]},
      "p2": {"post_id": "p2", "annotators": [
          {"label": "hatespeech", "annotator_id": 1, "target": []},
          {"label": "offensive", "annotator_id": 2, "target": []},
          {"label": "normal", "annotator_id": 3, "target": []}],
        "rationales": [], "post_tokens": ["mixed"]},
      "p3": {"post_id": "p3", "annotators": [
          {"label": "normal", "annotator_id": 1, "target": []},
          {"label": "normal", "annotator_id": 2, "target": []},
          {"label": "offensive", "annotator_id": 3, "target": []}],
        "rationales": [], "post_tokens": ["hello", "<user>"]}
    }"#;

    #[test]
    fn hatexplain_majority_vote() {
        let f = write_temp(HATEXPLAIN_FIXTURE);
        let loaded = load_hatexplain(f.path()).unwrap();
        assert_eq!(loaded.records, 3);
        assert_eq!(loaded.skipped, 1);
        assert_eq!(loaded.examples.len(), 2);
        assert_eq!(loaded.examples[0].label, Label::Hatespeech);
        assert_eq!(loaded.examples[0].tokens(), vec!["some", "hateful", "words"]);
        assert_eq!(loaded.examples[1].id, "p3");
        assert_eq!(loaded.examples[1].label, Label::Normal);
    }

    #[test]
    fn hatexplain_errors() {
        let missing = Path::new("/definitely/not/here.json");
        assert!(matches!(load_hatexplain(missing), Err(Error::Io { .. })));
        let f = write_temp(r#"{"bad1": {"annotators": "nope", "post_tokens": []}}"#);
        match load_hatexplain(f.path()) {
            Err(Error::Format(msg)) => assert!(msg.contains("bad1")),
            other => panic!("{other:?}"),
        }
    }

    const HSOL_FIXTURE: &str = ",count,hate_speech,offensive_language,neither,class,tweet\n\
        0,3,0,0,3,2,\"just a normal, friendly tweet\"\n\
        1,3,0,3,0,1,rude words here\n\
        2,3,2,1,0,0,\"multi\nline, hateful\"\n";

    #[test]
    fn hsol_mapping_and_quoting() {
        let f = write_temp(HSOL_FIXTURE);
        let loaded = load_hsol(f.path()).unwrap();
        let labels: Vec<Label> = loaded.examples.iter().map(|e| e.label).collect();
        assert_eq!(labels, vec![Label::Normal, Label::Offensive, Label::Hatespeech]);
        assert_eq!(loaded.examples[0].text(), "just a normal, friendly tweet");
        assert_eq!(loaded.examples[2].text(), "multi\nline, hateful");
        assert_eq!(loaded.records, 3);
    }

    #[test]
    fn hsol_errors() {
        let f = write_temp("a,b\n1,2\n");
        assert!(matches!(load_hsol(f.path()), Err(Error::Format(m)) if m.contains("class")));
        let f = write_temp("class,tweet\n2,ok\n7,bad\n");
        assert!(matches!(load_hsol(f.path()), Err(Error::Format(m)) if m.contains("row 2")));
        assert!(matches!(load_hsol(Path::new("/nope.csv")), Err(Error::Io { .. })));
    }

    #[test]
    fn tsv_round_trip() {
        let examples = numbered([2, 1, 1]);
        let text = to_tsv(&examples);
        let parsed = parse_tsv(&text).unwrap();
        assert_eq!(parsed.len(), 4);
        for (a, b) in examples.iter().zip(&parsed) {
            assert_eq!((a.label, a.text()), (b.label, b.text()));
        }
        assert!(parse_tsv("normal no tab").is_err());
        assert!(parse_tsv("angry\ttext").is_err());
    }

    #[test]
    fn split_sizes_and_partition() {
        let examples = numbered([34, 33, 33]);
        let spec = SplitSpec::default();
        let s = split(&examples, &spec).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (80, 10, 10));
        assert_eq!(split(&examples, &spec).unwrap(), s);
        let mut ids: Vec<String> = s.train.iter().chain(&s.val).chain(&s.test).map(|e| e.id.clone()).collect();
        ids.sort();
        let mut expected: Vec<String> = examples.iter().map(|e| e.id.clone()).collect();
        expected.sort();
        assert_eq!(ids, expected);
        for part in [&s.train, &s.val, &s.test] {
            for c in 0..3 {
                let count = part.iter().filter(|e| e.label.id() == c).count() as f64;
                let share = 33.0 / 100.0 * part.len() as f64;
                assert!((count - share).abs() <= 1.5, "{count} vs {share}");
            }
        }
        let unstratified = split(&examples, &SplitSpec { stratified: false, ..spec }).unwrap();
        assert_eq!(unstratified.train.len(), 80);
    }

    #[test]
    fn split_rejects_bad_input() {
        assert!(split(&numbered([5, 0, 5]), &SplitSpec::default()).is_err());
        let bad = SplitSpec { train: 0.9, ..SplitSpec::default() };
        assert!(split(&numbered([5, 5, 5]), &bad).is_err());
        assert_eq!(SplitSpec::default().sizes(7), [5, 1, 1]);
        assert_eq!(SplitSpec::default().sizes(0), [0, 0, 0]);
    }

    #[test]
    fn few_shot_sampling() {
        let examples = numbered([20, 16, 30]);
        let s = sample_few_shot(&examples, 16, 3).unwrap();
        assert_eq!(s.len(), 48);
        for c in 0..3 {
            assert_eq!(s.iter().filter(|e| e.label.id() == c).count(), 16);
        }
        let unique: BTreeSet<&str> = s.iter().map(|e| e.id.as_str()).collect();
        assert_eq!(unique.len(), 48);
        assert_eq!(sample_few_shot(&examples, 16, 3).unwrap(), s);
        match sample_few_shot(&examples, 17, 3) {
            Err(Error::InvalidArgument(msg)) => assert!(msg.contains("offensive")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn synthetic_corpus_properties() {
        let (a, lexicon) = gen_synthetic(20, 0.0, 5);
        let (b, _) = gen_synthetic(20, 0.0, 5);
        assert_eq!(a, b);
        assert_eq!(a.len(), 60);
        let mut vocab_by_class: [BTreeSet<String>; 3] = Default::default();
        for ex in &a {
            let tokens = ex.tokens();
            assert!((8..=20).contains(&tokens.len()));
            vocab_by_class[ex.label.id()].extend(tokens);
        }
        for i in 0..3 {
            for j in i + 1..3 {
                assert!(vocab_by_class[i].is_disjoint(&vocab_by_class[j]));
            }
        }
        // every keyword has two in-family synonyms that never appear in training text
        for word in &vocab_by_class[1] {
            let syns = lexicon.get(word).unwrap();
            assert_eq!(syns.len(), 2);
            assert!(syns.iter().all(|s| s.starts_with("of") && !vocab_by_class[1].contains(s)));
        }
    }

    #[test]
    fn full_noise_erases_class_signal() {
        let (examples, _) = gen_synthetic(10, 1.0, 2);
        let mut seen: HashMap<usize, BTreeSet<String>> = HashMap::new();
        for ex in &examples {
            for t in ex.tokens() {
                assert!(t.starts_with("zz"));
                seen.entry(ex.label.id()).or_default().insert(t);
            }
        }
        assert_eq!(seen.len(), 3);
    }

    #[test]
    fn shifted_set_uses_only_synonyms() {
        let (train, lexicon) = gen_synthetic(10, 0.0, 1);
        let train_tokens: BTreeSet<String> = train.iter().flat_map(|e| e.tokens()).collect();
        let shifted = gen_synthetic_shifted(10, 0.0, 1);
        for ex in &shifted {
            for t in ex.tokens() {
                assert!(!train_tokens.contains(&t));
                // "of03v1" links back to its keyword "of03"
                assert!(lexicon.get(&t).unwrap().contains(&t[..4].to_string()));
                assert!(t.starts_with(FAMILY_PREFIX[ex.label.id()]));
            }
        }
    }
}
