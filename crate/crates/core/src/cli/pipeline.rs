use std::collections::BTreeSet;

use crate::augment::SynonymLexicon;
use crate::data::{sample_few_shot, split, RawExample, SplitSpec};
use crate::error::{Error, Result};
use crate::evalkit::{confusion, prf, MetricsReport};
use crate::model::{init_params, ModelConfig, ModelParams};
use crate::numerics::Rng;
use crate::textpipe::{build_vocab, encode, EncodedExample, Vocabulary};
use crate::train::{predict, round_to_f32, train_loop, TrainConfig, TrainExample, TrainInputs};

const INIT_STREAM: u64 = 31;

/// Vocabulary over the training tokens plus one pseudo-document holding the lexicon
/// synonyms of every covered training token, so augmented substitutes have ids.
pub fn training_vocab(
    examples: &[TrainExample],
    lexicon: &SynonymLexicon,
    max_size: usize,
) -> Result<Vocabulary> {
    let mut corpus: Vec<Vec<String>> = examples.iter().map(|e| e.tokens.clone()).collect();
    let synonyms: BTreeSet<&str> = examples
        .iter()
        .flat_map(|e| e.tokens.iter())
        .filter_map(|t| lexicon.get(t))
        .flat_map(|syns| syns.iter().map(String::as_str))
        .collect();
    corpus.push(synonyms.into_iter().map(str::to_string).collect());
    build_vocab(&corpus, max_size)
}

pub fn encode_all(examples: &[TrainExample], vocab: &Vocabulary, seq_len: usize) -> Vec<EncodedExample> {
    examples
        .iter()
        .map(|e| encode(&e.tokens, vocab, seq_len, e.label))
        .collect()
}

pub fn evaluate(
    params: &ModelParams,
    config: &ModelConfig,
    vocab: &Vocabulary,
    examples: &[TrainExample],
) -> Result<MetricsReport> {
    let encoded = encode_all(examples, vocab, config.seq_len);
    let predictions = predict(params, config, &encoded)?;
    let labels: Vec<usize> = examples.iter().map(|e| e.label.id()).collect();
    Ok(prf(&confusion(&predictions, &labels, config.n_classes)?))
}

/// Training pool (train + val merged, optionally few-shot sampled) and test split.
pub struct Prepared {
    pub train: Vec<TrainExample>,
    pub test: Vec<TrainExample>,
}

/// The split depends only on `spec.seed`, so every run seed and ablation variant
/// is scored on the same test examples; the few-shot draw uses the run seed.
pub fn prepare(examples: &[RawExample], spec: &SplitSpec, few_shot_k: usize, seed: u64) -> Result<Prepared> {
    let splits = split(examples, spec)?;
    let mut pool = splits.train;
    pool.extend(splits.val);
    if few_shot_k > 0 {
        pool = sample_few_shot(&pool, few_shot_k, seed)?;
    }
    if pool.is_empty() {
        return Err(Error::InvalidArgument("training split is empty".into()));
    }
    Ok(Prepared {
        train: pool.iter().map(RawExample::to_train).collect(),
        test: splits.test.iter().map(RawExample::to_train).collect(),
    })
}

pub struct SeedRun {
    /// Rounded to checkpoint precision; these are the parameters that were scored.
    pub params: ModelParams,
    pub vocab: Vocabulary,
    pub report: MetricsReport,
    pub log: Vec<String>,
}

pub struct Experiment<'a> {
    pub train: &'a [TrainExample],
    pub test: &'a [TrainExample],
    pub lexicon: &'a SynonymLexicon,
    pub model: &'a ModelConfig,
    pub training: &'a TrainConfig,
    pub max_vocab: usize,
}

/// vocab → init → train → round to f32 → evaluate. `on_line` receives each log line
/// as it is produced.
pub fn run_seed(exp: &Experiment<'_>, seed: u64, mut on_line: impl FnMut(&str)) -> Result<SeedRun> {
    let mut log = Vec::new();
    let mut emit = |line: String| {
        on_line(&line);
        log.push(line);
    };
    let vocab = training_vocab(exp.train, exp.lexicon, exp.max_vocab)?;
    emit(format!(
        "seed={seed} train_examples={} test_examples={} vocab={} augmentation={}",
        exp.train.len(),
        exp.test.len(),
        vocab.len(),
        if exp.training.augmentation { "on" } else { "off" }
    ));
    let params = init_params(exp.model, vocab.len(), &mut Rng::derive(seed, &[INIT_STREAM]))?;
    let inputs = TrainInputs {
        examples: exp.train,
        vocab: &vocab,
        lexicon: exp.lexicon,
        model: exp.model,
        train: exp.training,
        seed,
    };
    let outcome = train_loop(params, &inputs, |stats| emit(stats.to_string()))?;
    let mut params = outcome.params;
    round_to_f32(&mut params);
    let report = evaluate(&params, exp.model, &vocab, exp.test)?;
    emit(format!(
        "test macro_f1={} accuracy={}",
        report.macro_avg.f1, report.accuracy
    ));
    Ok(SeedRun {
        params,
        vocab,
        report,
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_synthetic;

    #[test]
    fn vocab_covers_synonyms_of_training_tokens() {
        let (raw, lexicon) = gen_synthetic(4, 0.0, 1);
        let train: Vec<TrainExample> = raw.iter().map(RawExample::to_train).collect();
        let vocab = training_vocab(&train, &lexicon, 1000).unwrap();
        for t in train.iter().flat_map(|e| &e.tokens) {
            assert!(vocab.id(t).is_some());
            for s in lexicon.get(t).unwrap() {
                assert!(vocab.id(s).is_some());
            }
        }
    }

    #[test]
    fn prepare_merges_train_and_val() {
        let (raw, _) = gen_synthetic(10, 0.0, 1);
        let p = prepare(&raw, &SplitSpec::default(), 0, 0).unwrap();
        assert_eq!((p.train.len(), p.test.len()), (27, 3));
        let few = prepare(&raw, &SplitSpec::default(), 2, 5).unwrap();
        assert_eq!(few.train.len(), 6);
        assert_eq!(few.test, p.test);
    }
}
