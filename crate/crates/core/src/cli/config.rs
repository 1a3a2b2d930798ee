//! Flat `key = value` run configuration. `#` starts a comment; blank lines are
//! ignored; every key except `dataset_path` has a default. Relative paths are
//! resolved against the directory containing the config file.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::{DatasetFormat, SplitSpec};
use crate::error::{Error, Result};
use crate::evalkit::{AblationVariant, Average};
use crate::model::{ablation_variant, ModelConfig, Pooling};
use crate::textpipe::DEFAULT_MAX_VOCAB;
use crate::train::TrainConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub split: SplitSpec,
    pub dataset_format: DatasetFormat,
    pub dataset_path: Option<PathBuf>,
    /// `None` selects the bundled lexicon.
    pub lexicon: Option<PathBuf>,
    pub out: PathBuf,
    /// Per-class shots drawn from the merged train+val pool; 0 keeps the whole pool.
    pub few_shot_k: usize,
    pub max_vocab: usize,
    pub average: Average,
    pub variant: AblationVariant,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            split: SplitSpec::default(),
            dataset_format: DatasetFormat::Tsv,
            dataset_path: None,
            lexicon: None,
            out: PathBuf::from("run"),
            few_shot_k: 0,
            max_vocab: DEFAULT_MAX_VOCAB,
            average: Average::Macro,
            variant: AblationVariant::Full,
        }
    }
}

/// `(key, value, line number)` triples; duplicate keys are rejected.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String, usize)>> {
    let mut out: Vec<(String, String, usize)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {line_no}: expected `key = value`")))?;
        let key = key.trim().to_string();
        if out.iter().any(|(k, _, _)| *k == key) {
            return Err(Error::Config(format!("line {line_no}: duplicate key {key:?}")));
        }
        out.push((key, value.trim().to_string(), line_no));
    }
    Ok(out)
}

fn parse_value<T: FromStr>(key: &str, value: &str, line: usize) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("line {line}: bad value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str, line: usize) -> Result<bool> {
    match value {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("line {line}: {key} expects true/false, got {value:?}"))),
    }
}

fn parse_pooling(value: &str) -> Option<Pooling> {
    match value {
        "attention" => Some(Pooling::Attention),
        "mean" => Some(Pooling::Mean),
        _ => None,
    }
}

fn pooling_name(p: Pooling) -> &'static str {
    match p {
        Pooling::Attention => "attention",
        Pooling::Mean => "mean",
    }
}

/// Applies one model key; returns `false` if the key is not a model key.
fn set_model_key(model: &mut ModelConfig, key: &str, value: &str, line: usize) -> Result<bool> {
    match key {
        "d_emb" => model.d_emb = parse_value(key, value, line)?,
        "prompt_len" => model.prompt_len = parse_value(key, value, line)?,
        "conv_filters" => model.conv_filters = parse_value(key, value, line)?,
        "kernel_size" => model.kernel_size = parse_value(key, value, line)?,
        "pool_size" => model.pool_size = parse_value(key, value, line)?,
        "lstm_hidden" => model.lstm_hidden = parse_value(key, value, line)?,
        "n_classes" => model.n_classes = parse_value(key, value, line)?,
        "keep_prob" => model.keep_prob = parse_value(key, value, line)?,
        "lstm_dropout" => model.lstm_input_dropout = parse_value(key, value, line)?,
        "seq_len" => model.seq_len = parse_value(key, value, line)?,
        "norm_eps" => model.norm_eps = parse_value(key, value, line)?,
        "pooling" => {
            model.pooling = parse_pooling(value).ok_or_else(|| {
                Error::Config(format!("line {line}: pooling must be attention or mean"))
            })?
        }
        _ => return Ok(false),
    }
    Ok(true)
}

pub fn model_config_to_text(model: &ModelConfig) -> String {
    let mut s = String::new();
    for (k, v) in model_pairs(model) {
        let _ = writeln!(s, "{k} = {v}");
    }
    s
}

pub fn model_pairs(model: &ModelConfig) -> Vec<(&'static str, String)> {
    vec![
        ("d_emb", model.d_emb.to_string()),
        ("prompt_len", model.prompt_len.to_string()),
        ("conv_filters", model.conv_filters.to_string()),
        ("kernel_size", model.kernel_size.to_string()),
        ("pool_size", model.pool_size.to_string()),
        ("lstm_hidden", model.lstm_hidden.to_string()),
        ("n_classes", model.n_classes.to_string()),
        ("keep_prob", model.keep_prob.to_string()),
        ("lstm_dropout", model.lstm_input_dropout.to_string()),
        ("seq_len", model.seq_len.to_string()),
        ("pooling", pooling_name(model.pooling).to_string()),
        ("norm_eps", model.norm_eps.to_string()),
    ]
}

/// Parses model keys only (as stored in a checkpoint manifest).
pub fn model_config_from_pairs<'a>(
    pairs: impl IntoIterator<Item = (&'a str, &'a str)>,
) -> Result<ModelConfig> {
    let mut model = ModelConfig::default();
    for (k, v) in pairs {
        if !set_model_key(&mut model, k, v, 0)? {
            return Err(Error::Config(format!("unknown model key {k:?}")));
        }
    }
    model.validate().map_err(|e| Error::Config(e.to_string()))?;
    Ok(model)
}

fn resolve(base: &Path, value: &str) -> PathBuf {
    let p = PathBuf::from(value);
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

impl RunConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut c = RunConfig {
            out: base_dir.join("run"),
            ..RunConfig::default()
        };
        for (key, value, line) in parse_pairs(text)? {
            let (k, v) = (key.as_str(), value.as_str());
            if set_model_key(&mut c.model, k, v, line)? {
                continue;
            }
            match k {
                "batch_size" => c.train.batch_size = parse_value(k, v, line)?,
                "epochs" => c.train.epochs = parse_value(k, v, line)?,
                "lr_init" => c.train.lr_init = parse_value(k, v, line)?,
                "lr_min" => c.train.lr_min = parse_value(k, v, line)?,
                "weight_decay" => c.train.weight_decay = parse_value(k, v, line)?,
                "beta1" => c.train.beta1 = parse_value(k, v, line)?,
                "beta2" => c.train.beta2 = parse_value(k, v, line)?,
                "adam_eps" => c.train.adam_eps = parse_value(k, v, line)?,
                "clip_norm" => c.train.clip_norm = parse_value(k, v, line)?,
                "augment_p" => c.train.augment_p = parse_value(k, v, line)?,
                "augmentation" => c.train.augmentation = parse_bool(k, v, line)?,
                "class_weighting" => c.train.class_weighting = parse_bool(k, v, line)?,
                "seeds" => {
                    c.train.seeds = v
                        .split(',')
                        .map(|s| parse_value(k, s.trim(), line))
                        .collect::<Result<_>>()?
                }
                "split_seed" => c.split.seed = parse_value(k, v, line)?,
                "train_frac" => c.split.train = parse_value(k, v, line)?,
                "val_frac" => c.split.val = parse_value(k, v, line)?,
                "test_frac" => c.split.test = parse_value(k, v, line)?,
                "stratified" => c.split.stratified = parse_bool(k, v, line)?,
                "dataset_format" => c.dataset_format = v.parse()?,
                "dataset_path" => c.dataset_path = Some(resolve(base_dir, v)),
                "lexicon" => {
                    c.lexicon = (v != "bundled").then(|| resolve(base_dir, v));
                }
                "out" => c.out = resolve(base_dir, v),
                "few_shot_k" => c.few_shot_k = parse_value(k, v, line)?,
                "max_vocab" => c.max_vocab = parse_value(k, v, line)?,
                "average" => c.average = v.parse().map_err(|e: Error| Error::Config(e.to_string()))?,
                "variant" => {
                    c.variant = v.parse().map_err(|e: Error| Error::Config(e.to_string()))?
                }
                _ => return Err(Error::Config(format!("line {line}: unknown key {k:?}"))),
            }
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        RunConfig::parse(&text, base)
    }

    /// Checks values and that referenced files exist.
    pub fn validate(&self) -> Result<()> {
        let as_config = |e: Error| match e {
            Error::InvalidArgument(m) => Error::Config(m),
            other => other,
        };
        self.model.validate().map_err(as_config)?;
        self.train.validate()?;
        self.split.validate().map_err(as_config)?;
        if self.max_vocab < 3 {
            return Err(Error::Config("max_vocab must be >= 3".into()));
        }
        match &self.dataset_path {
            None => return Err(Error::Config("dataset_path is required".into())),
            Some(p) if !p.is_file() => {
                return Err(Error::Config(format!("dataset {} does not exist", p.display())))
            }
            _ => {}
        }
        if let Some(lex) = &self.lexicon {
            if !lex.is_file() {
                return Err(Error::Config(format!("lexicon {} does not exist", lex.display())));
            }
        }
        Ok(())
    }

    /// Model and training settings with the ablation applied.
    pub fn for_variant(&self, variant: AblationVariant) -> RunConfig {
        let mut c = self.clone();
        c.variant = variant;
        c.model = ablation_variant(&self.model, variant.model_variant());
        c.train.augmentation = self.train.augmentation && variant.augmentation();
        c
    }

    /// Round-trippable text form (paths written as given, absolute after parsing).
    pub fn to_text(&self) -> String {
        let mut s = model_config_to_text(&self.model);
        let t = &self.train;
        let seeds: Vec<String> = t.seeds.iter().map(u64::to_string).collect();
        let format = match self.dataset_format {
            DatasetFormat::HateXplain => "hatexplain",
            DatasetFormat::Hsol => "hsol",
            DatasetFormat::Tsv => "tsv",
        };
        let average = match self.average {
            Average::Macro => "macro",
            Average::Weighted => "weighted",
        };
        let pairs: Vec<(&str, String)> = vec![
            ("batch_size", t.batch_size.to_string()),
            ("epochs", t.epochs.to_string()),
            ("lr_init", t.lr_init.to_string()),
            ("lr_min", t.lr_min.to_string()),
            ("weight_decay", t.weight_decay.to_string()),
            ("beta1", t.beta1.to_string()),
            ("beta2", t.beta2.to_string()),
            ("adam_eps", t.adam_eps.to_string()),
            ("clip_norm", t.clip_norm.to_string()),
            ("augment_p", t.augment_p.to_string()),
            ("augmentation", t.augmentation.to_string()),
            ("class_weighting", t.class_weighting.to_string()),
            ("seeds", seeds.join(",")),
            ("split_seed", self.split.seed.to_string()),
            ("train_frac", self.split.train.to_string()),
            ("val_frac", self.split.val.to_string()),
            ("test_frac", self.split.test.to_string()),
            ("stratified", self.split.stratified.to_string()),
            ("dataset_format", format.to_string()),
            (
                "dataset_path",
                self.dataset_path
                    .as_ref()
                    .map_or(String::new(), |p| p.display().to_string()),
            ),
            (
                "lexicon",
                self.lexicon
                    .as_ref()
                    .map_or("bundled".to_string(), |p| p.display().to_string()),
            ),
            ("out", self.out.display().to_string()),
            ("few_shot_k", self.few_shot_k.to_string()),
            ("max_vocab", self.max_vocab.to_string()),
            ("average", average.to_string()),
            ("variant", self.variant.name().to_string()),
        ];
        for (k, v) in pairs {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}
