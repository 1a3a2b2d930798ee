use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelVariant;
use crate::textpipe::Label;

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    n: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(n_classes: usize) -> Self {
        ConfusionMatrix {
            n: n_classes,
            counts: vec![0; n_classes * n_classes],
        }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidArgument("confusion matrix must be square".into()));
        }
        Ok(ConfusionMatrix {
            n,
            counts: rows.concat(),
        })
    }

    pub fn n_classes(&self) -> usize {
        self.n
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.n + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    fn row_sum(&self, truth: usize) -> u64 {
        (0..self.n).map(|p| self.get(truth, p)).sum()
    }

    fn col_sum(&self, predicted: usize) -> u64 {
        (0..self.n).map(|t| self.get(t, predicted)).sum()
    }
}

pub fn confusion(predictions: &[usize], labels: &[usize], n_classes: usize) -> Result<ConfusionMatrix> {
    if predictions.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions vs {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut m = ConfusionMatrix::new(n_classes);
    for (&p, &t) in predictions.iter().zip(labels) {
        if p >= n_classes || t >= n_classes {
            return Err(Error::InvalidArgument(format!(
                "class id out of range (pred {p}, label {t}, n_classes {n_classes})"
            )));
        }
        m.counts[t * n_classes + p] += 1;
    }
    Ok(m)
}

/// `num / den`, with 0 for an empty denominator.
pub fn safe_ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    safe_ratio(2.0 * precision * recall, precision + recall)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Average {
    #[default]
    Macro,
    Weighted,
}

impl FromStr for Average {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "macro" => Ok(Average::Macro),
            "weighted" => Ok(Average::Weighted),
            other => Err(Error::InvalidArgument(format!(
                "averaging must be macro or weighted, got {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Per-class and averaged scores. After [`aggregate_seeds`] the values are means and
/// `std` holds the matching sample standard deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub runs: usize,
    pub accuracy: f64,
    pub classes: Vec<ClassMetrics>,
    #[serde(rename = "macro")]
    pub macro_avg: Summary,
    #[serde(rename = "weighted")]
    pub weighted_avg: Summary,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub std: Option<Box<MetricsReport>>,
}

fn class_name(c: usize) -> String {
    Label::from_id(c).map_or_else(|| format!("class{c}"), |l| l.name().to_string())
}

pub fn prf(matrix: &ConfusionMatrix) -> MetricsReport {
    let n = matrix.n_classes();
    let total = matrix.total() as f64;
    let classes: Vec<ClassMetrics> = (0..n)
        .map(|c| {
            let tp = matrix.get(c, c) as f64;
            let precision = safe_ratio(tp, matrix.col_sum(c) as f64);
            let recall = safe_ratio(tp, matrix.row_sum(c) as f64);
            ClassMetrics {
                label: class_name(c),
                precision,
                recall,
                f1: f1_score(precision, recall),
                support: matrix.row_sum(c) as f64,
            }
        })
        .collect();
    let correct: f64 = (0..n).map(|c| matrix.get(c, c) as f64).sum();
    let mean = |f: fn(&ClassMetrics) -> f64| safe_ratio(classes.iter().map(f).sum(), n as f64);
    let weighted = |f: fn(&ClassMetrics) -> f64| {
        safe_ratio(classes.iter().map(|c| f(c) * c.support).sum(), total)
    };
    MetricsReport {
        runs: 1,
        accuracy: safe_ratio(correct, total),
        macro_avg: Summary {
            precision: mean(|c| c.precision),
            recall: mean(|c| c.recall),
            f1: mean(|c| c.f1),
        },
        weighted_avg: Summary {
            precision: weighted(|c| c.precision),
            recall: weighted(|c| c.recall),
            f1: weighted(|c| c.f1),
        },
        classes,
        std: None,
    }
}

impl MetricsReport {
    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn summary(&self, average: Average) -> Summary {
        match average {
            Average::Macro => self.macro_avg,
            Average::Weighted => self.weighted_avg,
        }
    }

    /// Every scalar in a fixed order, with its key.
    pub fn fields(&self) -> Vec<(String, f64)> {
        let mut out = vec![("accuracy".to_string(), self.accuracy)];
        for c in &self.classes {
            for (k, v) in [
                ("precision", c.precision),
                ("recall", c.recall),
                ("f1", c.f1),
                ("support", c.support),
            ] {
                out.push((format!("class.{}.{k}", c.label), v));
            }
        }
        for (prefix, s) in [("macro", self.macro_avg), ("weighted", self.weighted_avg)] {
            out.push((format!("{prefix}.precision"), s.precision));
            out.push((format!("{prefix}.recall"), s.recall));
            out.push((format!("{prefix}.f1"), s.f1));
        }
        out
    }

    fn with_values(&self, values: &[f64]) -> MetricsReport {
        let mut it = values.iter().copied();
        let mut next = || it.next().expect("field count mismatch");
        let accuracy = next();
        let classes = self
            .classes
            .iter()
            .map(|c| ClassMetrics {
                label: c.label.clone(),
                precision: next(),
                recall: next(),
                f1: next(),
                support: next(),
            })
            .collect();
        let mut summary = || Summary {
            precision: next(),
            recall: next(),
            f1: next(),
        };
        let macro_avg = summary();
        let weighted_avg = summary();
        MetricsReport {
            runs: self.runs,
            accuracy,
            classes,
            macro_avg,
            weighted_avg,
            std: None,
        }
    }

    /// Flat `key = value` text, one metric per line.
    pub fn to_kv(&self) -> String {
        let mut out = format!("runs = {}\n", self.runs);
        for (k, v) in self.fields() {
            let _ = writeln!(out, "{k} = {v}");
        }
        if let Some(std) = &self.std {
            for (k, v) in std.fields() {
                let _ = writeln!(out, "std.{k} = {v}");
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("metrics json: {e}")))
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<12} {:>9} {:>9} {:>9} {:>9}", "class", "precision", "recall", "f1", "support")?;
        for c in &self.classes {
            writeln!(
                f,
                "{:<12} {:>9.4} {:>9.4} {:>9.4} {:>9}",
                c.label, c.precision, c.recall, c.f1, c.support
            )?;
        }
        for (name, s) in [("macro", self.macro_avg), ("weighted", self.weighted_avg)] {
            writeln!(f, "{:<12} {:>9.4} {:>9.4} {:>9.4}", name, s.precision, s.recall, s.f1)?;
        }
        write!(f, "accuracy {:.4} over {} run(s)", self.accuracy, self.runs)?;
        if let Some(std) = &self.std {
            write!(f, "; macro-f1 std {:.4}", std.macro_avg.f1)?;
        }
        Ok(())
    }
}

/// Elementwise mean and sample standard deviation (n - 1 denominator, 0 for n = 1).
pub fn aggregate_seeds(reports: &[MetricsReport]) -> Result<MetricsReport> {
    let first = reports
        .first()
        .ok_or_else(|| Error::InvalidArgument("no reports to aggregate".into()))?;
    if reports.iter().any(|r| r.n_classes() != first.n_classes()) {
        return Err(Error::InvalidArgument("reports differ in class arity".into()));
    }
    let columns: Vec<Vec<f64>> = reports
        .iter()
        .map(|r| r.fields().into_iter().map(|(_, v)| v).collect())
        .collect();
    let k = reports.len() as f64;
    let width = columns[0].len();
    let mean: Vec<f64> = (0..width)
        .map(|j| columns.iter().map(|c| c[j]).sum::<f64>() / k)
        .collect();
    let std: Vec<f64> = (0..width)
        .map(|j| {
            if reports.len() < 2 {
                return 0.0;
            }
            let ss: f64 = columns.iter().map(|c| (c[j] - mean[j]).powi(2)).sum();
            (ss / (k - 1.0)).sqrt()
        })
        .collect();
    let mut out = first.with_values(&mean);
    out.runs = reports.len();
    let mut spread = first.with_values(&std);
    spread.runs = reports.len();
    out.std = Some(Box::new(spread));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AblationVariant {
    Full,
    NoPrompt,
    NoAugmentation,
    NoAttention,
    NoPromptAndAugmentation,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 5] = [
        AblationVariant::Full,
        AblationVariant::NoPrompt,
        AblationVariant::NoAugmentation,
        AblationVariant::NoAttention,
        AblationVariant::NoPromptAndAugmentation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AblationVariant::Full => "full",
            AblationVariant::NoPrompt => "no_prompt",
            AblationVariant::NoAugmentation => "no_augmentation",
            AblationVariant::NoAttention => "no_attention",
            AblationVariant::NoPromptAndAugmentation => "no_prompt_and_augmentation",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            AblationVariant::Full => "Full model",
            AblationVariant::NoPrompt => "w/o Prompt",
            AblationVariant::NoAugmentation => "w/o Augmentation",
            AblationVariant::NoAttention => "w/o Attention",
            AblationVariant::NoPromptAndAugmentation => "w/o Prompt & Augmentation",
        }
    }

    pub fn model_variant(self) -> ModelVariant {
        match self {
            AblationVariant::NoPrompt | AblationVariant::NoPromptAndAugmentation => {
                ModelVariant::NoPrompt
            }
            AblationVariant::NoAttention => ModelVariant::NoAttention,
            AblationVariant::Full | AblationVariant::NoAugmentation => ModelVariant::Full,
        }
    }

    pub fn augmentation(self) -> bool {
        !matches!(
            self,
            AblationVariant::NoAugmentation | AblationVariant::NoPromptAndAugmentation
        )
    }
}

impl FromStr for AblationVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AblationVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown variant {s:?}")))
    }
}

impl fmt::Display for AblationVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub fn ablation_table(results: &BTreeMap<AblationVariant, MetricsReport>) -> Result<String> {
    ablation_table_with(results, Average::Macro)
}

/// Percent scores (2 decimals) and point deltas against the full model, full first.
pub fn ablation_table_with(
    results: &BTreeMap<AblationVariant, MetricsReport>,
    average: Average,
) -> Result<String> {
    let full = results
        .get(&AblationVariant::Full)
        .ok_or_else(|| Error::InvalidArgument("ablation results lack the full model".into()))?
        .summary(average);
    let mut out = format!(
        "{:<27} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}\n",
        "variant", "P", "R", "F1", "dP", "dR", "dF1"
    );
    for (variant, report) in results {
        let s = report.summary(average);
        let pct = |v: f64| format!("{:.2}", 100.0 * v);
        let delta = |v: f64, base: f64| format!("{:+.2}", 100.0 * (v - base));
        let _ = writeln!(
            out,
            "{:<27} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}",
            variant.title(),
            pct(s.precision),
            pct(s.recall),
            pct(s.f1),
            delta(s.precision, full.precision),
            delta(s.recall, full.recall),
            delta(s.f1, full.f1),
        );
    }
    Ok(out)
}
