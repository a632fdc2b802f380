//! Confusion counts against a positive class and the derived metric suite.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor_store::LabelMask;

/// Lung in the two-class setup.
pub const DEFAULT_POSITIVE: u8 = 1;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// `fp / (fp + tn)`, undefined without negatives.
    pub fn false_positive_rate(&self) -> Option<f64> {
        ratio(self.fp, self.fp + self.tn)
    }

    pub fn swapped(&self) -> ConfusionCounts {
        ConfusionCounts {
            tp: self.tp,
            fp: self.fn_,
            fn_: self.fp,
            tn: self.tn,
        }
    }
}

pub fn confusion(pred: &LabelMask, truth: &LabelMask, positive: u8) -> Result<ConfusionCounts> {
    if (pred.height(), pred.width()) != (truth.height(), truth.width()) {
        return Err(Error::DimensionMismatch {
            left: format!("prediction {}x{}", pred.height(), pred.width()),
            right: format!("truth {}x{}", truth.height(), truth.width()),
        });
    }
    let mut c = ConfusionCounts::default();
    for (&p, &t) in pred.data().iter().zip(truth.data()) {
        match (p == positive, t == positive) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// The six metrics as fractions; `None` where a denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
}

impl MetricSet {
    pub const NAMES: [&'static str; 6] = [
        "accuracy",
        "precision",
        "recall",
        "f1",
        "sensitivity",
        "specificity",
    ];

    pub fn values(&self) -> [Option<f64>; 6] {
        [
            self.accuracy,
            self.precision,
            self.recall,
            self.f1,
            self.sensitivity,
            self.specificity,
        ]
    }
}

pub fn metrics_from_counts(c: &ConfusionCounts) -> MetricSet {
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    MetricSet {
        accuracy: ratio(c.tp + c.tn, c.total()),
        precision,
        recall,
        f1,
        sensitivity: recall,
        specificity: ratio(c.tn, c.tn + c.fp),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateStat {
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub included: usize,
    pub excluded: usize,
}

/// Mean and sample standard deviation (n-1 denominator, 0 for a single
/// value) over the defined entries; undefined entries are counted, not used.
pub fn aggregate_values(values: impl IntoIterator<Item = Option<f64>>) -> AggregateStat {
    let mut defined = Vec::new();
    let mut excluded = 0;
    for v in values {
        match v {
            Some(x) => defined.push(x),
            None => excluded += 1,
        }
    }
    let n = defined.len();
    let (mean, std) = if n == 0 {
        (None, None)
    } else {
        let mean = defined.iter().sum::<f64>() / n as f64;
        let std = if n == 1 {
            0.0
        } else {
            let ss: f64 = defined.iter().map(|x| (x - mean) * (x - mean)).sum();
            (ss / (n - 1) as f64).sqrt()
        };
        (Some(mean), Some(std))
    };
    AggregateStat {
        mean,
        std,
        included: n,
        excluded,
    }
}

pub type AggregateReport = BTreeMap<String, AggregateStat>;

pub fn aggregate(per_image: &[MetricSet]) -> Result<AggregateReport> {
    if per_image.is_empty() {
        return Err(Error::Config("cannot aggregate zero images".into()));
    }
    Ok(MetricSet::NAMES
        .iter()
        .enumerate()
        .map(|(i, name)| {
            (
                name.to_string(),
                aggregate_values(per_image.iter().map(|m| m.values()[i])),
            )
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageEval {
    pub image_id: String,
    pub counts: ConfusionCounts,
    pub metrics: MetricSet,
    /// Present when the evaluated output carries probabilities.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ece: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mce: Option<f64>,
}

/// Corpus-level calibration of the evaluated output (all pixels pooled).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusCalibration {
    #[serde(rename = "K")]
    pub bin_count: usize,
    #[serde(rename = "N")]
    pub n: u64,
    pub ece: f64,
    pub mce: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub format_version: u32,
    pub method: String,
    pub split: crate::tensor_store::Split,
    pub positive_class: u8,
    pub images: Vec<ImageEval>,
    /// Per-image mean and sample std; `ece`/`mce` entries are per-image too.
    pub aggregate: AggregateReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CorpusCalibration>,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Rows of `method,metric,mean,std,included,excluded`, fractions.
    pub fn csv_rows(&self) -> String {
        let mut out = String::new();
        for (metric, stat) in &self.aggregate {
            let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                self.method,
                metric,
                opt(stat.mean),
                opt(stat.std),
                stat.included,
                stat.excluded
            ));
        }
        out
    }

    pub fn metric(&self, name: &str) -> Option<&AggregateStat> {
        self.aggregate.get(name)
    }
}

pub const EVAL_CSV_HEADER: &str = "method,metric,mean,std,included,excluded\n";

/// `mean±std` in percent with one decimal, or `n/a`.
pub fn percent_cell(stat: Option<&AggregateStat>) -> String {
    match stat.and_then(|s| Some((s.mean?, s.std?))) {
        Some((mean, std)) => format!("{:.1}±{:.1}", mean * 100.0, std * 100.0),
        None => "n/a".into(),
    }
}
