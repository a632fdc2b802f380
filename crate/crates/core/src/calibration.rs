//! Expected and maximum calibration error over a population of pixels.
//!
//! Each pixel is one prediction: its class is the argmax of the model's
//! probabilities and its confidence is the max probability. Confidences are
//! sorted into `K` equal-width, right-closed bins `((k-1)/K, k/K]` (0 goes to
//! bin 1), and for every non-empty bin the gap between accuracy and mean
//! confidence is taken. ECE is the count-weighted mean gap, MCE the largest.
//!
//! Per-bin state is an integer count, an integer correct-count, and an exact
//! confidence sum, so bin tables from any partition of the pixels merge into
//! the same bits regardless of order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::ExactSum;
use crate::par::map_ordered;
use crate::tensor_store::{argmax, read_mask, read_probmap, LabelMask, Manifest, ProbMap, Split};

pub const DEFAULT_BINS: usize = 10;
pub const REPORT_VERSION: u32 = 1;

/// `(confidence, correct)` for every pixel in row-major order, with the
/// prediction taken as the argmax of `probmap`.
pub fn pixel_confidence<'a>(
    probmap: &'a ProbMap,
    truth: &'a LabelMask,
) -> Result<impl Iterator<Item = (f64, bool)> + 'a> {
    check_dims(probmap, truth)?;
    Ok(probmap.pixels().zip(truth.data()).map(|(probs, &label)| {
        let (class, confidence) = argmax(probs);
        (confidence as f64, class == label as usize)
    }))
}

/// Like [`pixel_confidence`] but for an externally decided prediction (a
/// fused mask): confidence is the probability `probmap` gives the predicted class.
pub fn prediction_confidence<'a>(
    probmap: &'a ProbMap,
    prediction: &'a LabelMask,
    truth: &'a LabelMask,
) -> Result<impl Iterator<Item = (f64, bool)> + 'a> {
    check_dims(probmap, truth)?;
    check_dims(probmap, prediction)?;
    prediction.check_classes(probmap.classes())?;
    Ok(probmap
        .pixels()
        .zip(prediction.data().iter().zip(truth.data()))
        .map(|(probs, (&pred, &label))| (probs[pred as usize] as f64, pred == label)))
}

fn check_dims(probmap: &ProbMap, mask: &LabelMask) -> Result<()> {
    if probmap.height() == mask.height() && probmap.width() == mask.width() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            left: format!("probability map {}x{}", probmap.height(), probmap.width()),
            right: format!("mask {}x{}", mask.height(), mask.width()),
        })
    }
}

/// Bounds `(lower, upper)` of 1-based bin `k` out of `bins`.
pub fn bin_bounds(k: usize, bins: usize) -> (f64, f64) {
    ((k - 1) as f64 / bins as f64, k as f64 / bins as f64)
}

/// 1-based bin of `confidence`: the `k` with `lower < confidence <= upper`
/// using the bounds from [`bin_bounds`]; confidence 0 lands in bin 1.
pub fn bin_assign(confidence: f64, bins: usize) -> usize {
    debug_assert!(bins >= 1);
    debug_assert!((0.0..=1.0).contains(&confidence), "confidence {confidence}");
    let mut k = ((confidence * bins as f64).ceil() as usize).clamp(1, bins);
    // The product can round across a boundary; settle against the exact bounds.
    while k > 1 && confidence <= bin_bounds(k, bins).0 {
        k -= 1;
    }
    while k < bins && confidence > bin_bounds(k, bins).1 {
        k += 1;
    }
    k
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BinAccumulator {
    pub count: u64,
    pub correct: u64,
    pub confidence_sum: ExactSum,
}

/// Mergeable per-bin sufficient statistics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinTable {
    bins: Vec<BinAccumulator>,
}

impl BinTable {
    pub fn new(bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::Config("bin count must be at least 1".into()));
        }
        Ok(BinTable {
            bins: vec![BinAccumulator::default(); bins],
        })
    }

    pub fn bin_count(&self) -> usize {
        self.bins.len()
    }

    pub fn bins(&self) -> &[BinAccumulator] {
        &self.bins
    }

    /// Panics if `confidence` is outside `[0, 1]`; use [`BinTable::try_push`]
    /// for unvetted input.
    pub fn push(&mut self, confidence: f64, correct: bool) {
        assert!(
            (0.0..=1.0).contains(&confidence),
            "confidence {confidence} outside [0, 1]"
        );
        let k = bin_assign(confidence, self.bins.len());
        let bin = &mut self.bins[k - 1];
        bin.count += 1;
        bin.correct += correct as u64;
        bin.confidence_sum.add(confidence);
    }

    pub fn try_push(&mut self, confidence: f64, correct: bool) -> Result<()> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::Config(format!(
                "confidence {confidence} outside [0, 1]"
            )));
        }
        self.push(confidence, correct);
        Ok(())
    }

    pub fn extend(&mut self, pairs: impl IntoIterator<Item = (f64, bool)>) {
        for (confidence, correct) in pairs {
            self.push(confidence, correct);
        }
    }

    pub fn merge(&mut self, other: &BinTable) {
        assert_eq!(self.bins.len(), other.bins.len(), "bin counts differ");
        for (mine, theirs) in self.bins.iter_mut().zip(&other.bins) {
            mine.count += theirs.count;
            mine.correct += theirs.correct;
            mine.confidence_sum.merge(&theirs.confidence_sum);
        }
    }

    pub fn total(&self) -> u64 {
        self.bins.iter().map(|b| b.count).sum()
    }

    pub fn summarize(&self) -> Result<CalibrationSummary> {
        let total = self.total();
        if total == 0 {
            return Err(Error::EmptyPopulation);
        }
        let k_total = self.bins.len();
        let mut ece = 0.0f64;
        let mut mce = 0.0f64;
        let mut stats = Vec::with_capacity(k_total);
        for (i, bin) in self.bins.iter().enumerate() {
            let (lower, upper) = bin_bounds(i + 1, k_total);
            let (acc, conf) = if bin.count == 0 {
                (None, None)
            } else {
                let n = bin.count as f64;
                let acc = bin.correct as f64 / n;
                let conf = bin.confidence_sum.to_f64() / n;
                let gap = (acc - conf).abs();
                ece += (n / total as f64) * gap;
                mce = mce.max(gap);
                (Some(acc), Some(conf))
            };
            stats.push(BinStat {
                k: i + 1,
                lower,
                upper,
                count: bin.count,
                acc,
                conf,
            });
        }
        // A weighted mean never exceeds its maximum; rounding can, by an ulp.
        let ece = ece.min(mce);
        Ok(CalibrationSummary {
            bins: stats,
            n: total,
            ece,
            mce,
        })
    }
}

/// One reliability bin. `acc` and `conf` are absent when the bin is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinStat {
    pub k: usize,
    pub lower: f64,
    pub upper: f64,
    pub count: u64,
    pub acc: Option<f64>,
    pub conf: Option<f64>,
}

impl BinStat {
    pub fn gap(&self) -> Option<f64> {
        Some((self.acc? - self.conf?).abs())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSummary {
    pub bins: Vec<BinStat>,
    pub n: u64,
    pub ece: f64,
    pub mce: f64,
}

/// ECE/MCE of a `(confidence, correct)` population with `bins` bins.
pub fn compute_calibration(
    pairs: impl IntoIterator<Item = (f64, bool)>,
    bins: usize,
) -> Result<CalibrationSummary> {
    let mut table = BinTable::new(bins)?;
    for (confidence, correct) in pairs {
        table.try_push(confidence, correct)?;
    }
    table.summarize()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageCalibration {
    pub image_id: String,
    pub ece: f64,
}

/// Calibration of one model over one split, as written to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub format_version: u32,
    pub model_id: String,
    pub split: Split,
    #[serde(rename = "K")]
    pub bin_count: usize,
    #[serde(rename = "N")]
    pub n: u64,
    pub ece: f64,
    pub mce: f64,
    pub bins: Vec<BinStat>,
    pub per_image: Vec<ImageCalibration>,
}

impl CalibrationReport {
    pub fn from_tables(
        model_id: &str,
        split: Split,
        per_image: Vec<(String, BinTable)>,
        bins: usize,
    ) -> Result<Self> {
        let mut pooled = BinTable::new(bins)?;
        let mut images = Vec::with_capacity(per_image.len());
        for (image_id, table) in &per_image {
            pooled.merge(table);
            images.push(ImageCalibration {
                image_id: image_id.clone(),
                ece: table.summarize()?.ece,
            });
        }
        let summary = pooled.summarize()?;
        Ok(CalibrationReport {
            format_version: REPORT_VERSION,
            model_id: model_id.to_owned(),
            split,
            bin_count: bins,
            n: summary.n,
            ece: summary.ece,
            mce: summary.mce,
            bins: summary.bins,
            per_image: images,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let report: CalibrationReport = serde_json::from_str(text)?;
        if report.format_version != REPORT_VERSION {
            return Err(Error::Config(format!(
                "calibration report format_version {} is not supported (expected {REPORT_VERSION})",
                report.format_version
            )));
        }
        Ok(report)
    }

    /// Reliability-diagram table, one row per bin; empty bins leave
    /// accuracy, confidence and gap blank.
    pub fn reliability_csv(&self) -> String {
        let mut out = String::from("bin_index,lower,upper,count,accuracy,confidence,gap\n");
        for b in &self.bins {
            let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                b.k,
                b.lower,
                b.upper,
                b.count,
                opt(b.acc),
                opt(b.conf),
                opt(b.gap())
            ));
        }
        out
    }
}

/// Bin table of one image for one model's argmax predictions.
pub fn image_table(probmap: &ProbMap, truth: &LabelMask, bins: usize) -> Result<BinTable> {
    let mut table = BinTable::new(bins)?;
    table.extend(pixel_confidence(probmap, truth)?);
    Ok(table)
}

/// Pools every pixel of `split` for `model_id`. Images are loaded and binned
/// independently (in parallel when enabled) and merged in manifest order.
pub fn calibrate_model(
    manifest: &Manifest,
    model_id: &str,
    split: Split,
    bins: usize,
) -> Result<CalibrationReport> {
    BinTable::new(bins)?;
    manifest.model(model_id)?;
    let images = manifest.images(split);
    if images.is_empty() {
        return Err(Error::Config(format!("split {split} has no images")));
    }
    let tables = map_ordered(images, |image| -> Result<(String, BinTable)> {
        let load = || -> Result<BinTable> {
            let path = manifest.prediction_path(model_id, split, &image.image_id)?;
            let probmap = read_probmap(path)?;
            let truth = read_mask(&image.mask)?;
            truth.check_classes(manifest.classes())?;
            image_table(&probmap, &truth, bins)
        };
        let table = load().map_err(|e| e.in_image(model_id, &image.image_id))?;
        Ok((image.image_id.clone(), table))
    });
    let tables = tables.into_iter().collect::<Result<Vec<_>>>()?;
    CalibrationReport::from_tables(model_id, split, tables, bins)
}
