//! Manifest-level stages: calibrate every model, fuse a split, evaluate a
//! model or a fused output, and tabulate several evaluations side by side.
//!
//! Per-image work fans out (see the `parallel` feature) and every reduction
//! runs in manifest order, so outputs do not depend on the thread count.

use std::fs;
use std::path::Path;

use crate::calibration::{
    calibrate_model, pixel_confidence, prediction_confidence, BinTable, CalibrationReport,
};
use crate::error::{Error, Result};
use crate::fusion::{fuse_image, FusedImage, FusionConfig, FusionPlan};
use crate::metrics::{
    aggregate, aggregate_values, confusion, metrics_from_counts, percent_cell, CorpusCalibration,
    EvalReport, ImageEval, MetricSet,
};
use crate::par::map_ordered;
use crate::tensor_store::{read_mask, read_probmap, LabelMask, Manifest, ProbMap, Split};

pub const EVAL_VERSION: u32 = 1;

/// Calibration reports for every model in the manifest, in manifest order.
pub fn calibrate_all(
    manifest: &Manifest,
    split: Split,
    bins: usize,
) -> Result<Vec<CalibrationReport>> {
    manifest
        .models
        .iter()
        .map(|m| calibrate_model(manifest, &m.model_id, split, bins))
        .collect()
}

pub struct FusionRun {
    pub plan: FusionPlan,
    /// `(image_id, fused)` in manifest order.
    pub images: Vec<(String, FusedImage)>,
}

/// Fuses every image of `config.split`. Weighted methods take their CE from
/// `reports`, which must be validation-split reports.
pub fn run_fusion(
    manifest: &Manifest,
    config: FusionConfig,
    reports: &[CalibrationReport],
) -> Result<FusionRun> {
    let plan = FusionPlan::new(manifest, config, reports)?;
    let images = manifest.images(plan.config.split);
    if images.is_empty() {
        return Err(Error::Config(format!(
            "split {} has no images to fuse",
            plan.config.split
        )));
    }
    let fused = map_ordered(images, |image| {
        fuse_image(&image.image_id, &plan, manifest).map(|f| (image.image_id.clone(), f))
    });
    let images = fused.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(FusionRun { plan, images })
}

/// What to score against the ground truth of a split.
pub enum EvalSource<'a> {
    /// One model's argmax masks, with its own probabilities for calibration.
    Model(&'a str),
    /// Masks (and optionally the probabilities behind them) already in memory.
    Masks(Vec<(String, LabelMask, Option<ProbMap>)>),
}

struct ImageResult {
    eval: ImageEval,
    table: Option<BinTable>,
}

fn score_image(
    image_id: &str,
    pred: &LabelMask,
    probs: Option<(&ProbMap, bool)>,
    truth: &LabelMask,
    positive: u8,
    bins: usize,
) -> Result<ImageResult> {
    pred.check_dims(truth.height(), truth.width())?;
    let counts = confusion(pred, truth, positive)?;
    let table = match probs {
        None => None,
        Some((map, is_argmax)) => {
            let mut t = BinTable::new(bins)?;
            if is_argmax {
                t.extend(pixel_confidence(map, truth)?);
            } else {
                t.extend(prediction_confidence(map, pred, truth)?);
            }
            Some(t)
        }
    };
    let summary = table.as_ref().map(BinTable::summarize).transpose()?;
    Ok(ImageResult {
        eval: ImageEval {
            image_id: image_id.to_owned(),
            counts,
            metrics: metrics_from_counts(&counts),
            ece: summary.as_ref().map(|s| s.ece),
            mce: summary.as_ref().map(|s| s.mce),
        },
        table,
    })
}

/// Per-image metrics and their aggregate; adds per-image and pooled ECE/MCE
/// when probabilities are available.
pub fn evaluate(
    manifest: &Manifest,
    split: Split,
    name: &str,
    source: EvalSource<'_>,
    positive: u8,
    bins: usize,
) -> Result<EvalReport> {
    if positive as usize >= manifest.classes() {
        return Err(Error::Config(format!(
            "positive class {positive} is out of range for {} classes",
            manifest.classes()
        )));
    }
    BinTable::new(bins)?;
    let images = manifest.images(split);
    if images.is_empty() {
        return Err(Error::Config(format!(
            "split {split} has no images to evaluate"
        )));
    }
    let results: Vec<Result<ImageResult>> = match &source {
        EvalSource::Model(model_id) => {
            manifest.model(model_id)?;
            map_ordered(images, |image| {
                let run = || -> Result<ImageResult> {
                    let truth = read_mask(&image.mask)?;
                    truth.check_classes(manifest.classes())?;
                    let path = manifest.prediction_path(model_id, split, &image.image_id)?;
                    let map = read_probmap(path)?;
                    let pred = map.argmax_mask();
                    score_image(
                        &image.image_id,
                        &pred,
                        Some((&map, true)),
                        &truth,
                        positive,
                        bins,
                    )
                };
                run().map_err(|e| e.in_image(model_id, &image.image_id))
            })
        }
        EvalSource::Masks(masks) => {
            if masks.len() != images.len()
                || masks
                    .iter()
                    .zip(images)
                    .any(|((id, _, _), im)| id != &im.image_id)
            {
                return Err(Error::Config(format!(
                    "predictions for `{name}` do not cover split {split} in manifest order"
                )));
            }
            let with_probs = masks.iter().filter(|(_, _, p)| p.is_some()).count();
            if with_probs != 0 && with_probs != masks.len() {
                return Err(Error::Config(format!(
                    "predictions for `{name}` carry probabilities for only {with_probs} of {} images",
                    masks.len()
                )));
            }
            let jobs: Vec<_> = masks.iter().zip(images).collect();
            map_ordered(&jobs, |((id, pred, probs), image)| {
                let run = || -> Result<ImageResult> {
                    let truth = read_mask(&image.mask)?;
                    truth.check_classes(manifest.classes())?;
                    pred.check_classes(manifest.classes())?;
                    score_image(
                        id,
                        pred,
                        probs.as_ref().map(|p| (p, false)),
                        &truth,
                        positive,
                        bins,
                    )
                };
                run().map_err(|e| e.in_image(name, id))
            })
        }
    };
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;

    let metric_sets: Vec<MetricSet> = results.iter().map(|r| r.eval.metrics).collect();
    let mut agg = aggregate(&metric_sets)?;
    let calibration = if results.iter().all(|r| r.table.is_some()) {
        let mut pooled = BinTable::new(bins)?;
        for r in &results {
            pooled.merge(r.table.as_ref().expect("checked"));
        }
        let s = pooled.summarize()?;
        agg.insert(
            "ece".into(),
            aggregate_values(results.iter().map(|r| r.eval.ece)),
        );
        agg.insert(
            "mce".into(),
            aggregate_values(results.iter().map(|r| r.eval.mce)),
        );
        Some(CorpusCalibration {
            bin_count: bins,
            n: s.n,
            ece: s.ece,
            mce: s.mce,
        })
    } else {
        None
    };
    Ok(EvalReport {
        format_version: EVAL_VERSION,
        method: name.to_owned(),
        split,
        positive_class: positive,
        images: results.into_iter().map(|r| r.eval).collect(),
        aggregate: agg,
        calibration,
    })
}

/// Reads `<dir>/<image_id>.png` for every image of `split`, plus
/// `<dir>/<image_id>.cbpm` where present.
pub fn load_prediction_dir(
    manifest: &Manifest,
    split: Split,
    dir: &Path,
) -> Result<Vec<(String, LabelMask, Option<ProbMap>)>> {
    manifest
        .images(split)
        .iter()
        .map(|image| {
            let mask = read_mask(dir.join(format!("{}.png", image.image_id)))?;
            let probs_path = dir.join(format!("{}.cbpm", image.image_id));
            let probs = if probs_path.is_file() {
                Some(read_probmap(&probs_path)?)
            } else {
                None
            };
            Ok((image.image_id.clone(), mask, probs))
        })
        .collect()
}

pub const TABLE_COLUMNS: [(&str, &str); 6] = [
    ("accuracy", "Accuracy (%)"),
    ("sensitivity", "Sensitivity (%)"),
    ("specificity", "Specificity (%)"),
    ("f1", "F1score (%)"),
    ("ece", "ECE (%)"),
    ("mce", "MCE (%)"),
];

/// Side-by-side `mean±std` percentages, one row per report. Returns a
/// plain-text table and the same content as CSV.
pub fn comparison_table(reports: &[EvalReport]) -> (String, String) {
    let header: Vec<&str> = std::iter::once("Method")
        .chain(TABLE_COLUMNS.iter().map(|(_, h)| *h))
        .collect();
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            std::iter::once(r.method.clone())
                .chain(TABLE_COLUMNS.iter().map(|(k, _)| percent_cell(r.metric(k))))
                .collect()
        })
        .collect();

    let widths: Vec<usize> = (0..header.len())
        .map(|i| {
            rows.iter()
                .map(|r| r[i].chars().count())
                .chain(std::iter::once(header[i].chars().count()))
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |cells: Vec<&str>| -> String {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
            .collect();
        format!("| {} |\n", padded.join(" | "))
    };
    let mut text = line(header.clone());
    text.push_str(&format!(
        "|{}|\n",
        widths
            .iter()
            .map(|w| "-".repeat(w + 2))
            .collect::<Vec<_>>()
            .join("|")
    ));
    for r in &rows {
        text.push_str(&line(r.iter().map(String::as_str).collect()));
    }

    let mut csv = String::from("method,metric,mean,std,included,excluded\n");
    for r in reports {
        csv.push_str(&r.csv_rows());
    }
    (text, csv)
}

/// Loads every `*.eval.json` in `dir`, sorted by file name.
pub fn load_eval_reports(dir: &Path) -> Result<Vec<EvalReport>> {
    let mut paths: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.ends_with(".eval.json"))
        })
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| Error::from(e).in_file(p))
        })
        .collect()
}
