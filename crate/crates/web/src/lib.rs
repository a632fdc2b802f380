//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Everything runs in memory on synthetic data: no files, no threads.
//! Results cross the boundary as JSON strings or raw RGBA bytes.

use calfuse::calibration::{compute_calibration, pixel_confidence, prediction_confidence};
use calfuse::fusion::{fuse, weight_from_ce, FusionMethod, MemberWeights, DEFAULT_EPSILON};
use calfuse::metrics::{aggregate, confusion, metrics_from_counts, MetricSet};
use calfuse::overlay::overlay_rgb;
use calfuse::synth::{gen_prediction, gen_truth, SplitSizes, SynthModel, SynthSpec, LUNG};
use calfuse::tensor_store::{LabelMask, ProbMap, Split};
use calfuse::Result;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

const SIDE: usize = 64;

fn js_err(e: calfuse::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn single_model_spec(seed: u64, skill: f64, noise: f64, temperature: f64) -> SynthSpec {
    SynthSpec {
        seed,
        height: SIDE,
        width: SIDE,
        images: SplitSizes {
            training: 0,
            validation: 8,
            testing: 0,
        },
        models: vec![SynthModel {
            model_id: "model".into(),
            skill,
            temperature,
            noise,
        }],
    }
}

fn reliability_json(
    seed: u64,
    skill: f64,
    noise: f64,
    temperature: f64,
    bins: usize,
) -> Result<Value> {
    let spec = single_model_spec(seed, skill, noise, temperature);
    spec.validate()?;
    let mut pairs = Vec::new();
    for image in 0..spec.images.total() {
        let truth = gen_truth(&spec, image);
        let probs = gen_prediction(&spec, 0, image, &truth);
        pairs.extend(pixel_confidence(&probs, &truth)?);
    }
    let summary = compute_calibration(pairs, bins)?;
    Ok(json!({
        "ece": summary.ece,
        "mce": summary.mce,
        "n": summary.n,
        "bins": summary.bins,
    }))
}

/// Reliability diagram of one synthetic model over eight 64x64 images.
/// Returns `{ece, mce, n, bins: [{k, lower, upper, count, acc, conf}]}`.
#[wasm_bindgen]
pub fn reliability(
    seed: u32,
    skill: f64,
    noise: f64,
    temperature: f64,
    bins: usize,
) -> std::result::Result<String, JsError> {
    reliability_json(seed.into(), skill, noise, temperature, bins)
        .map(|v| v.to_string())
        .map_err(js_err)
}

/// The built-in five-model pool, restricted to its first `members` models,
/// with truth and member maps generated for every image.
struct Ensemble {
    spec: SynthSpec,
    truths: Vec<LabelMask>,
    maps: Vec<Vec<ProbMap>>,
    weights: MemberWeights,
    ce: Vec<(f64, f64)>,
}

impl Ensemble {
    fn new(seed: u64, members: usize) -> Result<Self> {
        let mut spec = SynthSpec::five_model_pool(seed);
        spec.images.training = 0;
        if !(2..=spec.models.len()).contains(&members) {
            return Err(calfuse::Error::Config(format!(
                "members must be between 2 and {}",
                spec.models.len()
            )));
        }
        spec.models.truncate(members);
        let truths: Vec<LabelMask> = (0..spec.images.total())
            .map(|i| gen_truth(&spec, i))
            .collect();
        let maps: Vec<Vec<ProbMap>> = (0..members)
            .map(|m| {
                truths
                    .iter()
                    .enumerate()
                    .map(|(i, t)| gen_prediction(&spec, m, i, t))
                    .collect()
            })
            .collect();

        let validation = spec.images.offset(Split::Validation)..spec.images.offset(Split::Testing);
        let mut ce = Vec::with_capacity(members);
        for member_maps in &maps {
            let mut pairs = Vec::new();
            for i in validation.clone() {
                pairs.extend(pixel_confidence(&member_maps[i], &truths[i])?);
            }
            let s = compute_calibration(pairs, 10)?;
            ce.push((s.ece, s.mce));
        }
        let weights = MemberWeights {
            ece: ce
                .iter()
                .map(|c| weight_from_ce(c.0, DEFAULT_EPSILON))
                .collect(),
            mce: ce
                .iter()
                .map(|c| weight_from_ce(c.1, DEFAULT_EPSILON))
                .collect(),
        };
        Ok(Ensemble {
            spec,
            truths,
            maps,
            weights,
            ce,
        })
    }

    fn test_images(&self) -> std::ops::Range<usize> {
        self.spec.images.offset(Split::Testing)..self.spec.images.total()
    }

    /// Prediction for global image `i` from a fusion method name or a
    /// member id.
    fn predict(&self, source: &str, i: usize) -> Result<(LabelMask, ProbMap)> {
        if let Some(m) = self.spec.models.iter().position(|m| m.model_id == source) {
            let probs = self.maps[m][i].clone();
            return Ok((probs.argmax_mask(), probs));
        }
        let method: FusionMethod = source
            .parse()
            .map_err(|_| calfuse::Error::Config(format!("unknown method or member `{source}`")))?;
        let members: Vec<&ProbMap> = self.maps.iter().map(|m| &m[i]).collect();
        let fused = fuse(&members, method, Some(&self.weights))?;
        Ok((fused.mask, fused.probs))
    }

    fn sources(&self) -> Vec<String> {
        self.spec
            .models
            .iter()
            .map(|m| m.model_id.clone())
            .chain(FusionMethod::ALL.iter().map(|m| m.as_str().to_owned()))
            .collect()
    }

    fn summary(&self) -> Result<Value> {
        let mut rows = Vec::new();
        for source in self.sources() {
            let mut per_image: Vec<MetricSet> = Vec::new();
            let mut pairs = Vec::new();
            for i in self.test_images() {
                let (mask, probs) = self.predict(&source, i)?;
                per_image.push(metrics_from_counts(&confusion(
                    &mask,
                    &self.truths[i],
                    LUNG,
                )?));
                pairs.extend(prediction_confidence(&probs, &mask, &self.truths[i])?);
            }
            let report = aggregate(&per_image)?;
            let mean = |name: &str| report.get(name).and_then(|s| s.mean);
            rows.push(json!({
                "source": source,
                "f1": mean("f1"),
                "accuracy": mean("accuracy"),
                "specificity": mean("specificity"),
                "ece": compute_calibration(pairs, 10)?.ece,
            }));
        }
        let members: Vec<Value> = self
            .spec
            .models
            .iter()
            .zip(&self.ce)
            .enumerate()
            .map(|(i, (m, ce))| {
                json!({
                    "model_id": m.model_id,
                    "ece": ce.0,
                    "mce": ce.1,
                    "weight_ece": self.weights.ece[i],
                    "weight_mce": self.weights.mce[i],
                })
            })
            .collect();
        Ok(json!({
            "test_images": self.test_images().len(),
            "members": members,
            "rows": rows,
        }))
    }

    fn overlay_rgba(&self, source: &str, test_image: usize) -> Result<Vec<u8>> {
        let range = self.test_images();
        let i = range.start + test_image.min(range.len() - 1);
        let (mask, _) = self.predict(source, i)?;
        let rgb = overlay_rgb(&mask, &self.truths[i], LUNG)?;
        Ok(rgb
            .chunks_exact(3)
            .flat_map(|p| [p[0], p[1], p[2], 255])
            .collect())
    }
}

/// Test-split scores for every member and every fusion method, plus the
/// validation calibration and weights of each member.
#[wasm_bindgen]
pub fn fusion_summary(seed: u32, members: usize) -> std::result::Result<String, JsError> {
    Ensemble::new(seed.into(), members)
        .and_then(|e| e.summary())
        .map(|v| v.to_string())
        .map_err(js_err)
}

/// RGBA overlay (64x64, row-major) of one test image for a member id or a
/// fusion method name.
#[wasm_bindgen]
pub fn fusion_overlay(
    seed: u32,
    members: usize,
    source: &str,
    test_image: usize,
) -> std::result::Result<Vec<u8>, JsError> {
    Ensemble::new(seed.into(), members)
        .and_then(|e| e.overlay_rgba(source, test_image))
        .map_err(js_err)
}

/// Side length of the demo images.
#[wasm_bindgen]
pub fn image_side() -> usize {
    SIDE
}
