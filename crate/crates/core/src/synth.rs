//! Synthetic datasets: two-ellipse "lung" masks plus per-model probability
//! maps with controllable skill, noise and temperature.
//!
//! For model `(s, t, sigma)` and a pixel whose truth is `y` (1 = Lung), the
//! logit is `z = s * (2y - 1) + sigma * n` with `n` a keyed unit-variance
//! draw, and `P(Lung) = logistic(z / t)`. Temperature rescales confidence
//! without moving any decision, so it isolates calibration from accuracy.
//!
//! All randomness is keyed by `(seed, stream, image, model, pixel)`; see
//! [`crate::rng`]. Images are numbered globally across splits in the order
//! training, validation, testing.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::map_ordered;
use crate::rng;
use crate::tensor_store::{
    write_mask, write_probmap, ImageDoc, LabelMask, ManifestDoc, ModelDoc, ProbMap, Split,
    MANIFEST_VERSION,
};

const STREAM_SHAPE: u64 = 1;
const STREAM_NOISE: u64 = 2;

pub const LUNG: u8 = 1;
pub const BACKGROUND: u8 = 0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthModel {
    pub model_id: String,
    pub skill: f64,
    pub temperature: f64,
    pub noise: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSizes {
    pub training: usize,
    pub validation: usize,
    pub testing: usize,
}

impl SplitSizes {
    pub fn get(&self, split: Split) -> usize {
        match split {
            Split::Training => self.training,
            Split::Validation => self.validation,
            Split::Testing => self.testing,
        }
    }

    pub fn total(&self) -> usize {
        self.training + self.validation + self.testing
    }

    /// Global index of the first image of `split`.
    pub fn offset(&self, split: Split) -> usize {
        Split::ALL
            .iter()
            .take_while(|&&s| s != split)
            .map(|&s| self.get(s))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub seed: u64,
    pub height: usize,
    pub width: usize,
    pub images: SplitSizes,
    pub models: Vec<SynthModel>,
}

impl SynthSpec {
    /// Five models with individual F1 around 90-95% and ECE around 2-6% at
    /// 64x64. Temperatures sit far below the calibrated value noise^2/(2*skill),
    /// so the members are saturated and overconfident, as segmentation
    /// networks tend to be; ECE then tracks each member's error rate.
    pub fn five_model_pool(seed: u64) -> Self {
        let model = |id: &str, skill: f64, temperature: f64, noise: f64| SynthModel {
            model_id: id.to_owned(),
            skill,
            temperature,
            noise,
        };
        SynthSpec {
            seed,
            height: 64,
            width: 64,
            images: SplitSizes {
                training: 2,
                validation: 12,
                testing: 24,
            },
            models: vec![
                model("m1", 1.75, 0.004, 1.0),
                model("m2", 1.63, 0.005, 1.0),
                model("m3", 1.95, 0.003, 1.0),
                model("m4", 1.85, 0.006, 1.0),
                model("m5", 1.65, 0.005, 1.0),
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.height < 4 || self.width < 4 {
            return Err(Error::Config(
                "synthetic images must be at least 4x4".into(),
            ));
        }
        if self.models.is_empty() {
            return Err(Error::Config("synthetic spec lists no models".into()));
        }
        for (i, m) in self.models.iter().enumerate() {
            if !(m.skill.is_finite() && m.skill > 0.0) {
                return Err(Error::Config(format!(
                    "model `{}`: skill must be > 0",
                    m.model_id
                )));
            }
            if !(m.temperature.is_finite() && m.temperature > 0.0) {
                return Err(Error::Config(format!(
                    "model `{}`: temperature must be > 0",
                    m.model_id
                )));
            }
            if !(m.noise.is_finite() && m.noise >= 0.0) {
                return Err(Error::Config(format!(
                    "model `{}`: noise must be >= 0",
                    m.model_id
                )));
            }
            if self.models[..i].iter().any(|o| o.model_id == m.model_id) {
                return Err(Error::Config(format!(
                    "duplicate model_id `{}`",
                    m.model_id
                )));
            }
            if m.model_id.is_empty() || m.model_id.contains(['/', '\\']) {
                return Err(Error::Config(format!("invalid model_id `{}`", m.model_id)));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: SynthSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }
}

pub fn image_id(global_index: usize) -> String {
    format!("img{global_index:04}")
}

struct Ellipse {
    cx: f64,
    cy: f64,
    rx: f64,
    ry: f64,
}

impl Ellipse {
    fn contains(&self, x: f64, y: f64) -> bool {
        let dx = (x - self.cx) / self.rx;
        let dy = (y - self.cy) / self.ry;
        dx * dx + dy * dy <= 1.0
    }
}

fn lungs(spec: &SynthSpec, image: usize) -> [Ellipse; 2] {
    let (w, h) = (spec.width as f64, spec.height as f64);
    let draw = |side: u64, param: u64, lo: f64, hi: f64| {
        lo + (hi - lo) * rng::uniform(spec.seed, &[STREAM_SHAPE, image as u64, side, param])
    };
    let lung = |side: u64| {
        let centre_x = draw(side, 0, 0.26, 0.34);
        Ellipse {
            cx: w * if side == 0 { centre_x } else { 1.0 - centre_x },
            cy: h * draw(side, 1, 0.44, 0.56),
            rx: w * draw(side, 2, 0.11, 0.16),
            ry: h * draw(side, 3, 0.26, 0.36),
        }
    };
    [lung(0), lung(1)]
}

/// Ground-truth mask of global image `image`: two filled ellipses of Lung
/// on background, tested at pixel centres. Both classes are always present.
pub fn gen_truth(spec: &SynthSpec, image: usize) -> LabelMask {
    let shapes = lungs(spec, image);
    let mut data = Vec::with_capacity(spec.height * spec.width);
    for row in 0..spec.height {
        for col in 0..spec.width {
            let (x, y) = (col as f64 + 0.5, row as f64 + 0.5);
            let inside = shapes.iter().any(|e| e.contains(x, y));
            data.push(if inside { LUNG } else { BACKGROUND });
        }
    }
    if !data.contains(&LUNG) {
        let (r, c) = (shapes[0].cy as usize, shapes[0].cx as usize);
        data[r.min(spec.height - 1) * spec.width + c.min(spec.width - 1)] = LUNG;
    }
    if !data.contains(&BACKGROUND) {
        data[0] = BACKGROUND;
    }
    LabelMask::new(spec.height, spec.width, data).expect("spec dimensions validated")
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Probability map of `model` (index `model_index` in the spec) for global
/// image `image` with ground truth `truth`.
pub fn gen_prediction(
    spec: &SynthSpec,
    model_index: usize,
    image: usize,
    truth: &LabelMask,
) -> ProbMap {
    let model = &spec.models[model_index];
    let mut data = Vec::with_capacity(truth.data().len() * 2);
    for (pixel, &label) in truth.data().iter().enumerate() {
        let sign = if label == LUNG { 1.0 } else { -1.0 };
        let noise = if model.noise == 0.0 {
            0.0
        } else {
            model.noise
                * rng::normal(
                    spec.seed,
                    &[STREAM_NOISE, image as u64, model_index as u64, pixel as u64],
                )
        };
        let p_lung = logistic((model.skill * sign + noise) / model.temperature);
        // Quantize the smaller probability to a multiple of 2^-24 so that its
        // complement is exact in f32 and each pixel sums to exactly 1.
        let quantize = |p: f64| ((p * 16_777_216.0).round() / 16_777_216.0) as f32;
        let (p_bg, p_lung) = if p_lung <= 0.5 {
            let small = quantize(p_lung);
            (1.0 - small, small)
        } else {
            let small = quantize(1.0 - p_lung);
            (small, 1.0 - small)
        };
        data.push(p_bg);
        data.push(p_lung);
    }
    ProbMap::new(truth.height(), truth.width(), 2, data).expect("probabilities are valid")
}

/// Relative layout of a generated dataset.
pub fn mask_path(split: Split, image_id: &str) -> PathBuf {
    PathBuf::from(format!("masks/{split}/{image_id}.png"))
}

pub fn prediction_dir(model_id: &str, split: Split) -> PathBuf {
    PathBuf::from(format!("predictions/{model_id}/{split}"))
}

pub fn manifest_doc(spec: &SynthSpec) -> ManifestDoc {
    let splits = Split::ALL
        .iter()
        .map(|&split| {
            let offset = spec.images.offset(split);
            let images = (0..spec.images.get(split))
                .map(|i| {
                    let id = image_id(offset + i);
                    ImageDoc {
                        mask: mask_path(split, &id),
                        image_id: id,
                    }
                })
                .collect();
            (split, images)
        })
        .collect();
    ManifestDoc {
        format_version: MANIFEST_VERSION,
        class_names: vec!["NonLung".into(), "Lung".into()],
        models: spec
            .models
            .iter()
            .map(|m| ModelDoc {
                model_id: m.model_id.clone(),
                predictions: Split::ALL
                    .iter()
                    .map(|&s| (s, prediction_dir(&m.model_id, s)))
                    .collect(),
            })
            .collect(),
        splits,
    }
}

/// Writes masks, every model's maps for all splits, and `manifest.json`
/// under `out`. Returns the manifest path.
pub fn gen_dataset(spec: &SynthSpec, out: impl AsRef<Path>) -> Result<PathBuf> {
    spec.validate()?;
    let out = out.as_ref();
    let mkdir = |p: PathBuf| fs::create_dir_all(&p).map_err(|e| Error::io(p, e));
    for split in Split::ALL {
        mkdir(out.join(format!("masks/{split}")))?;
        for m in &spec.models {
            mkdir(out.join(prediction_dir(&m.model_id, split)))?;
        }
    }
    let jobs: Vec<(Split, usize)> = Split::ALL
        .iter()
        .flat_map(|&s| {
            let offset = spec.images.offset(s);
            (0..spec.images.get(s)).map(move |i| (s, offset + i))
        })
        .collect();
    let results = map_ordered(&jobs, |&(split, image)| -> Result<()> {
        let id = image_id(image);
        let truth = gen_truth(spec, image);
        write_mask(&truth, out.join(mask_path(split, &id)))?;
        for (mi, m) in spec.models.iter().enumerate() {
            let map = gen_prediction(spec, mi, image, &truth);
            write_probmap(
                &map,
                out.join(prediction_dir(&m.model_id, split))
                    .join(format!("{id}.cbpm")),
            )?;
        }
        Ok(())
    });
    results.into_iter().collect::<Result<()>>()?;
    let manifest = out.join("manifest.json");
    fs::write(&manifest, manifest_doc(spec).to_json()?).map_err(|e| Error::io(&manifest, e))?;
    Ok(manifest)
}
