//! The dataset manifest: which models exist, which images belong to which
//! split, and where their masks and probability maps live.
//!
//! Relative paths are resolved against the manifest's own directory. The
//! probability map of (model, split, image) is `<predictions[split]>/<image_id>.cbpm`.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor_store::{read_mask_dims, read_probmap_header, MAX_CLASSES};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Training,
    Validation,
    Testing,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Training, Split::Validation, Split::Testing];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Training => "training",
            Split::Validation => "validation",
            Split::Testing => "testing",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "training" => Ok(Split::Training),
            "validation" => Ok(Split::Validation),
            "testing" => Ok(Split::Testing),
            other => Err(Error::Config(format!(
                "unknown split `{other}` (expected training, validation or testing)"
            ))),
        }
    }
}

/// The manifest document exactly as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestDoc {
    pub format_version: u32,
    pub class_names: Vec<String>,
    pub models: Vec<ModelDoc>,
    pub splits: BTreeMap<Split, Vec<ImageDoc>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDoc {
    pub model_id: String,
    pub predictions: BTreeMap<Split, PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageDoc {
    pub image_id: String,
    pub mask: PathBuf,
}

impl ManifestDoc {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// An image whose mask and every model's prediction were found and agree in shape.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageEntry {
    pub image_id: String,
    pub mask: PathBuf,
    pub height: usize,
    pub width: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelEntry {
    pub model_id: String,
    pub predictions: BTreeMap<Split, PathBuf>,
}

/// A fully validated manifest with resolved paths.
#[derive(Debug, Clone)]
pub struct Manifest {
    pub class_names: Vec<String>,
    pub models: Vec<ModelEntry>,
    splits: BTreeMap<Split, Vec<ImageEntry>>,
    root: PathBuf,
}

impl Manifest {
    pub fn classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Images of a split in manifest order (empty if the split is absent).
    pub fn images(&self, split: Split) -> &[ImageEntry] {
        self.splits.get(&split).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn model(&self, model_id: &str) -> Result<&ModelEntry> {
        self.models
            .iter()
            .find(|m| m.model_id == model_id)
            .ok_or_else(|| Error::Config(format!("model `{model_id}` is not in the manifest")))
    }

    pub fn model_index(&self, model_id: &str) -> Option<usize> {
        self.models.iter().position(|m| m.model_id == model_id)
    }

    pub fn prediction_path(&self, model_id: &str, split: Split, image_id: &str) -> Result<PathBuf> {
        let model = self.model(model_id)?;
        let dir = model.predictions.get(&split).ok_or_else(|| {
            Error::Config(format!(
                "model `{model_id}` has no predictions for split {split}"
            ))
        })?;
        Ok(dir.join(format!("{image_id}.cbpm")))
    }
}

fn resolve(root: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        root.join(p)
    }
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id != "."
        && id != ".."
        && !id.contains(['/', '\\'])
        && !id.chars().any(char::is_control)
}

pub fn load_manifest(source: impl AsRef<Path>) -> Result<Manifest> {
    let path = source.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc: ManifestDoc = serde_json::from_str(&text).map_err(|e| Error::from(e).in_file(path))?;
    let root = path.parent().unwrap_or(Path::new("")).to_path_buf();
    validate(doc, root)
}

/// Validates a parsed document; file checks resolve paths against `root`.
pub fn validate(doc: ManifestDoc, root: PathBuf) -> Result<Manifest> {
    if doc.format_version != MANIFEST_VERSION {
        return Err(Error::Manifest(format!(
            "unsupported format_version {} (expected {MANIFEST_VERSION})",
            doc.format_version
        )));
    }
    let classes = doc.class_names.len();
    if !(2..=MAX_CLASSES).contains(&classes) {
        return Err(Error::Manifest(format!(
            "class_names must list between 2 and {MAX_CLASSES} classes, found {classes}"
        )));
    }
    if doc.models.is_empty() {
        return Err(Error::Manifest("no models listed".into()));
    }
    let mut seen = HashSet::new();
    for model in &doc.models {
        if !valid_id(&model.model_id) {
            return Err(Error::Manifest(format!(
                "invalid model_id `{}`",
                model.model_id
            )));
        }
        if !seen.insert(model.model_id.as_str()) {
            return Err(Error::Manifest(format!(
                "duplicate model_id `{}`",
                model.model_id
            )));
        }
    }

    let models: Vec<ModelEntry> = doc
        .models
        .iter()
        .map(|m| ModelEntry {
            model_id: m.model_id.clone(),
            predictions: m
                .predictions
                .iter()
                .map(|(&s, p)| (s, resolve(&root, p)))
                .collect(),
        })
        .collect();

    let mut splits = BTreeMap::new();
    for (&split, images) in &doc.splits {
        let mut ids = HashSet::new();
        let mut entries = Vec::with_capacity(images.len());
        for image in images {
            if !valid_id(&image.image_id) {
                return Err(Error::Manifest(format!(
                    "invalid image_id `{}` in split {split}",
                    image.image_id
                )));
            }
            if !ids.insert(image.image_id.as_str()) {
                return Err(Error::Manifest(format!(
                    "duplicate image_id `{}` in split {split}",
                    image.image_id
                )));
            }
            let mask = resolve(&root, &image.mask);
            let (height, width) = read_mask_dims(&mask)?;
            for model in &models {
                let dir = model.predictions.get(&split).ok_or_else(|| {
                    Error::Manifest(format!(
                        "model `{}` has no prediction directory for split {split}",
                        model.model_id
                    ))
                })?;
                let file = dir.join(format!("{}.cbpm", image.image_id));
                if !file.is_file() {
                    return Err(Error::MissingPrediction {
                        model_id: model.model_id.clone(),
                        image_id: image.image_id.clone(),
                        path: file,
                    });
                }
                let header = read_probmap_header(&file)
                    .map_err(|e| e.in_image(&model.model_id, &image.image_id))?;
                if (header.height, header.width) != (height, width) {
                    return Err(Error::DimensionMismatch {
                        left: format!("mask of `{}` is {height}x{width}", image.image_id),
                        right: format!(
                            "model `{}` prediction is {}x{}",
                            model.model_id, header.height, header.width
                        ),
                    });
                }
                if header.classes != classes {
                    return Err(Error::DimensionMismatch {
                        left: format!("manifest declares {classes} classes"),
                        right: format!(
                            "model `{}` prediction for `{}` has {}",
                            model.model_id, image.image_id, header.classes
                        ),
                    });
                }
            }
            entries.push(ImageEntry {
                image_id: image.image_id.clone(),
                mask,
                height,
                width,
            });
        }
        splits.insert(split, entries);
    }

    Ok(Manifest {
        class_names: doc.class_names,
        models,
        splits,
        root,
    })
}
