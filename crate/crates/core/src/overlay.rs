//! Prediction-vs-truth overlay images: background purple, wrong pixels
//! yellow, correctly found positive pixels green.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor_store::{write_rgb_png, LabelMask};

pub const BACKGROUND: [u8; 3] = [128, 0, 128];
pub const INCORRECT: [u8; 3] = [255, 255, 0];
pub const CORRECT: [u8; 3] = [0, 255, 0];

pub fn pixel_color(pred: u8, truth: u8, positive: u8) -> [u8; 3] {
    if pred != truth {
        INCORRECT
    } else if pred == positive {
        CORRECT
    } else {
        BACKGROUND
    }
}

/// Row-major RGB triples, `height * width * 3` bytes.
pub fn overlay_rgb(pred: &LabelMask, truth: &LabelMask, positive: u8) -> Result<Vec<u8>> {
    if (pred.height(), pred.width()) != (truth.height(), truth.width()) {
        return Err(Error::DimensionMismatch {
            left: format!("prediction {}x{}", pred.height(), pred.width()),
            right: format!("truth {}x{}", truth.height(), truth.width()),
        });
    }
    Ok(pred
        .data()
        .iter()
        .zip(truth.data())
        .flat_map(|(&p, &t)| pixel_color(p, t, positive))
        .collect())
}

pub fn write_overlay(
    pred: &LabelMask,
    truth: &LabelMask,
    positive: u8,
    destination: impl AsRef<Path>,
) -> Result<()> {
    let rgb = overlay_rgb(pred, truth, positive)?;
    write_rgb_png(pred.width(), pred.height(), &rgb, destination)
}
