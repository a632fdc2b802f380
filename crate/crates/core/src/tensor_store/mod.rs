//! On-disk formats: `.cbpm` probability maps, 8-bit PNG label masks, and the
//! JSON dataset manifest.

mod manifest;
mod mask;
mod probmap;

pub use manifest::{
    load_manifest, validate as validate_manifest, ImageDoc, ImageEntry, Manifest, ManifestDoc,
    ModelDoc, ModelEntry, Split, MANIFEST_VERSION,
};
pub use mask::{read_mask, read_mask_dims, write_mask, write_rgb_png, LabelMask};
pub use probmap::{
    argmax, read_probmap, read_probmap_header, write_probmap, ProbMap, ProbMapHeader, MAGIC,
    MAX_CLASSES, SUM_TOLERANCE,
};
