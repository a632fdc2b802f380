//! The `.cbpm` probability-map container.
//!
//! Layout, byte for byte:
//!
//! ```text
//! CBPM 1\n
//! height=<H> width=<W> classes=<C>\n
//! <H*W*C little-endian f32, row-major, class index fastest-varying>
//! ```
//!
//! Numbers in the header are plain decimal without sign or leading zeros.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor_store::LabelMask;

pub const MAGIC: &[u8] = b"CBPM 1\n";

/// Allowed drift of a pixel's probability sum away from 1.
pub const SUM_TOLERANCE: f64 = 1e-4;

/// Largest class count a mask can index (8-bit class ids).
pub const MAX_CLASSES: usize = 256;

/// Per-image class-probability tensor produced by one model.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMap {
    height: usize,
    width: usize,
    classes: usize,
    data: Vec<f32>,
}

impl ProbMap {
    /// Builds a map, checking shape, value range, and per-pixel sums.
    pub fn new(height: usize, width: usize, classes: usize, data: Vec<f32>) -> Result<Self> {
        check_shape(height, width, classes)?;
        let expected = height * width * classes;
        if data.len() != expected {
            return Err(Error::LengthMismatch {
                expected: expected as u64 * 4,
                found: data.len() as u64 * 4,
            });
        }
        let map = ProbMap {
            height,
            width,
            classes,
            data,
        };
        map.validate()?;
        Ok(map)
    }

    fn validate(&self) -> Result<()> {
        for (index, pixel) in self.data.chunks_exact(self.classes).enumerate() {
            let (row, col) = (index / self.width, index % self.width);
            let mut sum = 0.0f64;
            for (class, &value) in pixel.iter().enumerate() {
                // NaN fails this test too.
                if !(0.0..=1.0).contains(&value) {
                    return Err(Error::ProbabilityRange {
                        row,
                        col,
                        class,
                        value,
                    });
                }
                sum += value as f64;
            }
            if (sum - 1.0).abs() > SUM_TOLERANCE {
                return Err(Error::ProbabilitySum { row, col, sum });
            }
        }
        Ok(())
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Class probabilities of the pixel at row-major index `index`.
    pub fn pixel(&self, index: usize) -> &[f32] {
        &self.data[index * self.classes..(index + 1) * self.classes]
    }

    pub fn pixels(&self) -> std::slice::ChunksExact<'_, f32> {
        self.data.chunks_exact(self.classes)
    }

    /// Hard prediction: per-pixel argmax, lowest class index on ties.
    pub fn argmax_mask(&self) -> LabelMask {
        let data = self.pixels().map(|p| argmax(p).0 as u8).collect();
        LabelMask::new(self.height, self.width, data).expect("shape already validated")
    }

    pub fn same_shape(&self, other: &ProbMap) -> bool {
        self.height == other.height && self.width == other.width && self.classes == other.classes
    }

    pub fn encode(&self) -> Vec<u8> {
        let header = header_line(self.height, self.width, self.classes);
        let mut out = Vec::with_capacity(MAGIC.len() + header.len() + self.data.len() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(header.as_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut cursor = bytes;
        let header = read_header(&mut cursor)?;
        let expected = header.payload_len();
        if cursor.len() as u64 != expected {
            return Err(Error::LengthMismatch {
                expected,
                found: cursor.len() as u64,
            });
        }
        let data = cursor
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        ProbMap::new(header.height, header.width, header.classes, data)
    }
}

/// Index and value of the largest entry; the first one wins ties.
pub fn argmax(probs: &[f32]) -> (usize, f32) {
    let mut best = 0;
    let mut best_value = probs[0];
    for (i, &v) in probs.iter().enumerate().skip(1) {
        if v > best_value {
            best = i;
            best_value = v;
        }
    }
    (best, best_value)
}

pub(crate) fn check_shape(height: usize, width: usize, classes: usize) -> Result<()> {
    let reason = if height == 0 || width == 0 {
        "height and width must be at least 1"
    } else if classes < 2 {
        "at least two classes are required"
    } else if classes > MAX_CLASSES {
        "more than 256 classes"
    } else {
        return Ok(());
    };
    Err(Error::InvalidShape {
        height,
        width,
        classes,
        reason,
    })
}

fn header_line(height: usize, width: usize, classes: usize) -> String {
    format!("height={height} width={width} classes={classes}\n")
}

/// Shape fields parsed from a `.cbpm` header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProbMapHeader {
    pub height: usize,
    pub width: usize,
    pub classes: usize,
}

impl ProbMapHeader {
    pub fn payload_len(&self) -> u64 {
        self.height as u64 * self.width as u64 * self.classes as u64 * 4
    }

    /// Total file size implied by the header.
    pub fn file_len(&self) -> u64 {
        MAGIC.len() as u64
            + header_line(self.height, self.width, self.classes).len() as u64
            + self.payload_len()
    }
}

fn read_header(reader: &mut impl BufRead) -> Result<ProbMapHeader> {
    let mut magic = Vec::with_capacity(MAGIC.len());
    reader
        .take(MAGIC.len() as u64)
        .read_to_end(&mut magic)
        .map_err(|e| Error::BadHeader(e.to_string()))?;
    if magic != MAGIC {
        return Err(Error::BadMagic);
    }
    let mut line = Vec::new();
    reader
        .take(128)
        .read_until(b'\n', &mut line)
        .map_err(|e| Error::BadHeader(e.to_string()))?;
    if line.last() != Some(&b'\n') {
        return Err(Error::BadHeader(
            "shape line is not newline-terminated".into(),
        ));
    }
    let line = std::str::from_utf8(&line[..line.len() - 1])
        .map_err(|_| Error::BadHeader("shape line is not ASCII".into()))?;
    let mut fields = line.split(' ');
    let mut field = |name: &str| -> Result<usize> {
        let token = fields
            .next()
            .ok_or_else(|| Error::BadHeader(format!("missing `{name}`")))?;
        let value = token
            .strip_prefix(name)
            .and_then(|t| t.strip_prefix('='))
            .ok_or_else(|| Error::BadHeader(format!("expected `{name}=`, found `{token}`")))?;
        let canonical = !value.is_empty()
            && value.bytes().all(|b| b.is_ascii_digit())
            && (value == "0" || !value.starts_with('0'));
        if !canonical {
            return Err(Error::BadHeader(format!("bad {name} `{value}`")));
        }
        value
            .parse()
            .map_err(|_| Error::BadHeader(format!("bad {name} `{value}`")))
    };
    let height = field("height")?;
    let width = field("width")?;
    let classes = field("classes")?;
    if fields.next().is_some() {
        return Err(Error::BadHeader("trailing fields in shape line".into()));
    }
    check_shape(height, width, classes)?;
    Ok(ProbMapHeader {
        height,
        width,
        classes,
    })
}

/// Writes `map` to `destination`. The map's invariants are enforced when it
/// is constructed, so nothing invalid can reach the file.
pub fn write_probmap(map: &ProbMap, destination: impl AsRef<Path>) -> Result<()> {
    let path = destination.as_ref();
    let bytes = map.encode();
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn read_probmap(source: impl AsRef<Path>) -> Result<ProbMap> {
    let path = source.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    ProbMap::decode(&bytes).map_err(|e| e.in_file(path))
}

/// Reads only the shape line, and checks that the file length agrees with it.
pub fn read_probmap_header(source: impl AsRef<Path>) -> Result<ProbMapHeader> {
    let path = source.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let len = file.metadata().map_err(|e| Error::io(path, e))?.len();
    let header = read_header(&mut BufReader::new(file)).map_err(|e| e.in_file(path))?;
    if len != header.file_len() {
        return Err(Error::LengthMismatch {
            expected: header.payload_len(),
            found: len.saturating_sub(header.file_len() - header.payload_len()),
        }
        .in_file(path));
    }
    Ok(header)
}
