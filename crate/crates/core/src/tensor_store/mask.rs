use std::fs;
use std::io::{BufWriter, Cursor};
use std::path::Path;

use crate::error::{Error, Result};

/// Per-image class-index mask: ground truth or a fused prediction.
///
/// Class 0 is background (NonLung); class 1 is Lung in the two-class setup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMask {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl LabelMask {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 || data.len() != height * width {
            return Err(Error::InvalidShape {
                height,
                width,
                classes: 0,
                reason: "mask needs height*width class indices, both at least 1",
            });
        }
        Ok(LabelMask {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, class: u8) -> Result<Self> {
        Self::new(height, width, vec![class; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.data[row * self.width + col]
    }

    pub fn count(&self, class: u8) -> usize {
        self.data.iter().filter(|&&c| c == class).count()
    }

    /// Rejects any index `>= classes`, naming the first offending pixel.
    pub fn check_classes(&self, classes: usize) -> Result<()> {
        match self.data.iter().position(|&c| c as usize >= classes) {
            None => Ok(()),
            Some(index) => Err(Error::ClassOutOfRange {
                row: index / self.width,
                col: index % self.width,
                value: self.data[index],
                classes,
            }),
        }
    }

    pub fn check_dims(&self, height: usize, width: usize) -> Result<()> {
        if self.height == height && self.width == width {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                left: format!("mask {}x{}", self.height, self.width),
                right: format!("{height}x{width}"),
            })
        }
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        {
            let mut encoder =
                png::Encoder::new(Cursor::new(&mut out), self.width as u32, self.height as u32);
            encoder.set_color(png::ColorType::Grayscale);
            encoder.set_depth(png::BitDepth::Eight);
            encoder.set_compression(png::Compression::Balanced);
            let mut writer = encoder.write_header()?;
            writer.write_image_data(&self.data)?;
        }
        Ok(out)
    }

    pub fn decode_png(bytes: &[u8]) -> Result<Self> {
        let (info, data) = decode_gray8(bytes)?;
        LabelMask::new(info.1 as usize, info.0 as usize, data)
    }
}

fn check_gray8(info: &png::Info<'_>) -> Result<()> {
    if info.color_type != png::ColorType::Grayscale {
        return Err(Error::UnsupportedPng(format!(
            "color type {:?}, expected single-channel grayscale",
            info.color_type
        )));
    }
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::UnsupportedPng(format!(
            "bit depth {:?}, expected 8",
            info.bit_depth
        )));
    }
    Ok(())
}

fn decode_gray8(bytes: &[u8]) -> Result<((u32, u32), Vec<u8>)> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder.read_info()?;
    check_gray8(reader.info())?;
    let (w, h) = (reader.info().width, reader.info().height);
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let frame = reader.next_frame(&mut buf)?;
    buf.truncate(frame.buffer_size());
    // Strip any row padding (none for 8-bit gray, but be exact about it).
    if frame.line_size != w as usize {
        return Err(Error::UnsupportedPng("unexpected row stride".into()));
    }
    Ok(((w, h), buf))
}

pub fn write_mask(mask: &LabelMask, destination: impl AsRef<Path>) -> Result<()> {
    let path = destination.as_ref();
    let bytes = mask.encode_png().map_err(|e| e.in_file(path))?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_mask(source: impl AsRef<Path>) -> Result<LabelMask> {
    let path = source.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    LabelMask::decode_png(&bytes).map_err(|e| e.in_file(path))
}

/// Width and height from the PNG header without decoding pixel data.
pub fn read_mask_dims(source: impl AsRef<Path>) -> Result<(usize, usize)> {
    let path = source.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let decoder = png::Decoder::new(std::io::BufReader::new(file));
    let reader = decoder
        .read_info()
        .map_err(|e| Error::from(e).in_file(path))?;
    check_gray8(reader.info()).map_err(|e| e.in_file(path))?;
    Ok((reader.info().height as usize, reader.info().width as usize))
}

/// Writes an 8-bit RGB PNG from `height*width*3` bytes.
pub fn write_rgb_png(
    width: usize,
    height: usize,
    rgb: &[u8],
    destination: impl AsRef<Path>,
) -> Result<()> {
    let path = destination.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    encoder.set_compression(png::Compression::Balanced);
    let encode = || -> Result<()> {
        let mut writer = encoder.write_header()?;
        writer.write_image_data(rgb)?;
        writer.finish()?;
        Ok(())
    };
    encode().map_err(|e| e.in_file(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn png_bytes(
        color: png::ColorType,
        depth: png::BitDepth,
        w: u32,
        h: u32,
        data: &[u8],
    ) -> Vec<u8> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(Cursor::new(&mut out), w, h);
            enc.set_color(color);
            enc.set_depth(depth);
            let mut wr = enc.write_header().unwrap();
            wr.write_image_data(data).unwrap();
        }
        out
    }

    #[test]
    fn all_zero_png_gives_zero_mask() {
        let bytes = png_bytes(
            png::ColorType::Grayscale,
            png::BitDepth::Eight,
            4,
            4,
            &[0; 16],
        );
        let mask = LabelMask::decode_png(&bytes).unwrap();
        assert_eq!((mask.height(), mask.width()), (4, 4));
        assert_eq!(mask.data(), &[0; 16]);
    }

    #[test]
    fn round_trip_through_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.png");
        let mask = LabelMask::new(2, 3, vec![0, 1, 1, 0, 2, 1]).unwrap();
        write_mask(&mask, &path).unwrap();
        assert_eq!(read_mask(&path).unwrap(), mask);
        assert_eq!(read_mask_dims(&path).unwrap(), (2, 3));
    }

    #[test]
    fn out_of_range_class_rejected_at_validation() {
        let bytes = png_bytes(
            png::ColorType::Grayscale,
            png::BitDepth::Eight,
            2,
            1,
            &[0, 7],
        );
        let mask = LabelMask::decode_png(&bytes).unwrap();
        let err = mask.check_classes(2).unwrap_err();
        assert!(matches!(
            err,
            Error::ClassOutOfRange {
                row: 0,
                col: 1,
                value: 7,
                classes: 2
            }
        ));
        assert!(mask.check_classes(8).is_ok());
    }

    #[test]
    fn multichannel_and_deep_pngs_rejected() {
        let rgb = png_bytes(png::ColorType::Rgb, png::BitDepth::Eight, 1, 1, &[1, 2, 3]);
        assert!(matches!(
            LabelMask::decode_png(&rgb).unwrap_err(),
            Error::UnsupportedPng(_)
        ));
        let deep = png_bytes(
            png::ColorType::Grayscale,
            png::BitDepth::Sixteen,
            1,
            1,
            &[0, 1],
        );
        assert!(matches!(
            LabelMask::decode_png(&deep).unwrap_err(),
            Error::UnsupportedPng(_)
        ));
        let ga = png_bytes(
            png::ColorType::GrayscaleAlpha,
            png::BitDepth::Eight,
            1,
            1,
            &[0, 255],
        );
        assert!(matches!(
            LabelMask::decode_png(&ga).unwrap_err(),
            Error::UnsupportedPng(_)
        ));
    }

    #[test]
    fn shape_checks() {
        assert!(LabelMask::new(2, 2, vec![0; 3]).is_err());
        assert!(LabelMask::new(0, 2, vec![]).is_err());
        let m = LabelMask::filled(2, 2, 1).unwrap();
        assert!(m.check_dims(2, 2).is_ok());
        assert!(matches!(
            m.check_dims(2, 3).unwrap_err(),
            Error::DimensionMismatch { .. }
        ));
        assert_eq!(m.count(1), 4);
    }
}
