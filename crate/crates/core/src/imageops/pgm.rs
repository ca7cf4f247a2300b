//! Binary portable graymap (P5) reading and writing.

use super::ImageError;
use crate::dicom::PixelMatrix;

fn err(msg: impl Into<String>) -> ImageError {
    ImageError::Pgm(msg.into())
}

struct HeaderReader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl HeaderReader<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.data.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.data.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize, ImageError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.data.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        std::str::from_utf8(&self.data[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| err(format!("bad {what}")))
    }
}

/// Reads a P5 graymap. The returned matrix records the smallest bit depth
/// that holds `maxval`.
pub fn read_pgm(bytes: &[u8]) -> Result<PixelMatrix, ImageError> {
    if !bytes.starts_with(b"P5") {
        return Err(err("missing P5 magic"));
    }
    let mut reader = HeaderReader { data: bytes, pos: 2 };
    let width = reader.number("width")?;
    let height = reader.number("height")?;
    let maxval = reader.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(err("zero dimension"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(err(format!("maxval {maxval} outside 1..=65535")));
    }
    // exactly one whitespace byte separates the header from the raster
    if !bytes.get(reader.pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(err("missing separator after maxval"));
    }
    let raster = &bytes[reader.pos + 1..];
    let bytes_per_sample = if maxval < 256 { 1 } else { 2 };
    let needed = width * height * bytes_per_sample;
    if raster.len() < needed {
        return Err(err(format!("raster has {} bytes, expected {needed}", raster.len())));
    }
    let values: Vec<u16> = if bytes_per_sample == 1 {
        raster[..needed].iter().map(|&b| u16::from(b)).collect()
    } else {
        raster[..needed]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    };
    if let Some(v) = values.iter().find(|&&v| usize::from(v) > maxval) {
        return Err(err(format!("sample {v} exceeds maxval {maxval}")));
    }
    let bits = (usize::BITS - maxval.leading_zeros()) as u16;
    PixelMatrix::new(height, width, bits, values).map_err(|e| err(e.to_string()))
}

/// Writes a P5 graymap with maxval 255 (≤ 8 stored bits) or 65535.
pub fn write_pgm(m: &PixelMatrix) -> Vec<u8> {
    let wide = m.bits_stored() > 8;
    let maxval = if wide { 65535 } else { 255 };
    let mut out = format!("P5\n{} {}\n{}\n", m.columns(), m.rows(), maxval).into_bytes();
    if wide {
        out.extend(m.values().iter().flat_map(|v| v.to_be_bytes()));
    } else {
        out.extend(m.values().iter().map(|&v| v as u8));
    }
    out
}
