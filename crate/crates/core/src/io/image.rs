//! 8-bit grayscale images (PGM `P5` binary and `P2` ASCII, maxval 255) and
//! uniform pixel sampling.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::index;

use crate::dense::seeded_rng;
use crate::error::{Error, Result};
use crate::sparse::SampledMatrix;

/// Row-major 8-bit grayscale image. As a matrix it is `height x width`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!(
                "image must be non-empty, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::Dimension(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    /// Rounds and clamps a real matrix to 8-bit pixels.
    pub fn from_matrix(m: &DMatrix<f64>) -> Result<Self> {
        let (h, w) = m.shape();
        let pixels = (0..h)
            .flat_map(|i| (0..w).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)].round().clamp(0.0, 255.0) as u8)
            .collect();
        Self::new(w, h, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixel(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.width + col]
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.height, self.width, |i, j| f64::from(self.pixel(i, j)))
    }

    /// Mean absolute difference against a real matrix of the same shape.
    pub fn mae_against(&self, m: &DMatrix<f64>) -> Result<f64> {
        if m.shape() != (self.height, self.width) {
            return Err(Error::Dimension(format!(
                "image is {}x{}, matrix is {}x{}",
                self.height,
                self.width,
                m.nrows(),
                m.ncols()
            )));
        }
        let sum: f64 = (0..self.height)
            .flat_map(|i| (0..self.width).map(move |j| (i, j)))
            .map(|(i, j)| (f64::from(self.pixel(i, j)) - m[(i, j)]).abs())
            .sum();
        Ok(sum / (self.width * self.height) as f64)
    }
}

fn unsupported(path: &Path, msg: impl Into<String>) -> Error {
    Error::Unsupported {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

fn parse_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        msg: msg.into(),
    }
}

/// Splits off the next whitespace-delimited header token, skipping `#` comments.
fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (start < *pos).then(|| &bytes[start..*pos])
}

fn header_number(path: &Path, bytes: &[u8], pos: &mut usize, what: &str) -> Result<usize> {
    let tok = next_token(bytes, pos).ok_or_else(|| parse_err(path, format!("missing {what}")))?;
    std::str::from_utf8(tok)
        .ok()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| parse_err(path, format!("invalid {what}")))
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    let mut pos = 0;
    let magic = next_token(&bytes, &mut pos).ok_or_else(|| parse_err(path, "empty file"))?;
    let binary = match magic {
        b"P5" => true,
        b"P2" => false,
        b"P6" | b"P3" => {
            return Err(unsupported(
                path,
                "color PPM is not supported; convert to 8-bit grayscale PGM (P5 or P2) first",
            ))
        }
        other => {
            return Err(unsupported(
                path,
                format!(
                    "magic {:?} is not a PGM (expected P5 or P2)",
                    String::from_utf8_lossy(other)
                ),
            ))
        }
    };
    let width = header_number(path, &bytes, &mut pos, "width")?;
    let height = header_number(path, &bytes, &mut pos, "height")?;
    let maxval = header_number(path, &bytes, &mut pos, "maxval")?;
    if maxval != 255 {
        return Err(unsupported(
            path,
            format!("maxval {maxval} not supported, expected 255"),
        ));
    }
    let count = width * height;
    let pixels = if binary {
        // Exactly one whitespace byte separates the header from the raster.
        let start = pos + 1;
        if bytes.len() < start + count {
            return Err(parse_err(path, format!("raster truncated: need {count} bytes")));
        }
        if bytes.len() > start + count {
            return Err(parse_err(path, "trailing bytes after raster"));
        }
        bytes[start..start + count].to_vec()
    } else {
        let mut pixels = Vec::with_capacity(count);
        while let Some(tok) = next_token(&bytes, &mut pos) {
            let v: u16 = std::str::from_utf8(tok)
                .ok()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| parse_err(path, "invalid pixel value"))?;
            if v > 255 {
                return Err(parse_err(path, format!("pixel value {v} above maxval")));
            }
            pixels.push(v as u8);
        }
        if pixels.len() != count {
            return Err(parse_err(
                path,
                format!("expected {count} pixels, found {}", pixels.len()),
            ));
        }
        pixels
    };
    GrayImage::new(width, height, pixels)
}

/// Writes binary `P5`.
pub fn write_pgm(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    fs::write(path, out)?;
    Ok(())
}

/// Writes ASCII `P2`.
pub fn write_pgm_ascii(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let mut out = format!("P2\n{} {}\n255\n", img.width, img.height);
    for row in img.pixels.chunks(img.width) {
        let line: Vec<String> = row.iter().map(|p| p.to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Samples `floor(fraction * w * h)` distinct pixels uniformly without
/// replacement.
pub fn sample_image(img: &GrayImage, fraction: f64, seed: u64) -> Result<SampledMatrix> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "sample fraction must lie in (0, 1], got {fraction}"
        )));
    }
    let total = img.width * img.height;
    let count = ((fraction * total as f64).floor() as usize).min(total);
    if count == 0 {
        return Err(Error::InvalidParameter(format!(
            "fraction {fraction} of {total} pixels selects nothing"
        )));
    }
    let mut rng = seeded_rng(seed);
    let triplets = index::sample(&mut rng, total, count)
        .into_iter()
        .map(|p| {
            let (i, j) = (p / img.width, p % img.width);
            (i, j, f64::from(img.pixels[p]))
        })
        .collect();
    SampledMatrix::from_triplets(img.height, img.width, triplets)
}
