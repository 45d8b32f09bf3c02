//! Grayscale rasters and the PGM / raw-f32 interchange formats.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// H×W grayscale raster with values in [0,1], row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image<S> {
    width: usize,
    height: usize,
    pixels: Vec<S>,
}

impl<S: Scalar> Image<S> {
    pub fn new(width: usize, height: usize, pixels: Vec<S>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument("image dimensions must be positive".into()));
        }
        if pixels.len() != width * height {
            return Err(Error::dims(width * height, pixels.len()));
        }
        if let Some(bad) = pixels.iter().find(|p| !(p.is_finite() && **p >= S::zero() && **p <= S::one())) {
            return Err(Error::InvalidArgument(format!("pixel value {bad} outside [0,1]")));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, level: S) -> Self {
        Self { width, height, pixels: vec![level; width * height] }
    }

    /// Builds without range validation; callers guarantee [0,1] values.
    pub(crate) fn from_raw(width: usize, height: usize, pixels: Vec<S>) -> Self {
        debug_assert_eq!(pixels.len(), width * height);
        Self { width, height, pixels }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn pixels(&self) -> &[S] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> S {
        self.pixels[y * self.width + x]
    }

    pub fn cast<T: Scalar>(&self) -> Image<T> {
        Image::from_raw(self.width, self.height, self.pixels.iter().map(|p| T::of(p.as_f64())).collect())
    }

    /// Mean squared pixel difference, used as the image-space distance.
    pub fn msd(&self, other: &Self) -> Result<f64> {
        if self.dims() != other.dims() {
            return Err(Error::dims(format!("{:?}", self.dims()), format!("{:?}", other.dims())));
        }
        let sum: f64 = self
            .pixels
            .iter()
            .zip(&other.pixels)
            .map(|(a, b)| (a.as_f64() - b.as_f64()).powi(2))
            .sum();
        Ok(sum / self.pixels.len() as f64)
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.pixels.iter().map(|p| (p.as_f64() * 255.0).round().clamp(0.0, 255.0) as u8));
        out
    }

    pub fn from_pgm(bytes: &[u8], path: &Path) -> Result<Self> {
        let (width, height, maxval, offset) = parse_pgm_header(bytes).ok_or_else(|| Error::corrupt(path, "bad PGM header"))?;
        let body = &bytes[offset..];
        if maxval > 255 || body.len() < width * height {
            return Err(Error::corrupt(path, "truncated or 16-bit PGM"));
        }
        let scale = maxval as f64;
        let pixels = body[..width * height].iter().map(|&b| S::of(b as f64 / scale)).collect();
        Image::new(width, height, pixels)
    }

    pub fn to_f32_bytes(&self) -> Vec<u8> {
        f32_le_bytes(self.pixels.iter().map(|p| p.as_f32()))
    }

    pub fn from_f32_bytes(width: usize, height: usize, bytes: &[u8], path: &Path) -> Result<Self> {
        if bytes.len() != width * height * 4 {
            return Err(Error::corrupt(path, format!("expected {} bytes, found {}", width * height * 4, bytes.len())));
        }
        let pixels = read_f32_le(bytes).map(|v| S::of(v as f64)).collect();
        Image::new(width, height, pixels)
    }

    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_pgm())
    }
}

/// Training example; label 1 is the positive class.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage<S> {
    pub image: Image<S>,
    pub label: u8,
}

pub(crate) fn f32_le_bytes(values: impl Iterator<Item = f32>) -> Vec<u8> {
    values.flat_map(f32::to_le_bytes).collect()
}

pub(crate) fn read_f32_le(bytes: &[u8]) -> impl Iterator<Item = f32> + '_ {
    bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
}

fn parse_pgm_header(bytes: &[u8]) -> Option<(usize, usize, usize, usize)> {
    if !bytes.starts_with(b"P5") {
        return None;
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        loop {
            match bytes.get(pos)? {
                b'#' => {
                    while *bytes.get(pos)? != b'\n' {
                        pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos)?.is_ascii_digit() {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos]).ok()?.parse().ok()?;
    }
    // exactly one whitespace byte separates the header from the raster
    if !bytes.get(pos)?.is_ascii_whitespace() {
        return None;
    }
    Some((fields[0], fields[1], fields[2], pos + 1))
}

/// Writes to a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(format!("creating {}", parent.display()), e))?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    let mut file = std::fs::File::create(&tmp).map_err(|e| Error::io(format!("creating {}", tmp.display()), e))?;
    file.write_all(bytes).map_err(|e| Error::io(format!("writing {}", tmp.display()), e))?;
    drop(file);
    std::fs::rename(&tmp, path).map_err(|e| Error::io(format!("renaming to {}", path.display()), e))
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))
}
