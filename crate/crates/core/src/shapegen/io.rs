//! On-disk series: `manifest.json` plus one PGM per frame and an optional
//! raw f32 sidecar carrying the exact pixels.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::series::{SeriesKind, SeriesMeta, VariationSeries};
use crate::error::{Error, Result};
use crate::image::{read_file, write_atomic, Image, LabeledImage};
use crate::scalar::Scalar;

pub const SERIES_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SeriesManifest {
    format_version: u32,
    kind: SeriesKind,
    width: usize,
    height: usize,
    thetas: Vec<f64>,
    frame_files: Vec<String>,
    #[serde(default)]
    raw_files: Option<Vec<String>>,
    generator: SeriesMeta,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LabeledManifest {
    format_version: u32,
    kind: String,
    width: usize,
    height: usize,
    labels: Vec<u8>,
    frame_files: Vec<String>,
    raw_files: Option<Vec<String>>,
}

fn write_frames<S: Scalar>(dir: &Path, frames: &[Image<S>]) -> Result<(Vec<String>, Vec<String>)> {
    let mut pgm = Vec::with_capacity(frames.len());
    let mut raw = Vec::with_capacity(frames.len());
    for (i, frame) in frames.iter().enumerate() {
        let (p, r) = (format!("frame_{i:03}.pgm"), format!("frame_{i:03}.f32"));
        write_atomic(&dir.join(&p), &frame.to_pgm())?;
        write_atomic(&dir.join(&r), &frame.to_f32_bytes())?;
        pgm.push(p);
        raw.push(r);
    }
    Ok((pgm, raw))
}

fn read_frames<S: Scalar>(dir: &Path, width: usize, height: usize, pgm: &[String], raw: Option<&[String]>) -> Result<Vec<Image<S>>> {
    if let Some(raw) = raw {
        if raw.len() != pgm.len() {
            return Err(Error::corrupt(dir.join("manifest.json"), "raw_files and frame_files differ in length"));
        }
    }
    pgm.iter()
        .enumerate()
        .map(|(i, name)| {
            let img = match raw.map(|r| dir.join(&r[i])).filter(|p| p.exists()) {
                Some(path) => Image::from_f32_bytes(width, height, &read_file(&path)?, &path)?,
                None => {
                    let path = dir.join(name);
                    Image::from_pgm(&read_file(&path)?, &path)?
                }
            };
            if img.dims() != (height, width) {
                return Err(Error::corrupt(dir.join(name), "frame size differs from manifest"));
            }
            Ok(img)
        })
        .collect()
}

fn read_manifest<T: serde::de::DeserializeOwned>(dir: &Path) -> Result<T> {
    let path = dir.join("manifest.json");
    serde_json::from_slice(&read_file(&path)?).map_err(|e| Error::corrupt(&path, e.to_string()))
}

pub fn save_series<S: Scalar>(series: &VariationSeries<S>, dir: &Path) -> Result<()> {
    let (frame_files, raw_files) = write_frames(dir, series.frames())?;
    let (height, width) = series.reference().dims();
    let manifest = SeriesManifest {
        format_version: SERIES_FORMAT_VERSION,
        kind: series.kind(),
        width,
        height,
        thetas: series.thetas().to_vec(),
        frame_files,
        raw_files: Some(raw_files),
        generator: series.meta().clone(),
    };
    write_atomic(&dir.join("manifest.json"), &serde_json::to_vec_pretty(&manifest)?)
}

pub fn load_series<S: Scalar>(dir: &Path) -> Result<VariationSeries<S>> {
    let manifest: SeriesManifest = read_manifest(dir)?;
    let path = dir.join("manifest.json");
    if manifest.format_version != SERIES_FORMAT_VERSION {
        return Err(Error::Version(format!("{}: series format {}", path.display(), manifest.format_version)));
    }
    if manifest.thetas.len() != manifest.frame_files.len() {
        return Err(Error::corrupt(
            &path,
            format!("{} thetas for {} frames", manifest.thetas.len(), manifest.frame_files.len()),
        ));
    }
    let frames = read_frames(dir, manifest.width, manifest.height, &manifest.frame_files, manifest.raw_files.as_deref())?;
    VariationSeries::new(manifest.kind, frames, manifest.thetas, manifest.generator)
        .map_err(|e| Error::corrupt(&path, e.to_string()))
}

pub fn save_labeled<S: Scalar>(data: &[LabeledImage<S>], dir: &Path) -> Result<()> {
    let first = data.first().ok_or_else(|| Error::InvalidArgument("empty labeled set".into()))?;
    let (height, width) = first.image.dims();
    let frames: Vec<Image<S>> = data.iter().map(|d| d.image.clone()).collect();
    let (frame_files, raw_files) = write_frames(dir, &frames)?;
    let manifest = LabeledManifest {
        format_version: SERIES_FORMAT_VERSION,
        kind: "train".into(),
        width,
        height,
        labels: data.iter().map(|d| d.label).collect(),
        frame_files,
        raw_files: Some(raw_files),
    };
    write_atomic(&dir.join("manifest.json"), &serde_json::to_vec_pretty(&manifest)?)
}

pub fn load_labeled<S: Scalar>(dir: &Path) -> Result<Vec<LabeledImage<S>>> {
    let manifest: LabeledManifest = read_manifest(dir)?;
    let path = dir.join("manifest.json");
    if manifest.format_version != SERIES_FORMAT_VERSION || manifest.kind != "train" {
        return Err(Error::Version(format!("{}: not a v{SERIES_FORMAT_VERSION} training set", path.display())));
    }
    if manifest.labels.len() != manifest.frame_files.len() {
        return Err(Error::corrupt(&path, "label count differs from frame count"));
    }
    let frames = read_frames(dir, manifest.width, manifest.height, &manifest.frame_files, manifest.raw_files.as_deref())?;
    Ok(frames.into_iter().zip(manifest.labels).map(|(image, label)| LabeledImage { image, label }).collect())
}
