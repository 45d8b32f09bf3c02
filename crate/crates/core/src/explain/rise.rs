use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{checked_confidence, resolve_baseline, Classifier, MaskSet, SaliencyMap};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RiseConfig {
    pub n_masks: usize,
    pub grid: usize,
    pub keep_prob: f64,
    pub seed: u64,
    /// Fill for masked-out pixels; `None` uses the image's corner pixel.
    pub baseline: Option<f64>,
}

impl Default for RiseConfig {
    fn default() -> Self {
        Self { n_masks: 1000, grid: 7, keep_prob: 0.5, seed: 0, baseline: None }
    }
}

/// Randomized input sampling: S(p) = (1/(N·p₁)) Σᵢ conf(xᵢ)·maskᵢ(p), where xᵢ
/// blends the image toward the baseline wherever maskᵢ is below one.
pub fn rise<S: Scalar, C: Classifier<S> + ?Sized>(model: &C, image: &Image<S>, cfg: &RiseConfig) -> Result<SaliencyMap<S>> {
    let masks = MaskSet::generate(cfg.n_masks, cfg.grid, cfg.keep_prob, image.height(), image.width(), cfg.seed)?;
    let mut map = rise_with_masks(model, image, &masks, cfg.keep_prob, cfg.baseline)?;
    map.rng_seed = Some(cfg.seed);
    Ok(map)
}

pub fn rise_with_masks<S: Scalar, C: Classifier<S> + ?Sized>(
    model: &C,
    image: &Image<S>,
    masks: &MaskSet<S>,
    keep_prob: f64,
    baseline: Option<f64>,
) -> Result<SaliencyMap<S>> {
    if masks.dims() != image.dims() {
        return Err(Error::dims(format!("{:?}", image.dims()), format!("{:?}", masks.dims())));
    }
    if !(keep_prob > 0.0 && keep_prob <= 1.0) {
        return Err(Error::InvalidArgument(format!("keep probability {keep_prob} outside (0,1]")));
    }
    let base = resolve_baseline(baseline, image);
    let confidences: Vec<f64> = masks
        .masks()
        .par_iter()
        .map(|m| {
            let pixels = image.pixels().iter().zip(m).map(|(&p, &w)| base + w * (p - base)).collect();
            checked_confidence(model, &Image::from_raw(image.width(), image.height(), pixels))
        })
        .collect::<Result<_>>()?;

    // sequential accumulation keeps the result independent of thread count
    let mut acc = vec![0.0f64; image.pixels().len()];
    for (m, c) in masks.masks().iter().zip(&confidences) {
        for (a, w) in acc.iter_mut().zip(m) {
            *a += c * w.as_f64();
        }
    }
    let scale = 1.0 / (masks.len() as f64 * keep_prob);
    let values = acc.into_iter().map(|a| S::of(a * scale)).collect();
    SaliencyMap::new(image.width(), image.height(), values, "rise", None)
}
