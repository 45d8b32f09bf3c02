use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::segments::{coalition_confidences, enumerate_patterns, paint, weighted_ridge};
use super::{resolve_baseline, Classifier, SaliencyMap, SegmentGrid};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimeConfig {
    pub grid: usize,
    pub n_samples: usize,
    pub kernel_width: f64,
    pub ridge_lambda: f64,
    pub baseline: Option<f64>,
    pub seed: u64,
    /// Fit on all 2^M on/off patterns instead of sampling.
    pub exhaustive: bool,
}

impl Default for LimeConfig {
    fn default() -> Self {
        Self { grid: 8, n_samples: 500, kernel_width: 0.25, ridge_lambda: 1e-3, baseline: None, seed: 0, exhaustive: false }
    }
}

/// exp(−(1 − cos(z, 1))² / width²) for a pattern with `present` of `m` segments on.
pub fn lime_kernel_weight(present: usize, m: usize, kernel_width: f64) -> f64 {
    let cos = if present == 0 { 0.0 } else { (present as f64 / m as f64).sqrt() };
    (-(1.0 - cos).powi(2) / (kernel_width * kernel_width)).exp()
}

pub fn lime<S: Scalar, C: Classifier<S> + ?Sized>(model: &C, image: &Image<S>, cfg: &LimeConfig) -> Result<SaliencyMap<S>> {
    if cfg.n_samples == 0 || !(cfg.kernel_width > 0.0) || !(cfg.ridge_lambda >= 0.0) {
        return Err(Error::InvalidArgument("lime needs n_samples ≥ 1, kernel_width > 0, ridge_lambda ≥ 0".into()));
    }
    let grid = SegmentGrid::square(cfg.grid);
    let labels = grid.labels(image.height(), image.width())?;
    let m = grid.count();
    let patterns = if cfg.exhaustive {
        enumerate_patterns(m)?
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut p = vec![vec![true; m]];
        p.extend((1..cfg.n_samples).map(|_| (0..m).map(|_| rng.gen_bool(0.5)).collect()));
        p
    };
    let base = resolve_baseline(cfg.baseline, image);
    let y = coalition_confidences(model, image, &labels, &patterns, base)?;
    let rows: Vec<Vec<f64>> = patterns.iter().map(|z| z.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()).collect();
    let w: Vec<f64> = patterns.iter().map(|z| lime_kernel_weight(z.iter().filter(|&&b| b).count(), m, cfg.kernel_width)).collect();
    let coef = weighted_ridge(&rows, &y, &w, cfg.ridge_lambda, true, "lime")?;
    SaliencyMap::new(image.width(), image.height(), paint(&labels, &coef), "lime", Some(cfg.seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exhaustive4() -> LimeConfig {
        LimeConfig { grid: 2, exhaustive: true, baseline: Some(0.9), ..LimeConfig::default() }
    }

    fn segment_image() -> Image<f64> {
        // 2×2 grid over 4×4 pixels; every segment distinct from the 0.9 baseline
        Image::new(4, 4, (0..16).map(|i| 0.1 + 0.02 * i as f64).collect()).unwrap()
    }

    #[test]
    fn kernel_weight_examples() {
        assert_eq!(lime_kernel_weight(4, 4, 0.25), 1.0);
        assert!((lime_kernel_weight(0, 4, 0.25) - (-16.0f64).exp()).abs() < 1e-20);
    }

    #[test]
    fn constant_model_zero_coefficients() {
        let map = lime(&|_: &Image<f64>| 0.3, &segment_image(), &LimeConfig { grid: 2, n_samples: 50, ..LimeConfig::default() }).unwrap();
        assert!(map.values().iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn indicator_model_highlights_its_segment() {
        let img = segment_image();
        // segment 0 is the top-left 2×2 block; pixel (0,0) is untouched only when it is present
        let model = |im: &Image<f64>| if (im.get(0, 0) - 0.1).abs() < 1e-12 { 1.0 } else { 0.0 };
        for lambda in [0.0, 1e-3] {
            let map = lime(&model, &img, &LimeConfig { ridge_lambda: lambda, ..exhaustive4() }).unwrap();
            let v = map.values();
            let seg = [v[0], v[2], v[8], v[10]];
            assert!(seg[1..].iter().all(|&s| seg[0] > s + 0.1), "{seg:?}");
        }
    }

    #[test]
    fn seeded_runs_repeat() {
        let img = segment_image();
        let model = |im: &Image<f64>| im.pixels().iter().sum::<f64>() / 16.0;
        let cfg = LimeConfig { grid: 2, n_samples: 40, seed: 5, ..LimeConfig::default() };
        assert_eq!(lime(&model, &img, &cfg).unwrap(), lime(&model, &img, &cfg).unwrap());
    }
}
