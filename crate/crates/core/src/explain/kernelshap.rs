use rand::seq::index::sample;
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
pub struct KernelShapConfig {
    pub grid: usize,
    pub n_samples: usize,
    pub ridge_lambda: f64,
    pub baseline: Option<f64>,
    pub seed: u64,
    /// Use every coalition with its exact kernel weight instead of sampling.
    pub exhaustive: bool,
}

impl Default for KernelShapConfig {
    fn default() -> Self {
        Self { grid: 8, n_samples: 500, ridge_lambda: 1e-3, baseline: None, seed: 0, exhaustive: false }
    }
}

/// π(z) = (M−1) / (C(M,|z|)·|z|·(M−|z|)); infinite for the empty and full coalitions.
pub fn shapley_kernel_weight(m: usize, size: usize) -> f64 {
    if size == 0 || size >= m {
        return f64::INFINITY;
    }
    (m - 1) as f64 / (binomial(m, size) * size as f64 * (m - size) as f64)
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Superpixel Shapley values estimated by kernel-weighted regression. The
/// empty and full coalitions pin the efficiency constraint, which is solved
/// exactly by eliminating the last segment's coefficient.
pub fn kernelshap<S: Scalar, C: Classifier<S> + ?Sized>(model: &C, image: &Image<S>, cfg: &KernelShapConfig) -> Result<SaliencyMap<S>> {
    if cfg.n_samples == 0 || !(cfg.ridge_lambda >= 0.0) {
        return Err(Error::InvalidArgument("kernelshap needs n_samples ≥ 1 and ridge_lambda ≥ 0".into()));
    }
    let grid = SegmentGrid::square(cfg.grid);
    let labels = grid.labels(image.height(), image.width())?;
    let m = grid.count();
    if m < 2 {
        return Err(Error::InvalidArgument("kernelshap needs at least 2 superpixels".into()));
    }

    let (patterns, weights) = if cfg.exhaustive {
        enumerate_patterns(m)?
            .into_iter()
            .map(|z| {
                let s = z.iter().filter(|&&b| b).count();
                let w = shapley_kernel_weight(m, s);
                (z, w)
            })
            .unzip()
    } else {
        sampled_coalitions(m, cfg.n_samples, cfg.seed)
    };

    let mut all = vec![vec![false; m], vec![true; m]];
    all.extend(patterns.iter().filter(|z| z.iter().any(|&b| b) && !z.iter().all(|&b| b)).cloned());
    let base = resolve_baseline(cfg.baseline, image);
    let conf = coalition_confidences(model, image, &labels, &all, base)?;
    let (f_empty, f_full) = (conf[0], conf[1]);
    let delta = f_full - f_empty;

    let mut rows = Vec::new();
    let mut y = Vec::new();
    let mut w = Vec::new();
    let proper = patterns.iter().zip(&weights).filter(|(_, w)| w.is_finite());
    for ((z, &wi), &fz) in proper.zip(&conf[2..]) {
        let last = if z[m - 1] { 1.0 } else { 0.0 };
        rows.push(z[..m - 1].iter().map(|&b| if b { 1.0 } else { 0.0 } - last).collect::<Vec<f64>>());
        y.push(fz - f_empty - last * delta);
        w.push(wi);
    }
    if rows.is_empty() {
        return Err(Error::Singular("kernelshap"));
    }
    let mut phi = weighted_ridge(&rows, &y, &w, cfg.ridge_lambda, false, "kernelshap")?;
    phi.push(delta - phi.iter().sum::<f64>());
    SaliencyMap::new(image.width(), image.height(), paint(&labels, &phi), "kernelshap", Some(cfg.seed))
}

/// Coalition sizes drawn ∝ Σ_{|z|=s} π(z) = (M−1)/(s(M−s)), members uniform;
/// each draw carries unit weight.
fn sampled_coalitions(m: usize, n: usize, seed: u64) -> (Vec<Vec<bool>>, Vec<f64>) {
    let mass: Vec<f64> = (1..m).map(|s| 1.0 / (s * (m - s)) as f64).collect();
    let total: f64 = mass.iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let patterns = (0..n)
        .map(|_| {
            let mut u = rng.gen::<f64>() * total;
            let mut size = m - 1;
            for (i, p) in mass.iter().enumerate() {
                if u < *p {
                    size = i + 1;
                    break;
                }
                u -= p;
            }
            let mut z = vec![false; m];
            for j in sample(&mut rng, m, size) {
                z[j] = true;
            }
            z
        })
        .collect();
    (patterns, vec![1.0; n])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn segment_image() -> Image<f64> {
        Image::new(4, 4, (0..16).map(|i| 0.1 + 0.02 * i as f64).collect()).unwrap()
    }

    fn present(im: &Image<f64>) -> [bool; 4] {
        [(0, 0), (2, 0), (0, 2), (2, 2)].map(|(x, y)| im.get(x, y) != 0.9)
    }

    fn exhaustive4() -> KernelShapConfig {
        KernelShapConfig { grid: 2, exhaustive: true, ridge_lambda: 0.0, baseline: Some(0.9), ..KernelShapConfig::default() }
    }

    fn segment_values(map: &SaliencyMap<f64>) -> [f64; 4] {
        let v = map.values();
        [v[0], v[2], v[8], v[10]]
    }

    #[test]
    fn kernel_weight_values() {
        assert!((shapley_kernel_weight(4, 1) - 3.0 / 12.0).abs() < 1e-15);
        assert!((shapley_kernel_weight(4, 2) - 3.0 / 24.0).abs() < 1e-15);
        assert!(shapley_kernel_weight(4, 0).is_infinite());
        assert!((binomial(64, 32) / 1832624140942590534.0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn additive_game_recovers_weights() {
        let a = [0.3, -0.1, 0.05, 0.2];
        let model = |im: &Image<f64>| present(im).iter().zip(a).map(|(&p, w)| if p { w } else { 0.0 }).sum::<f64>();
        let phi = segment_values(&kernelshap(&model, &segment_image(), &exhaustive4()).unwrap());
        for (p, e) in phi.iter().zip(a) {
            assert!((p - e).abs() < 1e-6, "{phi:?}");
        }
    }

    #[test]
    fn constant_and_symmetric_games() {
        let zero = kernelshap(&|_: &Image<f64>| 0.4, &segment_image(), &exhaustive4()).unwrap();
        assert!(zero.values().iter().all(|v| v.abs() < 1e-6));
        let model = |im: &Image<f64>| (present(im).iter().filter(|&&p| p).count() as f64).powi(2) / 16.0;
        let phi = segment_values(&kernelshap(&model, &segment_image(), &exhaustive4()).unwrap());
        assert!(phi.iter().all(|p| (p - phi[0]).abs() < 1e-6));
        assert!((phi.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn sampled_mode_is_efficient_and_seeded() {
        let img = Image::<f64>::new(8, 8, (0..64).map(|i| (i as f64 / 64.0).powi(2)).collect()).unwrap();
        let model = |im: &Image<f64>| 1.0 / (1.0 + (-(im.pixels()[9] * 3.0 - im.pixels()[50] + im.pixels()[27] * im.pixels()[36])).exp());
        let cfg = KernelShapConfig { grid: 4, n_samples: 200, seed: 11, baseline: Some(0.5), ..KernelShapConfig::default() };
        let map = kernelshap(&model, &img, &cfg).unwrap();
        assert_eq!(map, kernelshap(&model, &img, &cfg).unwrap());
        let labels = SegmentGrid::square(4).labels(8, 8).unwrap();
        let mut per_segment = [0.0; 16];
        for (l, v) in labels.iter().zip(map.values()) {
            per_segment[*l] = *v;
        }
        let full = model(&img);
        let empty = model(&Image::filled(8, 8, 0.5));
        assert!((per_segment.iter().sum::<f64>() - (full - empty)).abs() < 1e-4);
    }

    #[test]
    fn too_few_segments() {
        let cfg = KernelShapConfig { grid: 1, ..KernelShapConfig::default() };
        assert!(kernelshap(&|_: &Image<f64>| 0.1, &segment_image(), &cfg).is_err());
    }
}
