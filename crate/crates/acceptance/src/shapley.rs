//! Exact Shapley values by subset enumeration.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use semcont::explain::{kernelshap, KernelShapConfig, SegmentGrid};
use semcont::image::Image;

use crate::Check;

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// φ_i = Σ_{S ⊆ N∖{i}} |S|!(M−|S|−1)!/M! · (v(S ∪ {i}) − v(S)), coalitions as bitmasks.
pub fn shapley_values(m: usize, v: &dyn Fn(u32) -> f64) -> Vec<f64> {
    let total = factorial(m);
    (0..m)
        .map(|i| {
            let bit = 1u32 << i;
            (0..1u32 << m)
                .filter(|s| s & bit == 0)
                .map(|s| {
                    let size = s.count_ones() as usize;
                    factorial(size) * factorial(m - size - 1) / total * (v(s | bit) - v(s))
                })
                .sum()
        })
        .collect()
}

const SIDE: usize = 8;
const BASELINE: f64 = 0.95;

/// 8×8 image whose four quadrants carry distinct levels.
fn quadrant_image() -> (Image<f64>, Vec<usize>) {
    let labels = SegmentGrid::square(2).labels(SIDE, SIDE).expect("2x2 grid fits");
    let pixels = labels.iter().map(|&l| 0.2 + 0.15 * l as f64).collect();
    (Image::new(SIDE, SIDE, pixels).expect("valid image"), labels)
}

/// Which segments of `image` still show their original level.
fn coalition(image: &Image<f64>, original: &Image<f64>, labels: &[usize], m: usize) -> u32 {
    let mut mask = 0u32;
    for s in 0..m {
        let p = labels.iter().position(|&l| l == s).expect("segment present");
        if (image.pixels()[p] - original.pixels()[p]).abs() < 1e-12 {
            mask |= 1 << s;
        }
    }
    mask
}

/// Enumerated KernelSHAP on random 4-player games and the efficiency of the
/// sampled estimator.
pub fn shapley_suite(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (image, labels) = quadrant_image();
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let table: Vec<f64> = (0..16).map(|_| rng.gen::<f64>()).collect();
        let game = |x: &Image<f64>| table[coalition(x, &image, &labels, 4) as usize];
        let exact = shapley_values(4, &|s| table[s as usize]);
        let cfg = KernelShapConfig { grid: 2, exhaustive: true, ridge_lambda: 0.0, baseline: Some(BASELINE), ..KernelShapConfig::default() };
        match kernelshap(&game, &image, &cfg) {
            Ok(map) => {
                for (s, want) in exact.iter().enumerate() {
                    let p = labels.iter().position(|&l| l == s).expect("segment present");
                    worst = worst.max((map.values()[p] - want).abs());
                }
            }
            Err(_) => worst = f64::INFINITY,
        }
    }

    let mut worst_efficiency = 0.0f64;
    let side = 32;
    let labels = SegmentGrid::square(8).labels(side, side).expect("8x8 grid fits");
    for k in 0..10u64 {
        let weights: Vec<f64> = (0..side * side).map(|_| rng.gen_range(-0.05..0.05)).collect();
        let pixels: Vec<f64> = (0..side * side).map(|_| rng.gen_range(0.0..0.9)).collect();
        let image = Image::new(side, side, pixels).expect("valid image");
        let model = |x: &Image<f64>| {
            let z: f64 = x.pixels().iter().zip(&weights).map(|(p, w)| p * w).sum();
            1.0 / (1.0 + (-z).exp())
        };
        let blank = Image::new(side, side, vec![BASELINE; side * side]).expect("valid image");
        let cfg = KernelShapConfig { baseline: Some(BASELINE), seed: k, ..KernelShapConfig::default() };
        match kernelshap(&model, &image, &cfg) {
            Ok(map) => {
                let sum: f64 = (0..64).map(|s| map.values()[labels.iter().position(|&l| l == s).expect("segment present")]).sum();
                worst_efficiency = worst_efficiency.max((sum - (model(&image) - model(&blank))).abs());
            }
            Err(_) => worst_efficiency = f64::INFINITY,
        }
    }

    Check {
        passed: worst <= 1e-6 && worst_efficiency <= 1e-4,
        detail: format!("max |φ − exact| {worst:.1e} over 50 games, sampled efficiency gap {worst_efficiency:.1e}"),
    }
}
