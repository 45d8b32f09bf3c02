use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::bilinear_resize;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Soft perturbation masks with values in [0,1], all of one size.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSet<S> {
    height: usize,
    width: usize,
    masks: Vec<Vec<S>>,
    /// (grid, keep_prob, seed) when generated.
    pub params: Option<(usize, f64, u64)>,
}

impl<S: Scalar> MaskSet<S> {
    pub fn from_masks(height: usize, width: usize, masks: Vec<Vec<S>>) -> Result<Self> {
        if masks.is_empty() {
            return Err(Error::InvalidArgument("mask set is empty".into()));
        }
        for m in &masks {
            if m.len() != height * width {
                return Err(Error::dims(height * width, m.len()));
            }
            if m.iter().any(|v| !(*v >= S::zero() && *v <= S::one())) {
                return Err(Error::InvalidArgument("mask values must lie in [0,1]".into()));
            }
        }
        Ok(Self { height, width, masks, params: None })
    }

    /// RISE masks: a grid×grid Bernoulli(keep_prob) pattern, bilinearly
    /// upsampled to (grid+1)·cell pixels and cropped at a random sub-cell shift.
    pub fn generate(n: usize, grid: usize, keep_prob: f64, height: usize, width: usize, seed: u64) -> Result<Self> {
        if n == 0 || grid == 0 {
            return Err(Error::InvalidArgument("mask count and grid must be at least 1".into()));
        }
        if !(keep_prob > 0.0 && keep_prob <= 1.0) {
            return Err(Error::InvalidArgument(format!("keep probability {keep_prob} outside (0,1]")));
        }
        let cell_h = height.div_ceil(grid);
        let cell_w = width.div_ceil(grid);
        let (up_h, up_w) = ((grid + 1) * cell_h, (grid + 1) * cell_w);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut masks = Vec::with_capacity(n);
        for _ in 0..n {
            let cells: Vec<f64> = (0..grid * grid).map(|_| if rng.gen::<f64>() < keep_prob { 1.0 } else { 0.0 }).collect();
            let dy = rng.gen_range(0..cell_h);
            let dx = rng.gen_range(0..cell_w);
            let up = bilinear_resize(&cells, grid, grid, up_h, up_w);
            let mask = (0..height)
                .flat_map(|y| (0..width).map(move |x| (y, x)))
                .map(|(y, x)| S::of(up[(y + dy) * up_w + x + dx]))
                .collect();
            masks.push(mask);
        }
        Ok(Self { height, width, masks, params: Some((grid, keep_prob, seed)) })
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn masks(&self) -> &[Vec<S>] {
        &self.masks
    }

    /// (1/(N·keep_prob)) Σ_i mask_i: the RISE map of a model that always returns 1.
    pub fn mean_map(&self, keep_prob: f64) -> Vec<f64> {
        let scale = 1.0 / (self.masks.len() as f64 * keep_prob);
        let mut acc = vec![0.0; self.height * self.width];
        for m in &self.masks {
            for (a, v) in acc.iter_mut().zip(m) {
                *a += v.as_f64();
            }
        }
        acc.iter().map(|a| a * scale).collect()
    }
}
