use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{checked_confidence, Classifier};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::scalar::Scalar;

/// Regular rows×cols grid of superpixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentGrid {
    pub rows: usize,
    pub cols: usize,
}

impl SegmentGrid {
    pub fn square(n: usize) -> Self {
        Self { rows: n, cols: n }
    }

    pub fn count(&self) -> usize {
        self.rows * self.cols
    }

    /// Segment index of every pixel, row-major.
    pub fn labels(&self, height: usize, width: usize) -> Result<Vec<usize>> {
        if self.rows == 0 || self.cols == 0 || self.rows > height || self.cols > width {
            return Err(Error::InvalidArgument(format!(
                "{}x{} segment grid does not fit a {height}x{width} image",
                self.rows, self.cols
            )));
        }
        Ok((0..height)
            .flat_map(|y| (0..width).map(move |x| (y * self.rows / height) * self.cols + x * self.cols / width))
            .collect())
    }
}

/// Keeps segments where `present[s]` and replaces the rest with `baseline`.
pub(crate) fn compose<S: Scalar>(image: &Image<S>, labels: &[usize], present: &[bool], baseline: S) -> Image<S> {
    let pixels = image.pixels().iter().zip(labels).map(|(&p, &l)| if present[l] { p } else { baseline }).collect();
    Image::from_raw(image.width(), image.height(), pixels)
}

/// Model confidence for each on/off superpixel pattern, in input order.
pub(crate) fn coalition_confidences<S: Scalar, C: Classifier<S> + ?Sized>(
    model: &C,
    image: &Image<S>,
    labels: &[usize],
    patterns: &[Vec<bool>],
    baseline: S,
) -> Result<Vec<f64>> {
    patterns.par_iter().map(|z| checked_confidence(model, &compose(image, labels, z, baseline))).collect()
}

/// Weighted ridge regression. With `intercept`, the intercept is unpenalized
/// and absorbed by centering on the weighted means.
pub(crate) fn weighted_ridge(rows: &[Vec<f64>], y: &[f64], w: &[f64], lambda: f64, intercept: bool, what: &'static str) -> Result<Vec<f64>> {
    let p = rows.first().map_or(0, Vec::len);
    let total: f64 = w.iter().sum();
    if p == 0 || !(total > 0.0) {
        return Err(Error::Singular(what));
    }
    let (x_mean, y_mean) = if intercept {
        let mut xm = vec![0.0; p];
        for (r, wi) in rows.iter().zip(w) {
            for (m, v) in xm.iter_mut().zip(r) {
                *m += wi * v;
            }
        }
        xm.iter_mut().for_each(|m| *m /= total);
        (xm, y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / total)
    } else {
        (vec![0.0; p], 0.0)
    };
    let mut gram = DMatrix::<f64>::zeros(p, p);
    let mut rhs = DVector::<f64>::zeros(p);
    let mut xc = vec![0.0; p];
    for ((r, &yi), &wi) in rows.iter().zip(y).zip(w) {
        for ((c, v), m) in xc.iter_mut().zip(r).zip(&x_mean) {
            *c = v - m;
        }
        for a in 0..p {
            let wa = wi * xc[a];
            rhs[a] += wa * (yi - y_mean);
            for b in a..p {
                gram[(a, b)] += wa * xc[b];
            }
        }
    }
    for a in 0..p {
        gram[(a, a)] += lambda;
        for b in 0..a {
            gram[(a, b)] = gram[(b, a)];
        }
    }
    let chol = gram.cholesky().ok_or(Error::Singular(what))?;
    let beta = chol.solve(&rhs);
    if beta.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular(what));
    }
    Ok(beta.iter().copied().collect())
}

/// All 2^m on/off patterns, index bit j ↔ segment j.
pub(crate) fn enumerate_patterns(m: usize) -> Result<Vec<Vec<bool>>> {
    if m > 20 {
        return Err(Error::InvalidArgument(format!("exhaustive enumeration over {m} segments is too large")));
    }
    Ok((0u32..1 << m).map(|bits| (0..m).map(|j| bits >> j & 1 == 1).collect()).collect())
}

/// Broadcasts per-segment values to pixels.
pub(crate) fn paint<S: Scalar>(labels: &[usize], coef: &[f64]) -> Vec<S> {
    labels.iter().map(|&l| S::of(coef[l])).collect()
}
