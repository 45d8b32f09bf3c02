//! Saliency distances and correlation statistics.

mod correlation;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explain::SaliencyMap;
use crate::scalar::Scalar;

pub use correlation::{
    kendall, kendall_exact_p, kendall_normal_p, mid_ranks, pearson, spearman, CorrelationMethod, CorrelationResult,
    KENDALL_EXACT_MAX_N, SIGNIFICANCE,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DistanceKind {
    #[serde(rename = "wasserstein")]
    Wasserstein1,
    #[serde(rename = "msd")]
    Msd,
}

impl DistanceKind {
    pub const ALL: [DistanceKind; 2] = [DistanceKind::Wasserstein1, DistanceKind::Msd];

    pub fn name(self) -> &'static str {
        match self {
            DistanceKind::Wasserstein1 => "Wasserstein",
            DistanceKind::Msd => "MSD",
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            DistanceKind::Wasserstein1 => "wasserstein",
            DistanceKind::Msd => "msd",
        }
    }

    pub fn between_values<S: Scalar>(self, a: &[S], b: &[S]) -> Result<f64> {
        match self {
            DistanceKind::Msd => msd_values(a, b),
            DistanceKind::Wasserstein1 => wasserstein1_values(a, b),
        }
    }

    /// Distance between two maps; callers normalize first.
    pub fn between<S: Scalar>(self, a: &SaliencyMap<S>, b: &SaliencyMap<S>) -> Result<f64> {
        if (a.width(), a.height()) != (b.width(), b.height()) {
            return Err(Error::dims(format!("{}x{}", a.width(), a.height()), format!("{}x{}", b.width(), b.height())));
        }
        self.between_values(a.values(), b.values())
    }
}

fn check_len<S>(a: &[S], b: &[S]) -> Result<()> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::dims(a.len(), b.len()));
    }
    Ok(())
}

pub fn msd_values<S: Scalar>(a: &[S], b: &[S]) -> Result<f64> {
    check_len(a, b)?;
    let sum: f64 = a.iter().zip(b).map(|(x, y)| (x.as_f64() - y.as_f64()).powi(2)).sum();
    Ok(sum / a.len() as f64)
}

/// First Wasserstein distance between the empirical value distributions of
/// two equally sized samples: mean absolute difference of the sorted values.
pub fn wasserstein1_values<S: Scalar>(a: &[S], b: &[S]) -> Result<f64> {
    check_len(a, b)?;
    let sorted = |v: &[S]| {
        let mut s: Vec<f64> = v.iter().map(|x| x.as_f64()).collect();
        s.sort_by(f64::total_cmp);
        s
    };
    let (sa, sb) = (sorted(a), sorted(b));
    let sum: f64 = sa.iter().zip(&sb).map(|(x, y)| (x - y).abs()).sum();
    Ok(sum / a.len() as f64)
}

pub fn msd<S: Scalar>(a: &SaliencyMap<S>, b: &SaliencyMap<S>) -> Result<f64> {
    DistanceKind::Msd.between(a, b)
}

pub fn wasserstein1<S: Scalar>(a: &SaliencyMap<S>, b: &SaliencyMap<S>) -> Result<f64> {
    DistanceKind::Wasserstein1.between(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn msd_examples() {
        assert_eq!(msd_values(&[0.3f64, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert_eq!(msd_values(&[0.0f64; 4], &[1.0; 4]).unwrap(), 1.0);
        assert_eq!(msd_values(&[0.0f64, 1.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert!(msd_values(&[0.0f64], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn wasserstein_examples() {
        assert_eq!(wasserstein1_values(&[0.2f64, 0.9], &[0.9, 0.2]).unwrap(), 0.0);
        assert_eq!(wasserstein1_values(&[0.0f64; 3], &[1.0; 3]).unwrap(), 1.0);
        assert_eq!(wasserstein1_values(&[0.0f64, 0.0, 1.0, 1.0], &[0.0, 1.0, 1.0, 1.0]).unwrap(), 0.25);
    }

    #[test]
    fn map_dimension_mismatch() {
        let a = SaliencyMap::<f32>::zeros(4, 4, "t");
        let b = SaliencyMap::<f32>::zeros(2, 8, "t");
        assert!(msd(&a, &b).is_err());
        assert!(wasserstein1(&a, &b).is_err());
    }
}
