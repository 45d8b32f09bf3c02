//! Pearson, Spearman and Kendall τ-b with two-sided p-values.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Significance gate used in every verdict and table.
pub const SIGNIFICANCE: f64 = 0.05;

/// Largest tie-free sample for which Kendall p-values are exact.
pub const KENDALL_EXACT_MAX_N: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrelationMethod {
    Kendall,
    Pearson,
    Spearman,
}

impl CorrelationMethod {
    pub const ALL: [CorrelationMethod; 3] = [CorrelationMethod::Kendall, CorrelationMethod::Pearson, CorrelationMethod::Spearman];

    pub fn name(self) -> &'static str {
        match self {
            CorrelationMethod::Kendall => "Kendall",
            CorrelationMethod::Pearson => "Pearson",
            CorrelationMethod::Spearman => "Spearman",
        }
    }

    pub fn compute<S: Scalar>(self, x: &[S], y: &[S]) -> Result<CorrelationResult> {
        match self {
            CorrelationMethod::Kendall => kendall(x, y),
            CorrelationMethod::Pearson => pearson(x, y),
            CorrelationMethod::Spearman => spearman(x, y),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub method: CorrelationMethod,
    pub coefficient: f64,
    pub p_value: f64,
    pub n: usize,
    pub significant: bool,
}

impl CorrelationResult {
    fn new(method: CorrelationMethod, coefficient: f64, p_value: f64, n: usize) -> Self {
        let coefficient = coefficient.clamp(-1.0, 1.0);
        let p_value = p_value.clamp(0.0, 1.0);
        Self { method, coefficient, p_value, n, significant: p_value < SIGNIFICANCE }
    }

    /// Significant with a positive coefficient.
    pub fn positive(&self) -> bool {
        self.significant && self.coefficient > 0.0
    }
}

fn to_f64<S: Scalar>(v: &[S]) -> Vec<f64> {
    v.iter().map(|s| s.as_f64()).collect()
}

fn check_inputs(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::dims(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(Error::UndefinedCorrelation("fewer than 3 samples"));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("correlation input".into()));
    }
    let constant = |v: &[f64]| v.iter().all(|&a| a == v[0]);
    if constant(x) || constant(y) {
        return Err(Error::UndefinedCorrelation("constant input"));
    }
    Ok(())
}

fn pearson_coefficient(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    sxy / (sxx * syy).sqrt()
}

/// Two-sided p-value of a correlation coefficient via the Student-t transform.
fn t_test_p(r: f64, n: usize) -> f64 {
    let r = r.clamp(-1.0, 1.0);
    if r.abs() >= 1.0 {
        return 0.0;
    }
    let df = (n - 2) as f64;
    let t = r * (df / (1.0 - r * r)).sqrt();
    match StudentsT::new(0.0, 1.0, df) {
        Ok(dist) => 2.0 * dist.sf(t.abs()),
        Err(_) => f64::NAN,
    }
}

pub fn pearson<S: Scalar>(x: &[S], y: &[S]) -> Result<CorrelationResult> {
    let (x, y) = (to_f64(x), to_f64(y));
    check_inputs(&x, &y)?;
    let r = pearson_coefficient(&x, &y);
    Ok(CorrelationResult::new(CorrelationMethod::Pearson, r, t_test_p(r, x.len()), x.len()))
}

/// 1-based ranks, ties receiving the average of the ranks they span.
pub fn mid_ranks<S: Scalar>(v: &[S]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].as_f64().total_cmp(&v[b].as_f64()));
    let mut ranks = vec![0.0; v.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && v[order[end]] == v[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

pub fn spearman<S: Scalar>(x: &[S], y: &[S]) -> Result<CorrelationResult> {
    let (xf, yf) = (to_f64(x), to_f64(y));
    check_inputs(&xf, &yf)?;
    let rho = pearson_coefficient(&mid_ranks(&xf), &mid_ranks(&yf));
    Ok(CorrelationResult::new(CorrelationMethod::Spearman, rho, t_test_p(rho, xf.len()), xf.len()))
}

/// Pair counts behind τ-b: S = concordant − discordant, plus tie totals.
#[derive(Debug, Clone, Copy, PartialEq)]
struct KendallCounts {
    s: i64,
    pairs: i64,
    x_ties: i64,
    y_ties: i64,
}

/// Knight's O(n log n) algorithm: sort by (x, y), then count the inversions
/// in y with a merge sort.
fn kendall_counts(x: &[f64], y: &[f64]) -> KendallCounts {
    let n = x.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(y[a].total_cmp(&y[b])));

    let tie_pairs = |keys: &mut dyn Iterator<Item = bool>| {
        // keys yields "same as previous" flags; accumulates t(t-1)/2 per run
        let (mut total, mut run) = (0i64, 1i64);
        for same in keys {
            if same {
                run += 1;
            } else {
                total += run * (run - 1) / 2;
                run = 1;
            }
        }
        total + run * (run - 1) / 2
    };
    let x_ties = tie_pairs(&mut idx.windows(2).map(|w| x[w[0]] == x[w[1]]));
    let joint_ties = tie_pairs(&mut idx.windows(2).map(|w| x[w[0]] == x[w[1]] && y[w[0]] == y[w[1]]));

    let mut ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
    let mut buf = ys.clone();
    let swaps = merge_count(&mut ys, &mut buf);
    let y_ties = tie_pairs(&mut ys.windows(2).map(|w| w[0] == w[1]));

    let pairs = (n as i64) * (n as i64 - 1) / 2;
    let s = pairs - x_ties - y_ties + joint_ties - 2 * swaps;
    KendallCounts { s, pairs, x_ties, y_ties }
}

/// Sorts `v` ascending and returns the number of strict inversions.
fn merge_count(v: &mut [f64], buf: &mut [f64]) -> i64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = {
        let (l, r) = v.split_at_mut(mid);
        let (bl, br) = buf.split_at_mut(mid);
        merge_count(l, bl) + merge_count(r, br)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j].total_cmp(&v[i]) == Ordering::Less {
            buf[k] = v[j];
            swaps += (mid - i) as i64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    let k2 = k + mid - i;
    buf[k2..n].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

/// Number of permutations of `n` items with exactly k inversions, k = 0..=n(n−1)/2.
fn mahonian(n: usize) -> Vec<u64> {
    let mut row = vec![1u64];
    for m in 1..=n {
        let max = m * (m - 1) / 2;
        let mut next = vec![0u64; max + 1];
        for (k, slot) in next.iter_mut().enumerate() {
            // inserting the m-th element adds 0..m-1 inversions
            let lo = k.saturating_sub(m - 1);
            *slot = (lo..=k.min(row.len() - 1)).map(|j| row[j]).sum();
        }
        row = next;
    }
    row
}

/// Exact two-sided p-value P(|S| ≥ |s|) under the permutation null, no ties.
pub fn kendall_exact_p(n: usize, s: i64) -> f64 {
    let counts = mahonian(n);
    let pairs = (n * (n - 1) / 2) as i64;
    let total: u64 = counts.iter().sum();
    let extreme: u64 = counts
        .iter()
        .enumerate()
        .filter(|(k, _)| (pairs - 2 * *k as i64).abs() >= s.abs())
        .map(|(_, c)| c)
        .sum();
    extreme as f64 / total as f64
}

fn tie_groups(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut groups = Vec::new();
    let mut run = 1.0;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1.0;
        } else {
            if run > 1.0 {
                groups.push(run);
            }
            run = 1.0;
        }
    }
    if run > 1.0 {
        groups.push(run);
    }
    groups
}

/// Normal-approximation p-value with the tie-corrected variance of S.
pub fn kendall_normal_p(x: &[f64], y: &[f64], s: i64) -> f64 {
    let n = x.len() as f64;
    let (tx, ty) = (tie_groups(x), tie_groups(y));
    let sum = |g: &[f64], f: &dyn Fn(f64) -> f64| g.iter().map(|&t| f(t)).sum::<f64>();
    let v0 = n * (n - 1.0) * (2.0 * n + 5.0);
    let vt = sum(&tx, &|t| t * (t - 1.0) * (2.0 * t + 5.0));
    let vu = sum(&ty, &|t| t * (t - 1.0) * (2.0 * t + 5.0));
    let v1 = sum(&tx, &|t| t * (t - 1.0)) * sum(&ty, &|t| t * (t - 1.0)) / (2.0 * n * (n - 1.0));
    let v2 = sum(&tx, &|t| t * (t - 1.0) * (t - 2.0)) * sum(&ty, &|t| t * (t - 1.0) * (t - 2.0))
        / (9.0 * n * (n - 1.0) * (n - 2.0));
    let var = (v0 - vt - vu) / 18.0 + v1 + v2;
    if !(var > 0.0) {
        return 1.0;
    }
    let z = s as f64 / var.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    (2.0 * normal.sf(z.abs())).min(1.0)
}

pub fn kendall<S: Scalar>(x: &[S], y: &[S]) -> Result<CorrelationResult> {
    let (x, y) = (to_f64(x), to_f64(y));
    check_inputs(&x, &y)?;
    let c = kendall_counts(&x, &y);
    let denom = (((c.pairs - c.x_ties) as f64) * ((c.pairs - c.y_ties) as f64)).sqrt();
    let tau = c.s as f64 / denom;
    let n = x.len();
    let p = if n <= KENDALL_EXACT_MAX_N && c.x_ties == 0 && c.y_ties == 0 {
        kendall_exact_p(n, c.s)
    } else {
        kendall_normal_p(&x, &y, c.s)
    };
    Ok(CorrelationResult::new(CorrelationMethod::Kendall, tau, p, n))
}
