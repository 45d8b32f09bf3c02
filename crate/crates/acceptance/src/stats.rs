//! Brute-force statistics, written without sharing code with the library.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use semcont::metrics::{kendall, kendall_exact_p, msd_values, pearson, spearman, wasserstein1_values};

use crate::Check;

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn pearson_oracle(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for i in 0..x.len() {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Average rank, 1-based, counted pair by pair.
pub fn rank_oracle(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|&a| {
            let below = v.iter().filter(|&&b| b < a).count() as f64;
            let equal = v.iter().filter(|&&b| b == a).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

pub fn spearman_oracle(x: &[f64], y: &[f64]) -> f64 {
    pearson_oracle(&rank_oracle(x), &rank_oracle(y))
}

/// Kendall τ-b from explicit pair counts.
pub fn kendall_oracle(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let (mut concordant, mut discordant, mut tie_x, mut tie_y) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = x[j] - x[i];
            let dy = y[j] - y[i];
            if dx == 0.0 {
                tie_x += 1;
            }
            if dy == 0.0 {
                tie_y += 1;
            }
            if dx != 0.0 && dy != 0.0 {
                if (dx > 0.0) == (dy > 0.0) {
                    concordant += 1;
                } else {
                    discordant += 1;
                }
            }
        }
    }
    let n0 = (n * (n - 1) / 2) as i64;
    (concordant - discordant) as f64 / (((n0 - tie_x) * (n0 - tie_y)) as f64).sqrt()
}

/// Distribution of Kendall's S over all n! orderings, as (S, count) pairs.
pub fn kendall_s_distribution(n: usize) -> Vec<(i64, u64)> {
    let mut perm: Vec<usize> = (0..n).collect();
    let mut counts = std::collections::BTreeMap::new();
    permute(&mut perm, 0, &mut |p| {
        let mut s = 0i64;
        for i in 0..n {
            for j in i + 1..n {
                s += if p[j] > p[i] { 1 } else { -1 };
            }
        }
        *counts.entry(s).or_insert(0u64) += 1;
    });
    counts.into_iter().collect()
}

fn permute(p: &mut Vec<usize>, k: usize, visit: &mut dyn FnMut(&[usize])) {
    if k == p.len() {
        visit(p);
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permute(p, k + 1, visit);
        p.swap(k, i);
    }
}

pub fn kendall_p_by_enumeration(dist: &[(i64, u64)], s: i64) -> f64 {
    let total: u64 = dist.iter().map(|(_, c)| c).sum();
    let extreme: u64 = dist.iter().filter(|(v, _)| v.abs() >= s.abs()).map(|(_, c)| c).sum();
    extreme as f64 / total as f64
}

pub fn msd_oracle(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>() / a.len() as f64
}

/// ∫|F_a − F_b| over the merged support of the two empirical distributions.
pub fn wasserstein_oracle(a: &[f64], b: &[f64]) -> f64 {
    let mut points: Vec<f64> = a.iter().chain(b).copied().collect();
    points.sort_by(f64::total_cmp);
    let cdf = |v: &[f64], t: f64| v.iter().filter(|&&x| x <= t).count() as f64 / v.len() as f64;
    points.windows(2).map(|w| (w[1] - w[0]) * (cdf(a, w[0]) - cdf(b, w[0])).abs()).sum()
}

fn sample_pair(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    loop {
        let n = rng.gen_range(3..=60);
        let tied = rng.gen_bool(0.35);
        let draw = |rng: &mut ChaCha8Rng| if tied { rng.gen_range(0..5) as f64 } else { rng.gen::<f64>() };
        let x: Vec<f64> = (0..n).map(|_| draw(rng)).collect();
        let mix = rng.gen::<f64>();
        let y: Vec<f64> = x.iter().map(|&v| if rng.gen_bool(mix) { v } else { draw(rng) }).collect();
        let constant = |v: &[f64]| v.iter().all(|&a| a == v[0]);
        if !constant(&x) && !constant(&y) {
            return (x, y);
        }
    }
}

/// Correlation coefficients, exact Kendall p-values and map distances
/// against the oracles above.
pub fn statistics_suite(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = [0.0f64; 3];
    for _ in 0..500 {
        let (x, y) = sample_pair(&mut rng);
        let got = [pearson(&x, &y), spearman(&x, &y), kendall(&x, &y)];
        let want = [pearson_oracle(&x, &y), spearman_oracle(&x, &y), kendall_oracle(&x, &y)];
        for k in 0..3 {
            let err = match &got[k] {
                Ok(r) => (r.coefficient - want[k]).abs(),
                Err(_) => f64::INFINITY,
            };
            worst[k] = worst[k].max(err);
        }
    }

    let mut worst_p = 0.0f64;
    for n in 3..=8 {
        let dist = kendall_s_distribution(n);
        for &(s, _) in &dist {
            worst_p = worst_p.max((kendall_exact_p(n, s) - kendall_p_by_enumeration(&dist, s)).abs());
        }
        for _ in 0..20 {
            let x: Vec<f64> = (0..n).map(|i| i as f64).collect();
            let mut y: Vec<f64> = x.clone();
            for i in (1..n).rev() {
                y.swap(i, rng.gen_range(0..=i));
            }
            let s: i64 = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).map(|(i, j)| if y[j] > y[i] { 1 } else { -1 }).sum();
            let p = match kendall(&x, &y) {
                Ok(r) => r.p_value,
                Err(_) => f64::INFINITY,
            };
            worst_p = worst_p.max((p - kendall_p_by_enumeration(&dist, s)).abs());
        }
    }

    let mut worst_metric = 0.0f64;
    for _ in 0..1000 {
        let len = rng.gen_range(4..=256);
        let maps: Vec<Vec<f64>> = (0..3).map(|_| (0..len).map(|_| rng.gen::<f64>()).collect()).collect();
        let (a, b, c) = (&maps[0], &maps[1], &maps[2]);
        let w = |p: &[f64], q: &[f64]| wasserstein1_values(p, q).unwrap_or(f64::INFINITY);
        let m = |p: &[f64], q: &[f64]| msd_values(p, q).unwrap_or(f64::INFINITY);
        let violations = [
            (w(a, b) - wasserstein_oracle(a, b)).abs(),
            (m(a, b) - msd_oracle(a, b)).abs(),
            (w(a, b) - w(b, a)).abs(),
            (m(a, b) - m(b, a)).abs(),
            w(a, a).abs(),
            m(a, a).abs(),
            (-w(a, b)).max(0.0),
            (w(a, c) - w(a, b) - w(b, c)).max(0.0),
            (m(a, c).sqrt() - m(a, b).sqrt() - m(b, c).sqrt()).max(0.0),
        ];
        worst_metric = violations.iter().fold(worst_metric, |acc, &v| acc.max(v));
    }

    let tol = 1e-9;
    Check {
        passed: worst.iter().all(|&e| e <= tol) && worst_p <= tol && worst_metric <= tol,
        detail: format!(
            "max errors pearson {:.1e}, spearman {:.1e}, kendall {:.1e}, exact p {:.1e}, distances {:.1e}",
            worst[0], worst[1], worst[2], worst_p, worst_metric
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_hand_cases() {
        assert!((pearson_oracle(&[1.0, 2.0, 3.0], &[2.0, 4.0, 7.0]) - 0.9933992677987828).abs() < 1e-12);
        assert_eq!(rank_oracle(&[10.0, 20.0, 20.0, 5.0]), vec![2.0, 3.5, 3.5, 1.0]);
        // one discordant pair out of three
        assert!((kendall_oracle(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]) - 1.0 / 3.0).abs() < 1e-12);
        assert!((wasserstein_oracle(&[0.0, 1.0], &[0.5, 1.5]) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn s_distribution_for_three() {
        // S ∈ {−3, −1, 1, 3} with counts 1, 2, 2, 1
        assert_eq!(kendall_s_distribution(3), vec![(-3, 1), (-1, 2), (1, 2), (3, 1)]);
        assert!((kendall_p_by_enumeration(&kendall_s_distribution(3), 3) - 2.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn statistics_suite_passes() {
        let check = statistics_suite(11);
        assert!(check.passed, "{}", check.detail);
    }
}
