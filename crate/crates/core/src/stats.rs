//! Small statistics kernels shared by the metrics and reports.

use alloc::vec::Vec;

use crate::{Error, Result};

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n − 1 denominator); 0 for fewer than two values.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    libm::sqrt(ss / (xs.len() - 1) as f64)
}

/// Linear-interpolated percentile, `p` in `[0, 100]`.
pub fn percentile(xs: &[f64], p: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = (p / 100.0).clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = libm::floor(pos) as usize;
    let hi = (lo + 1).min(v.len() - 1);
    let frac = pos - lo as f64;
    v[lo] + frac * (v[hi] - v[lo])
}

/// Trapezoidal area under `ys` sampled on a uniform grid over `[0, 1]`.
pub fn trapezoid_unit(ys: &[f64]) -> f64 {
    match ys.len() {
        0 => 0.0,
        1 => ys[0],
        n => {
            let inner: f64 = ys[1..n - 1].iter().sum();
            (inner + 0.5 * (ys[0] + ys[n - 1])) / (n - 1) as f64
        }
    }
}

/// Pearson correlation. Either series having zero variance is an
/// `UndefinedCorrelation` error.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::dim("pearson needs two equal series of length ≥ 2"));
    }
    let (ma, mb) = (mean(a), mean(b));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    let scale_a = a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let scale_b = b.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let tiny = |ss: f64, scale: f64| ss <= (1e-12 * scale) * (1e-12 * scale) * a.len() as f64;
    if tiny(saa, scale_a) || tiny(sbb, scale_b) {
        return Err(Error::UndefinedCorrelation);
    }
    Ok((sab / libm::sqrt(saa * sbb)).clamp(-1.0, 1.0))
}

/// 1-based ranks, ties receiving the average of the ranks they span.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&i, &j| xs[i].total_cmp(&xs[j]).then(i.cmp(&j)));
    let mut ranks = alloc::vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation: Pearson correlation of average ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dim("spearman needs two equal series"));
    }
    pearson(&average_ranks(a), &average_ranks(b))
}

/// One-sided exact sign test of "the differences tend to be positive".
///
/// Zero differences are dropped; returns `P(X ≥ k)` for
/// `X ~ Binomial(n, 1/2)` with `k` positive differences out of `n` non-zero
/// ones, or 1 when all differences are zero.
pub fn sign_test(diffs: &[f64]) -> f64 {
    let n = diffs.iter().filter(|d| **d != 0.0).count();
    let k = diffs.iter().filter(|d| **d > 0.0).count();
    binomial_upper_tail(n, k)
}

fn binomial_upper_tail(n: usize, k: usize) -> f64 {
    if n == 0 || k == 0 {
        return 1.0;
    }
    let ln_half_n = -(n as f64) * core::f64::consts::LN_2;
    let ln_fact = |m: usize| libm::lgamma(m as f64 + 1.0);
    let mut p = 0.0;
    for j in k..=n {
        p += libm::exp(ln_fact(n) - ln_fact(j) - ln_fact(n - j) + ln_half_n);
    }
    p.min(1.0)
}
