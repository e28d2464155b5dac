//! Spectral norm estimation and Björck orthonormalization.
//!
//! A dense layer `y = W x + b` is 1-Lipschitz when `‖W‖₂ ≤ 1`; keeping the
//! weight semi-orthogonal (orthonormal along its smaller dimension) also
//! preserves gradient norm. [`project_weight`] rescales by a power-iteration
//! estimate of `‖W‖₂` and then runs Björck's iteration
//! `W ← (1 + β) W − β W WᵀW`, which converges to the polar factor for any
//! input whose singular values lie in `(0, √3)`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::tensor::{gemm, norm};
use crate::{Error, Result, Rng, Tensor};

/// Largest singular value of `w` by power iteration on `WᵀW` from a random
/// unit start vector.
pub fn power_iteration(w: &Tensor, iters: usize, rng: &mut Rng) -> Result<f64> {
    let (_, n) = w.dims2()?;
    let mut v = unit_start(n, rng);
    power_iteration_warm(w, &mut v, iters)
}

/// Random unit vector of length `n`.
pub fn unit_start(n: usize, rng: &mut Rng) -> Vec<f64> {
    loop {
        let mut v = rng.normal_vec(n, 1.0);
        let nv = norm(&v);
        if nv > 0.0 {
            v.iter_mut().for_each(|x| *x /= nv);
            return v;
        }
    }
}

/// Power iteration from (and updating) the start vector `v`.
///
/// Returns `‖W v‖` for the final unit iterate. For a fixed start vector the
/// estimate is non-decreasing in `iters`.
pub fn power_iteration_warm(w: &Tensor, v: &mut [f64], iters: usize) -> Result<f64> {
    let (m, n) = w.dims2()?;
    if v.len() != n {
        return Err(Error::dim(format!(
            "start vector has {} entries, matrix has {n} columns",
            v.len()
        )));
    }
    if iters == 0 {
        return Err(Error::invalid("power iteration needs at least one step"));
    }
    let wd = w.data();
    let mut u = vec![0.0; m];
    for _ in 0..iters {
        matvec(wd, m, n, v, &mut u);
        // v <- Wᵀ u / ‖Wᵀ u‖
        let mut t = vec![0.0; n];
        for (i, &ui) in u.iter().enumerate() {
            for (tj, &wij) in t.iter_mut().zip(&wd[i * n..(i + 1) * n]) {
                *tj += wij * ui;
            }
        }
        let nt = norm(&t);
        if nt == 0.0 || !nt.is_finite() {
            break;
        }
        v.iter_mut().zip(&t).for_each(|(vi, ti)| *vi = ti / nt);
    }
    matvec(wd, m, n, v, &mut u);
    let sigma = norm(&u);
    if sigma.is_finite() {
        Ok(sigma)
    } else {
        Err(Error::NonFinite("power_iteration"))
    }
}

fn matvec(w: &[f64], m: usize, n: usize, v: &[f64], out: &mut [f64]) {
    for i in 0..m {
        out[i] = crate::tensor::dot(&w[i * n..(i + 1) * n], v);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BjorckConfig {
    /// Iteration cap.
    pub max_iters: usize,
    /// Step size; 0.5 gives the first-order scheme `W (1.5 I − 0.5 WᵀW)`.
    pub beta: f64,
    /// Stop once `max |WᵀW − I|` (smaller Gram) drops below this; one more
    /// update is applied after the test passes.
    pub tol: f64,
}

impl Default for BjorckConfig {
    fn default() -> Self {
        BjorckConfig {
            max_iters: 15,
            beta: 0.5,
            tol: 1e-6,
        }
    }
}

/// Björck orthonormalization of a pre-scaled weight (`‖W‖₂ ≤ 1`).
///
/// The smaller dimension ends up orthonormal: rows when `rows ≤ cols`,
/// columns otherwise.
pub fn bjorck_orthonormalize(w: &Tensor, cfg: &BjorckConfig) -> Result<Tensor> {
    let (rows, cols) = w.dims2()?;
    if cfg.max_iters == 0 {
        return Err(Error::invalid("Björck needs at least one iteration"));
    }
    if w.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("bjorck_orthonormalize input"));
    }
    let mut cur = w.data().to_vec();
    let mut next = vec![0.0; rows * cols];
    let small = rows.min(cols);
    let mut gram = vec![0.0; small * small];
    let mut prev_dev = f64::INFINITY;
    for it in 0..cfg.max_iters {
        gram_small(&cur, rows, cols, &mut gram);
        let dev = max_identity_deviation(&gram, small);
        if !dev.is_finite() || (dev > 1.0 && dev > prev_dev) {
            return Err(Error::Divergence {
                iters: it,
                deviation: dev,
            });
        }
        bjorck_step(&cur, &gram, rows, cols, cfg.beta, &mut next);
        core::mem::swap(&mut cur, &mut next);
        if dev <= cfg.tol {
            break;
        }
        prev_dev = dev;
    }
    if cur.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("bjorck_orthonormalize"));
    }
    Ok(Tensor::from_parts(vec![rows, cols], cur))
}

/// Gram matrix over the smaller dimension: `W Wᵀ` if `rows ≤ cols`, else `WᵀW`.
fn gram_small(w: &[f64], rows: usize, cols: usize, out: &mut [f64]) {
    let c = cols as isize;
    if rows <= cols {
        gemm(
            rows,
            cols,
            rows,
            1.0,
            (w, c, 1),
            (w, 1, c),
            0.0,
            (out, rows as isize, 1),
        );
    } else {
        gemm(cols, rows, cols, 1.0, (w, 1, c), (w, c, 1), 0.0, (out, c, 1));
    }
}

fn bjorck_step(w: &[f64], gram: &[f64], rows: usize, cols: usize, beta: f64, out: &mut [f64]) {
    out.copy_from_slice(w);
    let c = cols as isize;
    if rows <= cols {
        // out = (1+β) W − β (W Wᵀ) W
        gemm(
            rows,
            rows,
            cols,
            -beta,
            (gram, rows as isize, 1),
            (w, c, 1),
            1.0 + beta,
            (out, c, 1),
        );
    } else {
        // out = (1+β) W − β W (WᵀW)
        gemm(
            rows,
            cols,
            cols,
            -beta,
            (w, c, 1),
            (gram, c, 1),
            1.0 + beta,
            (out, c, 1),
        );
    }
}

fn max_identity_deviation(gram: &[f64], n: usize) -> f64 {
    let mut dev: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            let d = gram[i * n + j] - target;
            if d.is_nan() {
                return f64::NAN;
            }
            dev = dev.max(d.abs());
        }
    }
    dev
}

/// `‖Q Qᵀ − I‖∞` (maximum absolute row sum) over the smaller dimension.
pub fn orthogonality_defect(q: &Tensor) -> Result<f64> {
    let (rows, cols) = q.dims2()?;
    let small = rows.min(cols);
    let mut gram = vec![0.0; small * small];
    gram_small(q.data(), rows, cols, &mut gram);
    let mut worst: f64 = 0.0;
    for i in 0..small {
        let s: f64 = (0..small)
            .map(|j| (gram[i * small + j] - if i == j { 1.0 } else { 0.0 }).abs())
            .sum();
        worst = worst.max(s);
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ProjectionConfig {
    pub power_iters: usize,
    /// Multiplier on the spectral-norm estimate before Björck.
    pub guard: f64,
    pub bjorck: BjorckConfig,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        ProjectionConfig {
            power_iters: 3,
            guard: 1.001,
            bjorck: BjorckConfig::default(),
        }
    }
}

impl ProjectionConfig {
    /// Settings for projecting freshly initialized weights, whose smallest
    /// singular values can be far from one.
    pub fn for_init() -> Self {
        ProjectionConfig {
            power_iters: 30,
            guard: 1.001,
            bjorck: BjorckConfig {
                max_iters: 200,
                ..BjorckConfig::default()
            },
        }
    }
}

/// Rescales `w` by its (warm-started) spectral norm estimate and
/// orthonormalizes it.
pub fn project_weight(w: &Tensor, power_vector: &mut [f64], cfg: &ProjectionConfig) -> Result<Tensor> {
    let sigma = power_iteration_warm(w, power_vector, cfg.power_iters)?;
    if sigma == 0.0 {
        return Err(Error::DegenerateGradient { norm: 0.0 });
    }
    let scaled = w.scale(1.0 / (sigma * cfg.guard))?;
    bjorck_orthonormalize(&scaled, &cfg.bjorck)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_spectral_norm() {
        let w = Tensor::from_rows(&[&[3.0, 0.0], &[0.0, 1.0]]).unwrap();
        let s = power_iteration(&w, 50, &mut Rng::seed_from_u64(1)).unwrap();
        assert!((s - 3.0).abs() < 1e-9, "{s}");
    }

    #[test]
    fn rotation_has_unit_norm() {
        let (s, c) = (libm::sin(0.7), libm::cos(0.7));
        let w = Tensor::from_rows(&[&[c, -s], &[s, c]]).unwrap();
        let est = power_iteration(&w, 50, &mut Rng::seed_from_u64(2)).unwrap();
        assert!((est - 1.0).abs() < 1e-9);
    }

    #[test]
    fn power_iteration_is_monotone() {
        let mut rng = Rng::seed_from_u64(5);
        let w = Tensor::matrix(5, 4, rng.normal_vec(20, 1.0)).unwrap();
        let start = unit_start(4, &mut rng);
        let mut last = 0.0;
        for iters in 1..20 {
            let mut v = start.clone();
            let s = power_iteration_warm(&w, &mut v, iters).unwrap();
            assert!(s >= last - 1e-12, "iters {iters}: {s} < {last}");
            last = s;
        }
    }

    #[test]
    fn power_iteration_rejects_vectors() {
        let v = Tensor::vector(vec![1.0, 2.0]).unwrap();
        assert!(matches!(
            power_iteration(&v, 3, &mut Rng::seed_from_u64(0)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn bjorck_fixed_points() {
        let id = Tensor::identity(3);
        assert_eq!(bjorck_orthonormalize(&id, &BjorckConfig::default()).unwrap(), id);
        let p = Tensor::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).unwrap();
        assert_eq!(bjorck_orthonormalize(&p, &BjorckConfig::default()).unwrap(), p);
    }

    #[test]
    fn bjorck_rejects_non_finite_and_diverges_when_unscaled() {
        let bad = Tensor::from_parts(vec![1, 2], vec![f64::INFINITY, 0.0]);
        assert!(matches!(
            bjorck_orthonormalize(&bad, &BjorckConfig::default()),
            Err(Error::NonFinite(_))
        ));
        let big = Tensor::from_rows(&[&[3.0, 0.0], &[0.0, 3.0]]).unwrap();
        assert!(matches!(
            bjorck_orthonormalize(&big, &BjorckConfig::default()),
            Err(Error::Divergence { .. })
        ));
    }

    #[test]
    fn wide_and_tall_orthonormalize_small_side() {
        let mut rng = Rng::seed_from_u64(11);
        for (r, c) in [(3, 7), (7, 3), (5, 5)] {
            let w = Tensor::matrix(r, c, rng.normal_vec(r * c, 1.0)).unwrap();
            let mut v = unit_start(c, &mut rng);
            let q = project_weight(&w, &mut v, &ProjectionConfig::for_init()).unwrap();
            assert!(orthogonality_defect(&q).unwrap() < 1e-9, "{r}x{c}");
            let s = power_iteration(&q, 100, &mut rng).unwrap();
            assert!((s - 1.0).abs() < 1e-9);
        }
    }
}
