//! Cyclic Jacobi eigensolver for symmetric matrices and the SVD quantities
//! built on it. Deliberately naive and independent of the library kernels.

/// Eigenvalues (ascending) and row-major eigenvectors as columns of `v`,
/// with `a = v · diag(λ) · vᵀ`.
pub fn sym_eigen(a: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(a.len(), n * n);
    let mut a = a.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum();
        let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().max(1e-300);
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k * n + p], a[k * n + q]);
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p * n + k], a[q * n + k]);
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[k * n + p], v[k * n + q]);
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i * n + i].total_cmp(&a[j * n + j]));
    let vals = order.iter().map(|&i| a[i * n + i]).collect();
    let mut vecs = vec![0.0; n * n];
    for (newc, &oldc) in order.iter().enumerate() {
        for k in 0..n {
            vecs[k * n + newc] = v[k * n + oldc];
        }
    }
    (vals, vecs)
}

fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            for j in 0..n {
                c[i * n + j] += a[i * k + p] * b[p * n + j];
            }
        }
    }
    c
}

fn transpose(a: &[f64], m: usize, n: usize) -> Vec<f64> {
    let mut t = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            t[j * m + i] = a[i * n + j];
        }
    }
    t
}

/// Gram matrix over the smaller dimension and its size.
fn small_gram(w: &[f64], rows: usize, cols: usize) -> (Vec<f64>, usize) {
    let wt = transpose(w, rows, cols);
    if rows <= cols {
        (matmul(w, &wt, rows, cols, rows), rows)
    } else {
        (matmul(&wt, w, cols, rows, cols), cols)
    }
}

/// Singular values in descending order (`min(rows, cols)` of them).
pub fn singular_values(w: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let (g, n) = small_gram(w, rows, cols);
    let (vals, _) = sym_eigen(&g, n);
    vals.iter().rev().map(|l| l.max(0.0).sqrt()).collect()
}

pub fn spectral_norm(w: &[f64], rows: usize, cols: usize) -> f64 {
    singular_values(w, rows, cols)[0]
}

/// `g^{-1/2}` of a symmetric positive definite matrix.
fn inv_sqrt(g: &[f64], n: usize) -> Vec<f64> {
    let (vals, v) = sym_eigen(g, n);
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = (0..n).map(|k| v[i * n + k] * v[j * n + k] / vals[k].sqrt()).sum();
        }
    }
    out
}

/// Polar factor `U Vᵀ` of a full-rank `rows x cols` matrix:
/// `W (WᵀW)^{-1/2}` when tall, `(WWᵀ)^{-1/2} W` when wide.
pub fn polar(w: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let (g, n) = small_gram(w, rows, cols);
    let s = inv_sqrt(&g, n);
    if rows <= cols {
        matmul(&s, w, rows, rows, cols)
    } else {
        matmul(w, &s, rows, cols, cols)
    }
}
