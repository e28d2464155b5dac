mod support;

use otxai_core::linalg::{
    bjorck_orthonormalize, orthogonality_defect, power_iteration, project_weight, unit_start, BjorckConfig,
    ProjectionConfig,
};
use otxai_core::{Rng, Tensor};
use support::jacobi;

fn random_matrix(rows: usize, cols: usize, rng: &mut Rng) -> Tensor {
    Tensor::matrix(rows, cols, rng.normal_vec(rows * cols, 1.0)).unwrap()
}

#[test]
fn oracle_diagonalizes() {
    let a = [4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 1.0];
    let (vals, v) = jacobi::sym_eigen(&a, 3);
    for k in 0..3 {
        for i in 0..3 {
            let av: f64 = (0..3).map(|j| a[i * 3 + j] * v[j * 3 + k]).sum();
            assert!((av - vals[k] * v[i * 3 + k]).abs() < 1e-12);
        }
    }
    assert_eq!(jacobi::singular_values(&[3.0, 0.0, 0.0, 1.0], 2, 2), vec![3.0, 1.0]);
}

#[test]
fn power_iteration_matches_oracle() {
    let mut rng = Rng::seed_from_u64(11);
    let w = random_matrix(4, 3, &mut rng);
    let est = power_iteration(&w, 200, &mut Rng::seed_from_u64(12)).unwrap();
    let exact = jacobi::spectral_norm(w.data(), 4, 3);
    assert!((est - exact).abs() < 1e-6, "{est} vs {exact}");
}

#[test]
fn bjorck_reaches_polar_factor() {
    let raw = [1.0, 1.0, 0.0, 1.0];
    let sigma = jacobi::spectral_norm(&raw, 2, 2);
    let w = Tensor::matrix(2, 2, raw.iter().map(|v| v / sigma).collect()).unwrap();
    let cfg = BjorckConfig {
        max_iters: 100,
        ..BjorckConfig::default()
    };
    let q = bjorck_orthonormalize(&w, &cfg).unwrap();
    let polar = jacobi::polar(&raw, 2, 2);
    for (a, b) in q.data().iter().zip(&polar) {
        assert!((a - b).abs() < 1e-6, "{:?} vs {polar:?}", q.data());
    }
}

#[test]
fn projected_singular_values_are_unit() {
    let mut rng = Rng::seed_from_u64(5);
    for _ in 0..40 {
        let (r, c) = (1 + rng.below(8), 1 + rng.below(8));
        let w = random_matrix(r, c, &mut rng);
        let mut v = unit_start(c, &mut rng);
        let q = project_weight(&w, &mut v, &ProjectionConfig::for_init()).unwrap();
        for s in jacobi::singular_values(q.data(), r, c) {
            assert!((s - 1.0).abs() <= 1e-5, "{r}x{c}: σ = {s}");
        }
        assert!(orthogonality_defect(&q).unwrap() <= 1e-6);
        let est = power_iteration(&q, 50, &mut rng).unwrap();
        assert!((est - 1.0).abs() <= 1e-5);
        let polar = jacobi::polar(w.data(), r, c);
        let gap = q
            .data()
            .iter()
            .zip(&polar)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(gap <= 1e-6, "{r}x{c}: polar gap {gap}");
    }
}

#[test]
fn default_projection_handles_training_drift() {
    // A projected weight nudged the way one optimizer step would.
    let mut rng = Rng::seed_from_u64(8);
    for _ in 0..20 {
        let (r, c) = (2 + rng.below(15), 2 + rng.below(15));
        let w = random_matrix(r, c, &mut rng);
        let mut v = unit_start(c, &mut rng);
        let q = project_weight(&w, &mut v, &ProjectionConfig::for_init()).unwrap();
        let drift = Tensor::matrix(r, c, rng.normal_vec(r * c, 1e-3)).unwrap();
        let moved = q.add(&drift).unwrap();
        let p = project_weight(&moved, &mut v, &ProjectionConfig::default()).unwrap();
        assert!(orthogonality_defect(&p).unwrap() <= 1e-6);
    }
}
