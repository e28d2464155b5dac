mod support;

use otxai_core::losses::LossKind;
use otxai_core::{Rng, Score};
use support::{fd, nets};

#[test]
fn loss_gradients_match_finite_differences() {
    let mut rng = Rng::seed_from_u64(2024);
    for case in 0..20 {
        let d = 1 + rng.below(6);
        let q = if case % 2 == 0 { 1 } else { 3 };
        let net = nets::random_net(d, case % 3, q, case % 4 != 3, case % 5 != 0, &mut rng);
        let labels = nets::cycling_labels(6, q);
        let x = rng.normal_vec(6 * d, 1.0);
        for loss in nets::losses_for(q) {
            let err = fd::worst_error(&net, &x, &labels, &loss);
            assert!(err <= 1e-4, "case {case}, {loss:?}: relative error {err}");
        }
    }
}

#[test]
fn projected_net_gradients_match() {
    let mut rng = Rng::seed_from_u64(7);
    let mut net = nets::random_net(4, 2, 3, true, true, &mut rng);
    net.project().unwrap();
    let labels = nets::cycling_labels(9, 3);
    let x = rng.normal_vec(9 * 4, 1.0);
    let err = fd::worst_error(&net, &x, &labels, &LossKind::CrossEntropy);
    assert!(err <= 1e-4);
}

#[test]
fn score_gradient_matches_central_difference() {
    let mut rng = Rng::seed_from_u64(9);
    let net = nets::random_net(5, 2, 3, true, false, &mut rng);
    let x = rng.normal_vec(5, 1.0);
    let score = Score::Difference {
        positive: 2,
        negative: 0,
    };
    let (_, g) = net.score_gradient(&x, score).unwrap();
    let f = |z: &[f64]| score.eval(&net.forward_batch(z).unwrap());
    let numeric: Vec<f64> = (0..5)
        .map(|k| {
            let (mut p, mut m) = (x.clone(), x.clone());
            p[k] += fd::H;
            m[k] -= fd::H;
            (f(&p) - f(&m)) / (2.0 * fd::H)
        })
        .collect();
    assert!(fd::rel_err(&g, &numeric) <= 1e-6);
}
