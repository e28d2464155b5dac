mod support;

use otxai_core::attribution::{boundary_point, integrated_gradients, saliency, smoothgrad_signed};
use otxai_core::metrics::{deletion_curve, insertion_curve, mu_fidelity, robustness_sr, AttackConfig, Features};
use otxai_core::model::{Dense, Layer};
use otxai_core::stats::spearman;
use otxai_core::tensor::norm;
use otxai_core::{LipNet, Rng, Score, Tensor};
use proptest::prelude::*;
use support::nets;

fn projected_net(seed: u64, d: usize, q: usize) -> LipNet {
    let mut rng = Rng::seed_from_u64(seed);
    let mut net = nets::random_net(d, 2, q, true, true, &mut rng);
    net.project_with(&otxai_core::linalg::ProjectionConfig::for_init())
        .unwrap();
    net
}

fn point(seed: u64, d: usize, scale: f64) -> Vec<f64> {
    Rng::seed_from_u64(seed).normal_vec(d, scale)
}

/// Average ranks by direct counting.
fn brute_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&xi| {
            let below = x.iter().filter(|&&xj| xj < xi).count() as f64;
            let ties = x.iter().filter(|&&xj| xj == xi).count() as f64;
            below + (ties + 1.0) / 2.0
        })
        .collect()
}

fn brute_spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (brute_ranks(a), brute_ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma) * (x - ma)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb) * (y - mb)).sum();
    cov / (va * vb).sqrt()
}

fn linear(w: &[f64], b: f64) -> LipNet {
    let d = Dense::new(
        Tensor::matrix(1, w.len(), w.to_vec()).unwrap(),
        Tensor::vector(vec![b]).unwrap(),
    )
    .unwrap();
    LipNet::new(w.len(), vec![Layer::PlainDense(d)]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn projected_nets_are_lipschitz(seed in any::<u64>(), d in 1usize..6, q in 1usize..4) {
        let net = projected_net(seed, d, q);
        let x = point(seed ^ 1, d, 2.0);
        let z = point(seed ^ 2, d, 2.0);
        let (fx, fz) = (net.forward_batch(&x).unwrap(), net.forward_batch(&z).unwrap());
        let dist: f64 = x.iter().zip(&z).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        for k in 0..q {
            prop_assert!((fx[k] - fz[k]).abs() <= dist * (1.0 + 1e-6));
        }
    }

    #[test]
    fn saliency_norm_is_bounded(seed in any::<u64>(), d in 1usize..6) {
        let net = projected_net(seed, d, 1);
        let s = saliency(&net, &point(seed ^ 3, d, 1.5), Score::Output(0)).unwrap();
        prop_assert!(s.values.norm_l2() <= 1.0 + 1e-5);
    }

    #[test]
    fn boundary_step_identity(seed in any::<u64>(), d in 1usize..6) {
        let mut rng = Rng::seed_from_u64(seed);
        let net = nets::random_net(d, 2, 1, seed % 2 == 0, false, &mut rng);
        let x = point(seed ^ 4, d, 1.0);
        if let Ok(p) = boundary_point(&net, &x, Score::Output(0)) {
            let moved: Vec<f64> = p.origin.iter().zip(&p.endpoint).map(|(a, b)| a - b).collect();
            let expected = p.value.abs() * norm(&p.direction);
            prop_assert!((norm(&moved) - expected).abs() <= 1e-12 * (1.0 + expected));
        }
    }

    #[test]
    fn integrated_gradients_completeness_refines(seed in any::<u64>(), d in 1usize..6) {
        let net = projected_net(seed, d, 1);
        let x = point(seed ^ 5, d, 1.0);
        let base = vec![0.0; d];
        let delta = net.forward_batch(&x).unwrap()[0] - net.forward_batch(&base).unwrap()[0];
        let gap = |n| {
            let ig = integrated_gradients(&net, &x, &base, Score::Output(0), n).unwrap();
            (ig.data().iter().sum::<f64>() - delta).abs()
        };
        let (coarse, fine) = (gap(50), gap(3200));
        prop_assert!(fine <= coarse + 1e-12);
        prop_assert!(fine <= 1e-2 * norm(&x) + 1e-12);
    }

    #[test]
    fn smoothgrad_tends_to_gradient(seed in any::<u64>(), d in 1usize..6) {
        let net = projected_net(seed, d, 1);
        let x = point(seed ^ 6, d, 1.0);
        let (_, g) = net.score_gradient(&x, Score::Output(0)).unwrap();
        let s = smoothgrad_signed(&net, &x, Score::Output(0), 20, 1e-10, &mut Rng::seed_from_u64(seed)).unwrap();
        for (a, b) in g.iter().zip(&s) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn mu_fidelity_ignores_positive_scale(seed in any::<u64>(), c in 0.01f64..100.0) {
        let net = projected_net(seed, 6, 1);
        let x = point(seed ^ 7, 6, 1.0);
        let a = point(seed ^ 8, 6, 1.0);
        let scaled: Vec<f64> = a.iter().map(|v| c * v).collect();
        let f = Features::native(6);
        let run = |attr: &[f64]| mu_fidelity(&net, &x, attr, &[0.0; 6], Score::Output(0), &f, 0.5, 16, &mut Rng::seed_from_u64(seed));
        match (run(&a), run(&scaled)) {
            (Ok(u), Ok(v)) => prop_assert!((u - v).abs() <= 1e-9),
            (Err(_), Err(_)) => {}
            other => prop_assert!(false, "{other:?}"),
        }
    }

    #[test]
    fn spearman_matches_brute_force(a in prop::collection::vec(0u8..4, 2..9), b_seed in any::<u64>()) {
        let a: Vec<f64> = a.into_iter().map(f64::from).collect();
        let mut rng = Rng::seed_from_u64(b_seed);
        let b: Vec<f64> = (0..a.len()).map(|_| rng.below(4) as f64).collect();
        let brute = brute_spearman(&a, &b);
        match spearman(&a, &b) {
            Ok(r) => prop_assert!((r - brute).abs() <= 1e-12),
            Err(_) => prop_assert!(brute.is_nan()),
        }
    }

    #[test]
    fn robustness_is_monotone_in_budget(seed in any::<u64>(), d in 2usize..7) {
        let mut rng = Rng::seed_from_u64(seed);
        let w = rng.normal_vec(d, 1.0);
        let net = linear(&w, rng.normal());
        let x = rng.normal_vec(d, 1.0);
        let attr = rng.normal_vec(d, 1.0);
        let fr: Vec<f64> = (1..=d).map(|k| k as f64 / d as f64).collect();
        let c = robustness_sr(&net, &x, &attr, &Features::native(d), &fr, &AttackConfig::default()).unwrap();
        for pair in c.distances.windows(2) {
            prop_assert!(pair[1] <= pair[0] * (1.0 + 1e-9));
        }
    }

    #[test]
    fn deletion_and_insertion_share_endpoints(seed in any::<u64>(), steps in 1usize..12) {
        let net = projected_net(seed, 5, 1);
        let x = point(seed ^ 9, 5, 1.0);
        let attr = point(seed ^ 10, 5, 1.0);
        let base = point(seed ^ 11, 5, 0.3);
        let f = Features::native(5);
        let del = deletion_curve(&net, &x, &attr, &base, Score::Output(0), &f, steps).unwrap();
        let ins = insertion_curve(&net, &x, &attr, &base, Score::Output(0), &f, steps).unwrap();
        let fx = net.forward_batch(&x).unwrap()[0];
        let fb = net.forward_batch(&base).unwrap()[0];
        prop_assert_eq!(del[0], fx);
        prop_assert_eq!(*del.last().unwrap(), fb);
        prop_assert_eq!(ins[0], fb);
        prop_assert_eq!(*ins.last().unwrap(), fx);
    }

    #[test]
    fn tensor_ops_keep_invariants(r in 1usize..5, k in 1usize..5, c in 1usize..5, seed in any::<u64>()) {
        let mut rng = Rng::seed_from_u64(seed);
        let a = Tensor::matrix(r, k, rng.normal_vec(r * k, 1.0)).unwrap();
        let b = Tensor::matrix(k, c, rng.normal_vec(k * c, 1.0)).unwrap();
        let p = a.matmul(&b).unwrap();
        prop_assert_eq!(p.shape(), &[r, c]);
        prop_assert!(p.data().iter().all(|v| v.is_finite()));
        let t = p.transpose().unwrap().transpose().unwrap();
        prop_assert_eq!(&t, &p);
        prop_assert_eq!(a.add(&a).unwrap(), a.scale(2.0).unwrap());
    }

    #[test]
    fn rng_streams_reproduce(seed in any::<u64>(), stream in any::<u64>()) {
        let mut a = Rng::derive(seed, stream);
        let mut b = Rng::derive(seed, stream);
        for _ in 0..16 {
            prop_assert_eq!(a.next_u64(), b.next_u64());
        }
    }
}
