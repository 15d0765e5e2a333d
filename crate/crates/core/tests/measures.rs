//! Entropy decomposition identities and invariants.

use proptest::prelude::*;
use uqnet_core::inference::{ensemble_predictions, Ensemble, PredictionSamples};
use uqnet_core::measures::{classify, entropy, expected_entropy, mutual_information, predictive_entropy, scores};
use uqnet_core::nn::{build_variant, ArchConfig, ParamSet, Variant};
use uqnet_core::par::Exec;
use uqnet_core::rng;
use uqnet_core::Tensor;

fn samples(t: usize, n: usize, k: usize, data: Vec<f64>) -> PredictionSamples {
    PredictionSamples::new(t, n, k, data, "test").unwrap()
}

#[test]
fn identities() {
    let u = samples(1, 1, 4, vec![0.25; 4]);
    assert!((predictive_entropy(&u)[0] - 4f64.ln()).abs() < 1e-9);
    let h = samples(1, 1, 4, vec![0.0, 1.0, 0.0, 0.0]);
    assert_eq!(predictive_entropy(&h)[0], 0.0);
    let d = samples(2, 1, 2, vec![1.0, 0.0, 0.0, 1.0]);
    let s = scores(&d);
    assert!((s.predictive_entropy[0] - 2f64.ln()).abs() < 1e-9);
    assert!(s.expected_entropy[0].abs() < 1e-9);
    assert!((s.mutual_information[0] - 2f64.ln()).abs() < 1e-9);
}

#[test]
fn argmax_ties_go_to_lowest_class() {
    let s = samples(2, 1, 3, vec![0.4, 0.4, 0.2, 0.4, 0.4, 0.2]);
    assert_eq!(classify(&s), vec![0]);
}

/// Row-stochastic `[t][n][k]` values, from flat to nearly one-hot.
fn prediction_samples() -> impl Strategy<Value = PredictionSamples> {
    (1usize..=50, 1usize..=4, 2usize..=8, any::<u64>(), 0.1f64..8.0).prop_map(|(t, n, k, seed, sharp)| {
        let mut r = rng::seeded(seed);
        let mut probs = Vec::with_capacity(t * n * k);
        for _ in 0..t * n {
            let w: Vec<f64> = (0..k).map(|_| (sharp * rng::normal(&mut r)).exp()).collect();
            let z: f64 = w.iter().sum();
            probs.extend(w.iter().map(|v| v / z));
        }
        PredictionSamples::new(t, n, k, probs, "random").unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn jensen_gap_is_non_negative(s in prediction_samples()) {
        let pe = predictive_entropy(&s);
        let ee = expected_entropy(&s);
        let mi = mutual_information(&s);
        for i in 0..s.trials() {
            prop_assert!(ee[i] <= pe[i] + 1e-9);
            prop_assert!(mi[i] >= -1e-12);
            prop_assert!(pe[i] <= (s.classes() as f64).ln() + 1e-9);
        }
    }

    #[test]
    fn entropy_is_permutation_invariant(s in prediction_samples(), shift in 0usize..8) {
        let row = s.row(0, 0).to_vec();
        let mut rot = row.clone();
        rot.rotate_left(shift % row.len());
        prop_assert!((entropy(&row) - entropy(&rot)).abs() < 1e-12);
    }
}

#[test]
fn single_pass_collapses_exactly() {
    let mut r = rng::seeded(3);
    for _ in 0..200 {
        let k = 2 + (rng::uniform(&mut r) * 6.0) as usize;
        let n = 5;
        let mut probs = Vec::new();
        for _ in 0..n {
            let w: Vec<f64> = (0..k).map(|_| rng::uniform(&mut r)).collect();
            let z: f64 = w.iter().sum();
            probs.extend(w.iter().map(|v| v / z));
        }
        let s = scores(&samples(1, n, k, probs));
        assert_eq!(s.predictive_entropy, s.expected_entropy);
        assert!(s.mutual_information.iter().all(|&m| m == 0.0));
    }
}

#[test]
fn ensemble_mean_is_member_average() {
    let arch = ArchConfig {
        temporal_filters: 3,
        temporal_kernel: 5,
        spatial_filters: 3,
        pool_size: 8,
        pool_stride: 4,
        ..Default::default()
    };
    let net = build_variant(Variant::EnsembleMember, 3, 40, 4, &arch).unwrap();
    let members: Vec<_> = (0..4).map(|s| ParamSet::<f32>::init(&net, &mut rng::seeded(s)).unwrap()).collect();
    let ens = Ensemble::new(net.clone(), members.clone(), (0..4).collect()).unwrap();
    let mut r = rng::seeded(9);
    let x = Tensor::from_fn(&[6, 3, 40], |_| rng::normal(&mut r) as f32);
    let s = ensemble_predictions(&ens, &x, Exec::Sequential).unwrap();
    assert_eq!(s.passes(), 4);
    let rows: Vec<Tensor<f32>> = members
        .iter()
        .map(|p| uqnet_core::nn::forward(&net, p, &x, uqnet_core::nn::ForwardMode::Point, None).unwrap().0)
        .collect();
    for n in 0..6 {
        let mean = s.mean_probs(n);
        for (c, m) in mean.iter().enumerate() {
            let manual = rows.iter().map(|y| y.data()[n * 4 + c] as f64).sum::<f64>() / 4.0;
            assert!((m - manual).abs() < 1e-12);
        }
    }
    let par = ensemble_predictions(&ens, &x, Exec::Parallel).unwrap();
    assert_eq!(par, s);
}
