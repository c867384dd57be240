use ibw_core::nuisance::{
    estimate_mi, synthetic_correlated_gaussian, train_discriminator, true_gaussian_mi, DiscConfig, Pairs,
};
use ibw_core::{Rng, Tensor};

fn config() -> DiscConfig {
    DiscConfig {
        hidden: vec![64, 64],
        epochs: 20,
        batch_size: 256,
        learning_rate: 0.01,
        momentum: 0.9,
        holdout: 0.2,
    }
}

fn gaussian(n: usize, d: usize, rng: &mut Rng) -> Tensor {
    Tensor::new(vec![n, d], (0..n * d).map(|_| rng.standard_normal()).collect()).unwrap()
}

#[test]
fn independent_pairs_are_indistinguishable() {
    let mut rng = Rng::new(1);
    let n = 10_000;
    let pairs = Pairs::new(gaussian(n, 2, &mut rng), gaussian(n, 3, &mut rng)).unwrap();
    let (est, disc) = estimate_mi(&pairs, &config(), &mut rng).unwrap();
    assert!((disc.holdout_accuracy - 0.5).abs() <= 0.03, "acc {}", disc.holdout_accuracy);
    assert!(disc.holdout_loss <= 2f64.ln() + 0.02, "loss {}", disc.holdout_loss);
    assert!(est.value.abs() <= 0.05, "estimate {}", est.value);
    assert_eq!(est.n_samples, 2000);
}

#[test]
fn identical_pairs_are_separable() {
    let mut rng = Rng::new(2);
    let n = 10_000;
    let z = gaussian(n, 4, &mut rng);
    let pairs = Pairs::new(z.clone(), z).unwrap();
    let (est, disc) = estimate_mi(&pairs, &config(), &mut rng).unwrap();
    assert!(disc.holdout_accuracy >= 0.95, "acc {}", disc.holdout_accuracy);
    assert!(est.value > 1.0, "estimate {}", est.value);
}

#[test]
fn explicit_training_sets_follow_the_class_convention() {
    let mut rng = Rng::new(3);
    let n = 4000;
    let z = gaussian(n, 4, &mut rng);
    let joint = Pairs::new(z.clone(), z).unwrap();
    let train_j = joint.select(&(0..3000).collect::<Vec<_>>());
    let hold_j = joint.select(&(3000..4000).collect::<Vec<_>>());
    let train_p = train_j.permuted(&mut rng);
    let hold_p = hold_j.permuted(&mut rng);
    let disc = train_discriminator(&train_j, &train_p, &hold_j, &hold_p, &config(), &mut rng).unwrap();
    let (joint_ratio, _) = disc.log_ratio(&hold_j).unwrap();
    let (prod_ratio, _) = disc.log_ratio(&hold_p).unwrap();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!(mean(&joint_ratio) > 0.0 && mean(&prod_ratio) < 0.0);
    let (loss, acc) = disc.score(&hold_j, &hold_p).unwrap();
    assert_eq!((loss, acc), (disc.holdout_loss, disc.holdout_accuracy));
}

#[test]
fn gaussian_estimates_track_the_exact_value() {
    let mut prev = f64::NEG_INFINITY;
    for (i, rho) in [0.0, 0.5, 0.8, 0.95].into_iter().enumerate() {
        let mut rng = Rng::new(10 + i as u64);
        let pairs = synthetic_correlated_gaussian(rho, 20_000, &mut rng).unwrap();
        let (est, _) = estimate_mi(&pairs, &config(), &mut rng).unwrap();
        let exact = -0.5 * (1.0 - rho * rho).ln();
        assert_eq!(true_gaussian_mi(rho).unwrap(), exact);
        if rho <= 0.8 {
            assert!((est.value - exact).abs() <= 0.1, "rho {rho}: {} vs {exact}", est.value);
        }
        assert!(est.value > prev, "rho {rho}: {} after {prev}", est.value);
        prev = est.value;
    }
}
