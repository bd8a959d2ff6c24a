//! Full conditionals of the Gibbs kernel against direct computation.

use mbmm::dataset::BinaryDataset;
use mbmm::model::{MixtureState, Priors};
use mbmm::oracle::{generate_synthetic, SyntheticSpec};
use mbmm::sampler::stream_rng;

fn synthetic(n: usize, seed: u64) -> (BinaryDataset, Vec<usize>) {
    generate_synthetic(&SyntheticSpec {
        n,
        pi_true: vec![0.5, 0.3, 0.2],
        theta_true: vec![vec![0.8, 0.2, 0.6], vec![0.3, 0.6, 0.1], vec![0.5, 0.9, 0.9]],
        missing_rate: 0.15,
        seed,
    })
    .unwrap()
}

#[test]
fn allocation_conditional_matches_direct_normalization() {
    let (data, z) = synthetic(30, 4);
    let pi = vec![0.5, 0.3, 0.2];
    let theta = vec![vec![0.8, 0.2, 0.6], vec![0.3, 0.6, 0.1], vec![0.5, 0.9, 0.9]];
    let state = MixtureState::new(&data, z, pi.clone(), theta.clone(), false).unwrap();
    for heat in [1.0, 0.6] {
        for i in 0..data.n() {
            let direct: Vec<f64> = (0..3)
                .map(|k| {
                    let dens: f64 = (0..data.p())
                        .map(|j| match data.get(i, j) {
                            Some(1) => theta[k][j],
                            Some(_) => 1.0 - theta[k][j],
                            None => 1.0,
                        })
                        .product();
                    pi[k] * dens.powf(heat)
                })
                .collect();
            let total: f64 = direct.iter().sum();
            let got = state.allocation_probabilities(i, heat);
            for k in 0..3 {
                assert!((got[k] - direct[k] / total).abs() < 1e-12, "unit {i} heat {heat}");
            }
        }
    }
}

/// Sample means of `draws` Gibbs updates against Dirichlet/Beta means; the
/// largest deviation in Monte-Carlo standard errors.
fn moment_deviation(heat: f64, draws: usize, seed: u64) -> f64 {
    let (data, z) = synthetic(40, seed);
    let priors = Priors {
        gamma: 0.7,
        alpha: 1.5,
        beta: 0.5,
        ..Priors::with_k_max(5)
    };
    let mut state = MixtureState::new(&data, z, vec![1.0 / 3.0; 3], vec![vec![0.5; 3]; 3], false).unwrap();
    let mut rng = stream_rng(seed, 1);
    let (mut spi, mut sth) = (vec![0.0; 3], vec![vec![0.0; 3]; 3]);
    for _ in 0..draws {
        state.update_pi(&priors, &mut rng);
        state.update_theta(&priors, heat, &mut rng);
        for k in 0..3 {
            spi[k] += state.pi()[k];
            for j in 0..3 {
                sth[k][j] += state.theta()[k][j];
            }
        }
    }
    let m = draws as f64;
    let a0 = 3.0 * 0.7 + data.n() as f64;
    let mut worst: f64 = 0.0;
    for k in 0..3 {
        let a = 0.7 + state.counts()[k] as f64;
        let mean = a / a0;
        let se = (mean * (1.0 - mean) / (a0 + 1.0) / m).sqrt();
        worst = worst.max((spi[k] / m - mean).abs() / se);
        for j in 0..3 {
            let s = f64::from(state.successes()[k][j]);
            let t = f64::from(state.trials()[k][j]);
            let (a, b) = (1.5 + heat * s, 0.5 + heat * (t - s));
            let mean = a / (a + b);
            let se = (a * b / ((a + b).powi(2) * (a + b + 1.0)) / m).sqrt();
            worst = worst.max((sth[k][j] / m - mean).abs() / se);
        }
    }
    worst
}

#[test]
fn conjugate_moments_untempered() {
    let dev = moment_deviation(1.0, 50_000, 21);
    assert!(dev <= 3.0, "{dev} SE");
}

#[test]
fn conjugate_moments_tempered() {
    let dev = moment_deviation(0.5, 50_000, 22);
    assert!(dev <= 3.0, "{dev} SE");
}

#[test]
fn imputation_follows_the_tempered_conditional() {
    let data = BinaryDataset::from_rows(&[vec![None, Some(1)], vec![Some(1), Some(0)]]).unwrap();
    let theta = vec![vec![0.8, 0.5]];
    let mut state = MixtureState::new(&data, vec![0, 0], vec![1.0], theta, true).unwrap();
    let mut rng = stream_rng(3, 0);
    let heat: f64 = 0.5;
    let draws = 40_000;
    let mut ones = 0;
    for _ in 0..draws {
        state.impute_missing(heat, &mut rng);
        ones += usize::from(state.value(0, 0));
    }
    let expect = 0.8f64.powf(heat) / (0.8f64.powf(heat) + 0.2f64.powf(heat));
    let se = (expect * (1.0 - expect) / draws as f64).sqrt();
    assert!((ones as f64 / draws as f64 - expect).abs() < 4.0 * se);
}
