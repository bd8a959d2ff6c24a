//! Self-checks run by `mbmm verify`: enumeration oracles, conjugate moment
//! checks, likelihood identities and synthetic recovery.

use std::time::Instant;

use rand::Rng;
use serde::Serialize;

use crate::dataset::BinaryDataset;
use crate::error::Result;
use crate::model::{log_complete_likelihood, log_observed_likelihood, log_sum_exp, MixtureState, Priors};
use crate::oracle::{
    adjusted_rand_index, brute_force_posterior, generate_synthetic, total_variation, SyntheticSpec,
};
use crate::postprocess::{summarize, PostprocessOptions};
use crate::sampler::{heat_schedule, run_mc3, stream_rng, Mc3Config};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    /// Sub-minute subset.
    Quick,
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn timed(name: String, f: impl FnOnce() -> Result<(bool, String)>) -> CheckResult {
    let start = Instant::now();
    let (passed, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
    CheckResult {
        name,
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// A random instance with n in 4..=6, p in 1..=2 and no missing cells.
pub fn tiny_instance(seed: u64) -> BinaryDataset {
    let mut rng = stream_rng(seed, 0);
    let n = rng.random_range(4..=6);
    let p = rng.random_range(1..=2);
    let rows: Vec<Vec<u8>> = (0..n)
        .map(|_| (0..p).map(|_| u8::from(rng.random::<bool>())).collect())
        .collect();
    BinaryDataset::from_bits(&rows).expect("well-formed rows")
}

fn enumeration_check(seed: u64, sweeps: usize) -> Result<(bool, String)> {
    let data = tiny_instance(seed);
    let priors = Priors::with_k_max(3);
    let exact = brute_force_posterior(&data, &priors)?;
    let cfg = Mc3Config {
        n_iterations: sweeps + 1_000,
        burn_in_iterations: 1_000,
        thin: 1,
        seed,
        ..Mc3Config::default()
    };
    let run = run_mc3(&data, &priors, &cfg)?;
    let mut freq = vec![0.0; priors.k_max];
    for d in &run.draws {
        freq[d.k_nonempty - 1] += 1.0 / run.draws.len() as f64;
    }
    let tv = total_variation(&freq, &exact.p_k_nonempty);
    Ok((
        tv <= 0.02,
        format!("n = {}, p = {}, TV = {tv:.4} (limit 0.02)", data.n(), data.p()),
    ))
}

/// Repeated pi/theta Gibbs updates with z held fixed; every coordinate's
/// sample mean must lie within 3 Monte-Carlo standard errors of its
/// Dirichlet or Beta mean.
fn moment_check(draws: usize, seed: u64) -> Result<(bool, String)> {
    let (data, z) = generate_synthetic(&SyntheticSpec {
        n: 40,
        pi_true: vec![0.5, 0.3, 0.2],
        theta_true: vec![vec![0.8, 0.2], vec![0.3, 0.6], vec![0.5, 0.9]],
        missing_rate: 0.0,
        seed,
    })?;
    let priors = Priors {
        gamma: 0.7,
        alpha: 1.5,
        beta: 0.5,
        ..Priors::with_k_max(5)
    };
    let k = 3;
    let mut state = MixtureState::new(&data, z, vec![1.0 / 3.0; 3], vec![vec![0.5; 2]; 3], false)?;
    let mut rng = stream_rng(seed, 1);
    let mut sum_pi = vec![0.0; k];
    let mut sum_theta = vec![vec![0.0; 2]; k];
    for _ in 0..draws {
        state.update_pi(&priors, &mut rng);
        state.update_theta(&priors, 1.0, &mut rng);
        for c in 0..k {
            sum_pi[c] += state.pi()[c];
            for j in 0..2 {
                sum_theta[c][j] += state.theta()[c][j];
            }
        }
    }
    let m = draws as f64;
    let mut worst: f64 = 0.0;
    let total = k as f64 * priors.gamma + data.n() as f64;
    for c in 0..k {
        let a = priors.gamma + state.counts()[c] as f64;
        let mean = a / total;
        let sd = (mean * (1.0 - mean) / (total + 1.0)).sqrt();
        worst = worst.max((sum_pi[c] / m - mean).abs() / (sd / m.sqrt()));
        for j in 0..2 {
            let s = f64::from(state.successes()[c][j]);
            let t = f64::from(state.trials()[c][j]);
            let (a, b) = (priors.alpha + s, priors.beta + t - s);
            let mean = a / (a + b);
            let sd = (a * b / ((a + b).powi(2) * (a + b + 1.0))).sqrt();
            worst = worst.max((sum_theta[c][j] / m - mean).abs() / (sd / m.sqrt()));
        }
    }
    Ok((
        worst <= 3.0,
        format!("{draws} draws, largest deviation {worst:.2} SE (limit 3)"),
    ))
}

/// Summing the complete-data likelihood over every allocation must give the
/// observed-data likelihood.
fn identity_check() -> Result<(bool, String)> {
    let data = BinaryDataset::from_rows(&[
        vec![Some(1), Some(0), None],
        vec![Some(1), Some(1), Some(0)],
        vec![None, Some(0), Some(1)],
        vec![Some(0), Some(0), Some(1)],
        vec![Some(1), None, Some(1)],
    ])?;
    let pi = vec![0.5, 0.3, 0.2];
    let theta = vec![vec![0.9, 0.2, 0.4], vec![0.1, 0.7, 0.3], vec![0.5, 0.5, 0.8]];
    let n = data.n();
    let mut terms = Vec::new();
    for code in 0..3usize.pow(n as u32) {
        let z: Vec<usize> = (0..n).map(|i| code / 3usize.pow(i as u32) % 3).collect();
        terms.push(log_complete_likelihood(&data, &z, &pi, &theta)?);
    }
    let diff = (log_sum_exp(&terms) - log_observed_likelihood(&data, &pi, &theta)?).abs();
    Ok((diff <= 1e-8, format!("|difference| = {diff:.2e} (limit 1e-8)")))
}

fn recovery_check(seed: u64) -> Result<(bool, String)> {
    let spec = SyntheticSpec::benchmark(1_000 + seed);
    let (data, z_true) = generate_synthetic(&spec)?;
    let cfg = Mc3Config {
        seed,
        ..Mc3Config::default()
    };
    let samples = run_mc3(&data, &Priors::default(), &cfg)?;
    let summary = summarize(
        &samples,
        &PostprocessOptions {
            min_profile_fraction: 0.0,
            k_override: None,
        },
    )?;
    let raw = &summary.raw;
    let ari = adjusted_rand_index(&raw.hard_assignment, &z_true);
    let mut dev_truth: f64 = 0.0;
    let mut dev_known: f64 = 0.0;
    if summary.k_map == 3 {
        for c in 0..3 {
            // the true profile sharing most units with estimated profile c
            let mut overlap = [0usize; 3];
            for (h, t) in raw.hard_assignment.iter().zip(&z_true) {
                if *h == c {
                    overlap[*t] += 1;
                }
            }
            let t = (0..3).max_by_key(|&q| overlap[q]).unwrap_or(0);
            let members: Vec<usize> = (0..data.n()).filter(|&i| z_true[i] == t).collect();
            for j in 0..data.p() {
                let ones = members.iter().filter(|&&i| data.row(i)[j] == 1).count() as f64;
                let known = (1.0 + ones) / (2.0 + members.len() as f64);
                dev_truth = dev_truth.max((raw.theta_mean[c][j] - spec.theta_true[t][j]).abs());
                dev_known = dev_known.max((raw.theta_mean[c][j] - known).abs());
            }
        }
    }
    let passed = summary.k_map == 3 && ari >= 0.95 && dev_known <= 0.05;
    Ok((
        passed,
        format!(
            "K_map = {}, ARI = {ari:.3}, max |theta - known-z estimate| = {dev_known:.3}, \
             max |theta - theta_true| = {dev_truth:.3}",
            summary.k_map
        ),
    ))
}

pub fn run_suite(suite: Suite, seed: u64) -> VerifyReport {
    let mut checks = vec![timed("heat schedule".into(), || {
        let h = heat_schedule(4, 0.025)?;
        let expect = [1.0, 0.97561, 0.95238, 0.93023];
        let ok = h.heats().iter().zip(expect).all(|(a, b)| (a - b).abs() < 5e-6);
        Ok((ok, format!("{:?}", h.heats())))
    })];
    checks.push(timed("likelihood identity".into(), identity_check));
    let (instances, sweeps, moments) = match suite {
        Suite::Quick => (2, 40_000, 50_000),
        Suite::Full => (5, 200_000, 50_000),
    };
    checks.push(timed("conjugate moments".into(), || moment_check(moments, seed)));
    for i in 0..instances {
        let s = seed.wrapping_mul(1_000).wrapping_add(i);
        checks.push(timed(format!("enumeration oracle #{}", i + 1), || enumeration_check(s, sweeps)));
    }
    if suite == Suite::Full {
        for r in 0..3 {
            checks.push(timed(format!("synthetic recovery #{}", r + 1), || {
                recovery_check(seed.wrapping_add(r))
            }));
        }
    }
    VerifyReport { checks }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_instances_are_enumerable() {
        for s in 0..20 {
            let d = tiny_instance(s);
            assert!((4..=6).contains(&d.n()) && (1..=2).contains(&d.p()));
        }
    }

    #[test]
    fn identity_and_moments_pass() {
        assert!(identity_check().unwrap().0);
        let (ok, detail) = moment_check(5_000, 3).unwrap();
        assert!(ok, "{detail}");
    }
}
