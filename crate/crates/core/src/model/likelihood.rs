use statrs::function::beta::ln_beta;
use statrs::function::gamma::ln_gamma;

use crate::dataset::BinaryDataset;
use crate::error::{Error, Result};
use crate::model::{log_sum_exp, Priors};

pub(crate) fn check_parameters(data: &BinaryDataset, pi: &[f64], theta: &[Vec<f64>]) -> Result<()> {
    if pi.len() != theta.len() || pi.is_empty() {
        return Err(Error::Domain(format!(
            "pi has {} components, theta has {}",
            pi.len(),
            theta.len()
        )));
    }
    if pi.iter().any(|w| !(0.0..=1.0).contains(w)) {
        return Err(Error::Domain("mixture weight outside [0, 1]".into()));
    }
    for col in theta {
        if col.len() != data.p() {
            return Err(Error::Domain("theta row length differs from p".into()));
        }
        if let Some(t) = col.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
            return Err(Error::Domain(format!("theta entry {t} outside (0, 1)")));
        }
    }
    Ok(())
}

/// log of prod_j theta^x (1 - theta)^(1 - x) over the observed cells of unit `i`.
pub(crate) fn log_component_density(data: &BinaryDataset, i: usize, theta_k: &[f64]) -> f64 {
    data.row(i)
        .iter()
        .zip(data.observed_row(i))
        .zip(theta_k)
        .filter(|((_, obs), _)| **obs)
        .map(|((x, _), t)| if *x == 1 { t.ln() } else { (1.0 - t).ln() })
        .sum()
}

/// Observed-data log-likelihood of the mixture; unobserved cells drop out of
/// the per-unit product.
pub fn log_observed_likelihood(data: &BinaryDataset, pi: &[f64], theta: &[Vec<f64>]) -> Result<f64> {
    check_parameters(data, pi, theta)?;
    let log_pi: Vec<f64> = pi.iter().map(|w| w.ln()).collect();
    let mut terms = vec![0.0; pi.len()];
    let mut total = 0.0;
    for i in 0..data.n() {
        for (k, term) in terms.iter_mut().enumerate() {
            *term = log_pi[k] + log_component_density(data, i, &theta[k]);
        }
        total += log_sum_exp(&terms);
    }
    if total.is_nan() {
        return Err(Error::Domain("observed log-likelihood is NaN".into()));
    }
    Ok(total)
}

/// Complete-data log-likelihood for allocations `z` (0-based), observed cells only.
pub fn log_complete_likelihood(
    data: &BinaryDataset,
    z: &[usize],
    pi: &[f64],
    theta: &[Vec<f64>],
) -> Result<f64> {
    check_parameters(data, pi, theta)?;
    if z.len() != data.n() {
        return Err(Error::Domain("allocation vector length differs from n".into()));
    }
    let mut total = 0.0;
    for (i, &k) in z.iter().enumerate() {
        let w = *pi
            .get(k)
            .ok_or_else(|| Error::Domain(format!("allocation {k} out of range")))?;
        if w <= 0.0 {
            return Err(Error::Domain(format!(
                "component {k} is occupied but has zero weight"
            )));
        }
        total += w.ln() + log_component_density(data, i, &theta[k]);
    }
    Ok(total)
}

/// log p(z, K, x) with the weights and Bernoulli probabilities integrated out
/// under their conjugate priors. Only observed cells contribute.
pub fn log_collapsed_allocation_posterior(
    data: &BinaryDataset,
    z: &[usize],
    k: usize,
    priors: &Priors,
) -> Result<f64> {
    if k == 0 || k > priors.k_max {
        return Err(Error::Domain(format!("K = {k} outside 1..={}", priors.k_max)));
    }
    if z.len() != data.n() {
        return Err(Error::Domain("allocation vector length differs from n".into()));
    }
    let p = data.p();
    let mut counts = vec![0usize; k];
    let mut ones = vec![0u32; k * p];
    let mut trials = vec![0u32; k * p];
    for (i, &c) in z.iter().enumerate() {
        if c >= k {
            return Err(Error::Domain(format!("allocation {c} out of range for K = {k}")));
        }
        counts[c] += 1;
        for (j, (x, obs)) in data.row(i).iter().zip(data.observed_row(i)).enumerate() {
            if *obs {
                trials[c * p + j] += 1;
                ones[c * p + j] += u32::from(*x);
            }
        }
    }
    Ok(log_allocation_terms(&counts, &ones, &trials, priors, data.n()))
}

/// The collapsed posterior from sufficient statistics (`ones`/`trials` are k×p).
pub(crate) fn log_allocation_terms(
    counts: &[usize],
    ones: &[u32],
    trials: &[u32],
    priors: &Priors,
    n: usize,
) -> f64 {
    let k = counts.len();
    let g = priors.concentration();
    let kg = k as f64 * g;
    let mut lp = priors.log_prior_k(k) + ln_gamma(kg) - ln_gamma(kg + n as f64);
    for &c in counts {
        if c > 0 {
            lp += ln_gamma(g + c as f64) - ln_gamma(g);
        }
    }
    let (a, b) = (priors.alpha, priors.beta);
    let base = ln_beta(a, b);
    for (&s, &t) in ones.iter().zip(trials) {
        if t > 0 {
            lp += ln_beta(a + s as f64, b + (t - s) as f64) - base;
        }
    }
    lp
}
