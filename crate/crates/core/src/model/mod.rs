//! Probability kernel of the multivariate Bernoulli mixture: likelihoods,
//! the collapsed allocation posterior and the conjugate Gibbs updates.

mod likelihood;
mod priors;
mod state;

pub use likelihood::{
    log_collapsed_allocation_posterior, log_complete_likelihood, log_observed_likelihood,
};
pub use priors::{DirichletKind, KPrior, Priors};
pub use state::MixtureState;

use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma};

/// Bernoulli probabilities are kept inside `[THETA_FLOOR, 1 - THETA_FLOOR]`.
pub const THETA_FLOOR: f64 = 1e-12;

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Normalizes log-weights in place into probabilities.
pub(crate) fn normalize_log_weights(ws: &mut [f64]) {
    let lse = log_sum_exp(ws);
    for w in ws.iter_mut() {
        *w = (*w - lse).exp();
    }
}

/// Draws an index with probability proportional to `exp(log_weights)`.
pub fn sample_log_categorical<R: Rng + ?Sized>(log_weights: &[f64], rng: &mut R) -> usize {
    let mut probs = log_weights.to_vec();
    normalize_log_weights(&mut probs);
    sample_categorical(&probs, rng)
}

/// Draws an index from normalized probabilities.
pub(crate) fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    // u landed in the rounding slack above the cumulative sum
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(probs.len() - 1)
}

pub(crate) fn clamp_theta(t: f64) -> f64 {
    t.clamp(THETA_FLOOR, 1.0 - THETA_FLOOR)
}

pub(crate) fn sample_beta<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    let d = Beta::new(a, b).expect("beta parameters are positive");
    d.sample(rng)
}

/// log of a Gamma(shape, 1) draw; uses the `U^(1/shape)` boost for small shapes
/// so the result stays finite where the draw itself would underflow.
fn log_gamma_draw<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    if shape >= 1.0 {
        let g = Gamma::new(shape, 1.0).expect("shape is positive");
        g.sample(rng).ln()
    } else {
        let g = Gamma::new(shape + 1.0, 1.0).expect("shape is positive");
        let u: f64 = 1.0 - rng.random::<f64>();
        g.sample(rng).ln() + u.ln() / shape
    }
}

/// Dirichlet draw with every coordinate strictly positive.
pub(crate) fn sample_dirichlet<R: Rng + ?Sized>(alphas: &[f64], rng: &mut R) -> Vec<f64> {
    let mut logs: Vec<f64> = alphas.iter().map(|&a| log_gamma_draw(a, rng)).collect();
    normalize_log_weights(&mut logs);
    let mut total = 0.0;
    for v in logs.iter_mut() {
        *v = v.max(f64::MIN_POSITIVE);
        total += *v;
    }
    for v in logs.iter_mut() {
        *v /= total;
    }
    logs
}
