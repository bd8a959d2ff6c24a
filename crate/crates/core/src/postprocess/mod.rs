//! From raw draws to labeled profiles: K_map, ECR relabeling, posterior
//! means, unit assignment and reclassification of undersized profiles.

mod assignment;
mod ecr;
pub mod export;
mod profiles;

pub use assignment::max_weight_assignment;
pub use ecr::{agreement_matrix, ecr_relabel, mismatches, RelabeledDraw, RelabeledSamples};
pub use profiles::{
    argmax, assign_profiles, posterior_means, reclassify_small, ProfileSummary, Reclassification,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::PosteriorSamples;

/// Modal number of occupied components; the smaller K wins ties.
pub fn infer_k_map(samples: &PosteriorSamples) -> Result<usize> {
    samples
        .k_nonempty_histogram()
        .into_iter()
        .fold(None, |best: Option<(usize, usize)>, (k, c)| match best {
            Some((_, bc)) if bc >= c => best,
            _ => Some((k, c)),
        })
        .map(|(k, _)| k)
        .ok_or_else(|| Error::Validation("no retained draws".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PostprocessOptions {
    /// Profiles with strictly fewer than this fraction of units are dissolved.
    pub min_profile_fraction: f64,
    /// Use this K instead of the posterior mode.
    pub k_override: Option<usize>,
}

impl Default for PostprocessOptions {
    fn default() -> Self {
        Self {
            min_profile_fraction: 0.05,
            k_override: None,
        }
    }
}

/// Everything the post-processing chain produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub k_map: usize,
    pub k_nonempty_histogram: Vec<(usize, usize)>,
    pub relabeled: RelabeledSamples,
    /// K_map profiles ordered by size, before reclassification.
    pub raw: ProfileSummary,
    /// After undersized profiles are dissolved.
    pub reclassified: ProfileSummary,
}

pub fn summarize(samples: &PosteriorSamples, opts: &PostprocessOptions) -> Result<PipelineSummary> {
    let k_map = match opts.k_override {
        Some(k) => k,
        None => infer_k_map(samples)?,
    };
    let relabeled = ecr_relabel(samples, k_map)?;
    let (theta_mean, pi_mean) = posterior_means(&relabeled)?;
    let (assignment_probability, hard_assignment) = assign_profiles(&relabeled)?;
    let mut raw = ProfileSummary {
        k: k_map,
        theta_mean,
        pi_mean,
        assignment_probability,
        hard_assignment,
        reclassification_log: Vec::new(),
    };
    raw.order_by_size();
    let reclassified = reclassify_small(&raw, opts.min_profile_fraction)?;
    Ok(PipelineSummary {
        k_map,
        k_nonempty_histogram: samples.k_nonempty_histogram(),
        relabeled,
        raw,
        reclassified,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::Draw;

    fn with_k(ks: &[(usize, usize)]) -> PosteriorSamples {
        let draws = ks
            .iter()
            .flat_map(|&(k, c)| {
                (0..c).map(move |_| Draw {
                    iteration: 0,
                    k,
                    k_nonempty: k,
                    z: (0..k).collect(),
                    pi: vec![1.0 / k as f64; k],
                    theta: vec![vec![0.5]; k],
                    log_posterior: 0.0,
                    log_likelihood: 0.0,
                })
            })
            .collect();
        PosteriorSamples::from_draws(4, 1, draws)
    }

    #[test]
    fn mode_of_k() {
        assert_eq!(infer_k_map(&with_k(&[(2, 100), (3, 850), (4, 50)])).unwrap(), 3);
        assert_eq!(infer_k_map(&with_k(&[(4, 500), (3, 500)])).unwrap(), 3);
        assert!(infer_k_map(&with_k(&[])).is_err());
    }
}
