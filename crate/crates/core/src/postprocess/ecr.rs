//! Equivalence Classes Representatives relabeling: every draw's labels are
//! permuted to agree as closely as possible with a pivot allocation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::postprocess::assignment::max_weight_assignment;
use crate::sampler::{Draw, PosteriorSamples};

/// A draw restricted to its occupied components and aligned to the pivot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelabeledDraw {
    /// Index of the draw in the input samples.
    pub source: usize,
    /// `source_labels[r]` is the draw's original label now called `r`.
    pub source_labels: Vec<usize>,
    /// Maps the compact labels (occupied components in original order) to
    /// aligned labels.
    pub permutation: Vec<usize>,
    pub z: Vec<usize>,
    /// Weights of the occupied components, renormalized to sum to one.
    pub pi: Vec<f64>,
    pub theta: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelabeledSamples {
    pub k_map: usize,
    /// Index (in the input samples) of the pivot draw.
    pub pivot: usize,
    pub draws: Vec<RelabeledDraw>,
}

/// Drops empty components, keeping occupied ones in label order.
fn compact(draw: &Draw) -> (Vec<usize>, Vec<usize>, Vec<f64>, Vec<Vec<f64>>) {
    let mut occupied = vec![false; draw.k];
    for &c in &draw.z {
        occupied[c] = true;
    }
    let labels: Vec<usize> = (0..draw.k).filter(|&c| occupied[c]).collect();
    let mut remap = vec![usize::MAX; draw.k];
    for (new, &old) in labels.iter().enumerate() {
        remap[old] = new;
    }
    let z = draw.z.iter().map(|&c| remap[c]).collect();
    let mass: f64 = labels.iter().map(|&c| draw.pi[c]).sum();
    let pi = labels.iter().map(|&c| draw.pi[c] / mass).collect();
    let theta = labels.iter().map(|&c| draw.theta[c].clone()).collect();
    (labels, z, pi, theta)
}

/// `agree[a][b]` = number of units labelled `a` in the draw and `b` in the pivot.
pub fn agreement_matrix(z: &[usize], pivot: &[usize], k: usize) -> Vec<Vec<i64>> {
    let mut m = vec![vec![0i64; k]; k];
    for (&a, &b) in z.iter().zip(pivot) {
        m[a][b] += 1;
    }
    m
}

/// Number of units whose permuted label differs from the pivot's.
pub fn mismatches(z: &[usize], pivot: &[usize], perm: &[usize]) -> usize {
    z.iter().zip(pivot).filter(|(a, b)| perm[**a] != **b).count()
}

/// Relabels the draws with `k_nonempty == k_map` against the pivot, the draw
/// with the highest log posterior among them (earliest on ties).
pub fn ecr_relabel(samples: &PosteriorSamples, k_map: usize) -> Result<RelabeledSamples> {
    let candidates: Vec<usize> = (0..samples.draws.len())
        .filter(|&d| samples.draws[d].k_nonempty == k_map)
        .collect();
    let Some(&first) = candidates.first() else {
        return Err(Error::Validation(format!(
            "no retained draw has {k_map} occupied components; inspect the k_nonempty histogram {:?}",
            samples.k_nonempty_histogram()
        )));
    };
    let pivot = candidates.iter().copied().fold(first, |best, d| {
        if samples.draws[d].log_posterior > samples.draws[best].log_posterior {
            d
        } else {
            best
        }
    });
    let (_, pivot_z, _, _) = compact(&samples.draws[pivot]);

    let draws = candidates
        .iter()
        .map(|&d| {
            let (labels, z, pi, theta) = compact(&samples.draws[d]);
            let perm = max_weight_assignment(&agreement_matrix(&z, &pivot_z, k_map));
            let mut source_labels = vec![0; k_map];
            let mut new_pi = vec![0.0; k_map];
            let mut new_theta = vec![Vec::new(); k_map];
            for (a, &b) in perm.iter().enumerate() {
                source_labels[b] = labels[a];
                new_pi[b] = pi[a];
                new_theta[b] = theta[a].clone();
            }
            RelabeledDraw {
                source: d,
                source_labels,
                z: z.iter().map(|&c| perm[c]).collect(),
                permutation: perm,
                pi: new_pi,
                theta: new_theta,
            }
        })
        .collect();

    Ok(RelabeledSamples {
        k_map,
        pivot,
        draws,
    })
}
