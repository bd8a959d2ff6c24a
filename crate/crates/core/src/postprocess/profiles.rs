use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::postprocess::ecr::RelabeledSamples;

/// A unit moved out of a dissolved profile. `from` is the profile label
/// before reclassification, `to` the label after it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reclassification {
    pub unit: usize,
    pub from: usize,
    pub to: usize,
}

/// Profiles described by posterior means, with per-unit membership.
/// Profile labels are 0-based here; exports number them from 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSummary {
    pub k: usize,
    /// `theta_mean[k][j]`
    pub theta_mean: Vec<Vec<f64>>,
    pub pi_mean: Vec<f64>,
    /// `assignment_probability[i][k]`
    pub assignment_probability: Vec<Vec<f64>>,
    pub hard_assignment: Vec<usize>,
    pub reclassification_log: Vec<Reclassification>,
}

impl ProfileSummary {
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &c in &self.hard_assignment {
            sizes[c] += 1;
        }
        sizes
    }

    /// Checks row sums and the argmax rule.
    pub fn check(&self) -> Result<()> {
        for (i, row) in self.assignment_probability.iter().enumerate() {
            if (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::Domain(format!("assignment row {i} does not sum to 1")));
            }
            if argmax(row) != self.hard_assignment[i] {
                return Err(Error::Domain(format!("unit {i} is not assigned to its row argmax")));
            }
        }
        Ok(())
    }

    /// Reorders profiles so that `order[r]` becomes profile `r`.
    fn reorder(&mut self, order: &[usize]) {
        let mut inverse = vec![0; self.k];
        for (new, &old) in order.iter().enumerate() {
            inverse[old] = new;
        }
        self.theta_mean = order.iter().map(|&o| self.theta_mean[o].clone()).collect();
        self.pi_mean = order.iter().map(|&o| self.pi_mean[o]).collect();
        for row in self.assignment_probability.iter_mut() {
            *row = order.iter().map(|&o| row[o]).collect();
        }
        for c in self.hard_assignment.iter_mut() {
            *c = inverse[*c];
        }
        for r in self.reclassification_log.iter_mut() {
            r.to = inverse[r.to];
        }
        self.k = order.len();
    }

    /// Renumbers profiles by descending size. Ties go to the profile holding
    /// the lowest-indexed unit, then to the larger mean weight, so the order
    /// does not depend on the incoming labels.
    pub fn order_by_size(&mut self) {
        let sizes = self.sizes();
        let mut first_unit = vec![usize::MAX; self.k];
        for (i, &c) in self.hard_assignment.iter().enumerate() {
            first_unit[c] = first_unit[c].min(i);
        }
        let mut order: Vec<usize> = (0..self.k).collect();
        order.sort_by(|&a, &b| {
            sizes[b]
                .cmp(&sizes[a])
                .then(first_unit[a].cmp(&first_unit[b]))
                .then(self.pi_mean[b].total_cmp(&self.pi_mean[a]))
                .then(a.cmp(&b))
        });
        self.reorder(&order);
    }
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = k;
        }
    }
    best
}

/// Arithmetic means of theta and pi over the relabeled draws.
pub fn posterior_means(relabeled: &RelabeledSamples) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let first = relabeled
        .draws
        .first()
        .ok_or_else(|| Error::Validation("no relabeled draws".into()))?;
    let k = relabeled.k_map;
    let p = first.theta[0].len();
    let mut theta = vec![vec![0.0; p]; k];
    let mut pi = vec![0.0; k];
    for d in &relabeled.draws {
        for c in 0..k {
            pi[c] += d.pi[c];
            for (acc, t) in theta[c].iter_mut().zip(&d.theta[c]) {
                *acc += t;
            }
        }
    }
    let m = relabeled.draws.len() as f64;
    pi.iter_mut().for_each(|v| *v /= m);
    theta.iter_mut().flatten().for_each(|v| *v /= m);
    Ok((theta, pi))
}

/// Fraction of relabeled draws allocating each unit to each profile, with
/// the row argmax as hard assignment.
pub fn assign_profiles(relabeled: &RelabeledSamples) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let first = relabeled
        .draws
        .first()
        .ok_or_else(|| Error::Validation("no relabeled draws".into()))?;
    let n = first.z.len();
    let mut counts = vec![vec![0u64; relabeled.k_map]; n];
    for d in &relabeled.draws {
        for (i, &c) in d.z.iter().enumerate() {
            counts[i][c] += 1;
        }
    }
    let total = relabeled.draws.len() as f64;
    let probs: Vec<Vec<f64>> = counts
        .iter()
        .map(|row| row.iter().map(|&c| c as f64 / total).collect())
        .collect();
    let hard = probs.iter().map(|r| argmax(r)).collect();
    Ok((probs, hard))
}

/// Dissolves profiles holding strictly fewer than `threshold_fraction * n`
/// units, smallest first, until none remain. Each unit of a dissolved profile
/// moves to the surviving profile with its highest assignment probability;
/// rows are renormalized over the survivors. Surviving profiles are then
/// renumbered by descending size.
pub fn reclassify_small(summary: &ProfileSummary, threshold_fraction: f64) -> Result<ProfileSummary> {
    if !(0.0..1.0).contains(&threshold_fraction) {
        return Err(Error::Validation(format!(
            "threshold fraction must lie in [0, 1), got {threshold_fraction}"
        )));
    }
    let n = summary.hard_assignment.len();
    let min_size = threshold_fraction * n as f64;
    let mut sizes = summary.sizes();
    if sizes.iter().all(|&s| (s as f64) < min_size) {
        return Err(Error::Domain(format!(
            "every profile holds fewer than {:.1}% of the units",
            100.0 * threshold_fraction
        )));
    }

    let mut out = summary.clone();
    let mut alive = vec![true; summary.k];
    let mut log = Vec::new();
    loop {
        let victim = (0..summary.k)
            .filter(|&c| alive[c] && (sizes[c] as f64) < min_size)
            .min_by_key(|&c| (sizes[c], c));
        let Some(victim) = victim else { break };
        alive[victim] = false;
        for i in 0..n {
            let row = &mut out.assignment_probability[i];
            row[victim] = 0.0;
            let mass: f64 = row.iter().sum();
            if out.hard_assignment[i] == victim {
                let target = (0..summary.k)
                    .filter(|&c| alive[c])
                    .fold(None, |best: Option<usize>, c| match best {
                        Some(b) if row[b] >= row[c] => Some(b),
                        _ => Some(c),
                    })
                    .expect("a profile survives");
                if mass <= 0.0 {
                    row[target] = 1.0;
                } else {
                    row.iter_mut().for_each(|v| *v /= mass);
                }
                out.hard_assignment[i] = target;
                sizes[victim] -= 1;
                sizes[target] += 1;
                log.push(Reclassification {
                    unit: i,
                    from: victim,
                    to: target,
                });
            } else if mass > 0.0 {
                row.iter_mut().for_each(|v| *v /= mass);
            }
        }
    }

    if log.is_empty() && alive.iter().all(|a| *a) {
        return Ok(summary.clone());
    }
    let survivors: Vec<usize> = (0..summary.k).filter(|&c| alive[c]).collect();
    let weight: f64 = survivors.iter().map(|&c| out.pi_mean[c]).sum();
    for &c in &survivors {
        out.pi_mean[c] /= weight;
    }
    out.reclassification_log = log;
    out.reorder(&survivors);
    out.order_by_size();
    Ok(out)
}
