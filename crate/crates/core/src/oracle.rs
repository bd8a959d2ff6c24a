//! Ground truth for validating the sampler: a synthetic generator for known
//! mixtures and the exact posterior of tiny instances by enumeration.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::BinaryDataset;
use crate::error::{Error, Result};
use crate::model::{log_collapsed_allocation_posterior, log_sum_exp, sample_categorical, Priors};
use crate::sampler::stream_rng;

/// Largest number of units the enumeration accepts.
pub const MAX_ENUM_UNITS: usize = 10;
/// Largest K the enumeration accepts.
pub const MAX_ENUM_K: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub pi_true: Vec<f64>,
    /// `theta_true[k][j]`
    pub theta_true: Vec<Vec<f64>>,
    pub missing_rate: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn k_true(&self) -> usize {
        self.pi_true.len()
    }

    pub fn p(&self) -> usize {
        self.theta_true.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.pi_true.is_empty() || self.p() == 0 {
            return Err(Error::Validation("synthetic spec needs n, K and p >= 1".into()));
        }
        if self.theta_true.len() != self.pi_true.len()
            || self.theta_true.iter().any(|r| r.len() != self.p())
        {
            return Err(Error::Validation("theta_true must be K rows of length p".into()));
        }
        if (self.pi_true.iter().sum::<f64>() - 1.0).abs() > 1e-9
            || self.pi_true.iter().any(|w| *w < 0.0)
        {
            return Err(Error::Validation("pi_true must be a probability vector".into()));
        }
        if self.theta_true.iter().flatten().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::Validation("theta_true entries must lie in [0, 1]".into()));
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return Err(Error::Validation("missing_rate must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

impl SyntheticSpec {
    /// Three well-separated profiles over ten variables: blocks of columns
    /// 0..4, 4..7 and 7..10 are at 0.9 in their profile and 0.1 elsewhere,
    /// with weights (0.5, 0.3, 0.2) and n = 300.
    pub fn benchmark(seed: u64) -> Self {
        let blocks = [0..4, 4..7, 7..10];
        Self {
            n: 300,
            pi_true: vec![0.5, 0.3, 0.2],
            theta_true: blocks
                .iter()
                .map(|b| (0..10).map(|j| if b.contains(&j) { 0.9 } else { 0.1 }).collect())
                .collect(),
            missing_rate: 0.0,
            seed,
        }
    }
}

/// Draws a dataset from the mixture; returns it with the true 0-based allocations.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(BinaryDataset, Vec<usize>)> {
    spec.validate()?;
    let mut rng = stream_rng(spec.seed, 0);
    let p = spec.p();
    let mut z = Vec::with_capacity(spec.n);
    let mut x = Vec::with_capacity(spec.n * p);
    let mut observed = Vec::with_capacity(spec.n * p);
    for _ in 0..spec.n {
        let k = sample_categorical(&spec.pi_true, &mut rng);
        z.push(k);
        for &t in &spec.theta_true[k] {
            x.push(u8::from(rng.random::<f64>() < t));
            observed.push(spec.missing_rate == 0.0 || rng.random::<f64>() >= spec.missing_rate);
        }
    }
    let ids = (1..=spec.n).map(|i| format!("u{i}")).collect();
    let names = (1..=p).map(|j| format!("v{j}")).collect();
    Ok((BinaryDataset::new(ids, names, x, observed)?, z))
}

/// Exact posterior over (K, z) by enumeration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactPosterior {
    /// log p(x), the normalizer of the enumeration.
    pub log_evidence: f64,
    /// `p_k[k - 1] = p(K = k | x)`.
    pub p_k: Vec<f64>,
    /// `p_k_nonempty[k - 1] = p(number of occupied components = k | x)`.
    pub p_k_nonempty: Vec<f64>,
    /// Posterior probability that units i and j share a component.
    pub coclustering: Vec<Vec<f64>>,
    /// Partitions in canonical first-occurrence labelling, with probabilities.
    pub partitions: BTreeMap<Vec<usize>, f64>,
}

impl ExactPosterior {
    pub fn total_probability(&self) -> f64 {
        self.p_k.iter().sum()
    }
}

/// Relabels allocations by order of first appearance.
pub fn canonical_partition(z: &[usize]) -> Vec<usize> {
    let mut map: Vec<Option<usize>> = Vec::new();
    let mut next = 0;
    z.iter()
        .map(|&c| {
            if c >= map.len() {
                map.resize(c + 1, None);
            }
            *map[c].get_or_insert_with(|| {
                next += 1;
                next - 1
            })
        })
        .collect()
}

/// Enumerates every allocation for every K up to `k_max` and normalizes the
/// collapsed posterior. Guarded to `n <= 10` and `k_max <= 4`.
pub fn brute_force_posterior(data: &BinaryDataset, priors: &Priors) -> Result<ExactPosterior> {
    priors.validate()?;
    let n = data.n();
    if n > MAX_ENUM_UNITS || priors.k_max > MAX_ENUM_K {
        return Err(Error::Guard(format!(
            "enumeration needs n <= {MAX_ENUM_UNITS} and k_max <= {MAX_ENUM_K} \
             (got n = {n}, k_max = {}); the state count grows as k_max^n",
            priors.k_max
        )));
    }

    let mut states: Vec<(usize, Vec<usize>, f64)> = Vec::new();
    for k in 1..=priors.k_max {
        let mut z = vec![0usize; n];
        loop {
            let lp = log_collapsed_allocation_posterior(data, &z, k, priors)?;
            states.push((k, z.clone(), lp));
            // odometer increment in base k
            let mut pos = 0;
            while pos < n {
                z[pos] += 1;
                if z[pos] < k {
                    break;
                }
                z[pos] = 0;
                pos += 1;
            }
            if pos == n {
                break;
            }
        }
    }

    let logs: Vec<f64> = states.iter().map(|s| s.2).collect();
    let log_evidence = log_sum_exp(&logs);
    let mut p_k = vec![0.0; priors.k_max];
    let mut p_k_nonempty = vec![0.0; priors.k_max];
    let mut coclustering = vec![vec![0.0; n]; n];
    let mut partitions = BTreeMap::new();
    for (k, z, lp) in &states {
        let w = (lp - log_evidence).exp();
        p_k[k - 1] += w;
        let canon = canonical_partition(z);
        let occupied = canon.iter().max().map_or(0, |m| m + 1);
        if occupied > 0 {
            p_k_nonempty[occupied - 1] += w;
        }
        for a in 0..n {
            for b in 0..n {
                if z[a] == z[b] {
                    coclustering[a][b] += w;
                }
            }
        }
        *partitions.entry(canon).or_insert(0.0) += w;
    }
    Ok(ExactPosterior {
        log_evidence,
        p_k,
        p_k_nonempty,
        coclustering,
        partitions,
    })
}

/// Total-variation distance between two distributions on the same support.
pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    let len = a.len().max(b.len());
    0.5 * (0..len)
        .map(|i| (a.get(i).unwrap_or(&0.0) - b.get(i).unwrap_or(&0.0)).abs())
        .sum::<f64>()
}

/// Adjusted Rand index between two labelings of the same units.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings must cover the same units");
    let n = a.len();
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0u64; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1;
    }
    let choose2 = |v: u64| (v * v.saturating_sub(1)) as f64 / 2.0;
    let index: f64 = table.iter().flatten().map(|&v| choose2(v)).sum();
    let rows: f64 = table.iter().map(|r| choose2(r.iter().sum())).sum();
    let cols: f64 = (0..kb).map(|c| choose2(table.iter().map(|r| r[c]).sum())).sum();
    let total = choose2(n as u64);
    let expected = rows * cols / total;
    let max = 0.5 * (rows + cols);
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}
