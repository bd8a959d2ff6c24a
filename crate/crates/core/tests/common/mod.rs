//! Oracles shared by the integration tests.

use mbmm::dataset::BinaryDataset;
use mbmm::model::Priors;

/// p(K) p(z | K) p(x | z) built one unit at a time from predictive
/// probabilities (Polya urns), with no gamma functions involved.
pub fn urn_joint(data: &BinaryDataset, z: &[usize], k: usize, pr: &Priors) -> f64 {
    let norm: f64 = (1..=pr.k_max)
        .map(|j| pr.lambda.powi(j as i32) / (1..=j).map(|v| v as f64).product::<f64>())
        .sum();
    let mut prob = pr.lambda.powi(k as i32) / (1..=k).map(|v| v as f64).product::<f64>() / norm;
    let p = data.p();
    let mut counts = vec![0.0; k];
    let mut ones = vec![vec![0.0; p]; k];
    let mut zeros = vec![vec![0.0; p]; k];
    for (i, &c) in z.iter().enumerate() {
        prob *= (pr.gamma + counts[c]) / (k as f64 * pr.gamma + i as f64);
        counts[c] += 1.0;
        for j in 0..p {
            if let Some(x) = data.get(i, j) {
                let (s, f) = (ones[c][j], zeros[c][j]);
                let denom = pr.alpha + pr.beta + s + f;
                if x == 1 {
                    prob *= (pr.alpha + s) / denom;
                    ones[c][j] += 1.0;
                } else {
                    prob *= (pr.beta + f) / denom;
                    zeros[c][j] += 1.0;
                }
            }
        }
    }
    prob
}

pub fn allocations(n: usize, k: usize) -> impl Iterator<Item = Vec<usize>> {
    (0..k.pow(n as u32)).map(move |code| (0..n).map(|i| code / k.pow(i as u32) % k).collect())
}
