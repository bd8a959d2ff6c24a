use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::model::{clamp_theta, sample_beta, MixtureState, Priors};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KMove {
    Birth { accepted: bool },
    Death { accepted: bool },
}

/// Proposal and acceptance counts of the dimension-changing move.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KMoveTally {
    pub births_proposed: u64,
    pub births_accepted: u64,
    pub deaths_proposed: u64,
    pub deaths_accepted: u64,
}

impl KMoveTally {
    pub fn record(&mut self, mv: KMove) {
        match mv {
            KMove::Birth { accepted } => {
                self.births_proposed += 1;
                self.births_accepted += u64::from(accepted);
            }
            KMove::Death { accepted } => {
                self.deaths_proposed += 1;
                self.deaths_accepted += u64::from(accepted);
            }
        }
    }
}

/// Birth or death of an empty component, each proposed with probability 1/2.
///
/// Birth inserts a component at a uniformly chosen position with theta drawn
/// from its Beta prior and weight `w ~ Beta(gamma, K gamma)`, scaling the
/// existing weights by `1 - w`. Death removes a uniformly chosen empty
/// component. The Dirichlet density ratio, the proposal density of `w` and the
/// Jacobian cancel, leaving
///
/// ```text
/// A_birth = p(K+1)/p(K) * (1 - w)^n * (K + 1) / (E + 1)
/// ```
///
/// with `E` the number of empty components before the birth. No unit changes
/// component, so the likelihood (and therefore the chain's heat) never enters.
pub fn propose_k_move<R: Rng + ?Sized>(
    state: &mut MixtureState,
    priors: &Priors,
    rng: &mut R,
) -> KMove {
    let k = state.k();
    let n = state.n() as f64;
    if rng.random::<f64>() < 0.5 {
        if k >= priors.k_max {
            return KMove::Birth { accepted: false };
        }
        let g = priors.concentration();
        let w = sample_beta(g, k as f64 * g, rng).min(1.0 - 1e-15);
        let pos = rng.random_range(0..=k);
        let empties = state.n_empty() as f64;
        let log_a = priors.log_prior_k(k + 1) - priors.log_prior_k(k)
            + n * (-w).ln_1p()
            + ((k + 1) as f64).ln()
            - (empties + 1.0).ln();
        let accepted = rng.random::<f64>().ln() < log_a;
        if accepted {
            let theta = (0..state.theta()[0].len())
                .map(|_| clamp_theta(sample_beta(priors.alpha, priors.beta, rng)))
                .collect();
            state.insert_component(pos, w, theta);
        }
        KMove::Birth { accepted }
    } else {
        let empties: Vec<usize> = (0..k).filter(|&c| state.counts()[c] == 0).collect();
        if k == 1 || empties.is_empty() {
            return KMove::Death { accepted: false };
        }
        let pos = empties[rng.random_range(0..empties.len())];
        let w = state.pi()[pos];
        let log_a = priors.log_prior_k(k - 1) - priors.log_prior_k(k) - n * (-w).ln_1p()
            + (empties.len() as f64).ln()
            - (k as f64).ln();
        let accepted = rng.random::<f64>().ln() < log_a;
        if accepted {
            state.remove_component(pos);
        }
        KMove::Death { accepted }
    }
}

/// One iteration at heat `h`: pi, theta, z, imputation, then (with
/// probability `k_move_probability`) one K move.
pub fn sweep<R: Rng + ?Sized>(
    state: &mut MixtureState,
    priors: &Priors,
    heat: f64,
    k_move_probability: f64,
    rng: &mut R,
) -> Option<KMove> {
    state.update_pi(priors, rng);
    state.update_theta(priors, heat, rng);
    state.update_z(heat, rng);
    state.impute_missing(heat, rng);
    if k_move_probability >= 1.0 || rng.random::<f64>() < k_move_probability {
        Some(propose_k_move(state, priors, rng))
    } else {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SwapScheme {
    /// Neighbouring heats (m, m+1), chosen uniformly.
    #[default]
    Adjacent,
    /// Any unordered pair, chosen uniformly.
    AnyPair,
}

/// Attempts and acceptances for one pair of heat positions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairTally {
    pub lower: usize,
    pub upper: usize,
    pub attempts: u64,
    pub accepted: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwapTally {
    pub pairs: Vec<PairTally>,
}

impl SwapTally {
    pub fn new(n_chains: usize, scheme: SwapScheme) -> Self {
        let mut pairs = Vec::new();
        for a in 0..n_chains {
            for b in a + 1..n_chains {
                if scheme == SwapScheme::AnyPair || b == a + 1 {
                    pairs.push(PairTally {
                        lower: a,
                        upper: b,
                        attempts: 0,
                        accepted: 0,
                    });
                }
            }
        }
        Self { pairs }
    }

    pub fn attempts(&self) -> u64 {
        self.pairs.iter().map(|p| p.attempts).sum()
    }

    pub fn accepted(&self) -> u64 {
        self.pairs.iter().map(|p| p.accepted).sum()
    }

    /// Overall acceptance rate; `None` before any attempt.
    pub fn acceptance_rate(&self) -> Option<f64> {
        let a = self.attempts();
        (a > 0).then(|| self.accepted() as f64 / a as f64)
    }
}

/// Probability of exchanging two states at heats `h_a`, `h_b` whose
/// complete-data log-likelihoods are `ll_a`, `ll_b`.
pub fn swap_acceptance(h_a: f64, h_b: f64, ll_a: f64, ll_b: f64) -> f64 {
    ((h_a - h_b) * (ll_b - ll_a)).exp().min(1.0)
}

/// Picks a pair from `tally` uniformly and exchanges the two states with the
/// Metropolis probability. `states[m]` runs at `heats[m]`. Returns whether a
/// swap happened; a single chain is a no-op.
pub fn propose_swap<R: Rng + ?Sized>(
    states: &mut [MixtureState],
    heats: &[f64],
    tally: &mut SwapTally,
    rng: &mut R,
) -> bool {
    if states.len() < 2 || tally.pairs.is_empty() {
        return false;
    }
    let idx = rng.random_range(0..tally.pairs.len());
    let pair = &mut tally.pairs[idx];
    let (a, b) = (pair.lower, pair.upper);
    let prob = swap_acceptance(
        heats[a],
        heats[b],
        states[a].log_data_likelihood(),
        states[b].log_data_likelihood(),
    );
    pair.attempts += 1;
    let u: f64 = rng.random();
    if u < prob {
        pair.accepted += 1;
        states.swap(a, b);
        true
    } else {
        false
    }
}
