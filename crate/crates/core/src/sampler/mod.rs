//! Metropolis-coupled MCMC over (K, z, pi, theta).
//!
//! `M` chains run the same allocation sampler with the likelihood raised to
//! heats `h_m = 1 / (1 + dT (m - 1))`; only the cold chain (`h_1 = 1`) is
//! recorded. Between sweeps, chain states are exchanged by Metropolis swaps.
//!
//! # Random streams
//!
//! Every stream is a `ChaCha8Rng` seeded with `seed_from_u64(config.seed)`.
//! Stream 0 drives swap proposals; chain `m` (0-based) uses stream `m + 1`.
//! A chain's stream stays with its heat position, not with the state that is
//! swapped into it, so results do not depend on thread count.

mod moves;
mod output;

pub use moves::{
    propose_k_move, propose_swap, swap_acceptance, sweep, KMove, KMoveTally, PairTally,
    SwapScheme, SwapTally,
};
pub use output::{ChainDiagnostics, Draw, ImputedCell, PosteriorSamples};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::BinaryDataset;
use crate::diagnostics::effective_sample_size;
use crate::error::{Error, Result};
use crate::model::{MixtureState, Priors};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Mc3Config {
    pub n_iterations: usize,
    pub thin: usize,
    pub burn_in_iterations: usize,
    pub n_chains: usize,
    pub delta_t: f64,
    pub swap_attempts_per_iteration: usize,
    pub swap_scheme: SwapScheme,
    pub seed: u64,
    /// Probability of attempting a birth/death move after each sweep.
    pub k_move_probability: f64,
    pub target_swap_acceptance: [f64; 2],
    /// Data augmentation for unobserved cells.
    pub impute_missing: bool,
    /// Worker threads for the chains; 0 uses the rayon default.
    pub threads: usize,
}

impl Default for Mc3Config {
    fn default() -> Self {
        Self {
            n_iterations: 15_000,
            thin: 10,
            burn_in_iterations: 5_000,
            n_chains: 4,
            delta_t: 0.025,
            swap_attempts_per_iteration: 1,
            swap_scheme: SwapScheme::Adjacent,
            seed: 1,
            k_move_probability: 1.0,
            target_swap_acceptance: [0.20, 0.60],
            impute_missing: true,
            threads: 0,
        }
    }
}

impl Mc3Config {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in_iterations >= self.n_iterations {
            return Err(Error::Validation(format!(
                "burn-in ({}) must be smaller than the iteration count ({})",
                self.burn_in_iterations, self.n_iterations
            )));
        }
        if self.n_chains == 0 {
            return Err(Error::Validation("at least one chain is required".into()));
        }
        if self.thin == 0 {
            return Err(Error::Validation("thin must be at least 1".into()));
        }
        if !(self.delta_t >= 0.0 && self.delta_t.is_finite()) {
            return Err(Error::Validation(format!("delta_t must be >= 0, got {}", self.delta_t)));
        }
        if !(0.0..=1.0).contains(&self.k_move_probability) {
            return Err(Error::Validation("k_move_probability must be in [0, 1]".into()));
        }
        let [lo, hi] = self.target_swap_acceptance;
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
            return Err(Error::Validation("target_swap_acceptance must be [lo, hi] in [0, 1]".into()));
        }
        Ok(())
    }

    /// Number of cold-chain draws kept: iterations `burn_in + thin`,
    /// `burn_in + 2 thin`, ... up to `n_iterations`.
    pub fn retained_draws(&self) -> usize {
        (self.n_iterations - self.burn_in_iterations) / self.thin
    }
}

/// Chain heats; position 0 is the cold chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatSchedule(Vec<f64>);

impl HeatSchedule {
    pub fn heats(&self) -> &[f64] {
        &self.0
    }
}

/// `h_m = 1 / (1 + dT (m - 1))` for `m = 1..=M`.
pub fn heat_schedule(n_chains: usize, delta_t: f64) -> Result<HeatSchedule> {
    if n_chains == 0 {
        return Err(Error::Validation("at least one chain is required".into()));
    }
    if !(delta_t >= 0.0) {
        return Err(Error::Validation(format!("delta_t must be >= 0, got {delta_t}")));
    }
    Ok(HeatSchedule(
        (0..n_chains).map(|m| 1.0 / (1.0 + delta_t * m as f64)).collect(),
    ))
}

/// RNG for stream `stream` under the documented splitting rule.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

struct Chain {
    rng: ChaCha8Rng,
    tally: KMoveTally,
}

pub fn run_mc3(data: &BinaryDataset, priors: &Priors, config: &Mc3Config) -> Result<PosteriorSamples> {
    priors.validate()?;
    config.validate()?;
    let heats = heat_schedule(config.n_chains, config.delta_t)?;
    let heats = heats.heats();

    let mut chains: Vec<Chain> = (0..config.n_chains)
        .map(|m| Chain {
            rng: stream_rng(config.seed, m as u64 + 1),
            tally: KMoveTally::default(),
        })
        .collect();
    let mut states = chains
        .iter_mut()
        .map(|c| MixtureState::from_prior(data, priors, config.impute_missing, &mut c.rng))
        .collect::<Result<Vec<_>>>()?;
    let mut swap_rng = stream_rng(config.seed, 0);
    let mut swaps = SwapTally::new(config.n_chains, config.swap_scheme);

    let pool = if config.n_chains > 1 {
        let mut b = rayon::ThreadPoolBuilder::new();
        if config.threads > 0 {
            b = b.num_threads(config.threads);
        }
        Some(b.build().map_err(|e| Error::Domain(format!("thread pool: {e}")))?)
    } else {
        None
    };

    let mut draws = Vec::with_capacity(config.retained_draws());
    let mut imputation_sum = vec![0.0; states[0].missing_cells().len()];
    let step = |state: &mut MixtureState, chain: &mut Chain, heat: f64| {
        if let Some(mv) = sweep(state, priors, heat, config.k_move_probability, &mut chain.rng) {
            chain.tally.record(mv);
        }
    };

    for it in 1..=config.n_iterations {
        match &pool {
            Some(pool) => pool.install(|| {
                states
                    .par_iter_mut()
                    .zip(chains.par_iter_mut())
                    .zip(heats.par_iter())
                    .for_each(|((s, c), &h)| step(s, c, h))
            }),
            None => step(&mut states[0], &mut chains[0], heats[0]),
        }
        for _ in 0..config.swap_attempts_per_iteration {
            propose_swap(&mut states, heats, &mut swaps, &mut swap_rng);
        }

        if it > config.burn_in_iterations && (it - config.burn_in_iterations).is_multiple_of(config.thin) {
            let cold = &states[0];
            let p = data.p();
            for (acc, &idx) in imputation_sum.iter_mut().zip(cold.missing_cells()) {
                let (i, j) = (idx / p, idx % p);
                *acc += cold.theta()[cold.z()[i]][j];
            }
            draws.push(Draw {
                iteration: it,
                k: cold.k(),
                k_nonempty: cold.n_nonempty(),
                z: cold.z().to_vec(),
                pi: cold.pi().to_vec(),
                theta: cold.theta().to_vec(),
                log_posterior: cold.log_collapsed_posterior(data, priors)?,
                log_likelihood: cold.log_data_likelihood(),
            });
        }
    }

    let n_draws = draws.len() as f64;
    let p = data.p();
    let imputations = states[0]
        .missing_cells()
        .iter()
        .zip(&imputation_sum)
        .map(|(&idx, &s)| ImputedCell {
            unit: idx / p,
            variable: idx % p,
            prob_one: s / n_draws,
        })
        .collect();

    let chain_diagnostics = chains
        .into_iter()
        .zip(&states)
        .zip(heats)
        .map(|((c, s), &heat)| ChainDiagnostics {
            heat,
            k_moves: c.tally,
            final_k: s.k(),
            final_k_nonempty: s.n_nonempty(),
        })
        .collect();

    let mut warnings = Vec::new();
    if let Some(rate) = swaps.acceptance_rate() {
        let [lo, hi] = config.target_swap_acceptance;
        if rate < lo || rate > hi {
            let msg = format!(
                "swap acceptance {rate:.3} outside target [{lo:.2}, {hi:.2}]; consider retuning delta_t (currently {})",
                config.delta_t
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }
    let k_trace: Vec<f64> = draws.iter().map(|d| d.k_nonempty as f64).collect();
    let ll_trace: Vec<f64> = draws.iter().map(|d| d.log_likelihood).collect();

    Ok(PosteriorSamples {
        n_units: data.n(),
        n_variables: data.p(),
        draws,
        swaps,
        chains: chain_diagnostics,
        imputations,
        k_nonempty_ess: effective_sample_size(&k_trace),
        log_likelihood_ess: effective_sample_size(&ll_trace),
        warnings,
    })
}

/// Swap acceptance observed for one `delta_t` candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaTTrial {
    pub delta_t: f64,
    pub acceptance: f64,
    pub in_target: bool,
}

/// Runs `base` once per candidate `delta_t` and reports the swap acceptance.
pub fn tune_delta_t(
    data: &BinaryDataset,
    priors: &Priors,
    base: &Mc3Config,
    candidates: &[f64],
) -> Result<Vec<DeltaTTrial>> {
    if base.n_chains < 2 {
        return Err(Error::Validation("tuning needs at least two chains".into()));
    }
    let [lo, hi] = base.target_swap_acceptance;
    candidates
        .iter()
        .map(|&dt| {
            let cfg = Mc3Config {
                delta_t: dt,
                ..base.clone()
            };
            let run = run_mc3(data, priors, &cfg)?;
            let acceptance = run.swaps.acceptance_rate().unwrap_or(0.0);
            Ok(DeltaTTrial {
                delta_t: dt,
                acceptance,
                in_target: (lo..=hi).contains(&acceptance),
            })
        })
        .collect()
}
