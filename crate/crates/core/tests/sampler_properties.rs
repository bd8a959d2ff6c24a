//! Sampler contracts: retained-draw counting, determinism, swap validity and
//! imputation quality.

use mbmm::dataset::BinaryDataset;
use mbmm::model::{MixtureState, Priors};
use mbmm::oracle::{brute_force_posterior, generate_synthetic, total_variation, SyntheticSpec};
use mbmm::sampler::{
    heat_schedule, propose_swap, run_mc3, stream_rng, sweep, Mc3Config, SwapScheme, SwapTally,
};
use proptest::prelude::*;

fn tiny() -> BinaryDataset {
    BinaryDataset::from_rows(&[
        vec![Some(1), Some(1), None],
        vec![Some(0), Some(1), Some(1)],
        vec![Some(0), None, Some(0)],
        vec![Some(1), Some(1), Some(0)],
    ])
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn retained_count_formula(burn in 0usize..60, extra in 1usize..120, thin in 1usize..9, chains in 1usize..4) {
        let cfg = Mc3Config {
            n_iterations: burn + extra,
            burn_in_iterations: burn,
            thin,
            n_chains: chains,
            delta_t: 0.3,
            ..Mc3Config::default()
        };
        let run = run_mc3(&tiny(), &Priors::with_k_max(4), &cfg).unwrap();
        prop_assert_eq!(run.draws.len(), extra / thin);
        prop_assert_eq!(run.draws.len(), cfg.retained_draws());
        for (r, d) in run.draws.iter().enumerate() {
            prop_assert_eq!(d.iteration, burn + (r + 1) * thin);
        }
    }
}

#[test]
fn same_seed_same_output_any_thread_count() {
    let (data, _) = generate_synthetic(&SyntheticSpec {
        missing_rate: 0.05,
        ..SyntheticSpec::benchmark(5)
    })
    .unwrap();
    let base = Mc3Config {
        n_iterations: 1_500,
        burn_in_iterations: 500,
        thin: 5,
        delta_t: 0.2,
        seed: 99,
        ..Mc3Config::default()
    };
    let priors = Priors::default();
    let one = run_mc3(&data, &priors, &Mc3Config { threads: 1, ..base.clone() }).unwrap();
    let three = run_mc3(&data, &priors, &Mc3Config { threads: 3, ..base.clone() }).unwrap();
    let again = run_mc3(&data, &priors, &Mc3Config { threads: 3, ..base.clone() }).unwrap();
    assert_eq!(one, three);
    assert_eq!(three, again);
    let other = run_mc3(&data, &priors, &Mc3Config { seed: 100, ..base }).unwrap();
    assert_ne!(one.draws, other.draws);
}

#[test]
fn swaps_keep_states_valid() {
    let data = tiny();
    let priors = Priors::with_k_max(4);
    let heats = heat_schedule(3, 0.5).unwrap();
    let mut rng = stream_rng(8, 0);
    let mut states: Vec<MixtureState> = (0..3)
        .map(|_| MixtureState::from_prior(&data, &priors, true, &mut rng).unwrap())
        .collect();
    let mut tally = SwapTally::new(3, SwapScheme::AnyPair);
    for _ in 0..2_000 {
        for (s, h) in states.iter_mut().zip(heats.heats()) {
            sweep(s, &priors, *h, 1.0, &mut rng);
        }
        propose_swap(&mut states, heats.heats(), &mut tally, &mut rng);
        for s in &states {
            s.check_consistency().unwrap();
        }
    }
    assert_eq!(tally.attempts(), 2_000);
    assert!(tally.accepted() > 0);
}

#[test]
fn fully_missing_rows_recover_the_prior() {
    let rows = vec![vec![None, None]; 4];
    let data = BinaryDataset::from_rows(&rows).unwrap();
    let priors = Priors::with_k_max(3);
    let exact = brute_force_posterior(&data, &priors).unwrap();
    // independent check of the prior over occupied components: K=1 always
    // gives one; under K=2, Dirichlet(1,1) with 4 units leaves a component
    // empty with probability 2 * E[w^4] = 2/5.
    let z = (1.0f64 / 1.0 + 1.0 / 2.0 + 1.0 / 6.0).recip();
    let (pk1, pk2, pk3) = (z, z / 2.0, z / 6.0);
    // K = 3, Dirichlet(1,1,1): P(all in one) = 3 * E[w^4] = 3 * 4!2!/6! = 1/5,
    // P(exactly two occupied) = 3 * (E[(w1+w2)^4] - 2 E[w1^4]) = 3 * (1/3 - 2/15) = 3/5.
    let expect1 = pk1 + pk2 * 0.4 + pk3 * 0.2;
    let expect2 = pk2 * 0.6 + pk3 * 0.6;
    assert!((exact.p_k_nonempty[0] - expect1).abs() < 1e-12);
    assert!((exact.p_k_nonempty[1] - expect2).abs() < 1e-12);

    let cfg = Mc3Config {
        n_iterations: 101_000,
        burn_in_iterations: 1_000,
        thin: 1,
        n_chains: 2,
        delta_t: 0.5,
        seed: 4,
        ..Mc3Config::default()
    };
    let run = run_mc3(&data, &priors, &cfg).unwrap();
    let mut freq = vec![0.0; 3];
    for d in &run.draws {
        freq[d.k_nonempty - 1] += 1.0 / run.draws.len() as f64;
    }
    let tv = total_variation(&freq, &exact.p_k_nonempty);
    assert!(tv < 0.02, "{freq:?} vs {:?}", exact.p_k_nonempty);
}

#[test]
fn imputation_beats_the_column_majority() {
    let spec = SyntheticSpec::benchmark(77);
    let (full, _) = generate_synthetic(&spec).unwrap();
    let (n, p) = (full.n(), full.p());
    let mut rng = stream_rng(1234, 0);
    let mut x = Vec::with_capacity(n * p);
    let mut observed = Vec::with_capacity(n * p);
    for i in 0..n {
        for j in 0..p {
            x.push(full.row(i)[j]);
            observed.push(rand::Rng::random::<f64>(&mut rng) >= 0.1);
        }
    }
    let masked = BinaryDataset::new(
        full.unit_ids().to_vec(),
        full.column_names().to_vec(),
        x,
        observed.clone(),
    )
    .unwrap();
    let cfg = Mc3Config {
        n_iterations: 3_000,
        burn_in_iterations: 1_000,
        thin: 2,
        delta_t: 0.2,
        ..Mc3Config::default()
    };
    let run = run_mc3(&masked, &Priors::default(), &cfg).unwrap();
    let imputed = run.impute_hard(&masked, 0.5).unwrap();
    let (mut hits, mut base_hits, mut total) = (0, 0, 0);
    for j in 0..p {
        let obs_ones = (0..n).filter(|&i| masked.get(i, j) == Some(1)).count();
        let obs_all = (0..n).filter(|&i| masked.is_observed(i, j)).count();
        let majority = u8::from(2 * obs_ones > obs_all);
        for i in 0..n {
            if !observed[i * p + j] {
                total += 1;
                hits += usize::from(imputed.get(i, j) == Some(full.row(i)[j]));
                base_hits += usize::from(majority == full.row(i)[j]);
            }
        }
    }
    assert_eq!(imputed.n_missing(), 0);
    assert!(hits > base_hits, "imputed {hits}/{total}, majority {base_hits}/{total}");
}
