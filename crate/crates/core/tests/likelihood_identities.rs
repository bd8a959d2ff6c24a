//! Likelihood identities checked against an independent sequential-urn
//! computation of the collapsed posterior and against direct summation.

use mbmm::dataset::BinaryDataset;
use mbmm::model::{
    log_collapsed_allocation_posterior, log_complete_likelihood, log_observed_likelihood, Priors,
};
use mbmm::oracle::{brute_force_posterior, canonical_partition};
use proptest::prelude::*;
use std::collections::BTreeMap;

mod common;
use common::{allocations, urn_joint};

fn instance() -> BinaryDataset {
    BinaryDataset::from_rows(&[
        vec![Some(1), Some(0), Some(1), None],
        vec![Some(1), Some(1), Some(0), Some(0)],
        vec![None, Some(0), Some(1), Some(1)],
        vec![Some(0), Some(0), None, Some(1)],
        vec![Some(1), Some(1), Some(1), Some(0)],
        vec![Some(0), None, Some(0), Some(0)],
        vec![Some(1), Some(0), Some(0), Some(1)],
    ])
    .unwrap()
}

#[test]
fn collapsed_matches_urn_per_state() {
    let data = instance();
    let priors = Priors {
        gamma: 0.8,
        alpha: 1.3,
        beta: 0.6,
        ..Priors::with_k_max(3)
    };
    for k in 1..=3 {
        for z in allocations(data.n(), k) {
            let lib = log_collapsed_allocation_posterior(&data, &z, k, &priors).unwrap();
            let urn = urn_joint(&data, &z, k, &priors).ln();
            assert!((lib - urn).abs() < 1e-10, "K {k} z {z:?}: {lib} vs {urn}");
        }
    }
}

#[test]
fn normalized_collapsed_matches_enumeration_per_partition() {
    // n = 8, p = 4, K_max = 3
    let data = BinaryDataset::from_bits(&[
        vec![1, 1, 0, 0],
        vec![1, 1, 0, 1],
        vec![0, 0, 1, 1],
        vec![0, 1, 1, 1],
        vec![1, 0, 0, 0],
        vec![0, 0, 1, 0],
        vec![1, 1, 1, 1],
        vec![0, 0, 0, 0],
    ])
    .unwrap();
    let priors = Priors::with_k_max(3);
    let exact = brute_force_posterior(&data, &priors).unwrap();
    let mut urn: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
    let mut total = 0.0;
    for k in 1..=3 {
        for z in allocations(data.n(), k) {
            let w = urn_joint(&data, &z, k, &priors);
            total += w;
            *urn.entry(canonical_partition(&z)).or_insert(0.0) += w;
        }
    }
    assert!((total.ln() - exact.log_evidence).abs() < 1e-10);
    assert_eq!(urn.len(), exact.partitions.len());
    for (part, w) in &urn {
        assert!((w / total - exact.partitions[part]).abs() < 1e-8, "{part:?}");
    }
    assert!((exact.total_probability() - 1.0).abs() < 1e-12);
}

#[test]
fn complete_sums_to_observed() {
    let data = instance();
    let pi = vec![0.45, 0.35, 0.2];
    let theta = vec![
        vec![0.9, 0.2, 0.4, 0.7],
        vec![0.1, 0.7, 0.3, 0.05],
        vec![0.5, 0.5, 0.8, 0.35],
    ];
    let total: f64 = allocations(data.n(), 3)
        .map(|z| log_complete_likelihood(&data, &z, &pi, &theta).unwrap().exp())
        .sum();
    let observed = log_observed_likelihood(&data, &pi, &theta).unwrap().exp();
    assert!((total - observed).abs() < 1e-10 * observed.max(1e-300), "{total} vs {observed}");
    assert!((total.ln() - observed.ln()).abs() < 1e-10);
}

#[test]
fn enumeration_is_exchangeable() {
    let data = instance();
    let priors = Priors::with_k_max(3);
    let a = brute_force_posterior(&data, &priors).unwrap();
    let shuffled = data.select_rows(&[4, 0, 6, 2, 5, 1, 3]).unwrap();
    let b = brute_force_posterior(&shuffled, &priors).unwrap();
    assert!((a.log_evidence - b.log_evidence).abs() < 1e-10);
    for (x, y) in a.p_k_nonempty.iter().zip(&b.p_k_nonempty) {
        assert!((x - y).abs() < 1e-12);
    }
    // co-clustering follows the units
    assert!((a.coclustering[4][0] - b.coclustering[0][1]).abs() < 1e-12);
}

#[test]
fn single_unit_evidence_is_beta_bernoulli() {
    let data = BinaryDataset::from_rows(&[vec![Some(1), Some(0), None, Some(1)]]).unwrap();
    let priors = Priors {
        alpha: 2.0,
        beta: 0.5,
        ..Priors::with_k_max(4)
    };
    let exact = brute_force_posterior(&data, &priors).unwrap();
    let (a, b) = (2.0, 0.5);
    let direct = (a / (a + b)) * (b / (a + b)) * (a / (a + b));
    assert!((exact.log_evidence - f64::ln(direct)).abs() < 1e-12);
}

fn data_strategy() -> impl Strategy<Value = BinaryDataset> {
    (1usize..6, 1usize..4).prop_flat_map(|(n, p)| {
        prop::collection::vec(prop::collection::vec(prop::option::weighted(0.8, 0u8..2), p), n)
            .prop_map(|rows| BinaryDataset::from_rows(&rows).unwrap())
    })
}

fn params_strategy(k: usize, p: usize) -> impl Strategy<Value = (Vec<f64>, Vec<Vec<f64>>)> {
    (
        prop::collection::vec(0.01f64..1.0, k),
        prop::collection::vec(prop::collection::vec(1e-9f64..(1.0 - 1e-9), p), k),
    )
        .prop_map(|(w, theta)| {
            let s: f64 = w.iter().sum();
            (w.iter().map(|v| v / s).collect(), theta)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn likelihoods_are_finite_and_label_symmetric(
        (data, k, params, perm_seed) in data_strategy().prop_flat_map(|d| {
            let p = d.p();
            (Just(d), 1usize..4).prop_flat_map(move |(d, k)| {
                (Just(d), Just(k), params_strategy(k, p), any::<u64>())
            })
        })
    ) {
        let (pi, theta) = params;
        let z: Vec<usize> = (0..data.n()).map(|i| (i * 7 + perm_seed as usize) % k).collect();
        let obs = log_observed_likelihood(&data, &pi, &theta).unwrap();
        let comp = log_complete_likelihood(&data, &z, &pi, &theta).unwrap();
        prop_assert!(obs.is_finite() && comp.is_finite());

        // reverse-rotate the labels
        let perm: Vec<usize> = (0..k).map(|c| (c + perm_seed as usize) % k).collect();
        let mut pi2 = vec![0.0; k];
        let mut theta2 = vec![Vec::new(); k];
        for c in 0..k {
            pi2[perm[c]] = pi[c];
            theta2[perm[c]] = theta[c].clone();
        }
        let z2: Vec<usize> = z.iter().map(|&c| perm[c]).collect();
        prop_assert_eq!(log_complete_likelihood(&data, &z2, &pi2, &theta2).unwrap(), comp);
        let obs2 = log_observed_likelihood(&data, &pi2, &theta2).unwrap();
        prop_assert!((obs2 - obs).abs() <= 1e-12 * obs.abs().max(1.0));

        let priors = Priors::with_k_max(3);
        let collapsed = log_collapsed_allocation_posterior(&data, &z, k, &priors).unwrap();
        prop_assert!(collapsed.is_finite());
        let collapsed2 = log_collapsed_allocation_posterior(&data, &z2, k, &priors).unwrap();
        prop_assert!((collapsed - collapsed2).abs() < 1e-12);
    }
}
