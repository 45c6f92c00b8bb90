//! Weighted bin masses after SMCS moves against closed-form Gaussian masses.

use msmcs::models::IdentityGaussian;
use msmcs::smcs::{effective_sample_size, smcs_advance, systematic_indices, temper_transition};
use msmcs::{BinGrid, ParticleEnsemble, ProposalConfig, SmcsConfig, StreamKey, ThetaTable};
use proptest::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

const N: usize = 2000;

fn prior_masses(grid: &BinGrid) -> Vec<f64> {
    let phi = Normal::new(0.0, 1.0).unwrap();
    (0..grid.count())
        .map(|i| phi.cdf(grid.edge(i + 1)) - phi.cdf(grid.edge(i)))
        .collect()
}

/// Bin masses of the target `p(x) / Θ(bin)`.
fn warped_masses(grid: &BinGrid, theta: &[f64]) -> Vec<f64> {
    let raw: Vec<f64> = prior_masses(grid)
        .iter()
        .zip(theta)
        .map(|(p, t)| p / t)
        .collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|r| r / total).collect()
}

fn weighted_masses(ensemble: &ParticleEnsemble, bins: usize) -> Vec<f64> {
    let mut m = vec![0.0; bins];
    for (p, w) in ensemble.particles().iter().zip(ensemble.weights()) {
        m[p.bin] += w;
    }
    m
}

fn check_masses(ensemble: &ParticleEnsemble, expected: &[f64], what: &str) {
    let ess = ensemble.ess();
    assert!(
        ess >= 1.0 && ess <= ensemble.len() as f64 + 1e-9,
        "{what}: ess {ess}"
    );
    let got = weighted_masses(ensemble, expected.len());
    let weights = ensemble.weights();
    for (i, (&g, &e)) in got.iter().zip(expected).enumerate() {
        // Self-normalized importance sampling error of the bin indicator.
        let se = ensemble
            .particles()
            .iter()
            .zip(&weights)
            .map(|(p, w)| (w * ((p.bin == i) as u8 as f64 - g)).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(
            (g - e).abs() <= 3.0 * se,
            "{what}: bin {i} got {g}, expected {e} ± {se}"
        );
    }
}

/// Mean of per-seed estimates within 3 standard errors, the error taken
/// from the spread across seeds. The within-ensemble formula misses the
/// correlation between clones and between moved particles.
fn check_replicates(replicates: &[Vec<f64>], expected: &[f64], what: &str) {
    let r = replicates.len() as f64;
    for (i, &e) in expected.iter().enumerate() {
        let mean = replicates.iter().map(|v| v[i]).sum::<f64>() / r;
        let sd = (replicates
            .iter()
            .map(|v| (v[i] - mean).powi(2))
            .sum::<f64>()
            / (r - 1.0))
            .sqrt();
        let se = sd / r.sqrt();
        assert!(
            (mean - e).abs() <= 3.0 * se,
            "{what}: bin {i} mean {mean}, expected {e} ± {se}"
        );
    }
}

fn config(kernel_steps: usize) -> SmcsConfig {
    SmcsConfig {
        kernel_steps,
        ..SmcsConfig::default()
    }
}

#[test]
fn two_bin_advance_matches_warped_masses() {
    let grid = BinGrid::new(-8.0, 8.0, 2).unwrap();
    let from = ThetaTable::uniform(grid);
    let to = ThetaTable::from_theta(grid, &[0.9, 0.1]).unwrap();
    let expected = warped_masses(&grid, &[0.9, 0.1]);
    assert!((expected[1] - 0.9).abs() < 1e-12);
    let proposal = ProposalConfig::new(vec![1.0]).unwrap();
    for seed in 0..20 {
        let key = StreamKey::new(seed, &[]);
        let start =
            ParticleEnsemble::from_prior(&IdentityGaussian, &grid, N, &key.child(0)).unwrap();
        let (after, report) = smcs_advance(
            start,
            &from,
            &to,
            &IdentityGaussian,
            &proposal,
            &config(3),
            &key.child(1),
        )
        .unwrap();
        assert!(report.ess >= 1.0 && report.ess <= N as f64);
        check_masses(&after, &expected, &format!("seed {seed}"));
    }
}

#[test]
fn four_bin_advance_matches_warped_masses() {
    let grid = BinGrid::new(-6.0, 6.0, 4).unwrap();
    let from = ThetaTable::uniform(grid);
    let theta = [0.02, 0.5, 0.3, 0.18];
    let to = ThetaTable::from_theta(grid, &theta).unwrap();
    let expected = warped_masses(&grid, &theta);
    let proposal = ProposalConfig::new(vec![1.0]).unwrap();
    let mut replicates = Vec::new();
    for seed in 0..20 {
        let key = StreamKey::new(seed, &[]);
        let start =
            ParticleEnsemble::from_prior(&IdentityGaussian, &grid, N, &key.child(0)).unwrap();
        let (after, report) = smcs_advance(
            start,
            &from,
            &to,
            &IdentityGaussian,
            &proposal,
            &config(5),
            &key.child(1),
        )
        .unwrap();
        assert!(report.ess >= 1.0 && report.ess <= N as f64);
        replicates.push(weighted_masses(&after, 4));
    }
    check_replicates(&replicates, &expected, "advance");
}

#[test]
fn tempered_move_to_flat_target() {
    // Θ proportional to the prior masses flattens the target; the tail bins
    // change by a factor of ~200 and need a ladder.
    let grid = BinGrid::new(-6.0, 6.0, 4).unwrap();
    let from = ThetaTable::uniform(grid);
    let to = ThetaTable::from_theta(grid, &prior_masses(&grid)).unwrap();
    let expected = vec![0.25; 4];
    let proposal = ProposalConfig::new(vec![1.0]).unwrap();
    let mut replicates = Vec::new();
    for seed in 0..20 {
        let key = StreamKey::new(seed, &[]);
        let start =
            ParticleEnsemble::from_prior(&IdentityGaussian, &grid, N, &key.child(0)).unwrap();
        let (after, report) = temper_transition(
            start,
            &from,
            &to,
            &IdentityGaussian,
            &proposal,
            &config(5),
            &key.child(1),
        )
        .unwrap();
        assert!(report.ladder_length > 1, "{report:?}");
        for step in &report.steps {
            assert!(step.ess >= 1.0 && step.ess <= N as f64);
        }
        replicates.push(weighted_masses(&after, 4));
    }
    check_replicates(&replicates, &expected, "tempered");
}

#[test]
fn tempered_move_is_deterministic() {
    let grid = BinGrid::new(-6.0, 6.0, 4).unwrap();
    let from = ThetaTable::uniform(grid);
    let to = ThetaTable::from_theta(grid, &prior_masses(&grid)).unwrap();
    let proposal = ProposalConfig::new(vec![1.0]).unwrap();
    let run = |workers| {
        msmcs::par::with_workers(workers, || {
            let key = StreamKey::new(9, &[]);
            let start =
                ParticleEnsemble::from_prior(&IdentityGaussian, &grid, N, &key.child(0)).unwrap();
            temper_transition(
                start,
                &from,
                &to,
                &IdentityGaussian,
                &proposal,
                &config(2),
                &key.child(1),
            )
            .unwrap()
            .0
        })
    };
    let a = run(1);
    let b = run(4);
    assert_eq!(a.log_weights(), b.log_weights());
    assert_eq!(a.performances(), b.performances());
}

proptest! {
    #[test]
    fn ess_within_bounds(raw in prop::collection::vec(-50.0f64..50.0, 1..200)) {
        let lse = msmcs::histogram::log_sum_exp(&raw);
        let normalized: Vec<f64> = raw.iter().map(|l| l - lse).collect();
        let ess = effective_sample_size(&normalized).unwrap();
        prop_assert!(ess >= 1.0 - 1e-9 && ess <= raw.len() as f64 + 1e-9);
    }

    #[test]
    fn systematic_copies_are_floor_or_ceil(raw in prop::collection::vec(0.0f64..1.0, 1..100), seed in any::<u64>()) {
        let total: f64 = raw.iter().sum();
        prop_assume!(total > 1e-6);
        let w: Vec<f64> = raw.iter().map(|r| r / total).collect();
        let n = w.len();
        let mut rng = StreamKey::new(seed, &[]).stream();
        let idx = systematic_indices(&w, &mut rng);
        prop_assert_eq!(idx.len(), n);
        let mut copies = vec![0usize; n];
        for i in idx {
            copies[i] += 1;
        }
        for (c, wi) in copies.iter().zip(&w) {
            let e = n as f64 * wi;
            prop_assert!(*c as f64 >= (e - 1e-9).floor());
            prop_assert!(*c as f64 <= (e + 1e-9).ceil());
        }
    }
}
