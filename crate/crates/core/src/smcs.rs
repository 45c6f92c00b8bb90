//! Sequential Monte Carlo sampler moving a weighted particle ensemble
//! between successive warped targets, with an optional tempering ladder of
//! interpolated tables when consecutive targets are far apart.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::histogram::{accumulate_counts, log_sum_exp, BinCounts, BinGrid, ThetaTable};
use crate::kernels::{
    incremental_weight, metropolis_step, KernelOutcome, ProposalConfig, WarpedTarget,
};
use crate::model::{evaluate, PerformanceModel};
use crate::par;
use crate::rng::{RandomStream, StreamKey};

/// Path component reserved for the resampling stream of one advance.
const RESAMPLE_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub state: Vec<f64>,
    /// Cached `g(state)`.
    pub performance: f64,
    /// Bin of `performance`, clamped to the grid.
    pub bin: usize,
}

impl Particle {
    pub fn new<M: PerformanceModel + ?Sized>(
        model: &M,
        grid: &BinGrid,
        state: Vec<f64>,
    ) -> Result<Self> {
        let performance = evaluate(model, &state)?;
        Ok(Particle {
            bin: grid.clamped_bin(performance).0,
            state,
            performance,
        })
    }
}

/// `N` particles with normalized log-weights (`logsumexp == 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    particles: Vec<Particle>,
    log_weights: Vec<f64>,
}

impl ParticleEnsemble {
    /// Equally weighted ensemble.
    pub fn new(particles: Vec<Particle>) -> Result<Self> {
        if particles.is_empty() {
            return invalid("an ensemble needs at least one particle");
        }
        let lw = -(particles.len() as f64).ln();
        Ok(ParticleEnsemble {
            log_weights: vec![lw; particles.len()],
            particles,
        })
    }

    /// Ensemble with the given (unnormalized) log-weights.
    pub fn with_log_weights(particles: Vec<Particle>, log_weights: Vec<f64>) -> Result<Self> {
        if particles.len() != log_weights.len() {
            return invalid("one log-weight per particle required");
        }
        let mut e = ParticleEnsemble::new(particles)?;
        e.log_weights = log_weights;
        e.normalize()?;
        Ok(e)
    }

    /// `n` independent prior draws, particle `j` using stream `key.child(j)`.
    pub fn from_prior<M: PerformanceModel + ?Sized>(
        model: &M,
        grid: &BinGrid,
        n: usize,
        key: &StreamKey,
    ) -> Result<Self> {
        let particles = par::try_map_range(n, |j| {
            let mut rng = key.child(j as u64).stream();
            Particle::new(model, grid, model.sample_prior(&mut rng))
        })?;
        ParticleEnsemble::new(particles)
    }

    fn normalize(&mut self) -> Result<()> {
        let lse = log_sum_exp(&self.log_weights);
        if !lse.is_finite() {
            return Err(Error::InvalidArgument(
                "ensemble weights degenerated (all zero or infinite)".into(),
            ));
        }
        for w in &mut self.log_weights {
            *w -= lse;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|w| w.exp()).collect()
    }

    pub fn performances(&self) -> Vec<f64> {
        self.particles.iter().map(|p| p.performance).collect()
    }

    pub fn ess(&self) -> f64 {
        ess_of_normalized(&self.log_weights)
    }

    /// Weighted bin masses of the ensemble.
    pub fn counts(&self, grid: &BinGrid) -> Result<BinCounts> {
        let mut w = self.weights();
        // exp() rounding can leave the sum a few ulps off one.
        let total: f64 = w.iter().sum();
        for v in &mut w {
            *v /= total;
        }
        accumulate_counts(grid, &self.performances(), &w)
    }

    /// Sorted distinct bins occupied by at least one particle.
    pub fn occupied_bins(&self) -> Vec<usize> {
        let mut bins: Vec<usize> = self.particles.iter().map(|p| p.bin).collect();
        bins.sort_unstable();
        bins.dedup();
        bins
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmcsConfig {
    /// Resample when ESS drops below this fraction of `N`.
    pub ess_min_fraction: f64,
    /// Tempering starts when the largest log-Θ change over occupied bins
    /// exceeds this.
    pub temper_trigger: f64,
    pub temper_max_steps: usize,
    /// Metropolis steps per particle per advance.
    pub kernel_steps: usize,
}

impl Default for SmcsConfig {
    fn default() -> Self {
        SmcsConfig {
            ess_min_fraction: 0.5,
            temper_trigger: std::f64::consts::LN_10,
            temper_max_steps: 10,
            kernel_steps: 1,
        }
    }
}

impl SmcsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ess_min_fraction > 0.0 && self.ess_min_fraction <= 1.0) {
            return invalid(format!(
                "ess_min_fraction {} not in (0, 1]",
                self.ess_min_fraction
            ));
        }
        if !(self.temper_trigger > 0.0) {
            return invalid(format!(
                "temper_trigger {} must be positive",
                self.temper_trigger
            ));
        }
        if self.temper_max_steps == 0 {
            return invalid("temper_max_steps must be at least 1");
        }
        if self.kernel_steps == 0 {
            return invalid("kernel_steps must be at least 1");
        }
        Ok(())
    }
}

fn ess_of_normalized(log_weights: &[f64]) -> f64 {
    let sum_sq: f64 = log_weights.iter().map(|w| (2.0 * w).exp()).sum();
    (1.0 / sum_sq).clamp(1.0, log_weights.len() as f64)
}

/// `1 / Σ w_j²` for normalized log-weights.
pub fn effective_sample_size(log_weights: &[f64]) -> Result<f64> {
    if log_weights.is_empty() {
        return invalid("no weights");
    }
    let lse = log_sum_exp(log_weights);
    if !(lse.abs() <= 1e-10) {
        return invalid(format!("log-weights not normalized (logsumexp = {lse})"));
    }
    Ok(ess_of_normalized(log_weights))
}

/// Systematic resampling: one offset `u ~ U(0, 1/N)` and selection points
/// `u + j/N`. Output weights are all `1/N`.
pub fn systematic_resample(
    ensemble: &ParticleEnsemble,
    rng: &mut RandomStream,
) -> ParticleEnsemble {
    let n = ensemble.len();
    let idx = systematic_indices(&ensemble.weights(), rng);
    debug_assert_eq!(idx.len(), n);
    ParticleEnsemble {
        particles: idx.iter().map(|&i| ensemble.particles[i].clone()).collect(),
        log_weights: vec![-(n as f64).ln(); n],
    }
}

/// Parent index for each of the `weights.len()` offspring.
pub fn systematic_indices(weights: &[f64], rng: &mut RandomStream) -> Vec<usize> {
    let n = weights.len();
    let total: f64 = weights.iter().sum();
    let step = total / n as f64;
    let mut point = rng.random::<f64>() * step;
    let mut out = Vec::with_capacity(n);
    let mut cumulative = 0.0;
    let mut i = 0;
    for _ in 0..n {
        while i < n - 1 && cumulative + weights[i] <= point {
            cumulative += weights[i];
            i += 1;
        }
        out.push(i);
        point += step;
    }
    out
}

/// Diagnostics for one SMCS advance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdvanceReport {
    /// ESS after reweighting and moving, before any resampling.
    pub ess: f64,
    pub resampled: bool,
    pub acceptance_rate: f64,
}

/// One SMCS step from the target of `theta_from` to that of `theta_to`.
///
/// The incremental weight depends only on each particle's state before it
/// moves, so weights are updated first and the Metropolis moves (which
/// leave the new target invariant) follow.
#[allow(clippy::too_many_arguments)]
pub fn smcs_advance<M: PerformanceModel + ?Sized>(
    ensemble: ParticleEnsemble,
    theta_from: &ThetaTable,
    theta_to: &ThetaTable,
    model: &M,
    proposal: &ProposalConfig,
    config: &SmcsConfig,
    key: &StreamKey,
) -> Result<(ParticleEnsemble, AdvanceReport)> {
    config.validate()?;
    if theta_from.grid() != theta_to.grid() {
        return invalid("successive targets must share a grid");
    }
    if proposal.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: proposal.dim(),
        });
    }
    let grid = *theta_to.grid();
    let target = WarpedTarget::new(model, theta_to);
    let ParticleEnsemble {
        particles,
        log_weights,
    } = ensemble;
    let mut slots: Vec<(Particle, f64, usize)> = particles
        .into_iter()
        .zip(log_weights)
        .map(|(p, w)| (p, w, 0))
        .collect();

    par::try_for_each_mut(&mut slots, |j, (particle, log_w, accepted)| {
        *log_w += incremental_weight(theta_from, theta_to, particle.bin);
        let mut rng = key.child(j as u64).stream();
        let mut outcome = KernelOutcome {
            state: std::mem::take(&mut particle.state),
            performance: particle.performance,
            accepted: false,
        };
        for _ in 0..config.kernel_steps {
            outcome = metropolis_step(&target, proposal, outcome, &mut rng)?;
            *accepted += outcome.accepted as usize;
        }
        particle.state = outcome.state;
        particle.performance = outcome.performance;
        particle.bin = grid.clamped_bin(outcome.performance).0;
        Ok(())
    })?;

    let n = slots.len();
    let accepted: usize = slots.iter().map(|s| s.2).sum();
    let (particles, log_weights): (Vec<Particle>, Vec<f64>) =
        slots.into_iter().map(|(p, w, _)| (p, w)).unzip();
    let mut next = ParticleEnsemble {
        particles,
        log_weights,
    };
    next.normalize()?;
    let ess = next.ess();
    let resampled = ess < config.ess_min_fraction * n as f64;
    if resampled {
        let mut rng = key.child(RESAMPLE_STREAM).stream();
        next = systematic_resample(&next, &mut rng);
    }
    Ok((
        next,
        AdvanceReport {
            ess,
            resampled,
            acceptance_rate: accepted as f64 / (n * config.kernel_steps) as f64,
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperReport {
    /// Largest log-Θ change over bins occupied at the start.
    pub max_log_change: f64,
    pub ladder_length: usize,
    pub steps: Vec<AdvanceReport>,
}

/// Number of rungs used for a table change of size `max_log_change`.
pub fn ladder_length(max_log_change: f64, config: &SmcsConfig) -> usize {
    if max_log_change <= config.temper_trigger {
        1
    } else {
        ((max_log_change / config.temper_trigger).ceil() as usize).clamp(1, config.temper_max_steps)
    }
}

/// Moves an ensemble targeting `theta_t` onto `theta_next`, through
/// `K` uniformly spaced interpolated tables when the change is large.
#[allow(clippy::too_many_arguments)]
pub fn temper_transition<M: PerformanceModel + ?Sized>(
    ensemble: ParticleEnsemble,
    theta_t: &ThetaTable,
    theta_next: &ThetaTable,
    model: &M,
    proposal: &ProposalConfig,
    config: &SmcsConfig,
    key: &StreamKey,
) -> Result<(ParticleEnsemble, TemperReport)> {
    config.validate()?;
    let max_log_change = theta_t.max_log_change(theta_next, ensemble.occupied_bins());
    let k = ladder_length(max_log_change, config);
    let mut steps = Vec::with_capacity(k);
    let mut current = ensemble;
    let mut from = theta_t.clone();
    for rung in 1..=k {
        let to = if rung == k {
            theta_next.clone()
        } else {
            theta_t.interpolate(theta_next, rung as f64 / k as f64)?
        };
        let (next, report) = smcs_advance(
            current,
            &from,
            &to,
            model,
            proposal,
            config,
            &key.child(rung as u64),
        )?;
        current = next;
        steps.push(report);
        from = to;
    }
    Ok((
        current,
        TemperReport {
            max_log_change,
            ladder_length: k,
            steps,
        },
    ))
}
