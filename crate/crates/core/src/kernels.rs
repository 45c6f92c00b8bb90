//! Random-walk Metropolis kernel on a warped target and the matching
//! incremental importance weight.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::histogram::ThetaTable;
use crate::model::{evaluate, PerformanceModel};
use crate::rng::RandomStream;

/// Per-coordinate standard deviations of the Gaussian random walk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalConfig {
    step_scale: Vec<f64>,
}

impl ProposalConfig {
    pub fn new(step_scale: Vec<f64>) -> Result<Self> {
        if step_scale.is_empty() {
            return invalid("proposal needs at least one dimension");
        }
        if step_scale.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return invalid("step scales must be positive and finite");
        }
        Ok(ProposalConfig { step_scale })
    }

    /// `factor` times the prior's marginal standard deviations.
    pub fn scaled_to_prior<M: PerformanceModel + ?Sized>(model: &M, factor: f64) -> Result<Self> {
        Self::new(model.prior_scale().iter().map(|s| s * factor).collect())
    }

    /// The model's own default step.
    pub fn default_for<M: PerformanceModel + ?Sized>(model: &M) -> Self {
        Self::new(model.default_step()).expect("model default steps must be positive")
    }

    pub fn step_scale(&self) -> &[f64] {
        &self.step_scale
    }

    pub fn dim(&self) -> usize {
        self.step_scale.len()
    }
}

/// `x + ε`, `ε_i ~ N(0, step_scale_i²)`. Symmetric, so the proposal ratio
/// in the acceptance probability is one.
pub fn propose(config: &ProposalConfig, x: &[f64], rng: &mut RandomStream) -> Vec<f64> {
    debug_assert_eq!(x.len(), config.dim());
    x.iter()
        .zip(&config.step_scale)
        .map(|(&xi, &s)| xi + s * rng.standard_normal())
        .collect()
}

/// A chain state with its cached performance value.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelOutcome {
    pub state: Vec<f64>,
    pub performance: f64,
    pub accepted: bool,
}

impl KernelOutcome {
    pub fn from_state<M: PerformanceModel + ?Sized>(model: &M, state: Vec<f64>) -> Result<Self> {
        let performance = evaluate(model, &state)?;
        Ok(KernelOutcome {
            state,
            performance,
            accepted: false,
        })
    }
}

/// `q(x) ∝ p(x) / Θ_{bin(g(x))}` restricted to the grid.
#[derive(Clone, Copy)]
pub struct WarpedTarget<'a, M: ?Sized> {
    pub model: &'a M,
    pub theta: &'a ThetaTable,
}

impl<'a, M: PerformanceModel + ?Sized> WarpedTarget<'a, M> {
    pub fn new(model: &'a M, theta: &'a ThetaTable) -> Self {
        WarpedTarget { model, theta }
    }

    pub fn log_density(&self, x: &[f64], y: f64) -> f64 {
        self.theta
            .log_density_at(self.model.prior_log_density(x), y)
    }
}

pub fn acceptance_probability(log_ratio: f64) -> f64 {
    if log_ratio >= 0.0 {
        1.0
    } else {
        log_ratio.exp()
    }
}

/// One Metropolis step targeting `target`.
///
/// Proposals with zero prior density or with `g` outside the grid are
/// rejected outright (the warped target is zero there) and `g` is not
/// evaluated for the former. The current state may itself lie outside the
/// grid; it is then scored with the nearest edge bin.
pub fn metropolis_step<M: PerformanceModel + ?Sized>(
    target: &WarpedTarget<'_, M>,
    config: &ProposalConfig,
    current: KernelOutcome,
    rng: &mut RandomStream,
) -> Result<KernelOutcome> {
    if current.state.len() != config.dim() {
        return Err(Error::DimensionMismatch {
            expected: config.dim(),
            got: current.state.len(),
        });
    }
    let candidate = propose(config, &current.state, rng);
    let u = rng.open01();
    let reject = |current: KernelOutcome| KernelOutcome {
        accepted: false,
        ..current
    };

    let log_prior = target.model.prior_log_density(&candidate);
    if log_prior == f64::NEG_INFINITY {
        return Ok(reject(current));
    }
    let y = evaluate(target.model, &candidate)?;
    if !target.theta.grid().contains(y) {
        return Ok(reject(current));
    }
    let log_ratio = target.theta.log_density_at(log_prior, y)
        - target.log_density(&current.state, current.performance);
    if u.ln() < log_ratio {
        Ok(KernelOutcome {
            state: candidate,
            performance: y,
            accepted: true,
        })
    } else {
        Ok(reject(current))
    }
}

/// `log α = log q_t(x_{t-1}) - log q_{t-1}(x_{t-1})` up to a constant
/// shared by all particles, i.e. `log Θ_{t-1,i} - log Θ_{t,i}` at the bin
/// of the particle's state before it moved.
pub fn incremental_weight(
    theta_prev: &ThetaTable,
    theta_curr: &ThetaTable,
    particle_bin: usize,
) -> f64 {
    theta_prev.log_at(particle_bin) - theta_curr.log_at(particle_bin)
}
