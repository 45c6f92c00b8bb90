//! The performance-model abstraction consumed by every sampler.

use crate::error::{Error, Result};
use crate::rng::RandomStream;

/// A random input `x ~ p(x)` in `dim` dimensions together with the scalar
/// performance function `y = g(x)` whose density we want.
///
/// Implementations must be pure: samplers evaluate the same model from many
/// threads at once.
pub trait PerformanceModel: Send + Sync {
    fn dim(&self) -> usize;

    /// `log p(x)` up to an additive constant. May be `-inf` outside the
    /// prior's support; must be finite for anything `sample_prior` returns.
    fn prior_log_density(&self, x: &[f64]) -> f64;

    fn sample_prior(&self, rng: &mut RandomStream) -> Vec<f64>;

    /// `g(x)`. Called only with vectors of length `dim`.
    fn performance(&self, x: &[f64]) -> Result<f64>;

    /// Marginal standard deviation of each prior coordinate. Used to scale
    /// the default random-walk proposal.
    fn prior_scale(&self) -> Vec<f64>;

    /// Default random-walk step per coordinate.
    fn default_step(&self) -> Vec<f64> {
        let factor = default_step_factor(self.dim());
        self.prior_scale().iter().map(|s| s * factor).collect()
    }

    fn name(&self) -> &str {
        "model"
    }
}

/// `min(0.5, 2.38 / sqrt(dim))`, in prior standard deviations. The second
/// term keeps random-walk acceptance away from zero in high dimensions.
pub fn default_step_factor(dim: usize) -> f64 {
    (2.38 / (dim as f64).sqrt()).min(0.5)
}

/// `g(x)` with a length check.
pub fn evaluate<M: PerformanceModel + ?Sized>(model: &M, x: &[f64]) -> Result<f64> {
    if x.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: x.len(),
        });
    }
    let y = model.performance(x)?;
    if y.is_nan() {
        return Err(Error::Model(format!("{} returned NaN", model.name())));
    }
    Ok(y)
}

/// `log N(x; 0, I)` without the normalizing constant.
pub(crate) fn standard_normal_log_density(x: &[f64]) -> f64 {
    -0.5 * x.iter().map(|v| v * v).sum::<f64>()
}

pub(crate) fn standard_normal_vector(rng: &mut RandomStream, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.standard_normal()).collect()
}
