//! Benchmark performance models.

mod cantilever;
mod chi_square;
mod copula;
mod quarter_car;

pub use cantilever::{cantilever_g, CantileverModel, MEANS as CANTILEVER_MEANS};
pub use chi_square::{chi_square_g, chi_square_pdf, ChiSquareModel};
pub use copula::{chi_square_from_normal, loss_grid, loss_tail_probability, CopulaModel};
pub use quarter_car::{QuarterCarModel, QuarterCarParams};

use crate::error::Result;
use crate::model::{standard_normal_log_density, PerformanceModel};
use crate::rng::RandomStream;

/// One standard normal input with `g(x) = x`. Its warped bin masses are
/// available in closed form, which makes it the reference toy for sampler
/// tests.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityGaussian;

impl PerformanceModel for IdentityGaussian {
    fn dim(&self) -> usize {
        1
    }

    fn prior_log_density(&self, x: &[f64]) -> f64 {
        standard_normal_log_density(x)
    }

    fn sample_prior(&self, rng: &mut RandomStream) -> Vec<f64> {
        vec![rng.standard_normal()]
    }

    fn performance(&self, x: &[f64]) -> Result<f64> {
        Ok(x[0])
    }

    fn prior_scale(&self) -> Vec<f64> {
        vec![1.0]
    }

    fn name(&self) -> &str {
        "gaussian"
    }
}
