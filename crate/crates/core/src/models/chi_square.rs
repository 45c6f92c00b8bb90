use statrs::function::gamma::ln_gamma;

use crate::error::{invalid, Result};
use crate::model::{standard_normal_log_density, standard_normal_vector, PerformanceModel};
use crate::rng::RandomStream;

/// `y = Σ x_i²` for `k` independent standard normals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquareModel {
    k: usize,
}

impl ChiSquareModel {
    pub fn new(k: usize) -> Result<Self> {
        if k == 0 {
            return invalid("chi-square needs at least one degree of freedom");
        }
        Ok(ChiSquareModel { k })
    }

    pub fn dof(&self) -> usize {
        self.k
    }
}

impl Default for ChiSquareModel {
    fn default() -> Self {
        ChiSquareModel { k: 20 }
    }
}

pub fn chi_square_g(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Density of `χ²_k` at `y`.
pub fn chi_square_pdf(k: f64, y: f64) -> f64 {
    if y < 0.0 {
        return 0.0;
    }
    if y == 0.0 {
        return match k {
            k if k < 2.0 => f64::INFINITY,
            2.0 => 0.5,
            _ => 0.0,
        };
    }
    let a = 0.5 * k;
    ((a - 1.0) * y.ln() - 0.5 * y - a * std::f64::consts::LN_2 - ln_gamma(a)).exp()
}

impl PerformanceModel for ChiSquareModel {
    fn dim(&self) -> usize {
        self.k
    }

    fn prior_log_density(&self, x: &[f64]) -> f64 {
        standard_normal_log_density(x)
    }

    fn sample_prior(&self, rng: &mut RandomStream) -> Vec<f64> {
        standard_normal_vector(rng, self.k)
    }

    fn performance(&self, x: &[f64]) -> Result<f64> {
        Ok(chi_square_g(x))
    }

    fn prior_scale(&self) -> Vec<f64> {
        vec![1.0; self.k]
    }

    fn name(&self) -> &str {
        "chi_square"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::evaluate;

    #[test]
    fn sum_of_squares() {
        let m = ChiSquareModel::default();
        assert_eq!(evaluate(&m, &[0.0; 20]).unwrap(), 0.0);
        assert_eq!(evaluate(&m, &[1.0; 20]).unwrap(), 20.0);
        assert!(evaluate(&m, &[1.0; 19]).is_err());
        assert!(ChiSquareModel::new(0).is_err());
    }

    #[test]
    fn density_at_twenty() {
        // 20^9 e^-10 / (2^10 9!)
        let closed = 20f64.powi(9) * (-10f64).exp() / (1024.0 * 362_880.0);
        assert!((chi_square_pdf(20.0, 20.0) - closed).abs() < 1e-14);
        assert!((chi_square_pdf(20.0, 20.0) - 0.06255).abs() < 5e-5);
        assert_eq!(chi_square_pdf(2.0, 0.0), 0.5);
        assert_eq!(chi_square_pdf(20.0, -1.0), 0.0);
    }
}
