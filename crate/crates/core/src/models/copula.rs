//! Student-t copula portfolio loss.
//!
//! Inputs are `n + 2` standard normals: the common factor `Z`, the
//! idiosyncratic draws (scaled to `η_i ~ N(0, σ_η²)`), and a last coordinate
//! mapped through the normal CDF and the `χ²_k` quantile to `W`, giving the
//! mixing variable `T = sqrt(W / k)`.

use statrs::function::erf::erfc;
use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

use crate::error::{invalid, Result};
use crate::histogram::BinGrid;
use crate::model::{standard_normal_log_density, standard_normal_vector, PerformanceModel};
use crate::rng::RandomStream;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CopulaModel {
    obligors: usize,
    dof: f64,
    correlation: f64,
    idiosyncratic_std: f64,
    threshold: f64,
}

impl CopulaModel {
    /// `ρ = 0.25`, `σ_η² = 9`, default thresholds `0.5 √n`, unit losses.
    pub fn new(obligors: usize, dof: usize) -> Result<Self> {
        if obligors == 0 {
            return invalid("copula model needs at least one obligor");
        }
        if dof == 0 {
            return invalid("copula degrees of freedom must be positive");
        }
        Ok(CopulaModel {
            obligors,
            dof: dof as f64,
            correlation: 0.25,
            idiosyncratic_std: 3.0,
            threshold: 0.5 * (obligors as f64).sqrt(),
        })
    }

    pub fn obligors(&self) -> usize {
        self.obligors
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Number of `i` with `(ρ Z + sqrt(1-ρ²) η_i) / T` above the threshold.
    pub fn portfolio_loss(&self, z: f64, eta: &[f64], t: f64) -> usize {
        let idio = (1.0 - self.correlation * self.correlation).sqrt();
        let common = self.correlation * z;
        // T > 0, so compare without dividing.
        let bar = self.threshold * t;
        eta.iter().filter(|&&e| common + idio * e > bar).count()
    }

    /// Maps the latent normal vector to `(Z, η, T)`.
    pub fn latent_factors(&self, zeta: &[f64]) -> (f64, Vec<f64>, f64) {
        let n = self.obligors;
        let eta = zeta[1..=n]
            .iter()
            .map(|v| self.idiosyncratic_std * v)
            .collect();
        let w = chi_square_from_normal(self.dof, zeta[n + 1]);
        (zeta[0], eta, (w / self.dof).sqrt())
    }

    pub fn copula_g(&self, zeta: &[f64]) -> Result<f64> {
        if zeta.len() != self.obligors + 2 {
            return invalid(format!(
                "expected {} inputs, got {}",
                self.obligors + 2,
                zeta.len()
            ));
        }
        let (z, eta, t) = self.latent_factors(zeta);
        Ok(self.portfolio_loss(z, &eta, t) as f64)
    }
}

impl PerformanceModel for CopulaModel {
    fn dim(&self) -> usize {
        self.obligors + 2
    }

    fn prior_log_density(&self, x: &[f64]) -> f64 {
        standard_normal_log_density(x)
    }

    fn sample_prior(&self, rng: &mut RandomStream) -> Vec<f64> {
        standard_normal_vector(rng, self.obligors + 2)
    }

    fn performance(&self, x: &[f64]) -> Result<f64> {
        self.copula_g(x)
    }

    fn prior_scale(&self) -> Vec<f64> {
        vec![1.0; self.obligors + 2]
    }

    /// Large steps on the common factor and the mixing variable, which
    /// drive the loss, and small ones on the many idiosyncratic inputs.
    fn default_step(&self) -> Vec<f64> {
        let mut step = vec![0.1; self.obligors + 2];
        step[0] = 0.5;
        step[self.obligors + 1] = 0.5;
        step
    }

    fn name(&self) -> &str {
        "copula"
    }
}

/// Unit-width bins centred on the integer losses `0..=n`.
pub fn loss_grid(obligors: usize) -> BinGrid {
    BinGrid::new(-0.5, obligors as f64 + 0.5, obligors + 1).expect("valid loss grid")
}

/// `P(L > level)` from per-loss probabilities on `loss_grid`.
pub fn loss_tail_probability(bin_prob: &[f64], level: f64) -> f64 {
    bin_prob
        .iter()
        .enumerate()
        .filter(|(loss, _)| *loss as f64 > level)
        .map(|(_, p)| p)
        .sum()
}

/// `ln Φ(-x)` for `x >= 0`.
fn ln_normal_upper(x: f64) -> f64 {
    let q = 0.5 * erfc(x / std::f64::consts::SQRT_2);
    if q > 0.0 {
        q.ln()
    } else {
        // Mills-ratio asymptote once erfc underflows.
        -0.5 * x * x - x.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
    }
}

/// The `χ²_k` quantile at probability `Φ(ζ)`.
///
/// Newton iteration on the log of whichever tail is smaller, so both
/// extremes keep full relative precision.
pub fn chi_square_from_normal(k: f64, zeta: f64) -> f64 {
    let a = 0.5 * k;
    let lower = zeta < 0.0;
    let log_target = ln_normal_upper(zeta.abs());
    let ln_pdf_norm = a * std::f64::consts::LN_2 + ln_gamma(a);

    let h = 2.0 / (9.0 * k);
    let base = 1.0 - h + zeta * h.sqrt();
    let mut w = if base > 0.1 {
        k * base.powi(3)
    } else {
        // F(w) ≈ (w/2)^a / Γ(a+1) as w → 0.
        2.0 * ((log_target + ln_gamma(a + 1.0)) / a).exp()
    };
    if !(w > 0.0) || !w.is_finite() {
        w = k;
    }
    for _ in 0..200 {
        let tail = if lower {
            gamma_lr(a, 0.5 * w)
        } else {
            gamma_ur(a, 0.5 * w)
        };
        if !(tail > 0.0) {
            // Overshot into underflow: back off toward the bulk.
            w = if lower { w * 2.0 } else { w * 0.5 };
            continue;
        }
        let ln_pdf = (a - 1.0) * w.ln() - 0.5 * w - ln_pdf_norm;
        let f = tail.ln() - log_target;
        let slope = (ln_pdf - tail.ln()).exp() * if lower { 1.0 } else { -1.0 };
        let mut next = w - f / slope;
        if !(next > 0.0) || !next.is_finite() {
            next = if f / slope > 0.0 { 0.5 * w } else { 2.0 * w };
        }
        let done = (next - w).abs() <= 1e-14 * w;
        w = next;
        if done {
            break;
        }
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;

    #[test]
    fn extreme_latent_inputs() {
        let m = CopulaModel::new(250, 4).unwrap();
        let low = vec![-10.0; 250];
        assert_eq!(m.portfolio_loss(-10.0, &low, 1.0), 0);
        let high = vec![10.0 * 250f64.sqrt(); 250];
        assert_eq!(m.portfolio_loss(10.0 * 250f64.sqrt(), &high, 1.0), 250);
    }

    #[test]
    fn threshold_is_half_root_n() {
        let m = CopulaModel::new(250, 4).unwrap();
        assert!((m.threshold() - 7.905_694_150_420_948).abs() < 1e-12);
        assert!(m.copula_g(&[0.0; 251]).is_err());
    }

    #[test]
    fn quantile_inverts_cdf() {
        for k in [1.0, 4.0, 12.0, 16.0] {
            for zeta in [-8.0, -4.0, -1.0, -0.1, 0.0, 0.3, 2.0, 5.0, 9.0] {
                let w = chi_square_from_normal(k, zeta);
                assert!(w > 0.0);
                let (got, want) = if zeta < 0.0 {
                    (gamma_lr(0.5 * k, 0.5 * w).ln(), ln_normal_upper(-zeta))
                } else {
                    (gamma_ur(0.5 * k, 0.5 * w).ln(), ln_normal_upper(zeta))
                };
                assert!(
                    (got - want).abs() < 1e-9,
                    "k={k} zeta={zeta}: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn quantile_is_monotone() {
        let mut prev = 0.0;
        for i in -80..=80 {
            let w = chi_square_from_normal(4.0, i as f64 * 0.1);
            assert!(w > prev);
            prev = w;
        }
    }

    #[test]
    fn loss_grid_has_unit_bins() {
        let g = loss_grid(250);
        assert_eq!(g.count(), 251);
        assert_eq!(g.bin_index(0.0), Some(0));
        assert_eq!(g.bin_index(250.0), Some(250));
        assert_eq!(g.center(25), 25.0);
        let p: Vec<f64> = (0..=250).map(|_| 1.0 / 251.0).collect();
        assert!((loss_tail_probability(&p, 25.0) - 225.0 / 251.0).abs() < 1e-12);
    }

    #[test]
    fn loss_monotone_in_common_factor() {
        let m = CopulaModel::new(50, 4).unwrap();
        let mut rng = derive_stream(5, &[]);
        for _ in 0..100 {
            let mut x = m.sample_prior(&mut rng);
            let mut prev = m.copula_g(&x).unwrap();
            for _ in 0..20 {
                x[0] += 0.3;
                let next = m.copula_g(&x).unwrap();
                assert!(next >= prev);
                prev = next;
            }
        }
    }
}
