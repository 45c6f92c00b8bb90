use crate::error::{invalid, Error, Result};
use crate::model::PerformanceModel;
use crate::rng::RandomStream;

/// Beam length.
pub const LENGTH: f64 = 100.0;
/// Means of (w, t, X, Y, E).
pub const MEANS: [f64; 5] = [4.0, 4.0, 500.0, 1000.0, 2.9e6];
/// Variances of (w, t, X, Y, E).
pub const VARIANCES: [f64; 5] = [0.001, 0.0001, 100.0, 100.0, 1.45e6];

/// Maximum deflection `(4L³ / (E w t)) sqrt((Y/t²)² + (X/w²)²)`.
pub fn cantilever_g(w: f64, t: f64, x: f64, y: f64, e: f64) -> Result<f64> {
    if !(w > 0.0 && t > 0.0 && e > 0.0) {
        return invalid(format!(
            "width, height and modulus must be positive (w={w}, t={t}, E={e})"
        ));
    }
    let scale = 4.0 * LENGTH.powi(3) / (e * w * t);
    Ok(scale * (y / (t * t)).hypot(x / (w * w)))
}

/// Cantilever beam with independent normal inputs (w, t, X, Y, E).
/// Draws with nonpositive w, t or E are rejected and redrawn, and the
/// prior density is zero there.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CantileverModel;

const POSITIVE: [usize; 3] = [0, 1, 4];

impl PerformanceModel for CantileverModel {
    fn dim(&self) -> usize {
        5
    }

    fn prior_log_density(&self, x: &[f64]) -> f64 {
        if POSITIVE.iter().any(|&i| x[i] <= 0.0) {
            return f64::NEG_INFINITY;
        }
        x.iter()
            .zip(MEANS.iter().zip(VARIANCES))
            .map(|(v, (m, var))| -0.5 * (v - m) * (v - m) / var)
            .sum()
    }

    fn sample_prior(&self, rng: &mut RandomStream) -> Vec<f64> {
        MEANS
            .iter()
            .zip(VARIANCES)
            .enumerate()
            .map(|(i, (&m, var))| loop {
                let v = m + var.sqrt() * rng.standard_normal();
                if v > 0.0 || !POSITIVE.contains(&i) {
                    break v;
                }
            })
            .collect()
    }

    fn performance(&self, x: &[f64]) -> Result<f64> {
        cantilever_g(x[0], x[1], x[2], x[3], x[4]).map_err(|e| Error::Model(e.to_string()))
    }

    fn prior_scale(&self) -> Vec<f64> {
        VARIANCES.iter().map(|v| v.sqrt()).collect()
    }

    fn name(&self) -> &str {
        "cantilever"
    }
}
