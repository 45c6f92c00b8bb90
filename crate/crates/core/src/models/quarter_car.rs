use crate::error::{invalid, Result};
use crate::model::{standard_normal_log_density, standard_normal_vector, PerformanceModel};
use crate::rng::RandomStream;

/// Quarter-car suspension parameters. The road input is one Gaussian value
/// per integration step, held constant over that step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuarterCarParams {
    pub sprung_mass: f64,
    pub unsprung_mass: f64,
    /// Cubic suspension spring coefficient.
    pub suspension_stiffness: f64,
    pub tire_stiffness: f64,
    pub damping: f64,
    pub horizon: f64,
    pub steps: usize,
    pub road_sigma: f64,
}

impl Default for QuarterCarParams {
    fn default() -> Self {
        QuarterCarParams {
            sprung_mass: 20.0,
            unsprung_mass: 40.0,
            suspension_stiffness: 400.0,
            tire_stiffness: 2000.0,
            damping: 600.0,
            horizon: 1.0,
            steps: 100,
            road_sigma: 1.0,
        }
    }
}

/// State is (x1, x1', x2, x2').
type State = [f64; 4];

impl QuarterCarParams {
    fn derivative(&self, s: &State, road: f64) -> State {
        let [x1, v1, x2, v2] = *s;
        let rel = x1 - x2;
        let coupling = self.suspension_stiffness * rel * rel * rel + self.damping * (v1 - v2);
        [
            v1,
            -coupling / self.sprung_mass,
            v2,
            (coupling + self.tire_stiffness * (road - x2)) / self.unsprung_mass,
        ]
    }

    fn rk4(&self, s: &State, road: f64, dt: f64) -> State {
        let add = |a: &State, k: &State, h: f64| {
            [
                a[0] + h * k[0],
                a[1] + h * k[1],
                a[2] + h * k[2],
                a[3] + h * k[3],
            ]
        };
        let k1 = self.derivative(s, road);
        let k2 = self.derivative(&add(s, &k1, 0.5 * dt), road);
        let k3 = self.derivative(&add(s, &k2, 0.5 * dt), road);
        let k4 = self.derivative(&add(s, &k3, dt), road);
        let mut out = *s;
        for i in 0..4 {
            out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        out
    }

    /// `max |x1 - x2|` at the end of each road step, starting at rest. Each
    /// road value is held over `substeps` RK4 steps of size
    /// `horizon / (road.len() * substeps)`.
    pub fn max_relative_displacement(&self, road: &[f64], substeps: usize) -> f64 {
        let dt = self.horizon / (road.len() * substeps) as f64;
        let mut s: State = [0.0; 4];
        let mut max = 0.0f64;
        for &z in road {
            for _ in 0..substeps {
                s = self.rk4(&s, z, dt);
            }
            max = max.max((s[0] - s[2]).abs());
        }
        max
    }

    /// `g` for a road profile of exactly `steps` values.
    pub fn quarter_car_g(&self, road: &[f64]) -> Result<f64> {
        if road.len() != self.steps {
            return invalid(format!(
                "expected {} road values, got {}",
                self.steps,
                road.len()
            ));
        }
        Ok(self.max_relative_displacement(road, 1))
    }
}

/// Inputs are standard normals `ζ`; the road is `σ ζ`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct QuarterCarModel {
    pub params: QuarterCarParams,
}

impl PerformanceModel for QuarterCarModel {
    fn dim(&self) -> usize {
        self.params.steps
    }

    fn prior_log_density(&self, x: &[f64]) -> f64 {
        standard_normal_log_density(x)
    }

    fn sample_prior(&self, rng: &mut RandomStream) -> Vec<f64> {
        standard_normal_vector(rng, self.params.steps)
    }

    fn performance(&self, x: &[f64]) -> Result<f64> {
        let road: Vec<f64> = x.iter().map(|z| self.params.road_sigma * z).collect();
        self.params.quarter_car_g(&road)
    }

    fn prior_scale(&self) -> Vec<f64> {
        vec![1.0; self.params.steps]
    }

    fn name(&self) -> &str {
        "quarter_car"
    }
}
