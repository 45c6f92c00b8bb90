//! Bin geometry, weighted bin counts and the per-bin warping table.
//!
//! Everything density-like is kept in log space. A `ThetaTable` is always
//! stored normalized (`logsumexp(log_theta) == 0`), so two tables can be
//! compared bin by bin without tracking normalizing constants.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{evaluate, PerformanceModel};
use crate::par;

/// `log(sum(exp(v)))`, summed left to right. Returns `-inf` for an empty
/// slice or when every entry is `-inf`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Uniform partition of `[lower, upper]` into `count` bins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinGrid {
    lower: f64,
    upper: f64,
    count: usize,
}

impl BinGrid {
    pub fn new(lower: f64, upper: f64, count: usize) -> Result<Self> {
        if !lower.is_finite() || !upper.is_finite() {
            return invalid(format!(
                "grid bounds must be finite, got [{lower}, {upper}]"
            ));
        }
        if upper <= lower {
            return invalid(format!(
                "grid upper bound {upper} must exceed lower bound {lower}"
            ));
        }
        if count == 0 {
            return invalid("grid needs at least one bin");
        }
        Ok(BinGrid {
            lower,
            upper,
            count,
        })
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn width(&self) -> f64 {
        (self.upper - self.lower) / self.count as f64
    }

    /// Left edge of bin `i`; `edge(count)` is exactly `upper`.
    pub fn edge(&self, i: usize) -> f64 {
        if i >= self.count {
            self.upper
        } else {
            self.lower + i as f64 * self.width()
        }
    }

    pub fn center(&self, i: usize) -> f64 {
        self.lower + (i as f64 + 0.5) * self.width()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.center(i)).collect()
    }

    /// Bin `i` holds `[edge(i), edge(i+1))`; the last bin also holds `upper`.
    pub fn bin_index(&self, y: f64) -> Option<usize> {
        if !(y >= self.lower && y <= self.upper) {
            return None;
        }
        let last = self.count - 1;
        let mut i = (((y - self.lower) / self.width()).floor() as usize).min(last);
        // floor() can land one off near an edge after rounding.
        if i > 0 && y < self.edge(i) {
            i -= 1;
        } else if i < last && y >= self.edge(i + 1) {
            i += 1;
        }
        Some(i)
    }

    /// Bin index with out-of-range values clamped to the nearest edge bin.
    /// The flag is true when clamping happened.
    pub fn clamped_bin(&self, y: f64) -> (usize, bool) {
        match self.bin_index(y) {
            Some(i) => (i, false),
            None if y < self.lower => (0, true),
            None => (self.count - 1, true),
        }
    }

    pub fn contains(&self, y: f64) -> bool {
        y >= self.lower && y <= self.upper
    }
}

/// Per-bin weighted mass `H_i`, raw hit counts and the number of values
/// that had to be clamped into an edge bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinCounts {
    pub weighted_mass: Vec<f64>,
    pub raw_hits: Vec<u64>,
    pub out_of_range: u64,
}

impl BinCounts {
    fn zeros(bins: usize) -> Self {
        BinCounts {
            weighted_mass: vec![0.0; bins],
            raw_hits: vec![0; bins],
            out_of_range: 0,
        }
    }

    fn merge(&mut self, other: &BinCounts) {
        for (a, b) in self.weighted_mass.iter_mut().zip(&other.weighted_mass) {
            *a += b;
        }
        for (a, b) in self.raw_hits.iter_mut().zip(&other.raw_hits) {
            *a += b;
        }
        self.out_of_range += other.out_of_range;
    }

    pub fn visited(&self) -> usize {
        self.weighted_mass.iter().filter(|&&m| m > 0.0).count()
    }
}

/// Weighted histogram of `values`. Weights must already sum to one.
///
/// Partial sums are formed over fixed-size chunks and combined in chunk
/// order, so the result is bitwise independent of the worker count.
pub fn accumulate_counts(grid: &BinGrid, values: &[f64], weights: &[f64]) -> Result<BinCounts> {
    if values.len() != weights.len() {
        return invalid(format!(
            "{} values but {} weights",
            values.len(),
            weights.len()
        ));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return invalid("weights must be finite and non-negative");
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return invalid(format!("weights sum to {total}, expected 1"));
    }
    let chunks = values.len().div_ceil(par::REDUCE_CHUNK);
    let partials = par::map_range(chunks, |c| {
        let start = c * par::REDUCE_CHUNK;
        let end = (start + par::REDUCE_CHUNK).min(values.len());
        let mut part = BinCounts::zeros(grid.count());
        for (&y, &w) in values[start..end].iter().zip(&weights[start..end]) {
            let (bin, clamped) = grid.clamped_bin(y);
            part.weighted_mass[bin] += w;
            part.raw_hits[bin] += 1;
            if clamped {
                part.out_of_range += 1;
            }
        }
        part
    });
    let mut counts = BinCounts::zeros(grid.count());
    for part in &partials {
        counts.merge(part);
    }
    Ok(counts)
}

/// Unit-weight histogram: `weighted_mass[i] = N_i / N`.
pub fn accumulate_unweighted(grid: &BinGrid, values: &[f64]) -> Result<BinCounts> {
    if values.is_empty() {
        return invalid("no samples to count");
    }
    let mut counts = BinCounts::zeros(grid.count());
    for &y in values {
        let (bin, clamped) = grid.clamped_bin(y);
        counts.raw_hits[bin] += 1;
        if clamped {
            counts.out_of_range += 1;
        }
    }
    let n = values.len() as f64;
    for (m, &hits) in counts.weighted_mass.iter_mut().zip(&counts.raw_hits) {
        *m = hits as f64 / n;
    }
    Ok(counts)
}

/// How an unvisited bin's entry is filled when the table is updated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmptyBinRule {
    /// Keep the bin's previous (normalized) value.
    Carry,
    /// Copy the smallest updated value among the nearest visited bins on
    /// either side.
    #[default]
    Nearest,
}

/// Normalized per-bin warping table `Θ` defining the target
/// `q(x) ∝ p(x) / Θ_{bin(g(x))}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaTable {
    grid: BinGrid,
    log_theta: Vec<f64>,
}

impl ThetaTable {
    pub fn uniform(grid: BinGrid) -> Self {
        let v = -(grid.count() as f64).ln();
        ThetaTable {
            grid,
            log_theta: vec![v; grid.count()],
        }
    }

    /// Normalizes `log_theta` before storing it.
    pub fn from_log(grid: BinGrid, log_theta: Vec<f64>) -> Result<Self> {
        if log_theta.len() != grid.count() {
            return Err(Error::DimensionMismatch {
                expected: grid.count(),
                got: log_theta.len(),
            });
        }
        if log_theta.iter().any(|v| !v.is_finite()) {
            return invalid("log-theta entries must be finite");
        }
        let mut table = ThetaTable { grid, log_theta };
        table.normalize();
        Ok(table)
    }

    pub fn from_theta(grid: BinGrid, theta: &[f64]) -> Result<Self> {
        if theta.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return invalid("theta entries must be positive and finite");
        }
        Self::from_log(grid, theta.iter().map(|t| t.ln()).collect())
    }

    fn normalize(&mut self) {
        let lse = log_sum_exp(&self.log_theta);
        for v in &mut self.log_theta {
            *v -= lse;
        }
    }

    pub fn grid(&self) -> &BinGrid {
        &self.grid
    }

    pub fn log_theta(&self) -> &[f64] {
        &self.log_theta
    }

    pub fn log_at(&self, bin: usize) -> f64 {
        self.log_theta[bin]
    }

    pub fn theta(&self) -> Vec<f64> {
        self.log_theta.iter().map(|v| v.exp()).collect()
    }

    /// `log p(x) - log Θ_{bin(y)}`, i.e. the warped log-density up to a
    /// constant. Out-of-range `y` uses the nearest edge bin.
    pub fn log_density_at(&self, log_prior: f64, y: f64) -> f64 {
        let (bin, _) = self.grid.clamped_bin(y);
        log_prior - self.log_theta[bin]
    }

    pub fn warped_log_density<M: PerformanceModel + ?Sized>(
        &self,
        model: &M,
        x: &[f64],
        y_cached: Option<f64>,
    ) -> Result<f64> {
        if x.len() != model.dim() {
            return Err(Error::DimensionMismatch {
                expected: model.dim(),
                got: x.len(),
            });
        }
        let y = match y_cached {
            Some(y) => y,
            None => evaluate(model, x)?,
        };
        Ok(self.log_density_at(model.prior_log_density(x), y))
    }

    pub fn update(&self, counts: &BinCounts) -> Result<ThetaTable> {
        self.update_with(counts, EmptyBinRule::Carry)
    }

    /// `Θ_{t+1,i} ∝ H_{t,i} Θ_{t,i}` on visited bins (normalized over the
    /// visited block), unvisited bins filled according to `rule`, then the
    /// whole table is renormalized.
    pub fn update_with(&self, counts: &BinCounts, rule: EmptyBinRule) -> Result<ThetaTable> {
        let m = self.grid.count();
        if counts.weighted_mass.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: counts.weighted_mass.len(),
            });
        }
        let visited: Vec<bool> = counts.weighted_mass.iter().map(|&h| h > 0.0).collect();
        if !visited.iter().any(|&v| v) {
            return Ok(self.clone());
        }
        let mut next = vec![f64::NEG_INFINITY; m];
        for i in 0..m {
            if visited[i] {
                next[i] = counts.weighted_mass[i].ln() + self.log_theta[i];
            }
        }
        let block = log_sum_exp(&next);
        for i in 0..m {
            if visited[i] {
                next[i] -= block;
            }
        }
        match rule {
            EmptyBinRule::Carry => {
                for i in 0..m {
                    if !visited[i] {
                        next[i] = self.log_theta[i];
                    }
                }
            }
            EmptyBinRule::Nearest => {
                let filled = next.clone();
                for i in 0..m {
                    if visited[i] {
                        continue;
                    }
                    let left = (0..i).rev().find(|&j| visited[j]).map(|j| filled[j]);
                    let right = (i + 1..m).find(|&j| visited[j]).map(|j| filled[j]);
                    next[i] = match (left, right) {
                        (Some(a), Some(b)) => a.min(b),
                        (Some(a), None) | (None, Some(a)) => a,
                        (None, None) => unreachable!("at least one bin is visited"),
                    };
                }
            }
        }
        ThetaTable::from_log(self.grid, next)
    }

    /// `Θ_α = α Θ_next + (1 - α) Θ_self`, linear in Θ, renormalized.
    pub fn interpolate(&self, next: &ThetaTable, alpha: f64) -> Result<ThetaTable> {
        if self.grid != next.grid {
            return invalid("cannot interpolate tables on different grids");
        }
        if !(0.0..=1.0).contains(&alpha) {
            return invalid(format!("interpolation weight {alpha} outside [0, 1]"));
        }
        if alpha == 0.0 {
            return Ok(self.clone());
        }
        if alpha == 1.0 {
            return Ok(next.clone());
        }
        let (la, lb) = (alpha.ln(), (1.0 - alpha).ln());
        let mixed = self
            .log_theta
            .iter()
            .zip(&next.log_theta)
            .map(|(&from, &to)| {
                let a = la + to;
                let b = lb + from;
                let hi = a.max(b);
                hi + ((a - hi).exp() + (b - hi).exp()).ln()
            })
            .collect();
        ThetaTable::from_log(self.grid, mixed)
    }

    /// Largest `|log Θ'_i - log Θ_i|` over the given bins.
    pub fn max_log_change(&self, other: &ThetaTable, bins: impl IntoIterator<Item = usize>) -> f64 {
        bins.into_iter()
            .map(|i| (other.log_theta[i] - self.log_theta[i]).abs())
            .fold(0.0, f64::max)
    }
}

pub fn update_theta(theta: &ThetaTable, counts: &BinCounts) -> Result<ThetaTable> {
    theta.update(counts)
}

pub fn interpolate_theta(from: &ThetaTable, to: &ThetaTable, alpha: f64) -> Result<ThetaTable> {
    from.interpolate(to, alpha)
}

/// `P_i ∝ H_i Θ_i`, normalized; bins with no mass get probability zero.
pub fn bin_probabilities(theta: &ThetaTable, counts: &BinCounts) -> Result<Vec<f64>> {
    if counts.weighted_mass.len() != theta.grid().count() {
        return Err(Error::DimensionMismatch {
            expected: theta.grid().count(),
            got: counts.weighted_mass.len(),
        });
    }
    let logs: Vec<f64> = counts
        .weighted_mass
        .iter()
        .zip(theta.log_theta())
        .map(|(&h, &lt)| {
            if h > 0.0 {
                h.ln() + lt
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let lse = log_sum_exp(&logs);
    if !lse.is_finite() {
        return invalid("no bin received any mass");
    }
    Ok(logs.iter().map(|l| (l - lse).exp()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Flatness {
    /// max / min of the weighted mass over visited bins; 1 is perfectly flat.
    pub ratio: f64,
    pub visited_fraction: f64,
}

pub fn flatness_metric(counts: &BinCounts) -> Result<Flatness> {
    let visited: Vec<f64> = counts
        .weighted_mass
        .iter()
        .copied()
        .filter(|&m| m > 0.0)
        .collect();
    if visited.is_empty() {
        return invalid("flatness of an empty histogram");
    }
    let max = visited.iter().copied().fold(f64::MIN, f64::max);
    let min = visited.iter().copied().fold(f64::MAX, f64::min);
    Ok(Flatness {
        ratio: max / min,
        visited_fraction: visited.len() as f64 / counts.weighted_mass.len() as f64,
    })
}
