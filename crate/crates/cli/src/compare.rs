//! Per-bin density errors against an analytic or saved reference.

use std::fmt::Write as _;

use anyhow::{bail, Result};
use msmcs::models::chi_square_pdf;
use serde::Serialize;

use crate::bundle::HistogramRow;

#[derive(Debug, Clone, PartialEq)]
pub enum Reference {
    /// Closed-form `χ²_k` density at each bin center.
    ChiSquare { dof: usize },
    /// Another histogram on the same grid; its `density` column.
    Histogram(Vec<HistogramRow>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CompareRow {
    pub bin_center: f64,
    pub estimate: f64,
    pub reference: f64,
    pub abs_error: f64,
    /// Absent where the reference density is zero.
    pub rel_error: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Quantiles {
    pub count: usize,
    pub median: f64,
    pub p90: f64,
    pub max: f64,
}

impl Quantiles {
    fn of(mut values: Vec<f64>) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        values.sort_by(f64::total_cmp);
        let at = |q: f64| values[((values.len() - 1) as f64 * q).round() as usize];
        Some(Quantiles {
            count: values.len(),
            median: at(0.5),
            p90: at(0.9),
            max: values[values.len() - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareReport {
    pub rows: Vec<CompareRow>,
    pub abs_summary: Option<Quantiles>,
    pub rel_summary: Option<Quantiles>,
}

fn same_center(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

pub fn compare(result: &[HistogramRow], reference: &Reference) -> Result<CompareReport> {
    let reference_density: Vec<f64> = match reference {
        Reference::ChiSquare { dof } => result
            .iter()
            .map(|r| chi_square_pdf(*dof as f64, r.bin_center))
            .collect(),
        Reference::Histogram(rows) => {
            if rows.len() != result.len() {
                bail!(
                    "grid mismatch: {} bins vs {} in the reference",
                    result.len(),
                    rows.len()
                );
            }
            for (a, b) in result.iter().zip(rows) {
                if !same_center(a.bin_center, b.bin_center) {
                    bail!(
                        "grid mismatch: bin center {} vs {} in the reference",
                        a.bin_center,
                        b.bin_center
                    );
                }
            }
            rows.iter().map(|r| r.density).collect()
        }
    };
    let rows: Vec<CompareRow> = result
        .iter()
        .zip(reference_density)
        .map(|(r, reference)| {
            let abs_error = (r.density - reference).abs();
            CompareRow {
                bin_center: r.bin_center,
                estimate: r.density,
                reference,
                abs_error,
                rel_error: (reference != 0.0).then(|| abs_error / reference.abs()),
            }
        })
        .collect();
    Ok(CompareReport {
        abs_summary: Quantiles::of(rows.iter().map(|r| r.abs_error).collect()),
        rel_summary: Quantiles::of(rows.iter().filter_map(|r| r.rel_error).collect()),
        rows,
    })
}

impl CompareReport {
    /// `bin_center,estimate,reference,abs_error,rel_error`; an empty last
    /// field where the relative error is absent.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_center,estimate,reference,abs_error,rel_error\n");
        for r in &self.rows {
            let rel = r.rel_error.map(|e| e.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.bin_center, r.estimate, r.reference, r.abs_error, rel
            );
        }
        out
    }

    pub fn summary(&self) -> String {
        let fmt = |name: &str, q: &Option<Quantiles>| match q {
            Some(q) => format!(
                "{name}: bins={} median={:.6e} p90={:.6e} max={:.6e}\n",
                q.count, q.median, q.p90, q.max
            ),
            None => format!("{name}: no bins\n"),
        };
        fmt("absolute error", &self.abs_summary) + &fmt("relative error", &self.rel_summary)
    }
}
