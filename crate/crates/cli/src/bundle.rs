//! Running a manifest and reading/writing result bundles.
//!
//! A bundle directory holds `histogram.csv`, `diagnostics.json` and
//! `manifest.toml`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use msmcs::mmc::{run_mmc, Diagnostics, PdfEstimate};
use msmcs::models::loss_tail_probability;
use msmcs::par;
use serde::{Deserialize, Serialize};

use crate::manifest::{parse_manifest, ModelId, RunManifest};

pub const HISTOGRAM_FILE: &str = "histogram.csv";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.json";
pub const MANIFEST_FILE: &str = "manifest.toml";
pub const HISTOGRAM_HEADER: &str = "bin_center,prob,density,log10_density";

/// Worker-count override; unset or 0 means all cores.
pub const WORKERS_ENV: &str = "MSMCS_WORKERS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailQuery {
    /// `b` in `P(L > b n)`.
    pub fraction: f64,
    pub level: f64,
    pub probability: f64,
}

#[derive(Debug, Serialize)]
pub struct DiagnosticsDocument<'a> {
    pub model: ModelId,
    #[serde(flatten)]
    pub diagnostics: &'a Diagnostics,
    pub log_theta: &'a [f64],
    #[serde(skip_serializing_if = "<[TailQuery]>::is_empty")]
    pub tail_queries: &'a [TailQuery],
}

#[derive(Debug, Clone)]
pub struct ResultBundle {
    pub manifest: RunManifest,
    pub estimate: PdfEstimate,
    pub tail_queries: Vec<TailQuery>,
}

impl ResultBundle {
    pub fn histogram_csv(&self) -> String {
        self.estimate.histogram_csv()
    }

    pub fn diagnostics_json(&self) -> Result<String> {
        let doc = DiagnosticsDocument {
            model: self.manifest.model,
            diagnostics: &self.estimate.diagnostics,
            log_theta: &self.estimate.log_theta,
            tail_queries: &self.tail_queries,
        };
        Ok(serde_json::to_string_pretty(&doc)? + "\n")
    }

    /// Writes the three bundle files into `dir`, creating it if needed.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        fs::write(dir.join(HISTOGRAM_FILE), self.histogram_csv())?;
        fs::write(dir.join(DIAGNOSTICS_FILE), self.diagnostics_json()?)?;
        fs::write(dir.join(MANIFEST_FILE), self.manifest.to_toml()?)?;
        Ok(())
    }
}

/// Worker count from the environment.
pub fn workers_from_env() -> Result<usize> {
    match std::env::var(WORKERS_ENV) {
        Err(_) => Ok(0),
        Ok(v) => v
            .trim()
            .parse()
            .with_context(|| format!("{WORKERS_ENV} must be a non-negative integer, got {v:?}")),
    }
}

/// Executes a manifest on `workers` threads (0 means all cores).
pub fn run_manifest(manifest: &RunManifest, workers: usize) -> Result<ResultBundle> {
    let model = manifest.build_model()?;
    let config = manifest.run_config(model.as_ref())?;
    let estimate = par::with_workers(workers, || run_mmc(model.as_ref(), &config))?;
    let tail_queries = match manifest.obligors {
        Some(n) if manifest.model == ModelId::Copula => manifest
            .loss_fractions
            .iter()
            .flatten()
            .map(|&b| {
                let level = b * n as f64;
                TailQuery {
                    fraction: b,
                    level,
                    probability: loss_tail_probability(&estimate.bin_prob, level),
                }
            })
            .collect(),
        _ => Vec::new(),
    };
    Ok(ResultBundle {
        manifest: manifest.clone(),
        estimate,
        tail_queries,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub bin_center: f64,
    pub prob: f64,
    pub density: f64,
    pub log10_density: f64,
}

pub fn parse_histogram(text: &str) -> Result<Vec<HistogramRow>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<&str> = reader.headers()?.iter().collect();
    if header.join(",") != HISTOGRAM_HEADER {
        bail!("unexpected histogram header {:?}", header.join(","));
    }
    reader
        .deserialize()
        .map(|row| row.context("malformed histogram row"))
        .collect()
}

pub fn read_histogram(path: &Path) -> Result<Vec<HistogramRow>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_histogram(&text)
}

/// A bundle directory read back from disk.
#[derive(Debug, Clone)]
pub struct SavedBundle {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub rows: Vec<HistogramRow>,
}

impl SavedBundle {
    pub fn open(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&manifest_path)
            .with_context(|| format!("reading {}", manifest_path.display()))?;
        let manifest = parse_manifest(&text)?;
        let rows = read_histogram(&dir.join(HISTOGRAM_FILE))?;
        if rows.len() != manifest.bins {
            bail!(
                "histogram has {} rows but the manifest has {} bins",
                rows.len(),
                manifest.bins
            );
        }
        Ok(SavedBundle {
            dir: dir.to_path_buf(),
            manifest,
            rows,
        })
    }

    pub fn tail_probability(&self, threshold: f64) -> Result<f64> {
        let probs: Vec<f64> = self.rows.iter().map(|r| r.prob).collect();
        Ok(msmcs::tail_probability_bins(
            &self.manifest.grid()?,
            &probs,
            threshold,
        )?)
    }
}
