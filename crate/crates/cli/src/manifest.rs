//! Run manifests: a TOML file of optional keys, resolved against per-model
//! defaults into a complete [`RunManifest`].
//!
//! The resolved manifest serializes back to TOML with every key filled in,
//! and parsing that echo yields the same manifest.

use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use msmcs::histogram::BinGrid;
use msmcs::kernels::ProposalConfig;
use msmcs::mmc::{RunConfig, SamplerKind};
use msmcs::models::{
    CantileverModel, ChiSquareModel, CopulaModel, IdentityGaussian, QuarterCarModel,
};
use msmcs::smcs::SmcsConfig;
use msmcs::{EmptyBinRule, PerformanceModel};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum ModelId {
    ChiSquare,
    Cantilever,
    QuarterCar,
    Copula,
    /// Standard normal input, `y = x`.
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum SamplerId {
    Msmcs,
    McmcSingle,
    McmcMulti,
    PlainMc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum RuleId {
    Nearest,
    Carry,
}

impl From<RuleId> for EmptyBinRule {
    fn from(r: RuleId) -> Self {
        match r {
            RuleId::Nearest => EmptyBinRule::Nearest,
            RuleId::Carry => EmptyBinRule::Carry,
        }
    }
}

/// Manifest as written by a user. Every key is optional except `model`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestFile {
    pub model: Option<ModelId>,
    pub sampler: Option<SamplerId>,
    pub seed: Option<u64>,
    pub iterations: Option<i64>,
    pub particles: Option<i64>,
    /// Plain MC sample count.
    pub samples: Option<i64>,
    pub chains: Option<i64>,
    pub burn_in: Option<f64>,
    pub bins: Option<i64>,
    pub range: Option<Vec<f64>>,
    pub ess_min: Option<f64>,
    pub temper_trigger: Option<f64>,
    pub temper_max_steps: Option<i64>,
    pub kernel_steps: Option<i64>,
    pub thinning: Option<i64>,
    pub step_factor: Option<f64>,
    pub empty_bin_rule: Option<RuleId>,
    pub flatness_stop: Option<f64>,
    pub dof: Option<i64>,
    pub obligors: Option<i64>,
    pub loss_fractions: Option<Vec<f64>>,
    pub out: Option<PathBuf>,
}

/// Fully resolved manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub model: ModelId,
    pub sampler: SamplerId,
    pub seed: u64,
    pub iterations: usize,
    pub particles: usize,
    pub samples: usize,
    pub chains: usize,
    pub burn_in: f64,
    pub bins: usize,
    pub range: [f64; 2],
    pub ess_min: f64,
    pub temper_trigger: f64,
    pub temper_max_steps: usize,
    pub kernel_steps: usize,
    pub thinning: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step_factor: Option<f64>,
    pub empty_bin_rule: RuleId,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flatness_stop: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dof: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub obligors: Option<usize>,
    /// Copula only: `b` values for `P(L > b n)` queries.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss_fractions: Option<Vec<f64>>,
    pub out: PathBuf,
}

struct ModelDefaults {
    iterations: usize,
    particles: usize,
    range: [f64; 2],
    bins: usize,
    kernel_steps: usize,
    burn_in: f64,
    chains: usize,
    step_factor: Option<f64>,
}

fn model_defaults(model: ModelId, obligors: usize) -> ModelDefaults {
    match model {
        ModelId::ChiSquare => ModelDefaults {
            iterations: 20,
            particles: 5_000,
            range: [4.0, 70.0],
            bins: 33,
            kernel_steps: 50,
            burn_in: 0.0,
            chains: 10,
            step_factor: None,
        },
        ModelId::Gaussian => ModelDefaults {
            iterations: 10,
            particles: 10_000,
            range: [-6.0, 6.0],
            bins: 24,
            kernel_steps: 5,
            burn_in: 0.0,
            chains: 10,
            step_factor: Some(2.0),
        },
        ModelId::Cantilever => ModelDefaults {
            iterations: 20,
            particles: 50_000,
            range: [5.35, 6.80],
            bins: 145,
            kernel_steps: 20,
            burn_in: 0.15,
            chains: 10,
            step_factor: None,
        },
        ModelId::QuarterCar => ModelDefaults {
            iterations: 20,
            particles: 20_000,
            range: [0.02, 0.42],
            bins: 80,
            kernel_steps: 20,
            burn_in: 0.0,
            chains: 10,
            step_factor: None,
        },
        ModelId::Copula => ModelDefaults {
            iterations: 20,
            particles: 10_000,
            range: [-0.5, obligors as f64 + 0.5],
            bins: obligors + 1,
            kernel_steps: 10,
            burn_in: 0.0,
            chains: 100,
            step_factor: None,
        },
    }
}

fn positive(key: &str, value: Option<i64>, default: usize) -> Result<usize> {
    match value {
        None => Ok(default),
        Some(v) if v > 0 => Ok(v as usize),
        Some(v) => bail!("invalid value for `{key}`: {v} (must be a positive integer)"),
    }
}

fn fraction(key: &str, value: f64, lo_inclusive: bool) -> Result<f64> {
    let ok = if lo_inclusive {
        (0.0..1.0).contains(&value)
    } else {
        value > 0.0 && value <= 1.0
    };
    if !ok {
        let interval = if lo_inclusive { "[0, 1)" } else { "(0, 1]" };
        bail!("invalid value for `{key}`: {value} (must be in {interval})");
    }
    Ok(value)
}

/// Parses and validates manifest text.
pub fn parse_manifest(text: &str) -> Result<RunManifest> {
    let file: ManifestFile =
        toml::from_str(text).map_err(|e| anyhow!("manifest: {}", e.message()))?;
    resolve(file)
}

/// Fills defaults and validates every key.
pub fn resolve(file: ManifestFile) -> Result<RunManifest> {
    let model = file.model.ok_or_else(|| anyhow!("missing key `model`"))?;
    let sampler = file.sampler.unwrap_or(SamplerId::Msmcs);

    let (dof, obligors) = match model {
        ModelId::ChiSquare => (Some(positive("dof", file.dof, 20)?), None),
        ModelId::Copula => (
            Some(positive("dof", file.dof, 4)?),
            Some(positive("obligors", file.obligors, 250)?),
        ),
        _ => {
            if file.dof.is_some() {
                bail!("key `dof` does not apply to model {model:?}");
            }
            (None, None)
        }
    };
    if file.obligors.is_some() && model != ModelId::Copula {
        bail!("key `obligors` does not apply to model {model:?}");
    }
    let loss_fractions = match (&file.loss_fractions, model) {
        (Some(_), m) if m != ModelId::Copula => {
            bail!("key `loss_fractions` does not apply to model {m:?}")
        }
        (Some(f), _) => Some(f.clone()),
        (None, ModelId::Copula) => Some(vec![0.1, 0.2, 0.25, 0.3]),
        (None, _) => None,
    };
    if loss_fractions
        .iter()
        .flatten()
        .any(|b| !(0.0..=1.0).contains(b))
    {
        bail!("invalid value for `loss_fractions`: every entry must be in [0, 1]");
    }

    let d = model_defaults(model, obligors.unwrap_or(0));
    let range = match &file.range {
        None => d.range,
        Some(r) if r.len() == 2 && r[0].is_finite() && r[1].is_finite() && r[0] < r[1] => {
            [r[0], r[1]]
        }
        Some(r) => {
            bail!("invalid value for `range`: {r:?} (need [lower, upper] with lower < upper)")
        }
    };
    let kernel_steps = positive("kernel_steps", file.kernel_steps, d.kernel_steps)?;
    let manifest = RunManifest {
        model,
        sampler,
        seed: file.seed.unwrap_or(0),
        iterations: positive("iterations", file.iterations, d.iterations)?,
        particles: positive("particles", file.particles, d.particles)?,
        samples: positive("samples", file.samples, 1_000_000)?,
        chains: positive("chains", file.chains, d.chains)?,
        burn_in: fraction("burn_in", file.burn_in.unwrap_or(d.burn_in), true)?,
        bins: positive("bins", file.bins, d.bins)?,
        range,
        ess_min: fraction("ess_min", file.ess_min.unwrap_or(0.5), false)?,
        temper_trigger: match file.temper_trigger {
            None => std::f64::consts::LN_10,
            Some(t) if t > 0.0 && t.is_finite() => t,
            Some(t) => bail!("invalid value for `temper_trigger`: {t} (must be positive)"),
        },
        temper_max_steps: positive("temper_max_steps", file.temper_max_steps, 10)?,
        kernel_steps,
        thinning: positive("thinning", file.thinning, kernel_steps)?,
        step_factor: match file.step_factor.or(d.step_factor) {
            Some(f) if !(f > 0.0 && f.is_finite()) => {
                bail!("invalid value for `step_factor`: {f} (must be positive)")
            }
            f => f,
        },
        empty_bin_rule: file.empty_bin_rule.unwrap_or(RuleId::Nearest),
        flatness_stop: match file.flatness_stop {
            Some(f) if !(1.0..=2.0).contains(&f) => {
                bail!("invalid value for `flatness_stop`: {f} (must be in [1, 2])")
            }
            f => f,
        },
        dof,
        obligors,
        loss_fractions,
        out: file.out.unwrap_or_else(|| PathBuf::from("msmcs-out")),
    };
    if manifest.sampler == SamplerId::McmcMulti && !manifest.particles.is_multiple_of(manifest.chains) {
        bail!(
            "invalid value for `chains`: {} does not divide particles = {}",
            manifest.chains,
            manifest.particles
        );
    }
    Ok(manifest)
}

impl RunManifest {
    /// TOML echo; re-parses to an identical manifest.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).context("serializing manifest")
    }

    pub fn grid(&self) -> Result<BinGrid> {
        Ok(BinGrid::new(self.range[0], self.range[1], self.bins)?)
    }

    pub fn build_model(&self) -> Result<Box<dyn PerformanceModel>> {
        Ok(match self.model {
            ModelId::ChiSquare => Box::new(ChiSquareModel::new(self.dof.unwrap_or(20))?),
            ModelId::Cantilever => Box::new(CantileverModel),
            ModelId::QuarterCar => Box::new(QuarterCarModel::default()),
            ModelId::Copula => Box::new(CopulaModel::new(
                self.obligors.unwrap_or(250),
                self.dof.unwrap_or(4),
            )?),
            ModelId::Gaussian => Box::new(IdentityGaussian),
        })
    }

    pub fn sampler_kind(&self) -> SamplerKind {
        match self.sampler {
            SamplerId::Msmcs => SamplerKind::Msmcs,
            SamplerId::McmcSingle => SamplerKind::McmcSingle,
            SamplerId::McmcMulti => SamplerKind::McmcMulti {
                chains: self.chains,
            },
            SamplerId::PlainMc => SamplerKind::PlainMc {
                samples: self.samples,
            },
        }
    }

    pub fn run_config(&self, model: &dyn PerformanceModel) -> Result<RunConfig> {
        let proposal = match self.step_factor {
            Some(f) => ProposalConfig::scaled_to_prior(model, f)?,
            None => ProposalConfig::default_for(model),
        };
        let config = RunConfig {
            iterations: self.iterations,
            particles: self.particles,
            grid: self.grid()?,
            sampler: self.sampler_kind(),
            burn_in_fraction: self.burn_in,
            thinning: self.thinning,
            seed: self.seed,
            proposal,
            smcs: SmcsConfig {
                ess_min_fraction: self.ess_min,
                temper_trigger: self.temper_trigger,
                temper_max_steps: self.temper_max_steps,
                kernel_steps: self.kernel_steps,
            },
            empty_bin_rule: self.empty_bin_rule.into(),
            flatness_stop: self.flatness_stop,
        };
        config.validate(model)?;
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_chi_square() {
        let m = parse_manifest("model = \"chi_square\"\nsampler = \"msmcs\"\n").unwrap();
        assert_eq!(m.iterations, 20);
        assert_eq!(m.particles, 5_000);
        assert_eq!(m.dof, Some(20));
        assert_eq!(m.sampler, SamplerId::Msmcs);
    }

    #[test]
    fn negative_bins_named() {
        let err = parse_manifest("model = \"chi_square\"\nbins = -5\n").unwrap_err();
        assert!(err.to_string().contains("bins"), "{err}");
    }

    #[test]
    fn rejects_unknown_keys_and_models() {
        let err = parse_manifest("model = \"chi_square\"\nbogus = 1\n").unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
        assert!(parse_manifest("model = \"beam\"\n").is_err());
        assert!(parse_manifest("sampler = \"msmcs\"\n").is_err());
    }

    #[test]
    fn malformed_ranges() {
        for r in ["[1.0]", "[2.0, 1.0]", "[0.0, 0.0]", "[0.0, 1.0, 2.0]"] {
            let err = parse_manifest(&format!("model = \"gaussian\"\nrange = {r}\n")).unwrap_err();
            assert!(err.to_string().contains("range"), "{err}");
        }
    }

    #[test]
    fn model_specific_keys() {
        assert!(parse_manifest("model = \"cantilever\"\ndof = 3\n").is_err());
        assert!(parse_manifest("model = \"chi_square\"\nobligors = 3\n").is_err());
        let m = parse_manifest("model = \"copula\"\nobligors = 50\n").unwrap();
        assert_eq!(m.bins, 51);
        assert_eq!(m.range, [-0.5, 50.5]);
        assert_eq!(m.loss_fractions, Some(vec![0.1, 0.2, 0.25, 0.3]));
    }

    #[test]
    fn echo_round_trips() {
        for text in [
            "model = \"chi_square\"\n",
            "model = \"copula\"\ndof = 16\n",
            "model = \"gaussian\"\nflatness_stop = 1.5\nseed = 7\n",
            "model = \"cantilever\"\nsampler = \"plain_mc\"\nsamples = 100\n",
        ] {
            let m = parse_manifest(text).unwrap();
            let echo = m.to_toml().unwrap();
            assert_eq!(parse_manifest(&echo).unwrap(), m, "{echo}");
        }
    }

    #[test]
    fn chains_must_divide() {
        let err = parse_manifest("model = \"chi_square\"\nsampler = \"mcmc_multi\"\nchains = 7\n")
            .unwrap_err();
        assert!(err.to_string().contains("chains"));
    }
}
