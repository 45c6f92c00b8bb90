//! The outer multicanonical loop and the plain Monte Carlo baseline.
//!
//! Each iteration draws `N` samples from the current warped target with one
//! of the inner samplers, histograms them, and refines the warping table
//! with `Θ_{t+1} ∝ H_t Θ_t`. The reported bin probabilities come from the
//! last iteration alone: `P_i ∝ H_{T,i} Θ_{T,i}`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::histogram::{
    accumulate_unweighted, bin_probabilities, flatness_metric, BinCounts, BinGrid, EmptyBinRule,
    ThetaTable,
};
use crate::kernels::{metropolis_step, KernelOutcome, ProposalConfig, WarpedTarget};
use crate::model::PerformanceModel;
use crate::par;
use crate::rng::StreamKey;
use crate::smcs::{temper_transition, Particle, ParticleEnsemble, SmcsConfig};

/// Root path component for plain Monte Carlo streams.
const PLAIN_MC_STREAM: u64 = 0x0050_4C41_494E;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SamplerKind {
    /// Sequential Monte Carlo sampler with tempering.
    Msmcs,
    /// One long Metropolis chain per iteration.
    McmcSingle,
    /// `chains` independent Metropolis chains per iteration.
    McmcMulti { chains: usize },
    /// i.i.d. prior sampling; ignores `iterations` and `particles`.
    PlainMc { samples: usize },
}

impl SamplerKind {
    pub fn label(&self) -> &'static str {
        match self {
            SamplerKind::Msmcs => "msmcs",
            SamplerKind::McmcSingle => "mcmc_single",
            SamplerKind::McmcMulti { .. } => "mcmc_multi",
            SamplerKind::PlainMc { .. } => "plain_mc",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub iterations: usize,
    /// Samples per iteration.
    pub particles: usize,
    pub grid: BinGrid,
    pub sampler: SamplerKind,
    /// Fraction of each MCMC chain discarded before counting.
    pub burn_in_fraction: f64,
    /// Metropolis steps per recorded MCMC state.
    pub thinning: usize,
    pub seed: u64,
    pub proposal: ProposalConfig,
    pub smcs: SmcsConfig,
    pub empty_bin_rule: EmptyBinRule,
    /// Stop once the flatness ratio is at most this and every bin is
    /// visited. Must be in `[1, 2]` when set.
    pub flatness_stop: Option<f64>,
}

impl RunConfig {
    /// 20 iterations, default proposal and SMCS settings, no burn-in.
    pub fn new<M: PerformanceModel + ?Sized>(
        model: &M,
        grid: BinGrid,
        sampler: SamplerKind,
        particles: usize,
    ) -> Self {
        RunConfig {
            iterations: 20,
            particles,
            grid,
            sampler,
            burn_in_fraction: 0.0,
            thinning: 1,
            seed: 0,
            proposal: ProposalConfig::default_for(model),
            smcs: SmcsConfig::default(),
            empty_bin_rule: EmptyBinRule::default(),
            flatness_stop: None,
        }
    }

    pub fn validate<M: PerformanceModel + ?Sized>(&self, model: &M) -> Result<()> {
        if self.iterations == 0 {
            return invalid("iterations must be positive");
        }
        if self.particles == 0 {
            return invalid("particles must be positive");
        }
        if self.thinning == 0 {
            return invalid("thinning must be positive");
        }
        if !(0.0..1.0).contains(&self.burn_in_fraction) {
            return invalid(format!(
                "burn-in fraction {} not in [0, 1)",
                self.burn_in_fraction
            ));
        }
        if self.proposal.dim() != model.dim() {
            return Err(Error::DimensionMismatch {
                expected: model.dim(),
                got: self.proposal.dim(),
            });
        }
        if let Some(stop) = self.flatness_stop {
            if !(1.0..=2.0).contains(&stop) {
                return invalid(format!("flatness stop ratio {stop} not in [1, 2]"));
            }
        }
        match self.sampler {
            SamplerKind::McmcMulti { chains } if chains == 0 || !self.particles.is_multiple_of(chains) => {
                invalid(format!(
                    "{chains} chains do not divide {} samples",
                    self.particles
                ))
            }
            SamplerKind::PlainMc { samples: 0 } => invalid("plain MC needs at least one sample"),
            SamplerKind::Msmcs => self.smcs.validate(),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub samples: usize,
    pub flatness: f64,
    pub visited_fraction: f64,
    /// ESS before any resampling, one entry per SMCS advance.
    pub ess: Vec<f64>,
    pub acceptance_rate: Option<f64>,
    pub resample_events: usize,
    pub ladder_length: usize,
    pub max_log_change: f64,
    pub out_of_range: u64,
}

impl IterationRecord {
    fn from_counts(iteration: usize, samples: usize, counts: &BinCounts) -> Result<Self> {
        let flat = flatness_metric(counts)?;
        Ok(IterationRecord {
            iteration,
            samples,
            flatness: flat.ratio,
            visited_fraction: flat.visited_fraction,
            ess: Vec::new(),
            acceptance_rate: None,
            resample_events: 0,
            ladder_length: 0,
            max_log_change: 0.0,
            out_of_range: counts.out_of_range,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub sampler: String,
    pub stopped_early: bool,
    pub iterations: Vec<IterationRecord>,
}

/// Reconstructed bin probabilities of `y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdfEstimate {
    pub grid: BinGrid,
    /// `P_i`, summing to one.
    pub bin_prob: Vec<f64>,
    /// `log10(P_i / Δ)`; `-inf` for empty bins.
    pub log10_density: Vec<f64>,
    /// Final normalized `log Θ` (uniform for plain MC).
    pub log_theta: Vec<f64>,
    /// Sample size behind the last histogram: the ensemble ESS for SMCS,
    /// the retained count for MCMC, `N` for plain MC.
    pub effective_samples: f64,
    pub diagnostics: Diagnostics,
}

impl PdfEstimate {
    fn new(
        grid: BinGrid,
        bin_prob: Vec<f64>,
        theta: &ThetaTable,
        effective_samples: f64,
        diagnostics: Diagnostics,
    ) -> Self {
        let width = grid.width();
        let log10_density = bin_prob.iter().map(|p| (p / width).log10()).collect();
        PdfEstimate {
            grid,
            bin_prob,
            log10_density,
            log_theta: theta.log_theta().to_vec(),
            effective_samples,
            diagnostics,
        }
    }

    /// Binomial standard error of each `P_i`, treating the last
    /// iteration's histogram as `effective_samples` independent draws from
    /// the warped target. Correlation between samples is ignored, so MCMC
    /// errors are understated.
    pub fn standard_errors(&self) -> Vec<f64> {
        // Share of the warped target in each bin: P_i / Θ_i, normalized.
        let raw: Vec<f64> = self
            .bin_prob
            .iter()
            .zip(&self.log_theta)
            .map(|(p, lt)| p * (-lt).exp())
            .collect();
        let total: f64 = raw.iter().sum();
        self.bin_prob
            .iter()
            .zip(&raw)
            .map(|(&p, &r)| {
                if p == 0.0 {
                    return 0.0;
                }
                let share = r / total;
                p * ((1.0 - share) / (self.effective_samples * share)).sqrt()
            })
            .collect()
    }

    pub fn density(&self) -> Vec<f64> {
        let width = self.grid.width();
        self.bin_prob.iter().map(|p| p / width).collect()
    }

    pub fn tail_probability(&self, threshold: f64) -> Result<f64> {
        tail_probability(self, threshold)
    }

    /// `bin_center,prob,density,log10_density`, one row per bin.
    pub fn histogram_csv(&self) -> String {
        let mut out = String::from("bin_center,prob,density,log10_density\n");
        let width = self.grid.width();
        for (i, (&p, &l)) in self.bin_prob.iter().zip(&self.log10_density).enumerate() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                self.grid.center(i),
                p,
                p / width,
                l
            ));
        }
        out
    }

    pub fn final_record(&self) -> Option<&IterationRecord> {
        self.diagnostics.iterations.last()
    }
}

/// `P(y > threshold)`, counting the straddling bin in proportion to the
/// part of its width above the threshold.
pub fn tail_probability(estimate: &PdfEstimate, threshold: f64) -> Result<f64> {
    tail_probability_bins(&estimate.grid, &estimate.bin_prob, threshold)
}

/// [`tail_probability`] on a bare grid and probability vector.
pub fn tail_probability_bins(grid: &BinGrid, bin_prob: &[f64], threshold: f64) -> Result<f64> {
    if bin_prob.len() != grid.count() {
        return Err(Error::DimensionMismatch {
            expected: grid.count(),
            got: bin_prob.len(),
        });
    }
    if !(threshold >= grid.lower() && threshold <= grid.upper()) {
        return invalid(format!(
            "threshold {threshold} outside grid [{}, {}]",
            grid.lower(),
            grid.upper()
        ));
    }
    let width = grid.width();
    Ok(bin_prob
        .iter()
        .enumerate()
        .map(|(i, p)| p * ((grid.edge(i + 1) - threshold) / width).clamp(0.0, 1.0))
        .sum())
}

/// i.i.d. prior samples binned as `P_i = N_i / N`; out-of-range values are
/// clamped into the edge bins and counted.
pub fn run_plain_mc<M: PerformanceModel + ?Sized>(
    model: &M,
    grid: &BinGrid,
    samples: usize,
    seed: u64,
) -> Result<PdfEstimate> {
    if samples == 0 {
        return invalid("plain MC needs at least one sample");
    }
    let key = StreamKey::new(seed, &[PLAIN_MC_STREAM]);
    let chunks = samples.div_ceil(par::REDUCE_CHUNK);
    let partial = par::try_map_range(chunks, |c| {
        let mut rng = key.child(c as u64).stream();
        let len = par::REDUCE_CHUNK.min(samples - c * par::REDUCE_CHUNK);
        let mut hits = vec![0u64; grid.count()];
        let mut clamped = 0u64;
        for _ in 0..len {
            let x = model.sample_prior(&mut rng);
            let y = crate::model::evaluate(model, &x)?;
            let (bin, out) = grid.clamped_bin(y);
            hits[bin] += 1;
            clamped += out as u64;
        }
        Ok((hits, clamped))
    })?;
    let mut counts = BinCounts {
        weighted_mass: vec![0.0; grid.count()],
        raw_hits: vec![0; grid.count()],
        out_of_range: 0,
    };
    for (hits, clamped) in &partial {
        for (a, b) in counts.raw_hits.iter_mut().zip(hits) {
            *a += b;
        }
        counts.out_of_range += clamped;
    }
    for (m, &h) in counts.weighted_mass.iter_mut().zip(&counts.raw_hits) {
        *m = h as f64 / samples as f64;
    }
    let record = IterationRecord::from_counts(0, samples, &counts)?;
    let theta = ThetaTable::uniform(*grid);
    Ok(PdfEstimate::new(
        *grid,
        counts.weighted_mass.clone(),
        &theta,
        samples as f64,
        Diagnostics {
            sampler: "plain_mc".into(),
            stopped_early: false,
            iterations: vec![record],
        },
    ))
}

/// Unit-weight samples from one MCMC iteration.
#[derive(Debug, Clone)]
pub struct McmcSample {
    pub particles: Vec<Particle>,
    pub acceptance_rate: f64,
}

/// Runs `chains` Metropolis chains of length `n_samples / chains` on the
/// warped target of `theta`, each started from a distinct, uniformly chosen
/// entry of `starts`, and keeps every state after the burn-in. A chain step is
/// `thinning` Metropolis moves.
#[allow(clippy::too_many_arguments)]
pub fn run_mcmc_iteration<M: PerformanceModel + ?Sized>(
    theta: &ThetaTable,
    model: &M,
    proposal: &ProposalConfig,
    n_samples: usize,
    chains: usize,
    burn_in_fraction: f64,
    thinning: usize,
    starts: &[Particle],
    key: &StreamKey,
) -> Result<McmcSample> {
    if chains == 0 || !n_samples.is_multiple_of(chains) {
        return invalid(format!("{chains} chains do not divide {n_samples} samples"));
    }
    if thinning == 0 {
        return invalid("thinning must be positive");
    }
    if starts.len() < chains {
        return invalid(format!(
            "{} starting states for {chains} chains",
            starts.len()
        ));
    }
    if !(0.0..1.0).contains(&burn_in_fraction) {
        return invalid(format!("burn-in fraction {burn_in_fraction} not in [0, 1)"));
    }
    let length = n_samples / chains;
    let burn = (burn_in_fraction * length as f64).floor() as usize;
    let grid = *theta.grid();
    let target = WarpedTarget::new(model, theta);
    let picks = chain_starts(starts.len(), chains, key);
    let per_chain = par::try_map_range(chains, |c| {
        let mut rng = key.child(c as u64).stream();
        let start = &starts[picks[c]];
        let mut state = KernelOutcome {
            state: start.state.clone(),
            performance: start.performance,
            accepted: false,
        };
        let mut kept = Vec::with_capacity(length - burn);
        let mut accepted = 0usize;
        for step in 0..length {
            for _ in 0..thinning {
                state = metropolis_step(&target, proposal, state, &mut rng)?;
                accepted += state.accepted as usize;
            }
            if step >= burn {
                kept.push(Particle {
                    state: state.state.clone(),
                    performance: state.performance,
                    bin: grid.clamped_bin(state.performance).0,
                });
            }
        }
        Ok((kept, accepted))
    })?;
    let accepted: usize = per_chain.iter().map(|c| c.1).sum();
    Ok(McmcSample {
        particles: per_chain.into_iter().flat_map(|c| c.0).collect(),
        acceptance_rate: accepted as f64 / (n_samples * thinning) as f64,
    })
}

/// Indices of the chain starting points, drawn without replacement.
pub fn chain_starts(available: usize, chains: usize, key: &StreamKey) -> Vec<usize> {
    let mut rng = key.child(u64::MAX).stream();
    rand::seq::index::sample(&mut rng, available, chains).into_vec()
}

enum Population {
    Weighted(ParticleEnsemble),
    Unweighted(Vec<Particle>),
}

/// Multicanonical iteration with the configured inner sampler.
pub fn run_mmc<M: PerformanceModel + ?Sized>(model: &M, config: &RunConfig) -> Result<PdfEstimate> {
    config.validate(model)?;
    if let SamplerKind::PlainMc { samples } = config.sampler {
        return run_plain_mc(model, &config.grid, samples, config.seed);
    }
    let grid = config.grid;
    let root = StreamKey::new(config.seed, &[]);

    // Iteration 0: the prior, i.e. a uniform table.
    let mut theta = ThetaTable::uniform(grid);
    let prior = ParticleEnsemble::from_prior(model, &grid, config.particles, &root.child(0))?;
    let mut counts = accumulate_unweighted(&grid, &prior.performances())?;
    let mut records = vec![IterationRecord::from_counts(0, config.particles, &counts)?];
    let mut population = match config.sampler {
        SamplerKind::Msmcs => Population::Weighted(prior),
        _ => Population::Unweighted(prior.particles().to_vec()),
    };
    let mut stopped_early = false;

    for t in 1..config.iterations {
        if let Some(stop) = config.flatness_stop {
            let last = records.last().expect("at least one record");
            if last.flatness <= stop && last.visited_fraction >= 1.0 {
                stopped_early = true;
                break;
            }
        }
        let next_theta = theta.update_with(&counts, config.empty_bin_rule)?;
        let key = root.child(t as u64);
        let record;
        (population, counts, record) = match population {
            Population::Weighted(ensemble) => {
                let (ensemble, report) = temper_transition(
                    ensemble,
                    &theta,
                    &next_theta,
                    model,
                    &config.proposal,
                    &config.smcs,
                    &key,
                )?;
                let counts = ensemble.counts(&grid)?;
                let mut record = IterationRecord::from_counts(t, ensemble.len(), &counts)?;
                let steps = report.steps.len() as f64;
                record.ess = report.steps.iter().map(|s| s.ess).collect();
                record.acceptance_rate =
                    Some(report.steps.iter().map(|s| s.acceptance_rate).sum::<f64>() / steps);
                record.resample_events = report.steps.iter().filter(|s| s.resampled).count();
                record.ladder_length = report.ladder_length;
                record.max_log_change = report.max_log_change;
                (Population::Weighted(ensemble), counts, record)
            }
            Population::Unweighted(previous) => {
                let chains = match config.sampler {
                    SamplerKind::McmcMulti { chains } => chains,
                    _ => 1,
                };
                let sample = run_mcmc_iteration(
                    &next_theta,
                    model,
                    &config.proposal,
                    config.particles,
                    chains,
                    config.burn_in_fraction,
                    config.thinning,
                    &previous,
                    &key,
                )?;
                let values: Vec<f64> = sample.particles.iter().map(|p| p.performance).collect();
                let counts = accumulate_unweighted(&grid, &values)?;
                let mut record = IterationRecord::from_counts(t, values.len(), &counts)?;
                record.acceptance_rate = Some(sample.acceptance_rate);
                (Population::Unweighted(sample.particles), counts, record)
            }
        };
        theta = next_theta;
        records.push(record);
    }

    let bin_prob = bin_probabilities(&theta, &counts)?;
    let effective_samples = match &population {
        Population::Weighted(ensemble) => ensemble.ess(),
        Population::Unweighted(particles) => particles.len() as f64,
    };
    Ok(PdfEstimate::new(
        grid,
        bin_prob,
        &theta,
        effective_samples,
        Diagnostics {
            sampler: config.sampler.label().into(),
            stopped_early,
            iterations: records,
        },
    ))
}
