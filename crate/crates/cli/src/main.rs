use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use msmcs_cli::bundle::{read_histogram, workers_from_env, SavedBundle, HISTOGRAM_FILE};
use msmcs_cli::manifest::{resolve, ManifestFile, ModelId, RuleId, SamplerId};
use msmcs_cli::{compare, run_manifest, Reference};

/// Multicanonical sequential Monte Carlo for tail densities.
#[derive(Parser)]
#[command(name = "msmcs", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a manifest and write histogram.csv, diagnostics.json and manifest.toml.
    Run(RunArgs),
    /// Per-bin density errors of a result against a reference.
    Compare(CompareArgs),
    /// P(y > threshold) from a saved result.
    Tail(TailArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML manifest; flags below override its keys.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, value_enum)]
    model: Option<ModelId>,
    #[arg(long, value_enum)]
    sampler: Option<SamplerId>,
    #[arg(long, allow_negative_numbers = true)]
    iterations: Option<i64>,
    #[arg(long, allow_negative_numbers = true)]
    particles: Option<i64>,
    /// Plain MC sample count.
    #[arg(long, allow_negative_numbers = true)]
    samples: Option<i64>,
    #[arg(long, allow_negative_numbers = true)]
    bins: Option<i64>,
    /// Histogram range as `lower,upper`.
    #[arg(long, allow_negative_numbers = true, value_delimiter = ',')]
    range: Option<Vec<f64>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, allow_negative_numbers = true)]
    chains: Option<i64>,
    /// Fraction of each MCMC chain to discard.
    #[arg(long, allow_negative_numbers = true)]
    burn_in: Option<f64>,
    /// Resampling threshold as a fraction of the particle count.
    #[arg(long, allow_negative_numbers = true)]
    ess_min: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    temper_trigger: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    kernel_steps: Option<i64>,
    #[arg(long, allow_negative_numbers = true)]
    step_factor: Option<f64>,
    #[arg(long, value_enum)]
    empty_bin_rule: Option<RuleId>,
    #[arg(long, allow_negative_numbers = true)]
    dof: Option<i64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Result bundle directory.
    result: PathBuf,
    /// Compare against the closed-form chi-square density with this many
    /// degrees of freedom.
    #[arg(
        long,
        conflicts_with = "reference",
        required_unless_present = "reference"
    )]
    chi_square: Option<usize>,
    /// Compare against another histogram.csv or bundle directory.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Write the per-bin table here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TailArgs {
    /// Result bundle directory.
    result: PathBuf,
    /// One or more thresholds.
    #[arg(
        long,
        required = true,
        allow_negative_numbers = true,
        value_delimiter = ','
    )]
    threshold: Vec<f64>,
}

impl RunArgs {
    fn manifest_file(&self) -> Result<ManifestFile> {
        let mut file = match &self.manifest {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                toml::from_str(&text)
                    .map_err(|e| anyhow::anyhow!("{}: {}", path.display(), e.message()))?
            }
            None => ManifestFile::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field.clone() { file.$field = Some(v); })*
            };
        }
        set!(
            model,
            sampler,
            iterations,
            particles,
            samples,
            bins,
            range,
            seed,
            chains,
            burn_in,
            ess_min,
            temper_trigger,
            kernel_steps,
            step_factor,
            empty_bin_rule,
            dof,
            out
        );
        Ok(file)
    }
}

fn histogram_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(HISTOGRAM_FILE)
    } else {
        path.to_path_buf()
    }
}

fn run(args: RunArgs) -> Result<()> {
    let manifest = resolve(args.manifest_file()?)?;
    let bundle = run_manifest(&manifest, workers_from_env()?)?;
    bundle.write(&manifest.out)?;
    for q in &bundle.tail_queries {
        println!("P(L > {}) = {:e}", q.level, q.probability);
    }
    println!("wrote {}", manifest.out.display());
    Ok(())
}

fn compare_cmd(args: CompareArgs) -> Result<()> {
    let result = read_histogram(&histogram_path(&args.result))?;
    let reference = match (args.chi_square, &args.reference) {
        (Some(dof), None) => Reference::ChiSquare { dof },
        (None, Some(path)) => Reference::Histogram(read_histogram(&histogram_path(path))?),
        _ => bail!("give exactly one of --chi-square or --reference"),
    };
    let report = compare(&result, &reference)?;
    match &args.out {
        Some(path) => fs::write(path, report.to_csv())?,
        None => print!("{}", report.to_csv()),
    }
    eprint!("{}", report.summary());
    Ok(())
}

fn tail(args: TailArgs) -> Result<()> {
    let saved = SavedBundle::open(&args.result)?;
    for t in args.threshold {
        println!("P(y > {t}) = {:e}", saved.tail_probability(t)?);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(a) => run(a),
        Command::Compare(a) => compare_cmd(a),
        Command::Tail(a) => tail(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
