use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use oas_core::chain::{SamplerKind, SamplerSettings};
use oas_core::experiments::{
    format_efficiency_table, format_iat_table, format_local_mode_table, generate_dataset,
    local_mode_experiment, local_mode_settings, oracle_check, parse_prior, run_experiment,
    run_iat_study, DatasetSpec, ExperimentConfig, IatStudy, LocalModeStudy, NamedMixture,
};
use oas_core::model::{MixingPrior, Model, NormalGammaBase};
use oas_core::Error;

/// Galaxy velocities are in km/s; this converts them to 1000 km/s.
const GALAXY_SCALE: f64 = 1e-3;

#[derive(Parser)]
#[command(
    name = "oas",
    version,
    about = "Ordered allocation samplers for mixture models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a dataset from a named mixture, one value per line.
    Generate(GenerateArgs),
    /// Run one chain and write trace.csv and summary.json.
    Run(RunArgs),
    /// Rerun a results table at desk scale.
    Reproduce(ReproduceArgs),
    /// Compare samplers with the exact partition posterior on a small dataset.
    OracleCheck(OracleArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// lepto, bimodal, mix, trimodal or bimodal_sm.
    #[arg(long, default_value = "lepto")]
    dataset: NamedMixture,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    iters: Option<u64>,
    #[arg(long)]
    burnin: Option<u64>,
    #[arg(long)]
    sampler: Option<SamplerKind>,
    /// dp, py, esb, gp, or with parameters such as `py:0.5,0.5`.
    #[arg(long)]
    prior: Option<String>,
    /// Named simulated dataset (n = 100 unless --n is given).
    #[arg(long, conflicts_with = "data_file")]
    dataset: Option<NamedMixture>,
    #[arg(long, requires = "dataset")]
    n: Option<usize>,
    /// Seed of the simulated dataset; defaults to 0.
    #[arg(long, requires = "dataset")]
    data_seed: Option<u64>,
    /// Plain-text data file, one value per line.
    #[arg(long)]
    data_file: Option<PathBuf>,
    /// Multiply file data by 1e-3 (galaxy velocities to 1000 km/s).
    #[arg(long, requires = "data_file")]
    scale_galaxy: bool,
    /// Restricted scans per split-merge launch.
    #[arg(long)]
    scans: Option<usize>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Summary of a reference run for efficiency ratios.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Store measured step times in the trace.
    #[arg(long)]
    record_timing: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Table {
    /// Integrated autocorrelation times.
    Table1,
    /// Efficiency relative to OAS.
    Table2,
    /// Local-mode escape with and without split-merge moves.
    Table3,
}

#[derive(Args)]
struct ReproduceArgs {
    table: Table,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Number of seeds per cell (table1/table2).
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    #[arg(long, default_value_t = 200_000)]
    iters: u64,
    #[arg(long, default_value_t = 10_000)]
    burnin: u64,
    /// Replicates per setting (table3).
    #[arg(long, default_value_t = 100)]
    replicates: usize,
    /// Restrict to one prior.
    #[arg(long)]
    prior: Option<String>,
    /// Restrict to one sampler (table1/table2).
    #[arg(long)]
    sampler: Option<SamplerKind>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Add the galaxy data from this file (table1/table2).
    #[arg(long)]
    galaxy: Option<PathBuf>,
    /// Multiply the galaxy data by 1e-3.
    #[arg(long, requires = "galaxy")]
    scale_galaxy: bool,
    /// Directory for the figure grid CSVs (table3).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, default_value = "bimodal")]
    dataset: NamedMixture,
    #[arg(long, default_value_t = 5)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    data_seed: u64,
    #[arg(long, default_value = "dp")]
    prior: String,
    /// One sampler; every compatible one when absent.
    #[arg(long)]
    sampler: Option<SamplerKind>,
    #[arg(long, default_value_t = 200_000)]
    iters: u64,
    #[arg(long, default_value_t = 1_000)]
    burnin: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.downcast_ref::<Error>().map_or("failed", Error::code);
            let message = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {code}: {message}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Generate(a) => generate(a),
        Command::Run(a) => run(a),
        Command::Reproduce(a) => reproduce(a),
        Command::OracleCheck(a) => oracle(a),
    }
}

fn generate(a: GenerateArgs) -> anyhow::Result<()> {
    let data = generate_dataset(&a.dataset.mixture(), a.dataset.name(), a.n, a.seed)?;
    let mut text = String::new();
    for v in data.values() {
        text.push_str(&format!("{v}\n"));
    }
    match a.out {
        Some(path) => write_file(&path, &text),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn write_file(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e).into())
}

fn run(a: RunArgs) -> anyhow::Result<()> {
    let mut config = match &a.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(v) = a.seed {
        config.seed = v;
    }
    if let Some(v) = a.iters {
        config.iterations = v;
    }
    if let Some(v) = a.burnin {
        config.burn_in = v;
    }
    if let Some(v) = a.sampler {
        config.sampler = v;
    }
    if let Some(p) = &a.prior {
        config.prior = parse_prior(p)?;
    }
    if let Some(name) = a.dataset {
        config.dataset = DatasetSpec::named(name, a.n.unwrap_or(100), a.data_seed.unwrap_or(0));
    }
    if let Some(path) = a.data_file {
        config.dataset = DatasetSpec::File {
            path,
            scale: if a.scale_galaxy { GALAXY_SCALE } else { 1.0 },
        };
    }
    if let Some(v) = a.scans {
        config.scans = v;
    }
    if let Some(v) = a.output {
        config.output = v;
    }
    if let Some(v) = a.reference {
        config.reference = Some(v);
    }
    config.record_timing |= a.record_timing;
    let summary = run_experiment(&config)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn priors(filter: &Option<String>) -> anyhow::Result<Vec<MixingPrior>> {
    match filter {
        Some(p) => Ok(vec![parse_prior(p)?]),
        None => ["dp", "py", "esb", "gp"]
            .iter()
            .map(|p| Ok(parse_prior(p)?))
            .collect(),
    }
}

fn reproduce(a: ReproduceArgs) -> anyhow::Result<()> {
    match a.table {
        Table::Table1 | Table::Table2 => {
            let mut study = IatStudy::desk_scale(a.seed);
            study.priors = priors(&a.prior)?;
            if let Some(s) = a.sampler {
                study.samplers = vec![s];
                if s != SamplerKind::Oas && matches!(a.table, Table::Table2) {
                    study.samplers.insert(0, SamplerKind::Oas);
                }
            }
            if let Some(path) = a.galaxy {
                study.datasets.push(DatasetSpec::File {
                    path,
                    scale: if a.scale_galaxy { GALAXY_SCALE } else { 1.0 },
                });
            }
            study.iterations = a.iters;
            study.burn_in = a.burnin;
            study.seeds = (0..a.seeds).map(|s| a.seed + s).collect();
            study.workers = a.workers;
            let rows = run_iat_study(&study)?;
            match a.table {
                Table::Table1 => print!("{}", format_iat_table(&rows)),
                _ => print!("{}", format_efficiency_table(&rows)),
            }
        }
        Table::Table3 => {
            let allowed = match &a.prior {
                Some(p) => Some(parse_prior(p)?),
                None => None,
            };
            if let Some(dir) = &a.output {
                fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            let mut results = Vec::new();
            for (truth, prior) in local_mode_settings() {
                if allowed.is_some_and(|p| p != prior) {
                    continue;
                }
                let study = LocalModeStudy {
                    truth,
                    prior,
                    replicates: a.replicates,
                    seed: a.seed,
                    workers: a.workers,
                    ..Default::default()
                };
                let rec = local_mode_experiment(&study)?;
                if let (Some(dir), Some(fig)) = (&a.output, &rec.figure) {
                    let path = dir.join(format!(
                        "figure_{}_{}.csv",
                        truth.name(),
                        prior.short_name().to_lowercase()
                    ));
                    fig.write_csv(&path)?;
                }
                results.push((truth, prior, rec));
            }
            print!("{}", format_local_mode_table(&results));
        }
    }
    Ok(())
}

fn oracle(a: OracleArgs) -> anyhow::Result<()> {
    let prior = parse_prior(&a.prior)?;
    let data = generate_dataset(&a.dataset.mixture(), a.dataset.name(), a.n, a.data_seed)?;
    let base = NormalGammaBase::default_for(&data);
    let model = Arc::new(Model::new(&data, base, prior)?);
    let kinds: Vec<SamplerKind> = match a.sampler {
        Some(s) => vec![s],
        None => SamplerKind::ALL
            .into_iter()
            .filter(|k| k.check_prior(&prior).is_ok())
            .collect(),
    };
    if kinds.is_empty() {
        bail!("no sampler is compatible with {prior}");
    }
    let results = oas_core::par::map_jobs(kinds.len(), a.workers, |t| {
        oracle_check(
            Arc::clone(&model),
            kinds[t],
            SamplerSettings::default(),
            a.seed,
            a.burnin,
            a.iters,
        )
    });
    println!(
        "{:<24} {:>8} {:>8} {:>10}",
        "sampler", "states", "visited", "tv"
    );
    for r in results {
        let r = r.with_context(|| format!("oracle check under {prior}"))?;
        println!(
            "{:<24} {:>8} {:>8} {:>10.4}",
            r.sampler.name(),
            r.partitions,
            r.visited,
            r.total_variation
        );
    }
    Ok(())
}
