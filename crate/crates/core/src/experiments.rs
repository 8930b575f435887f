//! Dataset generation, experiment configuration, traced runs and the
//! desk-scale reproductions of the IAT tables and the local-mode study.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chain::{Chain, SamplerKind, SamplerSettings};
use crate::diagnostics::stats::{mean, paired_t_greater, standard_error};
use crate::diagnostics::{
    efficiency_ratio, exact_partition_posterior, iat, total_variation, total_variation_discrete,
    DensityAccumulator, DensityEstimate, GaussianMixture, Grid, IatEstimate, Tally, TraceRow,
};
use crate::error::{Error, Result};
use crate::model::{Allocation, DataSource, Dataset, MixingPrior, Model, NormalGammaBase};
use crate::par::map_jobs;
use crate::weights::AlphaMode;

/// The simulated mixtures used in the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedMixture {
    Lepto,
    Bimodal,
    Mix,
    Trimodal,
    /// The wider bimodal mixture of the local-mode study.
    BimodalSm,
}

impl NamedMixture {
    pub const ALL: [NamedMixture; 5] = [
        NamedMixture::Lepto,
        NamedMixture::Bimodal,
        NamedMixture::Mix,
        NamedMixture::Trimodal,
        NamedMixture::BimodalSm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NamedMixture::Lepto => "lepto",
            NamedMixture::Bimodal => "bimodal",
            NamedMixture::Mix => "mix",
            NamedMixture::Trimodal => "trimodal",
            NamedMixture::BimodalSm => "bimodal_sm",
        }
    }

    pub fn mixture(self) -> GaussianMixture {
        let (w, m, s): (&[f64], &[f64], &[f64]) = match self {
            NamedMixture::Lepto => (&[0.67, 0.33], &[0.0, 0.0], &[1.0, 0.25]),
            NamedMixture::Bimodal => (&[0.5, 0.5], &[-1.0, 1.0], &[0.5, 0.5]),
            NamedMixture::Mix => (
                &[0.3, 0.2, 0.25, 0.25],
                &[-2.0, -2.0, 1.5, 4.0],
                &[1.25, 0.25, 0.75, 0.75],
            ),
            NamedMixture::Trimodal => (&[0.25, 0.5, 0.25], &[-1.4, 0.0, 1.4], &[0.3, 0.3, 0.3]),
            NamedMixture::BimodalSm => (&[0.5, 0.5], &[-1.0, 1.0], &[0.6, 0.6]),
        };
        GaussianMixture::new(w.to_vec(), m.to_vec(), s.to_vec())
            .expect("built-in mixtures are valid")
    }
}

impl FromStr for NamedMixture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        NamedMixture::ALL
            .into_iter()
            .find(|m| m.name() == key)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown dataset `{s}`")))
    }
}

fn default_n() -> usize {
    100
}

fn default_scale() -> f64 {
    1.0
}

/// How to obtain the observations of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    Named {
        name: NamedMixture,
        #[serde(default = "default_n")]
        n: usize,
        #[serde(default)]
        seed: u64,
    },
    Custom {
        weights: Vec<f64>,
        means: Vec<f64>,
        sds: Vec<f64>,
        #[serde(default = "default_n")]
        n: usize,
        #[serde(default)]
        seed: u64,
    },
    File {
        path: PathBuf,
        #[serde(default = "default_scale")]
        scale: f64,
    },
}

impl DatasetSpec {
    pub fn named(name: NamedMixture, n: usize, seed: u64) -> Self {
        DatasetSpec::Named { name, n, seed }
    }

    /// The generating mixture, when known.
    pub fn truth(&self) -> Result<Option<GaussianMixture>> {
        match self {
            DatasetSpec::Named { name, .. } => Ok(Some(name.mixture())),
            DatasetSpec::Custom {
                weights,
                means,
                sds,
                ..
            } => GaussianMixture::new(weights.clone(), means.clone(), sds.clone()).map(Some),
            DatasetSpec::File { .. } => Ok(None),
        }
    }

    pub fn load(&self) -> Result<Dataset> {
        match self {
            DatasetSpec::Named { name, n, seed } => {
                generate_dataset(&name.mixture(), name.name(), *n, *seed)
            }
            DatasetSpec::Custom { n, seed, .. } => {
                let mix = self.truth()?.expect("custom mixtures carry their truth");
                generate_dataset(&mix, "custom", *n, *seed)
            }
            DatasetSpec::File { path, scale } => {
                if !(*scale > 0.0 && scale.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "scale {scale} must be positive"
                    )));
                }
                Dataset::from_file(path, *scale)
            }
        }
    }
}

/// `n` iid draws from `mix`, reproducible under `seed`.
pub fn generate_dataset(mix: &GaussianMixture, name: &str, n: usize, seed: u64) -> Result<Dataset> {
    mix.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..n).map(|_| mix.sample(&mut rng)).collect();
    Dataset::new(
        name,
        DataSource::Generated {
            spec: name.to_string(),
            seed,
        },
        values,
    )
}

/// Parses `dp:1`, `py:0.5,0.5`, `esb:1,1`, `gp:1,1`, or a bare family
/// name with the default hyperparameters.
pub fn parse_prior(s: &str) -> Result<MixingPrior> {
    match s.trim().to_ascii_lowercase().as_str() {
        "dp" => Ok(MixingPrior::Dp { beta: 1.0 }),
        "py" => Ok(MixingPrior::Py {
            sigma: 0.5,
            beta: 0.5,
        }),
        "esb" => Ok(MixingPrior::Esb { a: 1.0, b: 1.0 }),
        "gp" => Ok(MixingPrior::Gp { a: 1.0, b: 1.0 }),
        _ => MixingPrior::from_str(s),
    }
}

/// Everything needed to run and record one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub prior: MixingPrior,
    pub sampler: SamplerKind,
    pub iterations: u64,
    pub burn_in: u64,
    pub seed: u64,
    /// Restricted scans per split-merge launch state.
    pub scans: usize,
    pub alpha_mode: AlphaMode,
    pub accelerate: bool,
    /// Base measure; `None` centres the default one at the sample mean.
    pub base: Option<NormalGammaBase>,
    /// Directory receiving `trace.csv` and `summary.json`.
    pub output: PathBuf,
    /// Write measured step times into the trace. Off by default so that
    /// reruns give byte-identical traces.
    pub record_timing: bool,
    /// Summary of a reference run for efficiency ratios.
    pub reference: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: DatasetSpec::named(NamedMixture::Lepto, 100, 0),
            prior: MixingPrior::Dp { beta: 1.0 },
            sampler: SamplerKind::Oas,
            iterations: 200_000,
            burn_in: 10_000,
            seed: 1,
            scans: 10,
            alpha_mode: AlphaMode::default(),
            accelerate: true,
            base: None,
            output: PathBuf::from("out"),
            record_timing: false,
            reference: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn settings(&self) -> SamplerSettings {
        let mut s = SamplerSettings::default();
        s.oas.alpha_mode = self.alpha_mode;
        s.oas.accelerate = self.accelerate;
        s.split_merge.scans = self.scans;
        s.split_merge.alpha_mode = self.alpha_mode;
        s.split_merge.accelerate = self.accelerate;
        s
    }

    /// Loads the data and builds the model, rejecting incompatible
    /// sampler and prior pairs.
    pub fn model(&self) -> Result<Model> {
        self.sampler.check_prior(&self.prior)?;
        let data = self.dataset.load()?;
        let base = match self.base {
            Some(b) => NormalGammaBase::new(b.mu0, b.lambda0, b.a0, b.b0)?,
            None => NormalGammaBase::default_for(&data),
        };
        Model::new(&data, base, self.prior)
    }
}

/// Post-burn-in monitored series of one chain.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChainSeries {
    pub k_n: Vec<f64>,
    pub deviance: Vec<f64>,
    /// Time spent in sampler steps after burn-in.
    pub wall_secs: f64,
    pub split_merge_acceptance: Option<f64>,
}

/// Runs a chain and keeps `k_n` (and optionally the deviance) after
/// burn-in. Only the sampler steps are timed.
pub fn run_series(
    model: Arc<Model>,
    kind: SamplerKind,
    settings: SamplerSettings,
    seed: u64,
    burn_in: u64,
    iterations: u64,
    track_deviance: bool,
) -> Result<ChainSeries> {
    let mut chain = Chain::new(model, kind, settings, seed)?;
    chain.run(burn_in)?;
    let mut out = ChainSeries {
        k_n: Vec::with_capacity(iterations as usize),
        ..Default::default()
    };
    let start = Instant::now();
    let mut excluded = 0.0;
    for _ in 0..iterations {
        chain.step()?;
        let t = Instant::now();
        out.k_n.push(chain.k() as f64);
        if track_deviance {
            out.deviance.push(chain.deviance());
        }
        excluded += t.elapsed().as_secs_f64();
    }
    out.wall_secs = start.elapsed().as_secs_f64() - excluded;
    out.split_merge_acceptance = chain.split_merge_acceptance();
    Ok(out)
}

/// Summary record written next to a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub dataset: String,
    pub n: usize,
    pub prior: String,
    pub sampler: SamplerKind,
    pub iterations: u64,
    pub burn_in: u64,
    pub seed: u64,
    pub tau_k: Option<IatEstimate>,
    pub tau_deviance: Option<IatEstimate>,
    /// Why an IAT is missing, if one is.
    pub iat_note: Option<String>,
    pub wall_secs: f64,
    pub mean_wall_ns: f64,
    pub efficiency_k: Option<f64>,
    pub efficiency_deviance: Option<f64>,
    pub split_merge_acceptance: Option<f64>,
}

pub const TRACE_HEADER: [&str; 5] = ["iter", "k_n", "deviance", "partition", "wall_ns"];

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            path: path.to_path_buf(),
            message: format!("{other:?}"),
        },
    }
}

/// Runs the configured chain, writes `trace.csv` and `summary.json` into
/// the output directory and returns the summary.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunSummary> {
    let model = Arc::new(config.model()?);
    let reference = match &config.reference {
        Some(p) => Some(read_summary(p)?),
        None => None,
    };
    fs::create_dir_all(&config.output).map_err(|e| Error::io(&config.output, e))?;
    let trace_path = config.output.join("trace.csv");
    let file = fs::File::create(&trace_path).map_err(|e| Error::io(&trace_path, e))?;
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(file);
    writer
        .write_record(TRACE_HEADER)
        .map_err(|e| csv_error(&trace_path, e))?;

    let mut chain = Chain::new(
        Arc::clone(&model),
        config.sampler,
        config.settings(),
        config.seed,
    )?;
    chain.run(config.burn_in)?;
    let mut k_series = Vec::with_capacity(config.iterations as usize);
    let mut d_series = Vec::with_capacity(config.iterations as usize);
    let mut total_ns: u128 = 0;
    for _ in 0..config.iterations {
        let start = Instant::now();
        chain.step()?;
        let ns = start.elapsed().as_nanos();
        total_ns += ns;
        let row = chain.trace_row(if config.record_timing { ns as u64 } else { 0 });
        k_series.push(row.k_n as f64);
        d_series.push(row.deviance);
        writer
            .serialize(&row)
            .map_err(|e| csv_error(&trace_path, e))?;
    }
    writer.flush().map_err(|e| Error::io(&trace_path, e))?;

    let (tau_k, note_k) = split_iat(&k_series);
    let (tau_d, note_d) = split_iat(&d_series);
    let wall_secs = total_ns as f64 * 1e-9;
    let efficiency = |tau: Option<IatEstimate>, r: Option<IatEstimate>, r_secs: f64| match (tau, r)
    {
        (Some(t), Some(r)) => efficiency_ratio(t.tau, wall_secs, r.tau, r_secs).ok(),
        _ => None,
    };
    let summary = RunSummary {
        dataset: model_name(config),
        n: model.n(),
        prior: config.prior.to_string(),
        sampler: config.sampler,
        iterations: config.iterations,
        burn_in: config.burn_in,
        seed: config.seed,
        tau_k,
        tau_deviance: tau_d,
        iat_note: note_k.or(note_d),
        wall_secs,
        mean_wall_ns: if config.iterations > 0 {
            total_ns as f64 / config.iterations as f64
        } else {
            0.0
        },
        efficiency_k: reference
            .as_ref()
            .and_then(|r| efficiency(tau_k, r.tau_k, r.wall_secs)),
        efficiency_deviance: reference
            .as_ref()
            .and_then(|r| efficiency(tau_d, r.tau_deviance, r.wall_secs)),
        split_merge_acceptance: chain.split_merge_acceptance(),
    };
    let summary_path = config.output.join("summary.json");
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    fs::write(&summary_path, json + "\n").map_err(|e| Error::io(&summary_path, e))?;
    Ok(summary)
}

fn model_name(config: &ExperimentConfig) -> String {
    match &config.dataset {
        DatasetSpec::Named { name, .. } => name.name().to_string(),
        DatasetSpec::Custom { .. } => "custom".to_string(),
        DatasetSpec::File { path, .. } => path.display().to_string(),
    }
}

fn split_iat(series: &[f64]) -> (Option<IatEstimate>, Option<String>) {
    match iat(series) {
        Ok(t) => (Some(t), None),
        Err(e) => (None, Some(e.to_string())),
    }
}

pub fn read_summary(path: impl AsRef<Path>) -> Result<RunSummary> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Reads a trace written by [`run_experiment`].
pub fn read_trace(path: impl AsRef<Path>) -> Result<Vec<TraceRow>> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.iter().ne(TRACE_HEADER) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            message: format!(
                "unexpected trace header `{}`",
                header.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    reader
        .deserialize()
        .map(|r| r.map_err(|e| csv_error(path, e)))
        .collect()
}

/// Grid of runs behind the IAT and efficiency tables.
#[derive(Debug, Clone, PartialEq)]
pub struct IatStudy {
    pub datasets: Vec<DatasetSpec>,
    pub priors: Vec<MixingPrior>,
    pub samplers: Vec<SamplerKind>,
    pub iterations: u64,
    pub burn_in: u64,
    pub seeds: Vec<u64>,
    pub workers: usize,
    pub settings: SamplerSettings,
}

impl IatStudy {
    /// Desk-scale grid over the simulated datasets and all priors.
    pub fn desk_scale(seed: u64) -> Self {
        IatStudy {
            datasets: [
                NamedMixture::Lepto,
                NamedMixture::Bimodal,
                NamedMixture::Mix,
            ]
            .into_iter()
            .map(|m| DatasetSpec::named(m, 100, seed))
            .collect(),
            priors: ["dp", "py", "esb", "gp"]
                .iter()
                .map(|p| parse_prior(p).unwrap())
                .collect(),
            samplers: vec![SamplerKind::Marginal, SamplerKind::Oas, SamplerKind::Ooas],
            iterations: 200_000,
            burn_in: 10_000,
            seeds: vec![seed],
            workers: 0,
            settings: SamplerSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IatRow {
    pub dataset: String,
    pub prior: String,
    pub sampler: SamplerKind,
    pub seed: u64,
    pub tau_k: Option<f64>,
    pub tau_deviance: Option<f64>,
    pub wall_secs: f64,
}

/// Runs every compatible (dataset, prior, sampler, seed) cell.
pub fn run_iat_study(study: &IatStudy) -> Result<Vec<IatRow>> {
    let mut models = Vec::new();
    for spec in &study.datasets {
        let data = spec.load()?;
        for prior in &study.priors {
            let model = Arc::new(Model::new(
                &data,
                NormalGammaBase::default_for(&data),
                *prior,
            )?);
            models.push((data.name().to_string(), model));
        }
    }
    let mut jobs = Vec::new();
    for (m, (_, model)) in models.iter().enumerate() {
        for &sampler in &study.samplers {
            if sampler.check_prior(model.prior()).is_err() {
                continue;
            }
            for &seed in &study.seeds {
                jobs.push((m, sampler, seed));
            }
        }
    }
    let results = map_jobs(jobs.len(), study.workers, |t| {
        let (m, sampler, seed) = jobs[t];
        let (name, model) = &models[m];
        let series = run_series(
            Arc::clone(model),
            sampler,
            study.settings,
            seed,
            study.burn_in,
            study.iterations,
            true,
        )?;
        Ok(IatRow {
            dataset: name.clone(),
            prior: model.prior().short_name().to_string(),
            sampler,
            seed,
            tau_k: iat(&series.k_n).ok().map(|e| e.tau),
            tau_deviance: iat(&series.deviance).ok().map(|e| e.tau),
            wall_secs: series.wall_secs,
        })
    });
    results.into_iter().collect()
}

fn cells(rows: &[IatRow]) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = Vec::new();
    for r in rows {
        let key = (r.dataset.clone(), r.prior.clone());
        if !out.contains(&key) {
            out.push(key);
        }
    }
    out
}

fn mean_se(values: &[f64]) -> String {
    match values.len() {
        0 => "-".to_string(),
        1 => format!("{:.2}", values[0]),
        _ => format!("{:.2} ({:.2})", mean(values), standard_error(values)),
    }
}

/// IAT of `k_n` and of the deviance per cell, averaged over seeds.
pub fn format_iat_table(rows: &[IatRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<10} {:<6} {:<12} {:>18} {:>18}",
        "dataset", "prior", "sampler", "tau(k_n)", "tau(D_v)"
    );
    for (dataset, prior) in cells(rows) {
        let mut samplers: Vec<SamplerKind> = Vec::new();
        for r in rows
            .iter()
            .filter(|r| r.dataset == dataset && r.prior == prior)
        {
            if !samplers.contains(&r.sampler) {
                samplers.push(r.sampler);
            }
        }
        for sampler in samplers {
            let sel: Vec<&IatRow> = rows
                .iter()
                .filter(|r| r.dataset == dataset && r.prior == prior && r.sampler == sampler)
                .collect();
            let k: Vec<f64> = sel.iter().filter_map(|r| r.tau_k).collect();
            let d: Vec<f64> = sel.iter().filter_map(|r| r.tau_deviance).collect();
            let _ = writeln!(
                s,
                "{:<10} {:<6} {:<12} {:>18} {:>18}",
                dataset,
                prior,
                sampler.name(),
                mean_se(&k),
                mean_se(&d)
            );
        }
    }
    s
}

/// Efficiency of each sampler relative to the OAS run with the same seed.
pub fn format_efficiency_table(rows: &[IatRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<10} {:<6} {:<12} {:>18} {:>18}",
        "dataset", "prior", "sampler", "E(k_n)", "E(D_v)"
    );
    for (dataset, prior) in cells(rows) {
        let cell: Vec<&IatRow> = rows
            .iter()
            .filter(|r| r.dataset == dataset && r.prior == prior)
            .collect();
        let mut samplers: Vec<SamplerKind> = Vec::new();
        for r in &cell {
            if r.sampler != SamplerKind::Oas && !samplers.contains(&r.sampler) {
                samplers.push(r.sampler);
            }
        }
        for sampler in samplers {
            let mut ek = Vec::new();
            let mut ed = Vec::new();
            for r in cell.iter().filter(|r| r.sampler == sampler) {
                let Some(base) = cell
                    .iter()
                    .find(|b| b.sampler == SamplerKind::Oas && b.seed == r.seed)
                else {
                    continue;
                };
                if let (Some(t), Some(b)) = (r.tau_k, base.tau_k) {
                    ek.extend(efficiency_ratio(t, r.wall_secs, b, base.wall_secs).ok());
                }
                if let (Some(t), Some(b)) = (r.tau_deviance, base.tau_deviance) {
                    ed.extend(efficiency_ratio(t, r.wall_secs, b, base.wall_secs).ok());
                }
            }
            let _ = writeln!(
                s,
                "{:<10} {:<6} {:<12} {:>18} {:>18}",
                dataset,
                prior,
                sampler.name(),
                mean_se(&ek),
                mean_se(&ed)
            );
        }
    }
    s
}

/// Protocol of the local-mode escape study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LocalModeStudy {
    pub truth: NamedMixture,
    pub prior: MixingPrior,
    pub replicates: usize,
    pub n: usize,
    pub seed: u64,
    pub scans: usize,
    /// Burn-in sweeps of the arm without split-merge moves.
    pub plain_burn_in: u64,
    /// Burn-in sweeps of the other arm, each followed by one move.
    pub split_merge_burn_in: u64,
    /// Sweeps used for the density estimate in both arms.
    pub kept: u64,
    pub workers: usize,
}

impl Default for LocalModeStudy {
    fn default() -> Self {
        LocalModeStudy {
            truth: NamedMixture::Trimodal,
            prior: MixingPrior::Dp { beta: 1.0 },
            replicates: 100,
            n: 100,
            seed: 1,
            scans: 10,
            plain_burn_in: 110,
            split_merge_burn_in: 10,
            kept: 100,
            workers: 0,
        }
    }
}

/// Density estimates of one replicate on the truth's grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FigureGrid {
    pub xs: Vec<f64>,
    pub truth: Vec<f64>,
    pub with_split_merge: Vec<f64>,
    pub without_split_merge: Vec<f64>,
}

impl FigureGrid {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        w.write_record(["x", "f", "f_hat_with", "f_hat_without"])
            .map_err(|e| csv_error(path, e))?;
        for i in 0..self.xs.len() {
            w.write_record([
                self.xs[i].to_string(),
                self.truth[i].to_string(),
                self.with_split_merge[i].to_string(),
                self.without_split_merge[i].to_string(),
            ])
            .map_err(|e| csv_error(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalModeRecord {
    pub tv_without: Vec<f64>,
    pub tv_with: Vec<f64>,
    /// One-sided paired t test of `tv_without > tv_with`; needs two
    /// replicates.
    pub p_value: Option<f64>,
    pub figure: Option<FigureGrid>,
}

impl LocalModeRecord {
    pub fn mean_without(&self) -> Option<f64> {
        (!self.tv_without.is_empty()).then(|| mean(&self.tv_without))
    }

    pub fn mean_with(&self) -> Option<f64> {
        (!self.tv_with.is_empty()).then(|| mean(&self.tv_with))
    }

    pub fn se_without(&self) -> Option<f64> {
        (self.tv_without.len() > 1).then(|| standard_error(&self.tv_without))
    }

    pub fn se_with(&self) -> Option<f64> {
        (self.tv_with.len() > 1).then(|| standard_error(&self.tv_with))
    }
}

fn stream(seed: u64, replicate: usize, s: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ replicate as u64);
    rng.set_stream(s);
    rng
}

struct ReplicateOutcome {
    tv_without: f64,
    tv_with: f64,
    figure: FigureGrid,
}

fn local_mode_replicate(study: &LocalModeStudy, replicate: usize) -> Result<ReplicateOutcome> {
    let truth = study.truth.mixture();
    let mut data_rng = stream(study.seed, replicate, 0);
    let values: Vec<f64> = (0..study.n).map(|_| truth.sample(&mut data_rng)).collect();
    let data = Dataset::new(
        study.truth.name(),
        DataSource::Generated {
            spec: study.truth.name().to_string(),
            seed: study.seed ^ replicate as u64,
        },
        values,
    )?;
    let model = Arc::new(Model::new(
        &data,
        NormalGammaBase::default_for(&data),
        study.prior,
    )?);
    let mut settings = SamplerSettings::default();
    settings.split_merge.scans = study.scans;
    let grid = Grid::covering(&truth);

    let arm = |kind: SamplerKind, burn_in: u64, s: u64| -> Result<DensityEstimate> {
        let alloc = Allocation::single_block(model.n());
        let mut chain = Chain::with_rng(
            Arc::clone(&model),
            kind,
            settings,
            stream(study.seed, replicate, s),
            alloc,
        )?;
        chain.run(burn_in)?;
        chain.switch_sampler(SamplerKind::Oas)?;
        let mut acc = DensityAccumulator::new(grid);
        for _ in 0..study.kept {
            chain.step()?;
            acc.add(chain.allocation(), chain.components());
        }
        acc.finish()
    };
    let without = arm(SamplerKind::Oas, study.plain_burn_in, 1)?;
    let with = arm(SamplerKind::OasWithSplitmerge, study.split_merge_burn_in, 2)?;
    Ok(ReplicateOutcome {
        tv_without: total_variation(&truth, &without)?,
        tv_with: total_variation(&truth, &with)?,
        figure: FigureGrid {
            xs: grid.xs(),
            truth: grid.xs().iter().map(|&x| truth.pdf(x)).collect(),
            with_split_merge: with.values,
            without_split_merge: without.values,
        },
    })
}

/// Runs both arms on every replicate dataset. Replicate `r` uses seed
/// `seed ^ r` with separate streams for data and each arm.
pub fn local_mode_experiment(study: &LocalModeStudy) -> Result<LocalModeRecord> {
    if study.kept == 0 {
        return Err(Error::InvalidParameter(
            "the density estimate needs at least one kept sweep".into(),
        ));
    }
    let outcomes: Vec<ReplicateOutcome> = map_jobs(study.replicates, study.workers, |r| {
        local_mode_replicate(study, r)
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let tv_without: Vec<f64> = outcomes.iter().map(|o| o.tv_without).collect();
    let tv_with: Vec<f64> = outcomes.iter().map(|o| o.tv_with).collect();
    let p_value = if outcomes.len() >= 2 {
        Some(paired_t_greater(&tv_without, &tv_with)?.p_value)
    } else {
        None
    };
    Ok(LocalModeRecord {
        tv_without,
        tv_with,
        p_value,
        figure: outcomes.into_iter().next().map(|o| o.figure),
    })
}

/// The four settings of the local-mode table.
pub fn local_mode_settings() -> Vec<(NamedMixture, MixingPrior)> {
    let dp = MixingPrior::Dp { beta: 1.0 };
    let gp = MixingPrior::Gp { a: 1.0, b: 1.0 };
    vec![
        (NamedMixture::Trimodal, dp),
        (NamedMixture::Trimodal, gp),
        (NamedMixture::BimodalSm, dp),
        (NamedMixture::BimodalSm, gp),
    ]
}

fn opt(v: Option<f64>) -> String {
    v.map_or("-".to_string(), |x| format!("{x:.4}"))
}

pub fn format_local_mode_table(results: &[(NamedMixture, MixingPrior, LocalModeRecord)]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<11} {:<6} {:>20} {:>20} {:>10}",
        "truth", "prior", "without split-merge", "with split-merge", "p"
    );
    for (truth, prior, rec) in results {
        let _ = writeln!(
            s,
            "{:<11} {:<6} {:>20} {:>20} {:>10}",
            truth.name(),
            prior.short_name(),
            format!("{} ({})", opt(rec.mean_without()), opt(rec.se_without())),
            format!("{} ({})", opt(rec.mean_with()), opt(rec.se_with())),
            opt(rec.p_value)
        );
    }
    s
}

/// Visit frequencies of the partitions of `iterations` steps after
/// `burn_in`, keyed by canonical labels.
pub fn partition_frequencies(
    model: Arc<Model>,
    kind: SamplerKind,
    settings: SamplerSettings,
    seed: u64,
    burn_in: u64,
    iterations: u64,
) -> Result<HashMap<Vec<usize>, f64>> {
    let mut chain = Chain::new(model, kind, settings, seed)?;
    chain.run(burn_in)?;
    let mut tally: Tally<Vec<usize>> = Tally::new();
    for _ in 0..iterations {
        chain.step()?;
        tally.add_ref(chain.allocation().labels());
    }
    Ok(tally.frequencies())
}

/// Distance between a sampler's partition frequencies and the exact
/// posterior on a small dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub sampler: SamplerKind,
    pub prior: String,
    pub partitions: usize,
    pub visited: usize,
    pub total_variation: f64,
}

pub fn oracle_check(
    model: Arc<Model>,
    kind: SamplerKind,
    settings: SamplerSettings,
    seed: u64,
    burn_in: u64,
    iterations: u64,
) -> Result<OracleCheck> {
    kind.check_prior(model.prior())?;
    let exact: HashMap<Vec<usize>, f64> =
        exact_partition_posterior(model.data(), model.prior(), model.base())?
            .into_iter()
            .map(|(a, p)| (a.labels().to_vec(), p))
            .collect();
    let freq = partition_frequencies(
        Arc::clone(&model),
        kind,
        settings,
        seed,
        burn_in,
        iterations,
    )?;
    Ok(OracleCheck {
        sampler: kind,
        prior: model.prior().to_string(),
        partitions: exact.len(),
        visited: freq.len(),
        total_variation: total_variation_discrete(&exact, &freq),
    })
}
