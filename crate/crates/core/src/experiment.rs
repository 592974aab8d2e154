//! Batch experiments behind the command-line tool.
//!
//! A flat TOML document describes the system, the trigger and list-valued
//! sweep axes. Unknown keys are rejected. Every command writes CSV files and
//! a `manifest.json` holding the resolved configuration, seed list and crate
//! version, so a rerun with the same manifest reproduces the CSVs.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::mpsc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{FilterKind, ParticleSet};
use crate::gaussian::{self, BoxSet, Gaussian};
use crate::horizon;
use crate::likelihood::{LikelihoodEvaluator, LikelihoodKind};
use crate::model::{BenchmarkSystem, LinearGaussian, StateSpaceModel};
use crate::oracle::{self, BoundsSource, McTriggerPmf};
use crate::rng::{stream_rng, Stream};
use crate::sim::{self, HorizonRule, Protocol, SimConfig};
use crate::trigger::{TriggerKind, TriggerRule};

/// Bumped whenever a CSV column changes.
pub const SCHEMA_VERSION: u32 = 1;

/// A scalar or a list of values to sweep over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

/// `K` seeds `0..K`, or an explicit list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeedSpec {
    Count(u64),
    List(Vec<u64>),
}

impl SeedSpec {
    pub fn seeds(&self) -> Vec<u64> {
        match self {
            SeedSpec::Count(k) => (0..*k).collect(),
            SeedSpec::List(list) => list.clone(),
        }
    }
}

impl FromStr for SeedSpec {
    type Err = Error;

    /// `"20"` is a count; `"3,5,8"` (or `"7,"`) is a list.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let parse = |t: &str| t.trim().parse::<u64>().map_err(|e| Error::Config(format!("bad seed '{t}': {e}")));
        if s.contains(',') {
            Ok(SeedSpec::List(s.split(',').filter(|t| !t.trim().is_empty()).map(parse).collect::<Result<_>>()?))
        } else {
            Ok(SeedSpec::Count(parse(s)?))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelName {
    Benchmark,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterName {
    Bpf,
    Apf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvaluatorName {
    Analytic,
    Mixture,
    Mc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolName {
    Periodic,
    Precompute,
    OpenLoop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleName {
    Heuristic,
    Quantile,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub model: ModelName,
    /// Scalar linear-Gaussian system used when `model = "linear"`.
    pub lg_a: f64,
    pub lg_c: f64,
    pub lg_q: f64,
    pub lg_r: f64,
    pub lg_prior_mean: f64,
    pub lg_prior_var: f64,

    pub trigger: TriggerKind,
    pub delta: OneOrMany<f64>,
    pub particles: OneOrMany<usize>,
    pub filter: OneOrMany<FilterName>,
    pub evaluator: OneOrMany<EvaluatorName>,
    /// Mixture size for the APF no-event proposal and the mixture evaluator.
    pub mixture_d: usize,
    pub variance_scale: Option<f64>,
    pub mc_m: usize,
    pub steps: usize,
    pub seeds: SeedSpec,

    pub protocol: ProtocolName,
    pub horizon_rule: RuleName,
    pub c: f64,
    pub alpha: f64,
    pub fixed_n: usize,
    pub n_max: Option<usize>,

    /// Trigger-probability and horizon study.
    pub study_delta: OneOrMany<f64>,
    pub study_particles: OneOrMany<usize>,
    pub study_c: OneOrMany<f64>,
    pub study_filter: FilterName,
    pub study_evaluator: EvaluatorName,
    pub study_runs: usize,
    pub mc_repetitions: usize,
    pub study_max_n: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelName::Benchmark,
            lg_a: 0.9,
            lg_c: 1.0,
            lg_q: 1.0,
            lg_r: 0.5,
            lg_prior_mean: 0.0,
            lg_prior_var: 1.0,
            trigger: TriggerKind::Ibt,
            delta: OneOrMany::One(2.5),
            particles: OneOrMany::One(100),
            filter: OneOrMany::Many(vec![FilterName::Bpf, FilterName::Apf]),
            evaluator: OneOrMany::Many(vec![EvaluatorName::Analytic, EvaluatorName::Mc]),
            mixture_d: 3,
            variance_scale: None,
            mc_m: 1,
            steps: 10_000,
            seeds: SeedSpec::Count(20),
            protocol: ProtocolName::Periodic,
            horizon_rule: RuleName::Heuristic,
            c: 0.1,
            alpha: 0.9,
            fixed_n: 10,
            n_max: None,
            study_delta: OneOrMany::Many(vec![2.5, 7.5]),
            study_particles: OneOrMany::Many(vec![25, 100, 400]),
            study_c: OneOrMany::Many(vec![0.05, 0.1, 0.25]),
            study_filter: FilterName::Apf,
            study_evaluator: EvaluatorName::Analytic,
            study_runs: 100,
            mc_repetitions: 100_000,
            study_max_n: 60,
        }
    }
}

/// One point of a sweep, for one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepJob {
    pub delta: f64,
    pub particles: usize,
    pub filter: FilterName,
    pub evaluator: EvaluatorName,
    pub seed: u64,
    pub sim: SimConfig,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn model(&self) -> Result<Box<dyn StateSpaceModel>> {
        Ok(match self.model {
            ModelName::Benchmark => Box::new(BenchmarkSystem::new()),
            ModelName::Linear => Box::new(LinearGaussian::scalar(
                self.lg_a,
                self.lg_c,
                self.lg_q,
                self.lg_r,
                self.lg_prior_mean,
                self.lg_prior_var,
            )?),
        })
    }

    pub fn filter_kind(&self, name: FilterName) -> FilterKind {
        match name {
            FilterName::Bpf => FilterKind::Bpf,
            FilterName::Apf => FilterKind::ApfFa { d: self.mixture_d, variance_scale: self.variance_scale },
        }
    }

    pub fn evaluator(&self, name: EvaluatorName) -> Result<LikelihoodEvaluator> {
        LikelihoodEvaluator::new(match name {
            EvaluatorName::Analytic => LikelihoodKind::Analytic,
            EvaluatorName::Mixture => LikelihoodKind::Mixture { d: self.mixture_d, variance_scale: self.variance_scale },
            EvaluatorName::Mc => LikelihoodKind::MonteCarlo { m: self.mc_m },
        })
    }

    pub fn protocol(&self) -> Protocol {
        match self.protocol {
            ProtocolName::Periodic => Protocol::PeriodicDownlink,
            ProtocolName::OpenLoop => Protocol::OpenLoop,
            ProtocolName::Precompute => Protocol::Precompute {
                c: self.c,
                rule: match self.horizon_rule {
                    RuleName::Heuristic => HorizonRule::Heuristic,
                    RuleName::Quantile => HorizonRule::Quantile(self.alpha),
                    RuleName::Fixed => HorizonRule::Fixed(self.fixed_n),
                },
                n_max: self.n_max,
            },
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn sim_config(&self, delta: f64, particles: usize, filter: FilterName, evaluator: EvaluatorName, seed: u64, steps: usize) -> Result<SimConfig> {
        Ok(SimConfig {
            trigger: TriggerRule::identity(self.trigger, delta, 1)?,
            filter: self.filter_kind(filter),
            evaluator: self.evaluator(evaluator)?,
            particles,
            steps,
            seed,
            protocol: self.protocol(),
        })
    }

    /// Cartesian product of the sweep axes and `seeds`, in a fixed order.
    pub fn sweep_jobs(&self, seeds: &[u64]) -> Result<Vec<SweepJob>> {
        let mut jobs = Vec::new();
        for delta in self.delta.to_vec() {
            for particles in self.particles.to_vec() {
                for filter in self.filter.to_vec() {
                    for evaluator in self.evaluator.to_vec() {
                        for &seed in seeds {
                            let sim = self.sim_config(delta, particles, filter, evaluator, seed, self.steps)?;
                            jobs.push(SweepJob { delta, particles, filter, evaluator, seed, sim });
                        }
                    }
                }
            }
        }
        Ok(jobs)
    }

    /// Observer-run seeds for the horizon study when none are given.
    pub fn study_seeds(&self) -> Vec<u64> {
        (0..self.study_runs as u64).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let model = self.model()?;
        if model.meas_dim() != 1 {
            return Err(Error::Config("configured systems must have scalar measurements".into()));
        }
        let nonempty = [
            self.delta.to_vec().is_empty(),
            self.particles.to_vec().is_empty(),
            self.filter.to_vec().is_empty(),
            self.evaluator.to_vec().is_empty(),
            self.study_delta.to_vec().is_empty(),
            self.study_particles.to_vec().is_empty(),
            self.study_c.to_vec().is_empty(),
        ];
        if nonempty.iter().any(|e| *e) {
            return Err(Error::Config("sweep lists must not be empty".into()));
        }
        for job in self.sweep_jobs(&[0])? {
            job.sim.validate()?;
        }
        for &delta in &self.study_delta.to_vec() {
            for &n in &self.study_particles.to_vec() {
                self.sim_config(delta, n, self.study_filter, self.study_evaluator, 0, 1)?.validate()?;
            }
        }
        for &c in &self.study_c.to_vec() {
            horizon::HorizonCost::new(c)?;
        }
        if self.study_runs == 0 || self.mc_repetitions == 0 || self.study_max_n == 0 {
            return Err(Error::Config("study_runs, mc_repetitions and study_max_n must be positive".into()));
        }
        Ok(())
    }
}

/// CSV row of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub delta: f64,
    #[serde(rename = "N")]
    pub particles: usize,
    pub filter: FilterName,
    pub evaluator: EvaluatorName,
    pub seed: u64,
    #[serde(rename = "C_r")]
    pub communication_rate: f64,
    pub ce_all: f64,
    pub ce_events: Option<f64>,
    pub ce_noevents: Option<f64>,
    pub mean_n_hat: Option<f64>,
    pub forced_fraction: f64,
    pub wall_time: Option<f64>,
}

pub fn run_job(model: &dyn StateSpaceModel, job: &SweepJob, record_wall_time: bool) -> Result<SweepRow> {
    let start = Instant::now();
    let out = sim::run(model, &job.sim)?;
    let s = out.summary;
    Ok(SweepRow {
        delta: job.delta,
        particles: job.particles,
        filter: job.filter,
        evaluator: job.evaluator,
        seed: job.seed,
        communication_rate: s.communication_rate,
        ce_all: s.ce_all,
        ce_events: s.ce_events,
        ce_noevents: s.ce_noevents,
        mean_n_hat: s.mean_n_hat,
        forced_fraction: s.forced_fraction,
        wall_time: record_wall_time.then(|| start.elapsed().as_secs_f64()),
    })
}

/// Writes rows in index order as they arrive, flushing after each row so an
/// interrupted sweep leaves a valid prefix on disk.
pub struct OrderedCsvWriter<W: Write, R: Serialize> {
    writer: csv::Writer<W>,
    next: usize,
    pending: BTreeMap<usize, R>,
}

impl<W: Write, R: Serialize> OrderedCsvWriter<W, R> {
    pub fn new(inner: W) -> Self {
        Self { writer: csv::Writer::from_writer(inner), next: 0, pending: BTreeMap::new() }
    }

    pub fn push(&mut self, index: usize, row: R) -> Result<()> {
        self.pending.insert(index, row);
        while let Some(row) = self.pending.remove(&self.next) {
            self.writer.serialize(row)?;
            self.writer.flush()?;
            self.next += 1;
        }
        Ok(())
    }

    /// Rows written so far.
    pub fn written(&self) -> usize {
        self.next
    }

    pub fn finish(mut self) -> Result<W> {
        self.writer.flush()?;
        self.writer.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot start worker pool: {e}")))
}

/// Runs `f` over `jobs` on `workers` threads and hands results to `sink` in
/// job order.
fn ordered_parallel<J, T, F, S>(jobs: &[J], workers: usize, f: F, mut sink: S) -> Result<()>
where
    J: Sync,
    T: Send,
    F: Fn(&J) -> Result<T> + Sync,
    S: FnMut(usize, T) -> Result<()>,
{
    let pool = pool(workers)?;
    let (tx, rx) = mpsc::channel();
    let mut first_error = None;
    std::thread::scope(|scope| {
        let f = &f;
        scope.spawn(move || {
            pool.install(|| {
                jobs.par_iter().enumerate().for_each_with(tx, |tx, (i, job)| {
                    let _ = tx.send((i, f(job)));
                })
            })
        });
        let mut ready = BTreeMap::new();
        let mut next = 0;
        for (i, result) in rx {
            ready.insert(i, result);
            while let Some(result) = ready.remove(&next) {
                let outcome = result.and_then(|t| sink(next, t));
                if let Err(e) = outcome {
                    first_error.get_or_insert(e);
                }
                next += 1;
            }
        }
    });
    first_error.map_or(Ok(()), Err)
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub crate_version: String,
    pub schema_version: u32,
    pub seeds: Vec<u64>,
    pub workers: usize,
    pub config: ExperimentConfig,
    pub outputs: Vec<String>,
}

fn write_manifest(out: &Path, manifest: &Manifest) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest)?;
    fs::write(out.join("manifest.json"), text + "\n")?;
    Ok(())
}

fn manifest(command: &str, cfg: &ExperimentConfig, seeds: &[u64], workers: usize, outputs: &[&str]) -> Manifest {
    Manifest {
        command: command.into(),
        crate_version: env!("CARGO_PKG_VERSION").into(),
        schema_version: SCHEMA_VERSION,
        seeds: seeds.to_vec(),
        workers,
        config: cfg.clone(),
        outputs: outputs.iter().map(|s| s.to_string()).collect(),
    }
}

/// Runs every sweep job and writes `results.csv` and `manifest.json` into `out`.
pub fn run_sweep(cfg: &ExperimentConfig, seeds: &[u64], workers: usize, out: &Path, record_wall_time: bool) -> Result<PathBuf> {
    fs::create_dir_all(out)?;
    let jobs = cfg.sweep_jobs(seeds)?;
    write_manifest(out, &manifest("sweep", cfg, seeds, workers, &["results.csv"]))?;
    let model = cfg.model()?;
    let path = out.join("results.csv");
    let mut writer = OrderedCsvWriter::new(fs::File::create(&path)?);
    ordered_parallel(&jobs, workers, |job| run_job(model.as_ref(), job, record_wall_time), |i, row| writer.push(i, row))?;
    writer.finish()?;
    Ok(path)
}

/// Specification of one trigger-probability estimation experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct StudySpec {
    pub trigger: TriggerRule,
    pub filter: FilterKind,
    pub evaluator: LikelihoodEvaluator,
    pub particles: usize,
    /// One observer run per seed.
    pub seeds: Vec<u64>,
    /// Naive Monte Carlo runs per observer run.
    pub mc_repetitions: usize,
    pub max_n: usize,
}

/// Observer estimates of the first-trigger pmf after the initial event,
/// against naive Monte Carlo on the same trigger sets.
///
/// Each observer run starts from its own prior draw and so produces its own
/// bound sequence; the Monte Carlo estimate for that run uses those bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyResult {
    /// `pf[s][n-1]`: observer run `s`'s estimate of `p_T(n)`.
    pub pf: Vec<Vec<f64>>,
    pub pf_mean: Vec<f64>,
    /// Monte Carlo per observer run.
    pub mc_runs: Vec<McTriggerPmf>,
    /// All Monte Carlo runs merged.
    pub mc: McTriggerPmf,
    /// 5% and 95% quantiles over observer runs of the per-run Monte Carlo pmf.
    pub mc_band_lower: Vec<f64>,
    pub mc_band_upper: Vec<f64>,
    /// RMS of `p̂_PF(n) − p̂_MC(n)` over runs and steps, paired by run.
    pub rmse: f64,
}

impl StudyResult {
    /// Fraction of steps `n ≤ n_max` whose mean observer estimate lies inside
    /// the 90% band of the per-run Monte Carlo estimates.
    pub fn band_coverage(&self, n_max: usize) -> f64 {
        let n = n_max.min(self.pf_mean.len());
        let inside = (0..n).filter(|&i| self.mc_band_lower[i] <= self.pf_mean[i] && self.pf_mean[i] <= self.mc_band_upper[i]).count();
        inside as f64 / n as f64
    }

    /// Paired RMSE restricted to steps `n ≤ n_max`.
    pub fn rmse_upto(&self, n_max: usize) -> f64 {
        rms_gap(&self.pf, &self.mc_runs, n_max)
    }
}

fn rms_gap(pf: &[Vec<f64>], mc: &[McTriggerPmf], n_max: usize) -> f64 {
    let n = n_max.min(pf.first().map_or(0, Vec::len));
    let sq: f64 = pf.iter().zip(mc).flat_map(|(a, b)| a[..n].iter().zip(&b.pmf).map(|(x, y)| (x - y).powi(2))).sum();
    (sq / (pf.len() * n) as f64).sqrt()
}

/// Linear-interpolated quantiles over runs, per step.
fn columnwise_quantile(rows: &[Vec<f64>], q: f64) -> Vec<f64> {
    let len = rows.first().map_or(0, Vec::len);
    (0..len)
        .map(|i| {
            let mut column: Vec<f64> = rows.iter().map(|r| r[i]).collect();
            column.sort_by(f64::total_cmp);
            quantile(&column, q)
        })
        .collect()
}

pub fn trigger_probability_study<M: StateSpaceModel + ?Sized>(model: &M, spec: &StudySpec) -> Result<StudyResult> {
    if spec.seeds.is_empty() || spec.mc_repetitions == 0 {
        return Err(Error::InvalidParameter("study needs at least one observer run and one Monte Carlo run".into()));
    }
    let runs = spec.seeds.len();
    let mut pf = Vec::with_capacity(runs);
    let mut mc_runs = Vec::with_capacity(runs);
    for &seed in &spec.seeds {
        let cfg = SimConfig {
            trigger: spec.trigger.clone(),
            filter: spec.filter,
            evaluator: spec.evaluator,
            particles: spec.particles,
            steps: spec.max_n,
            seed,
            protocol: Protocol::PeriodicDownlink,
        };
        let prior = ParticleSet::from_prior(model, spec.particles, &mut stream_rng(seed, Stream::Init, 0))?;
        let ahead = sim::run_ahead(model, &cfg, &prior, spec.max_n)?;
        pf.push(ahead.first_trigger());
        mc_runs.push(oracle::naive_mc_trigger_pmf(model, BoundsSource::Sequence(&ahead.bounds), spec.mc_repetitions, spec.max_n, seed)?);
    }
    let mc = McTriggerPmf::pooled(&mc_runs)?;
    let pf_mean: Vec<f64> = (0..spec.max_n).map(|i| pf.iter().map(|r| r[i]).sum::<f64>() / runs as f64).collect();
    let mc_rows: Vec<Vec<f64>> = mc_runs.iter().map(|m| m.pmf.clone()).collect();
    Ok(StudyResult {
        mc_band_lower: columnwise_quantile(&mc_rows, 0.05),
        mc_band_upper: columnwise_quantile(&mc_rows, 0.95),
        rmse: rms_gap(&pf, &mc_runs, spec.max_n),
        pf,
        pf_mean,
        mc_runs,
        mc,
    })
}

/// Per-step trigger probabilities `p_n = p_T(n) / (1 − Σ_{i<n} p_T(i))`.
pub fn hazard_from_pmf(p_t: &[f64]) -> Vec<f64> {
    let mut survive = 1.0;
    p_t.iter()
        .map(|p| {
            let h = if survive > 0.0 { (p / survive).clamp(0.0, 1.0) } else { 1.0 };
            survive -= p;
            h
        })
        .collect()
}

/// Heuristic horizon on a fixed pmf; `None` if the pmf ends before the
/// search stops.
pub fn heuristic_on_pmf(p_t: &[f64], c: f64) -> Result<Option<usize>> {
    let hazard = hazard_from_pmf(p_t);
    let choice = horizon::heuristic_horizon(|i| Ok(hazard[i - 1]), c, hazard.len())?;
    Ok((!choice.capped).then_some(choice.n_hat))
}

#[derive(Debug, Clone, Serialize)]
struct ProbabilityRow {
    delta: f64,
    #[serde(rename = "N")]
    particles: usize,
    n: usize,
    p_mc: f64,
    p_mc_cp_lower: f64,
    p_mc_cp_upper: f64,
    p_mc_q05: f64,
    p_mc_q95: f64,
    p_pf_mean: f64,
    p_pf_q05: f64,
    p_pf_q95: f64,
}

#[derive(Debug, Clone, Serialize)]
struct RmseRow {
    delta: f64,
    #[serde(rename = "N")]
    particles: usize,
    rmse: f64,
    band_coverage_20: f64,
}

#[derive(Debug, Clone, Serialize)]
struct HorizonRow {
    delta: f64,
    #[serde(rename = "N")]
    particles: usize,
    c: f64,
    n: usize,
    tc_mc: f64,
    tc_pf: f64,
    quantile_marker: Option<usize>,
    argmax_mc: usize,
    heuristic_mc: Option<usize>,
    argmax_pf: usize,
    heuristic_pf: Option<usize>,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Trigger-probability estimation for every `(Δ, N)` of the study axes and the
/// `T_c` curves for every `c` at the largest `N`. Writes
/// `trigger_probability.csv`, `rmse.csv` and `horizon.csv`.
pub fn run_horizon_study(cfg: &ExperimentConfig, seeds: &[u64], workers: usize, out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    let outputs = ["trigger_probability.csv", "rmse.csv", "horizon.csv"];
    write_manifest(out, &manifest("horizon", cfg, seeds, workers, &outputs))?;
    let model = cfg.model()?;
    if seeds.is_empty() {
        return Err(Error::Config("the horizon study needs at least one seed".into()));
    }
    let mut points = Vec::new();
    for delta in cfg.study_delta.to_vec() {
        for particles in cfg.study_particles.to_vec() {
            points.push((delta, particles));
        }
    }
    let largest = cfg.study_particles.to_vec().into_iter().max().unwrap_or(0);
    let mut probs = csv::Writer::from_path(out.join(outputs[0]))?;
    let mut rmse = csv::Writer::from_path(out.join(outputs[1]))?;
    let mut curves = csv::Writer::from_path(out.join(outputs[2]))?;
    let study = |&(delta, particles): &(f64, usize)| -> Result<StudyResult> {
        let spec = StudySpec {
            trigger: TriggerRule::identity(cfg.trigger, delta, 1)?,
            filter: cfg.filter_kind(cfg.study_filter),
            evaluator: cfg.evaluator(cfg.study_evaluator)?,
            particles,
            seeds: seeds.to_vec(),
            mc_repetitions: cfg.mc_repetitions,
            max_n: cfg.study_max_n,
        };
        trigger_probability_study(model.as_ref(), &spec)
    };
    ordered_parallel(&points, workers, study, |i, result| {
        let (delta, particles) = points[i];
        let pf_q05 = columnwise_quantile(&result.pf, 0.05);
        let pf_q95 = columnwise_quantile(&result.pf, 0.95);
        for n in 1..=cfg.study_max_n {
            probs.serialize(ProbabilityRow {
                delta,
                particles,
                n,
                p_mc: result.mc.pmf[n - 1],
                p_mc_cp_lower: result.mc.lower[n - 1],
                p_mc_cp_upper: result.mc.upper[n - 1],
                p_mc_q05: result.mc_band_lower[n - 1],
                p_mc_q95: result.mc_band_upper[n - 1],
                p_pf_mean: result.pf_mean[n - 1],
                p_pf_q05: pf_q05[n - 1],
                p_pf_q95: pf_q95[n - 1],
            })?;
        }
        probs.flush()?;
        rmse.serialize(RmseRow { delta, particles, rmse: result.rmse, band_coverage_20: result.band_coverage(20) })?;
        rmse.flush()?;
        if particles == largest {
            for c in cfg.study_c.to_vec() {
                let (argmax_mc, _) = oracle::exhaustive_tc_argmax(&result.mc.pmf, c, cfg.study_max_n);
                let (argmax_pf, _) = oracle::exhaustive_tc_argmax(&result.pf_mean, c, cfg.study_max_n);
                let heuristic_mc = heuristic_on_pmf(&result.mc.pmf, c)?;
                let heuristic_pf = heuristic_on_pmf(&result.pf_mean, c)?;
                let quantile_marker = horizon::maximizer_lower_bound(&result.mc.pmf, c).ok();
                for n in 1..=cfg.study_max_n {
                    curves.serialize(HorizonRow {
                        delta,
                        particles,
                        c,
                        n,
                        tc_mc: horizon::tc_value(&result.mc.pmf, c, n),
                        tc_pf: horizon::tc_value(&result.pf_mean, c, n),
                        quantile_marker,
                        argmax_mc,
                        heuristic_mc,
                        argmax_pf,
                        heuristic_pf,
                    })?;
                }
            }
            curves.flush()?;
        }
        Ok(())
    })
}

#[derive(Debug, Clone, Serialize)]
struct BoxRow {
    mean: f64,
    var: f64,
    lower: f64,
    upper: f64,
    analytic: f64,
    quadrature: f64,
    abs_diff: f64,
}

#[derive(Debug, Clone, Serialize)]
struct FixedPmfRow {
    delta: f64,
    n: usize,
    p_mc: f64,
    p_mc_lower: f64,
    p_mc_upper: f64,
    censored: f64,
}

/// Calibration tables: analytic vs quadrature box probabilities
/// (`oracle_box.csv`) and the naive Monte Carlo first-trigger pmf for a fixed
/// box around the first predicted measurement (`oracle_pmf.csv`).
pub fn run_oracle(cfg: &ExperimentConfig, seeds: &[u64], out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    let outputs = ["oracle_box.csv", "oracle_pmf.csv"];
    write_manifest(out, &manifest("oracle", cfg, seeds, 1, &outputs))?;
    let mut boxes = csv::Writer::from_path(out.join(outputs[0]))?;
    for mean in [-3.0, 0.0, 0.7, 5.0] {
        for var in [0.01, 0.1, 1.0, 25.0] {
            for (lower, upper) in [(-1.96, 1.96), (0.0, 0.5), (-10.0, -2.0), (4.0, 4.0), (-1e6, 1e6)] {
                let g = Gaussian::scalar(mean, var)?;
                let h = BoxSet::interval(lower, upper)?;
                let analytic = gaussian::box_probability(&g, &h)?;
                let quadrature = oracle::quadrature_box_integral(&g, &h, 1e-10)?;
                boxes.serialize(BoxRow { mean, var, lower, upper, analytic, quadrature, abs_diff: (analytic - quadrature).abs() })?;
            }
        }
    }
    boxes.flush()?;
    let model = cfg.model()?;
    let seed = seeds.first().copied().unwrap_or(0);
    let mut pmfs = csv::Writer::from_path(out.join(outputs[1]))?;
    let center = model.measurement_mean(model.initial().mean(), 1);
    for delta in cfg.study_delta.to_vec() {
        let h = TriggerRule::identity(cfg.trigger, delta, 1)?.build_set(center.as_slice())?;
        let pmf = oracle::naive_mc_trigger_pmf(model.as_ref(), BoundsSource::Fixed(&h), cfg.mc_repetitions, cfg.study_max_n, seed)?;
        for n in 1..=cfg.study_max_n {
            pmfs.serialize(FixedPmfRow {
                delta,
                n,
                p_mc: pmf.pmf[n - 1],
                p_mc_lower: pmf.lower[n - 1],
                p_mc_upper: pmf.upper[n - 1],
                censored: pmf.censored,
            })?;
        }
    }
    pmfs.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_spec_parsing() {
        assert_eq!("20".parse::<SeedSpec>().unwrap(), SeedSpec::Count(20));
        assert_eq!("3, 5,8".parse::<SeedSpec>().unwrap(), SeedSpec::List(vec![3, 5, 8]));
        assert_eq!("7,".parse::<SeedSpec>().unwrap(), SeedSpec::List(vec![7]));
        assert!("x".parse::<SeedSpec>().is_err());
        assert_eq!(SeedSpec::Count(3).seeds(), vec![0, 1, 2]);
    }

    #[test]
    fn config_accepts_scalars_and_lists() {
        let cfg = ExperimentConfig::from_toml_str("delta = 2.5\nparticles = [25, 100]\nfilter = \"apf\"\n").unwrap();
        assert_eq!(cfg.delta.to_vec(), vec![2.5]);
        assert_eq!(cfg.particles.to_vec(), vec![25, 100]);
        assert_eq!(cfg.filter.to_vec(), vec![FilterName::Apf]);
        assert_eq!(cfg.sweep_jobs(&[1, 2]).unwrap().len(), 2 * 2 * 2);
    }

    #[test]
    fn config_rejects_unknown_keys_with_location() {
        let err = ExperimentConfig::from_toml_str("delta = 2.5\ndeltta = 3.0\n").unwrap_err().to_string();
        assert!(err.contains("deltta"), "{err}");
        assert!(err.contains("line 2") || err.contains("2:"), "{err}");
    }

    #[test]
    fn config_rejects_invalid_values() {
        assert!(ExperimentConfig::from_toml_str("delta = -1.0\n").is_err());
        assert!(ExperimentConfig::from_toml_str("particles = 1\n").is_err());
        assert!(ExperimentConfig::from_toml_str("protocol = \"precompute\"\nc = 1.5\n").is_err());
        assert!(ExperimentConfig::from_toml_str("delta = []\n").is_err());
    }

    #[test]
    fn ordered_writer_reorders() {
        let mut w = OrderedCsvWriter::new(Vec::new());
        w.push(1, (1, "b")).unwrap();
        assert_eq!(w.written(), 0);
        w.push(0, (0, "a")).unwrap();
        assert_eq!(w.written(), 2);
        let text = String::from_utf8(w.finish().unwrap()).unwrap();
        assert_eq!(text, "0,a\n1,b\n");
    }

    #[test]
    fn hazard_roundtrip() {
        let per_step = [0.2, 0.5, 0.1, 1.0];
        let back = hazard_from_pmf(&horizon::first_trigger_pmf(&per_step));
        for (a, b) in per_step.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
