//! Experiment drivers behind the `run`, `fit` and `report` subcommands.
//!
//! A run directory holds `rtt.csv`, `migrations.csv`, `downtime.csv` and
//! `manifest.toml` (tool version, config hash, seeds and the fully resolved
//! config). Passing a manifest back as the scenario replays the run.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{self, ConfigError, ExperimentKind, RatesFile, ScenarioConfig, CONFIG_VERSION};
use crate::dataset::{self, DatasetError};
use crate::metrics::{self, MetricsError, RunSeries, Summary, DOWNTIME_CSV, MIGRATIONS_CSV, RTT_CSV};
use crate::netdelay::Scheme;
use crate::rng::RngStream;
use crate::sim::{SimDuration, SimTime};
use crate::workload::{fit_normal, fit_poisson, fit_truncated_normal, spawn_flash_crowd, uniform_in_aoi, WorkloadError};
use crate::world::{World, WorldError};
use crate::NormalFit;

pub const MANIFEST: &str = "manifest.toml";
pub const TOOL: &str = "edgepool";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("fit failed: {0}")]
    Fit(#[from] WorkloadError),
    #[error("run {run} (seed {seed}): {source}")]
    Simulation { run: u32, seed: u64, source: WorldError },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("missing artifact {}", .0.display())]
    MissingArtifact(PathBuf),
    #[error("{}: {message}", path.display())]
    Artifact { path: PathBuf, message: String },
}

impl ExperimentError {
    /// 2 for bad input (config, datasets, run directories), 1 for failures
    /// while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_)
            | ExperimentError::Dataset(_)
            | ExperimentError::Fit(_)
            | ExperimentError::MissingArtifact(_)
            | ExperimentError::Artifact { .. } => 2,
            ExperimentError::Simulation { .. } | ExperimentError::Metrics(_) | ExperimentError::Io { .. } => 1,
        }
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io { path: path.to_owned(), source }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub tool_version: String,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub config: ScenarioConfig,
}

/// One simulation: a repetition of one (scheme, UE count) level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlannedRun {
    pub run: u32,
    pub seed: u64,
    pub scheme: Option<Scheme>,
    pub ue_count: u32,
}

/// Repetition `i` uses seed `seed + i` at every level.
pub fn plan(cfg: &ScenarioConfig) -> Vec<PlannedRun> {
    let seeds = (0..cfg.repetitions).map(|i| (i, cfg.seed.wrapping_add(u64::from(i))));
    match (cfg.experiment, &cfg.flash_crowd) {
        (ExperimentKind::FlashCrowd, Some(fc)) => {
            let seeds: Vec<_> = seeds.collect();
            fc.schemes
                .iter()
                .flat_map(|&scheme| {
                    let seeds = &seeds;
                    fc.ue_counts.iter().flat_map(move |&ue_count| {
                        seeds.iter().map(move |&(run, seed)| PlannedRun { run, seed, scheme: Some(scheme), ue_count })
                    })
                })
                .collect()
        }
        _ => seeds.map(|(run, seed)| PlannedRun { run, seed, scheme: None, ue_count: 0 }).collect(),
    }
}

/// Builds and runs one flash-crowd simulation: the fleet parks at t = 0,
/// all UEs appear at `spawn_at_ms` and are probed until the end of the
/// measurement window.
pub fn flash_crowd_run(cfg: &ScenarioConfig, scheme: Scheme, ue_count: u32, seed: u64) -> Result<World, WorldError> {
    let fc = cfg.flash_crowd.clone().unwrap_or_default();
    let params = cfg.world_params().with_scheme(scheme);
    let aoi = params.aoi.clone();
    let probe = params.probe_period;
    let mut world = World::new(params, seed)?;
    let mut fleet = RngStream::new(seed, "fleet");
    for _ in 0..fc.vehicles {
        world.spawn_vehicle_at(SimTime::ZERO, uniform_in_aoi(&aoi, &mut fleet), None)?;
    }
    let spawn_at = SimTime::from_millis(fc.spawn_at_ms);
    let mut crowd = RngStream::new(seed, "crowd");
    for ue in spawn_flash_crowd(ue_count as usize, 0, &aoi, probe, &mut crowd) {
        world.spawn_ue_at(spawn_at, ue.position, ue.velocity, None)?;
    }
    world.run_until(spawn_at + SimDuration::from_millis(fc.measure_ms))?;
    Ok(world)
}

pub fn daily_run(cfg: &ScenarioConfig, seed: u64) -> Result<World, WorldError> {
    let mut world = World::new(cfg.world_params(), seed)?;
    let daily = cfg.daily_workload().expect("validated daily config");
    let hours = daily.hours;
    world.install_daily(daily)?;
    world.run_until(SimTime::from_hours(u64::from(hours)))?;
    Ok(world)
}

pub fn execute(cfg: &ScenarioConfig, run: PlannedRun) -> Result<RunSeries, ExperimentError> {
    let world = match run.scheme {
        Some(scheme) => flash_crowd_run(cfg, scheme, run.ue_count, run.seed),
        None => daily_run(cfg, run.seed),
    }
    .map_err(|source| ExperimentError::Simulation { run: run.run, seed: run.seed, source })?;
    let metrics = world.into_metrics();
    log::info!(
        "run {} seed {} scheme {:?} ues {}: {} rtt samples, {} migrations, counters {:?}",
        run.run,
        run.seed,
        run.scheme,
        run.ue_count,
        metrics.rtt.len(),
        metrics.total_migrations(),
        metrics.counters
    );
    Ok(RunSeries { run: run.run, scheme: run.scheme, ue_count: run.ue_count, metrics })
}

/// Runs every planned simulation on a pool of `jobs` threads (default
/// `min(repetitions, cores)`); results come back in plan order.
pub fn execute_all(cfg: &ScenarioConfig, jobs: Option<usize>) -> Result<Vec<RunSeries>, ExperimentError> {
    use rayon::prelude::*;
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let threads = jobs.unwrap_or_else(|| (cfg.repetitions as usize).min(cores)).max(1);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().expect("thread pool");
    let planned = plan(cfg);
    pool.install(|| planned.par_iter().map(|&s| execute(cfg, s)).collect())
}

pub fn config_hash(cfg: &ScenarioConfig) -> String {
    hex::encode(Sha256::digest(cfg.to_toml().as_bytes()))
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub repetitions: Option<u32>,
    pub overrides: Vec<String>,
    pub jobs: Option<usize>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub manifest: Manifest,
    pub summary: Summary,
}

pub fn cmd_run(scenario: &Path, out_dir: &Path, opts: &RunOptions) -> Result<RunOutcome, ExperimentError> {
    let mut overrides = opts.overrides.clone();
    if let Some(seed) = opts.seed {
        overrides.push(format!("seed={seed}"));
    }
    if let Some(reps) = opts.repetitions {
        overrides.push(format!("repetitions={reps}"));
    }
    let cfg = config::load(scenario, &overrides)?;
    let runs = execute_all(&cfg, opts.jobs)?;
    let summary = metrics::summarize(&runs, cfg.window());
    std::fs::create_dir_all(out_dir).map_err(io(out_dir))?;
    metrics::emit_csv(&summary, out_dir)?;
    let manifest = Manifest {
        tool: TOOL.to_owned(),
        tool_version: env!("CARGO_PKG_VERSION").to_owned(),
        config_hash: config_hash(&cfg),
        seeds: (0..cfg.repetitions).map(|i| cfg.seed.wrapping_add(u64::from(i))).collect(),
        config: cfg,
    };
    let path = out_dir.join(MANIFEST);
    std::fs::write(&path, toml::to_string(&manifest).expect("manifest serializes")).map_err(io(&path))?;
    Ok(RunOutcome { out_dir: out_dir.to_owned(), manifest, summary })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OccupancyFit {
    /// Latent parameters of a normal truncated at zero.
    #[default]
    Truncated,
    /// Plain sample mean and standard deviation.
    Moments,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub occupancy: NormalFit,
    pub sample: NormalFit,
    pub samples: usize,
    pub non_positive: usize,
    pub rates: RatesFile,
}

pub fn cmd_fit(parking: &Path, wifi: &Path, out: &Path, method: OccupancyFit) -> Result<FitReport, ExperimentError> {
    let park = dataset::read_parking(parking)?;
    let joins = dataset::read_wifi(wifi)?;
    if park.non_positive > 0 {
        log::warn!("{}: dropped {} rows with leave <= enter", parking.display(), park.non_positive);
    }
    let minutes: Vec<f64> = park.records.iter().map(|r| r.occupancy_minutes()).collect();
    let sample = fit_normal(&minutes)?;
    let occupancy = match method {
        OccupancyFit::Truncated => fit_truncated_normal(&minutes)?,
        OccupancyFit::Moments => sample,
    };
    let vehicles = fit_poisson::<f64>(&dataset::hourly_counts(park.records.iter().map(|r| r.enter)))?;
    let ues = fit_poisson::<f64>(&dataset::hourly_counts(joins))?;
    let rates = RatesFile {
        version: CONFIG_VERSION,
        occupancy_mu: occupancy.mu,
        occupancy_sigma: occupancy.sigma,
        occupancy_fit: Some(match method {
            OccupancyFit::Truncated => "truncated".into(),
            OccupancyFit::Moments => "moments".into(),
        }),
        occupancy_samples: Some(minutes.len() as u64),
        sample_mean: Some(sample.mu),
        sample_std: Some(sample.sigma),
        vehicles_per_hour: vehicles.rates.to_vec(),
        ues_per_hour: ues.rates.to_vec(),
    };
    let text = format!(
        "# Fitted from {} and {}.\n# Occupancy in minutes; rates are mean arrivals per hour of day.\n{}",
        parking.display(),
        wifi.display(),
        toml::to_string(&rates).expect("rates serialize")
    );
    std::fs::write(out, text).map_err(io(out))?;
    Ok(FitReport { occupancy, sample, samples: minutes.len(), non_positive: park.non_positive, rates })
}

fn read_csv(dir: &Path, file: &str) -> Result<Vec<BTreeMap<String, String>>, ExperimentError> {
    let path = dir.join(file);
    if !path.is_file() {
        return Err(ExperimentError::MissingArtifact(path));
    }
    let bad = |e: csv::Error| ExperimentError::Artifact { path: path.clone(), message: e.to_string() };
    let mut r = csv::Reader::from_path(&path).map_err(bad)?;
    let headers = r.headers().map_err(bad)?.clone();
    r.records()
        .map(|rec| {
            let rec = rec.map_err(bad)?;
            Ok(headers.iter().zip(rec.iter()).map(|(h, v)| (h.to_owned(), v.to_owned())).collect())
        })
        .collect()
}

fn num<T: std::str::FromStr>(dir: &Path, file: &str, row: &BTreeMap<String, String>, col: &str) -> Result<Option<T>, ExperimentError> {
    match row.get(col).map(String::as_str) {
        None => Err(ExperimentError::Artifact { path: dir.join(file), message: format!("missing column `{col}`") }),
        Some("") => Ok(None),
        Some(v) => v
            .parse()
            .map(Some)
            .map_err(|_| ExperimentError::Artifact { path: dir.join(file), message: format!("bad {col} value `{v}`") }),
    }
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Aggregates an existing run directory into a short text report.
pub fn cmd_report(dir: &Path) -> Result<String, ExperimentError> {
    let manifest_path = dir.join(MANIFEST);
    if !manifest_path.is_file() {
        return Err(ExperimentError::MissingArtifact(manifest_path));
    }
    let text = std::fs::read_to_string(&manifest_path).map_err(io(&manifest_path))?;
    let manifest: Manifest = toml::from_str(&text)
        .map_err(|e| ExperimentError::Artifact { path: manifest_path.clone(), message: e.to_string() })?;
    let rtt = read_csv(dir, RTT_CSV)?;
    let migrations = read_csv(dir, MIGRATIONS_CSV)?;
    let downtime = read_csv(dir, DOWNTIME_CSV)?;

    let mut out = String::new();
    writeln!(out, "{} {} config {}", manifest.tool, manifest.tool_version, &manifest.config_hash[..12.min(manifest.config_hash.len())]).unwrap();
    writeln!(out, "experiment {:?}, seeds {:?}", manifest.config.experiment, manifest.seeds).unwrap();

    let mut per_scheme: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for row in &rtt {
        if let Some(v) = num::<f64>(dir, RTT_CSV, row, "mean_ms")? {
            per_scheme.entry(row["scheme"].clone()).or_default().push(v);
        }
    }
    let scheme_mean = |s: Scheme| per_scheme.get(s.as_str()).and_then(|xs| mean(xs));
    for (scheme, xs) in &per_scheme {
        writeln!(out, "rtt {scheme}: mean {:.3} ms over {} rows", mean(xs).unwrap_or(f64::NAN), xs.len()).unwrap();
    }
    if let (Some(far), Some(cloud)) = (scheme_mean(Scheme::FarEdge), scheme_mean(Scheme::Cloud)) {
        writeln!(out, "far_edge / cloud rtt ratio: {:.3}", far / cloud).unwrap();
    }
    if let (Some(far), Some(edge)) = (scheme_mean(Scheme::FarEdge), scheme_mean(Scheme::Edge)) {
        writeln!(out, "far_edge - edge rtt delta: {:.3} ms", far - edge).unwrap();
    }

    let mut per_hour: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    let mut counts: BTreeMap<(u32, u32), u64> = BTreeMap::new();
    for row in &migrations {
        let (Some(hour), Some(run), Some(count)) = (
            num::<u32>(dir, MIGRATIONS_CSV, row, "hour")?,
            num::<u32>(dir, MIGRATIONS_CSV, row, "run")?,
            num::<u64>(dir, MIGRATIONS_CSV, row, "count")?,
        ) else {
            continue;
        };
        per_hour.entry(hour).or_default().push(count as f64);
        counts.insert((hour, run), count);
    }
    for (hour, xs) in &per_hour {
        writeln!(out, "hour {hour:02}: {:.3} migrations per run", mean(xs).unwrap_or(0.0)).unwrap();
    }
    let (mut weighted, mut total) = (0.0, 0u64);
    for row in &downtime {
        let (Some(hour), Some(run)) = (num::<u32>(dir, DOWNTIME_CSV, row, "hour")?, num::<u32>(dir, DOWNTIME_CSV, row, "run")?)
        else {
            continue;
        };
        if let Some(m) = num::<f64>(dir, DOWNTIME_CSV, row, "mean_ms")? {
            let n = counts.get(&(hour, run)).copied().unwrap_or(0);
            weighted += m * n as f64;
            total += n;
        }
    }
    if !per_hour.is_empty() {
        let runs = manifest.seeds.len().max(1) as f64;
        writeln!(out, "migrations per run in window: {:.3}", total as f64 / runs).unwrap();
        if total > 0 {
            writeln!(out, "mean downtime: {:.3} ms", weighted / total as f64).unwrap();
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flash(dir: &Path) -> PathBuf {
        let p = dir.join("s.toml");
        std::fs::write(
            &p,
            "version = 1\nexperiment = \"flash_crowd\"\nrepetitions = 2\n[flash_crowd]\nue_counts = [10]\nvehicles = 5\nmeasure_ms = 500\n",
        )
        .unwrap();
        p
    }

    #[test]
    fn plan_covers_levels_and_seeds() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config::load(&flash(dir.path()), &["seed=40".into()]).unwrap();
        let p = plan(&cfg);
        assert_eq!(p.len(), 3 * 2);
        assert!(p.iter().all(|s| s.seed == 40 + u64::from(s.run)));
    }

    #[test]
    fn run_writes_artifacts_and_replays_from_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a");
        let out = cmd_run(&flash(dir.path()), &a, &RunOptions::default()).unwrap();
        for f in [RTT_CSV, MIGRATIONS_CSV, DOWNTIME_CSV, MANIFEST] {
            assert!(a.join(f).is_file(), "{f}");
        }
        assert_eq!(out.manifest.seeds, vec![1, 2]);
        let b = dir.path().join("b");
        cmd_run(&a.join(MANIFEST), &b, &RunOptions::default()).unwrap();
        for f in [RTT_CSV, MIGRATIONS_CSV, DOWNTIME_CSV, MANIFEST] {
            assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
        }
        let report = cmd_report(&a).unwrap();
        assert!(report.contains("far_edge / cloud rtt ratio: 0.500"), "{report}");
        assert!(report.contains("far_edge - edge rtt delta: 3.000 ms"), "{report}");
    }

    #[test]
    fn bad_config_creates_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        let err = cmd_run(&flash(dir.path()), &out, &RunOptions { overrides: vec!["delay.core_ms=-3".into()], ..Default::default() })
            .unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(!out.exists());
    }

    #[test]
    fn report_names_missing_artifact() {
        let dir = tempfile::tempdir().unwrap();
        match cmd_report(dir.path()) {
            Err(ExperimentError::MissingArtifact(p)) => assert!(p.ends_with(MANIFEST)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn fit_writes_loadable_rates() {
        let dir = tempfile::tempdir().unwrap();
        let parking = dir.path().join("p.csv");
        let wifi = dir.path().join("w.csv");
        std::fs::write(
            &parking,
            "vehicle_id,enter_iso8601,leave_iso8601\na,2020-01-01T08:00:00,2020-01-01T09:00:00\nb,2020-01-01T08:30:00,2020-01-01T11:30:00\nc,2020-01-02T09:00:00,2020-01-02T09:00:00\n",
        )
        .unwrap();
        std::fs::write(&wifi, "timestamp_iso8601\n2020-01-01T08:00:00\n2020-01-01T08:10:00\n").unwrap();
        let out = dir.path().join("rates.txt");
        let r = cmd_fit(&parking, &wifi, &out, OccupancyFit::Moments).unwrap();
        assert_eq!(r.samples, 2);
        assert_eq!(r.non_positive, 1);
        assert_eq!((r.occupancy.mu, r.occupancy.sigma), (120.0, 60.0));
        let back = RatesFile::load(&out).unwrap();
        assert_eq!(back, r.rates);
        assert_eq!(back.vehicles_per_hour[8], 2.0);
        assert_eq!(back.ues_per_hour[8], 2.0);
    }
}
