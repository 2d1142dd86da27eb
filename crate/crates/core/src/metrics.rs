//! Per-run statistics sinks and the cross-run summary written as CSV.
//!
//! Output files, all sorted and headered, floats at 3 decimals:
//!
//! - `rtt.csv`: `scheme,ue_count,run,mean_ms`
//! - `migrations.csv`: `hour,run,count`
//! - `downtime.csv`: `hour,run,mean_ms,std_ms` (empty fields for an hour
//!   without migrations)

use std::collections::BTreeMap;
use std::ops::RangeInclusive;
use std::path::Path;

use thiserror::Error;

use crate::domain::UeId;
use crate::mec_host::MigrationRecord;
use crate::netdelay::Scheme;
use crate::num::mean_std;
use crate::sim::SimTime;

pub const RTT_CSV: &str = "rtt.csv";
pub const MIGRATIONS_CSV: &str = "migrations.csv";
pub const DOWNTIME_CSV: &str = "downtime.csv";

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("writing {file}: {source}")]
    Io { file: String, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RttSample {
    pub ue_id: UeId,
    pub scheme: Scheme,
    pub value_ms: f64,
    pub at: SimTime,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct HourBucket {
    pub hour: u32,
    pub migration_count: u64,
    pub downtime_samples: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunCounters {
    pub requests: u64,
    pub running: u64,
    pub rejected: u64,
    pub probes_sent: u64,
    pub probes_lost: u64,
    pub zone_notifications: u64,
    pub vehicles_arrived: u64,
    pub vehicles_dropped: u64,
    pub vehicles_registered: u64,
    pub ues_arrived: u64,
}

/// Everything one simulation run records.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub rtt: Vec<RttSample>,
    pub migrations: Vec<MigrationRecord>,
    pub buckets: Vec<HourBucket>,
    pub counters: RunCounters,
}

impl Default for RunMetrics {
    fn default() -> Self {
        RunMetrics {
            rtt: Vec::new(),
            migrations: Vec::new(),
            buckets: (0..24).map(|hour| HourBucket { hour, ..HourBucket::default() }).collect(),
            counters: RunCounters::default(),
        }
    }
}

impl RunMetrics {
    pub fn record_rtt(&mut self, sample: RttSample) {
        self.rtt.push(sample);
    }

    /// Appends the record and buckets it by the hour of day of its shutdown.
    pub fn record_migration(&mut self, record: &MigrationRecord) {
        let b = &mut self.buckets[record.shutdown_at.hour_of_day() as usize];
        b.migration_count += 1;
        b.downtime_samples.push(record.downtime.as_millis_f64());
        self.migrations.push(record.clone());
    }

    pub fn mean_rtt(&self, scheme: Scheme) -> Option<f64> {
        let xs: Vec<f64> = self.rtt.iter().filter(|s| s.scheme == scheme).map(|s| s.value_ms).collect();
        mean_std(&xs).map(|(m, _)| m)
    }

    pub fn mean_rtt_all(&self) -> Option<f64> {
        let xs: Vec<f64> = self.rtt.iter().map(|s| s.value_ms).collect();
        mean_std(&xs).map(|(m, _)| m)
    }

    pub fn total_migrations(&self) -> u64 {
        self.buckets.iter().map(|b| b.migration_count).sum()
    }
}

/// One repetition together with the sweep point it belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSeries {
    pub run: u32,
    /// Set for RTT experiments.
    pub scheme: Option<Scheme>,
    pub ue_count: u32,
    pub metrics: RunMetrics,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RttRow {
    pub scheme: Scheme,
    pub ue_count: u32,
    pub run: u32,
    pub mean_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MigrationRow {
    pub hour: u32,
    pub run: u32,
    pub count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DowntimeRow {
    pub hour: u32,
    pub run: u32,
    pub mean_ms: Option<f64>,
    pub std_ms: Option<f64>,
}

/// Mean and population standard deviation across runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spread {
    pub mean: f64,
    pub std: f64,
}

impl Spread {
    fn of(xs: &[f64]) -> Option<Spread> {
        mean_std(xs).map(|(mean, std)| Spread { mean, std })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Summary {
    pub rtt: Vec<RttRow>,
    pub migrations: Vec<MigrationRow>,
    pub downtime: Vec<DowntimeRow>,
    /// Per (scheme, ue_count): spread of the per-run mean RTT.
    pub rtt_levels: BTreeMap<(Scheme, u32), Spread>,
    /// Per hour in the window: spread of the per-run migration count.
    pub hourly_migrations: BTreeMap<u32, Spread>,
    /// Spread of the per-run total migrations over the window.
    pub total_migrations: Option<Spread>,
}

/// Aggregates runs. When `window` is set, per-hour migration and downtime
/// rows are produced for each run and each hour of the window.
pub fn summarize(runs: &[RunSeries], window: Option<RangeInclusive<u32>>) -> Summary {
    let mut s = Summary::default();
    for r in runs {
        if let (Some(scheme), Some(mean_ms)) = (r.scheme, r.metrics.mean_rtt_all()) {
            s.rtt.push(RttRow { scheme, ue_count: r.ue_count, run: r.run, mean_ms });
        }
    }
    s.rtt.sort_by_key(|r| (r.scheme, r.ue_count, r.run));
    let mut levels: BTreeMap<(Scheme, u32), Vec<f64>> = BTreeMap::new();
    for row in &s.rtt {
        levels.entry((row.scheme, row.ue_count)).or_default().push(row.mean_ms);
    }
    s.rtt_levels = levels.into_iter().filter_map(|(k, xs)| Spread::of(&xs).map(|sp| (k, sp))).collect();

    if let Some(window) = window {
        let mut ordered: Vec<&RunSeries> = runs.iter().collect();
        ordered.sort_by_key(|r| r.run);
        let mut totals = Vec::new();
        for hour in window.clone() {
            let mut counts = Vec::new();
            for r in &ordered {
                let b = &r.metrics.buckets[hour as usize % 24];
                s.migrations.push(MigrationRow { hour, run: r.run, count: b.migration_count });
                let spread = Spread::of(&b.downtime_samples);
                s.downtime.push(DowntimeRow {
                    hour,
                    run: r.run,
                    mean_ms: spread.map(|x| x.mean),
                    std_ms: spread.map(|x| x.std),
                });
                counts.push(b.migration_count as f64);
            }
            if let Some(sp) = Spread::of(&counts) {
                s.hourly_migrations.insert(hour, sp);
            }
        }
        for r in &ordered {
            totals.push(window.clone().map(|h| r.metrics.buckets[h as usize % 24].migration_count).sum::<u64>() as f64);
        }
        s.total_migrations = Spread::of(&totals);
    }
    s
}

fn ms(x: f64) -> String {
    format!("{x:.3}")
}

fn write_file(dir: &Path, file: &str, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<(), MetricsError> {
    let err = |source: std::io::Error| MetricsError::Io { file: file.to_owned(), source };
    let csv_err = |e: csv::Error| err(e.into());
    let mut w = csv::Writer::from_path(dir.join(file)).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(err)
}

/// Writes the three CSV files into `dir`. Output depends only on `summary`.
pub fn emit_csv(summary: &Summary, dir: &Path) -> Result<(), MetricsError> {
    write_file(
        dir,
        RTT_CSV,
        &["scheme", "ue_count", "run", "mean_ms"],
        summary
            .rtt
            .iter()
            .map(|r| vec![r.scheme.as_str().to_owned(), r.ue_count.to_string(), r.run.to_string(), ms(r.mean_ms)]),
    )?;
    write_file(
        dir,
        MIGRATIONS_CSV,
        &["hour", "run", "count"],
        summary.migrations.iter().map(|r| vec![r.hour.to_string(), r.run.to_string(), r.count.to_string()]),
    )?;
    write_file(
        dir,
        DOWNTIME_CSV,
        &["hour", "run", "mean_ms", "std_ms"],
        summary.downtime.iter().map(|r| {
            vec![
                r.hour.to_string(),
                r.run.to_string(),
                r.mean_ms.map(ms).unwrap_or_default(),
                r.std_ms.map(ms).unwrap_or_default(),
            ]
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{HostRef, InstanceId, MecHostId, VehicleId};
    use crate::sim::SimDuration;

    fn migration(hour: u64, downtime_us: u64) -> MigrationRecord {
        let at = SimTime::from_hours(hour) + SimDuration::from_secs(42);
        MigrationRecord {
            instance_id: InstanceId(0),
            from_host: HostRef::Remote(VehicleId(1)),
            to_host: HostRef::Local(MecHostId(1)),
            shutdown_at: at,
            ue_notified_at: at + SimDuration::from_micros(downtime_us),
            downtime: SimDuration::from_micros(downtime_us),
            state_bytes: 22,
        }
    }

    fn daily_run(run: u32, hours: &[u64]) -> RunSeries {
        let mut m = RunMetrics::default();
        for &h in hours {
            m.record_migration(&migration(h, 7_000));
        }
        RunSeries { run, scheme: None, ue_count: 0, metrics: m }
    }

    #[test]
    fn migration_lands_in_shutdown_hour() {
        let mut m = RunMetrics::default();
        m.record_migration(&migration(15, 7_000));
        assert_eq!(m.buckets[15].migration_count, 1);
        assert_eq!(m.buckets[15].downtime_samples, vec![7.0]);
        assert_eq!(m.total_migrations(), 1);
        assert_eq!(RunMetrics::default().total_migrations(), 0);
    }

    #[test]
    fn identical_runs_have_zero_spread() {
        let runs: Vec<RunSeries> = (0..5).map(|r| daily_run(r, &[13, 15, 15, 20])).collect();
        let s = summarize(&runs, Some(13..=21));
        assert_eq!(s.migrations.len(), 9 * 5);
        assert!(s.hourly_migrations.values().all(|sp| sp.std == 0.0));
        assert_eq!(s.hourly_migrations[&15].mean, 2.0);
        assert_eq!(s.total_migrations, Some(Spread { mean: 4.0, std: 0.0 }));
    }

    #[test]
    fn per_hour_means_over_runs() {
        let runs = vec![daily_run(0, &[14]), daily_run(1, &[14, 14, 14])];
        let s = summarize(&runs, Some(13..=21));
        assert_eq!(s.hourly_migrations[&14], Spread { mean: 2.0, std: 1.0 });
    }

    #[test]
    fn single_run_summary_equals_run() {
        let mut m = RunMetrics::default();
        for v in [8.0, 8.0, 8.0] {
            m.record_rtt(RttSample { ue_id: UeId(1), scheme: Scheme::FarEdge, value_ms: v, at: SimTime::ZERO });
        }
        let s = summarize(&[RunSeries { run: 0, scheme: Some(Scheme::FarEdge), ue_count: 50, metrics: m }], None);
        assert_eq!(s.rtt, vec![RttRow { scheme: Scheme::FarEdge, ue_count: 50, run: 0, mean_ms: 8.0 }]);
        assert_eq!(s.rtt_levels[&(Scheme::FarEdge, 50)], Spread { mean: 8.0, std: 0.0 });
        assert!(s.migrations.is_empty());
    }

    #[test]
    fn csv_layout_and_empty_summary() {
        let dir = tempfile::tempdir().unwrap();
        emit_csv(&Summary::default(), dir.path()).unwrap();
        assert_eq!(std::fs::read_to_string(dir.path().join(RTT_CSV)).unwrap(), "scheme,ue_count,run,mean_ms\n");
        assert_eq!(std::fs::read_to_string(dir.path().join(MIGRATIONS_CSV)).unwrap(), "hour,run,count\n");
        assert_eq!(std::fs::read_to_string(dir.path().join(DOWNTIME_CSV)).unwrap(), "hour,run,mean_ms,std_ms\n");

        let s = summarize(&[daily_run(0, &[13])], Some(13..=14));
        emit_csv(&s, dir.path()).unwrap();
        assert_eq!(
            std::fs::read_to_string(dir.path().join(DOWNTIME_CSV)).unwrap(),
            "hour,run,mean_ms,std_ms\n13,0,7.000,0.000\n14,0,,\n"
        );
        assert_eq!(std::fs::read_to_string(dir.path().join(MIGRATIONS_CSV)).unwrap(), "hour,run,count\n13,0,1\n14,0,0\n");
    }
}
