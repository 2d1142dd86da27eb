//! Scenario configuration: a TOML document with `version = 1`. Unknown keys
//! are rejected. `--set a.b=value` overrides are applied to the raw document
//! before it is validated, with `value` parsed as a TOML value (falling back
//! to a bare string).
//!
//! A `rates_file` reference is resolved relative to the config file and
//! inlined, so the resolved config is self-contained and can be replayed.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{AoiId, AppDescriptor, AreaOfInterest, Zone, ZoneId, WARNING_ZONE_APP};
use crate::mec_host::PlacementMode;
use crate::netdelay::Scheme;
use crate::sim::SimDuration;
use crate::workload::HOURS_PER_DAY;
use crate::world::WorldParams;
use crate::{Capacity, Circle, Delays, Occupancy, Point, RateTable};

pub const CONFIG_VERSION: i64 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Parse(String),
    #[error("unsupported config version {0} (expected {CONFIG_VERSION})")]
    Version(String),
    #[error("invalid override `{0}`: expected key=value")]
    Override(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    FlashCrowd,
    DailyMigration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub version: i64,
    pub experiment: ExperimentKind,
    #[serde(default = "one")]
    pub seed: u64,
    #[serde(default = "five")]
    pub repetitions: u32,
    #[serde(default)]
    pub delay: DelaySection,
    #[serde(default)]
    pub aoi: AoiSection,
    #[serde(default)]
    pub app: AppSection,
    #[serde(default = "default_lease")]
    pub vehicle: CapacitySection,
    #[serde(default = "default_local")]
    pub local: CapacitySection,
    #[serde(default)]
    pub ue: UeSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flash_crowd: Option<FlashCrowdSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub daily: Option<DailySection>,
}

fn one() -> u64 {
    1
}
fn five() -> u32 {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DelaySection {
    pub radio_ms: f64,
    pub edge_ms: f64,
    pub core_ms: f64,
    pub per_byte_ms: f64,
    pub jitter_ms: f64,
    pub signalling_ms: f64,
}

impl Default for DelaySection {
    fn default() -> Self {
        let d = Delays::default();
        DelaySection {
            radio_ms: d.radio_ms,
            edge_ms: d.edge_ms,
            core_ms: d.core_ms,
            per_byte_ms: d.per_byte_ms,
            jitter_ms: d.jitter_ms,
            signalling_ms: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZoneSection {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AoiSection {
    pub zones: Vec<ZoneSection>,
}

impl Default for AoiSection {
    fn default() -> Self {
        AoiSection { zones: vec![ZoneSection { x: 0.0, y: 0.0, radius: 500.0 }] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AppSection {
    pub cpu: u64,
    pub ram: u64,
    pub disk: u64,
    pub state_size: u32,
    pub zone: ZoneSection,
}

impl Default for AppSection {
    fn default() -> Self {
        let d = AppDescriptor::default();
        AppSection {
            cpu: d.required.cpu,
            ram: d.required.ram,
            disk: d.required.disk,
            state_size: d.state_size,
            zone: ZoneSection { x: 0.0, y: 0.0, radius: 150.0 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacitySection {
    pub cpu: u64,
    pub ram: u64,
    pub disk: u64,
}

impl From<CapacitySection> for Capacity {
    fn from(c: CapacitySection) -> Self {
        Capacity::new(c.cpu, c.ram, c.disk)
    }
}

impl From<Capacity> for CapacitySection {
    fn from(c: Capacity) -> Self {
        CapacitySection { cpu: c.cpu, ram: c.ram, disk: c.disk }
    }
}

fn default_lease() -> CapacitySection {
    WorldParams::default().vehicle_lease.into()
}

fn default_local() -> CapacitySection {
    WorldParams::default().local_capacity.into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UeSection {
    pub probe_period_ms: f64,
    pub speed_mps: f64,
}

impl Default for UeSection {
    fn default() -> Self {
        UeSection { probe_period_ms: 100.0, speed_mps: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlashCrowdSection {
    pub ue_counts: Vec<u32>,
    pub vehicles: u32,
    pub schemes: Vec<Scheme>,
    pub spawn_at_ms: u64,
    pub measure_ms: u64,
}

impl Default for FlashCrowdSection {
    fn default() -> Self {
        FlashCrowdSection {
            ue_counts: (1..=10).map(|k| k * 50).collect(),
            vehicles: 200,
            schemes: Scheme::ALL.to_vec(),
            spawn_at_ms: 1_000,
            measure_ms: 5_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalSection {
    pub mu: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DailySection {
    pub capacity: u32,
    /// Lot capacity the rate tables were measured at; vehicle rates are
    /// scaled by `capacity / reference_capacity`.
    pub reference_capacity: u32,
    #[serde(default = "remote_first")]
    pub placement: PlacementMode,
    #[serde(default = "default_window")]
    pub window: [u32; 2],
    #[serde(default = "default_hours")]
    pub hours: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe_period_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ue_speed_mps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rates_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub occupancy: Option<NormalSection>,
    #[serde(default = "default_dwell")]
    pub ue_dwell: NormalSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vehicle_rates: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ue_rates: Option<Vec<f64>>,
}

fn remote_first() -> PlacementMode {
    PlacementMode::RemoteFirst
}
fn default_window() -> [u32; 2] {
    [13, 21]
}
fn default_hours() -> u32 {
    24
}
fn default_dwell() -> NormalSection {
    NormalSection { mu: 30.0, sigma: 10.0 }
}

/// Fitted workload written by the `fit` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesFile {
    pub version: i64,
    pub occupancy_mu: f64,
    pub occupancy_sigma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub occupancy_fit: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub occupancy_samples: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_std: Option<f64>,
    pub vehicles_per_hour: Vec<f64>,
    pub ues_per_hour: Vec<f64>,
}

impl RatesFile {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_owned(), source })?;
        let r: RatesFile = toml::from_str(&text).map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))?;
        if r.version != CONFIG_VERSION {
            return Err(ConfigError::Version(r.version.to_string()));
        }
        Ok(r)
    }
}

/// Reads a scenario (or a run manifest, whose `[config]` table is used),
/// applies overrides, inlines `rates_file` and validates.
pub fn load(path: &Path, overrides: &[String]) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_owned(), source })?;
    let base = path.parent().unwrap_or(Path::new("."));
    from_str(&text, base, overrides)
}

pub fn from_str(text: &str, base_dir: &Path, overrides: &[String]) -> Result<ScenarioConfig, ConfigError> {
    let mut doc: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
    if doc.contains_key("tool") {
        doc = match doc.remove("config") {
            Some(toml::Value::Table(t)) => t,
            _ => return Err(ConfigError::Invalid("manifest has no [config] table".into())),
        };
    }
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    match doc.get("version") {
        Some(toml::Value::Integer(CONFIG_VERSION)) => {}
        Some(v) => return Err(ConfigError::Version(v.to_string())),
        None => return Err(ConfigError::Invalid("missing `version`".into())),
    }
    let mut cfg: ScenarioConfig =
        toml::Value::Table(doc).try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
    cfg.resolve(base_dir)?;
    cfg.validate()?;
    Ok(cfg)
}

fn apply_override(doc: &mut toml::Table, assignment: &str) -> Result<(), ConfigError> {
    let (key, raw) = assignment.split_once('=').ok_or_else(|| ConfigError::Override(assignment.to_owned()))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(ConfigError::Override(assignment.to_owned()));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_owned()));
    let (last, parents) = path.split_last().expect("non-empty");
    let mut table = doc;
    for p in parents {
        let entry = table.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry.as_table_mut().ok_or_else(|| ConfigError::Override(format!("{assignment}: `{p}` is not a table")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

fn check_finite_nonneg(name: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be finite and >= 0, got {v}")))
    }
}

fn rates_array(name: &str, v: &[f64]) -> Result<[f64; HOURS_PER_DAY], ConfigError> {
    let arr: [f64; HOURS_PER_DAY] =
        v.try_into().map_err(|_| invalid(format!("{name} needs {HOURS_PER_DAY} entries, got {}", v.len())))?;
    for (h, &x) in arr.iter().enumerate() {
        check_finite_nonneg(&format!("{name}[{h}]"), x)?;
    }
    Ok(arr)
}

impl ScenarioConfig {
    fn resolve(&mut self, base_dir: &Path) -> Result<(), ConfigError> {
        let Some(daily) = &mut self.daily else { return Ok(()) };
        if let Some(rel) = daily.rates_file.take() {
            let path = if rel.is_absolute() { rel } else { base_dir.join(rel) };
            let rates = RatesFile::load(&path)?;
            daily.vehicle_rates.get_or_insert(rates.vehicles_per_hour);
            daily.ue_rates.get_or_insert(rates.ues_per_hour);
            daily.occupancy.get_or_insert(NormalSection { mu: rates.occupancy_mu, sigma: rates.occupancy_sigma });
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.repetitions == 0 {
            return Err(invalid("repetitions must be >= 1"));
        }
        let d = &self.delay;
        for (n, v) in [
            ("delay.radio_ms", d.radio_ms),
            ("delay.edge_ms", d.edge_ms),
            ("delay.core_ms", d.core_ms),
            ("delay.per_byte_ms", d.per_byte_ms),
            ("delay.jitter_ms", d.jitter_ms),
            ("delay.signalling_ms", d.signalling_ms),
            ("ue.speed_mps", self.ue.speed_mps),
        ] {
            check_finite_nonneg(n, v)?;
        }
        if self.aoi.zones.is_empty() {
            return Err(invalid("aoi.zones must not be empty"));
        }
        for z in self.aoi.zones.iter().chain(std::iter::once(&self.app.zone)) {
            if !(z.x.is_finite() && z.y.is_finite() && z.radius.is_finite() && z.radius > 0.0) {
                return Err(invalid(format!("zone {z:?} needs finite center and radius > 0")));
            }
        }
        if !(self.ue.probe_period_ms.is_finite() && self.ue.probe_period_ms >= 0.001) {
            return Err(invalid("ue.probe_period_ms must be >= 0.001"));
        }
        match self.experiment {
            ExperimentKind::FlashCrowd => {
                let fc = self.flash_crowd.as_ref().ok_or_else(|| invalid("flash_crowd experiment needs [flash_crowd]"))?;
                if fc.ue_counts.is_empty() || fc.schemes.is_empty() {
                    return Err(invalid("flash_crowd.ue_counts and flash_crowd.schemes must not be empty"));
                }
                if fc.measure_ms == 0 {
                    return Err(invalid("flash_crowd.measure_ms must be > 0"));
                }
            }
            ExperimentKind::DailyMigration => {
                let dl = self.daily.as_ref().ok_or_else(|| invalid("daily_migration experiment needs [daily]"))?;
                if dl.capacity == 0 || dl.reference_capacity == 0 {
                    return Err(invalid("daily.capacity and daily.reference_capacity must be >= 1"));
                }
                let [a, b] = dl.window;
                if a > b || b >= HOURS_PER_DAY as u32 {
                    return Err(invalid(format!("daily.window [{a}, {b}] must satisfy 0 <= start <= end <= 23")));
                }
                if dl.hours == 0 || dl.hours > 24 * 366 {
                    return Err(invalid("daily.hours must be in 1..=8784"));
                }
                rates_array("daily.vehicle_rates", dl.vehicle_rates.as_deref().ok_or_else(|| invalid("daily needs vehicle_rates or rates_file"))?)?;
                rates_array("daily.ue_rates", dl.ue_rates.as_deref().ok_or_else(|| invalid("daily needs ue_rates or rates_file"))?)?;
                let occ = dl.occupancy.ok_or_else(|| invalid("daily needs occupancy or rates_file"))?;
                for (n, s) in [("daily.occupancy", occ), ("daily.ue_dwell", dl.ue_dwell)] {
                    if !(s.mu.is_finite() && s.sigma.is_finite() && s.sigma >= 0.0 && s.mu > 0.0) {
                        return Err(invalid(format!("{n} needs mu > 0 and sigma >= 0")));
                    }
                }
                if let Some(p) = dl.probe_period_ms {
                    if !(p.is_finite() && p >= 0.001) {
                        return Err(invalid("daily.probe_period_ms must be >= 0.001"));
                    }
                }
                if let Some(v) = dl.ue_speed_mps {
                    check_finite_nonneg("daily.ue_speed_mps", v)?;
                }
            }
        }
        self.world_params().delays.validate().map_err(|e| invalid(e.to_string()))?;
        Ok(())
    }

    /// Canonical TOML of the resolved config.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn to_table(&self) -> toml::Table {
        toml::Table::try_from(self).expect("config serializes")
    }

    pub fn aoi(&self) -> AreaOfInterest {
        let zones = self
            .aoi
            .zones
            .iter()
            .enumerate()
            .map(|(i, z)| Zone { id: ZoneId(i as u32), coverage: Circle::new(Point::new(z.x, z.y), z.radius) })
            .collect();
        AreaOfInterest::new(AoiId(1), zones).expect("validated non-empty")
    }

    /// World parameters shared by every run of this scenario. Scheme and
    /// placement are set per run.
    pub fn world_params(&self) -> WorldParams {
        let d = &self.delay;
        let mut p = WorldParams {
            delays: Delays {
                radio_ms: d.radio_ms,
                edge_ms: d.edge_ms,
                core_ms: d.core_ms,
                per_byte_ms: d.per_byte_ms,
                jitter_ms: d.jitter_ms,
            },
            signalling: SimDuration::from_millis_f64(d.signalling_ms),
            aoi: self.aoi(),
            local_capacity: self.local.into(),
            app: AppDescriptor {
                app_type: WARNING_ZONE_APP.to_owned(),
                required: Capacity::new(self.app.cpu, self.app.ram, self.app.disk),
                state_size: self.app.state_size,
            },
            warning_zone: Circle::new(Point::new(self.app.zone.x, self.app.zone.y), self.app.zone.radius),
            vehicle_lease: self.vehicle.into(),
            probe_period: SimDuration::from_millis_f64(self.ue.probe_period_ms),
            ue_speed_mps: self.ue.speed_mps,
            ..WorldParams::default()
        };
        if let Some(dl) = &self.daily {
            p.lot_capacity = Some(dl.capacity);
            p.placement = dl.placement;
            if let Some(ms) = dl.probe_period_ms {
                p.probe_period = SimDuration::from_millis_f64(ms);
            }
            if let Some(v) = dl.ue_speed_mps {
                p.ue_speed_mps = v;
            }
        }
        p
    }

    /// Vehicle and UE generation for daily runs; vehicle rates are scaled to
    /// the configured lot capacity.
    pub fn daily_workload(&self) -> Option<crate::world::DailyWorkload> {
        let dl = self.daily.as_ref()?;
        let scale = f64::from(dl.capacity) / f64::from(dl.reference_capacity);
        let veh = rates_array("", dl.vehicle_rates.as_deref()?).ok()?;
        let ues = rates_array("", dl.ue_rates.as_deref()?).ok()?;
        let occ = dl.occupancy?;
        Some(crate::world::DailyWorkload {
            vehicles: RateTable::new(veh).ok()?.with_scale(scale).ok()?,
            ues: RateTable::new(ues).ok()?,
            occupancy: Occupancy { mu: occ.mu, sigma: occ.sigma },
            ue_dwell: Occupancy { mu: dl.ue_dwell.mu, sigma: dl.ue_dwell.sigma },
            hours: dl.hours,
        })
    }

    pub fn window(&self) -> Option<std::ops::RangeInclusive<u32>> {
        self.daily.as_ref().map(|d| d.window[0]..=d.window[1])
    }
}
