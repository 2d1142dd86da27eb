//! The simulated deployment: vehicles, the broker, one MEC host with its VIM,
//! the UALCMP, UEs and their apps, all exchanging [`Message`]s through the
//! event engine. Every message pays the one-way delay of its network path.
//!
//! | message                          | path                        |
//! |----------------------------------|-----------------------------|
//! | vehicle → broker, broker → VIM   | `VehicleToMecHost`          |
//! | broker → vehicle                 | `MecHostToVehicle`          |
//! | UE → UALCMP                      | `UeToEdgeApp`               |
//! | UALCMP → UE                      | `MecHostToUe`               |
//! | UE ↔ app (probes)                | by placement: cloud/edge/far-edge |
//! | migration legs                   | see [`MigrationLegs`]       |
//!
//! The broker sits in the core network but no separate delay is modeled for
//! it: its legs reuse the vehicle/MEC-host paths.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::Rng;
use thiserror::Error;

use crate::broker::{AcceptAny, Broker, BrokerError, NoticeKind, RewardPolicy};
use crate::domain::{
    AoiId, AppDescriptor, AppStatus, AreaOfInterest, FarEdgeHost, HostRef, InstanceId, MecHostId, RewardId,
    RewardOffer, UeId, UserEquipment, VehicleId, Zone, ZoneCrossing, ZoneId,
};
use crate::mec_host::{MigrationLegs, PlacementMode, Vim, VimError};
use crate::mec_system::{Deployment, MecHost, MecSystem, RequestOutcome, SystemError};
use crate::metrics::{RttSample, RunMetrics};
use crate::netdelay::{DelayError, PathKind, Scheme};
use crate::rng::RngStream;
use crate::sim::{Engine, Event, SimDuration, SimTime};
use crate::wire::WireRecord;
use crate::workload::{gen_arrivals, gen_occupancy, uniform_in_aoi, ue_trajectory_step, ParkingLot, WorkloadError};
use crate::{Capacity, Circle, Delays, Occupancy, Point, RateTable};

pub const MEC_HOST: MecHostId = MecHostId(1);
pub const AOI: AoiId = AoiId(1);
pub const REWARD: RewardId = RewardId(0);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorldError {
    #[error(transparent)]
    Vim(#[from] VimError),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Broker(#[from] BrokerError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Delay(#[from] DelayError),
    #[error("ledger violated at {at}: {detail}")]
    Invariant { at: SimTime, detail: String },
}

/// Handler an event is dispatched to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Target {
    Workload,
    Vehicle(VehicleId),
    Broker,
    Vim(MecHostId),
    Ualcmp,
    Ue(UeId),
    App(InstanceId),
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Workload => f.write_str("workload"),
            Target::Vehicle(v) => write!(f, "{v}"),
            Target::Broker => f.write_str("broker"),
            Target::Vim(h) => write!(f, "vim:{h}"),
            Target::Ualcmp => f.write_str("ualcmp"),
            Target::Ue(u) => write!(f, "{u}"),
            Target::App(a) => write!(f, "{a}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    WorkloadHour { hour: u32 },
    VehicleArrival { vehicle: VehicleId, position: Point, occupancy: Option<SimDuration> },
    RewardQuery { vehicle: VehicleId, position: Point },
    RewardOffers { vehicle: VehicleId, offers: Vec<RewardOffer> },
    RegisterRequest { vehicle: VehicleId, position: Point, leased: Capacity, reward: RewardId },
    ResourceJoin { host: MecHostId, vehicle: VehicleId, leased: Capacity, position: Point },
    VehicleDeparture { vehicle: VehicleId },
    ReleaseRequest { vehicle: VehicleId },
    ResourceRelease { host: MecHostId, vehicle: VehicleId },
    StateTransfer { host: MecHostId, instance: InstanceId, state: Vec<u8> },
    LocationUpdate { host: MecHostId, ue: UeId, instance: InstanceId, placement: HostRef },
    UeArrival { ue: UeId, position: Point, velocity: Point, dwell: Option<SimDuration> },
    AppRequest { ue: UeId, position: Point },
    AppAddress { ue: UeId, outcome: RequestOutcome },
    ProbeTick { ue: UeId },
    Probe { ue: UeId, instance: InstanceId, host: HostRef, sent_at: SimTime, position: Point },
    ProbeReply { ue: UeId, host: HostRef, sent_at: SimTime, crossing: Option<ZoneCrossing> },
    UeDeparture { ue: UeId },
    TerminateRequest { ue: UeId },
}

impl Message {
    pub fn target(&self) -> Target {
        use Message::*;
        match *self {
            WorkloadHour { .. } => Target::Workload,
            VehicleArrival { vehicle, .. } | RewardOffers { vehicle, .. } | VehicleDeparture { vehicle } => {
                Target::Vehicle(vehicle)
            }
            RewardQuery { .. } | RegisterRequest { .. } | ReleaseRequest { .. } => Target::Broker,
            ResourceJoin { host, .. } | ResourceRelease { host, .. } | StateTransfer { host, .. } => Target::Vim(host),
            AppRequest { .. } | TerminateRequest { .. } => Target::Ualcmp,
            LocationUpdate { ue, .. }
            | UeArrival { ue, .. }
            | AppAddress { ue, .. }
            | ProbeTick { ue }
            | ProbeReply { ue, .. }
            | UeDeparture { ue } => Target::Ue(ue),
            Probe { instance, .. } => Target::App(instance),
        }
    }

    pub fn wire(&self) -> WireRecord {
        use Message::*;
        let pos = |r: WireRecord, p: &Point| r.field("x", format!("{:.3}", p.x)).field("y", format!("{:.3}", p.y));
        let cap = |r: WireRecord, c: &Capacity| r.field("cpu", c.cpu).field("ram", c.ram).field("disk", c.disk);
        let dur = |d: &Option<SimDuration>| d.map_or_else(|| "none".to_owned(), |d| d.as_micros().to_string());
        match self {
            WorkloadHour { hour } => WireRecord::new("WorkloadHour").field("hour", hour),
            VehicleArrival { vehicle, position, occupancy } => {
                pos(WireRecord::new("VehicleArrival").field("vehicle", vehicle), position)
                    .field("occupancy_us", dur(occupancy))
            }
            RewardQuery { vehicle, position } => pos(WireRecord::new("RewardQuery").field("vehicle", vehicle), position),
            RewardOffers { vehicle, offers } => WireRecord::new("RewardOffers").field("vehicle", vehicle).field(
                "offers",
                offers.iter().map(|o| format!("{}:{}:{}", o.reward_id, o.aoi_id, o.value)).collect::<Vec<_>>().join(","),
            ),
            RegisterRequest { vehicle, position, leased, reward } => cap(
                pos(WireRecord::new("RegisterRequest").field("vehicle", vehicle).field("reward", reward), position),
                leased,
            ),
            ResourceJoin { host, vehicle, leased, position } => {
                cap(pos(WireRecord::new("ResourceJoin").field("host", host).field("vehicle", vehicle), position), leased)
            }
            VehicleDeparture { vehicle } => WireRecord::new("VehicleDeparture").field("vehicle", vehicle),
            ReleaseRequest { vehicle } => WireRecord::new("ReleaseRequest").field("vehicle", vehicle),
            ResourceRelease { host, vehicle } => {
                WireRecord::new("ResourceRelease").field("host", host).field("vehicle", vehicle)
            }
            StateTransfer { host, instance, state } => WireRecord::new("StateTransfer")
                .field("host", host)
                .field("instance", instance)
                .field("bytes", state.len())
                .field("state", hex::encode(state)),
            LocationUpdate { host, ue, instance, placement } => WireRecord::new("LocationUpdate")
                .field("host", host)
                .field("ue", ue)
                .field("instance", instance)
                .field("placement", placement),
            UeArrival { ue, position, velocity, dwell } => pos(WireRecord::new("UeArrival").field("ue", ue), position)
                .field("vx", format!("{:.3}", velocity.x))
                .field("vy", format!("{:.3}", velocity.y))
                .field("dwell_us", dur(dwell)),
            AppRequest { ue, position } => pos(WireRecord::new("AppRequest").field("ue", ue), position),
            AppAddress { ue, outcome } => {
                let r = WireRecord::new("AppAddress").field("ue", ue);
                match outcome {
                    RequestOutcome::Running { instance, placement } => {
                        r.field("outcome", "running").field("instance", instance).field("placement", placement)
                    }
                    RequestOutcome::Rejected => r.field("outcome", "rejected"),
                }
            }
            ProbeTick { ue } => WireRecord::new("ProbeTick").field("ue", ue),
            Probe { ue, instance, host, sent_at, position } => pos(
                WireRecord::new("Probe")
                    .field("ue", ue)
                    .field("instance", instance)
                    .field("host", host)
                    .field("sent_us", sent_at.as_micros()),
                position,
            ),
            ProbeReply { ue, host, sent_at, crossing } => WireRecord::new("ProbeReply")
                .field("ue", ue)
                .field("host", host)
                .field("sent_us", sent_at.as_micros())
                .field(
                    "crossing",
                    match crossing {
                        None => "none",
                        Some(ZoneCrossing::Entered) => "entered",
                        Some(ZoneCrossing::Left) => "left",
                    },
                ),
            UeDeparture { ue } => WireRecord::new("UeDeparture").field("ue", ue),
            TerminateRequest { ue } => WireRecord::new("TerminateRequest").field("ue", ue),
        }
    }
}

/// One dispatched event as seen in the trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEntry {
    pub at: SimTime,
    pub seq: u64,
    pub target: Target,
    pub wire: String,
}

impl fmt::Display for TraceEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} {}", self.at.as_micros(), self.seq, self.target, self.wire)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldParams {
    pub delays: Delays,
    /// AMS/MEC-PM overhead added to each migration leg.
    pub signalling: SimDuration,
    pub aoi: AreaOfInterest,
    pub local_capacity: Capacity,
    pub deployment: Deployment,
    pub placement: PlacementMode,
    /// Delivery scheme the run is labeled with.
    pub scheme: Scheme,
    pub app: AppDescriptor,
    pub warning_zone: Circle,
    pub vehicle_lease: Capacity,
    pub reward_value: f64,
    pub probe_period: SimDuration,
    pub ue_speed_mps: f64,
    /// `None` admits every vehicle.
    pub lot_capacity: Option<u32>,
    pub record_trace: bool,
    /// Check the capacity ledger after every event (slow; for tests).
    pub check_ledger: bool,
}

impl Default for WorldParams {
    fn default() -> Self {
        let app = AppDescriptor::default();
        WorldParams {
            delays: Delays::default(),
            signalling: SimDuration::from_millis(1),
            aoi: AreaOfInterest::new(
                AOI,
                vec![Zone { id: ZoneId(0), coverage: Circle::new(Point::new(0.0, 0.0), 500.0) }],
            )
            .expect("one zone"),
            local_capacity: Capacity::new(app.required.cpu * 4096, app.required.ram * 4096, app.required.disk * 4096),
            deployment: Deployment::Mec,
            placement: PlacementMode::RemoteFirst,
            scheme: Scheme::FarEdge,
            vehicle_lease: Capacity::new(app.required.cpu * 16, app.required.ram * 16, app.required.disk * 16),
            app,
            warning_zone: Circle::new(Point::new(0.0, 0.0), 150.0),
            reward_value: 1.0,
            probe_period: SimDuration::from_millis(100),
            ue_speed_mps: 0.0,
            lot_capacity: None,
            record_trace: false,
            check_ledger: false,
        }
    }
}

impl WorldParams {
    /// Deployment and placement implied by a delivery scheme.
    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        (self.deployment, self.placement) = match scheme {
            Scheme::Cloud => (Deployment::Cloud, PlacementMode::LocalOnly),
            Scheme::Edge => (Deployment::Mec, PlacementMode::LocalOnly),
            Scheme::FarEdge => (Deployment::Mec, PlacementMode::RemoteFirst),
        };
        self
    }
}

/// Hour-by-hour vehicle and UE generation for day-long runs.
#[derive(Debug, Clone, PartialEq)]
pub struct DailyWorkload {
    pub vehicles: RateTable,
    pub ues: RateTable,
    pub occupancy: Occupancy,
    /// UE stay in minutes.
    pub ue_dwell: Occupancy,
    pub hours: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VehiclePhase {
    Querying,
    Registering,
    Registered,
    Departed,
}

#[derive(Debug, Clone)]
struct VehicleAgent {
    position: Point,
    leased: Capacity,
    phase: VehiclePhase,
}

#[derive(Debug, Clone)]
struct UeAgent {
    ue: UserEquipment,
    last_move: SimTime,
    address: Option<(InstanceId, HostRef)>,
    departed: bool,
}

struct Streams {
    vehicle_arrivals: RngStream,
    ue_arrivals: RngStream,
    occupancy: RngStream,
    ue_dwell: RngStream,
    positions: RngStream,
    mobility: RngStream,
    jitter: RngStream,
}

impl Streams {
    fn new(seed: u64) -> Self {
        Streams {
            vehicle_arrivals: RngStream::new(seed, "vehicle-arrivals"),
            ue_arrivals: RngStream::new(seed, "ue-arrivals"),
            occupancy: RngStream::new(seed, "occupancy"),
            ue_dwell: RngStream::new(seed, "ue-dwell"),
            positions: RngStream::new(seed, "positions"),
            mobility: RngStream::new(seed, "mobility"),
            jitter: RngStream::new(seed, "jitter"),
        }
    }
}

pub fn scheme_of(host: HostRef) -> Scheme {
    match host {
        HostRef::Cloud => Scheme::Cloud,
        HostRef::Local(_) => Scheme::Edge,
        HostRef::Remote(_) => Scheme::FarEdge,
    }
}

pub struct World {
    params: WorldParams,
    engine: Engine<Message>,
    system: MecSystem,
    broker: Broker,
    policy: Box<dyn RewardPolicy + Send>,
    lot: Option<ParkingLot>,
    daily: Option<DailyWorkload>,
    vehicles: BTreeMap<VehicleId, VehicleAgent>,
    ues: BTreeMap<UeId, UeAgent>,
    // Releases that overtook the registration they cancel (possible under jitter).
    broker_early_release: BTreeSet<VehicleId>,
    vim_early_release: BTreeSet<VehicleId>,
    early_terminate: BTreeSet<UeId>,
    // UEs whose request reached the UALCMP and that have not terminated yet.
    requested: BTreeSet<UeId>,
    next_vehicle: u32,
    next_ue: u32,
    streams: Streams,
    metrics: RunMetrics,
    trace: Vec<TraceEntry>,
    fatal: Option<WorldError>,
}

impl World {
    pub fn new(params: WorldParams, seed: u64) -> Result<World, WorldError> {
        params.delays.validate()?;
        let mut system = MecSystem::new(params.deployment);
        system.add_host(MecHost {
            id: MEC_HOST,
            aoi: params.aoi.clone(),
            vim: Vim::new(MEC_HOST, params.local_capacity, params.placement),
        });
        let mut broker = Broker::new();
        broker.subscribe_aoi(MEC_HOST, params.aoi.clone(), SimTime::ZERO)?;
        broker.publish_offer(RewardOffer { reward_id: REWARD, aoi_id: params.aoi.id, value: params.reward_value })?;
        Ok(World {
            lot: params.lot_capacity.map(ParkingLot::new),
            params,
            engine: Engine::new(),
            system,
            broker,
            policy: Box::new(AcceptAny),
            daily: None,
            vehicles: BTreeMap::new(),
            ues: BTreeMap::new(),
            broker_early_release: BTreeSet::new(),
            vim_early_release: BTreeSet::new(),
            early_terminate: BTreeSet::new(),
            requested: BTreeSet::new(),
            next_vehicle: 0,
            next_ue: 0,
            streams: Streams::new(seed),
            metrics: RunMetrics::default(),
            trace: Vec::new(),
            fatal: None,
        })
    }

    pub fn set_reward_policy(&mut self, policy: Box<dyn RewardPolicy + Send>) {
        self.policy = policy;
    }

    pub fn now(&self) -> SimTime {
        self.engine.now()
    }

    pub fn params(&self) -> &WorldParams {
        &self.params
    }

    pub fn system(&self) -> &MecSystem {
        &self.system
    }

    pub fn broker(&self) -> &Broker {
        &self.broker
    }

    pub fn vim(&self) -> &Vim {
        &self.system.host(MEC_HOST).expect("bootstrap host").vim
    }

    pub fn metrics(&self) -> &RunMetrics {
        &self.metrics
    }

    pub fn into_metrics(self) -> RunMetrics {
        self.metrics
    }

    pub fn trace(&self) -> &[TraceEntry] {
        &self.trace
    }

    pub fn lot(&self) -> Option<&ParkingLot> {
        self.lot.as_ref()
    }

    /// Schedules a vehicle entering the AoI at `at`. With `occupancy` set it
    /// leaves that long after arriving.
    pub fn spawn_vehicle_at(
        &mut self,
        at: SimTime,
        position: Point,
        occupancy: Option<SimDuration>,
    ) -> Result<VehicleId, WorldError> {
        let vehicle = VehicleId(self.next_vehicle);
        self.next_vehicle += 1;
        self.schedule(at, Message::VehicleArrival { vehicle, position, occupancy })?;
        Ok(vehicle)
    }

    pub fn spawn_ue_at(
        &mut self,
        at: SimTime,
        position: Point,
        velocity: Point,
        dwell: Option<SimDuration>,
    ) -> Result<UeId, WorldError> {
        let ue = UeId(self.next_ue);
        self.next_ue += 1;
        self.schedule(at, Message::UeArrival { ue, position, velocity, dwell })?;
        Ok(ue)
    }

    /// Installs hour-by-hour generation starting at the current hour.
    pub fn install_daily(&mut self, daily: DailyWorkload) -> Result<(), WorldError> {
        daily.vehicles.validate()?;
        daily.ues.validate()?;
        let first = self.now().hour_of_day();
        self.daily = Some(daily);
        self.schedule(SimTime::from_hours(u64::from(first)), Message::WorkloadHour { hour: first })
    }

    fn schedule(&mut self, at: SimTime, msg: Message) -> Result<(), WorldError> {
        self.engine.schedule(at, msg).map_err(|e| WorldError::Invariant { at: self.engine.now(), detail: e.to_string() })?;
        Ok(())
    }

    /// Runs the event loop to `t_end`. A fatal condition (e.g. the local
    /// infrastructure cannot absorb a migration) aborts the run with an error.
    pub fn run_until(&mut self, t_end: SimTime) -> Result<u64, WorldError> {
        let mut engine = std::mem::take(&mut self.engine);
        let n = engine.run_until(t_end, |eng, ev| {
            if self.fatal.is_none() {
                if let Err(e) = self.dispatch(eng, ev) {
                    self.fatal = Some(e);
                }
            }
        });
        self.engine = engine;
        match self.fatal.clone() {
            Some(e) => Err(e),
            None => Ok(n),
        }
    }

    /// Ledger identity on every host, placement consistency, and the
    /// local-only migration target for every recorded migration.
    pub fn check_invariants(&self) -> Result<(), String> {
        for h in self.system.hosts() {
            h.vim.check_ledger()?;
            if let Some(m) = self.metrics.migrations.iter().find(|m| m.to_host != HostRef::Local(h.id)) {
                return Err(format!("{} migrated to {}", m.instance_id, m.to_host));
            }
        }
        Ok(())
    }

    fn delay(&mut self, path: PathKind, size: u64) -> SimDuration {
        self.params.delays.sample_one_way_time(path, size, &mut self.streams.jitter)
    }

    fn send(eng: &mut Engine<Message>, delay: SimDuration, msg: Message) {
        eng.schedule_in(delay, msg);
    }

    fn dispatch(&mut self, eng: &mut Engine<Message>, ev: Event<Message>) -> Result<(), WorldError> {
        let target = ev.payload.target();
        if self.params.record_trace || log::log_enabled!(log::Level::Trace) {
            let entry = TraceEntry { at: ev.fire_at, seq: ev.seq, target, wire: ev.payload.wire().encode() };
            log::trace!("{entry}");
            if self.params.record_trace {
                self.trace.push(entry);
            }
        }
        self.handle(eng, ev.payload)?;
        if self.params.check_ledger {
            self.check_invariants().map_err(|detail| WorldError::Invariant { at: eng.now(), detail })?;
        }
        Ok(())
    }

    fn handle(&mut self, eng: &mut Engine<Message>, msg: Message) -> Result<(), WorldError> {
        let now = eng.now();
        match msg {
            Message::WorkloadHour { hour } => self.on_workload_hour(eng, hour)?,

            Message::VehicleArrival { vehicle, position, occupancy } => {
                self.metrics.counters.vehicles_arrived += 1;
                if let Some(lot) = &mut self.lot {
                    if !lot.admit() {
                        self.metrics.counters.vehicles_dropped += 1;
                        return Ok(());
                    }
                }
                let occupancy = match (occupancy, &self.daily) {
                    (Some(d), _) => Some(d),
                    (None, Some(daily)) => Some(gen_occupancy(&daily.occupancy, &mut self.streams.occupancy)?),
                    (None, None) => None,
                };
                if let Some(stay) = occupancy {
                    eng.schedule_in(stay, Message::VehicleDeparture { vehicle });
                }
                self.vehicles.insert(
                    vehicle,
                    VehicleAgent { position, leased: self.params.vehicle_lease, phase: VehiclePhase::Querying },
                );
                let d = self.delay(PathKind::VehicleToMecHost, 0);
                Self::send(eng, d, Message::RewardQuery { vehicle, position });
            }

            Message::RewardQuery { vehicle, position } => {
                let offers = self.broker.query_rewards(vehicle, position);
                let d = self.delay(PathKind::MecHostToVehicle, 0);
                Self::send(eng, d, Message::RewardOffers { vehicle, offers });
            }

            Message::RewardOffers { vehicle, offers } => {
                let Some(agent) = self.vehicles.get_mut(&vehicle) else { return Ok(()) };
                if agent.phase != VehiclePhase::Querying {
                    return Ok(());
                }
                if let Some(offer) = self.policy.choose(&offers) {
                    agent.phase = VehiclePhase::Registering;
                    let msg = Message::RegisterRequest {
                        vehicle,
                        position: agent.position,
                        leased: agent.leased,
                        reward: offer.reward_id,
                    };
                    let d = self.delay(PathKind::VehicleToMecHost, 0);
                    Self::send(eng, d, msg);
                }
            }

            Message::RegisterRequest { vehicle, position, leased, reward } => {
                if self.broker_early_release.remove(&vehicle) {
                    return Ok(());
                }
                match self.broker.register_resources(vehicle, position, leased, reward, now) {
                    Ok((_, notice)) => {
                        if let NoticeKind::ResourceJoin { vehicle, leased } = notice.kind {
                            let d = self.delay(PathKind::VehicleToMecHost, 0);
                            Self::send(eng, d, Message::ResourceJoin { host: notice.mec_host, vehicle, leased, position });
                        }
                    }
                    Err(e) => log::debug!("registration of {vehicle} refused: {e}"),
                }
            }

            Message::ResourceJoin { host, vehicle, leased, position } => {
                if self.vim_early_release.remove(&vehicle) {
                    return Ok(());
                }
                self.system.host_mut(host)?.vim.add_remote(FarEdgeHost::new(vehicle, leased, position))?;
                self.metrics.counters.vehicles_registered += 1;
                if let Some(agent) = self.vehicles.get_mut(&vehicle) {
                    if agent.phase == VehiclePhase::Registering {
                        agent.phase = VehiclePhase::Registered;
                    }
                }
            }

            Message::VehicleDeparture { vehicle } => {
                if let Some(lot) = &mut self.lot {
                    lot.leave();
                }
                let Some(agent) = self.vehicles.remove(&vehicle) else { return Ok(()) };
                if matches!(agent.phase, VehiclePhase::Registering | VehiclePhase::Registered) {
                    let d = self.delay(PathKind::VehicleToMecHost, 0);
                    Self::send(eng, d, Message::ReleaseRequest { vehicle });
                }
                debug_assert_ne!(agent.phase, VehiclePhase::Departed);
            }

            Message::ReleaseRequest { vehicle } => match self.broker.release_resources(vehicle) {
                Ok((_, notice)) => {
                    let d = self.delay(PathKind::VehicleToMecHost, 0);
                    Self::send(eng, d, Message::ResourceRelease { host: notice.mec_host, vehicle });
                }
                Err(BrokerError::NotRegistered(_)) => {
                    self.broker_early_release.insert(vehicle);
                }
                Err(e) => return Err(e.into()),
            },

            Message::ResourceRelease { host, vehicle } => {
                let (delays, signalling, jitter) =
                    (self.params.delays, self.params.signalling, self.params.delays.jitter_ms > 0.0);
                let streams = &mut self.streams.jitter;
                let vim = &mut self.system.host_mut(host)?.vim;
                if vim.pool().remote_host(vehicle).is_none() {
                    self.vim_early_release.insert(vehicle);
                    return Ok(());
                }
                let removal = vim.remove_remote(vehicle, now, |bytes| {
                    if jitter {
                        MigrationLegs::sampled(&delays, signalling, bytes, streams)
                    } else {
                        MigrationLegs::nominal(&delays, signalling, bytes)
                    }
                })?;
                for ticket in removal.migrations {
                    let instance = ticket.record.instance_id;
                    let ue = vim.app(instance).map(|a| a.owner_ue).expect("migrating app is registered");
                    eng.schedule(ticket.state_arrives_at, Message::StateTransfer { host, instance, state: ticket.state })
                        .expect("future");
                    eng.schedule(
                        ticket.record.ue_notified_at,
                        Message::LocationUpdate { host, ue, instance, placement: ticket.record.to_host },
                    )
                    .expect("future");
                }
            }

            Message::StateTransfer { host, instance, state } => {
                self.system.host_mut(host)?.vim.complete_transfer(instance, &state)?;
            }

            Message::LocationUpdate { host, ue, instance, placement } => {
                let (record, _) = self.system.complete_migration(host, instance)?;
                self.metrics.record_migration(&record);
                if let Some(agent) = self.ues.get_mut(&ue) {
                    agent.address = Some((instance, placement));
                }
            }

            Message::UeArrival { ue, position, velocity, dwell } => {
                self.metrics.counters.ues_arrived += 1;
                self.ues.insert(
                    ue,
                    UeAgent {
                        ue: UserEquipment { ue_id: ue, position, velocity, app: None, probe_period: self.params.probe_period },
                        last_move: now,
                        address: None,
                        departed: false,
                    },
                );
                if let Some(stay) = dwell {
                    eng.schedule_in(stay, Message::UeDeparture { ue });
                }
                let d = self.delay(PathKind::UeToEdgeApp, 0);
                Self::send(eng, d, Message::AppRequest { ue, position });
            }

            Message::AppRequest { ue, position } => {
                if self.early_terminate.remove(&ue) {
                    return Ok(());
                }
                self.requested.insert(ue);
                let (_, outcome) =
                    self.system.request_app(ue, position, self.params.app.clone(), self.params.warning_zone, now)?;
                self.metrics.counters.requests += 1;
                match outcome {
                    RequestOutcome::Running { .. } => self.metrics.counters.running += 1,
                    RequestOutcome::Rejected => self.metrics.counters.rejected += 1,
                }
                let d = self.delay(PathKind::MecHostToUe, 0);
                Self::send(eng, d, Message::AppAddress { ue, outcome });
            }

            Message::AppAddress { ue, outcome } => {
                let Some(agent) = self.ues.get_mut(&ue) else { return Ok(()) };
                if let RequestOutcome::Running { instance, placement } = outcome {
                    agent.address = Some((instance, placement));
                    agent.ue.app = Some(instance);
                    if !agent.departed {
                        eng.schedule_in(SimDuration::ZERO, Message::ProbeTick { ue });
                    }
                }
            }

            Message::ProbeTick { ue } => {
                let Some(agent) = self.ues.get_mut(&ue) else { return Ok(()) };
                if agent.departed {
                    return Ok(());
                }
                let dt = now.since(agent.last_move).unwrap_or(SimDuration::ZERO);
                agent.ue.position = ue_trajectory_step(&agent.ue, dt);
                agent.last_move = now;
                let (position, period, address) = (agent.ue.position, agent.ue.probe_period, agent.address);
                if let Some((instance, host)) = address {
                    self.metrics.counters.probes_sent += 1;
                    let d = self.delay(scheme_of(host).ue_path(), 0);
                    Self::send(eng, d, Message::Probe { ue, instance, host, sent_at: now, position });
                }
                eng.schedule_in(period, Message::ProbeTick { ue });
            }

            Message::Probe { ue, instance, host, sent_at, position } => {
                let reachable = self
                    .system
                    .app_at_mut(instance, host)
                    .filter(|app| app.status == AppStatus::Running)
                    .map(|app| app.observe(position));
                match reachable {
                    Some(crossing) => {
                        let d = self.delay(scheme_of(host).ue_path(), 0);
                        Self::send(eng, d, Message::ProbeReply { ue, host, sent_at, crossing });
                    }
                    None => self.metrics.counters.probes_lost += 1,
                }
            }

            Message::ProbeReply { ue, host, sent_at, crossing } => {
                let Some(agent) = self.ues.get(&ue) else { return Ok(()) };
                if agent.departed {
                    return Ok(());
                }
                let rtt = now.since(sent_at).expect("reply after probe");
                self.metrics.record_rtt(RttSample { ue_id: ue, scheme: scheme_of(host), value_ms: rtt.as_millis_f64(), at: now });
                if crossing.is_some() {
                    self.metrics.counters.zone_notifications += 1;
                }
            }

            Message::UeDeparture { ue } => {
                if let Some(agent) = self.ues.get_mut(&ue) {
                    agent.departed = true;
                    let d = self.delay(PathKind::UeToEdgeApp, 0);
                    Self::send(eng, d, Message::TerminateRequest { ue });
                }
            }

            Message::TerminateRequest { ue } => {
                self.ues.remove(&ue);
                if !self.requested.remove(&ue) {
                    // Overtook its own request; the request is dropped on arrival.
                    self.early_terminate.insert(ue);
                    return Ok(());
                }
                match self.system.terminate_app(ue) {
                    Ok(_) | Err(SystemError::NoSuchApp(_)) => {}
                    Err(e) => return Err(e.into()),
                }
            }
        }
        Ok(())
    }

    fn on_workload_hour(&mut self, eng: &mut Engine<Message>, hour: u32) -> Result<(), WorldError> {
        let Some(daily) = self.daily.clone() else { return Ok(()) };
        for at in gen_arrivals(&daily.vehicles, hour, &mut self.streams.vehicle_arrivals)? {
            let position = uniform_in_aoi(&self.params.aoi, &mut self.streams.positions);
            let vehicle = VehicleId(self.next_vehicle);
            self.next_vehicle += 1;
            eng.schedule(at, Message::VehicleArrival { vehicle, position, occupancy: None }).expect("within hour");
        }
        for at in gen_arrivals(&daily.ues, hour, &mut self.streams.ue_arrivals)? {
            let position = uniform_in_aoi(&self.params.aoi, &mut self.streams.positions);
            let heading = self.streams.mobility.rng().random_range(0.0..std::f64::consts::TAU);
            let velocity = Point::new(heading.cos(), heading.sin()) * self.params.ue_speed_mps;
            let dwell = gen_occupancy(&daily.ue_dwell, &mut self.streams.ue_dwell)?;
            let ue = UeId(self.next_ue);
            self.next_ue += 1;
            eng.schedule(at, Message::UeArrival { ue, position, velocity, dwell: Some(dwell) }).expect("within hour");
        }
        if hour + 1 < daily.hours {
            eng.schedule(SimTime::from_hours(u64::from(hour) + 1), Message::WorkloadHour { hour: hour + 1 })
                .expect("future hour");
        }
        Ok(())
    }
}
