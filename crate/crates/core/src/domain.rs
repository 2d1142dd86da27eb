//! Entity model shared by every module: hosts, apps, vehicles, UEs, areas of
//! interest and rewards.

use std::collections::BTreeSet;
use std::fmt;
use std::ops::Add;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Circle2, Point2};
use crate::num::{Quantity, Scalar};
use crate::sim::SimDuration;
use crate::{Capacity, Circle, Point};

macro_rules! id_type {
    ($(#[$m:meta])* $name:ident($inner:ty), $prefix:literal) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub struct $name(pub $inner);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }
    };
}

id_type!(VehicleId(u32), "veh-");
id_type!(UeId(u32), "ue-");
id_type!(InstanceId(u64), "app-");
id_type!(MecHostId(u32), "mech-");
id_type!(AoiId(u32), "aoi-");
id_type!(ZoneId(u32), "zone-");
id_type!(RewardId(u32), "reward-");
id_type!(RequestId(u64), "req-");

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("area of interest {0} has no zones")]
    EmptyAoi(AoiId),
    #[error("app state of {len} bytes exceeds the declared {limit}-byte bound")]
    StateTooLarge { len: usize, limit: u32 },
    #[error("app state is malformed")]
    CorruptState,
}

/// Leasable resource vector: CPU (instructions/s), RAM (bytes), disk (bytes).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ResourceCapacity<T> {
    pub cpu: T,
    pub ram: T,
    pub disk: T,
}

impl<T: Quantity> ResourceCapacity<T> {
    pub fn new(cpu: T, ram: T, disk: T) -> Self {
        ResourceCapacity { cpu, ram, disk }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    /// Component-wise `self <= other`.
    pub fn fits_within(&self, other: &Self) -> bool {
        self.cpu <= other.cpu && self.ram <= other.ram && self.disk <= other.disk
    }

    /// Component-wise subtraction; `None` if any component would go negative.
    pub fn checked_sub(&self, other: &Self) -> Option<Self> {
        Some(Self::new(
            self.cpu.checked_less(other.cpu)?,
            self.ram.checked_less(other.ram)?,
            self.disk.checked_less(other.disk)?,
        ))
    }

    pub fn is_valid(&self) -> bool {
        !(self.cpu.is_negative() || self.ram.is_negative() || self.disk.is_negative())
    }

    pub fn any_positive(&self) -> bool {
        let z = T::zero();
        self.cpu > z || self.ram > z || self.disk > z
    }
}

impl<T: Quantity> Add for ResourceCapacity<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.cpu + rhs.cpu, self.ram + rhs.ram, self.disk + rhs.disk)
    }
}

/// True iff `required <= available` component-wise.
pub fn capacity_fits<T: Quantity>(required: &ResourceCapacity<T>, available: &ResourceCapacity<T>) -> bool {
    required.fits_within(available)
}

/// One gNB coverage area.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Zone<T> {
    pub id: ZoneId,
    pub coverage: Circle2<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaOfInterest<T = f64> {
    pub id: AoiId,
    zones: Vec<Zone<T>>,
}

impl<T: Scalar> AreaOfInterest<T> {
    pub fn new(id: AoiId, zones: Vec<Zone<T>>) -> Result<Self, DomainError> {
        if zones.is_empty() {
            return Err(DomainError::EmptyAoi(id));
        }
        Ok(AreaOfInterest { id, zones })
    }

    pub fn zones(&self) -> &[Zone<T>] {
        &self.zones
    }

    pub fn contains(&self, p: Point2<T>) -> bool {
        self.zones.iter().any(|z| z.coverage.contains(p))
    }

    pub fn total_zone_area(&self) -> T {
        self.zones.iter().map(|z| z.coverage.area()).sum()
    }
}

/// True iff `position` lies within at least one zone of `aoi` (closed boundary).
pub fn inside_aoi<T: Scalar>(position: Point2<T>, aoi: &AreaOfInterest<T>) -> bool {
    aoi.contains(position)
}

/// Where an app instance runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum HostRef {
    Local(MecHostId),
    Remote(VehicleId),
    Cloud,
}

impl fmt::Display for HostRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HostRef::Local(h) => write!(f, "local:{h}"),
            HostRef::Remote(v) => write!(f, "remote:{v}"),
            HostRef::Cloud => f.write_str("cloud"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VehicleStatus {
    Outside,
    Negotiating,
    Registered,
    Releasing,
}

/// A vehicle acting as a remote virtualization infrastructure.
#[derive(Debug, Clone, PartialEq)]
pub struct FarEdgeHost {
    pub vehicle_id: VehicleId,
    pub leased: Capacity,
    pub available: Capacity,
    pub position: Point,
    pub status: VehicleStatus,
    pub apps: BTreeSet<InstanceId>,
}

impl FarEdgeHost {
    pub fn new(vehicle_id: VehicleId, leased: Capacity, position: Point) -> Self {
        FarEdgeHost {
            vehicle_id,
            leased,
            available: leased,
            position,
            status: VehicleStatus::Negotiating,
            apps: BTreeSet::new(),
        }
    }
}

/// The MEC host's own virtualization infrastructure; always in the pool.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalInfrastructure {
    pub host_id: MecHostId,
    pub capacity: Capacity,
    pub available: Capacity,
    pub apps: BTreeSet<InstanceId>,
}

impl LocalInfrastructure {
    pub fn new(host_id: MecHostId, capacity: Capacity) -> Self {
        LocalInfrastructure { host_id, capacity, available: capacity, apps: BTreeSet::new() }
    }
}

pub const WARNING_ZONE_APP: &str = "warning-zone";
pub const DEFAULT_STATE_SIZE: u32 = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppDescriptor {
    pub app_type: String,
    pub required: Capacity,
    pub state_size: u32,
}

impl Default for AppDescriptor {
    /// Scenario default: 1e6 instr/s, 64 MiB RAM, 16 MiB disk, 30-byte state.
    fn default() -> Self {
        AppDescriptor {
            app_type: WARNING_ZONE_APP.to_owned(),
            required: Capacity::new(1_000_000, 64 << 20, 16 << 20),
            state_size: DEFAULT_STATE_SIZE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AppStatus {
    Starting,
    Running,
    Stopped,
    Migrating,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZoneCrossing {
    Entered,
    Left,
}

/// Serialized warning-zone state: version, inside flag, notification count,
/// zone geometry (f32) and probe count. 22 bytes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WarningZoneState {
    pub inside: bool,
    pub notifications: u32,
    pub zone: Circle2<f32>,
    pub probes: u32,
}

impl WarningZoneState {
    const VERSION: u8 = 1;
    pub const ENCODED_LEN: usize = 22;

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(Self::ENCODED_LEN);
        out.push(Self::VERSION);
        out.push(u8::from(self.inside));
        out.extend_from_slice(&self.notifications.to_le_bytes());
        out.extend_from_slice(&self.zone.center.x.to_le_bytes());
        out.extend_from_slice(&self.zone.center.y.to_le_bytes());
        out.extend_from_slice(&self.zone.radius.to_le_bytes());
        out.extend_from_slice(&self.probes.to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DomainError> {
        if bytes.len() != Self::ENCODED_LEN || bytes[0] != Self::VERSION || bytes[1] > 1 {
            return Err(DomainError::CorruptState);
        }
        let word = |at: usize| <[u8; 4]>::try_from(&bytes[at..at + 4]).expect("length checked");
        Ok(WarningZoneState {
            inside: bytes[1] == 1,
            notifications: u32::from_le_bytes(word(2)),
            zone: Circle2::new(
                Point2::new(f32::from_le_bytes(word(6)), f32::from_le_bytes(word(10))),
                f32::from_le_bytes(word(14)),
            ),
            probes: u32::from_le_bytes(word(18)),
        })
    }
}

/// A stateful MEC application: the warning-zone app notifies its user on
/// every entry into or exit from a circular zone.
#[derive(Debug, Clone, PartialEq)]
pub struct AppInstance {
    pub instance_id: InstanceId,
    pub owner_ue: UeId,
    pub descriptor: AppDescriptor,
    pub placement: Option<HostRef>,
    pub status: AppStatus,
    pub app_state: Vec<u8>,
    pub zone: Circle,
    pub last_inside: bool,
    pub notifications: u32,
    pub probes: u32,
}

impl AppInstance {
    pub fn new(instance_id: InstanceId, owner_ue: UeId, descriptor: AppDescriptor, zone: Circle) -> Self {
        AppInstance {
            instance_id,
            owner_ue,
            descriptor,
            placement: None,
            status: AppStatus::Starting,
            app_state: Vec::new(),
            zone,
            last_inside: false,
            notifications: 0,
            probes: 0,
        }
    }

    /// Processes a position report; returns the crossing if the inside/outside
    /// status changed since the previous report.
    pub fn observe(&mut self, position: Point) -> Option<ZoneCrossing> {
        self.probes = self.probes.wrapping_add(1);
        let inside = self.zone.contains(position);
        if inside == self.last_inside {
            return None;
        }
        self.last_inside = inside;
        self.notifications += 1;
        Some(if inside { ZoneCrossing::Entered } else { ZoneCrossing::Left })
    }

    /// Serializes the live state into `app_state` and returns it.
    pub fn checkpoint(&mut self) -> Result<&[u8], DomainError> {
        let state = WarningZoneState {
            inside: self.last_inside,
            notifications: self.notifications,
            zone: Circle2::new(
                Point2::new(self.zone.center.x as f32, self.zone.center.y as f32),
                self.zone.radius as f32,
            ),
            probes: self.probes,
        }
        .encode();
        if state.len() > self.descriptor.state_size as usize {
            return Err(DomainError::StateTooLarge { len: state.len(), limit: self.descriptor.state_size });
        }
        self.app_state = state;
        Ok(&self.app_state)
    }

    /// Rebuilds live state from a checkpoint received over the network.
    pub fn restore(&mut self, bytes: &[u8]) -> Result<(), DomainError> {
        if bytes.len() > self.descriptor.state_size as usize {
            return Err(DomainError::StateTooLarge { len: bytes.len(), limit: self.descriptor.state_size });
        }
        let s = WarningZoneState::decode(bytes)?;
        self.last_inside = s.inside;
        self.notifications = s.notifications;
        self.probes = s.probes;
        self.zone = Circle2::new(
            Point2::new(f64::from(s.zone.center.x), f64::from(s.zone.center.y)),
            f64::from(s.zone.radius),
        );
        self.app_state = bytes.to_vec();
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserEquipment {
    pub ue_id: UeId,
    pub position: Point,
    /// Meters per second.
    pub velocity: Point,
    pub app: Option<InstanceId>,
    pub probe_period: SimDuration,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardOffer {
    pub reward_id: RewardId,
    pub aoi_id: AoiId,
    pub value: f64,
}
