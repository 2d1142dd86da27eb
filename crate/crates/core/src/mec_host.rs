//! Host level: the VIM's resource pool over local and far-edge
//! infrastructures, Round-Robin placement, and app migration with downtime
//! accounting.
//!
//! Migration always targets the MEC host's local infrastructure, so a migrated
//! app can never be displaced again by another departing vehicle.
//!
//! Migration timeline for an app on a departing vehicle:
//!
//! ```text
//! shutdown_at ── state transfer (vehicle→MEC-H + signalling) ──> running on local
//!             ── AMS location update (MEC-H→UE + signalling) ──> ue_notified_at
//! ```
//!
//! The ledgers move at shutdown: the vehicle is credited and the local
//! infrastructure debited, so capacity is conserved at every event boundary.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    capacity_fits, AppDescriptor, AppInstance, AppStatus, DomainError, FarEdgeHost, HostRef, InstanceId,
    LocalInfrastructure, MecHostId, UeId, VehicleId, VehicleStatus,
};
use crate::netdelay::PathKind;
use crate::sim::{SimDuration, SimTime};
use crate::{Capacity, Circle, Delays};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VimError {
    #[error("{0} is already in the pool")]
    DuplicateHost(VehicleId),
    #[error("{0} is not in the pool")]
    UnknownHost(VehicleId),
    #[error("no host in the pool can fit the request")]
    NoCapacity,
    #[error("local infrastructure cannot absorb migrated {0}")]
    TargetFull(InstanceId),
    #[error("{0} is not known to this VIM")]
    NoSuchApp(InstanceId),
    #[error("{0} is not running on a remote host")]
    NotMigratable(InstanceId),
    #[error("{0} is not migrating")]
    NotMigrating(InstanceId),
    #[error("instance id {0} already in use")]
    DuplicateInstance(InstanceId),
    #[error(transparent)]
    State(#[from] DomainError),
}

/// Which hosts take part in allocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlacementMode {
    /// Round-Robin over vehicles; the local infrastructure only when no vehicle fits.
    RemoteFirst,
    /// Only the local infrastructure.
    LocalOnly,
    /// Round-Robin over local infrastructure followed by the vehicles.
    Pooled,
}

/// Host selection policy over the placement order.
pub trait Scheduler {
    /// Chooses an index in `0..len` for which `fits` holds, or `None`.
    fn pick(&mut self, len: usize, fits: &mut dyn FnMut(usize) -> bool) -> Option<usize>;
    /// The entry at `index` left the placement order, which now has `new_len` entries.
    fn removed(&mut self, index: usize, new_len: usize);
    fn cursor(&self) -> usize;
}

/// Cyclic scan from the cursor; the first fitting host wins and the cursor
/// moves to its successor. Hosts that do not fit are skipped.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RoundRobin {
    cursor: usize,
}

impl Scheduler for RoundRobin {
    fn pick(&mut self, len: usize, fits: &mut dyn FnMut(usize) -> bool) -> Option<usize> {
        if len == 0 {
            return None;
        }
        let start = self.cursor % len;
        let chosen = (0..len).map(|k| (start + k) % len).find(|&i| fits(i))?;
        self.cursor = (chosen + 1) % len;
        Some(chosen)
    }

    fn removed(&mut self, index: usize, new_len: usize) {
        // A cursor on the removed entry now points at the entry that followed it.
        if index < self.cursor {
            self.cursor -= 1;
        }
        if self.cursor >= new_len {
            self.cursor = 0;
        }
    }

    fn cursor(&self) -> usize {
        self.cursor
    }
}

/// The VIM's heterogeneous pool: local infrastructure plus registered vehicles
/// in join order.
#[derive(Debug, Clone)]
pub struct ResourcePool<S = RoundRobin> {
    pub local: LocalInfrastructure,
    remote: Vec<FarEdgeHost>,
    mode: PlacementMode,
    scheduler: S,
}

impl<S: Scheduler + Default> ResourcePool<S> {
    pub fn new(local: LocalInfrastructure, mode: PlacementMode) -> Self {
        ResourcePool { local, remote: Vec::new(), mode, scheduler: S::default() }
    }
}

impl<S: Scheduler> ResourcePool<S> {
    /// Local infrastructure plus every registered vehicle.
    pub fn size(&self) -> usize {
        1 + self.remote.len()
    }

    pub fn mode(&self) -> PlacementMode {
        self.mode
    }

    pub fn remote(&self) -> &[FarEdgeHost] {
        &self.remote
    }

    pub fn remote_host(&self, vehicle: VehicleId) -> Option<&FarEdgeHost> {
        self.remote.iter().find(|h| h.vehicle_id == vehicle)
    }

    fn remote_index(&self, vehicle: VehicleId) -> Option<usize> {
        self.remote.iter().position(|h| h.vehicle_id == vehicle)
    }

    pub fn cursor(&self) -> usize {
        self.scheduler.cursor()
    }

    fn order_len(&self) -> usize {
        match self.mode {
            PlacementMode::RemoteFirst => self.remote.len(),
            PlacementMode::LocalOnly => 1,
            PlacementMode::Pooled => 1 + self.remote.len(),
        }
    }

    fn order_host(&self, index: usize) -> HostRef {
        match self.mode {
            PlacementMode::RemoteFirst => HostRef::Remote(self.remote[index].vehicle_id),
            PlacementMode::LocalOnly => HostRef::Local(self.local.host_id),
            PlacementMode::Pooled if index == 0 => HostRef::Local(self.local.host_id),
            PlacementMode::Pooled => HostRef::Remote(self.remote[index - 1].vehicle_id),
        }
    }

    fn available(&self, host: HostRef) -> Option<&Capacity> {
        match host {
            HostRef::Local(id) if id == self.local.host_id => Some(&self.local.available),
            HostRef::Remote(v) => self.remote_host(v).map(|h| &h.available),
            _ => None,
        }
    }

    pub fn add_remote(&mut self, mut vehicle: FarEdgeHost) -> Result<usize, VimError> {
        if self.remote_index(vehicle.vehicle_id).is_some() {
            return Err(VimError::DuplicateHost(vehicle.vehicle_id));
        }
        vehicle.status = VehicleStatus::Registered;
        self.remote.push(vehicle);
        Ok(self.size())
    }

    /// Chooses a host for `descriptor` and debits its ledger.
    pub fn allocate(&mut self, descriptor: &AppDescriptor) -> Result<HostRef, VimError> {
        let required = descriptor.required;
        let fitting: Vec<bool> = (0..self.order_len())
            .map(|i| self.available(self.order_host(i)).is_some_and(|a| capacity_fits(&required, a)))
            .collect();
        let host = match self.scheduler.pick(fitting.len(), &mut |i| fitting[i]) {
            Some(i) => self.order_host(i),
            None if self.mode == PlacementMode::RemoteFirst && capacity_fits(&required, &self.local.available) => {
                HostRef::Local(self.local.host_id)
            }
            None => return Err(VimError::NoCapacity),
        };
        self.debit(host, &required)?;
        Ok(host)
    }

    fn slot_mut(&mut self, host: HostRef) -> Option<(&mut Capacity, &mut BTreeSet<InstanceId>)> {
        match host {
            HostRef::Local(id) if id == self.local.host_id => Some((&mut self.local.available, &mut self.local.apps)),
            HostRef::Remote(v) => {
                let h = self.remote.iter_mut().find(|h| h.vehicle_id == v)?;
                Some((&mut h.available, &mut h.apps))
            }
            _ => None,
        }
    }

    fn debit(&mut self, host: HostRef, required: &Capacity) -> Result<(), VimError> {
        let (available, _) = self.slot_mut(host).ok_or(VimError::NoCapacity)?;
        *available = available.checked_sub(required).ok_or(VimError::NoCapacity)?;
        Ok(())
    }

    fn credit(&mut self, host: HostRef, required: &Capacity) {
        if let Some((available, _)) = self.slot_mut(host) {
            *available = *available + *required;
        }
    }

    fn attach(&mut self, host: HostRef, app: InstanceId) {
        if let Some((_, apps)) = self.slot_mut(host) {
            apps.insert(app);
        }
    }

    fn detach(&mut self, host: HostRef, app: InstanceId) {
        if let Some((_, apps)) = self.slot_mut(host) {
            apps.remove(&app);
        }
    }

    /// Removes a vehicle from the placement order and repairs the cursor.
    /// Apps still attached to it are the caller's responsibility.
    fn take_remote(&mut self, vehicle: VehicleId) -> Result<FarEdgeHost, VimError> {
        let index = self.remote_index(vehicle).ok_or(VimError::UnknownHost(vehicle))?;
        let mut host = self.remote.remove(index);
        host.status = VehicleStatus::Outside;
        let order_index = match self.mode {
            PlacementMode::RemoteFirst => Some(index),
            PlacementMode::Pooled => Some(index + 1),
            PlacementMode::LocalOnly => None,
        };
        if let Some(i) = order_index {
            let new_len = self.order_len();
            self.scheduler.removed(i, new_len);
        }
        Ok(host)
    }
}

/// Completed (or scheduled-to-complete) relocation of one app.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MigrationRecord {
    pub instance_id: InstanceId,
    pub from_host: HostRef,
    pub to_host: HostRef,
    pub shutdown_at: SimTime,
    pub ue_notified_at: SimTime,
    pub downtime: SimDuration,
    pub state_bytes: u32,
}

/// Network legs of one migration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MigrationLegs {
    /// Vehicle → MEC host, carrying the app state, plus signalling overhead.
    pub state_transfer: SimDuration,
    /// AMS location update MEC host → UE, plus signalling overhead.
    pub ue_notify: SimDuration,
}

impl MigrationLegs {
    pub fn nominal(profile: &Delays, signalling: SimDuration, state_bytes: u64) -> Self {
        MigrationLegs {
            state_transfer: profile.one_way_time(PathKind::VehicleToMecHost, state_bytes) + signalling,
            ue_notify: profile.one_way_time(PathKind::MecHostToUe, 0) + signalling,
        }
    }

    pub fn sampled<R: Rng + ?Sized>(profile: &Delays, signalling: SimDuration, state_bytes: u64, rng: &mut R) -> Self {
        MigrationLegs {
            state_transfer: profile.sample_one_way_time(PathKind::VehicleToMecHost, state_bytes, rng) + signalling,
            ue_notify: profile.sample_one_way_time(PathKind::MecHostToUe, 0, rng) + signalling,
        }
    }

    pub fn downtime(&self) -> SimDuration {
        self.state_transfer + self.ue_notify
    }
}

/// A migration whose shutdown has happened; the caller schedules the state
/// arrival and the UE notification.
#[derive(Debug, Clone, PartialEq)]
pub struct MigrationTicket {
    pub record: MigrationRecord,
    pub state: Vec<u8>,
    pub state_arrives_at: SimTime,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Termination {
    Stopped(Box<AppInstance>),
    /// The app is migrating; it is stopped once its migration completes.
    Queued,
}

/// Result of [`Vim::remove_remote`].
#[derive(Debug, Clone, PartialEq)]
pub struct Removal {
    pub host: FarEdgeHost,
    pub migrations: Vec<MigrationTicket>,
}

/// Virtualization Infrastructure Manager of one MEC host.
#[derive(Debug, Clone)]
pub struct Vim<S = RoundRobin> {
    pub host_id: MecHostId,
    pool: ResourcePool<S>,
    apps: BTreeMap<InstanceId, AppInstance>,
    in_flight: BTreeMap<InstanceId, MigrationRecord>,
    pending_termination: BTreeSet<InstanceId>,
}

impl<S: Scheduler + Default> Vim<S> {
    pub fn new(host_id: MecHostId, local_capacity: Capacity, mode: PlacementMode) -> Self {
        Vim {
            host_id,
            pool: ResourcePool::new(LocalInfrastructure::new(host_id, local_capacity), mode),
            apps: BTreeMap::new(),
            in_flight: BTreeMap::new(),
            pending_termination: BTreeSet::new(),
        }
    }
}

impl<S: Scheduler> Vim<S> {
    pub fn pool(&self) -> &ResourcePool<S> {
        &self.pool
    }

    pub fn app(&self, id: InstanceId) -> Option<&AppInstance> {
        self.apps.get(&id)
    }

    pub fn app_mut(&mut self, id: InstanceId) -> Option<&mut AppInstance> {
        self.apps.get_mut(&id)
    }

    pub fn apps(&self) -> impl Iterator<Item = &AppInstance> {
        self.apps.values()
    }

    pub fn migrations_in_flight(&self) -> usize {
        self.in_flight.len()
    }

    pub fn add_remote(&mut self, vehicle: FarEdgeHost) -> Result<usize, VimError> {
        self.pool.add_remote(vehicle)
    }

    pub fn allocate(&mut self, descriptor: &AppDescriptor) -> Result<HostRef, VimError> {
        self.pool.allocate(descriptor)
    }

    /// Allocates a host and starts the app on it (zero compute time).
    pub fn instantiate(
        &mut self,
        instance_id: InstanceId,
        owner: UeId,
        descriptor: AppDescriptor,
        zone: Circle,
    ) -> Result<HostRef, VimError> {
        if self.apps.contains_key(&instance_id) {
            return Err(VimError::DuplicateInstance(instance_id));
        }
        let host = self.pool.allocate(&descriptor)?;
        let mut app = AppInstance::new(instance_id, owner, descriptor, zone);
        app.placement = Some(host);
        app.status = AppStatus::Running;
        self.pool.attach(host, instance_id);
        self.apps.insert(instance_id, app);
        Ok(host)
    }

    pub fn terminate(&mut self, instance: InstanceId) -> Result<Termination, VimError> {
        let app = self.apps.get(&instance).ok_or(VimError::NoSuchApp(instance))?;
        if app.status == AppStatus::Migrating {
            self.pending_termination.insert(instance);
            return Ok(Termination::Queued);
        }
        let mut app = self.apps.remove(&instance).expect("looked up above");
        if let Some(host) = app.placement.take() {
            self.pool.credit(host, &app.descriptor.required);
            self.pool.detach(host, instance);
        }
        app.status = AppStatus::Stopped;
        Ok(Termination::Stopped(Box::new(app)))
    }

    /// Stops `instance` on its vehicle and moves its reservation to the local
    /// infrastructure. The app is unreachable until the state arrives. `legs`
    /// is priced on the checkpoint size in bytes.
    pub fn migrate(
        &mut self,
        instance: InstanceId,
        now: SimTime,
        legs: impl FnOnce(u64) -> MigrationLegs,
    ) -> Result<MigrationTicket, VimError> {
        let local = HostRef::Local(self.host_id);
        let app = self.apps.get_mut(&instance).ok_or(VimError::NoSuchApp(instance))?;
        let from = match (app.status, app.placement) {
            (AppStatus::Running, Some(h @ HostRef::Remote(_))) => h,
            _ => return Err(VimError::NotMigratable(instance)),
        };
        let required = app.descriptor.required;
        if !capacity_fits(&required, &self.pool.local.available) {
            return Err(VimError::TargetFull(instance));
        }
        let state = app.checkpoint()?.to_vec();
        let legs = legs(state.len() as u64);
        app.status = AppStatus::Migrating;
        app.placement = Some(local);

        self.pool.credit(from, &required);
        self.pool.detach(from, instance);
        self.pool.debit(local, &required).expect("fit checked above");
        self.pool.attach(local, instance);

        let record = MigrationRecord {
            instance_id: instance,
            from_host: from,
            to_host: local,
            shutdown_at: now,
            ue_notified_at: now + legs.downtime(),
            downtime: legs.downtime(),
            state_bytes: state.len() as u32,
        };
        self.in_flight.insert(instance, record.clone());
        Ok(MigrationTicket { record, state, state_arrives_at: now + legs.state_transfer })
    }

    /// Handles a release notification: every hosted app is migrated to the
    /// local infrastructure, then the vehicle leaves the pool.
    pub fn remove_remote(
        &mut self,
        vehicle: VehicleId,
        now: SimTime,
        mut legs: impl FnMut(u64) -> MigrationLegs,
    ) -> Result<Removal, VimError> {
        let hosted: Vec<InstanceId> = self
            .pool
            .remote_host(vehicle)
            .ok_or(VimError::UnknownHost(vehicle))?
            .apps
            .iter()
            .copied()
            .collect();
        let mut migrations = Vec::with_capacity(hosted.len());
        for instance in hosted {
            migrations.push(self.migrate(instance, now, &mut legs)?);
        }
        let host = self.pool.take_remote(vehicle)?;
        debug_assert!(host.apps.is_empty() && host.available == host.leased);
        Ok(Removal { host, migrations })
    }

    /// The migrated state reached the MEC host: the app resumes on the local
    /// infrastructure.
    pub fn complete_transfer(&mut self, instance: InstanceId, state: &[u8]) -> Result<(), VimError> {
        if !self.in_flight.contains_key(&instance) {
            return Err(VimError::NotMigrating(instance));
        }
        let app = self.apps.get_mut(&instance).ok_or(VimError::NoSuchApp(instance))?;
        app.restore(state)?;
        app.status = AppStatus::Running;
        Ok(())
    }

    /// The UE has the new location: the migration is over. A termination
    /// requested meanwhile is carried out now.
    pub fn complete_migration(&mut self, instance: InstanceId) -> Result<(MigrationRecord, Option<Termination>), VimError> {
        let record = self.in_flight.remove(&instance).ok_or(VimError::NotMigrating(instance))?;
        if let Some(app) = self.apps.get_mut(&instance) {
            // State may still be in flight under extreme jitter; the app is usable from here on.
            app.status = AppStatus::Running;
        }
        let termination = if self.pending_termination.remove(&instance) {
            Some(self.terminate(instance)?)
        } else {
            None
        };
        Ok((record, termination))
    }

    /// Checks the capacity ledger of every host in the pool:
    /// `available + Σ required(apps placed there) == capacity`, and that each
    /// host's app set matches the apps' placements.
    pub fn check_ledger(&self) -> Result<(), String> {
        let local_ref = HostRef::Local(self.host_id);
        let mut hosts: Vec<(HostRef, Capacity, Capacity, &BTreeSet<InstanceId>)> =
            vec![(local_ref, self.pool.local.capacity, self.pool.local.available, &self.pool.local.apps)];
        hosts.extend(self.pool.remote.iter().map(|h| (HostRef::Remote(h.vehicle_id), h.leased, h.available, &h.apps)));

        for (host, total, available, listed) in hosts {
            let placed: BTreeSet<InstanceId> =
                self.apps.values().filter(|a| a.placement == Some(host)).map(|a| a.instance_id).collect();
            if &placed != listed {
                return Err(format!("{host}: app set {listed:?} disagrees with placements {placed:?}"));
            }
            let used = placed.iter().fold(Capacity::zero(), |acc, id| acc + self.apps[id].descriptor.required);
            if available + used != total {
                return Err(format!("{host}: available {available:?} + used {used:?} != {total:?}"));
            }
        }
        for app in self.apps.values() {
            match app.placement {
                Some(HostRef::Remote(v)) if self.pool.remote_host(v).is_none() => {
                    return Err(format!("{} resides on released {v}", app.instance_id));
                }
                None => return Err(format!("{} has no placement", app.instance_id)),
                _ => {}
            }
        }
        Ok(())
    }
}
