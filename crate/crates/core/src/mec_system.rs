//! System level: the UALCMP entry point for UE lifecycle requests and MEC-O
//! host selection.
//!
//! Under [`Deployment::Cloud`] every app runs in the remote datacenter, which
//! is treated as unbounded. Otherwise MEC-O picks the first host whose AoI
//! covers the UE and lets its VIM allocate.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::domain::{AppDescriptor, AppInstance, AppStatus, AreaOfInterest, HostRef, InstanceId, MecHostId, RequestId, UeId};
use crate::mec_host::{MigrationRecord, Termination, Vim, VimError};
use crate::sim::SimTime;
use crate::{Circle, Point};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SystemError {
    #[error("{0} already has an app")]
    DuplicateRequest(UeId),
    #[error("{0} has no running app")]
    NoSuchApp(UeId),
    #[error("{0} is not a known MEC host")]
    UnknownHost(MecHostId),
    #[error(transparent)]
    Vim(#[from] VimError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Deployment {
    Cloud,
    Mec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AppRequest {
    pub request_id: RequestId,
    pub ue_id: UeId,
    pub descriptor: AppDescriptor,
    pub issued_at: SimTime,
}

/// Terminal outcome of an [`AppRequest`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RequestOutcome {
    Running { instance: InstanceId, placement: HostRef },
    Rejected,
}

#[derive(Debug, Clone)]
pub struct MecHost {
    pub id: MecHostId,
    pub aoi: AreaOfInterest,
    pub vim: Vim,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Binding {
    instance: InstanceId,
    host: Option<MecHostId>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RequestCounters {
    pub issued: u64,
    pub running: u64,
    pub rejected: u64,
}

#[derive(Debug, Clone)]
pub struct MecSystem {
    deployment: Deployment,
    hosts: Vec<MecHost>,
    cloud: BTreeMap<InstanceId, AppInstance>,
    bindings: BTreeMap<UeId, Binding>,
    next_request: u64,
    next_instance: u64,
    counters: RequestCounters,
}

impl MecSystem {
    pub fn new(deployment: Deployment) -> Self {
        MecSystem {
            deployment,
            hosts: Vec::new(),
            cloud: BTreeMap::new(),
            bindings: BTreeMap::new(),
            next_request: 0,
            next_instance: 0,
            counters: RequestCounters::default(),
        }
    }

    pub fn deployment(&self) -> Deployment {
        self.deployment
    }

    pub fn add_host(&mut self, host: MecHost) {
        self.hosts.push(host);
    }

    pub fn hosts(&self) -> &[MecHost] {
        &self.hosts
    }

    pub fn host(&self, id: MecHostId) -> Option<&MecHost> {
        self.hosts.iter().find(|h| h.id == id)
    }

    pub fn host_mut(&mut self, id: MecHostId) -> Result<&mut MecHost, SystemError> {
        self.hosts.iter_mut().find(|h| h.id == id).ok_or(SystemError::UnknownHost(id))
    }

    pub fn counters(&self) -> RequestCounters {
        self.counters
    }

    /// MEC-O selection: the first host whose AoI covers `position`.
    pub fn select_host(&self, position: Point) -> Option<MecHostId> {
        self.hosts.iter().find(|h| h.aoi.contains(position)).map(|h| h.id)
    }

    /// Handles a UE's instantiation request. Capacity shortage is a terminal
    /// [`RequestOutcome::Rejected`], not an error.
    pub fn request_app(
        &mut self,
        ue_id: UeId,
        position: Point,
        descriptor: AppDescriptor,
        zone: Circle,
        now: SimTime,
    ) -> Result<(AppRequest, RequestOutcome), SystemError> {
        if self.bindings.contains_key(&ue_id) {
            return Err(SystemError::DuplicateRequest(ue_id));
        }
        let request = AppRequest { request_id: RequestId(self.next_request), ue_id, descriptor, issued_at: now };
        self.next_request += 1;
        self.counters.issued += 1;

        let instance = InstanceId(self.next_instance);
        let outcome = match self.deployment {
            Deployment::Cloud => {
                let mut app = AppInstance::new(instance, ue_id, request.descriptor.clone(), zone);
                app.placement = Some(HostRef::Cloud);
                app.status = AppStatus::Running;
                self.cloud.insert(instance, app);
                self.bindings.insert(ue_id, Binding { instance, host: None });
                RequestOutcome::Running { instance, placement: HostRef::Cloud }
            }
            Deployment::Mec => match self.select_host(position) {
                None => RequestOutcome::Rejected,
                Some(host_id) => {
                    let host = self.host_mut(host_id)?;
                    match host.vim.instantiate(instance, ue_id, request.descriptor.clone(), zone) {
                        Ok(placement) => {
                            self.bindings.insert(ue_id, Binding { instance, host: Some(host_id) });
                            RequestOutcome::Running { instance, placement }
                        }
                        Err(VimError::NoCapacity) => RequestOutcome::Rejected,
                        Err(e) => return Err(e.into()),
                    }
                }
            },
        };
        match outcome {
            RequestOutcome::Running { .. } => {
                self.next_instance += 1;
                self.counters.running += 1;
            }
            RequestOutcome::Rejected => self.counters.rejected += 1,
        }
        Ok((request, outcome))
    }

    /// Stops the UE's app. During a migration the stop is queued and carried
    /// out by [`MecSystem::complete_migration`].
    pub fn terminate_app(&mut self, ue_id: UeId) -> Result<Termination, SystemError> {
        let binding = *self.bindings.get(&ue_id).ok_or(SystemError::NoSuchApp(ue_id))?;
        let termination = match binding.host {
            None => {
                let mut app = self.cloud.remove(&binding.instance).ok_or(SystemError::NoSuchApp(ue_id))?;
                app.status = AppStatus::Stopped;
                app.placement = None;
                Termination::Stopped(Box::new(app))
            }
            Some(h) => self.host_mut(h)?.vim.terminate(binding.instance)?,
        };
        if matches!(termination, Termination::Stopped(_)) {
            self.bindings.remove(&ue_id);
        }
        Ok(termination)
    }

    /// Finalizes a migration on `host` and releases the UE binding if a
    /// queued termination ran.
    pub fn complete_migration(
        &mut self,
        host: MecHostId,
        instance: InstanceId,
    ) -> Result<(MigrationRecord, Option<Termination>), SystemError> {
        let (record, termination) = self.host_mut(host)?.vim.complete_migration(instance)?;
        if let Some(Termination::Stopped(app)) = &termination {
            self.bindings.remove(&app.owner_ue);
        }
        Ok((record, termination))
    }

    pub fn app_of(&self, ue_id: UeId) -> Option<&AppInstance> {
        let b = self.bindings.get(&ue_id)?;
        match b.host {
            None => self.cloud.get(&b.instance),
            Some(h) => self.host(h)?.vim.app(b.instance),
        }
    }

    /// Looks up the app instance reachable at `host`, if it is there.
    pub fn app_at_mut(&mut self, instance: InstanceId, host: HostRef) -> Option<&mut AppInstance> {
        let app = match host {
            HostRef::Cloud => self.cloud.get_mut(&instance),
            HostRef::Local(_) | HostRef::Remote(_) => {
                self.hosts.iter_mut().find_map(|h| h.vim.app_mut(instance))
            }
        }?;
        (app.placement == Some(host)).then_some(app)
    }

    pub fn running_apps(&self) -> usize {
        self.cloud.len() + self.hosts.iter().map(|h| h.vim.apps().count()).sum::<usize>()
    }
}
