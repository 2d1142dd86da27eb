//! Core-network broker: AoI subscriptions from MEC hosts, reward offers for
//! vehicles, and routing of resource join/release notifications to the VIM
//! that owns the area.
//!
//! Only the vehicle-initiated negotiation is modeled: a vehicle inside an AoI
//! queries the offers, picks one through its [`RewardPolicy`], and registers
//! the resources it leases. Each accepted registration or release produces a
//! [`Notice`] that the caller delivers to the owning VIM.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::domain::{AoiId, AreaOfInterest, MecHostId, RewardId, RewardOffer, VehicleId};
use crate::sim::SimTime;
use crate::{Capacity, Point};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BrokerError {
    #[error("{aoi} is already claimed by {owner}")]
    AoiAlreadyClaimed { aoi: AoiId, owner: MecHostId },
    #[error("{0} is not a known area of interest")]
    UnknownAoi(AoiId),
    #[error("{reward} already offered in {aoi}")]
    DuplicateReward { aoi: AoiId, reward: RewardId },
    #[error("{0} is already registered")]
    AlreadyRegistered(VehicleId),
    #[error("{0} was not offered to this vehicle")]
    UnknownReward(RewardId),
    #[error("{0} is outside every subscribed area of interest")]
    OutsideAoi(VehicleId),
    #[error("{0} leases no resources")]
    EmptyLease(VehicleId),
    #[error("{0} is not registered")]
    NotRegistered(VehicleId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AoiSubscription {
    pub aoi_id: AoiId,
    pub mec_host_id: MecHostId,
    pub created_at: SimTime,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationRecord {
    pub vehicle_id: VehicleId,
    pub aoi_id: AoiId,
    pub leased: Capacity,
    pub accepted_reward: RewardId,
    pub registered_at: SimTime,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NoticeKind {
    ResourceJoin { vehicle: VehicleId, leased: Capacity },
    ResourceRelease { vehicle: VehicleId },
}

/// Notification the broker forwards to the VIM of `mec_host`.
#[derive(Debug, Clone, PartialEq)]
pub struct Notice {
    pub mec_host: MecHostId,
    pub kind: NoticeKind,
}

/// Vehicle-side acceptance rule for reward offers.
pub trait RewardPolicy {
    fn choose(&self, offers: &[RewardOffer]) -> Option<RewardOffer>;
}

/// Accepts the first offer, whatever its value.
#[derive(Debug, Clone, Copy, Default)]
pub struct AcceptAny;

impl RewardPolicy for AcceptAny {
    fn choose(&self, offers: &[RewardOffer]) -> Option<RewardOffer> {
        offers.first().copied()
    }
}

#[derive(Debug, Clone)]
struct AoiEntry {
    area: AreaOfInterest,
    subscription: AoiSubscription,
    offers: Vec<RewardOffer>,
}

#[derive(Debug, Clone, Default)]
pub struct Broker {
    aois: BTreeMap<AoiId, AoiEntry>,
    registrations: BTreeMap<VehicleId, RegistrationRecord>,
}

impl Broker {
    pub fn new() -> Self {
        Self::default()
    }

    /// Called by a MEC host at bootstrap. One host per AoI.
    pub fn subscribe_aoi(
        &mut self,
        mec_host_id: MecHostId,
        aoi: AreaOfInterest,
        now: SimTime,
    ) -> Result<AoiSubscription, BrokerError> {
        if let Some(existing) = self.aois.get(&aoi.id) {
            return Err(BrokerError::AoiAlreadyClaimed { aoi: aoi.id, owner: existing.subscription.mec_host_id });
        }
        let subscription = AoiSubscription { aoi_id: aoi.id, mec_host_id, created_at: now };
        self.aois.insert(aoi.id, AoiEntry { area: aoi, subscription, offers: Vec::new() });
        Ok(subscription)
    }

    pub fn publish_offer(&mut self, offer: RewardOffer) -> Result<(), BrokerError> {
        let entry = self.aois.get_mut(&offer.aoi_id).ok_or(BrokerError::UnknownAoi(offer.aoi_id))?;
        if entry.offers.iter().any(|o| o.reward_id == offer.reward_id) {
            return Err(BrokerError::DuplicateReward { aoi: offer.aoi_id, reward: offer.reward_id });
        }
        entry.offers.push(offer);
        Ok(())
    }

    pub fn subscription(&self, aoi: AoiId) -> Option<&AoiSubscription> {
        self.aois.get(&aoi).map(|e| &e.subscription)
    }

    pub fn area(&self, aoi: AoiId) -> Option<&AreaOfInterest> {
        self.aois.get(&aoi).map(|e| &e.area)
    }

    fn containing(&self, position: Point) -> impl Iterator<Item = &AoiEntry> {
        self.aois.values().filter(move |e| e.area.contains(position))
    }

    /// Offers of every AoI containing `position`, each listed once.
    pub fn query_rewards(&self, _vehicle: VehicleId, position: Point) -> Vec<RewardOffer> {
        self.containing(position).flat_map(|e| e.offers.iter().copied()).collect()
    }

    /// Step ③: the vehicle confirms an offer and leases `leased`.
    pub fn register_resources(
        &mut self,
        vehicle: VehicleId,
        position: Point,
        leased: Capacity,
        reward: RewardId,
        now: SimTime,
    ) -> Result<(RegistrationRecord, Notice), BrokerError> {
        if self.registrations.contains_key(&vehicle) {
            return Err(BrokerError::AlreadyRegistered(vehicle));
        }
        if !leased.any_positive() {
            return Err(BrokerError::EmptyLease(vehicle));
        }
        let (aoi_id, mec_host) = {
            let mut inside = self.containing(position).peekable();
            if inside.peek().is_none() {
                return Err(BrokerError::OutsideAoi(vehicle));
            }
            let entry = inside
                .find(|e| e.offers.iter().any(|o| o.reward_id == reward))
                .ok_or(BrokerError::UnknownReward(reward))?;
            (entry.area.id, entry.subscription.mec_host_id)
        };
        let record = RegistrationRecord {
            vehicle_id: vehicle,
            aoi_id,
            leased,
            accepted_reward: reward,
            registered_at: now,
        };
        let notice = Notice {
            mec_host,
            kind: NoticeKind::ResourceJoin { vehicle, leased },
        };
        self.registrations.insert(vehicle, record.clone());
        Ok((record, notice))
    }

    /// The departing vehicle notifies the broker, which forwards the release
    /// to the VIM managing the area.
    pub fn release_resources(&mut self, vehicle: VehicleId) -> Result<(RegistrationRecord, Notice), BrokerError> {
        let record = self.registrations.remove(&vehicle).ok_or(BrokerError::NotRegistered(vehicle))?;
        let mec_host = self.aois[&record.aoi_id].subscription.mec_host_id;
        Ok((record, Notice { mec_host, kind: NoticeKind::ResourceRelease { vehicle } }))
    }

    pub fn is_registered(&self, vehicle: VehicleId) -> bool {
        self.registrations.contains_key(&vehicle)
    }

    pub fn registration(&self, vehicle: VehicleId) -> Option<&RegistrationRecord> {
        self.registrations.get(&vehicle)
    }

    pub fn registered(&self) -> impl Iterator<Item = &RegistrationRecord> {
        self.registrations.values()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Zone, ZoneId};
    use crate::Circle;

    fn area(id: u32, zones: &[(f64, f64, f64)]) -> AreaOfInterest {
        let zones = zones
            .iter()
            .enumerate()
            .map(|(i, &(x, y, r))| Zone { id: ZoneId(i as u32), coverage: Circle::new(Point::new(x, y), r) })
            .collect();
        AreaOfInterest::new(AoiId(id), zones).unwrap()
    }

    fn offer(aoi: u32, id: u32) -> RewardOffer {
        RewardOffer { reward_id: RewardId(id), aoi_id: AoiId(aoi), value: 1.0 }
    }

    fn broker() -> Broker {
        let mut b = Broker::new();
        b.subscribe_aoi(MecHostId(1), area(1, &[(0.0, 0.0, 100.0), (50.0, 0.0, 100.0)]), SimTime::ZERO).unwrap();
        b.subscribe_aoi(MecHostId(2), area(2, &[(1000.0, 0.0, 100.0)]), SimTime::ZERO).unwrap();
        b.publish_offer(offer(1, 10)).unwrap();
        b.publish_offer(offer(2, 20)).unwrap();
        b
    }

    const LEASE: Capacity = Capacity { cpu: 1, ram: 1, disk: 1 };

    #[test]
    fn second_host_cannot_claim_aoi() {
        let mut b = broker();
        let err = b.subscribe_aoi(MecHostId(3), area(1, &[(0.0, 0.0, 1.0)]), SimTime::ZERO).unwrap_err();
        assert_eq!(err, BrokerError::AoiAlreadyClaimed { aoi: AoiId(1), owner: MecHostId(1) });
    }

    #[test]
    fn offers_follow_position() {
        let b = broker();
        assert!(b.query_rewards(VehicleId(1), Point::new(500.0, 500.0)).is_empty());
        assert_eq!(b.query_rewards(VehicleId(1), Point::new(1000.0, 0.0)), vec![offer(2, 20)]);
        // Inside both zones of aoi-1: the offer is still listed once.
        assert_eq!(b.query_rewards(VehicleId(1), Point::new(25.0, 0.0)), vec![offer(1, 10)]);
    }

    #[test]
    fn registration_routes_to_owner() {
        let mut b = broker();
        let (rec, notice) = b
            .register_resources(VehicleId(7), Point::new(0.0, 0.0), LEASE, RewardId(10), SimTime::from_secs(3))
            .unwrap();
        assert_eq!(rec.aoi_id, AoiId(1));
        assert_eq!(rec.registered_at, SimTime::from_secs(3));
        assert_eq!(notice, Notice { mec_host: MecHostId(1), kind: NoticeKind::ResourceJoin { vehicle: VehicleId(7), leased: LEASE } });
        assert_eq!(
            b.register_resources(VehicleId(7), Point::new(0.0, 0.0), LEASE, RewardId(10), SimTime::ZERO),
            Err(BrokerError::AlreadyRegistered(VehicleId(7)))
        );
    }

    #[test]
    fn registration_errors() {
        let mut b = broker();
        let origin = Point::new(0.0, 0.0);
        assert_eq!(
            b.register_resources(VehicleId(1), origin, LEASE, RewardId(20), SimTime::ZERO),
            Err(BrokerError::UnknownReward(RewardId(20)))
        );
        assert_eq!(
            b.register_resources(VehicleId(1), Point::new(400.0, 400.0), LEASE, RewardId(10), SimTime::ZERO),
            Err(BrokerError::OutsideAoi(VehicleId(1)))
        );
        assert_eq!(
            b.register_resources(VehicleId(1), origin, Capacity::zero(), RewardId(10), SimTime::ZERO),
            Err(BrokerError::EmptyLease(VehicleId(1)))
        );
        assert!(!b.is_registered(VehicleId(1)));
    }

    #[test]
    fn release_forwards_to_vim_once() {
        let mut b = broker();
        b.register_resources(VehicleId(4), Point::new(1000.0, 0.0), LEASE, RewardId(20), SimTime::ZERO).unwrap();
        let (_, notice) = b.release_resources(VehicleId(4)).unwrap();
        assert_eq!(notice, Notice { mec_host: MecHostId(2), kind: NoticeKind::ResourceRelease { vehicle: VehicleId(4) } });
        assert_eq!(b.release_resources(VehicleId(4)), Err(BrokerError::NotRegistered(VehicleId(4))));
        assert_eq!(b.release_resources(VehicleId(99)), Err(BrokerError::NotRegistered(VehicleId(99))));
    }

    #[test]
    fn accept_any_takes_first_offer() {
        assert_eq!(AcceptAny.choose(&[offer(1, 3), offer(1, 4)]), Some(offer(1, 3)));
        assert_eq!(AcceptAny.choose(&[]), None);
    }
}
