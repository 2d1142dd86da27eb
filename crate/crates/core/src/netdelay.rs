//! Parametric latency model for the three service-delivery schemes and the
//! migration message paths.
//!
//! Every path is a fixed list of segments. There is no queueing: latencies do
//! not depend on load. Device-to-device traffic is always relayed through the
//! gNB, so a UE reaching an app on a vehicle crosses two radio hops.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::Scalar;
use crate::sim::SimDuration;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DelayError {
    #[error("delay parameter `{field}` must be finite and non-negative, got {value}")]
    Invalid { field: &'static str, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Segment {
    /// Device ↔ gNB.
    Radio,
    /// gNB ↔ MEC host (local UPF).
    Edge,
    /// MEC host ↔ cloud datacenter across the core network.
    Core,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PathKind {
    UeToCloudApp,
    UeToEdgeApp,
    UeToFarEdgeApp,
    VehicleToMecHost,
    MecHostToUe,
    MecHostToVehicle,
}

impl PathKind {
    pub const ALL: [PathKind; 6] = [
        PathKind::UeToCloudApp,
        PathKind::UeToEdgeApp,
        PathKind::UeToFarEdgeApp,
        PathKind::VehicleToMecHost,
        PathKind::MecHostToUe,
        PathKind::MecHostToVehicle,
    ];

    pub fn segments(self) -> &'static [Segment] {
        use Segment::*;
        match self {
            PathKind::UeToCloudApp => &[Radio, Edge, Core],
            PathKind::UeToEdgeApp => &[Radio, Edge],
            PathKind::UeToFarEdgeApp => &[Radio, Radio],
            PathKind::VehicleToMecHost => &[Radio, Edge],
            PathKind::MecHostToUe => &[Edge, Radio],
            PathKind::MecHostToVehicle => &[Edge, Radio],
        }
    }
}

/// Service-delivery scheme, i.e. where the UE's app is hosted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Cloud,
    Edge,
    FarEdge,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Cloud, Scheme::Edge, Scheme::FarEdge];

    pub fn ue_path(self) -> PathKind {
        match self {
            Scheme::Cloud => PathKind::UeToCloudApp,
            Scheme::Edge => PathKind::UeToEdgeApp,
            Scheme::FarEdge => PathKind::UeToFarEdgeApp,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Cloud => "cloud",
            Scheme::Edge => "edge",
            Scheme::FarEdge => "far_edge",
        }
    }

    pub fn parse(s: &str) -> Option<Scheme> {
        Scheme::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

/// Per-segment one-way delays in milliseconds.
///
/// The defaults (2.0 / 0.5 / 5.5 ms) put the far-edge RTT at half the cloud
/// RTT and 3 ms above the edge RTT.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayProfile<T = f64> {
    pub radio_ms: T,
    pub edge_ms: T,
    pub core_ms: T,
    pub per_byte_ms: T,
    /// Half-width of the uniform per-segment jitter; zero disables it.
    pub jitter_ms: T,
}

impl<T: Scalar> Default for DelayProfile<T> {
    fn default() -> Self {
        DelayProfile {
            radio_ms: T::lit(2.0),
            edge_ms: T::lit(0.5),
            core_ms: T::lit(5.5),
            per_byte_ms: T::zero(),
            jitter_ms: T::zero(),
        }
    }
}

impl<T: Scalar> DelayProfile<T> {
    pub fn validate(&self) -> Result<(), DelayError> {
        for (field, v) in [
            ("radio_ms", self.radio_ms),
            ("edge_ms", self.edge_ms),
            ("core_ms", self.core_ms),
            ("per_byte_ms", self.per_byte_ms),
            ("jitter_ms", self.jitter_ms),
        ] {
            if !v.is_finite() || v < T::zero() {
                return Err(DelayError::Invalid { field, value: v.as_f64() });
            }
        }
        Ok(())
    }

    pub fn segment(&self, s: Segment) -> T {
        match s {
            Segment::Radio => self.radio_ms,
            Segment::Edge => self.edge_ms,
            Segment::Core => self.core_ms,
        }
    }

    fn size_term(&self, size_bytes: u64) -> T {
        T::from_u64(size_bytes).expect("byte count fits scalar") * self.per_byte_ms
    }

    /// Jitter-free one-way latency in milliseconds.
    pub fn one_way(&self, path: PathKind, size_bytes: u64) -> T {
        path.segments().iter().map(|&s| self.segment(s)).sum::<T>() + self.size_term(size_bytes)
    }

    /// Jitter-free round trip: twice the one-way latency.
    pub fn rtt(&self, path: PathKind, size_bytes: u64) -> T {
        T::lit(2.0) * self.one_way(path, size_bytes)
    }

    /// One-way latency with independent uniform ±`jitter_ms` noise on each
    /// segment (clamped at zero). Consumes no randomness when jitter is off.
    pub fn sample_one_way<R: Rng + ?Sized>(&self, path: PathKind, size_bytes: u64, rng: &mut R) -> T {
        if self.jitter_ms <= T::zero() {
            return self.one_way(path, size_bytes);
        }
        let eps = self.jitter_ms.as_f64();
        path.segments()
            .iter()
            .map(|&s| {
                let noise = T::lit(rng.random_range(-eps..=eps));
                (self.segment(s) + noise).max(T::zero())
            })
            .sum::<T>()
            + self.size_term(size_bytes)
    }
}

impl DelayProfile<f64> {
    /// [`DelayProfile::one_way`] at the engine's microsecond resolution.
    pub fn one_way_time(&self, path: PathKind, size_bytes: u64) -> SimDuration {
        SimDuration::from_millis_f64(self.one_way(path, size_bytes))
    }

    pub fn sample_one_way_time<R: Rng + ?Sized>(&self, path: PathKind, size_bytes: u64, rng: &mut R) -> SimDuration {
        SimDuration::from_millis_f64(self.sample_one_way(path, size_bytes, rng))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;

    #[test]
    fn default_one_way_values() {
        let p = DelayProfile::<f64>::default();
        assert_eq!(p.one_way(PathKind::UeToEdgeApp, 0), 2.5);
        assert_eq!(p.one_way(PathKind::UeToFarEdgeApp, 0), 4.0);
        assert_eq!(p.one_way(PathKind::UeToEdgeApp, 30), 2.5);
        assert_eq!(p.one_way_time(PathKind::VehicleToMecHost, 30), SimDuration::from_micros(2_500));
    }

    #[test]
    fn default_rtt_values() {
        let p = DelayProfile::<f64>::default();
        let cloud = p.rtt(PathKind::UeToCloudApp, 0);
        let edge = p.rtt(PathKind::UeToEdgeApp, 0);
        let far = p.rtt(PathKind::UeToFarEdgeApp, 0);
        assert_eq!((cloud, edge, far), (16.0, 5.0, 8.0));
        assert_eq!(far / cloud, 0.5);
        assert_eq!(far - edge, 3.0);
    }

    #[test]
    fn f32_profile_agrees() {
        let p = DelayProfile::<f32>::default();
        assert_eq!(p.rtt(PathKind::UeToFarEdgeApp, 0), 8.0f32);
    }

    #[test]
    fn negative_segment_rejected() {
        let p = DelayProfile { radio_ms: -1.0, ..DelayProfile::<f64>::default() };
        assert!(p.validate().is_err());
        assert!(DelayProfile::<f64>::default().validate().is_ok());
    }

    #[test]
    fn jitter_stays_within_bounds() {
        let p = DelayProfile { jitter_ms: 0.1, ..DelayProfile::<f64>::default() };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let x = p.sample_one_way(PathKind::UeToFarEdgeApp, 0, &mut rng);
            assert!((x - 4.0).abs() <= 0.2 + 1e-12);
        }
    }

    fn profile() -> impl Strategy<Value = DelayProfile<f64>> {
        (0.0..50.0f64, 0.0..50.0f64, 0.0..50.0f64, 0.0..0.01f64).prop_map(|(r, e, c, b)| DelayProfile {
            radio_ms: r,
            edge_ms: e,
            core_ms: c,
            per_byte_ms: b,
            jitter_ms: 0.0,
        })
    }

    proptest! {
        #[test]
        fn cloud_slower_than_edge_when_core_positive(p in profile()) {
            prop_assume!(p.core_ms > 0.0);
            prop_assert!(p.rtt(PathKind::UeToCloudApp, 0) > p.rtt(PathKind::UeToEdgeApp, 0));
        }

        #[test]
        fn far_edge_minus_edge_identity(p in profile(), size in 0u64..10_000) {
            let lhs = p.rtt(PathKind::UeToFarEdgeApp, size) - p.rtt(PathKind::UeToEdgeApp, size);
            let rhs = 2.0 * (p.radio_ms - p.edge_ms);
            prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()));
        }

        #[test]
        fn one_way_is_affine_in_size(p in profile(), a in 0u64..5_000, b in 0u64..5_000) {
            for path in PathKind::ALL {
                let slope = (p.one_way(path, a + b) - p.one_way(path, a)) - (p.one_way(path, b) - p.one_way(path, 0));
                prop_assert!(slope.abs() < 1e-9);
            }
        }
    }
}
