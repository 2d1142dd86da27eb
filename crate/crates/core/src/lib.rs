//! Discrete-event simulator of a MEC deployment whose host pools local
//! resources with compute leased from parked vehicles.
//!
//! Numeric primitives (capacities, geometry, delays, workload fitting) are
//! generic over the scalar type; the engine and the simulated world run on
//! `f64` milliseconds and `u64` microsecond clocks. The aliases below fix the
//! concrete types used throughout the simulation.

pub mod broker;
pub mod config;
pub mod dataset;
pub mod experiment;
pub mod domain;
pub mod geometry;
pub mod mec_host;
pub mod mec_system;
pub mod metrics;
pub mod netdelay;
pub mod num;
pub mod rng;
pub mod sim;
pub mod wire;
pub mod world;
pub mod workload;

pub type Capacity = domain::ResourceCapacity<u64>;
pub type Point = geometry::Point2<f64>;
pub type Circle = geometry::Circle2<f64>;
pub type Delays = netdelay::DelayProfile<f64>;
pub type Occupancy = workload::OccupancyModel<f64>;
pub type RateTable = workload::HourlyRateTable<f64>;
pub type NormalFit = workload::NormalFit<f64>;
