//! Workload generators (vehicle and UE arrivals, parking occupancy, flash
//! crowds, linear UE mobility) and the estimators that fit them to traces.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{AreaOfInterest, UeId, UserEquipment};
use crate::num::{mean_std, Scalar};
use crate::rng::{Dist, DistError, RngStream};
use crate::sim::{SimDuration, SimTime};
use crate::Point;

pub const HOURS_PER_DAY: usize = 24;
const HOUR_US: u64 = 3_600_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorkloadError {
    #[error("arrival rate for hour {hour} must be finite and non-negative, got {value}")]
    InvalidRate { hour: usize, value: f64 },
    #[error("capacity scale must be finite and positive, got {0}")]
    InvalidScale(f64),
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("no counts for hour {0}")]
    MissingHour(u8),
    #[error(transparent)]
    Dist(#[from] DistError),
}

/// Parking occupancy time in minutes: a normal truncated to positive values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OccupancyModel<T = f64> {
    pub mu: T,
    pub sigma: T,
}

impl<T: Scalar> Default for OccupancyModel<T> {
    fn default() -> Self {
        OccupancyModel { mu: T::lit(202.80), sigma: T::lit(135.07) }
    }
}

impl<T: Scalar> OccupancyModel<T> {
    pub fn dist(&self) -> Dist {
        Dist::TruncatedNormal { mean: self.mu.as_f64(), std_dev: self.sigma.as_f64(), lower: 0.0 }
    }

    pub fn draw_minutes(&self, rng: &mut RngStream) -> Result<T, WorkloadError> {
        Ok(T::lit(rng.draw(&self.dist())?))
    }
}

/// Positive occupancy duration, resampled until > 0.
pub fn gen_occupancy<T: Scalar>(model: &OccupancyModel<T>, rng: &mut RngStream) -> Result<SimDuration, WorkloadError> {
    let minutes = model.draw_minutes(rng)?.as_f64();
    // A draw just above zero may round to 0 µs; keep the duration strictly positive.
    Ok(SimDuration::from_minutes_f64(minutes).max(SimDuration::from_micros(1)))
}

/// Mean arrivals per hour of day, scaled by `capacity_scale` at generation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HourlyRateTable<T = f64> {
    pub rates: [T; HOURS_PER_DAY],
    pub capacity_scale: T,
}

impl<T: Scalar> HourlyRateTable<T> {
    pub fn new(rates: [T; HOURS_PER_DAY]) -> Result<Self, WorkloadError> {
        let t = HourlyRateTable { rates, capacity_scale: T::one() };
        t.validate()?;
        Ok(t)
    }

    pub fn constant(lambda: T) -> Result<Self, WorkloadError> {
        Self::new([lambda; HOURS_PER_DAY])
    }

    pub fn with_scale(mut self, scale: T) -> Result<Self, WorkloadError> {
        self.capacity_scale = scale;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), WorkloadError> {
        for (hour, &r) in self.rates.iter().enumerate() {
            if !r.is_finite() || r < T::zero() {
                return Err(WorkloadError::InvalidRate { hour, value: r.as_f64() });
            }
        }
        let s = self.capacity_scale;
        if !s.is_finite() || s <= T::zero() {
            return Err(WorkloadError::InvalidScale(s.as_f64()));
        }
        Ok(())
    }

    /// Expected arrivals in `hour` (taken modulo 24) after scaling.
    pub fn scaled_rate(&self, hour: u32) -> T {
        self.rates[hour as usize % HOURS_PER_DAY] * self.capacity_scale
    }
}

/// Poisson(λ·scale) arrivals in absolute simulation hour `hour`, uniform
/// within the hour and sorted.
pub fn gen_arrivals<T: Scalar>(
    table: &HourlyRateTable<T>,
    hour: u32,
    rng: &mut RngStream,
) -> Result<Vec<SimTime>, WorkloadError> {
    let lambda = table.scaled_rate(hour).as_f64();
    let count = rng.draw(&Dist::Poisson { lambda })? as usize;
    let start = u64::from(hour) * HOUR_US;
    let mut times: Vec<SimTime> =
        (0..count).map(|_| SimTime::from_micros(start + rng.rng().random_range(0..HOUR_US))).collect();
    times.sort_unstable();
    Ok(times)
}

/// Lot admission: arrivals beyond capacity are dropped and counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ParkingLot {
    pub capacity: u32,
    pub occupants: u32,
    pub dropped: u64,
}

impl ParkingLot {
    pub fn new(capacity: u32) -> Self {
        ParkingLot { capacity, occupants: 0, dropped: 0 }
    }

    pub fn admit(&mut self) -> bool {
        if self.occupants < self.capacity {
            self.occupants += 1;
            true
        } else {
            self.dropped += 1;
            false
        }
    }

    pub fn leave(&mut self) {
        self.occupants = self.occupants.saturating_sub(1);
    }
}

/// Uniform position inside the union of the AoI's zones.
pub fn uniform_in_aoi(aoi: &AreaOfInterest, rng: &mut RngStream) -> Point {
    let (mut lo, mut hi) = (Point::new(f64::INFINITY, f64::INFINITY), Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY));
    for z in aoi.zones() {
        let (c, r) = (z.coverage.center, z.coverage.radius);
        lo = Point::new(lo.x.min(c.x - r), lo.y.min(c.y - r));
        hi = Point::new(hi.x.max(c.x + r), hi.y.max(c.y + r));
    }
    if lo.x == hi.x && lo.y == hi.y {
        return lo;
    }
    // Rejection from the bounding box is exactly uniform over the union, overlaps included.
    loop {
        let p = Point::new(rng.rng().random_range(lo.x..=hi.x), rng.rng().random_range(lo.y..=hi.y));
        if aoi.contains(p) {
            return p;
        }
    }
}

/// `n` stationary UEs with ids starting at `first_id`, uniform over the AoI.
/// The caller schedules their requests at the crowd's spawn instant.
pub fn spawn_flash_crowd(
    n: usize,
    first_id: u32,
    aoi: &AreaOfInterest,
    probe_period: SimDuration,
    rng: &mut RngStream,
) -> Vec<UserEquipment> {
    (0..n)
        .map(|i| UserEquipment {
            ue_id: UeId(first_id + i as u32),
            position: uniform_in_aoi(aoi, rng),
            velocity: Point::default(),
            app: None,
            probe_period,
        })
        .collect()
}

/// Linear motion: `position + velocity·dt`.
pub fn ue_trajectory_step(ue: &UserEquipment, dt: SimDuration) -> Point {
    ue.position + ue.velocity * (dt.as_millis_f64() / 1e3)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalFit<T = f64> {
    pub mu: T,
    pub sigma: T,
}

/// Sample mean and standard deviation (population denominator `n`).
pub fn fit_normal<T: Scalar>(samples: &[T]) -> Result<NormalFit<T>, WorkloadError> {
    if samples.len() < 2 {
        return Err(WorkloadError::TooFewSamples(samples.len()));
    }
    let (mu, sigma) = mean_std(samples).expect("non-empty");
    Ok(NormalFit { mu, sigma })
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Inverse Mills ratio φ(a)/(1−Φ(a)).
fn mills(a: f64) -> f64 {
    std_normal_pdf(a) / (0.5 * libm::erfc(a / std::f64::consts::SQRT_2))
}

/// mean²/variance of a standard normal truncated below at `a`.
fn truncated_moment_ratio(a: f64) -> f64 {
    let l = mills(a);
    (l - a).powi(2) / (1.0 + a * l - l * l)
}

const ALPHA_LO: f64 = -40.0;
const ALPHA_HI: f64 = 8.0;

/// Latent (μ, σ) of a normal truncated to `x > 0` that generated `samples`.
///
/// Maximum likelihood for this family reduces to matching the first two
/// moments, solved for the standardized truncation point by bisection. If the
/// sample is too dispersed for any truncated normal, plain moments are
/// returned with a warning.
pub fn fit_truncated_normal<T: Scalar>(samples: &[T]) -> Result<NormalFit<T>, WorkloadError> {
    let plain = fit_normal(samples)?;
    let (m, s) = (plain.mu.as_f64(), plain.sigma.as_f64());
    if s == 0.0 || m <= 0.0 {
        return Ok(plain);
    }
    let target = m * m / (s * s);
    if target >= truncated_moment_ratio(ALPHA_LO) {
        return Ok(plain);
    }
    if target <= truncated_moment_ratio(ALPHA_HI) {
        log::warn!("occupancy sample too dispersed for a truncated normal (mean²/var = {target:.4}); using moments");
        return Ok(plain);
    }
    // The ratio decreases monotonically in the truncation point.
    let (mut lo, mut hi) = (ALPHA_LO, ALPHA_HI);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if truncated_moment_ratio(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let alpha = 0.5 * (lo + hi);
    let sigma = m / (mills(alpha) - alpha);
    Ok(NormalFit { mu: T::lit(-alpha * sigma), sigma: T::lit(sigma) })
}

/// Per-hour Poisson MLE: λ(h) is the mean of that hour's daily counts.
pub fn fit_poisson<T: Scalar>(counts_by_hour: &BTreeMap<u8, Vec<u64>>) -> Result<HourlyRateTable<T>, WorkloadError> {
    let mut rates = [T::zero(); HOURS_PER_DAY];
    for (hour, rate) in rates.iter_mut().enumerate() {
        let counts = counts_by_hour.get(&(hour as u8)).filter(|c| !c.is_empty()).ok_or(WorkloadError::MissingHour(hour as u8))?;
        let total: u64 = counts.iter().sum();
        *rate = T::lit(total as f64 / counts.len() as f64);
    }
    HourlyRateTable::new(rates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{AoiId, Zone, ZoneId};
    use crate::{Circle, Point};

    /// E[X | X > 0] for X ~ N(mu, sigma²) by composite Simpson quadrature.
    fn truncated_mean_oracle(mu: f64, sigma: f64) -> f64 {
        let pdf = |x: f64| (-0.5 * ((x - mu) / sigma).powi(2)).exp();
        let (a, b, n) = (0.0, mu + 12.0 * sigma, 200_000);
        let h = (b - a) / n as f64;
        let (mut mass, mut first) = (0.0, 0.0);
        for i in 0..=n {
            let x = a + i as f64 * h;
            let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            mass += w * pdf(x);
            first += w * x * pdf(x);
        }
        first / mass
    }

    #[test]
    fn degenerate_occupancy_is_exact() {
        let model = OccupancyModel { mu: 202.80, sigma: 0.0 };
        let mut rng = RngStream::new(1, "occupancy");
        for _ in 0..50 {
            assert_eq!(model.draw_minutes(&mut rng).unwrap(), 202.80);
            assert_eq!(gen_occupancy(&model, &mut rng).unwrap(), SimDuration::from_minutes_f64(202.80));
        }
    }

    #[test]
    fn occupancy_mean_matches_truncated_oracle() {
        let model = OccupancyModel::<f64>::default();
        let oracle = truncated_mean_oracle(202.80, 135.07);
        let mut rng = RngStream::new(42, "occupancy");
        let draws: Vec<f64> = (0..100_000).map(|_| model.draw_minutes(&mut rng).unwrap()).collect();
        assert!(draws.iter().all(|&x| x > 0.0));
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!((mean - oracle).abs() / oracle < 0.01, "mean {mean} oracle {oracle}");
    }

    #[test]
    fn zero_rate_yields_no_arrivals() {
        let table = HourlyRateTable::<f64>::constant(0.0).unwrap();
        let mut rng = RngStream::new(3, "vehicle-arrivals");
        assert!(gen_arrivals(&table, 5, &mut rng).unwrap().is_empty());
    }

    #[test]
    fn arrival_count_mean_is_lambda() {
        let table = HourlyRateTable::<f64>::constant(10.0).unwrap();
        let mut rng = RngStream::new(9, "vehicle-arrivals");
        let n = 10_000u32;
        let mut total = 0usize;
        for hour in 0..n {
            let times = gen_arrivals(&table, hour, &mut rng).unwrap();
            let start = SimTime::from_hours(u64::from(hour));
            assert!(times.windows(2).all(|w| w[0] <= w[1]));
            assert!(times.iter().all(|&t| t >= start && t < SimTime::from_hours(u64::from(hour) + 1)));
            total += times.len();
        }
        let mean = total as f64 / f64::from(n);
        let bound = 3.0 * (10.0f64).sqrt() / f64::from(n).sqrt();
        assert!((mean - 10.0).abs() <= bound, "mean {mean}");
    }

    #[test]
    fn scale_multiplies_expected_count() {
        let table = HourlyRateTable::<f64>::constant(10.0).unwrap().with_scale(2.0).unwrap();
        assert_eq!(table.scaled_rate(30), 20.0);
        let mut rng = RngStream::new(11, "vehicle-arrivals");
        let total: usize = (0..2_000).map(|h| gen_arrivals(&table, h, &mut rng).unwrap().len()).sum();
        let mean = total as f64 / 2_000.0;
        assert!((mean - 20.0).abs() < 3.0 * (20.0f64 / 2_000.0).sqrt(), "mean {mean}");
    }

    #[test]
    fn invalid_tables_rejected() {
        let mut rates = [1.0; HOURS_PER_DAY];
        rates[7] = -1.0;
        assert_eq!(HourlyRateTable::new(rates), Err(WorkloadError::InvalidRate { hour: 7, value: -1.0 }));
        assert!(HourlyRateTable::<f64>::constant(1.0).unwrap().with_scale(0.0).is_err());
    }

    #[test]
    fn lot_never_exceeds_capacity() {
        let mut lot = ParkingLot::new(2);
        assert!(lot.admit() && lot.admit());
        assert!(!lot.admit());
        assert_eq!((lot.occupants, lot.dropped), (2, 1));
        lot.leave();
        assert!(lot.admit());
    }

    fn two_zone_aoi() -> AreaOfInterest {
        AreaOfInterest::new(
            AoiId(1),
            vec![
                Zone { id: ZoneId(0), coverage: Circle::new(Point::new(0.0, 0.0), 100.0) },
                Zone { id: ZoneId(1), coverage: Circle::new(Point::new(150.0, 0.0), 100.0) },
            ],
        )
        .unwrap()
    }

    #[test]
    fn flash_crowd_positions_inside_aoi() {
        let aoi = two_zone_aoi();
        let mut rng = RngStream::new(1, "ue-positions");
        assert!(spawn_flash_crowd(0, 0, &aoi, SimDuration::from_millis(100), &mut rng).is_empty());
        let crowd = spawn_flash_crowd(500, 10, &aoi, SimDuration::from_millis(100), &mut rng);
        assert_eq!(crowd.len(), 500);
        assert_eq!(crowd[0].ue_id, UeId(10));
        assert!(crowd.iter().all(|u| aoi.contains(u.position)));
    }

    #[test]
    fn trajectory_is_linear() {
        let mut ue = UserEquipment {
            ue_id: UeId(0),
            position: Point::new(0.0, 0.0),
            velocity: Point::new(1.0, 0.0),
            app: None,
            probe_period: SimDuration::from_secs(1),
        };
        assert_eq!(ue_trajectory_step(&ue, SimDuration::from_secs(10)), Point::new(10.0, 0.0));
        ue.velocity = Point::default();
        assert_eq!(ue_trajectory_step(&ue, SimDuration::from_secs(10)), ue.position);
    }

    #[test]
    fn boundary_crossings_notify_once_each() {
        use crate::domain::{AppDescriptor, AppInstance, InstanceId};
        let zone = Circle::new(Point::new(50.0, 0.0), 20.0);
        let mut app = AppInstance::new(InstanceId(1), UeId(1), AppDescriptor::default(), zone);
        // Back and forth along the x axis, crossing the zone four times.
        let mut ue = UserEquipment {
            ue_id: UeId(1),
            position: Point::new(0.0, 0.0),
            velocity: Point::new(2.0, 0.0),
            app: None,
            probe_period: SimDuration::from_secs(1),
        };
        let mut path = vec![ue.position];
        for step in 0..100 {
            if step == 50 {
                ue.velocity = Point::new(-2.0, 0.0);
            }
            ue.position = ue_trajectory_step(&ue, SimDuration::from_secs(1));
            path.push(ue.position);
        }
        let expected = path.windows(2).filter(|w| zone.contains(w[0]) != zone.contains(w[1])).count()
            + usize::from(zone.contains(path[0]));
        let notified = path.iter().filter_map(|&p| app.observe(p)).count();
        assert_eq!(expected, 4);
        assert_eq!(notified, expected);
    }

    #[test]
    fn fit_normal_examples() {
        assert_eq!(fit_normal(&[5.0, 5.0, 5.0]).unwrap(), NormalFit { mu: 5.0, sigma: 0.0 });
        let f = fit_normal(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(f.mu, 2.0);
        assert!((f.sigma - (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((f.sigma - 0.8165).abs() < 1e-4);
        assert_eq!(fit_normal::<f64>(&[1.0]), Err(WorkloadError::TooFewSamples(1)));
    }

    #[test]
    fn fit_normal_round_trip() {
        let mut rng = RngStream::new(77, "occupancy");
        let d = Dist::Normal { mean: 202.80, std_dev: 135.07 };
        let draws: Vec<f64> = (0..1_000_000).map(|_| rng.draw(&d).unwrap()).collect();
        let f = fit_normal(&draws).unwrap();
        assert!((f.mu - 202.80).abs() / 202.80 < 0.01);
        assert!((f.sigma - 135.07).abs() / 135.07 < 0.01);
    }

    #[test]
    fn truncated_fit_recovers_latent_parameters() {
        let model = OccupancyModel::<f64>::default();
        let mut rng = RngStream::new(78, "occupancy");
        let draws: Vec<f64> = (0..200_000).map(|_| model.draw_minutes(&mut rng).unwrap()).collect();
        let f = fit_truncated_normal(&draws).unwrap();
        assert!((f.mu - 202.80).abs() / 202.80 < 0.02, "{f:?}");
        assert!((f.sigma - 135.07).abs() / 135.07 < 0.02, "{f:?}");
        // Works in single precision too.
        let small: Vec<f32> = draws.iter().take(50_000).map(|&x| x as f32).collect();
        let g = fit_truncated_normal(&small).unwrap();
        assert!((g.mu - 202.8).abs() / 202.8 < 0.05, "{g:?}");
    }

    #[test]
    fn truncated_fit_falls_back_on_overdispersion() {
        // Exponential-like data: mean² / var ≈ 1.
        let xs: Vec<f64> = (1..=1000).map(|i| -(f64::from(i) / 1001.0).ln()).collect();
        let f = fit_truncated_normal(&xs).unwrap();
        assert_eq!(f, fit_normal(&xs).unwrap());
    }

    #[test]
    fn fit_poisson_examples() {
        let mut counts: BTreeMap<u8, Vec<u64>> = (0..24).map(|h| (h, vec![0])).collect();
        counts.insert(15, vec![7]);
        counts.insert(3, vec![4, 6]);
        let t = fit_poisson::<f64>(&counts).unwrap();
        assert_eq!(t.rates[15], 7.0);
        assert_eq!(t.rates[3], 5.0);
        counts.remove(&9);
        assert_eq!(fit_poisson::<f64>(&counts), Err(WorkloadError::MissingHour(9)));
    }

    #[test]
    fn fit_poisson_round_trip() {
        let mut rng = RngStream::new(5, "ue-arrivals");
        let counts: BTreeMap<u8, Vec<u64>> = (0..24u8)
            .map(|h| (h, (0..5_000).map(|_| rng.draw(&Dist::Poisson { lambda: 12.0 }).unwrap() as u64).collect()))
            .collect();
        let t = fit_poisson::<f64>(&counts).unwrap();
        assert!(t.rates.iter().all(|&l| (l - 12.0).abs() / 12.0 < 0.02));
    }
}
