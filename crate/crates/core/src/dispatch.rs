//! Trip-to-vehicle matching.
//!
//! Matching is two decisions. An [`AvailabilityFilter`] picks which vehicles
//! may be dispatched at all; a [`DispatchPolicy`] then picks one of them or
//! drops the trip. Every ordering by proximity breaks ties by SoC (higher
//! first) and then by vehicle id, so results are fully deterministic.

use std::cmp::Ordering;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{Vehicle, VehicleId, VehicleState};
use crate::error::{Result, SimError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AvailabilityFilter {
    OnlyIdle,
    IdleChargingWaiting,
    IdleChargingWaitingDrivingToCharger,
    /// Idle vehicles plus those that have been charging for at least this many minutes.
    MinChargeTime(f64),
}

impl AvailabilityFilter {
    pub fn admits(&self, v: &Vehicle, now: f64) -> bool {
        use VehicleState::*;
        match *self {
            AvailabilityFilter::OnlyIdle => v.state == Idle,
            AvailabilityFilter::IdleChargingWaiting => matches!(v.state, Idle | Charging | WaitingForCharger),
            AvailabilityFilter::IdleChargingWaitingDrivingToCharger => {
                matches!(v.state, Idle | Charging | WaitingForCharger | DrivingToCharger)
            }
            AvailabilityFilter::MinChargeTime(minutes) => match v.state {
                Idle => true,
                Charging => v.charging_since.is_some_and(|since| now - since >= minutes),
                _ => false,
            },
        }
    }

    /// True when the filter can return a vehicle that must be interrupted.
    pub fn admits_non_idle(&self) -> bool {
        !matches!(self, AvailabilityFilter::OnlyIdle)
    }
}

/// First matching decision: ids of admissible vehicles, in id order.
pub fn available_vehicles(fleet: &[Vehicle], filter: AvailabilityFilter, now: f64) -> Vec<VehicleId> {
    fleet
        .iter()
        .filter(|v| filter.admits(v, now))
        .map(|v| v.id)
        .collect()
}

/// A dispatchable vehicle as seen from one trip.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub id: VehicleId,
    pub pickup_miles: f64,
    pub soc: f64,
}

/// Can the vehicle drive the pickup leg plus the loaded leg and keep `min_end_soc`?
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feasibility {
    pub soc_per_mile: f64,
    pub trip_miles: f64,
    pub min_end_soc: f64,
}

impl Feasibility {
    pub fn end_soc(&self, c: &Candidate) -> f64 {
        c.soc - self.soc_per_mile * c.pickup_miles - self.soc_per_mile * self.trip_miles
    }

    pub fn admits(&self, c: &Candidate) -> bool {
        self.end_soc(c) >= self.min_end_soc
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Serve(VehicleId),
    Drop,
}

/// Outcome of the second matching decision, with the number of candidates
/// whose SoC was examined.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DispatchOutcome {
    pub decision: Decision,
    pub evaluated: u32,
}

/// Nearer first; ties go to higher SoC, then lower id.
fn by_proximity(a: &Candidate, b: &Candidate) -> Ordering {
    a.pickup_miles
        .total_cmp(&b.pickup_miles)
        .then_with(|| b.soc.total_cmp(&a.soc))
        .then_with(|| a.id.cmp(&b.id))
}

/// Number of nearest vehicles to consider for a possibly fractional `d`:
/// `floor(d)` with probability `ceil(d) - d`, otherwise `ceil(d)`.
/// Integer `d` consumes no randomness.
pub fn effective_d<R: Rng + ?Sized>(d: f64, rng: &mut R) -> usize {
    let lo = d.floor();
    let hi = d.ceil();
    if lo == hi {
        return lo as usize;
    }
    let p_lo = hi - d;
    if rng.random::<f64>() < p_lo {
        lo as usize
    } else {
        hi as usize
    }
}

/// Among the `k` nearest candidates, serve with the highest-SoC one that can
/// complete the trip; drop if none can.
pub fn power_of_k_dispatch(candidates: &[Candidate], k: usize, feasibility: &Feasibility) -> DispatchOutcome {
    let k = k.min(candidates.len());
    if k == 0 {
        return DispatchOutcome {
            decision: Decision::Drop,
            evaluated: 0,
        };
    }
    let mut pool = candidates.to_vec();
    if k < pool.len() {
        pool.select_nth_unstable_by(k - 1, by_proximity);
        pool.truncate(k);
    }
    let best = pool
        .iter()
        .filter(|c| feasibility.admits(c))
        .max_by(|a, b| a.soc.total_cmp(&b.soc).then_with(|| by_proximity(b, a)));
    DispatchOutcome {
        decision: best.map_or(Decision::Drop, |c| Decision::Serve(c.id)),
        evaluated: k as u32,
    }
}

pub fn power_of_d_dispatch<R: Rng + ?Sized>(
    candidates: &[Candidate],
    d: f64,
    feasibility: &Feasibility,
    rng: &mut R,
) -> DispatchOutcome {
    let k = effective_d(d, rng);
    power_of_k_dispatch(candidates, k, feasibility)
}

/// Nearest candidate that can complete the trip.
pub fn closest_available_dispatch(candidates: &[Candidate], feasibility: &Feasibility) -> DispatchOutcome {
    let best = candidates
        .iter()
        .filter(|c| feasibility.admits(c))
        .min_by(|a, b| by_proximity(a, b));
    DispatchOutcome {
        decision: best.map_or(Decision::Drop, |c| Decision::Serve(c.id)),
        evaluated: candidates.len() as u32,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchingKind {
    Closest,
    ClosestAvailable,
    PowerOfD,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    OnlyIdle,
    IdleChargingWaiting,
    IdleChargingWaitingDrivingToCharger,
    MinChargeTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptiveConfig {
    pub period_trips: u32,
    pub threshold_fraction: f64,
    pub high_soc: f64,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        Self {
            period_trips: 1000,
            threshold_fraction: 0.05,
            high_soc: 0.8,
        }
    }
}

/// `[matching]` section of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchingConfig {
    pub kind: MatchingKind,
    pub d: f64,
    pub filter: FilterKind,
    /// Used by the `min_charge_time` filter.
    pub min_charge_minutes: f64,
    /// Reserve SoC a vehicle must keep after the trip.
    pub min_end_soc: f64,
    /// When present, `d` is the starting value of an adaptive controller.
    pub adaptive: Option<AdaptiveConfig>,
}

impl Default for MatchingConfig {
    fn default() -> Self {
        Self {
            kind: MatchingKind::PowerOfD,
            d: 10.0,
            filter: FilterKind::IdleChargingWaiting,
            min_charge_minutes: 10.0,
            min_end_soc: 0.0,
            adaptive: None,
        }
    }
}

impl MatchingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.d.is_finite() && self.d >= 1.0) {
            return Err(SimError::Config(format!("matching.d must be >= 1, got {}", self.d)));
        }
        if !(0.0..=1.0).contains(&self.min_end_soc) {
            return Err(SimError::Config("matching.min_end_soc must be in [0, 1]".into()));
        }
        if !(self.min_charge_minutes.is_finite() && self.min_charge_minutes >= 0.0) {
            return Err(SimError::Config("matching.min_charge_minutes must be >= 0".into()));
        }
        if let Some(a) = &self.adaptive {
            if self.kind != MatchingKind::PowerOfD {
                return Err(SimError::Config("matching.adaptive requires kind = power_of_d".into()));
            }
            if self.d.fract() != 0.0 {
                return Err(SimError::Config("adaptive d must start at an integer".into()));
            }
            if a.period_trips == 0 {
                return Err(SimError::Config("matching.adaptive.period_trips must be positive".into()));
            }
            if !(0.0..=1.0).contains(&a.threshold_fraction) || !(0.0..=1.0).contains(&a.high_soc) {
                return Err(SimError::Config("matching.adaptive thresholds must be in [0, 1]".into()));
            }
        }
        Ok(())
    }

    pub fn filter(&self) -> AvailabilityFilter {
        match self.filter {
            FilterKind::OnlyIdle => AvailabilityFilter::OnlyIdle,
            FilterKind::IdleChargingWaiting => AvailabilityFilter::IdleChargingWaiting,
            FilterKind::IdleChargingWaitingDrivingToCharger => {
                AvailabilityFilter::IdleChargingWaitingDrivingToCharger
            }
            FilterKind::MinChargeTime => AvailabilityFilter::MinChargeTime(self.min_charge_minutes),
        }
    }
}

/// Per-window statistics handed to [`AdaptiveDController::adaptive_review`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowStats {
    pub avg_idle_high_soc_count: f64,
    pub drops_in_window: u32,
    pub fleet_size: usize,
}

/// Adjusts `d` by one step at each review boundary based on how many idle,
/// well-charged vehicles sat around while trips were being dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveDController {
    d_current: u32,
    pub review_period_trips: u32,
    pub idle_high_soc_threshold_fraction: f64,
    pub high_soc_level: f64,
    idle_high_sum: f64,
    samples: u32,
    drops: u32,
    trips_in_window: u32,
    d_max_observed: u32,
}

impl AdaptiveDController {
    pub fn new(initial_d: u32, cfg: &AdaptiveConfig) -> Self {
        let d = initial_d.max(1);
        Self {
            d_current: d,
            review_period_trips: cfg.period_trips,
            idle_high_soc_threshold_fraction: cfg.threshold_fraction,
            high_soc_level: cfg.high_soc,
            idle_high_sum: 0.0,
            samples: 0,
            drops: 0,
            trips_in_window: 0,
            d_max_observed: d,
        }
    }

    pub fn d(&self) -> u32 {
        self.d_current
    }

    pub fn d_max_observed(&self) -> u32 {
        self.d_max_observed
    }

    /// Samples the number of idle vehicles with SoC at or above the high level.
    pub fn observe(&mut self, idle_high_soc_count: usize) {
        self.idle_high_sum += idle_high_soc_count as f64;
        self.samples += 1;
    }

    /// Counts one handled trip. Returns `Some((old, new))` when this trip
    /// closes a review window.
    pub fn record_trip(&mut self, dropped: bool, fleet_size: usize) -> Option<(u32, u32)> {
        self.trips_in_window += 1;
        if dropped {
            self.drops += 1;
        }
        if self.trips_in_window < self.review_period_trips {
            return None;
        }
        let avg = if self.samples == 0 {
            0.0
        } else {
            self.idle_high_sum / self.samples as f64
        };
        let old = self.d_current;
        let new = self.adaptive_review(WindowStats {
            avg_idle_high_soc_count: avg,
            drops_in_window: self.drops,
            fleet_size,
        });
        Some((old, new))
    }

    /// Applies the review rule and resets the window.
    pub fn adaptive_review(&mut self, stats: WindowStats) -> u32 {
        let threshold = self.idle_high_soc_threshold_fraction * stats.fleet_size as f64;
        if stats.avg_idle_high_soc_count > threshold && stats.drops_in_window > 0 {
            self.d_current += 1;
        } else if stats.avg_idle_high_soc_count == 0.0 && self.d_current > 1 {
            self.d_current -= 1;
        }
        self.d_max_observed = self.d_max_observed.max(self.d_current);
        self.idle_high_sum = 0.0;
        self.samples = 0;
        self.drops = 0;
        self.trips_in_window = 0;
        self.d_current
    }
}

/// Second matching decision.
#[derive(Debug, Clone, PartialEq)]
pub struct DispatchPolicy {
    pub kind: MatchingKind,
    pub d: f64,
    pub adaptive: Option<AdaptiveDController>,
}

impl DispatchPolicy {
    pub fn from_config(cfg: &MatchingConfig) -> Self {
        let adaptive = cfg
            .adaptive
            .as_ref()
            .map(|a| AdaptiveDController::new(cfg.d as u32, a));
        Self {
            kind: cfg.kind,
            d: cfg.d,
            adaptive,
        }
    }

    /// The `d` currently in force (1 for closest dispatch).
    pub fn current_d(&self) -> f64 {
        match (&self.kind, &self.adaptive) {
            (MatchingKind::Closest, _) => 1.0,
            (_, Some(a)) => a.d() as f64,
            _ => self.d,
        }
    }

    pub fn select<R: Rng + ?Sized>(
        &self,
        candidates: &[Candidate],
        feasibility: &Feasibility,
        rng: &mut R,
    ) -> DispatchOutcome {
        match self.kind {
            MatchingKind::ClosestAvailable => closest_available_dispatch(candidates, feasibility),
            MatchingKind::Closest => power_of_k_dispatch(candidates, 1, feasibility),
            MatchingKind::PowerOfD => power_of_d_dispatch(candidates, self.current_d(), feasibility, rng),
        }
    }
}
