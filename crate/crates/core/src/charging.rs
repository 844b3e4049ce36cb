//! Charging policy: which idle vehicles go to charge, which stations may take
//! them, and how the two are paired.

use serde::{Deserialize, Serialize};

use crate::domain::{ChargingStation, StationId, Vehicle, VehicleId, VehicleState};
use crate::error::{Result, SimError};
use crate::geo::{DistanceModel, GeoPoint};

pub const MINUTES_PER_DAY: f64 = 1440.0;
/// 6 am.
pub const DAY_START_MINUTE: f64 = 360.0;
/// 11 pm.
pub const DAY_END_MINUTE: f64 = 1380.0;

/// Piecewise-constant map from minute-of-day to an SoC threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSchedule {
    /// (start minute, threshold), sorted by start, first start at 0.
    steps: Vec<(f64, f64)>,
}

impl ThresholdSchedule {
    pub fn new(mut steps: Vec<(f64, f64)>) -> Result<Self> {
        steps.sort_by(|a, b| a.0.total_cmp(&b.0));
        match steps.first() {
            Some(&(start, _)) if start == 0.0 => {}
            _ => {
                return Err(SimError::Config(
                    "threshold schedule must have a step starting at minute 0".into(),
                ))
            }
        }
        for &(start, c) in &steps {
            if !(0.0..MINUTES_PER_DAY).contains(&start) {
                return Err(SimError::Config(format!("schedule step at {start} is outside the day")));
            }
            if !(0.0..=1.0).contains(&c) {
                return Err(SimError::Config(format!("schedule threshold {c} is outside [0, 1]")));
            }
        }
        if steps.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(SimError::Config("duplicate schedule step".into()));
        }
        Ok(Self { steps })
    }

    /// C = 0.95 all day.
    pub fn always() -> Self {
        Self {
            steps: vec![(0.0, 0.95)],
        }
    }

    /// C = 0.4 from 6 am to 11 pm, 0.95 otherwise.
    pub fn night() -> Self {
        Self {
            steps: vec![(0.0, 0.95), (DAY_START_MINUTE, 0.4), (DAY_END_MINUTE, 0.95)],
        }
    }

    pub fn at_minute_of_day(&self, minute: f64) -> f64 {
        let idx = self.steps.partition_point(|&(start, _)| start <= minute);
        self.steps[idx.saturating_sub(1)].1
    }

    /// Threshold at simulated time `time`, where t = 0 falls at `day_origin`
    /// minutes past midnight.
    pub fn threshold_at(&self, time: f64, day_origin: f64) -> f64 {
        self.at_minute_of_day(minute_of_day(time, day_origin))
    }
}

pub fn minute_of_day(time: f64, day_origin: f64) -> f64 {
    (time + day_origin).rem_euclid(MINUTES_PER_DAY)
}

/// Is a simulated instant inside the 6 am - 11 pm window?
pub fn is_daytime(time: f64, day_origin: f64) -> bool {
    let m = minute_of_day(time, day_origin);
    (DAY_START_MINUTE..DAY_END_MINUTE).contains(&m)
}

/// Idle vehicles at or below the threshold in force at `now`, in id order.
pub fn select_vehicles_for_charging(
    fleet: &[Vehicle],
    now: f64,
    schedule: &ThresholdSchedule,
    day_origin: f64,
) -> Vec<VehicleId> {
    let c = schedule.threshold_at(now, day_origin);
    fleet
        .iter()
        .filter(|v| v.state == VehicleState::Idle && v.soc <= c)
        .map(|v| v.id)
        .collect()
}

/// A station accepts new vehicles while its free posts exceed
/// `alpha` times the number already driving to it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChargerAvailabilityRule {
    pub alpha: f64,
}

impl ChargerAvailabilityRule {
    pub fn admits(&self, free_posts: u32, inbound: u32) -> bool {
        free_posts as f64 > self.alpha * inbound as f64
    }

    pub fn charger_available(&self, station: &ChargingStation) -> bool {
        self.admits(station.free_posts(), station.inbound_count)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignmentKind {
    ClosestAvailable,
    PowerOfD,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChargerAssignmentRule {
    pub kind: AssignmentKind,
    pub d_chargers: u32,
}

/// Target SoC of every charging visit.
pub const CHARGE_TARGET: f64 = 1.0;

/// A vehicle chosen for charging, with how far its battery can take it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChargeRequest {
    pub vehicle: VehicleId,
    pub location: GeoPoint,
    pub range_miles: f64,
}

/// Pairs each selected vehicle with a station. Vehicles are handled in the
/// order given; each pairing counts as an extra inbound vehicle for the rest
/// of the sweep. Stations beyond a vehicle's range are never chosen.
pub fn assign_chargers(
    selected: &[ChargeRequest],
    stations: &[ChargingStation],
    assignment: ChargerAssignmentRule,
    availability: ChargerAvailabilityRule,
    distance: &DistanceModel,
) -> Vec<(VehicleId, StationId)> {
    if selected.is_empty() || stations.is_empty() {
        return Vec::new();
    }
    let mut extra_inbound = vec![0u32; stations.len()];
    let mut pairs = Vec::new();
    let mut ranked: Vec<(f64, usize)> = Vec::with_capacity(stations.len());
    for req in selected {
        ranked.clear();
        ranked.extend(
            stations
                .iter()
                .enumerate()
                .map(|(i, s)| (distance.distance(&req.location, &s.location), i)),
        );
        let by_distance = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        let pool = match assignment.kind {
            AssignmentKind::ClosestAvailable => &mut ranked[..],
            AssignmentKind::PowerOfD => {
                let k = (assignment.d_chargers.max(1) as usize).min(ranked.len());
                if k < ranked.len() {
                    ranked.select_nth_unstable_by(k - 1, by_distance);
                }
                &mut ranked[..k]
            }
        };
        pool.sort_unstable_by(by_distance);
        let open = pool.iter().find(|&&(miles, i)| {
            let s = &stations[i];
            miles <= req.range_miles && availability.admits(s.free_posts(), s.inbound_count + extra_inbound[i])
        });
        if let Some(&(_, i)) = open {
            extra_inbound[i] += 1;
            pairs.push((req.vehicle, stations[i].id));
        }
    }
    pairs
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleSpec {
    Always,
    Night,
    /// (start minute-of-day, threshold) steps.
    Custom(Vec<(f64, f64)>),
}

impl ScheduleSpec {
    pub fn build(&self) -> Result<ThresholdSchedule> {
        match self {
            ScheduleSpec::Always => Ok(ThresholdSchedule::always()),
            ScheduleSpec::Night => Ok(ThresholdSchedule::night()),
            ScheduleSpec::Custom(steps) => ThresholdSchedule::new(steps.clone()),
        }
    }
}

/// `[charging]` section of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChargingConfig {
    pub schedule: ScheduleSpec,
    pub alpha: f64,
    pub assignment: AssignmentKind,
    /// Stations considered by the `power_of_d` assignment.
    pub d: u32,
    /// Whether matching may pull vehicles out of charging visits.
    pub interrupt: bool,
}

impl Default for ChargingConfig {
    fn default() -> Self {
        Self {
            schedule: ScheduleSpec::Always,
            alpha: 0.5,
            assignment: AssignmentKind::ClosestAvailable,
            d: 2,
            interrupt: true,
        }
    }
}

impl ChargingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(SimError::Config(format!("charging.alpha must be in [0, 1], got {}", self.alpha)));
        }
        if self.d == 0 {
            return Err(SimError::Config("charging.d must be >= 1".into()));
        }
        self.schedule.build().map(|_| ())
    }

    pub fn availability(&self) -> ChargerAvailabilityRule {
        ChargerAvailabilityRule { alpha: self.alpha }
    }

    pub fn assignment_rule(&self) -> ChargerAssignmentRule {
        ChargerAssignmentRule {
            kind: self.assignment,
            d_chargers: self.d,
        }
    }
}
