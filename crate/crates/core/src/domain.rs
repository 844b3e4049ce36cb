//! Fleet entities and their state machines.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::geo::{self, GeoPoint};
use crate::kernel::ProcessHandle;

macro_rules! id_type {
    ($name:ident, $prefix:literal) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub struct $name(pub u32);

        impl $name {
            #[inline]
            pub fn index(self) -> usize {
                self.0 as usize
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }
    };
}

id_type!(VehicleId, "v");
id_type!(StationId, "s");
id_type!(TripId, "t");

/// Per-vehicle physical parameters. Defaults are a mid-size EV with a
/// degraded pack on a Level 2 charger.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleParams {
    pub battery_kwh: f64,
    pub consumption_wh_per_mile: f64,
    pub charge_rate_kw: f64,
    pub velocity_mph: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            battery_kwh: 51.25,
            consumption_wh_per_mile: 230.0,
            charge_rate_kw: 20.0,
            velocity_mph: 11.21,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("battery_kwh", self.battery_kwh),
            ("consumption_wh_per_mile", self.consumption_wh_per_mile),
            ("charge_rate_kw", self.charge_rate_kw),
            ("velocity_mph", self.velocity_mph),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(SimError::Config(format!("vehicle.{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Fraction of the pack consumed per mile.
    #[inline]
    pub fn soc_per_mile(&self) -> f64 {
        geo::soc_drop(1.0, self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum VehicleState {
    DrivingWithPassenger,
    /// En route to a pickup.
    DrivingWithoutPassenger,
    Charging,
    WaitingForCharger,
    DrivingToCharger,
    Idle,
}

impl VehicleState {
    pub const ALL: [VehicleState; 6] = [
        VehicleState::DrivingWithPassenger,
        VehicleState::DrivingWithoutPassenger,
        VehicleState::Charging,
        VehicleState::WaitingForCharger,
        VehicleState::DrivingToCharger,
        VehicleState::Idle,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            VehicleState::DrivingWithPassenger => "DRIVING_WITH_PASSENGER",
            VehicleState::DrivingWithoutPassenger => "DRIVING_WITHOUT_PASSENGER",
            VehicleState::Charging => "CHARGING",
            VehicleState::WaitingForCharger => "WAITING_FOR_CHARGER",
            VehicleState::DrivingToCharger => "DRIVING_TO_CHARGER",
            VehicleState::Idle => "IDLE",
        }
    }

    /// Whether the vehicle is somewhere in a charging visit.
    pub fn is_charge_visit(self) -> bool {
        matches!(
            self,
            VehicleState::DrivingToCharger | VehicleState::WaitingForCharger | VehicleState::Charging
        )
    }

    pub fn can_transition_to(self, next: VehicleState) -> bool {
        use VehicleState::*;
        matches!(
            (self, next),
            (Idle, DrivingWithoutPassenger)
                | (DrivingWithoutPassenger, DrivingWithPassenger)
                | (DrivingWithPassenger, Idle)
                | (Idle, DrivingToCharger)
                | (DrivingToCharger, WaitingForCharger)
                | (WaitingForCharger, Charging)
                | (Charging, Idle)
                | (DrivingToCharger, Idle)
                | (WaitingForCharger, Idle)
        )
    }
}

impl fmt::Display for VehicleState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One timed driving leg. Location and SoC are committed only when the leg
/// ends or is interrupted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Leg {
    pub handle: ProcessHandle,
    pub from: GeoPoint,
    pub to: GeoPoint,
    pub miles: f64,
    pub start: f64,
    pub minutes: f64,
    pub start_soc: f64,
}

impl Leg {
    /// Fraction of the leg covered at `now`.
    pub fn progress(&self, now: f64) -> f64 {
        if self.minutes <= 0.0 {
            1.0
        } else {
            ((now - self.start) / self.minutes).clamp(0.0, 1.0)
        }
    }
}

/// What a vehicle is doing, with the bookkeeping its process needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activity {
    Idle,
    Pickup { trip: TripId, leg: Leg },
    Service { trip: TripId, leg: Leg },
    ToCharger { station: StationId, leg: Leg, target_soc: f64 },
    Queued { station: StationId, target_soc: f64 },
    Charging {
        station: StationId,
        handle: ProcessHandle,
        start: f64,
        start_soc: f64,
        target_soc: f64,
    },
}

#[derive(Debug, Clone)]
pub struct Vehicle {
    pub id: VehicleId,
    pub location: GeoPoint,
    pub soc: f64,
    pub state: VehicleState,
    pub params: VehicleParams,
    pub activity: Activity,
    pub charging_since: Option<f64>,
}

impl Vehicle {
    pub fn new(id: VehicleId, location: GeoPoint, soc: f64, params: VehicleParams) -> Self {
        Self {
            id,
            location,
            soc,
            state: VehicleState::Idle,
            params,
            activity: Activity::Idle,
            charging_since: None,
        }
    }

    /// Moves along a legal edge of the state machine.
    pub fn transition(&mut self, next: VehicleState, now: f64) -> Result<()> {
        if !self.state.can_transition_to(next) {
            return Err(SimError::consistency(
                now,
                format!("{}: illegal transition {} -> {}", self.id, self.state, next),
            ));
        }
        self.state = next;
        Ok(())
    }

    pub fn active_process(&self) -> Option<ProcessHandle> {
        match self.activity {
            Activity::Idle | Activity::Queued { .. } => None,
            Activity::Pickup { leg, .. } | Activity::Service { leg, .. } | Activity::ToCharger { leg, .. } => {
                Some(leg.handle)
            }
            Activity::Charging { handle, .. } => Some(handle),
        }
    }

    /// Location and SoC the vehicle would have if its charging visit were
    /// interrupted at `now`. For any other activity, the committed values.
    pub fn interrupt_snapshot(&self, now: f64) -> (GeoPoint, f64) {
        match self.activity {
            Activity::ToCharger { leg, .. } => {
                let f = leg.progress(now);
                let spent = f * geo::soc_drop(leg.miles, &self.params);
                (leg.from.lerp(&leg.to, f), (leg.start_soc - spent).max(0.0))
            }
            Activity::Charging {
                start,
                start_soc,
                target_soc,
                ..
            } => {
                let gained = geo::soc_gain(now - start, &self.params);
                (self.location, (start_soc + gained).min(target_soc))
            }
            _ => (self.location, self.soc),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StationState {
    Available,
    Busy,
}

#[derive(Debug, Clone)]
pub struct ChargingStation {
    pub id: StationId,
    pub location: GeoPoint,
    pub posts: u32,
    pub occupancy: u32,
    /// FIFO of (vehicle, target SoC).
    pub queue: VecDeque<(VehicleId, f64)>,
    pub state: StationState,
    /// Vehicles currently driving here.
    pub inbound_count: u32,
}

impl ChargingStation {
    pub fn new(id: StationId, location: GeoPoint, posts: u32) -> Self {
        Self {
            id,
            location,
            posts,
            occupancy: 0,
            queue: VecDeque::new(),
            state: StationState::Available,
            inbound_count: 0,
        }
    }

    /// Busy iff every post is occupied.
    pub fn refresh_state(&mut self) {
        self.state = if self.occupancy >= self.posts {
            StationState::Busy
        } else {
            StationState::Available
        };
    }

    pub fn is_busy(&self) -> bool {
        self.state == StationState::Busy
    }

    pub fn free_posts(&self) -> u32 {
        self.posts.saturating_sub(self.occupancy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TripState {
    /// Dropped: no vehicle passed the availability filter.
    Unavailable,
    Waiting,
    Matched,
    /// Dropped: candidates existed but none could serve the trip.
    Reneged,
}

impl TripState {
    pub fn as_str(self) -> &'static str {
        match self {
            TripState::Unavailable => "UNAVAILABLE",
            TripState::Waiting => "WAITING",
            TripState::Matched => "MATCHED",
            TripState::Reneged => "RENEGED",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripRequest {
    pub id: TripId,
    pub origin: GeoPoint,
    pub destination: GeoPoint,
    pub arrival_time: f64,
    /// Loaded-leg distance in miles.
    pub distance: f64,
    /// Loaded-leg driving time in minutes.
    pub service_minutes: f64,
    pub state: TripState,
    pub matched_vehicle: Option<VehicleId>,
    pub pickup_time: Option<f64>,
    pub completion_time: Option<f64>,
}

impl TripRequest {
    pub fn is_dropped(&self) -> bool {
        matches!(self.state, TripState::Unavailable | TripState::Reneged)
    }
}
