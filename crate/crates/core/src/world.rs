//! The simulated world: fleet, stations, trips, and the kernel that drives
//! them. Process steps live in [`crate::processes`].

use rand_chacha::ChaCha8Rng;

use crate::charging::{ChargerAssignmentRule, ChargerAvailabilityRule, ThresholdSchedule};
use crate::dispatch::{AvailabilityFilter, DispatchPolicy};
use crate::domain::{
    Activity, ChargingStation, StationId, TripId, TripRequest, Vehicle, VehicleId, VehicleParams, VehicleState,
};
use crate::error::{Result, SimError};
use crate::geo::{DistanceModel, GeoPoint};
use crate::kernel::{Fired, Kernel, KernelStats};
use crate::log::{EventLog, LogEvent};

/// Payload of every scheduled timeout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Wake {
    Arrival(TripId),
    PickupDone(VehicleId),
    TripDone(VehicleId),
    ChargerReached(VehicleId),
    ChargeDone(VehicleId),
}

#[derive(Debug, Clone)]
pub struct WorldSettings {
    /// Minute-of-day at t = 0.
    pub day_origin: f64,
    pub distance: DistanceModel,
    pub vehicle: VehicleParams,
    pub filter: AvailabilityFilter,
    pub min_end_soc: f64,
    pub schedule: ThresholdSchedule,
    pub availability: ChargerAvailabilityRule,
    pub assignment: ChargerAssignmentRule,
    /// Matching may pull vehicles out of charging visits.
    pub interrupts: bool,
    /// Run [`World::check_invariants`] after every event.
    pub check_invariants: bool,
}

pub struct World {
    pub(crate) kernel: Kernel<Wake>,
    pub(crate) vehicles: Vec<Vehicle>,
    pub(crate) stations: Vec<ChargingStation>,
    pub(crate) trips: Vec<TripRequest>,
    pub(crate) policy: DispatchPolicy,
    pub(crate) rng: ChaCha8Rng,
    pub(crate) log: EventLog,
    pub(crate) settings: WorldSettings,
}

/// SoC slack tolerated before an overdraft counts as a model error.
pub(crate) const SOC_EPS: f64 = 1e-9;

impl World {
    /// Builds the world and schedules every trip arrival.
    pub fn new(
        settings: WorldSettings,
        policy: DispatchPolicy,
        vehicles: &[(GeoPoint, f64)],
        stations: &[(GeoPoint, u32)],
        trips: Vec<TripRequest>,
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        let mut log = EventLog::new();
        let vehicles: Vec<Vehicle> = vehicles
            .iter()
            .enumerate()
            .map(|(i, &(loc, soc))| {
                let id = VehicleId(i as u32);
                log.push(
                    0.0,
                    LogEvent::VehicleInit {
                        vehicle: id,
                        soc,
                        lat: loc.lat,
                        lon: loc.lon,
                    },
                );
                Vehicle::new(id, loc, soc, settings.vehicle)
            })
            .collect();
        let stations = stations
            .iter()
            .enumerate()
            .map(|(i, &(loc, posts))| ChargingStation::new(StationId(i as u32), loc, posts))
            .collect();
        let mut kernel = Kernel::new();
        for (i, t) in trips.iter().enumerate() {
            if t.id.index() != i {
                return Err(SimError::Argument(format!("trip {} is at position {i}", t.id)));
            }
            kernel.schedule_timeout(t.arrival_time, Wake::Arrival(t.id))?;
        }
        Ok(Self {
            kernel,
            vehicles,
            stations,
            trips,
            policy,
            rng,
            log,
            settings,
        })
    }

    pub fn now(&self) -> f64 {
        self.kernel.now()
    }

    pub fn vehicles(&self) -> &[Vehicle] {
        &self.vehicles
    }

    pub fn stations(&self) -> &[ChargingStation] {
        &self.stations
    }

    pub fn trips(&self) -> &[TripRequest] {
        &self.trips
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn policy(&self) -> &DispatchPolicy {
        &self.policy
    }

    pub fn into_log(self) -> EventLog {
        self.log
    }

    /// Processes every event with wake time up to `end_time`.
    pub fn run_until(&mut self, end_time: f64) -> Result<KernelStats> {
        let start = self.kernel.events_processed();
        while let Some(fired) = self.kernel.next_event(end_time) {
            self.step(fired)?;
            if self.settings.check_invariants {
                self.check_invariants()?;
            }
        }
        Ok(KernelStats {
            events_processed: self.kernel.events_processed() - start,
            final_time: self.now(),
        })
    }

    /// Runs until no event is left. Arrivals end at the horizon, so this
    /// lets every matched trip and started charge finish.
    pub fn run_to_completion(&mut self) -> Result<KernelStats> {
        self.run_until(f64::INFINITY)
    }

    fn step(&mut self, fired: Fired<Wake>) -> Result<()> {
        let vehicle = match fired.payload {
            Wake::Arrival(trip) => return self.on_arrival(trip),
            Wake::PickupDone(v) | Wake::TripDone(v) | Wake::ChargerReached(v) | Wake::ChargeDone(v) => v,
        };
        if self.vehicles[vehicle.index()].active_process() != Some(fired.handle) {
            return Err(SimError::consistency(
                fired.time,
                format!("{vehicle}: stale wakeup {:?}", fired.payload),
            ));
        }
        match fired.payload {
            Wake::PickupDone(v) => self.on_pickup_done(v),
            Wake::TripDone(v) => self.on_trip_done(v),
            Wake::ChargerReached(v) => self.on_charger_reached(v),
            Wake::ChargeDone(v) => self.on_charge_done(v),
            Wake::Arrival(_) => unreachable!(),
        }
    }

    /// Cross-checks vehicle activities against station counters.
    pub fn check_invariants(&self) -> Result<()> {
        let now = self.now();
        let fail = |m: String| Err(SimError::consistency(now, m));
        let n = self.stations.len();
        let (mut charging, mut waiting, mut inbound) = (vec![0u32; n], vec![0u32; n], vec![0u32; n]);
        for v in &self.vehicles {
            if !(v.soc >= -SOC_EPS && v.soc <= 1.0 + SOC_EPS) {
                return fail(format!("{}: soc {} out of range", v.id, v.soc));
            }
            let consistent = match (v.state, v.activity) {
                (VehicleState::Idle, Activity::Idle) => true,
                (VehicleState::DrivingWithoutPassenger, Activity::Pickup { .. }) => true,
                (VehicleState::DrivingWithPassenger, Activity::Service { .. }) => true,
                (VehicleState::DrivingToCharger, Activity::ToCharger { station, .. }) => {
                    inbound[station.index()] += 1;
                    true
                }
                (VehicleState::WaitingForCharger, Activity::Queued { station, .. }) => {
                    waiting[station.index()] += 1;
                    true
                }
                (VehicleState::Charging, Activity::Charging { station, .. }) => {
                    charging[station.index()] += 1;
                    true
                }
                _ => false,
            };
            if !consistent {
                return fail(format!("{}: state {} does not match {:?}", v.id, v.state, v.activity));
            }
        }
        let bounded = self.settings.availability.alpha >= 1.0;
        for s in &self.stations {
            let i = s.id.index();
            if s.occupancy != charging[i] {
                return fail(format!("{}: occupancy {} but {} charging", s.id, s.occupancy, charging[i]));
            }
            if s.queue.len() as u32 != waiting[i] {
                return fail(format!("{}: queue {} but {} waiting", s.id, s.queue.len(), waiting[i]));
            }
            if s.inbound_count != inbound[i] {
                return fail(format!("{}: inbound {} but {} driving", s.id, s.inbound_count, inbound[i]));
            }
            if s.occupancy > s.posts {
                return fail(format!("{}: occupancy above posts", s.id));
            }
            if s.is_busy() != (s.occupancy >= s.posts) {
                return fail(format!("{}: stale station state", s.id));
            }
            if !s.queue.is_empty() && !s.is_busy() {
                return fail(format!("{}: queue not drained", s.id));
            }
            if bounded && s.inbound_count + s.occupancy > s.posts {
                return fail(format!(
                    "{}: inbound {} + occupancy {} exceeds {} posts",
                    s.id, s.inbound_count, s.occupancy, s.posts
                ));
            }
        }
        Ok(())
    }
}
