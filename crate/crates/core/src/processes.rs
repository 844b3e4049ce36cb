//! Process scripts: trip service, driving to a charger, queueing, charging,
//! and interruption.
//!
//! Location and SoC are committed only when a leg or charge ends or is
//! interrupted. Every committed state change is logged together with the
//! time and SoC at which the current activity is planned to end, which is
//! enough to reconstruct the fleet at any instant from the log alone.

use crate::charging::{assign_chargers, select_vehicles_for_charging, ChargeRequest, CHARGE_TARGET};
use crate::dispatch::{Candidate, Decision, Feasibility};
use crate::domain::{Activity, Leg, StationId, TripId, TripState, VehicleId, VehicleState};
use crate::error::{Result, SimError};
use crate::geo::{self, travel_time_minutes};
use crate::kernel::InterruptOutcome;
use crate::log::LogEvent;
use crate::world::{Wake, World, SOC_EPS};

impl World {
    fn record(&mut self, event: LogEvent) {
        let now = self.now();
        self.log.push(now, event);
    }

    /// Commits a state change and logs where the new activity is headed.
    fn change_state(&mut self, id: VehicleId, to: VehicleState, until: f64, until_soc: f64) -> Result<()> {
        let now = self.now();
        let v = &mut self.vehicles[id.index()];
        let from = v.state;
        v.transition(to, now)?;
        let soc = v.soc;
        self.record(LogEvent::StateChange {
            vehicle: id,
            from,
            to,
            soc,
            until,
            until_soc,
        });
        Ok(())
    }

    fn soc_drop(&self, miles: f64) -> f64 {
        geo::soc_drop(miles, &self.settings.vehicle)
    }

    /// `soc - amount`, refusing overdrafts beyond rounding noise.
    fn debit(&self, id: VehicleId, soc: f64, amount: f64) -> Result<f64> {
        let left = soc - amount;
        if left >= 0.0 {
            Ok(left)
        } else if left > -SOC_EPS {
            Ok(0.0)
        } else {
            Err(SimError::consistency(
                self.now(),
                format!("{id}: SoC underflow ({soc} - {amount})"),
            ))
        }
    }

    /// Starts a timed leg from the vehicle's committed location.
    fn start_leg(&mut self, id: VehicleId, to: geo::GeoPoint, miles: f64, wake: Wake) -> Result<Leg> {
        let minutes = travel_time_minutes(miles, self.settings.vehicle.velocity_mph)?;
        self.start_timed_leg(id, to, miles, minutes, wake)
    }

    fn start_timed_leg(
        &mut self,
        id: VehicleId,
        to: geo::GeoPoint,
        miles: f64,
        minutes: f64,
        wake: Wake,
    ) -> Result<Leg> {
        let handle = self.kernel.schedule_timeout(minutes, wake)?;
        let v = &self.vehicles[id.index()];
        Ok(Leg {
            handle,
            from: v.location,
            to,
            miles,
            start: self.now(),
            minutes,
            start_soc: v.soc,
        })
    }

    /// Teleports the vehicle to the end of a finished leg.
    fn commit_leg(&mut self, id: VehicleId, leg: &Leg) -> Result<()> {
        let spent = self.soc_drop(leg.miles);
        let soc = self.debit(id, leg.start_soc, spent)?;
        let v = &mut self.vehicles[id.index()];
        v.location = leg.to;
        v.soc = soc;
        self.record(LogEvent::Drive {
            vehicle: id,
            miles: leg.miles,
            soc_spent: leg.start_soc - soc,
        });
        Ok(())
    }

    fn idle_high_soc_count(&self, level: f64) -> usize {
        self.vehicles
            .iter()
            .filter(|v| v.state == VehicleState::Idle && v.soc >= level)
            .count()
    }

    /// Matching, then the charging sweep.
    pub(crate) fn on_arrival(&mut self, trip: TripId) -> Result<()> {
        let now = self.now();
        let t = &self.trips[trip.index()];
        let (origin, trip_miles) = (t.origin, t.distance);
        self.record(LogEvent::TripArrival {
            trip,
            miles: trip_miles,
            expected_minutes: t.service_minutes,
        });
        if let Some(level) = self.policy.adaptive.as_ref().map(|a| a.high_soc_level) {
            let count = self.idle_high_soc_count(level);
            if let Some(a) = self.policy.adaptive.as_mut() {
                a.observe(count);
            }
        }

        let filter = self.settings.filter;
        let interrupts = self.settings.interrupts;
        let distance = self.settings.distance;
        let candidates: Vec<Candidate> = self
            .vehicles
            .iter()
            .filter(|v| filter.admits(v, now) && (interrupts || v.state == VehicleState::Idle))
            .map(|v| {
                let (at, soc) = v.interrupt_snapshot(now);
                Candidate {
                    id: v.id,
                    pickup_miles: distance.distance(&at, &origin),
                    soc,
                }
            })
            .collect();

        let dropped = if candidates.is_empty() {
            self.drop_trip(trip, TripState::Unavailable, 0);
            true
        } else {
            let feasibility = Feasibility {
                soc_per_mile: self.settings.vehicle.soc_per_mile(),
                trip_miles,
                min_end_soc: self.settings.min_end_soc,
            };
            let outcome = self.policy.select(&candidates, &feasibility, &mut self.rng);
            match outcome.decision {
                Decision::Serve(vehicle) => {
                    if self.vehicles[vehicle.index()].state != VehicleState::Idle {
                        self.interrupt_charging(vehicle)?;
                    }
                    let pickup_miles = candidates
                        .iter()
                        .find(|c| c.id == vehicle)
                        .map_or(0.0, |c| c.pickup_miles);
                    self.record(LogEvent::TripMatched {
                        trip,
                        vehicle,
                        pickup_miles,
                        candidates: outcome.evaluated,
                    });
                    self.run_trip(vehicle, trip)?;
                    false
                }
                Decision::Drop => {
                    self.drop_trip(trip, TripState::Reneged, outcome.evaluated);
                    true
                }
            }
        };

        let fleet_size = self.vehicles.len();
        if let Some((from, to)) = self
            .policy
            .adaptive
            .as_mut()
            .and_then(|a| a.record_trip(dropped, fleet_size))
        {
            self.record(LogEvent::DReview { from, to });
        }

        self.charging_sweep()
    }

    fn drop_trip(&mut self, trip: TripId, outcome: TripState, candidates: u32) {
        self.trips[trip.index()].state = outcome;
        self.record(LogEvent::TripDropped {
            trip,
            outcome,
            candidates,
        });
    }

    /// Pickup leg, then the loaded leg.
    pub(crate) fn run_trip(&mut self, id: VehicleId, trip: TripId) -> Result<()> {
        let now = self.now();
        let origin = self.trips[trip.index()].origin;
        let miles = self
            .settings
            .distance
            .distance(&self.vehicles[id.index()].location, &origin);
        let leg = self.start_leg(id, origin, miles, Wake::PickupDone(id))?;
        let t = &mut self.trips[trip.index()];
        t.state = TripState::Matched;
        t.matched_vehicle = Some(id);
        let until_soc = leg.start_soc - self.soc_drop(miles);
        self.change_state(id, VehicleState::DrivingWithoutPassenger, now + leg.minutes, until_soc)?;
        self.vehicles[id.index()].activity = Activity::Pickup { trip, leg };
        Ok(())
    }

    pub(crate) fn on_pickup_done(&mut self, id: VehicleId) -> Result<()> {
        let now = self.now();
        let Activity::Pickup { trip, leg } = self.vehicles[id.index()].activity else {
            return Err(SimError::consistency(now, format!("{id}: pickup without trip")));
        };
        self.commit_leg(id, &leg)?;
        self.trips[trip.index()].pickup_time = Some(now);
        self.record(LogEvent::TripPickedUp { trip, vehicle: id });

        let t = &self.trips[trip.index()];
        let (dest, miles, minutes) = (t.destination, t.distance, t.service_minutes);
        let leg = self.start_timed_leg(id, dest, miles, minutes, Wake::TripDone(id))?;
        let until_soc = leg.start_soc - self.soc_drop(miles);
        self.change_state(id, VehicleState::DrivingWithPassenger, now + minutes, until_soc)?;
        self.vehicles[id.index()].activity = Activity::Service { trip, leg };
        Ok(())
    }

    pub(crate) fn on_trip_done(&mut self, id: VehicleId) -> Result<()> {
        let now = self.now();
        let Activity::Service { trip, leg } = self.vehicles[id.index()].activity else {
            return Err(SimError::consistency(now, format!("{id}: drop-off without trip")));
        };
        self.commit_leg(id, &leg)?;
        self.trips[trip.index()].completion_time = Some(now);
        self.record(LogEvent::TripCompleted {
            trip,
            vehicle: id,
            miles: leg.miles,
        });
        let soc = self.vehicles[id.index()].soc;
        self.change_state(id, VehicleState::Idle, now, soc)?;
        self.vehicles[id.index()].activity = Activity::Idle;
        Ok(())
    }

    /// Sends idle vehicles under the current threshold to stations.
    pub(crate) fn charging_sweep(&mut self) -> Result<()> {
        let now = self.now();
        let selected =
            select_vehicles_for_charging(&self.vehicles, now, &self.settings.schedule, self.settings.day_origin);
        if selected.is_empty() {
            return Ok(());
        }
        let per_mile = self.settings.vehicle.soc_per_mile();
        let requests: Vec<ChargeRequest> = selected
            .iter()
            .map(|&id| {
                let v = &self.vehicles[id.index()];
                ChargeRequest {
                    vehicle: id,
                    location: v.location,
                    range_miles: v.soc / per_mile,
                }
            })
            .collect();
        let pairs = assign_chargers(
            &requests,
            &self.stations,
            self.settings.assignment,
            self.settings.availability,
            &self.settings.distance,
        );
        for (vehicle, station) in pairs {
            self.drive_to_charger(vehicle, station, CHARGE_TARGET)?;
        }
        Ok(())
    }

    pub(crate) fn drive_to_charger(&mut self, id: VehicleId, station: StationId, target_soc: f64) -> Result<()> {
        let now = self.now();
        let to = self.stations[station.index()].location;
        let miles = self
            .settings
            .distance
            .distance(&self.vehicles[id.index()].location, &to);
        let leg = self.start_leg(id, to, miles, Wake::ChargerReached(id))?;
        self.stations[station.index()].inbound_count += 1;
        self.record(LogEvent::ChargerAssigned {
            vehicle: id,
            station,
            miles,
        });
        let until_soc = leg.start_soc - self.soc_drop(miles);
        self.change_state(id, VehicleState::DrivingToCharger, now + leg.minutes, until_soc)?;
        self.vehicles[id.index()].activity = Activity::ToCharger {
            station,
            leg,
            target_soc,
        };
        Ok(())
    }

    pub(crate) fn on_charger_reached(&mut self, id: VehicleId) -> Result<()> {
        let now = self.now();
        let Activity::ToCharger {
            station,
            leg,
            target_soc,
        } = self.vehicles[id.index()].activity
        else {
            return Err(SimError::consistency(now, format!("{id}: arrival without charger")));
        };
        self.commit_leg(id, &leg)?;
        self.stations[station.index()].inbound_count -= 1;
        self.record(LogEvent::ChargerReached {
            vehicle: id,
            station,
            minutes: leg.minutes,
        });
        let soc = self.vehicles[id.index()].soc;
        self.change_state(id, VehicleState::WaitingForCharger, now, soc)?;
        self.vehicles[id.index()].activity = Activity::Queued { station, target_soc };
        self.enqueue_at_charger(station, id, target_soc)
    }

    pub(crate) fn enqueue_at_charger(&mut self, station: StationId, id: VehicleId, target_soc: f64) -> Result<()> {
        self.stations[station.index()].queue.push_back((id, target_soc));
        self.drain_queue(station)
    }

    /// Starts queued vehicles while the station has a free post.
    fn drain_queue(&mut self, station: StationId) -> Result<()> {
        loop {
            let s = &mut self.stations[station.index()];
            if s.is_busy() {
                return Ok(());
            }
            let Some((id, target_soc)) = s.queue.pop_front() else {
                return Ok(());
            };
            s.occupancy += 1;
            s.refresh_state();
            self.charging_process(id, station, target_soc)?;
        }
    }

    fn charging_process(&mut self, id: VehicleId, station: StationId, target_soc: f64) -> Result<()> {
        let now = self.now();
        let start_soc = self.vehicles[id.index()].soc;
        let minutes = geo::charge_duration_minutes(start_soc.min(target_soc), target_soc, &self.settings.vehicle)?;
        let handle = self.kernel.schedule_timeout(minutes, Wake::ChargeDone(id))?;
        self.change_state(id, VehicleState::Charging, now + minutes, target_soc)?;
        let v = &mut self.vehicles[id.index()];
        v.charging_since = Some(now);
        v.activity = Activity::Charging {
            station,
            handle,
            start: now,
            start_soc,
            target_soc,
        };
        Ok(())
    }

    pub(crate) fn on_charge_done(&mut self, id: VehicleId) -> Result<()> {
        let now = self.now();
        let Activity::Charging {
            station,
            start,
            start_soc,
            target_soc,
            ..
        } = self.vehicles[id.index()].activity
        else {
            return Err(SimError::consistency(now, format!("{id}: charge end without charge")));
        };
        let soc = target_soc.max(start_soc);
        self.finish_charge(id, station, now - start, soc - start_soc, false)?;
        self.vehicles[id.index()].soc = soc;
        self.change_state(id, VehicleState::Idle, now, soc)?;
        self.vehicles[id.index()].activity = Activity::Idle;
        self.drain_queue(station)
    }

    fn finish_charge(
        &mut self,
        id: VehicleId,
        station: StationId,
        minutes: f64,
        soc_gained: f64,
        interrupted: bool,
    ) -> Result<()> {
        let s = &mut self.stations[station.index()];
        s.occupancy = s
            .occupancy
            .checked_sub(1)
            .ok_or_else(|| SimError::consistency(self.kernel.now(), format!("{station}: occupancy underflow")))?;
        s.refresh_state();
        self.vehicles[id.index()].charging_since = None;
        self.record(LogEvent::ChargeEnd {
            vehicle: id,
            station,
            minutes,
            soc_gained,
            interrupted,
        });
        Ok(())
    }

    fn cancel(&mut self, id: VehicleId, handle: crate::kernel::ProcessHandle) -> Result<()> {
        match self.kernel.interrupt(handle)? {
            InterruptOutcome::Interrupted { .. } => Ok(()),
            other => Err(SimError::consistency(
                self.now(),
                format!("{id}: interrupt found process {other:?}"),
            )),
        }
    }

    /// Ends a charging visit early so the vehicle can take a trip.
    pub(crate) fn interrupt_charging(&mut self, id: VehicleId) -> Result<()> {
        let now = self.now();
        let v = &self.vehicles[id.index()];
        let from = v.state;
        let (at, soc) = v.interrupt_snapshot(now);
        match v.activity {
            Activity::ToCharger { station, leg, .. } => {
                self.cancel(id, leg.handle)?;
                self.record(LogEvent::Interrupt { vehicle: id, from });
                self.record(LogEvent::Drive {
                    vehicle: id,
                    miles: leg.progress(now) * leg.miles,
                    soc_spent: leg.start_soc - soc,
                });
                let v = &mut self.vehicles[id.index()];
                v.location = at;
                v.soc = soc;
                self.stations[station.index()].inbound_count -= 1;
            }
            Activity::Queued { station, .. } => {
                let queue = &mut self.stations[station.index()].queue;
                let pos = queue
                    .iter()
                    .position(|&(q, _)| q == id)
                    .ok_or_else(|| SimError::consistency(now, format!("{id}: not in {station} queue")))?;
                queue.remove(pos);
                self.record(LogEvent::Interrupt { vehicle: id, from });
            }
            Activity::Charging {
                station,
                handle,
                start,
                start_soc,
                ..
            } => {
                self.cancel(id, handle)?;
                self.record(LogEvent::Interrupt { vehicle: id, from });
                self.finish_charge(id, station, now - start, soc - start_soc, true)?;
                self.vehicles[id.index()].soc = soc;
                self.change_state(id, VehicleState::Idle, now, soc)?;
                self.vehicles[id.index()].activity = Activity::Idle;
                return self.drain_queue(station);
            }
            _ => {
                return Err(SimError::consistency(
                    now,
                    format!("{id}: cannot interrupt a vehicle in state {from}"),
                ))
            }
        }
        self.change_state(id, VehicleState::Idle, now, soc)?;
        self.vehicles[id.index()].activity = Activity::Idle;
        Ok(())
    }
}
