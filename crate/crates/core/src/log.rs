//! Append-only simulation event log.

use std::io::Write;

use crate::domain::{StationId, TripId, TripState, VehicleId, VehicleState};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LogEvent {
    VehicleInit {
        vehicle: VehicleId,
        soc: f64,
        lat: f64,
        lon: f64,
    },
    TripArrival {
        trip: TripId,
        miles: f64,
        expected_minutes: f64,
    },
    TripMatched {
        trip: TripId,
        vehicle: VehicleId,
        pickup_miles: f64,
        candidates: u32,
    },
    TripDropped {
        trip: TripId,
        outcome: TripState,
        candidates: u32,
    },
    TripPickedUp {
        trip: TripId,
        vehicle: VehicleId,
    },
    TripCompleted {
        trip: TripId,
        vehicle: VehicleId,
        miles: f64,
    },
    /// A committed state change. `soc` is the value after the commit; the
    /// activity is planned to end at `until` with `until_soc`.
    StateChange {
        vehicle: VehicleId,
        from: VehicleState,
        to: VehicleState,
        soc: f64,
        until: f64,
        until_soc: f64,
    },
    Drive {
        vehicle: VehicleId,
        miles: f64,
        soc_spent: f64,
    },
    ChargerAssigned {
        vehicle: VehicleId,
        station: StationId,
        miles: f64,
    },
    ChargerReached {
        vehicle: VehicleId,
        station: StationId,
        minutes: f64,
    },
    ChargeEnd {
        vehicle: VehicleId,
        station: StationId,
        minutes: f64,
        soc_gained: f64,
        interrupted: bool,
    },
    Interrupt {
        vehicle: VehicleId,
        from: VehicleState,
    },
    DReview {
        from: u32,
        to: u32,
    },
}

impl LogEvent {
    pub fn name(&self) -> &'static str {
        match self {
            LogEvent::VehicleInit { .. } => "init",
            LogEvent::TripArrival { .. } => "arrival",
            LogEvent::TripMatched { .. } => "matched",
            LogEvent::TripDropped { .. } => "dropped",
            LogEvent::TripPickedUp { .. } => "pickup",
            LogEvent::TripCompleted { .. } => "completed",
            LogEvent::StateChange { .. } => "state",
            LogEvent::Drive { .. } => "drive",
            LogEvent::ChargerAssigned { .. } => "assign",
            LogEvent::ChargerReached { .. } => "reach",
            LogEvent::ChargeEnd { .. } => "charge",
            LogEvent::Interrupt { .. } => "interrupt",
            LogEvent::DReview { .. } => "d_review",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRecord {
    pub time: f64,
    pub event: LogEvent,
}

#[derive(Debug, Clone, Default)]
pub struct EventLog {
    records: Vec<LogRecord>,
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, time: f64, event: LogEvent) {
        debug_assert!(
            self.records.last().is_none_or(|r| r.time <= time),
            "log time went backwards"
        );
        self.records.push(LogRecord { time, event });
    }

    pub fn records(&self) -> &[LogRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &LogRecord> {
        self.records.iter()
    }

    /// Writes the log as CSV with a fixed column layout:
    /// `time,event,vehicle,trip,station,from,to,a,b,c`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time", "event", "vehicle", "trip", "station", "from", "to", "a", "b", "c"])?;
        for r in &self.records {
            w.write_record(&csv_row(r))?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_row(r: &LogRecord) -> [String; 10] {
    let mut row: [String; 10] = Default::default();
    row[0] = r.time.to_string();
    row[1] = r.event.name().to_string();
    let v = |id: VehicleId| id.0.to_string();
    let f = |x: f64| x.to_string();
    match r.event {
        LogEvent::VehicleInit { vehicle, soc, lat, lon } => {
            row[2] = v(vehicle);
            row[7] = f(soc);
            row[8] = f(lat);
            row[9] = f(lon);
        }
        LogEvent::TripArrival {
            trip,
            miles,
            expected_minutes,
        } => {
            row[3] = trip.0.to_string();
            row[7] = f(miles);
            row[8] = f(expected_minutes);
        }
        LogEvent::TripMatched {
            trip,
            vehicle,
            pickup_miles,
            candidates,
        } => {
            row[2] = v(vehicle);
            row[3] = trip.0.to_string();
            row[7] = f(pickup_miles);
            row[8] = candidates.to_string();
        }
        LogEvent::TripDropped {
            trip,
            outcome,
            candidates,
        } => {
            row[3] = trip.0.to_string();
            row[6] = outcome.as_str().to_string();
            row[8] = candidates.to_string();
        }
        LogEvent::TripPickedUp { trip, vehicle } => {
            row[2] = v(vehicle);
            row[3] = trip.0.to_string();
        }
        LogEvent::TripCompleted { trip, vehicle, miles } => {
            row[2] = v(vehicle);
            row[3] = trip.0.to_string();
            row[7] = f(miles);
        }
        LogEvent::StateChange {
            vehicle,
            from,
            to,
            soc,
            until,
            until_soc,
        } => {
            row[2] = v(vehicle);
            row[5] = from.as_str().to_string();
            row[6] = to.as_str().to_string();
            row[7] = f(soc);
            row[8] = f(until);
            row[9] = f(until_soc);
        }
        LogEvent::Drive {
            vehicle,
            miles,
            soc_spent,
        } => {
            row[2] = v(vehicle);
            row[7] = f(miles);
            row[8] = f(soc_spent);
        }
        LogEvent::ChargerAssigned { vehicle, station, miles } => {
            row[2] = v(vehicle);
            row[4] = station.0.to_string();
            row[7] = f(miles);
        }
        LogEvent::ChargerReached {
            vehicle,
            station,
            minutes,
        } => {
            row[2] = v(vehicle);
            row[4] = station.0.to_string();
            row[7] = f(minutes);
        }
        LogEvent::ChargeEnd {
            vehicle,
            station,
            minutes,
            soc_gained,
            interrupted,
        } => {
            row[2] = v(vehicle);
            row[4] = station.0.to_string();
            row[7] = f(minutes);
            row[8] = f(soc_gained);
            row[9] = (interrupted as u8).to_string();
        }
        LogEvent::Interrupt { vehicle, from } => {
            row[2] = v(vehicle);
            row[5] = from.as_str().to_string();
        }
        LogEvent::DReview { from, to } => {
            row[7] = from.to_string();
            row[8] = to.to_string();
        }
    }
    row
}
