//! Post-run analysis of the event log. Every function here reads only the
//! log, so results can be recomputed from `events.csv` by other tools.

use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::charging::is_daytime;
use crate::domain::{TripId, TripState, VehicleState};
use crate::error::Result;
use crate::log::{EventLog, LogEvent};

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Completed trips over arrivals.
pub fn service_level(log: &EventLog) -> Option<f64> {
    let (mut arrivals, mut completed) = (0usize, 0usize);
    for r in log.iter() {
        match r.event {
            LogEvent::TripArrival { .. } => arrivals += 1,
            LogEvent::TripCompleted { .. } => completed += 1,
            _ => {}
        }
    }
    (arrivals > 0).then(|| completed as f64 / arrivals as f64)
}

/// Completed trip miles over requested trip miles.
pub fn workload_served(log: &EventLog) -> Option<f64> {
    let (mut requested, mut served) = (0.0, 0.0);
    for r in log.iter() {
        match r.event {
            LogEvent::TripArrival { miles, .. } => requested += miles,
            LogEvent::TripCompleted { miles, .. } => served += miles,
            _ => {}
        }
    }
    (requested > 0.0).then(|| served / requested)
}

/// Drives to a charger started, per car per hour.
pub fn trips_to_charger_rate(log: &EventLog, fleet_size: usize, horizon_minutes: f64) -> f64 {
    let n = log
        .iter()
        .filter(|r| matches!(r.event, LogEvent::ChargerAssigned { .. }))
        .count();
    let car_hours = fleet_size as f64 * horizon_minutes / 60.0;
    if car_hours > 0.0 {
        n as f64 / car_hours
    } else {
        0.0
    }
}

/// Fleet state sampled on a regular grid over `[0, horizon]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StateTimeseries {
    pub times: Vec<f64>,
    /// Per sample, vehicle count per state in [`VehicleState::ALL`] order.
    pub counts: Vec<[u32; 6]>,
    pub avg_soc: Vec<f64>,
    /// Trips whose `[arrival, arrival + expected duration)` covers the sample.
    pub potential_active_trips: Vec<u32>,
}

impl StateTimeseries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["time".to_string()];
        header.extend(VehicleState::ALL.iter().map(|s| s.as_str().to_string()));
        header.push("avg_soc".into());
        header.push("potential_active_trips".into());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut row = vec![self.times[i].to_string()];
            row.extend(self.counts[i].iter().map(|c| c.to_string()));
            row.push(self.avg_soc[i].to_string());
            row.push(self.potential_active_trips[i].to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Replayed view of one vehicle: its state and the linear SoC path of the
/// current activity.
#[derive(Debug, Clone, Copy)]
struct Track {
    state: VehicleState,
    t0: f64,
    soc0: f64,
    t1: f64,
    soc1: f64,
}

impl Track {
    fn soc_at(&self, t: f64) -> f64 {
        if self.t1 <= self.t0 {
            return self.soc0;
        }
        let f = ((t - self.t0) / (self.t1 - self.t0)).clamp(0.0, 1.0);
        self.soc0 + (self.soc1 - self.soc0) * f
    }
}

pub fn state_timeseries(log: &EventLog, horizon_minutes: f64, resolution: f64) -> StateTimeseries {
    let records = log.records();
    let mut tracks: Vec<Track> = Vec::new();
    let mut windows: Vec<(f64, f64)> = Vec::new();
    for r in records {
        match r.event {
            LogEvent::VehicleInit { vehicle, soc, .. } => {
                let i = vehicle.index();
                if tracks.len() <= i {
                    tracks.resize(
                        i + 1,
                        Track {
                            state: VehicleState::Idle,
                            t0: 0.0,
                            soc0: 0.0,
                            t1: 0.0,
                            soc1: 0.0,
                        },
                    );
                }
                tracks[i] = Track {
                    state: VehicleState::Idle,
                    t0: r.time,
                    soc0: soc,
                    t1: r.time,
                    soc1: soc,
                };
            }
            LogEvent::TripArrival { expected_minutes, .. } => windows.push((r.time, r.time + expected_minutes)),
            _ => {}
        }
    }
    let mut starts: Vec<f64> = windows.iter().map(|w| w.0).collect();
    let mut ends: Vec<f64> = windows.iter().map(|w| w.1).collect();
    starts.sort_by(f64::total_cmp);
    ends.sort_by(f64::total_cmp);

    let n_samples = if resolution > 0.0 && horizon_minutes >= 0.0 {
        (horizon_minutes / resolution + 1e-9).floor() as usize + 1
    } else {
        0
    };
    let mut out = StateTimeseries::default();
    let mut next = 0;
    for k in 0..n_samples {
        let t = k as f64 * resolution;
        while next < records.len() && records[next].time <= t {
            if let LogEvent::StateChange {
                vehicle,
                to,
                soc,
                until,
                until_soc,
                ..
            } = records[next].event
            {
                if let Some(tr) = tracks.get_mut(vehicle.index()) {
                    *tr = Track {
                    state: to,
                    t0: records[next].time,
                    soc0: soc,
                        t1: until,
                        soc1: until_soc,
                    };
                }
            }
            next += 1;
        }
        let mut counts = [0u32; 6];
        let mut soc_sum = 0.0;
        for tr in &tracks {
            counts[tr.state.index()] += 1;
            soc_sum += tr.soc_at(t);
        }
        let started = starts.partition_point(|&s| s <= t);
        let ended = ends.partition_point(|&e| e <= t);
        out.times.push(t);
        out.counts.push(counts);
        out.avg_soc.push(if tracks.is_empty() {
            0.0
        } else {
            soc_sum / tracks.len() as f64
        });
        out.potential_active_trips.push((started - ended) as u32);
    }
    out
}

/// Mean over samples of the fleet-average SoC.
pub fn time_avg_soc(log: &EventLog, horizon_minutes: f64, resolution: f64) -> Option<f64> {
    mean(state_timeseries(log, horizon_minutes, resolution).avg_soc.into_iter())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub bin_width: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["bin_start", "bin_end", "count"])?;
        for (i, c) in self.counts.iter().enumerate() {
            let lo = i as f64 * self.bin_width;
            w.write_record(&[lo.to_string(), (lo + self.bin_width).to_string(), c.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Minutes from the matching decision to pickup, per picked-up trip.
pub fn pickup_times(log: &EventLog) -> Vec<f64> {
    let mut matched: HashMap<TripId, f64> = HashMap::new();
    let mut out = Vec::new();
    for r in log.iter() {
        match r.event {
            LogEvent::TripMatched { trip, .. } => {
                matched.insert(trip, r.time);
            }
            LogEvent::TripPickedUp { trip, .. } => {
                if let Some(t0) = matched.remove(&trip) {
                    out.push(r.time - t0);
                }
            }
            _ => {}
        }
    }
    out
}

/// Pickup times binned as `[k w, (k + 1) w)`. Always has at least one bin.
pub fn pickup_histogram(log: &EventLog, bin_width: f64) -> Histogram {
    let times = pickup_times(log);
    let bin = |t: f64| (t / bin_width).floor().max(0.0) as usize;
    let n_bins = times.iter().map(|&t| bin(t) + 1).max().unwrap_or(1);
    let mut counts = vec![0u64; n_bins];
    for t in times {
        counts[bin(t)] += 1;
    }
    Histogram { bin_width, counts }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryMetrics {
    pub fleet_size: usize,
    pub horizon_minutes: f64,
    pub arrivals: usize,
    pub completed: usize,
    pub dropped_unavailable: usize,
    pub dropped_reneged: usize,
    pub service_level: Option<f64>,
    pub workload_served: Option<f64>,
    pub avg_trip_time_min: Option<f64>,
    pub avg_trip_distance_mi: Option<f64>,
    pub avg_pickup_time_min: Option<f64>,
    pub avg_time_to_charger_min: Option<f64>,
    pub trips_to_charger_per_car_per_hour: f64,
    pub time_avg_soc: Option<f64>,
    pub charger_trips: usize,
    /// Drives to a charger started between 6 am and 11 pm.
    pub charger_trips_daytime: usize,
    pub charging_starts: usize,
    pub charging_starts_daytime: usize,
    pub interrupts: usize,
    /// `d` after the last adaptive review, if any review happened.
    pub final_adaptive_d: Option<u32>,
}

/// Every summary figure, from one pass over the log plus a time-series replay.
pub fn summarize(log: &EventLog, horizon_minutes: f64, resolution: f64, day_origin: f64) -> SummaryMetrics {
    let mut s = SummaryMetrics {
        fleet_size: 0,
        horizon_minutes,
        arrivals: 0,
        completed: 0,
        dropped_unavailable: 0,
        dropped_reneged: 0,
        service_level: None,
        workload_served: None,
        avg_trip_time_min: None,
        avg_trip_distance_mi: None,
        avg_pickup_time_min: None,
        avg_time_to_charger_min: None,
        trips_to_charger_per_car_per_hour: 0.0,
        time_avg_soc: None,
        charger_trips: 0,
        charger_trips_daytime: 0,
        charging_starts: 0,
        charging_starts_daytime: 0,
        interrupts: 0,
        final_adaptive_d: None,
    };
    let mut picked: HashMap<TripId, f64> = HashMap::new();
    let mut trip_minutes = Vec::new();
    let mut trip_miles = Vec::new();
    let mut charger_minutes = Vec::new();
    for r in log.iter() {
        match r.event {
            LogEvent::VehicleInit { .. } => s.fleet_size += 1,
            LogEvent::TripArrival { .. } => s.arrivals += 1,
            LogEvent::TripDropped { outcome, .. } => match outcome {
                TripState::Unavailable => s.dropped_unavailable += 1,
                _ => s.dropped_reneged += 1,
            },
            LogEvent::TripPickedUp { trip, .. } => {
                picked.insert(trip, r.time);
            }
            LogEvent::TripCompleted { trip, miles, .. } => {
                s.completed += 1;
                trip_miles.push(miles);
                if let Some(t0) = picked.remove(&trip) {
                    trip_minutes.push(r.time - t0);
                }
            }
            LogEvent::ChargerAssigned { .. } => {
                s.charger_trips += 1;
                if is_daytime(r.time, day_origin) {
                    s.charger_trips_daytime += 1;
                }
            }
            LogEvent::ChargerReached { minutes, .. } => charger_minutes.push(minutes),
            LogEvent::StateChange {
                to: VehicleState::Charging,
                ..
            } => {
                s.charging_starts += 1;
                if is_daytime(r.time, day_origin) {
                    s.charging_starts_daytime += 1;
                }
            }
            LogEvent::Interrupt { .. } => s.interrupts += 1,
            LogEvent::DReview { to, .. } => s.final_adaptive_d = Some(to),
            _ => {}
        }
    }
    s.service_level = service_level(log);
    s.workload_served = workload_served(log);
    s.avg_trip_time_min = mean(trip_minutes.into_iter());
    s.avg_trip_distance_mi = mean(trip_miles.into_iter());
    s.avg_pickup_time_min = mean(pickup_times(log).into_iter());
    s.avg_time_to_charger_min = mean(charger_minutes.into_iter());
    s.trips_to_charger_per_car_per_hour = trips_to_charger_rate(log, s.fleet_size, horizon_minutes);
    s.time_avg_soc = time_avg_soc(log, horizon_minutes, resolution);
    s
}
