//! Building the arrival stream: trip tables from CSV or a Poisson generator,
//! and the regression that calibrates the distance correction factor.

mod trip_csv;
mod regression;
mod synthetic;

pub use self::trip_csv::{percentile, load_trip_records, load_trip_records_from_reader, write_trip_csv, CleaningFilter, ColumnMap, LoadReport, ResolvedFilter};
pub use self::regression::{fit_correction_factor, ols, RegressionReport};
pub use self::synthetic::{generate_poisson_trips, SyntheticSpec};

use crate::domain::{TripId, TripRequest, TripState};
use crate::error::Result;
use crate::geo::{self, DistanceModel, GeoPoint};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripRecord {
    /// Minutes since scenario start.
    pub arrival_time: f64,
    pub origin: GeoPoint,
    pub destination: GeoPoint,
    pub recorded_distance: Option<f64>,
    /// Recorded loaded-leg duration, when the source has one.
    pub duration_minutes: Option<f64>,
}

/// Trip records sorted by arrival time. Equal times keep their input order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TripTable {
    records: Vec<TripRecord>,
}

impl TripTable {
    pub fn new(mut records: Vec<TripRecord>) -> Self {
        records.sort_by(|a, b| a.arrival_time.total_cmp(&b.arrival_time));
        Self { records }
    }

    pub fn records(&self) -> &[TripRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, TripRecord> {
        self.records.iter()
    }

    /// Keeps the records with arrival time in `[0, horizon]`.
    pub fn truncate_to_horizon(&mut self, horizon: f64) {
        self.records.retain(|r| r.arrival_time >= 0.0 && r.arrival_time <= horizon);
    }

    pub fn origins(&self) -> Vec<GeoPoint> {
        self.records.iter().map(|r| r.origin).collect()
    }
}

impl FromIterator<TripRecord> for TripTable {
    fn from_iter<I: IntoIterator<Item = TripRecord>>(iter: I) -> Self {
        Self::new(iter.into_iter().collect())
    }
}

/// How loaded legs are measured when the record does not say.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LegModel {
    pub distance: DistanceModel,
    pub velocity_mph: f64,
}

impl LegModel {
    /// Loaded-leg (miles, minutes) for one record.
    pub fn measure(&self, r: &TripRecord) -> Result<(f64, f64)> {
        let miles = r
            .recorded_distance
            .unwrap_or_else(|| self.distance.distance(&r.origin, &r.destination));
        let minutes = match r.duration_minutes {
            Some(m) if m > 0.0 && m.is_finite() => m,
            _ => geo::travel_time_minutes(miles, self.velocity_mph)?,
        };
        Ok((miles, minutes))
    }
}

/// Trip requests in arrival order, each `WAITING`, with ids equal to their position.
pub fn arrival_stream<'a>(
    table: &'a TripTable,
    legs: LegModel,
) -> impl Iterator<Item = Result<TripRequest>> + 'a {
    table.iter().enumerate().map(move |(i, r)| {
        let (distance, service_minutes) = legs.measure(r)?;
        Ok(TripRequest {
            id: TripId(i as u32),
            origin: r.origin,
            destination: r.destination,
            arrival_time: r.arrival_time,
            distance,
            service_minutes,
            state: TripState::Waiting,
            matched_vehicle: None,
            pickup_time: None,
            completion_time: None,
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(t: f64, lat: f64) -> TripRecord {
        TripRecord {
            arrival_time: t,
            origin: GeoPoint::new(lat, 0.0),
            destination: GeoPoint::new(lat + 0.01, 0.0),
            recorded_distance: None,
            duration_minutes: None,
        }
    }

    fn legs() -> LegModel {
        LegModel {
            distance: DistanceModel::default(),
            velocity_mph: 11.21,
        }
    }

    #[test]
    fn stream_preserves_order() {
        let table = TripTable::new(vec![rec(9.0, 3.0), rec(1.0, 1.0), rec(5.0, 2.0)]);
        let times: Vec<_> = arrival_stream(&table, legs()).map(|r| r.unwrap().arrival_time).collect();
        assert_eq!(times, vec![1.0, 5.0, 9.0]);
    }

    #[test]
    fn duplicate_times_keep_input_order() {
        let table = TripTable::new(vec![rec(2.0, 10.0), rec(2.0, 20.0), rec(1.0, 30.0)]);
        let lats: Vec<_> = arrival_stream(&table, legs()).map(|r| r.unwrap().origin.lat).collect();
        assert_eq!(lats, vec![30.0, 10.0, 20.0]);
    }

    #[test]
    fn empty_stream() {
        assert_eq!(arrival_stream(&TripTable::default(), legs()).count(), 0);
    }

    #[test]
    fn requests_start_waiting() {
        let table = TripTable::new(vec![rec(0.0, 0.0)]);
        let r = arrival_stream(&table, legs()).next().unwrap().unwrap();
        assert_eq!(r.state, TripState::Waiting);
        assert_eq!(r.id, TripId(0));
    }

    #[test]
    fn recorded_values_win() {
        let mut r = rec(0.0, 0.0);
        r.recorded_distance = Some(3.32);
        let (miles, minutes) = legs().measure(&r).unwrap();
        assert_eq!(miles, 3.32);
        assert!((minutes - 60.0 * 3.32 / 11.21).abs() < 1e-12);
        r.duration_minutes = Some(12.5);
        assert_eq!(legs().measure(&r).unwrap().1, 12.5);
        r.duration_minutes = Some(0.0);
        assert!((legs().measure(&r).unwrap().1 - 60.0 * 3.32 / 11.21).abs() < 1e-12);
    }

    #[test]
    fn horizon_truncation() {
        let mut t = TripTable::new(vec![rec(0.0, 0.0), rec(10.0, 0.0), rec(10.5, 0.0)]);
        t.truncate_to_horizon(10.0);
        assert_eq!(t.len(), 2);
    }
}
