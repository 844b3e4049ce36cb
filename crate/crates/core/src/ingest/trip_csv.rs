//! Delimited trip-record files: column mapping, cleaning, and export.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, Duration, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use super::{TripRecord, TripTable};
use crate::error::{Result, SimError};
use crate::geo::GeoPoint;

/// Header names of the required and optional input columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColumnMap {
    pub pickup_datetime: String,
    pub pickup_lat: String,
    pub pickup_lon: String,
    pub dropoff_lat: String,
    pub dropoff_lon: String,
    pub trip_distance: String,
    /// When mapped, the loaded-leg duration comes from the record.
    pub dropoff_datetime: Option<String>,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            pickup_datetime: "pickup_datetime".into(),
            pickup_lat: "pickup_lat".into(),
            pickup_lon: "pickup_lon".into(),
            dropoff_lat: "dropoff_lat".into(),
            dropoff_lon: "dropoff_lon".into(),
            trip_distance: "trip_distance".into(),
            dropoff_datetime: None,
        }
    }
}

/// Row filter as configured. Percentile bounds are data-dependent and are
/// turned into a [`ResolvedFilter`] against the rows being loaded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CleaningFilter {
    /// Lower and upper percentiles, in [0, 100], of pooled pickup and dropoff latitudes.
    pub lat_percentiles: (f64, f64),
    pub lon_percentiles: (f64, f64),
    /// Keep pickups at or after this datetime; also the time origin when set.
    pub start: Option<String>,
    /// Keep pickups strictly before this datetime.
    pub end: Option<String>,
    pub max_distance: Option<f64>,
    pub require_positive_distance: bool,
}

impl Default for CleaningFilter {
    fn default() -> Self {
        Self {
            lat_percentiles: (0.5, 99.5),
            lon_percentiles: (0.5, 99.5),
            start: None,
            end: None,
            max_distance: None,
            require_positive_distance: true,
        }
    }
}

impl CleaningFilter {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [("lat", self.lat_percentiles), ("lon", self.lon_percentiles)] {
            if !(0.0 <= lo && lo < hi && hi <= 100.0) {
                return Err(SimError::Config(format!(
                    "{name} percentiles must satisfy 0 <= lower < upper <= 100, got ({lo}, {hi})"
                )));
            }
        }
        if let Some(m) = self.max_distance {
            if !(m > 0.0) {
                return Err(SimError::Config("max_distance must be positive".into()));
            }
        }
        let start = self.start.as_deref().map(parse_datetime).transpose()?;
        let end = self.end.as_deref().map(parse_datetime).transpose()?;
        if let (Some(s), Some(e)) = (start, end) {
            if e <= s {
                return Err(SimError::Config("cleaning window end must follow start".into()));
            }
        }
        Ok(())
    }
}

/// A cleaning filter with every bound fixed to a number. Applying it to its
/// own output changes nothing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolvedFilter {
    pub lat: (f64, f64),
    pub lon: (f64, f64),
    /// Arrival-time window in minutes, half-open.
    pub window: (f64, f64),
    pub max_distance: f64,
    pub require_positive_distance: bool,
}

impl ResolvedFilter {
    pub fn admits(&self, r: &TripRecord) -> bool {
        let in_box = |p: &GeoPoint| {
            p.lat >= self.lat.0 && p.lat <= self.lat.1 && p.lon >= self.lon.0 && p.lon <= self.lon.1
        };
        let distance_ok = match r.recorded_distance {
            Some(d) => (!self.require_positive_distance || d > 0.0) && d <= self.max_distance,
            None => true,
        };
        in_box(&r.origin)
            && in_box(&r.destination)
            && r.arrival_time >= self.window.0
            && r.arrival_time < self.window.1
            && distance_ok
    }

    pub fn apply(&self, table: &TripTable) -> TripTable {
        table.iter().filter(|r| self.admits(r)).copied().collect()
    }

    /// The same filter with times expressed relative to `origin`.
    fn shifted(mut self, origin: f64) -> Self {
        self.window = (self.window.0 - origin, self.window.1 - origin);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadReport {
    pub rows_in: usize,
    pub rows_kept: usize,
    /// Rows that could not be parsed.
    pub rows_skipped: usize,
    /// Datetime at arrival time 0.
    pub time_origin: Option<String>,
    /// Minute-of-day of the time origin.
    pub origin_minute_of_day: Option<f64>,
    pub filter: Option<ResolvedFilter>,
}

pub fn load_trip_records(
    path: &Path,
    columns: &ColumnMap,
    filter: &CleaningFilter,
) -> Result<(TripTable, LoadReport)> {
    let file = File::open(path)?;
    load_trip_records_from_reader(file, columns, filter)
}

pub fn load_trip_records_from_reader<R: Read>(
    reader: R,
    columns: &ColumnMap,
    filter: &CleaningFilter,
) -> Result<(TripTable, LoadReport)> {
    filter.validate()?;
    let mut rdr = ::csv::ReaderBuilder::new().trim(::csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| SimError::Schema {
            column: name.to_string(),
        })
    };
    let idx = [
        find(&columns.pickup_datetime)?,
        find(&columns.pickup_lat)?,
        find(&columns.pickup_lon)?,
        find(&columns.dropoff_lat)?,
        find(&columns.dropoff_lon)?,
        find(&columns.trip_distance)?,
    ];
    let dropoff_idx = columns.dropoff_datetime.as_deref().map(find).transpose()?;

    // Arrival times are first taken as minutes since the Unix epoch.
    let mut rows = Vec::new();
    let mut rows_in = 0;
    let mut skipped = 0;
    for record in rdr.records() {
        rows_in += 1;
        let parsed = record.ok().and_then(|rec| {
            let field = |i: usize| rec.get(i);
            let num = |i: usize| field(i)?.parse::<f64>().ok().filter(|x| x.is_finite());
            let pickup = parse_datetime(field(idx[0])?).ok()?;
            let duration = match dropoff_idx {
                Some(i) => {
                    let dropoff = parse_datetime(field(i)?).ok()?;
                    Some(minutes_between(pickup, dropoff))
                }
                None => None,
            };
            let origin = GeoPoint::new(num(idx[1])?, num(idx[2])?);
            let destination = GeoPoint::new(num(idx[3])?, num(idx[4])?);
            if !origin.is_valid() || !destination.is_valid() {
                return None;
            }
            Some(TripRecord {
                arrival_time: epoch_minutes(pickup),
                origin,
                destination,
                recorded_distance: Some(num(idx[5])?),
                duration_minutes: duration,
            })
        });
        match parsed {
            Some(r) => rows.push(r),
            None => skipped += 1,
        }
    }

    if rows.is_empty() {
        return Ok((
            TripTable::default(),
            LoadReport {
                rows_in,
                rows_kept: 0,
                rows_skipped: skipped,
                time_origin: None,
                origin_minute_of_day: None,
                filter: None,
            },
        ));
    }

    let resolved = resolve(filter, &rows)?;
    let kept: Vec<TripRecord> = rows.into_iter().filter(|r| resolved.admits(r)).collect();
    let origin = match &filter.start {
        Some(s) => epoch_minutes(parse_datetime(s)?),
        None => kept
            .iter()
            .map(|r| r.arrival_time)
            .min_by(f64::total_cmp)
            .unwrap_or(0.0),
    };
    let table: TripTable = kept
        .into_iter()
        .map(|mut r| {
            r.arrival_time -= origin;
            r
        })
        .collect();
    let origin_dt = from_epoch_minutes(origin);
    let report = LoadReport {
        rows_in,
        rows_kept: table.len(),
        rows_skipped: skipped,
        time_origin: Some(origin_dt.format("%Y-%m-%dT%H:%M:%S%.f").to_string()),
        origin_minute_of_day: Some(
            origin_dt.num_seconds_from_midnight() as f64 / 60.0 + origin_dt.nanosecond() as f64 / 6e10,
        ),
        filter: Some(resolved.shifted(origin)),
    };
    Ok((table, report))
}

fn resolve(filter: &CleaningFilter, rows: &[TripRecord]) -> Result<ResolvedFilter> {
    let mut lats: Vec<f64> = rows.iter().flat_map(|r| [r.origin.lat, r.destination.lat]).collect();
    let mut lons: Vec<f64> = rows.iter().flat_map(|r| [r.origin.lon, r.destination.lon]).collect();
    lats.sort_by(f64::total_cmp);
    lons.sort_by(f64::total_cmp);
    let bounds = |sorted: &[f64], (lo, hi): (f64, f64)| (percentile(sorted, lo), percentile(sorted, hi));
    let start = filter.start.as_deref().map(parse_datetime).transpose()?;
    let end = filter.end.as_deref().map(parse_datetime).transpose()?;
    Ok(ResolvedFilter {
        lat: bounds(&lats, filter.lat_percentiles),
        lon: bounds(&lons, filter.lon_percentiles),
        window: (
            start.map_or(f64::NEG_INFINITY, epoch_minutes),
            end.map_or(f64::INFINITY, epoch_minutes),
        ),
        max_distance: filter.max_distance.unwrap_or(f64::INFINITY),
        require_positive_distance: filter.require_positive_distance,
    })
}

/// Linear-interpolated percentile `p` in [0, 100] of sorted, non-empty data.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let pos = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Accepts `YYYY-MM-DD HH:MM:SS`, the `T`-separated form, optional
/// fractional seconds, and RFC 3339 with an offset (converted to UTC).
fn parse_datetime(s: &str) -> Result<NaiveDateTime> {
    const FORMATS: [&str; 2] = ["%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M:%S%.f"];
    for f in FORMATS {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, f) {
            return Ok(dt);
        }
    }
    DateTime::parse_from_rfc3339(s)
        .map(|dt| dt.naive_utc())
        .map_err(|_| SimError::Argument(format!("unparseable datetime `{s}`")))
}

fn epoch_minutes(dt: NaiveDateTime) -> f64 {
    let utc = dt.and_utc();
    utc.timestamp() as f64 / 60.0 + utc.timestamp_subsec_nanos() as f64 / 6e10
}

fn from_epoch_minutes(m: f64) -> NaiveDateTime {
    let micros = (m * 60e6).round() as i64;
    DateTime::from_timestamp_micros(micros)
        .map(|d| d.naive_utc())
        .unwrap_or_default()
}

fn minutes_between(a: NaiveDateTime, b: NaiveDateTime) -> f64 {
    let d = b - a;
    d.num_microseconds().map_or(d.num_seconds() as f64 / 60.0, |us| us as f64 / 60e6)
}

/// Writes a table in the default column layout, with arrival time 0 at `base`.
pub fn write_trip_csv<W: Write>(table: &TripTable, out: W, base: NaiveDateTime) -> Result<()> {
    let with_dropoff = table.iter().any(|r| r.duration_minutes.is_some());
    let mut w = ::csv::Writer::from_writer(out);
    let cols = ColumnMap::default();
    let mut header = vec![
        cols.pickup_datetime.as_str(),
        cols.pickup_lat.as_str(),
        cols.pickup_lon.as_str(),
        cols.dropoff_lat.as_str(),
        cols.dropoff_lon.as_str(),
        cols.trip_distance.as_str(),
    ];
    if with_dropoff {
        header.push("dropoff_datetime");
    }
    w.write_record(&header)?;
    let stamp = |minutes: f64| {
        let dt = base + Duration::microseconds((minutes * 60e6).round() as i64);
        dt.format("%Y-%m-%dT%H:%M:%S%.6f").to_string()
    };
    for r in table.iter() {
        let mut row = vec![
            stamp(r.arrival_time),
            r.origin.lat.to_string(),
            r.origin.lon.to_string(),
            r.destination.lat.to_string(),
            r.destination.lon.to_string(),
            r.recorded_distance.map_or(String::new(), |d| d.to_string()),
        ];
        if with_dropoff {
            row.push(
                r.duration_minutes
                    .map_or(String::new(), |d| stamp(r.arrival_time + d)),
            );
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "pickup_datetime,pickup_lat,pickup_lon,dropoff_lat,dropoff_lon,trip_distance\n";

    fn no_trim() -> CleaningFilter {
        CleaningFilter {
            lat_percentiles: (0.0, 100.0),
            lon_percentiles: (0.0, 100.0),
            ..CleaningFilter::default()
        }
    }

    fn load(text: &str) -> (TripTable, LoadReport) {
        load_trip_records_from_reader(text.as_bytes(), &ColumnMap::default(), &no_trim()).unwrap()
    }

    #[test]
    fn percentile_interpolates() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(percentile(&xs, 0.0), 1.0);
        assert_eq!(percentile(&xs, 50.0), 3.0);
        assert_eq!(percentile(&xs, 100.0), 5.0);
        assert!((percentile(&xs, 10.0) - 1.4).abs() < 1e-12);
    }

    #[test]
    fn empty_file() {
        let (t, rep) = load(HEADER);
        assert!(t.is_empty());
        assert_eq!(rep.rows_in, 0);
    }

    #[test]
    fn missing_column_names_it() {
        let text = "pickup_datetime,pickup_lat,pickup_lon,dropoff_lat,trip_distance\n";
        let err = load_trip_records_from_reader(text.as_bytes(), &ColumnMap::default(), &CleaningFilter::default())
            .unwrap_err();
        match err {
            SimError::Schema { column } => assert_eq!(column, "dropoff_lon"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unparseable_rows_are_skipped() {
        let text = format!(
            "{HEADER}2024-05-01 08:00:00,40.7,-74.0,40.71,-74.0,1.0\nnot-a-date,40.7,-74.0,40.71,-74.0,1.0\n2024-05-01 08:01:00,abc,-74.0,40.71,-74.0,1.0\n"
        );
        let (t, rep) = load(&text);
        assert_eq!(rep.rows_in, 3);
        assert_eq!(rep.rows_skipped, 2);
        assert_eq!(t.len(), 1);
    }

    #[test]
    fn sorted_and_relative_to_first_pickup() {
        let text = format!(
            "{HEADER}2024-05-01 08:10:00,40.7,-74.0,40.71,-74.0,1.0\n2024-05-01T08:00:30,40.7,-74.0,40.71,-74.0,2.0\n"
        );
        let filter = CleaningFilter {
            lat_percentiles: (0.0, 100.0),
            lon_percentiles: (0.0, 100.0),
            ..CleaningFilter::default()
        };
        let (t, rep) =
            load_trip_records_from_reader(text.as_bytes(), &ColumnMap::default(), &filter).unwrap();
        assert_eq!(rep.rows_kept, rep.rows_in);
        let times: Vec<_> = t.iter().map(|r| r.arrival_time).collect();
        assert!((times[0] - 0.0).abs() < 1e-9 && (times[1] - 9.5).abs() < 1e-9, "{times:?}");
        assert!((rep.origin_minute_of_day.unwrap() - 480.5).abs() < 1e-9);
    }

    #[test]
    fn dropoff_column_gives_duration() {
        let text = "pickup_datetime,pickup_lat,pickup_lon,dropoff_lat,dropoff_lon,trip_distance,dropoff_datetime\n\
                    2024-05-01 08:00:00,40.7,-74.0,40.71,-74.0,1.0,2024-05-01 08:12:30\n";
        let cols = ColumnMap {
            dropoff_datetime: Some("dropoff_datetime".into()),
            ..ColumnMap::default()
        };
        let (t, _) = load_trip_records_from_reader(text.as_bytes(), &cols, &no_trim()).unwrap();
        assert_eq!(t.records()[0].duration_minutes, Some(12.5));
    }

    #[test]
    fn window_and_distance_rules() {
        let text = format!(
            "{HEADER}2024-05-01 07:59:00,40.7,-74.0,40.71,-74.0,1.0\n\
             2024-05-01 08:00:00,40.7,-74.0,40.71,-74.0,0.0\n\
             2024-05-01 08:05:00,40.7,-74.0,40.71,-74.0,50.0\n\
             2024-05-01 08:06:00,40.7,-74.0,40.71,-74.0,2.0\n\
             2024-05-01 09:00:00,40.7,-74.0,40.71,-74.0,2.0\n"
        );
        let filter = CleaningFilter {
            lat_percentiles: (0.0, 100.0),
            lon_percentiles: (0.0, 100.0),
            start: Some("2024-05-01 08:00:00".into()),
            end: Some("2024-05-01 09:00:00".into()),
            max_distance: Some(20.0),
            require_positive_distance: true,
        };
        let (t, rep) = load_trip_records_from_reader(text.as_bytes(), &ColumnMap::default(), &filter).unwrap();
        assert_eq!(rep.rows_kept, 1);
        assert!((t.records()[0].arrival_time - 6.0).abs() < 1e-9);
    }

    #[test]
    fn invalid_percentiles_rejected() {
        let f = CleaningFilter {
            lat_percentiles: (50.0, 50.0),
            ..CleaningFilter::default()
        };
        assert!(f.validate().is_err());
    }

    #[test]
    fn export_round_trip() {
        let table = TripTable::new(vec![TripRecord {
            arrival_time: 12.25,
            origin: GeoPoint::new(40.75, -73.98),
            destination: GeoPoint::new(40.76, -73.97),
            recorded_distance: Some(1.5),
            duration_minutes: None,
        }]);
        let base = NaiveDateTime::parse_from_str("2024-05-01 00:00:00", "%Y-%m-%d %H:%M:%S").unwrap();
        let mut buf = Vec::new();
        write_trip_csv(&table, &mut buf, base).unwrap();
        let filter = CleaningFilter {
            lat_percentiles: (0.0, 100.0),
            lon_percentiles: (0.0, 100.0),
            start: Some("2024-05-01 00:00:00".into()),
            ..CleaningFilter::default()
        };
        let (back, _) = load_trip_records_from_reader(&buf[..], &ColumnMap::default(), &filter).unwrap();
        let r = back.records()[0];
        assert!((r.arrival_time - 12.25).abs() < 1e-9);
        assert_eq!(r.origin, table.records()[0].origin);
        assert_eq!(r.recorded_distance, Some(1.5));
    }
}
