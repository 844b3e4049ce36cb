//! End-to-end runs: dataset, placement, simulation, and output artifacts.
//!
//! All randomness flows from one generator seeded by the config, drawn in a
//! fixed order: synthetic trips, the regression split, vehicle placement,
//! charger placement, then the dispatch coins during the run.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use chrono::{NaiveDate, NaiveTime};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{ChargerPlacement, DatasetConfig, GenSpec, ScenarioConfig, VehiclePlacement};
use crate::dispatch::DispatchPolicy;
use crate::domain::{ChargingStation, TripRequest, Vehicle};
use crate::error::{Result, SimError};
use crate::geo::{uniform_sphere_point, DistanceMode, DistanceModel, GeoBox, GeoPoint};
use crate::ingest::{
    arrival_stream, fit_correction_factor, CleaningFilter, ColumnMap, generate_poisson_trips, load_trip_records, percentile, write_trip_csv, LegModel,
    LoadReport, RegressionReport, TripTable,
};
use crate::kernel::KernelStats;
use crate::log::EventLog;
use crate::metrics::{pickup_histogram, state_timeseries, summarize, Histogram, StateTimeseries, SummaryMetrics};
use crate::world::{World, WorldSettings};

/// Initial vehicle locations, drawn uniformly with replacement from `origins`.
pub fn place_initial_vehicles<R: Rng + ?Sized>(origins: &[GeoPoint], n: usize, rng: &mut R) -> Result<Vec<GeoPoint>> {
    if origins.is_empty() {
        return Err(SimError::Config("cannot place vehicles: the trip table is empty".into()));
    }
    Ok((0..n).map(|_| origins[rng.random_range(0..origins.len())]).collect())
}

/// Box spanned by the given percentiles of latitude and longitude.
pub fn percentile_box(points: &[GeoPoint], lat_pct: (f64, f64), lon_pct: (f64, f64)) -> Option<GeoBox> {
    if points.is_empty() {
        return None;
    }
    let mut lats: Vec<f64> = points.iter().map(|p| p.lat).collect();
    let mut lons: Vec<f64> = points.iter().map(|p| p.lon).collect();
    lats.sort_by(f64::total_cmp);
    lons.sort_by(f64::total_cmp);
    Some(GeoBox {
        lat_min: percentile(&lats, lat_pct.0),
        lat_max: percentile(&lats, lat_pct.1),
        lon_min: percentile(&lons, lon_pct.0),
        lon_max: percentile(&lons, lon_pct.1),
    })
}

/// Station locations. Sampling from origins draws without replacement while
/// enough distinct eligible origins exist.
pub fn place_chargers<R: Rng + ?Sized>(
    placement: ChargerPlacement,
    count: usize,
    origins: &[GeoPoint],
    region: Option<GeoBox>,
    lat_pct: (f64, f64),
    lon_pct: (f64, f64),
    rng: &mut R,
) -> Result<Vec<GeoPoint>> {
    if count == 0 {
        return Err(SimError::Config("charger count must be positive".into()));
    }
    let pct_box = || {
        percentile_box(origins, lat_pct, lon_pct)
            .ok_or_else(|| SimError::Config("cannot place chargers: no region and no trip origins".into()))
    };
    match placement {
        ChargerPlacement::UniformInBox => {
            let b = match region {
                Some(b) => b,
                None => pct_box()?,
            };
            Ok((0..count).map(|_| uniform_sphere_point(rng, Some(&b))).collect())
        }
        ChargerPlacement::SampleFromOrigins => {
            let b = pct_box()?;
            let eligible: Vec<GeoPoint> = origins.iter().copied().filter(|p| b.contains(p)).collect();
            if eligible.is_empty() {
                return Err(SimError::Config("no trip origin inside the charger percentile box".into()));
            }
            if eligible.len() >= count {
                Ok(eligible.choose_multiple(rng, count).copied().collect())
            } else {
                Ok((0..count).map(|_| eligible[rng.random_range(0..eligible.len())]).collect())
            }
        }
    }
}

/// Row count and SHA-256 over the canonical little-endian encoding of a table.
pub fn table_fingerprint(table: &TripTable) -> (usize, String) {
    let mut h = Sha256::new();
    for r in table.iter() {
        for x in [
            r.arrival_time,
            r.origin.lat,
            r.origin.lon,
            r.destination.lat,
            r.destination.lon,
            r.recorded_distance.unwrap_or(f64::NAN),
            r.duration_minutes.unwrap_or(f64::NAN),
        ] {
            h.update(x.to_le_bytes());
        }
    }
    (table.len(), hex::encode(h.finalize()))
}

/// Everything decided before the first event: trips, distance model, and placements.
pub struct PreparedScenario {
    pub config: ScenarioConfig,
    pub table: TripTable,
    pub load_report: Option<LoadReport>,
    pub regression: Option<RegressionReport>,
    pub distance: DistanceModel,
    pub day_origin: f64,
    pub vehicles: Vec<GeoPoint>,
    pub stations: Vec<GeoPoint>,
    rng: ChaCha8Rng,
}

impl PreparedScenario {
    /// Loads or generates the dataset named by the config.
    pub fn new(config: &ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (table, report) = match &config.dataset {
            DatasetConfig::Synthetic(spec) => {
                let origin = config.start_minute_of_day.unwrap_or(0.0);
                let table = generate_poisson_trips(
                    spec,
                    config.horizon_minutes,
                    origin,
                    &config.geo.model()?,
                    &mut rng,
                )?;
                (table, None)
            }
            DatasetConfig::Csv { path, columns, filter } => {
                let (table, report) = load_trip_records(path, columns, filter)?;
                (table, Some(report))
            }
        };
        Self::finish(config, table, report, rng)
    }

    /// Uses a caller-supplied trip table in place of the configured dataset.
    pub fn with_table(config: &ScenarioConfig, table: TripTable) -> Result<Self> {
        config.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Self::finish(config, table, None, rng)
    }

    fn finish(
        config: &ScenarioConfig,
        mut table: TripTable,
        load_report: Option<LoadReport>,
        mut rng: ChaCha8Rng,
    ) -> Result<Self> {
        table.truncate_to_horizon(config.horizon_minutes);
        let day_origin = config
            .start_minute_of_day
            .or_else(|| load_report.as_ref().and_then(|r| r.origin_minute_of_day))
            .unwrap_or(0.0);
        let mut distance = config.geo.model()?;
        let regression = if config.geo.fit_correction {
            let fit = fit_correction_factor(&table, config.geo.train_fraction, &mut rng)?;
            if !(fit.slope > 0.0 && fit.slope.is_finite()) {
                return Err(SimError::DegenerateFit(format!("fitted slope {} is not positive", fit.slope)));
            }
            distance.correction_factor = fit.slope;
            Some(fit)
        } else {
            None
        };
        let origins = table.origins();
        let vehicles = match config.fleet.placement {
            VehiclePlacement::SampleOrigins => place_initial_vehicles(&origins, config.fleet.size, &mut rng)?,
            VehiclePlacement::UniformBox => {
                let b = config
                    .fleet
                    .region
                    .or(config.dataset.region())
                    .ok_or_else(|| SimError::Config("uniform_box placement needs a region".into()))?;
                (0..config.fleet.size).map(|_| uniform_sphere_point(&mut rng, Some(&b))).collect()
            }
        };
        let c = &config.chargers;
        let stations = place_chargers(
            c.placement,
            c.count,
            &origins,
            c.region.or(config.dataset.region()),
            c.lat_percentiles,
            c.lon_percentiles,
            &mut rng,
        )?;
        Ok(Self {
            config: config.clone(),
            table,
            load_report,
            regression,
            distance,
            day_origin,
            vehicles,
            stations,
            rng,
        })
    }

    pub fn fingerprint(&self) -> (usize, String) {
        table_fingerprint(&self.table)
    }

    /// The world ready to run, with every arrival scheduled.
    pub fn build_world(&self) -> Result<World> {
        let cfg = &self.config;
        let settings = WorldSettings {
            day_origin: self.day_origin,
            distance: self.distance,
            vehicle: cfg.vehicle,
            filter: cfg.matching.filter(),
            min_end_soc: cfg.matching.min_end_soc,
            schedule: cfg.charging.schedule.build()?,
            availability: cfg.charging.availability(),
            assignment: cfg.charging.assignment_rule(),
            interrupts: cfg.charging.interrupt,
            check_invariants: cfg.check_invariants,
        };
        let legs = LegModel {
            distance: self.distance,
            velocity_mph: cfg.vehicle.velocity_mph,
        };
        let trips = arrival_stream(&self.table, legs).collect::<Result<Vec<_>>>()?;
        let vehicles: Vec<(GeoPoint, f64)> = self.vehicles.iter().map(|&p| (p, cfg.initial_soc)).collect();
        let stations: Vec<(GeoPoint, u32)> = self.stations.iter().map(|&p| (p, cfg.chargers.posts)).collect();
        World::new(
            settings,
            DispatchPolicy::from_config(&cfg.matching),
            &vehicles,
            &stations,
            trips,
            self.rng.clone(),
        )
    }
}

/// A finished run and its derived metrics.
pub struct RunOutput {
    pub summary: SummaryMetrics,
    pub timeseries: StateTimeseries,
    pub pickup_histogram: Histogram,
    pub log: EventLog,
    pub vehicles: Vec<Vehicle>,
    pub stations: Vec<ChargingStation>,
    pub trips: Vec<TripRequest>,
    pub stats: KernelStats,
    pub regression: Option<RegressionReport>,
    pub load_report: Option<LoadReport>,
    pub correction_factor: f64,
    pub day_origin: f64,
    pub dataset_rows: usize,
    pub dataset_sha256: String,
}

impl RunOutput {
    fn collect(prepared: PreparedScenario, world: World, stats: KernelStats) -> Self {
        let cfg = &prepared.config;
        let horizon = cfg.horizon_minutes;
        let (rows, sha) = prepared.fingerprint();
        let vehicles = world.vehicles().to_vec();
        let stations = world.stations().to_vec();
        let trips = world.trips().to_vec();
        let log = world.into_log();
        Self {
            summary: summarize(&log, horizon, cfg.output.timeseries_resolution_minutes, prepared.day_origin),
            timeseries: state_timeseries(&log, horizon, cfg.output.timeseries_resolution_minutes),
            pickup_histogram: pickup_histogram(&log, cfg.output.histogram_bin_minutes),
            log,
            vehicles,
            stations,
            trips,
            stats,
            regression: prepared.regression,
            load_report: prepared.load_report,
            correction_factor: prepared.distance.correction_factor,
            day_origin: prepared.day_origin,
            dataset_rows: rows,
            dataset_sha256: sha,
        }
    }
}

/// Runs a prepared scenario until no event is left.
pub fn simulate_prepared(prepared: PreparedScenario) -> Result<RunOutput> {
    let mut world = prepared.build_world()?;
    let stats = world.run_to_completion()?;
    Ok(RunOutput::collect(prepared, world, stats))
}

pub fn simulate(config: &ScenarioConfig) -> Result<RunOutput> {
    simulate_prepared(PreparedScenario::new(config)?)
}

pub fn simulate_table(config: &ScenarioConfig, table: TripTable) -> Result<RunOutput> {
    simulate_prepared(PreparedScenario::with_table(config, table)?)
}

/// Runs independent scenarios on up to `threads` worker threads. Results
/// keep the input order and do not depend on the thread count.
pub fn run_many(configs: &[ScenarioConfig], threads: usize) -> Vec<Result<RunOutput>> {
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<RunOutput>>>> = configs.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..threads.clamp(1, configs.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(cfg) = configs.get(i) else { break };
                let out = simulate(cfg);
                *slots[i].lock().expect("slot lock") = Some(out);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("slot lock").expect("every slot is filled"))
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub seed: u64,
    pub config: ScenarioConfig,
    pub dataset_rows: usize,
    pub dataset_sha256: String,
    pub correction_factor: f64,
    pub day_origin_minute: f64,
    pub regression: Option<RegressionReport>,
    pub load_report: Option<LoadReport>,
    pub events_processed: u64,
    pub runtime_seconds: f64,
    pub artifacts: Vec<PathBuf>,
}

pub const EVENTS_FILE: &str = "events.csv";

/// Runs one scenario and writes its artifacts into `out_dir`. If the run
/// stops on an error, the event log up to that point is still written.
pub fn run_scenario(config: &ScenarioConfig, out_dir: &Path) -> Result<RunManifest> {
    let started = Instant::now();
    fs::create_dir_all(out_dir)?;
    let prepared = PreparedScenario::new(config)?;
    let mut world = prepared.build_world()?;
    let stats = match world.run_to_completion() {
        Ok(s) => s,
        Err(e) => {
            world.log().write_csv(BufWriter::new(File::create(out_dir.join(EVENTS_FILE))?))?;
            return Err(e);
        }
    };
    let out = RunOutput::collect(prepared, world, stats);

    let mut artifacts = Vec::new();
    let mut create = |name: &str| -> Result<BufWriter<File>> {
        let path = out_dir.join(name);
        let f = File::create(&path)?;
        artifacts.push(path);
        Ok(BufWriter::new(f))
    };
    serde_json::to_writer_pretty(create("summary.json")?, &out.summary)?;
    out.timeseries.write_csv(create("timeseries.csv")?)?;
    out.pickup_histogram.write_csv(create("pickup_hist.csv")?)?;
    out.log.write_csv(create(EVENTS_FILE)?)?;
    write_stations_csv(&out.stations, create("chargers.csv")?)?;

    let manifest_path = out_dir.join("manifest.json");
    artifacts.push(manifest_path.clone());
    let manifest = RunManifest {
        seed: config.seed,
        config: config.clone(),
        dataset_rows: out.dataset_rows,
        dataset_sha256: out.dataset_sha256,
        correction_factor: out.correction_factor,
        day_origin_minute: out.day_origin,
        regression: out.regression,
        load_report: out.load_report,
        events_processed: out.stats.events_processed,
        runtime_seconds: started.elapsed().as_secs_f64(),
        artifacts,
    };
    serde_json::to_writer_pretty(BufWriter::new(File::create(manifest_path)?), &manifest)?;
    Ok(manifest)
}

/// Loads a CSV with the default columns and cleaning, then fits the
/// distance correction factor on a split seeded by `seed`.
pub fn fit_dataset(path: &Path, train_fraction: f64, seed: u64) -> Result<(LoadReport, RegressionReport)> {
    let (table, report) = load_trip_records(path, &ColumnMap::default(), &CleaningFilter::default())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((report, fit_correction_factor(&table, train_fraction, &mut rng)?))
}

/// Writes the synthetic trips described by `spec` as a CSV dataset and
/// returns the number of rows.
pub fn export_synthetic<W: std::io::Write>(spec: &GenSpec, out: W) -> Result<usize> {
    let date = NaiveDate::parse_from_str(&spec.date, "%Y-%m-%d")
        .map_err(|_| SimError::Config(format!("date must be YYYY-MM-DD, got `{}`", spec.date)))?;
    if !(0.0..1440.0).contains(&spec.start_minute_of_day) {
        return Err(SimError::Config("start_minute_of_day must be in [0, 1440)".into()));
    }
    let base = date.and_time(NaiveTime::MIN)
        + chrono::Duration::microseconds((spec.start_minute_of_day * 60e6).round() as i64);
    let model = DistanceModel::new(DistanceMode::Haversine, spec.correction_factor)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let table = generate_poisson_trips(
        &spec.trips(),
        spec.horizon_minutes,
        spec.start_minute_of_day,
        &model,
        &mut rng,
    )?;
    write_trip_csv(&table, out, base)?;
    Ok(table.len())
}

fn write_stations_csv<W: std::io::Write>(stations: &[ChargingStation], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["station", "lat", "lon", "posts"])?;
    for s in stations {
        w.write_record(&[
            s.id.0.to_string(),
            s.location.lat.to_string(),
            s.location.lon.to_string(),
            s.posts.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
