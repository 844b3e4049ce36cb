//! Scenario configuration, read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::charging::ChargingConfig;
use crate::dispatch::MatchingConfig;
use crate::domain::VehicleParams;
use crate::error::{Result, SimError};
use crate::geo::{DistanceMode, DistanceModel, GeoBox};
use crate::ingest::{CleaningFilter, ColumnMap, SyntheticSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VehiclePlacement {
    /// Uniformly, with replacement, from trip origins.
    #[default]
    SampleOrigins,
    UniformBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FleetConfig {
    pub size: usize,
    pub placement: VehiclePlacement,
    /// Box for `uniform_box`; defaults to the dataset region.
    pub region: Option<GeoBox>,
}

impl Default for FleetConfig {
    fn default() -> Self {
        Self {
            size: 2101,
            placement: VehiclePlacement::SampleOrigins,
            region: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChargerPlacement {
    #[default]
    UniformInBox,
    /// Uniformly from trip origins that fall inside the percentile bounds.
    SampleFromOrigins,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChargerConfig {
    pub count: usize,
    pub posts: u32,
    pub placement: ChargerPlacement,
    pub lat_percentiles: (f64, f64),
    pub lon_percentiles: (f64, f64),
    /// Box for `uniform_in_box`; defaults to the dataset region, or to the
    /// percentile box of trip origins.
    pub region: Option<GeoBox>,
}

impl Default for ChargerConfig {
    fn default() -> Self {
        Self {
            count: 270,
            posts: 4,
            placement: ChargerPlacement::UniformInBox,
            lat_percentiles: (0.5, 99.5),
            lon_percentiles: (0.5, 99.5),
            region: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeoConfig {
    pub mode: DistanceMode,
    pub correction_factor: f64,
    /// Replace `correction_factor` with the slope fitted on the dataset.
    pub fit_correction: bool,
    pub train_fraction: f64,
}

impl Default for GeoConfig {
    fn default() -> Self {
        Self {
            mode: DistanceMode::Haversine,
            correction_factor: 1.0,
            fit_correction: false,
            train_fraction: 0.8,
        }
    }
}

impl GeoConfig {
    pub fn model(&self) -> Result<DistanceModel> {
        DistanceModel::new(self.mode, self.correction_factor)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    Synthetic(SyntheticSpec),
    Csv {
        path: PathBuf,
        #[serde(default)]
        columns: ColumnMap,
        #[serde(default)]
        filter: CleaningFilter,
    },
}

impl DatasetConfig {
    pub fn region(&self) -> Option<GeoBox> {
        match self {
            DatasetConfig::Synthetic(s) => Some(s.region),
            DatasetConfig::Csv { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub timeseries_resolution_minutes: f64,
    pub histogram_bin_minutes: f64,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            timeseries_resolution_minutes: 1.0,
            histogram_bin_minutes: 1.0,
        }
    }
}

fn default_initial_soc() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub horizon_minutes: f64,
    /// Minute-of-day at t = 0. CSV datasets default to their first pickup,
    /// synthetic ones to midnight.
    #[serde(default)]
    pub start_minute_of_day: Option<f64>,
    #[serde(default = "default_initial_soc")]
    pub initial_soc: f64,
    /// Check model invariants after every event.
    #[serde(default)]
    pub check_invariants: bool,
    #[serde(default)]
    pub fleet: FleetConfig,
    #[serde(default)]
    pub vehicle: VehicleParams,
    #[serde(default)]
    pub chargers: ChargerConfig,
    #[serde(default)]
    pub geo: GeoConfig,
    #[serde(default)]
    pub matching: MatchingConfig,
    #[serde(default)]
    pub charging: ChargingConfig,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config file. A relative dataset path is taken
    /// relative to the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let DatasetConfig::Csv { path: data, .. } = &mut cfg.dataset {
            if data.is_relative() {
                if let Some(dir) = path.parent() {
                    *data = dir.join(&*data);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always serialisable")
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(SimError::Config(m));
        if !(self.horizon_minutes.is_finite() && self.horizon_minutes >= 0.0) {
            return fail(format!("horizon_minutes must be >= 0, got {}", self.horizon_minutes));
        }
        if let Some(m) = self.start_minute_of_day {
            if !(0.0..1440.0).contains(&m) {
                return fail(format!("start_minute_of_day must be in [0, 1440), got {m}"));
            }
        }
        if !(0.0..=1.0).contains(&self.initial_soc) {
            return fail(format!("initial_soc must be in [0, 1], got {}", self.initial_soc));
        }
        if self.fleet.size == 0 {
            return fail("fleet.size must be positive".into());
        }
        if self.fleet.size > u32::MAX as usize || self.chargers.count > u32::MAX as usize {
            return fail("fleet or charger count too large".into());
        }
        if self.fleet.placement == VehiclePlacement::UniformBox
            && self.fleet.region.or(self.dataset.region()).is_none()
        {
            return fail("fleet.placement = uniform_box needs fleet.region".into());
        }
        if let Some(b) = &self.fleet.region {
            b.validate()?;
        }
        if self.chargers.count == 0 {
            return fail("chargers.count must be positive".into());
        }
        if self.chargers.posts == 0 {
            return fail("chargers.posts must be positive".into());
        }
        for (name, (lo, hi)) in [
            ("lat", self.chargers.lat_percentiles),
            ("lon", self.chargers.lon_percentiles),
        ] {
            if !(0.0 <= lo && lo < hi && hi <= 100.0) {
                return fail(format!("chargers.{name}_percentiles must satisfy 0 <= lower < upper <= 100"));
            }
        }
        if let Some(b) = &self.chargers.region {
            b.validate()?;
        }
        self.vehicle.validate()?;
        self.geo.model()?;
        if !(self.geo.train_fraction > 0.0 && self.geo.train_fraction <= 1.0) {
            return fail("geo.train_fraction must be in (0, 1]".into());
        }
        self.matching.validate()?;
        self.charging.validate()?;
        match &self.dataset {
            DatasetConfig::Synthetic(s) => s.validate()?,
            DatasetConfig::Csv { filter, .. } => filter.validate()?,
        }
        if !(self.output.timeseries_resolution_minutes > 0.0 && self.output.histogram_bin_minutes > 0.0) {
            return fail("output resolutions must be positive".into());
        }
        Ok(())
    }
}

/// Input to the synthetic-dataset exporter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenSpec {
    pub seed: u64,
    pub horizon_minutes: f64,
    #[serde(default)]
    pub start_minute_of_day: f64,
    /// Recorded distance is haversine times this factor.
    #[serde(default = "default_factor")]
    pub correction_factor: f64,
    /// Date of t = 0, `YYYY-MM-DD`.
    #[serde(default = "default_date")]
    pub date: String,
    pub rate_per_minute: f64,
    pub region: GeoBox,
    #[serde(default)]
    pub hourly_profile: Option<Vec<f64>>,
}

impl GenSpec {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(toml::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn trips(&self) -> SyntheticSpec {
        SyntheticSpec {
            rate_per_minute: self.rate_per_minute,
            region: self.region,
            hourly_profile: self.hourly_profile.clone(),
        }
    }
}

fn default_factor() -> f64 {
    1.0
}

fn default_date() -> String {
    "2024-01-01".into()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charging::ScheduleSpec;
    use crate::dispatch::MatchingKind;

    const MINIMAL: &str = r#"
seed = 7
horizon_minutes = 1440.0

[dataset]
kind = "synthetic"
rate_per_minute = 2.0
region = { lat_min = 40.70, lat_max = 40.80, lon_min = -74.02, lon_max = -73.92 }
"#;

    #[test]
    fn defaults_fill_in() {
        let cfg = ScenarioConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(cfg.fleet.size, 2101);
        assert_eq!(cfg.chargers.count, 270);
        assert_eq!(cfg.chargers.posts, 4);
        assert_eq!(cfg.initial_soc, 1.0);
        assert_eq!(cfg.vehicle, VehicleParams::default());
        assert_eq!(cfg.matching.kind, MatchingKind::PowerOfD);
        assert_eq!(cfg.charging.schedule, ScheduleSpec::Always);
    }

    #[test]
    fn full_sections_parse() {
        let text = format!(
            "{MINIMAL}\n[matching]\nkind = \"power_of_d\"\nd = 5\nadaptive = {{ period_trips = 1000 }}\n\
             [charging]\nschedule = \"night\"\nalpha = 1.0\ninterrupt = false\n\
             [fleet]\nsize = 10\n[chargers]\ncount = 2\nplacement = \"sample_from_origins\"\n"
        );
        let cfg = ScenarioConfig::from_toml_str(&text).unwrap();
        assert_eq!(cfg.matching.adaptive.unwrap().period_trips, 1000);
        assert_eq!(cfg.charging.schedule, ScheduleSpec::Night);
        assert!(!cfg.charging.interrupt);
        assert_eq!(cfg.chargers.placement, ChargerPlacement::SampleFromOrigins);
    }

    #[test]
    fn custom_schedule_parses() {
        let text = format!("{MINIMAL}\n[charging]\nschedule = {{ custom = [[0.0, 0.9], [600.0, 0.3]] }}\n");
        let cfg = ScenarioConfig::from_toml_str(&text).unwrap();
        assert_eq!(cfg.charging.schedule, ScheduleSpec::Custom(vec![(0.0, 0.9), (600.0, 0.3)]));
    }

    #[test]
    fn rejects_bad_values() {
        for extra in [
            "[chargers]\ncount = 0\n",
            "[fleet]\nsize = 0\n",
            "[charging]\nalpha = 1.5\n",
            "[matching]\nd = 0.5\n",
            "[vehicle]\nbattery_kwh = -1.0\n",
            "[matching]\nbogus = 1\n",
        ] {
            let text = format!("{MINIMAL}\n{extra}");
            assert!(ScenarioConfig::from_toml_str(&text).is_err(), "{extra}");
        }
    }

    #[test]
    fn csv_dataset_parses() {
        let text = r#"
seed = 1
horizon_minutes = 60.0
[dataset]
kind = "csv"
path = "trips.csv"
filter = { lat_percentiles = [1.0, 99.0] }
"#;
        let cfg = ScenarioConfig::from_toml_str(text).unwrap();
        match cfg.dataset {
            DatasetConfig::Csv { path, filter, columns } => {
                assert_eq!(path, PathBuf::from("trips.csv"));
                assert_eq!(filter.lat_percentiles, (1.0, 99.0));
                assert_eq!(columns, ColumnMap::default());
            }
            _ => panic!("expected csv"),
        }
    }

    #[test]
    fn toml_round_trip() {
        let cfg = ScenarioConfig::from_toml_str(MINIMAL).unwrap();
        let again = ScenarioConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(cfg, again);
    }
}
