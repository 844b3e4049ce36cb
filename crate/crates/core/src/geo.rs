//! Distance, travel-time, and energy arithmetic.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::VehicleParams;
use crate::error::{Result, SimError};

/// Mean Earth radius.
pub const EARTH_RADIUS_MILES: f64 = 3958.8;

const MINUTES_PER_HOUR: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub const fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }

    pub fn is_valid(&self) -> bool {
        (-90.0..=90.0).contains(&self.lat) && (-180.0..=180.0).contains(&self.lon)
    }

    /// Straight-line interpolation in lat/lon; `f = 0` is `self`, `f = 1` is `to`.
    pub fn lerp(&self, to: &GeoPoint, f: f64) -> GeoPoint {
        GeoPoint {
            lat: self.lat + (to.lat - self.lat) * f,
            lon: self.lon + (to.lon - self.lon) * f,
        }
    }
}

/// Axis-aligned lat/lon rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoBox {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl GeoBox {
    pub fn contains(&self, p: &GeoPoint) -> bool {
        p.lat >= self.lat_min && p.lat <= self.lat_max && p.lon >= self.lon_min && p.lon <= self.lon_max
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.lat_min < self.lat_max
            && self.lon_min < self.lon_max
            && GeoPoint::new(self.lat_min, self.lon_min).is_valid()
            && GeoPoint::new(self.lat_max, self.lon_max).is_valid();
        if ok {
            Ok(())
        } else {
            Err(SimError::Config(format!("invalid bounding box {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMode {
    #[default]
    Haversine,
    Manhattan,
}

/// Base metric scaled by a street-geometry correction factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceModel {
    pub mode: DistanceMode,
    pub correction_factor: f64,
}

impl Default for DistanceModel {
    fn default() -> Self {
        Self {
            mode: DistanceMode::Haversine,
            correction_factor: 1.0,
        }
    }
}

impl DistanceModel {
    pub fn new(mode: DistanceMode, correction_factor: f64) -> Result<Self> {
        if !(correction_factor.is_finite() && correction_factor > 0.0) {
            return Err(SimError::Config(format!(
                "correction factor must be positive, got {correction_factor}"
            )));
        }
        Ok(Self {
            mode,
            correction_factor,
        })
    }

    #[inline]
    pub fn distance(&self, a: &GeoPoint, b: &GeoPoint) -> f64 {
        corrected_distance(a, b, self)
    }
}

/// Great-circle distance in miles.
pub fn haversine_miles(a: &GeoPoint, b: &GeoPoint) -> f64 {
    let phi1 = a.lat.to_radians();
    let phi2 = b.lat.to_radians();
    let dphi = (b.lat - a.lat).to_radians();
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_MILES * h.sqrt().min(1.0).asin()
}

/// L1 distance along the meridian and the parallel at the mean latitude.
pub fn manhattan_miles(a: &GeoPoint, b: &GeoPoint) -> f64 {
    let mean_lat = ((a.lat + b.lat) / 2.0).to_radians();
    let north = EARTH_RADIUS_MILES * (b.lat - a.lat).to_radians().abs();
    let east = EARTH_RADIUS_MILES * mean_lat.cos() * (b.lon - a.lon).to_radians().abs();
    north + east
}

pub fn corrected_distance(a: &GeoPoint, b: &GeoPoint, model: &DistanceModel) -> f64 {
    let base = match model.mode {
        DistanceMode::Haversine => haversine_miles(a, b),
        DistanceMode::Manhattan => manhattan_miles(a, b),
    };
    base * model.correction_factor
}

pub fn travel_time_minutes(distance_miles: f64, velocity_mph: f64) -> Result<f64> {
    if !(velocity_mph.is_finite() && velocity_mph > 0.0) {
        return Err(SimError::Config(format!(
            "velocity must be positive, got {velocity_mph}"
        )));
    }
    Ok(MINUTES_PER_HOUR * distance_miles / velocity_mph)
}

/// SoC fraction consumed driving `distance_miles`.
#[inline]
pub fn soc_drop(distance_miles: f64, params: &VehicleParams) -> f64 {
    distance_miles * params.consumption_wh_per_mile / (params.battery_kwh * 1000.0)
}

/// Minutes to charge from `from_soc` to `to_soc` at constant power.
pub fn charge_duration_minutes(from_soc: f64, to_soc: f64, params: &VehicleParams) -> Result<f64> {
    if !(0.0..=1.0).contains(&from_soc) || !(0.0..=1.0).contains(&to_soc) || to_soc < from_soc {
        return Err(SimError::Argument(format!(
            "charge window must satisfy 0 <= from <= to <= 1, got {from_soc} -> {to_soc}"
        )));
    }
    Ok(MINUTES_PER_HOUR * (to_soc - from_soc) * params.battery_kwh / params.charge_rate_kw)
}

/// SoC fraction gained after charging for `minutes`.
#[inline]
pub fn soc_gain(minutes: f64, params: &VehicleParams) -> f64 {
    minutes * params.charge_rate_kw / (MINUTES_PER_HOUR * params.battery_kwh)
}

/// Latitude (degrees) from a uniform draw, so that points are area-uniform.
#[inline]
pub fn latitude_from_unit(u: f64) -> f64 {
    (2.0 * u - 1.0).clamp(-1.0, 1.0).asin().to_degrees()
}

/// Area-uniform point on the sphere, or on the spherical patch `region`.
///
/// Restricting `u` to the band whose latitudes fall inside the region gives
/// the same distribution as rejection sampling against the box, without the
/// rejection cost for small city-scale boxes.
pub fn uniform_sphere_point<R: Rng + ?Sized>(rng: &mut R, region: Option<&GeoBox>) -> GeoPoint {
    match region {
        None => {
            let lon = rng.random_range(-180.0..180.0);
            let lat = latitude_from_unit(rng.random::<f64>());
            GeoPoint { lat, lon }
        }
        Some(b) => {
            let u_lo = (b.lat_min.to_radians().sin() + 1.0) / 2.0;
            let u_hi = (b.lat_max.to_radians().sin() + 1.0) / 2.0;
            let u = u_lo + (u_hi - u_lo) * rng.random::<f64>();
            let lat = latitude_from_unit(u).clamp(b.lat_min, b.lat_max);
            let lon = b.lon_min + (b.lon_max - b.lon_min) * rng.random::<f64>();
            GeoPoint { lat, lon }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params() -> VehicleParams {
        VehicleParams::default()
    }

    #[test]
    fn haversine_identity() {
        let p = GeoPoint::new(40.75, -73.98);
        assert_eq!(haversine_miles(&p, &p), 0.0);
    }

    #[test]
    fn one_degree_on_equator_matches_arc_length() {
        let oracle = 2.0 * std::f64::consts::PI * EARTH_RADIUS_MILES / 360.0;
        let d = haversine_miles(&GeoPoint::new(0.0, 0.0), &GeoPoint::new(0.0, 1.0));
        assert!((d - oracle).abs() < 1e-9, "{d} vs {oracle}");
        assert!((d - 69.097).abs() < 0.01);
    }

    #[test]
    fn antipodal_is_half_circumference() {
        let oracle = std::f64::consts::PI * EARTH_RADIUS_MILES;
        let d = haversine_miles(&GeoPoint::new(0.0, 0.0), &GeoPoint::new(0.0, 180.0));
        assert!((d - oracle).abs() < 1e-6);
        assert!((d - 12436.93).abs() < 0.01);
    }

    #[test]
    fn correction_factor_scales() {
        let a = GeoPoint::new(0.0, 0.0);
        // 2 miles of arc due north
        let b = GeoPoint::new((2.0 / EARTH_RADIUS_MILES).to_degrees(), 0.0);
        let m = DistanceModel::new(DistanceMode::Haversine, 1.3).unwrap();
        assert!((corrected_distance(&a, &b, &m) - 2.6).abs() < 1e-9);
        let id = DistanceModel::default();
        assert_eq!(corrected_distance(&a, &b, &id), haversine_miles(&a, &b));
    }

    #[test]
    fn manhattan_hand_computed() {
        // (40.0, -74.0) -> (40.1, -73.9): north leg 0.1 deg, east leg 0.1 deg at 40.05 N.
        let a = GeoPoint::new(40.0, -74.0);
        let b = GeoPoint::new(40.1, -73.9);
        let deg = EARTH_RADIUS_MILES * std::f64::consts::PI / 180.0;
        let north = 0.1 * deg;
        let east = 0.1 * deg * (40.05f64).to_radians().cos();
        let m = DistanceModel::new(DistanceMode::Manhattan, 1.2).unwrap();
        let got = corrected_distance(&a, &b, &m);
        assert!((got - 1.2 * (north + east)).abs() < 1e-9, "{got}");
        assert!(manhattan_miles(&a, &b) >= haversine_miles(&a, &b));
    }

    #[test]
    fn rejects_non_positive_factor() {
        assert!(DistanceModel::new(DistanceMode::Haversine, 0.0).is_err());
        assert!(DistanceModel::new(DistanceMode::Haversine, -2.0).is_err());
    }

    #[test]
    fn travel_times() {
        assert!((travel_time_minutes(11.21, 11.21).unwrap() - 60.0).abs() < 1e-12);
        assert_eq!(travel_time_minutes(0.0, 11.21).unwrap(), 0.0);
        let t = travel_time_minutes(3.32, 11.21).unwrap();
        assert!((t - 60.0 * 3.32 / 11.21).abs() < 1e-12);
        assert!((t - 17.77).abs() < 0.01);
        assert!(travel_time_minutes(1.0, 0.0).is_err());
        assert!(travel_time_minutes(1.0, -3.0).is_err());
    }

    #[test]
    fn soc_drop_values() {
        let p = params();
        assert!((soc_drop(3.32, &p) - 3.32 * 230.0 / 51250.0).abs() < 1e-15);
        assert!((soc_drop(3.32, &p) - 0.014900).abs() < 1e-6);
        assert_eq!(soc_drop(0.0, &p), 0.0);
        let full_range = 51250.0 / 230.0;
        assert!((soc_drop(full_range, &p) - 1.0).abs() < 1e-12);
        assert!((full_range - 222.8).abs() < 0.1);
    }

    #[test]
    fn charge_durations() {
        let p = params();
        assert!((charge_duration_minutes(0.5, 1.0, &p).unwrap() - 76.875).abs() < 1e-12);
        assert_eq!(charge_duration_minutes(0.3, 0.3, &p).unwrap(), 0.0);
        assert!((charge_duration_minutes(0.0, 1.0, &p).unwrap() - 153.75).abs() < 1e-12);
        assert!(matches!(
            charge_duration_minutes(0.8, 0.5, &p),
            Err(SimError::Argument(_))
        ));
        assert!(charge_duration_minutes(-0.1, 0.5, &p).is_err());
    }

    #[test]
    fn interrupted_charge_gain() {
        let p = params();
        let soc = 0.5 + soc_gain(30.0, &p);
        assert!((soc - (0.5 + 30.0 * 20.0 / (60.0 * 51.25))).abs() < 1e-15);
        assert!((soc - 0.6951).abs() < 1e-4);
    }

    #[test]
    fn latitude_symmetry() {
        assert_eq!(latitude_from_unit(0.5), 0.0);
        assert_eq!(latitude_from_unit(1.0), 90.0);
        assert_eq!(latitude_from_unit(0.0), -90.0);
    }

    #[test]
    fn sphere_sampling_is_area_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let mean_sin: f64 = (0..n)
            .map(|_| uniform_sphere_point(&mut rng, None).lat.to_radians().sin())
            .sum::<f64>()
            / n as f64;
        assert!(mean_sin.abs() < 0.01, "{mean_sin}");
    }

    #[test]
    fn boxed_sampling_stays_inside() {
        let b = GeoBox {
            lat_min: 40.57,
            lat_max: 40.88,
            lon_min: -74.04,
            lon_max: -73.75,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let p = uniform_sphere_point(&mut rng, Some(&b));
            assert!(b.contains(&p), "{p:?}");
        }
    }

    #[test]
    fn lerp_midpoint() {
        let a = GeoPoint::new(0.0, 0.0);
        let b = GeoPoint::new(1.0, -2.0);
        assert_eq!(a.lerp(&b, 0.5), GeoPoint::new(0.5, -1.0));
        assert_eq!(a.lerp(&b, 0.0), a);
        assert_eq!(a.lerp(&b, 1.0), b);
    }
}
