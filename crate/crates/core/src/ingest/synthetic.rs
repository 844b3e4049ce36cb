//! Poisson trip generator.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use super::{TripRecord, TripTable};
use crate::charging::minute_of_day;
use crate::error::{Result, SimError};
use crate::geo::{uniform_sphere_point, DistanceModel, GeoBox};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    /// Mean arrivals per minute (at profile weight 1).
    pub rate_per_minute: f64,
    pub region: GeoBox,
    /// Optional 24 hourly weights; the rate in hour `h` is `rate * w[h]`.
    #[serde(default)]
    pub hourly_profile: Option<Vec<f64>>,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.rate_per_minute.is_finite() && self.rate_per_minute > 0.0) {
            return Err(SimError::Config(format!(
                "rate_per_minute must be positive, got {}",
                self.rate_per_minute
            )));
        }
        self.region.validate()?;
        if let Some(p) = &self.hourly_profile {
            if p.len() != 24 || p.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
                return Err(SimError::Config(
                    "hourly_profile must hold 24 non-negative weights".into(),
                ));
            }
            if p.iter().all(|&w| w == 0.0) {
                return Err(SimError::Config("hourly_profile is all zero".into()));
            }
        }
        Ok(())
    }
}

/// Poisson arrivals over `[0, horizon]` with uniform origins and destinations
/// in the region. A diurnal profile is applied by thinning.
pub fn generate_poisson_trips<R: Rng + ?Sized>(
    spec: &SyntheticSpec,
    horizon: f64,
    day_origin: f64,
    distance: &DistanceModel,
    rng: &mut R,
) -> Result<TripTable> {
    spec.validate()?;
    let peak = spec
        .hourly_profile
        .as_ref()
        .map_or(1.0, |p| p.iter().copied().fold(0.0, f64::max));
    let gaps = Exp::new(spec.rate_per_minute * peak)
        .map_err(|e| SimError::Config(format!("bad arrival rate: {e}")))?;
    let mut records = Vec::new();
    let mut t = 0.0;
    loop {
        t += gaps.sample(rng);
        if t > horizon {
            break;
        }
        if let Some(p) = &spec.hourly_profile {
            let hour = (minute_of_day(t, day_origin) / 60.0) as usize;
            if rng.random::<f64>() >= p[hour.min(23)] / peak {
                continue;
            }
        }
        let origin = uniform_sphere_point(rng, Some(&spec.region));
        let destination = uniform_sphere_point(rng, Some(&spec.region));
        records.push(TripRecord {
            arrival_time: t,
            origin,
            destination,
            recorded_distance: Some(distance.distance(&origin, &destination)),
            duration_minutes: None,
        });
    }
    Ok(TripTable::new(records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec(rate: f64) -> SyntheticSpec {
        SyntheticSpec {
            rate_per_minute: rate,
            region: GeoBox {
                lat_min: 40.70,
                lat_max: 40.80,
                lon_min: -74.02,
                lon_max: -73.92,
            },
            hourly_profile: None,
        }
    }

    #[test]
    fn count_matches_poisson_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let t = generate_poisson_trips(&spec(2.0), 1000.0, 0.0, &DistanceModel::default(), &mut rng).unwrap();
        let sd = 2000f64.sqrt();
        assert!((t.len() as f64 - 2000.0).abs() <= 3.0 * sd, "{}", t.len());
        assert!(t.iter().all(|r| spec(2.0).region.contains(&r.origin)));
    }

    #[test]
    fn zero_horizon_is_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = generate_poisson_trips(&spec(2.0), 0.0, 0.0, &DistanceModel::default(), &mut rng).unwrap();
        assert!(t.is_empty());
    }

    #[test]
    fn same_seed_same_table() {
        let gen = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            generate_poisson_trips(&spec(0.5), 500.0, 0.0, &DistanceModel::default(), &mut rng).unwrap()
        };
        assert_eq!(gen(3), gen(3));
        assert_ne!(gen(3), gen(4));
    }

    #[test]
    fn rejects_nonpositive_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(generate_poisson_trips(&spec(0.0), 10.0, 0.0, &DistanceModel::default(), &mut rng).is_err());
    }

    #[test]
    fn profile_thins_quiet_hours() {
        let mut s = spec(1.0);
        let mut profile = vec![0.0; 24];
        profile[1] = 1.0;
        s.hourly_profile = Some(profile);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = generate_poisson_trips(&s, 1440.0, 0.0, &DistanceModel::default(), &mut rng).unwrap();
        assert!(t.iter().all(|r| (60.0..120.0).contains(&r.arrival_time)));
        assert!((t.len() as f64 - 60.0).abs() < 4.0 * 60f64.sqrt());
    }
}
