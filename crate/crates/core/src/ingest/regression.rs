//! Calibration of the street-network correction factor.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::TripTable;
use crate::error::{Result, SimError};
use crate::geo::haversine_miles;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    /// Used as the distance correction factor.
    pub slope: f64,
    pub intercept: f64,
    /// On the training split.
    pub r_squared: f64,
    /// On the held-out split; absent when it is empty.
    pub test_mse: Option<f64>,
    pub train_fraction: f64,
    pub n_train: usize,
    pub n_test: usize,
}

/// Ordinary least squares `y = slope * x + intercept`. Returns `None` when
/// `x` has no variance.
pub fn ols(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len() as f64;
    if x.len() < 2 || x.len() != y.len() {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (&xi, &yi) in x.iter().zip(y) {
        sxy += (xi - mx) * (yi - my);
        sxx += (xi - mx) * (xi - mx);
    }
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Regresses recorded distance on haversine distance over a seeded random
/// train/test partition.
pub fn fit_correction_factor<R: Rng + ?Sized>(
    table: &TripTable,
    train_fraction: f64,
    rng: &mut R,
) -> Result<RegressionReport> {
    if !(train_fraction > 0.0 && train_fraction <= 1.0) {
        return Err(SimError::Argument(format!(
            "train fraction must be in (0, 1], got {train_fraction}"
        )));
    }
    let mut pairs: Vec<(f64, f64)> = table
        .iter()
        .filter_map(|r| Some((haversine_miles(&r.origin, &r.destination), r.recorded_distance?)))
        .collect();
    pairs.shuffle(rng);
    let n_train = ((pairs.len() as f64) * train_fraction).round() as usize;
    if n_train < 2 {
        return Err(SimError::Argument(format!(
            "need at least 2 training rows with recorded distance, have {n_train}"
        )));
    }
    let (train, test) = pairs.split_at(n_train);
    let (x, y): (Vec<f64>, Vec<f64>) = train.iter().copied().unzip();
    if x.iter().all(|&h| h == 0.0) {
        return Err(SimError::DegenerateFit("all haversine distances are zero".into()));
    }
    let (slope, intercept) =
        ols(&x, &y).ok_or_else(|| SimError::DegenerateFit("haversine distances have no variance".into()))?;

    let predict = |h: f64| slope * h + intercept;
    let my = y.iter().sum::<f64>() / y.len() as f64;
    let ss_res: f64 = x.iter().zip(&y).map(|(&h, &d)| (d - predict(h)).powi(2)).sum();
    let ss_tot: f64 = y.iter().map(|&d| (d - my).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    } else {
        1.0
    };
    let test_mse = (!test.is_empty())
        .then(|| test.iter().map(|&(h, d)| (d - predict(h)).powi(2)).sum::<f64>() / test.len() as f64);

    Ok(RegressionReport {
        slope,
        intercept,
        r_squared,
        test_mse,
        train_fraction,
        n_train,
        n_test: test.len(),
    })
}
