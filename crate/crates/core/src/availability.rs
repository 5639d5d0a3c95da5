//! Double exponential smoothing of the problematic vendor's availability.

use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};
use crate::series::AvailabilitySeries;

pub const DEFAULT_TRIALS: usize = 256;
pub const DEFAULT_WINDOW: usize = 10;
pub const DEFAULT_HORIZON: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesModel {
    pub alpha: f64,
    pub eta: f64,
    /// Smoothing component at the last fitted minute.
    #[serde(rename = "S0")]
    pub level: f64,
    /// Trend component at the last fitted minute.
    #[serde(rename = "b0")]
    pub trend: f64,
    /// Fitted offset range, inclusive.
    pub window: (i64, i64),
    pub fit_rmse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesRun {
    pub level: Vec<f64>,
    pub trend: Vec<f64>,
    pub rmse: f64,
}

/// Runs the smoothing recursions from `S = a[0]`, `b = a[1] - a[0]` and
/// scores `a[m] - S[m] - b[m]` over every point.
pub fn des_run(obs: &[f64], alpha: f64, eta: f64) -> Result<DesRun> {
    if obs.len() < 2 {
        return Err(Error::fit(
            "double exponential smoothing needs at least two observations",
        ));
    }
    if !(0.0..=1.0).contains(&alpha) || !(0.0..=1.0).contains(&eta) {
        return Err(Error::Validation(format!(
            "smoothing factors must lie in [0, 1], got alpha={alpha}, eta={eta}"
        )));
    }
    let mut level = Vec::with_capacity(obs.len());
    let mut trend = Vec::with_capacity(obs.len());
    level.push(obs[0]);
    trend.push(obs[1] - obs[0]);
    for &a in &obs[1..] {
        let (s_prev, b_prev) = (*level.last().unwrap(), *trend.last().unwrap());
        let s = alpha * a + (1.0 - alpha) * (s_prev + b_prev);
        let b = eta * (s - s_prev) + (1.0 - eta) * b_prev;
        level.push(s);
        trend.push(b);
    }
    let sq: f64 = obs
        .iter()
        .zip(level.iter().zip(&trend))
        .map(|(a, (s, b))| (a - s - b).powi(2))
        .sum();
    Ok(DesRun {
        level,
        trend,
        rmse: (sq / obs.len() as f64).sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesTrial {
    pub alpha: f64,
    pub eta: f64,
    pub rmse: f64,
}

const CORNERS: [(f64, f64); 4] = [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)];

/// Random search over `(α, η) ∈ [0, 1]²`: `trials` uniform pairs followed by
/// the four corners. Returns the best model and the full trial log; ties go
/// to the lowest trial index.
pub fn des_search(obs: &AvailabilitySeries, trials: usize, seed: u64) -> Result<(DesModel, Vec<DesTrial>)> {
    if trials < 1 {
        return Err(Error::Validation("at least one trial is required".into()));
    }
    let values = obs.series().values();
    if values.len() < 2 {
        return Err(Error::fit("availability window needs at least two points"));
    }
    let mut rng = StreamRng::seed_from_u64(seed);
    let mut pairs: Vec<(f64, f64)> = (0..trials)
        .map(|_| {
            let a = rng::unit_closed_open(&mut rng);
            let e = rng::unit_closed_open(&mut rng);
            (a, e)
        })
        .collect();
    pairs.extend(CORNERS);

    let log: Vec<DesTrial> = pairs
        .par_iter()
        .map(|&(alpha, eta)| {
            des_run(values, alpha, eta).map(|r| DesTrial {
                alpha,
                eta,
                rmse: r.rmse,
            })
        })
        .collect::<Result<_>>()?;

    let mut best = 0;
    for (i, t) in log.iter().enumerate() {
        if t.rmse < log[best].rmse {
            best = i;
        }
    }
    let winner = log[best];
    let run = des_run(values, winner.alpha, winner.eta)?;
    let model = DesModel {
        alpha: winner.alpha,
        eta: winner.eta,
        level: *run.level.last().unwrap(),
        trend: *run.trend.last().unwrap(),
        window: (obs.series().start(), obs.series().end()),
        fit_rmse: run.rmse,
    };
    Ok((model, log))
}

pub fn des_fit(obs: &AvailabilitySeries, trials: usize, seed: u64) -> Result<DesModel> {
    des_search(obs, trials, seed).map(|(m, _)| m)
}

/// Unclamped `S0 + m·b0`.
pub fn des_forecast_raw(model: &DesModel, m: i64) -> f64 {
    model.level + m as f64 * model.trend
}

/// Availability forecast `m` minutes past the fitted window, clamped to
/// `[0, 1]` since it is consumed as a probability.
pub fn des_forecast(model: &DesModel, m: i64) -> f64 {
    des_forecast_raw(model, m).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RollingPoint {
    /// Offset of the last observation in the fitted window.
    pub window_end: i64,
    pub alpha: f64,
    pub eta: f64,
    pub horizon_rmse: f64,
}

/// Rolling-origin validation: fit on each `window + 1` point window, forecast
/// the next `horizon` minutes and score them against the actuals.
pub fn rolling_validate(
    obs: &AvailabilitySeries,
    window: usize,
    horizon: usize,
    trials: usize,
    seed: u64,
) -> Result<Vec<RollingPoint>> {
    let values = obs.series().values();
    if window < 1 || horizon < 1 {
        return Err(Error::Validation("window and horizon must be positive".into()));
    }
    if values.len() < window + horizon + 1 {
        return Err(Error::Validation(format!(
            "series of {} points is too short for window {window} and horizon {horizon}",
            values.len()
        )));
    }
    let start = obs.series().start();
    (window..values.len() - horizon)
        .into_par_iter()
        .map(|end| {
            let slice = obs.series().slice(start + (end - window) as i64, start + end as i64)?;
            let fit_obs = AvailabilitySeries::new(obs.vendor_id.clone(), slice)?;
            let window_seed = rng::substream_seed(seed, &format!("rolling/{end}"));
            let model = des_fit(&fit_obs, trials, window_seed)?;
            let sq: f64 = (1..=horizon)
                .map(|k| (values[end + k] - des_forecast(&model, k as i64)).powi(2))
                .sum();
            Ok(RollingPoint {
                window_end: start + end as i64,
                alpha: model.alpha,
                eta: model.eta,
                horizon_rmse: (sq / horizon as f64).sqrt(),
            })
        })
        .collect()
}
