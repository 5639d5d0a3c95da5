//! Baseline volume model: additive Fourier seasonality plus a piecewise-linear
//! trend, both in log space, so volume = seasonal * trend.

mod fit;
mod tune;

pub use fit::{fit_seasonal, fit_trend_joint, SolverSettings};
pub use tune::{tune_hyperparameters, SearchSpace, TrialRecord, TuneOptions, TuneOutcome};

use std::f64::consts::PI;

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::series::TimeIndex;

/// Minutes in a week, the default seasonal period.
pub const WEEK_MINUTES: i64 = 10_080;

/// Default number of historical changepoints.
pub const DEFAULT_CHANGEPOINTS: usize = 25;

/// Fraction of the history window over which default changepoints are spread.
pub const CHANGEPOINT_RANGE: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonalSpec {
    pub harmonics: usize,
    pub period: i64,
    pub prior_scale: f64,
    pub noise_scale: f64,
}

impl SeasonalSpec {
    pub fn new(harmonics: usize, prior_scale: f64) -> Self {
        Self {
            harmonics,
            period: WEEK_MINUTES,
            prior_scale,
            noise_scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.harmonics < 1
            || self.period < 2
            || !(self.prior_scale > 0.0)
            || !(self.noise_scale > 0.0)
        {
            return Err(Error::Validation(format!(
                "invalid seasonal spec: H={}, L={}, prior scale={}, noise scale={}",
                self.harmonics, self.period, self.prior_scale, self.noise_scale
            )));
        }
        Ok(())
    }
}

/// Historical changepoints (offsets relative to the fit anchor, all `<= 0`)
/// and the Laplace prior scale on their rate adjustments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendSpec {
    pub changepoints: Vec<i64>,
    pub prior_scale: f64,
    pub history_len: usize,
}

impl TrendSpec {
    /// `count` changepoints spread uniformly over the first 80% of a history
    /// window `[-(history_len - 1), 0]`. Fewer are returned if the window is
    /// too short to keep them distinct.
    pub fn uniform(history_len: usize, count: usize, prior_scale: f64) -> Self {
        let m = history_len.saturating_sub(1) as f64;
        let span = CHANGEPOINT_RANGE * m;
        let mut changepoints: Vec<i64> = (1..=count)
            .map(|d| (-m + span * d as f64 / count as f64).round() as i64)
            .collect();
        changepoints.dedup();
        changepoints.retain(|&u| u > -(m as i64) && u < 0);
        Self {
            changepoints,
            prior_scale,
            history_len,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.history_len as i64 - 1;
        if m < 1 {
            return Err(Error::Validation("trend history needs at least 2 points".into()));
        }
        if !(self.prior_scale > 0.0) {
            return Err(Error::Validation(format!(
                "changepoint prior scale must be positive, got {}",
                self.prior_scale
            )));
        }
        if self.changepoints.len() >= self.history_len {
            return Err(Error::Validation(format!(
                "{} changepoints need more than {} history points",
                self.changepoints.len(),
                self.history_len
            )));
        }
        if self.changepoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Validation("changepoints must be strictly increasing".into()));
        }
        if let Some(&u) = self.changepoints.iter().find(|&&u| u < -m || u > 0) {
            return Err(Error::Validation(format!(
                "changepoint {u} outside history window [{}, 0]",
                -m
            )));
        }
        Ok(())
    }
}

/// Seasonality features `(cos(2πhm/L), sin(2πhm/L))` for `h = 1..=H`.
pub fn fourier_features(m: i64, harmonics: usize, period: i64) -> Vec<f64> {
    let mut out = vec![0.0; 2 * harmonics];
    fill_fourier(m, harmonics, period, &mut out);
    out
}

pub(crate) fn fill_fourier(m: i64, harmonics: usize, period: i64, out: &mut [f64]) {
    for h in 1..=harmonics {
        // reduce before scaling so whole periods map exactly onto zero phase
        let phase = (i128::from(m) * h as i128).rem_euclid(i128::from(period)) as f64;
        let (s, c) = (2.0 * PI * phase / period as f64).sin_cos();
        out[2 * (h - 1)] = c;
        out[2 * (h - 1) + 1] = s;
    }
}

/// Piecewise-linear log-trend parameters in per-minute units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendPath {
    pub changepoints: Vec<i64>,
    pub delta: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl TrendPath {
    pub fn new(changepoints: Vec<i64>, delta: Vec<f64>) -> Self {
        let gamma = changepoints
            .iter()
            .zip(&delta)
            .map(|(&u, &d)| -(u as f64) * d)
            .collect();
        Self {
            changepoints,
            delta,
            gamma,
        }
    }

    pub fn len(&self) -> usize {
        self.delta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delta.is_empty()
    }

    /// `(κ + aᵀδ)·m + aᵀγ + θ` with `a_d = [m >= u_d]`.
    pub fn log_trend(&self, kappa: f64, theta: f64, m: i64) -> f64 {
        let mut rate = kappa;
        let mut offset = theta;
        for ((&u, &d), &g) in self.changepoints.iter().zip(&self.delta).zip(&self.gamma) {
            if m >= u {
                rate += d;
                offset += g;
            }
        }
        rate * m as f64 + offset
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineModel {
    pub vendor_id: Option<String>,
    pub fit_anchor: TimeIndex,
    pub seasonal: SeasonalSpec,
    pub trend_spec: TrendSpec,
    /// Interleaved Fourier coefficients, length `2H`.
    pub beta: Vec<f64>,
    pub kappa: f64,
    pub trend: TrendPath,
    pub theta: f64,
    /// Value of the negative log-posterior at the fitted parameters.
    pub objective: f64,
}

impl BaselineModel {
    pub fn delta(&self) -> &[f64] {
        &self.trend.delta
    }

    pub fn gamma(&self) -> &[f64] {
        &self.trend.gamma
    }

    pub fn log_seasonal(&self, m: i64) -> f64 {
        let mut x = vec![0.0; self.beta.len()];
        fill_fourier(m, self.seasonal.harmonics, self.seasonal.period, &mut x);
        x.iter().zip(&self.beta).map(|(a, b)| a * b).sum()
    }

    /// Log-trend at offset `m`, using the sampled future path when given.
    pub fn log_trend(&self, m: i64, future: Option<&TrendPath>) -> f64 {
        future
            .unwrap_or(&self.trend)
            .log_trend(self.kappa, self.theta, m)
    }

    /// Expected volume at any offset relative to the fit anchor (in-sample
    /// offsets give fitted values).
    pub fn predict(&self, m: i64, future: Option<&TrendPath>) -> Result<f64> {
        let v = (self.log_seasonal(m) + self.log_trend(m, future)).exp();
        if !v.is_finite() || v <= 0.0 {
            return Err(Error::fit(format!(
                "baseline prediction at offset {m} is not a positive finite number"
            )));
        }
        Ok(v)
    }

    pub fn predict_epoch(&self, epoch_minute: i64) -> Result<f64> {
        self.predict(self.fit_anchor.offset_of(epoch_minute), None)
    }

    /// History length the model was fitted on minus one.
    pub fn history_span(&self) -> usize {
        self.trend_spec.history_len.saturating_sub(1)
    }
}

/// Expected baseline volume at future offset `m >= 1`.
pub fn predict_baseline(model: &BaselineModel, m: i64, future: Option<&TrendPath>) -> Result<f64> {
    if m < 1 {
        return Err(Error::Validation(format!(
            "forecast offset must be >= 1, got {m}"
        )));
    }
    model.predict(m, future)
}

/// Extends the fitted trend with random future changepoints: each future
/// minute becomes a changepoint with probability `D / (M + 1)`, drawing its
/// rate adjustment from the Laplace prior.
pub fn sample_future_changepoints(model: &BaselineModel, horizon: usize, seed: u64) -> Result<TrendPath> {
    if horizon < 1 {
        return Err(Error::Validation("horizon must be >= 1".into()));
    }
    let d = model.trend.len();
    let history_len = model.trend_spec.history_len.max(1);
    let p = d as f64 / history_len as f64;
    // The prior scale lives in standardized time; convert to per-minute rates.
    let scale = model.trend_spec.prior_scale / model.history_span().max(1) as f64;
    let mut rng = rng::StreamRng::seed_from_u64(seed);

    let mut changepoints = model.trend.changepoints.clone();
    let mut delta = model.trend.delta.clone();
    for m in 1..=horizon as i64 {
        changepoints.push(m);
        if rng::unit_closed_open(&mut rng) < p {
            delta.push(rng::laplace(&mut rng, scale));
        } else {
            delta.push(0.0);
        }
    }
    Ok(TrendPath::new(changepoints, delta))
}

#[derive(Serialize, Deserialize)]
struct BaselineModelDoc {
    vendor_id: Option<String>,
    anchor: i64,
    #[serde(rename = "H")]
    harmonics: usize,
    #[serde(rename = "L")]
    period: i64,
    sigma_prime: f64,
    sigma: f64,
    lambda: f64,
    history_length: usize,
    beta: Vec<f64>,
    kappa: f64,
    delta: Vec<f64>,
    gamma: Vec<f64>,
    theta: f64,
    changepoints: Vec<i64>,
    objective: f64,
}

impl Serialize for BaselineModel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        BaselineModelDoc {
            vendor_id: self.vendor_id.clone(),
            anchor: self.fit_anchor.anchor_epoch_minute,
            harmonics: self.seasonal.harmonics,
            period: self.seasonal.period,
            sigma_prime: self.seasonal.prior_scale,
            sigma: self.seasonal.noise_scale,
            lambda: self.trend_spec.prior_scale,
            history_length: self.trend_spec.history_len,
            beta: self.beta.clone(),
            kappa: self.kappa,
            delta: self.trend.delta.clone(),
            gamma: self.trend.gamma.clone(),
            theta: self.theta,
            changepoints: self.trend.changepoints.clone(),
            objective: self.objective,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for BaselineModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let doc = BaselineModelDoc::deserialize(d)?;
        if doc.beta.len() != 2 * doc.harmonics {
            return Err(D::Error::custom("beta length must be 2H"));
        }
        if doc.delta.len() != doc.changepoints.len() || doc.gamma.len() != doc.delta.len() {
            return Err(D::Error::custom("delta, gamma and changepoints must have equal length"));
        }
        Ok(BaselineModel {
            vendor_id: doc.vendor_id,
            fit_anchor: TimeIndex::new(doc.anchor),
            seasonal: SeasonalSpec {
                harmonics: doc.harmonics,
                period: doc.period,
                prior_scale: doc.sigma_prime,
                noise_scale: doc.sigma,
            },
            trend_spec: TrendSpec {
                changepoints: doc.changepoints.clone(),
                prior_scale: doc.lambda,
                history_len: doc.history_length,
            },
            beta: doc.beta,
            kappa: doc.kappa,
            trend: TrendPath {
                changepoints: doc.changepoints,
                delta: doc.delta,
                gamma: doc.gamma,
            },
            theta: doc.theta,
            objective: doc.objective,
        })
    }
}
