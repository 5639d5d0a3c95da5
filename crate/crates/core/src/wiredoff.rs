//! Wired-off volume model: after the problematic vendor is disabled, total
//! volume is the other vendors' baseline plus a fixed share `Δ` of the
//! disabled vendor's baseline.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::MinuteSeries;

/// MacKinnon critical values for the constant-only ADF regression.
pub const ADF_CRITICAL_1: f64 = -3.43;
pub const ADF_CRITICAL_5: f64 = -2.86;
pub const ADF_CRITICAL_10: f64 = -2.57;
pub const ADF_MIN_LEN: usize = 25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WiredOffModel {
    pub delta: f64,
    /// Minute offsets (or epoch minutes) of the historical fit window.
    pub fit_window: Vec<i64>,
    pub residuals: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics_summary: Option<serde_json::Value>,
}

impl WiredOffModel {
    /// The slope is not constrained; values outside `[0, 1]` suggest misfit.
    pub fn delta_in_unit_interval(&self) -> bool {
        (0.0..=1.0).contains(&self.delta)
    }
}

/// Through-origin least-squares slope of `W_off − Ĉ_other` on `Ĉ_n0`.
pub fn estimate_slope(
    w_off: &[f64],
    c_hat_n0: &[f64],
    c_hat_other: &[f64],
    fit_window: Vec<i64>,
) -> Result<WiredOffModel> {
    let n = w_off.len();
    if c_hat_n0.len() != n || c_hat_other.len() != n || fit_window.len() != n {
        return Err(Error::Alignment(format!(
            "wired-off inputs differ in length: {n}, {}, {}, window {}",
            c_hat_n0.len(),
            c_hat_other.len(),
            fit_window.len()
        )));
    }
    if w_off.iter().chain(c_hat_n0).chain(c_hat_other).any(|v| !v.is_finite()) {
        return Err(Error::Domain("wired-off inputs must be finite".into()));
    }
    let norm2: f64 = c_hat_n0.iter().map(|c| c * c).sum();
    if norm2 <= 0.0 {
        return Err(Error::fit("disabled vendor baseline has zero norm"));
    }
    let num: f64 = (0..n).map(|t| c_hat_n0[t] * (w_off[t] - c_hat_other[t])).sum();
    let delta = num / norm2;
    if !delta.is_finite() {
        return Err(Error::fit("slope is not finite"));
    }
    let residuals = (0..n)
        .map(|t| w_off[t] - delta * c_hat_n0[t] - c_hat_other[t])
        .collect();
    if !(0.0..=1.0).contains(&delta) {
        log::warn!("migration slope {delta} lies outside [0, 1]");
    }
    Ok(WiredOffModel { delta, fit_window, residuals, diagnostics_summary: None })
}

/// Aligned-series variant: all three must cover the same offsets.
pub fn estimate_slope_series(
    w_off: &MinuteSeries,
    c_hat_n0: &MinuteSeries,
    c_hat_other: &MinuteSeries,
) -> Result<WiredOffModel> {
    for s in [c_hat_n0, c_hat_other] {
        if s.start() != w_off.start() || s.end() != w_off.end() || s.anchor() != w_off.anchor() {
            return Err(Error::Alignment(format!(
                "series cover [{}, {}] and [{}, {}]",
                w_off.start(),
                w_off.end(),
                s.start(),
                s.end()
            )));
        }
    }
    estimate_slope(w_off.values(), c_hat_n0.values(), c_hat_other.values(), w_off.offsets().collect())
}

pub fn predict_wiredoff(model: &WiredOffModel, c_hat_n0: f64, c_hat_other: f64) -> f64 {
    model.delta * c_hat_n0 + c_hat_other
}

/// Share of the disabled vendor's baseline that showed up elsewhere.
pub fn ratio_series(w_off: &[f64], c_hat_n0: &[f64], c_hat_other: &[f64]) -> Result<Vec<f64>> {
    if c_hat_n0.len() != w_off.len() || c_hat_other.len() != w_off.len() {
        return Err(Error::Alignment("ratio inputs differ in length".into()));
    }
    w_off
        .iter()
        .zip(c_hat_n0)
        .zip(c_hat_other)
        .map(|((w, c0), co)| {
            if *c0 > 0.0 {
                Ok((w - co) / c0)
            } else {
                Err(Error::Domain("disabled vendor baseline must be positive".into()))
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdfResult {
    pub statistic: f64,
    pub lags: usize,
    pub nobs: usize,
    pub critical_values: [f64; 3],
    pub stationary: bool,
}

struct OlsFit {
    ssr: f64,
    nobs: usize,
    tstat1: f64,
}

/// OLS of `Δy_t` on `[1, y_{t−1}, Δy_{t−1..t−p}]` for `t` from `first`.
fn adf_regression(y: &[f64], lags: usize, first: usize) -> Result<OlsFit> {
    let dy: Vec<f64> = y.windows(2).map(|w| w[1] - w[0]).collect();
    // dy[t-1] = y[t] - y[t-1]; regress dy[i] for i in first..dy.len()
    let rows = dy.len() - first;
    let cols = 2 + lags;
    if rows <= cols {
        return Err(Error::Validation("too few observations for the ADF regression".into()));
    }
    let x = DMatrix::from_fn(rows, cols, |r, c| {
        let i = first + r;
        match c {
            0 => 1.0,
            1 => y[i],
            j => dy[i - (j - 1)],
        }
    });
    let target = DVector::from_iterator(rows, dy[first..].iter().copied());
    let xtx = x.transpose() * &x;
    let inv = xtx
        .try_inverse()
        .ok_or_else(|| Error::fit("singular ADF design"))?;
    let beta = &inv * x.transpose() * &target;
    let resid = &target - &x * &beta;
    let ssr = resid.norm_squared();
    let s2 = ssr / (rows - cols) as f64;
    let se = (s2 * inv[(1, 1)]).sqrt();
    Ok(OlsFit { ssr, nobs: rows, tstat1: beta[1] / se })
}

/// Augmented Dickey-Fuller test with a constant; lag order chosen by AIC.
pub fn adf_test(series: &[f64]) -> Result<AdfResult> {
    let t = series.len();
    if t < ADF_MIN_LEN {
        return Err(Error::Validation(format!(
            "ADF needs at least {ADF_MIN_LEN} observations, got {t}"
        )));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("ADF input must be finite".into()));
    }
    let max_lag = (12.0 * (t as f64 / 100.0).powf(0.25)).floor() as usize;
    let max_lag = max_lag.min((t - 1) / 2 - 2);
    // every candidate is scored on the sample usable by the largest lag
    let mut best: Option<(f64, usize)> = None;
    for p in 0..=max_lag {
        let fit = adf_regression(series, p, max_lag)?;
        let n = fit.nobs as f64;
        let aic = n * (fit.ssr / n).ln() + 2.0 * (p + 2) as f64;
        if best.is_none_or(|(b, _)| aic < b) {
            best = Some((aic, p));
        }
    }
    let lags = best.map(|(_, p)| p).unwrap_or(0);
    let fit = adf_regression(series, lags, lags)?;
    if !fit.tstat1.is_finite() {
        return Err(Error::fit("ADF statistic is not finite"));
    }
    Ok(AdfResult {
        statistic: fit.tstat1,
        lags,
        nobs: fit.nobs,
        critical_values: [ADF_CRITICAL_1, ADF_CRITICAL_5, ADF_CRITICAL_10],
        stationary: fit.tstat1 < ADF_CRITICAL_5,
    })
}

pub fn stationarity_check(ratio: &MinuteSeries) -> Result<AdfResult> {
    adf_test(ratio.values())
}
