use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit_trend_joint, predict_baseline, SeasonalSpec, SolverSettings, TrendSpec};
use super::{DEFAULT_CHANGEPOINTS, WEEK_MINUTES};
use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};
use crate::series::{to_log, VolumeSeries};

/// Bounds of the random hyperparameter search. Prior scales are sampled
/// log-uniformly, harmonics uniformly over the inclusive integer range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub seasonality_prior_scale: (f64, f64),
    pub changepoint_prior_scale: (f64, f64),
    pub harmonics: (usize, usize),
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            seasonality_prior_scale: (0.01, 10.0),
            changepoint_prior_scale: (0.001, 1.0),
            harmonics: (10, 30),
        }
    }
}

impl SearchSpace {
    pub fn contains(&self, t: &TrialRecord) -> bool {
        let (slo, shi) = self.seasonality_prior_scale;
        let (clo, chi) = self.changepoint_prior_scale;
        let (hlo, hhi) = self.harmonics;
        (slo..=shi).contains(&t.seasonality_prior_scale)
            && (clo..=chi).contains(&t.changepoint_prior_scale)
            && (hlo..=hhi).contains(&t.harmonics)
    }

    fn sample(&self, rng: &mut StreamRng, index: usize) -> TrialRecord {
        let log_uniform = |rng: &mut StreamRng, (lo, hi): (f64, f64)| {
            let u = rng::unit_closed_open(rng);
            (lo.ln() + u * (hi.ln() - lo.ln())).exp().clamp(lo, hi)
        };
        let seasonality_prior_scale = log_uniform(rng, self.seasonality_prior_scale);
        let changepoint_prior_scale = log_uniform(rng, self.changepoint_prior_scale);
        let (hlo, hhi) = self.harmonics;
        let width = (hhi - hlo + 1) as f64;
        let harmonics = hlo + ((rng::unit_closed_open(rng) * width) as usize).min(hhi - hlo);
        TrialRecord {
            index,
            seasonality_prior_scale,
            changepoint_prior_scale,
            harmonics,
            holdout_rmse: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub index: usize,
    pub seasonality_prior_scale: f64,
    pub changepoint_prior_scale: f64,
    pub harmonics: usize,
    /// `None` when the fit failed.
    pub holdout_rmse: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TuneOptions {
    pub space: SearchSpace,
    pub changepoints: usize,
    pub period: i64,
    pub solver: SolverSettings,
}

impl Default for TuneOptions {
    fn default() -> Self {
        Self {
            space: SearchSpace::default(),
            changepoints: DEFAULT_CHANGEPOINTS,
            period: WEEK_MINUTES,
            solver: SolverSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TuneOutcome {
    pub seasonal: SeasonalSpec,
    /// Trend spec sized for the training window.
    pub trend: TrendSpec,
    pub best: usize,
    pub trials: Vec<TrialRecord>,
}

/// Random search over the prior scales and harmonic count, scoring each
/// configuration by the RMSE of its forecast against the holdout volumes.
pub fn tune_hyperparameters(
    train: &VolumeSeries,
    holdout: &VolumeSeries,
    trials: usize,
    seed: u64,
    options: &TuneOptions,
) -> Result<TuneOutcome> {
    if trials < 1 {
        return Err(Error::Validation("at least one trial is required".into()));
    }
    let log_train = to_log(train)?.reanchor_to_end();
    let anchor = log_train.anchor();
    let holdout = holdout.series().reanchor(anchor);
    if holdout.start() < 1 {
        return Err(Error::Validation(
            "holdout must lie strictly after the training window".into(),
        ));
    }

    let mut rng = StreamRng::seed_from_u64(seed);
    let configs: Vec<TrialRecord> = (0..trials)
        .map(|i| options.space.sample(&mut rng, i))
        .collect();

    let history_len = log_train.len();
    let scored: Vec<TrialRecord> = configs
        .into_par_iter()
        .map(|mut cfg| {
            let sspec = SeasonalSpec {
                harmonics: cfg.harmonics,
                period: options.period,
                prior_scale: cfg.seasonality_prior_scale,
                noise_scale: 1.0,
            };
            let tspec = TrendSpec::uniform(history_len, options.changepoints, cfg.changepoint_prior_scale);
            cfg.holdout_rmse = fit_trend_joint(&log_train, &sspec, &tspec, &options.solver)
                .and_then(|model| {
                    let mut sq = 0.0;
                    for (m, actual) in holdout.iter() {
                        let e = predict_baseline(&model, m, None)? - actual;
                        sq += e * e;
                    }
                    Ok((sq / holdout.len() as f64).sqrt())
                })
                .ok()
                .filter(|r| r.is_finite());
            cfg
        })
        .collect();

    let mut best: Option<(usize, f64)> = None;
    for t in &scored {
        if let Some(r) = t.holdout_rmse {
            if best.is_none_or(|(_, b)| r < b) {
                best = Some((t.index, r));
            }
        }
    }
    let (best, _) = best.ok_or_else(|| Error::Tune(format!("all {trials} trials failed to fit")))?;
    let win = &scored[best];
    log::debug!(
        "hyperparameter search picked trial {best}: H={} σ'={:.4} λ={:.4}",
        win.harmonics,
        win.seasonality_prior_scale,
        win.changepoint_prior_scale
    );
    Ok(TuneOutcome {
        seasonal: SeasonalSpec {
            harmonics: win.harmonics,
            period: options.period,
            prior_scale: win.seasonality_prior_scale,
            noise_scale: 1.0,
        },
        trend: TrendSpec::uniform(history_len, options.changepoints, win.changepoint_prior_scale),
        best,
        trials: scored,
    })
}
