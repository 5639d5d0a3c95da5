//! End-to-end orchestration: fit every model from raw inputs, simulate the
//! wired-on path, and compare it with the wired-off path.
//!
//! All randomness derives from one master seed through named substreams, so
//! each stage can be rerun on its own and reproduces the same numbers.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::availability::{des_forecast, des_forecast_raw, des_search, DesModel, DesTrial, DEFAULT_TRIALS};
use crate::baseline::{
    fit_trend_joint, sample_future_changepoints, tune_hyperparameters, BaselineModel, TrendSpec, TrialRecord,
    TuneOptions, DEFAULT_CHANGEPOINTS, WEEK_MINUTES,
};
use crate::behavior::{estimate, AttemptEvent, BehaviorDistributions, EstimateOptions};
use crate::data::io::WiredOffRow;
use crate::decision::{recommend, Recommendation};
use crate::diagnostics::{diagnose, DiagnosticsReport};
use crate::error::{Error, Result};
use crate::rng::substream_seed;
use crate::series::{to_log, AvailabilitySeries, MinuteSeries, TimeIndex, VolumeSeries};
use crate::wiredoff::{adf_test, estimate_slope, predict_wiredoff, ratio_series, AdfResult, WiredOffModel, ADF_MIN_LEN};
use crate::wiredon::{simulate_wiredon, AvailabilityProvider, SimulationConfig, WiredOnForecast, DEFAULT_WARMUP_START};

pub const SEED_FIT: &str = "fit";
pub const SEED_CHANGEPOINTS: &str = "changepoints";
pub const SEED_SIMULATION: &str = "simulation";
pub const SEED_GENERATOR: &str = "generator";

/// Number of sampled future trend paths behind the baseline bands.
pub const TREND_SAMPLES: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub seed: u64,
    pub horizon: usize,
    pub baseline_trials: usize,
    pub des_trials: usize,
    pub replications: usize,
    pub warmup_start: i64,
    pub changepoints: usize,
    /// Seasonal period of the baseline in minutes.
    pub period: i64,
    /// Minutes at the end of the history held out for hyperparameter search.
    pub holdout_minutes: usize,
    /// Most recent availability minutes used for smoothing; `None` uses all.
    pub availability_window: Option<usize>,
    pub stochastic_rounding: bool,
    pub threads: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            horizon: 60,
            baseline_trials: 20,
            des_trials: DEFAULT_TRIALS,
            replications: 20,
            warmup_start: DEFAULT_WARMUP_START,
            changepoints: DEFAULT_CHANGEPOINTS,
            period: WEEK_MINUTES,
            holdout_minutes: 1440,
            availability_window: None,
            stochastic_rounding: false,
            threads: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(Error::Validation("horizon must be at least 1".into()));
        }
        if self.replications < 1 || self.baseline_trials < 1 || self.des_trials < 1 {
            return Err(Error::Validation("trials and replications must be at least 1".into()));
        }
        if self.warmup_start > DEFAULT_WARMUP_START {
            return Err(Error::Validation(format!("warm-up must start at or before {DEFAULT_WARMUP_START}")));
        }
        Ok(())
    }

    pub fn stage_seed(&self, name: &str) -> u64 {
        substream_seed(self.seed, name)
    }
}

/// How the migration slope is obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WiredOffSource {
    History(Vec<WiredOffRow>),
    Model(WiredOffModel),
}

/// Raw inputs. Series carry absolute epoch minutes as offsets (as loaded).
#[derive(Debug, Clone)]
pub struct PipelineInputs {
    pub volumes: BTreeMap<String, VolumeSeries>,
    pub availability: AvailabilitySeries,
    pub events: Vec<AttemptEvent>,
    /// Needed only for the wired-off curve and the recommendation.
    pub wiredoff: Option<WiredOffSource>,
    /// Decision time; defaults to the last availability minute.
    pub now_epoch_minute: Option<i64>,
}

impl PipelineInputs {
    /// Picks the problematic vendor's availability out of a loaded map.
    pub fn availability_from(map: BTreeMap<String, AvailabilitySeries>, vendor: Option<&str>) -> Result<AvailabilitySeries> {
        match vendor {
            Some(v) => map.get(v).cloned().ok_or_else(|| Error::Validation(format!("no availability for vendor {v}"))),
            None if map.len() == 1 => Ok(map.into_values().next().unwrap()),
            None => Err(Error::Validation(format!(
                "availability covers {} vendors; name the problematic one",
                map.len()
            ))),
        }
    }

    pub fn problematic_vendor(&self) -> &str {
        &self.availability.vendor_id
    }

    pub fn anchor(&self) -> TimeIndex {
        let s = self.availability.series();
        TimeIndex::new(self.now_epoch_minute.unwrap_or_else(|| s.anchor().epoch_minute(s.end())))
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problematic_vendor();
        if !self.volumes.contains_key(p) {
            return Err(Error::Validation(format!("no volumes for problematic vendor {p}")));
        }
        if self.volumes.len() < 2 {
            return Err(Error::Validation("volumes must cover at least one vendor besides the problematic one".into()));
        }
        Ok(())
    }

    /// Volumes up to the decision time, re-anchored there.
    pub fn history(&self, vendor: &str) -> Result<VolumeSeries> {
        let v = self.volumes.get(vendor).ok_or_else(|| Error::Validation(format!("unknown vendor {vendor}")))?;
        volume_history(v, self.anchor())
    }

    pub fn availability_history(&self, window: Option<usize>) -> Result<AvailabilitySeries> {
        let s = self.availability.series().reanchor(self.anchor());
        if s.start() > 0 || s.end() < 0 {
            return Err(Error::Alignment("availability does not cover the decision time".into()));
        }
        let from = match window {
            Some(w) if w >= 2 => (1 - w as i64).max(s.start()),
            Some(_) => return Err(Error::Validation("availability window needs at least two minutes".into())),
            None => s.start(),
        };
        AvailabilitySeries::new(self.availability.vendor_id.clone(), s.slice(from, 0)?)
    }
}

/// The part of a volume series up to `anchor`, re-anchored there.
pub fn volume_history(volume: &VolumeSeries, anchor: TimeIndex) -> Result<VolumeSeries> {
    let s = volume.series().reanchor(anchor);
    if s.start() > 0 || s.end() < 0 {
        return Err(Error::Alignment(format!(
            "volumes for {} do not cover the decision time",
            volume.vendor_id
        )));
    }
    VolumeSeries::new(volume.vendor_id.clone(), s.slice(s.start(), 0)?)
}

/// Latest minute covered by every series, a sensible default decision time.
pub fn common_end(volumes: &BTreeMap<String, VolumeSeries>) -> Option<TimeIndex> {
    volumes
        .values()
        .map(|v| v.series().anchor().epoch_minute(v.series().end()))
        .min()
        .map(TimeIndex::new)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineFit {
    pub model: BaselineModel,
    pub trials: Vec<TrialRecord>,
    pub best_trial: usize,
}

/// Tunes hyperparameters on a holdout split, then refits on the full history.
pub fn fit_baseline(history: &VolumeSeries, config: &PipelineConfig) -> Result<BaselineFit> {
    let s = history.series();
    let n = s.len();
    let holdout = config.holdout_minutes.min(n / 4).max(1);
    if n < holdout + 10 {
        return Err(Error::Validation(format!("volume history for {} is too short ({n} minutes)", history.vendor_id)));
    }
    let split = s.end() - holdout as i64;
    let train = VolumeSeries::new(history.vendor_id.clone(), s.slice(s.start(), split)?)?;
    let test = VolumeSeries::new(history.vendor_id.clone(), s.slice(split + 1, s.end())?)?;
    let options = TuneOptions { changepoints: config.changepoints.min(n / 2), period: config.period, ..TuneOptions::default() };
    let seed = substream_seed(config.stage_seed(SEED_FIT), &format!("baseline/{}", history.vendor_id));
    let tuned = tune_hyperparameters(&train, &test, config.baseline_trials, seed, &options)?;
    let log_obs = to_log(history)?.reanchor_to_end();
    let trend = TrendSpec::uniform(n, options.changepoints, tuned.trend.prior_scale);
    let mut model = fit_trend_joint(&log_obs, &tuned.seasonal, &trend, &options.solver)?;
    model.vendor_id = Some(history.vendor_id.clone());
    Ok(BaselineFit { model, trials: tuned.trials, best_trial: tuned.best })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineForecast {
    pub vendor_id: String,
    pub offsets: Vec<i64>,
    pub mean: Vec<f64>,
    pub p10: Vec<f64>,
    pub p90: Vec<f64>,
}

/// Point forecast over `1..=R` plus bands from sampled future changepoints.
pub fn forecast_baseline(model: &BaselineModel, horizon: usize, seed: u64) -> Result<BaselineForecast> {
    let vendor = model.vendor_id.clone().unwrap_or_default();
    let offsets: Vec<i64> = (1..=horizon as i64).collect();
    let mean = offsets.iter().map(|&m| model.predict(m, None)).collect::<Result<Vec<_>>>()?;
    let base = substream_seed(seed, &vendor);
    let paths = (0..TREND_SAMPLES)
        .map(|i| {
            let path = sample_future_changepoints(model, horizon, substream_seed(base, &i.to_string()))?;
            offsets.iter().map(|&m| model.predict(m, Some(&path))).collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let band = |q: f64| -> Vec<f64> {
        (0..horizon)
            .map(|t| crate::wiredon::quantile(&paths.iter().map(|p| p[t]).collect::<Vec<_>>(), q))
            .collect()
    };
    Ok(BaselineForecast { vendor_id: vendor, offsets, p10: band(0.1), p90: band(0.9), mean })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvailabilityFit {
    pub model: DesModel,
    pub trials: Vec<DesTrial>,
}

impl AvailabilityFit {
    pub fn forecast(&self, horizon: usize) -> Vec<(i64, f64, f64)> {
        (1..=horizon as i64)
            .map(|m| (m, des_forecast(&self.model, m), des_forecast_raw(&self.model, m)))
            .collect()
    }
}

pub fn fit_availability(inputs: &PipelineInputs, config: &PipelineConfig) -> Result<AvailabilityFit> {
    let obs = inputs.availability_history(config.availability_window)?;
    let seed = substream_seed(config.stage_seed(SEED_FIT), "availability");
    let (model, trials) = des_search(&obs, config.des_trials, seed)?;
    Ok(AvailabilityFit { model, trials })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WiredOffFit {
    pub model: WiredOffModel,
    pub adf: Option<AdfResult>,
    pub diagnostics: Option<DiagnosticsReport>,
}

/// Fills missing baseline columns from fitted models, then fits the slope.
pub fn fit_wiredoff(
    source: &WiredOffSource,
    problematic: &str,
    baselines: &BTreeMap<String, BaselineModel>,
) -> Result<WiredOffFit> {
    let rows = match source {
        WiredOffSource::Model(m) => return Ok(WiredOffFit { model: m.clone(), adf: None, diagnostics: None }),
        WiredOffSource::History(rows) => rows,
    };
    if rows.is_empty() {
        return Err(Error::Validation("wired-off history is empty".into()));
    }
    let mut w = Vec::with_capacity(rows.len());
    let mut c0 = Vec::with_capacity(rows.len());
    let mut co = Vec::with_capacity(rows.len());
    for r in rows {
        let (a, b) = match (r.c_hat_n0, r.c_hat_other) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                let own = baselines
                    .get(problematic)
                    .ok_or_else(|| Error::Validation(format!("no baseline for {problematic}")))?
                    .predict_epoch(r.timestamp_minute)?;
                let mut rest = 0.0;
                for (v, m) in baselines {
                    if v != problematic {
                        rest += m.predict_epoch(r.timestamp_minute)?;
                    }
                }
                (own, rest)
            }
        };
        w.push(r.w_off);
        c0.push(a);
        co.push(b);
    }
    let window = rows.iter().map(|r| r.timestamp_minute).collect();
    let mut model = estimate_slope(&w, &c0, &co, window)?;
    let adf = if rows.len() >= ADF_MIN_LEN { Some(adf_test(&ratio_series(&w, &c0, &co)?)?) } else { None };
    let target: Vec<f64> = w.iter().zip(&co).map(|(a, b)| a - b).collect();
    let fitted: Vec<f64> = c0.iter().map(|c| model.delta * c).collect();
    let diagnostics = if rows.len() >= 4 { diagnose(&target, &c0, &fitted, false, 10).ok() } else { None };
    if let Some(d) = &diagnostics {
        model.diagnostics_summary = Some(serde_json::json!({
            "dw_statistic": d.dw_statistic,
            "hc_p_value": d.hc_p_value,
            "acf_lag1": d.acf_lag1,
            "adf_statistic": adf.as_ref().map(|a| a.statistic),
        }));
    }
    Ok(WiredOffFit { model, adf, diagnostics })
}

/// Everything estimated from the inputs, before any simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModels {
    pub anchor: TimeIndex,
    pub problematic_vendor: String,
    pub baselines: BTreeMap<String, BaselineFit>,
    pub availability: AvailabilityFit,
    pub behavior: BehaviorDistributions,
    pub wiredoff: Option<WiredOffFit>,
    /// Observed problematic-vendor volume from the warm-up start to 0.
    pub recent_problematic_volume: Vec<(i64, f64)>,
    pub availability_actuals: AvailabilitySeries,
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Simulation(format!("thread pool: {e}")))?
            .install(f),
        None => f(),
    }
}

pub fn fit_all(inputs: &PipelineInputs, config: &PipelineConfig) -> Result<FittedModels> {
    config.validate()?;
    inputs.validate()?;
    with_threads(config.threads, || {
        let mut baselines = BTreeMap::new();
        for vendor in inputs.volumes.keys() {
            let fit = fit_baseline(&inputs.history(vendor)?, config)?;
            log::info!("baseline for {vendor}: H={} objective {:.6}", fit.model.seasonal.harmonics, fit.model.objective);
            baselines.insert(vendor.clone(), fit);
        }
        let availability = fit_availability(inputs, config)?;
        log::info!("availability smoothing α={:.4} η={:.4}", availability.model.alpha, availability.model.eta);
        let behavior = estimate(&inputs.events, inputs.problematic_vendor(), &EstimateOptions::default())?;
        let models: BTreeMap<String, BaselineModel> =
            baselines.iter().map(|(k, v)| (k.clone(), v.model.clone())).collect();
        let wiredoff = inputs
            .wiredoff
            .as_ref()
            .map(|src| fit_wiredoff(src, inputs.problematic_vendor(), &models))
            .transpose()?;
        if let Some(w) = &wiredoff {
            log::info!("migration slope Δ={:.4}", w.model.delta);
        }
        let p = inputs.history(inputs.problematic_vendor())?.into_series();
        let recent_problematic_volume =
            p.iter().filter(|&(m, _)| m >= config.warmup_start).collect();
        Ok(FittedModels {
            anchor: inputs.anchor(),
            problematic_vendor: inputs.problematic_vendor().to_string(),
            baselines,
            availability,
            behavior,
            wiredoff,
            recent_problematic_volume,
            availability_actuals: inputs.availability_history(None)?,
        })
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curves {
    pub horizon: usize,
    pub c_n0: Vec<f64>,
    pub c_other: Vec<f64>,
    /// Present once a wired-off model has been fitted.
    pub wired_off: Option<Vec<f64>>,
}

impl Curves {
    pub fn wired_off(&self) -> Result<&[f64]> {
        self.wired_off
            .as_deref()
            .ok_or_else(|| Error::Validation("no wired-off model; supply a wired-off history or model".into()))
    }
}

impl FittedModels {
    pub fn baseline(&self, vendor: &str) -> Result<&BaselineModel> {
        self.baselines
            .get(vendor)
            .map(|f| &f.model)
            .ok_or_else(|| Error::Validation(format!("no baseline for {vendor}")))
    }

    /// Baseline point forecasts and the wired-off curve over `1..=R`.
    pub fn curves(&self, horizon: usize) -> Result<Curves> {
        let own = self.baseline(&self.problematic_vendor)?;
        let mut c_n0 = Vec::with_capacity(horizon);
        let mut c_other = Vec::with_capacity(horizon);
        for m in 1..=horizon as i64 {
            c_n0.push(own.predict(m, None)?);
            let mut rest = 0.0;
            for (v, f) in &self.baselines {
                if *v != self.problematic_vendor {
                    rest += f.model.predict(m, None)?;
                }
            }
            c_other.push(rest);
        }
        let wired_off = self.wiredoff.as_ref().map(|w| {
            c_n0.iter()
                .zip(&c_other)
                .map(|(a, b)| predict_wiredoff(&w.model, *a, *b))
                .collect()
        });
        Ok(Curves { horizon, c_n0, c_other, wired_off })
    }

    /// Problematic-vendor volume for spawning: observed up to 0 where
    /// available, forecast beyond.
    pub fn spawn_volume(&self, warmup_start: i64, horizon: usize) -> Result<MinuteSeries> {
        let own = self.baseline(&self.problematic_vendor)?;
        let observed: BTreeMap<i64, f64> = self.recent_problematic_volume.iter().copied().collect();
        let values = (warmup_start..=horizon as i64)
            .map(|m| match observed.get(&m) {
                Some(&v) if m <= 0 => Ok(v),
                _ => own.predict(m, None),
            })
            .collect::<Result<Vec<_>>>()?;
        MinuteSeries::new(self.anchor, warmup_start, values)
    }

    pub fn provider(&self) -> Result<AvailabilityProvider> {
        AvailabilityProvider::new(self.availability_actuals.clone(), self.availability.model.clone())
    }

    pub fn simulate(&self, sim: &SimulationConfig) -> Result<WiredOnForecast> {
        let curves = self.curves(sim.horizon)?;
        let other = MinuteSeries::new(self.anchor, 1, curves.c_other)?;
        let volume = self.spawn_volume(sim.warmup_start, sim.horizon)?;
        simulate_wiredon(&volume, &other, &self.provider()?, &self.behavior, sim)
    }

    pub fn recommend(&self, wiredon: &WiredOnForecast) -> Result<Recommendation> {
        let curves = self.curves(wiredon.horizon)?;
        recommend(&wiredon.mean_curve(), curves.wired_off()?, self.anchor)
    }
}

pub fn simulation_config(config: &PipelineConfig) -> SimulationConfig {
    SimulationConfig {
        horizon: config.horizon,
        warmup_start: config.warmup_start,
        replications: config.replications,
        master_seed: config.stage_seed(SEED_SIMULATION),
        stochastic_rounding: config.stochastic_rounding,
        threads: config.threads,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineRun {
    pub fitted: FittedModels,
    pub wiredon: WiredOnForecast,
    pub curves: Curves,
    pub recommendation: Recommendation,
}

pub fn run(inputs: &PipelineInputs, config: &PipelineConfig) -> Result<PipelineRun> {
    let fitted = fit_all(inputs, config)?;
    let wiredon = fitted.simulate(&simulation_config(config))?;
    let curves = fitted.curves(config.horizon)?;
    let recommendation = fitted.recommend(&wiredon)?;
    Ok(PipelineRun { fitted, wiredon, curves, recommendation })
}

/// Completed experiences when wiring off at `wireoff_m` versus never.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatIf {
    pub wireoff_m: i64,
    pub total_completed_off_path: f64,
    pub total_completed_on_path: f64,
    pub difference: f64,
}

pub fn what_if(wired_on: &[f64], wired_off: &[f64], wireoff_m: i64) -> Result<WhatIf> {
    if wired_on.len() != wired_off.len() {
        return Err(Error::Alignment("curves differ in length".into()));
    }
    let r = wired_on.len() as i64;
    if !(1..=r).contains(&wireoff_m) {
        return Err(Error::Validation(format!("wireoff_m must lie in [1, {r}], got {wireoff_m}")));
    }
    let cut = (wireoff_m - 1) as usize;
    let on: f64 = wired_on.iter().sum();
    let off: f64 = wired_on[..cut].iter().sum::<f64>() + wired_off[cut..].iter().sum::<f64>();
    Ok(WhatIf { wireoff_m, total_completed_off_path: off, total_completed_on_path: on, difference: off - on })
}
