use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{FromRequest, Path, Query, Request, State};
use axum::http::StatusCode;
use axum::Json;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use wireoff_core::diagnostics::DiagnosticsReport;
use wireoff_core::pipeline::{
    fit_all, forecast_baseline, simulation_config, what_if, FittedModels, PipelineConfig, WhatIf, SEED_CHANGEPOINTS,
};
use wireoff_core::wiredoff::AdfResult;
use wireoff_core::wiredon::WiredOnForecast;

use crate::error::{ApiError, ApiResult, FieldError};
use crate::state::{AppState, Session, SessionSource, SessionState};

/// JSON body whose deserialization errors name the failing field.
pub struct JsonBody<T>(pub T);

impl<T: DeserializeOwned, S: Send + Sync> FromRequest<S> for JsonBody<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        let bytes = Bytes::from_request(req, state)
            .await
            .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?;
        let bytes: &[u8] = if bytes.iter().all(u8::is_ascii_whitespace) { b"{}" } else { &bytes };
        let mut de = serde_json::Deserializer::from_slice(bytes);
        serde_path_to_error::deserialize(&mut de).map(JsonBody).map_err(|e| {
            let field = e.path().to_string();
            let message = e.inner().to_string();
            let field = if field == "." { "body".to_string() } else { field };
            ApiError {
                status: StatusCode::BAD_REQUEST,
                message: format!("malformed body at `{field}`: {message}"),
                fields: vec![FieldError { field, message }],
            }
        })
    }
}

fn blocking_error(e: tokio::task::JoinError) -> ApiError {
    ApiError::internal(format!("worker task failed: {e}"))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    volumes_csv: Option<String>,
    volumes_path: Option<String>,
    availability_csv: Option<String>,
    availability_path: Option<String>,
    events_csv: Option<String>,
    events_path: Option<String>,
    wiredoff_history_csv: Option<String>,
    wiredoff_history_path: Option<String>,
    problematic_vendor: Option<String>,
    now_epoch_minute: Option<i64>,
}

fn payload(name: &str, inline: Option<String>, path: Option<String>) -> ApiResult<Option<String>> {
    match (inline, path) {
        (Some(_), Some(_)) => Err(ApiError::field(format!("{name}_csv"), format!("give either {name}_csv or {name}_path"))),
        (Some(text), None) => Ok(Some(text)),
        (None, Some(p)) => std::fs::read_to_string(&p)
            .map(Some)
            .map_err(|e| ApiError::field(format!("{name}_path"), format!("{p}: {e}"))),
        (None, None) => Ok(None),
    }
}

fn required(name: &str, inline: Option<String>, path: Option<String>) -> ApiResult<String> {
    payload(name, inline, path)?.ok_or_else(|| ApiError::field(format!("{name}_csv"), "required (or the matching _path)"))
}

#[derive(Debug, Serialize)]
pub struct SessionInfo {
    session_id: String,
    version: u64,
    created_at_unix: u64,
    problematic_vendor: String,
    vendors: Vec<String>,
    anchor_epoch_minute: i64,
    has_wiredoff_history: bool,
    fitted: bool,
    simulated: bool,
}

fn info(session: &Session, state: &SessionState) -> SessionInfo {
    SessionInfo {
        session_id: state.session_id.clone(),
        version: state.version,
        created_at_unix: state.created_at_unix,
        problematic_vendor: session.inputs.problematic_vendor().to_string(),
        vendors: session.inputs.volumes.keys().cloned().collect(),
        anchor_epoch_minute: session.inputs.anchor().epoch_minute(0),
        has_wiredoff_history: session.inputs.wiredoff.is_some(),
        fitted: state.fitted.is_some(),
        simulated: state.wiredon.is_some(),
    }
}

pub async fn create_session(
    State(app): State<AppState>,
    JsonBody(body): JsonBody<CreateSession>,
) -> ApiResult<(StatusCode, Json<SessionInfo>)> {
    let source = SessionSource {
        volumes_csv: required("volumes", body.volumes_csv, body.volumes_path)?,
        availability_csv: required("availability", body.availability_csv, body.availability_path)?,
        events_csv: required("events", body.events_csv, body.events_path)?,
        wiredoff_history_csv: payload("wiredoff_history", body.wiredoff_history_csv, body.wiredoff_history_path)?,
        problematic_vendor: body.problematic_vendor,
        now_epoch_minute: body.now_epoch_minute,
    };
    let (inputs, source) = tokio::task::spawn_blocking(move || source.parse().map(|i| (i, source)))
        .await
        .map_err(blocking_error)??;
    let state = SessionState {
        session_id: uuid::Uuid::new_v4().to_string(),
        created_at_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        version: 0,
        source: Arc::new(source),
        config: None,
        fitted: None,
        wiredon: None,
        recommendation: None,
    };
    let session = app.insert(Session::new(inputs, state))?;
    let body = info(&session, &session.snapshot());
    Ok((StatusCode::CREATED, Json(body)))
}

pub async fn get_session(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<SessionInfo>> {
    let session = app.get(&id)?;
    let body = info(&session, &session.snapshot());
    Ok(Json(body))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitRequest {
    seed: u64,
    /// Baseline hyperparameter-search trials per vendor.
    trials: Option<usize>,
    des_trials: Option<usize>,
    changepoints: Option<usize>,
    period: Option<i64>,
    holdout_minutes: Option<usize>,
    availability_window: Option<usize>,
}

#[derive(Debug, Serialize)]
pub struct BaselineSummary {
    harmonics: usize,
    seasonality_prior_scale: f64,
    changepoint_prior_scale: f64,
    best_trial: usize,
    holdout_rmse: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct FitSummary {
    session_id: String,
    version: u64,
    baselines: BTreeMap<String, BaselineSummary>,
    availability: serde_json::Value,
    behavior: serde_json::Value,
    wiredoff_delta: Option<f64>,
}

fn fit_summary(state: &SessionState, fitted: &FittedModels) -> ApiResult<FitSummary> {
    let baselines = fitted
        .baselines
        .iter()
        .map(|(v, f)| {
            let t = &f.trials[f.best_trial];
            let s = BaselineSummary {
                harmonics: t.harmonics,
                seasonality_prior_scale: t.seasonality_prior_scale,
                changepoint_prior_scale: t.changepoint_prior_scale,
                best_trial: f.best_trial,
                holdout_rmse: t.holdout_rmse,
            };
            (v.clone(), s)
        })
        .collect();
    let to_value = |v: serde_json::Result<serde_json::Value>| v.map_err(|e| ApiError::internal(e.to_string()));
    Ok(FitSummary {
        session_id: state.session_id.clone(),
        version: state.version,
        baselines,
        availability: to_value(serde_json::to_value(&fitted.availability.model))?,
        behavior: to_value(serde_json::to_value(&fitted.behavior))?,
        wiredoff_delta: fitted.wiredoff.as_ref().map(|w| w.model.delta),
    })
}

pub async fn fit(
    State(app): State<AppState>,
    Path(id): Path<String>,
    JsonBody(req): JsonBody<FitRequest>,
) -> ApiResult<Json<FitSummary>> {
    let session = app.get(&id)?;
    let defaults = PipelineConfig::default();
    let config = PipelineConfig {
        seed: req.seed,
        baseline_trials: req.trials.unwrap_or(defaults.baseline_trials),
        des_trials: req.des_trials.unwrap_or(defaults.des_trials),
        changepoints: req.changepoints.unwrap_or(defaults.changepoints),
        period: req.period.unwrap_or(defaults.period),
        holdout_minutes: req.holdout_minutes.unwrap_or(defaults.holdout_minutes),
        availability_window: req.availability_window,
        ..defaults
    };
    if config.baseline_trials < 1 {
        return Err(ApiError::field("trials", "must be at least 1"));
    }
    if config.des_trials < 1 {
        return Err(ApiError::field("des_trials", "must be at least 1"));
    }
    if config.period < 2 {
        return Err(ApiError::field("period", "must be at least 2 minutes"));
    }

    let _guard = session.write.lock().await;
    let inputs = session.inputs.clone();
    let cfg = config.clone();
    let fitted = tokio::task::spawn_blocking(move || fit_all(&inputs, &cfg)).await.map_err(blocking_error)??;
    let prev = session.snapshot();
    let next = SessionState {
        version: prev.version + 1,
        config: Some(config),
        fitted: Some(Arc::new(fitted)),
        wiredon: None,
        recommendation: None,
        ..(*prev).clone()
    };
    app.persist(&next)?;
    let next = session.publish(next);
    let fitted = next.fitted.as_ref().expect("just fitted");
    Ok(Json(fit_summary(&next, fitted)?))
}

fn fitted(state: &SessionState) -> ApiResult<(&Arc<FittedModels>, &PipelineConfig)> {
    match (&state.fitted, &state.config) {
        (Some(f), Some(c)) => Ok((f, c)),
        _ => Err(ApiError::conflict("session has not been fitted; POST .../fit first")),
    }
}

fn simulated(state: &SessionState) -> ApiResult<&Arc<WiredOnForecast>> {
    fitted(state)?;
    state.wiredon.as_ref().ok_or_else(|| ApiError::conflict("no simulation yet; POST .../simulate first"))
}

fn parse_query<T: std::str::FromStr>(q: &HashMap<String, String>, key: &str) -> ApiResult<Option<T>>
where
    T::Err: std::fmt::Display,
{
    q.get(key)
        .map(|v| v.parse::<T>().map_err(|e| ApiError::field(key, format!("{v:?}: {e}"))))
        .transpose()
}

#[derive(Debug, Serialize)]
pub struct ForecastPoint {
    offset_m: i64,
    #[serde(skip_serializing_if = "Option::is_none")]
    vendor_id: Option<String>,
    value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    p10: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    p90: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct ForecastBody {
    kind: String,
    horizon: usize,
    anchor_epoch_minute: i64,
    points: Vec<ForecastPoint>,
}

pub async fn forecast(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<Json<ForecastBody>> {
    let session = app.get(&id)?;
    let kind = q.get("kind").cloned().ok_or_else(|| ApiError::field("kind", "required"))?;
    let vendor: Option<String> = parse_query(&q, "vendor")?;
    let state = session.snapshot();
    let (fitted, config) = fitted(&state)?;
    let horizon = match parse_query::<usize>(&q, "horizon")? {
        Some(0) => return Err(ApiError::field("horizon", "must be at least 1")),
        Some(h) => h,
        None => config.horizon,
    };
    let point = |offset_m: i64, value: f64| ForecastPoint { offset_m, vendor_id: None, value, p10: None, p90: None };
    let points = match kind.as_str() {
        "baseline" => {
            let models: Vec<_> = match &vendor {
                Some(v) => vec![fitted.baseline(v)?.clone()],
                None => fitted.baselines.values().map(|f| f.model.clone()).collect(),
            };
            let seed = config.stage_seed(SEED_CHANGEPOINTS);
            tokio::task::spawn_blocking(move || {
                let mut points = Vec::new();
                for m in &models {
                    let fc = forecast_baseline(m, horizon, seed)?;
                    for i in 0..fc.offsets.len() {
                        points.push(ForecastPoint {
                            offset_m: fc.offsets[i],
                            vendor_id: Some(fc.vendor_id.clone()),
                            value: fc.mean[i],
                            p10: Some(fc.p10[i]),
                            p90: Some(fc.p90[i]),
                        });
                    }
                }
                Ok::<_, wireoff_core::Error>(points)
            })
            .await
            .map_err(blocking_error)??
        }
        "availability" => fitted.availability.forecast(horizon).into_iter().map(|(m, a, _)| point(m, a)).collect(),
        "wiredoff" => {
            if fitted.wiredoff.is_none() {
                return Err(ApiError::conflict("session has no wired-off history, so no wired-off model"));
            }
            let curves = fitted.curves(horizon)?;
            curves.wired_off()?.iter().enumerate().map(|(i, &w)| point(i as i64 + 1, w)).collect()
        }
        "wiredon" => {
            let on = simulated(&state)?;
            on.minutes.iter().filter(|m| m.offset_m >= 1 && m.offset_m as usize <= horizon).map(|m| point(m.offset_m, m.w_on_mean)).collect()
        }
        other => {
            return Err(ApiError::field("kind", format!("{other:?} is not one of baseline, availability, wiredoff, wiredon")))
        }
    };
    Ok(Json(ForecastBody { kind, horizon, anchor_epoch_minute: fitted.anchor.epoch_minute(0), points }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateRequest {
    seed: u64,
    horizon: Option<usize>,
    replications: Option<usize>,
    warmup_start: Option<i64>,
    stochastic_rounding: Option<bool>,
}

pub async fn simulate(
    State(app): State<AppState>,
    Path(id): Path<String>,
    JsonBody(req): JsonBody<SimulateRequest>,
) -> ApiResult<Json<Arc<WiredOnForecast>>> {
    let session = app.get(&id)?;
    let _guard = session.write.lock().await;
    let prev = session.snapshot();
    let (fitted_models, config) = fitted(&prev)?;
    let config = PipelineConfig {
        seed: req.seed,
        horizon: req.horizon.unwrap_or(config.horizon),
        replications: req.replications.unwrap_or(config.replications),
        warmup_start: req.warmup_start.unwrap_or(config.warmup_start),
        stochastic_rounding: req.stochastic_rounding.unwrap_or(config.stochastic_rounding),
        ..config.clone()
    };
    if config.horizon < 1 {
        return Err(ApiError::field("horizon", "must be at least 1"));
    }
    if config.replications < 1 {
        return Err(ApiError::field("replications", "must be at least 1"));
    }
    config.validate().map_err(|e| ApiError::field("warmup_start", e.to_string()))?;
    let models = fitted_models.clone();
    let sim = simulation_config(&config);
    let wiredon = tokio::task::spawn_blocking(move || models.simulate(&sim)).await.map_err(blocking_error)??;
    let recommendation = match &fitted_models.wiredoff {
        Some(_) => Some(Arc::new(fitted_models.recommend(&wiredon)?)),
        None => None,
    };
    let next = SessionState {
        version: prev.version + 1,
        config: Some(config),
        wiredon: Some(Arc::new(wiredon)),
        recommendation,
        ..(*prev).clone()
    };
    app.persist(&next)?;
    let next = session.publish(next);
    Ok(Json(next.wiredon.clone().expect("just simulated")))
}

pub async fn recommendation(
    State(app): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<serde_json::Value>> {
    let session = app.get(&id)?;
    let state = session.snapshot();
    simulated(&state)?;
    let rec = state
        .recommendation
        .as_ref()
        .ok_or_else(|| ApiError::conflict("session has no wired-off model; create it with a wired-off history"))?;
    let mut body = serde_json::to_value(rec.as_ref()).map_err(|e| ApiError::internal(e.to_string()))?;
    body["summary"] = rec.summary().into();
    Ok(Json(body))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WhatIfRequest {
    wireoff_m: i64,
}

pub async fn whatif(
    State(app): State<AppState>,
    Path(id): Path<String>,
    JsonBody(req): JsonBody<WhatIfRequest>,
) -> ApiResult<Json<WhatIf>> {
    let session = app.get(&id)?;
    let state = session.snapshot();
    let on = simulated(&state)?;
    let rec = state
        .recommendation
        .as_ref()
        .ok_or_else(|| ApiError::conflict("session has no wired-off model; create it with a wired-off history"))?;
    let horizon = rec.horizon() as i64;
    if !(1..=horizon).contains(&req.wireoff_m) {
        return Err(ApiError::field("wireoff_m", format!("must lie in [1, {horizon}]")));
    }
    let on_curve: Vec<f64> = rec.curves.iter().map(|p| p.wired_on).collect();
    let off_curve: Vec<f64> = rec.curves.iter().map(|p| p.wired_off).collect();
    debug_assert_eq!(on_curve.len(), on.horizon);
    Ok(Json(what_if(&on_curve, &off_curve, req.wireoff_m)?))
}

#[derive(Debug, Serialize)]
pub struct DiagnosticsBody {
    #[serde(flatten)]
    report: DiagnosticsReport,
    dw_passes: bool,
    hc_passes: bool,
    acf_lag1_within_band: bool,
    adf: Option<AdfResult>,
}

pub async fn diagnostics(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<DiagnosticsBody>> {
    let session = app.get(&id)?;
    let state = session.snapshot();
    let (fitted, _) = fitted(&state)?;
    let fit = fitted
        .wiredoff
        .as_ref()
        .ok_or_else(|| ApiError::conflict("session has no wired-off model to diagnose"))?;
    let report = fit
        .diagnostics
        .clone()
        .ok_or_else(|| ApiError::conflict("wired-off history too short for diagnostics"))?;
    Ok(Json(DiagnosticsBody {
        dw_passes: report.dw_passes(),
        hc_passes: report.hc_passes(),
        acf_lag1_within_band: report.acf_lag1_within_band(),
        adf: fit.adf.clone(),
        report,
    }))
}

pub async fn openapi() -> Json<serde_json::Value> {
    Json(crate::openapi::document())
}

