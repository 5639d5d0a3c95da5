//! `wireoff`: batch front end for fitting, simulating and recommending.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use wireoff_core::availability::{rolling_validate, DEFAULT_HORIZON, DEFAULT_TRIALS, DEFAULT_WINDOW};
use wireoff_core::baseline::{DEFAULT_CHANGEPOINTS, WEEK_MINUTES};
use wireoff_core::behavior::{estimate, EstimateOptions};
use wireoff_core::data::synth::{generate, write_generated, Scenario};
use wireoff_core::data::{self as io, WiredOffRow};
use wireoff_core::pipeline::{
    self, common_end, fit_all, fit_baseline, fit_wiredoff, forecast_baseline, simulation_config, volume_history,
    PipelineConfig, PipelineInputs, WiredOffSource, SEED_CHANGEPOINTS, SEED_GENERATOR,
};
use wireoff_core::rng::substream_seed;
use wireoff_core::series::{TimeIndex, VolumeSeries};
use wireoff_core::wiredoff::WiredOffModel;
use wireoff_core::wiredon::DEFAULT_WARMUP_START;

#[derive(Parser)]
#[command(name = "wireoff", version, about = "Decide when to wire off a degraded vendor")]
struct Cli {
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, default_value = "./out")]
    output_dir: PathBuf,
    /// Master seed; every stage derives its own stream from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic incident from a scenario file.
    Synth {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Fit per-vendor baseline volume models.
    FitBaseline(FitBaselineArgs),
    /// Fit the availability smoother and forecast it.
    ForecastAvailability(AvailabilityArgs),
    /// Estimate retry, switch and interattempt distributions.
    EstimateBehavior(BehaviorArgs),
    /// Simulate the wired-on volume forecast.
    SimulateWiredon(ModelArgs),
    /// Fit the wired-off migration slope.
    FitWiredoff(WiredOffArgs),
    /// Residual diagnostics for the wired-off model and availability forecasts.
    Diagnose(DiagnoseArgs),
    /// Run everything and print the recommendation.
    Recommend(RecommendArgs),
    /// Start the HTTP service.
    Serve {
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Directory for session snapshots.
        #[arg(long)]
        state_dir: Option<PathBuf>,
    },
}

#[derive(Args, Clone)]
struct BaselineOpts {
    /// Hyperparameter search trials per vendor.
    #[arg(long, default_value_t = 20)]
    trials: usize,
    /// Minutes held out from the end of the history for the search.
    #[arg(long, default_value_t = 1440)]
    holdout: usize,
    #[arg(long, default_value_t = WEEK_MINUTES)]
    period: i64,
    #[arg(long, default_value_t = DEFAULT_CHANGEPOINTS)]
    changepoints: usize,
}

#[derive(Args, Clone)]
struct FitBaselineArgs {
    #[arg(long)]
    volumes: PathBuf,
    /// Decision time in epoch minutes; defaults to the last common minute.
    #[arg(long)]
    now: Option<i64>,
    #[arg(long, default_value_t = 60)]
    horizon: usize,
    #[command(flatten)]
    baseline: BaselineOpts,
}

#[derive(Args, Clone)]
struct AvailabilityArgs {
    #[arg(long)]
    availability: PathBuf,
    /// Problematic vendor; may be omitted if the file has only one.
    #[arg(long)]
    vendor: Option<String>,
    #[arg(long)]
    now: Option<i64>,
    #[arg(long, default_value_t = 60)]
    horizon: usize,
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    des_trials: usize,
    /// Most recent minutes used for smoothing.
    #[arg(long)]
    availability_window: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    rolling_window: usize,
    #[arg(long, default_value_t = DEFAULT_HORIZON)]
    rolling_horizon: usize,
}

#[derive(Args, Clone)]
struct BehaviorArgs {
    #[arg(long)]
    events: PathBuf,
    #[arg(long)]
    vendor: String,
    /// Seconds after a failure beyond which a later attempt is unrelated.
    #[arg(long, default_value_t = 1800)]
    session_gap: i64,
    #[arg(long)]
    no_smoothing: bool,
    /// Inclusive epoch-second range of events to use.
    #[arg(long, num_args = 2, value_names = ["FROM", "TO"])]
    window: Option<Vec<i64>>,
}

#[derive(Args, Clone)]
struct ModelArgs {
    #[arg(long)]
    volumes: PathBuf,
    #[arg(long)]
    availability: PathBuf,
    #[arg(long)]
    events: PathBuf,
    #[arg(long)]
    vendor: Option<String>,
    /// Decision time in epoch minutes; defaults to the last availability minute.
    #[arg(long)]
    now: Option<i64>,
    #[arg(long, default_value_t = 60)]
    horizon: usize,
    #[arg(long, default_value_t = 20)]
    replications: usize,
    #[arg(long, default_value_t = DEFAULT_WARMUP_START, allow_hyphen_values = true)]
    warmup: i64,
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    des_trials: usize,
    #[arg(long)]
    availability_window: Option<usize>,
    /// Spawn an extra customer with probability equal to the fractional volume.
    #[arg(long)]
    stochastic_rounding: bool,
    #[command(flatten)]
    baseline: BaselineOpts,
}

#[derive(Args, Clone)]
struct WiredOffArgs {
    #[arg(long)]
    history: PathBuf,
    #[arg(long)]
    vendor: Option<String>,
    /// Volumes for filling missing baseline columns in the history.
    #[arg(long)]
    volumes: Option<PathBuf>,
    #[arg(long)]
    now: Option<i64>,
    #[command(flatten)]
    baseline: BaselineOpts,
}

#[derive(Args, Clone)]
struct DiagnoseArgs {
    #[arg(long)]
    wiredoff_history: PathBuf,
    #[arg(long)]
    vendor: Option<String>,
    #[arg(long)]
    volumes: Option<PathBuf>,
    #[arg(long)]
    availability: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    max_lag: usize,
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    des_trials: usize,
    #[command(flatten)]
    baseline: BaselineOpts,
}

#[derive(Args, Clone)]
struct RecommendArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, conflicts_with = "wiredoff_model")]
    wiredoff_history: Option<PathBuf>,
    #[arg(long)]
    wiredoff_model: Option<PathBuf>,
}

struct Ctx {
    out: PathBuf,
    seed: u64,
    threads: Option<usize>,
}

impl Ctx {
    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let p = self.out.join(name);
        io::write_json(&p, value)?;
        Ok(p)
    }

    fn write_text(&self, name: &str, text: &str) -> Result<PathBuf> {
        let p = self.out.join(name);
        io::write_atomic(&p, text.as_bytes())?;
        Ok(p)
    }

    fn config(&self, m: &ModelArgs) -> PipelineConfig {
        PipelineConfig {
            seed: self.seed,
            horizon: m.horizon,
            baseline_trials: m.baseline.trials,
            des_trials: m.des_trials,
            replications: m.replications,
            warmup_start: m.warmup,
            changepoints: m.baseline.changepoints,
            period: m.baseline.period,
            holdout_minutes: m.baseline.holdout,
            availability_window: m.availability_window,
            stochastic_rounding: m.stochastic_rounding,
            threads: self.threads,
        }
    }

    fn baseline_config(&self, b: &BaselineOpts) -> PipelineConfig {
        PipelineConfig {
            seed: self.seed,
            baseline_trials: b.trials,
            changepoints: b.changepoints,
            period: b.period,
            holdout_minutes: b.holdout,
            threads: self.threads,
            ..PipelineConfig::default()
        }
    }
}

fn volumes_by_vendor(path: &Path) -> Result<BTreeMap<String, VolumeSeries>> {
    Ok(io::load_volumes(path)?)
}

fn load_inputs(m: &ModelArgs) -> Result<PipelineInputs> {
    let volumes = volumes_by_vendor(&m.volumes)?;
    let avail = io::load_availability(&m.availability, io::MAX_AVAILABILITY_GAP)?;
    let availability = PipelineInputs::availability_from(avail, m.vendor.as_deref())?;
    let events = io::load_events(&m.events)?;
    Ok(PipelineInputs { volumes, availability, events, wiredoff: None, now_epoch_minute: m.now })
}

fn csv_line(fields: &[String]) -> String {
    let mut s = fields.join(",");
    s.push('\n');
    s
}

fn cmd_synth(ctx: &Ctx, scenario: &Path, explicit_seed: Option<u64>) -> Result<()> {
    let s: Scenario = io::read_json(scenario)?;
    let seed = substream_seed(explicit_seed.unwrap_or(s.seed), SEED_GENERATOR);
    let g = generate(&s, seed)?;
    write_generated(&ctx.out, &g)?;
    ctx.write_json("scenario.json", &s)?;
    println!(
        "wrote {} volume series, {} availability minutes and {} events to {}",
        g.volumes.len(),
        g.availability.series().len(),
        g.events.len(),
        ctx.out.display()
    );
    Ok(())
}

fn fit_baselines(
    ctx: &Ctx,
    volumes: &BTreeMap<String, VolumeSeries>,
    anchor: TimeIndex,
    opts: &BaselineOpts,
) -> Result<BTreeMap<String, pipeline::BaselineFit>> {
    let config = ctx.baseline_config(opts);
    let mut fits = BTreeMap::new();
    for (vendor, v) in volumes {
        let fit = fit_baseline(&volume_history(v, anchor)?, &config)
            .with_context(|| format!("fitting baseline for {vendor}"))?;
        fits.insert(vendor.clone(), fit);
    }
    Ok(fits)
}

fn cmd_fit_baseline(ctx: &Ctx, a: &FitBaselineArgs) -> Result<()> {
    let volumes = volumes_by_vendor(&a.volumes)?;
    let anchor = match a.now {
        Some(t) => TimeIndex::new(t),
        None => common_end(&volumes).context("volumes file is empty")?,
    };
    let fits = fit_baselines(ctx, &volumes, anchor, &a.baseline)?;
    let models: BTreeMap<_, _> = fits.iter().map(|(k, f)| (k.clone(), &f.model)).collect();
    let trials: BTreeMap<_, _> = fits.iter().map(|(k, f)| (k.clone(), (&f.trials, f.best_trial))).collect();
    ctx.write_json("baseline_models.json", &models)?;
    ctx.write_json("baseline_trials.json", &trials)?;
    let mut csv = csv_line(&["offset_m", "vendor_id", "mean", "p10", "p90"].map(String::from));
    let seed = substream_seed(ctx.seed, SEED_CHANGEPOINTS);
    for f in fits.values() {
        let fc = forecast_baseline(&f.model, a.horizon, seed)?;
        for i in 0..fc.offsets.len() {
            csv.push_str(&csv_line(&[
                fc.offsets[i].to_string(),
                fc.vendor_id.clone(),
                format!("{:?}", fc.mean[i]),
                format!("{:?}", fc.p10[i]),
                format!("{:?}", fc.p90[i]),
            ]));
        }
    }
    let p = ctx.write_text("baseline_forecast.csv", &csv)?;
    println!("fitted {} baseline models; forecast in {}", fits.len(), p.display());
    Ok(())
}

fn cmd_forecast_availability(ctx: &Ctx, a: &AvailabilityArgs) -> Result<()> {
    let map = io::load_availability(&a.availability, io::MAX_AVAILABILITY_GAP)?;
    let availability = PipelineInputs::availability_from(map, a.vendor.as_deref())?;
    let inputs = PipelineInputs {
        volumes: BTreeMap::new(),
        availability,
        events: vec![],
        wiredoff: None,
        now_epoch_minute: a.now,
    };
    let config = PipelineConfig {
        seed: ctx.seed,
        des_trials: a.des_trials,
        availability_window: a.availability_window,
        ..PipelineConfig::default()
    };
    let fit = pipeline::fit_availability(&inputs, &config)?;
    ctx.write_json("des_model.json", &fit.model)?;
    ctx.write_json("des_trials.json", &fit.trials)?;
    let mut csv = csv_line(&["offset_m", "availability", "raw"].map(String::from));
    for (m, a, raw) in fit.forecast(a.horizon) {
        csv.push_str(&csv_line(&[m.to_string(), format!("{a:?}"), format!("{raw:?}")]));
    }
    ctx.write_text("availability_forecast.csv", &csv)?;
    let obs = inputs.availability_history(None)?;
    if obs.series().len() > a.rolling_window + a.rolling_horizon {
        let seed = substream_seed(config.stage_seed(pipeline::SEED_FIT), "rolling");
        let points = rolling_validate(&obs, a.rolling_window, a.rolling_horizon, a.des_trials, seed)?;
        let mut csv = csv_line(&["window_end", "alpha", "eta", "horizon_rmse"].map(String::from));
        for p in &points {
            csv.push_str(&csv_line(&[
                p.window_end.to_string(),
                format!("{:?}", p.alpha),
                format!("{:?}", p.eta),
                format!("{:?}", p.horizon_rmse),
            ]));
        }
        ctx.write_text("rolling_validation.csv", &csv)?;
    } else {
        log::warn!("availability history too short for rolling validation");
    }
    println!("α={} η={} S0={} b0={}", fit.model.alpha, fit.model.eta, fit.model.level, fit.model.trend);
    Ok(())
}

fn cmd_estimate_behavior(ctx: &Ctx, a: &BehaviorArgs) -> Result<()> {
    let events = io::load_events(&a.events)?;
    let options = EstimateOptions {
        smoothing: !a.no_smoothing,
        session_gap_seconds: Some(a.session_gap),
        window: a.window.as_ref().map(|w| (w[0], w[1])),
    };
    let dist = estimate(&events, &a.vendor, &options)?;
    let p = ctx.write_json("behavior.json", &dist)?;
    println!("behavior distributions up to k={} written to {}", dist.k_max_observed(), p.display());
    Ok(())
}

fn cmd_simulate(ctx: &Ctx, m: &ModelArgs) -> Result<()> {
    let inputs = load_inputs(m)?;
    let config = ctx.config(m);
    let fitted = fit_all(&inputs, &config)?;
    let forecast = fitted.simulate(&simulation_config(&config))?;
    ctx.write_text("wiredon.csv", &forecast.to_csv())?;
    let p = ctx.write_json("wiredon.json", &forecast)?;
    println!("wired-on forecast over {} minutes written to {}", forecast.horizon, p.display());
    Ok(())
}

fn wiredoff_source(history: &Path) -> Result<WiredOffSource> {
    Ok(WiredOffSource::History(io::load_wiredoff_history(history)?))
}

/// Fits the slope, filling missing baseline columns from fitted models.
fn wiredoff_fit(
    ctx: &Ctx,
    history: &Path,
    vendor: Option<&str>,
    volumes: Option<&Path>,
    opts: &BaselineOpts,
) -> Result<pipeline::WiredOffFit> {
    let rows = io::load_wiredoff_history(history)?;
    let complete = rows.iter().all(|r: &WiredOffRow| r.c_hat_n0.is_some());
    let (vendor, baselines) = match (complete, volumes) {
        (true, _) => (vendor.unwrap_or_default().to_string(), BTreeMap::new()),
        (false, None) => bail!(wireoff_core::Error::Validation(
            "history lacks baseline columns; pass --volumes to fit them".into()
        )),
        (false, Some(path)) => {
            let Some(vendor) = vendor else {
                bail!(wireoff_core::Error::Validation("--vendor is required with --volumes".into()))
            };
            let volumes = volumes_by_vendor(path)?;
            let anchor = common_end(&volumes).context("volumes file is empty")?;
            let fits = fit_baselines(ctx, &volumes, anchor, opts)?;
            (vendor.to_string(), fits.into_iter().map(|(k, f)| (k, f.model)).collect())
        }
    };
    Ok(fit_wiredoff(&WiredOffSource::History(rows), &vendor, &baselines)?)
}

fn cmd_fit_wiredoff(ctx: &Ctx, a: &WiredOffArgs) -> Result<()> {
    let fit = wiredoff_fit(ctx, &a.history, a.vendor.as_deref(), a.volumes.as_deref(), &a.baseline)?;
    ctx.write_json("wiredoff_model.json", &fit.model)?;
    ctx.write_json("wiredoff_fit.json", &fit)?;
    if !fit.model.delta_in_unit_interval() {
        eprintln!("warning: slope {} lies outside [0, 1]", fit.model.delta);
    }
    println!("Δ={}", fit.model.delta);
    Ok(())
}

fn cmd_diagnose(ctx: &Ctx, a: &DiagnoseArgs) -> Result<()> {
    let fit = wiredoff_fit(ctx, &a.wiredoff_history, a.vendor.as_deref(), a.volumes.as_deref(), &a.baseline)?;
    let mut doc = serde_json::Map::new();
    if let Some(report) = &fit.diagnostics {
        doc.insert(
            "wiredoff".into(),
            serde_json::json!({
                "report": report,
                "dw_passes": report.dw_passes(),
                "hc_passes": report.hc_passes(),
                "acf_lag1_within_band": report.acf_lag1_within_band(),
            }),
        );
        ctx.write_text("qq.csv", &report.qq_csv())?;
        let mut acf = csv_line(&["lag", "acf"].map(String::from));
        for (i, v) in report.acf.iter().enumerate() {
            acf.push_str(&csv_line(&[i.to_string(), format!("{v:?}")]));
        }
        ctx.write_text("acf.csv", &acf)?;
    }
    if let Some(adf) = &fit.adf {
        doc.insert("adf".into(), serde_json::to_value(adf)?);
    }
    if let Some(path) = &a.availability {
        let map = io::load_availability(path, io::MAX_AVAILABILITY_GAP)?;
        let availability = PipelineInputs::availability_from(map, a.vendor.as_deref())?;
        let inputs = PipelineInputs {
            volumes: BTreeMap::new(),
            availability,
            events: vec![],
            wiredoff: None,
            now_epoch_minute: None,
        };
        let obs = inputs.availability_history(None)?;
        let seed = substream_seed(substream_seed(ctx.seed, pipeline::SEED_FIT), "rolling");
        let points = rolling_validate(&obs, DEFAULT_WINDOW, DEFAULT_HORIZON, a.des_trials, seed)?;
        doc.insert("availability_rolling".into(), serde_json::to_value(points)?);
    }
    let p = ctx.write_json("diagnostics.json", &doc)?;
    println!("diagnostics written to {}", p.display());
    Ok(())
}

fn cmd_recommend(ctx: &Ctx, a: &RecommendArgs) -> Result<()> {
    let mut inputs = load_inputs(&a.model)?;
    let source = match (&a.wiredoff_history, &a.wiredoff_model) {
        (Some(h), _) => wiredoff_source(h)?,
        (None, Some(m)) => WiredOffSource::Model(io::read_json::<WiredOffModel>(m)?),
        (None, None) => {
            let sibling = a.model.volumes.parent().unwrap_or(Path::new(".")).join("wiredoff_history.csv");
            if !sibling.exists() {
                bail!(wireoff_core::Error::Validation(format!(
                    "no wired-off input: pass --wiredoff-history or --wiredoff-model (looked for {})",
                    sibling.display()
                )));
            }
            wiredoff_source(&sibling)?
        }
    };
    inputs.wiredoff = Some(source);
    let config = ctx.config(&a.model);
    let run = pipeline::run(&inputs, &config)?;
    ctx.write_json("recommendation.json", &run.recommendation)?;
    ctx.write_text("wiredon.csv", &run.wiredon.to_csv())?;
    ctx.write_json("models.json", &run.fitted)?;
    let wired_off = run.curves.wired_off()?;
    let mut csv = csv_line(&["offset_m", "C_n0", "C_other", "W_on", "W_off", "margin"].map(String::from));
    for (i, p) in run.recommendation.curves.iter().enumerate() {
        csv.push_str(&csv_line(&[
            p.offset_m.to_string(),
            format!("{:?}", run.curves.c_n0[i]),
            format!("{:?}", run.curves.c_other[i]),
            format!("{:?}", p.wired_on),
            format!("{:?}", wired_off[i]),
            format!("{:?}", p.wired_off - p.wired_on),
        ]));
    }
    ctx.write_text("curves.csv", &csv)?;
    println!("{}", serde_json::to_string_pretty(&run.recommendation)?);
    println!("{}", run.recommendation.summary());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let ctx = Ctx { out: cli.output_dir.clone(), seed: cli.seed.unwrap_or(0), threads: cli.threads };
    match &cli.command {
        Command::Synth { scenario } => cmd_synth(&ctx, scenario, cli.seed),
        Command::FitBaseline(a) => cmd_fit_baseline(&ctx, a),
        Command::ForecastAvailability(a) => cmd_forecast_availability(&ctx, a),
        Command::EstimateBehavior(a) => cmd_estimate_behavior(&ctx, a),
        Command::SimulateWiredon(a) => cmd_simulate(&ctx, a),
        Command::FitWiredoff(a) => cmd_fit_wiredoff(&ctx, a),
        Command::Diagnose(a) => cmd_diagnose(&ctx, a),
        Command::Recommend(a) => cmd_recommend(&ctx, a),
        Command::Serve { host, port, state_dir } => {
            let mut rt = tokio::runtime::Builder::new_multi_thread();
            if let Some(n) = cli.threads {
                rt.worker_threads(n.max(1));
            }
            rt.enable_all().build()?.block_on(wireoff_service::serve(&format!("{host}:{port}"), state_dir.clone()))
                .map_err(Into::into)
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<wireoff_core::Error>() {
        Some(e) if !e.is_input_error() => 1,
        Some(_) => 2,
        None => 1,
    }
}

/// The error chain joined by ": ", skipping causes already spelled out.
fn describe(err: &anyhow::Error) -> String {
    let mut text = String::new();
    for cause in err.chain() {
        let part = cause.to_string();
        if !text.contains(&part) {
            if !text.is_empty() {
                text.push_str(": ");
            }
            text.push_str(&part);
        }
    }
    text
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("WIREOFF_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
