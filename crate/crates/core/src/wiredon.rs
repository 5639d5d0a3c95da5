//! Monte Carlo projection of customers who start with the problematic vendor
//! while it stays enabled, aggregated into a wired-on volume forecast.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::availability::{des_forecast, DesModel};
use crate::behavior::{sample_interattempt, sample_retry, sample_switch, BehaviorDistributions};
use crate::error::{Error, Result};
use crate::rng;
use crate::series::{AvailabilitySeries, MinuteSeries, TimeIndex};

/// Hard cap on failures before a customer gives up.
pub const MAX_FAILURES: u32 = 15;
pub const DEFAULT_WARMUP_START: i64 = -10;
pub const DEFAULT_REPLICATIONS: usize = 20;

/// Probability of a successful first attempt at a given minute offset.
pub trait AvailabilitySource: Sync {
    fn at(&self, minute: i64) -> f64;
}

#[derive(Debug, Clone, Copy)]
pub struct ConstantAvailability(pub f64);

impl AvailabilitySource for ConstantAvailability {
    fn at(&self, _minute: i64) -> f64 {
        self.0
    }
}

/// Wraps a closure as an availability source.
pub struct FnAvailability<F>(pub F);

impl<F: Fn(i64) -> f64 + Sync> AvailabilitySource for FnAvailability<F> {
    fn at(&self, minute: i64) -> f64 {
        (self.0)(minute).clamp(0.0, 1.0)
    }
}

/// Observed availability for `m <= 0`, smoothing forecast afterwards.
#[derive(Debug, Clone)]
pub struct AvailabilityProvider {
    pub actuals: AvailabilitySeries,
    pub model: DesModel,
}

impl AvailabilityProvider {
    pub fn new(actuals: AvailabilitySeries, model: DesModel) -> Result<Self> {
        if actuals.series().end() != 0 {
            return Err(Error::Validation(format!(
                "availability actuals must end at offset 0, end at {}",
                actuals.series().end()
            )));
        }
        Ok(Self { actuals, model })
    }
}

impl AvailabilitySource for AvailabilityProvider {
    fn at(&self, minute: i64) -> f64 {
        if minute <= 0 {
            let s = self.actuals.series();
            // before the first observation, hold the earliest value
            s.get(minute.max(s.start())).unwrap_or(0.0)
        } else {
            des_forecast(&self.model, minute)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Status {
    SuccessProblematic,
    SuccessOther,
    Abandoned,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CustomerOutcome {
    pub status: Status,
    /// `⌊m⌋` when the decision was made.
    pub decision_offset: i64,
    pub failures: u32,
}

/// One customer's journey: attempt the problematic vendor, and after each
/// failure decide whether to retry, wait, and whether to switch vendors.
pub fn simulate_customer<R: Rng + ?Sized>(
    start_m: f64,
    availability: &dyn AvailabilitySource,
    dist: &BehaviorDistributions,
    rng: &mut R,
) -> CustomerOutcome {
    let mut m = start_m;
    let mut k: u32 = 0;
    let done = |status, m: f64, k| CustomerOutcome {
        status,
        decision_offset: m.floor() as i64,
        failures: k,
    };
    while k <= MAX_FAILURES {
        let a = availability.at(m.floor() as i64);
        if rng::unit_open_closed(rng) <= a {
            return done(Status::SuccessProblematic, m, k);
        }
        k += 1;
        if !sample_retry(dist, k, rng) || k == MAX_FAILURES {
            return done(Status::Abandoned, m, k);
        }
        let wait = sample_interattempt(dist, rng);
        m += f64::from(wait) / 60.0;
        if sample_switch(dist, k, rng) {
            return done(Status::SuccessOther, m, k);
        }
    }
    done(Status::Abandoned, m, k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub horizon: usize,
    pub warmup_start: i64,
    pub replications: usize,
    pub master_seed: u64,
    /// Spawn one extra customer with probability `frac(Ĉ)` instead of flooring.
    pub stochastic_rounding: bool,
    /// Worker threads; `None` uses the global pool. Never changes results.
    pub threads: Option<usize>,
}

impl SimulationConfig {
    pub fn new(horizon: usize, replications: usize, master_seed: u64) -> Self {
        Self {
            horizon,
            warmup_start: DEFAULT_WARMUP_START,
            replications,
            master_seed,
            stochastic_rounding: false,
            threads: None,
        }
    }
}

/// Outcome counts of a single replication over minutes `1..=R`, plus the
/// bookkeeping needed to account for every spawned customer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplicationTally {
    pub success_problematic: Vec<u64>,
    pub success_other: Vec<u64>,
    pub abandoned: Vec<u64>,
    pub spawned: u64,
    /// Decisions after minute `R`.
    pub in_flight: u64,
    /// Decisions before minute 1.
    pub before_horizon: u64,
}

impl ReplicationTally {
    fn empty(horizon: usize) -> Self {
        Self {
            success_problematic: vec![0; horizon],
            success_other: vec![0; horizon],
            abandoned: vec![0; horizon],
            spawned: 0,
            in_flight: 0,
            before_horizon: 0,
        }
    }

    fn merge(mut self, other: Self) -> Self {
        for (a, b) in [
            (&mut self.success_problematic, &other.success_problematic),
            (&mut self.success_other, &other.success_other),
            (&mut self.abandoned, &other.abandoned),
        ] {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        self.spawned += other.spawned;
        self.in_flight += other.in_flight;
        self.before_horizon += other.before_horizon;
        self
    }

    pub fn resolved(&self) -> u64 {
        [&self.success_problematic, &self.success_other, &self.abandoned]
            .iter()
            .flat_map(|v| v.iter())
            .sum()
    }

    /// Every spawned customer is resolved inside the horizon, still in
    /// flight after it, or decided before it.
    pub fn is_conserved(&self) -> bool {
        self.spawned == self.resolved() + self.in_flight + self.before_horizon
    }
}

fn spawn_count(volume: f64, stochastic: bool, rng: &mut rng::StreamRng) -> u64 {
    let base = volume.max(0.0).floor();
    let extra = stochastic && rng::unit_closed_open(rng) < volume - base;
    base as u64 + u64::from(extra)
}

/// Runs every replication. Each customer draws from its own stream keyed by
/// `(replication, spawn minute, customer index)`.
pub fn simulate_replications(
    problematic_volume: &MinuteSeries,
    availability: &dyn AvailabilitySource,
    dist: &BehaviorDistributions,
    config: &SimulationConfig,
) -> Result<Vec<ReplicationTally>> {
    let horizon = config.horizon;
    if horizon < 1 {
        return Err(Error::Simulation("horizon is empty".into()));
    }
    if config.replications < 1 {
        return Err(Error::Validation("at least one replication is required".into()));
    }
    if config.warmup_start > DEFAULT_WARMUP_START {
        return Err(Error::Validation(format!(
            "warm-up must start at or before {DEFAULT_WARMUP_START}, got {}",
            config.warmup_start
        )));
    }
    let last = horizon as i64;
    if problematic_volume.start() > config.warmup_start || problematic_volume.end() < last {
        return Err(Error::Alignment(format!(
            "problematic volume covers [{}, {}], need [{}, {last}]",
            problematic_volume.start(),
            problematic_volume.end(),
            config.warmup_start
        )));
    }

    let run = || -> Vec<ReplicationTally> {
        let jobs: Vec<(usize, i64)> = (0..config.replications)
            .flat_map(|r| (config.warmup_start..=last).map(move |m| (r, m)))
            .collect();
        let per_job: Vec<(usize, ReplicationTally)> = jobs
            .into_par_iter()
            .map(|(rep, minute)| {
                let mut tally = ReplicationTally::empty(horizon);
                let volume = problematic_volume.get(minute).unwrap_or(0.0);
                let mut spawn_rng = rng::stream(config.master_seed, &[rep as u64, minute as u64, u64::MAX]);
                let n = spawn_count(volume, config.stochastic_rounding, &mut spawn_rng);
                tally.spawned = n;
                for i in 0..n {
                    let mut crng = rng::stream(config.master_seed, &[rep as u64, minute as u64, i]);
                    let out = simulate_customer(minute as f64, availability, dist, &mut crng);
                    let d = out.decision_offset;
                    if d < 1 {
                        tally.before_horizon += 1;
                    } else if d > last {
                        tally.in_flight += 1;
                    } else {
                        let bin = match out.status {
                            Status::SuccessProblematic => &mut tally.success_problematic,
                            Status::SuccessOther => &mut tally.success_other,
                            Status::Abandoned => &mut tally.abandoned,
                        };
                        bin[(d - 1) as usize] += 1;
                    }
                }
                (rep, tally)
            })
            .collect();
        let mut reps: Vec<ReplicationTally> =
            (0..config.replications).map(|_| ReplicationTally::empty(horizon)).collect();
        for (rep, t) in per_job {
            let slot = std::mem::replace(&mut reps[rep], ReplicationTally::empty(horizon));
            reps[rep] = slot.merge(t);
        }
        reps
    };

    let tallies = match config.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Simulation(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    };
    debug_assert!(tallies.iter().all(ReplicationTally::is_conserved));
    Ok(tallies)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WiredOnMinute {
    pub offset_m: i64,
    pub w_on_mean: f64,
    pub w_on_p10: f64,
    pub w_on_p90: f64,
    pub a_n0: f64,
    pub a_other: f64,
    pub c_other: f64,
    pub abandoned: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WiredOnForecast {
    pub anchor: TimeIndex,
    pub horizon: usize,
    pub replications: usize,
    pub minutes: Vec<WiredOnMinute>,
    pub tallies: Vec<ReplicationTally>,
}

impl WiredOnForecast {
    pub fn mean_curve(&self) -> Vec<f64> {
        self.minutes.iter().map(|m| m.w_on_mean).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("offset_m,W_on_mean,W_on_p10,W_on_p90,A_n0,A_other,C_other\n");
        for m in &self.minutes {
            out.push_str(&format!(
                "{},{:?},{:?},{:?},{:?},{:?},{:?}\n",
                m.offset_m, m.w_on_mean, m.w_on_p10, m.w_on_p90, m.a_n0, m.a_other, m.c_other
            ));
        }
        out
    }
}

/// Linear-interpolation quantile of an unsorted sample.
pub(crate) fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Wired-on volume `Â_n0 + Â_other + Ĉ_other` per minute of the horizon,
/// averaged over replications with 10th/90th percentile bands.
pub fn simulate_wiredon(
    problematic_volume: &MinuteSeries,
    other_volume: &MinuteSeries,
    availability: &dyn AvailabilitySource,
    dist: &BehaviorDistributions,
    config: &SimulationConfig,
) -> Result<WiredOnForecast> {
    let last = config.horizon as i64;
    if other_volume.start() > 1 || other_volume.end() < last {
        return Err(Error::Alignment(format!(
            "other-vendor volume covers [{}, {}], need [1, {last}]",
            other_volume.start(),
            other_volume.end()
        )));
    }
    let tallies = simulate_replications(problematic_volume, availability, dist, config)?;
    let reps = tallies.len() as f64;
    let minutes = (0..config.horizon)
        .map(|i| {
            let offset_m = i as i64 + 1;
            let c_other = other_volume.get(offset_m).unwrap();
            let w: Vec<f64> = tallies
                .iter()
                .map(|t| (t.success_problematic[i] + t.success_other[i]) as f64 + c_other)
                .collect();
            let mean_of = |f: &dyn Fn(&ReplicationTally) -> u64| {
                tallies.iter().map(|t| f(t) as f64).sum::<f64>() / reps
            };
            let a_n0 = mean_of(&|t| t.success_problematic[i]);
            let a_other = mean_of(&|t| t.success_other[i]);
            WiredOnMinute {
                offset_m,
                w_on_mean: a_n0 + a_other + c_other,
                w_on_p10: quantile(&w, 0.1),
                w_on_p90: quantile(&w, 0.9),
                a_n0,
                a_other,
                c_other,
                abandoned: mean_of(&|t| t.abandoned[i]),
            }
        })
        .collect();
    Ok(WiredOnForecast {
        anchor: problematic_volume.anchor(),
        horizon: config.horizon,
        replications: config.replications,
        minutes,
        tallies,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::behavior::Interattempt;
    use crate::rng::stream;

    fn behavior(retry: f64, switch: f64, wait: u32) -> BehaviorDistributions {
        BehaviorDistributions::constant(retry, switch, Interattempt::point_mass(wait)).unwrap()
    }

    fn flat(from: i64, to: i64, v: f64) -> MinuteSeries {
        MinuteSeries::new(TimeIndex::new(0), from, vec![v; (to - from + 1) as usize]).unwrap()
    }

    #[test]
    fn always_available_succeeds_immediately() {
        let d = behavior(0.5, 0.5, 60);
        for i in 0..1000 {
            let mut rng = stream(1, &[i]);
            let o = simulate_customer(3.7, &ConstantAvailability(1.0), &d, &mut rng);
            assert_eq!(o, CustomerOutcome { status: Status::SuccessProblematic, decision_offset: 3, failures: 0 });
        }
    }

    #[test]
    fn never_available_never_retrying_abandons() {
        let d = behavior(0.0, 0.5, 60);
        for i in 0..1000 {
            let mut rng = stream(2, &[i]);
            let o = simulate_customer(-4.0, &ConstantAvailability(0.0), &d, &mut rng);
            assert_eq!(o.status, Status::Abandoned);
            assert_eq!(o.decision_offset, -4);
            assert_eq!(o.failures, 1);
        }
    }

    #[test]
    fn always_switching_after_two_minutes() {
        let d = behavior(1.0, 1.0, 120);
        for i in 0..1000 {
            let mut rng = stream(3, &[i]);
            let o = simulate_customer(5.0, &ConstantAvailability(0.0), &d, &mut rng);
            assert_eq!(o.status, Status::SuccessOther);
            assert_eq!(o.decision_offset, 7);
        }
    }

    #[test]
    fn failure_cap_abandons_at_fifteen() {
        let d = behavior(1.0, 0.0, 30);
        let mut rng = stream(4, &[]);
        let o = simulate_customer(0.0, &ConstantAvailability(0.0), &d, &mut rng);
        assert_eq!(o.status, Status::Abandoned);
        assert_eq!(o.failures, MAX_FAILURES);
        // 14 waits of 30 s before the 15th failure
        assert_eq!(o.decision_offset, 7);
    }

    #[test]
    fn provider_uses_actuals_then_forecast() {
        let actuals = AvailabilitySeries::new("p", MinuteSeries::ending_now(TimeIndex::new(0), vec![0.9, 0.8, 0.7]).unwrap()).unwrap();
        let model = DesModel { alpha: 1.0, eta: 1.0, level: 0.7, trend: -0.1, window: (-2, 0), fit_rmse: 0.0 };
        let p = AvailabilityProvider::new(actuals, model).unwrap();
        assert_eq!(p.at(-2), 0.9);
        assert_eq!(p.at(-50), 0.9);
        assert_eq!(p.at(0), 0.7);
        assert!((p.at(2) - 0.5).abs() < 1e-12);
        assert_eq!(p.at(100), 0.0);
    }

    #[test]
    fn full_availability_gives_baseline_sum() {
        let cfg = SimulationConfig::new(30, 3, 9);
        let f = simulate_wiredon(&flat(-10, 30, 100.0), &flat(1, 30, 50.0), &ConstantAvailability(1.0), &behavior(0.5, 0.5, 60), &cfg).unwrap();
        assert!(f.minutes.iter().all(|m| m.w_on_mean == 150.0 && m.a_other == 0.0));
        assert!(f.tallies.iter().all(ReplicationTally::is_conserved));
    }

    #[test]
    fn everyone_abandons() {
        let cfg = SimulationConfig::new(20, 2, 9);
        let f = simulate_wiredon(&flat(-10, 20, 80.0), &flat(1, 20, 33.5), &ConstantAvailability(0.0), &behavior(0.0, 1.0, 60), &cfg).unwrap();
        assert!(f.minutes.iter().all(|m| m.w_on_mean == 33.5 && m.abandoned == 80.0));
    }

    #[test]
    fn one_minute_cohort_shift() {
        let cfg = SimulationConfig::new(25, 2, 1);
        let f = simulate_wiredon(&flat(-10, 25, 100.0), &flat(1, 25, 10.0), &ConstantAvailability(0.0), &behavior(1.0, 1.0, 60), &cfg).unwrap();
        for m in &f.minutes {
            assert_eq!(m.a_other, 100.0);
            assert_eq!(m.w_on_mean, 110.0);
        }
        for t in &f.tallies {
            assert!(t.is_conserved());
            assert_eq!(t.in_flight, 100);
            assert_eq!(t.before_horizon, 1000);
        }
    }

    #[test]
    fn results_do_not_depend_on_threads() {
        let d = behavior(0.6, 0.3, 90);
        let avail = FnAvailability(|m: i64| 0.7 - 0.01 * m as f64);
        let vol = flat(-10, 40, 57.6);
        let mut cfg = SimulationConfig::new(40, 4, 2024);
        cfg.threads = Some(1);
        let a = simulate_replications(&vol, &avail, &d, &cfg).unwrap();
        cfg.threads = Some(8);
        let b = simulate_replications(&vol, &avail, &d, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn higher_availability_never_lowers_direct_successes() {
        let d = behavior(0.8, 0.2, 45);
        let vol = flat(-10, 30, 40.0);
        let cfg = SimulationConfig::new(30, 3, 77);
        let low = simulate_replications(&vol, &ConstantAvailability(0.4), &d, &cfg).unwrap();
        let high = simulate_replications(&vol, &FnAvailability(|m: i64| if m % 2 == 0 { 0.6 } else { 0.4 }), &d, &cfg).unwrap();
        let total = |ts: &[ReplicationTally]| -> u64 { ts.iter().map(|t| t.success_problematic.iter().sum::<u64>()).sum() };
        // common random numbers: per-customer streams are identical in both runs
        let direct_low: u64 = {
            let mut n = 0;
            for rep in 0..3u64 {
                for minute in -10i64..=30 {
                    for i in 0..40u64 {
                        let mut r1 = stream(77, &[rep, minute as u64, i]);
                        let mut r2 = stream(77, &[rep, minute as u64, i]);
                        let a = simulate_customer(minute as f64, &ConstantAvailability(0.4), &d, &mut r1);
                        let b = simulate_customer(minute as f64, &FnAvailability(|m: i64| if m % 2 == 0 { 0.6 } else { 0.4 }), &d, &mut r2);
                        if a.status == Status::SuccessProblematic {
                            n += 1;
                            assert_eq!(b.status, Status::SuccessProblematic);
                        }
                    }
                }
            }
            n
        };
        assert!(direct_low > 0);
        assert!(total(&high) >= total(&low));
    }

    #[test]
    fn success_fraction_converges_to_availability() {
        let a = 0.35;
        let cfg = SimulationConfig::new(5, 40, 3);
        let f = simulate_replications(&flat(-10, 5, 500.0), &ConstantAvailability(a), &behavior(0.0, 0.0, 60), &cfg).unwrap();
        let n: u64 = f.iter().map(|t| t.resolved()).sum();
        let s: u64 = f.iter().map(|t| t.success_problematic.iter().sum::<u64>()).sum();
        let frac = s as f64 / n as f64;
        assert!((frac - a).abs() < 3.0 * (a * (1.0 - a) / n as f64).sqrt());
    }

    #[test]
    fn stochastic_rounding_spawns_fractional_mass() {
        let mut cfg = SimulationConfig::new(10, 50, 5);
        cfg.stochastic_rounding = true;
        let f = simulate_replications(&flat(-10, 10, 2.5), &ConstantAvailability(1.0), &behavior(0.0, 0.0, 1), &cfg).unwrap();
        let spawned: u64 = f.iter().map(|t| t.spawned).sum();
        let expected = 2.5 * 21.0 * 50.0;
        assert!((spawned as f64 - expected).abs() < 4.0 * (0.25f64 * 21.0 * 50.0).sqrt());
        cfg.stochastic_rounding = false;
        let f = simulate_replications(&flat(-10, 10, 2.5), &ConstantAvailability(1.0), &behavior(0.0, 0.0, 1), &cfg).unwrap();
        assert!(f.iter().all(|t| t.spawned == 42));
    }

    #[test]
    fn rejects_bad_configs() {
        let d = behavior(0.5, 0.5, 60);
        let vol = flat(-10, 10, 5.0);
        let cfg = SimulationConfig::new(0, 1, 1);
        assert!(matches!(simulate_replications(&vol, &ConstantAvailability(1.0), &d, &cfg), Err(Error::Simulation(_))));
        let cfg = SimulationConfig::new(20, 1, 1);
        assert!(matches!(simulate_replications(&vol, &ConstantAvailability(1.0), &d, &cfg), Err(Error::Alignment(_))));
        let mut cfg = SimulationConfig::new(10, 1, 1);
        cfg.warmup_start = -5;
        assert!(simulate_replications(&vol, &ConstantAvailability(1.0), &d, &cfg).is_err());
    }

    #[test]
    fn csv_header() {
        let cfg = SimulationConfig::new(2, 1, 1);
        let f = simulate_wiredon(&flat(-10, 2, 1.0), &flat(1, 2, 1.0), &ConstantAvailability(1.0), &behavior(0.5, 0.5, 60), &cfg).unwrap();
        let csv = f.to_csv();
        assert!(csv.starts_with("offset_m,W_on_mean,W_on_p10,W_on_p90,A_n0,A_other,C_other\n1,2.0,"));
        assert_eq!(quantile(&[3.0, 1.0, 2.0, 4.0], 0.5), 2.5);
    }
}
