//! Synthetic incidents with known ground truth. The customer process here is
//! written independently of the wired-on simulator (seconds-based clock, its
//! own random source and samplers) so the two can be checked against each
//! other.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::baseline::WEEK_MINUTES;
use crate::behavior::{AttemptEvent, Outcome};
use crate::data::io::WiredOffRow;
use crate::error::{Error, Result};
use crate::rng::substream_seed;
use crate::series::{AvailabilitySeries, MinuteSeries, TimeIndex, VolumeSeries};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VendorSpec {
    pub id: String,
    pub mean_volume: f64,
    /// Log-scale `(cos, sin)` coefficients per weekly harmonic.
    #[serde(default)]
    pub fourier: Vec<(f64, f64)>,
    /// Log-volume growth per week.
    #[serde(default)]
    pub trend_per_week: f64,
    /// `(offset, change in log growth per week)` breaks in the trend.
    #[serde(default)]
    pub changepoints: Vec<(i64, f64)>,
    #[serde(default)]
    pub noise_sd: f64,
}

impl VendorSpec {
    /// Noise-free log volume at minute offset `m`.
    pub fn log_mean(&self, m: i64, period: i64) -> f64 {
        let phase = 2.0 * PI * (m.rem_euclid(period) as f64) / period as f64;
        let seasonal: f64 = self
            .fourier
            .iter()
            .enumerate()
            .map(|(h, (a, b))| {
                let x = (h + 1) as f64 * phase;
                a * x.cos() + b * x.sin()
            })
            .sum();
        let per_week = |d: i64| d as f64 / WEEK_MINUTES as f64;
        let trend = self.trend_per_week * per_week(m)
            + self
                .changepoints
                .iter()
                .map(|&(u, c)| c * per_week((m - u).max(0)))
                .sum::<f64>();
        self.mean_volume.ln() + seasonal + trend
    }

    pub fn mean(&self, m: i64, period: i64) -> f64 {
        self.log_mean(m, period).exp()
    }
}

/// Piecewise-linear in the minute offset, constant beyond the end points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvailabilityProfile {
    pub points: Vec<(i64, f64)>,
    #[serde(default)]
    pub noise_sd: f64,
}

impl AvailabilityProfile {
    pub fn constant(a: f64) -> Self {
        Self { points: vec![(0, a)], noise_sd: 0.0 }
    }

    pub fn at(&self, m: i64) -> f64 {
        let pts = &self.points;
        let v = match pts.iter().position(|&(x, _)| x > m) {
            Some(0) => pts[0].1,
            None => pts[pts.len() - 1].1,
            Some(i) => {
                let (x0, y0) = pts[i - 1];
                let (x1, y1) = pts[i];
                y0 + (y1 - y0) * (m - x0) as f64 / (x1 - x0) as f64
            }
        };
        v.clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorTruth {
    /// `π_k` for `k = 1, 2, …`; the last entry extends to larger `k`.
    pub retry_p: Vec<f64>,
    pub switch_p: Vec<f64>,
    pub interattempt_pmf: Vec<(u32, f64)>,
}

impl BehaviorTruth {
    fn lookup(table: &[f64], k: u32) -> f64 {
        table[(k as usize).clamp(1, table.len()) - 1]
    }

    fn wait<R: Rng>(&self, rng: &mut R) -> u32 {
        let total: f64 = self.interattempt_pmf.iter().map(|p| p.1).sum();
        let mut u = rng.random::<f64>() * total;
        for &(s, p) in &self.interattempt_pmf {
            if u < p {
                return s;
            }
            u -= p;
        }
        self.interattempt_pmf.last().map_or(0, |p| p.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WiredOffTruth {
    pub delta: f64,
    /// First minute offset of the past wire-off window.
    pub window_start: i64,
    pub window_minutes: usize,
    /// Multiplicative noise level on the observed wired-off total.
    pub noise_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSpec {
    pub customers_per_minute: u32,
    /// Events are generated for customers arriving in the last this many
    /// minutes up to the decision time.
    pub minutes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub anchor_epoch_minute: i64,
    pub history_minutes: usize,
    #[serde(default = "default_period")]
    pub period: i64,
    pub horizon: usize,
    pub vendors: Vec<VendorSpec>,
    pub problematic_vendor: String,
    pub availability: AvailabilityProfile,
    pub availability_minutes: usize,
    pub behavior: BehaviorTruth,
    pub wireoff: WiredOffTruth,
    pub events: EventSpec,
    /// Minute at which operators actually disabled the vendor.
    #[serde(default)]
    pub actual_wireoff_m: Option<i64>,
}

fn default_period() -> i64 {
    WEEK_MINUTES
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Validation(m));
        if self.vendors.iter().filter(|v| v.id == self.problematic_vendor).count() != 1 {
            return bad(format!("problematic vendor {} must appear exactly once", self.problematic_vendor));
        }
        if self.vendors.len() < 2 {
            return bad("at least two vendors are required".into());
        }
        if self.vendors.iter().any(|v| !(v.mean_volume > 0.0) || v.noise_sd < 0.0) {
            return bad("vendor volumes must be positive and noise non-negative".into());
        }
        if self.history_minutes < 2 || self.availability_minutes < 2 || self.horizon < 1 {
            return bad("history, availability window and horizon must be non-trivial".into());
        }
        if self.period < 2 {
            return bad("period must be at least 2".into());
        }
        if self.availability.points.is_empty()
            || self.availability.points.windows(2).any(|w| w[0].0 >= w[1].0)
            || self.availability.points.iter().any(|p| !(0.0..=1.0).contains(&p.1))
        {
            return bad("availability profile needs increasing offsets and values in [0, 1]".into());
        }
        let b = &self.behavior;
        if b.retry_p.is_empty() || b.switch_p.is_empty() || b.interattempt_pmf.is_empty() {
            return bad("behavior truth tables must be non-empty".into());
        }
        if b.retry_p.iter().chain(&b.switch_p).any(|p| !(0.0..=1.0).contains(p))
            || b.interattempt_pmf.iter().any(|&(_, p)| !(p >= 0.0))
            || b.interattempt_pmf.iter().map(|p| p.1).sum::<f64>() <= 0.0
        {
            return bad("behavior probabilities out of range".into());
        }
        if self.wireoff.window_minutes < 2 || !self.wireoff.delta.is_finite() || self.wireoff.noise_fraction < 0.0 {
            return bad("wire-off truth is invalid".into());
        }
        Ok(())
    }

    pub fn anchor(&self) -> TimeIndex {
        TimeIndex::new(self.anchor_epoch_minute)
    }

    fn problematic(&self) -> &VendorSpec {
        self.vendors.iter().find(|v| v.id == self.problematic_vendor).unwrap()
    }

    fn others(&self) -> impl Iterator<Item = &VendorSpec> {
        self.vendors.iter().filter(|v| v.id != self.problematic_vendor)
    }
}

/// What the generator knows that the engine has to estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthBundle {
    pub scenario: String,
    pub anchor_epoch_minute: i64,
    pub horizon: usize,
    /// Noise-free baseline over minutes `1..=R` per vendor.
    pub baseline_future: BTreeMap<String, Vec<f64>>,
    pub availability_future: Vec<f64>,
    pub delta: f64,
    pub behavior: BehaviorTruth,
    pub actual_wireoff_m: Option<i64>,
}

#[derive(Debug, Clone)]
pub struct Generated {
    pub volumes: Vec<VolumeSeries>,
    pub availability: AvailabilitySeries,
    pub events: Vec<AttemptEvent>,
    pub wiredoff_history: Vec<WiredOffRow>,
    pub truth: TruthBundle,
}

/// How one simulated customer ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fate {
    Direct,
    Switched,
    GaveUp,
}

/// Straight-line customer loop on a seconds clock. `emit` receives every
/// attempt as `(second, with_problematic, succeeded)`.
pub fn customer_journey<R: Rng>(
    start_second: i64,
    availability: &dyn Fn(i64) -> f64,
    truth: &BehaviorTruth,
    rng: &mut R,
    mut emit: impl FnMut(i64, bool, bool),
) -> (Fate, i64) {
    let mut now = start_second;
    let mut failures = 0u32;
    loop {
        let up = rng.random::<f64>() < availability(now.div_euclid(60));
        emit(now, true, up);
        if up {
            return (Fate::Direct, now);
        }
        failures += 1;
        let keeps_going = rng.random::<f64>() < BehaviorTruth::lookup(&truth.retry_p, failures);
        if !keeps_going || failures >= 15 {
            return (Fate::GaveUp, now);
        }
        now += i64::from(truth.wait(rng));
        if rng.random::<f64>() < BehaviorTruth::lookup(&truth.switch_p, failures) {
            emit(now, false, true);
            return (Fate::Switched, now);
        }
    }
}

/// Per-minute mean and variance across replications of each outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleOutcomes {
    pub replications: usize,
    pub direct: Vec<(f64, f64)>,
    pub switched: Vec<(f64, f64)>,
    pub gave_up: Vec<(f64, f64)>,
}

/// Replays `customers[i]` arrivals at minute `first_minute + i` through the
/// independent customer loop and bins fates by decision minute in `1..=R`.
pub fn oracle_outcomes(
    customers: &[u64],
    first_minute: i64,
    availability: &dyn Fn(i64) -> f64,
    truth: &BehaviorTruth,
    horizon: usize,
    replications: usize,
    seed: u64,
) -> OracleOutcomes {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut runs = vec![[vec![0u64; horizon], vec![0u64; horizon], vec![0u64; horizon]]; replications];
    for run in runs.iter_mut() {
        for (i, &n) in customers.iter().enumerate() {
            let minute = first_minute + i as i64;
            for _ in 0..n {
                let (fate, at) = customer_journey(minute * 60, availability, truth, &mut rng, |_, _, _| {});
                let m = at.div_euclid(60);
                if (1..=horizon as i64).contains(&m) {
                    let bin = match fate {
                        Fate::Direct => 0,
                        Fate::Switched => 1,
                        Fate::GaveUp => 2,
                    };
                    run[bin][(m - 1) as usize] += 1;
                }
            }
        }
    }
    let stats = |bin: usize| -> Vec<(f64, f64)> {
        (0..horizon)
            .map(|t| {
                let xs: Vec<f64> = runs.iter().map(|r| r[bin][t] as f64).collect();
                let n = xs.len() as f64;
                let mean = xs.iter().sum::<f64>() / n;
                let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
                (mean, var)
            })
            .collect()
    };
    OracleOutcomes { replications, direct: stats(0), switched: stats(1), gave_up: stats(2) }
}

fn named_rng(seed: u64, name: &str) -> StdRng {
    StdRng::seed_from_u64(substream_seed(seed, name))
}

/// Generates history files and the truth bundle. The same scenario and seed
/// always give identical output.
pub fn generate(scenario: &Scenario, seed: u64) -> Result<Generated> {
    scenario.validate()?;
    let anchor = scenario.anchor();
    let period = scenario.period;
    let first = 1 - scenario.history_minutes as i64;

    let mut volumes = Vec::new();
    for v in &scenario.vendors {
        let mut rng = named_rng(seed, &format!("volumes/{}", v.id));
        let noise = Normal::new(0.0, v.noise_sd).map_err(|e| Error::Validation(e.to_string()))?;
        let values = (first..=0).map(|m| (v.log_mean(m, period) + noise.sample(&mut rng)).exp()).collect();
        volumes.push(VolumeSeries::new(v.id.clone(), MinuteSeries::new(anchor, first, values)?)?);
    }

    let mut rng = named_rng(seed, "availability");
    let noise = Normal::new(0.0, scenario.availability.noise_sd).map_err(|e| Error::Validation(e.to_string()))?;
    let a_first = 1 - scenario.availability_minutes as i64;
    let a_values = (a_first..=0)
        .map(|m| (scenario.availability.at(m) + noise.sample(&mut rng)).clamp(0.0, 1.0))
        .collect();
    let availability = AvailabilitySeries::new(
        scenario.problematic_vendor.clone(),
        MinuteSeries::new(anchor, a_first, a_values)?,
    )?;

    let mut rng = named_rng(seed, "events");
    let others: Vec<&VendorSpec> = scenario.others().collect();
    let profile = |m: i64| scenario.availability.at(m);
    let mut events = Vec::new();
    let base_second = anchor.anchor_epoch_minute * 60;
    for minute in (1 - scenario.events.minutes as i64)..=0 {
        for c in 0..scenario.events.customers_per_minute {
            let id = format!("c{}-{c}", minute - first);
            let offset = rng.random_range(0..60);
            let fallback = others[rng.random_range(0..others.len())].id.clone();
            let mut journey = Vec::new();
            customer_journey(minute * 60 + offset, &profile, &scenario.behavior, &mut rng, |t, own, ok| {
                journey.push((t, own, ok))
            });
            events.extend(journey.into_iter().map(|(t, own, ok)| AttemptEvent {
                customer_id: id.clone(),
                timestamp_seconds: base_second + t,
                vendor_id: if own { scenario.problematic_vendor.clone() } else { fallback.clone() },
                outcome: if ok { Outcome::Success } else { Outcome::Failure },
            }));
        }
    }

    let mut rng = named_rng(seed, "wiredoff");
    let wo = &scenario.wireoff;
    let unit = Normal::new(0.0, 1.0).unwrap();
    let problematic = scenario.problematic();
    let wiredoff_history = (0..wo.window_minutes as i64)
        .map(|i| {
            let m = wo.window_start + i;
            let c0 = problematic.mean(m, period);
            let co: f64 = others.iter().map(|v| v.mean(m, period)).sum();
            let w = (wo.delta * c0 + co) * (1.0 + wo.noise_fraction * unit.sample(&mut rng));
            WiredOffRow { timestamp_minute: anchor.epoch_minute(m), w_off: w, c_hat_n0: Some(c0), c_hat_other: Some(co) }
        })
        .collect();

    let truth = TruthBundle {
        scenario: scenario.name.clone(),
        anchor_epoch_minute: anchor.anchor_epoch_minute,
        horizon: scenario.horizon,
        baseline_future: scenario
            .vendors
            .iter()
            .map(|v| (v.id.clone(), (1..=scenario.horizon as i64).map(|m| v.mean(m, period)).collect()))
            .collect(),
        availability_future: (1..=scenario.horizon as i64).map(|m| scenario.availability.at(m)).collect(),
        delta: wo.delta,
        behavior: scenario.behavior.clone(),
        actual_wireoff_m: scenario.actual_wireoff_m,
    };
    Ok(Generated { volumes, availability, events, wiredoff_history, truth })
}

/// Writes `volumes.csv`, `availability.csv`, `events.csv`,
/// `wiredoff_history.csv` and `truth.json` into `dir`.
pub fn write_generated(dir: &std::path::Path, g: &Generated) -> Result<()> {
    use crate::data::io::*;
    write_atomic(&dir.join("volumes.csv"), volumes_csv(&g.volumes)?.as_bytes())?;
    write_atomic(&dir.join("availability.csv"), availability_csv([&g.availability])?.as_bytes())?;
    write_atomic(&dir.join("events.csv"), events_csv(&g.events)?.as_bytes())?;
    write_atomic(&dir.join("wiredoff_history.csv"), wiredoff_history_csv(&g.wiredoff_history)?.as_bytes())?;
    write_json(&dir.join("truth.json"), &g.truth)
}
