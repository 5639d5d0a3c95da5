//! Retry, switch and interattempt-time distributions estimated from past
//! incident event logs, plus the samplers the Monte Carlo simulation draws
//! from.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Success,
    Failure,
}

impl std::str::FromStr for Outcome {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "success" => Ok(Outcome::Success),
            "failure" => Ok(Outcome::Failure),
            other => Err(format!("unknown outcome {other:?}")),
        }
    }
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Outcome::Success => "success",
            Outcome::Failure => "failure",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttemptEvent {
    pub customer_id: String,
    pub timestamp_seconds: i64,
    pub vendor_id: String,
    pub outcome: Outcome,
}

/// Empirical distribution of whole seconds between a failure and the next
/// attempt.
#[derive(Debug, Clone, PartialEq)]
pub struct Interattempt {
    seconds: Vec<u32>,
    pmf: Vec<f64>,
    cdf: Vec<f64>,
}

impl Interattempt {
    pub fn from_pmf(mut pairs: Vec<(u32, f64)>) -> Result<Self> {
        pairs.retain(|&(_, p)| p > 0.0);
        if pairs.is_empty() {
            return Err(Error::Estimation("interattempt distribution is empty".into()));
        }
        if pairs.iter().any(|&(_, p)| !p.is_finite()) {
            return Err(Error::Estimation("interattempt probabilities must be finite".into()));
        }
        pairs.sort_by_key(|&(s, _)| s);
        if pairs.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Estimation("duplicate interattempt support point".into()));
        }
        let total: f64 = pairs.iter().map(|&(_, p)| p).sum();
        let seconds: Vec<u32> = pairs.iter().map(|&(s, _)| s).collect();
        let pmf: Vec<f64> = pairs.iter().map(|&(_, p)| p / total).collect();
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = pmf
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        *cdf.last_mut().unwrap() = 1.0;
        Ok(Self { seconds, pmf, cdf })
    }

    pub fn point_mass(seconds: u32) -> Self {
        Self::from_pmf(vec![(seconds, 1.0)]).expect("non-empty")
    }

    fn from_counts(counts: &BTreeMap<u32, u64>) -> Result<Self> {
        Self::from_pmf(counts.iter().map(|(&s, &c)| (s, c as f64)).collect())
    }

    pub fn support(&self) -> &[u32] {
        &self.seconds
    }

    pub fn pmf(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.seconds.iter().copied().zip(self.pmf.iter().copied())
    }

    /// `P(X <= s)`.
    pub fn cdf(&self, s: u32) -> f64 {
        match self.seconds.partition_point(|&x| x <= s) {
            0 => 0.0,
            i => self.cdf[i - 1],
        }
    }

    /// `P(X >= s)`, the quantity historically tabulated for retries.
    pub fn survival(&self, s: u32) -> f64 {
        match self.seconds.partition_point(|&x| x < s) {
            0 => 1.0,
            i => 1.0 - self.cdf[i - 1],
        }
    }

    /// Inverse-CDF draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let u = rng::unit_open_closed(rng);
        let i = self.cdf.partition_point(|&c| c < u).min(self.seconds.len() - 1);
        self.seconds[i]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorDistributions {
    retry_p: BTreeMap<u32, f64>,
    switch_p: BTreeMap<u32, f64>,
    pub interattempt: Interattempt,
}

impl BehaviorDistributions {
    /// `retry[k-1]` and `switch[k-1]` hold the parameters after `k` failures.
    pub fn new(retry: &[f64], switch: &[f64], interattempt: Interattempt) -> Result<Self> {
        let to_map = |v: &[f64]| -> BTreeMap<u32, f64> {
            v.iter().enumerate().map(|(i, &p)| (i as u32 + 1, p)).collect()
        };
        Self::from_maps(to_map(retry), to_map(switch), interattempt)
    }

    pub fn from_maps(
        retry_p: BTreeMap<u32, f64>,
        switch_p: BTreeMap<u32, f64>,
        interattempt: Interattempt,
    ) -> Result<Self> {
        if retry_p.is_empty() || switch_p.is_empty() {
            return Err(Error::Estimation("retry and switch tables must be non-empty".into()));
        }
        for (name, map) in [("retry", &retry_p), ("switch", &switch_p)] {
            if map.contains_key(&0) {
                return Err(Error::Estimation(format!("{name} table is indexed from k = 1")));
            }
            if let Some((k, p)) = map.iter().find(|(_, p)| !(0.0..=1.0).contains(*p)) {
                return Err(Error::Estimation(format!(
                    "{name} probability {p} at k={k} outside [0, 1]"
                )));
            }
        }
        Ok(Self {
            retry_p,
            switch_p,
            interattempt,
        })
    }

    /// Behaviour that is the same after every failure count.
    pub fn constant(retry: f64, switch: f64, interattempt: Interattempt) -> Result<Self> {
        Self::new(&[retry], &[switch], interattempt)
    }

    pub fn k_max_observed(&self) -> u32 {
        *self.retry_p.keys().next_back().unwrap()
    }

    fn lookup(map: &BTreeMap<u32, f64>, k: u32) -> f64 {
        // plateau beyond (and fill gaps from) the nearest lower observed k
        map.range(..=k.max(1))
            .next_back()
            .or_else(|| map.iter().next())
            .map(|(_, &p)| p)
            .unwrap()
    }

    pub fn retry(&self, k: u32) -> f64 {
        Self::lookup(&self.retry_p, k)
    }

    pub fn switch(&self, k: u32) -> f64 {
        Self::lookup(&self.switch_p, k)
    }

    pub fn retry_table(&self) -> &BTreeMap<u32, f64> {
        &self.retry_p
    }

    pub fn switch_table(&self) -> &BTreeMap<u32, f64> {
        &self.switch_p
    }
}

/// True when the customer retries after their `k`-th failure.
pub fn sample_retry<R: Rng + ?Sized>(dist: &BehaviorDistributions, k: u32, rng: &mut R) -> bool {
    // u ∈ [0, 1): abandon iff u >= π_k, so π_k = 1 always retries
    rng::unit_closed_open(rng) < dist.retry(k)
}

/// True when a retrying customer moves to another vendor.
pub fn sample_switch<R: Rng + ?Sized>(dist: &BehaviorDistributions, k: u32, rng: &mut R) -> bool {
    // u ∈ (0, 1]: switch iff u <= ρ_k, so ρ_k = 0 never switches
    rng::unit_open_closed(rng) <= dist.switch(k)
}

pub fn sample_interattempt<R: Rng + ?Sized>(dist: &BehaviorDistributions, rng: &mut R) -> u32 {
    dist.interattempt.sample(rng)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateOptions {
    /// Add-one smoothing of the retry and switch proportions.
    pub smoothing: bool,
    /// A follow-up attempt later than this after a failure starts a new,
    /// unrelated experience; the failure counts as abandoned.
    pub session_gap_seconds: Option<i64>,
    /// Inclusive epoch-second range; events outside are ignored.
    pub window: Option<(i64, i64)>,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            smoothing: true,
            session_gap_seconds: Some(1800),
            window: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct Tally {
    reached: u64,
    retried: u64,
    switched: u64,
}

/// Counts, per consecutive-failure count `k` with the problematic vendor, how
/// many customers reached `k`, retried, and retried elsewhere; and collects
/// the delays between each failure and the following attempt.
pub fn estimate(
    events: &[AttemptEvent],
    problematic_vendor: &str,
    options: &EstimateOptions,
) -> Result<BehaviorDistributions> {
    let mut by_customer: HashMap<&str, Vec<&AttemptEvent>> = HashMap::new();
    for e in events {
        if let Some((lo, hi)) = options.window {
            if e.timestamp_seconds < lo || e.timestamp_seconds > hi {
                continue;
            }
        }
        by_customer.entry(e.customer_id.as_str()).or_default().push(e);
    }

    let mut tallies: BTreeMap<u32, Tally> = BTreeMap::new();
    let mut gaps: BTreeMap<u32, u64> = BTreeMap::new();
    for evs in by_customer.values_mut() {
        // stable: equal timestamps keep file order
        evs.sort_by_key(|e| e.timestamp_seconds);
        let mut k: u32 = 0;
        for (i, e) in evs.iter().enumerate() {
            let failed_here = e.vendor_id == problematic_vendor && e.outcome == Outcome::Failure;
            if !failed_here {
                k = 0;
                continue;
            }
            k += 1;
            let t = tallies.entry(k).or_default();
            t.reached += 1;
            let next = evs.get(i + 1).filter(|n| {
                options
                    .session_gap_seconds
                    .is_none_or(|g| n.timestamp_seconds - e.timestamp_seconds <= g)
            });
            match next {
                Some(n) => {
                    t.retried += 1;
                    let gap = (n.timestamp_seconds - e.timestamp_seconds).max(0);
                    *gaps.entry(gap.min(u32::MAX as i64) as u32).or_default() += 1;
                    if n.vendor_id != problematic_vendor {
                        t.switched += 1;
                    }
                }
                // chain ends: abandoned
                None => k = 0,
            }
        }
    }

    if tallies.is_empty() {
        return Err(Error::Estimation(format!(
            "no failures with vendor {problematic_vendor} in the event log"
        )));
    }
    if gaps.is_empty() {
        return Err(Error::Estimation(
            "no retries observed, interattempt distribution is undefined".into(),
        ));
    }

    let ratio = |num: u64, den: u64| -> f64 {
        if options.smoothing {
            (num as f64 + 1.0) / (den as f64 + 2.0)
        } else if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let retry_p = tallies.iter().map(|(&k, t)| (k, ratio(t.retried, t.reached))).collect();
    let switch_p = tallies.iter().map(|(&k, t)| (k, ratio(t.switched, t.retried))).collect();
    BehaviorDistributions::from_maps(retry_p, switch_p, Interattempt::from_counts(&gaps)?)
}

#[derive(Serialize, Deserialize)]
struct BehaviorDoc {
    retry_p: BTreeMap<u32, f64>,
    switch_p: BTreeMap<u32, f64>,
    interattempt_pmf: Vec<(u32, f64)>,
}

impl Serialize for BehaviorDistributions {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        BehaviorDoc {
            retry_p: self.retry_p.clone(),
            switch_p: self.switch_p.clone(),
            interattempt_pmf: self.interattempt.pmf().collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for BehaviorDistributions {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let doc = BehaviorDoc::deserialize(d)?;
        let inter = Interattempt::from_pmf(doc.interattempt_pmf).map_err(D::Error::custom)?;
        BehaviorDistributions::from_maps(doc.retry_p, doc.switch_p, inter).map_err(D::Error::custom)
    }
}
