//! Minute-indexed series anchored at the current time.
//!
//! Every series carries the epoch minute of its anchor `t0`; entries are
//! addressed by a signed offset `m` where `m < 0` is history, `m = 0` is now
//! and `m > 0` is the future.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TimeIndex {
    pub anchor_epoch_minute: i64,
}

impl TimeIndex {
    pub fn new(anchor_epoch_minute: i64) -> Self {
        Self {
            anchor_epoch_minute,
        }
    }

    pub fn epoch_minute(&self, offset: i64) -> i64 {
        self.anchor_epoch_minute + offset
    }

    pub fn offset_of(&self, epoch_minute: i64) -> i64 {
        epoch_minute - self.anchor_epoch_minute
    }
}

/// Consecutive per-minute observations over `[start, start + len - 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinuteSeries {
    anchor: TimeIndex,
    start: i64,
    values: Vec<f64>,
}

impl MinuteSeries {
    pub fn new(anchor: TimeIndex, start: i64, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Validation("series must be non-empty".into()));
        }
        Ok(Self {
            anchor,
            start,
            values,
        })
    }

    /// Series whose last observation sits at offset 0.
    pub fn ending_now(anchor: TimeIndex, values: Vec<f64>) -> Result<Self> {
        let start = 1 - values.len() as i64;
        Self::new(anchor, start, values)
    }

    pub fn anchor(&self) -> TimeIndex {
        self.anchor
    }

    pub fn start(&self) -> i64 {
        self.start
    }

    pub fn end(&self) -> i64 {
        self.start + self.values.len() as i64 - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn offsets(&self) -> impl Iterator<Item = i64> + '_ {
        self.start..=self.end()
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(move |(i, &v)| (self.start + i as i64, v))
    }

    pub fn get(&self, offset: i64) -> Option<f64> {
        if offset < self.start || offset > self.end() {
            return None;
        }
        Some(self.values[(offset - self.start) as usize])
    }

    /// Restriction to `[from, to]`; both ends must lie inside the series.
    pub fn slice(&self, from: i64, to: i64) -> Result<Self> {
        if from > to || from < self.start || to > self.end() {
            return Err(Error::Alignment(format!(
                "range [{from}, {to}] not inside [{}, {}]",
                self.start,
                self.end()
            )));
        }
        let lo = (from - self.start) as usize;
        let hi = (to - self.start) as usize;
        Self::new(self.anchor, from, self.values[lo..=hi].to_vec())
    }

    /// Same observations expressed relative to a different anchor.
    pub fn reanchor(&self, anchor: TimeIndex) -> Self {
        let epoch_start = self.anchor.epoch_minute(self.start);
        Self {
            anchor,
            start: anchor.offset_of(epoch_start),
            values: self.values.clone(),
        }
    }

    /// Re-anchors so that the last observation has offset 0.
    pub fn reanchor_to_end(&self) -> Self {
        self.reanchor(TimeIndex::new(self.anchor.epoch_minute(self.end())))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            anchor: self.anchor,
            start: self.start,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn exp(&self) -> Self {
        self.map(f64::exp)
    }
}

/// Per-minute customer experience counts of one vendor. Strictly positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeSeries {
    pub vendor_id: String,
    series: MinuteSeries,
}

impl VolumeSeries {
    pub fn new(vendor_id: impl Into<String>, series: MinuteSeries) -> Result<Self> {
        let vendor_id = vendor_id.into();
        if let Some((m, v)) = series.iter().find(|(_, v)| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::Domain(format!(
                "vendor {vendor_id}: volume {v} at offset {m} is not strictly positive"
            )));
        }
        Ok(Self { vendor_id, series })
    }

    pub fn series(&self) -> &MinuteSeries {
        &self.series
    }

    pub fn into_series(self) -> MinuteSeries {
        self.series
    }
}

/// Probability that a first attempt with a vendor succeeds, per minute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvailabilitySeries {
    pub vendor_id: String,
    series: MinuteSeries,
}

impl AvailabilitySeries {
    pub fn new(vendor_id: impl Into<String>, series: MinuteSeries) -> Result<Self> {
        let vendor_id = vendor_id.into();
        if let Some((m, v)) = series.iter().find(|(_, v)| !(0.0..=1.0).contains(v)) {
            return Err(Error::Domain(format!(
                "vendor {vendor_id}: availability {v} at offset {m} outside [0, 1]"
            )));
        }
        Ok(Self { vendor_id, series })
    }

    pub fn series(&self) -> &MinuteSeries {
        &self.series
    }
}

/// Elementwise natural logarithm of a volume series.
pub fn to_log(volume: &VolumeSeries) -> Result<MinuteSeries> {
    log_of(volume.series())
}

/// Natural logarithm of an arbitrary series, rejecting non-positive entries.
pub fn log_of(series: &MinuteSeries) -> Result<MinuteSeries> {
    if let Some((m, v)) = series.iter().find(|(_, v)| !(*v > 0.0)) {
        return Err(Error::Domain(format!(
            "cannot take logarithm of {v} at offset {m}"
        )));
    }
    Ok(series.map(f64::ln))
}

/// Restricts both series to their common offset range.
pub fn align(a: &MinuteSeries, b: &MinuteSeries) -> Result<(MinuteSeries, MinuteSeries)> {
    if a.anchor() != b.anchor() {
        return Err(Error::Alignment(format!(
            "anchors differ: {} vs {}",
            a.anchor().anchor_epoch_minute,
            b.anchor().anchor_epoch_minute
        )));
    }
    let from = a.start().max(b.start());
    let to = a.end().min(b.end());
    if from > to {
        return Err(Error::Alignment(format!(
            "ranges [{}, {}] and [{}, {}] do not intersect",
            a.start(),
            a.end(),
            b.start(),
            b.end()
        )));
    }
    Ok((a.slice(from, to)?, b.slice(from, to)?))
}
