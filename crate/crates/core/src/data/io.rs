//! CSV readers and writers. Timestamps in files are absolute epoch minutes;
//! loaded series use the epoch itself as anchor (offset = epoch minute) and
//! callers re-anchor them at the decision time.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::behavior::{AttemptEvent, Outcome};
use crate::error::{Error, Result};
use crate::series::{AvailabilitySeries, MinuteSeries, TimeIndex, VolumeSeries};

/// Longest run of missing volume minutes that is interpolated.
pub const MAX_VOLUME_GAP: i64 = 5;
/// Default limit on forward-filled availability minutes.
pub const MAX_AVAILABILITY_GAP: usize = 10;

pub const VOLUMES_HEADER: [&str; 3] = ["timestamp_minute", "vendor_id", "count"];
pub const AVAILABILITY_HEADER: [&str; 3] = ["timestamp_minute", "vendor_id", "availability"];
pub const EVENTS_HEADER: [&str; 4] = ["customer_id", "timestamp_seconds", "vendor_id", "outcome"];
pub const WIREDOFF_HEADER: [&str; 4] = ["timestamp_minute", "w_off", "c_hat_n0", "c_hat_other"];

fn read_file(path: &Path) -> Result<String> {
    let mut s = String::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_string(&mut s))
        .map_err(|e| Error::io(path, e))?;
    Ok(s)
}

/// Writes via a sibling temporary file and a rename so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let result = fs::File::create(&tmp)
        .and_then(|mut f| {
            f.write_all(contents)?;
            f.sync_all()
        })
        .and_then(|_| fs::rename(&tmp, path));
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let s = read_file(path)?;
    serde_json::from_str(&s).map_err(Error::from)
}

/// Reads rows after checking the header; the first `required` columns must
/// be present, trailing ones are optional.
fn records(text: &str, header: &[&str], required: usize) -> Result<Vec<(u64, csv::StringRecord)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(required < header.len())
        .from_reader(text.as_bytes());
    let got = rdr.headers().map_err(|e| Error::Parse { line: 1, message: e.to_string() })?.clone();
    let shown = got.len().min(header.len());
    if got.len() < required || got.iter().take(shown).ne(header.iter().take(shown).copied()) {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header {}, got {}", header.join(","), got.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        out.push((line, rec));
    }
    Ok(out)
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: u64, name: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    let raw = rec.get(i).ok_or_else(|| Error::Parse { line, message: format!("missing {name}") })?;
    raw.parse()
        .map_err(|e| Error::Parse { line, message: format!("bad {name} {raw:?}: {e}") })
}

/// Groups `(minute, value)` rows by vendor; duplicate minutes are rejected.
fn group(rows: Vec<(u64, String, i64, f64)>) -> Result<BTreeMap<String, BTreeMap<i64, f64>>> {
    let mut out: BTreeMap<String, BTreeMap<i64, f64>> = BTreeMap::new();
    for (line, vendor, minute, v) in rows {
        if out.entry(vendor.clone()).or_default().insert(minute, v).is_some() {
            return Err(Error::Parse { line, message: format!("duplicate minute {minute} for vendor {vendor}") });
        }
    }
    Ok(out)
}

fn epoch_series(start: i64, values: Vec<f64>) -> Result<MinuteSeries> {
    MinuteSeries::new(TimeIndex::new(0), start, values)
}

pub fn parse_volumes(text: &str) -> Result<BTreeMap<String, VolumeSeries>> {
    let mut rows = Vec::new();
    for (line, rec) in records(text, &VOLUMES_HEADER, 3)? {
        let minute: i64 = field(&rec, 0, line, "timestamp_minute")?;
        let vendor: String = field(&rec, 1, line, "vendor_id")?;
        let count: f64 = field(&rec, 2, line, "count")?;
        if !count.is_finite() || count <= 0.0 {
            return Err(Error::Domain(format!("line {line}: volume {count} for vendor {vendor} must be positive")));
        }
        rows.push((line, vendor, minute, count));
    }
    group(rows)?
        .into_iter()
        .map(|(vendor, points)| {
            let start = *points.keys().next().unwrap();
            let mut values = Vec::with_capacity(points.len());
            let mut prev: Option<(i64, f64)> = None;
            for (&m, &v) in &points {
                if let Some((pm, pv)) = prev {
                    let missing = m - pm - 1;
                    if missing > MAX_VOLUME_GAP {
                        return Err(Error::Gap { vendor, from: pm + 1, to: m - 1, len: missing });
                    }
                    for j in 1..=missing {
                        values.push(pv + (v - pv) * j as f64 / (missing + 1) as f64);
                    }
                }
                values.push(v);
                prev = Some((m, v));
            }
            let s = VolumeSeries::new(vendor.clone(), epoch_series(start, values)?)?;
            Ok((vendor, s))
        })
        .collect()
}

pub fn load_volumes(path: &Path) -> Result<BTreeMap<String, VolumeSeries>> {
    parse_volumes(&read_file(path)?)
}

/// Missing minutes are forward-filled; a run longer than `max_gap` is an error.
pub fn parse_availability(text: &str, max_gap: usize) -> Result<BTreeMap<String, AvailabilitySeries>> {
    let mut rows = Vec::new();
    for (line, rec) in records(text, &AVAILABILITY_HEADER, 3)? {
        let minute: i64 = field(&rec, 0, line, "timestamp_minute")?;
        let vendor: String = field(&rec, 1, line, "vendor_id")?;
        let a: f64 = field(&rec, 2, line, "availability")?;
        if !(0.0..=1.0).contains(&a) {
            return Err(Error::Domain(format!("line {line}: availability {a} outside [0, 1]")));
        }
        rows.push((line, vendor, minute, a));
    }
    group(rows)?
        .into_iter()
        .map(|(vendor, points)| {
            let start = *points.keys().next().unwrap();
            let mut values: Vec<f64> = Vec::with_capacity(points.len());
            let mut prev: Option<i64> = None;
            for (&m, &v) in &points {
                if let Some(pm) = prev {
                    let missing = m - pm - 1;
                    if missing > max_gap as i64 {
                        return Err(Error::Validation(format!(
                            "availability for {vendor} is missing {missing} minutes after epoch minute {pm}, more than {max_gap}"
                        )));
                    }
                    let last = *values.last().unwrap();
                    values.extend(std::iter::repeat_n(last, missing as usize));
                }
                values.push(v);
                prev = Some(m);
            }
            let s = AvailabilitySeries::new(vendor.clone(), epoch_series(start, values)?)?;
            Ok((vendor, s))
        })
        .collect()
}

pub fn load_availability(path: &Path, max_gap: usize) -> Result<BTreeMap<String, AvailabilitySeries>> {
    parse_availability(&read_file(path)?, max_gap)
}

pub fn parse_events(text: &str) -> Result<Vec<AttemptEvent>> {
    records(text, &EVENTS_HEADER, 4)?
        .into_iter()
        .map(|(line, rec)| {
            Ok(AttemptEvent {
                customer_id: field(&rec, 0, line, "customer_id")?,
                timestamp_seconds: field(&rec, 1, line, "timestamp_seconds")?,
                vendor_id: field(&rec, 2, line, "vendor_id")?,
                outcome: field::<Outcome>(&rec, 3, line, "outcome")?,
            })
        })
        .collect()
}

pub fn load_events(path: &Path) -> Result<Vec<AttemptEvent>> {
    parse_events(&read_file(path)?)
}

/// One row per minute of a past window in which the vendor was disabled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WiredOffRow {
    pub timestamp_minute: i64,
    pub w_off: f64,
    pub c_hat_n0: Option<f64>,
    pub c_hat_other: Option<f64>,
}

/// The baseline columns are optional; when absent they are filled from
/// fitted baseline models by the caller.
pub fn parse_wiredoff_history(text: &str) -> Result<Vec<WiredOffRow>> {
    let recs = records(text, &WIREDOFF_HEADER, 2)?;
    recs.into_iter()
        .map(|(line, rec)| {
            let opt = |i: usize, name: &str| -> Result<Option<f64>> {
                match rec.get(i) {
                    None | Some("") => Ok(None),
                    Some(_) => field(&rec, i, line, name).map(Some),
                }
            };
            let c0 = opt(2, "c_hat_n0")?;
            let co = opt(3, "c_hat_other")?;
            if c0.is_some() != co.is_some() {
                return Err(Error::Parse { line, message: "c_hat_n0 and c_hat_other must both be present or both absent".into() });
            }
            Ok(WiredOffRow { timestamp_minute: field(&rec, 0, line, "timestamp_minute")?, w_off: field(&rec, 1, line, "w_off")?, c_hat_n0: c0, c_hat_other: co })
        })
        .collect()
}

pub fn load_wiredoff_history(path: &Path) -> Result<Vec<WiredOffRow>> {
    parse_wiredoff_history(&read_file(path)?)
}

fn csv_text<F: FnOnce(&mut csv::Writer<Vec<u8>>) -> std::result::Result<(), csv::Error>>(f: F) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    f(&mut w).map_err(|e| Error::Validation(e.to_string()))?;
    let bytes = w.into_inner().map_err(|e| Error::Validation(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Values use the shortest representation that parses back to the same f64.
pub fn volumes_csv<'a>(series: impl IntoIterator<Item = &'a VolumeSeries>) -> Result<String> {
    csv_text(|w| {
        w.write_record(VOLUMES_HEADER)?;
        for s in series {
            let ms = s.series();
            for (m, v) in ms.iter() {
                w.write_record([ms.anchor().epoch_minute(m).to_string(), s.vendor_id.clone(), format!("{v:?}")])?;
            }
        }
        Ok(())
    })
}

pub fn availability_csv<'a>(series: impl IntoIterator<Item = &'a AvailabilitySeries>) -> Result<String> {
    csv_text(|w| {
        w.write_record(AVAILABILITY_HEADER)?;
        for s in series {
            let ms = s.series();
            for (m, v) in ms.iter() {
                w.write_record([ms.anchor().epoch_minute(m).to_string(), s.vendor_id.clone(), format!("{v:?}")])?;
            }
        }
        Ok(())
    })
}

pub fn events_csv(events: &[AttemptEvent]) -> Result<String> {
    csv_text(|w| {
        w.write_record(EVENTS_HEADER)?;
        for e in events {
            w.write_record([e.customer_id.clone(), e.timestamp_seconds.to_string(), e.vendor_id.clone(), e.outcome.to_string()])?;
        }
        Ok(())
    })
}

pub fn wiredoff_history_csv(rows: &[WiredOffRow]) -> Result<String> {
    let opt = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
    csv_text(|w| {
        w.write_record(WIREDOFF_HEADER)?;
        for r in rows {
            w.write_record([r.timestamp_minute.to_string(), format!("{:?}", r.w_off), opt(r.c_hat_n0), opt(r.c_hat_other)])?;
        }
        Ok(())
    })
}
