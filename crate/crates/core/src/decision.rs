//! Wire-off rule: disable the vendor from the first minute after which the
//! wired-off forecast beats the wired-on forecast for the rest of the horizon.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::TimeIndex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "m_star")]
pub enum Action {
    WireOffAt(i64),
    KeepWiredOn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub offset_m: i64,
    pub wired_on: f64,
    pub wired_off: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recommendation {
    pub action: Action,
    pub anchor: TimeIndex,
    pub curves: Vec<CurvePoint>,
}

impl Recommendation {
    pub fn horizon(&self) -> usize {
        self.curves.len()
    }

    pub fn m_star(&self) -> Option<i64> {
        match self.action {
            Action::WireOffAt(m) => Some(m),
            Action::KeepWiredOn => None,
        }
    }

    /// `Ŵ_off − Ŵ_on` per minute.
    pub fn margin(&self) -> Vec<f64> {
        self.curves.iter().map(|p| p.wired_off - p.wired_on).collect()
    }

    /// One-line operator summary.
    pub fn summary(&self) -> String {
        match self.action {
            Action::WireOffAt(m) => format!(
                "WIRE OFF at {} (m*={m})",
                format_epoch_minute(self.anchor.epoch_minute(m))
            ),
            Action::KeepWiredOn => "KEEP WIRED ON".to_string(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct RecommendationDoc {
    action: String,
    m_star: Option<i64>,
    anchor_epoch_minute: i64,
    horizon: usize,
    curves: Vec<CurvePoint>,
    margin: Vec<f64>,
}

impl Serialize for Recommendation {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        RecommendationDoc {
            action: match self.action {
                Action::WireOffAt(_) => "WireOffAt",
                Action::KeepWiredOn => "KeepWiredOn",
            }
            .to_string(),
            m_star: self.m_star(),
            anchor_epoch_minute: self.anchor.anchor_epoch_minute,
            horizon: self.horizon(),
            curves: self.curves.clone(),
            margin: self.margin(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Recommendation {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let doc = RecommendationDoc::deserialize(d)?;
        let action = match (doc.action.as_str(), doc.m_star) {
            ("WireOffAt", Some(m)) => Action::WireOffAt(m),
            ("KeepWiredOn", None) => Action::KeepWiredOn,
            (a, m) => return Err(D::Error::custom(format!("inconsistent action {a} with m_star {m:?}"))),
        };
        Ok(Self { action, anchor: TimeIndex::new(doc.anchor_epoch_minute), curves: doc.curves })
    }
}

/// UTC `YYYY-MM-DDTHH:MMZ` for an epoch minute.
pub fn format_epoch_minute(epoch_minute: i64) -> String {
    let days = epoch_minute.div_euclid(1440);
    let mins = epoch_minute.rem_euclid(1440);
    // civil-from-days (Howard Hinnant)
    let z = days + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z.rem_euclid(146_097);
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let day = doy - (153 * mp + 2) / 5 + 1;
    let month = if mp < 10 { mp + 3 } else { mp - 9 };
    let year = yoe + era * 400 + i64::from(month <= 2);
    format!("{year:04}-{month:02}-{day:02}T{:02}:{:02}Z", mins / 60, mins % 60)
}

/// Smallest `m*` with `Ŵ_off > Ŵ_on` for every `m ≥ m*` through the horizon.
/// Curves are indexed by minute `1..=R`.
pub fn recommend(wired_on: &[f64], wired_off: &[f64], anchor: TimeIndex) -> Result<Recommendation> {
    if wired_on.len() != wired_off.len() {
        return Err(Error::Alignment(format!(
            "wired-on curve has {} minutes, wired-off has {}",
            wired_on.len(),
            wired_off.len()
        )));
    }
    if wired_on.is_empty() {
        return Err(Error::Validation("curves must cover at least one minute".into()));
    }
    if wired_on.iter().chain(wired_off).any(|v| !v.is_finite()) {
        return Err(Error::Domain("curves must be finite".into()));
    }
    let last_non_positive = (0..wired_on.len()).rev().find(|&i| wired_off[i] <= wired_on[i]);
    let action = match last_non_positive {
        None => Action::WireOffAt(1),
        Some(i) if i + 1 == wired_on.len() => Action::KeepWiredOn,
        Some(i) => Action::WireOffAt(i as i64 + 2),
    };
    let curves = wired_on
        .iter()
        .zip(wired_off)
        .enumerate()
        .map(|(i, (&on, &off))| CurvePoint { offset_m: i as i64 + 1, wired_on: on, wired_off: off })
        .collect();
    Ok(Recommendation { action, anchor, curves })
}

/// Minutes between the recommended and the actual wire-off.
pub fn lead_time(rec: &Recommendation, actual_wireoff_m: i64) -> Result<i64> {
    match rec.action {
        Action::WireOffAt(m) => Ok(actual_wireoff_m - m),
        Action::KeepWiredOn => Err(Error::Domain("no wire-off was recommended".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec_from_margin(margin: &[f64]) -> Recommendation {
        let on = vec![100.0; margin.len()];
        let off: Vec<f64> = margin.iter().map(|d| 100.0 + d).collect();
        recommend(&on, &off, TimeIndex::new(0)).unwrap()
    }

    #[test]
    fn equality_keeps_vendor() {
        assert_eq!(rec_from_margin(&[0.0; 5]).action, Action::KeepWiredOn);
    }

    #[test]
    fn positive_everywhere_wires_off_now() {
        assert_eq!(rec_from_margin(&[1.0; 5]).action, Action::WireOffAt(1));
    }

    #[test]
    fn crossing_must_persist() {
        let r = rec_from_margin(&[-1.0, -1.0, 2.0, -1.0, 3.0, 4.0]);
        assert_eq!(r.action, Action::WireOffAt(5));
        assert_eq!(r.margin(), vec![-1.0, -1.0, 2.0, -1.0, 3.0, 4.0]);
    }

    #[test]
    fn lead_times() {
        let r = Recommendation { action: Action::WireOffAt(5), anchor: TimeIndex::new(0), curves: vec![] };
        assert_eq!(lead_time(&r, 16).unwrap(), 11);
        assert_eq!(lead_time(&r, 5).unwrap(), 0);
        let r = Recommendation { action: Action::WireOffAt(10), ..r };
        assert_eq!(lead_time(&r, 13).unwrap(), 3);
        let keep = Recommendation { action: Action::KeepWiredOn, ..r };
        assert!(matches!(lead_time(&keep, 3), Err(Error::Domain(_))));
    }

    #[test]
    fn misaligned_curves() {
        assert!(matches!(recommend(&[1.0], &[1.0, 2.0], TimeIndex::new(0)), Err(Error::Alignment(_))));
    }

    #[test]
    fn json_round_trip_and_summary() {
        let mut r = rec_from_margin(&[-1.0, 2.0]);
        r.anchor = TimeIndex::new(29_000_000);
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(v["action"], "WireOffAt");
        assert_eq!(v["m_star"], 2);
        assert_eq!(v["anchor_epoch_minute"], 29_000_000);
        assert_eq!(v["margin"][1], 2.0);
        let back: Recommendation = serde_json::from_value(v).unwrap();
        assert_eq!(back, r);
        // 29_000_002 minutes after the epoch
        assert_eq!(r.summary(), "WIRE OFF at 2025-02-19T21:22Z (m*=2)");
        let keep = rec_from_margin(&[0.0]);
        assert_eq!(serde_json::to_value(&keep).unwrap()["m_star"], serde_json::Value::Null);
        assert_eq!(keep.summary(), "KEEP WIRED ON");
    }

    #[test]
    fn epoch_formatting() {
        assert_eq!(format_epoch_minute(0), "1970-01-01T00:00Z");
        assert_eq!(format_epoch_minute(-1), "1969-12-31T23:59Z");
        assert_eq!(format_epoch_minute(11_017 * 1440 + 61), "2000-03-01T01:01Z");
    }

    /// Direct reading of the rule: try each candidate and check the suffix.
    fn brute_force(margin: &[f64]) -> Action {
        (1..=margin.len())
            .find(|&m| margin[m - 1..].iter().all(|&d| d > 0.0))
            .map_or(Action::KeepWiredOn, |m| Action::WireOffAt(m as i64))
    }

    proptest! {
        #[test]
        fn matches_brute_force(margin in prop::collection::vec(prop_oneof![Just(0.0), -5.0f64..5.0], 1..40), shift in 0.0f64..1e3) {
            let r = rec_from_margin(&margin);
            prop_assert_eq!(r.action, brute_force(&margin));
            if let Action::WireOffAt(m) = r.action {
                let m = m as usize;
                prop_assert!(margin[m - 1..].iter().all(|&d| d > 0.0));
                prop_assert!(m == 1 || margin[m - 2] <= 0.0);
            }
            let on: Vec<f64> = r.curves.iter().map(|p| p.wired_on + shift).collect();
            let off: Vec<f64> = r.curves.iter().map(|p| p.wired_off + shift).collect();
            let shifted = recommend(&on, &off, TimeIndex::new(0)).unwrap();
            // exact float shifts can flip ties, so compare on the margins actually produced
            let m2: Vec<f64> = shifted.margin();
            prop_assert_eq!(shifted.action, brute_force(&m2));
        }
    }
}
