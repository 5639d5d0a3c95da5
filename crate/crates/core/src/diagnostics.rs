//! Residual diagnostics for fitted models and forecast error metrics.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};

pub const DW_BAND: (f64, f64) = (1.5, 3.5);
pub const HC_ALPHA: f64 = 0.05;

pub fn durbin_watson(residuals: &[f64]) -> Result<f64> {
    if residuals.len() < 2 {
        return Err(Error::Domain("Durbin-Watson needs at least two residuals".into()));
    }
    let den: f64 = residuals.iter().map(|r| r * r).sum();
    if den == 0.0 {
        return Err(Error::Domain("residuals are all zero".into()));
    }
    let num: f64 = residuals.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
    Ok(num / den)
}

/// Sample autocorrelations for lags `0..=max_lag`, normalized by `n`.
pub fn acf(residuals: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = residuals.len();
    if n <= max_lag {
        return Err(Error::Domain(format!("acf needs more than {max_lag} values, got {n}")));
    }
    let mean = residuals.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = residuals.iter().map(|r| r - mean).collect();
    let c0: f64 = c.iter().map(|v| v * v).sum();
    if c0 == 0.0 {
        return Err(Error::Domain("residuals have zero variance".into()));
    }
    Ok((0..=max_lag)
        .map(|lag| {
            if lag == 0 {
                1.0
            } else {
                c.iter().zip(&c[lag..]).map(|(a, b)| a * b).sum::<f64>() / c0
            }
        })
        .collect())
}

/// Standardized residuals against standard-normal quantiles at `(i − ½)/n`.
pub fn qq_points(residuals: &[f64]) -> Result<Vec<(f64, f64)>> {
    let n = residuals.len();
    if n < 3 {
        return Err(Error::Domain("QQ needs at least three residuals".into()));
    }
    let mean = residuals.iter().sum::<f64>() / n as f64;
    let var = residuals.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if var == 0.0 {
        return Err(Error::Domain("residuals have zero variance".into()));
    }
    let sd = var.sqrt();
    let mut z: Vec<f64> = residuals.iter().map(|r| (r - mean) / sd).collect();
    z.sort_by(f64::total_cmp);
    let normal = Normal::standard();
    Ok(z
        .into_iter()
        .enumerate()
        .map(|(i, s)| (normal.inverse_cdf((i as f64 + 0.5) / n as f64), s))
        .collect())
}

pub fn rmse(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    if actual.len() != predicted.len() {
        return Err(Error::Alignment(format!(
            "{} actual values vs {} predictions",
            actual.len(),
            predicted.len()
        )));
    }
    if actual.is_empty() {
        return Err(Error::Domain("rmse of an empty sample".into()));
    }
    let sse: f64 = actual.iter().zip(predicted).map(|(a, p)| (a - p).powi(2)).sum();
    Ok((sse / actual.len() as f64).sqrt())
}

/// Symmetric mean absolute percentage error, as a fraction in `[0, 2]`.
pub fn smape(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    if actual.len() != predicted.len() {
        return Err(Error::Alignment(format!(
            "{} actual values vs {} predictions",
            actual.len(),
            predicted.len()
        )));
    }
    if actual.is_empty() {
        return Err(Error::Domain("smape of an empty sample".into()));
    }
    let total: f64 = actual
        .iter()
        .zip(predicted)
        .map(|(a, p)| {
            let den = (a.abs() + p.abs()) / 2.0;
            if den == 0.0 { 0.0 } else { (a - p).abs() / den }
        })
        .sum();
    Ok(total / actual.len() as f64)
}

fn design(x: &[f64], intercept: bool) -> DMatrix<f64> {
    let k = 1 + usize::from(intercept);
    DMatrix::from_fn(x.len(), k, |r, c| if intercept && c == 0 { 1.0 } else { x[r] })
}

/// Recursive residuals of `y` on `x` via rank-one least-squares updates.
/// Returns `n − k` values, one per observation after the first `k`.
pub fn recursive_residuals(y: &[f64], x: &[f64], intercept: bool) -> Result<Vec<f64>> {
    if x.len() != y.len() {
        return Err(Error::Alignment("regressor and target differ in length".into()));
    }
    let xm = design(x, intercept);
    let k = xm.ncols();
    if y.len() < k + 3 {
        return Err(Error::Domain(format!("need at least {} observations", k + 3)));
    }
    let head = xm.rows(0, k).into_owned();
    let mut p = (head.transpose() * &head)
        .try_inverse()
        .filter(|m| m.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::fit("rank-deficient initial regressor block"))?;
    let mut beta = &p * head.transpose() * DVector::from_column_slice(&y[..k]);
    let mut out = Vec::with_capacity(y.len() - k);
    for t in k..y.len() {
        let xt = xm.row(t).transpose();
        let px = &p * &xt;
        let f = 1.0 + xt.dot(&px);
        let e = y[t] - xt.dot(&beta);
        out.push(e / f.sqrt());
        p -= &px * px.transpose() / f;
        beta += &px * (e / f);
    }
    Ok(out)
}

/// Harvey-Collier linearity test: t-test of the mean recursive residual.
pub fn harvey_collier(y: &[f64], x: &[f64], intercept: bool) -> Result<(f64, f64)> {
    let w = recursive_residuals(y, x, intercept)?;
    let n = w.len() as f64;
    let mean = w.iter().sum::<f64>() / n;
    let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if var == 0.0 || !var.is_finite() {
        // a perfect fit leaves nothing to test
        return Ok(if mean == 0.0 { (0.0, 1.0) } else { (f64::INFINITY, 0.0) });
    }
    let stat = mean / (var / n).sqrt();
    let dist = StudentsT::new(0.0, 1.0, n - 1.0).map_err(|e| Error::Domain(e.to_string()))?;
    let p = (2.0 * dist.sf(stat.abs())).clamp(0.0, 1.0);
    Ok((stat, p))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub dw_statistic: f64,
    pub hc_statistic: f64,
    pub hc_p_value: f64,
    pub acf_lag1: f64,
    pub acf_ci_halfwidth: f64,
    pub acf: Vec<f64>,
    pub qq_points: Vec<(f64, f64)>,
    pub rmse: f64,
}

impl DiagnosticsReport {
    pub fn dw_passes(&self) -> bool {
        (DW_BAND.0..=DW_BAND.1).contains(&self.dw_statistic)
    }

    pub fn hc_passes(&self) -> bool {
        self.hc_p_value > HC_ALPHA
    }

    pub fn acf_lag1_within_band(&self) -> bool {
        self.acf_lag1.abs() < self.acf_ci_halfwidth
    }

    pub fn qq_csv(&self) -> String {
        let mut s = String::from("theoretical,sample\n");
        for (t, q) in &self.qq_points {
            s.push_str(&format!("{t:?},{q:?}\n"));
        }
        s
    }
}

/// Whether most reports keep their lag-1 autocorrelation inside the band.
pub fn majority_acf_within_band(reports: &[DiagnosticsReport]) -> bool {
    2 * reports.iter().filter(|r| r.acf_lag1_within_band()).count() > reports.len()
}

/// Full residual report for a regression of `y` on `x` with fitted values
/// `fitted`.
pub fn diagnose(y: &[f64], x: &[f64], fitted: &[f64], intercept: bool, max_lag: usize) -> Result<DiagnosticsReport> {
    let residuals: Vec<f64> = y
        .iter()
        .zip(fitted)
        .map(|(a, f)| a - f)
        .collect();
    if fitted.len() != y.len() {
        return Err(Error::Alignment("fitted values and target differ in length".into()));
    }
    let (hc_statistic, hc_p_value) = harvey_collier(y, x, intercept)?;
    let acf = acf(&residuals, max_lag.max(1).min(residuals.len() - 1))?;
    Ok(DiagnosticsReport {
        dw_statistic: durbin_watson(&residuals)?,
        hc_statistic,
        hc_p_value,
        acf_lag1: acf[1],
        acf_ci_halfwidth: (2.0 / residuals.len() as f64).sqrt(),
        acf,
        qq_points: qq_points(&residuals)?,
        rmse: rmse(y, fitted)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{StandardNormal, StudentT};

    fn noise(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = crate::rng::stream(seed, &[]);
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    fn alternating(n: usize) -> Vec<f64> {
        (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect()
    }

    #[test]
    fn durbin_watson_cases() {
        assert!((durbin_watson(&alternating(6)).unwrap() - 20.0 / 6.0).abs() < 1e-15);
        assert_eq!(durbin_watson(&[2.5; 8]).unwrap(), 0.0);
        assert!(durbin_watson(&[0.0; 3]).is_err());
        let d = durbin_watson(&noise(1, 2000)).unwrap();
        assert!((1.8..=2.2).contains(&d));
    }

    #[test]
    fn acf_cases() {
        for n in [10, 100, 1001] {
            let a = acf(&alternating(n), 3).unwrap();
            assert_eq!(a[0], 1.0);
            if n % 2 == 0 {
                assert!((a[1] + (n as f64 - 1.0) / n as f64).abs() < 1e-12);
            }
        }
        let w = noise(2, 2000);
        let a = acf(&w, 5).unwrap();
        assert!(a[1].abs() < 1.5 * (2.0f64 / 2000.0).sqrt());
        let d = durbin_watson(&w).unwrap();
        assert!((d - 2.0 * (1.0 - a[1])).abs() < 10.0 / 2000.0);
        assert!(acf(&[1.0; 5], 1).is_err());
    }

    #[test]
    fn qq_cases() {
        let normal = Normal::standard();
        let n = 99;
        let exact: Vec<f64> = (0..n).map(|i| normal.inverse_cdf((i as f64 + 0.5) / n as f64)).collect();
        // rescale so the sample sd is exactly one
        let mean = exact.iter().sum::<f64>() / n as f64;
        let sd = (exact.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        let input: Vec<f64> = exact.iter().map(|v| (v - mean) / sd).collect();
        for ((t, s), v) in qq_points(&input).unwrap().into_iter().zip(&input) {
            assert!((s - v).abs() < 1e-6);
            assert!(t.is_finite());
        }
        assert!(qq_points(&input).unwrap()[49].0.abs() < 1e-12);

        let mut rng = crate::rng::stream(3, &[]);
        let t2 = StudentT::new(2.0).unwrap();
        let heavy: Vec<f64> = (0..1000).map(|_| rng.sample(t2)).collect();
        let q = qq_points(&heavy).unwrap();
        let (first, last) = (q[0], q[999]);
        assert!(first.1.abs() > first.0.abs() && last.1.abs() > last.0.abs());
        // scale invariance after standardization
        let scaled: Vec<f64> = heavy.iter().map(|v| v * 7.5).collect();
        for (a, b) in q.iter().zip(qq_points(&scaled).unwrap()) {
            assert!((a.1 - b.1).abs() < 1e-12);
        }
    }

    #[test]
    fn rmse_cases() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 12.5f64.sqrt()).abs() < 1e-15);
        assert!((rmse(&[1.0, 5.0, -2.0], &[1.5, 5.5, -1.5]).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(rmse(&[1.0], &[]), Err(Error::Alignment(_))));
        assert_eq!(smape(&[100.0, 0.0], &[100.0, 0.0]).unwrap(), 0.0);
        // |100 - 50| / 75 and |10 - 30| / 20, averaged
        assert!((smape(&[100.0, 10.0], &[50.0, 30.0]).unwrap() - (50.0 / 75.0 + 1.0) / 2.0).abs() < 1e-15);
    }

    /// Recursive residuals by refitting each prefix from scratch.
    fn refit_oracle(y: &[f64], x: &[f64], intercept: bool) -> Vec<f64> {
        let xm = design(x, intercept);
        let k = xm.ncols();
        (k..y.len())
            .map(|t| {
                let a = xm.rows(0, t).into_owned();
                let g = (a.transpose() * &a).try_inverse().unwrap();
                let b = &g * a.transpose() * DVector::from_column_slice(&y[..t]);
                let xt = xm.row(t).transpose();
                (y[t] - xt.dot(&b)) / (1.0 + xt.dot(&(&g * &xt))).sqrt()
            })
            .collect()
    }

    #[test]
    fn recursive_residuals_match_refits() {
        let e = noise(4, 80);
        let x: Vec<f64> = (0..80).map(|i| 1.0 + (i as f64 * 0.37).sin() * 3.0 + i as f64 * 0.1).collect();
        let y: Vec<f64> = x.iter().zip(&e).map(|(a, b)| 2.0 * a + 1.0 + b).collect();
        for intercept in [false, true] {
            let fast = recursive_residuals(&y, &x, intercept).unwrap();
            let slow = refit_oracle(&y, &x, intercept);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-10, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn harvey_collier_perfect_fit() {
        let x: Vec<f64> = (1..=20).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let (s, p) = harvey_collier(&y, &x, false).unwrap();
        assert!(s.abs() < 1e-6 || p > 0.99);
        assert!(harvey_collier(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], false).is_err());
        assert!(matches!(harvey_collier(&[1.0; 6], &[0.0; 6], false), Err(Error::Fit { .. })));
    }

    #[test]
    fn harvey_collier_size_under_null() {
        let x: Vec<f64> = (0..500).map(|i| 10.0 + i as f64 * 0.05).collect();
        let accepted = (0..100u64)
            .filter(|&seed| {
                let y: Vec<f64> = x.iter().zip(noise(100 + seed, 500)).map(|(a, e)| 0.7 * a + e).collect();
                harvey_collier(&y, &x, false).unwrap().1 > 0.05
            })
            .count();
        assert!(accepted >= 90, "{accepted}");
    }

    #[test]
    fn harvey_collier_detects_curvature() {
        let x: Vec<f64> = (1..=200).map(|i| f64::from(i) / 10.0).collect();
        let y: Vec<f64> = x.iter().map(|v| v * v).collect();
        let (stat, p) = harvey_collier(&y, &x, true).unwrap();
        assert!(p < 0.05);
        // reference: scipy ttest_1samp on statsmodels recursive_olsresiduals[k:]
        assert!((stat - 15.870569927407791).abs() < 1e-6, "{stat}");
    }

    #[test]
    fn scale_invariance() {
        let x: Vec<f64> = (0..300).map(|i| 5.0 + (i as f64 * 0.1).cos()).collect();
        let y: Vec<f64> = x.iter().zip(noise(9, 300)).map(|(a, e)| 3.0 * a + e).collect();
        let r: Vec<f64> = noise(9, 300);
        let r2: Vec<f64> = r.iter().map(|v| v * 4.2).collect();
        assert!((durbin_watson(&r).unwrap() - durbin_watson(&r2).unwrap()).abs() < 1e-12);
        assert!((acf(&r, 1).unwrap()[1] - acf(&r2, 1).unwrap()[1]).abs() < 1e-12);
        let y2: Vec<f64> = y.iter().map(|v| v * 4.2).collect();
        let a = harvey_collier(&y, &x, false).unwrap().0;
        let b = harvey_collier(&y2, &x, false).unwrap().0;
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn report_helpers() {
        let x: Vec<f64> = (0..400).map(|i| 20.0 + (i as f64 * 0.05).sin() * 5.0).collect();
        let y: Vec<f64> = x.iter().zip(noise(21, 400)).map(|(a, e)| 0.5 * a + e).collect();
        let fitted: Vec<f64> = x.iter().map(|a| 0.5 * a).collect();
        let rep = diagnose(&y, &x, &fitted, false, 10).unwrap();
        assert!(rep.dw_passes());
        assert!((rep.acf_ci_halfwidth - (2.0f64 / 400.0).sqrt()).abs() < 1e-15);
        assert_eq!(rep.acf.len(), 11);
        assert!(rep.qq_csv().starts_with("theoretical,sample\n"));
        let inside = DiagnosticsReport { acf_lag1: 0.0, ..rep.clone() };
        let outside = DiagnosticsReport { acf_lag1: 0.9, ..rep };
        assert!(majority_acf_within_band(&[inside.clone(), inside.clone(), outside.clone()]));
        assert!(!majority_acf_within_band(&[inside, outside]));
    }
}
