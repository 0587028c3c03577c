use serde::{Deserialize, Serialize};

use super::{IntegralResult, QuadratureError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanVerdict {
    Plateau,
    Diverging,
    Inconclusive,
}

/// Classification thresholds for [`cutoff_scan`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanThresholds {
    /// Plateau when the last two values differ by less than this fraction.
    pub plateau_rel_tol: f64,
    /// Diverging needs |v_n / v_{n-1}| above this on the last step.
    pub diverging_ratio: f64,
}

impl Default for ScanThresholds {
    fn default() -> Self {
        ScanThresholds {
            plateau_rel_tol: 1e-2,
            diverging_ratio: 1.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRecord {
    pub cutoffs: Vec<f64>,
    pub values: Vec<f64>,
    pub errors: Vec<f64>,
    pub verdict: ScanVerdict,
}

impl ScanRecord {
    /// |v_n − v_{n−1}| / |v_n| over the final step.
    pub fn last_relative_change(&self) -> f64 {
        let n = self.values.len();
        let (a, b) = (self.values[n - 2], self.values[n - 1]);
        (b - a).abs() / b.abs()
    }
}

/// Evaluates `family` at each cutoff and classifies the series.
///
/// Every point must converge; the first failure is propagated.
pub fn cutoff_scan<F, E>(
    mut family: F,
    cutoffs: &[f64],
    thresholds: &ScanThresholds,
) -> Result<ScanRecord, E>
where
    F: FnMut(f64) -> Result<IntegralResult<f64>, E>,
    E: From<QuadratureError>,
{
    if cutoffs.len() < 4 || cutoffs.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(QuadratureError::InvalidScan.into());
    }
    let mut values = Vec::with_capacity(cutoffs.len());
    let mut errors = Vec::with_capacity(cutoffs.len());
    for &c in cutoffs {
        let r = family(c)?.require()?;
        values.push(r.value);
        errors.push(r.error_estimate);
    }
    let verdict = classify(&values, thresholds);
    Ok(ScanRecord {
        cutoffs: cutoffs.to_vec(),
        values,
        errors,
        verdict,
    })
}

fn classify(values: &[f64], th: &ScanThresholds) -> ScanVerdict {
    let n = values.len();
    let (prev, last) = (values[n - 2], values[n - 1]);
    if (last - prev).abs() < th.plateau_rel_tol * last.abs() {
        return ScanVerdict::Plateau;
    }
    let increasing = values.windows(2).all(|w| w[1].abs() > w[0].abs());
    if increasing && prev != 0.0 && (last / prev).abs() > th.diverging_ratio {
        return ScanVerdict::Diverging;
    }
    ScanVerdict::Inconclusive
}
