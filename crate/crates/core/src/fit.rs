//! Least-squares regressions behind the decay and Gaussian fits.

use crate::error::{Error, Result};
use faer::linalg::solvers::SolveLstsq;
use faer::Mat;
use serde::{Deserialize, Serialize};

/// `y ≈ intercept + slope·x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
    pub r_squared: f64,
    pub sample_count: usize,
}

/// Ordinary least squares line. `r²` is clamped to `[0, 1]` and is 1 for constant data
/// that the line reproduces.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() {
        return Err(Error::InsufficientSamples("x and y lengths differ".into()));
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::InsufficientSamples(format!("{n} points for a line")));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::InsufficientSamples("all abscissae coincide".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { (1.0 - ss_res / ss_tot).clamp(0.0, 1.0) } else { 1.0 };
    Ok(LinearFit { intercept, slope, r_squared, sample_count: n })
}

/// Least squares with several regressors: `y ≈ Σ_k c_k·X[k]`. Returns coefficients and `r²`
/// about the mean of `y`.
pub fn multilinear_fit(columns: &[Vec<f64>], y: &[f64]) -> Result<(Vec<f64>, f64)> {
    let k = columns.len();
    let n = y.len();
    if k == 0 || columns.iter().any(|c| c.len() != n) {
        return Err(Error::InsufficientSamples("regressor columns do not match the data".into()));
    }
    if n < k + 1 {
        return Err(Error::InsufficientSamples(format!("{n} points for {k} coefficients")));
    }
    let a = Mat::from_fn(n, k, |i, j| columns[j][i]);
    let b = Mat::from_fn(n, 1, |i, _| y[i]);
    let coef = a.qr().solve_lstsq(&b);
    let c: Vec<f64> = (0..k).map(|j| coef[(j, 0)]).collect();
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::InsufficientSamples("rank-deficient regression".into()));
    }
    let my = y.iter().sum::<f64>() / n as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let ss_res: f64 = (0..n).map(|i| (y[i] - (0..k).map(|j| c[j] * columns[j][i]).sum::<f64>()).powi(2)).sum();
    let r2 = if ss_tot > 0.0 { (1.0 - ss_res / ss_tot).clamp(0.0, 1.0) } else { 1.0 };
    Ok((c, r2))
}

/// Fitted `log|G| ≈ log_amplitude − rate·x`; `rate > 0` means decay.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub log_amplitude: f64,
    pub rate: f64,
    pub r_squared: f64,
    pub sample_count: usize,
}

/// Regresses `log y` on `x`, dropping zero samples.
pub fn decay_fit(x: &[f64], y: &[f64]) -> Result<DecayFit> {
    let (xs, ls): (Vec<f64>, Vec<f64>) = x.iter().zip(y).filter(|(_, &v)| v > 0.0 && v.is_finite()).map(|(&a, &v)| (a, v.ln())).unzip();
    if xs.is_empty() {
        return Err(Error::InsufficientSamples("all samples vanish".into()));
    }
    let f = linear_fit(&xs, &ls)?;
    Ok(DecayFit { log_amplitude: f.intercept, rate: -f.slope, r_squared: f.r_squared, sample_count: f.sample_count })
}

/// Median of a sample; `None` when empty.
pub fn median(values: &[f64]) -> Option<f64> {
    quantile(values, 0.5)
}

/// Linearly interpolated quantile, `q ∈ [0, 1]`.
pub fn quantile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(v[lo] + (v[hi] - v[lo]) * (pos - lo as f64))
}
