use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Integrated autocorrelation time with a batch-means standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IatEstimate {
    pub tau: f64,
    /// Standard error from 50 non-overlapping batches; `None` when the
    /// batches are too short or degenerate.
    pub se: Option<f64>,
    /// Cutoff lag `C`.
    pub cutoff: usize,
}

const BATCHES: usize = 50;
const MIN_LEN: usize = 100;

fn centered(series: &[f64]) -> Result<(Vec<f64>, f64)> {
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let xs: Vec<f64> = series.iter().map(|x| x - mean).collect();
    let ss: f64 = xs.iter().map(|x| x * x).sum();
    if ss.is_nan() || ss <= 0.0 || !ss.is_finite() {
        return Err(Error::Undefined("series has zero variance".into()));
    }
    Ok((xs, ss))
}

fn lag_sum(xs: &[f64], lag: usize) -> f64 {
    xs.iter().zip(&xs[lag..]).map(|(a, b)| a * b).sum()
}

/// Sample autocorrelation at `lag`.
pub fn autocorrelation(series: &[f64], lag: usize) -> Result<f64> {
    if lag == 0 || lag >= series.len() {
        return Err(Error::InvalidParameter(format!(
            "lag {lag} outside 1..{}",
            series.len()
        )));
    }
    let (xs, ss) = centered(series)?;
    Ok(lag_sum(&xs, lag) / ss)
}

fn tau_only(series: &[f64]) -> Result<(f64, usize)> {
    let (xs, ss) = centered(series)?;
    let threshold = 2.0 / (series.len() as f64).sqrt();
    let mut tau = 0.5;
    let mut lag = 1;
    while lag < xs.len() {
        let rho = lag_sum(&xs, lag) / ss;
        if rho < threshold {
            break;
        }
        tau += rho;
        lag += 1;
    }
    Ok((tau, lag))
}

/// `tau = 1/2 + sum_{l < C} rho_l` with `C = min{l : rho_l < 2 / sqrt(N)}`.
pub fn iat(series: &[f64]) -> Result<IatEstimate> {
    if series.len() < MIN_LEN {
        return Err(Error::InvalidParameter(format!(
            "IAT needs at least {MIN_LEN} values, got {}",
            series.len()
        )));
    }
    let (tau, cutoff) = tau_only(series)?;
    let len = series.len() / BATCHES;
    let mut per_batch = Vec::with_capacity(BATCHES);
    if len >= MIN_LEN {
        for chunk in series.chunks_exact(len).take(BATCHES) {
            if let Ok((t, _)) = tau_only(chunk) {
                per_batch.push(t);
            }
        }
    }
    let se = (per_batch.len() >= 2).then(|| {
        let m = per_batch.len() as f64;
        let mean = per_batch.iter().sum::<f64>() / m;
        let var = per_batch.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (m - 1.0);
        (var / m).sqrt()
    });
    Ok(IatEstimate { tau, se, cutoff })
}
