//! Random variate generation and log densities used across the samplers.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Open01, StandardNormal};
use statrs::function::gamma::ln_gamma;

/// Smallest stick value handed out by [`sample_beta`]; keeps `ln v` finite.
pub const STICK_FLOOR: f64 = 1e-300;

/// Largest stick value handed out by [`sample_beta`]; keeps `ln(1 - v)` finite.
pub const STICK_CEIL: f64 = 1.0 - f64::EPSILON / 2.0;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

pub fn uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    Open01.sample(rng)
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Logarithm of a Gamma(shape, 1) variate. Shapes below one are boosted
/// (`G(a) = G(a + 1) U^{1/a}`) and combined in log space so that tiny shapes
/// do not underflow to zero.
pub fn sample_ln_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64) -> f64 {
    debug_assert!(shape > 0.0);
    if shape < 1.0 {
        let boosted = sample_ln_gamma(rng, shape + 1.0);
        boosted + uniform(rng).ln() / shape
    } else {
        let g: f64 = Gamma::new(shape, 1.0)
            .expect("shape checked positive")
            .sample(rng);
        g.ln()
    }
}

/// Gamma(shape, rate) variate.
pub fn sample_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64) -> f64 {
    sample_ln_gamma(rng, shape).exp() / rate
}

/// Beta(a, b) variate through the gamma-ratio construction, clamped to
/// `[STICK_FLOOR, STICK_CEIL]`.
pub fn sample_beta<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> f64 {
    debug_assert!(
        a > 0.0 && b > 0.0,
        "beta parameters must be positive: {a}, {b}"
    );
    let la = sample_ln_gamma(rng, a);
    let lb = sample_ln_gamma(rng, b);
    let v = 1.0 / (1.0 + (lb - la).exp());
    v.clamp(STICK_FLOOR, STICK_CEIL)
}

pub fn ln_beta_fn(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

pub fn ln_beta_pdf(x: f64, a: f64, b: f64) -> f64 {
    (a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p() - ln_beta_fn(a, b)
}

/// Gamma density with shape/rate parametrization.
pub fn ln_gamma_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

/// Normal density parametrized by precision.
pub fn ln_normal_pdf_prec(x: f64, mean: f64, precision: f64) -> f64 {
    let d = x - mean;
    0.5 * (precision.ln() - LN_2PI) - 0.5 * precision * d * d
}

pub fn ln_2pi() -> f64 {
    LN_2PI
}

/// Draws an index with probability proportional to `exp(log_weights[i])`.
///
/// The buffer is overwritten with the unnormalized weights after
/// max-subtraction. Entries equal to `-inf` are never selected unless every
/// entry is `-inf`, in which case index 0 is returned.
pub fn sample_log_categorical<R: Rng + ?Sized>(rng: &mut R, log_weights: &mut [f64]) -> usize {
    debug_assert!(!log_weights.is_empty());
    let max = log_weights
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return 0;
    }
    let mut total = 0.0;
    for w in log_weights.iter_mut() {
        *w = (*w - max).exp();
        total += *w;
    }
    let mut u = uniform(rng) * total;
    for (idx, &w) in log_weights.iter().enumerate() {
        if u < w {
            return idx;
        }
        u -= w;
    }
    // Rounding left a sliver of mass; fall back to the last positive entry.
    log_weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// Normalized probabilities from log weights (max-subtracted).
pub fn normalize_log_weights(log_weights: &[f64]) -> Vec<f64> {
    let max = log_weights
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = log_weights.iter().map(|w| (w - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|w| w / total).collect()
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}
