//! Small frequentist tests used by the statistical checks.

use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample standard deviation.
pub fn sd(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)).sqrt()
}

pub fn standard_error(xs: &[f64]) -> f64 {
    sd(xs) / (xs.len() as f64).sqrt()
}

/// Asymptotic Kolmogorov tail `P(K > lambda)`.
pub fn kolmogorov_tail(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut total = 0.0;
    for j in 1..=100 {
        let term = (-2.0 * (j * j) as f64 * lambda * lambda).exp();
        total += if j % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * total).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
}

fn ks_p(d: f64, n_eff: f64) -> f64 {
    let root = n_eff.sqrt();
    kolmogorov_tail((root + 0.12 + 0.11 / root) * d)
}

/// One-sample Kolmogorov–Smirnov test against a continuous cdf.
pub fn ks_one_sample(sample: &[f64], cdf: impl Fn(f64) -> f64) -> Result<TestResult> {
    if sample.is_empty() {
        return Err(Error::InvalidParameter(
            "KS test needs a nonempty sample".into(),
        ));
    }
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let d = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max);
    Ok(TestResult {
        statistic: d,
        p_value: ks_p(d, n),
    })
}

/// Two-sample Kolmogorov–Smirnov test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidParameter(
            "KS test needs nonempty samples".into(),
        ));
    }
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < xa.len() && j < xb.len() {
        let x = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= x {
            i += 1;
        }
        while j < xb.len() && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(TestResult {
        statistic: d,
        p_value: ks_p(d, na * nb / (na + nb)),
    })
}

/// Pearson chi-square goodness of fit of `observed` counts against
/// `expected` probabilities. Cells with zero probability must be empty.
pub fn chi_square_gof(observed: &[u64], expected: &[f64]) -> Result<TestResult> {
    if observed.len() != expected.len() || observed.len() < 2 {
        return Err(Error::InvalidParameter(
            "chi-square needs matching cells, at least two".into(),
        ));
    }
    let n: u64 = observed.iter().sum();
    let total: f64 = expected.iter().sum();
    let mut stat = 0.0;
    let mut cells = 0usize;
    for (&o, &p) in observed.iter().zip(expected) {
        let e = n as f64 * p / total;
        if e <= 0.0 {
            if o > 0 {
                return Ok(TestResult {
                    statistic: f64::INFINITY,
                    p_value: 0.0,
                });
            }
            continue;
        }
        stat += (o as f64 - e).powi(2) / e;
        cells += 1;
    }
    if cells < 2 {
        return Err(Error::InvalidParameter(
            "chi-square needs two cells with positive mass".into(),
        ));
    }
    let law =
        ChiSquared::new((cells - 1) as f64).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(TestResult {
        statistic: stat,
        p_value: law.sf(stat),
    })
}

/// Chi-square test of homogeneity for two count vectors over the same cells.
pub fn chi_square_two_sample(a: &[u64], b: &[u64]) -> Result<TestResult> {
    if a.len() != b.len() {
        return Err(Error::InvalidParameter(
            "count vectors differ in length".into(),
        ));
    }
    let (na, nb) = (a.iter().sum::<u64>() as f64, b.iter().sum::<u64>() as f64);
    let mut stat = 0.0;
    let mut cells = 0usize;
    for (&x, &y) in a.iter().zip(b) {
        let pooled = (x + y) as f64 / (na + nb);
        if pooled == 0.0 {
            continue;
        }
        let (ea, eb) = (na * pooled, nb * pooled);
        stat += (x as f64 - ea).powi(2) / ea + (y as f64 - eb).powi(2) / eb;
        cells += 1;
    }
    if cells < 2 {
        return Err(Error::InvalidParameter(
            "homogeneity test needs two occupied cells".into(),
        ));
    }
    let law =
        ChiSquared::new((cells - 1) as f64).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(TestResult {
        statistic: stat,
        p_value: law.sf(stat),
    })
}

/// Paired t test of `H1: mean(a - b) > 0`.
pub fn paired_t_greater(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::InvalidParameter(
            "paired t test needs two equal samples of size >= 2".into(),
        ));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let se = standard_error(&diffs);
    let m = mean(&diffs);
    if se == 0.0 {
        let p = if m > 0.0 { 0.0 } else { 1.0 };
        return Ok(TestResult {
            statistic: m.signum() * f64::INFINITY,
            p_value: p,
        });
    }
    let t = m / se;
    let law = StudentsT::new(0.0, 1.0, (diffs.len() - 1) as f64)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(TestResult {
        statistic: t,
        p_value: law.sf(t),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn kolmogorov_known_values() {
        assert!((kolmogorov_tail(1.36) - 0.0495).abs() < 1e-3);
        assert!((kolmogorov_tail(1.63) - 0.0098).abs() < 1e-3);
    }

    #[test]
    fn ks_accepts_uniform_and_rejects_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xs: Vec<f64> = (0..2000).map(|_| crate::dist::uniform(&mut rng)).collect();
        assert!(ks_one_sample(&xs, |x| x.clamp(0.0, 1.0)).unwrap().p_value > 0.01);
        let shifted: Vec<f64> = xs.iter().map(|x| x * 0.9).collect();
        assert!(
            ks_one_sample(&shifted, |x| x.clamp(0.0, 1.0))
                .unwrap()
                .p_value
                < 1e-6
        );
        assert!(ks_two_sample(&xs[..1000], &xs[1000..]).unwrap().p_value > 0.01);
        assert!(ks_two_sample(&xs, &shifted).unwrap().p_value < 1e-3);
    }

    #[test]
    fn chi_square_cases() {
        let r = chi_square_gof(&[50, 50], &[0.5, 0.5]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!((r.p_value - 1.0).abs() < 1e-12);
        assert!(chi_square_gof(&[90, 10], &[0.5, 0.5]).unwrap().p_value < 1e-10);
        assert_eq!(
            chi_square_gof(&[1, 5, 5], &[0.0, 0.5, 0.5])
                .unwrap()
                .p_value,
            0.0
        );
        assert!(chi_square_two_sample(&[30, 70], &[31, 69]).unwrap().p_value > 0.5);
    }

    #[test]
    fn paired_t_direction() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.5];
        let b = [0.0, 1.5, 2.0, 3.0, 4.0];
        let r = paired_t_greater(&a, &b).unwrap();
        assert!(r.statistic > 0.0 && r.p_value < 0.01);
        assert!(paired_t_greater(&b, &a).unwrap().p_value > 0.99);
    }
}
