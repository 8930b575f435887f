use crate::dist::normalize_log_weights;
use crate::error::{Error, Result};
use crate::model::{Allocation, BlockStats, MixingPrior, NormalGammaBase};

/// Largest sample size accepted by [`exact_partition_posterior`].
pub const ORACLE_MAX_N: usize = 8;

/// Every set partition of `{1..n}`, as ordered allocations (restricted
/// growth strings) in lexicographic order.
pub fn enumerate_partitions(n: usize) -> Vec<Allocation> {
    let mut out = Vec::new();
    if n == 0 {
        return out;
    }
    let mut labels = vec![0usize; n];
    let mut maxes = vec![0usize; n];
    loop {
        out.push(Allocation::from_labels(labels.clone()).expect("restricted growth string"));
        // Rightmost position that can still be incremented.
        let mut pos = n - 1;
        loop {
            if pos == 0 {
                return out;
            }
            let prefix_max = maxes[pos - 1];
            if labels[pos] <= prefix_max {
                labels[pos] += 1;
                maxes[pos] = prefix_max.max(labels[pos]);
                for t in pos + 1..n {
                    labels[t] = 0;
                    maxes[t] = maxes[pos];
                }
                break;
            }
            pos -= 1;
        }
    }
}

/// Sequential Pólya-urn log prior probability of an ordered allocation.
fn ln_urn_prior(alloc: &Allocation, sigma: f64, beta: f64) -> f64 {
    let mut sizes: Vec<usize> = Vec::new();
    let mut total = 0.0;
    for (i, &d) in alloc.labels().iter().enumerate() {
        let denom = beta + i as f64;
        let num = if d == sizes.len() {
            sizes.push(0);
            beta + (sizes.len() - 1) as f64 * sigma
        } else {
            sizes[d] as f64 - sigma
        };
        sizes[d] += 1;
        if i > 0 {
            total += num.ln() - denom.ln();
        }
    }
    total
}

/// Exact posterior over set partitions of `n` points for a DP/PY mixture
/// with an arbitrary block log-likelihood (a function of block members).
pub fn exact_partition_posterior_with<F>(
    n: usize,
    prior: &MixingPrior,
    ln_block: F,
) -> Result<Vec<(Allocation, f64)>>
where
    F: Fn(&[usize]) -> f64,
{
    if n > ORACLE_MAX_N {
        return Err(Error::TooLarge {
            what: "oracle sample size",
            got: n,
            limit: ORACLE_MAX_N,
        });
    }
    if n == 0 {
        return Err(Error::InvalidData(
            "oracle needs at least one observation".into(),
        ));
    }
    prior.validate()?;
    let (sigma, beta) = prior
        .pitman_yor_params()
        .ok_or_else(|| Error::Incompatible {
            sampler: "oracle".into(),
            prior: prior.to_string(),
            reason: "no closed-form partition prior".into(),
        })?;
    let parts = enumerate_partitions(n);
    let ln_w: Vec<f64> = parts
        .iter()
        .map(|alloc| {
            ln_urn_prior(alloc, sigma, beta)
                + alloc.blocks().iter().map(|b| ln_block(b)).sum::<f64>()
        })
        .collect();
    let probs = normalize_log_weights(&ln_w);
    Ok(parts.into_iter().zip(probs).collect())
}

/// Exact posterior over set partitions for the Normal–Gamma mixture: prior
/// from the sequential predictive rule, times the product of block marginal
/// likelihoods, normalized.
pub fn exact_partition_posterior(
    data: &[f64],
    prior: &MixingPrior,
    base: &NormalGammaBase,
) -> Result<Vec<(Allocation, f64)>> {
    exact_partition_posterior_with(data.len(), prior, |block| {
        let mut s = BlockStats::default();
        for &i in block {
            s.push(data[i]);
        }
        base.ln_marginal_stats(&s)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bell_numbers() {
        let bell = [1, 2, 5, 15, 52, 203, 877, 4140];
        for (n, &b) in (1..=8).zip(&bell) {
            assert_eq!(enumerate_partitions(n).len(), b);
        }
    }

    #[test]
    fn crp_hand_values() {
        let law =
            exact_partition_posterior_with(3, &MixingPrior::Dp { beta: 1.0 }, |_| 0.0).unwrap();
        let get = |sig: &str| law.iter().find(|(a, _)| a.signature() == sig).unwrap().1;
        assert!((get("1 2 3") - 2.0 / 6.0).abs() < 1e-12);
        for sig in ["1 2|3", "1 3|2", "1|2 3", "1|2|3"] {
            assert!((get(sig) - 1.0 / 6.0).abs() < 1e-12, "{sig}");
        }
    }

    #[test]
    fn single_point() {
        let base = NormalGammaBase::new(0.0, 1.0, 1.0, 1.0).unwrap();
        let law = exact_partition_posterior(&[0.4], &MixingPrior::Dp { beta: 2.0 }, &base).unwrap();
        assert_eq!(law.len(), 1);
        assert!((law[0].1 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn normalized_and_py_reduces_to_dp() {
        let base = NormalGammaBase::new(0.0, 0.01, 0.5, 0.5).unwrap();
        let data = [-1.2, -0.7, 0.9, 1.1, 0.2, 1.6];
        let dp = exact_partition_posterior(&data, &MixingPrior::Dp { beta: 1.3 }, &base).unwrap();
        let py = exact_partition_posterior(
            &data,
            &MixingPrior::Py {
                sigma: 0.0,
                beta: 1.3,
            },
            &base,
        )
        .unwrap();
        let total: f64 = dp.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
        for ((a, p), (b, q)) in dp.iter().zip(&py) {
            assert_eq!(a, b);
            assert_eq!(p.to_bits(), q.to_bits());
        }
    }

    #[test]
    fn too_large() {
        let base = NormalGammaBase::new(0.0, 1.0, 1.0, 1.0).unwrap();
        let r = exact_partition_posterior(&[0.0; 9], &MixingPrior::Dp { beta: 1.0 }, &base);
        assert!(matches!(r, Err(Error::TooLarge { .. })));
    }

    #[test]
    fn esb_has_no_oracle() {
        let base = NormalGammaBase::new(0.0, 1.0, 1.0, 1.0).unwrap();
        let r = exact_partition_posterior(&[0.0], &MixingPrior::Esb { a: 1.0, b: 1.0 }, &base);
        assert!(r.is_err());
    }
}
