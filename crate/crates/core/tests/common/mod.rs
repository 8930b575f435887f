#![allow(dead_code)]

use std::collections::HashMap;

use oas_core::baselines::{marginal_sweep, ooas_sweep, MarginalState};
use oas_core::diagnostics::{exact_partition_posterior_with, iat};
use oas_core::model::{
    admissible_moves, least_element_relabel, Allocation, BlockStats, MixingPrior, Model,
    NormalGammaBase,
};
use oas_core::oas::{sweep, ChainState, OasOptions};
use oas_core::weights::{
    discover_new_weight_sb, geometric_posterior_params, weighted_permutation_law, Weights,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use statrs::distribution::{Beta, ContinuousCDF};

pub type Check = Result<(), String>;

pub fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Composite Simpson rule on `[a, b]` with `m` (even) intervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, m: usize) -> f64 {
    let h = (b - a) / m as f64;
    let mut s = f(a) + f(b);
    for i in 1..m {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn ln_ng_joint(base: &NormalGammaBase, data: &[f64], mu: f64, tau: f64) -> f64 {
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    let mut t = 0.0;
    for &y in data {
        t += 0.5 * (tau.ln() - ln2pi) - 0.5 * tau * (y - mu).powi(2);
    }
    let p0 = base.lambda0 * tau;
    t += 0.5 * (p0.ln() - ln2pi) - 0.5 * p0 * (mu - base.mu0).powi(2);
    t += base.a0 * base.b0.ln() - statrs::function::gamma::ln_gamma(base.a0)
        + (base.a0 - 1.0) * tau.ln()
        - base.b0 * tau;
    t
}

/// Integrals of `h(mu, tau)` against the unnormalized posterior over
/// `(mu, tau)`, by nested Simpson rules in `(mu, ln tau)`. The joint is
/// rescaled by `exp(-shift)` to stay in range.
pub fn ng_quadrature(
    base: &NormalGammaBase,
    data: &[f64],
    shift: f64,
    h: impl Fn(f64, f64) -> f64,
) -> f64 {
    let n = data.len() as f64;
    let ybar = if data.is_empty() {
        0.0
    } else {
        data.iter().sum::<f64>() / n
    };
    let centre = (base.lambda0 * base.mu0 + n * ybar) / (base.lambda0 + n);
    simpson(
        |s| {
            let tau = s.exp();
            let half = 12.0 / ((base.lambda0 + n) * tau).sqrt();
            tau * simpson(
                |mu| (ln_ng_joint(base, data, mu, tau) - shift).exp() * h(mu, tau),
                centre - half,
                centre + half,
                400,
            )
        },
        -30.0,
        12.0,
        6000,
    )
}

pub fn quadrature_ln_marginal(base: &NormalGammaBase, data: &[f64]) -> f64 {
    let shift = base.ln_marginal_likelihood(data).unwrap_or(0.0);
    ng_quadrature(base, data, shift, |_, _| 1.0).ln() + shift
}

pub fn check_marginal_quadrature() -> Check {
    let cases: Vec<(NormalGammaBase, Vec<f64>)> = vec![
        (NormalGammaBase::new(0.0, 1.0, 1.0, 1.0).unwrap(), vec![0.0]),
        (
            NormalGammaBase::new(0.3, 0.01, 0.5, 0.5).unwrap(),
            vec![-1.2, 0.4, 0.9],
        ),
        (
            NormalGammaBase::new(-2.0, 0.5, 2.0, 3.0).unwrap(),
            vec![1.0, 1.5, -0.5, 2.5, 0.0],
        ),
    ];
    for (base, data) in cases {
        let got = base
            .ln_marginal_likelihood(&data)
            .map_err(|e| e.to_string())?;
        let want = quadrature_ln_marginal(&base, &data);
        ensure((got - want).abs() < 1e-6, || {
            format!("log marginal {got} vs quadrature {want} for {data:?}")
        })?;
    }
    // Closed form for one point: Student-t with 2 a0 degrees of freedom.
    let base = NormalGammaBase::new(0.0, 1.0, 1.0, 1.0).unwrap();
    let scale = (base.b0 * (1.0 + 1.0 / base.lambda0) / base.a0).sqrt();
    let t = statrs::distribution::StudentsT::new(0.0, scale, 2.0 * base.a0).unwrap();
    let want = statrs::distribution::Continuous::ln_pdf(&t, 0.0);
    let got = base.ln_marginal_likelihood(&[0.0]).unwrap();
    ensure((got - want).abs() < 1e-10, || {
        format!("single point {got} vs Student-t {want}")
    })
}

pub fn check_posterior_quadrature() -> Check {
    let base = NormalGammaBase::new(0.0, 1.0, 1.0, 1.0).unwrap();
    let post = base.posterior(&BlockStats::from_values(&[0.0]));
    ensure(
        (post.mu0 - 0.0).abs() < 1e-12
            && (post.lambda0 - 2.0).abs() < 1e-12
            && (post.a0 - 1.5).abs() < 1e-12
            && (post.b0 - 1.0).abs() < 1e-12,
        || format!("posterior of (0) is {post:?}"),
    )?;
    for (base, data) in [
        (base, vec![0.0]),
        (
            NormalGammaBase::new(0.5, 0.01, 0.5, 0.5).unwrap(),
            vec![-1.0, 0.2, 1.7, 0.9],
        ),
    ] {
        let post = base.posterior(&BlockStats::from_values(&data));
        let shift = base.ln_marginal_likelihood(&data).unwrap();
        let z = ng_quadrature(&base, &data, shift, |_, _| 1.0);
        let e_mu = ng_quadrature(&base, &data, shift, |m, _| m) / z;
        let e_tau = ng_quadrature(&base, &data, shift, |_, t| t) / z;
        let e_mu_tau = ng_quadrature(&base, &data, shift, |m, t| m * t) / z;
        let e_tau_mu2 = ng_quadrature(&base, &data, shift, |m, t| t * m * m) / z;
        // Under NG(m, l, a, b): E tau = a/b, E mu tau = m a/b,
        // E tau mu^2 = 1/l + m^2 a/b.
        let eta = post.a0 / post.b0;
        let checks = [
            (e_mu, post.mu0),
            (e_tau, eta),
            (e_mu_tau, post.mu0 * eta),
            (e_tau_mu2, 1.0 / post.lambda0 + post.mu0 * post.mu0 * eta),
        ];
        for (q, a) in checks {
            ensure((q - a).abs() < 1e-6, || {
                format!("posterior moment {q} vs {a} for {data:?}")
            })?;
        }
    }
    Ok(())
}

fn random_model(seed: u64, n: usize, prior: MixingPrior) -> Model {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let data: Vec<f64> = (0..n)
        .map(|_| normal.sample(&mut rng) + if rng.random::<bool>() { 2.5 } else { -2.5 })
        .collect();
    let mean = data.iter().sum::<f64>() / n as f64;
    Model::from_values(
        data,
        NormalGammaBase::new(mean, 0.01, 0.5, 0.5).unwrap(),
        prior,
    )
    .unwrap()
}

fn simplex(w: &Weights) -> Check {
    let observed = w.observed();
    let rest = w.unobserved_mass();
    ensure(observed.iter().all(|&p| p > 0.0 && p.is_finite()), || {
        format!("non-positive weight in {observed:?}")
    })?;
    let sum: f64 = observed.iter().sum();
    ensure(sum < 1.0 && rest > 0.0, || {
        format!("observed mass {sum}, unobserved {rest}")
    })
}

fn state_ok(state: &ChainState) -> Check {
    state.check().map_err(|e| e.to_string())?;
    simplex(state.weights())
}

/// Allocation, alignment and simplex invariants after every sweep of every
/// conditional sampler, and allocation invariants for the marginal one.
pub fn check_sweep_invariants(sweeps: usize) -> Check {
    let priors = [
        MixingPrior::Dp { beta: 1.0 },
        MixingPrior::Py {
            sigma: 0.5,
            beta: 0.5,
        },
        MixingPrior::Esb { a: 1.0, b: 1.0 },
        MixingPrior::Gp { a: 1.0, b: 1.0 },
    ];
    for (p, prior) in priors.into_iter().enumerate() {
        let model = random_model(11 + p as u64, 30, prior);
        let mut rng = ChaCha8Rng::seed_from_u64(99 + p as u64);
        let mut plain = ChainState::single_block(&model, &mut rng).map_err(|e| e.to_string())?;
        let mut collapsed = plain.clone();
        let mut original = plain.clone();
        let copts = OasOptions {
            collapsed: true,
            ..Default::default()
        };
        for t in 0..sweeps {
            sweep(&mut plain, &model, &OasOptions::default(), &mut rng)
                .map_err(|e| e.to_string())?;
            sweep(&mut collapsed, &model, &copts, &mut rng).map_err(|e| e.to_string())?;
            ooas_sweep(&mut original, &model, &OasOptions::default(), &mut rng)
                .map_err(|e| e.to_string())?;
            for (name, s) in [
                ("oas", &plain),
                ("collapsed", &collapsed),
                ("ooas", &original),
            ] {
                state_ok(s).map_err(|e| format!("{name} under {prior} after sweep {t}: {e}"))?;
            }
        }
        if prior.pitman_yor_params().is_some() {
            let mut m = MarginalState::single_block(&model, &mut rng).map_err(|e| e.to_string())?;
            for t in 0..sweeps {
                marginal_sweep(&mut m, &model, &mut rng).map_err(|e| e.to_string())?;
                let a = m.allocation();
                Allocation::from_labels(a.labels().to_vec())
                    .map_err(|e| format!("marginal after sweep {t}: {e}"))?;
                ensure(m.components().len() == a.k(), || {
                    format!("marginal components misaligned at {t}")
                })?;
            }
        }
    }
    Ok(())
}

pub fn check_relabel() -> Check {
    let cases: [(&[usize], &[usize], &[usize]); 3] = [
        (&[2, 2, 1, 3], &[0, 0, 1, 2], &[2, 1, 3]),
        (&[1, 1, 1], &[0, 0, 0], &[1]),
        (&[3, 1, 3, 2], &[0, 1, 0, 2], &[3, 1, 2]),
    ];
    for (c, d, sigma) in cases {
        let (a, s) = least_element_relabel(c);
        ensure(a.labels() == d && s == sigma, || {
            format!("relabel {c:?} gave {:?} {s:?}", a.labels())
        })?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..500 {
        let n = rng.random_range(1..12);
        let c: Vec<usize> = (0..n).map(|_| rng.random_range(0..6)).collect();
        let (a, sigma) = least_element_relabel(&c);
        for x in 0..n {
            for y in 0..n {
                ensure((c[x] == c[y]) == (a.labels()[x] == a.labels()[y]), || {
                    format!("relabel of {c:?} changed the partition")
                })?;
            }
            ensure(sigma[a.labels()[x]] == c[x], || {
                format!("sigma of {c:?} is wrong")
            })?;
        }
        let (again, id) = least_element_relabel(a.labels());
        ensure(
            again == a && id.iter().enumerate().all(|(j, &s)| j == s),
            || format!("relabel not idempotent on {:?}", a.labels()),
        )?;
    }
    Ok(())
}

pub fn check_admissible() -> Check {
    let a = Allocation::from_labels(vec![0, 0, 1, 2]).unwrap();
    ensure(admissible_moves(&a, 2) == vec![1], || {
        format!("{:?}", admissible_moves(&a, 2))
    })?;
    let b = Allocation::from_labels(vec![0, 0]).unwrap();
    ensure(admissible_moves(&b, 1) == vec![0, 1], || {
        format!("{:?}", admissible_moves(&b, 1))
    })?;
    let c = Allocation::from_labels(vec![0]).unwrap();
    ensure(admissible_moves(&c, 0) == vec![0], || {
        format!("{:?}", admissible_moves(&c, 0))
    })
}

pub fn check_iat() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let iid: Vec<f64> = (0..100_000).map(|_| normal.sample(&mut rng)).collect();
    let t = iat(&iid).map_err(|e| e.to_string())?.tau;
    ensure((t - 0.5).abs() < 0.1, || format!("iid tau {t}"))?;
    for rho in [0.5, 0.9] {
        let mut x = 0.0;
        let series: Vec<f64> = (0..200_000)
            .map(|_| {
                x = rho * x + normal.sample(&mut rng);
                x
            })
            .collect();
        let t = iat(&series).map_err(|e| e.to_string())?.tau;
        let want = 0.5 * (1.0 + rho) / (1.0 - rho);
        ensure((t - want).abs() < 0.1 * want, || {
            format!("AR(1) rho {rho}: tau {t} vs {want}")
        })?;
    }
    Ok(())
}

pub fn check_small_oracle() -> Check {
    let post = exact_partition_posterior_with(3, &MixingPrior::Dp { beta: 1.0 }, |_| 0.0)
        .map_err(|e| e.to_string())?;
    let want: HashMap<&str, f64> = [
        ("1 2 3", 2.0 / 6.0),
        ("1 2|3", 1.0 / 6.0),
        ("1 3|2", 1.0 / 6.0),
        ("1|2 3", 1.0 / 6.0),
        ("1|2|3", 1.0 / 6.0),
    ]
    .into_iter()
    .collect();
    ensure(post.len() == 5, || {
        format!("{} partitions of 3", post.len())
    })?;
    for (a, p) in post {
        let w = want[a.signature().as_str()];
        ensure((p - w).abs() < 1e-12, || {
            format!("{}: {p} vs {w}", a.signature())
        })?;
    }
    Ok(())
}

pub fn check_discovery_permutation() -> Check {
    for seed in 0..50 {
        let a = discover_new_weight_sb(&[0.1, 0.3], 0.5, 0.5, &mut ChaCha8Rng::seed_from_u64(seed));
        let b = discover_new_weight_sb(&[0.3, 0.1], 0.5, 0.5, &mut ChaCha8Rng::seed_from_u64(seed));
        ensure(a.to_bits() == b.to_bits(), || {
            format!("seed {seed}: {a} vs {b}")
        })?;
    }
    Ok(())
}

pub fn check_permutation_law() -> Check {
    let law = weighted_permutation_law(&[1, 2], &[0.7, 0.3]).map_err(|e| e.to_string())?;
    let find = |r: &[usize]| {
        law.iter()
            .find(|(p, _)| p == r)
            .map(|x| x.1)
            .unwrap_or(f64::NAN)
    };
    let (id, swap) = (find(&[0, 1]), find(&[1, 0]));
    ensure(
        (id - 0.3).abs() < 1e-12 && (swap - 0.7).abs() < 1e-12,
        || format!("identity {id}, swap {swap}"),
    )
}

pub fn check_geometric_posterior() -> Check {
    let params = geometric_posterior_params(&[3, 2], 1.0, 1.0);
    ensure(params == (6.0, 3.0), || format!("{params:?}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut w = oas_core::weights::GeneralWeights::geometric(1.0, 1.0, 0.5, vec![0, 1])
        .map_err(|e| e.to_string())?;
    let draws: Vec<f64> = (0..5_000)
        .map(|_| {
            w.resample_prefix(&[3, 2], &mut rng);
            w.lambda()
        })
        .collect();
    let beta = Beta::new(6.0, 3.0).unwrap();
    let ks = oas_core::diagnostics::stats::ks_one_sample(&draws, |x| beta.cdf(x))
        .map_err(|e| e.to_string())?;
    ensure(ks.p_value > 0.01, || {
        format!("lambda draws vs Be(6,3): p = {}", ks.p_value)
    })
}

/// Every property above, by name.
pub fn property_suite() -> Vec<(&'static str, Check)> {
    vec![
        ("sweep invariants", check_sweep_invariants(1_000)),
        ("least element relabel", check_relabel()),
        ("admissible moves", check_admissible()),
        ("iat", check_iat()),
        ("exact posterior n=3", check_small_oracle()),
        (
            "discovery permutation invariance",
            check_discovery_permutation(),
        ),
        ("permutation law", check_permutation_law()),
        ("geometric posterior", check_geometric_posterior()),
        (
            "marginal likelihood quadrature",
            check_marginal_quadrature(),
        ),
        ("posterior quadrature", check_posterior_quadrature()),
    ]
}
