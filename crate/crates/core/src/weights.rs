//! Weight laws: stick-breaking in size-biased order for DP/PY, and the
//! `(p, alpha)` representation for priors whose size-biased law is not
//! available (exchangeable stick-breaking and geometric weights).
//!
//! Block indexes are 0-based. Index vectors `alpha` are 0-based positions in
//! the weight prefix `p`; stick parameters follow the 1-based convention of
//! the stick-breaking literature (`Be(1 - sigma, beta + j sigma)` for the
//! `j`-th stick, `j >= 1`).

use itertools::Itertools;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist::{self, ln_beta_pdf, STICK_CEIL, STICK_FLOOR};
use crate::error::{Error, Result};
use crate::model::MixingPrior;

/// Largest block count for which the weighted permutation is enumerated.
pub const ENUMERATION_LIMIT: usize = 6;

/// Converts sticks to weights; also returns the leftover tail mass.
pub fn sticks_to_weights(v: &[f64]) -> Result<(Vec<f64>, f64)> {
    let mut rest = 1.0;
    let mut p = Vec::with_capacity(v.len());
    for (j, &vj) in v.iter().enumerate() {
        if !(vj > 0.0 && vj < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "stick {} = {vj} is outside (0, 1)",
                j + 1
            )));
        }
        p.push(vj * rest);
        rest *= 1.0 - vj;
    }
    Ok((p, rest))
}

/// Inverse of [`sticks_to_weights`]: `v_j = p_j / (1 - sum_{l<j} p_l)`.
pub fn weights_to_sticks(p: &[f64]) -> Vec<f64> {
    let mut used = 0.0;
    p.iter()
        .map(|&pj| {
            let v = pj / (1.0 - used);
            used += pj;
            v.clamp(STICK_FLOOR, STICK_CEIL)
        })
        .collect()
}

/// Sum in ascending order, so the result does not depend on input order.
pub fn sorted_sum(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.iter().sum()
}

/// Prior parameters of the `j`-th stick (1-based) for PY(`sigma`, `beta`).
pub fn stick_prior_params(j: usize, sigma: f64, beta: f64) -> (f64, f64) {
    (1.0 - sigma, beta + j as f64 * sigma)
}

/// Posterior stick parameters `Be(n_j - sigma, sum_{l>j} n_l + beta + j sigma)`.
pub fn stick_posterior_params(counts: &[usize], sigma: f64, beta: f64) -> Result<Vec<(f64, f64)>> {
    let mut after: usize = counts.iter().sum();
    let mut params = Vec::with_capacity(counts.len());
    for (idx, &n) in counts.iter().enumerate() {
        after -= n;
        let j = (idx + 1) as f64;
        let a = n as f64 - sigma;
        let b = after as f64 + beta + j * sigma;
        if !(a > 0.0 && b > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "stick {} posterior Be({a}, {b}) has a nonpositive parameter",
                idx + 1
            )));
        }
        params.push((a, b));
    }
    Ok(params)
}

/// Weights in size-biased order under a PY(`sigma`, `beta`) prior
/// (`sigma = 0` is the DP).
#[derive(Debug, Clone, PartialEq)]
pub struct SizeBiasedWeights {
    sigma: f64,
    beta: f64,
    p: Vec<f64>,
}

impl SizeBiasedWeights {
    pub fn new(prior: &MixingPrior, p: Vec<f64>) -> Result<Self> {
        let (sigma, beta) = pitman_yor(prior)?;
        let total: f64 = p.iter().sum();
        if p.iter().any(|&x| x.is_nan() || x <= 0.0) || total >= 1.0 {
            return Err(Error::InvalidParameter(
                "size-biased weights must be positive with sum below one".into(),
            ));
        }
        Ok(SizeBiasedWeights { sigma, beta, p })
    }

    pub fn from_sticks(prior: &MixingPrior, v: &[f64]) -> Result<Self> {
        let (p, _) = sticks_to_weights(v)?;
        let (sigma, beta) = pitman_yor(prior)?;
        Ok(SizeBiasedWeights { sigma, beta, p })
    }

    /// First `k` weights drawn from the prior.
    pub fn sample_prior<R: Rng + ?Sized>(
        prior: &MixingPrior,
        k: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let (sigma, beta) = pitman_yor(prior)?;
        let v: Vec<f64> = (1..=k)
            .map(|j| {
                let (a, b) = stick_prior_params(j, sigma, beta);
                dist::sample_beta(rng, a, b)
            })
            .collect();
        let (p, _) = sticks_to_weights(&v)?;
        Ok(SizeBiasedWeights { sigma, beta, p })
    }

    /// Full conditional of the first `k_n` weights given block sizes.
    pub fn sample_posterior<R: Rng + ?Sized>(
        prior: &MixingPrior,
        counts: &[usize],
        rng: &mut R,
    ) -> Result<Self> {
        let (sigma, beta) = pitman_yor(prior)?;
        let params = stick_posterior_params(counts, sigma, beta)?;
        let v: Vec<f64> = params
            .iter()
            .map(|&(a, b)| dist::sample_beta(rng, a, b))
            .collect();
        let (p, _) = sticks_to_weights(&v)?;
        Ok(SizeBiasedWeights { sigma, beta, p })
    }

    pub fn weights(&self) -> &[f64] {
        &self.p
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn sticks(&self) -> Vec<f64> {
        weights_to_sticks(&self.p)
    }

    pub fn tail(&self) -> f64 {
        (1.0 - self.p.iter().sum::<f64>()).max(0.0)
    }

    /// Log density of the weights under independent `Be(a_j, b_j)` sticks,
    /// including the change of variables from sticks to weights.
    pub fn ln_density_with(&self, params: impl Iterator<Item = (f64, f64)>) -> f64 {
        let mut used = 0.0;
        let mut total = 0.0;
        for (&pj, (a, b)) in self.p.iter().zip(params) {
            let rest = 1.0 - used;
            let v = (pj / rest).clamp(STICK_FLOOR, STICK_CEIL);
            total += ln_beta_pdf(v, a, b) - rest.ln();
            used += pj;
        }
        total
    }

    pub fn ln_prior_density(&self) -> f64 {
        let (sigma, beta) = (self.sigma, self.beta);
        self.ln_density_with((1..=self.p.len()).map(|j| stick_prior_params(j, sigma, beta)))
    }

    pub fn ln_posterior_density(&self, counts: &[usize]) -> Result<f64> {
        let params = stick_posterior_params(counts, self.sigma, self.beta)?;
        Ok(self.ln_density_with(params.into_iter()))
    }

    pub(crate) fn remove(&mut self, j: usize) {
        self.p.remove(j);
    }

    #[cfg(test)]
    pub(crate) fn from_raw(sigma: f64, beta: f64, p: Vec<f64>) -> Self {
        SizeBiasedWeights { sigma, beta, p }
    }

    pub(crate) fn discover<R: Rng + ?Sized>(&mut self, rng: &mut R) -> f64 {
        let w = discover_new_weight_sb(&self.p, self.sigma, self.beta, rng);
        self.p.push(w);
        w
    }

    pub(crate) fn permute(&mut self, sigma: &[usize]) {
        self.p = sigma.iter().map(|&s| self.p[s]).collect();
    }
}

fn pitman_yor(prior: &MixingPrior) -> Result<(f64, f64)> {
    prior.validate()?;
    prior.pitman_yor_params().ok_or_else(|| {
        Error::InvalidParameter(format!("{prior} has no size-biased stick representation"))
    })
}

/// Weight of a newly discovered block given the weights of the `k` blocks
/// already seen: `v (1 - sum p)` with `v ~ Be(1 - sigma, beta + (k + 1) sigma)`.
pub fn discover_new_weight_sb<R: Rng + ?Sized>(
    current: &[f64],
    sigma: f64,
    beta: f64,
    rng: &mut R,
) -> f64 {
    let (a, b) = stick_prior_params(current.len() + 1, sigma, beta);
    let v = dist::sample_beta(rng, a, b);
    new_weight_from_stick(current, v)
}

/// Deterministic part of [`discover_new_weight_sb`] for a given stick.
pub fn new_weight_from_stick(current: &[f64], v: f64) -> f64 {
    let rest = (1.0 - sorted_sum(current)).max(0.0);
    v * rest
}

/// Prior on weights in arbitrary order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum WeightLaw {
    /// `p_j = v_j prod_{l<j} (1 - v_l)` with `v_j` iid `Be(a, b)`.
    Esb { a: f64, b: f64 },
    /// `p_j = lambda (1 - lambda)^{j-1}`, `lambda ~ Be(a, b)`.
    Geometric { a: f64, b: f64 },
    /// A fixed, finite weight vector (no randomness in `p`).
    Fixed,
}

impl WeightLaw {
    pub fn from_prior(prior: &MixingPrior) -> Result<Self> {
        prior.validate()?;
        match *prior {
            MixingPrior::Esb { a, b } => Ok(WeightLaw::Esb { a, b }),
            MixingPrior::Gp { a, b } => Ok(WeightLaw::Geometric { a, b }),
            _ => Err(Error::InvalidParameter(format!(
                "{prior} is handled through size-biased weights"
            ))),
        }
    }
}

/// Posterior stick parameters for ESB weights given index totals `r`:
/// `v_j ~ Be(r_j + a, sum_{l>j} r_l + b)`.
pub fn esb_posterior_params(r: &[usize], a: f64, b: f64) -> Vec<(f64, f64)> {
    let mut after: usize = r.iter().sum();
    r.iter()
        .map(|&rj| {
            after -= rj;
            (rj as f64 + a, after as f64 + b)
        })
        .collect()
}

/// Posterior of the geometric parameter: `Be(a + sum r_j, b + sum (j-1) r_j)`.
pub fn geometric_posterior_params(r: &[usize], a: f64, b: f64) -> (f64, f64) {
    let total: usize = r.iter().sum();
    let shifted: usize = r.iter().enumerate().map(|(j, &rj)| j * rj).sum();
    (a + total as f64, b + shifted as f64)
}

/// Weights `p` in arbitrary order, a finite prefix of which is instantiated,
/// together with the discovery indexes `alpha` (0-based) of the occupied
/// blocks: block `j` has weight `p[alpha[j]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralWeights {
    law: WeightLaw,
    p: Vec<f64>,
    tail: f64,
    lambda: f64,
    alpha: Vec<usize>,
}

impl GeneralWeights {
    /// Empty prefix and no discovered blocks; `lambda` drawn from its prior
    /// for geometric weights.
    pub fn empty<R: Rng + ?Sized>(law: WeightLaw, rng: &mut R) -> Result<Self> {
        let lambda = match law {
            WeightLaw::Geometric { a, b } => {
                check_beta(a, b)?;
                dist::sample_beta(rng, a, b)
            }
            WeightLaw::Esb { a, b } => {
                check_beta(a, b)?;
                f64::NAN
            }
            WeightLaw::Fixed => {
                return Err(Error::InvalidParameter(
                    "fixed weights need an explicit vector".into(),
                ))
            }
        };
        Ok(GeneralWeights {
            law,
            p: Vec::new(),
            tail: 1.0,
            lambda,
            alpha: Vec::new(),
        })
    }

    /// Geometric weights with a given `lambda`.
    pub fn geometric(a: f64, b: f64, lambda: f64, alpha: Vec<usize>) -> Result<Self> {
        check_beta(a, b)?;
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "lambda = {lambda} outside (0, 1)"
            )));
        }
        let mut w = GeneralWeights {
            law: WeightLaw::Geometric { a, b },
            p: Vec::new(),
            tail: 1.0,
            lambda,
            alpha: Vec::new(),
        };
        let needed = alpha.iter().copied().max().map_or(0, |m| m + 1);
        w.rebuild_geometric(needed);
        w.set_alpha(alpha)?;
        Ok(w)
    }

    /// ESB weights from explicit sticks.
    pub fn esb_from_sticks(a: f64, b: f64, v: &[f64], alpha: Vec<usize>) -> Result<Self> {
        check_beta(a, b)?;
        let (p, tail) = sticks_to_weights(v)?;
        let mut w = GeneralWeights {
            law: WeightLaw::Esb { a, b },
            p,
            tail,
            lambda: f64::NAN,
            alpha: Vec::new(),
        };
        w.set_alpha(alpha)?;
        Ok(w)
    }

    /// A fixed finite weight vector summing to one.
    pub fn fixed(p: Vec<f64>, alpha: Vec<usize>) -> Result<Self> {
        let total: f64 = p.iter().sum();
        if p.iter().any(|&x| x.is_nan() || x < 0.0) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(
                "fixed weights must be a probability vector".into(),
            ));
        }
        let mut w = GeneralWeights {
            law: WeightLaw::Fixed,
            p,
            tail: 0.0,
            lambda: f64::NAN,
            alpha: Vec::new(),
        };
        w.set_alpha(alpha)?;
        Ok(w)
    }

    /// Weights from the prior together with `k` size-biased picks.
    pub fn sample_prior<R: Rng + ?Sized>(law: WeightLaw, k: usize, rng: &mut R) -> Result<Self> {
        let mut w = GeneralWeights::empty(law, rng)?;
        for _ in 0..k {
            w.discover(rng);
        }
        Ok(w)
    }

    fn set_alpha(&mut self, alpha: Vec<usize>) -> Result<()> {
        if !alpha.iter().all_unique() {
            return Err(Error::InvalidParameter(
                "alpha entries must be distinct".into(),
            ));
        }
        if alpha.iter().any(|&a| a >= self.p.len()) {
            return Err(Error::InvalidParameter(
                "alpha points beyond the weight prefix".into(),
            ));
        }
        self.alpha = alpha;
        Ok(())
    }

    pub fn law(&self) -> WeightLaw {
        self.law
    }

    /// Instantiated weight prefix.
    pub fn prefix(&self) -> &[f64] {
        &self.p
    }

    pub fn alpha(&self) -> &[usize] {
        &self.alpha
    }

    /// Geometric parameter (NaN for other laws).
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Mass beyond the instantiated prefix.
    pub fn tail(&self) -> f64 {
        self.tail
    }

    pub fn k(&self) -> usize {
        self.alpha.len()
    }

    /// Weight of block `j`.
    pub fn tilde(&self, j: usize) -> f64 {
        self.p[self.alpha[j]]
    }

    pub fn observed(&self) -> Vec<f64> {
        self.alpha.iter().map(|&a| self.p[a]).collect()
    }

    /// `1 - sum_j p[alpha[j]]`, computed from the unobserved entries.
    pub fn unobserved_mass(&self) -> f64 {
        let mut taken = vec![false; self.p.len()];
        for &a in &self.alpha {
            taken[a] = true;
        }
        self.tail
            + self
                .p
                .iter()
                .zip(&taken)
                .filter(|(_, &t)| !t)
                .map(|(&pj, _)| pj)
                .sum::<f64>()
    }

    fn rebuild_geometric(&mut self, len: usize) {
        let q = 1.0 - self.lambda;
        self.p.clear();
        let mut w = self.lambda;
        for _ in 0..len {
            self.p.push(w);
            w *= q;
        }
        self.tail = q.powi(len as i32);
    }

    /// Appends one weight from the prior continuation and returns its stick
    /// relative to the previous tail.
    fn extend_one<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Option<f64> {
        let v = match self.law {
            WeightLaw::Esb { a, b } => dist::sample_beta(rng, a, b),
            WeightLaw::Geometric { .. } => self.lambda,
            WeightLaw::Fixed => return None,
        };
        self.p.push(v * self.tail);
        self.tail *= 1.0 - v;
        Some(v)
    }

    /// Makes sure the prefix has at least `len` entries.
    pub fn extend_to<R: Rng + ?Sized>(&mut self, len: usize, rng: &mut R) {
        while self.p.len() < len {
            if self.extend_one(rng).is_none() {
                break;
            }
        }
    }

    /// Draws an index not in `alpha` with probability proportional to its
    /// weight, extending the prefix from the prior as needed.
    pub fn sample_unobserved_index<R: Rng + ?Sized>(&mut self, rng: &mut R) -> usize {
        let mut taken = vec![false; self.p.len()];
        for &a in &self.alpha {
            taken[a] = true;
        }
        let free: f64 = self
            .p
            .iter()
            .zip(&taken)
            .filter(|(_, &t)| !t)
            .map(|(&pj, _)| pj)
            .sum();
        let mut u = dist::uniform(rng) * (free + self.tail);
        let mut last_free = None;
        for (j, (&pj, &t)) in self.p.iter().zip(&taken).enumerate() {
            if t {
                continue;
            }
            if pj > 0.0 {
                last_free = Some(j);
            }
            if u < pj {
                return j;
            }
            u -= pj;
        }
        if self.tail.is_nan() || self.tail <= 0.0 {
            return last_free.unwrap_or(self.p.len().saturating_sub(1));
        }
        // Position of the uniform relative to the tail, refined stick by stick.
        let mut rel = (u / self.tail).clamp(0.0, 1.0 - f64::EPSILON);
        for _ in 0..10_000_000 {
            let Some(v) = self.extend_one(rng) else { break };
            if rel < v {
                return self.p.len() - 1;
            }
            rel = ((rel - v) / (1.0 - v)).clamp(0.0, 1.0 - f64::EPSILON);
        }
        self.p.len() - 1
    }

    /// Discovers a new block: appends a fresh index to `alpha` and returns its
    /// weight.
    pub fn discover<R: Rng + ?Sized>(&mut self, rng: &mut R) -> f64 {
        let idx = self.sample_unobserved_index(rng);
        self.alpha.push(idx);
        self.p[idx]
    }

    /// Drops prefix entries beyond the largest index in use.
    pub fn prune(&mut self) {
        let keep = self.alpha.iter().copied().max().map_or(0, |m| m + 1);
        if keep >= self.p.len() {
            return;
        }
        match self.law {
            WeightLaw::Geometric { .. } => self.rebuild_geometric(keep),
            WeightLaw::Esb { .. } => {
                let dropped: f64 = self.p[keep..].iter().sum();
                self.p.truncate(keep);
                self.tail += dropped;
            }
            WeightLaw::Fixed => {}
        }
    }

    pub(crate) fn remove(&mut self, j: usize) {
        self.alpha.remove(j);
        self.prune();
    }

    pub(crate) fn permute(&mut self, sigma: &[usize]) {
        self.alpha = sigma.iter().map(|&s| self.alpha[s]).collect();
    }

    pub(crate) fn replace_alpha(&mut self, alpha: Vec<usize>) {
        debug_assert!(alpha.iter().all_unique());
        debug_assert!(alpha.iter().all(|&a| a < self.p.len()));
        self.alpha = alpha;
    }

    /// Totals `r_j = sum_l n_l 1{alpha_l = j}` over the prefix up to max alpha.
    pub fn index_totals(&self, counts: &[usize]) -> Vec<usize> {
        let len = self.alpha.iter().copied().max().map_or(0, |m| m + 1);
        let mut r = vec![0; len];
        for (&a, &n) in self.alpha.iter().zip(counts) {
            r[a] += n;
        }
        r
    }

    /// Redraws the prefix `p[..=max alpha]` from its full conditional given
    /// the block sizes; `alpha` is kept.
    pub fn resample_prefix<R: Rng + ?Sized>(&mut self, counts: &[usize], rng: &mut R) {
        let r = self.index_totals(counts);
        match self.law {
            WeightLaw::Esb { a, b } => {
                let v: Vec<f64> = esb_posterior_params(&r, a, b)
                    .into_iter()
                    .map(|(pa, pb)| dist::sample_beta(rng, pa, pb))
                    .collect();
                let (p, tail) = sticks_to_weights(&v).expect("beta draws lie in (0, 1)");
                self.p = p;
                self.tail = tail;
            }
            WeightLaw::Geometric { a, b } => {
                let (pa, pb) = geometric_posterior_params(&r, a, b);
                self.lambda = dist::sample_beta(rng, pa, pb);
                self.rebuild_geometric(r.len());
            }
            WeightLaw::Fixed => {}
        }
    }

    /// Log density of the instantiated prefix (sticks with Jacobian for ESB,
    /// `lambda` for geometric weights) under the given parameters.
    fn ln_prefix_density(&self, esb: &dyn Fn(usize) -> (f64, f64), gp: (f64, f64)) -> f64 {
        match self.law {
            WeightLaw::Esb { .. } => {
                let mut used = 0.0;
                let mut total = 0.0;
                for (j, &pj) in self.p.iter().enumerate() {
                    let rest = 1.0 - used;
                    let v = (pj / rest).clamp(STICK_FLOOR, STICK_CEIL);
                    let (a, b) = esb(j);
                    total += ln_beta_pdf(v, a, b) - rest.ln();
                    used += pj;
                }
                total
            }
            WeightLaw::Geometric { .. } => ln_beta_pdf(self.lambda, gp.0, gp.1),
            WeightLaw::Fixed => 0.0,
        }
    }

    pub fn ln_prior_density(&self) -> f64 {
        match self.law {
            WeightLaw::Esb { a, b } => self.ln_prefix_density(&|_| (a, b), (1.0, 1.0)),
            WeightLaw::Geometric { a, b } => self.ln_prefix_density(&|_| (1.0, 1.0), (a, b)),
            WeightLaw::Fixed => 0.0,
        }
    }

    /// Log density of the current prefix under its full conditional given
    /// `alpha` and the block sizes. The prefix must end at max alpha.
    pub fn ln_posterior_density(&self, counts: &[usize]) -> f64 {
        let r = self.index_totals(counts);
        debug_assert!(
            self.law == WeightLaw::Fixed
                || r.len() == self.p.len()
                || matches!(self.law, WeightLaw::Geometric { .. })
        );
        match self.law {
            WeightLaw::Esb { a, b } => {
                let params = esb_posterior_params(&r, a, b);
                self.ln_prefix_density(&|j| params[j], (1.0, 1.0))
            }
            WeightLaw::Geometric { a, b } => {
                let gp = geometric_posterior_params(&r, a, b);
                self.ln_prefix_density(&|_| (1.0, 1.0), gp)
            }
            WeightLaw::Fixed => 0.0,
        }
    }

    /// Log probability that a size-biased pick without replacement from the
    /// prefix yields `alpha` in this order. Assumes the prefix covers it.
    pub fn ln_pick_probability(&self, alpha: &[usize]) -> f64 {
        let mut used = 0.0f64;
        let mut total = 0.0;
        for &a in alpha {
            let pa = self.p[a];
            total += pa.ln() - (1.0 - used).max(f64::MIN_POSITIVE).ln();
            used += pa;
        }
        total
    }
}

fn check_beta(a: f64, b: f64) -> Result<()> {
    if a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "beta parameters ({a}, {b}) must be positive"
        )))
    }
}

/// How to update the order of discovery indexes among occupied blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum AlphaMode {
    /// Enumerate up to [`ENUMERATION_LIMIT`] blocks, locally balanced
    /// Metropolis–Hastings with this many steps above it.
    Auto {
        steps: usize,
    },
    Enumerate,
    LocallyBalanced {
        steps: usize,
    },
}

impl Default for AlphaMode {
    fn default() -> Self {
        AlphaMode::Auto { steps: 10 }
    }
}

/// `ln pi(rho) + const = sum_j n_j ln p[alpha[rho(j)]]`.
fn ln_perm_weight(counts: &[usize], ln_p: &[f64], rho: &[usize]) -> f64 {
    counts
        .iter()
        .zip(rho)
        .map(|(&n, &r)| n as f64 * ln_p[r])
        .sum()
}

/// Exact law of the weighted permutation as (permutation, probability)
/// pairs in lexicographic order.
pub fn weighted_permutation_law(
    counts: &[usize],
    observed: &[f64],
) -> Result<Vec<(Vec<usize>, f64)>> {
    let k = counts.len();
    if k > ENUMERATION_LIMIT {
        return Err(Error::TooLarge {
            what: "enumerated permutation size",
            got: k,
            limit: ENUMERATION_LIMIT,
        });
    }
    let ln_p: Vec<f64> = observed.iter().map(|p| p.ln()).collect();
    let perms: Vec<Vec<usize>> = (0..k).permutations(k).collect();
    let lw: Vec<f64> = perms
        .iter()
        .map(|r| ln_perm_weight(counts, &ln_p, r))
        .collect();
    let probs = dist::normalize_log_weights(&lw);
    Ok(perms.into_iter().zip(probs).collect())
}

/// Draws a permutation `rho` with `pi(rho) ∝ prod_j p[alpha[rho(j)]]^{n_j}`
/// and returns the reordered `alpha`.
pub fn sample_alpha_block<R: Rng + ?Sized>(
    alpha: &[usize],
    counts: &[usize],
    p: &[f64],
    mode: AlphaMode,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let k = alpha.len();
    if k <= 1 {
        return Ok(alpha.to_vec());
    }
    let observed: Vec<f64> = alpha.iter().map(|&a| p[a]).collect();
    let rho = match mode {
        AlphaMode::Enumerate => enumerate_draw(counts, &observed, rng)?,
        AlphaMode::Auto { steps } if k > ENUMERATION_LIMIT => {
            locally_balanced_draw(counts, &observed, (0..k).collect(), steps, rng)
        }
        AlphaMode::Auto { .. } => enumerate_draw(counts, &observed, rng)?,
        AlphaMode::LocallyBalanced { steps } => {
            locally_balanced_draw(counts, &observed, (0..k).collect(), steps, rng)
        }
    };
    Ok(rho.iter().map(|&r| alpha[r]).collect())
}

fn enumerate_draw<R: Rng + ?Sized>(
    counts: &[usize],
    observed: &[f64],
    rng: &mut R,
) -> Result<Vec<usize>> {
    let k = counts.len();
    if k > ENUMERATION_LIMIT {
        return Err(Error::TooLarge {
            what: "enumerated permutation size",
            got: k,
            limit: ENUMERATION_LIMIT,
        });
    }
    let ln_p: Vec<f64> = observed.iter().map(|p| p.ln()).collect();
    let perms: Vec<Vec<usize>> = (0..k).permutations(k).collect();
    let mut lw: Vec<f64> = perms
        .iter()
        .map(|r| ln_perm_weight(counts, &ln_p, r))
        .collect();
    let idx = dist::sample_log_categorical(rng, &mut lw);
    Ok(perms[idx].clone())
}

/// Log ratios `ln pi(rho o (a b)) - ln pi(rho)` for all transpositions `a < b`.
fn transposition_ratios(
    counts: &[usize],
    ln_p: &[f64],
    rho: &[usize],
    out: &mut Vec<(usize, usize, f64)>,
) {
    out.clear();
    let k = rho.len();
    for a in 0..k {
        for b in a + 1..k {
            let d = (counts[a] as f64 - counts[b] as f64) * (ln_p[rho[b]] - ln_p[rho[a]]);
            out.push((a, b, d));
        }
    }
}

/// Locally balanced Metropolis–Hastings on permutations, transposition
/// neighbourhood, proposal weights `sqrt(pi)`.
pub fn locally_balanced_draw<R: Rng + ?Sized>(
    counts: &[usize],
    observed: &[f64],
    mut rho: Vec<usize>,
    steps: usize,
    rng: &mut R,
) -> Vec<usize> {
    let ln_p: Vec<f64> = observed.iter().map(|p| p.ln()).collect();
    let mut here = Vec::new();
    let mut there = Vec::new();
    let mut buf = Vec::new();
    for _ in 0..steps {
        transposition_ratios(counts, &ln_p, &rho, &mut here);
        buf.clear();
        buf.extend(here.iter().map(|&(_, _, d)| 0.5 * d));
        let ln_z_here = dist::log_sum_exp(&buf);
        let pick = dist::sample_log_categorical(rng, &mut buf);
        let (a, b, _) = here[pick];
        let mut proposal = rho.clone();
        proposal.swap(a, b);
        transposition_ratios(counts, &ln_p, &proposal, &mut there);
        let halves: Vec<f64> = there.iter().map(|&(_, _, d)| 0.5 * d).collect();
        let ln_z_there = dist::log_sum_exp(&halves);
        let ln_accept = ln_z_here - ln_z_there;
        if ln_accept >= 0.0 || dist::uniform(rng).ln() < ln_accept {
            rho = proposal;
        }
    }
    rho
}

/// Switch probability of the acceleration step for one block, from the two
/// unnormalized masses `q_preserve` and `q_switch`.
pub fn acceleration_switch_probability(n: usize, p_cur: f64, p_aux: f64, unobserved: f64) -> f64 {
    let nf = n as f64;
    let ln_keep = nf * p_cur.ln() + p_aux.ln() - unobserved.ln();
    let ln_switch = nf * p_aux.ln() + p_cur.ln() - (unobserved + p_cur - p_aux).ln();
    let m = ln_keep.max(ln_switch);
    let (k, s) = ((ln_keep - m).exp(), (ln_switch - m).exp());
    s / (k + s)
}

/// Acceleration step: each occupied block may swap its index with a fresh
/// index drawn from the unobserved weights.
pub fn alpha_acceleration<R: Rng + ?Sized>(
    weights: &mut GeneralWeights,
    counts: &[usize],
    rng: &mut R,
) {
    for (j, &n) in counts.iter().enumerate().take(weights.k()) {
        let aux = weights.sample_unobserved_index(rng);
        let p_cur = weights.tilde(j);
        let p_aux = weights.p[aux];
        let unobserved = weights.unobserved_mass();
        let prob = acceleration_switch_probability(n, p_cur, p_aux, unobserved);
        if dist::uniform(rng) < prob {
            weights.alpha[j] = aux;
        }
    }
    weights.prune();
}

/// Either representation of the weights of the occupied blocks.
#[derive(Debug, Clone, PartialEq)]
pub enum Weights {
    SizeBiased(SizeBiasedWeights),
    General(GeneralWeights),
}

impl Weights {
    /// Prior draw of the weights of `k` blocks in order of appearance.
    pub fn sample_prior<R: Rng + ?Sized>(
        prior: &MixingPrior,
        k: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if prior.is_size_biased() {
            Ok(Weights::SizeBiased(SizeBiasedWeights::sample_prior(
                prior, k, rng,
            )?))
        } else {
            let law = WeightLaw::from_prior(prior)?;
            Ok(Weights::General(GeneralWeights::sample_prior(law, k, rng)?))
        }
    }

    pub fn k(&self) -> usize {
        match self {
            Weights::SizeBiased(w) => w.len(),
            Weights::General(w) => w.k(),
        }
    }

    pub fn tilde(&self, j: usize) -> f64 {
        match self {
            Weights::SizeBiased(w) => w.p[j],
            Weights::General(w) => w.tilde(j),
        }
    }

    pub fn observed(&self) -> Vec<f64> {
        match self {
            Weights::SizeBiased(w) => w.p.clone(),
            Weights::General(w) => w.observed(),
        }
    }

    /// Mass of the components not yet discovered, `1 - sum_j p~_j`.
    pub fn unobserved_mass(&self) -> f64 {
        match self {
            Weights::SizeBiased(w) => w.tail(),
            Weights::General(w) => w.unobserved_mass(),
        }
    }

    pub(crate) fn remove(&mut self, j: usize) {
        match self {
            Weights::SizeBiased(w) => w.remove(j),
            Weights::General(w) => w.remove(j),
        }
    }

    /// Appends the weight of a newly discovered block and returns it.
    pub(crate) fn discover<R: Rng + ?Sized>(&mut self, rng: &mut R) -> f64 {
        match self {
            Weights::SizeBiased(w) => w.discover(rng),
            Weights::General(w) => w.discover(rng),
        }
    }

    /// Reorders blocks: new block `j` takes the weight of old block `sigma[j]`.
    pub(crate) fn permute(&mut self, sigma: &[usize]) {
        match self {
            Weights::SizeBiased(w) => w.permute(sigma),
            Weights::General(w) => w.permute(sigma),
        }
    }

    /// Full conditional update of the weights given block sizes.
    pub fn update<R: Rng + ?Sized>(
        &mut self,
        prior: &MixingPrior,
        counts: &[usize],
        mode: AlphaMode,
        accelerate: bool,
        rng: &mut R,
    ) -> Result<()> {
        match self {
            Weights::SizeBiased(w) => {
                *w = SizeBiasedWeights::sample_posterior(prior, counts, rng)?;
            }
            Weights::General(w) => {
                let alpha = sample_alpha_block(&w.alpha, counts, &w.p, mode, rng)?;
                w.replace_alpha(alpha);
                if accelerate {
                    alpha_acceleration(w, counts, rng);
                }
                w.prune();
                w.resample_prefix(counts, rng);
            }
        }
        Ok(())
    }

    /// Every observed weight positive and their sum below one.
    pub fn simplex_ok(&self) -> bool {
        let obs = self.observed();
        obs.iter().all(|&p| p > 0.0) && obs.iter().sum::<f64>() < 1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sticks_examples() {
        let (p, tail) = sticks_to_weights(&[0.5, 0.5, 0.5]).unwrap();
        assert_eq!(p, vec![0.5, 0.25, 0.125]);
        assert_eq!(tail, 0.125);
        let (p, _) = sticks_to_weights(&[1.0 - 1e-12, 0.3]).unwrap();
        assert!(p[0] > 1.0 - 1e-11 && p[1] < 1e-11);
        assert!(sticks_to_weights(&[0.5, 1.0]).is_err());
        assert!(sticks_to_weights(&[0.0]).is_err());
    }

    #[test]
    fn sticks_round_trip() {
        let v = [0.3, 0.9, 0.2, 0.6];
        let (p, _) = sticks_to_weights(&v).unwrap();
        for (a, b) in weights_to_sticks(&p).iter().zip(v) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn stick_posterior_examples() {
        assert_eq!(
            stick_posterior_params(&[3, 2], 0.0, 1.0).unwrap(),
            vec![(3.0, 3.0), (2.0, 1.0)]
        );
        assert_eq!(
            stick_posterior_params(&[1], 0.5, 0.5).unwrap(),
            vec![(0.5, 1.0)]
        );
        assert!(stick_posterior_params(&[], 0.5, 0.5).unwrap().is_empty());
        assert!(stick_posterior_params(&[0], 0.0, 1.0).is_err());
        assert_eq!(stick_prior_params(2, 0.5, 0.5), (0.5, 1.5));
    }

    #[test]
    fn forced_discovery() {
        assert!((new_weight_from_stick(&[0.4], 0.5) - 0.3).abs() < 1e-15);
        assert_eq!(
            new_weight_from_stick(&[0.1, 0.3], 0.25).to_bits(),
            new_weight_from_stick(&[0.3, 0.1], 0.25).to_bits()
        );
    }

    #[test]
    fn pi_rho_example() {
        let law = weighted_permutation_law(&[1, 2], &[0.7, 0.3]).unwrap();
        assert_eq!(law[0].0, vec![0, 1]);
        assert!((law[0].1 - 0.3).abs() < 1e-12);
        assert!((law[1].1 - 0.7).abs() < 1e-12);
    }

    #[test]
    fn pi_rho_equal_counts_is_uniform() {
        let law = weighted_permutation_law(&[2, 2, 2], &[0.5, 0.2, 0.1]).unwrap();
        for (_, p) in law {
            assert!((p - 1.0 / 6.0).abs() < 1e-12);
        }
    }

    #[test]
    fn enumeration_limit() {
        let counts = vec![1; ENUMERATION_LIMIT + 1];
        let p = vec![0.1; ENUMERATION_LIMIT + 1];
        assert!(weighted_permutation_law(&counts, &p).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let alpha: Vec<usize> = (0..counts.len()).collect();
        assert!(sample_alpha_block(&alpha, &counts, &p, AlphaMode::Enumerate, &mut rng).is_err());
        assert!(sample_alpha_block(&alpha, &counts, &p, AlphaMode::default(), &mut rng).is_ok());
    }

    #[test]
    fn single_block_alpha_is_fixed() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = sample_alpha_block(
            &[4],
            &[3],
            &[0.1, 0.1, 0.1, 0.1, 0.2],
            AlphaMode::default(),
            &mut rng,
        )
        .unwrap();
        assert_eq!(out, vec![4]);
    }

    #[test]
    fn general_posterior_examples() {
        assert_eq!(geometric_posterior_params(&[3, 2], 1.0, 1.0), (6.0, 3.0));
        assert_eq!(
            esb_posterior_params(&[2, 0, 1], 1.0, 1.0),
            vec![(3.0, 2.0), (1.0, 2.0), (2.0, 1.0)]
        );
        assert_eq!(geometric_posterior_params(&[], 2.0, 3.0), (2.0, 3.0));
    }

    #[test]
    fn geometric_ratio() {
        let w = GeneralWeights::geometric(1.0, 1.0, 0.3, vec![9]).unwrap();
        for pair in w.prefix().windows(2) {
            let ratio = pair[0] / pair[1];
            assert!((ratio - 1.0 / 0.7).abs() < 1e-12 * ratio);
        }
        let total: f64 = w.prefix().iter().sum::<f64>() + w.tail();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pick_probability_geometric() {
        let w = GeneralWeights::geometric(1.0, 1.0, 0.5, vec![0, 1]).unwrap();
        assert!((w.ln_pick_probability(&[0, 1]).exp() - 0.25).abs() < 1e-12);
        assert!((w.ln_pick_probability(&[1]).exp() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn acceleration_plug_in() {
        // n = 1: q_keep = p p' / T, q_switch = p' p / (T + p - p').
        let (p, q, t) = (0.3, 0.1, 0.4);
        let keep = p * q / t;
        let switch = q * p / (t + p - q);
        let want = switch / (keep + switch);
        assert!((acceleration_switch_probability(1, p, q, t) - want).abs() < 1e-12);
        assert!((acceleration_switch_probability(3, 0.2, 0.2, 0.5) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn prune_and_unobserved_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut w =
            GeneralWeights::esb_from_sticks(1.0, 1.0, &[0.5, 0.5, 0.5], vec![2, 0]).unwrap();
        assert!((w.unobserved_mass() - (0.25 + 0.125)).abs() < 1e-15);
        w.remove(0);
        assert_eq!(w.prefix().len(), 1);
        assert!((w.unobserved_mass() - 0.5).abs() < 1e-15);
        let before = w.unobserved_mass();
        let _ = w.sample_unobserved_index(&mut rng);
        assert!((w.unobserved_mass() - before).abs() < 1e-12);
    }
}
