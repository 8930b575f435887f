//! Data, kernel, base measure, mixing priors and allocation bookkeeping
//! shared by every sampler.
//!
//! Allocation labels are 0-based throughout the crate: an [`Allocation`]
//! with labels `[0, 0, 1]` is the ordered allocation `(1, 1, 2)`.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::dist::{self, ln_2pi};
use crate::error::{Error, Result};

/// Where a dataset came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    Generated { spec: String, seed: u64 },
    File { path: PathBuf },
}

/// An ordered sequence of finite real observations.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    source: DataSource,
    values: Vec<f64>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, source: DataSource, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidData(
                "dataset must hold at least one value".into(),
            ));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "value at position {} is not finite",
                pos + 1
            )));
        }
        Ok(Dataset {
            name: name.into(),
            source,
            values,
        })
    }

    /// Reads one value per line. Blank lines are skipped, anything else that
    /// does not parse as a real number is rejected. Values are multiplied by
    /// `scale`.
    pub fn from_file(path: impl AsRef<Path>, scale: f64) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut values = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            let v: f64 = trimmed.parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                message: format!("line {}: `{}` is not a number", lineno + 1, trimmed),
            })?;
            values.push(v * scale);
        }
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "file".to_string());
        Dataset::new(
            name,
            DataSource::File {
                path: path.to_path_buf(),
            },
            values,
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn source(&self) -> &DataSource {
        &self.source
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// A Gaussian kernel `N(y | mu, 1/tau)` with its log normalizer cached.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussComponent {
    mu: f64,
    tau: f64,
    ln_norm: f64,
}

impl GaussComponent {
    pub fn new(mu: f64, tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) || !mu.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "component needs finite mu and positive finite tau, got ({mu}, {tau})"
            )));
        }
        Ok(Self::new_unchecked(mu, tau))
    }

    pub(crate) fn new_unchecked(mu: f64, tau: f64) -> Self {
        GaussComponent {
            mu,
            tau,
            ln_norm: 0.5 * (tau.ln() - ln_2pi()),
        }
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    #[inline]
    pub fn ln_density(&self, y: f64) -> f64 {
        let d = y - self.mu;
        self.ln_norm - 0.5 * self.tau * d * d
    }

    #[inline]
    pub fn density(&self, y: f64) -> f64 {
        self.ln_density(y).exp()
    }
}

/// Sufficient statistics of a block of observations.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BlockStats {
    pub count: usize,
    pub sum: f64,
    pub sum_sq: f64,
}

impl BlockStats {
    pub fn from_values(values: &[f64]) -> Self {
        let mut s = BlockStats::default();
        for &y in values {
            s.push(y);
        }
        s
    }

    #[inline]
    pub fn push(&mut self, y: f64) {
        self.count += 1;
        self.sum += y;
        self.sum_sq += y * y;
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.count as f64
    }

    /// Sum of squared deviations from the block mean.
    pub fn scatter(&self) -> f64 {
        if self.count == 0 {
            return 0.0;
        }
        (self.sum_sq - self.sum * self.sum / self.count as f64).max(0.0)
    }
}

/// Normal–Gamma base measure: `mu | tau ~ N(mu0, 1/(lambda0 tau))`,
/// `tau ~ Ga(a0, rate = b0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalGammaBase {
    pub mu0: f64,
    pub lambda0: f64,
    pub a0: f64,
    pub b0: f64,
}

impl NormalGammaBase {
    pub fn new(mu0: f64, lambda0: f64, a0: f64, b0: f64) -> Result<Self> {
        let ok = mu0.is_finite() && [lambda0, a0, b0].iter().all(|v| *v > 0.0 && v.is_finite());
        if !ok {
            return Err(Error::InvalidParameter(format!(
                "normal-gamma base needs finite mu0 and positive lambda0, a0, b0; got ({mu0}, {lambda0}, {a0}, {b0})"
            )));
        }
        Ok(NormalGammaBase {
            mu0,
            lambda0,
            a0,
            b0,
        })
    }

    /// The experiment defaults: `mu0` at the sample mean, `lambda0 = 1/100`,
    /// `a0 = b0 = 0.5`.
    pub fn default_for(data: &Dataset) -> Self {
        NormalGammaBase {
            mu0: data.mean(),
            lambda0: 0.01,
            a0: 0.5,
            b0: 0.5,
        }
    }

    /// Conjugate update on a block.
    pub fn posterior(&self, stats: &BlockStats) -> NormalGammaBase {
        if stats.count == 0 {
            return *self;
        }
        let m = stats.count as f64;
        let lambda = self.lambda0 + m;
        let mean = stats.mean();
        let mu = (self.lambda0 * self.mu0 + stats.sum) / lambda;
        let a = self.a0 + 0.5 * m;
        let d = mean - self.mu0;
        let b = self.b0 + 0.5 * stats.scatter() + 0.5 * self.lambda0 * m * d * d / lambda;
        NormalGammaBase {
            mu0: mu,
            lambda0: lambda,
            a0: a,
            b0: b,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> GaussComponent {
        let tau = dist::sample_gamma(rng, self.a0, self.b0).max(f64::MIN_POSITIVE);
        let mu = self.mu0 + dist::standard_normal(rng) / (self.lambda0 * tau).sqrt();
        GaussComponent::new_unchecked(mu, tau)
    }

    /// Draw from the posterior given the block (the prior when it is empty).
    pub fn sample_posterior<R: Rng + ?Sized>(
        &self,
        stats: &BlockStats,
        rng: &mut R,
    ) -> GaussComponent {
        self.posterior(stats).sample(rng)
    }

    pub fn ln_density(&self, x: &GaussComponent) -> f64 {
        dist::ln_normal_pdf_prec(x.mu, self.mu0, self.lambda0 * x.tau)
            + dist::ln_gamma_pdf(x.tau, self.a0, self.b0)
    }

    /// `log ∫ Π g(y_i | x) ν(dx)` from sufficient statistics.
    pub fn ln_marginal_stats(&self, stats: &BlockStats) -> f64 {
        let post = self.posterior(stats);
        let m = stats.count as f64;
        ln_gamma(post.a0) - ln_gamma(self.a0) + self.a0 * self.b0.ln() - post.a0 * post.b0.ln()
            + 0.5 * (self.lambda0.ln() - post.lambda0.ln())
            - 0.5 * m * ln_2pi()
    }

    pub fn ln_marginal_likelihood(&self, block: &[f64]) -> Result<f64> {
        if block.is_empty() {
            return Err(Error::EmptyBlock);
        }
        Ok(self.ln_marginal_stats(&BlockStats::from_values(block)))
    }

    /// Prior predictive log density of a single observation.
    pub fn ln_predictive(&self, y: f64) -> f64 {
        let mut s = BlockStats::default();
        s.push(y);
        self.ln_marginal_stats(&s)
    }
}

/// Tagged mixing prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MixingPrior {
    /// Dirichlet process with concentration `beta`.
    Dp { beta: f64 },
    /// Pitman–Yor process with discount `sigma` and strength `beta`.
    Py { sigma: f64, beta: f64 },
    /// Exchangeable stick-breaking with iid `Be(a, b)` sticks.
    Esb { a: f64, b: f64 },
    /// Geometric weights `lambda (1 - lambda)^{j-1}`, `lambda ~ Be(a, b)`.
    Gp { a: f64, b: f64 },
}

impl MixingPrior {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            MixingPrior::Dp { beta } => beta > 0.0 && beta.is_finite(),
            MixingPrior::Py { sigma, beta } => {
                (0.0..1.0).contains(&sigma) && beta > -sigma && beta.is_finite()
            }
            MixingPrior::Esb { a, b } | MixingPrior::Gp { a, b } => {
                a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "invalid mixing prior {self}"
            )))
        }
    }

    /// True for priors whose weights in order of appearance have a known
    /// stick-breaking law (DP and PY).
    pub fn is_size_biased(&self) -> bool {
        matches!(self, MixingPrior::Dp { .. } | MixingPrior::Py { .. })
    }

    /// `(sigma, beta)` for DP/PY; DP is PY with `sigma = 0`.
    pub fn pitman_yor_params(&self) -> Option<(f64, f64)> {
        match *self {
            MixingPrior::Dp { beta } => Some((0.0, beta)),
            MixingPrior::Py { sigma, beta } => Some((sigma, beta)),
            _ => None,
        }
    }

    pub fn short_name(&self) -> &'static str {
        match self {
            MixingPrior::Dp { .. } => "DP",
            MixingPrior::Py { .. } => "PY",
            MixingPrior::Esb { .. } => "ESB",
            MixingPrior::Gp { .. } => "GP",
        }
    }
}

impl fmt::Display for MixingPrior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            MixingPrior::Dp { beta } => write!(f, "dp:{beta}"),
            MixingPrior::Py { sigma, beta } => write!(f, "py:{sigma},{beta}"),
            MixingPrior::Esb { a, b } => write!(f, "esb:{a},{b}"),
            MixingPrior::Gp { a, b } => write!(f, "gp:{a},{b}"),
        }
    }
}

impl FromStr for MixingPrior {
    type Err = Error;

    /// Parses `dp:BETA`, `py:SIGMA,BETA`, `esb:A,B` or `gp:A,B`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("cannot parse prior `{s}`"));
        let (kind, args) = s.split_once(':').ok_or_else(bad)?;
        let nums: Vec<f64> = args
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad())?;
        let prior = match (kind.trim().to_ascii_lowercase().as_str(), nums.as_slice()) {
            ("dp", [beta]) => MixingPrior::Dp { beta: *beta },
            ("py", [sigma, beta]) => MixingPrior::Py {
                sigma: *sigma,
                beta: *beta,
            },
            ("esb", [a, b]) => MixingPrior::Esb { a: *a, b: *b },
            ("gp", [a, b]) => MixingPrior::Gp { a: *a, b: *b },
            _ => return Err(bad()),
        };
        prior.validate()?;
        Ok(prior)
    }
}

/// Everything a sampler needs that does not change during a run: the data,
/// the base measure, the mixing prior and per-observation prior predictive
/// densities.
#[derive(Debug, Clone)]
pub struct Model {
    data: Vec<f64>,
    base: NormalGammaBase,
    prior: MixingPrior,
    ln_predictive: Vec<f64>,
}

impl Model {
    pub fn new(data: &Dataset, base: NormalGammaBase, prior: MixingPrior) -> Result<Self> {
        Self::from_values(data.values().to_vec(), base, prior)
    }

    pub fn from_values(data: Vec<f64>, base: NormalGammaBase, prior: MixingPrior) -> Result<Self> {
        prior.validate()?;
        if data.is_empty() || data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData(
                "model data must be nonempty and finite".into(),
            ));
        }
        let ln_predictive = data.iter().map(|&y| base.ln_predictive(y)).collect();
        Ok(Model {
            data,
            base,
            prior,
            ln_predictive,
        })
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn n(&self) -> usize {
        self.data.len()
    }

    pub fn base(&self) -> &NormalGammaBase {
        &self.base
    }

    pub fn prior(&self) -> &MixingPrior {
        &self.prior
    }

    /// Prior predictive log density of observation `i`.
    pub fn ln_predictive(&self, i: usize) -> f64 {
        self.ln_predictive[i]
    }

    /// Sufficient statistics of every block of `alloc`.
    pub fn block_stats(&self, alloc: &Allocation) -> Vec<BlockStats> {
        let mut stats = vec![BlockStats::default(); alloc.k()];
        for (&d, &y) in alloc.labels().iter().zip(&self.data) {
            stats[d].push(y);
        }
        stats
    }
}

/// Ordered allocation: labels in least element order (`labels[0] == 0`,
/// first occurrences strictly increasing, no gaps).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Allocation {
    labels: Vec<usize>,
    counts: Vec<usize>,
}

impl Allocation {
    pub fn from_labels(labels: Vec<usize>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidAllocation("no observations".into()));
        }
        let mut next = 0;
        let mut counts = Vec::new();
        for (i, &d) in labels.iter().enumerate() {
            if d == next {
                next += 1;
                counts.push(1);
            } else if d < next {
                counts[d] += 1;
            } else {
                return Err(Error::InvalidAllocation(format!(
                    "label {} at position {} breaks least element order",
                    d + 1,
                    i + 1
                )));
            }
        }
        Ok(Allocation { labels, counts })
    }

    /// Every observation in one block.
    pub fn single_block(n: usize) -> Self {
        Allocation {
            labels: vec![0; n],
            counts: vec![n],
        }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    /// Number of occupied blocks.
    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn blocks(&self) -> Vec<Vec<usize>> {
        let mut blocks = vec![Vec::new(); self.k()];
        for (i, &d) in self.labels.iter().enumerate() {
            blocks[d].push(i);
        }
        blocks
    }

    /// Canonical text form: blocks in least element order separated by `|`,
    /// 1-based indices inside a block separated by spaces, e.g. `1 2|3`.
    pub fn signature(&self) -> String {
        let mut out = String::with_capacity(self.n() * 4);
        for (b, block) in self.blocks().iter().enumerate() {
            if b > 0 {
                out.push('|');
            }
            for (t, i) in block.iter().enumerate() {
                if t > 0 {
                    out.push(' ');
                }
                out.push_str(&(i + 1).to_string());
            }
        }
        out
    }

    pub fn from_signature(sig: &str) -> Result<Self> {
        let bad = |m: &str| Error::InvalidAllocation(format!("signature `{sig}`: {m}"));
        let mut pairs = Vec::new();
        for (b, block) in sig.split('|').enumerate() {
            for tok in block.split_whitespace() {
                let idx: usize = tok.parse().map_err(|_| bad("non-integer index"))?;
                if idx == 0 {
                    return Err(bad("indices are 1-based"));
                }
                pairs.push((idx - 1, b));
            }
        }
        let n = pairs.len();
        let mut labels = vec![usize::MAX; n];
        for (i, b) in pairs {
            if i >= n || labels[i] != usize::MAX {
                return Err(bad("indices must cover 1..n exactly once"));
            }
            labels[i] = b;
        }
        let alloc = Allocation::from_labels(labels)?;
        if alloc.signature() != sig.trim() {
            return Err(bad("not in canonical form"));
        }
        Ok(alloc)
    }
}

/// Relabels arbitrary (unordered) labels by order of first appearance.
///
/// Returns the ordered allocation and `sigma`, where `sigma[j]` is the old
/// label that became block `j`.
pub fn least_element_relabel(c: &[usize]) -> (Allocation, Vec<usize>) {
    let width = c.iter().copied().max().map_or(0, |m| m + 1);
    let mut map = vec![usize::MAX; width];
    let mut sigma = Vec::new();
    let mut counts = Vec::new();
    let mut labels = Vec::with_capacity(c.len());
    for &old in c {
        if map[old] == usize::MAX {
            map[old] = sigma.len();
            sigma.push(old);
            counts.push(0);
        }
        let new = map[old];
        counts[new] += 1;
        labels.push(new);
    }
    (Allocation { labels, counts }, sigma)
}

/// First index of each block and, for the block of `i`, the smallest member
/// other than `i`.
fn block_minima(alloc: &Allocation, i: usize) -> (Vec<usize>, Option<usize>) {
    let mut first = vec![usize::MAX; alloc.k()];
    let b = alloc.labels[i];
    let mut other_min = None;
    for (l, &d) in alloc.labels.iter().enumerate() {
        if first[d] == usize::MAX {
            first[d] = l;
        }
        if d == b && l != i && other_min.is_none() {
            other_min = Some(l);
        }
    }
    (first, other_min)
}

/// Values `d_i` may take (0-based) without breaking least element order,
/// keeping every other label fixed. Always contains the current label.
pub fn admissible_moves(alloc: &Allocation, i: usize) -> Vec<usize> {
    let (first, other_min) = block_minima(alloc, i);
    admissible_from_minima(alloc.labels[i], i, alloc.k(), &first, other_min)
}

/// Core rule shared with the original sampler's sweep, which maintains the
/// block minima incrementally.
pub(crate) fn admissible_from_minima(
    b: usize,
    i: usize,
    k: usize,
    first: &[usize],
    other_min: Option<usize>,
) -> Vec<usize> {
    // Blocks opened strictly before i.
    let opened_before = first[..k].partition_point(|&f| f < i);
    if first[b] != i {
        // i is not the first of its block: any block opened before i, or the
        // next one (an existing later block or a fresh one).
        return (0..=opened_before).collect();
    }
    // i opens block b, so opened_before == b.
    let can_leave = match other_min {
        None => b + 1 == k,
        Some(m) => b + 1 == k || m < first[b + 1],
    };
    if can_leave {
        (0..=b).collect()
    } else {
        vec![b]
    }
}
