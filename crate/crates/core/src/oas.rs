//! The ordered allocation sampler with allocations updated through
//! unordered labels, for size-biased (DP/PY) and general `(p, alpha)`
//! weights.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist;
use crate::error::{Error, Result};
use crate::model::{least_element_relabel, Allocation, BlockStats, GaussComponent, Model};
use crate::weights::{AlphaMode, Weights};

/// Gibbs state `(d, x~, p~)`: ordered allocation, one component per block
/// and the weights of the occupied blocks in order of appearance.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub(crate) alloc: Allocation,
    pub(crate) components: Vec<GaussComponent>,
    pub(crate) weights: Weights,
}

impl ChainState {
    pub fn new(
        alloc: Allocation,
        components: Vec<GaussComponent>,
        weights: Weights,
    ) -> Result<Self> {
        let state = ChainState {
            alloc,
            components,
            weights,
        };
        state.check()?;
        Ok(state)
    }

    /// State with the given allocation; components and weights drawn from
    /// their full conditionals.
    pub fn from_allocation<R: Rng + ?Sized>(
        model: &Model,
        alloc: Allocation,
        rng: &mut R,
    ) -> Result<Self> {
        if alloc.n() != model.n() {
            return Err(Error::InvalidAllocation(format!(
                "allocation covers {} observations, data has {}",
                alloc.n(),
                model.n()
            )));
        }
        let components = model
            .block_stats(&alloc)
            .iter()
            .map(|s| model.base().sample_posterior(s, rng))
            .collect();
        let mut weights = Weights::sample_prior(model.prior(), alloc.k(), rng)?;
        weights.update(
            model.prior(),
            alloc.counts(),
            AlphaMode::default(),
            false,
            rng,
        )?;
        Ok(ChainState {
            alloc,
            components,
            weights,
        })
    }

    /// Every observation in a single block.
    pub fn single_block<R: Rng + ?Sized>(model: &Model, rng: &mut R) -> Result<Self> {
        Self::from_allocation(model, Allocation::single_block(model.n()), rng)
    }

    pub fn allocation(&self) -> &Allocation {
        &self.alloc
    }

    pub fn components(&self) -> &[GaussComponent] {
        &self.components
    }

    pub fn weights(&self) -> &Weights {
        &self.weights
    }

    pub fn k(&self) -> usize {
        self.alloc.k()
    }

    /// Structural invariants: ordered allocation, aligned lengths and
    /// weights inside the simplex.
    pub fn check(&self) -> Result<()> {
        Allocation::from_labels(self.alloc.labels().to_vec())?;
        let k = self.alloc.k();
        if self.components.len() != k || self.weights.k() != k {
            return Err(Error::InvalidAllocation(format!(
                "{} blocks but {} components and {} weights",
                k,
                self.components.len(),
                self.weights.k()
            )));
        }
        if !self.weights.simplex_ok() {
            return Err(Error::InvalidParameter("weights left the simplex".into()));
        }
        Ok(())
    }
}

/// Knobs for one sweep of the sampler.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OasOptions {
    /// Integrate the new component out of the allocation step.
    pub collapsed: bool,
    pub alpha_mode: AlphaMode,
    /// Run the acceleration step for discovery indexes (general weights).
    pub accelerate: bool,
    /// Visit observations in a random order instead of `1..n`.
    pub randomize_order: bool,
}

impl Default for OasOptions {
    fn default() -> Self {
        OasOptions {
            collapsed: false,
            alpha_mode: AlphaMode::default(),
            accelerate: true,
            randomize_order: false,
        }
    }
}

/// Relabels an unordered allocation in order of appearance and carries
/// components and weights along.
pub(crate) fn reorder(
    labels: &[usize],
    components: Vec<GaussComponent>,
    weights: &mut Weights,
) -> (Allocation, Vec<GaussComponent>) {
    let (alloc, sigma) = least_element_relabel(labels);
    let components = sigma.iter().map(|&s| components[s]).collect();
    weights.permute(&sigma);
    (alloc, components)
}

/// Sequential update of every allocation through unordered labels.
pub fn update_allocations<R: Rng + ?Sized>(
    state: &mut ChainState,
    model: &Model,
    options: &OasOptions,
    rng: &mut R,
) {
    let n = model.n();
    let data = model.data();
    let base = model.base();
    let mut labels = state.alloc.labels().to_vec();
    let mut counts = state.alloc.counts().to_vec();
    let mut comps = std::mem::take(&mut state.components);
    let weights = &mut state.weights;
    let mut ln_p: Vec<f64> = weights.observed().iter().map(|p| p.ln()).collect();

    let mut order: Vec<usize> = (0..n).collect();
    if options.randomize_order {
        order.shuffle(rng);
    }
    let mut buf = Vec::with_capacity(comps.len() + 2);

    for &i in &order {
        let y = data[i];
        let b = labels[i];
        counts[b] -= 1;
        let mut aux = None;
        if counts[b] == 0 {
            // i was alone: its component becomes the candidate for a new block.
            let own = comps.remove(b);
            counts.remove(b);
            weights.remove(b);
            ln_p.remove(b);
            for l in labels.iter_mut() {
                if *l > b {
                    *l -= 1;
                }
            }
            aux = Some(own);
        }
        let k = comps.len();
        buf.clear();
        buf.extend((0..k).map(|j| ln_p[j] + comps[j].ln_density(y)));
        let ln_new = weights.unobserved_mass().ln();
        let candidate = if options.collapsed {
            buf.push(ln_new + model.ln_predictive(i));
            None
        } else {
            let x = aux.unwrap_or_else(|| base.sample(rng));
            buf.push(ln_new + x.ln_density(y));
            Some(x)
        };
        let c = dist::sample_log_categorical(rng, &mut buf);
        if c == k {
            let x = match candidate {
                Some(x) => x,
                None => {
                    let mut s = BlockStats::default();
                    s.push(y);
                    base.sample_posterior(&s, rng)
                }
            };
            comps.push(x);
            counts.push(1);
            ln_p.push(weights.discover(rng).ln());
        } else {
            counts[c] += 1;
        }
        labels[i] = c;
    }

    let (alloc, comps) = reorder(&labels, comps, weights);
    state.alloc = alloc;
    state.components = comps;
}

/// Conjugate redraw of every occupied component.
pub fn update_components<R: Rng + ?Sized>(state: &mut ChainState, model: &Model, rng: &mut R) {
    let stats = model.block_stats(&state.alloc);
    for (x, s) in state.components.iter_mut().zip(&stats) {
        *x = model.base().sample_posterior(s, rng);
    }
}

/// Full conditional update of the weights of the occupied blocks.
pub fn update_weights<R: Rng + ?Sized>(
    state: &mut ChainState,
    model: &Model,
    options: &OasOptions,
    rng: &mut R,
) -> Result<()> {
    state.weights.update(
        model.prior(),
        state.alloc.counts(),
        options.alpha_mode,
        options.accelerate,
        rng,
    )
}

/// One Gibbs sweep: allocations, components, weights.
pub fn sweep<R: Rng + ?Sized>(
    state: &mut ChainState,
    model: &Model,
    options: &OasOptions,
    rng: &mut R,
) -> Result<()> {
    update_allocations(state, model, options, rng);
    update_components(state, model, rng);
    update_weights(state, model, options, rng)
}
