//! Comparators: the original ordered allocation sampler with its
//! per-sweep data permutation, and a marginal sampler with one auxiliary
//! component per update.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::dist;
use crate::error::{Error, Result};
use crate::model::{
    admissible_from_minima, least_element_relabel, Allocation, GaussComponent, Model,
};
use crate::oas::{reorder, update_components, update_weights, ChainState, OasOptions};

fn insert_sorted(v: &mut Vec<usize>, t: usize) {
    let pos = v.partition_point(|&x| x < t);
    v.insert(pos, t);
}

fn remove_sorted(v: &mut Vec<usize>, t: usize) {
    let pos = v.partition_point(|&x| x < t);
    debug_assert_eq!(v[pos], t);
    v.remove(pos);
}

/// Sequential update of the ordered allocations over their admissible
/// moves, after a uniform random permutation of the data.
pub fn ooas_update_allocations<R: Rng + ?Sized>(
    state: &mut ChainState,
    model: &Model,
    rng: &mut R,
) {
    let n = model.n();
    let data = model.data();
    let base = model.base();

    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let permuted: Vec<usize> = perm.iter().map(|&i| state.alloc.labels()[i]).collect();
    let comps = std::mem::take(&mut state.components);
    let (alloc, mut comps) = reorder(&permuted, comps, &mut state.weights);
    let weights = &mut state.weights;

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); alloc.k()];
    for (t, &l) in alloc.labels().iter().enumerate() {
        members[l].push(t);
    }
    let mut lab = alloc.labels().to_vec();
    let mut first: Vec<usize> = members.iter().map(|m| m[0]).collect();
    let mut ln_p: Vec<f64> = weights.observed().iter().map(|p| p.ln()).collect();
    let mut buf = Vec::new();

    for t in 0..n {
        let y = data[perm[t]];
        let b = lab[t];
        let k = comps.len();
        let moves = admissible_from_minima(b, t, k, &first, members[b].get(1).copied());
        if moves.len() == 1 {
            continue;
        }
        let singleton = members[b].len() == 1;
        let k_minus = if singleton { k - 1 } else { k };
        let mut fresh = None;
        buf.clear();
        for &v in &moves {
            if v < k_minus {
                buf.push(ln_p[v] + comps[v].ln_density(y));
            } else {
                let mass =
                    weights.unobserved_mass() + if singleton { weights.tilde(b) } else { 0.0 };
                let x = if singleton {
                    comps[b]
                } else {
                    *fresh.get_or_insert_with(|| base.sample(rng))
                };
                buf.push(mass.ln() + x.ln_density(y));
            }
        }
        let v = moves[dist::sample_log_categorical(rng, &mut buf)];
        if v == b {
            continue;
        }
        if v == k_minus && !singleton {
            remove_sorted(&mut members[b], t);
            first[b] = members[b][0];
            members.push(vec![t]);
            first.push(t);
            comps.push(fresh.expect("new block needs a candidate"));
            ln_p.push(weights.discover(rng).ln());
        } else {
            if singleton {
                // Only the last block can be emptied.
                members.pop();
                first.pop();
                comps.pop();
                ln_p.pop();
                weights.remove(b);
            } else {
                remove_sorted(&mut members[b], t);
                first[b] = members[b][0];
            }
            insert_sorted(&mut members[v], t);
            first[v] = members[v][0];
        }
        lab[t] = v;
    }

    let mut labels = vec![0; n];
    for (t, &i) in perm.iter().enumerate() {
        labels[i] = lab[t];
    }
    let (alloc, comps) = reorder(&labels, comps, weights);
    state.alloc = alloc;
    state.components = comps;
}

/// One sweep of the original sampler: permuted allocation scan, then the
/// component and weight updates shared with the efficient sampler.
pub fn ooas_sweep<R: Rng + ?Sized>(
    state: &mut ChainState,
    model: &Model,
    options: &OasOptions,
    rng: &mut R,
) -> Result<()> {
    ooas_update_allocations(state, model, rng);
    update_components(state, model, rng);
    update_weights(state, model, options, rng)
}

/// Partition and block components; no weights are carried.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalState {
    alloc: Allocation,
    components: Vec<GaussComponent>,
}

impl MarginalState {
    pub fn new(alloc: Allocation, components: Vec<GaussComponent>) -> Result<Self> {
        if components.len() != alloc.k() {
            return Err(Error::InvalidAllocation(format!(
                "{} blocks but {} components",
                alloc.k(),
                components.len()
            )));
        }
        Ok(MarginalState { alloc, components })
    }

    pub fn from_allocation<R: Rng + ?Sized>(
        model: &Model,
        alloc: Allocation,
        rng: &mut R,
    ) -> Result<Self> {
        let components = model
            .block_stats(&alloc)
            .iter()
            .map(|s| model.base().sample_posterior(s, rng))
            .collect();
        Self::new(alloc, components)
    }

    pub fn single_block<R: Rng + ?Sized>(model: &Model, rng: &mut R) -> Result<Self> {
        Self::from_allocation(model, Allocation::single_block(model.n()), rng)
    }

    pub fn allocation(&self) -> &Allocation {
        &self.alloc
    }

    pub fn components(&self) -> &[GaussComponent] {
        &self.components
    }
}

/// One sweep of the marginal sampler for Dirichlet and Pitman–Yor priors.
pub fn marginal_sweep<R: Rng + ?Sized>(
    state: &mut MarginalState,
    model: &Model,
    rng: &mut R,
) -> Result<()> {
    let (sigma, beta) = model
        .prior()
        .pitman_yor_params()
        .ok_or_else(|| Error::Incompatible {
            sampler: "marginal".into(),
            prior: model.prior().short_name().into(),
            reason: "no closed-form predictive".into(),
        })?;
    let data = model.data();
    let base = model.base();
    let mut labels = state.alloc.labels().to_vec();
    let mut counts = state.alloc.counts().to_vec();
    let mut comps = std::mem::take(&mut state.components);
    let mut buf = Vec::new();

    for (i, &y) in data.iter().enumerate() {
        let b = labels[i];
        counts[b] -= 1;
        let mut aux = None;
        if counts[b] == 0 {
            aux = Some(comps.remove(b));
            counts.remove(b);
            for l in labels.iter_mut() {
                if *l > b {
                    *l -= 1;
                }
            }
        }
        let k = comps.len();
        buf.clear();
        buf.extend((0..k).map(|j| (counts[j] as f64 - sigma).ln() + comps[j].ln_density(y)));
        let x = aux.unwrap_or_else(|| base.sample(rng));
        buf.push((beta + k as f64 * sigma).ln() + x.ln_density(y));
        let c = dist::sample_log_categorical(rng, &mut buf);
        if c == k {
            comps.push(x);
            counts.push(1);
        } else {
            counts[c] += 1;
        }
        labels[i] = c;
    }

    let (alloc, _) = least_element_relabel(&labels);
    state.components = model
        .block_stats(&alloc)
        .iter()
        .map(|s| base.sample_posterior(s, rng))
        .collect();
    state.alloc = alloc;
    Ok(())
}
