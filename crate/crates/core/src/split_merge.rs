//! Split-merge Metropolis–Hastings moves built from restricted Gibbs
//! scans, for weights in size-biased order and for general `(p, alpha)`
//! weights.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist;
use crate::error::{Error, Result};
use crate::model::{least_element_relabel, Allocation, BlockStats, GaussComponent, Model};
use crate::oas::ChainState;
use crate::weights::{AlphaMode, GeneralWeights, Weights};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoveKind {
    Split,
    Merge,
}

/// The pair `(i, j)` and the observations clustered with either of them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitMergeContext {
    pub i: usize,
    pub j: usize,
    pub kind: MoveKind,
    /// Other members of the blocks of `i` and `j`, ascending.
    pub s: Vec<usize>,
    /// Number of blocks of the proposed states.
    pub k_target: usize,
}

pub fn build_neighborhood(alloc: &Allocation, i: usize, j: usize) -> Result<SplitMergeContext> {
    let n = alloc.n();
    if i == j || i >= n || j >= n {
        return Err(Error::InvalidParameter(format!(
            "split-merge needs two distinct observations below {n}, got ({i}, {j})"
        )));
    }
    let labels = alloc.labels();
    let (a, b) = (labels[i], labels[j]);
    let s = (0..n)
        .filter(|&l| l != i && l != j && (labels[l] == a || labels[l] == b))
        .collect();
    let (kind, k_target) = if a == b {
        (MoveKind::Split, alloc.k() + 1)
    } else {
        (MoveKind::Merge, alloc.k() - 1)
    };
    Ok(SplitMergeContext {
        i,
        j,
        kind,
        s,
        k_target,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitMergeOptions {
    /// Intermediate restricted scans used to build each launch state.
    pub scans: usize,
    pub alpha_mode: AlphaMode,
    pub accelerate: bool,
}

impl Default for SplitMergeOptions {
    fn default() -> Self {
        SplitMergeOptions {
            scans: 10,
            alpha_mode: AlphaMode::default(),
            accelerate: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoveOutcome {
    pub kind: MoveKind,
    pub accepted: bool,
    /// Log of the Metropolis–Hastings ratio before truncation at zero.
    pub ln_ratio: f64,
}

/// A launch state together with the neighbourhood it lives in.
#[derive(Debug, Clone, PartialEq)]
pub struct LaunchState {
    pub state: ChainState,
    /// Whether `i` and `j` sit in different blocks.
    pub separate: bool,
}

/// Arranges the members of `S ∪ {i, j}` on top of a reference state. With
/// `sides = Some(..)` the pair is kept apart and `sides[t]` puts `s[t]` with
/// `j`; with `None` every affected observation joins `i`. Returns the
/// ordered allocation and, per block, the reference component to copy
/// (`None` for the affected blocks).
fn layout(
    reference: &ChainState,
    ctx: &SplitMergeContext,
    sides: Option<&[bool]>,
) -> (Allocation, Vec<Option<GaussComponent>>) {
    let ref_labels = reference.alloc.labels();
    let a = ref_labels[ctx.i];
    let b = if ref_labels[ctx.j] == a {
        reference.alloc.k()
    } else {
        ref_labels[ctx.j]
    };
    let mut labels = ref_labels.to_vec();
    match sides {
        Some(sides) => {
            labels[ctx.i] = a;
            labels[ctx.j] = b;
            for (&l, &with_j) in ctx.s.iter().zip(sides) {
                labels[l] = if with_j { b } else { a };
            }
        }
        None => {
            labels[ctx.j] = a;
            for &l in &ctx.s {
                labels[l] = a;
            }
        }
    }
    let (alloc, sigma) = least_element_relabel(&labels);
    let comps = sigma
        .iter()
        .map(|&c| (c != a && c != b).then(|| reference.components[c]))
        .collect();
    (alloc, comps)
}

fn affected_blocks(alloc: &Allocation, ctx: &SplitMergeContext) -> (usize, usize) {
    (alloc.labels()[ctx.i], alloc.labels()[ctx.j])
}

/// Redraws the components of the affected blocks from their posterior.
fn redraw_affected<R: Rng + ?Sized>(
    state: &mut ChainState,
    model: &Model,
    ctx: &SplitMergeContext,
    rng: &mut R,
) {
    let (a, b) = affected_blocks(&state.alloc, ctx);
    for d in if a == b { vec![a] } else { vec![a, b] } {
        let stats = block_stats_of(model, &state.alloc, d);
        state.components[d] = model.base().sample_posterior(&stats, rng);
    }
}

fn block_stats_of(model: &Model, alloc: &Allocation, d: usize) -> BlockStats {
    let mut s = BlockStats::default();
    for (&l, &y) in alloc.labels().iter().zip(model.data()) {
        if l == d {
            s.push(y);
        }
    }
    s
}

/// Log probabilities that `y_l` joins the block of `i` or of `j` in the
/// launch, with block weights `w`.
fn side_ln_probs(
    launch: &ChainState,
    ctx: &SplitMergeContext,
    w: &dyn Fn(usize) -> f64,
    y: f64,
) -> (f64, f64) {
    let (a, b) = affected_blocks(&launch.alloc, ctx);
    let la = w(a).ln() + launch.components[a].ln_density(y);
    let lb = w(b).ln() + launch.components[b].ln_density(y);
    let m = la.max(lb);
    let norm = m + ((la - m).exp() + (lb - m).exp()).ln();
    (la - norm, lb - norm)
}

/// Reallocation of `S` between the blocks of `i` and `j`; returns the new
/// unordered labels in the launch's label space.
fn reallocate<R: Rng + ?Sized>(
    launch: &ChainState,
    model: &Model,
    ctx: &SplitMergeContext,
    w: &dyn Fn(usize) -> f64,
    rng: &mut R,
) -> Vec<usize> {
    let (a, b) = affected_blocks(&launch.alloc, ctx);
    let mut labels = launch.alloc.labels().to_vec();
    for &l in &ctx.s {
        let (pa, _) = side_ln_probs(launch, ctx, w, model.data()[l]);
        labels[l] = if dist::uniform(rng).ln() < pa { a } else { b };
    }
    labels
}

/// Draws a launch state: random arrangement of the affected observations,
/// affected components from the base measure, weights from the prior, then
/// `options.scans` restricted scans.
pub fn make_launch<R: Rng + ?Sized>(
    reference: &ChainState,
    model: &Model,
    ctx: &SplitMergeContext,
    separate: bool,
    options: &SplitMergeOptions,
    rng: &mut R,
) -> Result<LaunchState> {
    let sides: Option<Vec<bool>> =
        separate.then(|| ctx.s.iter().map(|_| rng.random::<bool>()).collect());
    let (alloc, comps) = layout(reference, ctx, sides.as_deref());
    let components = comps
        .into_iter()
        .map(|c| c.unwrap_or_else(|| model.base().sample(rng)))
        .collect();
    let weights = Weights::sample_prior(model.prior(), alloc.k(), rng)?;
    let mut launch = LaunchState {
        state: ChainState {
            alloc,
            components,
            weights,
        },
        separate,
    };
    for _ in 0..options.scans {
        launch.state = restricted_scan(&launch, model, ctx, options, rng)?;
    }
    Ok(launch)
}

/// One restricted Gibbs scan from a launch state: reallocation within the
/// pair's blocks, affected components, then the full weight update.
pub fn restricted_scan<R: Rng + ?Sized>(
    launch: &LaunchState,
    model: &Model,
    ctx: &SplitMergeContext,
    options: &SplitMergeOptions,
    rng: &mut R,
) -> Result<ChainState> {
    let l = &launch.state;
    let mut out = l.clone();
    if launch.separate {
        let w = |c: usize| l.weights.tilde(c);
        let labels = reallocate(l, model, ctx, &w, rng);
        let (alloc, sigma) = least_element_relabel(&labels);
        out.components = sigma.iter().map(|&s| l.components[s]).collect();
        out.weights.permute(&sigma);
        out.alloc = alloc;
    }
    redraw_affected(&mut out, model, ctx, rng);
    out.weights.update(
        model.prior(),
        out.alloc.counts(),
        options.alpha_mode,
        options.accelerate,
        rng,
    )?;
    Ok(out)
}

/// Draws a proposal from the launch. For size-biased weights this is a
/// restricted scan; for general weights the discovery indexes are first
/// drawn as size-biased picks from the launch's `p`, and the launch
/// weights are returned extended as far as the picks required.
fn propose<R: Rng + ?Sized>(
    launch: &LaunchState,
    model: &Model,
    ctx: &SplitMergeContext,
    options: &SplitMergeOptions,
    rng: &mut R,
) -> Result<(ChainState, Option<GeneralWeights>)> {
    let l = &launch.state;
    let Weights::General(lw) = &l.weights else {
        return Ok((restricted_scan(launch, model, ctx, options, rng)?, None));
    };
    let mut picks = lw.clone();
    picks.replace_alpha(Vec::new());
    for _ in 0..l.alloc.k() {
        picks.discover(rng);
    }
    let alpha_star = picks.alpha().to_vec();
    let extended = picks.clone();

    let mut out = l.clone();
    let mut alpha_final = alpha_star.clone();
    if launch.separate {
        let w = |c: usize| picks.prefix()[alpha_star[c]];
        let labels = reallocate(l, model, ctx, &w, rng);
        let (alloc, sigma) = least_element_relabel(&labels);
        out.components = sigma.iter().map(|&s| l.components[s]).collect();
        alpha_final = sigma.iter().map(|&s| alpha_star[s]).collect();
        out.alloc = alloc;
    }
    redraw_affected(&mut out, model, ctx, rng);
    let mut w = picks;
    w.replace_alpha(alpha_final);
    w.prune();
    w.resample_prefix(out.alloc.counts(), rng);
    out.weights = Weights::General(w);
    Ok((out, Some(extended)))
}

/// Log density of producing `target` from `launch` by the proposal kernel.
/// `target` must lie in the launch's neighbourhood. For general weights the
/// launch prefix is extended from the prior when `target` needs more of it.
fn ln_proposal_density<R: Rng + ?Sized>(
    target: &ChainState,
    launch: &LaunchState,
    extended: Option<&mut GeneralWeights>,
    model: &Model,
    ctx: &SplitMergeContext,
    rng: &mut R,
) -> Result<f64> {
    let l = &launch.state;
    let (ta, tb) = affected_blocks(&target.alloc, ctx);
    if (ta != tb) != launch.separate {
        return Err(Error::InvalidAllocation(
            "target is outside the launch neighbourhood".into(),
        ));
    }
    let mut total = 0.0;

    // Launch label of every target block.
    let (la, lb) = affected_blocks(&l.alloc, ctx);
    let tlabels = target.alloc.labels();
    let c: Vec<usize> = (0..target.alloc.n())
        .map(|t| {
            if tlabels[t] == ta {
                la
            } else if tlabels[t] == tb {
                lb
            } else {
                l.alloc.labels()[t]
            }
        })
        .collect();
    let (check, sigma) = least_element_relabel(&c);
    debug_assert_eq!(check.labels(), target.alloc.labels());

    let block_weight: Box<dyn Fn(usize) -> f64 + '_> = match (&target.weights, extended) {
        (Weights::General(tw), Some(ext)) => {
            let mut alpha_pre = vec![0; sigma.len()];
            for (d, &s) in sigma.iter().enumerate() {
                alpha_pre[s] = tw.alpha()[d];
            }
            let need = alpha_pre.iter().copied().max().map_or(0, |m| m + 1);
            ext.extend_to(need, rng);
            total += ext.ln_pick_probability(&alpha_pre);
            let ext: &GeneralWeights = ext;
            Box::new(move |c: usize| ext.prefix()[alpha_pre[c]])
        }
        (Weights::SizeBiased(_), None) => Box::new(|c: usize| l.weights.tilde(c)),
        _ => {
            return Err(Error::InvalidParameter(
                "launch and target weights disagree".into(),
            ))
        }
    };

    if launch.separate {
        for &t in &ctx.s {
            let (pa, pb) = side_ln_probs(l, ctx, &*block_weight, model.data()[t]);
            total += if tlabels[t] == ta { pa } else { pb };
        }
    }
    for d in if ta == tb { vec![ta] } else { vec![ta, tb] } {
        let stats = block_stats_of(model, &target.alloc, d);
        total += model
            .base()
            .posterior(&stats)
            .ln_density(&target.components[d]);
    }
    total += match &target.weights {
        Weights::SizeBiased(w) => w.ln_posterior_density(target.alloc.counts())?,
        Weights::General(w) => w.ln_posterior_density(target.alloc.counts()),
    };
    Ok(total)
}

/// Unnormalized log posterior of a state.
pub fn ln_target(state: &ChainState, model: &Model) -> Result<f64> {
    let counts = state.alloc.counts();
    let mut total = match &state.weights {
        Weights::SizeBiased(w) => {
            let mut used = 0.0f64;
            let mut t = 0.0;
            for (&n, &p) in counts.iter().zip(w.weights()) {
                t += (n as f64 - 1.0) * p.ln() + (1.0 - used).ln();
                used += p;
            }
            t + w.ln_prior_density()
        }
        Weights::General(w) => {
            let mut pruned = w.clone();
            pruned.prune();
            counts
                .iter()
                .zip(pruned.observed())
                .map(|(&n, p)| n as f64 * p.ln())
                .sum::<f64>()
                + pruned.ln_prior_density()
        }
    };
    for (&l, &y) in state.alloc.labels().iter().zip(model.data()) {
        total += state.components[l].ln_density(y);
    }
    for x in &state.components {
        total += model.base().ln_density(x);
    }
    Ok(total)
}

/// One split-merge move for the pair `(i, j)`.
pub fn split_merge_move_at<R: Rng + ?Sized>(
    state: &mut ChainState,
    model: &Model,
    options: &SplitMergeOptions,
    i: usize,
    j: usize,
    rng: &mut R,
) -> Result<MoveOutcome> {
    let ctx = build_neighborhood(&state.alloc, i, j)?;
    if let Weights::General(w) = &mut state.weights {
        w.prune();
    }
    let split = ctx.kind == MoveKind::Split;
    let launch = make_launch(state, model, &ctx, split, options, rng)?;
    let reverse = make_launch(state, model, &ctx, !split, options, rng)?;

    let (proposal, mut extended) = propose(&launch, model, &ctx, options, rng)?;
    let ln_forward = ln_proposal_density(&proposal, &launch, extended.as_mut(), model, &ctx, rng)?;
    let mut reverse_ext = match &reverse.state.weights {
        Weights::General(w) => Some(w.clone()),
        Weights::SizeBiased(_) => None,
    };
    let ln_backward = ln_proposal_density(state, &reverse, reverse_ext.as_mut(), model, &ctx, rng)?;

    let ln_ratio =
        ln_target(&proposal, model)? - ln_target(state, model)? + ln_backward - ln_forward;
    let accepted = ln_ratio >= 0.0 || dist::uniform(rng).ln() < ln_ratio;
    if accepted {
        *state = proposal;
    }
    Ok(MoveOutcome {
        kind: ctx.kind,
        accepted,
        ln_ratio,
    })
}

/// One split-merge move for a uniformly chosen pair. Does nothing when
/// there are fewer than two observations.
pub fn split_merge_move<R: Rng + ?Sized>(
    state: &mut ChainState,
    model: &Model,
    options: &SplitMergeOptions,
    rng: &mut R,
) -> Result<Option<MoveOutcome>> {
    let n = model.n();
    if n < 2 {
        return Ok(None);
    }
    let i = rng.random_range(0..n);
    let mut j = rng.random_range(0..n - 1);
    if j >= i {
        j += 1;
    }
    split_merge_move_at(state, model, options, i, j, rng).map(Some)
}
