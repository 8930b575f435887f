//! A single Markov chain: model, sampler, state and its own random stream.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{marginal_sweep, ooas_sweep, MarginalState};
use crate::diagnostics::{deviance, TraceRow};
use crate::error::{Error, Result};
use crate::model::{Allocation, GaussComponent, MixingPrior, Model};
use crate::oas::{sweep, ChainState, OasOptions};
use crate::split_merge::{split_merge_move, SplitMergeOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    Oas,
    OasCollapsed,
    Ooas,
    Marginal,
    SplitmergeStandalone,
    OasWithSplitmerge,
}

impl SamplerKind {
    pub const ALL: [SamplerKind; 6] = [
        SamplerKind::Oas,
        SamplerKind::OasCollapsed,
        SamplerKind::Ooas,
        SamplerKind::Marginal,
        SamplerKind::SplitmergeStandalone,
        SamplerKind::OasWithSplitmerge,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SamplerKind::Oas => "oas",
            SamplerKind::OasCollapsed => "oas_collapsed",
            SamplerKind::Ooas => "ooas",
            SamplerKind::Marginal => "marginal",
            SamplerKind::SplitmergeStandalone => "splitmerge_standalone",
            SamplerKind::OasWithSplitmerge => "oas_with_splitmerge",
        }
    }

    /// Rejects sampler and prior pairs that cannot run together.
    pub fn check_prior(self, prior: &MixingPrior) -> Result<()> {
        prior.validate()?;
        if self == SamplerKind::Marginal && prior.pitman_yor_params().is_none() {
            return Err(Error::Incompatible {
                sampler: self.name().into(),
                prior: prior.short_name().into(),
                reason: "no closed-form predictive; use a conditional sampler".into(),
            });
        }
        Ok(())
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        SamplerKind::ALL
            .into_iter()
            .find(|k| k.name() == key)
            .ok_or_else(|| {
                Error::InvalidParameter(format!(
                    "unknown sampler `{s}`; expected one of {}",
                    SamplerKind::ALL.map(|k| k.name()).join(", ")
                ))
            })
    }
}

/// Tuning shared by every sampler kind.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerSettings {
    pub oas: OasOptions,
    pub split_merge: SplitMergeOptions,
}

#[derive(Debug, Clone, PartialEq)]
enum Kernel {
    Conditional(ChainState),
    Marginal(MarginalState),
}

/// A chain that owns its state and random stream.
#[derive(Debug, Clone)]
pub struct Chain {
    model: Arc<Model>,
    kind: SamplerKind,
    settings: SamplerSettings,
    kernel: Kernel,
    rng: ChaCha8Rng,
    iteration: u64,
    moves: u64,
    accepted: u64,
}

impl Chain {
    /// Chain started with every observation in one block.
    pub fn new(
        model: Arc<Model>,
        kind: SamplerKind,
        settings: SamplerSettings,
        seed: u64,
    ) -> Result<Self> {
        let alloc = Allocation::single_block(model.n());
        Self::from_allocation(model, kind, settings, seed, alloc)
    }

    pub fn from_allocation(
        model: Arc<Model>,
        kind: SamplerKind,
        settings: SamplerSettings,
        seed: u64,
        alloc: Allocation,
    ) -> Result<Self> {
        Self::with_rng(
            model,
            kind,
            settings,
            ChaCha8Rng::seed_from_u64(seed),
            alloc,
        )
    }

    /// Chain driven by the given random stream.
    pub fn with_rng(
        model: Arc<Model>,
        kind: SamplerKind,
        settings: SamplerSettings,
        mut rng: ChaCha8Rng,
        alloc: Allocation,
    ) -> Result<Self> {
        kind.check_prior(model.prior())?;
        let kernel = match kind {
            SamplerKind::Marginal => {
                Kernel::Marginal(MarginalState::from_allocation(&model, alloc, &mut rng)?)
            }
            _ => Kernel::Conditional(ChainState::from_allocation(&model, alloc, &mut rng)?),
        };
        Ok(Chain {
            model,
            kind,
            settings,
            kernel,
            rng,
            iteration: 0,
            moves: 0,
            accepted: 0,
        })
    }

    /// One iteration of the configured sampler.
    pub fn step(&mut self) -> Result<()> {
        let model = &*self.model;
        let rng = &mut self.rng;
        let opts = &self.settings.oas;
        match (&mut self.kernel, self.kind) {
            (Kernel::Marginal(s), _) => marginal_sweep(s, model, rng)?,
            (Kernel::Conditional(s), SamplerKind::Oas) => sweep(s, model, opts, rng)?,
            (Kernel::Conditional(s), SamplerKind::OasCollapsed) => {
                let collapsed = OasOptions {
                    collapsed: true,
                    ..*opts
                };
                sweep(s, model, &collapsed, rng)?
            }
            (Kernel::Conditional(s), SamplerKind::Ooas) => ooas_sweep(s, model, opts, rng)?,
            (Kernel::Conditional(s), kind) => {
                if kind == SamplerKind::OasWithSplitmerge {
                    sweep(s, model, opts, rng)?;
                }
                if let Some(out) = split_merge_move(s, model, &self.settings.split_merge, rng)? {
                    self.moves += 1;
                    self.accepted += u64::from(out.accepted);
                }
            }
        }
        self.iteration += 1;
        Ok(())
    }

    /// Runs `n` further iterations.
    pub fn run(&mut self, n: u64) -> Result<()> {
        for _ in 0..n {
            self.step()?;
        }
        Ok(())
    }

    /// Replaces the sampler, keeping state and random stream. Only
    /// switches among conditional samplers are allowed.
    pub fn switch_sampler(&mut self, kind: SamplerKind) -> Result<()> {
        let to_marginal = kind == SamplerKind::Marginal;
        let is_marginal = matches!(self.kernel, Kernel::Marginal(_));
        if to_marginal != is_marginal {
            return Err(Error::InvalidParameter(
                "cannot switch between marginal and conditional samplers".into(),
            ));
        }
        kind.check_prior(self.model.prior())?;
        self.kind = kind;
        Ok(())
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn kind(&self) -> SamplerKind {
        self.kind
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn allocation(&self) -> &Allocation {
        match &self.kernel {
            Kernel::Conditional(s) => s.allocation(),
            Kernel::Marginal(s) => s.allocation(),
        }
    }

    pub fn components(&self) -> &[GaussComponent] {
        match &self.kernel {
            Kernel::Conditional(s) => s.components(),
            Kernel::Marginal(s) => s.components(),
        }
    }

    /// The full conditional state, when the sampler keeps weights.
    pub fn conditional_state(&self) -> Option<&ChainState> {
        match &self.kernel {
            Kernel::Conditional(s) => Some(s),
            Kernel::Marginal(_) => None,
        }
    }

    pub fn k(&self) -> usize {
        self.allocation().k()
    }

    pub fn deviance(&self) -> f64 {
        deviance(self.allocation(), self.components(), self.model.data())
    }

    /// Split-merge acceptance rate so far, if any move was attempted.
    pub fn split_merge_acceptance(&self) -> Option<f64> {
        (self.moves > 0).then(|| self.accepted as f64 / self.moves as f64)
    }

    pub fn trace_row(&self, wall_ns: u64) -> TraceRow {
        TraceRow {
            iter: self.iteration,
            k_n: self.k(),
            deviance: self.deviance(),
            partition: self.allocation().signature(),
            wall_ns,
        }
    }
}
