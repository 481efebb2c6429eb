//! Deep Q-network placement agent, written from scratch on `f64` buffers.
//!
//! * [`encode`] turns an engine state into three grouped feature blocks.
//! * [`QNetwork`] embeds each block separately, mixes the embeddings with a
//!   learned softmax gate, and maps the result through two hidden layers to
//!   one Q-value per action.
//! * [`DqnAgent`] is a [`crate::policy::Policy`] that picks actions
//!   epsilon-greedily and learns from a replay buffer against a periodically
//!   synced target network.
//! * [`train`] drives whole training episodes and produces the learning curve.

mod agent;
mod checkpoint;
mod encode;
mod network;
mod replay;
mod train;

pub use agent::{AgentStats, DqnAgent};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointError, TensorDump};
pub use encode::{encode, encoding_widths, StateEncoding};
pub use network::{Dense, NetShape, QNetwork, WidthMismatch};
pub use replay::{ReplayBuffer, Transition};
pub use train::{evaluate, train, write_curve, CurvePoint, TrainError};

use serde::{Deserialize, Serialize};

/// Reward magnitudes; completions add `r_complete`, drops subtract `r_drop`,
/// infeasible actions subtract `r_invalid`, every step adds `r_step`, and
/// every successful allocation adds `r_allocate` and subtracts `r_tx_step`
/// per step of the inbound transfer it makes necessary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardSpec {
    pub r_complete: f64,
    pub r_drop: f64,
    pub r_invalid: f64,
    pub r_step: f64,
    pub r_allocate: f64,
    pub r_tx_step: f64,
}

impl Default for RewardSpec {
    fn default() -> Self {
        RewardSpec {
            r_complete: 10.0,
            r_drop: 10.0,
            r_invalid: 1.0,
            r_step: 0.0,
            r_allocate: 0.0,
            r_tx_step: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DqnConfig {
    pub embed: usize,
    pub hidden: [usize; 2],
    pub gamma: f64,
    /// Apply `gamma` once per elapsed simulation step between decisions
    /// instead of once per decision.
    pub discount_per_step: bool,
    pub lr: f64,
    /// Global gradient-norm clip.
    pub grad_clip: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Target network hard sync period, in gradient steps.
    pub target_sync: u64,
    pub eps_start: f64,
    pub eps_end: f64,
    /// Share of the training episodes over which epsilon decays linearly.
    pub eps_decay_fraction: f64,
    pub episodes: usize,
    /// One gradient step per this many stored transitions.
    pub train_every: usize,
    /// Instance and request counts are divided by this and clipped to 1.
    pub count_cap: f64,
    /// Actions per invocation; `None` means one per (DC, VNF type) pair.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_actions: Option<usize>,
    /// Restrict both exploration and the greedy choice to feasible actions.
    /// Infeasible actions then never occur and `r_invalid` is never paid.
    pub mask_infeasible: bool,
    /// With masking on, also forbid IdleWait while some allocation is
    /// feasible.
    pub work_conserving: bool,
    /// Seed for weight init and exploration.
    pub seed: u64,
    /// Training episode `e` runs the scenario with seed `train_seed_offset + e`.
    pub train_seed_offset: u64,
    pub reward: RewardSpec,
}

impl Default for DqnConfig {
    fn default() -> Self {
        DqnConfig {
            embed: 32,
            hidden: [128, 64],
            gamma: 0.95,
            discount_per_step: false,
            lr: 1e-3,
            grad_clip: 5.0,
            batch_size: 64,
            buffer_capacity: 50_000,
            target_sync: 500,
            eps_start: 1.0,
            eps_end: 0.05,
            eps_decay_fraction: 0.5,
            episodes: 200,
            train_every: 4,
            count_cap: 100.0,
            max_actions: None,
            mask_infeasible: false,
            work_conserving: false,
            seed: 0,
            train_seed_offset: 10_000,
            reward: RewardSpec::default(),
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<(), String> {
        let r = &self.reward;
        if [r.r_complete, r.r_drop, r.r_invalid, r.r_allocate, r.r_tx_step].iter().any(|v| !(*v >= 0.0)) {
            return Err("reward magnitudes must be non-negative".into());
        }
        if self.embed == 0 || self.hidden.contains(&0) {
            return Err("layer widths must be positive".into());
        }
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return Err("buffer_capacity must be at least batch_size > 0".into());
        }
        if !(0.0..=1.0).contains(&self.eps_end) || !(self.eps_end..=1.0).contains(&self.eps_start) {
            return Err("need 0 <= eps_end <= eps_start <= 1".into());
        }
        if !(self.gamma >= 0.0 && self.gamma <= 1.0) {
            return Err("gamma must lie in [0, 1]".into());
        }
        if !(self.lr > 0.0) || !(self.grad_clip > 0.0) || !(self.count_cap > 0.0) {
            return Err("lr, grad_clip and count_cap must be positive".into());
        }
        if self.target_sync == 0 || self.train_every == 0 {
            return Err("target_sync and train_every must be positive".into());
        }
        Ok(())
    }

    /// Epsilon after `episodes_done` of `total` training episodes.
    pub fn epsilon(&self, episodes_done: usize, total: usize) -> f64 {
        let span = (self.eps_decay_fraction * total as f64).ceil();
        if span <= 0.0 {
            return self.eps_end;
        }
        let t = (episodes_done as f64 / span).min(1.0);
        (self.eps_start + (self.eps_end - self.eps_start) * t).max(self.eps_end)
    }
}
