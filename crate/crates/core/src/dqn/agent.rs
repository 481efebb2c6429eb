use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::encode::{encode, encoding_widths, StateEncoding};
use super::network::{NetShape, QNetwork};
use super::replay::{ReplayBuffer, Transition};
use super::DqnConfig;
use crate::catalog::VnfKind;
use crate::engine::{tx_steps, EngineState, Placement, StepReport};
use crate::policy::{action_count, decode_action, Control, Outcome, Policy, PolicyAction};
use crate::scenario::Scenario;

/// Per-episode counters, reset by [`DqnAgent::begin_episode`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AgentStats {
    pub decisions: u64,
    pub invalid_actions: u64,
    pub reward: f64,
    pub loss_sum: f64,
    pub loss_count: u64,
}

impl AgentStats {
    pub fn mean_loss(&self) -> Option<f64> {
        (self.loss_count > 0).then(|| self.loss_sum / self.loss_count as f64)
    }
}

#[derive(Debug, Clone)]
pub struct DqnAgent {
    cfg: DqnConfig,
    n_dcs: usize,
    widths: [usize; 3],
    online: QNetwork,
    target: QNetwork,
    buffer: ReplayBuffer,
    rng: ChaCha8Rng,
    epsilon: f64,
    learning: bool,
    grad_steps: u64,
    since_train: usize,
    pending: Option<(Arc<[f32]>, usize, u64)>,
    acc_reward: f64,
    stats: AgentStats,
    diverged: Option<String>,
    pub(crate) episodes_done: usize,
}

fn to_f32(e: &StateEncoding) -> Arc<[f32]> {
    e.data().iter().map(|&v| v as f32).collect()
}

impl DqnAgent {
    pub fn new(cfg: DqnConfig, n_dcs: usize, n_links: usize) -> DqnAgent {
        let widths = encoding_widths(n_dcs, n_links);
        let shape = NetShape {
            branch_inputs: widths.to_vec(),
            embed: cfg.embed,
            hidden: cfg.hidden.to_vec(),
            outputs: action_count(n_dcs),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let online = QNetwork::new(&shape, &mut rng);
        DqnAgent {
            n_dcs,
            widths,
            target: online.clone(),
            online,
            buffer: ReplayBuffer::new(cfg.buffer_capacity),
            rng,
            epsilon: cfg.eps_start,
            learning: false,
            grad_steps: 0,
            since_train: 0,
            pending: None,
            acc_reward: 0.0,
            stats: AgentStats::default(),
            diverged: None,
            episodes_done: 0,
            cfg,
        }
    }

    pub fn for_scenario(s: &Scenario) -> DqnAgent {
        DqnAgent::new(s.dqn.clone(), s.dcs.len(), s.graph.links().len())
    }

    pub fn config(&self) -> &DqnConfig {
        &self.cfg
    }

    pub fn n_dcs(&self) -> usize {
        self.n_dcs
    }

    pub fn widths(&self) -> [usize; 3] {
        self.widths
    }

    pub fn online(&self) -> &QNetwork {
        &self.online
    }

    pub fn online_mut(&mut self) -> &mut QNetwork {
        &mut self.online
    }

    pub fn target(&self) -> &QNetwork {
        &self.target
    }

    pub(crate) fn set_networks(&mut self, online: QNetwork, target: QNetwork) {
        self.online = online;
        self.target = target;
    }

    pub fn sync_target(&mut self) {
        self.target = self.online.clone();
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn grad_steps(&self) -> u64 {
        self.grad_steps
    }

    pub(crate) fn set_grad_steps(&mut self, n: u64) {
        self.grad_steps = n;
    }

    pub fn episodes_done(&self) -> usize {
        self.episodes_done
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn set_epsilon(&mut self, eps: f64) {
        self.epsilon = eps.clamp(0.0, 1.0);
    }

    /// While learning, transitions are stored and gradient steps are taken.
    pub fn set_learning(&mut self, on: bool) {
        self.learning = on;
    }

    pub fn stats(&self) -> AgentStats {
        self.stats
    }

    pub fn diverged(&self) -> Option<&str> {
        self.diverged.as_deref()
    }

    pub fn begin_episode(&mut self) {
        self.stats = AgentStats::default();
        self.pending = None;
        self.acc_reward = 0.0;
    }

    pub fn q_values(&self, enc: &StateEncoding) -> Vec<f64> {
        self.online
            .forward(&enc.branches())
            .expect("encoding matches network")
    }

    /// Epsilon-greedy action index; greedy ties go to the lowest index.
    pub fn act_index(&mut self, enc: &StateEncoding) -> usize {
        self.act_index_masked(enc, None)
    }

    /// As [`DqnAgent::act_index`], restricted to `mask[i] == true` when given.
    /// The mask must allow at least one action.
    pub fn act_index_masked(&mut self, enc: &StateEncoding, mask: Option<&[bool]>) -> usize {
        let explore: f64 = self.rng.gen();
        if explore < self.epsilon {
            return match mask {
                None => self.rng.gen_range(0..self.online.outputs()),
                Some(m) => {
                    let allowed: Vec<usize> = (0..m.len()).filter(|&i| m[i]).collect();
                    allowed[self.rng.gen_range(0..allowed.len())]
                }
            };
        }
        argmax(&self.q_values(enc), mask)
    }

    pub fn act(&mut self, enc: &StateEncoding) -> PolicyAction {
        decode_action(self.act_index(enc), self.n_dcs).expect("index within action space")
    }

    /// One gradient step on the mean squared Bellman error of `batch`.
    /// Returns the loss before the step.
    pub fn train_step(&mut self, batch: &[Transition]) -> f64 {
        let widths = self.widths;
        let split = |s: &[f32]| -> Vec<f64> { s.iter().map(|&v| v as f64).collect() };
        let mut grad = self.online.zeros_like();
        let mut loss = 0.0;
        let n = batch.len() as f64;
        for t in batch {
            let s = StateEncoding::from_parts(widths, split(&t.state));
            let mut y = t.reward;
            if !t.terminal && t.discount > 0.0 {
                let s2 = StateEncoding::from_parts(widths, split(&t.next_state));
                let q2 = self
                    .target
                    .forward(&s2.branches())
                    .expect("encoding matches network");
                let best = match &t.next_mask {
                    None => q2.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    Some(m) => q2[argmax(&q2, Some(m))],
                };
                y += t.discount * best;
            }
            let cache = self
                .online
                .forward_cached(&s.branches())
                .expect("encoding matches network");
            let err = cache.output()[t.action] - y;
            loss += err * err / n;
            let mut d = vec![0.0; self.online.outputs()];
            d[t.action] = 2.0 * err / n;
            self.online.backward(&cache, &d, &mut grad);
        }
        if !loss.is_finite() || !grad.is_finite() {
            self.diverged = Some(format!(
                "non-finite loss after {} gradient steps",
                self.grad_steps
            ));
            return loss;
        }
        self.online.sgd_step(&grad, self.cfg.lr, self.cfg.grad_clip);
        if !self.online.is_finite() {
            self.diverged = Some(format!("non-finite parameters at gradient step {}", self.grad_steps));
            return loss;
        }
        self.grad_steps += 1;
        if self.grad_steps.is_multiple_of(self.cfg.target_sync) {
            self.sync_target();
        }
        loss
    }

    fn close_pending(
        &mut self,
        next: Arc<[f32]>,
        next_mask: Option<Arc<[bool]>>,
        terminal: bool,
        now: u64,
    ) {
        let Some((state, action, at)) = self.pending.take() else {
            return;
        };
        let discount = if self.cfg.discount_per_step {
            self.cfg.gamma.powi((now - at).min(i32::MAX as u64) as i32)
        } else {
            self.cfg.gamma
        };
        let reward = std::mem::take(&mut self.acc_reward);
        self.buffer.push(Transition {
            state,
            action,
            reward,
            next_state: next,
            terminal,
            discount,
            next_mask,
        });
        self.since_train += 1;
        if self.since_train >= self.cfg.train_every
            && self.buffer.len() >= self.cfg.batch_size
            && self.diverged.is_none()
        {
            self.since_train = 0;
            let batch: Vec<Transition> = self
                .buffer
                .sample(self.cfg.batch_size, &mut self.rng)
                .into_iter()
                .cloned()
                .collect();
            let loss = self.train_step(&batch);
            self.stats.loss_sum += loss;
            self.stats.loss_count += 1;
        }
    }

    fn max_actions(&self) -> usize {
        self.cfg
            .max_actions
            .unwrap_or(VnfKind::COUNT * self.n_dcs)
            .max(1)
    }
}

fn argmax(q: &[f64], mask: Option<&[bool]>) -> usize {
    let allowed = |i: usize| mask.is_none_or(|m| m[i]);
    let mut best = None;
    for (i, v) in q.iter().enumerate() {
        if allowed(i) && best.is_none_or(|b: usize| *v > q[b]) {
            best = Some(i);
        }
    }
    best.expect("mask allows some action")
}

/// Steps of transfer needed to bring the request's data to the placement,
/// over the current minimum path (0 if local or unroutable right now).
fn inbound_tx_steps(state: &EngineState, p: &Placement) -> u64 {
    let Some(rec) = state.live().get(&p.tag) else {
        return 0;
    };
    if rec.sfc_dc == p.dc {
        return 0;
    }
    match state.graph().select_min_path(rec.sfc_dc, p.dc, rec.bw) {
        Ok(Some(path)) => tx_steps(
            rec.packet_len_mb,
            rec.bw,
            &path,
            state.graph(),
            state.params().propagation,
        ),
        _ => 0,
    }
}

fn feasibility_mask(ctl: &Control<'_>, work_conserving: bool) -> Arc<[bool]> {
    let n = ctl.n_dcs();
    let mut mask: Vec<bool> = (0..action_count(n))
        .map(|i| ctl.is_feasible(decode_action(i, n).expect("index within action space")))
        .collect();
    let idle = mask.len() - 1;
    if work_conserving && mask[..VnfKind::COUNT * n].iter().any(|&m| m) {
        mask[idle] = false;
    }
    mask.into()
}

impl Policy for DqnAgent {
    fn name(&self) -> &str {
        "dqn"
    }

    /// Decisions are only taken while some request waits for its head VNF;
    /// otherwise no action can change the outcome and the step is skipped.
    fn decide(&mut self, ctl: &mut Control<'_>) {
        if !ctl.has_pending() {
            return;
        }
        for _ in 0..self.max_actions() {
            let enc = encode(ctl.state(), self.cfg.count_cap);
            let mask = self.cfg.mask_infeasible.then(|| feasibility_mask(ctl, self.cfg.work_conserving));
            let packed = self.learning.then(|| to_f32(&enc));
            if let Some(s) = &packed {
                self.close_pending(s.clone(), mask.clone(), false, ctl.state().step_index());
            }
            let index = self.act_index_masked(&enc, mask.as_deref());
            let action = decode_action(index, self.n_dcs).expect("index within action space");
            self.stats.decisions += 1;
            let stop = match ctl.apply(action) {
                Ok(Outcome::Waited) => true,
                Ok(Outcome::Allocated(p)) => {
                    let r = self.cfg.reward.r_allocate
                        - self.cfg.reward.r_tx_step * inbound_tx_steps(ctl.state(), &p) as f64;
                    self.acc_reward += r;
                    self.stats.reward += r;
                    false
                }
                Ok(Outcome::Uninstalled { .. }) => false,
                Err(_) => {
                    self.acc_reward -= self.cfg.reward.r_invalid;
                    self.stats.reward -= self.cfg.reward.r_invalid;
                    self.stats.invalid_actions += 1;
                    ctl.apply(PolicyAction::IdleWait)
                        .expect("idle-wait always applies");
                    true
                }
            };
            if let Some(s) = packed {
                self.pending = Some((s, index, ctl.state().step_index()));
            }
            if stop || !ctl.has_pending() {
                break;
            }
        }
    }

    fn observe(&mut self, report: &StepReport, _state: &EngineState) {
        let r = &self.cfg.reward;
        let reward = r.r_complete * report.completed.len() as f64
            - r.r_drop * report.dropped.len() as f64
            + r.r_step;
        self.acc_reward += reward;
        self.stats.reward += reward;
    }

    fn episode_end(&mut self, state: &EngineState) {
        if self.learning {
            let enc = encode(state, self.cfg.count_cap);
            self.close_pending(to_f32(&enc), None, true, state.step_index());
        }
        self.pending = None;
        self.acc_reward = 0.0;
    }
}
