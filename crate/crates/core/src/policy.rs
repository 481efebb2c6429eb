//! Placement policies and the priority-point scorer.
//!
//! Policies never touch [`EngineState`] directly. They receive a [`Control`]
//! that exposes read access plus the three actions (allocate, uninstall,
//! idle-wait); an action that cannot be carried out returns an
//! [`ActionError`] and leaves the state untouched.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::VnfKind;
use crate::engine::{ActionError, EngineState, Placement, StepReport};
use crate::request_gen::{SfcRecord, SfcTag};
use crate::topology::{DcId, Kbps, PathResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum PolicyAction {
    AllocateVnf { vtype: VnfKind, dc: DcId },
    UninstallVnf { vtype: VnfKind, dc: DcId },
    IdleWait,
}

impl PolicyAction {
    pub fn vtype(&self) -> Option<VnfKind> {
        match *self {
            PolicyAction::AllocateVnf { vtype, .. } | PolicyAction::UninstallVnf { vtype, .. } => {
                Some(vtype)
            }
            PolicyAction::IdleWait => None,
        }
    }

    pub fn dc(&self) -> Option<DcId> {
        match *self {
            PolicyAction::AllocateVnf { dc, .. } | PolicyAction::UninstallVnf { dc, .. } => Some(dc),
            PolicyAction::IdleWait => None,
        }
    }
}

/// What an applied action did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Allocated(Placement),
    Uninstalled { vtype: VnfKind, dc: DcId },
    Waited,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorityParams {
    /// Weights of the deadline, DC-relation, affinity and urgency criteria.
    #[serde(default = "default_weights")]
    pub weights: [f64; 4],
    /// `T_urgency` as a fraction of each type's deadline.
    #[serde(default = "default_urgency_fraction")]
    pub urgency_fraction: f64,
}

fn default_weights() -> [f64; 4] {
    [1.0; 4]
}

fn default_urgency_fraction() -> f64 {
    0.2
}

impl Default for PriorityParams {
    fn default() -> Self {
        PriorityParams {
            weights: default_weights(),
            urgency_fraction: default_urgency_fraction(),
        }
    }
}

impl PriorityParams {
    pub fn t_urgency(&self, deadline_steps: u64) -> u64 {
        (self.urgency_fraction * deadline_steps as f64).round() as u64
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err("priority weights must be finite and non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.urgency_fraction) {
            return Err("urgency_fraction must lie in [0, 1]".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorityScore {
    pub p1_deadline: f64,
    pub p2_dc_relation: f64,
    pub p3_affinity: f64,
    pub p4_urgency: f64,
    pub total: f64,
}

/// Scores `rec` for placement on `dc`. `path` is the current minimum path
/// from the request's position to its destination, if one exists.
pub fn score(
    rec: &SfcRecord,
    dc: DcId,
    path: Option<&PathResult>,
    params: &PriorityParams,
) -> PriorityScore {
    let remaining = rec.remaining_steps();
    let deadline = rec.deadline_steps as f64;
    let p1 = (1.0 - remaining as f64 / deadline).clamp(0.0, 1.0);
    let p2 = if dc == rec.src {
        2.0
    } else if path.is_some_and(|p| p.contains(dc)) {
        1.0
    } else {
        0.0
    };
    let p3 = if rec
        .chain
        .iter()
        .any(|v| v.alloc.is_some_and(|a| a.dc == dc))
    {
        1.0
    } else {
        0.0
    };
    let p4 = if remaining < params.t_urgency(rec.deadline_steps) as i64 {
        1.0
    } else {
        0.0
    };
    let w = params.weights;
    PriorityScore {
        p1_deadline: p1,
        p2_dc_relation: p2,
        p3_affinity: p3,
        p4_urgency: p4,
        total: w[0] * p1 + w[1] * p2 + w[2] * p3 + w[3] * p4,
    }
}

/// Live requests whose head VNF is of type `vtype` and awaits allocation,
/// in ascending tag order.
pub fn candidate_set(state: &EngineState, vtype: VnfKind) -> Vec<SfcTag> {
    state
        .live()
        .values()
        .filter(|r| r.head_pending() == Some(vtype))
        .map(|r| r.tag)
        .collect()
}

/// Priority of placing `tag`'s head on `dc`, with a fresh path query.
pub fn priority(
    state: &EngineState,
    params: &PriorityParams,
    tag: SfcTag,
    dc: DcId,
) -> Result<PriorityScore, ActionError> {
    if dc.0 >= state.dcs().len() {
        return Err(ActionError::UnknownDc(dc));
    }
    let rec = state.live().get(&tag).ok_or(ActionError::UnknownTag(tag))?;
    let path = state
        .graph()
        .select_min_path(rec.sfc_dc, rec.dest, rec.bw)
        .expect("live request endpoints are valid");
    Ok(score(rec, dc, path.as_ref(), params))
}

/// Highest-priority candidate for `(dc, vtype)`; ties go to the smaller tag.
pub fn select_for_allocation(
    state: &EngineState,
    params: &PriorityParams,
    dc: DcId,
    vtype: VnfKind,
) -> Option<SfcTag> {
    argmax(candidate_set(state, vtype).into_iter().map(|t| {
        let s = priority(state, params, t, dc).expect("candidate is live");
        (t, s.total)
    }))
}

fn argmax(scored: impl Iterator<Item = (SfcTag, f64)>) -> Option<SfcTag> {
    let mut best: Option<(SfcTag, f64)> = None;
    for (tag, total) in scored {
        // Candidates arrive in ascending tag order, so only a strictly larger
        // total displaces the incumbent.
        if best.is_none_or(|(_, b)| total > b) {
            best = Some((tag, total));
        }
    }
    best.map(|(t, _)| t)
}

/// The constrained action interface handed to a policy at each invocation.
pub struct Control<'a> {
    state: &'a mut EngineState,
    params: &'a PriorityParams,
    paths: HashMap<(DcId, DcId, Kbps), Option<PathResult>>,
    applied: Vec<PolicyAction>,
}

impl<'a> Control<'a> {
    pub fn new(state: &'a mut EngineState, params: &'a PriorityParams) -> Control<'a> {
        Control {
            state,
            params,
            paths: HashMap::new(),
            applied: Vec::new(),
        }
    }

    pub fn state(&self) -> &EngineState {
        self.state
    }

    pub fn params(&self) -> &PriorityParams {
        self.params
    }

    pub fn n_dcs(&self) -> usize {
        self.state.dcs().len()
    }

    /// Successfully applied actions so far, in order.
    pub fn applied(&self) -> &[PolicyAction] {
        &self.applied
    }

    pub fn has_pending(&self) -> bool {
        self.state.live().values().any(|r| r.head_pending().is_some())
    }

    pub fn candidates(&self, vtype: VnfKind) -> Vec<SfcTag> {
        candidate_set(self.state, vtype)
    }

    // Bandwidth only changes inside `EngineState::step`, so paths stay valid
    // for the lifetime of a Control.
    fn min_path(&mut self, from: DcId, to: DcId, bw: Kbps) -> Option<&PathResult> {
        let graph = self.state.graph();
        self.paths
            .entry((from, to, bw))
            .or_insert_with(|| {
                graph
                    .select_min_path(from, to, bw)
                    .expect("live request endpoints are valid")
            })
            .as_ref()
    }

    pub fn priority(&mut self, tag: SfcTag, dc: DcId) -> Result<PriorityScore, ActionError> {
        if dc.0 >= self.n_dcs() {
            return Err(ActionError::UnknownDc(dc));
        }
        let (from, to, bw) = {
            let rec = self.state.live().get(&tag).ok_or(ActionError::UnknownTag(tag))?;
            (rec.sfc_dc, rec.dest, rec.bw)
        };
        let path = self.min_path(from, to, bw).cloned();
        let rec = &self.state.live()[&tag];
        Ok(score(rec, dc, path.as_ref(), self.params))
    }

    pub fn select_for_allocation(&mut self, dc: DcId, vtype: VnfKind) -> Option<SfcTag> {
        let cands = self.candidates(vtype);
        let mut scored = Vec::with_capacity(cands.len());
        for t in cands {
            let s = self.priority(t, dc).ok()?;
            scored.push((t, s.total));
        }
        argmax(scored.into_iter())
    }

    /// Allocates a specific request's head on `dc`.
    pub fn allocate_tag(&mut self, tag: SfcTag, dc: DcId) -> Result<Placement, ActionError> {
        let p = self.state.allocate_head(tag, dc)?;
        self.applied.push(PolicyAction::AllocateVnf { vtype: p.vnf, dc });
        Ok(p)
    }

    /// Whether `apply(action)` would succeed, without changing anything.
    pub fn is_feasible(&self, action: PolicyAction) -> bool {
        let dcs = self.state.dcs();
        match action {
            PolicyAction::AllocateVnf { vtype, dc } => {
                let Some(center) = dcs.get(dc.0) else {
                    return false;
                };
                (center.idle_instance(vtype).is_some()
                    || center.can_install(self.state.catalog().vnf(vtype)))
                    && self
                        .state
                        .live()
                        .values()
                        .any(|r| r.head_pending() == Some(vtype))
            }
            PolicyAction::UninstallVnf { vtype, dc } => dcs
                .get(dc.0)
                .is_some_and(|c| c.longest_idle_instance(vtype).is_some()),
            PolicyAction::IdleWait => true,
        }
    }

    pub fn apply(&mut self, action: PolicyAction) -> Result<Outcome, ActionError> {
        match action {
            PolicyAction::AllocateVnf { vtype, dc } => {
                if dc.0 >= self.n_dcs() {
                    return Err(ActionError::UnknownDc(dc));
                }
                let tag = self
                    .select_for_allocation(dc, vtype)
                    .ok_or(ActionError::NoCandidate(vtype))?;
                self.allocate_tag(tag, dc).map(Outcome::Allocated)
            }
            PolicyAction::UninstallVnf { vtype, dc } => {
                self.state.uninstall_idle(vtype, dc)?;
                self.applied.push(action);
                Ok(Outcome::Uninstalled { vtype, dc })
            }
            PolicyAction::IdleWait => {
                self.applied.push(action);
                Ok(Outcome::Waited)
            }
        }
    }
}

pub trait Policy {
    fn name(&self) -> &str;

    /// Called every `t_model` steps before the engine steps.
    fn decide(&mut self, ctl: &mut Control<'_>);

    /// Called after every engine step with what happened in it.
    fn observe(&mut self, _report: &StepReport, _state: &EngineState) {}

    fn episode_end(&mut self, _state: &EngineState) {}
}

/// Greedy sweep over DCs in ascending id and VNF types in catalog order. At
/// most one allocation is made per `(dc, type)` pair per invocation, chosen
/// by priority points; nothing is ever uninstalled explicitly.
#[derive(Debug, Clone, Copy, Default)]
pub struct HeuristicPolicy;

/// Runs one heuristic sweep and returns the actions it applied.
pub fn heuristic_policy(ctl: &mut Control<'_>) -> Vec<PolicyAction> {
    let start = ctl.applied().len();
    for d in 0..ctl.n_dcs() {
        let dc = DcId(d);
        for vtype in VnfKind::ALL {
            // Allocation fails only when the DC cannot fit another instance.
            let _ = ctl.apply(PolicyAction::AllocateVnf { vtype, dc });
        }
    }
    if ctl.applied().len() == start {
        ctl.apply(PolicyAction::IdleWait).expect("idle-wait always applies");
    }
    ctl.applied()[start..].to_vec()
}

impl Policy for HeuristicPolicy {
    fn name(&self) -> &str {
        "heuristic"
    }

    fn decide(&mut self, ctl: &mut Control<'_>) {
        heuristic_policy(ctl);
    }
}

/// Applies one uniformly drawn action per invocation.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> RandomPolicy {
        RandomPolicy {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Policy for RandomPolicy {
    fn name(&self) -> &str {
        "random"
    }

    fn decide(&mut self, ctl: &mut Control<'_>) {
        let n = ctl.n_dcs();
        let idx = self.rng.gen_range(0..12 * n + 1);
        let action = decode_action(idx, n).expect("index in range");
        if ctl.apply(action).is_err() {
            ctl.apply(PolicyAction::IdleWait).expect("idle-wait always applies");
        }
    }
}

/// Size of the flat action space for `n_dcs` datacenters.
pub fn action_count(n_dcs: usize) -> usize {
    2 * VnfKind::COUNT * n_dcs + 1
}

/// Flat index layout: allocations `vtype·N + dc`, then uninstalls
/// `6N + vtype·N + dc`, then idle-wait at `12N`.
pub fn encode_action(action: PolicyAction, n_dcs: usize) -> usize {
    let block = VnfKind::COUNT * n_dcs;
    match action {
        PolicyAction::AllocateVnf { vtype, dc } => vtype.index() * n_dcs + dc.0,
        PolicyAction::UninstallVnf { vtype, dc } => block + vtype.index() * n_dcs + dc.0,
        PolicyAction::IdleWait => 2 * block,
    }
}

pub fn decode_action(index: usize, n_dcs: usize) -> Option<PolicyAction> {
    let block = VnfKind::COUNT * n_dcs;
    if index == 2 * block {
        return Some(PolicyAction::IdleWait);
    }
    if index > 2 * block {
        return None;
    }
    let (alloc, i) = if index < block {
        (true, index)
    } else {
        (false, index - block)
    };
    let vtype = VnfKind::ALL[i / n_dcs];
    let dc = DcId(i % n_dcs);
    Some(if alloc {
        PolicyAction::AllocateVnf { vtype, dc }
    } else {
        PolicyAction::UninstallVnf { vtype, dc }
    })
}
