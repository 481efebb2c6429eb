//! Per-step simulation core.
//!
//! Each call to [`EngineState::step`] runs five passes in a fixed order:
//!
//! 1. **drop** – requests past their deadline with VNFs still pending are
//!    removed; their allocated instances are force-revoked and any in-flight
//!    bandwidth is released.
//! 2. **head** – for every live request only the first VNF of the chain is
//!    examined: an in-flight TX counts down, otherwise an allocated head either
//!    starts a TX towards its DC, advances its processing, or finishes and is
//!    revoked.
//! 3. **completion** – requests with an empty chain leave the live set and
//!    start the final packet TX to their destination.
//! 4. **final TX** – final transmissions count down; on arrival the request is
//!    accepted if its end-to-end time is within the deadline.
//! 5. **idle tick** – idle instances age and are reaped at the threshold.
//!
//! Policies act between steps through [`crate::policy::Control`].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{Catalog, SfcKind, VnfKind};
use crate::datacenter::{DataCenter, DcError, FuncId, FuncStatus};
use crate::metrics::MetricsBundle;
use crate::policy::{Control, Policy};
use crate::request_gen::{generate_wave, Allocation, InFlightTx, RequestSpec, SfcRecord, SfcTag};
use crate::scenario::Scenario;
use crate::topology::{ceil_steps, DcId, Kbps, NetworkGraph, PathResult, TopologyError};
use crate::trace::{DropReason, TraceEvent, TraceRecord};
use crate::STEPS_PER_MS;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("invariant violated at step {step}: {what}")]
    Invariant { step: u64, what: String },
    #[error("step limit of {0} exceeded")]
    StepLimit(u64),
    #[error(transparent)]
    Dc(#[from] DcError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

/// Errors returned to a policy for an action that cannot be carried out.
/// These never change engine state.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ActionError {
    #[error("unknown request {0}")]
    UnknownTag(SfcTag),
    #[error("request {0} has no head VNF awaiting allocation")]
    NotPending(SfcTag),
    #[error("no pending {0} VNF to allocate")]
    NoCandidate(VnfKind),
    #[error("unknown datacenter {0}")]
    UnknownDc(DcId),
    #[error(transparent)]
    Install(DcError),
    #[error("no idle {kind} instance on DC {dc}")]
    NoIdleInstance { kind: VnfKind, dc: DcId },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineParams {
    /// Idle steps after which an instance is uninstalled.
    pub t_thresh: u64,
    /// Add fiber propagation delay to every TX.
    pub propagation: bool,
}

impl Default for EngineParams {
    fn default() -> Self {
        EngineParams {
            t_thresh: crate::datacenter::DEFAULT_T_THRESH,
            propagation: true,
        }
    }
}

/// A request in its final packet transmission towards the destination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalTx {
    pub tag: SfcTag,
    pub kind: SfcKind,
    pub from: DcId,
    pub dest: DcId,
    pub bw: Kbps,
    pub packet_len_mb: f64,
    pub deadline_steps: u64,
    pub injected_at: u64,
    /// `None` while waiting for a feasible path.
    pub path: Option<PathResult>,
    pub remain: u64,
    last_touched: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionRecord {
    pub tag: SfcTag,
    pub kind: SfcKind,
    pub step: u64,
    /// Steps from injection to delivery, inclusive.
    pub e2e_steps: u64,
    pub deadline_steps: u64,
}

impl CompletionRecord {
    pub fn e2e_ms(&self) -> f64 {
        self.e2e_steps as f64 / STEPS_PER_MS as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropRecord {
    pub tag: SfcTag,
    pub kind: SfcKind,
    pub step: u64,
    /// VNFs left in the chain (0 for late deliveries).
    pub pending: usize,
    pub reason: DropReason,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepReport {
    pub step: u64,
    pub completed: Vec<CompletionRecord>,
    pub dropped: Vec<DropRecord>,
}

impl StepReport {
    pub fn is_empty(&self) -> bool {
        self.completed.is_empty() && self.dropped.is_empty()
    }
}

/// Result of a successful allocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub tag: SfcTag,
    pub vnf: VnfKind,
    pub dc: DcId,
    pub func: FuncId,
    /// A new instance was installed for this allocation.
    pub installed: bool,
}

/// TX duration in steps: `ceil(100 · packet_len / bw)` plus, if enabled, the
/// path's propagation delay.
pub fn tx_steps(
    packet_len_mb: f64,
    bw: Kbps,
    path: &PathResult,
    graph: &NetworkGraph,
    propagation: bool,
) -> u64 {
    assert!(bw.0 > 0, "tx bandwidth must be positive");
    let tx = ceil_steps(STEPS_PER_MS as f64 * packet_len_mb / bw.mbps());
    let prop = if propagation {
        graph.propagation_steps(path)
    } else {
        0
    };
    tx + prop
}

#[derive(Debug, Clone)]
pub struct EngineState {
    step: u64,
    catalog: Catalog,
    graph: NetworkGraph,
    dcs: Vec<DataCenter>,
    live: BTreeMap<SfcTag, SfcRecord>,
    final_tx: BTreeMap<SfcTag, FinalTx>,
    done: Vec<CompletionRecord>,
    dropped: Vec<DropRecord>,
    next_tag: u64,
    params: EngineParams,
    trace: Option<Vec<TraceRecord>>,
}

impl EngineState {
    pub fn new(
        catalog: Catalog,
        graph: NetworkGraph,
        dcs: Vec<DataCenter>,
        params: EngineParams,
    ) -> EngineState {
        assert_eq!(graph.node_count(), dcs.len(), "one DC per graph node");
        EngineState {
            step: 0,
            catalog,
            graph,
            dcs,
            live: BTreeMap::new(),
            final_tx: BTreeMap::new(),
            done: Vec::new(),
            dropped: Vec::new(),
            next_tag: 1,
            params,
            trace: None,
        }
    }

    pub fn enable_trace(&mut self) {
        self.trace.get_or_insert_with(Vec::new);
    }

    pub fn take_trace(&mut self) -> Option<Vec<TraceRecord>> {
        self.trace.take()
    }

    pub fn trace(&self) -> Option<&[TraceRecord]> {
        self.trace.as_deref()
    }

    pub fn step_index(&self) -> u64 {
        self.step
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn graph(&self) -> &NetworkGraph {
        &self.graph
    }

    pub fn dcs(&self) -> &[DataCenter] {
        &self.dcs
    }

    pub fn dc(&self, id: DcId) -> Option<&DataCenter> {
        self.dcs.get(id.0)
    }

    pub fn live(&self) -> &BTreeMap<SfcTag, SfcRecord> {
        &self.live
    }

    pub fn final_tx(&self) -> &BTreeMap<SfcTag, FinalTx> {
        &self.final_tx
    }

    pub fn completions(&self) -> &[CompletionRecord] {
        &self.done
    }

    pub fn drops(&self) -> &[DropRecord] {
        &self.dropped
    }

    pub fn params(&self) -> &EngineParams {
        &self.params
    }

    /// No request is live or transmitting.
    pub fn is_quiescent(&self) -> bool {
        self.live.is_empty() && self.final_tx.is_empty()
    }

    pub fn installed_instances(&self) -> usize {
        self.dcs.iter().map(DataCenter::installed_count).sum()
    }

    fn emit(&mut self, event: TraceEvent) {
        if let Some(t) = &mut self.trace {
            t.push(TraceRecord {
                step: self.step,
                event,
            });
        }
    }

    /// Adds a request to the live set and returns its tag.
    pub fn inject(&mut self, spec: RequestSpec) -> SfcTag {
        let tag = SfcTag(self.next_tag);
        self.next_tag += 1;
        self.emit(TraceEvent::Inject {
            tag,
            sfc: spec.kind,
            src: spec.src,
            dest: spec.dest,
            bw_kbps: spec.bw.0,
        });
        let rec = spec.into_record(&self.catalog, tag, self.step);
        self.live.insert(tag, rec);
        tag
    }

    /// Allocates the head VNF of `tag` on `dc`, reusing the lowest-id idle
    /// instance of the matching type or installing a new one.
    pub fn allocate_head(&mut self, tag: SfcTag, dc: DcId) -> Result<Placement, ActionError> {
        if dc.0 >= self.dcs.len() {
            return Err(ActionError::UnknownDc(dc));
        }
        let rec = self.live.get(&tag).ok_or(ActionError::UnknownTag(tag))?;
        let kind = rec.head_pending().ok_or(ActionError::NotPending(tag))?;
        let center = &mut self.dcs[dc.0];
        let (func, installed) = match center.idle_instance(kind) {
            Some(f) => (f, false),
            None => {
                let f = center
                    .install_vnf(self.catalog.vnf(kind))
                    .map_err(ActionError::Install)?;
                (f, true)
            }
        };
        center
            .allocate_vnf(kind, func)
            .expect("idle instance is allocatable");
        let head = self
            .live
            .get_mut(&tag)
            .and_then(|r| r.chain.front_mut())
            .expect("checked above");
        head.alloc = Some(Allocation {
            dc,
            func,
            elapsed: 0,
        });
        if installed {
            self.emit(TraceEvent::Install { dc, vnf: kind, func });
        }
        self.emit(TraceEvent::Allocate {
            tag,
            vnf: kind,
            dc,
            func,
        });
        Ok(Placement {
            tag,
            vnf: kind,
            dc,
            func,
            installed,
        })
    }

    /// Uninstalls the longest-idle instance of `kind` on `dc`.
    pub fn uninstall_idle(&mut self, kind: VnfKind, dc: DcId) -> Result<FuncId, ActionError> {
        let center = self.dcs.get_mut(dc.0).ok_or(ActionError::UnknownDc(dc))?;
        let func = center
            .longest_idle_instance(kind)
            .ok_or(ActionError::NoIdleInstance { kind, dc })?;
        center
            .uninstall_vnf(self.catalog.vnf(kind), func)
            .expect("idle instance is uninstallable");
        self.emit(TraceEvent::Uninstall { dc, vnf: kind, func });
        Ok(func)
    }

    /// Runs one simulation step.
    pub fn step(&mut self) -> Result<StepReport, EngineError> {
        let mut report = StepReport {
            step: self.step,
            ..Default::default()
        };
        self.drop_pass(&mut report)?;
        self.head_pass()?;
        self.completion_pass(&mut report)?;
        self.final_tx_pass(&mut report)?;
        self.idle_pass();
        self.step += 1;
        Ok(report)
    }

    fn drop_pass(&mut self, report: &mut StepReport) -> Result<(), EngineError> {
        let expired: Vec<SfcTag> = self
            .live
            .values()
            .filter(|r| r.t_ccurr > r.deadline_steps && !r.chain.is_empty())
            .map(|r| r.tag)
            .collect();
        for tag in expired {
            let rec = self.live.remove(&tag).expect("listed above");
            for v in &rec.chain {
                if let Some(a) = v.alloc {
                    self.dcs[a.dc.0].force_revoke_vnf(v.kind, a.func)?;
                    self.emit(TraceEvent::ForceRevoke {
                        tag,
                        vnf: v.kind,
                        dc: a.dc,
                        func: a.func,
                    });
                }
            }
            if let Some(tx) = &rec.tx {
                self.graph.release_bw(&tx.path, rec.bw)?;
            }
            let d = DropRecord {
                tag,
                kind: rec.kind,
                step: self.step,
                pending: rec.chain.len(),
                reason: DropReason::Deadline,
            };
            self.emit(TraceEvent::Drop {
                tag,
                sfc: d.kind,
                pending: d.pending,
                reason: d.reason,
            });
            report.dropped.push(d.clone());
            self.dropped.push(d);
        }
        Ok(())
    }

    fn head_pass(&mut self) -> Result<(), EngineError> {
        let mut events = Vec::new();
        let propagation = self.params.propagation;
        for rec in self.live.values_mut() {
            let tag = rec.tag;
            if let Some(tx) = &mut rec.tx {
                tx.remain -= 1;
                if tx.remain == 0 {
                    self.graph.release_bw(&tx.path, rec.bw)?;
                    rec.tx = None;
                    events.push(TraceEvent::TxEnd { tag });
                }
            } else if let Some(head) = rec.chain.front_mut() {
                if let Some(a) = &mut head.alloc {
                    if rec.sfc_dc != a.dc {
                        let found = self.graph.select_min_path(rec.sfc_dc, a.dc, rec.bw)?;
                        match found {
                            Some(path) => {
                                let steps =
                                    tx_steps(rec.packet_len_mb, rec.bw, &path, &self.graph, propagation);
                                events.push(TraceEvent::TxStart {
                                    tag,
                                    path: path.hops.clone(),
                                    steps,
                                });
                                if steps > 0 {
                                    self.graph.reserve_bw(&path, rec.bw)?;
                                    rec.tx = Some(InFlightTx { path, remain: steps });
                                }
                                rec.sfc_dc = a.dc;
                            }
                            None => events.push(TraceEvent::NoPath {
                                tag,
                                from: rec.sfc_dc,
                                to: a.dc,
                            }),
                        }
                    } else if a.elapsed + 1 < head.t_req {
                        a.elapsed += 1;
                    } else {
                        let (kind, a) = (head.kind, *a);
                        self.dcs[a.dc.0].revoke_vnf(kind, a.func)?;
                        rec.chain.pop_front();
                        events.push(TraceEvent::VnfDone {
                            tag,
                            vnf: kind,
                            dc: a.dc,
                            func: a.func,
                        });
                    }
                }
            }
            rec.t_ccurr += 1;
        }
        for e in events {
            self.emit(e);
        }
        Ok(())
    }

    fn completion_pass(&mut self, report: &mut StepReport) -> Result<(), EngineError> {
        let finished: Vec<SfcTag> = self
            .live
            .values()
            .filter(|r| r.chain.is_empty())
            .map(|r| r.tag)
            .collect();
        for tag in finished {
            let rec = self.live.remove(&tag).expect("listed above");
            debug_assert!(rec.tx.is_none());
            let mut ftx = FinalTx {
                tag,
                kind: rec.kind,
                from: rec.sfc_dc,
                dest: rec.dest,
                bw: rec.bw,
                packet_len_mb: rec.packet_len_mb,
                deadline_steps: rec.deadline_steps,
                injected_at: rec.injected_at,
                path: None,
                remain: 0,
                last_touched: self.step,
            };
            if self.start_final_tx(&mut ftx)? {
                self.finish(ftx, report);
            } else {
                self.final_tx.insert(tag, ftx);
            }
        }
        Ok(())
    }

    /// Tries to route and reserve the final TX. Returns `true` when the TX
    /// takes zero steps and the request is delivered immediately.
    fn start_final_tx(&mut self, ftx: &mut FinalTx) -> Result<bool, EngineError> {
        ftx.last_touched = self.step;
        let Some(path) = self.graph.select_min_path(ftx.from, ftx.dest, ftx.bw)? else {
            self.emit(TraceEvent::NoPath {
                tag: ftx.tag,
                from: ftx.from,
                to: ftx.dest,
            });
            return Ok(false);
        };
        let steps = tx_steps(ftx.packet_len_mb, ftx.bw, &path, &self.graph, self.params.propagation);
        self.emit(TraceEvent::FinalTxStart {
            tag: ftx.tag,
            path: path.hops.clone(),
            steps,
        });
        if steps == 0 {
            return Ok(true);
        }
        self.graph.reserve_bw(&path, ftx.bw)?;
        ftx.path = Some(path);
        ftx.remain = steps;
        Ok(false)
    }

    fn final_tx_pass(&mut self, report: &mut StepReport) -> Result<(), EngineError> {
        let tags: Vec<SfcTag> = self.final_tx.keys().copied().collect();
        for tag in tags {
            let mut ftx = self.final_tx.remove(&tag).expect("listed above");
            if ftx.last_touched == self.step {
                self.final_tx.insert(tag, ftx);
                continue;
            }
            let delivered = match &ftx.path {
                None if self.step - ftx.injected_at + 1 > ftx.deadline_steps => {
                    self.drop_unroutable(ftx, report);
                    continue;
                }
                None => self.start_final_tx(&mut ftx)?,
                Some(path) => {
                    ftx.remain -= 1;
                    if ftx.remain == 0 {
                        self.graph.release_bw(path, ftx.bw)?;
                        true
                    } else {
                        false
                    }
                }
            };
            if delivered {
                self.finish(ftx, report);
            } else {
                self.final_tx.insert(tag, ftx);
            }
        }
        Ok(())
    }

    fn drop_unroutable(&mut self, ftx: FinalTx, report: &mut StepReport) {
        let d = DropRecord {
            tag: ftx.tag,
            kind: ftx.kind,
            step: self.step,
            pending: 0,
            reason: DropReason::Unroutable,
        };
        self.emit(TraceEvent::Drop {
            tag: d.tag,
            sfc: d.kind,
            pending: 0,
            reason: d.reason,
        });
        report.dropped.push(d.clone());
        self.dropped.push(d);
    }

    fn finish(&mut self, ftx: FinalTx, report: &mut StepReport) {
        let e2e_steps = self.step - ftx.injected_at + 1;
        if e2e_steps <= ftx.deadline_steps {
            let c = CompletionRecord {
                tag: ftx.tag,
                kind: ftx.kind,
                step: self.step,
                e2e_steps,
                deadline_steps: ftx.deadline_steps,
            };
            self.emit(TraceEvent::Complete {
                tag: c.tag,
                sfc: c.kind,
                e2e_steps,
            });
            report.completed.push(c.clone());
            self.done.push(c);
        } else {
            let d = DropRecord {
                tag: ftx.tag,
                kind: ftx.kind,
                step: self.step,
                pending: 0,
                reason: DropReason::LateDelivery,
            };
            self.emit(TraceEvent::Drop {
                tag: d.tag,
                sfc: d.kind,
                pending: 0,
                reason: d.reason,
            });
            report.dropped.push(d.clone());
            self.dropped.push(d);
        }
    }

    fn idle_pass(&mut self) {
        let t_thresh = self.params.t_thresh;
        let mut reaped = Vec::new();
        for dc in &mut self.dcs {
            for (vnf, func) in dc.tick_idle(&self.catalog, t_thresh) {
                reaped.push(TraceEvent::Reap {
                    dc: dc.id(),
                    vnf,
                    func,
                });
            }
        }
        for e in reaped {
            self.emit(e);
        }
    }

    /// Verifies every cross-structure invariant. Intended for tests and
    /// debugging; cost is linear in the state size.
    pub fn check_invariants(&self) -> Result<(), EngineError> {
        let fail = |what: String| EngineError::Invariant {
            step: self.step,
            what,
        };
        for dc in &self.dcs {
            dc.check_invariants(&self.catalog).map_err(fail)?;
            for (kind, fid, t) in dc.idle_clocks() {
                if self.params.t_thresh > 0 && t >= self.params.t_thresh {
                    return Err(fail(format!("DC {} {kind} {fid} idle for {t}", dc.id())));
                }
            }
        }
        let mut reserved: u64 = 0;
        let mut allocated = 0usize;
        let mut seen = std::collections::BTreeSet::new();
        for rec in self.live.values() {
            if self.final_tx.contains_key(&rec.tag) {
                return Err(fail(format!("{} both live and in final TX", rec.tag)));
            }
            for (i, v) in rec.chain.iter().enumerate() {
                let Some(a) = v.alloc else { continue };
                if i > 0 {
                    return Err(fail(format!("{} has a non-head VNF allocated", rec.tag)));
                }
                if a.elapsed >= v.t_req {
                    return Err(fail(format!("{} head overran its processing time", rec.tag)));
                }
                let status = self.dcs[a.dc.0].status(v.kind, a.func);
                if status != Some(FuncStatus::InUse) {
                    return Err(fail(format!(
                        "{} holds {} {} on DC {} with status {status:?}",
                        rec.tag, v.kind, a.func, a.dc
                    )));
                }
                if !seen.insert((a.dc, v.kind, a.func)) {
                    return Err(fail(format!("instance {} {} shared", v.kind, a.func)));
                }
                allocated += 1;
            }
            if let Some(tx) = &rec.tx {
                if !rec.chain.front().is_some_and(|h| h.alloc.is_some()) {
                    return Err(fail(format!("{} transmitting without an allocated head", rec.tag)));
                }
                reserved += rec.bw.0 * (tx.path.hops.len() as u64 - 1);
            }
        }
        for f in self.final_tx.values() {
            if let Some(p) = &f.path {
                reserved += f.bw.0 * (p.hops.len() as u64 - 1);
            }
        }
        let in_use: usize = self
            .dcs
            .iter()
            .map(|d| VnfKind::ALL.iter().map(|&k| d.in_use_count(k)).sum::<usize>())
            .sum();
        if in_use != allocated {
            return Err(fail(format!("{in_use} instances in use but {allocated} allocated VNFs")));
        }
        for l in self.graph.links() {
            if l.residual > l.capacity {
                return Err(fail(format!("link {}-{} above capacity", l.a, l.b)));
            }
        }
        if reserved != self.graph.reserved_total() {
            return Err(fail(format!(
                "reserved {reserved} kbps-hops but links show {}",
                self.graph.reserved_total()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub trace: bool,
    /// Run [`EngineState::check_invariants`] after every step.
    pub check_invariants: bool,
}

#[derive(Debug, Clone)]
pub struct EpisodeResult {
    pub metrics: MetricsBundle,
    pub completions: Vec<CompletionRecord>,
    pub drops: Vec<DropRecord>,
    pub steps: u64,
    pub trace: Option<Vec<TraceRecord>>,
    /// Engine state after the last step (trace already taken).
    pub final_state: EngineState,
}

/// Builds the initial engine state for `scenario`.
pub fn initial_state(scenario: &Scenario) -> EngineState {
    EngineState::new(
        scenario.catalog.clone(),
        scenario.graph.clone(),
        scenario.dcs.clone(),
        scenario.engine,
    )
}

/// Runs one episode: waves are injected on schedule, the policy is consulted
/// every `t_model` steps, and the run ends once every wave has been injected,
/// every request has been delivered or dropped, and every idle instance has
/// been reaped.
pub fn run_episode(
    scenario: &Scenario,
    policy: &mut dyn Policy,
    opts: RunOptions,
) -> Result<EpisodeResult, EngineError> {
    let mut state = initial_state(scenario);
    if opts.trace {
        state.enable_trace();
    }
    let mut metrics = MetricsBundle::new(state.dcs.len(), scenario.sample_period);
    let waves = scenario.waves.times();
    let mut manual = scenario.manual.clone();
    manual.sort_by_key(|m| m.at_step);
    let (mut next_wave, mut next_manual) = (0usize, 0usize);
    let t_model = scenario.t_model.max(1);

    loop {
        let now = state.step;
        while next_wave < waves.len() && waves[next_wave] == now {
            let wave = generate_wave(
                &state.catalog,
                state.dcs.len(),
                scenario.seed,
                next_wave as u64,
                &scenario.gen,
            );
            for spec in wave {
                metrics.record_generated(spec.kind);
                state.inject(spec);
            }
            next_wave += 1;
        }
        while next_manual < manual.len() && manual[next_manual].at_step == now {
            let spec = manual[next_manual].spec.clone();
            metrics.record_generated(spec.kind);
            state.inject(spec);
            next_manual += 1;
        }
        let all_injected = next_wave == waves.len() && next_manual == manual.len();
        if all_injected && state.is_quiescent() && state.installed_instances() == 0 {
            break;
        }
        if now >= scenario.max_steps {
            return Err(EngineError::StepLimit(scenario.max_steps));
        }
        if now % metrics.sample_period() == 0 {
            metrics.sample_resources(&state);
        }
        if now % t_model == 0 {
            let mut ctl = Control::new(&mut state, &scenario.priority);
            policy.decide(&mut ctl);
        }
        let report = state.step()?;
        for c in &report.completed {
            metrics
                .record_completion(c)
                .map_err(|e| EngineError::Invariant {
                    step: now,
                    what: e.to_string(),
                })?;
        }
        for d in &report.dropped {
            metrics.record_drop(d).map_err(|e| EngineError::Invariant {
                step: now,
                what: e.to_string(),
            })?;
        }
        policy.observe(&report, &state);
        if opts.check_invariants {
            state.check_invariants()?;
        }
    }
    policy.episode_end(&state);
    let trace = state.take_trace();
    Ok(EpisodeResult {
        metrics,
        completions: state.done.clone(),
        drops: state.dropped.clone(),
        steps: state.step,
        trace,
        final_state: state,
    })
}
