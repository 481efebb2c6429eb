//! Independent oracles shared by the integration tests: an exhaustive path
//! enumerator and a straight-line reference simulator for small scenarios.
//!
//! Nothing here calls engine, topology search or policy code; only plain
//! data types are shared so traces can be compared record by record.

#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sfcsim::catalog::{CatalogOverrides, SfcOverride, VnfOverride};
use sfcsim::request_gen::RequestSpec;
use sfcsim::scenario::ScheduledRequest;
use sfcsim::topology::Node;
use sfcsim::{
    default_catalog, DataCenter, DcId, DqnConfig, DropReason, EngineParams, Kbps, NetworkGraph,
    PolicyKind, PriorityParams, Scenario, SfcKind, SfcTag, TraceEvent, TraceRecord, VnfKind,
    WavePlan,
};
use sfcsim::datacenter::FuncId;

// ---------------------------------------------------------------------------
// Path oracle

/// Undirected edge list with per-edge residual: `(a, b, residual_kbps, length_km)`.
pub type Edges = Vec<(usize, usize, u64, f64)>;

/// Every simple path from `src` to `dest` over edges with residual ≥ `req`,
/// with its length summed hop by hop from `src`.
pub fn all_simple_paths(n: usize, edges: &Edges, src: usize, dest: usize, req: u64) -> Vec<(Vec<usize>, f64)> {
    let mut out = Vec::new();
    let mut stack = vec![src];
    let mut seen = vec![false; n];
    seen[src] = true;
    walk(n, edges, dest, req, &mut stack, &mut seen, 0.0, &mut out);
    out
}

#[allow(clippy::too_many_arguments)]
fn walk(
    n: usize,
    edges: &Edges,
    dest: usize,
    req: u64,
    stack: &mut Vec<usize>,
    seen: &mut Vec<bool>,
    len: f64,
    out: &mut Vec<(Vec<usize>, f64)>,
) {
    let at = *stack.last().unwrap();
    if at == dest {
        out.push((stack.clone(), len));
        return;
    }
    for &(a, b, residual, l) in edges {
        let next = if a == at {
            b
        } else if b == at {
            a
        } else {
            continue;
        };
        if seen[next] || residual < req {
            continue;
        }
        seen[next] = true;
        stack.push(next);
        walk(n, edges, dest, req, stack, seen, len + l, out);
        stack.pop();
        seen[next] = false;
    }
}

/// Minimum-length feasible path; ties within 1e-9 km go to the smallest hop
/// sequence in lexicographic order.
pub fn oracle_min_path(n: usize, edges: &Edges, src: usize, dest: usize, req: u64) -> Option<(Vec<usize>, f64)> {
    if src == dest {
        return Some((vec![src], 0.0));
    }
    let paths = all_simple_paths(n, edges, src, dest, req);
    let best = paths.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    paths
        .into_iter()
        .filter(|p| p.1 <= best + 1e-9)
        .min_by(|x, y| x.0.cmp(&y.0))
}

// ---------------------------------------------------------------------------
// Micro scenarios

#[derive(Debug, Clone)]
pub struct MicroVnf {
    pub storage: u64,
    pub vcpu: u64,
    pub ram: u64,
    pub proc_steps: u64,
}

#[derive(Debug, Clone)]
pub struct MicroSfc {
    pub chain: Vec<VnfKind>,
    pub deadline: u64,
    pub packet_mb: f64,
}

#[derive(Debug, Clone)]
pub struct MicroReq {
    pub at: u64,
    pub kind: SfcKind,
    pub src: usize,
    pub dest: usize,
    pub bw_kbps: u64,
}

#[derive(Debug, Clone)]
pub struct Micro {
    pub coords: Vec<(f64, f64)>,
    /// `(a, b, capacity_kbps, length_km)`.
    pub edges: Edges,
    pub dc_storage: Vec<u64>,
    pub dc_compute: Vec<u64>,
    pub vnfs: Vec<MicroVnf>,
    pub sfcs: Vec<MicroSfc>,
    pub requests: Vec<MicroReq>,
    pub t_thresh: u64,
    pub t_model: u64,
    pub propagation: bool,
    pub fiber: f64,
    pub weights: [f64; 4],
    pub urgency_fraction: f64,
}

/// A random scenario with ≤ 3 DCs, ≤ 2 requests and chains of ≤ 3 VNFs.
/// Capacities are small enough that installs, paths and deadlines all fail
/// some of the time.
pub fn random_micro(seed: u64) -> Micro {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=3);
    let coords: Vec<(f64, f64)> = (0..n)
        .map(|_| (rng.gen_range(0.0..300.0), rng.gen_range(0.0..300.0)))
        .collect();
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.gen_bool(0.75) {
                let (dx, dy) = (coords[a].0 - coords[b].0, coords[a].1 - coords[b].1);
                let len = if rng.gen_bool(0.3) {
                    rng.gen_range(0..4) as f64 * 50.0
                } else {
                    dx.hypot(dy)
                };
                edges.push((a, b, rng.gen_range(0..=150) * 1000, len));
            }
        }
    }
    let vnfs = (0..VnfKind::COUNT)
        .map(|_| MicroVnf {
            storage: rng.gen_range(1..=15),
            vcpu: rng.gen_range(1..=5),
            ram: rng.gen_range(1..=8),
            proc_steps: rng.gen_range(1..=25),
        })
        .collect();
    let sfcs = (0..SfcKind::COUNT)
        .map(|_| MicroSfc {
            chain: (0..rng.gen_range(1..=3))
                .map(|_| VnfKind::ALL[rng.gen_range(0..VnfKind::COUNT)])
                .collect(),
            deadline: rng.gen_range(10..=250),
            packet_mb: if rng.gen_bool(0.2) {
                0.0
            } else {
                rng.gen_range(1..=300) as f64 / 1000.0
            },
        })
        .collect();
    let requests = (0..rng.gen_range(1..=2))
        .map(|_| MicroReq {
            at: rng.gen_range(0..40),
            kind: SfcKind::ALL[rng.gen_range(0..SfcKind::COUNT)],
            src: rng.gen_range(0..n),
            dest: rng.gen_range(0..n),
            bw_kbps: rng.gen_range(1..=100) * 1000,
        })
        .collect();
    Micro {
        coords,
        edges,
        dc_storage: (0..n).map(|_| rng.gen_range(0..=40)).collect(),
        dc_compute: (0..n).map(|_| rng.gen_range(0..=120)).collect(),
        vnfs,
        sfcs,
        requests,
        t_thresh: rng.gen_range(1..=40),
        t_model: rng.gen_range(1..=3),
        propagation: rng.gen_bool(0.7),
        fiber: 2.0e5,
        weights: [0; 4].map(|_| rng.gen_range(0..=4) as f64 * 0.5),
        urgency_fraction: rng.gen_range(0..=10) as f64 / 10.0,
    }
}

/// The same scenario expressed for the crate's engine.
pub fn micro_scenario(m: &Micro) -> Scenario {
    let mut ov = CatalogOverrides::default();
    for (k, v) in VnfKind::ALL.iter().zip(&m.vnfs) {
        ov.vnf.insert(
            k.name().to_string(),
            VnfOverride {
                vcpu: Some(v.vcpu),
                ram_gb: Some(v.ram),
                storage_gb: Some(v.storage),
                proc_steps: Some(v.proc_steps),
            },
        );
    }
    for (k, s) in SfcKind::ALL.iter().zip(&m.sfcs) {
        ov.sfc.insert(
            k.name().to_string(),
            SfcOverride {
                chain: Some(s.chain.iter().map(|v| v.name().to_string()).collect()),
                bandwidth: None,
                e2e_ms: Some(s.deadline as f64 / 100.0),
                bundle: None,
                packet_len_mb: Some(s.packet_mb),
            },
        );
    }
    let catalog = default_catalog().with_overrides(&ov).expect("valid overrides");
    let nodes = m
        .coords
        .iter()
        .enumerate()
        .map(|(i, &(x, y))| Node {
            id: DcId(i),
            x_km: x,
            y_km: y,
        })
        .collect();
    let edges: Vec<_> = m
        .edges
        .iter()
        .map(|&(a, b, cap, len)| (DcId(a), DcId(b), Kbps(cap), Some(len)))
        .collect();
    let graph = NetworkGraph::new(nodes, &edges, m.fiber).expect("valid graph");
    let dcs = (0..m.coords.len())
        .map(|i| DataCenter::new(DcId(i), m.dc_storage[i], m.dc_compute[i]))
        .collect();
    Scenario {
        name: "micro".into(),
        catalog,
        graph,
        dcs,
        waves: WavePlan::new(Vec::new()).unwrap(),
        gen: Default::default(),
        manual: m
            .requests
            .iter()
            .map(|r| ScheduledRequest {
                at_step: r.at,
                spec: RequestSpec {
                    kind: r.kind,
                    src: DcId(r.src),
                    dest: DcId(r.dest),
                    bw: Kbps(r.bw_kbps),
                },
            })
            .collect(),
        engine: EngineParams {
            t_thresh: m.t_thresh,
            propagation: m.propagation,
        },
        priority: PriorityParams {
            weights: m.weights,
            urgency_fraction: m.urgency_fraction,
        },
        dqn: DqnConfig::default(),
        policy: PolicyKind::Heuristic,
        seed: 0,
        t_model: m.t_model,
        sample_period: 1500,
        max_steps: 100_000,
        config_hash: String::new(),
    }
}

// ---------------------------------------------------------------------------
// Reference simulator

struct Inst {
    kind: usize,
    fid: u64,
    busy: bool,
    idle_for: u64,
}

struct Dc {
    storage: u64,
    compute: u64,
    insts: Vec<Inst>,
    next_fid: u64,
}

struct Vnf {
    kind: usize,
    t_req: u64,
    /// `(dc, fid, elapsed)`.
    alloc: Option<(usize, u64, u64)>,
}

struct Req {
    tag: u64,
    kind: usize,
    src: usize,
    dest: usize,
    bw: u64,
    at: u64,
    age: u64,
    pos: usize,
    chain: Vec<Vnf>,
    /// `(path, steps left)`.
    tx: Option<(Vec<usize>, u64)>,
}

struct Final {
    tag: u64,
    kind: usize,
    from: usize,
    dest: usize,
    bw: u64,
    at: u64,
    path: Option<Vec<usize>>,
    left: u64,
    touched: u64,
}

struct Ref<'a> {
    m: &'a Micro,
    step: u64,
    residual: Vec<u64>,
    dcs: Vec<Dc>,
    live: Vec<Req>,
    finals: Vec<Final>,
    out: Vec<TraceRecord>,
}

fn vnf_kind(i: usize) -> VnfKind {
    VnfKind::ALL[i]
}

fn up(x: f64) -> u64 {
    if x <= 0.0 {
        0
    } else {
        (x - 1e-9).ceil() as u64
    }
}

impl<'a> Ref<'a> {
    fn emit(&mut self, event: TraceEvent) {
        self.out.push(TraceRecord { step: self.step, event });
    }

    fn edges_now(&self) -> Edges {
        self.m
            .edges
            .iter()
            .zip(&self.residual)
            .map(|(&(a, b, _, l), &r)| (a, b, r, l))
            .collect()
    }

    fn path(&self, from: usize, to: usize, bw: u64) -> Option<(Vec<usize>, f64)> {
        oracle_min_path(self.m.coords.len(), &self.edges_now(), from, to, bw)
    }

    fn edge_index(&self, a: usize, b: usize) -> usize {
        self.m
            .edges
            .iter()
            .position(|&(x, y, _, _)| (x == a && y == b) || (x == b && y == a))
            .unwrap()
    }

    fn add_bw(&mut self, path: &[usize], bw: u64, reserve: bool) {
        for w in path.windows(2) {
            let i = self.edge_index(w[0], w[1]);
            if reserve {
                self.residual[i] -= bw;
            } else {
                self.residual[i] += bw;
                assert!(self.residual[i] <= self.m.edges[i].2);
            }
        }
    }

    fn tx_len(&self, packet_mb: f64, bw: u64, length: f64) -> u64 {
        let mut t = up(100.0 * packet_mb / (bw as f64 / 1000.0));
        if self.m.propagation {
            t += up(length * 100_000.0 / self.m.fiber);
        }
        t
    }

    fn set_idle(&mut self, dc: usize, fid: u64) {
        let inst = self.dcs[dc].insts.iter_mut().find(|i| i.fid == fid).unwrap();
        inst.busy = false;
        inst.idle_for = 0;
    }

    fn heuristic(&mut self) {
        let n = self.m.coords.len();
        for d in 0..n {
            for v in 0..VnfKind::COUNT {
                let mut best: Option<(usize, f64)> = None;
                for (i, r) in self.live.iter().enumerate() {
                    let pending = r.chain.first().is_some_and(|h| h.alloc.is_none() && h.kind == v);
                    if !pending {
                        continue;
                    }
                    let deadline = self.m.sfcs[r.kind].deadline;
                    let rem = deadline as i64 - r.age as i64;
                    let p1 = (1.0 - rem as f64 / deadline as f64).clamp(0.0, 1.0);
                    let on_path = self
                        .path(r.pos, r.dest, r.bw)
                        .is_some_and(|(hops, _)| hops.contains(&d));
                    let p2 = if d == r.src {
                        2.0
                    } else if on_path {
                        1.0
                    } else {
                        0.0
                    };
                    let p3 = if r.chain.iter().any(|c| c.alloc.is_some_and(|a| a.0 == d)) {
                        1.0
                    } else {
                        0.0
                    };
                    let urgency = (self.m.urgency_fraction * deadline as f64).round() as i64;
                    let p4 = if rem < urgency { 1.0 } else { 0.0 };
                    let w = self.m.weights;
                    let total = w[0] * p1 + w[1] * p2 + w[2] * p3 + w[3] * p4;
                    if best.is_none_or(|b| total > b.1) {
                        best = Some((i, total));
                    }
                }
                let Some((i, _)) = best else { continue };
                let spec = &self.m.vnfs[v];
                let idle = self.dcs[d]
                    .insts
                    .iter()
                    .filter(|x| x.kind == v && !x.busy)
                    .map(|x| x.fid)
                    .min();
                let fid = match idle {
                    Some(f) => f,
                    None => {
                        let need_c = spec.vcpu * spec.ram;
                        let dc = &mut self.dcs[d];
                        if dc.storage < spec.storage || dc.compute < need_c {
                            continue;
                        }
                        dc.storage -= spec.storage;
                        dc.compute -= need_c;
                        let f = dc.next_fid;
                        dc.next_fid += 1;
                        dc.insts.push(Inst {
                            kind: v,
                            fid: f,
                            busy: false,
                            idle_for: 0,
                        });
                        self.emit(TraceEvent::Install {
                            dc: DcId(d),
                            vnf: vnf_kind(v),
                            func: FuncId(f),
                        });
                        f
                    }
                };
                let inst = self.dcs[d].insts.iter_mut().find(|x| x.fid == fid).unwrap();
                inst.busy = true;
                let tag = self.live[i].tag;
                self.live[i].chain[0].alloc = Some((d, fid, 0));
                self.emit(TraceEvent::Allocate {
                    tag: SfcTag(tag),
                    vnf: vnf_kind(v),
                    dc: DcId(d),
                    func: FuncId(fid),
                });
            }
        }
    }

    fn finish(&mut self, f: &Final) {
        let e2e = self.step - f.at + 1;
        let kind = SfcKind::ALL[f.kind];
        if e2e <= self.m.sfcs[f.kind].deadline {
            self.emit(TraceEvent::Complete {
                tag: SfcTag(f.tag),
                sfc: kind,
                e2e_steps: e2e,
            });
        } else {
            self.emit(TraceEvent::Drop {
                tag: SfcTag(f.tag),
                sfc: kind,
                pending: 0,
                reason: DropReason::LateDelivery,
            });
        }
    }

    /// Routes a final TX. Returns true when it is delivered at once.
    fn route_final(&mut self, f: &mut Final) -> bool {
        f.touched = self.step;
        let Some((hops, len)) = self.path(f.from, f.dest, f.bw) else {
            self.emit(TraceEvent::NoPath {
                tag: SfcTag(f.tag),
                from: DcId(f.from),
                to: DcId(f.dest),
            });
            return false;
        };
        let steps = self.tx_len(self.m.sfcs[f.kind].packet_mb, f.bw, len);
        self.emit(TraceEvent::FinalTxStart {
            tag: SfcTag(f.tag),
            path: hops.iter().map(|&h| DcId(h)).collect(),
            steps,
        });
        if steps == 0 {
            return true;
        }
        self.add_bw(&hops, f.bw, true);
        f.path = Some(hops);
        f.left = steps;
        false
    }

    fn advance(&mut self) {
        // Deadline drops.
        let mut i = 0;
        while i < self.live.len() {
            let r = &self.live[i];
            if r.age > self.m.sfcs[r.kind].deadline && !r.chain.is_empty() {
                let r = self.live.remove(i);
                for c in &r.chain {
                    if let Some((d, fid, _)) = c.alloc {
                        self.set_idle(d, fid);
                        self.emit(TraceEvent::ForceRevoke {
                            tag: SfcTag(r.tag),
                            vnf: vnf_kind(c.kind),
                            dc: DcId(d),
                            func: FuncId(fid),
                        });
                    }
                }
                if let Some((p, _)) = &r.tx {
                    self.add_bw(p, r.bw, false);
                }
                self.emit(TraceEvent::Drop {
                    tag: SfcTag(r.tag),
                    sfc: SfcKind::ALL[r.kind],
                    pending: r.chain.len(),
                    reason: DropReason::Deadline,
                });
            } else {
                i += 1;
            }
        }

        // Heads.
        for i in 0..self.live.len() {
            let tag = SfcTag(self.live[i].tag);
            if let Some((path, left)) = self.live[i].tx.take() {
                if left == 1 {
                    let bw = self.live[i].bw;
                    self.add_bw(&path, bw, false);
                    self.emit(TraceEvent::TxEnd { tag });
                } else {
                    self.live[i].tx = Some((path, left - 1));
                }
            } else if let Some((d, fid, elapsed)) = self.live[i].chain.first().and_then(|h| h.alloc) {
                let (pos, bw, kind) = (self.live[i].pos, self.live[i].bw, self.live[i].kind);
                if pos != d {
                    match self.path(pos, d, bw) {
                        Some((hops, len)) => {
                            let steps = self.tx_len(self.m.sfcs[kind].packet_mb, bw, len);
                            self.emit(TraceEvent::TxStart {
                                tag,
                                path: hops.iter().map(|&h| DcId(h)).collect(),
                                steps,
                            });
                            if steps > 0 {
                                self.add_bw(&hops, bw, true);
                                self.live[i].tx = Some((hops, steps));
                            }
                            self.live[i].pos = d;
                        }
                        None => self.emit(TraceEvent::NoPath {
                            tag,
                            from: DcId(pos),
                            to: DcId(d),
                        }),
                    }
                } else if elapsed + 1 < self.live[i].chain[0].t_req {
                    self.live[i].chain[0].alloc = Some((d, fid, elapsed + 1));
                } else {
                    let v = self.live[i].chain.remove(0).kind;
                    self.set_idle(d, fid);
                    self.emit(TraceEvent::VnfDone {
                        tag,
                        vnf: vnf_kind(v),
                        dc: DcId(d),
                        func: FuncId(fid),
                    });
                }
            }
            self.live[i].age += 1;
        }

        // Finished chains start their final TX.
        let mut i = 0;
        while i < self.live.len() {
            if !self.live[i].chain.is_empty() {
                i += 1;
                continue;
            }
            let r = self.live.remove(i);
            let mut f = Final {
                tag: r.tag,
                kind: r.kind,
                from: r.pos,
                dest: r.dest,
                bw: r.bw,
                at: r.at,
                path: None,
                left: 0,
                touched: self.step,
            };
            if self.route_final(&mut f) {
                self.finish(&f);
            } else {
                let at = self.finals.partition_point(|x| x.tag < f.tag);
                self.finals.insert(at, f);
            }
        }

        // Final TX countdown.
        let mut i = 0;
        while i < self.finals.len() {
            if self.finals[i].touched == self.step {
                i += 1;
                continue;
            }
            let mut f = self.finals.remove(i);
            if f.path.is_none() && self.step - f.at + 1 > self.m.sfcs[f.kind].deadline {
                self.emit(TraceEvent::Drop {
                    tag: SfcTag(f.tag),
                    sfc: SfcKind::ALL[f.kind],
                    pending: 0,
                    reason: DropReason::Unroutable,
                });
                continue;
            }
            let done = match f.path.clone() {
                None => self.route_final(&mut f),
                Some(p) => {
                    f.left -= 1;
                    if f.left == 0 {
                        self.add_bw(&p, f.bw, false);
                        true
                    } else {
                        false
                    }
                }
            };
            if done {
                self.finish(&f);
            } else {
                self.finals.insert(i, f);
                i += 1;
            }
        }

        // Idle clocks.
        for d in 0..self.dcs.len() {
            for v in 0..VnfKind::COUNT {
                let mut fids: Vec<u64> = self.dcs[d]
                    .insts
                    .iter()
                    .filter(|x| x.kind == v && !x.busy)
                    .map(|x| x.fid)
                    .collect();
                fids.sort_unstable();
                for fid in fids {
                    let spec = self.m.vnfs[v].clone();
                    let dc = &mut self.dcs[d];
                    let inst = dc.insts.iter_mut().find(|x| x.fid == fid).unwrap();
                    inst.idle_for += 1;
                    if inst.idle_for >= self.m.t_thresh {
                        dc.insts.retain(|x| x.fid != fid);
                        dc.storage += spec.storage;
                        dc.compute += spec.vcpu * spec.ram;
                        self.emit(TraceEvent::Reap {
                            dc: DcId(d),
                            vnf: vnf_kind(v),
                            func: FuncId(fid),
                        });
                    }
                }
            }
        }
        self.step += 1;
    }
}

/// Outcome of a reference run.
pub struct RefRun {
    pub trace: Vec<TraceRecord>,
    pub steps: u64,
    /// tag → e2e steps for on-time deliveries.
    pub completed: BTreeMap<u64, u64>,
}

/// Runs `m` under the priority-point heuristic, written out directly.
pub fn reference_run(m: &Micro) -> RefRun {
    let n = m.coords.len();
    let mut sim = Ref {
        m,
        step: 0,
        residual: m.edges.iter().map(|e| e.2).collect(),
        dcs: (0..n)
            .map(|i| Dc {
                storage: m.dc_storage[i],
                compute: m.dc_compute[i],
                insts: Vec::new(),
                next_fid: 1,
            })
            .collect(),
        live: Vec::new(),
        finals: Vec::new(),
        out: Vec::new(),
    };
    let mut reqs = m.requests.clone();
    reqs.sort_by_key(|r| r.at);
    let mut next = 0;
    let mut tag = 1;
    loop {
        while next < reqs.len() && reqs[next].at == sim.step {
            let r = &reqs[next];
            sim.emit(TraceEvent::Inject {
                tag: SfcTag(tag),
                sfc: r.kind,
                src: DcId(r.src),
                dest: DcId(r.dest),
                bw_kbps: r.bw_kbps,
            });
            let kind = r.kind.index();
            sim.live.push(Req {
                tag,
                kind,
                src: r.src,
                dest: r.dest,
                bw: r.bw_kbps,
                at: sim.step,
                age: 0,
                pos: r.src,
                chain: m.sfcs[kind]
                    .chain
                    .iter()
                    .map(|&v| Vnf {
                        kind: v.index(),
                        t_req: m.vnfs[v.index()].proc_steps,
                        alloc: None,
                    })
                    .collect(),
                tx: None,
            });
            tag += 1;
            next += 1;
        }
        let installed: usize = sim.dcs.iter().map(|d| d.insts.len()).sum();
        if next == reqs.len() && sim.live.is_empty() && sim.finals.is_empty() && installed == 0 {
            break;
        }
        assert!(sim.step < 100_000, "reference run did not terminate");
        if sim.step % m.t_model == 0 {
            sim.heuristic();
        }
        sim.advance();
    }
    let completed = sim
        .out
        .iter()
        .filter_map(|r| match r.event {
            TraceEvent::Complete { tag, e2e_steps, .. } => Some((tag.0, e2e_steps)),
            _ => None,
        })
        .collect();
    RefRun {
        steps: sim.step,
        trace: sim.out,
        completed,
    }
}
