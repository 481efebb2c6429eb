//! Seeded generation of SFC request waves and the live per-request record.

use std::collections::VecDeque;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{Bandwidth, Catalog, SfcKind, VnfKind};
use crate::datacenter::FuncId;
use crate::topology::{DcId, Kbps, PathResult};

/// Default spacing between generation waves, in steps (25 ms).
pub const DEFAULT_WAVE_SPACING: u64 = 2500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SfcTag(pub u64);

impl fmt::Display for SfcTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Allocation {
    pub dc: DcId,
    pub func: FuncId,
    /// Steps of processing done so far.
    pub elapsed: u64,
}

/// One VNF of a live chain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VnfState {
    pub kind: VnfKind,
    /// Required processing steps.
    pub t_req: u64,
    pub alloc: Option<Allocation>,
}

impl VnfState {
    /// Processing counter with `-1` meaning "not yet allocated".
    pub fn t_vcurr(&self) -> i64 {
        self.alloc.map_or(-1, |a| a.elapsed as i64)
    }
}

/// A transmission in progress that holds bandwidth on `path`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InFlightTx {
    pub path: PathResult,
    pub remain: u64,
}

/// Live state of one request while its chain is being processed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SfcRecord {
    pub tag: SfcTag,
    pub kind: SfcKind,
    pub src: DcId,
    pub dest: DcId,
    pub bw: Kbps,
    pub packet_len_mb: f64,
    pub deadline_steps: u64,
    /// Steps since injection.
    pub t_ccurr: u64,
    /// Where the request's data currently sits.
    pub sfc_dc: DcId,
    pub chain: VecDeque<VnfState>,
    pub tx: Option<InFlightTx>,
    pub injected_at: u64,
}

impl SfcRecord {
    pub fn head(&self) -> Option<&VnfState> {
        self.chain.front()
    }

    /// The head awaits an allocation and nothing is in flight.
    pub fn head_pending(&self) -> Option<VnfKind> {
        self.chain
            .front()
            .filter(|v| v.alloc.is_none())
            .map(|v| v.kind)
    }

    pub fn remaining_steps(&self) -> i64 {
        self.deadline_steps as i64 - self.t_ccurr as i64
    }
}

/// A request before it enters the engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestSpec {
    pub kind: SfcKind,
    pub src: DcId,
    pub dest: DcId,
    pub bw: Kbps,
}

impl RequestSpec {
    pub fn into_record(self, catalog: &Catalog, tag: SfcTag, step: u64) -> SfcRecord {
        let sfc = catalog.sfc(self.kind);
        SfcRecord {
            tag,
            kind: self.kind,
            src: self.src,
            dest: self.dest,
            bw: self.bw,
            packet_len_mb: sfc.packet_len_for(self.bw.mbps()),
            deadline_steps: sfc.deadline_steps(),
            t_ccurr: 0,
            sfc_dc: self.src,
            chain: sfc
                .chain
                .iter()
                .map(|&k| VnfState {
                    kind: k,
                    t_req: catalog.vnf(k).proc_steps,
                    alloc: None,
                })
                .collect(),
            tx: None,
            injected_at: step,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenOptions {
    /// Permit `src == dest`.
    #[serde(default)]
    pub allow_loopback: bool,
    /// Restrict generation to these types (all when `None`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enabled: Option<Vec<SfcKind>>,
}

impl GenOptions {
    fn enabled(&self, kind: SfcKind) -> bool {
        self.enabled.as_ref().is_none_or(|e| e.contains(&kind))
    }
}

/// Generates one wave. The result depends only on `(catalog, n_dcs, seed,
/// wave_index, opts)`; tags are assigned later by the engine.
pub fn generate_wave(
    catalog: &Catalog,
    n_dcs: usize,
    seed: u64,
    wave_index: u64,
    opts: &GenOptions,
) -> Vec<RequestSpec> {
    assert!(n_dcs >= 1, "need at least one datacenter");
    assert!(
        n_dcs >= 2 || opts.allow_loopback,
        "distinct endpoints need at least two datacenters"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(wave_index + 1);

    let mut out = Vec::new();
    for sfc in catalog.sfcs() {
        if !opts.enabled(sfc.kind) {
            continue;
        }
        let count = rng.gen_range(sfc.bundle.lo()..=sfc.bundle.hi());
        for _ in 0..count {
            let src = rng.gen_range(0..n_dcs);
            let dest = if opts.allow_loopback {
                rng.gen_range(0..n_dcs)
            } else {
                let d = rng.gen_range(0..n_dcs - 1);
                if d >= src {
                    d + 1
                } else {
                    d
                }
            };
            let bw = match sfc.bandwidth {
                Bandwidth::Fixed(v) => Kbps::from_mbps(v),
                Bandwidth::Uniform([lo, hi]) => {
                    Kbps(rng.gen_range(Kbps::from_mbps(lo).0..=Kbps::from_mbps(hi).0))
                }
            };
            out.push(RequestSpec {
                kind: sfc.kind,
                src: DcId(src),
                dest: DcId(dest),
                bw,
            });
        }
    }
    out
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WaveError {
    #[error("duplicate wave time {0}")]
    Duplicate(u64),
    #[error("wave times must be sorted ascending ({0} after {1})")]
    Unsorted(u64, u64),
}

/// Steps at which a fresh wave is injected.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<u64>", into = "Vec<u64>")]
pub struct WavePlan {
    times: Vec<u64>,
}

impl WavePlan {
    pub fn new(times: Vec<u64>) -> Result<WavePlan, WaveError> {
        for w in times.windows(2) {
            if w[0] == w[1] {
                return Err(WaveError::Duplicate(w[0]));
            }
            if w[1] < w[0] {
                return Err(WaveError::Unsorted(w[1], w[0]));
            }
        }
        Ok(WavePlan { times })
    }

    /// `count` waves spaced `spacing` steps apart, starting at 0.
    pub fn evenly_spaced(count: usize, spacing: u64) -> WavePlan {
        WavePlan {
            times: (0..count as u64).map(|i| i * spacing).collect(),
        }
    }

    pub fn times(&self) -> &[u64] {
        &self.times
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<u64> {
        self.times.last().copied()
    }
}

impl TryFrom<Vec<u64>> for WavePlan {
    type Error = WaveError;

    fn try_from(v: Vec<u64>) -> Result<Self, Self::Error> {
        WavePlan::new(v)
    }
}

impl From<WavePlan> for Vec<u64> {
    fn from(p: WavePlan) -> Self {
        p.times
    }
}

/// Same as [`WavePlan::new`].
pub fn schedule_waves(times: Vec<u64>) -> Result<WavePlan, WaveError> {
    WavePlan::new(times)
}
