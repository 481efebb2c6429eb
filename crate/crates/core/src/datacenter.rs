//! Per-datacenter resource ledger and VNF instance lifecycle.
//!
//! Every instance moves through `install → (Idle ↔ InUse)* → uninstall`.
//! Storage and compute (vCPU × RAM) are the only depletable pools.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{Catalog, VnfKind, VnfType};
use crate::topology::DcId;

pub const DEFAULT_STORAGE_GB: u64 = 2000;
pub const DEFAULT_CPUS: u64 = 64;
pub const DEFAULT_RAM_GB: u64 = 256;
pub const DEFAULT_T_THRESH: u64 = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FuncId(pub u64);

impl fmt::Display for FuncId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FuncStatus {
    InUse,
    Idle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Resource {
    Storage,
    Compute,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DcError {
    #[error("DC {dc}: insufficient {resource:?} to install {kind}")]
    InsufficientResources {
        dc: DcId,
        kind: VnfKind,
        resource: Resource,
    },
    #[error("DC {dc}: no {kind} function with id {fid}")]
    UnknownFunction { dc: DcId, kind: VnfKind, fid: FuncId },
    #[error("DC {dc}: {kind} function {fid} is in use")]
    FunctionInUse { dc: DcId, kind: VnfKind, fid: FuncId },
    #[error("DC {dc}: {kind} function {fid} is already allocated")]
    AlreadyInUse { dc: DcId, kind: VnfKind, fid: FuncId },
    #[error("DC {dc}: {kind} function {fid} is not allocated")]
    NotInUse { dc: DcId, kind: VnfKind, fid: FuncId },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataCenter {
    id: DcId,
    max_storage: u64,
    max_compute: u64,
    cur_storage: u64,
    cur_compute: u64,
    installed: [BTreeMap<FuncId, FuncStatus>; VnfKind::COUNT],
    idle_clock: [BTreeMap<FuncId, u64>; VnfKind::COUNT],
    next_func_id: u64,
}

impl DataCenter {
    pub fn new(id: DcId, max_storage: u64, max_compute: u64) -> DataCenter {
        DataCenter {
            id,
            max_storage,
            max_compute,
            cur_storage: max_storage,
            cur_compute: max_compute,
            installed: Default::default(),
            idle_clock: Default::default(),
            next_func_id: 1,
        }
    }

    /// Compute capacity is CPUs × RAM, in the same units as a VNF's vCPU × RAM.
    pub fn with_hardware(id: DcId, storage_gb: u64, cpus: u64, ram_gb: u64) -> DataCenter {
        DataCenter::new(id, storage_gb, cpus * ram_gb)
    }

    pub fn id(&self) -> DcId {
        self.id
    }

    pub fn max_storage(&self) -> u64 {
        self.max_storage
    }

    pub fn max_compute(&self) -> u64 {
        self.max_compute
    }

    pub fn cur_storage(&self) -> u64 {
        self.cur_storage
    }

    pub fn cur_compute(&self) -> u64 {
        self.cur_compute
    }

    pub fn storage_used_fraction(&self) -> f64 {
        fraction(self.max_storage - self.cur_storage, self.max_storage)
    }

    pub fn compute_used_fraction(&self) -> f64 {
        fraction(self.max_compute - self.cur_compute, self.max_compute)
    }

    pub fn can_install(&self, v: &VnfType) -> bool {
        self.cur_storage >= v.storage_gb && self.cur_compute >= v.compute_demand()
    }

    pub fn install_vnf(&mut self, v: &VnfType) -> Result<FuncId, DcError> {
        let resource = if self.cur_storage < v.storage_gb {
            Some(Resource::Storage)
        } else if self.cur_compute < v.compute_demand() {
            Some(Resource::Compute)
        } else {
            None
        };
        if let Some(resource) = resource {
            return Err(DcError::InsufficientResources {
                dc: self.id,
                kind: v.kind,
                resource,
            });
        }
        self.cur_storage -= v.storage_gb;
        self.cur_compute -= v.compute_demand();
        let fid = FuncId(self.next_func_id);
        self.next_func_id += 1;
        self.installed[v.kind.index()].insert(fid, FuncStatus::Idle);
        self.idle_clock[v.kind.index()].insert(fid, 0);
        Ok(fid)
    }

    pub fn uninstall_vnf(&mut self, v: &VnfType, fid: FuncId) -> Result<(), DcError> {
        match self.status(v.kind, fid) {
            None => return Err(self.unknown(v.kind, fid)),
            Some(FuncStatus::InUse) => {
                return Err(DcError::FunctionInUse {
                    dc: self.id,
                    kind: v.kind,
                    fid,
                })
            }
            Some(FuncStatus::Idle) => {}
        }
        self.installed[v.kind.index()].remove(&fid);
        self.idle_clock[v.kind.index()].remove(&fid);
        self.cur_storage += v.storage_gb;
        self.cur_compute += v.compute_demand();
        Ok(())
    }

    pub fn allocate_vnf(&mut self, kind: VnfKind, fid: FuncId) -> Result<(), DcError> {
        match self.status(kind, fid) {
            None => Err(self.unknown(kind, fid)),
            Some(FuncStatus::InUse) => Err(DcError::AlreadyInUse {
                dc: self.id,
                kind,
                fid,
            }),
            Some(FuncStatus::Idle) => {
                self.installed[kind.index()].insert(fid, FuncStatus::InUse);
                self.idle_clock[kind.index()].remove(&fid);
                Ok(())
            }
        }
    }

    pub fn revoke_vnf(&mut self, kind: VnfKind, fid: FuncId) -> Result<(), DcError> {
        match self.status(kind, fid) {
            None => Err(self.unknown(kind, fid)),
            Some(FuncStatus::Idle) => Err(DcError::NotInUse {
                dc: self.id,
                kind,
                fid,
            }),
            Some(FuncStatus::InUse) => {
                self.set_idle(kind, fid);
                Ok(())
            }
        }
    }

    /// Like [`revoke_vnf`](Self::revoke_vnf) but allowed mid-processing and on
    /// idle instances (which only get their idle clock reset).
    pub fn force_revoke_vnf(&mut self, kind: VnfKind, fid: FuncId) -> Result<(), DcError> {
        if self.status(kind, fid).is_none() {
            return Err(self.unknown(kind, fid));
        }
        self.set_idle(kind, fid);
        Ok(())
    }

    fn set_idle(&mut self, kind: VnfKind, fid: FuncId) {
        self.installed[kind.index()].insert(fid, FuncStatus::Idle);
        self.idle_clock[kind.index()].insert(fid, 0);
    }

    /// Advances every idle clock by one step and uninstalls instances whose
    /// clock reaches `t_thresh`. Returns what was uninstalled.
    pub fn tick_idle(&mut self, catalog: &Catalog, t_thresh: u64) -> Vec<(VnfKind, FuncId)> {
        let mut reaped = Vec::new();
        for kind in VnfKind::ALL {
            for (&fid, clock) in self.idle_clock[kind.index()].iter_mut() {
                *clock += 1;
                if *clock >= t_thresh {
                    reaped.push((kind, fid));
                }
            }
        }
        for &(kind, fid) in &reaped {
            self.uninstall_vnf(catalog.vnf(kind), fid)
                .expect("reaped instance is idle");
        }
        reaped
    }

    pub fn status(&self, kind: VnfKind, fid: FuncId) -> Option<FuncStatus> {
        self.installed[kind.index()].get(&fid).copied()
    }

    pub fn idle_time(&self, kind: VnfKind, fid: FuncId) -> Option<u64> {
        self.idle_clock[kind.index()].get(&fid).copied()
    }

    /// Lowest-id idle instance of `kind`.
    pub fn idle_instance(&self, kind: VnfKind) -> Option<FuncId> {
        self.idle_clock[kind.index()].keys().next().copied()
    }

    /// Idle instance of `kind` that has waited longest (ties to the lowest id).
    pub fn longest_idle_instance(&self, kind: VnfKind) -> Option<FuncId> {
        self.idle_clock[kind.index()]
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(&fid, _)| fid)
    }

    pub fn idle_count(&self, kind: VnfKind) -> usize {
        self.idle_clock[kind.index()].len()
    }

    pub fn in_use_count(&self, kind: VnfKind) -> usize {
        self.installed[kind.index()].len() - self.idle_clock[kind.index()].len()
    }

    pub fn installed_count(&self) -> usize {
        self.installed.iter().map(BTreeMap::len).sum()
    }

    pub fn instances(&self) -> impl Iterator<Item = (VnfKind, FuncId, FuncStatus)> + '_ {
        VnfKind::ALL.into_iter().flat_map(move |k| {
            self.installed[k.index()]
                .iter()
                .map(move |(&fid, &st)| (k, fid, st))
        })
    }

    pub fn idle_clocks(&self) -> impl Iterator<Item = (VnfKind, FuncId, u64)> + '_ {
        VnfKind::ALL.into_iter().flat_map(move |k| {
            self.idle_clock[k.index()]
                .iter()
                .map(move |(&fid, &t)| (k, fid, t))
        })
    }

    /// Checks the ledger against the installed-instance table.
    pub fn check_invariants(&self, catalog: &Catalog) -> Result<(), String> {
        let (mut storage, mut compute) = (0u64, 0u64);
        for (kind, fid, status) in self.instances() {
            let v = catalog.vnf(kind);
            storage += v.storage_gb;
            compute += v.compute_demand();
            let clocked = self.idle_clock[kind.index()].contains_key(&fid);
            if clocked != (status == FuncStatus::Idle) {
                return Err(format!("DC {}: {kind} {fid} idle clock mismatch", self.id));
            }
            if fid.0 >= self.next_func_id {
                return Err(format!("DC {}: {kind} {fid} beyond id counter", self.id));
            }
        }
        for kind in VnfKind::ALL {
            for fid in self.idle_clock[kind.index()].keys() {
                if !self.installed[kind.index()].contains_key(fid) {
                    return Err(format!("DC {}: orphan idle clock {kind} {fid}", self.id));
                }
            }
        }
        if self.cur_storage + storage != self.max_storage {
            return Err(format!(
                "DC {}: storage ledger {} + {} != {}",
                self.id, self.cur_storage, storage, self.max_storage
            ));
        }
        if self.cur_compute + compute != self.max_compute {
            return Err(format!(
                "DC {}: compute ledger {} + {} != {}",
                self.id, self.cur_compute, compute, self.max_compute
            ));
        }
        Ok(())
    }

    fn unknown(&self, kind: VnfKind, fid: FuncId) -> DcError {
        DcError::UnknownFunction {
            dc: self.id,
            kind,
            fid,
        }
    }
}

fn fraction(used: u64, max: u64) -> f64 {
    if max == 0 {
        0.0
    } else {
        used as f64 / max as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DcHardware {
    pub storage_gb: u64,
    pub cpus: u64,
    pub ram_gb: u64,
}

impl Default for DcHardware {
    fn default() -> Self {
        DcHardware {
            storage_gb: DEFAULT_STORAGE_GB,
            cpus: DEFAULT_CPUS,
            ram_gb: DEFAULT_RAM_GB,
        }
    }
}

/// `[datacenters]` section: either a uniform `count` × hardware, or an explicit list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DcSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[serde(default)]
    pub storage_gb: Option<u64>,
    #[serde(default)]
    pub cpus: Option<u64>,
    #[serde(default)]
    pub ram_gb: Option<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub list: Vec<DcHardware>,
}

impl DcSpec {
    pub fn uniform(count: usize) -> DcSpec {
        DcSpec {
            count: Some(count),
            storage_gb: None,
            cpus: None,
            ram_gb: None,
            list: Vec::new(),
        }
    }

    pub fn hardware(&self, n_nodes: usize) -> Vec<DcHardware> {
        if !self.list.is_empty() {
            return self.list.clone();
        }
        let d = DcHardware::default();
        let hw = DcHardware {
            storage_gb: self.storage_gb.unwrap_or(d.storage_gb),
            cpus: self.cpus.unwrap_or(d.cpus),
            ram_gb: self.ram_gb.unwrap_or(d.ram_gb),
        };
        vec![hw; self.count.unwrap_or(n_nodes)]
    }

    pub fn build(&self, n_nodes: usize) -> Vec<DataCenter> {
        self.hardware(n_nodes)
            .into_iter()
            .enumerate()
            .map(|(i, hw)| DataCenter::with_hardware(DcId(i), hw.storage_gb, hw.cpus, hw.ram_gb))
            .collect()
    }
}
