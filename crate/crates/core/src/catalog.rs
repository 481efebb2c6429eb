//! VNF and SFC type definitions.
//!
//! The catalog is immutable once built. The defaults mirror the six VNF types
//! and six SFC request classes used throughout the simulator; any subset of
//! fields can be overridden from the `[catalog]` section of a scenario file.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::STEPS_PER_MS;

/// Default packet length as a multiple of the request bandwidth (Mb per Mbps).
pub const DEFAULT_PACKET_SECONDS: f64 = 0.001;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CatalogError {
    #[error("catalog parse error: {0}")]
    Parse(String),
    #[error("unknown VNF type `{0}`")]
    UnknownVnf(String),
    #[error("unknown SFC type `{0}`")]
    UnknownSfc(String),
    #[error("{what} must be strictly positive")]
    NonPositive { what: String },
    #[error("SFC `{0}` has an empty chain")]
    EmptyChain(String),
    #[error("invalid range for {what}: [{lo}, {hi}]")]
    BadRange { what: String, lo: f64, hi: f64 },
}

macro_rules! named_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $label:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $label)] $variant),+
        }

        impl $name {
            pub const ALL: [$name; [$($label),+].len()] = [$($name::$variant),+];
            pub const COUNT: usize = Self::ALL.len();

            pub fn index(self) -> usize {
                self as usize
            }

            pub fn name(self) -> &'static str {
                match self {
                    $($name::$variant => $label),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }
    };
}

named_enum!(
    /// The six VNF types.
    VnfKind {
        Nat => "NAT",
        Fw => "FW",
        Voc => "VOC",
        Tm => "TM",
        Wo => "WO",
        Idps => "IDPS",
    }
);

named_enum!(
    /// The six SFC request classes.
    SfcKind {
        Cg => "CG",
        AugR => "AugR",
        Voip => "VoIP",
        Vs => "VS",
        Miot => "MIoT",
        Ind40 => "Ind4.0",
    }
);

impl FromStr for VnfKind {
    type Err = CatalogError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        VnfKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| CatalogError::UnknownVnf(s.to_string()))
    }
}

impl FromStr for SfcKind {
    type Err = CatalogError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SfcKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| CatalogError::UnknownSfc(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VnfType {
    pub kind: VnfKind,
    pub vcpu: u64,
    pub ram_gb: u64,
    pub storage_gb: u64,
    /// Processing time in simulation steps (0.01 ms each).
    pub proc_steps: u64,
}

impl VnfType {
    /// Computational demand: vCPU × RAM.
    pub fn compute_demand(&self) -> u64 {
        self.vcpu * self.ram_gb
    }

    fn validate(&self) -> Result<(), CatalogError> {
        for (what, v) in [
            ("vcpu", self.vcpu),
            ("ram_gb", self.ram_gb),
            ("storage_gb", self.storage_gb),
            ("proc_steps", self.proc_steps),
        ] {
            if v == 0 {
                return Err(CatalogError::NonPositive {
                    what: format!("{}.{what}", self.kind),
                });
            }
        }
        Ok(())
    }
}

/// Request bandwidth in Mbps: a constant, or a range sampled uniformly per request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Bandwidth {
    Fixed(f64),
    Uniform([f64; 2]),
}

impl Bandwidth {
    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            Bandwidth::Fixed(v) => (v, v),
            Bandwidth::Uniform([lo, hi]) => (lo, hi),
        }
    }

    pub fn contains(&self, bw: f64) -> bool {
        let (lo, hi) = self.bounds();
        lo <= bw && bw <= hi
    }
}

/// Inclusive range of the per-wave bundle size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleRange(pub u32, pub u32);

impl BundleRange {
    pub fn lo(&self) -> u32 {
        self.0
    }

    pub fn hi(&self) -> u32 {
        self.1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SfcType {
    pub kind: SfcKind,
    pub chain: Vec<VnfKind>,
    pub bandwidth: Bandwidth,
    /// End-to-end delay tolerance in milliseconds.
    pub e2e_ms: f64,
    pub bundle: BundleRange,
    /// Packet length in megabits for every TX. `None` means bandwidth × 1 ms.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub packet_len_mb: Option<f64>,
}

impl SfcType {
    /// Deadline in simulation steps (100 × e2e_ms).
    pub fn deadline_steps(&self) -> u64 {
        (self.e2e_ms * STEPS_PER_MS as f64).round() as u64
    }

    pub fn packet_len_for(&self, bw: f64) -> f64 {
        self.packet_len_mb.unwrap_or(bw * DEFAULT_PACKET_SECONDS)
    }

    fn validate(&self) -> Result<(), CatalogError> {
        let name = self.kind.name();
        if self.chain.is_empty() {
            return Err(CatalogError::EmptyChain(name.to_string()));
        }
        if !(self.e2e_ms > 0.0) {
            return Err(CatalogError::NonPositive {
                what: format!("{name}.e2e_ms"),
            });
        }
        let (lo, hi) = self.bandwidth.bounds();
        if !(lo > 0.0) || !(hi >= lo) || !hi.is_finite() {
            return Err(CatalogError::BadRange {
                what: format!("{name}.bandwidth"),
                lo,
                hi,
            });
        }
        if self.bundle.lo() < 1 || self.bundle.lo() > self.bundle.hi() {
            return Err(CatalogError::BadRange {
                what: format!("{name}.bundle"),
                lo: self.bundle.lo() as f64,
                hi: self.bundle.hi() as f64,
            });
        }
        if let Some(p) = self.packet_len_mb {
            if !(p >= 0.0) || !p.is_finite() {
                return Err(CatalogError::BadRange {
                    what: format!("{name}.packet_len_mb"),
                    lo: p,
                    hi: p,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    vnfs: [VnfType; VnfKind::COUNT],
    sfcs: [SfcType; SfcKind::COUNT],
}

impl Default for Catalog {
    fn default() -> Self {
        default_catalog()
    }
}

impl Catalog {
    pub fn vnf(&self, kind: VnfKind) -> &VnfType {
        &self.vnfs[kind.index()]
    }

    pub fn sfc(&self, kind: SfcKind) -> &SfcType {
        &self.sfcs[kind.index()]
    }

    pub fn vnfs(&self) -> &[VnfType] {
        &self.vnfs
    }

    pub fn sfcs(&self) -> &[SfcType] {
        &self.sfcs
    }

    pub fn validate(&self) -> Result<(), CatalogError> {
        self.vnfs.iter().try_for_each(VnfType::validate)?;
        self.sfcs.iter().try_for_each(SfcType::validate)
    }

    /// Applies `overrides` on top of this catalog and validates the result.
    pub fn with_overrides(&self, overrides: &CatalogOverrides) -> Result<Catalog, CatalogError> {
        let mut out = self.clone();
        for (name, o) in &overrides.vnf {
            let v = &mut out.vnfs[name.parse::<VnfKind>()?.index()];
            v.vcpu = o.vcpu.unwrap_or(v.vcpu);
            v.ram_gb = o.ram_gb.unwrap_or(v.ram_gb);
            v.storage_gb = o.storage_gb.unwrap_or(v.storage_gb);
            v.proc_steps = o.proc_steps.unwrap_or(v.proc_steps);
        }
        for (name, o) in &overrides.sfc {
            let s = &mut out.sfcs[name.parse::<SfcKind>()?.index()];
            if let Some(chain) = &o.chain {
                s.chain = chain
                    .iter()
                    .map(|n| n.parse())
                    .collect::<Result<_, _>>()?;
            }
            if let Some(bw) = o.bandwidth {
                s.bandwidth = bw;
            }
            if let Some(e2e) = o.e2e_ms {
                s.e2e_ms = e2e;
            }
            if let Some(b) = o.bundle {
                s.bundle = b;
            }
            if o.packet_len_mb.is_some() {
                s.packet_len_mb = o.packet_len_mb;
            }
        }
        out.validate()?;
        Ok(out)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VnfOverride {
    pub vcpu: Option<u64>,
    pub ram_gb: Option<u64>,
    pub storage_gb: Option<u64>,
    pub proc_steps: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SfcOverride {
    pub chain: Option<Vec<String>>,
    pub bandwidth: Option<Bandwidth>,
    pub e2e_ms: Option<f64>,
    pub bundle: Option<BundleRange>,
    pub packet_len_mb: Option<f64>,
}

/// Partial catalog, keyed by type name. Unlisted types and fields keep their defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogOverrides {
    #[serde(default)]
    pub vnf: BTreeMap<String, VnfOverride>,
    #[serde(default)]
    pub sfc: BTreeMap<String, SfcOverride>,
}

impl CatalogOverrides {
    pub fn is_empty(&self) -> bool {
        self.vnf.is_empty() && self.sfc.is_empty()
    }
}

pub fn default_catalog() -> Catalog {
    use VnfKind::*;

    let vnf = |kind, vcpu, ram_gb, storage_gb, proc_steps| VnfType {
        kind,
        vcpu,
        ram_gb,
        storage_gb,
        proc_steps,
    };
    let sfc = |kind, chain: &[VnfKind], bandwidth, e2e_ms, lo, hi| SfcType {
        kind,
        chain: chain.to_vec(),
        bandwidth,
        e2e_ms,
        bundle: BundleRange(lo, hi),
        packet_len_mb: None,
    };

    Catalog {
        vnfs: [
            vnf(Nat, 1, 4, 7, 6),
            vnf(Fw, 9, 5, 1, 3),
            vnf(Voc, 5, 11, 13, 11),
            vnf(Tm, 13, 7, 7, 7),
            vnf(Wo, 5, 2, 5, 8),
            vnf(Idps, 11, 15, 2, 2),
        ],
        sfcs: [
            sfc(SfcKind::Cg, &[Nat, Fw, Voc, Wo, Idps], Bandwidth::Fixed(4.0), 80.0, 40, 55),
            sfc(SfcKind::AugR, &[Nat, Fw, Tm, Voc, Idps], Bandwidth::Fixed(100.0), 10.0, 1, 4),
            sfc(SfcKind::Voip, &[Nat, Fw, Tm, Fw, Nat], Bandwidth::Fixed(0.064), 100.0, 100, 200),
            sfc(SfcKind::Vs, &[Nat, Fw, Tm, Voc, Idps], Bandwidth::Fixed(4.0), 100.0, 50, 100),
            sfc(SfcKind::Miot, &[Nat, Fw, Idps], Bandwidth::Uniform([1.0, 50.0]), 5.0, 10, 15),
            sfc(SfcKind::Ind40, &[Nat, Fw], Bandwidth::Fixed(70.0), 8.0, 1, 4),
        ],
    }
}

/// Parses a TOML catalog fragment (the body of a `[catalog]` section) on top of the defaults.
pub fn load_catalog(text: &str) -> Result<Catalog, CatalogError> {
    let overrides: CatalogOverrides =
        toml::from_str(text).map_err(|e| CatalogError::Parse(e.to_string()))?;
    default_catalog().with_overrides(&overrides)
}
