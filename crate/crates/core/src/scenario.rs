//! Scenario configuration: the TOML schema, built-in scenarios, flat
//! `key=value` overrides and the stable config hash.
//!
//! ```toml
//! name = "example"
//! seed = 7
//! policy = "heuristic"          # heuristic | dqn | random
//! t_model = 1                   # policy cadence, steps
//! t_thresh = 500                # idle reaping threshold, steps
//! sample_period = 1500          # resource sampling, steps
//! max_steps = 2000000
//! propagation = true
//! waves = [0, 2500, 5000, 7500]
//!
//! [topology.circle]
//! n = 5
//! radius_km = 100.0
//! edge_prob = 0.5
//! seed = 1
//!
//! [datacenters]
//! count = 5
//! storage_gb = 2000
//! cpus = 64
//! ram_gb = 256
//!
//! [catalog.sfc.CG]
//! e2e_ms = 40.0
//!
//! [generation]
//! enabled = ["CG", "VoIP"]
//!
//! [[requests]]
//! at_step = 10
//! sfc = "MIoT"
//! src = 0
//! dest = 1
//! bw_mbps = 20.0
//!
//! [priority]
//! weights = [1.0, 1.0, 1.0, 1.0]
//! urgency_fraction = 0.2
//!
//! [dqn]
//! episodes = 200
//! ```

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::catalog::{default_catalog, Catalog, CatalogError, CatalogOverrides, SfcKind};
use crate::datacenter::{DataCenter, DcSpec, DEFAULT_T_THRESH};
use crate::dqn::DqnConfig;
use crate::engine::EngineParams;
use crate::metrics::DEFAULT_SAMPLE_PERIOD;
use crate::policy::PriorityParams;
use crate::request_gen::{GenOptions, RequestSpec, WavePlan, DEFAULT_WAVE_SPACING};
use crate::topology::{CircleSpec, DcId, Kbps, NetworkGraph, TopologySpec};

pub const BUILTIN_SCENARIOS: [&str; 3] = ["paper5dc", "paper3dc", "tiny"];
pub const DEFAULT_MAX_STEPS: u64 = 2_000_000;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot parse scenario: {0}")]
    Parse(String),
    #[error("topology required")]
    MissingTopology,
    #[error("unknown scenario `{0}` (built-ins: paper5dc, paper3dc, tiny)")]
    UnknownScenario(String),
    #[error("bad override `{0}`: expected key=value")]
    BadOverride(String),
    #[error("override `{key}`: {msg}")]
    Override { key: String, msg: String },
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    #[default]
    Heuristic,
    Dqn,
    Random,
}

impl std::str::FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "heuristic" => Ok(PolicyKind::Heuristic),
            "dqn" => Ok(PolicyKind::Dqn),
            "random" => Ok(PolicyKind::Random),
            _ => Err(format!("unknown policy `{s}` (heuristic, dqn, random)")),
        }
    }
}

impl PolicyKind {
    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Heuristic => "heuristic",
            PolicyKind::Dqn => "dqn",
            PolicyKind::Random => "random",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManualRequest {
    pub at_step: u64,
    pub sfc: SfcKind,
    pub src: usize,
    pub dest: usize,
    /// Defaults to the lower bound of the type's bandwidth.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bw_mbps: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub trace: bool,
}

fn default_seed() -> u64 {
    1
}
fn default_t_model() -> u64 {
    1
}
fn default_t_thresh() -> u64 {
    DEFAULT_T_THRESH
}
fn default_sample_period() -> u64 {
    DEFAULT_SAMPLE_PERIOD
}
fn default_max_steps() -> u64 {
    DEFAULT_MAX_STEPS
}
fn default_true() -> bool {
    true
}
fn default_waves() -> WavePlan {
    WavePlan::evenly_spaced(4, DEFAULT_WAVE_SPACING)
}
fn default_dcs() -> DcSpec {
    DcSpec {
        count: None,
        storage_gb: None,
        cpus: None,
        ram_gb: None,
        list: Vec::new(),
    }
}

/// The on-disk scenario format. Every field except `topology` has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub policy: PolicyKind,
    #[serde(default = "default_t_model")]
    pub t_model: u64,
    #[serde(default = "default_t_thresh")]
    pub t_thresh: u64,
    #[serde(default = "default_sample_period")]
    pub sample_period: u64,
    #[serde(default = "default_max_steps")]
    pub max_steps: u64,
    #[serde(default = "default_true")]
    pub propagation: bool,
    #[serde(default = "default_waves")]
    pub waves: WavePlan,
    #[serde(default, skip_serializing_if = "CatalogOverrides::is_empty")]
    pub catalog: CatalogOverrides,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topology: Option<TopologySpec>,
    #[serde(default = "default_dcs")]
    pub datacenters: DcSpec,
    #[serde(default)]
    pub generation: GenOptions,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub requests: Vec<ManualRequest>,
    #[serde(default)]
    pub priority: PriorityParams,
    #[serde(default)]
    pub dqn: DqnConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<ScenarioConfig, ConfigError> {
        let cfg: ScenarioConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        if cfg.topology.is_none() {
            return Err(ConfigError::MissingTopology);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario config serializes")
    }

    pub fn builtin(name: &str) -> Result<ScenarioConfig, ConfigError> {
        match name {
            "paper5dc" => Ok(paper_scenario("paper5dc", 5)),
            "paper3dc" => Ok(paper_scenario("paper3dc", 3)),
            "tiny" => Ok(tiny_scenario()),
            _ => Err(ConfigError::UnknownScenario(name.into())),
        }
    }

    /// Canonical JSON (object keys sorted) of the whole config.
    pub fn canonical_json(&self) -> String {
        let v = serde_json::to_value(self).expect("scenario config serializes");
        serde_json::to_string(&sort_keys(v)).expect("json value serializes")
    }

    /// SHA-256 of [`Self::canonical_json`], hex encoded. Independent of key
    /// order in the source file.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    /// Applies a flat `key=value` override, e.g. `dqn.episodes=50` or
    /// `priority.weights=[2,1,1,1]`. The value is parsed as a TOML value,
    /// falling back to a plain string.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| ConfigError::BadOverride(assignment.into()))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(ConfigError::BadOverride(assignment.into()));
        }
        let value = parse_value(raw.trim());
        let err = |msg: String| ConfigError::Override {
            key: key.into(),
            msg,
        };
        let mut root = serde_json::to_value(&*self).map_err(|e| err(e.to_string()))?;
        let mut node = &mut root;
        let parts: Vec<&str> = key.split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            let obj = node
                .as_object_mut()
                .ok_or_else(|| err(format!("`{part}` is not inside a table")))?;
            if i + 1 == parts.len() {
                obj.insert(part.to_string(), value.clone());
                break;
            }
            node = obj
                .entry(part.to_string())
                .or_insert_with(|| serde_json::Value::Object(Default::default()));
        }
        *self = serde_json::from_value(root).map_err(|e| err(e.to_string()))?;
        Ok(())
    }

    /// Resolves defaults and builds every runtime structure.
    pub fn build(&self) -> Result<Scenario, ConfigError> {
        let topo = self.topology.as_ref().ok_or(ConfigError::MissingTopology)?;
        let catalog = default_catalog().with_overrides(&self.catalog)?;
        let graph = topo
            .build()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let dcs = self.datacenters.build(graph.node_count());
        if dcs.len() != graph.node_count() {
            return Err(ConfigError::Invalid(format!(
                "{} datacenters for {} topology nodes",
                dcs.len(),
                graph.node_count()
            )));
        }
        if dcs.len() < 2 && !self.generation.allow_loopback && !self.waves.is_empty() {
            return Err(ConfigError::Invalid(
                "request generation needs at least two datacenters".into(),
            ));
        }
        if self.sample_period == 0 {
            return Err(ConfigError::Invalid("sample_period must be positive".into()));
        }
        if self.t_model == 0 {
            return Err(ConfigError::Invalid("t_model must be positive".into()));
        }
        self.priority.validate().map_err(ConfigError::Invalid)?;
        self.dqn.validate().map_err(ConfigError::Invalid)?;
        let mut manual = Vec::new();
        for r in &self.requests {
            if r.src >= dcs.len() || r.dest >= dcs.len() {
                return Err(ConfigError::Invalid(format!(
                    "request at step {} references an unknown datacenter",
                    r.at_step
                )));
            }
            let band = catalog.sfc(r.sfc).bandwidth;
            let bw = r.bw_mbps.unwrap_or(band.bounds().0);
            if !band.contains(bw) {
                return Err(ConfigError::Invalid(format!(
                    "{} bandwidth {bw} Mbps outside its range",
                    r.sfc
                )));
            }
            manual.push(ScheduledRequest {
                at_step: r.at_step,
                spec: RequestSpec {
                    kind: r.sfc,
                    src: DcId(r.src),
                    dest: DcId(r.dest),
                    bw: Kbps::from_mbps(bw),
                },
            });
        }
        Ok(Scenario {
            name: self.name.clone(),
            catalog,
            graph,
            dcs,
            waves: self.waves.clone(),
            gen: self.generation.clone(),
            manual,
            engine: EngineParams {
                t_thresh: self.t_thresh,
                propagation: self.propagation,
            },
            priority: self.priority,
            dqn: self.dqn.clone(),
            policy: self.policy,
            seed: self.seed,
            t_model: self.t_model,
            sample_period: self.sample_period,
            max_steps: self.max_steps,
            config_hash: self.hash(),
        })
    }
}

fn parse_value(raw: &str) -> serde_json::Value {
    let doc = format!("v = {raw}");
    match toml::from_str::<BTreeMap<String, toml::Value>>(&doc) {
        Ok(mut m) => serde_json::to_value(m.remove("v").expect("key present"))
            .unwrap_or_else(|_| serde_json::Value::String(raw.into())),
        Err(_) => serde_json::Value::String(raw.into()),
    }
}

fn sort_keys(v: serde_json::Value) -> serde_json::Value {
    use serde_json::Value;
    match v {
        Value::Object(m) => {
            let sorted: BTreeMap<String, Value> =
                m.into_iter().map(|(k, v)| (k, sort_keys(v))).collect();
            Value::Object(sorted.into_iter().collect())
        }
        Value::Array(a) => Value::Array(a.into_iter().map(sort_keys).collect()),
        other => other,
    }
}

/// Five (or three) DCs on a 100 km circle with full default hardware.
fn paper_scenario(name: &str, n: usize) -> ScenarioConfig {
    ScenarioConfig {
        name: name.into(),
        seed: default_seed(),
        policy: PolicyKind::Heuristic,
        t_model: default_t_model(),
        t_thresh: DEFAULT_T_THRESH,
        sample_period: DEFAULT_SAMPLE_PERIOD,
        max_steps: DEFAULT_MAX_STEPS,
        propagation: true,
        waves: default_waves(),
        catalog: CatalogOverrides::default(),
        topology: Some(TopologySpec {
            circle: Some(CircleSpec {
                n,
                radius_km: 100.0,
                edge_prob: 0.5,
                seed: 1,
                capacity_mbps: None,
            }),
            ..Default::default()
        }),
        datacenters: DcSpec::uniform(n),
        generation: GenOptions::default(),
        requests: Vec::new(),
        priority: PriorityParams::default(),
        dqn: DqnConfig::default(),
        output: OutputConfig::default(),
    }
}

/// Two DCs, Ind4.0 requests only, exactly one request per wave.
fn tiny_scenario() -> ScenarioConfig {
    let mut catalog = CatalogOverrides::default();
    catalog.sfc.insert(
        SfcKind::Ind40.name().into(),
        crate::catalog::SfcOverride {
            bundle: Some(crate::catalog::BundleRange(1, 1)),
            ..Default::default()
        },
    );
    let mut cfg = paper_scenario("tiny", 2);
    cfg.catalog = catalog;
    cfg.topology = Some(TopologySpec {
        circle: Some(CircleSpec {
            n: 2,
            radius_km: 10.0,
            edge_prob: 0.0,
            seed: 0,
            capacity_mbps: None,
        }),
        ..Default::default()
    });
    cfg.generation.enabled = Some(vec![SfcKind::Ind40]);
    // Without masking the agent keeps drifting into idle-wait even here.
    cfg.dqn.mask_infeasible = true;
    cfg
}

/// A request injected at a fixed step.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduledRequest {
    pub at_step: u64,
    pub spec: RequestSpec,
}

/// A fully resolved scenario, ready to run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub catalog: Catalog,
    pub graph: NetworkGraph,
    pub dcs: Vec<DataCenter>,
    pub waves: WavePlan,
    pub gen: GenOptions,
    pub manual: Vec<ScheduledRequest>,
    pub engine: EngineParams,
    pub priority: PriorityParams,
    pub dqn: DqnConfig,
    pub policy: PolicyKind,
    pub seed: u64,
    pub t_model: u64,
    pub sample_period: u64,
    pub max_steps: u64,
    pub config_hash: String,
}

impl Scenario {
    pub fn with_seed(&self, seed: u64) -> Scenario {
        Scenario {
            seed,
            ..self.clone()
        }
    }
}
