//! Discrete-time simulator for service function chain (SFC) provisioning
//! over a network of datacenters.
//!
//! Requests arrive in seeded waves. Each one must have its VNFs processed in
//! order, each on an instance installed on some datacenter, with data moved
//! between datacenters over bandwidth-reserved shortest paths, and delivered
//! to its destination before its end-to-end deadline. A [`policy::Policy`]
//! decides where VNFs run; the crate ships a priority-point heuristic, a
//! random policy, and a deep Q-network agent ([`dqn`]).
//!
//! One simulation step is 0.01 ms.

pub mod catalog;
pub mod datacenter;
pub mod dqn;
pub mod engine;
pub mod metrics;
pub mod policy;
pub mod request_gen;
pub mod scenario;
pub mod topology;
pub mod trace;

/// Simulation steps per millisecond.
pub const STEPS_PER_MS: u64 = 100;
/// Simulation steps per second.
pub const STEPS_PER_SECOND: u64 = 100_000;

pub use catalog::{default_catalog, load_catalog, Catalog, SfcKind, SfcType, VnfKind, VnfType};
pub use datacenter::{DataCenter, DcError, FuncId, FuncStatus};
pub use dqn::{DqnAgent, DqnConfig, RewardSpec};
pub use engine::{
    run_episode, tx_steps, ActionError, CompletionRecord, DropRecord, EngineError, EngineParams,
    EngineState, EpisodeResult, RunOptions, StepReport,
};
pub use metrics::{ExportMeta, MetricsBundle, MetricsSummary};
pub use policy::{
    candidate_set, priority, select_for_allocation, Control, HeuristicPolicy, Policy, PolicyAction,
    PriorityParams, PriorityScore, RandomPolicy,
};
pub use request_gen::{generate_wave, schedule_waves, RequestSpec, SfcRecord, SfcTag, WavePlan};
pub use scenario::{ConfigError, PolicyKind, Scenario, ScenarioConfig};
pub use topology::{DcId, Kbps, NetworkGraph, PathResult};
pub use trace::{read_trace, write_trace, DropReason, TraceEvent, TraceRecord};
