//! Checkpoint format: one JSON document.
//!
//! ```json
//! {
//!   "format": "sfcsim-dqn",
//!   "version": 1,
//!   "shape": {"branch_inputs": [..], "embed": 32, "hidden": [128, 64], "outputs": 61},
//!   "online": [{"name": "branch0.w", "shape": [32, 100], "data": [..]}, ..],
//!   "target": [..],
//!   "episodes_done": 120,
//!   "grad_steps": 40210,
//!   "config": { ..the agent's DqnConfig.. }
//! }
//! ```
//!
//! Tensors appear in a fixed order; loading checks names and shapes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::agent::DqnAgent;
use super::network::{NetShape, QNetwork};
use super::DqnConfig;

pub const CHECKPOINT_FORMAT: &str = "sfcsim-dqn";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("unsupported checkpoint {0}")]
    Format(String),
    #[error("checkpoint does not fit this network: {0}")]
    Shape(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorDump {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub shape: NetShape,
    pub online: Vec<TensorDump>,
    pub target: Vec<TensorDump>,
    pub episodes_done: usize,
    pub grad_steps: u64,
    pub config: DqnConfig,
}

fn dump(net: &QNetwork) -> Vec<TensorDump> {
    net.tensors()
        .into_iter()
        .map(|(name, shape, data)| TensorDump {
            name,
            shape,
            data: data.to_vec(),
        })
        .collect()
}

fn restore(shape: &NetShape, tensors: &[TensorDump]) -> Result<QNetwork, CheckpointError> {
    let mut net = QNetwork::zeros(shape);
    let expected: Vec<(String, Vec<usize>)> = net
        .tensors()
        .into_iter()
        .map(|(n, s, _)| (n, s))
        .collect();
    if expected.len() != tensors.len() {
        return Err(CheckpointError::Shape(format!(
            "{} tensors, expected {}",
            tensors.len(),
            expected.len()
        )));
    }
    for ((dst, (name, dims)), t) in net.tensors_mut().into_iter().zip(&expected).zip(tensors) {
        if &t.name != name || &t.shape != dims || t.data.len() != dst.len() {
            return Err(CheckpointError::Shape(format!(
                "tensor {} {:?} does not match {} {:?}",
                t.name, t.shape, name, dims
            )));
        }
        dst.copy_from_slice(&t.data);
    }
    Ok(net)
}

impl Checkpoint {
    pub fn of(agent: &DqnAgent) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            shape: agent.online().shape.clone(),
            online: dump(agent.online()),
            target: dump(agent.target()),
            episodes_done: agent.episodes_done(),
            grad_steps: agent.grad_steps(),
            config: agent.config().clone(),
        }
    }

    /// Rebuilds an agent. The replay buffer starts empty.
    pub fn into_agent(self, n_dcs: usize, n_links: usize) -> Result<DqnAgent, CheckpointError> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Format(format!("{}/{}", self.format, self.version)));
        }
        let mut agent = DqnAgent::new(self.config.clone(), n_dcs, n_links);
        if agent.online().shape != self.shape {
            return Err(CheckpointError::Shape(format!(
                "network shape {:?}, scenario needs {:?}",
                self.shape,
                agent.online().shape
            )));
        }
        let online = restore(&self.shape, &self.online)?;
        let target = restore(&self.shape, &self.target)?;
        agent.set_networks(online, target);
        agent.episodes_done = self.episodes_done;
        agent.set_grad_steps(self.grad_steps);
        Ok(agent)
    }
}

pub fn save_checkpoint(agent: &DqnAgent, path: &Path) -> Result<(), CheckpointError> {
    let text = serde_json::to_string(&Checkpoint::of(agent))?;
    // Write then rename so an interrupted save never clobbers the last good file.
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, text)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}
