use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::agent::DqnAgent;
use crate::engine::{run_episode, EngineError, EpisodeResult, RunOptions};
use crate::scenario::Scenario;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("training diverged in episode {episode}: {msg}")]
    Diverged { episode: usize, msg: String },
}

/// One row of the learning curve (`curve.csv`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub episode: usize,
    pub epsilon: f64,
    pub mean_loss: Option<f64>,
    pub acceptance_ratio: Option<f64>,
    pub cumulative_reward: f64,
}

/// Runs `episodes` more training episodes. Episode `e` (counted over the
/// agent's lifetime) uses seed `train_seed_offset + e` and the epsilon the
/// schedule gives for `e`, so resuming from a checkpoint continues the curve.
pub fn train(
    scenario: &Scenario,
    agent: &mut DqnAgent,
    episodes: usize,
    mut on_episode: impl FnMut(&CurvePoint, &DqnAgent),
) -> Result<Vec<CurvePoint>, TrainError> {
    let total = agent.config().episodes.max(agent.episodes_done() + episodes);
    let mut curve = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let e = agent.episodes_done();
        let eps = agent.config().epsilon(e, total);
        agent.set_epsilon(eps);
        agent.set_learning(true);
        agent.begin_episode();
        let seed = agent.config().train_seed_offset.wrapping_add(e as u64);
        let result = run_episode(&scenario.with_seed(seed), agent, RunOptions::default());
        agent.set_learning(false);
        let result = result?;
        if let Some(msg) = agent.diverged() {
            return Err(TrainError::Diverged {
                episode: e,
                msg: msg.to_string(),
            });
        }
        agent.episodes_done += 1;
        let stats = agent.stats();
        let point = CurvePoint {
            episode: e,
            epsilon: eps,
            mean_loss: stats.mean_loss(),
            acceptance_ratio: result.metrics.acceptance_ratio(),
            cumulative_reward: stats.reward,
        };
        on_episode(&point, agent);
        curve.push(point);
    }
    Ok(curve)
}

/// Runs the greedy policy of `agent` once per seed without learning.
pub fn evaluate(
    scenario: &Scenario,
    agent: &DqnAgent,
    seed: u64,
    opts: RunOptions,
) -> Result<EpisodeResult, EngineError> {
    let mut a = agent.clone();
    a.set_epsilon(0.0);
    a.set_learning(false);
    a.begin_episode();
    run_episode(&scenario.with_seed(seed), &mut a, opts)
}

pub fn write_curve(path: &Path, curve: &[CurvePoint]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_path(path)?;
    if curve.is_empty() {
        w.write_record(["episode", "epsilon", "mean_loss", "acceptance_ratio", "cumulative_reward"])?;
    }
    for p in curve {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}
