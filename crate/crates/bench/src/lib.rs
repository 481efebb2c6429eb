//! Fixtures shared by the criterion benches.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sfcsim::dqn::{encoding_widths, NetShape, QNetwork};
use sfcsim::topology::{CircleSpec, NetworkGraph, DEFAULT_FIBER_KM_PER_S};
use sfcsim::{Scenario, ScenarioConfig};

pub fn builtin(name: &str) -> Scenario {
    ScenarioConfig::builtin(name)
        .and_then(|c| c.build())
        .expect("built-in scenario builds")
}

/// A connected circle topology with `n` nodes.
pub fn circle(n: usize, seed: u64) -> NetworkGraph {
    CircleSpec {
        n,
        radius_km: 100.0,
        edge_prob: 0.4,
        seed,
        capacity_mbps: None,
    }
    .build(DEFAULT_FIBER_KM_PER_S)
    .expect("circle topology builds")
}

/// The default-sized Q-network for `n_dcs` datacenters and `n_links` links,
/// plus one random input per branch.
pub fn q_network(n_dcs: usize, n_links: usize) -> (QNetwork, Vec<Vec<f64>>) {
    let widths = encoding_widths(n_dcs, n_links);
    let shape = NetShape {
        branch_inputs: widths.to_vec(),
        embed: 32,
        hidden: vec![128, 64],
        outputs: sfcsim::policy::action_count(n_dcs),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let net = QNetwork::new(&shape, &mut rng);
    let inputs = widths
        .iter()
        .map(|&w| (0..w).map(|_| rng.gen::<f64>()).collect())
        .collect();
    (net, inputs)
}
