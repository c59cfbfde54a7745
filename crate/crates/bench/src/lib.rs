//! Shared fixtures for the benchmarks.

use netctrl::controllers::{init_params, ControllerParams, ControllerSpec};
use netctrl::network::{generate_graph, generate_plant, GraphSystem, PlantSpec};
use netctrl::training::sample_initial_states;
use netctrl::{DenseMatrix, LinearPlant};

/// A graph-aligned plant on an `n`-node 5-NN graph.
pub fn testbed(n: usize, horizon: usize, seed: u64) -> (GraphSystem, LinearPlant) {
    let g = generate_graph(n, 5, seed).expect("graph");
    let spec = PlantSpec {
        horizon,
        ..PlantSpec::default()
    };
    let plant = generate_plant(&g, &spec, seed).expect("plant");
    (g, plant)
}

pub fn states(n: usize, count: usize, seed: u64) -> Vec<DenseMatrix> {
    sample_initial_states(n, count, seed).expect("states")
}

pub fn params(spec: &ControllerSpec, seed: u64) -> ControllerParams {
    init_params(spec, seed).expect("params")
}
