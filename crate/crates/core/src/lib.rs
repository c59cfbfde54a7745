//! Learned distributed controllers for networked linear systems.
//!
//! The crate covers the whole pipeline: random geometric graphs and plants
//! ([`network`]), closed-loop simulation and quadratic cost ([`dynamics`]),
//! the centralized Riccati baseline ([`lqr`]), graph-filter, GNN and dense
//! controllers ([`controllers`]), backpropagation-through-time training
//! ([`training`]), a closed-loop stability certificate ([`stability`]) and a
//! seeded experiment harness with CSV/JSON/checkpoint output
//! ([`experiment`], [`checkpoint`]).

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod controllers;
pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod lqr;
pub mod network;
pub mod rng;
pub mod stability;
pub mod training;

pub use controllers::{
    init_params, rebind, replicate_dmlp, BoundController, ControllerKind, ControllerParams, ControllerSpec,
    Nonlinearity,
};
pub use dynamics::{rollout, LinearPlant, Policy, Trajectory};
pub use error::{Error, Result};
pub use linalg::DenseMatrix;
pub use lqr::{optimal_cost, solve_riccati, RiccatiSolution};
pub use network::{generate_graph, generate_plant, GraphSystem, PlantSpec, Structure};
pub use stability::{certificate_constants, check_stability, StabilityReport};
pub use training::{evaluate, train, TrainConfig, TrainReport};
