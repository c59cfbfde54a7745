use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::controllers::{ControllerKind, Nonlinearity};
use crate::error::{Error, Result};
use crate::network::{PlantSpec, Structure};
use crate::training::TrainConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    HyperparamSweep,
    ControllerComparison,
    SystemMatrixStudy,
    TransferStudy,
    SingleTrain,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::HyperparamSweep => "hyperparam_sweep",
            ExperimentKind::ControllerComparison => "controller_comparison",
            ExperimentKind::SystemMatrixStudy => "system_matrix_study",
            ExperimentKind::TransferStudy => "transfer_study",
            ExperimentKind::SingleTrain => "single_train",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            ExperimentKind::HyperparamSweep,
            ExperimentKind::ControllerComparison,
            ExperimentKind::SystemMatrixStudy,
            ExperimentKind::TransferStudy,
            ExperimentKind::SingleTrain,
        ]
        .into_iter()
        .find(|k| k.as_str() == s.replace('-', "_"))
        .ok_or_else(|| Error::InvalidArgument(format!("unknown experiment {s:?}")))
    }
}

/// Everything needed to reproduce a sweep from one master seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub n: usize,
    pub horizon: usize,
    pub knn: usize,
    pub require_connected: bool,
    pub graph_realizations: usize,
    pub system_realizations: usize,
    pub structure: Structure,
    pub norm_a: f64,
    pub norm_b: f64,
    pub q_scale: f64,
    pub r_scale: f64,
    pub nonlinearity: Nonlinearity,

    pub gnn_features: usize,
    pub gnn_taps: usize,
    pub gf_features: usize,
    pub gf_taps: usize,
    /// Hidden units per node of the centralized MLP.
    pub mlp_hidden_factor: usize,
    pub dmlp_hidden: usize,

    pub sweep_gnn_features: Vec<usize>,
    pub sweep_gnn_taps: Vec<usize>,
    pub sweep_gf_features: Vec<usize>,
    pub sweep_gf_taps: Vec<usize>,

    pub norm_a_grid: Vec<f64>,
    pub study_structures: Vec<Structure>,
    pub study_controllers: Vec<ControllerKind>,

    pub transfer_sizes: Vec<usize>,
    pub transfer_controllers: Vec<ControllerKind>,

    pub single_controller: ControllerKind,

    pub train: TrainConfig,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    /// When false, `wall_ms` is written as 0 so outputs are byte-stable.
    pub record_wall_time: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: ExperimentKind::ControllerComparison,
            n: 20,
            horizon: 50,
            knn: 5,
            require_connected: false,
            graph_realizations: 3,
            system_realizations: 3,
            structure: Structure::GraphAligned,
            norm_a: 0.995,
            norm_b: 1.0,
            q_scale: 1.0,
            r_scale: 1.0,
            nonlinearity: Nonlinearity::Tanh,
            gnn_features: 32,
            gnn_taps: 3,
            gf_features: 16,
            gf_taps: 3,
            mlp_hidden_factor: 32,
            dmlp_hidden: 32,
            sweep_gnn_features: vec![16, 32, 64],
            sweep_gnn_taps: vec![1, 2, 3],
            sweep_gf_features: vec![16, 32, 64],
            sweep_gf_taps: vec![1, 2, 3],
            norm_a_grid: vec![0.6, 0.8, 0.9, 0.995],
            study_structures: vec![Structure::GraphAligned, Structure::Unstructured],
            study_controllers: vec![ControllerKind::Dmlp, ControllerKind::GraphFilter, ControllerKind::Gnn],
            transfer_sizes: vec![35, 50, 75, 100],
            transfer_controllers: vec![ControllerKind::Gnn, ControllerKind::GraphFilter, ControllerKind::Dmlp],
            single_controller: ControllerKind::Gnn,
            train: TrainConfig::default(),
            seed: 0,
            output_dir: None,
            record_wall_time: true,
        }
    }
}

impl ExperimentConfig {
    /// Configured `(width, taps)` of a controller kind.
    pub fn architecture(&self, kind: ControllerKind) -> (usize, usize) {
        match kind {
            ControllerKind::Gnn => (self.gnn_features, self.gnn_taps),
            ControllerKind::GraphFilter => (self.gf_features, self.gf_taps),
            ControllerKind::Mlp => (self.mlp_hidden_factor, 0),
            ControllerKind::Dmlp => (self.dmlp_hidden, 0),
        }
    }

    pub fn plant_spec(&self, structure: Structure, norm_a: f64) -> PlantSpec {
        PlantSpec {
            structure,
            norm_a,
            norm_b: self.norm_b,
            q_scale: self.q_scale,
            r_scale: self.r_scale,
            horizon: self.horizon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        let counts = [
            ("n", self.n),
            ("horizon", self.horizon),
            ("knn", self.knn),
            ("graph_realizations", self.graph_realizations),
            ("system_realizations", self.system_realizations),
            ("gnn_features", self.gnn_features),
            ("gf_features", self.gf_features),
            ("mlp_hidden_factor", self.mlp_hidden_factor),
            ("dmlp_hidden", self.dmlp_hidden),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return bad(format!("{name} must be at least 1"));
        }
        if self.n <= self.knn {
            return bad(format!("n = {} must exceed knn = {}", self.n, self.knn));
        }
        self.plant_spec(self.structure, self.norm_a).validate()?;
        self.train.validate()?;
        match self.experiment {
            ExperimentKind::HyperparamSweep => {
                for (name, grid) in [
                    ("sweep_gnn_features", &self.sweep_gnn_features),
                    ("sweep_gf_features", &self.sweep_gf_features),
                ] {
                    if grid.contains(&0) {
                        return bad(format!("{name} entries must be positive"));
                    }
                }
                if self.sweep_gnn_features.len() * self.sweep_gnn_taps.len()
                    + self.sweep_gf_features.len() * self.sweep_gf_taps.len()
                    == 0
                {
                    return bad("hyperparameter grid is empty".into());
                }
            }
            ExperimentKind::SystemMatrixStudy => {
                if self.norm_a_grid.is_empty() || self.study_structures.is_empty() {
                    return bad("system matrix study needs norm_a_grid and study_structures".into());
                }
                if let Some(v) = self.norm_a_grid.iter().find(|v| !(**v > 0.0)) {
                    return bad(format!("norm_a_grid entry {v} must be positive"));
                }
            }
            ExperimentKind::TransferStudy => {
                if self.transfer_sizes.is_empty() {
                    return bad("transfer_sizes is empty".into());
                }
                if let Some(m) = self.transfer_sizes.iter().find(|&&m| m <= self.n) {
                    return bad(format!("transfer size {m} must exceed training n = {}", self.n));
                }
                if self.transfer_controllers.contains(&ControllerKind::Mlp) {
                    return bad("the centralized MLP is tied to its training size and cannot transfer".into());
                }
            }
            ExperimentKind::ControllerComparison | ExperimentKind::SingleTrain => {}
        }
        Ok(())
    }
}
