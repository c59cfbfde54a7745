//! Self-supervised training of controllers by backpropagation through the
//! closed loop, and test-set evaluation.

mod adam;
mod bptt;

use std::io::Write;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controllers::{init_params, BoundController, ControllerKind, ControllerParams, ControllerSpec};
use crate::dynamics::{rollout, LinearPlant, Policy};
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::network::GraphSystem;
use crate::rng::{derive_seed, Stream};

pub use adam::{adam_step, clip_gradient, AdamConfig, OptimizerState};
pub use bptt::{batch_gradient, trajectory_gradient};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub train_size: usize,
    pub valid_size: usize,
    pub test_size: usize,
    pub learning_rate: f64,
    /// Replaces `learning_rate` for the centralized MLP.
    pub mlp_learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub validate_every: usize,
    pub grad_clip: f64,
    pub seed: u64,
    /// Wall-clock budget for one call to [`train`]; `None` disables it.
    pub time_budget_secs: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 20,
            train_size: 500,
            valid_size: 50,
            test_size: 50,
            learning_rate: 0.01,
            mlp_learning_rate: 0.001,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            validate_every: 5,
            grad_clip: 10.0,
            seed: 0,
            time_budget_secs: Some(900.0),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("train_size", self.train_size),
            ("valid_size", self.valid_size),
            ("test_size", self.test_size),
            ("validate_every", self.validate_every),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidArgument(format!("{name} must be at least 1")));
        }
        if !(self.learning_rate > 0.0) || !(self.mlp_learning_rate > 0.0) {
            return Err(Error::InvalidArgument("learning rates must be positive".into()));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::InvalidArgument(format!("{name} must lie in [0, 1)")));
            }
        }
        if !(self.adam_epsilon > 0.0) || !(self.grad_clip > 0.0) {
            return Err(Error::InvalidArgument("adam_epsilon and grad_clip must be positive".into()));
        }
        if let Some(b) = self.time_budget_secs {
            if !(b > 0.0) {
                return Err(Error::InvalidArgument("time budget must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn learning_rate_for(&self, kind: ControllerKind) -> f64 {
        match kind {
            ControllerKind::Mlp => self.mlp_learning_rate,
            _ => self.learning_rate,
        }
    }

    pub fn adam(&self, kind: ControllerKind) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate_for(kind),
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            epsilon: self.adam_epsilon,
            grad_clip: self.grad_clip,
        }
    }

    pub fn steps_per_epoch(&self) -> usize {
        self.train_size.div_ceil(self.batch_size)
    }
}

/// `count` independent standard-normal `n x 1` initial states.
pub fn sample_initial_states(n: usize, count: usize, seed: u64) -> Result<Vec<DenseMatrix>> {
    if count == 0 || n == 0 {
        return Err(Error::InvalidArgument("need at least one state of at least one node".into()));
    }
    let mut s = Stream::new(seed, "initial_states");
    Ok((0..count)
        .map(|_| DenseMatrix::column_vector(&s.normal_vec(n)))
        .collect())
}

/// Mean cost of `batch` and its gradient with respect to every parameter.
pub fn bptt_gradient(
    plant: &LinearPlant,
    g: &GraphSystem,
    params: &ControllerParams,
    batch: &[DenseMatrix],
) -> Result<(f64, Vec<f64>)> {
    let support = params.kind().is_graph().then_some(&g.support);
    batch_gradient(plant, support, params, batch)
}

/// Test-set statistics. Divergent rollouts have infinite cost.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Evaluation {
    pub mean_cost: f64,
    pub costs: Vec<f64>,
    pub divergences: usize,
    /// Sample standard deviation over the finite costs.
    pub traj_std: f64,
}

pub fn evaluate(plant: &LinearPlant, controller: &dyn Policy, test_states: &[DenseMatrix]) -> Result<Evaluation> {
    if test_states.is_empty() {
        return Err(Error::InvalidArgument("empty test set".into()));
    }
    let outcomes: Vec<Result<f64>> = test_states
        .par_iter()
        .map(|x0| match rollout(plant, x0, controller, None) {
            Ok(traj) if traj.total_cost.is_finite() => Ok(traj.total_cost),
            Ok(_) => Ok(f64::INFINITY),
            Err(e) if e.is_divergence() => Ok(f64::INFINITY),
            Err(e) => Err(e),
        })
        .collect();
    let costs = outcomes.into_iter().collect::<Result<Vec<f64>>>()?;
    let divergences = costs.iter().filter(|c| !c.is_finite()).count();
    let mean_cost = if divergences > 0 {
        f64::INFINITY
    } else {
        costs.iter().sum::<f64>() / costs.len() as f64
    };
    let finite: Vec<f64> = costs.iter().copied().filter(|c| c.is_finite()).collect();
    Ok(Evaluation {
        mean_cost,
        traj_std: sample_std(&finite),
        costs,
        divergences,
    })
}

/// Sample standard deviation (`n - 1` denominator); 0 for fewer than two values.
pub fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationPoint {
    /// Number of completed optimizer steps when the validation ran.
    pub step: usize,
    pub cost: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainReport {
    /// Mean batch cost before each step; infinite for skipped batches.
    pub train_costs: Vec<f64>,
    pub validation: Vec<ValidationPoint>,
    pub best_params: ControllerParams,
    pub best_validation_cost: f64,
    pub best_step: usize,
    pub divergence_events: usize,
}

impl TrainReport {
    /// `step,train_cost,valid_cost`; row 0 holds the initial validation.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["step", "train_cost", "valid_cost"])?;
        let mut vi = self.validation.iter().peekable();
        for step in 0..=self.train_costs.len() {
            let train = if step == 0 {
                String::new()
            } else {
                fmt_cost(self.train_costs[step - 1])
            };
            let valid = match vi.peek() {
                Some(p) if p.step == step => {
                    let c = fmt_cost(p.cost);
                    vi.next();
                    c
                }
                _ => String::new(),
            };
            w.write_record([step.to_string(), train, valid])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn fmt_cost(c: f64) -> String {
    if c.is_finite() {
        c.to_string()
    } else {
        "inf".to_string()
    }
}

fn mean_cost(plant: &LinearPlant, controller: &BoundController, states: &[DenseMatrix]) -> Result<f64> {
    Ok(evaluate(plant, controller, states)?.mean_cost)
}

/// Trains a freshly initialized controller on states drawn from
/// `config.seed`.
pub fn train(plant: &LinearPlant, graph: &GraphSystem, spec: &ControllerSpec, config: &TrainConfig) -> Result<TrainReport> {
    config.validate()?;
    let init = init_params(spec, derive_seed(config.seed, "init"))?;
    let n = plant.n();
    let train_states = sample_initial_states(n, config.train_size, derive_seed(config.seed, "train"))?;
    let valid_states = sample_initial_states(n, config.valid_size, derive_seed(config.seed, "valid"))?;
    train_from(plant, graph, init, config, &train_states, &valid_states)
}

/// Runs the training loop from given parameters and data sets. The
/// training set is reshuffled every epoch; validation runs before the
/// first step, every `validate_every` steps and after the last one, and
/// the best validated parameters are returned.
pub fn train_from(
    plant: &LinearPlant,
    graph: &GraphSystem,
    init: ControllerParams,
    config: &TrainConfig,
    train_states: &[DenseMatrix],
    valid_states: &[DenseMatrix],
) -> Result<TrainReport> {
    config.validate()?;
    if train_states.is_empty() || valid_states.is_empty() {
        return Err(Error::InvalidArgument("training and validation sets must be nonempty".into()));
    }
    let started = Instant::now();
    let budget = config.time_budget_secs.map(Duration::from_secs_f64);
    let adam = config.adam(init.kind());
    let mut controller = BoundController::bind(init, graph)?;
    let mut opt = OptimizerState::new(controller.params.values.len());
    let mut shuffle = Stream::new(config.seed, "train/shuffle");
    let mut order: Vec<usize> = (0..train_states.len()).collect();

    let first = mean_cost(plant, &controller, valid_states)?;
    let mut report = TrainReport {
        train_costs: Vec::with_capacity(config.epochs * config.steps_per_epoch()),
        validation: vec![ValidationPoint { step: 0, cost: first }],
        best_params: controller.params.clone(),
        best_validation_cost: first,
        best_step: 0,
        divergence_events: 0,
    };

    let mut steps = 0;
    for epoch in 0..config.epochs {
        shuffle.shuffle(&mut order);
        let mut epoch_ok = false;
        for chunk in order.chunks(config.batch_size) {
            if let Some(b) = budget {
                if started.elapsed() > b {
                    return Err(Error::Timeout {
                        seconds: b.as_secs_f64(),
                    });
                }
            }
            let batch: Vec<DenseMatrix> = chunk.iter().map(|&i| train_states[i].clone()).collect();
            match batch_gradient(plant, controller.support(), &controller.params, &batch) {
                Ok((cost, grad)) if grad.iter().all(|g| g.is_finite()) => {
                    adam_step(&mut opt, &mut controller.params.values, &grad, &adam)?;
                    report.train_costs.push(cost);
                    epoch_ok = true;
                }
                Ok(_) => {
                    report.train_costs.push(f64::INFINITY);
                    report.divergence_events += 1;
                }
                Err(e) if e.is_divergence() => {
                    report.train_costs.push(f64::INFINITY);
                    report.divergence_events += 1;
                }
                Err(e) => return Err(e),
            }
            steps += 1;
            if steps % config.validate_every == 0 {
                validate(plant, &controller, valid_states, steps, &mut report)?;
            }
        }
        if !epoch_ok {
            return Err(Error::TrainingDiverged { epoch });
        }
    }
    if steps % config.validate_every != 0 {
        validate(plant, &controller, valid_states, steps, &mut report)?;
    }
    Ok(report)
}

fn validate(
    plant: &LinearPlant,
    controller: &BoundController,
    valid_states: &[DenseMatrix],
    step: usize,
    report: &mut TrainReport,
) -> Result<()> {
    let cost = mean_cost(plant, controller, valid_states)?;
    report.validation.push(ValidationPoint { step, cost });
    if cost < report.best_validation_cost {
        report.best_validation_cost = cost;
        report.best_params = controller.params.clone();
        report.best_step = step;
    }
    Ok(())
}
