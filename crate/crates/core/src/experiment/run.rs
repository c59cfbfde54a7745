use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::config::{ExperimentConfig, ExperimentKind};
use crate::controllers::{rebind, replicate_dmlp, BoundController, ControllerKind, ControllerSpec, Nonlinearity};
use crate::controllers::init_params;
use crate::dynamics::{LinearPlant, Policy};
use crate::error::Result;
use crate::linalg::DenseMatrix;
use crate::lqr::solve_riccati;
use crate::network::{generate_graph_with, generate_plant, GraphOptions, GraphSystem, Structure};
use crate::rng::derive_seed;
use crate::stability::{certificate_constants, check_stability, StabilityReport};
use crate::training::{evaluate, sample_initial_states, train_from, TrainConfig};

/// One row of the results table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultRecord {
    pub experiment: ExperimentKind,
    pub controller: String,
    #[serde(rename = "F")]
    pub features: Option<usize>,
    #[serde(rename = "K")]
    pub taps: Option<usize>,
    pub mu: Option<f64>,
    pub n_train: usize,
    pub n_test_graph: usize,
    pub graph_seed: u64,
    pub system_seed: u64,
    pub norm_a: f64,
    pub structure: Structure,
    pub raw_cost: f64,
    pub normalized_cost: f64,
    pub traj_std: f64,
    pub divergences: usize,
    pub stability_simplified: Option<bool>,
    pub stability_prop1: Option<bool>,
    pub wall_ms: u64,
    #[serde(skip)]
    pub stability: Option<StabilityReport>,
    #[serde(skip)]
    pub error: Option<String>,
}

impl ResultRecord {
    pub fn is_divergent(&self) -> bool {
        !self.normalized_cost.is_finite()
    }
}

/// The two-layer controller used throughout the harness. `width` is the
/// hidden feature count (GF, GNN, D-MLP) or the hidden-units-per-node
/// factor (MLP); `taps` only matters for the graph kinds.
pub fn controller_spec(
    kind: ControllerKind,
    n: usize,
    width: usize,
    taps: usize,
    sigma: Nonlinearity,
) -> Result<ControllerSpec> {
    match kind {
        ControllerKind::GraphFilter => ControllerSpec::two_layer(kind, width, taps),
        ControllerKind::Gnn => ControllerSpec::gnn(&[1, width, 1], &[taps, 0], sigma),
        ControllerKind::Mlp => ControllerSpec::mlp(n, width, sigma),
        ControllerKind::Dmlp => ControllerSpec::dmlp(n, width, sigma),
    }
}

/// A learnable controller in a sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Choice {
    kind: ControllerKind,
    features: usize,
    taps: usize,
}

impl Choice {
    fn label(&self) -> String {
        format!("{}/{}/{}", self.kind, self.features, self.taps)
    }

    fn spec(&self, n: usize, sigma: Nonlinearity) -> Result<ControllerSpec> {
        controller_spec(self.kind, n, self.features, self.taps, sigma)
    }

    fn csv_taps(&self) -> Option<usize> {
        self.kind.is_graph().then_some(self.taps)
    }
}

fn default_choice(cfg: &ExperimentConfig, kind: ControllerKind) -> Choice {
    let (features, taps) = cfg.architecture(kind);
    Choice { kind, features, taps }
}

/// Controllers run in every realization, and whether the Riccati row is
/// emitted.
pub(crate) fn controller_plan(cfg: &ExperimentConfig) -> (bool, Vec<Choice>) {
    let d = |k| default_choice(cfg, k);
    match cfg.experiment {
        ExperimentKind::SingleTrain => (false, vec![d(cfg.single_controller)]),
        ExperimentKind::ControllerComparison => (
            true,
            vec![
                d(ControllerKind::Mlp),
                d(ControllerKind::Dmlp),
                d(ControllerKind::GraphFilter),
                d(ControllerKind::Gnn),
            ],
        ),
        ExperimentKind::HyperparamSweep => {
            let mut v = Vec::new();
            for (kind, fs, ks) in [
                (ControllerKind::GraphFilter, &cfg.sweep_gf_features, &cfg.sweep_gf_taps),
                (ControllerKind::Gnn, &cfg.sweep_gnn_features, &cfg.sweep_gnn_taps),
            ] {
                for &features in fs {
                    for &taps in ks {
                        v.push(Choice { kind, features, taps });
                    }
                }
            }
            (true, v)
        }
        ExperimentKind::SystemMatrixStudy => (true, cfg.study_controllers.iter().map(|&k| d(k)).collect()),
        ExperimentKind::TransferStudy => (true, cfg.transfer_controllers.iter().map(|&k| d(k)).collect()),
    }
}

#[derive(Clone, Copy, Debug)]
struct Job {
    graph_index: usize,
    system_index: usize,
    structure: Structure,
    norm_a: f64,
}

fn jobs(cfg: &ExperimentConfig) -> Vec<Job> {
    let settings: Vec<(Structure, f64)> = match cfg.experiment {
        ExperimentKind::SystemMatrixStudy => cfg
            .study_structures
            .iter()
            .flat_map(|&s| cfg.norm_a_grid.iter().map(move |&a| (s, a)))
            .collect(),
        _ => vec![(cfg.structure, cfg.norm_a)],
    };
    let mut out = Vec::new();
    for (structure, norm_a) in settings {
        for graph_index in 0..cfg.graph_realizations {
            for system_index in 0..cfg.system_realizations {
                out.push(Job {
                    graph_index,
                    system_index,
                    structure,
                    norm_a,
                });
            }
        }
    }
    out
}

pub fn graph_seed(master: u64, graph_index: usize) -> u64 {
    derive_seed(master, &format!("graph/{graph_index}"))
}

pub fn system_seed(master: u64, graph_index: usize, system_index: usize) -> u64 {
    derive_seed(master, &format!("system/{graph_index}/{system_index}"))
}

/// A graph, plant and test set together with the Riccati denominator.
struct Testbed {
    graph: GraphSystem,
    plant: LinearPlant,
    test: Vec<DenseMatrix>,
    optim_cost: f64,
    optim_std: f64,
    optim_divergences: usize,
    optim_ms: u64,
}

fn testbed(cfg: &ExperimentConfig, n: usize, structure: Structure, norm_a: f64, gseed: u64, sseed: u64, test_seed: u64) -> Result<Testbed> {
    let graph = generate_graph_with(
        GraphOptions {
            n,
            k: cfg.knn,
            require_connected: cfg.require_connected,
        },
        gseed,
    )?;
    let plant = generate_plant(&graph, &cfg.plant_spec(structure, norm_a), sseed)?;
    let test = sample_initial_states(n, cfg.train.test_size, test_seed)?;
    let started = Instant::now();
    let sol = solve_riccati(&plant)?;
    let eval = evaluate(&plant, &sol, &test)?;
    Ok(Testbed {
        graph,
        plant,
        test,
        optim_cost: eval.mean_cost,
        optim_std: eval.traj_std,
        optim_divergences: eval.divergences,
        optim_ms: elapsed_ms(cfg, started),
    })
}

/// The denominator divided by itself: 1, or infinite when the Riccati
/// rollout itself diverged.
fn self_normalized(cost: f64) -> f64 {
    if cost.is_finite() && cost > 0.0 {
        1.0
    } else {
        f64::INFINITY
    }
}

fn elapsed_ms(cfg: &ExperimentConfig, started: Instant) -> u64 {
    if cfg.record_wall_time {
        started.elapsed().as_millis() as u64
    } else {
        0
    }
}

struct Context<'a> {
    cfg: &'a ExperimentConfig,
    job: Job,
    graph_seed: u64,
    system_seed: u64,
}

impl Context<'_> {
    fn record(&self, controller: String, choice: Option<&Choice>, n_test: usize) -> ResultRecord {
        ResultRecord {
            experiment: self.cfg.experiment,
            controller,
            features: choice.map(|c| c.features),
            taps: choice.and_then(Choice::csv_taps),
            mu: choice.map(|c| self.cfg.train.learning_rate_for(c.kind)),
            n_train: self.cfg.n,
            n_test_graph: n_test,
            graph_seed: self.graph_seed,
            system_seed: self.system_seed,
            norm_a: self.job.norm_a,
            structure: self.job.structure,
            raw_cost: f64::INFINITY,
            normalized_cost: f64::INFINITY,
            traj_std: 0.0,
            divergences: self.cfg.train.test_size,
            stability_simplified: None,
            stability_prop1: None,
            wall_ms: 0,
            stability: None,
            error: None,
        }
    }

    fn failed(&self, controller: String, choice: Option<&Choice>, n_test: usize, err: &crate::error::Error) -> ResultRecord {
        let mut r = self.record(controller, choice, n_test);
        r.error = Some(err.to_string());
        if let Some(c) = choice {
            if c.kind.is_graph() {
                r.stability_simplified = Some(false);
                r.stability_prop1 = Some(false);
            }
        }
        r
    }
}

fn fill_eval(
    rec: &mut ResultRecord,
    bed: &Testbed,
    controller: &dyn Policy,
) -> Result<()> {
    let eval = evaluate(&bed.plant, controller, &bed.test)?;
    rec.raw_cost = eval.mean_cost;
    rec.normalized_cost = eval.mean_cost / bed.optim_cost;
    rec.traj_std = eval.traj_std;
    rec.divergences = eval.divergences;
    Ok(())
}

fn certify(rec: &mut ResultRecord, bed: &Testbed, controller: &BoundController) -> Result<()> {
    if controller.params.kind().is_graph() {
        let report = check_stability(&certificate_constants(&bed.plant, &bed.graph, &controller.params)?);
        rec.stability_simplified = Some(report.verdict_simplified);
        rec.stability_prop1 = Some(report.verdict_prop1);
        rec.stability = Some(report);
    }
    Ok(())
}

fn run_job(cfg: &ExperimentConfig, job: Job, with_optim: bool, plan: &[Choice]) -> Vec<ResultRecord> {
    let gseed = graph_seed(cfg.seed, job.graph_index);
    let sseed = system_seed(cfg.seed, job.graph_index, job.system_index);
    let ctx = Context {
        cfg,
        job,
        graph_seed: gseed,
        system_seed: sseed,
    };
    let n = cfg.n;
    let bed = match testbed(cfg, n, job.structure, job.norm_a, gseed, sseed, derive_seed(sseed, "test")) {
        Ok(b) => b,
        Err(e) => {
            let mut out = Vec::new();
            if with_optim {
                out.push(ctx.failed("Optim".into(), None, n, &e));
            }
            out.extend(plan.iter().map(|c| ctx.failed(c.kind.to_string(), Some(c), n, &e)));
            return out;
        }
    };

    let mut out = Vec::new();
    if with_optim {
        let mut r = ctx.record("Optim".into(), None, n);
        r.raw_cost = bed.optim_cost;
        r.normalized_cost = self_normalized(bed.optim_cost);
        r.traj_std = bed.optim_std;
        r.divergences = bed.optim_divergences;
        r.wall_ms = bed.optim_ms;
        out.push(r);
    }

    let transfer_beds: Vec<(usize, Result<Testbed>)> = if cfg.experiment == ExperimentKind::TransferStudy {
        cfg.transfer_sizes
            .iter()
            .map(|&m| {
                let bed = testbed(
                    cfg,
                    m,
                    job.structure,
                    job.norm_a,
                    derive_seed(gseed, &format!("transfer/{m}")),
                    derive_seed(sseed, &format!("transfer/{m}")),
                    derive_seed(sseed, &format!("transfer/{m}/test")),
                );
                (m, bed)
            })
            .collect()
    } else {
        Vec::new()
    };
    if with_optim {
        for (m, bed) in &transfer_beds {
            let mut r = ctx.record("Optim".into(), None, *m);
            match bed {
                Ok(b) => {
                    r.raw_cost = b.optim_cost;
                    r.normalized_cost = self_normalized(b.optim_cost);
                    r.traj_std = b.optim_std;
                    r.divergences = b.optim_divergences;
                    r.wall_ms = b.optim_ms;
                }
                Err(e) => r.error = Some(e.to_string()),
            }
            out.push(r);
        }
    }

    let train_states = sample_initial_states(n, cfg.train.train_size, derive_seed(sseed, "train"));
    let valid_states = sample_initial_states(n, cfg.train.valid_size, derive_seed(sseed, "valid"));
    for choice in plan {
        let name = choice.kind.to_string();
        let started = Instant::now();
        let trained = (|| -> Result<BoundController> {
            let spec = choice.spec(n, cfg.nonlinearity)?;
            let label = choice.label();
            let init = init_params(&spec, derive_seed(sseed, &format!("init/{label}")))?;
            let tc = TrainConfig {
                seed: derive_seed(sseed, &format!("shuffle/{label}")),
                ..cfg.train.clone()
            };
            let (tr, va) = match (&train_states, &valid_states) {
                (Ok(t), Ok(v)) => (t, v),
                (Err(e), _) | (_, Err(e)) => return Err(crate::error::Error::InvalidArgument(e.to_string())),
            };
            let report = train_from(&bed.plant, &bed.graph, init, &tc, tr, va)?;
            BoundController::bind(report.best_params, &bed.graph)
        })();
        let controller = match trained {
            Ok(c) => c,
            Err(e) => {
                out.push(ctx.failed(name.clone(), Some(choice), n, &e));
                for (m, _) in &transfer_beds {
                    out.push(ctx.failed(name.clone(), Some(choice), *m, &e));
                }
                continue;
            }
        };
        let mut rec = ctx.record(name.clone(), Some(choice), n);
        let outcome = fill_eval(&mut rec, &bed, &controller).and_then(|_| certify(&mut rec, &bed, &controller));
        rec.wall_ms = elapsed_ms(cfg, started);
        match outcome {
            Ok(()) => out.push(rec),
            Err(e) => out.push(ctx.failed(name.clone(), Some(choice), n, &e)),
        }

        for (m, tbed) in &transfer_beds {
            let started = Instant::now();
            let result = (|| -> Result<ResultRecord> {
                let tbed = tbed.as_ref().map_err(|e| crate::error::Error::InvalidArgument(e.to_string()))?;
                let moved = match choice.kind {
                    ControllerKind::Dmlp => {
                        let p = replicate_dmlp(&controller.params, *m, derive_seed(sseed, &format!("replicate/{m}")))?;
                        BoundController::bind(p, &tbed.graph)?
                    }
                    _ => rebind(&controller.params, &tbed.graph)?,
                };
                let mut rec = ctx.record(name.clone(), Some(choice), *m);
                fill_eval(&mut rec, tbed, &moved)?;
                certify(&mut rec, tbed, &moved)?;
                rec.wall_ms = elapsed_ms(cfg, started);
                Ok(rec)
            })();
            out.push(result.unwrap_or_else(|e| ctx.failed(name.clone(), Some(choice), *m, &e)));
        }
    }
    out
}

/// Runs every realization of an experiment. Realizations run in parallel;
/// records come back in job order.
pub fn run_records(cfg: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    cfg.validate()?;
    let (with_optim, plan) = controller_plan(cfg);
    let per_job: Vec<Vec<ResultRecord>> = jobs(cfg)
        .into_par_iter()
        .map(|job| run_job(cfg, job, with_optim, &plan))
        .collect();
    Ok(per_job.into_iter().flatten().collect())
}
