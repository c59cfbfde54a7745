//! `netctrl`: generate networked plants, train and evaluate distributed
//! controllers, check the stability certificate and run seeded sweeps.
//!
//! Exit codes: 0 success, 2 configuration error, 3 divergent cells or
//! runs, 4 I/O or checkpoint error.

mod overrides;

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use netctrl::checkpoint::{load_checkpoint, save_checkpoint, CheckpointBundle};
use netctrl::experiment::{
    aggregate, controller_spec, graph_seed, read_results_csv, run_experiment, system_seed, ExperimentConfig,
    SummaryRow, NORMALIZATION_NOTE,
};
use netctrl::network::{generate_graph_with, GraphOptions};
use netctrl::rng::derive_seed;
use netctrl::training::sample_initial_states;
use netctrl::{
    certificate_constants, check_stability, evaluate, generate_plant, rebind, replicate_dmlp, rollout, solve_riccati,
    train, BoundController, ControllerKind, Error, GraphSystem, LinearPlant, StabilityReport,
};
use overrides::Layers;

#[derive(Parser)]
#[command(name = "netctrl", version, about = "Learned distributed controllers for networked linear systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a graph and a plant and store them in a checkpoint.
    Generate(GenerateArgs),
    /// Train a controller on a stored system.
    Train(TrainArgs),
    /// Evaluate a trained controller against the Riccati controller.
    Eval(EvalArgs),
    /// Compute the closed-loop stability certificate of a GF/GNN controller.
    Certify(CertifyArgs),
    /// Run a seeded realization sweep.
    Experiment(ExperimentArgs),
    /// Aggregate a results CSV into a summary table.
    Report(ReportArgs),
}

/// Config file plus overrides shared by every config-driven subcommand.
#[derive(Args)]
struct ConfigArgs {
    /// TOML file with experiment configuration keys.
    #[arg(long, short = 'c')]
    config: Option<PathBuf>,
    /// Override any config key, e.g. `--set train.batch_size=10`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    assignments: Vec<String>,
}

#[derive(Args)]
struct SystemArgs {
    #[arg(long)]
    n: Option<i64>,
    #[arg(long)]
    horizon: Option<i64>,
    #[arg(long)]
    knn: Option<i64>,
    /// `graph_aligned` or `unstructured`.
    #[arg(long)]
    structure: Option<String>,
    #[arg(long)]
    norm_a: Option<f64>,
    #[arg(long)]
    norm_b: Option<f64>,
}

impl SystemArgs {
    fn apply(&self, l: &mut Layers) -> Result<()> {
        l.set_opt("n", self.n)?;
        l.set_opt("horizon", self.horizon)?;
        l.set_opt("knn", self.knn)?;
        l.set_opt("structure", self.structure.clone())?;
        l.set_opt("norm_a", self.norm_a)?;
        l.set_opt("norm_b", self.norm_b)
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    system: SystemArgs,
    /// Master seed; the graph and plant match realization (0, 0) of a sweep
    /// with the same seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, short = 'o')]
    output: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Checkpoint holding the graph and plant.
    #[arg(long)]
    system: PathBuf,
    /// GF, GNN, MLP or DMLP.
    #[arg(long, default_value = "GNN")]
    controller: ControllerKind,
    /// Hidden width (hidden units per node for the MLP).
    #[arg(long)]
    features: Option<usize>,
    #[arg(long)]
    taps: Option<usize>,
    #[arg(long)]
    epochs: Option<i64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, short = 'o')]
    output: PathBuf,
    /// Also write the learning curve as CSV.
    #[arg(long)]
    curve: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint of a trained controller.
    #[arg(long)]
    model: PathBuf,
    /// Evaluate on another system; GF/GNN are rebound, D-MLP is replicated.
    #[arg(long)]
    system: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    test_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the first test trajectory as CSV.
    #[arg(long)]
    trajectory: Option<PathBuf>,
}

#[derive(Args)]
struct CertifyArgs {
    #[arg(long)]
    model: PathBuf,
    /// Also write the report as a one-row CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    system: SystemArgs,
    #[arg(long)]
    experiment: Option<String>,
    #[arg(long)]
    graph_realizations: Option<i64>,
    #[arg(long)]
    system_realizations: Option<i64>,
    #[arg(long)]
    epochs: Option<i64>,
    #[arg(long)]
    seed: u64,
    /// Directory for the results, summary and curve files. Without it the
    /// results CSV goes to stdout.
    #[arg(long, short = 'o')]
    output_dir: Option<PathBuf>,
    /// Write wall_ms as 0 so repeated runs are byte-identical.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Results CSV written by `experiment`.
    results: PathBuf,
    /// Write the aggregated cells as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

fn layers(args: &ConfigArgs) -> Result<Layers> {
    let mut l = Layers::from_file(args.config.as_deref())?;
    for a in &args.assignments {
        l.assign(a).context("invalid configuration")?;
    }
    Ok(l)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn load(path: &Path) -> Result<CheckpointBundle> {
    load_checkpoint(path).with_context(|| format!("loading {}", path.display()))
}

fn system_of(bundle: &CheckpointBundle, path: &Path) -> Result<(GraphSystem, LinearPlant)> {
    match (&bundle.graph, &bundle.plant) {
        (Some(g), Some(p)) => Ok((g.clone(), p.clone())),
        _ => bail!(Error::InvalidArgument(format!("{} holds no graph and plant", path.display()))),
    }
}

fn generate(args: GenerateArgs) -> Result<()> {
    let mut l = layers(&args.config)?;
    args.system.apply(&mut l)?;
    l.set_opt("seed", args.seed.map(|s| s as i64))?;
    let cfg = l.build()?;
    let gseed = graph_seed(cfg.seed, 0);
    let sseed = system_seed(cfg.seed, 0, 0);
    let graph = generate_graph_with(
        GraphOptions {
            n: cfg.n,
            k: cfg.knn,
            require_connected: cfg.require_connected,
        },
        gseed,
    )?;
    let plant = generate_plant(&graph, &cfg.plant_spec(cfg.structure, cfg.norm_a), sseed)?;
    let bundle = CheckpointBundle {
        graph: Some(graph),
        plant: Some(plant),
        seeds: BTreeMap::from([
            ("master".to_string(), cfg.seed),
            ("graph".to_string(), gseed),
            ("system".to_string(), sseed),
        ]),
        ..CheckpointBundle::default()
    };
    save_checkpoint(&args.output, &bundle).with_context(|| format!("writing {}", args.output.display()))?;
    eprintln!("wrote {} ({} nodes, horizon {})", args.output.display(), cfg.n, cfg.horizon);
    Ok(())
}

fn train_cmd(args: TrainArgs) -> Result<()> {
    let mut l = layers(&args.config)?;
    l.set_opt("train.epochs", args.epochs)?;
    l.set_opt("train.seed", args.seed.map(|s| s as i64))?;
    if let Some(mu) = args.learning_rate {
        let key = if args.controller == ControllerKind::Mlp { "train.mlp_learning_rate" } else { "train.learning_rate" };
        l.set(key, mu)?;
    }
    let cfg = l.build()?;
    let mut bundle = load(&args.system)?;
    let (graph, plant) = system_of(&bundle, &args.system)?;
    let (width, taps) = cfg.architecture(args.controller);
    let spec = controller_spec(
        args.controller,
        graph.n(),
        args.features.unwrap_or(width),
        args.taps.unwrap_or(taps),
        cfg.nonlinearity,
    )?;
    let report = train(&plant, &graph, &spec, &cfg.train)?;
    eprintln!(
        "best validation cost {:.6} at step {} ({} divergent batches)",
        report.best_validation_cost, report.best_step, report.divergence_events
    );
    if let Some(path) = &args.curve {
        let mut w = create(path)?;
        report.write_csv(&mut w)?;
        w.flush()?;
    }
    bundle.params = Some(report.best_params.clone());
    bundle.report = Some(report);
    bundle.seeds.insert("train".to_string(), cfg.train.seed);
    save_checkpoint(&args.output, &bundle).with_context(|| format!("writing {}", args.output.display()))?;
    Ok(())
}

fn eval_cmd(args: EvalArgs) -> Result<()> {
    let model = load(&args.model)?;
    let params = model
        .params
        .clone()
        .ok_or_else(|| Error::InvalidArgument(format!("{} holds no controller", args.model.display())))?;
    let (graph, plant) = match &args.system {
        Some(path) => system_of(&load(path)?, path)?,
        None => system_of(&model, &args.model)?,
    };
    let controller = match params.kind() {
        ControllerKind::GraphFilter | ControllerKind::Gnn => rebind(&params, &graph)?,
        ControllerKind::Dmlp if params.spec.n_bound != Some(graph.n()) => {
            let replicated = replicate_dmlp(&params, graph.n(), derive_seed(args.seed, "replicate"))?;
            BoundController::bind(replicated, &graph)?
        }
        _ => BoundController::bind(params, &graph)?,
    };
    let states = sample_initial_states(graph.n(), args.test_size, derive_seed(args.seed, "test"))?;
    let learned = evaluate(&plant, &controller, &states)?;
    let optim = evaluate(&plant, &solve_riccati(&plant)?, &states)?;
    if let Some(path) = &args.trajectory {
        let mut w = create(path)?;
        rollout(&plant, &states[0], &controller, None)?.write_csv(&mut w)?;
        w.flush()?;
    }
    let finite = |v: f64| v.is_finite().then_some(v);
    let out = serde_json::json!({
        "controller": controller.params.kind().as_str(),
        "n": graph.n(),
        "test_size": args.test_size,
        "raw_cost": finite(learned.mean_cost),
        "optimal_cost": finite(optim.mean_cost),
        "normalized_cost": finite(learned.mean_cost / optim.mean_cost),
        "traj_std": learned.traj_std,
        "divergences": learned.divergences,
        "normalization": NORMALIZATION_NOTE,
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    if learned.divergences > 0 {
        bail!(Error::Diverged {
            step: plant.horizon,
            completed: args.test_size - learned.divergences,
        });
    }
    Ok(())
}

fn certify_cmd(args: CertifyArgs) -> Result<()> {
    let model = load(&args.model)?;
    let (graph, plant) = system_of(&model, &args.model)?;
    let params = model
        .params
        .ok_or_else(|| Error::InvalidArgument(format!("{} holds no controller", args.model.display())))?;
    let report = check_stability(&certificate_constants(&plant, &graph, &params)?);
    println!("{}", report.to_json()?);
    if let Some(path) = &args.csv {
        let mut w = create(path)?;
        StabilityReport::write_csv(std::slice::from_ref(&report), &mut w)?;
        w.flush()?;
    }
    Ok(())
}

/// Returns whether any cell diverged.
fn experiment_cmd(args: ExperimentArgs) -> Result<bool> {
    let mut l = layers(&args.config)?;
    args.system.apply(&mut l)?;
    l.set_opt("experiment", args.experiment.clone())?;
    l.set_opt("graph_realizations", args.graph_realizations)?;
    l.set_opt("system_realizations", args.system_realizations)?;
    l.set_opt("train.epochs", args.epochs)?;
    l.set("seed", args.seed as i64)?;
    if args.no_timing {
        l.set("record_wall_time", false)?;
    }
    let mut cfg: ExperimentConfig = l.build()?;
    if let Some(dir) = &args.output_dir {
        cfg.output_dir = Some(dir.clone());
    }
    let out = run_experiment(&cfg)?;
    if cfg.output_dir.is_none() {
        let stdout = io::stdout();
        out.write_results_csv(stdout.lock())?;
    }
    for r in out.records.iter().filter(|r| r.error.is_some()) {
        eprintln!(
            "cell {} (graph {}, system {}, n {}) failed: {}",
            r.controller,
            r.graph_seed,
            r.system_seed,
            r.n_test_graph,
            r.error.as_deref().unwrap_or_default()
        );
    }
    print_table(&out.summary, &mut io::stderr())?;
    Ok(out.partial_failure())
}

fn print_table(rows: &[SummaryRow], w: &mut dyn Write) -> io::Result<()> {
    let opt = |v: Option<usize>| v.map_or("-".to_string(), |x| x.to_string());
    writeln!(
        w,
        "{:<8} {:>4} {:>3} {:>5} {:>7} {:>14} {:>5} {:>20} {:>6} {:>5}",
        "ctrl", "F", "K", "n", "norm_a", "structure", "count", "normalized (std)", "div", "cert"
    )?;
    for r in rows {
        let s = &r.normalized;
        let cost = if s.mean.is_finite() { format!("{:.4} ({:.4})", s.mean, s.std) } else { "inf".to_string() };
        writeln!(
            w,
            "{:<8} {:>4} {:>3} {:>5} {:>7} {:>14} {:>5} {:>20} {:>6} {:>5}",
            r.key.controller,
            opt(r.key.features),
            opt(r.key.taps),
            r.key.n_test_graph,
            r.key.norm_a,
            r.key.structure.as_str(),
            s.count,
            cost,
            r.divergences,
            r.certified
        )?;
    }
    Ok(())
}

fn report_cmd(args: ReportArgs) -> Result<()> {
    let file = File::open(&args.results).with_context(|| format!("opening {}", args.results.display()))?;
    let records = read_results_csv(file).with_context(|| format!("reading {}", args.results.display()))?;
    if records.is_empty() {
        bail!(Error::InvalidArgument(format!("{} has no records", args.results.display())));
    }
    let rows = aggregate(&records);
    print_table(&rows, &mut io::stdout().lock())?;
    if let Some(path) = &args.json {
        let mut w = create(path)?;
        serde_json::to_writer_pretty(&mut w, &rows)?;
        writeln!(w)?;
        w.flush()?;
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Io(_)
                | Error::Csv(_)
                | Error::Json(_)
                | Error::CheckpointVersion { .. }
                | Error::CheckpointTruncated(_)
                | Error::CheckpointSchema(_) => 4,
                e if e.is_divergence() => 3,
                Error::TrainingDiverged { .. } | Error::Timeout { .. } => 3,
                _ => 2,
            };
        }
        if cause.is::<io::Error>() {
            return 4;
        }
        if cause.is::<toml::de::Error>() {
            return 2;
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => generate(a).map(|_| false),
        Command::Train(a) => train_cmd(a).map(|_| false),
        Command::Eval(a) => eval_cmd(a).map(|_| false),
        Command::Certify(a) => certify_cmd(a).map(|_| false),
        Command::Experiment(a) => experiment_cmd(a),
        Command::Report(a) => report_cmd(a).map(|_| false),
    };
    match result {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => {
            eprintln!("warning: some cells diverged");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
