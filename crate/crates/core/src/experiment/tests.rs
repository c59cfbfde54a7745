use super::*;
use crate::controllers::ControllerKind;
use crate::training::TrainConfig;

fn smoke(kind: ExperimentKind) -> ExperimentConfig {
    ExperimentConfig {
        experiment: kind,
        n: 5,
        horizon: 5,
        knn: 2,
        graph_realizations: 1,
        system_realizations: 1,
        gnn_features: 4,
        gf_features: 4,
        gnn_taps: 2,
        gf_taps: 2,
        mlp_hidden_factor: 2,
        dmlp_hidden: 4,
        sweep_gnn_features: vec![2, 4],
        sweep_gnn_taps: vec![1, 2],
        sweep_gf_features: vec![2],
        sweep_gf_taps: vec![1],
        norm_a_grid: vec![0.5, 0.9],
        transfer_sizes: vec![8, 10],
        train: TrainConfig {
            epochs: 1,
            batch_size: 4,
            train_size: 8,
            valid_size: 4,
            test_size: 6,
            ..TrainConfig::default()
        },
        seed: 7,
        record_wall_time: false,
        ..ExperimentConfig::default()
    }
}

fn record(norm: f64) -> ResultRecord {
    ResultRecord {
        experiment: ExperimentKind::SingleTrain,
        controller: "GNN".into(),
        features: Some(4),
        taps: Some(2),
        mu: Some(0.01),
        n_train: 5,
        n_test_graph: 5,
        graph_seed: 1,
        system_seed: 2,
        norm_a: 0.995,
        structure: Structure::GraphAligned,
        raw_cost: norm * 10.0,
        normalized_cost: norm,
        traj_std: 0.0,
        divergences: usize::from(!norm.is_finite()),
        stability_simplified: Some(false),
        stability_prop1: Some(false),
        wall_ms: 0,
        stability: None,
        error: None,
    }
}

#[test]
fn aggregate_examples() {
    let rows = aggregate(&[record(1.5)]);
    assert_eq!(rows.len(), 1);
    assert_eq!((rows[0].normalized.mean, rows[0].normalized.std), (1.5, 0.0));

    let rows = aggregate(&[record(1.0), record(3.0)]);
    assert_eq!(rows[0].normalized.mean, 2.0);
    assert!((rows[0].normalized.std - 2f64.sqrt()).abs() < 1e-15);
    assert_eq!(rows[0].normalized.count, 2);

    let rows = aggregate(&[record(1.25), record(f64::INFINITY)]);
    assert_eq!(rows[0].normalized.mean, 1.25);
    assert_eq!(rows[0].normalized.divergent, 1);
    assert_eq!(rows[0].divergences, 1);

    let rows = aggregate(&[record(f64::INFINITY)]);
    assert!(rows[0].normalized.mean.is_infinite());

    let mut other = record(2.0);
    other.controller = "GF".into();
    let rows = aggregate(&[record(1.0), other, record(3.0)]);
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].key.controller, "GNN");
    assert_eq!(rows[0].normalized.count, 2);
}

#[test]
fn single_train_smoke_emits_one_finite_record() {
    let out = run_experiment(&smoke(ExperimentKind::SingleTrain)).unwrap();
    assert_eq!(out.records.len(), 1);
    let r = &out.records[0];
    assert_eq!(r.controller, "GNN");
    assert!(r.raw_cost.is_finite() && r.normalized_cost.is_finite() && r.traj_std.is_finite());
    assert_eq!(r.divergences, 0);
    assert!(r.stability_simplified.is_some());
    assert!(!out.partial_failure());
}

#[test]
fn comparison_normalizes_optim_to_one() {
    let out = run_experiment(&smoke(ExperimentKind::ControllerComparison)).unwrap();
    let names: Vec<&str> = out.records.iter().map(|r| r.controller.as_str()).collect();
    assert_eq!(names, ["Optim", "MLP", "DMLP", "GF", "GNN"]);
    assert_eq!(out.records[0].normalized_cost, 1.0);
    assert_eq!(out.records[0].mu, None);
    assert_eq!(out.records[1].mu, Some(0.001));
    assert_eq!(out.records[1].taps, None);
    for r in &out.records {
        assert_eq!(r.graph_seed, out.records[0].graph_seed);
        assert_eq!(r.system_seed, out.records[0].system_seed);
    }
}

#[test]
fn sweep_and_study_shapes() {
    let out = run_experiment(&smoke(ExperimentKind::HyperparamSweep)).unwrap();
    assert_eq!(out.records.len(), 1 + 1 + 4);
    let out = run_experiment(&smoke(ExperimentKind::SystemMatrixStudy)).unwrap();
    assert_eq!(out.records.len(), 2 * 2 * 4);
    let mut curve = Vec::new();
    assert!(out.write_curve_csv(&mut curve).unwrap());
    let text = String::from_utf8(curve).unwrap();
    assert!(text.lines().nth(1).unwrap().starts_with("cost_vs_norm_a,Optim"));
}

#[test]
fn transfer_study_evaluates_larger_graphs() {
    let out = run_experiment(&smoke(ExperimentKind::TransferStudy)).unwrap();
    // Optim at 3 sizes, then 3 controllers at 3 sizes each.
    assert_eq!(out.records.len(), 3 + 3 * 3);
    let sizes: Vec<usize> = out.records.iter().filter(|r| r.controller == "DMLP").map(|r| r.n_test_graph).collect();
    assert_eq!(sizes, [5, 8, 10]);
    assert!(out.records.iter().all(|r| r.n_train == 5));
    assert!(out.records.iter().filter(|r| r.controller == "Optim").all(|r| r.normalized_cost == 1.0));
}

#[test]
fn config_validation() {
    assert!(ExperimentConfig::default().validate().is_ok());
    let mut c = smoke(ExperimentKind::TransferStudy);
    c.transfer_sizes = vec![5];
    assert!(c.validate().is_err());
    let mut c = smoke(ExperimentKind::TransferStudy);
    c.transfer_controllers = vec![ControllerKind::Mlp];
    assert!(c.validate().is_err());
    let mut c = smoke(ExperimentKind::SingleTrain);
    c.knn = 5;
    assert!(c.validate().is_err());
    let mut c = smoke(ExperimentKind::SingleTrain);
    c.graph_realizations = 0;
    assert!(c.validate().is_err());
    assert_eq!("transfer-study".parse::<ExperimentKind>().unwrap(), ExperimentKind::TransferStudy);
    assert!("table".parse::<ExperimentKind>().is_err());
}

#[test]
fn results_csv_has_fixed_columns() {
    let mut buf = Vec::new();
    write_results_csv(&[record(1.5), record(f64::INFINITY)], &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "experiment,controller,F,K,mu,n_train,n_test_graph,graph_seed,system_seed,norm_a,structure,\
raw_cost,normalized_cost,traj_std,divergences,stability_simplified,stability_prop1,wall_ms"
    );
    assert_eq!(
        lines.next().unwrap(),
        "single_train,GNN,4,2,0.01,5,5,1,2,0.995,graph_aligned,15,1.5,0,0,false,false,0"
    );
    assert!(lines.next().unwrap().contains(",inf,inf,"));
}

#[test]
fn failed_cells_are_recorded_not_fatal() {
    let mut c = smoke(ExperimentKind::SingleTrain);
    c.norm_a = 1e6;
    let out = run_experiment(&c).unwrap();
    assert_eq!(out.records.len(), 1);
    assert!(out.records[0].is_divergent());
    assert!(out.records[0].error.is_some());
    assert!(out.partial_failure());
    let mut buf = Vec::new();
    out.write_summary_json(&mut buf).unwrap();
    let json: serde_json::Value = serde_json::from_slice(&buf).unwrap();
    assert_eq!(json["failures"].as_array().unwrap().len(), 1);
    assert!(json["cells"][0]["mean_normalized_cost"].is_null());
    assert_eq!(json["normalization"], NORMALIZATION_NOTE);
}

#[test]
fn same_seed_same_bytes() {
    let c = smoke(ExperimentKind::ControllerComparison);
    let (a, b) = (run_experiment(&c).unwrap(), run_experiment(&c).unwrap());
    let (mut x, mut y) = (Vec::new(), Vec::new());
    a.write_results_csv(&mut x).unwrap();
    b.write_results_csv(&mut y).unwrap();
    assert_eq!(x, y);
    let (mut x, mut y) = (Vec::new(), Vec::new());
    a.write_summary_json(&mut x).unwrap();
    b.write_summary_json(&mut y).unwrap();
    assert_eq!(x, y);
}

#[test]
fn results_csv_reads_back() {
    let mut divergent = record(f64::INFINITY);
    divergent.features = None;
    divergent.stability_prop1 = None;
    let records = vec![record(1.5), divergent];
    let mut buf = Vec::new();
    write_results_csv(&records, &mut buf).unwrap();
    let back = read_results_csv(buf.as_slice()).unwrap();
    assert_eq!(back, records);
    assert!(read_results_csv("a,b\n1,2\n".as_bytes()).is_err());
}
