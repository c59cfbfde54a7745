use std::collections::BTreeMap;

use netctrl::checkpoint::{decode, encode, load_checkpoint, save_checkpoint, CheckpointBundle, MAGIC};
use netctrl::training::sample_initial_states;
use netctrl::{
    evaluate, generate_graph, generate_plant, init_params, train, BoundController, ControllerSpec, Error,
    Nonlinearity, PlantSpec, TrainConfig,
};

fn trained_bundle() -> CheckpointBundle {
    let graph = generate_graph(6, 2, 11).unwrap();
    let plant = generate_plant(
        &graph,
        &PlantSpec {
            horizon: 6,
            norm_a: 0.9,
            ..PlantSpec::default()
        },
        12,
    )
    .unwrap();
    let spec = ControllerSpec::gnn(&[1, 4, 1], &[2, 0], Nonlinearity::Tanh).unwrap();
    let config = TrainConfig {
        epochs: 2,
        batch_size: 4,
        train_size: 8,
        valid_size: 4,
        test_size: 4,
        seed: 3,
        ..TrainConfig::default()
    };
    let report = train(&plant, &graph, &spec, &config).unwrap();
    CheckpointBundle {
        graph: Some(graph),
        plant: Some(plant),
        params: Some(report.best_params.clone()),
        report: Some(report),
        seeds: BTreeMap::from([("graph".to_string(), 11), ("system".to_string(), u64::MAX)]),
    }
}

#[test]
fn trained_gnn_round_trips_exactly() {
    let bundle = trained_bundle();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("gnn.ckpt");
    save_checkpoint(&path, &bundle).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(back, bundle);

    let states = sample_initial_states(6, 10, 99).unwrap();
    let run = |b: &CheckpointBundle| {
        let graph = b.graph.as_ref().unwrap();
        let ctrl = BoundController::bind(b.params.clone().unwrap(), graph).unwrap();
        evaluate(b.plant.as_ref().unwrap(), &ctrl, &states).unwrap()
    };
    let (x, y) = (run(&bundle), run(&back));
    assert_eq!(x.costs, y.costs);
    assert_eq!(x.mean_cost.to_bits(), y.mean_cost.to_bits());
}

#[test]
fn encoding_is_deterministic_and_starts_with_magic() {
    let bundle = trained_bundle();
    let bytes = encode(&bundle).unwrap();
    assert_eq!(&bytes[..8], MAGIC);
    assert_eq!(bytes, encode(&decode(&bytes).unwrap()).unwrap());
}

#[test]
fn parameter_array_of_160() {
    let spec = ControllerSpec::two_layer(netctrl::ControllerKind::Gnn, 32, 3).unwrap();
    let params = init_params(&spec, 5).unwrap();
    assert_eq!(params.values.len(), 160);
    let bundle = CheckpointBundle {
        params: Some(params),
        ..CheckpointBundle::default()
    };
    let back = decode(&encode(&bundle).unwrap()).unwrap();
    assert_eq!(back.params.unwrap().values.len(), 160);
    assert!(back.graph.is_none() && back.plant.is_none() && back.report.is_none());
}

#[test]
fn empty_bundle() {
    let bundle = CheckpointBundle::default();
    assert_eq!(decode(&encode(&bundle).unwrap()).unwrap(), bundle);
}

fn header_bounds(bytes: &[u8]) -> (usize, usize) {
    let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    (16, 16 + len)
}

fn with_header(bytes: &[u8], edit: impl Fn(&mut serde_json::Value)) -> Vec<u8> {
    let (lo, hi) = header_bounds(bytes);
    let mut header: serde_json::Value = serde_json::from_slice(&bytes[lo..hi]).unwrap();
    edit(&mut header);
    let text = serde_json::to_vec(&header).unwrap();
    let mut out = bytes[..8].to_vec();
    out.extend_from_slice(&(text.len() as u64).to_le_bytes());
    out.extend_from_slice(&text);
    out.extend_from_slice(&bytes[hi..]);
    out
}

#[test]
fn version_mismatch() {
    let bytes = encode(&trained_bundle()).unwrap();
    let bumped = with_header(&bytes, |h| h["version"] = 2.into());
    assert!(matches!(decode(&bumped), Err(Error::CheckpointVersion { .. })));
    let mut magic = bytes.clone();
    magic[7] = b'2';
    assert!(matches!(decode(&magic), Err(Error::CheckpointVersion { .. })));
}

#[test]
fn truncation_is_detected() {
    let bytes = encode(&trained_bundle()).unwrap();
    for cut in [0, 5, 12, 40, bytes.len() - 1] {
        assert!(
            matches!(decode(&bytes[..cut]), Err(Error::CheckpointTruncated(_))),
            "cut at {cut}"
        );
    }
}

#[test]
fn schema_errors() {
    let bytes = encode(&trained_bundle()).unwrap();
    let mut foreign = bytes.clone();
    foreign[0] = b'X';
    assert!(matches!(decode(&foreign), Err(Error::CheckpointSchema(_))));

    let mut trailing = bytes.clone();
    trailing.push(0);
    assert!(matches!(decode(&trailing), Err(Error::CheckpointSchema(_))));

    let unknown = with_header(&bytes, |h| h["colour"] = "blue".into());
    assert!(matches!(decode(&unknown), Err(Error::CheckpointSchema(_))));

    let mut garbled = bytes.clone();
    garbled[16] = b'#';
    assert!(matches!(decode(&garbled), Err(Error::CheckpointSchema(_))));
}

#[test]
fn nonfinite_values_survive() {
    let mut bundle = trained_bundle();
    let report = bundle.report.as_mut().unwrap();
    report.train_costs[0] = f64::INFINITY;
    let back = decode(&encode(&bundle).unwrap()).unwrap();
    assert_eq!(back.report.unwrap().train_costs[0], f64::INFINITY);
}
