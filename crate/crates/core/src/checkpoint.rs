//! Versioned binary container for graphs, plants, controllers and
//! training reports.
//!
//! Layout: the 8-byte magic `NETCTRL1`, a little-endian `u64` header
//! length, a UTF-8 JSON header, then every array listed in the header as
//! contiguous little-endian `f64` values in declared order. All floating
//! point data lives in the arrays, so a round trip is bit-exact.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::controllers::{ControllerParams, ControllerSpec};
use crate::dynamics::LinearPlant;
use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, SymmetricEigen};
use crate::network::GraphSystem;
use crate::training::{TrainReport, ValidationPoint};

pub const MAGIC: &[u8; 8] = b"NETCTRL1";
pub const FORMAT_VERSION: u32 = 1;

/// Everything a checkpoint can hold; each part is optional.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CheckpointBundle {
    pub graph: Option<GraphSystem>,
    pub plant: Option<LinearPlant>,
    pub params: Option<ControllerParams>,
    pub report: Option<TrainReport>,
    pub seeds: BTreeMap<String, u64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    version: u32,
    seeds: BTreeMap<String, u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    graph_nodes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    plant_horizon: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    spec: Option<ControllerSpec>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    report: Option<ReportMeta>,
    arrays: Vec<ArrayMeta>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReportMeta {
    validation_steps: Vec<usize>,
    best_step: usize,
    divergence_events: usize,
    best_spec: ControllerSpec,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
struct ArrayMeta {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Default)]
struct Arrays {
    meta: Vec<ArrayMeta>,
    data: Vec<Vec<f64>>,
}

impl Arrays {
    fn push(&mut self, name: &str, rows: usize, cols: usize, data: Vec<f64>) {
        debug_assert_eq!(rows * cols, data.len());
        self.meta.push(ArrayMeta {
            name: name.to_string(),
            rows,
            cols,
        });
        self.data.push(data);
    }

    fn push_matrix(&mut self, name: &str, m: &DenseMatrix) {
        self.push(name, m.rows(), m.cols(), m.as_slice().to_vec());
    }

    fn take(&mut self, name: &str) -> Result<(usize, usize, Vec<f64>)> {
        let idx = self
            .meta
            .iter()
            .position(|m| m.name == name)
            .ok_or_else(|| Error::CheckpointSchema(format!("missing array {name:?}")))?;
        let meta = self.meta.remove(idx);
        let data = self.data.remove(idx);
        Ok((meta.rows, meta.cols, data))
    }

    fn take_matrix(&mut self, name: &str) -> Result<DenseMatrix> {
        let (rows, cols, data) = self.take(name)?;
        DenseMatrix::from_vec(rows, cols, data).map_err(|e| Error::CheckpointSchema(format!("array {name:?}: {e}")))
    }

    fn take_vec(&mut self, name: &str, len: usize) -> Result<Vec<f64>> {
        let (rows, cols, data) = self.take(name)?;
        if rows * cols != len {
            return Err(Error::CheckpointSchema(format!(
                "array {name:?} has {} values, expected {len}",
                rows * cols
            )));
        }
        Ok(data)
    }
}

/// Serializes a bundle to bytes.
pub fn encode(bundle: &CheckpointBundle) -> Result<Vec<u8>> {
    let mut arrays = Arrays::default();
    let mut header = Header {
        version: FORMAT_VERSION,
        seeds: bundle.seeds.clone(),
        graph_nodes: None,
        plant_horizon: None,
        spec: None,
        report: None,
        arrays: Vec::new(),
    };
    if let Some(g) = &bundle.graph {
        let n = g.n();
        header.graph_nodes = Some(n);
        let pos: Vec<f64> = g.positions.iter().flat_map(|p| p.iter().copied()).collect();
        arrays.push("graph.positions", n, 2, pos);
        arrays.push_matrix("graph.adjacency", &g.adjacency);
        arrays.push_matrix("graph.support", &g.support);
        arrays.push("graph.eigenvalues", n, 1, g.support_eigen.eigenvalues.clone());
        arrays.push_matrix("graph.eigenvectors", &g.support_eigen.eigenvectors);
    }
    if let Some(p) = &bundle.plant {
        header.plant_horizon = Some(p.horizon);
        for (name, m) in [
            ("plant.a", &p.a),
            ("plant.b", &p.b),
            ("plant.b_bar", &p.b_bar),
            ("plant.q", &p.q),
            ("plant.r", &p.r),
        ] {
            arrays.push_matrix(name, m);
        }
    }
    if let Some(params) = &bundle.params {
        header.spec = Some(params.spec.clone());
        arrays.push("params.values", params.values.len(), 1, params.values.clone());
    }
    if let Some(r) = &bundle.report {
        header.report = Some(ReportMeta {
            validation_steps: r.validation.iter().map(|v| v.step).collect(),
            best_step: r.best_step,
            divergence_events: r.divergence_events,
            best_spec: r.best_params.spec.clone(),
        });
        arrays.push("report.train_costs", r.train_costs.len(), 1, r.train_costs.clone());
        let vc: Vec<f64> = r.validation.iter().map(|v| v.cost).collect();
        arrays.push("report.validation_costs", vc.len(), 1, vc);
        arrays.push("report.best_validation_cost", 1, 1, vec![r.best_validation_cost]);
        arrays.push(
            "report.best_params",
            r.best_params.values.len(),
            1,
            r.best_params.values.clone(),
        );
    }
    header.arrays = arrays.meta;
    let json = serde_json::to_vec(&header)?;
    let payload: usize = arrays.data.iter().map(Vec::len).sum();
    let mut out = Vec::with_capacity(16 + json.len() + 8 * payload);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for arr in &arrays.data {
        for v in arr {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Parses bytes produced by [`encode`].
pub fn decode(bytes: &[u8]) -> Result<CheckpointBundle> {
    if bytes.len() < 8 {
        return Err(Error::CheckpointTruncated("missing magic".into()));
    }
    if &bytes[..7] != b"NETCTRL" {
        return Err(Error::CheckpointSchema("not a checkpoint file".into()));
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::CheckpointVersion {
            expected: String::from_utf8_lossy(MAGIC).into_owned(),
            found: String::from_utf8_lossy(&bytes[..8]).into_owned(),
        });
    }
    let len_bytes = bytes
        .get(8..16)
        .ok_or_else(|| Error::CheckpointTruncated("missing header length".into()))?;
    let header_len = u64::from_le_bytes(len_bytes.try_into().expect("8 bytes")) as usize;
    let header_end = 16usize
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| Error::CheckpointTruncated("header extends past end of file".into()))?;
    let header: Header = serde_json::from_slice(&bytes[16..header_end])
        .map_err(|e| Error::CheckpointSchema(format!("header: {e}")))?;
    if header.version != FORMAT_VERSION {
        return Err(Error::CheckpointVersion {
            expected: FORMAT_VERSION.to_string(),
            found: header.version.to_string(),
        });
    }

    let mut arrays = Arrays::default();
    let mut pos = header_end;
    for meta in header.arrays {
        let count = meta
            .rows
            .checked_mul(meta.cols)
            .ok_or_else(|| Error::CheckpointSchema(format!("array {:?} is too large", meta.name)))?;
        let end = count
            .checked_mul(8)
            .and_then(|b| b.checked_add(pos))
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| Error::CheckpointTruncated(format!("array {:?} is incomplete", meta.name)))?;
        let data = bytes[pos..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        pos = end;
        arrays.meta.push(meta);
        arrays.data.push(data);
    }
    if pos != bytes.len() {
        return Err(Error::CheckpointSchema(format!("{} trailing bytes", bytes.len() - pos)));
    }

    let graph = match header.graph_nodes {
        Some(n) => {
            let positions = arrays.take_vec("graph.positions", 2 * n)?;
            let adjacency = arrays.take_matrix("graph.adjacency")?;
            let support = arrays.take_matrix("graph.support")?;
            let eigenvalues = arrays.take_vec("graph.eigenvalues", n)?;
            let eigenvectors = arrays.take_matrix("graph.eigenvectors")?;
            if adjacency.shape() != (n, n) || support.shape() != (n, n) || eigenvectors.shape() != (n, n) {
                return Err(Error::CheckpointSchema("graph matrices disagree with node count".into()));
            }
            Some(GraphSystem {
                positions: positions.chunks_exact(2).map(|p| [p[0], p[1]]).collect(),
                adjacency,
                support,
                support_eigen: SymmetricEigen {
                    eigenvalues,
                    eigenvectors,
                },
            })
        }
        None => None,
    };
    let plant = match header.plant_horizon {
        Some(horizon) => {
            let a = arrays.take_matrix("plant.a")?;
            let b = arrays.take_matrix("plant.b")?;
            let b_bar = arrays.take_matrix("plant.b_bar")?;
            let q = arrays.take_matrix("plant.q")?;
            let r = arrays.take_matrix("plant.r")?;
            Some(
                LinearPlant::new(a, b, b_bar, q, r, horizon)
                    .map_err(|e| Error::CheckpointSchema(format!("plant: {e}")))?,
            )
        }
        None => None,
    };
    let params = match header.spec {
        Some(spec) => {
            let values = arrays.take_vec("params.values", spec.param_count())?;
            Some(ControllerParams::new(spec, values).map_err(|e| Error::CheckpointSchema(format!("params: {e}")))?)
        }
        None => None,
    };
    let report = match header.report {
        Some(meta) => {
            let (_, _, train_costs) = arrays.take("report.train_costs")?;
            let costs = arrays.take_vec("report.validation_costs", meta.validation_steps.len())?;
            let best = arrays.take_vec("report.best_validation_cost", 1)?[0];
            let best_values = arrays.take_vec("report.best_params", meta.best_spec.param_count())?;
            Some(TrainReport {
                train_costs,
                validation: meta
                    .validation_steps
                    .iter()
                    .zip(costs)
                    .map(|(&step, cost)| ValidationPoint { step, cost })
                    .collect(),
                best_params: ControllerParams::new(meta.best_spec, best_values)
                    .map_err(|e| Error::CheckpointSchema(format!("report: {e}")))?,
                best_validation_cost: best,
                best_step: meta.best_step,
                divergence_events: meta.divergence_events,
            })
        }
        None => None,
    };
    if let Some(extra) = arrays.meta.first() {
        return Err(Error::CheckpointSchema(format!("unexpected array {:?}", extra.name)));
    }
    Ok(CheckpointBundle {
        graph,
        plant,
        params,
        report,
        seeds: header.seeds,
    })
}

pub fn save_checkpoint(path: impl AsRef<Path>, bundle: &CheckpointBundle) -> Result<()> {
    fs::write(path, encode(bundle)?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<CheckpointBundle> {
    decode(&fs::read(path)?)
}
