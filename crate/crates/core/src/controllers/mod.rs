//! Learnable state-feedback controllers.
//!
//! Four families share one flat parameter vector layout so that the
//! optimizer and the checkpoint format can treat them uniformly:
//!
//! * `GF`: a cascade of linear graph filter banks.
//! * `GNN`: graph filter banks with a pointwise nonlinearity between
//!   layers (none after the output layer).
//! * `MLP`: a centralized two-layer perceptron on the full state vector.
//! * `DMLP`: one independent two-layer perceptron per node, fed only that
//!   node's scalar state.
//!
//! Filter taps are stored in `(layer, k, row, col)` order.

mod dense;
mod graph;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dynamics::Policy;
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::network::GraphSystem;
use crate::rng::Stream;

use dense::{DmlpShape, DmlpTape, MlpShape, MlpTape};
use graph::{FilterShape, LayerTape};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ControllerKind {
    #[serde(rename = "GF")]
    GraphFilter,
    #[serde(rename = "GNN")]
    Gnn,
    #[serde(rename = "MLP")]
    Mlp,
    #[serde(rename = "DMLP")]
    Dmlp,
}

impl ControllerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ControllerKind::GraphFilter => "GF",
            ControllerKind::Gnn => "GNN",
            ControllerKind::Mlp => "MLP",
            ControllerKind::Dmlp => "DMLP",
        }
    }

    pub fn is_graph(self) -> bool {
        matches!(self, ControllerKind::GraphFilter | ControllerKind::Gnn)
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace('-', "").as_str() {
            "GF" => Ok(ControllerKind::GraphFilter),
            "GNN" => Ok(ControllerKind::Gnn),
            "MLP" => Ok(ControllerKind::Mlp),
            "DMLP" => Ok(ControllerKind::Dmlp),
            _ => Err(Error::InvalidArgument(format!("unknown controller kind {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Nonlinearity {
    #[default]
    Tanh,
    Relu,
    Identity,
}

impl Nonlinearity {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Nonlinearity::Tanh => x.tanh(),
            Nonlinearity::Relu => x.max(0.0),
            Nonlinearity::Identity => x,
        }
    }

    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Nonlinearity::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Nonlinearity::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Nonlinearity::Identity => 1.0,
        }
    }

    /// Derivative at `pre` given `post = apply(pre)`, which saves a `tanh`.
    #[inline]
    pub(crate) fn derivative_at(self, pre: f64, post: f64) -> f64 {
        match self {
            Nonlinearity::Tanh => 1.0 - post * post,
            _ => self.derivative(pre),
        }
    }

    pub fn apply_matrix(self, m: &DenseMatrix) -> DenseMatrix {
        match self {
            Nonlinearity::Identity => m.clone(),
            _ => m.map(|v| self.apply(v)),
        }
    }
}

/// Architecture of a controller.
///
/// `layer_widths` holds `F₀..F_L` for graph controllers, `[N, hidden, N]`
/// for the MLP and `[1, hidden, 1]` for the per-node bank. `taps` holds
/// `K₁..K_L` for graph controllers and is empty otherwise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControllerSpec {
    pub kind: ControllerKind,
    pub layer_widths: Vec<usize>,
    pub taps: Vec<usize>,
    pub nonlinearity: Nonlinearity,
    /// Node count for MLP/DMLP; graph controllers are size-free.
    pub n_bound: Option<usize>,
}

impl ControllerSpec {
    pub fn graph_filter(features: &[usize], taps: &[usize]) -> Result<Self> {
        let spec = ControllerSpec {
            kind: ControllerKind::GraphFilter,
            layer_widths: features.to_vec(),
            taps: taps.to_vec(),
            nonlinearity: Nonlinearity::Identity,
            n_bound: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn gnn(features: &[usize], taps: &[usize], nonlinearity: Nonlinearity) -> Result<Self> {
        let spec = ControllerSpec {
            kind: ControllerKind::Gnn,
            layer_widths: features.to_vec(),
            taps: taps.to_vec(),
            nonlinearity,
            n_bound: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Two-layer bank `F = 1 → hidden → 1` with `K₁ = taps`, `K₂ = 0`.
    pub fn two_layer(kind: ControllerKind, hidden: usize, taps: usize) -> Result<Self> {
        match kind {
            ControllerKind::GraphFilter => Self::graph_filter(&[1, hidden, 1], &[taps, 0]),
            ControllerKind::Gnn => Self::gnn(&[1, hidden, 1], &[taps, 0], Nonlinearity::Tanh),
            other => Err(Error::WrongKind {
                expected: "GF or GNN",
                found: other.as_str(),
            }),
        }
    }

    /// Centralized MLP with `hidden_factor · n` hidden units.
    pub fn mlp(n: usize, hidden_factor: usize, nonlinearity: Nonlinearity) -> Result<Self> {
        let spec = ControllerSpec {
            kind: ControllerKind::Mlp,
            layer_widths: vec![n, hidden_factor * n, n],
            taps: Vec::new(),
            nonlinearity,
            n_bound: Some(n),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn dmlp(n: usize, hidden: usize, nonlinearity: Nonlinearity) -> Result<Self> {
        let spec = ControllerSpec {
            kind: ControllerKind::Dmlp,
            layer_widths: vec![1, hidden, 1],
            taps: Vec::new(),
            nonlinearity,
            n_bound: Some(n),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.layer_widths.contains(&0) {
            return bad(format!("layer widths must be positive: {:?}", self.layer_widths));
        }
        match self.kind {
            ControllerKind::GraphFilter | ControllerKind::Gnn => {
                if self.layer_widths.len() < 2 || self.taps.len() + 1 != self.layer_widths.len() {
                    return bad(format!(
                        "graph controller needs L taps for L+1 widths, got widths {:?} taps {:?}",
                        self.layer_widths, self.taps
                    ));
                }
                if self.kind == ControllerKind::GraphFilter && self.nonlinearity != Nonlinearity::Identity {
                    return bad("graph filter banks are linear".into());
                }
            }
            ControllerKind::Mlp => {
                let n = self.n_bound.unwrap_or(0);
                if self.layer_widths.len() != 3 || self.layer_widths[0] != n || self.layer_widths[2] != n {
                    return bad(format!("MLP widths must be [N, hidden, N], got {:?}", self.layer_widths));
                }
            }
            ControllerKind::Dmlp => {
                if self.n_bound.unwrap_or(0) == 0 || self.layer_widths.len() != 3 || self.layer_widths[0] != 1 || self.layer_widths[2] != 1 {
                    return bad(format!("DMLP widths must be [1, hidden, 1], got {:?}", self.layer_widths));
                }
            }
        }
        Ok(())
    }

    pub fn input_features(&self) -> usize {
        match self.kind {
            ControllerKind::Mlp | ControllerKind::Dmlp => 1,
            _ => self.layer_widths[0],
        }
    }

    pub fn output_features(&self) -> usize {
        match self.kind {
            ControllerKind::Mlp | ControllerKind::Dmlp => 1,
            _ => *self.layer_widths.last().expect("validated"),
        }
    }

    fn filter_shapes(&self) -> Vec<FilterShape> {
        self.layer_widths
            .windows(2)
            .zip(&self.taps)
            .map(|(w, &k)| FilterShape {
                fin: w[0],
                fout: w[1],
                taps: k,
            })
            .collect()
    }

    fn mlp_shape(&self) -> MlpShape {
        MlpShape {
            n: self.layer_widths[0],
            hidden: self.layer_widths[1],
        }
    }

    fn dmlp_shape(&self) -> DmlpShape {
        DmlpShape {
            n: self.n_bound.unwrap_or(0),
            hidden: self.layer_widths[1],
        }
    }

    /// Number of learnable scalars.
    pub fn param_count(&self) -> usize {
        match self.kind {
            ControllerKind::GraphFilter | ControllerKind::Gnn => self.filter_shapes().iter().map(FilterShape::len).sum(),
            ControllerKind::Mlp => self.mlp_shape().len(),
            ControllerKind::Dmlp => self.dmlp_shape().len(),
        }
    }

    /// Total number of one-hop shifts, `Σ K_ℓ`.
    pub fn total_taps(&self) -> usize {
        self.taps.iter().sum()
    }
}

/// Architecture plus the flat parameter vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControllerParams {
    pub spec: ControllerSpec,
    pub values: Vec<f64>,
}

/// Intermediate values recorded by a forward pass.
pub struct Tape(TapeInner);

enum TapeInner {
    Graph(Vec<LayerTape>),
    Mlp(MlpTape),
    Dmlp(DmlpTape),
}

impl ControllerParams {
    pub fn new(spec: ControllerSpec, values: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if values.len() != spec.param_count() {
            return Err(Error::shape("ControllerParams", spec.param_count(), values.len()));
        }
        Ok(ControllerParams { spec, values })
    }

    pub fn kind(&self) -> ControllerKind {
        self.spec.kind
    }

    /// Tap `H_{layer,k}` as an `F_{ℓ-1} x F_ℓ` matrix.
    pub fn tap(&self, layer: usize, k: usize) -> Result<DenseMatrix> {
        if !self.kind().is_graph() {
            return Err(Error::WrongKind {
                expected: "GF or GNN",
                found: self.kind().as_str(),
            });
        }
        let shapes = self.spec.filter_shapes();
        let shape = shapes
            .get(layer)
            .filter(|s| k <= s.taps)
            .ok_or_else(|| Error::InvalidArgument(format!("no tap ({layer}, {k})")))?;
        let offset: usize = shapes[..layer].iter().map(FilterShape::len).sum::<usize>() + k * shape.tap_len();
        DenseMatrix::from_vec(shape.fin, shape.fout, self.values[offset..offset + shape.tap_len()].to_vec())
    }

    fn check_input(&self, support: Option<&DenseMatrix>, x: &DenseMatrix) -> Result<()> {
        if x.cols() != self.spec.input_features() {
            return Err(Error::shape("controller input", self.spec.input_features(), x.cols()));
        }
        if self.kind().is_graph() {
            let s = support.ok_or_else(|| Error::InvalidArgument("graph controller needs a support matrix".into()))?;
            if s.shape() != (x.rows(), x.rows()) {
                return Err(Error::shape("support", x.rows(), format!("{:?}", s.shape())));
            }
        } else if self.spec.n_bound != Some(x.rows()) {
            return Err(Error::shape("controller node count", self.spec.n_bound.unwrap_or(0), x.rows()));
        }
        Ok(())
    }

    pub fn forward(&self, support: Option<&DenseMatrix>, x: &DenseMatrix) -> Result<DenseMatrix> {
        self.check_input(support, x)?;
        let spec = &self.spec;
        Ok(match spec.kind {
            ControllerKind::GraphFilter | ControllerKind::Gnn => graph::network_forward(
                support.expect("checked"),
                x,
                &self.values,
                &spec.filter_shapes(),
                spec.nonlinearity,
                None,
            ),
            ControllerKind::Mlp => {
                let (u, _) = dense::mlp_forward(&self.values, spec.mlp_shape(), spec.nonlinearity, x.as_slice());
                DenseMatrix::column_vector(&u)
            }
            ControllerKind::Dmlp => {
                let (u, _) = dense::dmlp_forward(&self.values, spec.dmlp_shape(), spec.nonlinearity, x.as_slice());
                DenseMatrix::column_vector(&u)
            }
        })
    }

    /// Forward pass that keeps what [`ControllerParams::backward`] needs.
    pub fn forward_taped(&self, support: Option<&DenseMatrix>, x: &DenseMatrix) -> Result<(DenseMatrix, Tape)> {
        self.check_input(support, x)?;
        let spec = &self.spec;
        Ok(match spec.kind {
            ControllerKind::GraphFilter | ControllerKind::Gnn => {
                let mut layers = Vec::with_capacity(spec.taps.len());
                let u = graph::network_forward(
                    support.expect("checked"),
                    x,
                    &self.values,
                    &spec.filter_shapes(),
                    spec.nonlinearity,
                    Some(&mut layers),
                );
                (u, Tape(TapeInner::Graph(layers)))
            }
            ControllerKind::Mlp => {
                let (u, t) = dense::mlp_forward(&self.values, spec.mlp_shape(), spec.nonlinearity, x.as_slice());
                (DenseMatrix::column_vector(&u), Tape(TapeInner::Mlp(t)))
            }
            ControllerKind::Dmlp => {
                let (u, t) = dense::dmlp_forward(&self.values, spec.dmlp_shape(), spec.nonlinearity, x.as_slice());
                (DenseMatrix::column_vector(&u), Tape(TapeInner::Dmlp(t)))
            }
        })
    }

    /// Vector-Jacobian product: adds `∂⟨d_out, u⟩/∂θ` into `grad` and
    /// returns `∂⟨d_out, u⟩/∂x`.
    pub fn backward(
        &self,
        support: Option<&DenseMatrix>,
        tape: &Tape,
        d_out: &DenseMatrix,
        grad: &mut [f64],
    ) -> Result<DenseMatrix> {
        if grad.len() != self.values.len() {
            return Err(Error::shape("gradient buffer", self.values.len(), grad.len()));
        }
        let spec = &self.spec;
        Ok(match &tape.0 {
            TapeInner::Graph(layers) => graph::network_backward(
                support.ok_or_else(|| Error::InvalidArgument("graph controller needs a support matrix".into()))?,
                layers,
                &self.values,
                &spec.filter_shapes(),
                spec.nonlinearity,
                d_out,
                grad,
            ),
            TapeInner::Mlp(t) => {
                let dx = dense::mlp_backward(&self.values, spec.mlp_shape(), spec.nonlinearity, t, d_out.as_slice(), grad);
                DenseMatrix::column_vector(&dx)
            }
            TapeInner::Dmlp(t) => {
                let dx = dense::dmlp_backward(&self.values, spec.dmlp_shape(), spec.nonlinearity, t, d_out.as_slice(), grad);
                DenseMatrix::column_vector(&dx)
            }
        })
    }
}

/// `S x`
pub fn graph_shift(s: &DenseMatrix, x: &DenseMatrix) -> Result<DenseMatrix> {
    if !s.is_square() || s.cols() != x.rows() {
        return Err(Error::shape("graph_shift", format!("support {0}x{0}", x.rows()), format!("{:?}", s.shape())));
    }
    Ok(graph::shift(s, x))
}

/// `Σ_k S^k X H_k` for explicit taps `H_0..H_K`.
pub fn graph_filter(s: &DenseMatrix, taps: &[DenseMatrix], x: &DenseMatrix) -> Result<DenseMatrix> {
    let first = taps
        .first()
        .ok_or_else(|| Error::InvalidArgument("graph filter needs at least one tap".into()))?;
    let (fin, fout) = first.shape();
    if taps.iter().any(|h| h.shape() != (fin, fout)) {
        return Err(Error::InvalidArgument("filter taps differ in shape".into()));
    }
    if x.cols() != fin {
        return Err(Error::shape("graph_filter", fin, x.cols()));
    }
    if !s.is_square() || s.rows() != x.rows() {
        return Err(Error::shape("graph_filter support", x.rows(), format!("{:?}", s.shape())));
    }
    let flat: Vec<f64> = taps.iter().flat_map(|h| h.as_slice().iter().copied()).collect();
    let shape = FilterShape {
        fin,
        fout,
        taps: taps.len() - 1,
    };
    Ok(graph::filter_forward(s, x, &flat, shape, None))
}

pub fn gnn_forward(s: &DenseMatrix, params: &ControllerParams, x: &DenseMatrix) -> Result<DenseMatrix> {
    if !params.kind().is_graph() {
        return Err(Error::WrongKind {
            expected: "GF or GNN",
            found: params.kind().as_str(),
        });
    }
    params.forward(Some(s), x)
}

pub fn mlp_forward(params: &ControllerParams, x: &DenseMatrix) -> Result<DenseMatrix> {
    if params.kind() != ControllerKind::Mlp {
        return Err(Error::WrongKind {
            expected: "MLP",
            found: params.kind().as_str(),
        });
    }
    params.forward(None, x)
}

pub fn dmlp_forward(params: &ControllerParams, x: &DenseMatrix) -> Result<DenseMatrix> {
    if params.kind() != ControllerKind::Dmlp {
        return Err(Error::WrongKind {
            expected: "DMLP",
            found: params.kind().as_str(),
        });
    }
    params.forward(None, x)
}

/// Uniform `[-r, r]` weights with `r = 1/√fan_in`; biases start at zero.
pub fn init_params(spec: &ControllerSpec, seed: u64) -> Result<ControllerParams> {
    spec.validate()?;
    let mut s = Stream::new(seed, "controller/init");
    let mut values = Vec::with_capacity(spec.param_count());
    let mut draw = |values: &mut Vec<f64>, count: usize, fan_in: usize| {
        let r = 1.0 / (fan_in as f64).sqrt();
        values.extend((0..count).map(|_| s.uniform_in(-r, r)));
    };
    match spec.kind {
        ControllerKind::GraphFilter | ControllerKind::Gnn => {
            for shape in spec.filter_shapes() {
                draw(&mut values, shape.len(), shape.fin * (shape.taps + 1));
            }
        }
        ControllerKind::Mlp => {
            let sh = spec.mlp_shape();
            draw(&mut values, sh.hidden * sh.n, sh.n);
            values.extend(std::iter::repeat_n(0.0, sh.hidden));
            draw(&mut values, sh.n * sh.hidden, sh.hidden);
            values.extend(std::iter::repeat_n(0.0, sh.n));
        }
        ControllerKind::Dmlp => {
            let sh = spec.dmlp_shape();
            for _ in 0..sh.n {
                draw(&mut values, sh.hidden, 1);
                values.extend(std::iter::repeat_n(0.0, sh.hidden));
                draw(&mut values, sh.hidden, sh.hidden);
                values.push(0.0);
            }
        }
    }
    ControllerParams::new(spec.clone(), values)
}

/// Parameters paired with the support they act on; a time-invariant
/// [`Policy`].
#[derive(Clone, Debug)]
pub struct BoundController {
    pub params: ControllerParams,
    pub support: Option<DenseMatrix>,
}

impl BoundController {
    /// Binds any controller kind to a graph, checking MLP/DMLP node counts.
    pub fn bind(params: ControllerParams, graph: &GraphSystem) -> Result<Self> {
        if !params.kind().is_graph() && params.spec.n_bound != Some(graph.n()) {
            return Err(Error::shape("controller node count", params.spec.n_bound.unwrap_or(0), graph.n()));
        }
        let support = params.kind().is_graph().then(|| graph.support.clone());
        Ok(BoundController { params, support })
    }

    pub fn support(&self) -> Option<&DenseMatrix> {
        self.support.as_ref()
    }

    pub fn control(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        self.params.forward(self.support.as_ref(), x)
    }
}

impl Policy for BoundController {
    fn act(&self, _t: usize, x: &DenseMatrix) -> Result<DenseMatrix> {
        self.control(x)
    }
}

/// Reuses trained graph-filter taps on another graph without retraining.
pub fn rebind(params: &ControllerParams, new_graph: &GraphSystem) -> Result<BoundController> {
    if !params.kind().is_graph() {
        return Err(Error::WrongKind {
            expected: "GF or GNN",
            found: params.kind().as_str(),
        });
    }
    Ok(BoundController {
        params: params.clone(),
        support: Some(new_graph.support.clone()),
    })
}

/// Extends a per-node bank to `new_n` nodes. Existing nodes keep their
/// networks; each added node copies the network of a uniformly drawn
/// original node.
pub fn replicate_dmlp(params: &ControllerParams, new_n: usize, seed: u64) -> Result<ControllerParams> {
    if params.kind() != ControllerKind::Dmlp {
        return Err(Error::WrongKind {
            expected: "DMLP",
            found: params.kind().as_str(),
        });
    }
    let shape = params.spec.dmlp_shape();
    if new_n < shape.n {
        return Err(Error::InvalidArgument(format!(
            "cannot shrink a {}-node bank to {new_n} nodes",
            shape.n
        )));
    }
    let stride = shape.stride();
    let mut s = Stream::new(seed, "dmlp/replicate");
    let mut values = params.values.clone();
    values.reserve((new_n - shape.n) * stride);
    for _ in shape.n..new_n {
        let src = s.index(shape.n);
        values.extend_from_slice(&params.values[src * stride..(src + 1) * stride]);
    }
    let spec = ControllerSpec {
        n_bound: Some(new_n),
        ..params.spec.clone()
    };
    ControllerParams::new(spec, values)
}

#[cfg(test)]
mod tests;
