//! Graph filters `Σ_k S^k X H_k` and their vector-Jacobian products.
//!
//! Filters are evaluated by repeated one-hop shifts (`z ← S z`); `S^k` is
//! never formed.

use crate::linalg::{gemm_acc, DenseMatrix};

use super::Nonlinearity;

/// Geometry of one filter layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct FilterShape {
    pub fin: usize,
    pub fout: usize,
    pub taps: usize,
}

impl FilterShape {
    pub fn tap_len(&self) -> usize {
        self.fin * self.fout
    }

    pub fn len(&self) -> usize {
        self.tap_len() * (self.taps + 1)
    }
}

/// Per-layer quantities kept for the backward pass.
#[derive(Clone, Debug)]
pub(crate) struct LayerTape {
    /// `S^k X_in` for `k = 0..=K`.
    pub shifted: Vec<DenseMatrix>,
    /// Filter output before the nonlinearity.
    pub pre: DenseMatrix,
    /// After the nonlinearity; absent on the last layer.
    pub post: Option<DenseMatrix>,
}

/// `y += z · h` with `h` a row-major `fin x fout` block.
#[inline]
fn acc_right(z: &DenseMatrix, h: &[f64], fout: usize, y: &mut DenseMatrix) {
    let fin = z.cols();
    let out = y.as_mut_slice();
    for i in 0..z.rows() {
        let zrow = z.row(i);
        let yrow = &mut out[i * fout..(i + 1) * fout];
        for (f, &zv) in zrow.iter().enumerate().take(fin) {
            if zv == 0.0 {
                continue;
            }
            for (yo, ho) in yrow.iter_mut().zip(&h[f * fout..(f + 1) * fout]) {
                *yo += zv * ho;
            }
        }
    }
}

/// `y += d · hᵀ` with `h` a row-major `fin x fout` block and `d` `N x fout`.
#[inline]
fn acc_right_t(d: &DenseMatrix, h: &[f64], fin: usize, y: &mut DenseMatrix) {
    let fout = d.cols();
    let out = y.as_mut_slice();
    for i in 0..d.rows() {
        let drow = d.row(i);
        let yrow = &mut out[i * fin..(i + 1) * fin];
        for (f, yv) in yrow.iter_mut().enumerate() {
            let hrow = &h[f * fout..(f + 1) * fout];
            *yv += drow.iter().zip(hrow).map(|(a, b)| a * b).sum::<f64>();
        }
    }
}

pub(crate) fn shift(s: &DenseMatrix, z: &DenseMatrix) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(s.rows(), z.cols());
    gemm_acc(s, z, &mut out);
    out
}

fn shift_t(s: &DenseMatrix, z: &DenseMatrix) -> DenseMatrix {
    s.t_matmul(z).expect("square support")
}

/// Evaluates one filter layer; optionally records the shifted inputs.
pub(crate) fn filter_forward(
    s: &DenseMatrix,
    x: &DenseMatrix,
    taps: &[f64],
    shape: FilterShape,
    keep: Option<&mut Vec<DenseMatrix>>,
) -> DenseMatrix {
    debug_assert_eq!(taps.len(), shape.len());
    let tl = shape.tap_len();
    let mut y = DenseMatrix::zeros(x.rows(), shape.fout);
    acc_right(x, &taps[..tl], shape.fout, &mut y);
    match keep {
        Some(store) => {
            store.clear();
            store.push(x.clone());
            for k in 1..=shape.taps {
                let z = shift(s, &store[k - 1]);
                acc_right(&z, &taps[k * tl..(k + 1) * tl], shape.fout, &mut y);
                store.push(z);
            }
        }
        None => {
            let mut z = x.clone();
            for k in 1..=shape.taps {
                z = shift(s, &z);
                acc_right(&z, &taps[k * tl..(k + 1) * tl], shape.fout, &mut y);
            }
        }
    }
    y
}

/// Back-propagates `d_out` through one layer. Accumulates tap gradients
/// into `grad` and returns the gradient with respect to the layer input.
pub(crate) fn filter_backward(
    s: &DenseMatrix,
    shifted: &[DenseMatrix],
    taps: &[f64],
    shape: FilterShape,
    d_out: &DenseMatrix,
    grad: &mut [f64],
) -> DenseMatrix {
    let tl = shape.tap_len();
    let fout = shape.fout;
    for (k, z) in shifted.iter().enumerate() {
        let g = &mut grad[k * tl..(k + 1) * tl];
        for i in 0..z.rows() {
            let drow = d_out.row(i);
            for (f, &zv) in z.row(i).iter().enumerate() {
                if zv == 0.0 {
                    continue;
                }
                for (gv, dv) in g[f * fout..(f + 1) * fout].iter_mut().zip(drow) {
                    *gv += zv * dv;
                }
            }
        }
    }
    // Σ_k (Sᵀ)^k d_out H_kᵀ, Horner from the highest tap down.
    let n = d_out.rows();
    let mut acc = DenseMatrix::zeros(n, shape.fin);
    acc_right_t(d_out, &taps[shape.taps * tl..(shape.taps + 1) * tl], shape.fin, &mut acc);
    for k in (0..shape.taps).rev() {
        acc = shift_t(s, &acc);
        acc_right_t(d_out, &taps[k * tl..(k + 1) * tl], shape.fin, &mut acc);
    }
    acc
}

/// Full graph network forward. The nonlinearity follows every layer but
/// the last.
pub(crate) fn network_forward(
    s: &DenseMatrix,
    x: &DenseMatrix,
    params: &[f64],
    shapes: &[FilterShape],
    sigma: Nonlinearity,
    mut tape: Option<&mut Vec<LayerTape>>,
) -> DenseMatrix {
    if let Some(t) = tape.as_deref_mut() {
        t.clear();
    }
    let mut offset = 0;
    let mut current = x.clone();
    let last = shapes.len() - 1;
    for (l, shape) in shapes.iter().enumerate() {
        let taps = &params[offset..offset + shape.len()];
        offset += shape.len();
        let pre = match tape.as_deref_mut() {
            Some(t) => {
                let mut shifted = Vec::with_capacity(shape.taps + 1);
                let pre = filter_forward(s, &current, taps, *shape, Some(&mut shifted));
                t.push(LayerTape {
                    shifted,
                    pre: pre.clone(),
                    post: None,
                });
                pre
            }
            None => filter_forward(s, &current, taps, *shape, None),
        };
        current = if l == last { pre } else { sigma.apply_matrix(&pre) };
        if let Some(t) = tape.as_deref_mut() {
            if l != last {
                t[l].post = Some(current.clone());
            }
        }
    }
    current
}

pub(crate) fn network_backward(
    s: &DenseMatrix,
    tape: &[LayerTape],
    params: &[f64],
    shapes: &[FilterShape],
    sigma: Nonlinearity,
    d_out: &DenseMatrix,
    grad: &mut [f64],
) -> DenseMatrix {
    let offsets: Vec<usize> = shapes
        .iter()
        .scan(0, |acc, sh| {
            let o = *acc;
            *acc += sh.len();
            Some(o)
        })
        .collect();
    let last = shapes.len() - 1;
    let mut d = d_out.clone();
    for l in (0..shapes.len()).rev() {
        if l != last {
            let pre = tape[l].pre.as_slice();
            let post = tape[l].post.as_ref().expect("hidden layer output").as_slice();
            for ((dv, &p), &q) in d.as_mut_slice().iter_mut().zip(pre).zip(post) {
                *dv *= sigma.derivative_at(p, q);
            }
        }
        let range = offsets[l]..offsets[l] + shapes[l].len();
        d = filter_backward(
            s,
            &tape[l].shifted,
            &params[range.clone()],
            shapes[l],
            &d,
            &mut grad[range],
        );
    }
    d
}
