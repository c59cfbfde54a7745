//! Fully connected baselines: a centralized two-layer MLP acting on the
//! whole state vector, and a bank of independent per-node MLPs.

use super::Nonlinearity;

/// Shape of the centralized network `W₂ σ(W₁ x + b₁) + b₂`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct MlpShape {
    pub n: usize,
    pub hidden: usize,
}

impl MlpShape {
    pub fn len(&self) -> usize {
        2 * self.hidden * self.n + self.hidden + self.n
    }

    // Offsets of W₁ (hidden x n), b₁, W₂ (n x hidden), b₂.
    fn offsets(&self) -> [usize; 4] {
        let w1 = 0;
        let b1 = w1 + self.hidden * self.n;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.n * self.hidden;
        [w1, b1, w2, b2]
    }
}

pub(crate) struct MlpTape {
    pub x: Vec<f64>,
    pub pre: Vec<f64>,
    pub post: Vec<f64>,
}

pub(crate) fn mlp_forward(p: &[f64], shape: MlpShape, sigma: Nonlinearity, x: &[f64]) -> (Vec<f64>, MlpTape) {
    let [w1, b1, w2, b2] = shape.offsets();
    let (n, h) = (shape.n, shape.hidden);
    let mut pre = p[b1..b1 + h].to_vec();
    for (j, pj) in pre.iter_mut().enumerate() {
        let row = &p[w1 + j * n..w1 + (j + 1) * n];
        *pj += row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
    }
    let post: Vec<f64> = pre.iter().map(|&v| sigma.apply(v)).collect();
    let mut u = p[b2..b2 + n].to_vec();
    for (i, ui) in u.iter_mut().enumerate() {
        let row = &p[w2 + i * h..w2 + (i + 1) * h];
        *ui += row.iter().zip(&post).map(|(w, v)| w * v).sum::<f64>();
    }
    (
        u,
        MlpTape {
            x: x.to_vec(),
            pre,
            post,
        },
    )
}

pub(crate) fn mlp_backward(
    p: &[f64],
    shape: MlpShape,
    sigma: Nonlinearity,
    tape: &MlpTape,
    du: &[f64],
    grad: &mut [f64],
) -> Vec<f64> {
    let [w1, b1, w2, b2] = shape.offsets();
    let (n, h) = (shape.n, shape.hidden);
    let mut dh = vec![0.0; h];
    for (i, &d) in du.iter().enumerate() {
        grad[b2 + i] += d;
        if d == 0.0 {
            continue;
        }
        let row = &p[w2 + i * h..w2 + (i + 1) * h];
        let grow = &mut grad[w2 + i * h..w2 + (i + 1) * h];
        for j in 0..h {
            grow[j] += d * tape.post[j];
            dh[j] += d * row[j];
        }
    }
    let mut dx = vec![0.0; n];
    for j in 0..h {
        let dpre = dh[j] * sigma.derivative_at(tape.pre[j], tape.post[j]);
        grad[b1 + j] += dpre;
        if dpre == 0.0 {
            continue;
        }
        let row = &p[w1 + j * n..w1 + (j + 1) * n];
        let grow = &mut grad[w1 + j * n..w1 + (j + 1) * n];
        for k in 0..n {
            grow[k] += dpre * tape.x[k];
            dx[k] += dpre * row[k];
        }
    }
    dx
}

/// Shape of the per-node bank: node `i` computes
/// `u_i = w₂ⁱ · σ(w₁ⁱ x_i + b₁ⁱ) + b₂ⁱ` from its own scalar state.
#[derive(Clone, Copy, Debug)]
pub(crate) struct DmlpShape {
    pub n: usize,
    pub hidden: usize,
}

impl DmlpShape {
    /// Parameters per node, laid out as `w₁ (H), b₁ (H), w₂ (H), b₂`.
    pub fn stride(&self) -> usize {
        3 * self.hidden + 1
    }

    pub fn len(&self) -> usize {
        self.n * self.stride()
    }
}

pub(crate) struct DmlpTape {
    pub x: Vec<f64>,
    pub pre: Vec<f64>,
    pub post: Vec<f64>,
}

pub(crate) fn dmlp_forward(p: &[f64], shape: DmlpShape, sigma: Nonlinearity, x: &[f64]) -> (Vec<f64>, DmlpTape) {
    let h = shape.hidden;
    let mut pre = Vec::with_capacity(shape.n * h);
    let mut post = Vec::with_capacity(shape.n * h);
    let u = x
        .iter()
        .enumerate()
        .map(|(i, &xi)| {
            let node = &p[i * shape.stride()..(i + 1) * shape.stride()];
            let (w1, rest) = node.split_at(h);
            let (b1, rest) = rest.split_at(h);
            let (w2, b2) = rest.split_at(h);
            let mut ui = b2[0];
            for j in 0..h {
                let z = w1[j] * xi + b1[j];
                let a = sigma.apply(z);
                pre.push(z);
                post.push(a);
                ui += w2[j] * a;
            }
            ui
        })
        .collect();
    (u, DmlpTape { x: x.to_vec(), pre, post })
}

pub(crate) fn dmlp_backward(
    p: &[f64],
    shape: DmlpShape,
    sigma: Nonlinearity,
    tape: &DmlpTape,
    du: &[f64],
    grad: &mut [f64],
) -> Vec<f64> {
    let h = shape.hidden;
    let stride = shape.stride();
    du.iter()
        .enumerate()
        .map(|(i, &d)| {
            let node = &p[i * stride..(i + 1) * stride];
            let g = &mut grad[i * stride..(i + 1) * stride];
            let pre = &tape.pre[i * h..(i + 1) * h];
            let post = &tape.post[i * h..(i + 1) * h];
            g[3 * h] += d;
            let mut dx = 0.0;
            for j in 0..h {
                let w1 = node[j];
                let w2 = node[2 * h + j];
                g[2 * h + j] += d * post[j];
                let dpre = d * w2 * sigma.derivative_at(pre[j], post[j]);
                g[j] += dpre * tape.x[i];
                g[h + j] += dpre;
                dx += dpre * w1;
            }
            dx
        })
        .collect()
}
