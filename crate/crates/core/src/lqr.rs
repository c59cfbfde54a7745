//! Centralized finite-horizon LQR via the backward Riccati recursion.

use serde::{Deserialize, Serialize};

use crate::dynamics::{LinearPlant, Policy};
use crate::error::{Error, Result};
use crate::linalg::{Cholesky, DenseMatrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiccatiSolution {
    /// `K_0 .. K_{T-1}`; the optimal action is `u(t) = K_t x(t)`.
    pub gains: Vec<DenseMatrix>,
    /// `P_0 ..= P_T`, with `P_T = Q`.
    pub value_matrices: Vec<DenseMatrix>,
}

/// Backward recursion
/// `K_t = -(R + BᵀP B)⁻¹ BᵀP A`, `P_t = Q + AᵀP A + AᵀP B K_t`,
/// with `P = P_{t+1}` and `P_T = Q`.
pub fn solve_riccati(plant: &LinearPlant) -> Result<RiccatiSolution> {
    if plant.b_bar.shape() != (1, 1) {
        return Err(Error::InvalidArgument(
            "Riccati baseline needs scalar node states (F = G = 1)".into(),
        ));
    }
    let a = &plant.a;
    // A scalar B̄ folds into B.
    let b = plant.b.scale(plant.b_bar[(0, 0)]);
    let horizon = plant.horizon;

    let mut value_matrices = vec![plant.q.clone(); horizon + 1];
    let mut gains = vec![DenseMatrix::zeros(plant.n(), plant.n()); horizon];
    for t in (0..horizon).rev() {
        let p_next = &value_matrices[t + 1];
        let pb = p_next.matmul(&b)?;
        let pa = p_next.matmul(a)?;
        let gram = plant.r.add(&b.t_matmul(&pb)?)?;
        let chol = Cholesky::new(&gram)?;
        let k = chol.solve(&b.t_matmul(&pa)?)?.scale(-1.0);
        let mut p = plant.q.add(&a.t_matmul(&pa)?)?;
        p.axpy(1.0, &a.t_matmul(&pb)?.matmul(&k)?)?;
        p.symmetrize();
        value_matrices[t] = p;
        gains[t] = k;
    }
    Ok(RiccatiSolution {
        gains,
        value_matrices,
    })
}

/// `x0ᵀ P_0 x0`
pub fn optimal_cost(sol: &RiccatiSolution, x0: &DenseMatrix) -> Result<f64> {
    x0.weighted_sq_norm(&sol.value_matrices[0])
}

impl Policy for RiccatiSolution {
    fn act(&self, t: usize, x: &DenseMatrix) -> Result<DenseMatrix> {
        let k = self
            .gains
            .get(t)
            .ok_or_else(|| Error::InvalidArgument(format!("no Riccati gain for step {t}")))?;
        k.matmul(x)
    }
}
