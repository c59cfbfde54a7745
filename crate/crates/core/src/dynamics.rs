//! Closed-loop simulation of `X(t+1) = A X(t) + B U(t) B̄` and the
//! finite-horizon quadratic cost.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sym_eigen, DenseMatrix};

/// Any state magnitude above this aborts a rollout.
pub const BLOWUP_LIMIT: f64 = 1e12;

const PSD_TOL: f64 = -1e-10;

/// Linear plant and quadratic cost over a finite horizon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearPlant {
    pub a: DenseMatrix,
    pub b: DenseMatrix,
    /// `G x F` control-to-state feature map; `1x1` identity in the scalar case.
    pub b_bar: DenseMatrix,
    pub q: DenseMatrix,
    pub r: DenseMatrix,
    pub horizon: usize,
}

impl LinearPlant {
    pub fn new(
        a: DenseMatrix,
        b: DenseMatrix,
        b_bar: DenseMatrix,
        q: DenseMatrix,
        r: DenseMatrix,
        horizon: usize,
    ) -> Result<Self> {
        let n = a.rows();
        for (name, m) in [("A", &a), ("B", &b), ("Q", &q), ("R", &r)] {
            if m.shape() != (n, n) {
                return Err(Error::shape("LinearPlant::new", format!("{name} {n}x{n}"), format!("{:?}", m.shape())));
            }
        }
        for (name, m) in [("Q", &q), ("R", &r)] {
            let eig = sym_eigen(m)?;
            let min = eig.eigenvalues.last().copied().unwrap_or(0.0);
            if min < PSD_TOL {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be positive semidefinite (min eigenvalue {min:e})"
                )));
            }
        }
        Ok(LinearPlant {
            a,
            b,
            b_bar,
            q,
            r,
            horizon,
        })
    }

    /// Scalar-feature plant (`F = G = 1`, `B̄ = 1`) with `Q = q I`, `R = r I`.
    pub fn scalar_features(a: DenseMatrix, b: DenseMatrix, q_scale: f64, r_scale: f64, horizon: usize) -> Result<Self> {
        let n = a.rows();
        Self::new(
            a,
            b,
            DenseMatrix::identity(1),
            DenseMatrix::identity(n).scale(q_scale),
            DenseMatrix::identity(n).scale(r_scale),
            horizon,
        )
    }

    pub fn n(&self) -> usize {
        self.a.rows()
    }

    /// State features per node.
    pub fn state_features(&self) -> usize {
        self.b_bar.cols()
    }

    /// Control features per node.
    pub fn control_features(&self) -> usize {
        self.b_bar.rows()
    }

    pub fn with_horizon(&self, horizon: usize) -> Self {
        LinearPlant {
            horizon,
            ..self.clone()
        }
    }

    pub(crate) fn check_state(&self, x: &DenseMatrix) -> Result<()> {
        if x.shape() != (self.n(), self.state_features()) {
            return Err(Error::shape(
                "state",
                format!("{}x{}", self.n(), self.state_features()),
                format!("{}x{}", x.rows(), x.cols()),
            ));
        }
        Ok(())
    }

    pub(crate) fn check_control(&self, u: &DenseMatrix) -> Result<()> {
        if u.shape() != (self.n(), self.control_features()) {
            return Err(Error::shape(
                "control",
                format!("{}x{}", self.n(), self.control_features()),
                format!("{}x{}", u.rows(), u.cols()),
            ));
        }
        Ok(())
    }

    /// `tr(xᵀ Q x) [+ tr(uᵀ R u)]`
    pub fn stage_cost(&self, x: &DenseMatrix, u: Option<&DenseMatrix>) -> Result<f64> {
        let mut c = x.weighted_sq_norm(&self.q)?;
        if let Some(u) = u {
            c += u.weighted_sq_norm(&self.r)?;
        }
        Ok(c)
    }
}

/// One transition `A x + B u B̄`.
pub fn step(plant: &LinearPlant, x: &DenseMatrix, u: &DenseMatrix) -> Result<DenseMatrix> {
    plant.check_state(x)?;
    plant.check_control(u)?;
    let mut next = plant.a.matmul(x)?;
    let bu = plant.b.matmul(u)?;
    let input = if plant.b_bar.shape() == (1, 1) {
        bu.scale(plant.b_bar[(0, 0)])
    } else {
        bu.matmul(&plant.b_bar)?
    };
    next.axpy(1.0, &input)?;
    Ok(next)
}

/// A state-feedback law, possibly time-varying.
pub trait Policy: Sync {
    fn act(&self, t: usize, x: &DenseMatrix) -> Result<DenseMatrix>;
}

impl<F> Policy for F
where
    F: Fn(usize, &DenseMatrix) -> Result<DenseMatrix> + Sync,
{
    fn act(&self, t: usize, x: &DenseMatrix) -> Result<DenseMatrix> {
        self(t, x)
    }
}

/// The policy that never acts.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroPolicy {
    pub control_features: usize,
}

impl Policy for ZeroPolicy {
    fn act(&self, _t: usize, x: &DenseMatrix) -> Result<DenseMatrix> {
        Ok(DenseMatrix::zeros(x.rows(), self.control_features.max(1)))
    }
}

/// Static linear feedback `u = K x`.
#[derive(Clone, Debug)]
pub struct LinearFeedback(pub DenseMatrix);

impl Policy for LinearFeedback {
    fn act(&self, _t: usize, x: &DenseMatrix) -> Result<DenseMatrix> {
        self.0.matmul(x)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    /// `X(0) ..= X(T)`
    pub states: Vec<DenseMatrix>,
    /// `U(0) .. U(T-1)`
    pub controls: Vec<DenseMatrix>,
    /// Per-step costs; the last entry is the terminal cost.
    pub stage_costs: Vec<f64>,
    pub total_cost: f64,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.controls.len()
    }

    /// Long-format CSV: `t, node, x0.., u0.., stage_cost`. Control columns
    /// are empty at the terminal step.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let nf = self.states.first().map_or(0, |x| x.cols());
        let ng = self.controls.first().map_or(0, |u| u.cols());
        let mut header = vec!["t".to_string(), "node".to_string()];
        header.extend((0..nf).map(|f| format!("x{f}")));
        header.extend((0..ng).map(|g| format!("u{g}")));
        header.push("stage_cost".into());
        w.write_record(&header)?;
        for (t, x) in self.states.iter().enumerate() {
            for i in 0..x.rows() {
                let mut rec = vec![t.to_string(), i.to_string()];
                rec.extend(x.row(i).iter().map(|v| v.to_string()));
                match self.controls.get(t) {
                    Some(u) => rec.extend(u.row(i).iter().map(|v| v.to_string())),
                    None => rec.extend((0..ng).map(|_| String::new())),
                }
                rec.push(self.stage_costs[t].to_string());
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Recomputes the quadratic cost of a trajectory.
pub fn quadratic_cost(plant: &LinearPlant, traj: &Trajectory) -> Result<f64> {
    if traj.states.len() != traj.controls.len() + 1 {
        return Err(Error::shape(
            "quadratic_cost",
            format!("{} states", traj.controls.len() + 1),
            traj.states.len(),
        ));
    }
    let mut total = 0.0;
    for (t, x) in traj.states.iter().enumerate() {
        if !x.is_finite() {
            return Err(Error::NonFiniteCost { step: t });
        }
        plant.check_state(x)?;
        let u = traj.controls.get(t);
        if let Some(u) = u {
            if !u.is_finite() {
                return Err(Error::NonFiniteCost { step: t });
            }
            plant.check_control(u)?;
        }
        total += plant.stage_cost(x, u)?;
    }
    if !total.is_finite() {
        return Err(Error::NonFiniteCost {
            step: traj.states.len() - 1,
        });
    }
    Ok(total)
}

/// Simulates the plant over its horizon under `U(t) = policy(X(t)) + E(t)`.
pub fn rollout(
    plant: &LinearPlant,
    x0: &DenseMatrix,
    policy: &dyn Policy,
    disturbance: Option<&dyn Fn(usize) -> DenseMatrix>,
) -> Result<Trajectory> {
    rollout_steps(plant, x0, policy, disturbance, plant.horizon)
}

/// As [`rollout`] but over an explicit number of steps.
pub fn rollout_steps(
    plant: &LinearPlant,
    x0: &DenseMatrix,
    policy: &dyn Policy,
    disturbance: Option<&dyn Fn(usize) -> DenseMatrix>,
    steps: usize,
) -> Result<Trajectory> {
    plant.check_state(x0)?;
    let mut states = Vec::with_capacity(steps + 1);
    let mut controls = Vec::with_capacity(steps);
    let mut stage_costs = Vec::with_capacity(steps + 1);
    let mut x = x0.clone();
    for t in 0..steps {
        guard(&x, t, states.len())?;
        let mut u = policy.act(t, &x)?;
        if let Some(e) = disturbance {
            u.axpy(1.0, &e(t))?;
        }
        let next = step(plant, &x, &u)?;
        stage_costs.push(plant.stage_cost(&x, Some(&u))?);
        states.push(x);
        controls.push(u);
        x = next;
    }
    guard(&x, steps, states.len())?;
    stage_costs.push(plant.stage_cost(&x, None)?);
    states.push(x);
    let total_cost = stage_costs.iter().sum();
    Ok(Trajectory {
        states,
        controls,
        stage_costs,
        total_cost,
    })
}

#[inline]
pub(crate) fn guard(x: &DenseMatrix, step: usize, completed: usize) -> Result<()> {
    if x.as_slice().iter().any(|v| !(v.abs() <= BLOWUP_LIMIT)) {
        return Err(Error::Diverged { step, completed });
    }
    Ok(())
}
