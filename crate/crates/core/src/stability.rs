//! Closed-loop input-to-state stability certificate for two-layer graph
//! controllers, and an empirical probe of the disturbed closed loop.
//!
//! With `a = ‖A‖`, `b = ‖B‖‖B̄‖` and the per-feature filter-polynomial
//! constants `c₂, c₁ₐ, c̄₁ᵦ`, the norms of state and control obey a
//! nonnegative 2x2 linear recursion with eigenvalues
//! `λ± = (a + β ± γ)/2`, `α = c₂c₁ₐ`, `β = c₂c̄₁ᵦ`,
//! `γ = √((a − β)² + 4bα)`. Three verdicts are reported:
//!
//! * `eigen`: `max |λ±| < 1`.
//! * `simplified`: `a + β − aβ + bα < 1` together with `a + β < 2`. The
//!   second clause keeps the test equivalent to `eigen`; without it, for
//!   instance `a = β = 2, bα = 0`, the first clause holds while `λ₊ = 2`.
//! * `prop1`: the stricter `bα + β < (1 − a)(1 − β)`, also with
//!   `a + β < 2`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::controllers::ControllerParams;
use crate::dynamics::{guard, step, LinearPlant, Policy};
use crate::error::{Error, Result};
use crate::linalg::{matrix_polynomial, norm_21, spectral_norm, DenseMatrix};
use crate::network::GraphSystem;
use crate::rng::Stream;

/// Strictness margin applied to every verdict inequality.
pub const MARGIN: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateConstants {
    pub a: f64,
    pub b: f64,
    pub c2: f64,
    pub c1a: f64,
    pub c1b_bar: f64,
    pub c1: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub a: f64,
    pub b: f64,
    pub c2: f64,
    pub c1a: f64,
    pub c1b_bar: f64,
    pub c1: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    /// `a + β − aβ + bα`
    pub simplified_lhs: f64,
    pub verdict_prop1: bool,
    pub verdict_simplified: bool,
    pub verdict_eigen: bool,
}

/// `Σ_k [H_k]_{fg} S^k` for one layer's taps.
fn entry_polynomial(s: &DenseMatrix, taps: &[DenseMatrix], f: usize, g: usize) -> Result<DenseMatrix> {
    let coeffs: Vec<f64> = taps.iter().map(|h| h[(f, g)]).collect();
    matrix_polynomial(s, &coeffs)
}

/// `Σ_g max_f ‖P_{fg} · right‖`
fn sum_max_norm(
    s: &DenseMatrix,
    taps: &[DenseMatrix],
    right: Option<&DenseMatrix>,
) -> Result<f64> {
    let (rows, cols) = taps[0].shape();
    let mut total = 0.0;
    for g in 0..cols {
        let mut best: f64 = 0.0;
        for f in 0..rows {
            let p = entry_polynomial(s, taps, f, g)?;
            let p = match right {
                Some(m) => p.matmul(m)?,
                None => p,
            };
            best = best.max(spectral_norm(&p));
        }
        total += best;
    }
    Ok(total)
}

/// Certificate constants for a two-layer GF or GNN controller.
pub fn certificate_constants(plant: &LinearPlant, g: &GraphSystem, params: &ControllerParams) -> Result<CertificateConstants> {
    if !params.kind().is_graph() {
        return Err(Error::WrongKind {
            expected: "GF or GNN",
            found: params.kind().as_str(),
        });
    }
    let spec = &params.spec;
    if spec.taps.len() != 2 {
        return Err(Error::InvalidArgument(format!(
            "certificate needs a two-layer controller, got {} layers",
            spec.taps.len()
        )));
    }
    if spec.layer_widths[0] != plant.state_features() || spec.layer_widths[2] != plant.control_features() {
        return Err(Error::shape(
            "certificate_constants",
            format!("F={} G={}", plant.state_features(), plant.control_features()),
            format!("{:?}", spec.layer_widths),
        ));
    }
    let s = &g.support;
    let h1: Vec<DenseMatrix> = (0..=spec.taps[0]).map(|k| params.tap(0, k)).collect::<Result<_>>()?;
    let h2: Vec<DenseMatrix> = (0..=spec.taps[1]).map(|k| params.tap(1, k)).collect::<Result<_>>()?;
    let h1_bar: Vec<DenseMatrix> = h1.iter().map(|h| plant.b_bar.matmul(h)).collect::<Result<_>>()?;
    Ok(CertificateConstants {
        a: spectral_norm(&plant.a),
        b: spectral_norm(&plant.b) * spectral_norm(&plant.b_bar),
        c2: sum_max_norm(s, &h2, None)?,
        c1a: sum_max_norm(s, &h1, Some(&plant.a))?,
        c1b_bar: sum_max_norm(s, &h1_bar, Some(&plant.b))?,
        c1: sum_max_norm(s, &h1, None)?,
    })
}

/// Derives the eigenvalue pair and the three verdicts.
pub fn check_stability(c: &CertificateConstants) -> StabilityReport {
    let alpha = c.c2 * c.c1a;
    let beta = c.c2 * c.c1b_bar;
    let v = verdicts(c.a, c.b, alpha, beta);
    StabilityReport {
        a: c.a,
        b: c.b,
        c2: c.c2,
        c1a: c.c1a,
        c1b_bar: c.c1b_bar,
        c1: c.c1,
        alpha,
        beta,
        gamma: v.gamma,
        lambda1: v.lambda1,
        lambda2: v.lambda2,
        simplified_lhs: v.simplified_lhs,
        verdict_prop1: v.prop1,
        verdict_simplified: v.simplified,
        verdict_eigen: v.eigen,
    }
}

/// The raw verdict computation on `(a, b, α, β)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Verdicts {
    pub gamma: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub simplified_lhs: f64,
    pub prop1: bool,
    pub simplified: bool,
    pub eigen: bool,
}

pub fn verdicts(a: f64, b: f64, alpha: f64, beta: f64) -> Verdicts {
    let gamma = ((a - beta) * (a - beta) + 4.0 * b * alpha).sqrt();
    let lambda1 = (a + beta + gamma) / 2.0;
    let lambda2 = (a + beta - gamma) / 2.0;
    let bounded = a + beta < 2.0;
    let rhs = (1.0 - a) * (1.0 - beta) - MARGIN;
    Verdicts {
        gamma,
        lambda1,
        lambda2,
        simplified_lhs: a + beta - a * beta + b * alpha,
        prop1: bounded && b * alpha + beta < rhs,
        simplified: bounded && b * alpha < rhs,
        eigen: lambda1.abs().max(lambda2.abs()) < 1.0 - MARGIN,
    }
}

impl StabilityReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One header row then one row per report.
    pub fn write_csv<W: Write>(reports: &[StabilityReport], out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in reports {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Output of [`iss_probe`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IssProbe {
    /// `‖X(t)‖₂,₁` for `t = 0 ..= steps`.
    pub state_norms: Vec<f64>,
    /// `‖E(t)‖₂,₁` for `t = 0 .. steps`.
    pub disturbance_norms: Vec<f64>,
    pub state_sum: f64,
    pub disturbance_sum: f64,
}

impl IssProbe {
    /// Increment of the state partial sum over the last `fraction` of the
    /// horizon, relative to the total.
    pub fn tail_fraction(&self, fraction: f64) -> f64 {
        let len = self.state_norms.len();
        let tail = ((len as f64 * fraction).ceil() as usize).min(len);
        let inc: f64 = self.state_norms[len - tail..].iter().sum();
        if self.state_sum > 0.0 {
            inc / self.state_sum
        } else {
            0.0
        }
    }
}

/// Rolls `U(t) = Φ(X(t)) + E(t)` for `steps` transitions and accumulates
/// state and disturbance norms.
pub fn iss_probe(
    plant: &LinearPlant,
    controller: &dyn Policy,
    x0: &DenseMatrix,
    disturbance: Option<&dyn Fn(usize) -> DenseMatrix>,
    steps: usize,
) -> Result<IssProbe> {
    let mut state_norms = Vec::with_capacity(steps + 1);
    let mut disturbance_norms = Vec::with_capacity(steps);
    let mut x = x0.clone();
    for t in 0..steps {
        guard(&x, t, state_norms.len())?;
        state_norms.push(norm_21(&x));
        let mut u = controller.act(t, &x)?;
        if let Some(e) = disturbance {
            let e = e(t);
            disturbance_norms.push(norm_21(&e));
            u.axpy(1.0, &e)?;
        } else {
            disturbance_norms.push(0.0);
        }
        x = step(plant, &x, &u)?;
    }
    guard(&x, steps, state_norms.len())?;
    state_norms.push(norm_21(&x));
    Ok(IssProbe {
        state_sum: state_norms.iter().sum(),
        disturbance_sum: disturbance_norms.iter().sum(),
        state_norms,
        disturbance_norms,
    })
}

/// `E(t) = ρᵗ U₀` with `U₀` a Gaussian matrix scaled to unit `‖·‖₂,₁`.
#[derive(Clone, Debug)]
pub struct GeometricDisturbance {
    pub base: DenseMatrix,
    pub rho: f64,
}

impl GeometricDisturbance {
    pub fn new(n: usize, features: usize, rho: f64, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&rho) {
            return Err(Error::InvalidArgument(format!("decay {rho} must lie in [0, 1)")));
        }
        let mut s = Stream::new(seed, "iss/disturbance");
        let m = DenseMatrix::from_vec(n, features, s.normal_vec(n * features))?;
        let norm = norm_21(&m);
        Ok(GeometricDisturbance {
            base: m.scale(1.0 / norm),
            rho,
        })
    }

    pub fn at(&self, t: usize) -> DenseMatrix {
        self.base.scale(self.rho.powi(t as i32))
    }
}
