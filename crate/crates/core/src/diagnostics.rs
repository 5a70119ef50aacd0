//! Optimality and stability certificates.
//!
//! The KKT residual and the fixed-point residual both vanish exactly at
//! equilibria of the dynamics, which are exactly the minimizers of the
//! consensus problem. The Lyapunov function `V = V₁ + V₂ + V₃` is evaluated
//! relative to an [`EquilibriumCertificate`] and used as a runtime monitor.
//!
//! The discrete monitor can show descent and convergence along a run. It
//! cannot show convergence to the largest invariant set; that part of the
//! continuous-time argument has no finite-horizon counterpart.

use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::dynamics::{Dynamics, SystemState};
use crate::error::{Error, Result};
use crate::graph::Graph;

/// Per-step slack on Lyapunov increments is `DESCENT_SLACK · h²`.
pub const DESCENT_SLACK: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CertificateSource {
    ConvergedRun,
    Analytic,
    External,
}

/// An equilibrium `(x*, z*, v*)` of the dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumCertificate {
    pub x_star: Array2<f64>,
    pub z_star: Array2<f64>,
    pub v_star: Array2<f64>,
    pub source: CertificateSource,
}

#[derive(Serialize, Deserialize)]
struct CertificateFile {
    source: CertificateSource,
    x_star: Vec<Vec<f64>>,
    z_star: Vec<Vec<f64>>,
    v_star: Vec<Vec<f64>>,
}

fn to_rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn from_rows(rows: &[Vec<f64>], what: &str) -> Result<Array2<f64>> {
    let n = rows.len();
    let q = rows.first().map(Vec::len).unwrap_or(0);
    if rows.iter().any(|r| r.len() != q) {
        return Err(Error::Certificate(format!("{what} rows have unequal lengths")));
    }
    Ok(Array2::from_shape_fn((n, q), |(i, k)| rows[i][k]))
}

impl EquilibriumCertificate {
    pub fn as_state(&self) -> SystemState {
        SystemState {
            x: self.x_star.clone(),
            z: self.z_star.clone(),
            v: self.v_star.clone(),
            t: 0.0,
        }
    }

    pub fn to_json(&self) -> String {
        let file = CertificateFile {
            source: self.source,
            x_star: to_rows(&self.x_star),
            z_star: to_rows(&self.z_star),
            v_star: to_rows(&self.v_star),
        };
        serde_json::to_string_pretty(&file).expect("certificate serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CertificateFile =
            serde_json::from_str(text).map_err(|e| Error::Certificate(e.to_string()))?;
        Ok(EquilibriumCertificate {
            x_star: from_rows(&file.x_star, "x_star")?,
            z_star: from_rows(&file.z_star, "z_star")?,
            v_star: from_rows(&file.v_star, "v_star")?,
            source: file.source,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidualReport {
    pub kkt: f64,
    pub fixed_point: f64,
    pub consensus: f64,
    pub lyapunov: Option<f64>,
}

fn frobenius(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `‖(L ⊗ I_q) x‖`.
pub fn consensus_residual(x: ArrayView2<f64>, g: &Graph) -> f64 {
    frobenius(&g.apply_laplacian(x))
}

/// Norm of the smooth vector field over all three blocks.
pub fn fixed_point_residual(d: &Dynamics<'_>, s: &SystemState) -> Result<f64> {
    Ok(d.vector_field(s)?.norm())
}

/// Largest of the two prox fixed-point defects and `‖Lx‖`.
pub fn kkt_residual(d: &Dynamics<'_>, s: &SystemState) -> Result<f64> {
    let f = d.vector_field(s)?;
    let graph = d.problem().graph();
    Ok(frobenius(&f.dx)
        .max(frobenius(&f.dz))
        .max(consensus_residual(s.x.view(), graph)))
}

/// `V(x, z, v)` relative to `cert`.
pub fn lyapunov_value(d: &Dynamics<'_>, s: &SystemState, cert: &EquilibriumCertificate) -> f64 {
    let p = d.problem();
    let graph = p.graph();
    let (alpha, gamma) = (d.params().alpha, d.params().gamma);
    let dx = &s.x - &cert.x_star;
    let dz = &s.z - &cert.z_star;
    let dv = &s.v - &cert.v_star;
    let dot = |a: &Array2<f64>, b: &Array2<f64>| a.iter().zip(b.iter()).map(|(u, w)| u * w).sum::<f64>();

    let v1 = 0.5 * dot(&dx, &dx) + 0.5 * gamma * dot(&dz, &dz) - gamma * dot(&dx, &dz)
        + 0.5 * dot(&dv, &dv);
    let grad_star = p.smooth_gradient(cert.x_star.view());
    let v2 = p.smooth_cost(s.x.view()) - p.smooth_cost(cert.x_star.view()) - dot(&dx, &grad_star)
        + 0.5 * alpha * graph.bilinear(s.x.view(), s.x.view());
    let v3 = alpha * graph.bilinear(s.x.view(), dv.view());
    v1 + v2 + v3
}

pub fn residual_report(
    d: &Dynamics<'_>,
    s: &SystemState,
    cert: Option<&EquilibriumCertificate>,
) -> Result<ResidualReport> {
    let f = d.vector_field(s)?;
    let consensus = consensus_residual(s.x.view(), d.problem().graph());
    Ok(ResidualReport {
        kkt: frobenius(&f.dx).max(frobenius(&f.dz)).max(consensus),
        fixed_point: f.norm(),
        consensus,
        lyapunov: cert.map(|c| lyapunov_value(d, s, c)),
    })
}

/// Builds `(x*, z*, v*)` at the consensus point `w*` (every agent at `w*`).
///
/// Uses the minimal-norm subgradients `g¹ ∈ ∂f¹_i(w*)`, `g² ∈ ∂f²_i(w*)`, sets
/// `z* = −g²/γ` and solves `α L v* = −(∇F⁰(x*) + g¹ + g²)` for the
/// minimum-norm `v*`. Fails when that right-hand side is not in `range(L)`,
/// i.e. when the selected subgradients do not certify optimality of `w*`.
pub fn analytic_certificate(d: &Dynamics<'_>, point: &[f64]) -> Result<EquilibriumCertificate> {
    let p = d.problem();
    let n = p.agent_count();
    let q = p.dim();
    if point.len() != q {
        return Err(Error::DimensionMismatch {
            context: "certificate point".into(),
            expected: q,
            got: point.len(),
        });
    }
    let (alpha, gamma) = (d.params().alpha, d.params().gamma);
    let x_star = Array2::from_shape_fn((n, q), |(_, k)| point[k]);
    let mut z_star = Array2::zeros((n, q));
    let mut rhs = Array2::zeros((n, q));
    for (i, a) in p.agents().iter().enumerate() {
        let g0 = a.gradient_f0(point)?;
        let g1 = a
            .f1
            .min_norm_subgradient(point)
            .map_err(|e| Error::Certificate(format!("agent {}: f1: {e}", i + 1)))?;
        let g2 = a
            .f2
            .min_norm_subgradient(point)
            .map_err(|e| Error::Certificate(format!("agent {}: f2: {e}", i + 1)))?;
        for k in 0..q {
            z_star[[i, k]] = -g2[k] / gamma;
            rhs[[i, k]] = -(g0[k] + g1[k] + g2[k]) / alpha;
        }
    }
    let scale = rhs.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    for k in 0..q {
        let total: f64 = rhs.column(k).sum();
        if total.abs() > 1e-9 * scale * n as f64 {
            return Err(Error::Certificate(format!(
                "stationarity vector has nonzero sum {total} in coordinate {}; the point is not certified by the minimal-norm subgradients",
                k + 1
            )));
        }
    }
    let v_star = p.laplacian().solve_min_norm(rhs.view());
    Ok(EquilibriumCertificate {
        x_star,
        z_star,
        v_star,
        source: CertificateSource::Analytic,
    })
}

/// Runs to the horizon of `d` and accepts the final state if its field norm is at most `tol`.
pub fn certificate_from_run(
    d: &Dynamics<'_>,
    s0: &SystemState,
    tol: f64,
) -> Result<EquilibriumCertificate> {
    let s = d.integrate(s0, |_, _, _| Ok(()))?;
    let r = fixed_point_residual(d, &s)?;
    if r > tol {
        return Err(Error::Certificate(format!(
            "run ended at t = {} with fixed-point residual {r:e} > {tol:e}",
            s.t
        )));
    }
    Ok(EquilibriumCertificate {
        x_star: s.x,
        z_star: s.z,
        v_star: s.v,
        source: CertificateSource::ConvergedRun,
    })
}

/// Lyapunov increments along one discretized run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DescentReport {
    pub steps: usize,
    pub v_start: f64,
    pub v_end: f64,
    /// Largest `V(t_{k+1}) − V(t_k)`, possibly negative.
    pub max_increment: f64,
    /// Steps whose increment exceeds `DESCENT_SLACK · h²`.
    pub violations: usize,
}

impl DescentReport {
    /// `max(0, max_increment)`.
    pub fn max_positive_increment(&self) -> f64 {
        self.max_increment.max(0.0)
    }
}

pub fn monitor_descent(
    d: &Dynamics<'_>,
    s0: &SystemState,
    cert: &EquilibriumCertificate,
) -> Result<DescentReport> {
    let h = d.params().h;
    let slack = DESCENT_SLACK * h * h;
    let v_start = lyapunov_value(d, s0, cert);
    let mut prev = v_start;
    let mut max_increment = f64::NEG_INFINITY;
    let mut violations = 0;
    let mut steps = 0;
    d.integrate(s0, |k, s, _| {
        if k > 0 {
            let v = lyapunov_value(d, s, cert);
            let inc = v - prev;
            max_increment = max_increment.max(inc);
            if inc > slack {
                violations += 1;
            }
            prev = v;
            steps = k;
        }
        Ok(())
    })?;
    Ok(DescentReport {
        steps,
        v_start,
        v_end: prev,
        max_increment,
        violations,
    })
}
