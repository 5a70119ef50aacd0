//! Scenario loading, run orchestration and trajectory export.

pub mod export;
pub mod scenario;

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::diagnostics::{
    self, analytic_certificate, monitor_descent, residual_report, CertificateSource, DescentReport,
    EquilibriumCertificate, ResidualReport,
};
use crate::dynamics::{Dynamics, Record, SystemState, Trajectory, Variant};
use crate::error::{Error, Result};

pub use scenario::{load_scenario, Scenario, BUILTIN_SCENARIOS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum Verdict {
    Converged,
    HorizonReached,
    Diverged { t: f64 },
}

impl Verdict {
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Converged => 0,
            Verdict::HorizonReached => 2,
            Verdict::Diverged { .. } => 3,
        }
    }
}

pub const EXIT_ERROR: i32 = 1;

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub name: String,
    pub variant: Variant,
    pub final_state: SystemState,
    pub final_cost: f64,
    pub residuals: ResidualReport,
    pub wall_time: Duration,
    pub steps: usize,
    pub verdict: Verdict,
    pub convergence_tol: f64,
    pub trajectory_path: Option<PathBuf>,
    pub certificate_path: Option<PathBuf>,
}

impl RunSummary {
    pub fn converged(&self) -> bool {
        self.verdict == Verdict::Converged
    }

    pub fn exit_code(&self) -> i32 {
        self.verdict.exit_code()
    }
}

impl fmt::Display for RunSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = match self.verdict {
            Verdict::Converged => "converged".to_string(),
            Verdict::HorizonReached => "horizon reached without convergence".to_string(),
            Verdict::Diverged { t } => format!("diverged at t = {t}"),
        };
        writeln!(f, "scenario      {} ({:?})", self.name, self.variant)?;
        writeln!(f, "verdict       {verdict}")?;
        writeln!(f, "steps         {} (t = {})", self.steps, self.final_state.t)?;
        writeln!(f, "wall time     {:.3} s", self.wall_time.as_secs_f64())?;
        writeln!(f, "F(x)          {:.10}", self.final_cost)?;
        writeln!(
            f,
            "fixed point   {:.3e} (tolerance {:.1e})",
            self.residuals.fixed_point, self.convergence_tol
        )?;
        writeln!(f, "kkt           {:.3e}", self.residuals.kkt)?;
        writeln!(f, "consensus     {:.3e}", self.residuals.consensus)?;
        if let Some(v) = self.residuals.lyapunov {
            writeln!(f, "V             {v:.6e}")?;
        }
        for (i, row) in self.final_state.x.outer_iter().enumerate() {
            writeln!(f, "x_{:<11} {:?}", i + 1, row.to_vec())?;
        }
        if let Some(p) = &self.trajectory_path {
            writeln!(f, "trajectory    {}", p.display())?;
        }
        if let Some(p) = &self.certificate_path {
            writeln!(f, "certificate   {}", p.display())?;
        }
        Ok(())
    }
}

/// Where a run writes its files.
#[derive(Debug, Clone, Default)]
pub struct OutputPaths {
    pub trajectory: Option<PathBuf>,
    pub certificate: Option<PathBuf>,
}

impl OutputPaths {
    /// Paths from the scenario's `output` table, resolved against `base`.
    pub fn from_scenario(s: &Scenario, base: Option<&Path>) -> Self {
        let resolve = |p: &PathBuf| match base {
            Some(b) if p.is_relative() => b.join(p),
            _ => p.clone(),
        };
        OutputPaths {
            trajectory: s.output.trajectory.as_ref().map(resolve),
            certificate: s.output.certificate.as_ref().map(resolve),
        }
    }
}

/// Analytic certificate at `scenario.certificate.point`, if one is declared and valid.
pub fn scenario_certificate(scenario: &Scenario) -> Result<Option<EquilibriumCertificate>> {
    let Some(c) = &scenario.certificate else {
        return Ok(None);
    };
    let problem = scenario.problem()?;
    let d = Dynamics::new(&problem, scenario.algorithm_params()?)?;
    analytic_certificate(&d, &c.point).map(Some)
}

/// Runs a scenario. Divergence is reported through the verdict, with the
/// trajectory recorded up to the last finite state.
pub fn run(scenario: &Scenario, out: &OutputPaths) -> Result<(RunSummary, Trajectory)> {
    scenario.validate()?;
    let problem = scenario.problem()?;
    let report = problem.validate_assumptions();
    if !report.all_pass() {
        log::warn!("standing assumptions not met:\n{report}");
    }
    let params = scenario.algorithm_params()?;
    let d = Dynamics::with_variant(&problem, params, scenario.variant)?;
    let cert = match scenario_certificate(scenario) {
        Ok(c) => c,
        Err(e) => {
            log::warn!("no Lyapunov column: {e}");
            None
        }
    };

    let s0 = scenario.initial_state();
    let stride = scenario.output.stride.max(1);
    let total = d.step_count(s0.t);
    let graph = problem.graph();
    let mut records: Vec<Record> = Vec::with_capacity(total / stride + 2);
    let mut last = s0.clone();
    let mut steps = 0;
    let started = Instant::now();
    let outcome = d.integrate(&s0, |k, s, f| {
        steps = k;
        last.clone_from(s);
        if k % stride == 0 || k == total {
            records.push(Record {
                state: s.clone(),
                cost: problem.evaluate_total_cost(s.x.view()),
                consensus: diagnostics::consensus_residual(s.x.view(), graph),
                fixed_point: f.norm(),
                lyapunov: cert.as_ref().map(|c| diagnostics::lyapunov_value(&d, s, c)),
            });
        }
        Ok(())
    });
    let wall_time = started.elapsed();
    let diverged_at = match outcome {
        Ok(_) => None,
        Err(Error::Diverged { t, .. }) | Err(Error::NonFiniteField { t, .. }) => Some(t),
        Err(e) => return Err(e),
    };
    if diverged_at.is_some() && records.last().map(|r| r.state.t) != Some(last.t) {
        records.push(Record {
            state: last.clone(),
            cost: problem.evaluate_total_cost(last.x.view()),
            consensus: diagnostics::consensus_residual(last.x.view(), graph),
            fixed_point: d.field(&last).map(|f| f.norm()).unwrap_or(f64::NAN),
            lyapunov: cert.as_ref().map(|c| diagnostics::lyapunov_value(&d, &last, c)),
        });
    }
    let trajectory = Trajectory {
        records,
        stride,
        h: params.h,
    };
    let fin = trajectory.last();
    let residuals = ResidualReport {
        kkt: diagnostics::kkt_residual(&Dynamics::new(&problem, params)?, &fin.state).unwrap_or(f64::NAN),
        fixed_point: fin.fixed_point,
        consensus: fin.consensus,
        lyapunov: fin.lyapunov,
    };
    let verdict = match diverged_at {
        Some(t) => Verdict::Diverged { t },
        None if fin.fixed_point <= scenario.integrator.convergence_tol => Verdict::Converged,
        None => Verdict::HorizonReached,
    };

    if let Some(p) = &out.trajectory {
        export::write_csv(&trajectory, p)?;
    }
    let mut certificate_path = None;
    if let Some(p) = &out.certificate {
        let sidecar = match (&cert, verdict) {
            (Some(c), _) => Some(c.clone()),
            (None, Verdict::Converged) => Some(EquilibriumCertificate {
                x_star: fin.state.x.clone(),
                z_star: fin.state.z.clone(),
                v_star: fin.state.v.clone(),
                source: CertificateSource::ConvergedRun,
            }),
            _ => None,
        };
        if let Some(c) = sidecar {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            c.save(p)?;
            certificate_path = Some(p.clone());
        }
    }

    let summary = RunSummary {
        name: scenario.name.clone(),
        variant: scenario.variant,
        final_state: fin.state.clone(),
        final_cost: fin.cost,
        residuals,
        wall_time,
        steps,
        verdict,
        convergence_tol: scenario.integrator.convergence_tol,
        trajectory_path: out.trajectory.clone(),
        certificate_path,
    };
    Ok((summary, trajectory))
}

#[derive(Debug, Clone, Serialize)]
pub struct CertifyReport {
    /// Residuals of the trajectory's final state under the smooth field.
    pub final_state: ResidualReport,
    /// Residuals of the analytic certificate, when the scenario declares a point.
    pub analytic: Option<ResidualReport>,
    /// Lyapunov monitoring of a fresh run at twice the scenario step.
    pub coarse_descent: Option<DescentReport>,
    #[serde(skip)]
    pub certificate: Option<EquilibriumCertificate>,
}

impl fmt::Display for CertifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let r = &self.final_state;
        writeln!(
            f,
            "final state   kkt {:.3e}  fixed point {:.3e}  consensus {:.3e}",
            r.kkt, r.fixed_point, r.consensus
        )?;
        if let Some(a) = &self.analytic {
            writeln!(
                f,
                "certificate   kkt {:.3e}  fixed point {:.3e}  V {:.3e}",
                a.kkt,
                a.fixed_point,
                a.lyapunov.unwrap_or(f64::NAN)
            )?;
        }
        match &self.coarse_descent {
            Some(dr) => writeln!(
                f,
                "descent (2h)  {} steps  V {:.4e} -> {:.4e}  max increment {:.3e}  violations {}",
                dr.steps, dr.v_start, dr.v_end, dr.max_increment, dr.violations
            )?,
            None => writeln!(f, "descent (2h)  skipped: no certificate")?,
        }
        Ok(())
    }
}

/// Residuals of the final recorded state, plus certificate checks.
///
/// The certificate is the analytic one when the scenario declares a point,
/// otherwise the final state itself if it meets the convergence tolerance.
pub fn certify(scenario: &Scenario, records: &[Record]) -> Result<CertifyReport> {
    let fin = records
        .last()
        .ok_or_else(|| Error::Trajectory("trajectory has no records".into()))?;
    let problem = scenario.problem()?;
    let params = scenario.algorithm_params()?;
    let d = Dynamics::new(&problem, params)?;

    let analytic = scenario_certificate(scenario).unwrap_or_else(|e| {
        log::warn!("analytic certificate unavailable: {e}");
        None
    });
    let mut final_state = residual_report(&d, &fin.state, analytic.as_ref())?;
    let analytic_report = analytic
        .as_ref()
        .map(|c| residual_report(&d, &c.as_state(), Some(c)))
        .transpose()?;

    let certificate = analytic.or_else(|| {
        (final_state.fixed_point <= scenario.integrator.convergence_tol).then(|| EquilibriumCertificate {
            x_star: fin.state.x.clone(),
            z_star: fin.state.z.clone(),
            v_star: fin.state.v.clone(),
            source: CertificateSource::ConvergedRun,
        })
    });
    if final_state.lyapunov.is_none() {
        final_state.lyapunov = certificate.as_ref().map(|c| diagnostics::lyapunov_value(&d, &fin.state, c));
    }
    let coarse_descent = match &certificate {
        Some(c) => {
            let mut coarse = params;
            coarse.h *= 2.0;
            let dc = Dynamics::new(&problem, coarse)?;
            monitor_descent(&dc, &scenario.initial_state(), c).ok()
        }
        None => None,
    };
    Ok(CertifyReport {
        final_state,
        analytic: analytic_report,
        coarse_descent,
        certificate,
    })
}

/// Scenario files (`*.toml`) directly inside `dir`, sorted by name.
pub fn sweep_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "toml"))
        .collect();
    paths.sort();
    Ok(paths)
}

/// Combined exit code of several runs: any error, then any divergence, then
/// any unconverged run.
pub fn combine_exit_codes(codes: impl IntoIterator<Item = i32>) -> i32 {
    codes.into_iter().fold(0, |acc, c| {
        let rank = |c: i32| match c {
            0 => 0,
            2 => 1,
            3 => 2,
            _ => 3,
        };
        if rank(c) > rank(acc) {
            c
        } else {
            acc
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(Verdict::Converged.exit_code(), 0);
        assert_eq!(Verdict::HorizonReached.exit_code(), 2);
        assert_eq!(Verdict::Diverged { t: 1.0 }.exit_code(), 3);
        assert_eq!(combine_exit_codes([0, 2, 0]), 2);
        assert_eq!(combine_exit_codes([2, 3, 0]), 3);
        assert_eq!(combine_exit_codes([3, 1, 2]), 1);
        assert_eq!(combine_exit_codes([]), 0);
    }

    #[test]
    fn zero_horizon_single_record() {
        let mut s = Scenario::paper_sec6();
        s.integrator.t_end = 0.0;
        let (summary, traj) = run(&s, &OutputPaths::default()).unwrap();
        assert_eq!(traj.records.len(), 1);
        assert_eq!(summary.steps, 0);
        assert_eq!(summary.verdict, Verdict::HorizonReached);
        assert!(!summary.converged());
    }

    #[test]
    fn single_agent_converges() {
        let s = Scenario::builtin("single_agent").unwrap();
        let (summary, traj) = run(&s, &OutputPaths::default()).unwrap();
        assert_eq!(summary.verdict, Verdict::Converged);
        assert!((summary.final_state.x[[0, 0]] - 1.0).abs() < 1e-6);
        assert!(traj.last().fixed_point <= s.integrator.convergence_tol);
    }

    #[test]
    fn divergence_reported() {
        let mut s = Scenario::builtin("single_agent").unwrap();
        s.integrator.h = 2.0;
        s.integrator.t_end = 2000.0;
        let (summary, traj) = run(&s, &OutputPaths::default()).unwrap();
        match summary.verdict {
            Verdict::Diverged { t } => assert!(t > 0.0 && t < 2000.0),
            v => panic!("{v:?}"),
        }
        assert_eq!(summary.exit_code(), 3);
        assert!(traj.last().state.norm().is_finite());
    }

    #[test]
    fn certify_initial_state_is_far() {
        let mut s = Scenario::paper_sec6();
        s.integrator.t_end = 0.0;
        let (_, traj) = run(&s, &OutputPaths::default()).unwrap();
        let r = certify(&s, &traj.records).unwrap();
        assert!(r.final_state.kkt > 1.0);
        assert!(r.final_state.consensus > 1.0);
        let a = r.analytic.unwrap();
        assert!(a.kkt <= 1e-8 && a.fixed_point <= 1e-8);
    }
}
