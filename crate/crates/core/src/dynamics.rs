//! Double proximal primal-dual dynamics and their time discretization.
//!
//! Per agent `i`, with `s_i(u) = Σ_{j∈N_i} a_ij (u_i − u_j)`:
//!
//! ```text
//! ẋ_i = prox_{f¹_i}[x_i − ∇f⁰_i(x_i) − α s_i(v) − α s_i(x) + γ z_i] − x_i
//! ż_i = prox_{f²_i}[x_i − γ z_i] − x_i
//! v̇_i = α s_i(x)
//! ```
//!
//! The auxiliary `z` tracks a subgradient of `f²` through its own prox, so the
//! unproximable sum `f¹ + f²` is never needed. The right-hand side is
//! locally Lipschitz even though `f¹`, `f²` are not smooth.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{self, EquilibriumCertificate};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::problem::ProblemSpec;
use crate::prox::ProximableFunction;

pub const DEFAULT_STEP: f64 = 1e-3;
pub const DIVERGENCE_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Euler,
    Rk4,
}

/// Which right-hand side to integrate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[default]
    Smooth,
    /// Comparator that feeds a sign-rule subgradient of `f²` straight into the `x` update.
    #[serde(alias = "subgradient-baseline", alias = "subgradient_baseline")]
    Subgradient,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmParams {
    pub alpha: f64,
    pub gamma: f64,
    /// Integration step, seconds.
    pub h: f64,
    /// Horizon, seconds.
    pub t_end: f64,
    #[serde(default)]
    pub method: Method,
}

impl AlgorithmParams {
    /// Requires `0 < α < 1/λ_max`, `0 < γ < 1 − α λ_max`, `h > 0`, `t_end ≥ 0`.
    pub fn check(&self, lambda_max: f64) -> Result<()> {
        let AlgorithmParams {
            alpha,
            gamma,
            h,
            t_end,
            ..
        } = *self;
        if !(alpha > 0.0) || alpha * lambda_max >= 1.0 || !alpha.is_finite() {
            return Err(Error::ParameterBound(format!(
                "alpha = {alpha} must lie in (0, 1/lambda_max) with lambda_max = {lambda_max}"
            )));
        }
        let gamma_bound = 1.0 - alpha * lambda_max;
        if !(gamma > 0.0) || gamma >= gamma_bound {
            return Err(Error::ParameterBound(format!(
                "gamma = {gamma} must lie in (0, {gamma_bound})"
            )));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::ParameterBound(format!("step h = {h} must be positive")));
        }
        if !(t_end >= 0.0 && t_end.is_finite()) {
            return Err(Error::ParameterBound(format!("t_end = {t_end} must be >= 0")));
        }
        Ok(())
    }
}

/// `α = safety/λ_max`, `γ = safety·(1 − α λ_max)`.
pub fn default_params(
    graph: &Graph,
    safety: f64,
    h: f64,
    t_end: f64,
    method: Method,
) -> Result<AlgorithmParams> {
    if !(safety > 0.0 && safety < 1.0) {
        return Err(Error::ParameterBound(format!(
            "safety fraction {safety} must lie in (0, 1)"
        )));
    }
    if !graph.is_connected() {
        return Err(Error::Assumptions("graph is not connected".into()));
    }
    let lambda_max = graph.laplacian()?.lambda_max;
    if lambda_max <= 0.0 {
        return Err(Error::EdgelessGraph);
    }
    let alpha = safety / lambda_max;
    let gamma = safety * (1.0 - alpha * lambda_max);
    let params = AlgorithmParams {
        alpha,
        gamma,
        h,
        t_end,
        method,
    };
    params.check(lambda_max)?;
    Ok(params)
}

/// Stacked primal `x`, auxiliary `z` and dual `v`, one row per agent.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub x: Array2<f64>,
    pub z: Array2<f64>,
    pub v: Array2<f64>,
    pub t: f64,
}

impl SystemState {
    /// `z` and `v` start at zero.
    pub fn from_positions(x: Array2<f64>) -> Self {
        let z = Array2::zeros(x.raw_dim());
        let v = Array2::zeros(x.raw_dim());
        SystemState { x, z, v, t: 0.0 }
    }

    pub fn norm(&self) -> f64 {
        self.x
            .iter()
            .chain(self.z.iter())
            .chain(self.v.iter())
            .map(|a| a * a)
            .sum::<f64>()
            .sqrt()
    }

    fn advanced(&self, f: &Field, h: f64) -> SystemState {
        SystemState {
            x: &self.x + &(&f.dx * h),
            z: &self.z + &(&f.dz * h),
            v: &self.v + &(&f.dv * h),
            t: self.t + h,
        }
    }
}

/// Right-hand side `(ẋ, ż, v̇)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub dx: Array2<f64>,
    pub dz: Array2<f64>,
    pub dv: Array2<f64>,
}

impl Field {
    pub fn norm(&self) -> f64 {
        self.dx
            .iter()
            .chain(self.dz.iter())
            .chain(self.dv.iter())
            .map(|a| a * a)
            .sum::<f64>()
            .sqrt()
    }
}

/// A problem paired with parameters that passed the α/γ bound check.
#[derive(Debug, Clone)]
pub struct Dynamics<'a> {
    problem: &'a ProblemSpec,
    params: AlgorithmParams,
    variant: Variant,
}

impl<'a> Dynamics<'a> {
    pub fn new(problem: &'a ProblemSpec, params: AlgorithmParams) -> Result<Self> {
        Self::with_variant(problem, params, Variant::Smooth)
    }

    pub fn with_variant(
        problem: &'a ProblemSpec,
        params: AlgorithmParams,
        variant: Variant,
    ) -> Result<Self> {
        params.check(problem.lambda_max())?;
        if variant == Variant::Subgradient {
            if let Some(i) = problem
                .agents()
                .iter()
                .position(|a| !matches!(a.f2, ProximableFunction::L1Anchor { .. }))
            {
                return Err(Error::Unsupported(format!(
                    "subgradient comparator needs an l1_anchor f2; agent {} has {}",
                    i + 1,
                    problem.agents()[i].f2.kind_name()
                )));
            }
        }
        Ok(Dynamics {
            problem,
            params,
            variant,
        })
    }

    pub fn problem(&self) -> &'a ProblemSpec {
        self.problem
    }

    pub fn params(&self) -> &AlgorithmParams {
        &self.params
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    fn check_state(&self, s: &SystemState) -> Result<()> {
        self.problem.check_block(s.x.view(), "x")?;
        self.problem.check_block(s.z.view(), "z")?;
        self.problem.check_block(s.v.view(), "v")
    }

    /// Right-hand side of the selected variant.
    pub fn field(&self, s: &SystemState) -> Result<Field> {
        self.check_state(s)?;
        let f = match self.variant {
            Variant::Smooth => self.smooth_field(s),
            Variant::Subgradient => self.comparator_field(s),
        };
        self.check_finite(&f, s.t)?;
        Ok(f)
    }

    pub fn vector_field(&self, s: &SystemState) -> Result<Field> {
        self.check_state(s)?;
        let f = self.smooth_field(s);
        self.check_finite(&f, s.t)?;
        Ok(f)
    }

    pub fn subgradient_field(&self, s: &SystemState) -> Result<Field> {
        self.check_state(s)?;
        if self.variant != Variant::Subgradient {
            Dynamics::with_variant(self.problem, self.params, Variant::Subgradient)?;
        }
        let f = self.comparator_field(s);
        self.check_finite(&f, s.t)?;
        Ok(f)
    }

    fn check_finite(&self, f: &Field, t: f64) -> Result<()> {
        for i in 0..f.dx.nrows() {
            let finite = f.dx.row(i).iter().all(|v| v.is_finite())
                && f.dz.row(i).iter().all(|v| v.is_finite())
                && f.dv.row(i).iter().all(|v| v.is_finite());
            if !finite {
                return Err(Error::NonFiniteField { agent: i + 1, t });
            }
        }
        Ok(())
    }

    fn smooth_field(&self, s: &SystemState) -> Field {
        self.assemble(s, |i, x_i, z_i, eta1, dz_out| {
            let gamma = self.params.gamma;
            for (e, z) in eta1.iter_mut().zip(z_i) {
                *e += gamma * z;
            }
            let f2 = &self.problem.agents()[i].f2;
            let arg: Vec<f64> = x_i.iter().zip(z_i).map(|(x, z)| x - gamma * z).collect();
            f2.prox_into(&arg, dz_out);
            for (d, x) in dz_out.iter_mut().zip(x_i) {
                *d -= x;
            }
        })
    }

    fn comparator_field(&self, s: &SystemState) -> Field {
        self.assemble(s, |i, x_i, _z_i, eta1, dz_out| {
            let g = self.problem.agents()[i]
                .f2
                .min_norm_subgradient(x_i)
                .expect("variant checked at construction");
            for (e, gv) in eta1.iter_mut().zip(&g) {
                *e -= gv;
            }
            dz_out.iter_mut().for_each(|d| *d = 0.0);
        })
    }

    /// Shared skeleton: builds `x_i − ∇f⁰_i − α s_i(v) − α s_i(x)`, lets `extra`
    /// add the variant-specific term and fill `ż_i`, then applies `prox_{f¹_i}`.
    fn assemble(
        &self,
        s: &SystemState,
        extra: impl Fn(usize, &[f64], &[f64], &mut [f64], &mut [f64]),
    ) -> Field {
        let n = self.problem.agent_count();
        let q = self.problem.dim();
        let graph = self.problem.graph();
        let alpha = self.params.alpha;
        let mut f = Field {
            dx: Array2::zeros((n, q)),
            dz: Array2::zeros((n, q)),
            dv: Array2::zeros((n, q)),
        };
        let mut lx = vec![0.0; q];
        let mut lv = vec![0.0; q];
        let mut grad = vec![0.0; q];
        let mut eta = vec![0.0; q];
        let mut prox = vec![0.0; q];
        let mut dz = vec![0.0; q];
        for (i, agent) in self.problem.agents().iter().enumerate() {
            let x_i = s.x.row(i).to_vec();
            let z_i = s.z.row(i).to_vec();
            graph.neighbor_sum(i, s.x.view(), &mut lx);
            graph.neighbor_sum(i, s.v.view(), &mut lv);
            agent.f0.gradient_into(&x_i, &mut grad);
            for k in 0..q {
                eta[k] = x_i[k] - grad[k] - alpha * lv[k] - alpha * lx[k];
            }
            extra(i, &x_i, &z_i, &mut eta, &mut dz);
            agent.f1.prox_into(&eta, &mut prox);
            for k in 0..q {
                f.dx[[i, k]] = prox[k] - x_i[k];
                f.dz[[i, k]] = dz[k];
                f.dv[[i, k]] = alpha * lx[k];
            }
        }
        f
    }

    /// One explicit step of size `h`.
    pub fn step(&self, s: &SystemState) -> Result<SystemState> {
        let k1 = self.field(s)?;
        self.step_with(s, k1)
    }

    fn step_with(&self, s: &SystemState, k1: Field) -> Result<SystemState> {
        let h = self.params.h;
        match self.params.method {
            Method::Euler => Ok(s.advanced(&k1, h)),
            Method::Rk4 => {
                let k2 = self.field(&s.advanced(&k1, 0.5 * h))?;
                let k3 = self.field(&s.advanced(&k2, 0.5 * h))?;
                let k4 = self.field(&s.advanced(&k3, h))?;
                let combo = |a: &Array2<f64>, b: &Array2<f64>, c: &Array2<f64>, d: &Array2<f64>| {
                    (a + &(b * 2.0) + &(c * 2.0) + d) / 6.0
                };
                let avg = Field {
                    dx: combo(&k1.dx, &k2.dx, &k3.dx, &k4.dx),
                    dz: combo(&k1.dz, &k2.dz, &k3.dz, &k4.dz),
                    dv: combo(&k1.dv, &k2.dv, &k3.dv, &k4.dv),
                };
                Ok(s.advanced(&avg, h))
            }
        }
    }

    /// Number of steps needed to reach `t_end` from `t0`.
    pub fn step_count(&self, t0: f64) -> usize {
        let span = self.params.t_end - t0;
        if span <= 0.0 {
            0
        } else {
            (span / self.params.h - 1e-9).ceil() as usize
        }
    }

    /// Integrates to `t_end`, calling `visit(k, state, field)` for every visited
    /// state `k = 0..=N` (the field is the one the step from that state starts with).
    ///
    /// Times are set to `t0 + k·h` so that long runs do not accumulate drift.
    pub fn integrate(
        &self,
        s0: &SystemState,
        mut visit: impl FnMut(usize, &SystemState, &Field) -> Result<()>,
    ) -> Result<SystemState> {
        let steps = self.step_count(s0.t);
        let mut s = s0.clone();
        for k in 0..steps {
            let f = self.field(&s)?;
            visit(k, &s, &f)?;
            let mut next = self.step_with(&s, f)?;
            next.t = s0.t + (k + 1) as f64 * self.params.h;
            if !(next.norm() <= DIVERGENCE_LIMIT) {
                return Err(Error::Diverged {
                    t: next.t,
                    limit: DIVERGENCE_LIMIT,
                });
            }
            s = next;
        }
        let f = self.field(&s)?;
        visit(steps, &s, &f)?;
        Ok(s)
    }

    /// Runs to `t_end`, recording every `stride` steps plus the final state.
    pub fn simulate(
        &self,
        s0: &SystemState,
        stride: usize,
        monitor: Option<&EquilibriumCertificate>,
    ) -> Result<Trajectory> {
        let stride = stride.max(1);
        let steps = self.step_count(s0.t);
        let mut records = Vec::with_capacity(steps / stride + 2);
        let graph = self.problem.graph();
        self.integrate(s0, |k, s, f| {
            if k % stride == 0 || k == steps {
                records.push(Record {
                    state: s.clone(),
                    cost: self.problem.evaluate_total_cost(s.x.view()),
                    consensus: diagnostics::consensus_residual(s.x.view(), graph),
                    fixed_point: f.norm(),
                    lyapunov: monitor.map(|c| diagnostics::lyapunov_value(self, s, c)),
                });
            }
            Ok(())
        })?;
        Ok(Trajectory {
            records,
            stride,
            h: self.params.h,
        })
    }
}

pub fn vector_field(s: &SystemState, p: &ProblemSpec, params: &AlgorithmParams) -> Result<Field> {
    Dynamics::new(p, *params)?.vector_field(s)
}

pub fn subgradient_field(
    s: &SystemState,
    p: &ProblemSpec,
    params: &AlgorithmParams,
) -> Result<Field> {
    Dynamics::with_variant(p, *params, Variant::Subgradient)?.subgradient_field(s)
}

pub fn step(s: &SystemState, p: &ProblemSpec, params: &AlgorithmParams) -> Result<SystemState> {
    Dynamics::new(p, *params)?.step(s)
}

pub fn simulate(
    p: &ProblemSpec,
    s0: &SystemState,
    params: &AlgorithmParams,
    stride: usize,
) -> Result<Trajectory> {
    let report = p.validate_assumptions();
    if !report.all_pass() {
        log::warn!("standing assumptions not met:\n{report}");
    }
    Dynamics::new(p, *params)?.simulate(s0, stride, None)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub state: SystemState,
    /// `F(x)`.
    pub cost: f64,
    /// `‖Lx‖`.
    pub consensus: f64,
    /// `‖field(state)‖`.
    pub fixed_point: f64,
    pub lyapunov: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub records: Vec<Record>,
    pub stride: usize,
    pub h: f64,
}

impl Trajectory {
    pub fn last(&self) -> &Record {
        self.records.last().expect("a trajectory holds at least one record")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{paper_sec6, AgentObjective, SmoothFunction, PAPER_INITIAL_POSITIONS};
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn scalar_problem() -> ProblemSpec {
        let agent = AgentObjective::new(
            SmoothFunction::quadratic(vec![0.0], 1.0).unwrap(),
            ProximableFunction::Zero,
            ProximableFunction::Zero,
        )
        .unwrap();
        ProblemSpec::new(Graph::path(1), vec![agent]).unwrap()
    }

    fn params(alpha: f64, gamma: f64, h: f64, t_end: f64, method: Method) -> AlgorithmParams {
        AlgorithmParams {
            alpha,
            gamma,
            h,
            t_end,
            method,
        }
    }

    fn paper_state() -> SystemState {
        let x = Array2::from_shape_fn((4, 2), |(i, k)| PAPER_INITIAL_POSITIONS[i][k]);
        SystemState::from_positions(x)
    }

    #[test]
    fn scalar_field() {
        let p = scalar_problem();
        let prm = params(0.5, 0.3, 0.1, 1.0, Method::Euler);
        let s = SystemState {
            x: array![[1.0]],
            z: array![[0.0]],
            v: array![[0.0]],
            t: 0.0,
        };
        let f = vector_field(&s, &p, &prm).unwrap();
        assert_eq!((f.dx[[0, 0]], f.dz[[0, 0]], f.dv[[0, 0]]), (-2.0, 0.0, 0.0));
        let s2 = SystemState {
            x: array![[0.5]],
            z: array![[2.0]],
            v: array![[7.0]],
            t: 0.0,
        };
        let f2 = vector_field(&s2, &p, &prm).unwrap();
        assert_abs_diff_eq!(f2.dx[[0, 0]], -2.0 * 0.5 + 0.3 * 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(f2.dz[[0, 0]], -0.3 * 2.0, epsilon = 1e-15);
    }

    #[test]
    fn paper_initial_dual_rate() {
        let p = paper_sec6();
        let prm = params(0.2, 0.3, 1e-3, 1.0, Method::Euler);
        let f = vector_field(&paper_state(), &p, &prm).unwrap();
        assert_abs_diff_eq!(f.dv[[0, 0]], -2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.dv[[0, 1]], 0.1, epsilon = 1e-12);
    }

    #[test]
    fn default_params_path4() {
        let g = Graph::path(4);
        let prm = default_params(&g, 0.5, 1e-3, 1.0, Method::Euler).unwrap();
        assert_abs_diff_eq!(prm.alpha, 0.5 / (2.0 + 2f64.sqrt()), epsilon = 1e-12);
        assert_abs_diff_eq!(prm.alpha, 0.14645, epsilon = 1e-5);
        assert_abs_diff_eq!(prm.gamma, 0.25, epsilon = 1e-12);
        assert!(matches!(
            default_params(&Graph::path(1), 0.5, 1e-3, 1.0, Method::Euler),
            Err(Error::EdgelessGraph)
        ));
    }

    #[test]
    fn parameter_bounds() {
        let lmax = 2.0 + 2f64.sqrt();
        assert!(params(0.2, 0.3, 1e-3, 1.0, Method::Euler).check(lmax).is_ok());
        assert!(params(0.3, 0.05, 1e-3, 1.0, Method::Euler).check(lmax).is_err());
        assert!(params(0.2, 0.32, 1e-3, 1.0, Method::Euler).check(lmax).is_err());
        assert!(params(0.2, 0.3, 0.0, 1.0, Method::Euler).check(lmax).is_err());
        let p = paper_sec6();
        assert!(vector_field(&paper_state(), &p, &params(0.3, 0.05, 1e-3, 1.0, Method::Euler)).is_err());
    }

    #[test]
    fn euler_step_example() {
        let p = scalar_problem();
        let prm = params(0.5, 0.3, 0.1, 1.0, Method::Euler);
        let s = SystemState::from_positions(array![[1.0]]);
        let s1 = step(&s, &p, &prm).unwrap();
        assert_abs_diff_eq!(s1.x[[0, 0]], 0.8, epsilon = 1e-15);
        assert_eq!(s1.z[[0, 0]], 0.0);
        assert_eq!(s1.v[[0, 0]], 0.0);
        assert_abs_diff_eq!(s1.t, 0.1);
    }

    #[test]
    fn equilibrium_is_fixed() {
        let p = scalar_problem();
        let prm = params(0.5, 0.3, 0.1, 2.0, Method::Rk4);
        let s = SystemState {
            x: array![[0.0]],
            z: array![[0.0]],
            v: array![[4.0]],
            t: 0.0,
        };
        let f = vector_field(&s, &p, &prm).unwrap();
        assert_eq!(f.norm(), 0.0);
        let traj = Dynamics::new(&p, prm).unwrap().simulate(&s, 3, None).unwrap();
        assert!(traj.records.iter().all(|r| r.state.x == s.x && r.state.v == s.v));
    }

    /// Exact solution of ẋ = −2x + γz, ż = −γz.
    fn exact(x0: f64, z0: f64, gamma: f64, t: f64) -> (f64, f64) {
        let z = z0 * (-gamma * t).exp();
        let c = gamma * z0 / (2.0 - gamma);
        let x = (x0 - c) * (-2.0 * t).exp() + c * (-gamma * t).exp();
        (x, z)
    }

    #[test]
    fn rk4_local_error_is_fifth_order() {
        let p = scalar_problem();
        let s = SystemState {
            x: array![[1.0]],
            z: array![[1.0]],
            v: array![[0.0]],
            t: 0.0,
        };
        let err = |h: f64| {
            let prm = params(0.5, 0.3, h, h, Method::Rk4);
            let s1 = step(&s, &p, &prm).unwrap();
            let (xe, ze) = exact(1.0, 1.0, 0.3, h);
            ((s1.x[[0, 0]] - xe).powi(2) + (s1.z[[0, 0]] - ze).powi(2)).sqrt()
        };
        let (e1, e2) = (err(0.1), err(0.05));
        let ratio = e1 / e2;
        assert!((24.0..40.0).contains(&ratio), "ratio {ratio} ({e1}, {e2})");
        assert!(e1 < 1e-5);
    }

    #[test]
    fn zero_horizon_single_record() {
        let p = paper_sec6();
        let s0 = paper_state();
        let traj = Dynamics::new(&p, params(0.2, 0.3, 1e-3, 0.0, Method::Euler))
            .unwrap()
            .simulate(&s0, 100, None)
            .unwrap();
        assert_eq!(traj.records.len(), 1);
        assert_eq!(traj.records[0].state, s0);
    }

    #[test]
    fn record_spacing() {
        let p = paper_sec6();
        let traj = Dynamics::new(&p, params(0.2, 0.3, 1e-3, 0.25, Method::Euler))
            .unwrap()
            .simulate(&paper_state(), 100, None)
            .unwrap();
        let ts: Vec<f64> = traj.records.iter().map(|r| r.state.t).collect();
        assert_eq!(ts.len(), 4);
        assert_abs_diff_eq!(ts[1], 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(ts[3], 0.25, epsilon = 1e-15);
        assert!(ts.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn divergence_guard() {
        let p = scalar_problem();
        // h far beyond the stability limit of ẋ = −2x
        let prm = params(0.5, 0.3, 5.0, 1e4, Method::Euler);
        let err = Dynamics::new(&p, prm)
            .unwrap()
            .simulate(&SystemState::from_positions(array![[1.0]]), 1, None)
            .unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }), "{err}");
    }

    #[test]
    fn comparator_selection() {
        let agent = AgentObjective::new(
            SmoothFunction::quadratic(vec![2.0], 1.0).unwrap(),
            ProximableFunction::Zero,
            ProximableFunction::l1_anchor(vec![0.0], 1.0).unwrap(),
        )
        .unwrap();
        let p = ProblemSpec::new(Graph::path(1), vec![agent]).unwrap();
        let prm = params(0.5, 0.3, 1e-3, 1.0, Method::Euler);
        // at x = 2 the gradient vanishes and g = 1
        let f = subgradient_field(&SystemState::from_positions(array![[2.0]]), &p, &prm).unwrap();
        assert_eq!(f.dx[[0, 0]], -1.0);
        assert_eq!(f.dz[[0, 0]], 0.0);
        // at the kink g = 0
        let f = subgradient_field(&SystemState::from_positions(array![[0.0]]), &p, &prm).unwrap();
        assert_eq!(f.dx[[0, 0]], 4.0);

        let q = scalar_problem();
        assert!(matches!(
            subgradient_field(&SystemState::from_positions(array![[0.0]]), &q, &prm),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn non_finite_state_reported() {
        let p = scalar_problem();
        let prm = params(0.5, 0.3, 0.1, 1.0, Method::Euler);
        let s = SystemState::from_positions(array![[f64::NAN]]);
        assert!(matches!(
            vector_field(&s, &p, &prm),
            Err(Error::NonFiniteField { agent: 1, .. })
        ));
    }
}
