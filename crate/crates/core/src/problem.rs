//! Problem instances: per-agent `f⁰ + f¹ + f²` over a communication graph.

use std::fmt;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, LaplacianData};
use crate::prox::ProximableFunction;

/// Points this close to an indicator set count as inside when evaluating costs.
pub const INDICATOR_TOLERANCE: f64 = 1e-9;

/// Smooth strongly convex term. Only the quadratic kind `k‖x − m‖²` exists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SmoothFunction {
    Quadratic { m: Vec<f64>, k: f64 },
}

impl SmoothFunction {
    pub fn quadratic(m: Vec<f64>, k: f64) -> Result<Self> {
        let f = SmoothFunction::Quadratic { m, k };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        let SmoothFunction::Quadratic { m, k } = self;
        if !m.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidFunction("quadratic target must be finite".into()));
        }
        if !(k.is_finite() && *k > 0.0) {
            return Err(Error::InvalidFunction(format!(
                "quadratic scale must be positive, got {k}"
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        let SmoothFunction::Quadratic { m, .. } = self;
        m.len()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let SmoothFunction::Quadratic { m, k } = self;
        k * x.iter().zip(m).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "smooth term gradient".into(),
                expected: self.dim(),
                got: x.len(),
            });
        }
        let mut out = vec![0.0; x.len()];
        self.gradient_into(x, &mut out);
        Ok(out)
    }

    pub(crate) fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        let SmoothFunction::Quadratic { m, k } = self;
        for ((o, a), b) in out.iter_mut().zip(x).zip(m) {
            *o = 2.0 * k * (a - b);
        }
    }

    /// Strong-convexity modulus `c`; exact for quadratics (`c = 2k`).
    pub fn strong_convexity(&self) -> f64 {
        let SmoothFunction::Quadratic { k, .. } = self;
        2.0 * k
    }

    fn scaled(&self, factor: f64) -> Self {
        let SmoothFunction::Quadratic { m, k } = self;
        SmoothFunction::Quadratic {
            m: m.clone(),
            k: k * factor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentObjective {
    pub f0: SmoothFunction,
    pub f1: ProximableFunction,
    pub f2: ProximableFunction,
}

impl AgentObjective {
    pub fn new(f0: SmoothFunction, f1: ProximableFunction, f2: ProximableFunction) -> Result<Self> {
        let a = AgentObjective { f0, f1, f2 };
        a.validate()?;
        Ok(a)
    }

    pub fn validate(&self) -> Result<()> {
        self.f0.validate()?;
        self.f1.validate()?;
        self.f2.validate()?;
        let q = self.f0.dim();
        for (name, f) in [("f1", &self.f1), ("f2", &self.f2)] {
            if let Some(d) = f.dim() {
                if d != q {
                    return Err(Error::DimensionMismatch {
                        context: format!("{name} of agent objective"),
                        expected: q,
                        got: d,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.f0.dim()
    }

    pub fn gradient_f0(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.f0.gradient(x)
    }

    /// `f⁰ + f¹ + f²` at `x`, with indicator sets widened by [`INDICATOR_TOLERANCE`].
    pub fn value(&self, x: &[f64]) -> f64 {
        self.f0.value(x)
            + self.f1.value_with_tolerance(x, INDICATOR_TOLERANCE)
            + self.f2.value_with_tolerance(x, INDICATOR_TOLERANCE)
    }
}

/// Multiplies `f⁰` by `factor`, lifting the strong-convexity modulus to `factor·c`.
pub fn scale_for_strong_convexity(agent: &AgentObjective, factor: f64) -> Result<AgentObjective> {
    let bound = 1.0 / agent.f0.strong_convexity();
    if !(factor > bound) {
        return Err(Error::ScaleTooSmall { k: factor, bound });
    }
    Ok(AgentObjective {
        f0: agent.f0.scaled(factor),
        f1: agent.f1.clone(),
        f2: agent.f2.clone(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    graph: Graph,
    laplacian: LaplacianData,
    agents: Vec<AgentObjective>,
    dim: usize,
}

impl ProblemSpec {
    /// Checks dimensions only; assumption checks live in [`ProblemSpec::validate_assumptions`].
    pub fn new(graph: Graph, agents: Vec<AgentObjective>) -> Result<Self> {
        if agents.len() != graph.node_count() {
            return Err(Error::DimensionMismatch {
                context: "agent count vs graph nodes".into(),
                expected: graph.node_count(),
                got: agents.len(),
            });
        }
        let dim = agents.first().map(AgentObjective::dim).unwrap_or(0);
        for a in &agents {
            a.validate()?;
            if a.dim() != dim {
                return Err(Error::DimensionMismatch {
                    context: "agent dimension".into(),
                    expected: dim,
                    got: a.dim(),
                });
            }
        }
        let laplacian = graph.laplacian()?;
        Ok(ProblemSpec {
            graph,
            laplacian,
            agents,
            dim,
        })
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn laplacian(&self) -> &LaplacianData {
        &self.laplacian
    }

    pub fn lambda_max(&self) -> f64 {
        self.laplacian.lambda_max
    }

    pub fn agents(&self) -> &[AgentObjective] {
        &self.agents
    }

    pub fn agent_count(&self) -> usize {
        self.agents.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn check_block(&self, x: ArrayView2<f64>, what: &str) -> Result<()> {
        if x.nrows() != self.agent_count() {
            return Err(Error::DimensionMismatch {
                context: format!("{what} rows"),
                expected: self.agent_count(),
                got: x.nrows(),
            });
        }
        if x.ncols() != self.dim {
            return Err(Error::DimensionMismatch {
                context: format!("{what} columns"),
                expected: self.dim,
                got: x.ncols(),
            });
        }
        Ok(())
    }

    /// `F(x) = Σ_i f_i(x_i)`; `+∞` if any indicator is violated.
    pub fn evaluate_total_cost(&self, x: ArrayView2<f64>) -> f64 {
        self.agents
            .iter()
            .zip(x.rows())
            .map(|(a, row)| a.value(&row.to_vec()))
            .sum()
    }

    /// `1ᵀ F⁰(x)`, the smooth part only.
    pub fn smooth_cost(&self, x: ArrayView2<f64>) -> f64 {
        self.agents
            .iter()
            .zip(x.rows())
            .map(|(a, row)| a.f0.value(&row.to_vec()))
            .sum()
    }

    /// Stacked `∇F⁰(x)`.
    pub fn smooth_gradient(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros(x.raw_dim());
        let mut buf = vec![0.0; self.dim];
        for (i, a) in self.agents.iter().enumerate() {
            a.f0.gradient_into(&x.row(i).to_vec(), &mut buf);
            out.row_mut(i).iter_mut().zip(&buf).for_each(|(o, b)| *o = *b);
        }
        out
    }

    pub fn validate_assumptions(&self) -> ValidationReport {
        let strong_convexity: Vec<f64> =
            self.agents.iter().map(|a| a.f0.strong_convexity()).collect();
        let min_c = strong_convexity.iter().copied().fold(f64::INFINITY, f64::min);
        let strongly_convex = min_c > 1.0;
        let catalog = self.agents.iter().all(|a| a.validate().is_ok());
        ValidationReport {
            connected: self.graph.is_connected(),
            strong_convexity,
            min_strong_convexity: min_c,
            strongly_convex,
            suggested_scale: (!strongly_convex && min_c > 0.0).then(|| 1.0 / min_c),
            proximable_catalog: catalog,
            feasibility_heuristic: self.indicator_boxes_intersect(),
        }
    }

    fn indicator_boxes_intersect(&self) -> bool {
        let boxes: Vec<(Vec<f64>, Vec<f64>)> = self
            .agents
            .iter()
            .flat_map(|a| [&a.f1, &a.f2])
            .filter_map(|f| match f {
                ProximableFunction::BallIndicator { center, radius } => Some((
                    center.iter().map(|c| c - radius).collect(),
                    center.iter().map(|c| c + radius).collect(),
                )),
                ProximableFunction::BoxIndicator { lo, hi } => Some((lo.clone(), hi.clone())),
                _ => None,
            })
            .collect();
        boxes.iter().enumerate().all(|(k, (lo_a, hi_a))| {
            boxes[k + 1..].iter().all(|(lo_b, hi_b)| {
                (0..lo_a.len()).all(|d| lo_a[d] <= hi_b[d] && lo_b[d] <= hi_a[d])
            })
        })
    }
}

/// Outcome of checking the standing assumptions on a [`ProblemSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    /// Graph connected (and undirected by construction).
    pub connected: bool,
    /// Per-agent strong-convexity modulus of `f⁰`.
    pub strong_convexity: Vec<f64>,
    pub min_strong_convexity: f64,
    /// `min c > 1`.
    pub strongly_convex: bool,
    /// Lower bound on a scale factor `K` that would restore `c > 1`.
    pub suggested_scale: Option<f64>,
    /// Both nonsmooth terms are valid catalog members (closed, proper, convex, proximable).
    pub proximable_catalog: bool,
    /// Necessary condition only: bounding boxes of all indicator sets pairwise intersect.
    pub feasibility_heuristic: bool,
}

impl ValidationReport {
    pub fn all_pass(&self) -> bool {
        self.connected && self.strongly_convex && self.proximable_catalog && self.feasibility_heuristic
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mark = |b: bool| if b { "pass" } else { "FAIL" };
        writeln!(f, "graph connected and undirected: {}", mark(self.connected))?;
        write!(
            f,
            "strong convexity c > 1 (min c = {}): {}",
            self.min_strong_convexity,
            mark(self.strongly_convex)
        )?;
        if let Some(k) = self.suggested_scale {
            write!(f, " (scale f0 by K > {k})")?;
        }
        writeln!(f)?;
        writeln!(f, "nonsmooth terms proximable: {}", mark(self.proximable_catalog))?;
        write!(
            f,
            "feasible solution exists (heuristic, bounding boxes): {}",
            mark(self.feasibility_heuristic)
        )
    }
}

/// Initial agent positions of the four-agent planar example.
pub const PAPER_INITIAL_POSITIONS: [[f64; 2]; 4] = [[-4.0, 5.5], [6.0, 5.0], [5.0, -3.5], [-5.0, -5.0]];

/// Four agents on a unit-weight path in the plane: `f⁰_i = ‖x − m_i‖²`,
/// `f¹_i` the indicator of the radius-8 ball around the agent's start,
/// `f²_i = ‖x − p_i‖₁`, with `m_i = [i − 2.5, 0]` and `p_i = [0, i − 2.5]`.
pub fn paper_sec6() -> ProblemSpec {
    let agents = (1..=4)
        .map(|i| {
            let c = i as f64 - 2.5;
            AgentObjective::new(
                SmoothFunction::quadratic(vec![c, 0.0], 1.0).unwrap(),
                ProximableFunction::ball(PAPER_INITIAL_POSITIONS[i - 1].to_vec(), 8.0).unwrap(),
                ProximableFunction::l1_anchor(vec![0.0, c], 1.0).unwrap(),
            )
            .unwrap()
        })
        .collect();
    ProblemSpec::new(Graph::path(4), agents).expect("paper instance is consistent")
}
