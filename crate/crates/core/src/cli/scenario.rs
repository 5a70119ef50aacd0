//! Scenario files.
//!
//! A scenario is one TOML document. Top-level keys: `name`, `variant`, and
//! the tables `graph`, `params`, `integrator`, `initial`, `output`,
//! `certificate`, plus one `[[agents]]` entry per node. Node indices in
//! `graph.edges` are 1-based.

use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use toml::Spanned;

use crate::dynamics::{default_params, AlgorithmParams, Method, SystemState, Variant, DEFAULT_STEP};
use crate::error::{Error, Result};
use crate::graph::{Edge, Graph};
use crate::problem::{AgentObjective, ProblemSpec};
use crate::prox::ProximableFunction;

pub const DEFAULT_STRIDE: usize = 100;
pub const DEFAULT_CONVERGENCE_TOL: f64 = 1e-4;

const PAPER_SEC6: &str = include_str!("../../scenarios/paper_sec6.toml");
const SINGLE_AGENT: &str = include_str!("../../scenarios/single_agent.toml");

/// Names accepted by [`Scenario::builtin`].
pub const BUILTIN_SCENARIOS: [&str; 2] = ["paper_sec6", "single_agent"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSection {
    pub nodes: usize,
    #[serde(default)]
    pub edges: Vec<Edge>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum ParamsSection {
    Explicit { alpha: f64, gamma: f64 },
    /// `α = safety/λ_max`, `γ = safety·(1 − α λ_max)`.
    Auto { safety: f64 },
}

fn default_h() -> f64 {
    DEFAULT_STEP
}

fn default_tol() -> f64 {
    DEFAULT_CONVERGENCE_TOL
}

fn default_stride() -> usize {
    DEFAULT_STRIDE
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    #[serde(default)]
    pub method: Method,
    #[serde(default = "default_h")]
    pub h: f64,
    pub t_end: f64,
    /// Fixed-point residual at or below which a run counts as converged.
    #[serde(default = "default_tol")]
    pub convergence_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub x0: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z0: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v0: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Trajectory file; relative paths resolve against the scenario file's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<PathBuf>,
    /// Certificate sidecar file written when a certificate is built.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate: Option<PathBuf>,
    #[serde(default = "default_stride")]
    pub stride: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            trajectory: None,
            certificate: None,
            stride: DEFAULT_STRIDE,
        }
    }
}

/// Consensus point at which to build an analytic equilibrium certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateSection {
    pub point: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub variant: Variant,
    pub graph: GraphSection,
    pub params: ParamsSection,
    pub integrator: IntegratorSection,
    pub initial: InitialSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate: Option<CertificateSection>,
    pub agents: Vec<AgentObjective>,
}

/// Same layout as [`Scenario`] with spans kept for error reporting.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: String,
    #[serde(default)]
    variant: Option<Spanned<Variant>>,
    graph: Spanned<GraphSection>,
    params: Spanned<ParamsSection>,
    integrator: Spanned<IntegratorSection>,
    initial: Spanned<InitialSection>,
    #[serde(default)]
    output: Option<Spanned<OutputSection>>,
    #[serde(default)]
    certificate: Option<Spanned<CertificateSection>>,
    agents: Spanned<Vec<Spanned<AgentObjective>>>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

fn scenario_error(key: impl Into<String>, line: Option<usize>, message: impl ToString) -> Error {
    Error::Scenario {
        key: key.into(),
        line,
        message: message.to_string(),
    }
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawScenario = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| line_of(text, s.start));
            scenario_error("document", line, e.message())
        })?;
        let mut lines: Vec<(String, usize)> = vec![
            ("graph".into(), line_of(text, raw.graph.span().start)),
            ("params".into(), line_of(text, raw.params.span().start)),
            ("integrator".into(), line_of(text, raw.integrator.span().start)),
            ("initial".into(), line_of(text, raw.initial.span().start)),
            ("agents".into(), line_of(text, raw.agents.span().start)),
        ];
        if let Some(v) = &raw.variant {
            lines.push(("variant".into(), line_of(text, v.span().start)));
        }
        if let Some(o) = &raw.output {
            lines.push(("output".into(), line_of(text, o.span().start)));
        }
        if let Some(c) = &raw.certificate {
            lines.push(("certificate".into(), line_of(text, c.span().start)));
        }
        for (i, a) in raw.agents.get_ref().iter().enumerate() {
            lines.push((format!("agents[{}]", i + 1), line_of(text, a.span().start)));
        }
        let scenario = Scenario {
            name: raw.name,
            variant: raw.variant.map(Spanned::into_inner).unwrap_or_default(),
            graph: raw.graph.into_inner(),
            params: raw.params.into_inner(),
            integrator: raw.integrator.into_inner(),
            initial: raw.initial.into_inner(),
            output: raw.output.map(Spanned::into_inner).unwrap_or_default(),
            certificate: raw.certificate.map(Spanned::into_inner),
            agents: raw.agents.into_inner().into_iter().map(Spanned::into_inner).collect(),
        };
        scenario.check(|key| {
            let section = key.split('.').next().unwrap_or(key);
            lines
                .iter()
                .find(|(k, _)| k == section)
                .or_else(|| {
                    let table = section.split('[').next().unwrap_or(section);
                    lines.iter().find(|(k, _)| k == table)
                })
                .map(|(_, l)| *l)
        })?;
        Ok(scenario)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes to TOML")
    }

    /// Re-runs all consistency checks, e.g. after command-line overrides.
    pub fn validate(&self) -> Result<()> {
        self.check(|_| None)
    }

    pub fn builtin(name: &str) -> Option<Self> {
        let text = match name {
            "paper_sec6" => PAPER_SEC6,
            "single_agent" => SINGLE_AGENT,
            _ => return None,
        };
        Some(Self::from_toml_str(text).expect("bundled scenario is valid"))
    }

    /// The four-agent planar instance with `α = 0.2`, `γ = 0.3`, `h = 1e-3`, `t_end = 100`.
    pub fn paper_sec6() -> Self {
        Self::builtin("paper_sec6").expect("bundled")
    }

    pub fn dim(&self) -> usize {
        self.agents.first().map(AgentObjective::dim).unwrap_or(0)
    }

    pub fn graph(&self) -> Result<Graph> {
        Graph::from_edges(self.graph.nodes, &self.graph.edges)
    }

    pub fn problem(&self) -> Result<ProblemSpec> {
        ProblemSpec::new(self.graph()?, self.agents.clone())
    }

    pub fn algorithm_params(&self) -> Result<AlgorithmParams> {
        let IntegratorSection { method, h, t_end, .. } = self.integrator;
        match self.params {
            ParamsSection::Explicit { alpha, gamma } => {
                let p = AlgorithmParams {
                    alpha,
                    gamma,
                    h,
                    t_end,
                    method,
                };
                p.check(self.graph()?.laplacian()?.lambda_max)?;
                Ok(p)
            }
            ParamsSection::Auto { safety } => default_params(&self.graph()?, safety, h, t_end, method),
        }
    }

    pub fn initial_state(&self) -> SystemState {
        let n = self.graph.nodes;
        let q = self.dim();
        let block = |rows: &Option<Vec<Vec<f64>>>| match rows {
            Some(r) => Array2::from_shape_fn((n, q), |(i, k)| r[i][k]),
            None => Array2::zeros((n, q)),
        };
        SystemState {
            x: Array2::from_shape_fn((n, q), |(i, k)| self.initial.x0[i][k]),
            z: block(&self.initial.z0),
            v: block(&self.initial.v0),
            t: 0.0,
        }
    }

    fn check(&self, line: impl Fn(&str) -> Option<usize>) -> Result<()> {
        let err = |key: &str, msg: String| scenario_error(key, line(key), msg);
        let n = self.graph.nodes;
        if n == 0 {
            return Err(err("graph.nodes", "graph needs at least one node".into()));
        }
        let graph = Graph::from_edges(n, &self.graph.edges).map_err(|e| err("graph.edges", e.to_string()))?;
        if self.agents.len() != n {
            return Err(err(
                "agents",
                format!("{} agents declared for {n} graph nodes", self.agents.len()),
            ));
        }
        let q = self.dim();
        if q == 0 {
            return Err(err("agents[1]", "dimension must be at least 1".into()));
        }
        for (i, a) in self.agents.iter().enumerate() {
            let key = format!("agents[{}]", i + 1);
            a.validate().map_err(|e| err(&key, e.to_string()))?;
            if a.dim() != q {
                return Err(err(&key, format!("dimension {} differs from agents[1] ({q})", a.dim())));
            }
        }
        let check_block = |key: &str, rows: &[Vec<f64>]| -> Result<()> {
            if rows.len() != n {
                return Err(err(key, format!("expected {n} rows, got {}", rows.len())));
            }
            for (i, r) in rows.iter().enumerate() {
                if r.len() != q {
                    return Err(err(key, format!("row {} has {} entries, expected {q}", i + 1, r.len())));
                }
                if !r.iter().all(|v| v.is_finite()) {
                    return Err(err(key, format!("row {} is not finite", i + 1)));
                }
            }
            Ok(())
        };
        check_block("initial.x0", &self.initial.x0)?;
        if let Some(z0) = &self.initial.z0 {
            check_block("initial.z0", z0)?;
        }
        if let Some(v0) = &self.initial.v0 {
            check_block("initial.v0", v0)?;
        }
        let IntegratorSection {
            h,
            t_end,
            convergence_tol,
            ..
        } = self.integrator;
        if !(h > 0.0 && h.is_finite()) {
            return Err(err("integrator.h", format!("step must be positive, got {h}")));
        }
        if !(t_end >= 0.0 && t_end.is_finite()) {
            return Err(err("integrator.t_end", format!("horizon must be >= 0, got {t_end}")));
        }
        if !(convergence_tol > 0.0) {
            return Err(err("integrator.convergence_tol", "must be positive".into()));
        }
        if self.output.stride == 0 {
            return Err(err("output.stride", "must be at least 1".into()));
        }
        let lambda_max = graph.laplacian().map_err(|e| err("graph", e.to_string()))?.lambda_max;
        match self.params {
            ParamsSection::Explicit { alpha, gamma } => AlgorithmParams {
                alpha,
                gamma,
                h,
                t_end,
                method: self.integrator.method,
            }
            .check(lambda_max)
            .map_err(|e| err("params", e.to_string()))?,
            ParamsSection::Auto { safety } => {
                default_params(&graph, safety, h, t_end, self.integrator.method)
                    .map_err(|e| err("params", e.to_string()))?;
            }
        }
        if let Some(c) = &self.certificate {
            if c.point.len() != q {
                return Err(err(
                    "certificate.point",
                    format!("expected {q} entries, got {}", c.point.len()),
                ));
            }
        }
        if self.variant == Variant::Subgradient {
            if let Some(i) = self
                .agents
                .iter()
                .position(|a| !matches!(a.f2, ProximableFunction::L1Anchor { .. }))
            {
                return Err(err(
                    "variant",
                    format!("subgradient variant needs l1_anchor f2, agents[{}] has {}", i + 1, self.agents[i].f2.kind_name()),
                ));
            }
        }
        Ok(())
    }
}

/// Reads a scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| scenario_error(path.display().to_string(), None, e))?;
    Scenario::from_toml_str(&text)
}
