//! Closed catalog of proximable convex functions.
//!
//! Each kind has a closed-form proximal operator
//! `prox_f[η] = argmin_δ f(δ) + ½‖δ − η‖²`, the Moreau envelope (the value of
//! that minimum), a subdifferential membership check, and a grid-search
//! oracle that does not share code with the closed forms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ProximableFunction {
    /// `f ≡ 0`.
    Zero,
    /// `weight · ‖δ − anchor‖₁`.
    L1Anchor { anchor: Vec<f64>, weight: f64 },
    /// Indicator of the closed Euclidean ball.
    #[serde(rename = "ball")]
    BallIndicator { center: Vec<f64>, radius: f64 },
    /// Indicator of the box `lo ≤ δ ≤ hi`.
    #[serde(rename = "box")]
    BoxIndicator { lo: Vec<f64>, hi: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProxResult {
    pub point: Vec<f64>,
    /// Moreau envelope `f(point) + ½‖point − η‖²`.
    pub envelope: f64,
}

impl ProximableFunction {
    pub fn l1_anchor(anchor: Vec<f64>, weight: f64) -> Result<Self> {
        let f = ProximableFunction::L1Anchor { anchor, weight };
        f.validate()?;
        Ok(f)
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        let f = ProximableFunction::BallIndicator { center, radius };
        f.validate()?;
        Ok(f)
    }

    pub fn boxed(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        let f = ProximableFunction::BoxIndicator { lo, hi };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match self {
            ProximableFunction::Zero => Ok(()),
            ProximableFunction::L1Anchor { anchor, weight } => {
                if !finite(anchor) {
                    return Err(Error::InvalidFunction("l1_anchor anchor must be finite".into()));
                }
                if !(weight.is_finite() && *weight > 0.0) {
                    return Err(Error::InvalidFunction(format!(
                        "l1_anchor weight must be positive, got {weight}"
                    )));
                }
                Ok(())
            }
            ProximableFunction::BallIndicator { center, radius } => {
                if !finite(center) {
                    return Err(Error::InvalidFunction("ball center must be finite".into()));
                }
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(Error::InvalidFunction(format!(
                        "ball radius must be positive, got {radius}"
                    )));
                }
                Ok(())
            }
            ProximableFunction::BoxIndicator { lo, hi } => {
                if lo.len() != hi.len() {
                    return Err(Error::DimensionMismatch {
                        context: "box bounds".into(),
                        expected: lo.len(),
                        got: hi.len(),
                    });
                }
                for (k, (l, h)) in lo.iter().zip(hi).enumerate() {
                    if l.is_nan() || h.is_nan() || l > h {
                        return Err(Error::InvalidFunction(format!(
                            "box requires lo <= hi, violated at coordinate {k}"
                        )));
                    }
                }
                Ok(())
            }
        }
    }

    /// Dimension fixed by the parameters; `None` for [`ProximableFunction::Zero`].
    pub fn dim(&self) -> Option<usize> {
        match self {
            ProximableFunction::Zero => None,
            ProximableFunction::L1Anchor { anchor, .. } => Some(anchor.len()),
            ProximableFunction::BallIndicator { center, .. } => Some(center.len()),
            ProximableFunction::BoxIndicator { lo, .. } => Some(lo.len()),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            ProximableFunction::Zero => "zero",
            ProximableFunction::L1Anchor { .. } => "l1_anchor",
            ProximableFunction::BallIndicator { .. } => "ball",
            ProximableFunction::BoxIndicator { .. } => "box",
        }
    }

    pub fn is_indicator(&self) -> bool {
        matches!(
            self,
            ProximableFunction::BallIndicator { .. } | ProximableFunction::BoxIndicator { .. }
        )
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        match self.dim() {
            Some(d) if d != x.len() => Err(Error::DimensionMismatch {
                context: format!("{} argument", self.kind_name()),
                expected: d,
                got: x.len(),
            }),
            _ => Ok(()),
        }
    }

    /// `f(x)`; indicators return `+∞` outside their set.
    pub fn value(&self, x: &[f64]) -> f64 {
        self.value_with_tolerance(x, 0.0)
    }

    /// Like [`value`](Self::value), but points within `tol` of an indicator set count as inside.
    pub fn value_with_tolerance(&self, x: &[f64], tol: f64) -> f64 {
        match self {
            ProximableFunction::Zero => 0.0,
            ProximableFunction::L1Anchor { anchor, weight } => {
                weight * x.iter().zip(anchor).map(|(a, p)| (a - p).abs()).sum::<f64>()
            }
            ProximableFunction::BallIndicator { center, radius } => {
                if dist(x, center) <= radius + tol {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            ProximableFunction::BoxIndicator { lo, hi } => {
                let inside = x
                    .iter()
                    .zip(lo.iter().zip(hi))
                    .all(|(v, (l, h))| *v >= l - tol && *v <= h + tol);
                if inside {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    pub fn prox(&self, eta: &[f64]) -> Result<ProxResult> {
        self.check_dim(eta)?;
        let point = self.prox_point(eta);
        // a projection can land a rounding error outside its set
        let value = if self.is_indicator() { 0.0 } else { self.value(&point) };
        let envelope = value + 0.5 * dist2(&point, eta);
        Ok(ProxResult { point, envelope })
    }

    /// Proximal point without dimension checks. Callers guarantee `eta` has the right length.
    pub(crate) fn prox_point(&self, eta: &[f64]) -> Vec<f64> {
        let mut out = eta.to_vec();
        self.prox_into(eta, &mut out);
        out
    }

    pub(crate) fn prox_into(&self, eta: &[f64], out: &mut [f64]) {
        match self {
            ProximableFunction::Zero => out.copy_from_slice(eta),
            ProximableFunction::L1Anchor { anchor, weight } => {
                for ((o, &e), &p) in out.iter_mut().zip(eta).zip(anchor) {
                    *o = if e > p + weight {
                        e - weight
                    } else if e < p - weight {
                        e + weight
                    } else {
                        p
                    };
                }
            }
            ProximableFunction::BallIndicator { center, radius } => {
                let d = dist(eta, center);
                if d <= *radius {
                    out.copy_from_slice(eta);
                } else {
                    let s = radius / d;
                    for ((o, &e), &c) in out.iter_mut().zip(eta).zip(center) {
                        *o = c + s * (e - c);
                    }
                }
            }
            ProximableFunction::BoxIndicator { lo, hi } => {
                for ((o, &e), (&l, &h)) in out.iter_mut().zip(eta).zip(lo.iter().zip(hi)) {
                    *o = e.clamp(l, h);
                }
            }
        }
    }

    /// Gradient of the Moreau envelope, `η − prox_f[η]`.
    pub fn moreau_gradient(&self, eta: &[f64]) -> Result<Vec<f64>> {
        let p = self.prox(eta)?;
        Ok(eta.iter().zip(&p.point).map(|(e, d)| e - d).collect())
    }

    pub fn envelope(&self, eta: &[f64]) -> Result<f64> {
        Ok(self.prox(eta)?.envelope)
    }

    /// Distance from `η − δ` to `∂f(δ)` at `δ = prox_f[η]`. Zero certifies the prox.
    pub fn subgradient_residual(&self, eta: &[f64]) -> Result<f64> {
        let delta = self.prox(eta)?.point;
        let r: Vec<f64> = eta.iter().zip(&delta).map(|(e, d)| e - d).collect();
        Ok(self.distance_to_subdifferential(&delta, &r))
    }

    /// Distance from `g` to `∂f(x)`; `+∞` when `x` is outside the domain.
    pub fn distance_to_subdifferential(&self, x: &[f64], g: &[f64]) -> f64 {
        match self {
            ProximableFunction::Zero => norm(g),
            ProximableFunction::L1Anchor { anchor, weight } => {
                let w = *weight;
                let sq: f64 = x
                    .iter()
                    .zip(anchor)
                    .zip(g)
                    .map(|((&xv, &p), &gv)| {
                        let d = if xv > p {
                            gv - w
                        } else if xv < p {
                            gv + w
                        } else {
                            (gv.abs() - w).max(0.0)
                        };
                        d * d
                    })
                    .sum();
                sq.sqrt()
            }
            ProximableFunction::BallIndicator { center, radius } => {
                let d = dist(x, center);
                let slack = 1e-9 * radius.max(1.0);
                if d > radius + slack {
                    return f64::INFINITY;
                }
                if d < radius - slack || norm(g) == 0.0 {
                    return norm(g);
                }
                // normal cone at a boundary point is the outward ray
                let u: Vec<f64> = x.iter().zip(center).map(|(a, c)| (a - c) / d).collect();
                let along: f64 = g.iter().zip(&u).map(|(a, b)| a * b).sum();
                if along <= 0.0 {
                    norm(g)
                } else {
                    g.iter()
                        .zip(&u)
                        .map(|(a, b)| (a - along * b).powi(2))
                        .sum::<f64>()
                        .sqrt()
                }
            }
            ProximableFunction::BoxIndicator { lo, hi } => {
                let mut sq = 0.0;
                for ((&xv, &gv), (&l, &h)) in x.iter().zip(g).zip(lo.iter().zip(hi)) {
                    if xv < l || xv > h {
                        return f64::INFINITY;
                    }
                    let d = match (xv == l, xv == h) {
                        (true, true) => 0.0,
                        (true, false) => gv.max(0.0),
                        (false, true) => gv.min(0.0),
                        (false, false) => gv,
                    };
                    sq += d * d;
                }
                sq.sqrt()
            }
        }
    }

    /// Minimal-norm element of `∂f(x)`.
    ///
    /// For `L1Anchor` this is the sign rule `w·sign(x − p)` with `sign(0) = 0`.
    /// Indicators return zero inside their set and fail outside it.
    pub fn min_norm_subgradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        match self {
            ProximableFunction::L1Anchor { anchor, weight } => Ok(x
                .iter()
                .zip(anchor)
                .map(|(&v, &p)| {
                    if v > p {
                        *weight
                    } else if v < p {
                        -weight
                    } else {
                        0.0
                    }
                })
                .collect()),
            _ => {
                if self.value_with_tolerance(x, 1e-9).is_infinite() {
                    return Err(Error::Unsupported(format!(
                        "subdifferential of {} is empty outside its set",
                        self.kind_name()
                    )));
                }
                Ok(vec![0.0; x.len()])
            }
        }
    }
}

/// Grid-search minimizer of `f(δ) + ½‖δ − η‖²` inside `η ± half_width`.
///
/// Separable kinds are searched one coordinate at a time. Balls are supported
/// for `q ≤ 2`: the unconstrained minimizer `η` is accepted if feasible,
/// otherwise the boundary circle is gridded by angle with arc spacing `step`.
/// Every search refines coarse-to-fine, which is exact for the unimodal
/// objectives involved; the result is within one `step` of the true minimizer.
pub fn prox_oracle(
    f: &ProximableFunction,
    eta: &[f64],
    step: f64,
    half_width: f64,
) -> Result<Vec<f64>> {
    f.check_dim(eta)?;
    if !(step > 0.0 && half_width > step) {
        return Err(Error::InvalidFunction(format!(
            "oracle needs 0 < step < half_width, got step={step}, half_width={half_width}"
        )));
    }
    match f {
        ProximableFunction::BallIndicator { center, radius } if eta.len() == 2 => {
            let objective = |d: &[f64]| f.value(d) + 0.5 * dist2(d, eta);
            if objective(eta).is_finite() {
                return Ok(eta.to_vec());
            }
            let circle = |theta: f64| {
                vec![
                    center[0] + radius * theta.cos(),
                    center[1] + radius * theta.sin(),
                ]
            };
            // the distance to η along the circle has one minimum and one maximum
            let theta = grid_argmin_periodic(
                |t| dist2(&circle(t), eta),
                std::f64::consts::TAU,
                step / radius,
            );
            let point = circle(theta);
            for (k, (p, e)) in point.iter().zip(eta).enumerate() {
                if (p - e).abs() >= half_width {
                    return Err(Error::OracleBoxTooSmall { coordinate: k });
                }
            }
            Ok(point)
        }
        ProximableFunction::BallIndicator { center, radius } if eta.len() == 1 => {
            let (l, h) = (center[0] - radius, center[0] + radius);
            let obj = |d: f64| if d >= l && d <= h { 0.5 * (d - eta[0]).powi(2) } else { f64::INFINITY };
            let x = grid_argmin_1d(obj, eta[0] - half_width, eta[0] + half_width, step)
                .ok_or(Error::OracleBoxTooSmall { coordinate: 0 })?;
            Ok(vec![x])
        }
        ProximableFunction::BallIndicator { .. } => Err(Error::Unsupported(
            "grid oracle for balls needs q <= 2".into(),
        )),
        _ => {
            let mut out = Vec::with_capacity(eta.len());
            for (k, &e) in eta.iter().enumerate() {
                let obj = |d: f64| separable_term(f, k, d) + 0.5 * (d - e).powi(2);
                let x = grid_argmin_1d(obj, e - half_width, e + half_width, step)
                    .ok_or(Error::OracleBoxTooSmall { coordinate: k })?;
                out.push(x);
            }
            Ok(out)
        }
    }
}

fn separable_term(f: &ProximableFunction, k: usize, d: f64) -> f64 {
    match f {
        ProximableFunction::Zero => 0.0,
        ProximableFunction::L1Anchor { anchor, weight } => weight * (d - anchor[k]).abs(),
        ProximableFunction::BoxIndicator { lo, hi } => {
            if d >= lo[k] && d <= hi[k] {
                0.0
            } else {
                f64::INFINITY
            }
        }
        ProximableFunction::BallIndicator { .. } => unreachable!("ball is not separable"),
    }
}

const COARSE_POINTS: usize = 2000;
const REFINE: f64 = 100.0;

/// Returns `None` when the minimizer sits on the outer boundary or no grid point is finite.
fn grid_argmin_1d(obj: impl Fn(f64) -> f64, lo: f64, hi: f64, step: f64) -> Option<f64> {
    let mut spacing = ((hi - lo) / COARSE_POINTS as f64).max(step);
    let (mut a, mut b) = (lo, hi);
    let mut outer = true;
    loop {
        let count = ((b - a) / spacing).round() as usize;
        let (k, best) = (0..=count)
            .map(|k| (k, obj(a + k as f64 * spacing)))
            .min_by(|x, y| x.1.total_cmp(&y.1))?;
        if !best.is_finite() || (outer && (k == 0 || k == count)) {
            return None;
        }
        let x = a + k as f64 * spacing;
        if spacing <= step {
            return Some(x);
        }
        outer = false;
        a = x - spacing;
        b = x + spacing;
        spacing = (spacing / REFINE).max(step);
    }
}

fn grid_argmin_periodic(obj: impl Fn(f64) -> f64, period: f64, step: f64) -> f64 {
    let mut spacing = (period / COARSE_POINTS as f64).max(step);
    let mut a = 0.0;
    let mut count = (period / spacing).ceil() as usize;
    loop {
        let k = (0..count)
            .min_by(|&x, &y| obj(a + x as f64 * spacing).total_cmp(&obj(a + y as f64 * spacing)))
            .unwrap_or(0);
        let t = a + k as f64 * spacing;
        if spacing <= step {
            return t;
        }
        a = t - spacing;
        spacing = (spacing / REFINE).max(step);
        count = (2.0 * (t - a) / spacing).round() as usize + 1;
    }
}

pub(crate) fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    dist2(a, b).sqrt()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}
