//! The two split subflows: the diffusion subflow with a constant source and
//! the pointwise reaction subflows (raw `f` for classic Strang, the shifted
//! nonlinearity `h(t, w) = f(t, w + u_n) - f(t, u_n)` for the corrected scheme).

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::discretize::DiscreteOperator;
use crate::ode::{dopri5_scalar, Dopri5Options, OdeError};
use crate::opfunc::{phi1, OpFuncError, Propagator};

/// Local tolerance of the adaptive fallback for reaction flows.
pub const REACTION_RK_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("reaction flow blows up at component {index} (w0 = {value}, dt = {dt})")]
    BlowUp { index: usize, value: f64, dt: f64 },
    #[error("non-autonomous reaction terms are not supported by the corrected splitting")]
    NonAutonomous,
    #[error("negative duration {0}")]
    NegativeTime(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Diffusion(#[from] OpFuncError),
}

pub type Result<T> = std::result::Result<T, FlowError>;

type ReactionFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Pointwise reaction term `f(t, u)`.
#[derive(Clone)]
pub enum ReactionTerm {
    /// `f(u) = u^2`
    Square,
    /// `f(u) = rate * u * (1 - u / capacity)`
    Logistic { rate: f64, capacity: f64 },
    /// `f(u) = sum_k coeffs[k] u^k`
    Polynomial(Vec<f64>),
    /// Arbitrary user term; always integrated numerically.
    Custom { f: ReactionFn, autonomous: bool },
}

impl fmt::Debug for ReactionTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReactionTerm::Square => write!(f, "Square"),
            ReactionTerm::Logistic { rate, capacity } => {
                write!(f, "Logistic {{ rate: {rate}, capacity: {capacity} }}")
            }
            ReactionTerm::Polynomial(c) => write!(f, "Polynomial({c:?})"),
            ReactionTerm::Custom { autonomous, .. } => write!(f, "Custom {{ autonomous: {autonomous} }}"),
        }
    }
}

/// Serializable identity of a built-in reaction term.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReactionSpec {
    pub kind: String,
    #[serde(default)]
    pub params: Vec<f64>,
}

impl ReactionTerm {
    pub fn custom(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static, autonomous: bool) -> Self {
        ReactionTerm::Custom {
            f: Arc::new(f),
            autonomous,
        }
    }

    pub fn zero() -> Self {
        ReactionTerm::Polynomial(Vec::new())
    }

    pub fn from_spec(spec: &ReactionSpec) -> std::result::Result<Self, String> {
        match spec.kind.as_str() {
            "square" if spec.params.is_empty() => Ok(ReactionTerm::Square),
            "square" => Err("reaction 'square' takes no params".into()),
            "logistic" => match spec.params[..] {
                [rate, capacity] if capacity != 0.0 => Ok(ReactionTerm::Logistic { rate, capacity }),
                _ => Err("reaction 'logistic' takes params [rate, capacity] with capacity != 0".into()),
            },
            "polynomial" => Ok(ReactionTerm::Polynomial(spec.params.clone())),
            other => Err(format!("unknown reaction kind '{other}'")),
        }
    }

    pub fn to_spec(&self) -> Option<ReactionSpec> {
        let (kind, params) = match self {
            ReactionTerm::Square => ("square", vec![]),
            ReactionTerm::Logistic { rate, capacity } => ("logistic", vec![*rate, *capacity]),
            ReactionTerm::Polynomial(c) => ("polynomial", c.clone()),
            ReactionTerm::Custom { .. } => return None,
        };
        Some(ReactionSpec {
            kind: kind.into(),
            params,
        })
    }

    pub fn eval(&self, t: f64, u: f64) -> f64 {
        match self {
            ReactionTerm::Square => u * u,
            ReactionTerm::Logistic { rate, capacity } => rate * u * (1.0 - u / capacity),
            ReactionTerm::Polynomial(c) => c.iter().rev().fold(0.0, |acc, &ck| acc * u + ck),
            ReactionTerm::Custom { f, .. } => f(t, u),
        }
    }

    pub fn eval_vec(&self, t: f64, u: &DVector<f64>) -> DVector<f64> {
        u.map(|ui| self.eval(t, ui))
    }

    pub fn is_autonomous(&self) -> bool {
        match self {
            ReactionTerm::Custom { autonomous, .. } => *autonomous,
            _ => true,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, ReactionTerm::Polynomial(c) if c.iter().all(|&ck| ck == 0.0))
    }

    /// `(p1, p2)` with `f(u) = p0 + p1 u + p2 u^2` when a closed-form flow exists.
    fn quadratic(&self) -> Option<(f64, f64)> {
        match self {
            ReactionTerm::Square => Some((0.0, 1.0)),
            ReactionTerm::Logistic { rate, capacity } => Some((*rate, -rate / capacity)),
            _ => None,
        }
    }

    pub fn has_closed_form_flow(&self) -> bool {
        self.quadratic().is_some() || self.is_zero()
    }
}

/// Flow of the Bernoulli equation `y' = lambda y + q y^2` over `dt`.
///
/// `y(dt) = y0 e^{lambda dt} / (1 - q y0 dt phi1(lambda dt))`; `None` when the
/// denominator is not positive.
fn bernoulli_flow(y0: f64, lambda: f64, q: f64, dt: f64) -> Option<f64> {
    if y0 == 0.0 {
        return Some(y0);
    }
    let z = lambda * dt;
    let denom = 1.0 - q * y0 * dt * phi1(z);
    if denom <= 0.0 {
        return None;
    }
    Some(y0 * z.exp() / denom)
}

fn rk_options() -> Dopri5Options {
    Dopri5Options {
        abs_tol: REACTION_RK_TOL,
        rel_tol: REACTION_RK_TOL,
        max_steps: 1_000_000,
        ..Default::default()
    }
}

fn rk_flow(rhs: impl Fn(f64, f64) -> f64, t0: f64, dt: f64, w0: f64) -> std::result::Result<f64, OdeError> {
    if dt == 0.0 {
        return Ok(w0);
    }
    dopri5_scalar(rhs, t0, t0 + dt, w0, &rk_options())
}

fn check_dt(dt: f64) -> Result<()> {
    if dt < 0.0 || dt.is_nan() {
        return Err(FlowError::NegativeTime(dt));
    }
    Ok(())
}

/// Solves `v' = L_h v + extra_source` exactly over `dt`.
///
/// The classic scheme passes the boundary vector `r` as the source; the
/// corrected scheme passes `g_n` and must not add `r` a second time.
pub fn diffusion_halfstep(
    propagator: &Propagator,
    v0: &DVector<f64>,
    extra_source: &DVector<f64>,
    dt: f64,
) -> Result<DVector<f64>> {
    check_dt(dt)?;
    Ok(propagator.affine_flow(v0, extra_source, dt)?.state)
}

/// Pointwise flow of `w' = f(t, w)` over `[t0, t0 + dt]`.
pub fn reaction_flow_raw(f: &ReactionTerm, w0: &DVector<f64>, t0: f64, dt: f64) -> Result<DVector<f64>> {
    check_dt(dt)?;
    if dt == 0.0 || f.is_zero() {
        return Ok(w0.clone());
    }
    let mut out = w0.clone();
    for (index, w) in out.iter_mut().enumerate() {
        let value = *w;
        let flowed = match f.quadratic() {
            // p0 = 0 for both quadratic built-ins
            Some((p1, p2)) => bernoulli_flow(value, p1, p2, dt),
            _ => rk_flow(|t, y| f.eval(t, y), t0, dt, value).ok(),
        };
        *w = flowed
            .filter(|v| v.is_finite())
            .ok_or(FlowError::BlowUp { index, value, dt })?;
    }
    Ok(out)
}

/// Per-step data of the corrected scheme: the base state `u_n` (the
/// correction is constant over the step) and the source
/// `g_n = L_h u_n + r + f(t_n, u_n)`.
#[derive(Clone, Debug)]
pub struct IbcStepContext {
    pub base: DVector<f64>,
    pub source: DVector<f64>,
    pub base_reaction: DVector<f64>,
    pub reaction: ReactionTerm,
    pub t_n: f64,
}

impl IbcStepContext {
    pub fn new(op: &DiscreteOperator, f: &ReactionTerm, u_n: &DVector<f64>, t_n: f64) -> Result<Self> {
        if !f.is_autonomous() {
            return Err(FlowError::NonAutonomous);
        }
        if u_n.len() != op.dim() {
            return Err(FlowError::DimensionMismatch {
                expected: op.dim(),
                got: u_n.len(),
            });
        }
        let base_reaction = f.eval_vec(t_n, u_n);
        let source = op.affine_rhs(u_n) + &base_reaction;
        Ok(Self {
            base: u_n.clone(),
            source,
            base_reaction,
            reaction: f.clone(),
            t_n,
        })
    }

    /// `h(t, w)` at component `i`; vanishes at `w = 0`.
    pub fn modified(&self, t: f64, i: usize, w: f64) -> f64 {
        if w == 0.0 {
            return 0.0;
        }
        self.reaction.eval(t, w + self.base[i]) - self.base_reaction[i]
    }
}

/// Pointwise flow of `w' = h(t, w)` with `h` built from `ctx`.
pub fn reaction_flow_modified(ctx: &IbcStepContext, w0: &DVector<f64>, t0: f64, dt: f64) -> Result<DVector<f64>> {
    check_dt(dt)?;
    if w0.len() != ctx.base.len() {
        return Err(FlowError::DimensionMismatch {
            expected: ctx.base.len(),
            got: w0.len(),
        });
    }
    if dt == 0.0 || ctx.reaction.is_zero() {
        return Ok(w0.clone());
    }
    let quad = ctx.reaction.quadratic();
    let mut out = w0.clone();
    for (index, w) in out.iter_mut().enumerate() {
        let value = *w;
        if value == 0.0 {
            continue;
        }
        let c = ctx.base[index];
        let flowed = match quad {
            // h(w) = (p1 + 2 p2 c) w + p2 w^2
            Some((p1, p2)) => bernoulli_flow(value, p1 + 2.0 * p2 * c, p2, dt),
            None => rk_flow(|t, y| ctx.modified(t, index, y), t0, dt, value).ok(),
        };
        *w = flowed
            .filter(|v| v.is_finite())
            .ok_or(FlowError::BlowUp { index, value, dt })?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn v1(x: f64) -> DVector<f64> {
        DVector::from_element(1, x)
    }

    fn scalar_prop(g: f64) -> Propagator {
        Propagator::from_matrix(DMatrix::from_element(1, 1, g)).unwrap()
    }

    #[test]
    fn diffusion_halfstep_examples() {
        let p = scalar_prop(-4.0);
        assert_eq!(diffusion_halfstep(&p, &v1(2.0), &v1(0.0), 0.0).unwrap(), v1(2.0));
        let v = diffusion_halfstep(&p, &v1(2.0), &v1(0.0), 0.25).unwrap();
        assert_relative_eq!(v[0], 2.0 * (-1.0f64).exp(), max_relative = 1e-14);
        assert_relative_eq!(v[0], 0.7357589, epsilon = 1e-7);
        let p = scalar_prop(-1.0);
        let v = diffusion_halfstep(&p, &v1(0.0), &v1(1.0), 1.0).unwrap();
        assert_relative_eq!(v[0], 0.6321206, epsilon = 1e-7);
    }

    #[test]
    fn raw_square_flow() {
        let f = ReactionTerm::Square;
        assert_eq!(reaction_flow_raw(&f, &v1(1.0), 0.0, 0.5).unwrap()[0], 2.0);
        assert_eq!(reaction_flow_raw(&f, &v1(0.0), 0.0, 123.0).unwrap()[0], 0.0);
        let err = reaction_flow_raw(&f, &DVector::from_vec(vec![0.1, 3.0, 4.0]), 0.0, 0.4).unwrap_err();
        assert_eq!(
            err,
            FlowError::BlowUp {
                index: 1,
                value: 3.0,
                dt: 0.4
            }
        );
    }

    #[test]
    fn modified_square_flow() {
        let op_dummy = |c: f64| IbcStepContext {
            base: v1(c),
            source: v1(0.0),
            base_reaction: v1(c * c),
            reaction: ReactionTerm::Square,
            t_n: 0.0,
        };
        let ctx = op_dummy(1.0);
        assert_eq!(reaction_flow_modified(&ctx, &v1(0.0), 0.0, 10.0).unwrap()[0], 0.0);
        let w = reaction_flow_modified(&ctx, &v1(1.0), 0.0, 0.1).unwrap()[0];
        // independent high-order RK solve of w' = w^2 + 2w
        assert_relative_eq!(w, 1.3734450154625386, epsilon = 1e-12);
        // w = w_hat + 1 solves w' = w^2 - 1: (w - 1)/(w + 1) = K e^{2t}, K = (w0 - 1)/(w0 + 1)
        let k = 1.0 / 3.0;
        let e = 0.2f64.exp();
        assert_relative_eq!(w + 1.0, (1.0 + k * e) / (1.0 - k * e), max_relative = 1e-14);

        let ctx0 = op_dummy(0.0);
        assert_eq!(reaction_flow_modified(&ctx0, &v1(1.0), 0.0, 0.5).unwrap()[0], 2.0);
        assert!(matches!(
            reaction_flow_modified(&ctx0, &v1(3.0), 0.0, 0.4),
            Err(FlowError::BlowUp { index: 0, .. })
        ));
    }

    #[test]
    fn logistic_closed_form_matches_textbook() {
        let f = ReactionTerm::Logistic {
            rate: 2.0,
            capacity: 5.0,
        };
        let w = reaction_flow_raw(&f, &v1(1.0), 0.0, 0.3).unwrap()[0];
        let expected = 5.0 / (1.0 + 4.0 * (-0.6f64).exp());
        assert_relative_eq!(w, expected, max_relative = 1e-14);
    }

    #[test]
    fn polynomial_uses_adaptive_fallback() {
        let f = ReactionTerm::Polynomial(vec![0.0, 0.0, 1.0]);
        let w = reaction_flow_raw(&f, &v1(1.0), 0.0, 0.5).unwrap()[0];
        assert_relative_eq!(w, 2.0, epsilon = 1e-10);
        assert!(matches!(
            reaction_flow_raw(&f, &v1(3.0), 0.0, 0.4),
            Err(FlowError::BlowUp { index: 0, .. })
        ));
        let zero = ReactionTerm::zero();
        assert!(zero.is_zero() && zero.has_closed_form_flow());
        assert_eq!(reaction_flow_raw(&zero, &v1(7.0), 0.0, 1.0).unwrap()[0], 7.0);
    }

    #[test]
    fn non_autonomous_rejected_in_context() {
        let op = {
            use crate::discretize::*;
            let d = FaceBC::dirichlet(0.0);
            let g = build_grid_1d(0.0, 1.0, 3, &d, &d).unwrap();
            assemble_operator_1d(&g, &EllipticCoefficients1D::laplacian(), &d, &d).unwrap()
        };
        let f = ReactionTerm::custom(|t, u| t * u, false);
        assert_eq!(
            IbcStepContext::new(&op, &f, &DVector::zeros(3), 0.0).unwrap_err(),
            FlowError::NonAutonomous
        );
    }

    #[test]
    fn spec_round_trip() {
        for f in [
            ReactionTerm::Square,
            ReactionTerm::Logistic {
                rate: 1.5,
                capacity: 2.0,
            },
            ReactionTerm::Polynomial(vec![1.0, -2.0]),
        ] {
            let spec = f.to_spec().unwrap();
            let back = ReactionTerm::from_spec(&spec).unwrap();
            assert_eq!(back.to_spec().unwrap(), spec);
        }
        assert!(ReactionTerm::from_spec(&ReactionSpec {
            kind: "cubic".into(),
            params: vec![]
        })
        .is_err());
    }
}
