//! Step maps of classic and initial-boundary corrected Strang splitting, the
//! constant-step driver, and the adaptive reference solver.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::discretize::DiscreteOperator;
use crate::flows::{
    diffusion_halfstep, reaction_flow_modified, reaction_flow_raw, FlowError, IbcStepContext, ReactionTerm,
};
use crate::ode::{dopri5, Dopri5Options, Dopri5Stats, OdeError};
use crate::opfunc::Propagator;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegrateError {
    #[error("step size must be positive, got {0}")]
    InvalidStep(f64),
    #[error("n_steps must be at least 1")]
    NoSteps,
    #[error("dimension mismatch: operator has {expected} unknowns, state has {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("step {step} failed: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: FlowError,
    },
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error("reference solve failed: {0}")]
    Reference(#[from] OdeError),
}

pub type Result<T> = std::result::Result<T, IntegrateError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SchemeKind {
    #[serde(rename = "classic")]
    ClassicStrang,
    #[serde(rename = "ibc")]
    IbcStrang,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 2] = [SchemeKind::ClassicStrang, SchemeKind::IbcStrang];

    pub fn as_str(self) -> &'static str {
        match self {
            SchemeKind::ClassicStrang => "classic",
            SchemeKind::IbcStrang => "ibc",
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchemeKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "classic" => Ok(SchemeKind::ClassicStrang),
            "ibc" => Ok(SchemeKind::IbcStrang),
            other => Err(format!("unknown scheme '{other}' (expected 'classic' or 'ibc')")),
        }
    }
}

fn check_state(op: &DiscreteOperator, u: &DVector<f64>) -> Result<()> {
    if u.len() != op.dim() {
        return Err(IntegrateError::DimensionMismatch {
            expected: op.dim(),
            got: u.len(),
        });
    }
    Ok(())
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(IntegrateError::InvalidStep(tau));
    }
    Ok(())
}

/// Diffusion `tau/2` with source `r`, reaction `tau`, diffusion `tau/2`.
pub fn classic_strang_step(
    op: &DiscreteOperator,
    propagator: &Propagator,
    f: &ReactionTerm,
    u_n: &DVector<f64>,
    t_n: f64,
    tau: f64,
) -> Result<DVector<f64>> {
    check_tau(tau)?;
    check_state(op, u_n)?;
    let half = 0.5 * tau;
    let u_star = diffusion_halfstep(propagator, u_n, &op.r, half)?;
    let w = reaction_flow_raw(f, &u_star, t_n, tau)?;
    Ok(diffusion_halfstep(propagator, &w, &op.r, half)?)
}

/// One step of the corrected scheme.
///
/// The shifted unknown `u - u_n` starts at zero and satisfies homogeneous
/// boundary conditions; it is split into the diffusion flow with source `g_n`
/// and the reaction flow of `h`, then `u_n` is added back.
pub fn ibc_strang_step(
    op: &DiscreteOperator,
    propagator: &Propagator,
    f: &ReactionTerm,
    u_n: &DVector<f64>,
    t_n: f64,
    tau: f64,
) -> Result<DVector<f64>> {
    check_tau(tau)?;
    check_state(op, u_n)?;
    let ctx = IbcStepContext::new(op, f, u_n, t_n)?;
    let half = 0.5 * tau;
    let zero = DVector::zeros(op.dim());
    let v_hat = diffusion_halfstep(propagator, &zero, &ctx.source, half)?;
    let w_hat = reaction_flow_modified(&ctx, &v_hat, t_n, tau)?;
    let u_hat = diffusion_halfstep(propagator, &w_hat, &ctx.source, half)?;
    Ok(u_hat + u_n)
}

pub fn step(
    scheme: SchemeKind,
    op: &DiscreteOperator,
    propagator: &Propagator,
    f: &ReactionTerm,
    u_n: &DVector<f64>,
    t_n: f64,
    tau: f64,
) -> Result<DVector<f64>> {
    match scheme {
        SchemeKind::ClassicStrang => classic_strang_step(op, propagator, f, u_n, t_n, tau),
        SchemeKind::IbcStrang => ibc_strang_step(op, propagator, f, u_n, t_n, tau),
    }
}

/// `n_steps` constant steps of size `t_end / n_steps` from `t = 0`.
pub fn integrate(
    scheme: SchemeKind,
    op: &DiscreteOperator,
    propagator: &Propagator,
    f: &ReactionTerm,
    u0: &DVector<f64>,
    t_end: f64,
    n_steps: usize,
) -> Result<DVector<f64>> {
    if n_steps == 0 {
        return Err(IntegrateError::NoSteps);
    }
    let tau = t_end / n_steps as f64;
    check_tau(tau)?;
    check_state(op, u0)?;
    let mut u = u0.clone();
    for n in 0..n_steps {
        let t_n = n as f64 * tau;
        u = step(scheme, op, propagator, f, &u, t_n, tau).map_err(|e| match e {
            IntegrateError::Flow(source) => IntegrateError::AtStep { step: n, source },
            other => other,
        })?;
    }
    Ok(u)
}

/// Tolerances and controls of the reference solver.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_steps: usize,
    pub safety: f64,
    pub fac_min: f64,
    pub fac_max: f64,
    pub pi_beta: f64,
    /// Step floor relative to `t_end`.
    pub h_min_rel: f64,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        Self {
            abs_tol: 1e-9,
            rel_tol: 1e-9,
            max_steps: 20_000_000,
            safety: 0.9,
            fac_min: 0.2,
            fac_max: 10.0,
            pi_beta: 0.04,
            h_min_rel: 1e-12,
        }
    }
}

impl ReferenceConfig {
    pub fn with_tolerance(tol: f64) -> Self {
        Self {
            abs_tol: tol,
            rel_tol: tol,
            ..Default::default()
        }
    }

    fn options(&self) -> Dopri5Options {
        Dopri5Options {
            abs_tol: self.abs_tol,
            rel_tol: self.rel_tol,
            max_steps: self.max_steps,
            safety: self.safety,
            fac_min: self.fac_min,
            fac_max: self.fac_max,
            beta: self.pi_beta,
            h_min_rel: self.h_min_rel,
        }
    }
}

/// Reference solution of `u' = L_h u + r + f(t, u)` at `t_end` by
/// Dormand–Prince 5(4).
pub fn reference_solve(
    op: &DiscreteOperator,
    f: &ReactionTerm,
    u0: &DVector<f64>,
    t_end: f64,
    cfg: &ReferenceConfig,
) -> Result<DVector<f64>> {
    reference_solve_with_stats(op, f, u0, t_end, cfg).map(|(u, _)| u)
}

pub fn reference_solve_with_stats(
    op: &DiscreteOperator,
    f: &ReactionTerm,
    u0: &DVector<f64>,
    t_end: f64,
    cfg: &ReferenceConfig,
) -> Result<(DVector<f64>, Dopri5Stats)> {
    check_state(op, u0)?;
    let mut y = u0.clone();
    let r = op.r.as_slice();
    let stats = dopri5(
        |t, u, du| {
            op.apply_into(u, du);
            for i in 0..u.len() {
                du[i] += r[i] + f.eval(t, u[i]);
            }
        },
        0.0,
        t_end,
        y.as_mut_slice(),
        &cfg.options(),
    )?;
    Ok((y, stats))
}
