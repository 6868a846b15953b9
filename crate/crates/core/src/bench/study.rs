//! Convergence sweeps against a reference endpoint.

use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::cache::{reference_config, reference_digest, ReferenceCache};
use super::config::{ExperimentSpec, DOMAIN};
use crate::discretize::{
    assemble_laplacian_2d, assemble_operator_1d, build_grid_1d, build_grid_2d, DiscreteOperator, DiscretizeError,
    EllipticCoefficients1D, FaceSet2D, Field1D, Field2D, Side,
};
use crate::flows::ReactionTerm;
use crate::integrators::{integrate, reference_solve_with_stats, IntegrateError, SchemeKind};
use crate::opfunc::{Backend, OpFuncError, Propagator};

/// Errors at or below this are flagged and left out of order fits.
pub const ERROR_FLOOR: f64 = 1e-12;
/// Number of smallest admissible steps in the tail fit.
pub const TAIL_WINDOW: usize = 4;

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("discretization failed: {0}")]
    Discretize(#[from] DiscretizeError),
    #[error("propagator setup failed: {0}")]
    OpFunc(#[from] OpFuncError),
    #[error("reference solve failed: {0}")]
    Reference(IntegrateError),
    #[error("need at least 2 (tau, error) pairs above the {ERROR_FLOOR:e} floor, got {0}")]
    TooFewPairs(usize),
    #[error("invalid step size {0} in order estimate")]
    InvalidTau(f64),
}

/// Everything a sweep needs, assembled once.
pub struct Problem {
    pub op: DiscreteOperator,
    pub propagator: Propagator,
    pub reaction: ReactionTerm,
    pub u0: DVector<f64>,
    pub h: Vec<f64>,
}

impl Problem {
    pub fn build(spec: &ExperimentSpec) -> Result<Problem, StudyError> {
        Self::build_with_reaction(spec, spec.reaction_term())
    }

    pub fn build_with_reaction(spec: &ExperimentSpec, reaction: ReactionTerm) -> Result<Problem, StudyError> {
        let u0_field = spec.initial.condition();
        let face = |s: Side| spec.face(s).expect("validated face layout").bc();
        let (op, u0, h) = if spec.dimension == 1 {
            let (l, r) = (face(Side::Left), face(Side::Right));
            let grid = build_grid_1d(DOMAIN.0, DOMAIN.1, spec.grid.nx, &l, &r)?;
            let op = assemble_operator_1d(&grid, &EllipticCoefficients1D::laplacian(), &l, &r)?;
            let u0 = grid.sample(|x| Field1D::value(&u0_field, x));
            (op, u0, vec![grid.h])
        } else {
            let faces = FaceSet2D {
                left: face(Side::Left),
                right: face(Side::Right),
                bottom: face(Side::Bottom),
                top: face(Side::Top),
            };
            let ny = spec.grid.ny.expect("validated 2D grid");
            let grid = build_grid_2d(DOMAIN, DOMAIN, (spec.grid.nx, ny), &faces)?;
            let op = assemble_laplacian_2d(&grid, &faces)?;
            let u0 = grid.sample(|x, y| Field2D::value(&u0_field, x, y));
            (op, u0, vec![grid.grid_x.h, grid.grid_y.h])
        };
        let propagator = Propagator::new(&op)?;
        Ok(Problem {
            op,
            propagator,
            reaction,
            u0,
            h,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderEstimate {
    /// Same length as the input; entry `k` compares pairs `k - 1` and `k`.
    pub pairwise: Vec<Option<f64>>,
    pub tail_slope: f64,
    pub tail_points: usize,
}

fn admissible(e: f64) -> bool {
    e.is_finite() && e > ERROR_FLOOR
}

/// Pairwise orders `ln(e1/e2) / ln(tau1/tau2)` between consecutive pairs and
/// the least-squares slope of `ln e` against `ln tau` over the
/// [`TAIL_WINDOW`] smallest admissible steps.
pub fn estimate_order(pairs: &[(f64, f64)]) -> Result<OrderEstimate, StudyError> {
    for &(tau, _) in pairs {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(StudyError::InvalidTau(tau));
        }
    }
    let mut pairwise = vec![None; pairs.len()];
    for k in 1..pairs.len() {
        let (t1, e1) = pairs[k - 1];
        let (t2, e2) = pairs[k];
        if admissible(e1) && admissible(e2) && t1 != t2 {
            pairwise[k] = Some((e1 / e2).ln() / (t1 / t2).ln());
        }
    }
    let mut tail: Vec<(f64, f64)> = pairs.iter().copied().filter(|p| admissible(p.1)).collect();
    if tail.len() < 2 {
        return Err(StudyError::TooFewPairs(tail.len()));
    }
    tail.sort_by(|a, b| a.0.total_cmp(&b.0));
    tail.truncate(TAIL_WINDOW);
    let n = tail.len() as f64;
    let xs: Vec<f64> = tail.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = tail.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(StudyError::TooFewPairs(1));
    }
    Ok(OrderEstimate {
        pairwise,
        tail_slope: sxy / sxx,
        tail_points: tail.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceEntry {
    pub tau: f64,
    pub n_steps: usize,
    /// `None` when the run failed.
    pub error_inf: Option<f64>,
    pub pairwise_order: Option<f64>,
    pub below_floor: bool,
    pub failure: Option<String>,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeReport {
    pub scheme: SchemeKind,
    pub entries: Vec<ConvergenceEntry>,
    pub tail_slope: Option<f64>,
    pub tail_points: usize,
}

impl SchemeReport {
    pub fn error_at(&self, tau: f64) -> Option<f64> {
        self.entries.iter().find(|e| e.tau == tau).and_then(|e| e.error_inf)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceInfo {
    pub digest: String,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub cache_hit: bool,
    pub accepted_steps: Option<usize>,
    pub rejected_steps: Option<usize>,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub spec: ExperimentSpec,
    pub n_unknowns: usize,
    pub h: Vec<f64>,
    pub backend: Backend,
    pub reference: ReferenceInfo,
    pub error_floor: f64,
    pub tail_window: usize,
    pub setup_seconds: f64,
    pub total_seconds: f64,
    pub version: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub name: String,
    pub schemes: Vec<SchemeReport>,
    pub metadata: ReportMetadata,
}

impl ConvergenceReport {
    pub fn scheme(&self, kind: SchemeKind) -> Option<&SchemeReport> {
        self.schemes.iter().find(|s| s.scheme == kind)
    }

    pub fn tail_slope(&self, kind: SchemeKind) -> Option<f64> {
        self.scheme(kind).and_then(|s| s.tail_slope)
    }

    /// The same report with wall times zeroed.
    pub fn without_timings(&self) -> ConvergenceReport {
        let mut r = self.clone();
        r.metadata.setup_seconds = 0.0;
        r.metadata.total_seconds = 0.0;
        r.metadata.reference.wall_seconds = 0.0;
        for s in &mut r.schemes {
            for e in &mut s.entries {
                e.wall_seconds = 0.0;
            }
        }
        r
    }
}

#[derive(Clone, Debug)]
pub struct StudyOptions {
    pub cache: ReferenceCache,
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self {
            cache: ReferenceCache::disabled(),
        }
    }
}

pub fn max_abs_diff(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    a.iter().zip(b.iter()).fold(0.0, |m, (x, y)| {
        let d = (x - y).abs();
        if d.is_nan() || d > m {
            d
        } else {
            m
        }
    })
}

/// Reference endpoint from the cache or a fresh solve.
pub fn obtain_reference(
    spec: &ExperimentSpec,
    problem: &Problem,
    cache: &ReferenceCache,
) -> Result<(DVector<f64>, ReferenceInfo), StudyError> {
    let digest = reference_digest(spec);
    let start = Instant::now();
    if let Some(v) = cache.lookup(&digest) {
        if v.len() == problem.op.dim() {
            log::info!("reference cache hit {digest}");
            return Ok((
                v,
                ReferenceInfo {
                    digest,
                    abs_tol: spec.reference.abs_tol,
                    rel_tol: spec.reference.rel_tol,
                    cache_hit: true,
                    accepted_steps: None,
                    rejected_steps: None,
                    wall_seconds: start.elapsed().as_secs_f64(),
                },
            ));
        }
        log::warn!("cached reference {digest} has the wrong length, recomputing");
    }
    let cfg = reference_config(spec);
    let (v, stats) = reference_solve_with_stats(&problem.op, &problem.reaction, &problem.u0, spec.t_end, &cfg)
        .map_err(StudyError::Reference)?;
    log::info!(
        "reference solved: {} accepted, {} rejected steps in {:.2}s",
        stats.accepted,
        stats.rejected,
        start.elapsed().as_secs_f64()
    );
    if let Err(e) = cache.store(&digest, &spec.reference, &v) {
        log::warn!("could not store reference in {}: {e}", cache.dir().display());
    }
    Ok((
        v,
        ReferenceInfo {
            digest,
            abs_tol: spec.reference.abs_tol,
            rel_tol: spec.reference.rel_tol,
            cache_hit: false,
            accepted_steps: Some(stats.accepted),
            rejected_steps: Some(stats.rejected),
            wall_seconds: start.elapsed().as_secs_f64(),
        },
    ))
}

pub fn run_convergence_study(spec: &ExperimentSpec, opts: &StudyOptions) -> Result<ConvergenceReport, StudyError> {
    let total = Instant::now();
    let problem = Problem::build(spec)?;
    let setup_seconds = total.elapsed().as_secs_f64();
    log::info!(
        "{}: {} unknowns, {:?} backend, setup {:.2}s",
        spec.name,
        problem.op.dim(),
        problem.propagator.backend(),
        setup_seconds
    );
    let (reference, ref_info) = obtain_reference(spec, &problem, &opts.cache)?;
    run_with_reference(spec, &problem, &reference, ref_info, setup_seconds, total)
}

fn run_with_reference(
    spec: &ExperimentSpec,
    problem: &Problem,
    reference: &DVector<f64>,
    ref_info: ReferenceInfo,
    setup_seconds: f64,
    total: Instant,
) -> Result<ConvergenceReport, StudyError> {
    let jobs: Vec<(SchemeKind, f64)> = spec
        .schemes
        .iter()
        .flat_map(|&s| spec.taus.iter().map(move |&tau| (s, tau)))
        .collect();
    let runs: Vec<ConvergenceEntry> = jobs
        .par_iter()
        .map(|&(scheme, tau)| {
            let n_steps = spec.steps_for(tau);
            let start = Instant::now();
            let result = integrate(
                scheme,
                &problem.op,
                &problem.propagator,
                &problem.reaction,
                &problem.u0,
                spec.t_end,
                n_steps,
            );
            let wall_seconds = start.elapsed().as_secs_f64();
            let (error_inf, failure) = match result {
                Ok(u) => {
                    let e = max_abs_diff(&u, reference);
                    if e.is_finite() {
                        (Some(e), None)
                    } else {
                        (None, Some("non-finite endpoint".to_string()))
                    }
                }
                Err(e) => (None, Some(e.to_string())),
            };
            if let Some(f) = &failure {
                log::warn!("{} {scheme} tau = {tau}: {f}", spec.name);
            }
            ConvergenceEntry {
                tau,
                n_steps,
                error_inf,
                pairwise_order: None,
                below_floor: error_inf.is_some_and(|e| e <= ERROR_FLOOR),
                failure,
                wall_seconds,
            }
        })
        .collect();

    let mut schemes = Vec::new();
    for (k, &scheme) in spec.schemes.iter().enumerate() {
        let mut entries = runs[k * spec.taus.len()..(k + 1) * spec.taus.len()].to_vec();
        let pairs: Vec<(f64, f64)> = entries.iter().map(|e| (e.tau, e.error_inf.unwrap_or(f64::NAN))).collect();
        let (tail_slope, tail_points) = match estimate_order(&pairs) {
            Ok(est) => {
                for (e, p) in entries.iter_mut().zip(est.pairwise) {
                    e.pairwise_order = p;
                }
                (Some(est.tail_slope), est.tail_points)
            }
            Err(err) => {
                log::warn!("{} {scheme}: no order estimate: {err}", spec.name);
                for k in 1..entries.len() {
                    if let (Some(e1), Some(e2)) = (entries[k - 1].error_inf, entries[k].error_inf) {
                        if admissible(e1) && admissible(e2) {
                            entries[k].pairwise_order =
                                Some((e1 / e2).ln() / (entries[k - 1].tau / entries[k].tau).ln());
                        }
                    }
                }
                (None, 0)
            }
        };
        schemes.push(SchemeReport {
            scheme,
            entries,
            tail_slope,
            tail_points,
        });
    }

    Ok(ConvergenceReport {
        name: spec.name.clone(),
        schemes,
        metadata: ReportMetadata {
            spec: spec.clone(),
            n_unknowns: problem.op.dim(),
            h: problem.h.clone(),
            backend: problem.propagator.backend(),
            reference: ref_info,
            error_floor: ERROR_FLOOR,
            tail_window: TAIL_WINDOW,
            setup_seconds,
            total_seconds: total.elapsed().as_secs_f64(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        },
    })
}
