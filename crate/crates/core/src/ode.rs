//! Dormand–Prince 5(4) with PI step-size control.
//!
//! Shared by the reference solver and by the pointwise reaction flows that
//! have no closed form.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("step budget of {max_steps} exhausted at t = {t}")]
    MaxSteps { t: f64, max_steps: usize },
    #[error("step size {h:e} fell below the floor at t = {t}")]
    StepTooSmall { t: f64, h: f64 },
    #[error("solution became non-finite at t = {t} (component {index})")]
    NonFinite { t: f64, index: usize },
    #[error("invalid solver option: {0}")]
    InvalidOption(&'static str),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dopri5Options {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_steps: usize,
    pub safety: f64,
    pub fac_min: f64,
    pub fac_max: f64,
    /// PI stabilization exponent (0 gives the classical controller).
    pub beta: f64,
    /// Step floor relative to the integration span.
    pub h_min_rel: f64,
}

impl Default for Dopri5Options {
    fn default() -> Self {
        Self {
            abs_tol: 1e-9,
            rel_tol: 1e-9,
            max_steps: 10_000_000,
            safety: 0.9,
            fac_min: 0.2,
            fac_max: 10.0,
            beta: 0.04,
            h_min_rel: 1e-12,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Dopri5Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// fifth-order minus embedded fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Integrates `y' = rhs(t, y)` from `t0` to `t_end` in place.
///
/// The error of a step is measured in the max norm of `err_i / (atol + rtol * max(|y_i|, |y_new_i|))`.
pub fn dopri5<F>(
    mut rhs: F,
    t0: f64,
    t_end: f64,
    y: &mut [f64],
    opts: &Dopri5Options,
) -> Result<Dopri5Stats, OdeError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    if !(opts.abs_tol > 0.0 && opts.rel_tol > 0.0) {
        return Err(OdeError::InvalidOption("tolerances must be positive"));
    }
    if opts.max_steps == 0 {
        return Err(OdeError::InvalidOption("max_steps must be positive"));
    }
    let mut stats = Dopri5Stats::default();
    let span = t_end - t0;
    if span == 0.0 {
        return Ok(stats);
    }
    if span < 0.0 {
        return Err(OdeError::InvalidOption("t_end must not precede t0"));
    }
    let n = y.len();
    let h_min = opts.h_min_rel * span;
    let expo = 0.2 - 0.75 * opts.beta;

    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut stage = vec![0.0; n];
    let mut y_new = vec![0.0; n];

    rhs(t0, y, &mut k1);
    stats.evaluations += 1;
    let mut h = initial_step(&mut rhs, t0, y, &k1, span, opts, &mut stage, &mut k2);
    stats.evaluations += 1;

    let mut t = t0;
    let mut err_old: f64 = 1e-4;
    let mut last_rejected = false;
    let mut steps = 0usize;

    while t < t_end {
        if steps >= opts.max_steps {
            return Err(OdeError::MaxSteps {
                t,
                max_steps: opts.max_steps,
            });
        }
        steps += 1;
        let mut last = false;
        if t + 1.01 * h >= t_end {
            h = t_end - t;
            last = true;
        }
        if h < h_min && !last {
            return Err(OdeError::StepTooSmall { t, h });
        }

        for i in 0..n {
            stage[i] = y[i] + h * A21 * k1[i];
        }
        rhs(t + C2 * h, &stage, &mut k2);
        for i in 0..n {
            stage[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        rhs(t + C3 * h, &stage, &mut k3);
        for i in 0..n {
            stage[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        rhs(t + C4 * h, &stage, &mut k4);
        for i in 0..n {
            stage[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        rhs(t + C5 * h, &stage, &mut k5);
        for i in 0..n {
            stage[i] =
                y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        rhs(t + h, &stage, &mut k6);
        for i in 0..n {
            y_new[i] =
                y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        rhs(t + h, &y_new, &mut k7);
        stats.evaluations += 6;

        let mut err: f64 = 0.0;
        for i in 0..n {
            let e = h
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = opts.abs_tol + opts.rel_tol * y[i].abs().max(y_new[i].abs());
            err = err.max((e / sc).abs());
        }
        if !err.is_finite() {
            // overflow in a stage: shrink hard and retry
            stats.rejected += 1;
            h *= opts.fac_min;
            last_rejected = true;
            if h < h_min {
                let index = y_new.iter().position(|v| !v.is_finite()).unwrap_or(0);
                return Err(OdeError::NonFinite { t, index });
            }
            continue;
        }

        if err <= 1.0 {
            let err_c = err.max(1e-10);
            let mut fac = opts.safety * err_c.powf(-expo) * err_old.powf(opts.beta);
            fac = fac.clamp(opts.fac_min, opts.fac_max);
            if last_rejected {
                fac = fac.min(1.0);
            }
            err_old = err_c;
            stats.accepted += 1;
            t = if last { t_end } else { t + h };
            y.copy_from_slice(&y_new);
            std::mem::swap(&mut k1, &mut k7);
            h *= fac;
            last_rejected = false;
        } else {
            let fac = (opts.safety * err.powf(-expo)).max(opts.fac_min);
            h *= fac;
            stats.rejected += 1;
            last_rejected = true;
        }
    }
    if let Some(index) = y.iter().position(|v| !v.is_finite()) {
        return Err(OdeError::NonFinite { t, index });
    }
    Ok(stats)
}

/// Starting step after Hairer, Nørsett & Wanner (order 5).
#[allow(clippy::too_many_arguments)]
fn initial_step<F>(
    rhs: &mut F,
    t0: f64,
    y0: &[f64],
    f0: &[f64],
    span: f64,
    opts: &Dopri5Options,
    y1: &mut [f64],
    f1: &mut [f64],
) -> f64
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let sc = |v: f64| opts.abs_tol + opts.rel_tol * v.abs();
    let d0 = y0.iter().map(|&v| (v / sc(v)).abs()).fold(0.0, f64::max);
    let d1 = y0
        .iter()
        .zip(f0)
        .map(|(&v, &f)| (f / sc(v)).abs())
        .fold(0.0, f64::max);
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h0 = h0.min(span);
    for i in 0..y0.len() {
        y1[i] = y0[i] + h0 * f0[i];
    }
    rhs(t0 + h0, y1, f1);
    let d2 = y0
        .iter()
        .zip(f0.iter().zip(f1.iter()))
        .map(|(&v, (&a, &b))| ((b - a) / sc(v)).abs())
        .fold(0.0, f64::max)
        / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(span)
}

/// Scalar convenience wrapper.
pub fn dopri5_scalar<F>(mut rhs: F, t0: f64, t_end: f64, y0: f64, opts: &Dopri5Options) -> Result<f64, OdeError>
where
    F: FnMut(f64, f64) -> f64,
{
    let mut y = [y0];
    dopri5(|t, y, dy| dy[0] = rhs(t, y[0]), t0, t_end, &mut y, opts)?;
    Ok(y[0])
}
