//! Acceptance criteria. Runs every criterion, prints one `[PASS]`/`[FAIL]`
//! line each, and exits non-zero if any fails.

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ibc_strang::bench::config::{ExperimentSpec, GridSpec, SpecOverrides};
use ibc_strang::bench::presets::PresetId;
use ibc_strang::bench::study::{max_abs_diff, run_convergence_study, ConvergenceReport, Problem, StudyOptions};
use ibc_strang::discretize::*;
use ibc_strang::flows::{reaction_flow_modified, reaction_flow_raw, IbcStepContext, ReactionTerm};
use ibc_strang::integrators::{ibc_strang_step, integrate, reference_solve, ReferenceConfig, SchemeKind};
use ibc_strang::ode::{dopri5_scalar, Dopri5Options};
use ibc_strang::opfunc::{phi1, Propagator};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

struct Studies {
    reports: BTreeMap<PresetId, (ConvergenceReport, Duration)>,
}

impl Studies {
    fn run() -> Studies {
        let mut reports = BTreeMap::new();
        for id in PresetId::ALL {
            let start = Instant::now();
            let report = run_convergence_study(&ExperimentSpec::from_preset(id), &StudyOptions::default())
                .unwrap_or_else(|e| panic!("{id}: {e}"));
            reports.insert(id, (report, start.elapsed()));
        }
        Studies { reports }
    }

    fn slopes(&self, id: PresetId) -> (f64, f64, Duration) {
        let (r, t) = &self.reports[&id];
        (
            r.tail_slope(SchemeKind::ClassicStrang).unwrap_or(f64::NAN),
            r.tail_slope(SchemeKind::IbcStrang).unwrap_or(f64::NAN),
            *t,
        )
    }

    fn windows(&self, ids: &[PresetId], classic: (f64, f64), limit: Duration) -> Outcome {
        let mut pass = true;
        let mut parts = Vec::new();
        for &id in ids {
            let (c, i, t) = self.slopes(id);
            let ok = (classic.0..=classic.1).contains(&c) && (1.75..=2.25).contains(&i) && t < limit;
            pass &= ok;
            parts.push(format!("{id}: classic {c:.3}, ibc {i:.3}, {:.1}s", t.as_secs_f64()));
        }
        outcome(pass, parts.join("; "))
    }
}

fn c1(s: &Studies) -> Outcome {
    s.windows(&[PresetId::Ex5_1], (0.7, 1.3), Duration::from_secs(120))
}

fn c2(s: &Studies) -> Outcome {
    s.windows(&[PresetId::Ex5_2, PresetId::Ex5_3], (1.25, 1.75), Duration::from_secs(120))
}

fn c3(s: &Studies) -> Outcome {
    s.windows(&[PresetId::Ex5_4], (0.7, 1.3), Duration::from_secs(120))
}

fn c4(s: &Studies) -> Outcome {
    s.windows(&[PresetId::Ex6_1, PresetId::Ex6_2], (0.7, 1.3), Duration::from_secs(300))
}

fn c5(s: &Studies) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (id, (r, _)) in &s.reports {
        let tau = r.metadata.spec.taus[0];
        let c = r.scheme(SchemeKind::ClassicStrang).and_then(|x| x.error_at(tau)).unwrap_or(f64::NAN);
        let i = r.scheme(SchemeKind::IbcStrang).and_then(|x| x.error_at(tau)).unwrap_or(f64::NAN);
        let ok = i < c;
        pass &= ok;
        parts.push(format!("{id}@{tau}: ibc {i:.3e} {} classic {c:.3e}", if ok { "<" } else { ">=" }));
    }
    outcome(pass, parts.join("; "))
}

fn c6() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut at = String::new();
    for id in PresetId::ALL {
        let spec = ExperimentSpec::from_preset(id);
        let p = Problem::build_with_reaction(&spec, ReactionTerm::zero()).unwrap();
        let exact = p.propagator.affine_flow(&p.u0, &p.op.r, spec.t_end).unwrap().state;
        for scheme in SchemeKind::ALL {
            for &tau in &spec.taus {
                let u = integrate(scheme, &p.op, &p.propagator, &p.reaction, &p.u0, spec.t_end, spec.steps_for(tau))
                    .unwrap();
                let e = max_abs_diff(&u, &exact);
                if !(e <= worst) {
                    worst = e;
                    at = format!("{id} {scheme} tau={tau}");
                }
            }
        }
    }
    outcome(worst <= 1e-10, format!("max endpoint error {worst:.2e} ({at})"))
}

fn rel(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    max_abs_diff(a, b) / b.amax().max(f64::MIN_POSITIVE)
}

fn c7() -> Outcome {
    let kinds = [
        FaceBC::dirichlet(1.0),
        FaceBC::neumann(-0.5),
        FaceBC::robin(1.0, 2.0, 0.25),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    let mut check = |op: &DiscreteOperator, rng: &mut ChaCha8Rng| {
        let s = Propagator::spectral(op).unwrap();
        let d = Propagator::dense(op).unwrap();
        let v = DVector::from_fn(op.dim(), |_, _| rng.gen_range(-1.0..1.0));
        for t in [1e-3, 0.02] {
            let a = s.affine_flow(&v, &op.r, t).unwrap().state;
            let b = d.affine_flow(&v, &op.r, t).unwrap().state;
            worst = worst.max(rel(&a, &b));
            cases += 1;
        }
    };
    for l in &kinds {
        for r in &kinds {
            for n in [2, 7, 31, 62] {
                let grid = build_grid_1d(0.0, 1.0, n, l, r).unwrap();
                let op = assemble_operator_1d(&grid, &EllipticCoefficients1D::laplacian(), l, r).unwrap();
                check(&op, &mut rng);
            }
        }
    }
    for l in &kinds {
        for r in &kinds {
            for b in &kinds {
                for t in &kinds {
                    let faces = FaceSet2D {
                        left: l.clone(),
                        right: r.clone(),
                        bottom: b.clone(),
                        top: t.clone(),
                    };
                    let grid = build_grid_2d((0.0, 1.0), (0.0, 1.0), (8, 8), &faces).unwrap();
                    check(&assemble_laplacian_2d(&grid, &faces).unwrap(), &mut rng);
                }
            }
            // Long thin grids reach 64 unknowns along one direction.
            let faces = FaceSet2D {
                left: l.clone(),
                right: r.clone(),
                bottom: kinds[0].clone(),
                top: kinds[2].clone(),
            };
            for dims in [(62, 3), (3, 62)] {
                let grid = build_grid_2d((0.0, 1.0), (0.0, 1.0), dims, &faces).unwrap();
                check(&assemble_laplacian_2d(&grid, &faces).unwrap(), &mut rng);
            }
        }
    }
    // Series branch against the naive quotient, which loses about half the digits here.
    let mut phi_worst: f64 = 0.0;
    let mut naive_worst: f64 = 0.0;
    for k in 0..200 {
        let z = (if k % 2 == 0 { 1.0 } else { -1.0 }) * 1e-6 * 0.93f64.powi(k / 2);
        let series = 1.0 + z / 2.0 + z * z / 6.0 + z * z * z / 24.0;
        phi_worst = phi_worst.max(((phi1(z) - series) / series).abs());
        naive_worst = naive_worst.max((((z.exp() - 1.0) / z - series) / series).abs());
    }
    let pass = worst <= 1e-10 && phi_worst <= 1e-15;
    outcome(
        pass,
        format!(
            "{cases} cases, max relative gap {worst:.2e}; phi1 series error {phi_worst:.1e} (naive quotient {naive_worst:.1e})"
        ),
    )
}

fn c8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let opts = Dopri5Options {
        abs_tol: 1e-13,
        rel_tol: 1e-13,
        ..Default::default()
    };
    let op = {
        let d = FaceBC::dirichlet(0.0);
        let grid = build_grid_1d(0.0, 1.0, 2, &d, &d).unwrap();
        assemble_operator_1d(&grid, &EllipticCoefficients1D::laplacian(), &d, &d).unwrap()
    };
    let mut worst: f64 = 0.0;
    let mut samples = 0;
    let mut compat = true;
    while samples < 100 {
        let f = match rng.gen_range(0..3) {
            0 => ReactionTerm::Square,
            1 => ReactionTerm::Logistic {
                rate: rng.gen_range(-3.0..3.0),
                capacity: rng.gen_range(0.5..5.0),
            },
            _ => ReactionTerm::Polynomial(vec![0.0, rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)]),
        };
        let base = rng.gen_range(-2.0..3.0);
        let w0 = rng.gen_range(-1.0..1.0);
        let dt = rng.gen_range(1e-3..0.25);
        let raw = reaction_flow_raw(&f, &DVector::from_element(1, w0), 0.0, dt);
        let ctx = IbcStepContext::new(&op, &f, &DVector::from_element(2, base), 0.0).unwrap();
        let modified = reaction_flow_modified(&ctx, &DVector::from_element(2, w0), 0.0, dt);
        let (Ok(raw), Ok(modified)) = (raw, modified) else {
            continue;
        };
        // Keep clear of finite-time blow-up.
        if raw[0].abs() > 50.0 || modified[0].abs() > 50.0 {
            continue;
        }
        let rk_raw = dopri5_scalar(|t, y| f.eval(t, y), 0.0, dt, w0, &opts).unwrap();
        let rk_mod = dopri5_scalar(|t, y| ctx.modified(t, 0, y), 0.0, dt, w0, &opts).unwrap();
        worst = worst.max((raw[0] - rk_raw).abs()).max((modified[0] - rk_mod).abs());
        let zero = reaction_flow_modified(&ctx, &DVector::zeros(2), 0.0, dt).unwrap();
        compat &= zero.iter().all(|&z| z == 0.0);
        samples += 1;
    }
    outcome(
        worst <= 1e-9 && compat,
        format!("{samples} samples, max |closed form - RK| = {worst:.2e}, h(0) flow exactly zero: {compat}"),
    )
}

fn c9() -> Outcome {
    let opts = Dopri5Options {
        abs_tol: 1e-9,
        rel_tol: 1e-9,
        ..Default::default()
    };
    let y = dopri5_scalar(|_, u| u * u, 0.0, 0.5, 1.0, &opts).unwrap();
    let scalar_err = (y - 2.0).abs();

    let spec = ExperimentSpec::from_preset(PresetId::Ex5_1);
    let p = Problem::build(&spec).unwrap();
    let coarse = reference_solve(&p.op, &p.reaction, &p.u0, spec.t_end, &ReferenceConfig::with_tolerance(1e-9)).unwrap();
    let fine = reference_solve(&p.op, &p.reaction, &p.u0, spec.t_end, &ReferenceConfig::with_tolerance(1e-11)).unwrap();
    let self_conv = max_abs_diff(&coarse, &fine);
    outcome(
        scalar_err <= 1e-7 && self_conv < 1e-7,
        format!("|y(0.5) - 2| = {scalar_err:.2e}; ex5_1 1e-9 vs 1e-11 gap {self_conv:.2e}"),
    )
}

fn fit_slope(taus: &[f64], errs: &[f64]) -> f64 {
    let n = taus.len() as f64;
    let xs: Vec<f64> = taus.iter().map(|t| t.ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|d| d.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>()
}

fn c10() -> Outcome {
    let spec = ExperimentSpec::build(
        PresetId::Ex5_1,
        SpecOverrides {
            grid: Some(GridSpec { nx: 63, ny: None }),
            ..Default::default()
        },
    )
    .unwrap();
    let p = Problem::build(&spec).unwrap();
    let cfg = ReferenceConfig::with_tolerance(1e-13);
    let taus: Vec<f64> = (0..5).map(|k| 0.02 / f64::from(1u32 << k)).collect();
    let defects: Vec<f64> = taus
        .iter()
        .map(|&tau| {
            let exact = reference_solve(&p.op, &p.reaction, &p.u0, tau, &cfg).unwrap();
            let one = ibc_strang_step(&p.op, &p.propagator, &p.reaction, &p.u0, 0.0, tau).unwrap();
            max_abs_diff(&one, &exact)
        })
        .collect();
    let slope = fit_slope(&taus, &defects);
    // Diagnostic only: the defect mapped back through L_h^{-1}.
    let lu = p.op.to_dense().lu();
    let smoothed: Vec<f64> = taus
        .iter()
        .map(|&tau| {
            let exact = reference_solve(&p.op, &p.reaction, &p.u0, tau, &cfg).unwrap();
            let one = ibc_strang_step(&p.op, &p.propagator, &p.reaction, &p.u0, 0.0, tau).unwrap();
            lu.solve(&(one - exact)).unwrap().amax()
        })
        .collect();
    let smoothed_slope = fit_slope(&taus, &smoothed);
    let listed: Vec<String> = defects.iter().map(|d| format!("{d:.2e}")).collect();
    outcome(slope >= 2.7, format!(
            "slope {slope:.3}, defects [{}]; L_h^-1 defect slope {smoothed_slope:.3}",
            listed.join(", ")
        ))
}

fn main() -> ExitCode {
    let started = Instant::now();
    let studies = Studies::run();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("C1 1D Dirichlet order windows (ex5_1)", Box::new(|| c1(&studies))),
        ("C2 1D Neumann and Robin order windows (ex5_2, ex5_3)", Box::new(|| c2(&studies))),
        ("C3 1D mixed order windows (ex5_4)", Box::new(|| c3(&studies))),
        ("C4 2D order windows (ex6_1, ex6_2)", Box::new(|| c4(&studies))),
        ("C5 ibc more accurate than classic at the largest tau", Box::new(|| c5(&studies))),
        ("C6 zero reaction reproduces the affine flow", Box::new(c6)),
        ("C7 spectral and dense backends agree", Box::new(c7)),
        ("C8 closed-form reaction flows match RK", Box::new(c8)),
        ("C9 reference solver accuracy", Box::new(c9)),
        ("C10 ibc one-step defect order", Box::new(c10)),
    ];
    let mut failed = 0;
    for (name, run) in &criteria {
        let t = Instant::now();
        let o = run();
        if !o.pass {
            failed += 1;
        }
        println!(
            "[{}] {name}: {} ({:.1}s)",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            t.elapsed().as_secs_f64()
        );
    }
    println!(
        "acceptance: {} passed, {failed} failed in {:.1}s",
        criteria.len() - failed,
        started.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
