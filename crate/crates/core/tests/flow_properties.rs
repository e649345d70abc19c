//! Whole-run properties of the flow and the Newton solver.

use std::f64::consts::{FRAC_PI_3, FRAC_PI_4};
use std::sync::Arc;

use dhym_core::elliptic::{newton_solve, NewtonOptions};
use dhym_core::flow::{run_flow, FlowOptions, FlowProblem, Termination};
use dhym_core::grid::{sample_function, GridSpec};
use dhym_core::monitor::{J_MONOTONE, PHASE_RESIDUAL};
use dhym_core::source::{bump, Bumped, FieldSource, FnSource, Quadratic};

fn bumped_quadratic(n: usize, points: usize, scale: f64, amplitude: f64, hat: f64) -> FlowProblem {
    let grid = GridSpec::cube(n, -1.0, 1.0, points).unwrap();
    let base = Quadratic::isotropic(n, scale);
    let init = Bumped {
        base: base.clone(),
        amplitude,
        lo: grid.lo().to_vec(),
        hi: grid.hi().to_vec(),
    };
    FlowProblem {
        initial: init.sample(&grid, 0.0).unwrap(),
        grid,
        boundary: Arc::new(base.clone()),
        subsolution: Some(Arc::new(base)),
        reference: None,
        options: FlowOptions::new(hat, 0.5),
    }
}

#[test]
fn heat_run_passes_every_monitor() {
    let mut p = bumped_quadratic(1, 17, 1.0, 0.5, FRAC_PI_4);
    p.options.strict = true;
    let out = run_flow(p).unwrap();
    assert!(out.monitor.passed(), "{}", out.monitor);
    assert!(out.monitor.item(J_MONOTONE).unwrap().passed, "{}", out.monitor);
    assert_eq!(out.termination, Termination::EndTime);
    assert_eq!(out.state.t, 0.5);
}

#[test]
fn wrong_sign_fails_phase_residual() {
    let mut p = bumped_quadratic(1, 17, 1.0, 0.5, FRAC_PI_4);
    p.options.rhs_sign = -1.0;
    p.options.max_steps = Some(40);
    let out = run_flow(p).unwrap();
    let item = out.monitor.item(PHASE_RESIDUAL).unwrap();
    assert!(!item.passed, "{}", out.monitor);
}

#[test]
fn boundary_tracks_time_dependent_data() {
    let grid = GridSpec::cube(1, -1.0, 1.0, 9).unwrap();
    let psi = |x: &[f64], t: f64| x[0] * x[0] + x[1] * x[1] + 0.2 * t * x[0];
    let mut options = FlowOptions::new(FRAC_PI_4, 0.3);
    options.tol_stationary = 0.0;
    let out = run_flow(FlowProblem {
        initial: sample_function(&grid, |x| psi(x, 0.0)).unwrap(),
        grid: grid.clone(),
        boundary: Arc::new(FnSource::new(psi)),
        subsolution: None,
        reference: None,
        options,
    })
    .unwrap();
    let t = out.state.t;
    for idx in grid.boundary() {
        assert_eq!(out.state.u.values()[idx], psi(&grid.coords(idx), t));
    }
}

/// Exact solution `|z|² + e^x cos y` of `u₁₁̄ = 1`; the discrete stationary
/// state should approach it at second order.
#[test]
fn stationary_error_is_second_order() {
    let exact = |x: &[f64]| x[0] * x[0] + x[1] * x[1] + x[0].exp() * x[1].cos();
    let error = |points: usize| {
        let grid = GridSpec::cube(1, -1.0, 1.0, points).unwrap();
        let (lo, hi) = (grid.lo().to_vec(), grid.hi().to_vec());
        let mut options = FlowOptions::new(FRAC_PI_4, 1e3);
        options.tol_stationary = 1e-11;
        let out = run_flow(FlowProblem {
            initial: sample_function(&grid, |x| exact(x) + 0.3 * bump(x, &lo, &hi)).unwrap(),
            grid: grid.clone(),
            boundary: Arc::new(FnSource::stationary(move |x: &[f64], _| exact(x))),
            subsolution: None,
            reference: None,
            options,
        })
        .unwrap();
        assert_eq!(out.termination, Termination::Stationary);
        out.state
            .u
            .sup_abs_diff(&sample_function(&grid, exact).unwrap())
            .unwrap()
    };
    let ratio = error(17) / error(33);
    assert!((2.5..=6.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn newton_matches_flow_limit() {
    let mut p = bumped_quadratic(2, 9, 3f64.sqrt(), 0.1, FRAC_PI_3);
    p.options.t_end = 1e3;
    let newton = newton_solve(&p.initial, &NewtonOptions::new(FRAC_PI_3)).unwrap();
    let tol = p.options.tol_stationary;
    let flow = run_flow(p).unwrap();
    assert_eq!(flow.termination, Termination::Stationary);
    assert!(newton.converged);
    let gap = newton.state.u.sup_abs_diff(&flow.state.u).unwrap();
    assert!(gap <= 10.0 * tol.max(NewtonOptions::new(FRAC_PI_3).tol), "gap {gap:e}");
}

#[test]
fn newton_converges_quadratically() {
    let p = bumped_quadratic(2, 9, 3f64.sqrt(), 0.3, FRAC_PI_3);
    let out = newton_solve(&p.initial, &NewtonOptions::new(FRAC_PI_3)).unwrap();
    assert!(out.converged);
    let r: Vec<f64> = out.trace.iter().map(|s| s.residual_sup).collect();
    assert!(r.len() >= 3, "{r:?}");
    for w in r[r.len() - 3..].windows(2) {
        let ratio = w[1] / (w[0] * w[0]);
        assert!((1e-3..=1e3).contains(&ratio), "residuals {r:?}");
    }
}
