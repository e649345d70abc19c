//! Explicit time integration of `∂ₜu = cot Θ(Hess_ℂ u) − cot θ̂` with
//! Dirichlet data `ψ(·, t)` on the boundary layer.
//!
//! `∂ₜu` is always reported as the right-hand side itself, never as a
//! difference quotient in time.

use std::f64::consts::FRAC_PI_2;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::functionals::{dissipation, j_from_cy, CyFunctional, Path, DEFAULT_S_SAMPLES};
use crate::grid::{integrate_interior_values, GridSpec, ScalarField};
use crate::hessian::{complex_hessian, HermitianField};
use crate::monitor::{check_row, monitor_invariants, MonitorReport, ParabolicBounds};
use crate::source::FieldSource;
use crate::spectral::{cot, phase_data, PhaseField};

#[derive(Clone, Debug)]
pub struct FlowOptions {
    pub hat_theta: f64,
    pub t_end: f64,
    /// Stop once `sup |∂ₜu|` drops below this.
    pub tol_stationary: f64,
    /// Fraction of the explicit stability limit used per step.
    pub safety: f64,
    /// Accepted states keep `Θ ∈ (guard, π − guard)`.
    pub phase_guard: f64,
    pub max_rejections: usize,
    /// Monitor slack is `monitor_c · h²`.
    pub monitor_c: f64,
    pub strict: bool,
    pub s_samples: usize,
    /// Emit a diagnostics row every `cadence` accepted steps.
    pub cadence: usize,
    pub max_steps: Option<usize>,
    /// Multiplies the right-hand side. Only the negative-control tests use
    /// anything other than 1.
    #[doc(hidden)]
    pub rhs_sign: f64,
}

impl FlowOptions {
    pub fn new(hat_theta: f64, t_end: f64) -> Self {
        FlowOptions {
            hat_theta,
            t_end,
            tol_stationary: 1e-6,
            safety: 0.8,
            phase_guard: 1e-3,
            max_rejections: 20,
            monitor_c: 10.0,
            strict: false,
            s_samples: DEFAULT_S_SAMPLES,
            cadence: 1,
            max_steps: None,
            rhs_sign: 1.0,
        }
    }
}

/// Everything needed to run the flow.
#[derive(Clone, Debug)]
pub struct FlowProblem {
    pub grid: GridSpec,
    /// Initial potential `φ` (boundary values are taken from `ψ(·, 0)`).
    pub initial: ScalarField,
    pub boundary: Arc<dyn FieldSource>,
    pub subsolution: Option<Arc<dyn FieldSource>>,
    /// Reference potential of the J-functional; the initial state when unset.
    /// It should share boundary values with the flow.
    pub reference: Option<ScalarField>,
    pub options: FlowOptions,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowState {
    pub u: ScalarField,
    pub t: f64,
    pub dt_last: f64,
    pub step_index: usize,
}

/// One diagnostics record. The CSV carries the first nine fields; the
/// remainder feed the invariant monitors.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagnosticsRow {
    pub t: f64,
    pub j: f64,
    pub s: f64,
    pub sup_dtu: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    pub lambda_min: f64,
    pub residual: f64,
    pub comparison_ok: bool,

    pub step: usize,
    pub dtu_min: f64,
    pub dtu_max: f64,
    /// `∫ |Θ − θ̂|`.
    pub l1_phase: f64,
    pub f_trace_min: f64,
    /// `min (u − u̲)`, when a subsolution is supplied.
    pub sub_gap_min: Option<f64>,
    pub u_max: f64,
    /// Rounding scale of `j` (see `CyValue::magnitude`).
    pub j_scale: f64,
}

/// Hessian, phase and right-hand side of one state.
#[derive(Clone, Debug)]
pub struct Evaluated {
    pub hess: HermitianField,
    pub phase: PhaseField,
    /// `cot Θ − cot θ̂` in interior order.
    pub rhs: Vec<f64>,
}

impl Evaluated {
    pub fn sup_abs_rhs(&self) -> f64 {
        self.rhs.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Hessian, phase data and `sign · (cot Θ − cot θ̂)`; fails if any interior
/// phase leaves `(0, π)`.
pub fn evaluate(u: &ScalarField, hat_theta: f64, sign: f64) -> Result<Evaluated> {
    let hess = complex_hessian(u);
    let phase = phase_data(&hess)?;
    if let Some((idx, theta)) = phase.branch_violation(0.0) {
        return Err(Error::PhaseBranch {
            coords: u.grid().coords(idx),
            theta,
        });
    }
    let cot_hat = cot(hat_theta);
    let rhs = phase
        .nodes()
        .par_iter()
        .map(|p| sign * (p.cot_theta - cot_hat))
        .collect();
    Ok(Evaluated { hess, phase, rhs })
}

/// `cot Θ(Hess_ℂ u) − cot θ̂` at interior nodes, zero on the boundary layer.
pub fn rhs(u: &ScalarField, hat_theta: f64) -> Result<ScalarField> {
    let e = evaluate(u, hat_theta, 1.0)?;
    let mut out = ScalarField::zeros(u.grid());
    for (&idx, v) in u.grid().interior().iter().zip(e.rhs) {
        out.values_mut()[idx] = v;
    }
    Ok(out)
}

/// `safety · h² / (4 · max 𝓕)`.
pub fn stable_dt(phase: &PhaseField, h: f64, safety: f64) -> Result<f64> {
    let (_, f_max) = phase.f_trace_range();
    if !(f_max > 0.0 && f_max.is_finite()) {
        return Err(Error::Invariant {
            t: f64::NAN,
            detail: format!("trace of the linearization is {f_max}, expected positive"),
        });
    }
    Ok(safety * h * h / (4.0 * f_max))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    Stationary,
    EndTime,
    MaxSteps,
}

/// Flow stepper holding the current state and its evaluation.
#[derive(Clone, Debug)]
pub struct Flow {
    problem: FlowProblem,
    state: FlowState,
    eval: Evaluated,
    boundary_cache: Option<ScalarField>,
    sub_cache: Option<ScalarField>,
    boundary_nodes: Vec<usize>,
    cy: CyFunctional,
}

impl Flow {
    pub fn new(problem: FlowProblem) -> Result<Self> {
        let grid = problem.grid.clone();
        grid.check_same(problem.initial.grid())?;
        let opts = &problem.options;
        let boundary_cache = if problem.boundary.is_time_dependent() {
            None
        } else {
            Some(problem.boundary.sample(&grid, 0.0)?)
        };
        let sub_cache = match &problem.subsolution {
            Some(s) if !s.is_time_dependent() => Some(s.sample(&grid, 0.0)?),
            _ => None,
        };
        let mut u = problem.initial.clone();
        match &boundary_cache {
            Some(b) => u.copy_boundary_from(b)?,
            None => u.copy_boundary_from(&problem.boundary.sample(&grid, 0.0)?)?,
        }
        let eval = evaluate(&u, opts.hat_theta, opts.rhs_sign)?;
        let cy = match &problem.reference {
            Some(r) => {
                grid.check_same(r.grid())?;
                CyFunctional::new(r, opts.s_samples)?
            }
            None => CyFunctional::new(&u, opts.s_samples)?,
        };
        Ok(Flow {
            state: FlowState {
                u,
                t: 0.0,
                dt_last: 0.0,
                step_index: 0,
            },
            eval,
            boundary_cache,
            sub_cache,
            boundary_nodes: grid.boundary(),
            cy,
            problem,
        })
    }

    pub fn state(&self) -> &FlowState {
        &self.state
    }

    pub fn evaluated(&self) -> &Evaluated {
        &self.eval
    }

    pub fn problem(&self) -> &FlowProblem {
        &self.problem
    }

    pub fn sup_dtu(&self) -> f64 {
        self.eval.sup_abs_rhs()
    }

    pub fn stable_dt(&self) -> Result<f64> {
        stable_dt(&self.eval.phase, self.problem.grid.h(), self.problem.options.safety)
    }

    /// Writes `ψ(·, t)` into the boundary layer of `u`.
    fn fill_boundary(&self, u: &mut ScalarField, t: f64) -> Result<()> {
        match &self.boundary_cache {
            Some(b) => u.copy_boundary_from(b),
            None => {
                let grid = &self.problem.grid;
                let mut x = vec![0.0; grid.axes()];
                for &idx in &self.boundary_nodes {
                    grid.coords_into(idx, &mut x);
                    u.values_mut()[idx] = self.problem.boundary.eval(&x, t);
                }
                Ok(())
            }
        }
    }

    fn try_step(&self, dt: f64) -> Result<Option<(FlowState, Evaluated)>> {
        let grid = &self.problem.grid;
        let opts = &self.problem.options;
        let t_new = self.state.t + dt;
        let mut u = self.state.u.clone();
        self.fill_boundary(&mut u, t_new)?;
        {
            let old = self.state.u.values();
            let v = u.values_mut();
            for (&idx, r) in grid.interior().iter().zip(&self.eval.rhs) {
                v[idx] = old[idx] + dt * r;
            }
        }
        if let Some(i) = u.values().iter().position(|v| !v.is_finite()) {
            log::debug!("non-finite value at {:?} after dt = {dt:e}", grid.coords(i));
            return Ok(None);
        }
        let eval = match evaluate(&u, opts.hat_theta, opts.rhs_sign) {
            Ok(e) => e,
            Err(Error::PhaseBranch { .. }) => return Ok(None),
            Err(e) => return Err(e),
        };
        if let Some((idx, theta)) = eval.phase.branch_violation(opts.phase_guard) {
            log::debug!("step dt = {dt:e} rejected: phase {theta} at {:?}", grid.coords(idx));
            return Ok(None);
        }
        let state = FlowState {
            u,
            t: t_new,
            dt_last: dt,
            step_index: self.state.step_index + 1,
        };
        Ok(Some((state, eval)))
    }

    /// One forward-Euler step of size `dt`, halving on rejection. Returns the
    /// step size actually taken.
    pub fn euler_step(&mut self, dt: f64) -> Result<f64> {
        if dt == 0.0 {
            return Ok(0.0);
        }
        let mut dt = dt;
        for _ in 0..=self.problem.options.max_rejections {
            if let Some((state, eval)) = self.try_step(dt)? {
                self.state = state;
                self.eval = eval;
                return Ok(dt);
            }
            dt *= 0.5;
        }
        Err(Error::StabilityCollapse {
            t: self.state.t,
            rejections: self.problem.options.max_rejections,
        })
    }

    fn subsolution_at(&self, t: f64) -> Result<Option<ScalarField>> {
        match (&self.sub_cache, &self.problem.subsolution) {
            (Some(s), _) => Ok(Some(s.clone())),
            (None, Some(src)) => Ok(Some(src.sample(&self.problem.grid, t)?)),
            (None, None) => Ok(None),
        }
    }

    /// Diagnostics of the current state.
    pub fn row(&self) -> Result<DiagnosticsRow> {
        let opts = &self.problem.options;
        let grid = &self.problem.grid;
        let u = &self.state.u;
        let eta = opts.monitor_c * grid.h() * grid.h();

        let cy = self.cy.eval_with(u, &self.eval.hess, Path::Linear)?;
        let j = j_from_cy(cy.value, opts.hat_theta);
        let s = dissipation(&self.eval.hess, &self.eval.rhs, opts.hat_theta);

        let (theta_min, theta_max) = self.eval.phase.theta_range();
        let (f_trace_min, _) = self.eval.phase.f_trace_range();
        let (dtu_min, dtu_max) = self
            .eval
            .rhs
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        let sup_dtu = self.sup_dtu();
        let l1: Vec<f64> = self
            .eval
            .phase
            .nodes()
            .iter()
            .map(|p| (p.theta - opts.hat_theta).abs())
            .collect();
        let l1_phase = integrate_interior_values(grid, &l1);

        let sub_gap_min = self.subsolution_at(self.state.t)?.map(|sub| {
            u.values()
                .iter()
                .zip(sub.values())
                .map(|(a, b)| a - b)
                .fold(f64::INFINITY, f64::min)
        });
        let u_max = u.values().iter().copied().fold(f64::NEG_INFINITY, f64::max);

        Ok(DiagnosticsRow {
            t: self.state.t,
            j,
            s,
            sup_dtu,
            theta_min,
            theta_max,
            lambda_min: self.eval.phase.lambda_min(),
            residual: sup_dtu,
            comparison_ok: sub_gap_min.is_none_or(|g| g >= -eta),
            step: self.state.step_index,
            dtu_min,
            dtu_max,
            l1_phase,
            f_trace_min,
            sub_gap_min,
            u_max,
            j_scale: cy.magnitude,
        })
    }
}

/// Result of a completed run.
#[derive(Clone, Debug)]
pub struct FlowOutcome {
    pub state: FlowState,
    pub rows: Vec<DiagnosticsRow>,
    pub monitor: MonitorReport,
    pub bounds: ParabolicBounds,
    pub termination: Termination,
}

/// A run aborted mid-flight, with everything needed for a forensic dump.
#[derive(Debug)]
pub struct FlowAbort {
    pub error: Error,
    pub state: FlowState,
    pub rows: Vec<DiagnosticsRow>,
}

impl std::fmt::Display for FlowAbort {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} (step {}, t = {})",
            self.error, self.state.step_index, self.state.t
        )
    }
}

impl std::error::Error for FlowAbort {}

impl From<FlowAbort> for Error {
    fn from(a: FlowAbort) -> Error {
        a.error
    }
}

/// Steps until `t_end`, stationarity or the step cap, recording diagnostics
/// and checking the invariant monitors after every recorded step.
pub fn run_flow(problem: FlowProblem) -> std::result::Result<FlowOutcome, FlowAbort> {
    let start_state = FlowState {
        u: problem.initial.clone(),
        t: 0.0,
        dt_last: 0.0,
        step_index: 0,
    };
    let abort = |error: Error, state: FlowState, rows: Vec<DiagnosticsRow>| FlowAbort { error, state, rows };

    let mut flow = match Flow::new(problem) {
        Ok(f) => f,
        Err(e) => return Err(abort(e, start_state, Vec::new())),
    };
    let bounds = match ParabolicBounds::compute(&flow) {
        Ok(b) => b,
        Err(e) => return Err(abort(e, flow.state.clone(), Vec::new())),
    };
    let opts = flow.problem.options.clone();
    let h = flow.problem.grid.h();
    let eta = opts.monitor_c * h * h;
    let mut rows = Vec::new();
    let mut warned = std::collections::BTreeSet::new();

    macro_rules! record {
        () => {{
            let row = match flow.row() {
                Ok(r) => r,
                Err(e) => return Err(abort(e, flow.state.clone(), rows)),
            };
            for failure in check_row(&row, &bounds, eta) {
                if opts.strict {
                    let err = Error::Invariant {
                        t: row.t,
                        detail: failure,
                    };
                    rows.push(row);
                    return Err(abort(err, flow.state.clone(), rows));
                } else if warned.insert(failure.split(':').next().unwrap_or("").to_string()) {
                    log::warn!("t = {}: {failure}", row.t);
                }
            }
            rows.push(row);
        }};
    }

    record!();
    let termination = loop {
        if flow.sup_dtu() < opts.tol_stationary {
            break Termination::Stationary;
        }
        let remaining = opts.t_end - flow.state.t;
        let t_slack = 1e-12 * opts.t_end.abs().max(1.0);
        if remaining <= 0.0 {
            break Termination::EndTime;
        }
        if opts.max_steps.is_some_and(|m| flow.state.step_index >= m) {
            break Termination::MaxSteps;
        }
        let dt = match flow.stable_dt() {
            Ok(dt) => dt,
            Err(e) => return Err(abort(e, flow.state.clone(), rows)),
        };
        // absorb a sliver of time rather than leave it for a tiny last step
        let landing = dt + t_slack >= remaining;
        let dt = if landing { remaining } else { dt };
        if let Err(e) = flow.euler_step(dt) {
            return Err(abort(e, flow.state.clone(), rows));
        }
        if landing && flow.state.dt_last == remaining {
            flow.state.t = opts.t_end;
        }
        if flow.state.step_index % opts.cadence.max(1) == 0 {
            record!();
        }
    };
    if rows.last().map(|r| r.step) != Some(flow.state.step_index) {
        record!();
    }

    let monitor = monitor_invariants(&rows, &bounds, eta);
    if opts.strict && !monitor.passed() {
        let detail = monitor.failures().join("; ");
        let t = flow.state.t;
        return Err(abort(Error::Invariant { t, detail }, flow.state.clone(), rows));
    }
    Ok(FlowOutcome {
        state: flow.state,
        rows,
        monitor,
        bounds,
        termination,
    })
}

/// `arccot(v + cot θ̂)`: the phase corresponding to a value of `∂ₜu`.
pub fn phase_of_dtu(dtu: f64, hat_theta: f64) -> f64 {
    FRAC_PI_2 - (dtu + cot(hat_theta)).atan()
}

/// Hypercritical range check used by config validation.
pub fn is_hypercritical(hat_theta: f64) -> bool {
    hat_theta > 0.0 && hat_theta < FRAC_PI_2
}
