//! Damped Newton iteration for the stationary problem `Θ(Hess_ℂ u) = θ̂`,
//! `u = φ` on the boundary layer, solved in the form `cot Θ = cot θ̂`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flow::{evaluate, Evaluated};
use crate::grid::{pairwise_sum, GridSpec, ScalarField};
use crate::hessian::complex_hessian_at;
use crate::matrix::CMat;

/// The residual `cot Θ(Hess_ℂ u) − cot θ̂`, zero on the boundary layer.
pub fn residual(u: &ScalarField, hat_theta: f64) -> Result<ScalarField> {
    crate::flow::rhs(u, hat_theta)
}

/// `δ ↦ Re tr(F · Hess_ℂ δ)` at interior nodes, `δ = 0` on the boundary layer.
#[derive(Clone, Debug)]
pub struct LinearizedOperator {
    grid: GridSpec,
    f: Vec<CMat>,
}

impl LinearizedOperator {
    /// `f` holds one positive definite Hermitian matrix per interior node.
    pub fn new(grid: &GridSpec, f: Vec<CMat>) -> Result<Self> {
        if f.len() != grid.interior().len() {
            return Err(Error::GridMismatch(format!(
                "{} coefficient matrices for {} interior nodes",
                f.len(),
                grid.interior().len()
            )));
        }
        Ok(LinearizedOperator { grid: grid.clone(), f })
    }

    pub fn from_evaluated(e: &Evaluated) -> Self {
        LinearizedOperator {
            grid: e.phase.grid().clone(),
            f: e.phase.nodes().iter().map(|p| p.f).collect(),
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Interior-ordered input and output.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let grid = &self.grid;
        let mut full = vec![0.0; grid.len()];
        for (&idx, &v) in grid.interior().iter().zip(x) {
            full[idx] = v;
        }
        grid.interior()
            .par_iter()
            .zip(&self.f)
            .map(|(&idx, f)| f.real_pairing(&complex_hessian_at(&full, grid, idx)))
            .collect()
    }

    /// Diagonal of the stencil: `−tr F / h²`.
    pub fn diagonal(&self) -> Vec<f64> {
        let inv_h2 = 1.0 / (self.grid.h() * self.grid.h());
        self.f.iter().map(|f| -f.trace().re * inv_h2).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearSolveOptions {
    /// Target for `‖b − Ax‖₂ / ‖b‖₂`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LinearSolveOptions {
    fn default() -> Self {
        LinearSolveOptions {
            tol: 1e-10,
            max_iter: 100_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearSolution {
    /// Correction on the full grid, zero on the boundary layer.
    pub delta: ScalarField,
    pub iterations: usize,
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let prod: Vec<f64> = a.par_iter().zip(b).map(|(x, y)| x * y).collect();
    pairwise_sum(&prod)
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves `Re tr(F · Hess_ℂ δ) = rhs` at interior nodes with `δ = 0` on the
/// boundary layer, by Jacobi-preconditioned BiCGSTAB.
pub fn linear_solve(op: &LinearizedOperator, rhs: &ScalarField, opts: LinearSolveOptions) -> Result<LinearSolution> {
    let grid = op.grid().clone();
    grid.check_same(rhs.grid())?;
    let b = rhs.interior_values();
    let diag = op.diagonal();
    if let Some(d) = diag.iter().find(|d| !(**d < 0.0)) {
        return Err(Error::LinearSolver(format!(
            "linearization is not positive definite (stencil diagonal {d})"
        )));
    }
    let inv_diag: Vec<f64> = diag.iter().map(|d| 1.0 / d).collect();
    let precondition = |v: &[f64]| -> Vec<f64> { v.iter().zip(&inv_diag).map(|(a, m)| a * m).collect() };

    let b_norm = norm(&b);
    let mut x = vec![0.0; b.len()];
    let finish = |x: Vec<f64>, iterations: usize, rel: f64| -> Result<LinearSolution> {
        let mut full = vec![0.0; grid.len()];
        for (&idx, v) in grid.interior().iter().zip(x) {
            full[idx] = v;
        }
        Ok(LinearSolution {
            delta: ScalarField::new(grid.clone(), full)?,
            iterations,
            relative_residual: rel,
        })
    };
    if b_norm == 0.0 {
        return finish(x, 0, 0.0);
    }

    let mut iterations = 0;
    // restart from the true residual after breakdowns and on apparent
    // convergence, so the reported residual is never a recurrence artefact
    'restart: while iterations < opts.max_iter {
        let ax = op.apply(&x);
        let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let rel = norm(&r) / b_norm;
        if rel <= opts.tol {
            return finish(x, iterations, rel);
        }
        let r_hat = r.clone();
        let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
        let mut v = vec![0.0; b.len()];
        let mut p = vec![0.0; b.len()];
        while iterations < opts.max_iter {
            iterations += 1;
            let rho_new = dot(&r_hat, &r);
            if rho_new == 0.0 || omega == 0.0 {
                continue 'restart;
            }
            let beta = (rho_new / rho) * (alpha / omega);
            rho = rho_new;
            for ((p, r), v) in p.iter_mut().zip(&r).zip(&v) {
                *p = r + beta * (*p - omega * v);
            }
            let y = precondition(&p);
            v = op.apply(&y);
            let rv = dot(&r_hat, &v);
            if rv == 0.0 {
                continue 'restart;
            }
            alpha = rho / rv;
            let s: Vec<f64> = r.iter().zip(&v).map(|(r, v)| r - alpha * v).collect();
            if norm(&s) / b_norm <= opts.tol {
                for (x, y) in x.iter_mut().zip(&y) {
                    *x += alpha * y;
                }
                continue 'restart;
            }
            let z = precondition(&s);
            let t = op.apply(&z);
            let tt = dot(&t, &t);
            omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
            for ((x, y), z) in x.iter_mut().zip(&y).zip(&z) {
                *x += alpha * y + omega * z;
            }
            for ((r, s), t) in r.iter_mut().zip(&s).zip(&t) {
                *r = s - omega * t;
            }
            if norm(&r) / b_norm <= opts.tol {
                continue 'restart;
            }
        }
    }
    let ax = op.apply(&x);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let rel = norm(&r) / b_norm;
    let (dmin, dmax) = diag.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &d| {
        (lo.min(-d), hi.max(-d))
    });
    Err(Error::LinearSolver(format!(
        "no convergence after {iterations} iterations: relative residual {rel:.3e}, \
         stencil diagonal magnitude in [{dmin:.3e}, {dmax:.3e}] (ratio {:.3e})",
        dmax / dmin
    )))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonOptions {
    pub hat_theta: f64,
    /// Stop when `sup |cot Θ − cot θ̂| ≤ tol`.
    pub tol: f64,
    pub max_iter: usize,
    /// Accepted iterates keep `Θ ∈ (guard, π − guard)`.
    pub phase_guard: f64,
    pub min_damping: f64,
    pub linear: LinearSolveOptions,
}

impl NewtonOptions {
    pub fn new(hat_theta: f64) -> Self {
        NewtonOptions {
            hat_theta,
            tol: 1e-10,
            max_iter: 100,
            phase_guard: 1e-3,
            min_damping: 1e-6,
            linear: LinearSolveOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NewtonState {
    pub u: ScalarField,
    pub residual_sup: f64,
    pub iteration: usize,
    pub damping: f64,
}

/// One accepted Newton iterate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonStep {
    pub iteration: usize,
    pub residual_sup: f64,
    pub damping: f64,
    pub linear_iterations: usize,
    pub linear_residual: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NewtonOutcome {
    pub state: NewtonState,
    /// Starts with the initial guess (iteration 0).
    pub trace: Vec<NewtonStep>,
    pub converged: bool,
}

/// Damped Newton from `phi`, whose boundary layer is the Dirichlet data and
/// whose interior is the initial guess.
pub fn newton_solve(phi: &ScalarField, opts: &NewtonOptions) -> Result<NewtonOutcome> {
    let mut u = phi.clone();
    let mut eval = evaluate(&u, opts.hat_theta, 1.0)?;
    let mut r_sup = eval.sup_abs_rhs();
    let mut trace = vec![NewtonStep {
        iteration: 0,
        residual_sup: r_sup,
        damping: 1.0,
        linear_iterations: 0,
        linear_residual: 0.0,
    }];
    let mut damping = 1.0;
    let grid = phi.grid().clone();

    for iteration in 1..=opts.max_iter {
        if r_sup <= opts.tol {
            break;
        }
        let op = LinearizedOperator::from_evaluated(&eval);
        let mut rhs = ScalarField::zeros(&grid);
        for (&idx, r) in grid.interior().iter().zip(&eval.rhs) {
            rhs.values_mut()[idx] = *r;
        }
        let sol = linear_solve(&op, &rhs, opts.linear)?;
        damping = 1.0;
        loop {
            let mut trial = u.clone();
            for &idx in grid.interior() {
                trial.values_mut()[idx] -= damping * sol.delta.values()[idx];
            }
            let accepted = match evaluate(&trial, opts.hat_theta, 1.0) {
                Ok(e) if e.phase.branch_violation(opts.phase_guard).is_none() => {
                    let s = e.sup_abs_rhs();
                    if s < r_sup {
                        Some((e, s))
                    } else {
                        None
                    }
                }
                Ok(_) | Err(Error::PhaseBranch { .. }) => None,
                Err(e) => return Err(e),
            };
            if let Some((e, s)) = accepted {
                u = trial;
                eval = e;
                r_sup = s;
                break;
            }
            damping *= 0.5;
            if damping < opts.min_damping {
                return Err(Error::NewtonStall {
                    iteration,
                    residual: r_sup,
                    min_damping: opts.min_damping,
                });
            }
        }
        log::debug!("newton {iteration}: residual {r_sup:.3e}, damping {damping}");
        trace.push(NewtonStep {
            iteration,
            residual_sup: r_sup,
            damping,
            linear_iterations: sol.iterations,
            linear_residual: sol.relative_residual,
        });
    }
    let iteration = trace.last().map_or(0, |s| s.iteration);
    Ok(NewtonOutcome {
        converged: r_sup <= opts.tol,
        state: NewtonState {
            u,
            residual_sup: r_sup,
            iteration,
            damping,
        },
        trace,
    })
}
