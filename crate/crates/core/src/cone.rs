//! Phase cones and subsolution criteria.
//!
//! `Γ = {λ : 0 < Θ(λ) < π/2}`, `Γ^σ = {λ ∈ Γ : Θ(λ) < σ}`. A function is an
//! elliptic subsolution iff `max_j Σ_{i≠j} arccot λ_i < θ̂` pointwise; the
//! parabolic certificate is the margin
//! `cot(Σ_{j≠i} arccot λ_j) − (∂ₜu + cot θ̂)` over all nodes and directions.

use std::f64::consts::{FRAC_PI_2, PI};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField};
use crate::hessian::{complex_hessian, HermitianField};
use crate::source::FieldSource;
use crate::spectral::{arccot, cot, hermitian_eigenvalues, theta};

/// `0 < Θ(λ) < σ`, with `σ = π/2` for `Γ` itself.
pub fn in_gamma(lambda: &[f64], sigma: Option<f64>) -> bool {
    let t = theta(lambda);
    t > 0.0 && t < sigma.unwrap_or(FRAC_PI_2)
}

/// `Σ_{i≠j} arccot λ_i` for each `j`.
pub fn partial_phases(lambda: &[f64]) -> Vec<f64> {
    (0..lambda.len())
        .map(|j| {
            lambda
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != j)
                .map(|(_, &l)| arccot(l))
                .sum()
        })
        .collect()
}

/// `max_j Σ_{i≠j} arccot λ_i`; zero for n = 1 (empty sum).
pub fn max_partial_phase(lambda: &[f64]) -> f64 {
    partial_phases(lambda).into_iter().fold(0.0, f64::max)
}

pub fn is_elliptic_subsolution(lambda: &[f64], hat_theta: f64) -> bool {
    max_partial_phase(lambda) < hat_theta
}

#[derive(Clone, Debug)]
pub struct EllipticCheck {
    pub node_ok: Vec<bool>,
    pub all_ok: bool,
    /// Largest `max_j Σ_{i≠j} arccot λ_i` over the grid.
    pub worst_partial_phase: f64,
    pub failing_coords: Vec<Vec<f64>>,
}

const MAX_REPORTED: usize = 16;

pub fn elliptic_subsolution_check(field: &HermitianField, hat_theta: f64) -> Result<EllipticCheck> {
    let partial: Vec<f64> = field
        .mats()
        .par_iter()
        .map(|m| hermitian_eigenvalues(m).map(|l| max_partial_phase(&l)))
        .collect::<Result<_>>()?;
    let node_ok: Vec<bool> = partial.iter().map(|&p| p < hat_theta).collect();
    let grid = field.grid();
    let failing_coords = node_ok
        .iter()
        .enumerate()
        .filter(|(_, ok)| !**ok)
        .take(MAX_REPORTED)
        .map(|(k, _)| grid.coords(grid.interior()[k]))
        .collect();
    Ok(EllipticCheck {
        all_ok: node_ok.iter().all(|&b| b),
        worst_partial_phase: partial.iter().copied().fold(0.0, f64::max),
        node_ok,
        failing_coords,
    })
}

/// Outcome of the parabolic subsolution margin.
#[derive(Clone, Debug, PartialEq)]
pub enum ParabolicMargin {
    /// Smallest margin, with the node coordinates and direction attaining it.
    Finite {
        value: f64,
        coords: Vec<f64>,
        direction: usize,
    },
    /// n = 1: every partial sum is empty, `cot(0⁺) = +∞`, the criterion is vacuous.
    Vacuous,
}

impl ParabolicMargin {
    pub fn value(&self) -> f64 {
        match self {
            ParabolicMargin::Finite { value, .. } => *value,
            ParabolicMargin::Vacuous => f64::INFINITY,
        }
    }

    pub fn certifies(&self) -> bool {
        self.value() > 0.0
    }
}

/// Minimum over interior nodes and directions of
/// `cot(Σ_{j≠i} arccot λ_j) − (∂ₜu + cot θ̂)`. `dt_u` is given in interior order.
pub fn parabolic_margin(field: &HermitianField, dt_u: &[f64], hat_theta: f64) -> Result<ParabolicMargin> {
    let grid = field.grid();
    if dt_u.len() != field.len() {
        return Err(Error::GridMismatch(format!(
            "{} time derivatives for {} interior nodes",
            dt_u.len(),
            field.len()
        )));
    }
    if grid.n() == 1 {
        return Ok(ParabolicMargin::Vacuous);
    }
    let cot_hat = cot(hat_theta);
    let per_node: Vec<(f64, usize)> = field
        .mats()
        .par_iter()
        .zip(dt_u.par_iter())
        .zip(grid.interior().par_iter())
        .map(|((m, &dtu), &idx)| {
            let lambda = hermitian_eigenvalues(m)?;
            let mut best = (f64::INFINITY, 0);
            for (i, p) in partial_phases(&lambda).into_iter().enumerate() {
                if !(p > 0.0 && p < PI) {
                    return Err(Error::PhaseBranch {
                        coords: grid.coords(idx),
                        theta: p,
                    });
                }
                let margin = cot(p) - (dtu + cot_hat);
                if margin < best.0 {
                    best = (margin, i);
                }
            }
            Ok(best)
        })
        .collect::<Result<_>>()?;
    let (k, &(value, direction)) = per_node
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .0.total_cmp(&b.1 .0))
        .expect("grid has interior nodes");
    Ok(ParabolicMargin::Finite {
        value,
        coords: grid.coords(grid.interior()[k]),
        direction,
    })
}

/// `ε = ½ min_i inf arccot λ_i` over the field.
pub fn certified_epsilon(field: &HermitianField) -> Result<f64> {
    let m = field
        .mats()
        .par_iter()
        .map(|m| hermitian_eigenvalues(m).map(|l| l.iter().map(|&x| arccot(x)).fold(f64::INFINITY, f64::min)))
        .collect::<Result<Vec<_>>>()?;
    Ok(0.5 * m.into_iter().fold(f64::INFINITY, f64::min))
}

/// Per-node cone membership summary.
#[derive(Clone, Debug)]
pub struct NodeCone {
    pub in_gamma: bool,
    pub in_gamma_sigma: Option<bool>,
    pub lambda_min: f64,
    /// Parabolic margin at this node (`+∞` when vacuous).
    pub subsolution_margin: f64,
}

#[derive(Clone, Debug)]
pub struct ConeReport {
    pub nodes: Vec<NodeCone>,
    pub hat_theta: f64,
    pub theta0: f64,
}

pub fn cone_report(
    field: &HermitianField,
    dt_u: &[f64],
    hat_theta: f64,
    theta0: f64,
    sigma: Option<f64>,
) -> Result<ConeReport> {
    let cot_hat = cot(hat_theta);
    let nodes = field
        .mats()
        .par_iter()
        .zip(dt_u.par_iter())
        .map(|(m, &dtu)| {
            let lambda = hermitian_eigenvalues(m)?;
            let margin = if lambda.len() == 1 {
                f64::INFINITY
            } else {
                partial_phases(&lambda)
                    .into_iter()
                    .map(|p| cot(p) - (dtu + cot_hat))
                    .fold(f64::INFINITY, f64::min)
            };
            Ok(NodeCone {
                in_gamma: in_gamma(&lambda, None),
                in_gamma_sigma: sigma.map(|s| in_gamma(&lambda, Some(s))),
                lambda_min: *lambda.last().unwrap(),
                subsolution_margin: margin,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ConeReport {
        nodes,
        hat_theta,
        theta0,
    })
}

#[derive(Clone, Debug, Default)]
pub struct Violations {
    pub count: usize,
    /// First few offending locations with the offending value.
    pub samples: Vec<(Vec<f64>, f64)>,
}

impl Violations {
    fn push(&mut self, coords: Vec<f64>, value: f64) {
        self.count += 1;
        if self.samples.len() < MAX_REPORTED {
            self.samples.push((coords, value));
        }
    }

    pub fn ok(&self) -> bool {
        self.count == 0
    }
}

/// Checks of the initial/boundary data against the standing assumptions.
#[derive(Clone, Debug, Default)]
pub struct CompatibilityReport {
    /// `ψ(·,0) = φ` on the closed box, to 1e-12.
    pub c1: Violations,
    /// `0 < Θ(Hess φ) < π/2` at interior nodes.
    pub initial_phase: Violations,
    /// `θ₀ < Θ(Hess ψ(·,t)) < π/2 − θ₀` next to the boundary at sampled times.
    pub c2: Violations,
    pub times: Vec<f64>,
}

impl CompatibilityReport {
    pub fn ok(&self) -> bool {
        self.c1.ok() && self.initial_phase.ok() && self.c2.ok()
    }
}

const C1_TOL: f64 = 1e-12;

/// Interior nodes adjacent to the boundary layer: the discrete stand-in for
/// the lateral boundary where the Hessian of ψ is taken.
fn near_boundary(grid: &GridSpec) -> Vec<usize> {
    grid.interior()
        .iter()
        .enumerate()
        .filter(|(_, &idx)| {
            (0..grid.axes()).any(|k| {
                let i = grid.axis_index(idx, k);
                i == 1 || i + 2 == grid.dims()[k]
            })
        })
        .map(|(k, _)| k)
        .collect()
}

pub fn check_compatibility(
    phi: &ScalarField,
    psi: &dyn FieldSource,
    theta0: f64,
    t_end: f64,
) -> Result<CompatibilityReport> {
    let grid = phi.grid();
    let mut report = CompatibilityReport::default();

    let psi0 = psi.sample(grid, 0.0)?;
    for (i, (a, b)) in phi.values().iter().zip(psi0.values()).enumerate() {
        let d = (a - b).abs();
        if d > C1_TOL * (1.0 + a.abs()) {
            report.c1.push(grid.coords(i), d);
        }
    }

    let hess_phi = complex_hessian(phi);
    for (k, m) in hess_phi.mats().iter().enumerate() {
        let t = theta(&hermitian_eigenvalues(m)?);
        if !(t > 0.0 && t < FRAC_PI_2) {
            report.initial_phase.push(grid.coords(grid.interior()[k]), t);
        }
    }

    report.times = if psi.is_time_dependent() && t_end > 0.0 {
        (0..=4).map(|s| t_end * s as f64 / 4.0).collect()
    } else {
        vec![0.0]
    };
    let ring = near_boundary(grid);
    for &t in &report.times {
        let hess = complex_hessian(&psi.sample(grid, t)?);
        for &k in &ring {
            let th = theta(&hermitian_eigenvalues(&hess.mats()[k])?);
            if !(th > theta0 && th < FRAC_PI_2 - theta0) {
                let mut c = grid.coords(grid.interior()[k]);
                c.push(t);
                report.c2.push(c, th);
            }
        }
    }
    Ok(report)
}
