//! Hermitian eigendecomposition and the Lagrangian phase calculus.
//!
//! `Θ(λ) = Σ arccot λ_i` with `arccot : ℝ → (0, π)`. The operator
//! `cot Θ` is evaluated from eigenvalues; the determinant ratio
//! `Re det(U + iI) / Im det(U + iI)` is an independent second route.

use std::f64::consts::FRAC_PI_2;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{GridSpec, MAX_DIM};
use crate::hessian::HermitianField;
use crate::matrix::{CMat, C64};

const HERMITIAN_TOL: f64 = 1e-10;
const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 64;
const BRANCH_TOL: f64 = 1e-14;

/// Branch of arccot with values in (0, π), continuous across 0.
#[inline]
pub fn arccot(t: f64) -> f64 {
    FRAC_PI_2 - t.atan()
}

pub fn theta(lambda: &[f64]) -> f64 {
    lambda.iter().map(|&l| arccot(l)).sum()
}

#[inline]
pub fn cot(x: f64) -> f64 {
    x.cos() / x.sin()
}

/// `cot Θ(λ)` from eigenvalues.
pub fn cot_theta(lambda: &[f64]) -> f64 {
    cot(theta(lambda))
}

fn check_hermitian(u: &CMat) -> Result<()> {
    let dev = u.hermitian_deviation();
    if dev > HERMITIAN_TOL * (1.0 + u.frobenius_norm()) {
        return Err(Error::NotHermitian(dev));
    }
    Ok(())
}

/// Real eigenvalues of a Hermitian matrix, sorted descending.
pub fn hermitian_eigenvalues(u: &CMat) -> Result<Vec<f64>> {
    check_hermitian(u)?;
    match u.dim() {
        1 => Ok(vec![u[(0, 0)].re]),
        2 => {
            let a = u[(0, 0)].re;
            let b = u[(1, 1)].re;
            let c = u[(0, 1)];
            let mean = 0.5 * (a + b);
            let r = (0.25 * (a - b) * (a - b) + c.norm_sqr()).sqrt();
            Ok(vec![mean + r, mean - r])
        }
        _ => Ok(eigh(u)?.values.to_vec()),
    }
}

/// Eigenvalues (descending) with orthonormal eigenvectors as the columns of
/// `vectors`, so that `U = Q diag(λ) Q*`.
#[derive(Clone, Copy, Debug)]
pub struct Eigh {
    pub values: Spectrum,
    pub vectors: CMat,
}

/// Eigenvalues in a fixed-capacity inline buffer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Spectrum {
    len: usize,
    data: [f64; MAX_DIM],
}

impl Spectrum {
    pub fn as_slice(&self) -> &[f64] {
        &self.data[..self.len]
    }
}

impl std::ops::Deref for Spectrum {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        self.as_slice()
    }
}

impl From<Spectrum> for Vec<f64> {
    fn from(a: Spectrum) -> Vec<f64> {
        a.as_slice().to_vec()
    }
}

/// Cyclic complex Jacobi with accumulated rotations.
pub fn eigh(u: &CMat) -> Result<Eigh> {
    check_hermitian(u)?;
    let n = u.dim();
    let mut a = *u;
    let mut q = CMat::identity(n);
    let scale = u.frobenius_norm();
    let mut sweeps = 0;
    while n > 1 && a.off_diagonal_norm() > JACOBI_TOL * scale {
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(Error::EigenFailure(sweeps));
        }
        sweeps += 1;
        for p in 0..n - 1 {
            for r in p + 1..n {
                rotate(&mut a, &mut q, p, r);
            }
        }
    }

    let mut order: [usize; MAX_DIM] = [0, 1, 2, 3];
    order[..n].sort_by(|&i, &j| a[(j, j)].re.total_cmp(&a[(i, i)].re));
    let mut values = Spectrum {
        len: n,
        data: [0.0; MAX_DIM],
    };
    let mut vectors = CMat::zeros(n);
    for (col, &src) in order[..n].iter().enumerate() {
        values.data[col] = a[(src, src)].re;
        for row in 0..n {
            vectors[(row, col)] = q[(row, src)];
        }
    }
    Ok(Eigh { values, vectors })
}

/// One unitary rotation annihilating `a[(p, r)]`; `J = diag-phase * real rotation`.
fn rotate(a: &mut CMat, q: &mut CMat, p: usize, r: usize) {
    let apr = a[(p, r)];
    let g = apr.norm();
    if g == 0.0 {
        return;
    }
    let n = a.dim();
    let e = apr / g;
    let tau = (a[(r, r)].re - a[(p, p)].re) / (2.0 * g);
    let t = if tau >= 0.0 {
        1.0 / (tau + (1.0 + tau * tau).sqrt())
    } else {
        -1.0 / (-tau + (1.0 + tau * tau).sqrt())
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;
    let ec = e.conj();

    // columns: B = A J
    for k in 0..n {
        let akp = a[(k, p)];
        let akr = a[(k, r)];
        a[(k, p)] = akp * c - akr * (s * ec);
        a[(k, r)] = akp * s + akr * (c * ec);
        let qkp = q[(k, p)];
        let qkr = q[(k, r)];
        q[(k, p)] = qkp * c - qkr * (s * ec);
        q[(k, r)] = qkp * s + qkr * (c * ec);
    }
    // rows: A' = J* B
    for k in 0..n {
        let bpk = a[(p, k)];
        let brk = a[(r, k)];
        a[(p, k)] = bpk * c - brk * (s * e);
        a[(r, k)] = bpk * s + brk * (c * e);
    }
    a[(p, r)] = C64::new(0.0, 0.0);
    a[(r, p)] = C64::new(0.0, 0.0);
    a[(p, p)] = C64::new(a[(p, p)].re, 0.0);
    a[(r, r)] = C64::new(a[(r, r)].re, 0.0);
}

/// `det(U + iI)`.
pub fn shifted_det(u: &CMat) -> C64 {
    u.shifted(C64::new(0.0, 1.0)).det()
}

/// `cot Θ(U)` via the determinant ratio.
pub fn cot_theta_det(u: &CMat) -> Result<f64> {
    let d = shifted_det(u);
    if d.im.abs() < BRANCH_TOL * d.norm() {
        return Err(Error::PhaseAtBranch {
            im: d.im.abs(),
            abs: d.norm(),
        });
    }
    Ok(d.re / d.im)
}

/// Phase quantities of one Hermitian matrix.
#[derive(Clone, Copy, Debug)]
pub struct NodePhase {
    pub lambda: Spectrum,
    pub theta: f64,
    pub cot_theta: f64,
    /// Derivative of `cot Θ` with respect to the matrix entries.
    pub f: CMat,
    pub f_trace: f64,
}

impl NodePhase {
    pub fn lambda_min(&self) -> f64 {
        self.lambda[self.lambda.len - 1]
    }

    pub fn in_branch(&self) -> bool {
        self.theta > 0.0 && self.theta < std::f64::consts::PI
    }
}

/// Eigenvalues, phase and the linearization `F = Q diag((1+cot²Θ)/(1+λ_j²)) Q*`.
pub fn node_phase(u: &CMat) -> Result<NodePhase> {
    if u.dim() <= 2 {
        return node_phase_small(u);
    }
    let Eigh { values, vectors } = eigh(u)?;
    let theta = theta(&values);
    let cot_theta = cot(theta);
    let num = 1.0 + cot_theta * cot_theta;
    let n = u.dim();
    let mut diag = [0.0; MAX_DIM];
    let mut f_trace = 0.0;
    for j in 0..n {
        diag[j] = num / (1.0 + values[j] * values[j]);
        f_trace += diag[j];
    }
    let mut f = CMat::zeros(n);
    for i in 0..n {
        for k in i..n {
            let mut s = C64::new(0.0, 0.0);
            for j in 0..n {
                s += vectors[(i, j)] * diag[j] * vectors[(k, j)].conj();
            }
            if i == k {
                s.im = 0.0;
            }
            f[(i, k)] = s;
            f[(k, i)] = s.conj();
        }
    }
    Ok(NodePhase {
        lambda: values,
        theta,
        cot_theta,
        f,
        f_trace,
    })
}

/// Closed form for n ≤ 2, using `Q diag(1/(1+λ²)) Q* = (I + U²)⁻¹`.
fn node_phase_small(u: &CMat) -> Result<NodePhase> {
    check_hermitian(u)?;
    let n = u.dim();
    let mut lambda = Spectrum {
        len: n,
        data: [0.0; MAX_DIM],
    };
    let f;
    let cot_theta;
    let theta_v;
    if n == 1 {
        let l = u[(0, 0)].re;
        lambda.data[0] = l;
        theta_v = arccot(l);
        cot_theta = cot(theta_v);
        f = CMat::from_diag(&[(1.0 + cot_theta * cot_theta) / (1.0 + l * l)]);
    } else {
        let a = u[(0, 0)].re;
        let b = u[(1, 1)].re;
        let c = u[(0, 1)];
        let mean = 0.5 * (a + b);
        let r = (0.25 * (a - b) * (a - b) + c.norm_sqr()).sqrt();
        lambda.data[0] = mean + r;
        lambda.data[1] = mean - r;
        theta_v = theta(&lambda);
        cot_theta = cot(theta_v);
        let num = 1.0 + cot_theta * cot_theta;
        // M = I + U², Hermitian positive definite
        let c2 = c.norm_sqr();
        let m00 = 1.0 + a * a + c2;
        let m11 = 1.0 + b * b + c2;
        let m01 = c * (a + b);
        let det = m00 * m11 - m01.norm_sqr();
        let k = num / det;
        f = CMat::from_rows(&[
            &[C64::new(k * m11, 0.0), -m01 * k],
            &[-m01.conj() * k, C64::new(k * m00, 0.0)],
        ]);
    }
    let f_trace = (0..n).map(|j| f[(j, j)].re).sum();
    Ok(NodePhase {
        lambda,
        theta: theta_v,
        cot_theta,
        f,
        f_trace,
    })
}

/// `F` and its trace; requires `Θ(U) ∈ (0, π)`.
pub fn linearization(u: &CMat) -> Result<(CMat, f64)> {
    let p = node_phase(u)?;
    if !p.in_branch() {
        return Err(Error::PhaseBranch {
            coords: Vec::new(),
            theta: p.theta,
        });
    }
    Ok((p.f, p.f_trace))
}

/// Phase data at every interior node.
#[derive(Clone, Debug)]
pub struct PhaseField {
    grid: GridSpec,
    nodes: Vec<NodePhase>,
}

impl PhaseField {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn nodes(&self) -> &[NodePhase] {
        &self.nodes
    }

    pub fn theta_range(&self) -> (f64, f64) {
        self.nodes
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                (lo.min(p.theta), hi.max(p.theta))
            })
    }

    pub fn lambda_min(&self) -> f64 {
        self.nodes
            .iter()
            .map(NodePhase::lambda_min)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn f_trace_range(&self) -> (f64, f64) {
        self.nodes
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                (lo.min(p.f_trace), hi.max(p.f_trace))
            })
    }

    /// First interior node whose phase leaves `(guard, π - guard)`.
    pub fn branch_violation(&self, guard: f64) -> Option<(usize, f64)> {
        let upper = std::f64::consts::PI - guard;
        self.nodes
            .iter()
            .position(|p| !(p.theta > guard && p.theta < upper))
            .map(|k| (self.grid.interior()[k], self.nodes[k].theta))
    }
}

pub fn phase_data(hess: &HermitianField) -> Result<PhaseField> {
    let grid = hess.grid();
    let nodes = hess
        .mats()
        .par_iter()
        .zip(grid.interior().par_iter())
        .map(|(m, &idx)| {
            node_phase(m).map_err(|e| match e {
                Error::NotHermitian(dev) => Error::Invariant {
                    t: f64::NAN,
                    detail: format!("non-Hermitian Hessian (deviation {dev:.3e}) at {:?}", grid.coords(idx)),
                },
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PhaseField {
        grid: grid.clone(),
        nodes,
    })
}
