//! Calabi-Yau functional, J-functional and the flow dissipation.
//!
//! The top form `(Hess_ℂ u + √−1 ω₀)ⁿ` equals `c_n · det(U + iI)` times
//! Lebesgue measure with `c_n = n!·2ⁿ`. Densities are stored as
//! `det(U + iI)` and `c_n` is applied once per integral.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{integrate_interior_values, GridSpec, ScalarField};
use crate::hessian::{complex_hessian, HermitianField};
use crate::matrix::{CMat, C64};
use crate::spectral::hermitian_eigenvalues;
use crate::spectral::{cot, shifted_det, theta};

/// Default number of Simpson samples in the path parameter.
pub const DEFAULT_S_SAMPLES: usize = 33;

/// `n!·2ⁿ`.
pub fn volume_normalization(n: usize) -> f64 {
    (1..=n).map(|k| 2.0 * k as f64).product()
}

/// `det(U + iI)`.
pub fn density(u: &CMat) -> C64 {
    shifted_det(u)
}

/// `|Im(e^{−iθ̂} d) + sin θ̂ (cot Θ − cot θ̂) Im d| / |d|` for `d = det(U + iI)`;
/// both sides scale with `d`.
pub fn density_identity_residual(u: &CMat, hat_theta: f64) -> Result<f64> {
    let d = density(u);
    let rotated = (C64::from_polar(1.0, -hat_theta) * d).im;
    let cot_theta = cot(theta(&hermitian_eigenvalues(u)?));
    let rhs = -hat_theta.sin() * (cot_theta - cot(hat_theta)) * d.im;
    Ok((rotated - rhs).abs() / d.norm())
}

/// Path `v(s) = φ + g(s)(ψ − φ)` from `φ` to `ψ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Path {
    /// `g(s) = s`.
    Linear,
    /// `g(s) = s²(3 − 2s)`.
    Smoothstep,
}

impl Path {
    fn g(self, s: f64) -> f64 {
        match self {
            Path::Linear => s,
            Path::Smoothstep => s * s * (3.0 - 2.0 * s),
        }
    }

    fn dg(self, s: f64) -> f64 {
        match self {
            Path::Linear => 1.0,
            Path::Smoothstep => 6.0 * s * (1.0 - s),
        }
    }
}

/// Composite Simpson nodes and weights on [0, 1].
fn simpson(samples: usize) -> Result<Vec<(f64, f64)>> {
    if samples < 3 || samples.is_multiple_of(2) {
        return Err(Error::config(
            "s_samples",
            format!("Simpson rule needs an odd sample count >= 3, got {samples}"),
        ));
    }
    let m = samples - 1;
    let h = 1.0 / m as f64;
    Ok((0..samples)
        .map(|k| {
            let w = if k == 0 || k == m {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            (k as f64 * h, w * h / 3.0)
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CyValue {
    pub value: C64,
    /// `ψ` and `φ` disagree on the boundary layer, so the path leaves the
    /// admissible class; the number is still computed.
    pub outside_admissible: bool,
    /// `∫ (|Re| + |Im|)` of the integrand: the scale that sets the rounding
    /// error of `value`.
    pub magnitude: f64,
}

/// `CY_φ(·)` with the reference potential's Hessian and density cached.
#[derive(Clone, Debug)]
pub struct CyFunctional {
    phi: ScalarField,
    hess_phi: HermitianField,
    dens_phi: Vec<C64>,
    nodes: Vec<(f64, f64)>,
    exact3: Vec<(f64, f64)>,
}

impl CyFunctional {
    pub fn new(phi: &ScalarField, s_samples: usize) -> Result<Self> {
        let hess_phi = complex_hessian(phi);
        let dens_phi = hess_phi.mats().par_iter().map(density).collect();
        Ok(CyFunctional {
            phi: phi.clone(),
            hess_phi,
            dens_phi,
            nodes: simpson(s_samples)?,
            exact3: simpson(3)?,
        })
    }

    pub fn reference(&self) -> &ScalarField {
        &self.phi
    }

    pub fn grid(&self) -> &GridSpec {
        self.phi.grid()
    }

    pub fn eval(&self, psi: &ScalarField) -> Result<CyValue> {
        self.eval_with(psi, &complex_hessian(psi), Path::Linear)
    }

    /// `CY_φ(ψ)` along `path`, reusing a precomputed `Hess_ℂ ψ`.
    pub fn eval_with(&self, psi: &ScalarField, hess_psi: &HermitianField, path: Path) -> Result<CyValue> {
        let grid = self.phi.grid();
        grid.check_same(psi.grid())?;
        let n = grid.n();
        // along the linear path the density is a polynomial of degree n in s,
        // which three-point Simpson already integrates exactly for n <= 3
        let nodes = if path == Path::Linear && n <= 3 {
            &self.exact3
        } else {
            &self.nodes
        };
        let phi_v = self.phi.values();
        let psi_v = psi.values();
        let outside_admissible = (0..grid.len())
            .filter(|&i| !grid.is_interior(i))
            .any(|i| (phi_v[i] - psi_v[i]).abs() > 1e-12 * (1.0 + phi_v[i].abs()));

        let per_node: Vec<C64> = grid
            .interior()
            .par_iter()
            .enumerate()
            .map(|(k, &idx)| {
                let w = psi_v[idx] - phi_v[idx];
                let a = self.hess_phi.mats()[k];
                let dw = hess_psi.mats()[k] - a;
                let d0 = self.dens_phi[k];
                let mut path_term = C64::new(0.0, 0.0);
                if w != 0.0 {
                    for &(s, wt) in nodes {
                        let v = a + dw.scale(path.g(s));
                        let d = density(&v);
                        let in_branch = if n <= 2 {
                            d.im > 0.0
                        } else {
                            let t = theta(&hermitian_eigenvalues(&v)?);
                            t > 0.0 && t < std::f64::consts::PI
                        };
                        if !in_branch {
                            let mut c = grid.coords(idx);
                            c.push(s);
                            return Err(Error::PhaseBranch {
                                coords: c,
                                theta: d.arg(),
                            });
                        }
                        path_term += (d - d0) * (wt * path.dg(s));
                    }
                }
                Ok(path_term * w + d0 * psi_v[idx])
            })
            .collect::<Result<_>>()?;

        let re: Vec<f64> = per_node.iter().map(|c| c.re).collect();
        let im: Vec<f64> = per_node.iter().map(|c| c.im).collect();
        let cn = volume_normalization(n);
        let abs: Vec<f64> = per_node.iter().map(|c| c.re.abs() + c.im.abs()).collect();
        Ok(CyValue {
            magnitude: cn * integrate_interior_values(grid, &abs),
            value: C64::new(
                cn * integrate_interior_values(grid, &re),
                cn * integrate_interior_values(grid, &im),
            ),
            outside_admissible,
        })
    }
}

pub fn cy_functional(phi: &ScalarField, psi: &ScalarField, s_samples: usize) -> Result<CyValue> {
    CyFunctional::new(phi, s_samples)?.eval(psi)
}

/// `J = Im(e^{−iθ̂} CY) = cos θ̂ Im CY − sin θ̂ Re CY`.
pub fn j_from_cy(cy: C64, hat_theta: f64) -> f64 {
    hat_theta.cos() * cy.im - hat_theta.sin() * cy.re
}

pub fn j_functional(phi: &ScalarField, u: &ScalarField, hat_theta: f64, s_samples: usize) -> Result<f64> {
    Ok(j_from_cy(cy_functional(phi, u, s_samples)?.value, hat_theta))
}

/// `|CY along the linear path − CY along the smoothstep path|`.
pub fn path_independence_check(phi: &ScalarField, psi: &ScalarField, s_samples: usize) -> Result<f64> {
    let cy = CyFunctional::new(phi, s_samples)?;
    let hess = complex_hessian(psi);
    let a = cy.eval_with(psi, &hess, Path::Linear)?.value;
    let b = cy.eval_with(psi, &hess, Path::Smoothstep)?.value;
    Ok((a - b).norm())
}

/// Relative mismatch between the central difference of `ε ↦ CY_φ(ψ + εη)`
/// and `∫ η · density(ψ) · c_n`.
pub fn variation_check(
    phi: &ScalarField,
    psi: &ScalarField,
    eta: &ScalarField,
    s_samples: usize,
    eps: f64,
) -> Result<f64> {
    let grid = psi.grid();
    grid.check_same(eta.grid())?;
    if let Some(i) = (0..grid.len()).find(|&i| !grid.is_interior(i) && eta.values()[i] != 0.0) {
        return Err(Error::config(
            "eta",
            format!(
                "variation must vanish on the boundary layer, found {} at {:?}",
                eta.values()[i],
                grid.coords(i)
            ),
        ));
    }
    let cy = CyFunctional::new(phi, s_samples)?;
    let shifted = |sign: f64| -> Result<C64> {
        let v: Vec<f64> = psi
            .values()
            .iter()
            .zip(eta.values())
            .map(|(p, e)| p + sign * eps * e)
            .collect();
        Ok(cy.eval(&ScalarField::new(grid.clone(), v)?)?.value)
    };
    let fd = (shifted(1.0)? - shifted(-1.0)?) / (2.0 * eps);

    let hess = complex_hessian(psi);
    let per_node: Vec<C64> = grid
        .interior()
        .par_iter()
        .zip(hess.mats().par_iter())
        .map(|(&idx, m)| density(m) * eta.values()[idx])
        .collect();
    let cn = volume_normalization(grid.n());
    let re: Vec<f64> = per_node.iter().map(|c| c.re).collect();
    let im: Vec<f64> = per_node.iter().map(|c| c.im).collect();
    let exact = C64::new(
        cn * integrate_interior_values(grid, &re),
        cn * integrate_interior_values(grid, &im),
    );
    let diff = (fd - exact).norm();
    if diff == 0.0 {
        return Ok(0.0);
    }
    Ok(diff / exact.norm().max(fd.norm()))
}

/// `S = ∫ (∂ₜu)² sin θ̂ Im(density) c_n`, with `dt_u` in interior order.
pub fn dissipation(hess_u: &HermitianField, dt_u: &[f64], hat_theta: f64) -> f64 {
    let grid = hess_u.grid();
    let sin_hat = hat_theta.sin();
    let integrand: Vec<f64> = hess_u
        .mats()
        .par_iter()
        .zip(dt_u.par_iter())
        .map(|(m, &d)| d * d * sin_hat * density(m).im)
        .collect();
    volume_normalization(grid.n()) * integrate_interior_values(grid, &integrand)
}

/// Functional values attached to one state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FunctionalReport {
    pub cy: C64,
    pub j: f64,
    pub s: f64,
    pub djdt_fd: f64,
    pub identity_residual: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradientFlowCheck {
    pub max_relative_residual: f64,
    /// Rows where the comparison was made.
    pub samples_used: usize,
    /// Rows skipped because `S` was below the resolution of the J differences.
    pub samples_below_roundoff: usize,
    pub per_sample: Vec<FunctionalReport>,
}

/// Central differences of `J` against `−S` at interior rows.
///
/// A row is compared only when `S · Δt` exceeds `1e3 · ε` times the scale of
/// the two `J` values, so that rounding in their difference stays below a
/// percent. `j_scale` is the magnitude of the sums behind each `J` (see
/// [`CyValue::magnitude`]); `|J|` is used where it is larger.
pub fn gradient_flow_check(t: &[f64], j: &[f64], s: &[f64], j_scale: &[f64]) -> GradientFlowCheck {
    let mut out = GradientFlowCheck {
        max_relative_residual: 0.0,
        samples_used: 0,
        samples_below_roundoff: 0,
        per_sample: Vec::new(),
    };
    if t.len() < 3 {
        return out;
    }
    for k in 1..t.len() - 1 {
        let span = t[k + 1] - t[k - 1];
        if span <= 0.0 {
            continue;
        }
        let djdt = (j[k + 1] - j[k - 1]) / span;
        let scale = |i: usize| j[i].abs().max(j_scale.get(i).copied().unwrap_or(0.0));
        let floor = 1e3 * f64::EPSILON * (scale(k + 1) + scale(k - 1));
        if s[k] * span <= floor {
            out.samples_below_roundoff += 1;
            continue;
        }
        let rel = (djdt + s[k]).abs() / s[k];
        out.samples_used += 1;
        out.max_relative_residual = out.max_relative_residual.max(rel);
        out.per_sample.push(FunctionalReport {
            cy: C64::new(f64::NAN, f64::NAN),
            j: j[k],
            s: s[k],
            djdt_fd: djdt,
            identity_residual: rel,
        });
    }
    out
}
