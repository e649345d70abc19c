//! Discrete complex Hessian by second-order central differences.
//!
//! With `z_j = x_j + i y_j`,
//! `u_{j k̄} = ¼[(∂x_j∂x_k + ∂y_j∂y_k) + i(∂x_j∂y_k − ∂y_j∂x_k)] u`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField};
use crate::matrix::{CMat, C64};

/// One Hermitian matrix per interior node, in the grid's interior order.
#[derive(Clone, Debug)]
pub struct HermitianField {
    grid: GridSpec,
    mats: Vec<CMat>,
}

impl HermitianField {
    pub fn new(grid: GridSpec, mats: Vec<CMat>) -> Result<Self> {
        if mats.len() != grid.interior().len() {
            return Err(Error::GridMismatch(format!(
                "{} matrices for {} interior nodes",
                mats.len(),
                grid.interior().len()
            )));
        }
        Ok(HermitianField { grid, mats })
    }

    /// The same matrix at every interior node.
    pub fn constant(grid: &GridSpec, m: CMat) -> Self {
        HermitianField {
            mats: vec![m; grid.interior().len()],
            grid: grid.clone(),
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn mats(&self) -> &[CMat] {
        &self.mats
    }

    pub fn len(&self) -> usize {
        self.mats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mats.is_empty()
    }

    pub fn max_hermitian_deviation(&self) -> f64 {
        self.mats
            .iter()
            .map(|m| m.hermitian_deviation() / (1.0 + m.frobenius_norm()))
            .fold(0.0, f64::max)
    }
}

#[inline]
fn second_unchecked(v: &[f64], strides: &[usize], inv_h2: f64, a: usize, b: usize, i: usize) -> f64 {
    let sa = strides[a];
    if a == b {
        (v[i + sa] - 2.0 * v[i] + v[i - sa]) * inv_h2
    } else {
        let sb = strides[b];
        (v[i + sa + sb] - v[i + sa - sb] - v[i - sa + sb] + v[i - sa - sb]) * 0.25 * inv_h2
    }
}

/// Second derivative along real axes `axis_a`, `axis_b` at an interior node.
pub fn fd_second(field: &ScalarField, axis_a: usize, axis_b: usize, node: usize) -> Result<f64> {
    let g = field.grid();
    if !g.is_interior(node) {
        return Err(Error::NotInterior(node));
    }
    if axis_a >= g.axes() || axis_b >= g.axes() {
        return Err(Error::Grid(format!(
            "axis out of range: ({axis_a}, {axis_b}) for {} axes",
            g.axes()
        )));
    }
    let h = g.h();
    Ok(second_unchecked(
        field.values(),
        g.strides(),
        1.0 / (h * h),
        axis_a,
        axis_b,
        node,
    ))
}

/// Complex Hessian at one interior node (no interior check).
#[inline]
pub(crate) fn complex_hessian_at(v: &[f64], grid: &GridSpec, node: usize) -> CMat {
    let n = grid.n();
    let strides = grid.strides();
    let inv_h2 = 1.0 / (grid.h() * grid.h());
    let d = |a: usize, b: usize| second_unchecked(v, strides, inv_h2, a, b, node);
    let mut m = CMat::zeros(n);
    for j in 0..n {
        let (xj, yj) = (2 * j, 2 * j + 1);
        m[(j, j)] = C64::new(0.25 * (d(xj, xj) + d(yj, yj)), 0.0);
        for k in j + 1..n {
            let (xk, yk) = (2 * k, 2 * k + 1);
            let re = 0.25 * (d(xj, xk) + d(yj, yk));
            let im = 0.25 * (d(xj, yk) - d(yj, xk));
            m[(j, k)] = C64::new(re, im);
            m[(k, j)] = C64::new(re, -im);
        }
    }
    m
}

pub fn complex_hessian(u: &ScalarField) -> HermitianField {
    let grid = u.grid();
    let v = u.values();
    let mats = grid
        .interior()
        .par_iter()
        .map(|&i| complex_hessian_at(v, grid, i))
        .collect();
    HermitianField {
        grid: grid.clone(),
        mats,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::sample_function;

    #[test]
    fn stencil_exactness() {
        let g = GridSpec::cube(1, -1.0, 1.0, 9).unwrap();
        let node = g.index_of(&[3, 5]);
        let sq = sample_function(&g, |c| c[0] * c[0]).unwrap();
        assert!((fd_second(&sq, 0, 0, node).unwrap() - 2.0).abs() < 1e-12);
        let xy = sample_function(&g, |c| c[0] * c[1]).unwrap();
        assert!((fd_second(&xy, 0, 1, node).unwrap() - 1.0).abs() < 1e-12);
        let lin = sample_function(&g, |c| c[0]).unwrap();
        assert!(fd_second(&lin, 0, 0, node).unwrap().abs() < 1e-12);
        assert!(matches!(fd_second(&lin, 0, 0, 0), Err(Error::NotInterior(0))));
    }

    #[test]
    fn one_dimensional_examples() {
        let g = GridSpec::cube(1, -1.0, 1.0, 17).unwrap();
        let r2 = sample_function(&g, |c| c[0] * c[0] + c[1] * c[1]).unwrap();
        for m in complex_hessian(&r2).mats() {
            assert!((m[(0, 0)] - C64::new(1.0, 0.0)).norm() < 1e-12);
        }
        let re_z2 = sample_function(&g, |c| c[0] * c[0] - c[1] * c[1]).unwrap();
        for m in complex_hessian(&re_z2).mats() {
            assert!(m[(0, 0)].norm() < 1e-12);
        }
    }

    #[test]
    fn product_of_moduli_has_analytic_hessian() {
        // u = |z1|^2 |z2|^2: u_11 = |z2|^2, u_12 = conj(z1) z2, u_22 = |z1|^2
        let g = GridSpec::cube(2, -2.0, 2.0, 9).unwrap();
        let u = sample_function(&g, |c| (c[0] * c[0] + c[1] * c[1]) * (c[2] * c[2] + c[3] * c[3])).unwrap();
        let node = g.index_of(&[6, 4, 6, 4]);
        assert_eq!(g.coords(node), vec![1.0, 0.0, 1.0, 0.0]);
        let hess = complex_hessian(&u);
        let k = g.interior().iter().position(|&i| i == node).unwrap();
        let m = hess.mats()[k];
        // the stencils are exact here: u is quadratic in each real coordinate
        let expect = CMat::from_real_rows(&[&[1.0, 1.0], &[1.0, 1.0]]);
        assert!((m - expect).frobenius_norm() < 1e-10, "{m:?}");
        assert_eq!(m.hermitian_deviation(), 0.0);
    }
}
