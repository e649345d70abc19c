//! Uniform box grids on R^{2n} = C^n, scalar fields on them and the
//! interior midpoint quadrature used by every functional.
//!
//! Axes are ordered x1, y1, x2, y2, ... and node values are stored
//! row-major with the last axis fastest.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Largest complex dimension handled by the fixed-size matrix kernels.
pub const MAX_DIM: usize = 4;

/// Minimum nodes per axis: one boundary ring on each side plus interior.
pub const MIN_POINTS: usize = 5;

const ISOTROPY_RTOL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct GridSpec {
    n: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
    dims: Vec<usize>,
    h: f64,
    strides: Vec<usize>,
    interior: Arc<Vec<usize>>,
}

impl PartialEq for GridSpec {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.dims == other.dims && self.lo == other.lo && self.hi == other.hi
    }
}

/// Validates a box grid and derives its spacing.
pub fn make_grid(n: usize, lo: &[f64], hi: &[f64], points_per_axis: &[usize]) -> Result<GridSpec> {
    if n == 0 || n > MAX_DIM {
        return Err(Error::Grid(format!(
            "complex dimension {n} outside supported range 1..={MAX_DIM}"
        )));
    }
    let axes = 2 * n;
    if lo.len() != axes || hi.len() != axes || points_per_axis.len() != axes {
        return Err(Error::Grid(format!(
            "expected {axes} entries for lo, hi and points_per_axis, got {}, {}, {}",
            lo.len(),
            hi.len(),
            points_per_axis.len()
        )));
    }
    for k in 0..axes {
        if !(lo[k].is_finite() && hi[k].is_finite()) || hi[k] <= lo[k] {
            return Err(Error::Grid(format!(
                "degenerate box on axis {k}: [{}, {}]",
                lo[k], hi[k]
            )));
        }
        if points_per_axis[k] < MIN_POINTS {
            return Err(Error::Grid(format!(
                "too few points on axis {k}: {} < {MIN_POINTS}",
                points_per_axis[k]
            )));
        }
    }
    let spacing: Vec<f64> = (0..axes)
        .map(|k| (hi[k] - lo[k]) / (points_per_axis[k] - 1) as f64)
        .collect();
    let h = spacing[0];
    for (k, &hk) in spacing.iter().enumerate() {
        if ((hk - h) / h).abs() > ISOTROPY_RTOL {
            return Err(Error::Grid(format!(
                "non-isotropic spacing: axis {k} has h = {hk}, axis 0 has h = {h}"
            )));
        }
    }

    let mut strides = vec![1usize; axes];
    for k in (0..axes - 1).rev() {
        strides[k] = strides[k + 1] * points_per_axis[k + 1];
    }
    let total: usize = points_per_axis.iter().product();
    let interior: Vec<usize> = (0..total)
        .filter(|&idx| {
            (0..axes).all(|k| {
                let i = (idx / strides[k]) % points_per_axis[k];
                i >= 1 && i + 1 < points_per_axis[k]
            })
        })
        .collect();

    Ok(GridSpec {
        n,
        lo: lo.to_vec(),
        hi: hi.to_vec(),
        dims: points_per_axis.to_vec(),
        h,
        strides,
        interior: Arc::new(interior),
    })
}

impl GridSpec {
    /// Cube `[lo, hi]^{2n}` with `points` nodes per axis.
    pub fn cube(n: usize, lo: f64, hi: f64, points: usize) -> Result<Self> {
        let axes = 2 * n;
        make_grid(n, &vec![lo; axes], &vec![hi; axes], &vec![points; axes])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn axes(&self) -> usize {
        2 * self.n
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Volume element `h^{2n}` of the node-sum quadrature.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.axes() as i32)
    }

    /// Flat indices of interior nodes in row-major order.
    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    pub fn axis_index(&self, idx: usize, axis: usize) -> usize {
        (idx / self.strides[axis]) % self.dims[axis]
    }

    pub fn is_interior(&self, idx: usize) -> bool {
        idx < self.len()
            && (0..self.axes()).all(|k| {
                let i = self.axis_index(idx, k);
                i >= 1 && i + 1 < self.dims[k]
            })
    }

    /// True when the node touches the outer ring on at least one axis.
    pub fn is_boundary(&self, idx: usize) -> bool {
        idx < self.len() && !self.is_interior(idx)
    }

    pub fn coords_into(&self, idx: usize, out: &mut [f64]) {
        for k in 0..self.axes() {
            out[k] = self.lo[k] + self.axis_index(idx, k) as f64 * self.h;
        }
    }

    pub fn coords(&self, idx: usize) -> Vec<f64> {
        let mut c = vec![0.0; self.axes()];
        self.coords_into(idx, &mut c);
        c
    }

    /// Flat index of the node with the given per-axis indices.
    pub fn index_of(&self, multi: &[usize]) -> usize {
        multi.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    /// Flat indices of all boundary-layer nodes in row-major order.
    pub fn boundary(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.is_interior(i)).collect()
    }

    pub fn check_same(&self, other: &GridSpec) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("dims {:?} vs {:?}", self.dims, other.dims)))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeKind {
    Interior,
    BoundaryLayer,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeClass {
    pub kinds: Vec<NodeKind>,
}

impl NodeClass {
    pub fn interior_count(&self) -> usize {
        self.kinds.iter().filter(|k| **k == NodeKind::Interior).count()
    }

    pub fn boundary_count(&self) -> usize {
        self.kinds.len() - self.interior_count()
    }
}

pub fn classify_nodes(grid: &GridSpec) -> NodeClass {
    let kinds = (0..grid.len())
        .map(|i| {
            if grid.is_interior(i) {
                NodeKind::Interior
            } else {
                NodeKind::BoundaryLayer
            }
        })
        .collect();
    NodeClass { kinds }
}

/// Real values at every node of a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: GridSpec,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                coords: grid.coords(i),
                value: values[i],
            });
        }
        Ok(ScalarField { grid, values })
    }

    pub fn zeros(grid: &GridSpec) -> Self {
        ScalarField {
            values: vec![0.0; grid.len()],
            grid: grid.clone(),
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Values at interior nodes, in interior order.
    pub fn interior_values(&self) -> Vec<f64> {
        self.grid.interior().iter().map(|&i| self.values[i]).collect()
    }

    /// Copies the boundary-layer values of `other` into `self`.
    pub fn copy_boundary_from(&mut self, other: &ScalarField) -> Result<()> {
        self.grid.check_same(&other.grid)?;
        for i in 0..self.values.len() {
            if !self.grid.is_interior(i) {
                self.values[i] = other.values[i];
            }
        }
        Ok(())
    }

    pub fn sup_abs_diff(&self, other: &ScalarField) -> Result<f64> {
        self.grid.check_same(&other.grid)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

/// Evaluates `f` at every node.
pub fn sample_function<F>(grid: &GridSpec, f: F) -> Result<ScalarField>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let values: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map_init(
            || vec![0.0; grid.axes()],
            |buf, i| {
                grid.coords_into(i, buf);
                f(buf)
            },
        )
        .collect();
    ScalarField::new(grid.clone(), values)
}

const PAIRWISE_LEAF: usize = 32;
const PAIRWISE_PAR: usize = 1 << 14;

/// Pairwise (tree) sum with a split pattern that depends only on the length,
/// so the result is identical for any thread count.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= PAIRWISE_LEAF {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    let (a, b) = xs.split_at(mid);
    if xs.len() >= PAIRWISE_PAR {
        let (sa, sb) = rayon::join(|| pairwise_sum(a), || pairwise_sum(b));
        sa + sb
    } else {
        pairwise_sum(a) + pairwise_sum(b)
    }
}

/// Midpoint quadrature of a per-interior-node integrand (given in interior
/// order): `sum * h^{2n}`.
pub fn integrate_interior_values(grid: &GridSpec, integrand: &[f64]) -> f64 {
    debug_assert_eq!(integrand.len(), grid.interior().len());
    pairwise_sum(integrand) * grid.cell_volume()
}

/// `sum over interior nodes of field * weight * h^{2n}`.
pub fn integrate_interior(field: &ScalarField, weight: &ScalarField) -> Result<f64> {
    field.grid().check_same(weight.grid())?;
    let products: Vec<f64> = field
        .grid()
        .interior()
        .par_iter()
        .map(|&i| field.values[i] * weight.values[i])
        .collect();
    Ok(integrate_interior_values(field.grid(), &products))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(points: usize) -> GridSpec {
        GridSpec::cube(1, -1.0, 1.0, points).unwrap()
    }

    #[test]
    fn spacing_is_derived() {
        assert_eq!(square(33).h(), 0.0625);
        let g = make_grid(2, &[-1.0; 4], &[1.0; 4], &[17; 4]).unwrap();
        assert_eq!(g.h(), 0.125);
    }

    #[test]
    fn rejects_bad_grids() {
        let err = make_grid(1, &[-1.0, -1.0], &[1.0, 1.0], &[3, 3]).unwrap_err();
        assert!(err.to_string().contains("too few points"), "{err}");
        let err = make_grid(1, &[-1.0, -1.0], &[1.0, 1.0], &[33, 17]).unwrap_err();
        assert!(err.to_string().contains("non-isotropic"), "{err}");
        let err = make_grid(1, &[1.0, -1.0], &[1.0, 1.0], &[33, 33]).unwrap_err();
        assert!(err.to_string().contains("degenerate"), "{err}");
    }

    #[test]
    fn classification_per_axis() {
        let g = square(5);
        let c = classify_nodes(&g);
        for i in 0..5 {
            let idx = g.index_of(&[i, 2]);
            let expect = if i == 0 || i == 4 {
                NodeKind::BoundaryLayer
            } else {
                NodeKind::Interior
            };
            assert_eq!(c.kinds[idx], expect);
        }
        assert_eq!(c.interior_count(), 9);
        assert_eq!(classify_nodes(&square(33)).interior_count(), 31 * 31);
        let g4 = GridSpec::cube(2, -1.0, 1.0, 7).unwrap();
        assert_eq!(classify_nodes(&g4).interior_count(), 5usize.pow(4));
        assert_eq!(g4.interior().len(), 5usize.pow(4));
    }

    #[test]
    fn sampling() {
        let g = square(5);
        let z = sample_function(&g, |_| 0.0).unwrap();
        assert!(z.values().iter().all(|&v| v == 0.0));
        let f = sample_function(&g, |x| x[0] * x[0] + x[1] * x[1]).unwrap();
        let idx = g.index_of(&[3, 3]);
        assert_eq!(g.coords(idx), vec![0.5, 0.5]);
        assert_eq!(f.values()[idx], 0.5);
        let g2 = GridSpec::cube(2, -1.0, 1.0, 5).unwrap();
        let f2 = sample_function(&g2, |x| 3f64.sqrt() * x.iter().map(|v| v * v).sum::<f64>()).unwrap();
        assert_eq!(f2.values()[g2.index_of(&[2, 2, 2, 2])], 0.0);
        assert!(sample_function(&g, |_| f64::NAN).is_err());
    }

    #[test]
    fn quadrature_examples() {
        let g = square(33);
        let one = sample_function(&g, |_| 1.0).unwrap();
        assert_eq!(integrate_interior(&one, &one).unwrap(), 3.75390625);
        let zero = ScalarField::zeros(&g);
        assert_eq!(integrate_interior(&zero, &one).unwrap(), 0.0);
        let x = sample_function(&g, |c| c[0]).unwrap();
        assert!(integrate_interior(&x, &one).unwrap().abs() < 1e-12);
        let other = sample_function(&square(17), |_| 1.0).unwrap();
        assert!(matches!(integrate_interior(&one, &other), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn refinement_skin_error_halves() {
        // exact integral of cos(x) cos(y) over [-1,1]^2 is (2 sin 1)^2
        let exact = (2.0 * 1f64.sin()).powi(2);
        let errs: Vec<f64> = [17, 33, 65]
            .iter()
            .map(|&p| {
                let g = square(p);
                let f = sample_function(&g, |c| c[0].cos() * c[1].cos()).unwrap();
                let one = sample_function(&g, |_| 1.0).unwrap();
                (integrate_interior(&f, &one).unwrap() - exact).abs()
            })
            .collect();
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!((1.7..2.3).contains(&ratio), "ratio {ratio}");
        }
    }

    #[test]
    fn pairwise_sum_matches_naive_on_integers() {
        let xs: Vec<f64> = (0..100_000).map(|i| (i % 97) as f64).collect();
        assert_eq!(pairwise_sum(&xs), xs.iter().sum::<f64>());
    }
}
