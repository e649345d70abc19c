//! Small dense complex matrices (dimension at most [`MAX_DIM`]), stored
//! inline so the per-node kernels never allocate.

use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;

use crate::grid::MAX_DIM;

pub type C64 = Complex64;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CMat {
    n: usize,
    a: [[C64; MAX_DIM]; MAX_DIM],
}

impl CMat {
    pub fn zeros(n: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&n), "matrix dimension {n} out of range");
        CMat {
            n,
            a: [[ZERO; MAX_DIM]; MAX_DIM],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.a[i][i] = ONE;
        }
        m
    }

    pub fn from_diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, &v) in d.iter().enumerate() {
            m.a[i][i] = C64::new(v, 0.0);
        }
        m
    }

    /// Builds from row-major entries; panics if `rows` is not square.
    pub fn from_rows(rows: &[&[C64]]) -> Self {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), n, "row {i} has wrong length");
            m.a[i][..n].copy_from_slice(r);
        }
        m
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), n, "row {i} has wrong length");
            for j in 0..n {
                m.a[i][j] = C64::new(r[j], 0.0);
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn adjoint(&self) -> Self {
        let mut m = Self::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                m.a[i][j] = self.a[j][i].conj();
            }
        }
        m
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut m = *self;
        for i in 0..self.n {
            for j in 0..self.n {
                m.a[i][j] *= s;
            }
        }
        m
    }

    pub fn trace(&self) -> C64 {
        (0..self.n).map(|i| self.a[i][i]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                s += self.a[i][j].norm_sqr();
            }
        }
        s.sqrt()
    }

    /// Max entrywise |A - A*|.
    pub fn hermitian_deviation(&self) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..self.n {
            for j in i..self.n {
                d = d.max((self.a[i][j] - self.a[j][i].conj()).norm_sqr());
            }
        }
        d.sqrt()
    }

    /// Frobenius norm of the strictly upper triangle.
    pub fn off_diagonal_norm(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            for j in i + 1..self.n {
                s += self.a[i][j].norm_sqr();
            }
        }
        s.sqrt()
    }

    /// `Re tr(self * other)`; for Hermitian arguments this is the real
    /// Frobenius pairing.
    pub fn real_pairing(&self, other: &CMat) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                s += (self.a[i][j] * other.a[j][i]).re;
            }
        }
        s
    }

    /// `self + shift * I`.
    pub fn shifted(&self, shift: C64) -> Self {
        let mut m = *self;
        for i in 0..self.n {
            m.a[i][i] += shift;
        }
        m
    }

    /// Determinant; closed forms for n <= 2, LU with partial pivoting above.
    pub fn det(&self) -> C64 {
        match self.n {
            1 => self.a[0][0],
            2 => self.a[0][0] * self.a[1][1] - self.a[0][1] * self.a[1][0],
            n => {
                let mut m = self.a;
                let mut det = ONE;
                for k in 0..n {
                    let p = (k..n)
                        .max_by(|&i, &j| m[i][k].norm().total_cmp(&m[j][k].norm()))
                        .unwrap();
                    if m[p][k] == ZERO {
                        return ZERO;
                    }
                    if p != k {
                        m.swap(p, k);
                        det = -det;
                    }
                    let pivot = m[k][k];
                    det *= pivot;
                    for i in k + 1..n {
                        let f = m[i][k] / pivot;
                        for j in k + 1..n {
                            let t = m[k][j];
                            m[i][j] -= f * t;
                        }
                    }
                }
                det
            }
        }
    }

    /// Leading principal submatrix of dimension `n - 1`.
    pub fn leading_minor(&self) -> Self {
        assert!(self.n >= 2);
        let mut m = Self::zeros(self.n - 1);
        for i in 0..self.n - 1 {
            for j in 0..self.n - 1 {
                m.a[i][j] = self.a[i][j];
            }
        }
        m
    }

    /// `v v*` for a column vector `v`.
    pub fn outer(v: &[C64]) -> Self {
        let mut m = Self::zeros(v.len());
        for i in 0..v.len() {
            for j in 0..v.len() {
                m.a[i][j] = v[i] * v[j].conj();
            }
        }
        m
    }
}

impl Index<(usize, usize)> for CMat {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        debug_assert!(i < self.n && j < self.n);
        &self.a[i][j]
    }
}

impl IndexMut<(usize, usize)> for CMat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        debug_assert!(i < self.n && j < self.n);
        &mut self.a[i][j]
    }
}

impl Mul for CMat {
    type Output = CMat;
    fn mul(self, rhs: CMat) -> CMat {
        debug_assert_eq!(self.n, rhs.n);
        let mut m = CMat::zeros(self.n);
        for i in 0..self.n {
            for k in 0..self.n {
                let aik = self.a[i][k];
                for j in 0..self.n {
                    m.a[i][j] += aik * rhs.a[k][j];
                }
            }
        }
        m
    }
}

impl Add for CMat {
    type Output = CMat;
    fn add(self, rhs: CMat) -> CMat {
        let mut m = self;
        for i in 0..self.n {
            for j in 0..self.n {
                m.a[i][j] += rhs.a[i][j];
            }
        }
        m
    }
}

impl Sub for CMat {
    type Output = CMat;
    fn sub(self, rhs: CMat) -> CMat {
        let mut m = self;
        for i in 0..self.n {
            for j in 0..self.n {
                m.a[i][j] -= rhs.a[i][j];
            }
        }
        m
    }
}
