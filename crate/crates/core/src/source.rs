//! Space-time data sources for initial, boundary and subsolution fields.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{sample_function, GridSpec, ScalarField};
use crate::matrix::{CMat, C64};

/// Step for the central difference in `t` used by [`FieldSource::time_derivative`].
const DT_FD: f64 = 1e-6;

pub trait FieldSource: Send + Sync + fmt::Debug {
    /// Value at real coordinates `x` (length 2n) and time `t`.
    fn eval(&self, x: &[f64], t: f64) -> f64;

    fn is_time_dependent(&self) -> bool;

    fn sample(&self, grid: &GridSpec, t: f64) -> Result<ScalarField> {
        sample_function(grid, |x| self.eval(x, t))
    }

    /// `∂ₜ` of the source at a point; zero for stationary sources.
    fn time_derivative(&self, x: &[f64], t: f64) -> f64 {
        if !self.is_time_dependent() {
            return 0.0;
        }
        let lo = (t - DT_FD).max(0.0);
        let hi = t + DT_FD;
        (self.eval(x, hi) - self.eval(x, lo)) / (hi - lo)
    }
}

/// Closure-backed source.
pub struct FnSource<F> {
    f: F,
    time_dependent: bool,
}

impl<F> FnSource<F>
where
    F: Fn(&[f64], f64) -> f64 + Send + Sync,
{
    pub fn new(f: F) -> Self {
        FnSource {
            f,
            time_dependent: true,
        }
    }

    pub fn stationary(f: F) -> Self {
        FnSource {
            f,
            time_dependent: false,
        }
    }
}

impl<F> fmt::Debug for FnSource<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnSource")
            .field("time_dependent", &self.time_dependent)
            .finish()
    }
}

impl<F> FieldSource for FnSource<F>
where
    F: Fn(&[f64], f64) -> f64 + Send + Sync,
{
    fn eval(&self, x: &[f64], t: f64) -> f64 {
        (self.f)(x, t)
    }

    fn is_time_dependent(&self) -> bool {
        self.time_dependent
    }
}

/// `u = Σ A_{jk} z_j z̄_k + b·x + c` with Hermitian `A`; `Hess_ℂ u ≡ A`.
#[derive(Clone, Debug, PartialEq)]
pub struct Quadratic {
    a: CMat,
    linear: Vec<f64>,
    constant: f64,
}

impl Quadratic {
    pub fn new(a: CMat, linear: Vec<f64>, constant: f64) -> Result<Self> {
        let dev = a.hermitian_deviation();
        if dev > 1e-12 * (1.0 + a.frobenius_norm()) {
            return Err(Error::NotHermitian(dev));
        }
        if linear.len() != 2 * a.dim() {
            return Err(Error::Grid(format!(
                "affine part needs {} coefficients, got {}",
                2 * a.dim(),
                linear.len()
            )));
        }
        Ok(Quadratic { a, linear, constant })
    }

    /// `scale · Σ|z_j|²`.
    pub fn isotropic(n: usize, scale: f64) -> Self {
        Quadratic {
            a: CMat::identity(n).scale(scale),
            linear: vec![0.0; 2 * n],
            constant: 0.0,
        }
    }

    pub fn matrix(&self) -> &CMat {
        &self.a
    }
}

impl FieldSource for Quadratic {
    fn eval(&self, x: &[f64], _t: f64) -> f64 {
        let n = self.a.dim();
        let mut s = 0.0;
        for j in 0..n {
            let zj = C64::new(x[2 * j], x[2 * j + 1]);
            for k in 0..n {
                let zk = C64::new(x[2 * k], x[2 * k + 1]);
                s += (self.a[(j, k)] * zj * zk.conj()).re;
            }
        }
        let lin: f64 = self.linear.iter().zip(x).map(|(b, xi)| b * xi).sum();
        s + lin + self.constant
    }

    fn is_time_dependent(&self) -> bool {
        false
    }
}

/// A fixed node field, for sampled snapshots. Only valid on its own grid.
#[derive(Clone, Debug)]
pub struct Sampled {
    field: Arc<ScalarField>,
}

impl Sampled {
    pub fn new(field: ScalarField) -> Self {
        Sampled { field: Arc::new(field) }
    }
}

impl FieldSource for Sampled {
    fn eval(&self, x: &[f64], _t: f64) -> f64 {
        // nearest node; exact on the snapshot's own grid
        let g = self.field.grid();
        let mut idx = 0;
        for k in 0..g.axes() {
            let i = ((x[k] - g.lo()[k]) / g.h()).round();
            let i = i.clamp(0.0, (g.dims()[k] - 1) as f64) as usize;
            idx += i * g.strides()[k];
        }
        self.field.values()[idx]
    }

    fn is_time_dependent(&self) -> bool {
        false
    }

    fn sample(&self, grid: &GridSpec, _t: f64) -> Result<ScalarField> {
        if grid.dims() != self.field.grid().dims() {
            return Err(Error::GridMismatch(format!(
                "sampled field has dims {:?}, problem grid has {:?}",
                self.field.grid().dims(),
                grid.dims()
            )));
        }
        ScalarField::new(grid.clone(), self.field.values().to_vec())
    }
}

/// `base + amplitude · Π_k (1 − s_k²)²` with `s_k` the coordinate rescaled
/// to [−1, 1] on the box; vanishes with its gradient on the boundary.
#[derive(Debug)]
pub struct Bumped<S> {
    pub base: S,
    pub amplitude: f64,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

pub fn bump(x: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    x.iter()
        .zip(lo.iter().zip(hi))
        .map(|(&xi, (&l, &h))| {
            let s = (2.0 * xi - l - h) / (h - l);
            let w = 1.0 - s * s;
            w * w
        })
        .product()
}

impl<S: FieldSource> FieldSource for Bumped<S> {
    fn eval(&self, x: &[f64], t: f64) -> f64 {
        self.base.eval(x, t) + self.amplitude * bump(x, &self.lo, &self.hi)
    }

    fn is_time_dependent(&self) -> bool {
        self.base.is_time_dependent()
    }
}

/// An arithmetic expression in `x1, y1, …, xn, yn` and `t`.
///
/// Integer literals are read as floats, so `1/2` is one half. Available
/// functions: `sin cos tan exp ln sqrt abs tanh sinh cosh atan`, plus the
/// constant `pi`.
#[derive(Clone, Debug)]
pub struct Expression {
    text: String,
    tree: evalexpr::Node,
    n: usize,
    time_dependent: bool,
}

const EXPR_FUNCTIONS: [(&str, fn(f64) -> f64); 11] = [
    ("sin", f64::sin),
    ("cos", f64::cos),
    ("tan", f64::tan),
    ("exp", f64::exp),
    ("ln", f64::ln),
    ("sqrt", f64::sqrt),
    ("abs", f64::abs),
    ("tanh", f64::tanh),
    ("sinh", f64::sinh),
    ("cosh", f64::cosh),
    ("atan", f64::atan),
];

/// Appends `.0` to bare integer literals.
fn floatify(text: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len() + 8);
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let prev_ident = i > 0 && (chars[i - 1].is_alphanumeric() || chars[i - 1] == '_' || chars[i - 1] == '.');
        if c.is_ascii_digit() && !prev_ident {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let mut is_float = false;
            if i < chars.len() && chars[i] == '.' {
                is_float = true;
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    is_float = true;
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            out.extend(&chars[start..i]);
            if !is_float {
                out.push_str(".0");
            }
        } else {
            out.push(c);
            i += 1;
        }
    }
    out
}

struct ExprContext {
    names: Vec<(String, evalexpr::Value)>,
}

impl evalexpr::Context for ExprContext {
    type NumericTypes = evalexpr::DefaultNumericTypes;

    fn get_value(&self, identifier: &str) -> Option<&evalexpr::Value> {
        self.names.iter().find(|(n, _)| n == identifier).map(|(_, v)| v)
    }

    fn call_function(&self, identifier: &str, argument: &evalexpr::Value) -> evalexpr::error::EvalexprResultValue {
        let f = EXPR_FUNCTIONS
            .iter()
            .find(|(n, _)| *n == identifier)
            .ok_or_else(|| evalexpr::EvalexprError::FunctionIdentifierNotFound(identifier.to_string()))?;
        Ok(evalexpr::Value::Float((f.1)(argument.as_number()?)))
    }

    fn are_builtin_functions_disabled(&self) -> bool {
        true
    }

    fn set_builtin_functions_disabled(&mut self, _disabled: bool) -> evalexpr::EvalexprResult<()> {
        Ok(())
    }
}

impl Expression {
    pub fn parse(text: &str, n: usize) -> Result<Self> {
        let tree =
            evalexpr::build_operator_tree(&floatify(text)).map_err(|e| Error::Expression(format!("{text:?}: {e}")))?;
        let allowed = |v: &str| {
            v == "t" || v == "pi" || {
                let (head, tail) = v.split_at(1.min(v.len()));
                (head == "x" || head == "y") && tail.parse::<usize>().is_ok_and(|k| k >= 1 && k <= n)
            }
        };
        if let Some(v) = tree.iter_read_variable_identifiers().find(|v| !allowed(v)) {
            return Err(Error::Expression(format!(
                "{text:?}: unknown variable {v:?} (expected x1..x{n}, y1..y{n}, t, pi)"
            )));
        }
        if let Some(f) = tree
            .iter_function_identifiers()
            .find(|f| !EXPR_FUNCTIONS.iter().any(|(n, _)| n == f))
        {
            return Err(Error::Expression(format!("{text:?}: unknown function {f:?}")));
        }
        let time_dependent = tree.iter_read_variable_identifiers().any(|v| v == "t");
        let e = Expression {
            text: text.to_string(),
            tree,
            n,
            time_dependent,
        };
        // surface type errors (e.g. boolean results) at parse time
        e.try_eval(&vec![0.0; 2 * n], 0.0)?;
        Ok(e)
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn try_eval(&self, x: &[f64], t: f64) -> Result<f64> {
        let mut names = Vec::with_capacity(2 * self.n + 2);
        for j in 0..self.n {
            names.push((format!("x{}", j + 1), evalexpr::Value::Float(x[2 * j])));
            names.push((format!("y{}", j + 1), evalexpr::Value::Float(x[2 * j + 1])));
        }
        names.push(("t".into(), evalexpr::Value::Float(t)));
        names.push(("pi".into(), evalexpr::Value::Float(std::f64::consts::PI)));
        self.tree
            .eval_number_with_context(&ExprContext { names })
            .map_err(|e| Error::Expression(format!("{:?}: {e}", self.text)))
    }
}

impl FieldSource for Expression {
    fn eval(&self, x: &[f64], t: f64) -> f64 {
        self.try_eval(x, t).unwrap_or(f64::NAN)
    }

    fn is_time_dependent(&self) -> bool {
        self.time_dependent
    }
}

impl FieldSource for Arc<dyn FieldSource> {
    fn eval(&self, x: &[f64], t: f64) -> f64 {
        (**self).eval(x, t)
    }

    fn is_time_dependent(&self) -> bool {
        (**self).is_time_dependent()
    }

    fn sample(&self, grid: &GridSpec, t: f64) -> Result<ScalarField> {
        (**self).sample(grid, t)
    }

    fn time_derivative(&self, x: &[f64], t: f64) -> f64 {
        (**self).time_derivative(x, t)
    }
}
