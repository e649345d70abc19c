//! JSON problem configuration.
//!
//! ```json
//! {
//!   "n": 1,
//!   "box": { "lo": -1.0, "hi": 1.0 },
//!   "points_per_axis": 33,
//!   "hat_theta": { "pi_fraction": [1, 4] },
//!   "t_end": 0.5,
//!   "initial": { "family": "quadratic", "a": [[1.0]] },
//!   "boundary": { "family": "quadratic", "a": [[1.0]] }
//! }
//! ```
//!
//! Quadratic coefficients are numbers or `[re, im]` pairs. Validation errors
//! name the offending field.

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{FlowOptions, FlowProblem};
use crate::functionals::DEFAULT_S_SAMPLES;
use crate::grid::{make_grid, GridSpec, ScalarField, MAX_DIM};
use crate::io::read_snapshot;
use crate::matrix::{CMat, C64};
use crate::source::{Bumped, Expression, FieldSource, Quadratic, Sampled};

/// A number or one per axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerAxis<T> {
    Same(T),
    Each(Vec<T>),
}

impl<T: Clone> PerAxis<T> {
    fn expand(&self, axes: usize, path: &str) -> Result<Vec<T>> {
        match self {
            PerAxis::Same(v) => Ok(vec![v.clone(); axes]),
            PerAxis::Each(v) if v.len() == axes => Ok(v.clone()),
            PerAxis::Each(v) => Err(Error::config(path, format!("expected {axes} entries, got {}", v.len()))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub lo: PerAxis<f64>,
    pub hi: PerAxis<f64>,
}

/// Radians, or `{"pi_fraction": [p, q]}` for `pπ/q`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Angle {
    Radians(f64),
    PiFraction { pi_fraction: [i64; 2] },
}

impl Angle {
    pub fn radians(&self) -> f64 {
        match self {
            Angle::Radians(r) => *r,
            Angle::PiFraction { pi_fraction: [p, q] } => PI * *p as f64 / *q as f64,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Entry {
    Real(f64),
    Complex([f64; 2]),
}

impl Entry {
    fn value(self) -> C64 {
        match self {
            Entry::Real(r) => C64::new(r, 0.0),
            Entry::Complex([re, im]) => C64::new(re, im),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum FieldSpec {
    /// `Σ A_{jk} z_j z̄_k + linear·x + constant`, plus `bump` times a smooth
    /// bump that vanishes with its gradient on the box boundary.
    Quadratic {
        a: Vec<Vec<Entry>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        linear: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "is_zero")]
        constant: f64,
        #[serde(default, skip_serializing_if = "is_zero")]
        bump: f64,
    },
    Expression {
        expr: String,
    },
    /// A snapshot on the configured grid; relative paths resolve against the
    /// configuration file.
    Sampled {
        path: PathBuf,
    },
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: PathBuf,
    #[serde(default = "default_cadence")]
    pub cadence: usize,
}

fn default_cadence() -> usize {
    1
}

fn default_theta0() -> f64 {
    0.01
}

fn default_tol() -> f64 {
    1e-6
}

fn default_s_samples() -> usize {
    DEFAULT_S_SAMPLES
}

fn default_monitor_c() -> f64 {
    10.0
}

fn default_t_end() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub n: usize,
    #[serde(rename = "box")]
    pub domain: BoxSpec,
    pub points_per_axis: PerAxis<usize>,
    pub hat_theta: Angle,
    #[serde(default = "default_theta0")]
    pub theta0: f64,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default = "default_tol")]
    pub tol_stationary: f64,
    #[serde(default = "default_s_samples")]
    pub s_samples: usize,
    #[serde(default)]
    pub strict: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_monitor_c")]
    pub monitor_c: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<usize>,
    pub initial: FieldSpec,
    pub boundary: FieldSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subsolution: Option<FieldSpec>,
    /// Reference potential of the J-functional; the initial data when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<FieldSpec>,
    /// Second field for `eval-functionals`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<FieldSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSpec>,
}

/// A configuration with its fields built.
#[derive(Clone, Debug)]
pub struct Problem {
    pub config: ProblemConfig,
    pub grid: GridSpec,
    pub hat_theta: f64,
    pub initial: Arc<dyn FieldSource>,
    pub boundary: Arc<dyn FieldSource>,
    pub subsolution: Option<Arc<dyn FieldSource>>,
    pub reference: Option<Arc<dyn FieldSource>>,
    pub target: Option<Arc<dyn FieldSource>>,
}

impl ProblemConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ProblemConfig = serde_json::from_str(text).map_err(|e| {
            let msg = e.to_string();
            // serde reports missing fields as "missing field `x`"
            let path = msg
                .split('`')
                .nth(1)
                .filter(|_| msg.starts_with("missing field") || msg.starts_with("unknown field"))
                .unwrap_or("$")
                .to_string();
            Error::config(&path, msg)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.n > MAX_DIM {
            return Err(Error::config("n", format!("must lie in 1..={MAX_DIM}, got {}", self.n)));
        }
        let theta = self.hat_theta.radians();
        if let Angle::PiFraction { pi_fraction: [_, 0] } = self.hat_theta {
            return Err(Error::config("hat_theta.pi_fraction", "zero denominator"));
        }
        if !(theta > 0.0 && theta < FRAC_PI_2) {
            return Err(Error::config(
                "hat_theta",
                format!("hypercritical range violated: {theta} is not in (0, π/2)"),
            ));
        }
        if !(self.theta0 > 0.0 && self.theta0 < PI / 4.0) {
            return Err(Error::config(
                "theta0",
                format!("must lie in (0, π/4), got {}", self.theta0),
            ));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::config(
                "t_end",
                format!("must be finite and nonnegative, got {}", self.t_end),
            ));
        }
        if !(self.tol_stationary >= 0.0) {
            return Err(Error::config("tol_stationary", "must be nonnegative"));
        }
        if self.s_samples < 3 || self.s_samples.is_multiple_of(2) {
            return Err(Error::config(
                "s_samples",
                format!("must be odd and at least 3, got {}", self.s_samples),
            ));
        }
        if !(self.monitor_c >= 0.0) {
            return Err(Error::config("monitor_c", "must be nonnegative"));
        }
        if let Some(o) = &self.output {
            if o.cadence == 0 {
                return Err(Error::config("output.cadence", "must be positive"));
            }
        }
        self.grid()?;
        let fields = [
            ("initial", Some(&self.initial)),
            ("boundary", Some(&self.boundary)),
            ("subsolution", self.subsolution.as_ref()),
            ("reference", self.reference.as_ref()),
            ("target", self.target.as_ref()),
        ];
        for (name, spec) in fields {
            if let Some(spec) = spec {
                self.validate_field(name, spec)?;
            }
        }
        Ok(())
    }

    fn validate_field(&self, name: &str, spec: &FieldSpec) -> Result<()> {
        match spec {
            FieldSpec::Quadratic { .. } => self.quadratic(name, spec).map(|_| ()),
            FieldSpec::Expression { expr } => Expression::parse(expr, self.n)
                .map(|_| ())
                .map_err(|e| Error::config(format!("{name}.expr"), e.to_string())),
            FieldSpec::Sampled { path } => {
                if path.as_os_str().is_empty() {
                    Err(Error::config(format!("{name}.path"), "empty path"))
                } else {
                    Ok(())
                }
            }
        }
    }

    fn quadratic(&self, name: &str, spec: &FieldSpec) -> Result<(Quadratic, f64)> {
        let FieldSpec::Quadratic {
            a,
            linear,
            constant,
            bump,
        } = spec
        else {
            unreachable!("called on quadratic specs only")
        };
        let n = self.n;
        if a.len() != n || a.iter().any(|r| r.len() != n) {
            return Err(Error::config(format!("{name}.a"), format!("must be {n}×{n}")));
        }
        let mut m = CMat::zeros(n);
        for (j, row) in a.iter().enumerate() {
            for (k, e) in row.iter().enumerate() {
                m[(j, k)] = e.value();
            }
        }
        let linear = linear.clone().unwrap_or_else(|| vec![0.0; 2 * n]);
        if linear.len() != 2 * n {
            return Err(Error::config(
                format!("{name}.linear"),
                format!("needs {} coefficients, got {}", 2 * n, linear.len()),
            ));
        }
        let q = Quadratic::new(m, linear, *constant).map_err(|e| match e {
            Error::NotHermitian(d) => Error::config(
                format!("{name}.a"),
                format!("coefficient matrix is not Hermitian (deviation {d:e})"),
            ),
            other => Error::config(format!("{name}.a"), other.to_string()),
        })?;
        Ok((q, *bump))
    }

    pub fn hat_theta(&self) -> f64 {
        self.hat_theta.radians()
    }

    pub fn grid(&self) -> Result<GridSpec> {
        let axes = 2 * self.n;
        let lo = self.domain.lo.expand(axes, "box.lo")?;
        let hi = self.domain.hi.expand(axes, "box.hi")?;
        let points = self.points_per_axis.expand(axes, "points_per_axis")?;
        make_grid(self.n, &lo, &hi, &points).map_err(|e| match e {
            Error::Grid(msg) => Error::config("points_per_axis", msg),
            other => other,
        })
    }

    fn build_field(&self, name: &str, spec: &FieldSpec, grid: &GridSpec, base: &Path) -> Result<Arc<dyn FieldSource>> {
        Ok(match spec {
            FieldSpec::Quadratic { .. } => {
                let (q, bump) = self.quadratic(name, spec)?;
                if bump == 0.0 {
                    Arc::new(q)
                } else {
                    Arc::new(Bumped {
                        base: q,
                        amplitude: bump,
                        lo: grid.lo().to_vec(),
                        hi: grid.hi().to_vec(),
                    })
                }
            }
            FieldSpec::Expression { expr } => Arc::new(
                Expression::parse(expr, self.n).map_err(|e| Error::config(format!("{name}.expr"), e.to_string()))?,
            ),
            FieldSpec::Sampled { path } => {
                let full = if path.is_absolute() {
                    path.clone()
                } else {
                    base.join(path)
                };
                let field = read_snapshot(&full, grid.lo(), grid.hi())
                    .map_err(|e| Error::config(format!("{name}.path"), format!("{}: {e}", full.display())))?;
                if field.grid() != grid {
                    return Err(Error::config(
                        format!("{name}.path"),
                        format!(
                            "snapshot dims {:?} do not match the grid {:?}",
                            field.grid().dims(),
                            grid.dims()
                        ),
                    ));
                }
                Arc::new(Sampled::new(field))
            }
        })
    }

    /// Builds every field; `base` resolves relative snapshot paths.
    pub fn build(&self, base: &Path) -> Result<Problem> {
        self.validate()?;
        let grid = self.grid()?;
        let opt = |name: &str, spec: &Option<FieldSpec>| -> Result<Option<Arc<dyn FieldSource>>> {
            spec.as_ref()
                .map(|s| self.build_field(name, s, &grid, base))
                .transpose()
        };
        Ok(Problem {
            initial: self.build_field("initial", &self.initial, &grid, base)?,
            boundary: self.build_field("boundary", &self.boundary, &grid, base)?,
            subsolution: opt("subsolution", &self.subsolution)?,
            reference: opt("reference", &self.reference)?,
            target: opt("target", &self.target)?,
            hat_theta: self.hat_theta(),
            grid,
            config: self.clone(),
        })
    }
}

pub fn parse_config(path: &Path) -> Result<ProblemConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::config("$", format!("{}: {e}", path.display())))?;
    ProblemConfig::from_json(&text)
}

impl Problem {
    pub fn load(path: &Path) -> Result<Self> {
        let cfg = parse_config(path)?;
        cfg.build(path.parent().unwrap_or(Path::new(".")))
    }

    pub fn flow_options(&self) -> FlowOptions {
        let c = &self.config;
        let mut o = FlowOptions::new(self.hat_theta, c.t_end);
        o.tol_stationary = c.tol_stationary;
        o.monitor_c = c.monitor_c;
        o.strict = c.strict;
        o.s_samples = c.s_samples;
        o.cadence = c.output.as_ref().map_or(1, |o| o.cadence);
        o.max_steps = c.max_steps;
        o
    }

    pub fn initial_field(&self) -> Result<ScalarField> {
        self.initial.sample(&self.grid, 0.0)
    }

    pub fn flow_problem(&self) -> Result<FlowProblem> {
        Ok(FlowProblem {
            grid: self.grid.clone(),
            initial: self.initial_field()?,
            boundary: self.boundary.clone(),
            subsolution: self.subsolution.clone(),
            reference: self.reference.as_ref().map(|r| r.sample(&self.grid, 0.0)).transpose()?,
            options: self.flow_options(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "n": 1,
        "box": {"lo": -1, "hi": 1},
        "points_per_axis": 9,
        "hat_theta": {"pi_fraction": [1, 4]},
        "initial": {"family": "quadratic", "a": [[1.0]]},
        "boundary": {"family": "quadratic", "a": [[1.0]]}
    }"#;

    #[test]
    fn minimal_config_parses() {
        let c = ProblemConfig::from_json(MINIMAL).unwrap();
        assert!((c.hat_theta() - PI / 4.0).abs() < 1e-16);
        assert_eq!(c.grid().unwrap().h(), 0.25);
        let p = c.build(Path::new(".")).unwrap();
        assert_eq!(p.flow_options().tol_stationary, 1e-6);
    }

    #[test]
    fn round_trip_is_a_fixed_point() {
        let c = ProblemConfig::from_json(MINIMAL).unwrap();
        let again = ProblemConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(c, again);
        assert_eq!(c.to_json(), again.to_json());
    }

    #[test]
    fn supercritical_angle_rejected() {
        let text = MINIMAL.replace(r#"{"pi_fraction": [1, 4]}"#, "2.0");
        let err = ProblemConfig::from_json(&text).unwrap_err();
        assert!(err.to_string().contains("hypercritical range violated"), "{err}");
        assert!(err.to_string().contains("hat_theta"), "{err}");
    }

    #[test]
    fn non_hermitian_matrix_rejected() {
        let text = MINIMAL
            .replace(r#""n": 1"#, r#""n": 2"#)
            .replace(r#""points_per_axis": 9"#, r#""points_per_axis": 5"#)
            .replace(
                r#""initial": {"family": "quadratic", "a": [[1.0]]}"#,
                r#""initial": {"family": "quadratic", "a": [[1, 1], [0, 1]]}"#,
            )
            .replace(
                r#""boundary": {"family": "quadratic", "a": [[1.0]]}"#,
                r#""boundary": {"family": "quadratic", "a": [[1, [0, 1]], [[0, -1], 1]]}"#,
            );
        let err = ProblemConfig::from_json(&text).unwrap_err();
        assert!(err.to_string().contains("initial.a"), "{err}");
        assert!(err.to_string().contains("Hermitian"), "{err}");
    }

    #[test]
    fn missing_field_is_named() {
        let text = MINIMAL.replace(r#""hat_theta": {"pi_fraction": [1, 4]},"#, "");
        let err = ProblemConfig::from_json(&text).unwrap_err();
        assert!(err.to_string().contains("hat_theta"), "{err}");
    }

    #[test]
    fn bad_expression_is_named() {
        let text = MINIMAL.replace(
            r#""boundary": {"family": "quadratic", "a": [[1.0]]}"#,
            r#""boundary": {"family": "expression", "expr": "x1^2 + z"}"#,
        );
        let err = ProblemConfig::from_json(&text).unwrap_err();
        assert!(err.to_string().contains("boundary.expr"), "{err}");
    }
}
