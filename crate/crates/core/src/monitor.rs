//! Runtime checks of the a-priori estimates along a computed flow.
//!
//! Every bound is relaxed by a slack `η = C·h²` to absorb the truncation
//! error of the scheme.

use std::f64::consts::FRAC_PI_2;

use crate::error::Result;
use crate::flow::{phase_of_dtu, DiagnosticsRow, Flow};

/// Number of side times sampled for time-dependent boundary data.
const SIDE_SAMPLES: usize = 33;

/// Bounds read off the parabolic boundary: the initial slice and the side
/// `∂Ω × [0, T]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParabolicBounds {
    pub dtu_min: f64,
    pub dtu_max: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    /// Supremum of the subsolution over the side, when one is supplied.
    pub sub_sup: Option<f64>,
}

impl ParabolicBounds {
    pub fn compute(flow: &Flow) -> Result<Self> {
        let problem = flow.problem();
        let grid = &problem.grid;
        let hat = problem.options.hat_theta;
        let t_end = problem.options.t_end.max(0.0);
        let times: Vec<f64> = if problem.boundary.is_time_dependent()
            || problem.subsolution.as_ref().is_some_and(|s| s.is_time_dependent())
        {
            (0..SIDE_SAMPLES)
                .map(|k| t_end * k as f64 / (SIDE_SAMPLES - 1) as f64)
                .collect()
        } else {
            vec![0.0]
        };

        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in &flow.evaluated().rhs {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let boundary = grid.boundary();
        let mut x = vec![0.0; grid.axes()];
        let mut sub_sup: Option<f64> = None;
        for &t in &times {
            for &idx in &boundary {
                grid.coords_into(idx, &mut x);
                let d = problem.boundary.time_derivative(&x, t);
                lo = lo.min(d);
                hi = hi.max(d);
                if let Some(sub) = &problem.subsolution {
                    let v = sub.eval(&x, t);
                    sub_sup = Some(sub_sup.map_or(v, |s| s.max(v)));
                }
            }
        }
        // arccot is decreasing, so the largest ∂ₜu gives the smallest phase
        Ok(ParabolicBounds {
            dtu_min: lo,
            dtu_max: hi,
            theta_min: phase_of_dtu(hi, hat),
            theta_max: phase_of_dtu(lo, hat),
            sub_sup,
        })
    }

    pub fn sup_abs_dtu(&self) -> f64 {
        self.dtu_min.abs().max(self.dtu_max.abs())
    }
}

/// Checks (i) to (iv) on one row. Each failure is reported as
/// `"<item>: <detail>"`.
pub fn check_row(row: &DiagnosticsRow, bounds: &ParabolicBounds, eta: f64) -> Vec<String> {
    let mut out = Vec::new();
    if row.theta_min < bounds.theta_min - eta || row.theta_max > bounds.theta_max + eta {
        out.push(format!(
            "phase range: [{}, {}] outside [{}, {}] ± {eta:e}",
            row.theta_min, row.theta_max, bounds.theta_min, bounds.theta_max
        ));
    }
    if row.sup_dtu > bounds.sup_abs_dtu() + eta {
        out.push(format!(
            "time derivative: sup |∂ₜu| = {} exceeds boundary bound {} + {eta:e}",
            row.sup_dtu,
            bounds.sup_abs_dtu()
        ));
    }
    if let Some(gap) = row.sub_gap_min {
        if gap < -eta {
            out.push(format!("comparison: min (u − u̲) = {gap:e} below −{eta:e}"));
        }
    }
    if let Some(sup) = bounds.sub_sup {
        if row.u_max > sup + eta {
            out.push(format!(
                "upper bound: max u = {} exceeds sup u̲ = {sup} + {eta:e}",
                row.u_max
            ));
        }
    }
    let delta1 = row.theta_min.min(FRAC_PI_2 - row.theta_max);
    let floor = delta1.tan() - eta;
    if row.lambda_min < floor {
        out.push(format!(
            "eigenvalue floor: λ_min = {} below tan δ₁ − η = {floor} (δ₁ = {delta1})",
            row.lambda_min
        ));
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct MonitorItem {
    pub name: &'static str,
    pub passed: bool,
    /// Informational items are reported but never fail a run.
    pub informational: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MonitorReport {
    pub items: Vec<MonitorItem>,
    pub eta: f64,
}

impl MonitorReport {
    pub fn passed(&self) -> bool {
        self.items.iter().all(|i| i.passed || i.informational)
    }

    pub fn item(&self, name: &str) -> Option<&MonitorItem> {
        self.items.iter().find(|i| i.name == name)
    }

    pub fn failures(&self) -> Vec<String> {
        self.items
            .iter()
            .filter(|i| !i.passed && !i.informational)
            .map(|i| format!("{}: {}", i.name, i.detail))
            .collect()
    }
}

impl std::fmt::Display for MonitorReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "monitor slack η = {:e}", self.eta)?;
        for i in &self.items {
            let status = match (i.passed, i.informational) {
                (true, _) => "PASS",
                (false, true) => "NOTE",
                (false, false) => "FAIL",
            };
            writeln!(f, "{status} {}: {}", i.name, i.detail)?;
        }
        Ok(())
    }
}

pub const PHASE_RANGE: &str = "phase range";
pub const TIME_DERIVATIVE: &str = "time derivative";
pub const COMPARISON: &str = "comparison";
pub const EIGENVALUE_FLOOR: &str = "eigenvalue floor";
pub const PHASE_RESIDUAL: &str = "phase residual";
pub const DTU_MAXIMUM: &str = "time derivative maximum";
pub const J_MONOTONE: &str = "J monotone";

/// Full report over a recorded history.
pub fn monitor_invariants(rows: &[DiagnosticsRow], bounds: &ParabolicBounds, eta: f64) -> MonitorReport {
    let mut items = Vec::new();

    let worst = |f: &dyn Fn(&DiagnosticsRow) -> f64| rows.iter().map(f).fold(f64::NEG_INFINITY, f64::max);

    let excess = worst(&|r| (bounds.theta_min - r.theta_min).max(r.theta_max - bounds.theta_max));
    items.push(MonitorItem {
        name: PHASE_RANGE,
        passed: excess <= eta,
        informational: false,
        detail: format!(
            "observed phases stay within [{}, {}] up to {excess:e}",
            bounds.theta_min, bounds.theta_max
        ),
    });

    let sup = worst(&|r| r.sup_dtu);
    items.push(MonitorItem {
        name: TIME_DERIVATIVE,
        passed: sup <= bounds.sup_abs_dtu() + eta,
        informational: false,
        detail: format!("sup |∂ₜu| = {sup:e}, boundary bound {:e}", bounds.sup_abs_dtu()),
    });

    if rows.iter().any(|r| r.sub_gap_min.is_some()) {
        let gap = rows.iter().filter_map(|r| r.sub_gap_min).fold(f64::INFINITY, f64::min);
        let over = match bounds.sub_sup {
            Some(s) => worst(&|r| r.u_max - s),
            None => f64::NEG_INFINITY,
        };
        items.push(MonitorItem {
            name: COMPARISON,
            passed: gap >= -eta && over <= eta,
            informational: false,
            detail: format!("min (u − u̲) = {gap:e}, max u − sup u̲ = {over:e}"),
        });
    }

    let shortfall = worst(&|r| {
        let delta1 = r.theta_min.min(FRAC_PI_2 - r.theta_max);
        delta1.tan() - r.lambda_min
    });
    items.push(MonitorItem {
        name: EIGENVALUE_FLOOR,
        passed: shortfall <= eta,
        informational: false,
        detail: format!("max (tan δ₁ − λ_min) = {shortfall:e}"),
    });

    items.push(phase_residual_item(rows));

    let rise = rows
        .windows(2)
        .map(|w| w[1].dtu_max - w[0].dtu_max)
        .fold(f64::NEG_INFINITY, f64::max);
    items.push(MonitorItem {
        name: DTU_MAXIMUM,
        passed: rows.len() < 2 || rise <= eta,
        informational: true,
        detail: format!("largest increase of sup ∂ₜu between rows = {rise:e}"),
    });

    let j_rise = rows
        .windows(2)
        .map(|w| (w[1].j - w[0].j) / (1.0 + w[0].j.abs()))
        .fold(f64::NEG_INFINITY, f64::max);
    items.push(MonitorItem {
        name: J_MONOTONE,
        passed: rows.len() < 2 || j_rise <= 1e-10,
        informational: true,
        detail: format!("largest relative increase of J between rows = {j_rise:e}"),
    });

    MonitorReport { items, eta }
}

/// `∫|Θ − θ̂|` must not grow over the final quarter of the history and must
/// end below where that quarter started.
fn phase_residual_item(rows: &[DiagnosticsRow]) -> MonitorItem {
    let tail = (rows.len() / 4).max(2).min(rows.len());
    let seq: Vec<f64> = rows[rows.len() - tail..].iter().map(|r| r.l1_phase).collect();
    let (passed, detail) = match (seq.first(), seq.last()) {
        (Some(&first), Some(&last)) if seq.len() >= 2 => {
            let scale = first.abs().max(f64::MIN_POSITIVE);
            let growth = seq
                .windows(2)
                .map(|w| (w[1] - w[0]) / scale)
                .fold(f64::NEG_INFINITY, f64::max);
            let settled = first <= 1e-12;
            (
                settled || (growth <= 1e-9 && last < first),
                format!("∫|Θ − θ̂| went from {first:e} to {last:e} over the last {tail} rows"),
            )
        }
        (Some(&only), _) => (only <= 1e-12, format!("single row, ∫|Θ − θ̂| = {only:e}")),
        _ => (false, "empty history".to_string()),
    };
    MonitorItem {
        name: PHASE_RESIDUAL,
        passed,
        informational: false,
        detail,
    }
}
