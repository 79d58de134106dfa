use serde::Serialize;
use serde_json::{json, Value};

use super::integrate::Trajectory;
use crate::error::{Error, Result};
use crate::maps::StateFn;
use crate::signals::{running_lp_norm, NormOrder};

/// Default absolute tolerance on slack.
pub const DEFAULT_CHECK_TOLERANCE: f64 = 1e-9;

/// How the initial-condition term `Q_n(ξ_1, ..., ξ_n)` is formed.
#[derive(Debug, Clone)]
pub enum QnRule {
    /// `factor · max_i Q(ξ_i)`
    ScaledMax { factor: f64, q: StateFn },
    /// `factor · Σ_i Q(ξ_i)`
    ScaledSum { factor: f64, q: StateFn },
    /// `(scale · Σ_i base^(i-1) V(ξ_i))^exponent`
    WeightedSum {
        scale: f64,
        base: f64,
        exponent: f64,
        v: StateFn,
    },
    /// `factor · max_i base^(i-1) Q(ξ_i)`
    WeightedMax { factor: f64, base: f64, q: StateFn },
}

impl QnRule {
    pub fn tag(&self) -> &'static str {
        match self {
            QnRule::ScaledMax { .. } => "scaled-max",
            QnRule::ScaledSum { .. } => "scaled-sum",
            QnRule::WeightedSum { .. } => "weighted-sum",
            QnRule::WeightedMax { .. } => "weighted-max",
        }
    }

    pub fn eval(&self, xi: &[Vec<f64>]) -> f64 {
        let weights = |base: f64| (0..xi.len()).map(move |i| base.powi(i as i32));
        let v = match self {
            QnRule::ScaledMax { factor, q } => {
                factor * xi.iter().map(|x| q.eval(x)).fold(0.0, f64::max)
            }
            QnRule::ScaledSum { factor, q } => factor * xi.iter().map(|x| q.eval(x)).sum::<f64>(),
            QnRule::WeightedSum {
                scale,
                base,
                exponent,
                v,
            } => {
                let s: f64 = xi.iter().zip(weights(*base)).map(|(x, wt)| wt * v.eval(x)).sum();
                (scale * s).max(0.0).powf(*exponent)
            }
            QnRule::WeightedMax { factor, base, q } => {
                factor
                    * xi
                        .iter()
                        .zip(weights(*base))
                        .map(|(x, wt)| wt * q.eval(x))
                        .fold(0.0, f64::max)
            }
        };
        v.max(0.0)
    }

    fn to_json(&self) -> Value {
        match self {
            QnRule::ScaledMax { factor, q } => {
                json!({"qn_rule": self.tag(), "factor": factor, "q": q.label()})
            }
            QnRule::ScaledSum { factor, q } => {
                json!({"qn_rule": self.tag(), "factor": factor, "q": q.label()})
            }
            QnRule::WeightedSum {
                scale,
                base,
                exponent,
                v,
            } => json!({
                "qn_rule": self.tag(), "weights": "L^(i-1)", "L": base,
                "scale": scale, "exponent": exponent, "v": v.label()
            }),
            QnRule::WeightedMax { factor, base, q } => json!({
                "qn_rule": self.tag(), "weights": "L^(i-1)", "L": base,
                "factor": factor, "q": q.label()
            }),
        }
    }
}

/// Length-uniform estimate
/// `‖y_i‖_{[0,t],p} ≤ a1·‖ū‖_{[0,t],p} + a2·‖w̄‖_{[0,t],p} + Q_n(ξ)`.
#[derive(Debug, Clone)]
pub struct StringBound {
    pub p: NormOrder,
    pub a1_slope: f64,
    pub a2_slope: f64,
    pub qn: QnRule,
    /// Set when `Q_n` depends on the string length; the bound then applies to that length only.
    pub length: Option<usize>,
}

impl StringBound {
    pub fn new(p: NormOrder, a1_slope: f64, a2_slope: f64, qn: QnRule) -> Result<Self> {
        for (name, v) in [("a1 slope", a1_slope), ("a2 slope", a2_slope)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Input(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(StringBound {
            p,
            a1_slope,
            a2_slope,
            qn,
            length: None,
        })
    }

    pub fn for_length(mut self, n: usize) -> Self {
        self.length = Some(n);
        self
    }

    pub fn qn(&self, xi: &[Vec<f64>]) -> Result<f64> {
        if let Some(n) = self.length {
            if n != xi.len() {
                return Err(Error::Input(format!(
                    "bound was built for length {n}, got {} initial states",
                    xi.len()
                )));
            }
        }
        Ok(self.qn.eval(xi))
    }

    /// Right-hand side for given input norms.
    pub fn rhs(&self, u_norm: f64, w_norm: f64, xi: &[Vec<f64>]) -> Result<f64> {
        Ok(self.a1_slope * u_norm + self.a2_slope * w_norm + self.qn(xi)?)
    }

    pub fn to_json(&self) -> Value {
        json!({
            "p": self.p.to_string(),
            "a1_slope": self.a1_slope,
            "a2_slope": self.a2_slope,
            "length": self.length,
            "qn": self.qn.to_json(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlackLocation {
    /// 1-based component index.
    pub i: usize,
    pub t: f64,
}

/// Result of comparing a trajectory with a bound at every component and grid time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlackReport {
    pub min_slack: f64,
    pub argmin: SlackLocation,
    /// Worst slack of each component over time.
    pub per_component: Vec<f64>,
    /// Largest `‖y_i‖_{[0,T],p}` over components at the final time.
    pub max_norm: f64,
    /// Bound right-hand side at the final time.
    pub bound_value: f64,
    pub tolerance: f64,
}

impl SlackReport {
    pub fn holds(&self) -> bool {
        self.min_slack >= -self.tolerance
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tolerance = tol;
        self
    }
}

/// Evaluates `slack(i, t) = RHS(t) − ‖y_i‖_{[0,t],p}` over the whole trajectory.
pub fn check_estimate(traj: &Trajectory, bound: &StringBound, xi0: &[Vec<f64>]) -> Result<SlackReport> {
    if xi0.len() != traj.n() {
        return Err(Error::Input(format!(
            "{} initial states for a string of length {}",
            xi0.len(),
            traj.n()
        )));
    }
    let k = traj.state(0).dim();
    if xi0.iter().any(|x| x.len() != k) {
        return Err(Error::Input(format!("initial states must have dimension {k}")));
    }
    let qn = bound.qn(xi0)?;
    let u_run = running_lp_norm(traj.upstream_output(), bound.p)?;
    let w_run = running_lp_norm(traj.downstream_output(), bound.p)?;
    let rhs: Vec<f64> = u_run
        .data()
        .iter()
        .zip(w_run.data())
        .map(|(u, w)| bound.a1_slope * u + bound.a2_slope * w + qn)
        .collect();

    let grid = traj.grid();
    let mut min_slack = f64::INFINITY;
    let mut argmin = SlackLocation { i: 1, t: grid.t0 };
    let mut per_component = Vec::with_capacity(traj.n());
    let mut max_norm = 0.0_f64;
    for (i, y) in traj.outputs().iter().enumerate() {
        let y_run = running_lp_norm(y, bound.p)?;
        let mut worst = f64::INFINITY;
        for (step, (r, yn)) in rhs.iter().zip(y_run.data()).enumerate() {
            let s = r - yn;
            if s < worst {
                worst = s;
            }
            if s < min_slack {
                min_slack = s;
                argmin = SlackLocation {
                    i: i + 1,
                    t: grid.time(step),
                };
            }
        }
        max_norm = max_norm.max(*y_run.data().last().unwrap_or(&0.0));
        per_component.push(worst);
    }
    Ok(SlackReport {
        min_slack,
        argmin,
        per_component,
        max_norm,
        bound_value: *rhs.last().unwrap_or(&qn),
        tolerance: DEFAULT_CHECK_TOLERANCE,
    })
}
