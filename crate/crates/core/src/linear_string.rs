//! The scalar linear string `ẋ_i = a x_{i−1} − k x_i + b x_{i+1}`, `y_i = x_i`.
//!
//! Region tests, optimal tuning of the trajectory certificates, closed-form
//! bounds, and the quadratic dissipation certificates with `V(x) = x²/2`. All
//! certificates here are for `p = 2`.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;

use serde::Serialize;

use crate::certificates::{ComponentGain, DissipationData, LyapunovCertificate};
use crate::error::{Error, Result};
use crate::maps::{GradFn, PairFn, StateFn};
use crate::signals::NormOrder;
use crate::string_sim::{BoxRegion, ComponentDynamics, QnRule, StringBound};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearParams {
    pub a: f64,
    pub b: f64,
    pub k: f64,
}

impl LinearParams {
    pub fn new(a: f64, b: f64, k: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) {
            return Err(Error::Input(format!("a and b must be finite, got {a}, {b}")));
        }
        if !(k.is_finite() && k > 0.0) {
            return Err(Error::Input(format!("k must be positive, got {k}")));
        }
        Ok(LinearParams { a, b, k })
    }

    fn require_a(&self) -> Result<()> {
        if self.a == 0.0 {
            Err(Error::Precondition("the upstream coupling a must be nonzero".into()))
        } else {
            Ok(())
        }
    }

    /// `|a|^{2/3} + |b|^{2/3}`
    fn cube_sum(&self) -> f64 {
        self.a.abs().powf(2.0 / 3.0) + self.b.abs().powf(2.0 / 3.0)
    }
}

/// One region inequality: whether it holds and `RHS − LHS` of the binding branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegionCheck {
    pub holds: bool,
    pub margin: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub branch: Option<&'static str>,
}

impl RegionCheck {
    fn strict(margin: f64) -> Self {
        RegionCheck {
            holds: margin > 0.0,
            margin,
            branch: None,
        }
    }

    fn branch(mut self, name: &'static str) -> Self {
        self.branch = Some(name);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryRegions {
    /// `b = 0` and `|a| ≤ k`.
    pub one_directional: RegionCheck,
    /// `(|a|^{2/3} + |b|^{2/3})^{3/2} < k`.
    pub bidirectional: RegionCheck,
    /// The bidirectional test when `|b| < |a|`, else `2^{3/2}√|ab| < k`.
    pub one_sided: RegionCheck,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LyapunovRegions {
    /// `|a + b| < k`.
    pub bidirectional: RegionCheck,
    /// Branch on `ab` against `±a²`.
    pub one_sided: RegionCheck,
}

pub fn trajectory_conditions(params: &LinearParams) -> TrajectoryRegions {
    let LinearParams { a, b, k } = *params;
    let one_directional = if b == 0.0 {
        let m = k - a.abs();
        RegionCheck {
            holds: m >= 0.0,
            margin: m,
            branch: None,
        }
    } else {
        RegionCheck {
            holds: false,
            margin: -b.abs(),
            branch: None,
        }
    };
    let bidirectional = RegionCheck::strict(k - params.cube_sum().powf(1.5));
    let one_sided = if b.abs() < a.abs() {
        bidirectional.branch("|b|<|a|")
    } else {
        RegionCheck::strict(k - 2f64.powf(1.5) * (a * b).abs().sqrt()).branch("|b|>=|a|")
    };
    TrajectoryRegions {
        one_directional,
        bidirectional,
        one_sided,
    }
}

pub fn lyapunov_conditions(params: &LinearParams) -> LyapunovRegions {
    let LinearParams { a, b, k } = *params;
    let bidirectional = RegionCheck::strict(k - (a + b).abs());
    let (ab, a2) = (a * b, a * a);
    let one_sided = if ab <= -a2 {
        RegionCheck {
            holds: true,
            margin: k,
            branch: Some("ab<=-a^2"),
        }
    } else if ab < a2 {
        bidirectional.branch("-a^2<ab<a^2")
    } else {
        RegionCheck::strict(k - 2.0 * ab.abs().sqrt()).branch("ab>=a^2")
    };
    LyapunovRegions {
        bidirectional,
        one_sided,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinearMode {
    OneDirectional,
    Bidirectional,
    OneSided,
}

impl FromStr for LinearMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one-directional" => Ok(LinearMode::OneDirectional),
            "bidirectional" => Ok(LinearMode::Bidirectional),
            "one-sided" => Ok(LinearMode::OneSided),
            _ => Err(Error::Input(format!(
                "unknown mode '{s}' (expected one-directional, bidirectional or one-sided)"
            ))),
        }
    }
}

impl fmt::Display for LinearMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LinearMode::OneDirectional => "one-directional",
            LinearMode::Bidirectional => "bidirectional",
            LinearMode::OneSided => "one-sided",
        })
    }
}

/// Tuning constants of the trajectory certificate and the gains they produce.
///
/// `epsilon` is set for the one-directional estimate, `r` and `s` for the
/// two-sided one. `q_scale` is the factor in `Q(ξ) = q_scale·|ξ|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TunedGains {
    pub mode: LinearMode,
    pub epsilon: Option<f64>,
    pub r: Option<f64>,
    pub s: Option<f64>,
    pub gamma: f64,
    pub delta: f64,
    pub c: f64,
    pub q_scale: f64,
}

impl TunedGains {
    fn from_epsilon(mode: LinearMode, params: &LinearParams, eps: f64) -> Self {
        let a = params.a.abs();
        let d = 2.0 * params.k - eps * a;
        TunedGains {
            mode,
            epsilon: Some(eps),
            r: None,
            s: None,
            gamma: (a / (eps * d)).sqrt(),
            delta: 0.0,
            c: 0.5 * d,
            q_scale: 1.0 / d.sqrt(),
        }
    }

    fn from_rs(mode: LinearMode, params: &LinearParams, r: f64, s: f64) -> Self {
        let LinearParams { a, b, k } = *params;
        let d = 2.0 * k - r * a * a - s * b * b;
        TunedGains {
            mode,
            epsilon: None,
            r: Some(r),
            s: Some(s),
            gamma: 1.0 / (r * d).sqrt(),
            delta: 1.0 / (s * d).sqrt(),
            c: 0.5 * d,
            q_scale: 1.0 / d.sqrt(),
        }
    }

    /// The trajectory gain with `Q(ξ) = q_scale·|ξ|`.
    pub fn gain(&self) -> ComponentGain {
        let qs = self.q_scale;
        ComponentGain {
            p: NormOrder::Finite(2.0),
            gamma: self.gamma,
            delta: self.delta,
            q: StateFn::new(format!("{qs}*|x|"), move |x| qs * x[0].abs()),
        }
    }

    /// The dissipation data behind the gain, with `V(x) = x²/2`.
    pub fn dissipation(&self) -> DissipationData {
        DissipationData {
            p: 2.0,
            c: self.c,
            gamma: self.gamma,
            delta: self.delta,
            v: half_square(),
            grad_v: identity_grad(),
        }
    }
}

fn half_square() -> StateFn {
    StateFn::new("x^2/2", |x| 0.5 * x[0] * x[0])
}

fn identity_grad() -> GradFn {
    GradFn::new("x", |x, out| out[0] = x[0])
}

/// Minimizing tuning of the trajectory certificate for `mode`.
///
/// A zero downstream coupling falls back to the one-directional tuning
/// `ε = k/|a|` in every mode.
pub fn optimal_trajectory_gains(params: &LinearParams, mode: LinearMode) -> Result<TunedGains> {
    params.require_a()?;
    let LinearParams { a, b, k } = *params;
    if mode == LinearMode::OneDirectional && b != 0.0 {
        return Err(Error::Precondition(format!(
            "one-directional tuning needs b = 0, got {b}"
        )));
    }
    if b == 0.0 {
        return Ok(TunedGains::from_epsilon(mode, params, k / a.abs()));
    }
    if mode == LinearMode::OneSided && b.abs() >= a.abs() {
        return Ok(TunedGains::from_rs(mode, params, k / (2.0 * a * a), k / (2.0 * b * b)));
    }
    let sum = params.cube_sum();
    let r = k / (a.abs().powf(4.0 / 3.0) * sum);
    let s = k / (b.abs().powf(4.0 / 3.0) * sum);
    Ok(TunedGains::from_rs(mode, params, r, s))
}

fn abs_q() -> StateFn {
    StateFn::new("|x|", |x| x[0].abs())
}

fn region_error(name: &str, check: RegionCheck) -> Error {
    Error::SmallGain {
        condition: format!("linear {name} region"),
        margin: check.margin,
    }
}

/// Closed-form bound of the trajectory certificate in `mode` for length `n`.
pub fn linear_bounds(params: &LinearParams, mode: LinearMode, n: usize) -> Result<StringBound> {
    params.require_a()?;
    if n == 0 {
        return Err(Error::Input("string length must be at least 1".into()));
    }
    let regions = trajectory_conditions(params);
    let LinearParams { a, b, k } = *params;
    let p = NormOrder::Finite(2.0);
    let (aa, ab) = (a.abs(), b.abs());
    let two_sided = |check: RegionCheck, with_a2: bool| -> Result<StringBound> {
        let sum = params.cube_sum();
        let den = k - sum.powf(1.5);
        let a2 = if with_a2 { ab.powf(2.0 / 3.0) * sum.sqrt() / den } else { 0.0 };
        if !check.holds {
            return Err(region_error("bidirectional", check));
        }
        StringBound::new(
            p,
            aa.powf(2.0 / 3.0) * sum.sqrt() / den,
            a2,
            QnRule::ScaledMax {
                factor: k.sqrt() / den,
                q: abs_q(),
            },
        )
    };
    match mode {
        LinearMode::OneDirectional => {
            if !regions.one_directional.holds {
                return Err(region_error("one-directional", regions.one_directional));
            }
            StringBound::new(
                p,
                aa / k,
                0.0,
                QnRule::ScaledSum {
                    factor: 1.0 / k.sqrt(),
                    q: abs_q(),
                },
            )
        }
        LinearMode::Bidirectional => two_sided(regions.bidirectional, true),
        LinearMode::OneSided => {
            let check = regions.one_sided;
            if ab < aa || b == 0.0 {
                return Ok(two_sided(check, false)?.for_length(n));
            }
            if !check.holds {
                return Err(region_error("one-sided", check));
            }
            let den = k - 2f64.powf(1.5) * (a * b).abs().sqrt();
            let growth = (ab / aa).powf((n - 1) as f64 / 2.0).max(1.0);
            Ok(StringBound::new(
                p,
                2f64.sqrt() * aa / den,
                0.0,
                QnRule::ScaledMax {
                    factor: growth * k.sqrt() / den,
                    q: abs_q(),
                },
            )?
            .for_length(n))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LyapunovMode {
    Bidirectional,
    OneSided,
}

impl FromStr for LyapunovMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bidirectional" => Ok(LyapunovMode::Bidirectional),
            "one-sided" => Ok(LyapunovMode::OneSided),
            _ => Err(Error::Input(format!("unknown mode '{s}' (expected bidirectional or one-sided)"))),
        }
    }
}

/// Fallback `σ = ω` when the coupling term that fixes them vanishes.
pub const DEGENERATE_MARGIN: f64 = 0.25;

/// Dissipation certificate with `V = x²/2`, `c = k`, `g = a·u·x`, `r = b·x·w`.
///
/// Bidirectional: `σ = ω = |a+b|/(2k)`, `Γ₁ = a²/(4kω)`, `Γ₂ = b²/(4kσ)`.
/// One-sided: `L` from the branch of `ab` against `±a²`, `ε = 1/√L`,
/// `σ = ω = |aL+b|/(2k√L)`. When `aL + b = 0` the one-sided choice is `σ = 0`,
/// `ω = 1/2`; when `a + b = 0` the bidirectional one is `σ = ω =`
/// [`DEGENERATE_MARGIN`].
pub fn linear_lyapunov_certificate(params: &LinearParams, mode: LyapunovMode) -> Result<LyapunovCertificate> {
    params.require_a()?;
    let LinearParams { a, b, k } = *params;
    let (sigma, omega, l) = match mode {
        LyapunovMode::Bidirectional => {
            let m = (a + b).abs() / (2.0 * k);
            let m = if m > 0.0 { m } else { DEGENERATE_MARGIN };
            (m, m, 1.0)
        }
        LyapunovMode::OneSided => {
            let (ab, a2) = (a * b, a * a);
            let l = if ab <= -a2 {
                -b / a
            } else if ab < a2 {
                1.0
            } else {
                b / a
            };
            let m = (a * l + b).abs() / (2.0 * k * l.sqrt());
            if m > 0.0 {
                (m, m, l)
            } else {
                (0.0, 0.5, l)
            }
        }
    };
    let gamma2 = match mode {
        LyapunovMode::Bidirectional => b * b / (4.0 * k * sigma),
        LyapunovMode::OneSided => 0.0,
    };
    Ok(LyapunovCertificate {
        p: 2.0,
        c: k,
        sigma,
        omega,
        gamma1: a * a / (4.0 * k * omega),
        gamma2,
        l,
        v: half_square(),
        g: PairFn::new(format!("{a}*u*x"), move |u, x| a * u[0] * x[0]),
        r: PairFn::new(format!("{b}*x*w"), move |x, w| b * x[0] * w[0]),
        grad_v: Some(identity_grad()),
    })
}

/// `ẋ = a·u − k·x + b·w` with identity output and `D = ℝ`.
#[derive(Debug, Clone)]
pub struct LinearComponent {
    pub params: LinearParams,
    pub sampling_box: BoxRegion,
}

impl LinearComponent {
    pub fn new(params: LinearParams) -> Self {
        LinearComponent {
            params,
            sampling_box: BoxRegion {
                lower: vec![-10.0],
                upper: vec![10.0],
            },
        }
    }

    pub fn with_box(mut self, lo: f64, hi: f64) -> Result<Self> {
        self.sampling_box = BoxRegion::cube(1, lo, hi)?;
        Ok(self)
    }
}

pub fn linear_component(params: LinearParams) -> Arc<dyn ComponentDynamics> {
    Arc::new(LinearComponent::new(params))
}

impl ComponentDynamics for LinearComponent {
    fn state_dim(&self) -> usize {
        1
    }

    fn output_dim(&self) -> usize {
        1
    }

    fn rhs(&self, u: &[f64], x: &[f64], w: &[f64], dx: &mut [f64]) {
        let LinearParams { a, b, k } = self.params;
        dx[0] = a * u[0] - k * x[0] + b * w[0];
    }

    fn output(&self, x: &[f64], y: &mut [f64]) {
        y[0] = x[0];
    }

    fn domain_box(&self) -> BoxRegion {
        self.sampling_box.clone()
    }

    fn name(&self) -> String {
        format!("linear(a={}, b={}, k={})", self.params.a, self.params.b, self.params.k)
    }
}

/// One row of the region table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegionRow {
    pub a: f64,
    pub b: f64,
    pub trajectory: TrajectoryRegions,
    pub lyapunov: LyapunovRegions,
}

pub fn region_table(k: f64, a_values: &[f64], b_values: &[f64]) -> Result<Vec<RegionRow>> {
    let mut rows = Vec::with_capacity(a_values.len() * b_values.len());
    for &a in a_values {
        for &b in b_values {
            let p = LinearParams::new(a, b, k)?;
            rows.push(RegionRow {
                a,
                b,
                trajectory: trajectory_conditions(&p),
                lyapunov: lyapunov_conditions(&p),
            });
        }
    }
    Ok(rows)
}

/// Region table with `1` where a condition holds. Columns are
/// `a,b,traj_one_directional,traj_bidirectional,traj_one_sided,lyap_bidirectional,lyap_one_sided`.
pub fn write_region_csv<W: Write>(rows: &[RegionRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "a,b,traj_one_directional,traj_bidirectional,traj_one_sided,lyap_bidirectional,lyap_one_sided")?;
    let bit = |c: RegionCheck| u8::from(c.holds);
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.a,
            r.b,
            bit(r.trajectory.one_directional),
            bit(r.trajectory.bidirectional),
            bit(r.trajectory.one_sided),
            bit(r.lyapunov.bidirectional),
            bit(r.lyapunov.one_sided)
        )?;
    }
    Ok(())
}
