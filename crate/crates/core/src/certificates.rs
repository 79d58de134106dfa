//! Composition of component certificates into length-uniform string bounds.
//!
//! Trajectory-based certificates give per-component gains `(γ, δ, Q)`;
//! dissipation certificates give `(V, g, r)` with constants `c, σ, ω, Γ₁, Γ₂, L`.
//! Every composition checks its small-gain condition and returns
//! [`Error::SmallGain`] with margin `1 − composed` when it fails.

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::maps::{GradFn, PairFn, StateFn};
use crate::signals::NormOrder;
use crate::string_sim::{QnRule, StringBound};

/// Gains of one component: `‖y‖ ≤ γ‖ū‖ + δ‖w̄‖ + Q(ξ)`.
#[derive(Debug, Clone)]
pub struct ComponentGain {
    pub p: NormOrder,
    pub gamma: f64,
    pub delta: f64,
    pub q: StateFn,
}

impl ComponentGain {
    pub fn new(p: NormOrder, gamma: f64, delta: f64, q: StateFn) -> Result<Self> {
        nonneg("gamma", gamma)?;
        nonneg("delta", delta)?;
        Ok(ComponentGain { p, gamma, delta, q })
    }

    pub fn to_json(&self) -> Value {
        json!({"p": self.p.to_string(), "gamma": self.gamma, "delta": self.delta, "q": self.q.label()})
    }
}

/// Dissipation data `∇V·f ≤ −c|h(x)|^p + γ^p c|h(u)|^p + δ^p c|h(w)|^p`.
#[derive(Debug, Clone)]
pub struct DissipationData {
    pub p: f64,
    pub c: f64,
    pub gamma: f64,
    pub delta: f64,
    pub v: StateFn,
    pub grad_v: GradFn,
}

impl DissipationData {
    pub fn gain(&self) -> Result<ComponentGain> {
        gain_from_dissipation(self.c, self.gamma, self.delta, self.p, self.v.clone())
    }
}

/// Dissipation certificate `∇V·f ≤ −c|h(x)|^p + g(u,x) + r(x,w)` with its
/// cross-term constants.
#[derive(Debug, Clone)]
pub struct LyapunovCertificate {
    pub p: f64,
    pub c: f64,
    pub sigma: f64,
    pub omega: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    /// Weight base for one-sided composition; `1` otherwise.
    pub l: f64,
    pub v: StateFn,
    pub g: PairFn,
    pub r: PairFn,
    pub grad_v: Option<GradFn>,
}

impl LyapunovCertificate {
    pub fn validate(&self) -> Result<()> {
        if !(self.p.is_finite() && self.p >= 1.0) {
            return Err(Error::Input(format!("certificate order must be finite and >= 1, got {}", self.p)));
        }
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(Error::Input(format!("c must be positive, got {}", self.c)));
        }
        nonneg("sigma", self.sigma)?;
        nonneg("omega", self.omega)?;
        nonneg("Gamma1", self.gamma1)?;
        nonneg("Gamma2", self.gamma2)?;
        if !(self.l.is_finite() && self.l >= 1.0) {
            return Err(Error::Input(format!("weight L must be >= 1, got {}", self.l)));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Value {
        json!({
            "p": self.p, "c": self.c, "sigma": self.sigma, "omega": self.omega,
            "Gamma1": self.gamma1, "Gamma2": self.gamma2, "L": self.l,
            "V": self.v.label(), "g": self.g.label(), "r": self.r.label(),
        })
    }
}

fn nonneg(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::Input(format!("{name} must be finite and >= 0, got {v}")))
    }
}

fn small_gain(condition: String, composed: f64) -> Error {
    Error::SmallGain {
        condition,
        margin: 1.0 - composed,
    }
}

/// `θ(γ, δ) = γ + δ` if `δ < γ`, else `2√(γδ)`.
pub fn theta(gamma: f64, delta: f64) -> Result<f64> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::Input(format!("theta needs gamma > 0, got {gamma}")));
    }
    nonneg("delta", delta)?;
    Ok(if delta < gamma {
        gamma + delta
    } else {
        2.0 * (gamma * delta).sqrt()
    })
}

/// Bidirectional composition, valid when `γ + δ < 1`.
pub fn compose_bidirectional(gain: &ComponentGain) -> Result<StringBound> {
    let s = gain.gamma + gain.delta;
    if s >= 1.0 {
        return Err(small_gain(format!("gamma + delta = {s} >= 1"), s));
    }
    let d = 1.0 - s;
    StringBound::new(
        gain.p,
        gain.gamma / d,
        gain.delta / d,
        QnRule::ScaledMax {
            factor: 1.0 / d,
            q: gain.q.clone(),
        },
    )
}

/// One-directional composition, valid when `δ = 0` and `γ ≤ 1`.
pub fn compose_one_directional(gain: &ComponentGain) -> Result<StringBound> {
    if gain.delta != 0.0 {
        return Err(Error::Precondition(format!(
            "one-directional composition needs delta = 0, got {}",
            gain.delta
        )));
    }
    if gain.gamma > 1.0 {
        return Err(Error::Precondition(format!(
            "one-directional composition needs gamma <= 1, got {}",
            gain.gamma
        )));
    }
    StringBound::new(
        gain.p,
        gain.gamma,
        0.0,
        QnRule::ScaledSum {
            factor: 1.0,
            q: gain.q.clone(),
        },
    )
}

/// `Q_n` factor of the one-sided composition for length `n`.
pub fn one_sided_factor(gamma: f64, delta: f64, n: usize) -> Result<f64> {
    let th = theta(gamma, delta)?;
    let growth = (delta / gamma).powf((n.max(1) - 1) as f64 / 2.0).max(1.0);
    Ok(growth / (1.0 - th))
}

/// One-sided composition for a string of length `n`, valid when `θ(γ, δ) < 1`.
pub fn compose_one_sided(gain: &ComponentGain, n: usize) -> Result<StringBound> {
    if n == 0 {
        return Err(Error::Input("string length must be at least 1".into()));
    }
    let th = theta(gain.gamma, gain.delta)?;
    if th >= 1.0 {
        return Err(small_gain(format!("theta(gamma, delta) = {th} >= 1"), th));
    }
    let factor = one_sided_factor(gain.gamma, gain.delta, n)?;
    Ok(StringBound::new(
        gain.p,
        gain.gamma / (1.0 - th),
        0.0,
        QnRule::ScaledMax {
            factor,
            q: gain.q.clone(),
        },
    )?
    .for_length(n))
}

/// Trajectory gain from dissipation data: `Q(ξ) = (V(ξ)/c)^{1/p}`.
pub fn gain_from_dissipation(c: f64, gamma: f64, delta: f64, p: f64, v: StateFn) -> Result<ComponentGain> {
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::Input(format!("c must be positive, got {c}")));
    }
    let order = NormOrder::finite(p)?;
    let label = format!("({}/{c})^(1/{p})", v.label());
    let q = StateFn::new(label, move |x| (v.eval(x).max(0.0) / c).powf(1.0 / p));
    ComponentGain::new(order, gamma, delta, q)
}

fn lyapunov_scale(cert: &LyapunovCertificate) -> Result<f64> {
    cert.validate()?;
    let s = cert.sigma + cert.omega;
    if s >= 1.0 {
        return Err(small_gain(format!("sigma + omega = {s} >= 1"), s));
    }
    Ok(1.0 / (cert.c * (1.0 - s)))
}

/// Bidirectional Lyapunov composition, valid when `σ + ω < 1`.
pub fn compose_lyapunov_bidirectional(cert: &LyapunovCertificate) -> Result<StringBound> {
    let scale = lyapunov_scale(cert)?;
    let e = 1.0 / cert.p;
    StringBound::new(
        NormOrder::Finite(cert.p),
        (cert.gamma1 * scale).powf(e),
        (cert.gamma2 * scale).powf(e),
        QnRule::WeightedSum {
            scale,
            base: 1.0,
            exponent: e,
            v: cert.v.clone(),
        },
    )
}

/// One-sided Lyapunov composition with weights `L^{i−1}`, valid when `σ + ω < 1`.
pub fn compose_lyapunov_one_sided(cert: &LyapunovCertificate) -> Result<StringBound> {
    let scale = lyapunov_scale(cert)?;
    let e = 1.0 / cert.p;
    StringBound::new(
        NormOrder::Finite(cert.p),
        (cert.gamma1 * scale).powf(e),
        0.0,
        QnRule::WeightedSum {
            scale,
            base: cert.l,
            exponent: e,
            v: cert.v.clone(),
        },
    )
}
