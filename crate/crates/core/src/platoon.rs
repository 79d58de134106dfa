//! Vehicle string with bidirectional cruise control and a barrier potential.
//!
//! Original coordinates are gaps `s_i` and speeds `v_i` with
//! `ṡ_i = v_{i−1} − v_i`, `v̇_i = F_i`. The change of variables `z_i = s_i − λ`,
//! `y_i = (v_i − f_i)/√((v_max − v_i)v_i)` turns the closed loop into a
//! homogeneous string of two-dimensional components, certified with
//! `V(z, y) = v_max² y²/2 + Φ(λ + z)`.
//!
//! Concrete choices: `Φ(x) = q(λ − x)⁴/(x − L)` on `(L, λ)` and zero beyond,
//! `b(x) = A·tanh(x)`.

use std::io::Write;
use std::sync::Arc;

use serde::Serialize;

use crate::certificates::{compose_lyapunov_bidirectional, LyapunovCertificate};
use crate::error::{Error, Result};
use crate::linear_string::LyapunovMode;
use crate::lyapunov_check::dissipation_budget;
use crate::maps::{GradFn, PairFn, StateFn};
use crate::signals::{fmt_f64, Grid, TimeSeries};
use crate::string_sim::{
    check_estimate, integrate, BoxRegion, ComponentDynamics, ExitReason, GuardedRk4, SlackReport, StepFailure,
    StringBound, StringConfig, Trajectory,
};

/// Vehicle and controller parameters. Lengths in m, speeds in m/s, `mu` in 1/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlatoonParams {
    pub n: usize,
    pub l_safe: f64,
    pub lambda: f64,
    pub v_max: f64,
    pub v_star: f64,
    pub mu: f64,
    /// Potential scale `q`.
    pub q: f64,
    /// Coupling amplitude `A` of `b(x) = A·tanh(x)`.
    pub a_amp: f64,
}

impl Default for PlatoonParams {
    fn default() -> Self {
        PlatoonParams {
            n: 10,
            l_safe: 5.0,
            lambda: 25.0,
            v_max: 35.0,
            v_star: 30.0,
            mu: 1.0,
            q: 1.0,
            a_amp: 2.5,
        }
    }
}

impl PlatoonParams {
    pub fn validate(&self) -> Result<()> {
        let fin = [self.l_safe, self.lambda, self.v_max, self.v_star, self.mu, self.q, self.a_amp]
            .iter()
            .all(|v| v.is_finite());
        if !fin {
            return Err(Error::Input("platoon parameters must be finite".into()));
        }
        if self.n < 2 {
            return Err(Error::Input(format!("a platoon needs at least 2 vehicles, got {}", self.n)));
        }
        if self.l_safe <= 0.0 {
            return Err(Error::Input(format!("safety distance must be positive, got {}", self.l_safe)));
        }
        if self.lambda <= self.l_safe {
            return Err(Error::Input(format!(
                "interaction distance {} must exceed the safety distance {}",
                self.lambda, self.l_safe
            )));
        }
        if self.v_max <= 0.0 || !(self.v_star > 0.0 && self.v_star < self.v_max) {
            return Err(Error::Input(format!(
                "need 0 < v* < v_max, got v* = {}, v_max = {}",
                self.v_star, self.v_max
            )));
        }
        if self.mu <= 0.0 || self.q <= 0.0 {
            return Err(Error::Input("mu and q must be positive".into()));
        }
        let cap = self.v_star.min(self.v_max - self.v_star);
        if !(self.a_amp > 0.0 && self.a_amp < cap) {
            return Err(Error::Range {
                what: "coupling amplitude A",
                value: self.a_amp,
                lo: 0.0,
                hi: cap,
            });
        }
        Ok(())
    }

    pub fn with_n(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    /// `Φ′(x)` for `x > L`, no domain check.
    #[inline]
    fn dphi(&self, x: f64) -> f64 {
        if x >= self.lambda {
            return 0.0;
        }
        let m = self.lambda - x;
        let d = x - self.l_safe;
        -self.q * (4.0 * m * m * m / d + m * m * m * m / (d * d))
    }

    #[inline]
    fn ddphi(&self, x: f64) -> f64 {
        if x >= self.lambda {
            return 0.0;
        }
        let m = self.lambda - x;
        let d = x - self.l_safe;
        self.q * (12.0 * m * m / d + 8.0 * m * m * m / (d * d) + 2.0 * m.powi(4) / (d * d * d))
    }

    #[inline]
    fn b(&self, x: f64) -> f64 {
        self.a_amp * x.tanh()
    }

    #[inline]
    fn db(&self, x: f64) -> f64 {
        let t = x.tanh();
        self.a_amp * (1.0 - t * t)
    }
}

/// `Φ` and its first three derivatives at one gap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Potential {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
}

pub fn potential(x: f64, params: &PlatoonParams) -> Result<Potential> {
    if !(x > params.l_safe) {
        return Err(Error::Domain(format!("gap {x} is not above the safety distance {}", params.l_safe)));
    }
    if x >= params.lambda {
        return Ok(Potential {
            value: 0.0,
            d1: 0.0,
            d2: 0.0,
            d3: 0.0,
        });
    }
    let q = params.q;
    let m = params.lambda - x;
    let d = x - params.l_safe;
    let (m2, m3, m4) = (m * m, m * m * m, m.powi(4));
    Ok(Potential {
        value: q * m4 / d,
        d1: -q * (4.0 * m3 / d + m4 / (d * d)),
        d2: q * (12.0 * m2 / d + 8.0 * m3 / (d * d) + 2.0 * m4 / d.powi(3)),
        d3: -q * (24.0 * m / d + 36.0 * m2 / (d * d) + 24.0 * m3 / d.powi(3) + 6.0 * m4 / d.powi(4)),
    })
}

/// `(b(x), b′(x))`.
pub fn b_fn(x: f64, params: &PlatoonParams) -> (f64, f64) {
    (params.b(x), params.db(x))
}

/// `β(v, y) = (v_max³(v + y) − 2v_max² y v) / (2(v_max − v)² v²)` on `(0, v_max)²`.
pub fn beta(v: f64, y: f64, params: &PlatoonParams) -> Result<f64> {
    let vm = params.v_max;
    for (name, s) in [("v", v), ("y", y)] {
        if !(s > 0.0 && s < vm) {
            return Err(Error::Domain(format!("beta needs {name} in (0, {vm}), got {s}")));
        }
    }
    Ok(beta_unchecked(v, y, vm))
}

#[inline]
fn beta_unchecked(v: f64, y: f64, vm: f64) -> f64 {
    let vm2 = vm * vm;
    (vm2 * vm * (v + y) - 2.0 * vm2 * y * v) / (2.0 * (vm - v).powi(2) * v * v)
}

/// Positive root `p(y, x)` relating speed to the normalized speed error.
pub fn p_fn(y: f64, x: f64, params: &PlatoonParams) -> f64 {
    let (vm, vs) = (params.v_max, params.v_star);
    let bx = params.b(x);
    let disc = y * y * vm * vm + 4.0 * (vm - vs + bx) * (vs - bx);
    (y * (vm - 2.0 * vs + 2.0 * bx) + disc.sqrt()) / (2.0 * (1.0 + y * y))
}

/// `κ(y, x) = y·p(y, x) − b(x)`.
pub fn kappa(y: f64, x: f64, params: &PlatoonParams) -> f64 {
    y * p_fn(y, x, params) - params.b(x)
}

/// Gaps and speeds of vehicles `1..=n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlatoonState {
    pub s: Vec<f64>,
    pub v: Vec<f64>,
}

impl PlatoonState {
    /// All gaps `gap` and all speeds `v*`.
    pub fn uniform(params: &PlatoonParams, gap: f64) -> Self {
        PlatoonState {
            s: vec![gap; params.n],
            v: vec![params.v_star; params.n],
        }
    }

    pub fn check(&self, params: &PlatoonParams) -> Result<()> {
        if self.s.len() != self.v.len() || self.s.is_empty() {
            return Err(Error::Input("gaps and speeds must be non-empty and of equal length".into()));
        }
        if let Some(i) = self.s.iter().position(|s| !(*s > params.l_safe)) {
            return Err(Error::Domain(format!(
                "gap s_{} = {} is not above the safety distance",
                i + 1,
                self.s[i]
            )));
        }
        if let Some(i) = self.v.iter().position(|v| !(*v > 0.0 && *v < params.v_max)) {
            return Err(Error::Domain(format!("speed v_{} = {} outside (0, v_max)", i + 1, self.v[i])));
        }
        Ok(())
    }
}

/// Shifted gaps `z_i = s_i − λ` and normalized speed errors `y_i`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransformedState {
    pub z: Vec<f64>,
    pub y: Vec<f64>,
}

impl TransformedState {
    /// Per-component states `(z_i, y_i)`.
    pub fn components(&self) -> Vec<Vec<f64>> {
        self.z.iter().zip(&self.y).map(|(z, y)| vec![*z, *y]).collect()
    }
}

/// `Φ′(s_{i+1}) − Φ′(s_i)` with `s_{n+1} = λ`.
fn coupling_args(s: &[f64], params: &PlatoonParams) -> Vec<f64> {
    let n = s.len();
    (0..n)
        .map(|i| {
            let next = if i + 1 < n { params.dphi(s[i + 1]) } else { 0.0 };
            next - params.dphi(s[i])
        })
        .collect()
}

/// Acceleration `F_i` of vehicle `i` (0-based). `v_prev` is the speed of the
/// vehicle ahead, the leader for `i = 0`. The last vehicle sees `s_{n+1} = λ`.
pub fn controller(state: &PlatoonState, i: usize, v_prev: f64, params: &PlatoonParams) -> Result<f64> {
    state.check(params)?;
    let n = state.s.len();
    if i >= n {
        return Err(Error::Input(format!("vehicle index {i} out of range for {n} vehicles")));
    }
    if !(v_prev > 0.0 && v_prev < params.v_max) {
        return Err(Error::Domain(format!("leading speed {v_prev} outside (0, v_max)")));
    }
    let (s, v) = (&state.s, &state.v);
    let s_next = if i + 1 < n { s[i + 1] } else { params.lambda };
    let v_next = if i + 1 < n { v[i + 1] } else { v[i] };
    Ok(accel(params, s[i], s_next, v_prev, v[i], v_next))
}

#[inline]
fn accel(params: &PlatoonParams, s_i: f64, s_next: f64, v_prev: f64, v_i: f64, v_next: f64) -> f64 {
    let vm = params.v_max;
    let (d1_i, d1_n) = (params.dphi(s_i), params.dphi(s_next));
    let (d2_i, d2_n) = (params.ddphi(s_i), params.ddphi(s_next));
    let arg = d1_n - d1_i;
    let f = params.v_star - params.b(arg);
    let z = -params.db(arg) * (d2_n * (v_i - v_next) - d2_i * (v_prev - v_i));
    let inner = vm * vm * (z - params.mu * (v_i - f)) / (v_i * (vm - v_i)) + d1_i - d1_n;
    inner / beta_unchecked(v_i, f, vm)
}

pub fn transform_state(state: &PlatoonState, params: &PlatoonParams) -> Result<TransformedState> {
    state.check(params)?;
    let args = coupling_args(&state.s, params);
    let vm = params.v_max;
    let y = state
        .v
        .iter()
        .zip(&args)
        .map(|(v, x)| (v - (params.v_star - params.b(*x))) / ((vm - v) * v).sqrt())
        .collect();
    Ok(TransformedState {
        z: state.s.iter().map(|s| s - params.lambda).collect(),
        y,
    })
}

pub fn inverse_transform(ts: &TransformedState, params: &PlatoonParams) -> Result<PlatoonState> {
    if ts.z.len() != ts.y.len() || ts.z.is_empty() {
        return Err(Error::Input("z and y must be non-empty and of equal length".into()));
    }
    let lo = params.l_safe - params.lambda;
    if let Some(i) = ts.z.iter().position(|z| !(*z > lo)) {
        return Err(Error::Domain(format!("z_{} = {} is not above {lo}", i + 1, ts.z[i])));
    }
    if ts.y.iter().any(|y| !y.is_finite()) {
        return Err(Error::Domain("non-finite speed error".into()));
    }
    let s: Vec<f64> = ts.z.iter().map(|z| z + params.lambda).collect();
    let args = coupling_args(&s, params);
    let v = ts
        .y
        .iter()
        .zip(&args)
        .map(|(y, x)| y * p_fn(*y, *x, params) + params.v_star - params.b(*x))
        .collect();
    Ok(PlatoonState { s, v })
}

/// Leader input in transformed form and whether it lies in the certified regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LeaderInput {
    pub y0: f64,
    /// `|y0| ≤ Λ` (closed comparison).
    pub certified: bool,
}

pub fn leader_input(v0: f64, s1: f64, params: &PlatoonParams) -> Result<LeaderInput> {
    if !(v0 > 0.0 && v0 < params.v_max) {
        return Err(Error::Domain(format!("leader speed {v0} outside (0, v_max)")));
    }
    let d1 = potential(s1, params)?.d1;
    let y0 = (v0 - params.v_star + params.b(d1)) / ((params.v_max - v0) * v0).sqrt();
    Ok(LeaderInput {
        y0,
        certified: y0.abs() <= platoon_constants(params).lambda_bound,
    })
}

/// Leader speed producing `y0` at first gap `s1`; inverse of [`leader_input`].
pub fn leader_speed(y0: f64, s1: f64, params: &PlatoonParams) -> Result<f64> {
    let d1 = potential(s1, params)?.d1;
    Ok(y0 * p_fn(y0, d1, params) + params.v_star - params.b(d1))
}

/// Certified constants of the transformed string.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlatoonConstants {
    /// Half the magnitude of `b` at `−∞`.
    pub varpi: f64,
    /// Solution of `b(−X) = −ϖ`.
    pub x: f64,
    /// Minimum of `b′` on `[−X, 0]`.
    pub eta: f64,
    /// Largest certified leader input `Λ`.
    pub lambda_bound: f64,
    pub c: f64,
    pub gamma1: f64,
    /// Slope of the certified bound, `√(Γ₁/c)`.
    pub k: f64,
}

pub fn platoon_constants(params: &PlatoonParams) -> PlatoonConstants {
    let a = params.a_amp;
    let vm = params.v_max;
    let varpi = 0.5 * a;
    let x = 0.5f64.atanh();
    // b′ = A(1 − tanh²) decreases in |s|, so its minimum on [−X, 0] sits at −X
    let eta = params.db(-x);
    let c = params.mu * vm * vm;
    let gamma1 = 25.0 * vm * vm / (64.0 * eta);
    PlatoonConstants {
        varpi,
        x,
        eta,
        lambda_bound: 4.0 * varpi / (5.0 * vm),
        c,
        gamma1,
        k: (gamma1 / c).sqrt(),
    }
}

/// Transformed component `x = (z, y)`, output `y`.
#[derive(Debug, Clone)]
pub struct PlatoonComponent {
    pub params: PlatoonParams,
    /// Bound on `|u_y|` in the upstream set; `Λ` when certified, `∞` for exploratory runs.
    pub upstream_limit: f64,
}

impl PlatoonComponent {
    pub fn new(params: PlatoonParams) -> Self {
        PlatoonComponent {
            params,
            upstream_limit: platoon_constants(&params).lambda_bound,
        }
    }

    pub fn exploratory(params: PlatoonParams) -> Self {
        PlatoonComponent {
            params,
            upstream_limit: f64::INFINITY,
        }
    }
}

pub fn transformed_component(params: &PlatoonParams) -> Arc<dyn ComponentDynamics> {
    Arc::new(PlatoonComponent::new(*params))
}

impl ComponentDynamics for PlatoonComponent {
    fn state_dim(&self) -> usize {
        2
    }

    fn output_dim(&self) -> usize {
        1
    }

    fn rhs(&self, u: &[f64], x: &[f64], w: &[f64], dx: &mut [f64]) {
        let p = &self.params;
        let lam = p.lambda;
        let d_u = p.dphi(u[0] + lam);
        let d_x = p.dphi(x[0] + lam);
        let d_w = p.dphi(w[0] + lam);
        let up = d_x - d_u;
        let down = d_w - d_x;
        let p_down = p_fn(x[1], down, p);
        dx[0] = kappa(u[1], up, p) - (x[1] * p_down - p.b(down));
        dx[1] = -p.mu * x[1] - down * p_down / (p.v_max * p.v_max);
    }

    fn output(&self, x: &[f64], y: &mut [f64]) {
        y[0] = x[1];
    }

    fn in_domain(&self, x: &[f64]) -> bool {
        x[0] > self.params.l_safe - self.params.lambda && x[1].is_finite()
    }

    fn in_upstream_set(&self, u: &[f64]) -> bool {
        u[0] >= 0.0 && u[1].abs() <= self.upstream_limit
    }

    fn in_downstream_set(&self, w: &[f64]) -> bool {
        w[0] >= 0.0 && w[1].is_finite()
    }

    fn domain_box(&self) -> BoxRegion {
        let p = &self.params;
        let lo = p.l_safe - p.lambda;
        BoxRegion {
            lower: vec![lo + 1e-3 * (p.lambda - p.l_safe), -2.0],
            upper: vec![p.lambda, 2.0],
        }
    }

    fn upstream_box(&self) -> BoxRegion {
        let lim = if self.upstream_limit.is_finite() { self.upstream_limit } else { 2.0 };
        BoxRegion {
            lower: vec![0.0, -lim],
            upper: vec![self.params.lambda, lim],
        }
    }

    fn downstream_box(&self) -> BoxRegion {
        BoxRegion {
            lower: vec![0.0, -2.0],
            upper: vec![self.params.lambda, 2.0],
        }
    }

    fn name(&self) -> String {
        "platoon".into()
    }
}

/// `V(z, y) = v_max² y²/2 + Φ(λ + z)`.
pub fn lyapunov_v(x: &[f64], params: &PlatoonParams) -> f64 {
    let pot = potential(x[0] + params.lambda, params).map(|p| p.value).unwrap_or(f64::INFINITY);
    0.5 * params.v_max * params.v_max * x[1] * x[1] + pot
}

/// Dissipation certificate of the transformed component: `c = μv_max²`,
/// `σ = ω = Γ₂ = 0`, `Γ₁ = 25v_max²/(64η)`.
pub fn platoon_certificate(params: &PlatoonParams) -> LyapunovCertificate {
    let pc = platoon_constants(params);
    let p = *params;
    let (pv, pg, pr, pd) = (p, p, p, p);
    LyapunovCertificate {
        p: 2.0,
        c: pc.c,
        sigma: 0.0,
        omega: 0.0,
        gamma1: pc.gamma1,
        gamma2: 0.0,
        l: 1.0,
        v: StateFn::new("v_max^2 y^2/2 + Phi(lambda + z)", move |x| lyapunov_v(x, &pv)),
        g: PairFn::new("Phi'(lambda+z) kappa(u_y, Phi'(z+lambda) - Phi'(u_z+lambda))", move |u, x| {
            let lam = pg.lambda;
            let d_x = pg.dphi(x[0] + lam);
            d_x * kappa(u[1], d_x - pg.dphi(u[0] + lam), &pg)
        }),
        r: PairFn::new("-X b(X) - Phi'(w_z+lambda) kappa(y, X)", move |x, w| {
            let lam = pr.lambda;
            let d_w = pr.dphi(w[0] + lam);
            let arg = d_w - pr.dphi(x[0] + lam);
            -arg * pr.b(arg) - d_w * kappa(x[1], arg, &pr)
        }),
        grad_v: Some(GradFn::new("(Phi'(lambda+z), v_max^2 y)", move |x, out| {
            out[0] = pd.dphi(x[0] + pd.lambda);
            out[1] = pd.v_max * pd.v_max * x[1];
        })),
    }
}

/// Certified bound `‖y_i‖ ≤ K‖y_0‖ + (Σ V(ξ_i)/(μ v_max²))^{1/2}`.
pub fn platoon_bound(params: &PlatoonParams) -> Result<StringBound> {
    compose_lyapunov_bidirectional(&platoon_certificate(params))
}

/// Solution in original coordinates on a uniform grid.
#[derive(Debug, Clone)]
pub struct OriginalTrajectory {
    pub grid: Grid,
    /// `s[i][k]`: gap of vehicle `i` at grid point `k`.
    pub s: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub exit: ExitReason,
}

impl OriginalTrajectory {
    pub fn state(&self, k: usize) -> PlatoonState {
        PlatoonState {
            s: self.s.iter().map(|c| c[k]).collect(),
            v: self.v.iter().map(|c| c[k]).collect(),
        }
    }

    /// Columns `t,s_1..s_n,v_1..v_n`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let n = self.s.len();
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("s_{i}")));
        header.extend((1..=n).map(|i| format!("v_{i}")));
        writeln!(out, "{}", header.join(","))?;
        for k in 0..self.grid.count {
            let mut line = fmt_f64(self.grid.time(k));
            for col in self.s.iter().chain(&self.v) {
                line.push(',');
                line.push_str(&fmt_f64(col[k]));
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

/// Columns `t,z_1..z_n,y_1..y_n` of a transformed platoon trajectory.
pub fn write_transformed_csv<W: Write>(traj: &Trajectory, mut out: W) -> std::io::Result<()> {
    let n = traj.n();
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("z_{i}")));
    header.extend((1..=n).map(|i| format!("y_{i}")));
    writeln!(out, "{}", header.join(","))?;
    for k in 0..traj.len() {
        let mut line = fmt_f64(traj.grid().time(k));
        for j in 0..2 {
            for s in traj.states() {
                line.push(',');
                line.push_str(&fmt_f64(s.sample(k)[j]));
            }
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Integrates the closed loop in original coordinates. The leader speed is
/// recovered from the held transformed input `y0` and the current first gap.
pub fn simulate_original(
    params: &PlatoonParams,
    initial: &PlatoonState,
    y0: &TimeSeries,
    t_end: f64,
    base_step: f64,
) -> Result<OriginalTrajectory> {
    params.validate()?;
    initial.check(params)?;
    if y0.dim() != 1 {
        return Err(Error::Input("leader input must be scalar".into()));
    }
    if !(base_step.is_finite() && base_step > 0.0) {
        return Err(Error::Input(format!("base step must be positive, got {base_step}")));
    }
    let t0 = y0.t0();
    if !(t_end.is_finite() && t_end > t0) {
        return Err(Error::Input(format!("end time must exceed {t0}, got {t_end}")));
    }
    let n = initial.s.len();
    let steps = ((t_end - t0) / base_step).round().max(1.0) as usize;
    let p = *params;
    // interleaved (s_1, v_1, s_2, v_2, ...)
    let mut x: Vec<f64> = initial.s.iter().zip(&initial.v).flat_map(|(s, v)| [*s, *v]).collect();
    let mut deriv = |t: f64, x: &[f64], dx: &mut [f64]| {
        let yl = y0.hold(t)[0];
        let v0 = yl * p_fn(yl, p.dphi(x[0]), &p) + p.v_star - p.b(p.dphi(x[0]));
        for i in 0..n {
            let (s_i, v_i) = (x[2 * i], x[2 * i + 1]);
            let v_prev = if i == 0 { v0 } else { x[2 * i - 1] };
            let (s_next, v_next) = if i + 1 < n { (x[2 * i + 2], x[2 * i + 3]) } else { (p.lambda, v_i) };
            dx[2 * i] = v_prev - v_i;
            dx[2 * i + 1] = accel(&p, s_i, s_next, v_prev, v_i, v_next);
        }
    };
    let outside = |x: &[f64]| {
        x.chunks_exact(2)
            .position(|c| !(c[0] > p.l_safe && c[1] > 0.0 && c[1] < p.v_max))
            .map(|i| i + 1)
    };
    let mut s: Vec<Vec<f64>> = vec![Vec::with_capacity(steps + 1); n];
    let mut v: Vec<Vec<f64>> = vec![Vec::with_capacity(steps + 1); n];
    let record = |x: &[f64], s: &mut Vec<Vec<f64>>, v: &mut Vec<Vec<f64>>| {
        for i in 0..n {
            s[i].push(x[2 * i]);
            v[i].push(x[2 * i + 1]);
        }
    };
    record(&x, &mut s, &mut v);
    let mut rk = GuardedRk4::new(2 * n, 2);
    let mut exit = ExitReason::None;
    for step in 0..steps {
        let t = t0 + step as f64 * base_step;
        match rk.advance(t, base_step, &mut x, &mut deriv, &outside)? {
            Ok(()) => record(&x, &mut s, &mut v),
            Err((fail, at)) => {
                exit = match fail {
                    StepFailure::Domain(i) => ExitReason::DomainExit { component: i, t: at },
                    StepFailure::Stage(i) => ExitReason::StepFloor { component: i, t: at },
                };
                break;
            }
        }
    }
    let grid = Grid::new(t0, base_step, s[0].len())?;
    Ok(OriginalTrajectory { grid, s, v, exit })
}

/// Options of a certified-bound verification run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VerifyOptions {
    pub t_end: f64,
    pub base_step: f64,
    /// Proceed when the leader input leaves `[−Λ, Λ]`, flagging the report.
    pub allow_uncertified: bool,
    /// Also integrate in original coordinates and compare.
    pub compare_original: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            t_end: 60.0,
            base_step: 1e-3,
            allow_uncertified: false,
            compare_original: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub struct PlatoonReport {
    pub n: usize,
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "Lambda")]
    pub lambda_bound: f64,
    pub leader_peak: f64,
    pub certified_regime: bool,
    pub min_slack: f64,
    pub slack: SlackReport,
    pub min_budget_slack: f64,
    pub collision_free: bool,
    pub speed_bounds_ok: bool,
    pub min_gap: f64,
    pub speed_range: (f64, f64),
    /// Largest `|transform(original) − transformed|` over the grid.
    pub transform_mismatch: Option<f64>,
    pub exit: ExitReason,
}

impl PlatoonReport {
    /// Completed run inside the certified regime, nonnegative slack up to `tol`,
    /// and the safety checks hold.
    pub fn passes(&self, tol: f64) -> bool {
        self.exit == ExitReason::None
            && self.certified_regime
            && self.min_slack >= -tol
            && self.min_budget_slack >= -tol
            && self.collision_free
            && self.speed_bounds_ok
            && self.transform_mismatch.is_none_or(|m| m <= tol)
    }
}

#[derive(Debug, Clone)]
pub struct PlatoonRun {
    pub report: PlatoonReport,
    pub transformed: Trajectory,
    pub original: Option<OriginalTrajectory>,
}

/// Simulates the transformed string from `initial` under leader input `y0` and
/// checks the certified bound and the integrated dissipation budget.
pub fn verify_certified_bound(
    params: &PlatoonParams,
    initial: &PlatoonState,
    y0: &TimeSeries,
    opts: &VerifyOptions,
) -> Result<PlatoonRun> {
    params.validate()?;
    initial.check(params)?;
    if initial.s.len() != params.n {
        return Err(Error::Input(format!(
            "initial state has {} vehicles, parameters say {}",
            initial.s.len(),
            params.n
        )));
    }
    if y0.dim() != 1 {
        return Err(Error::Input("leader input must be scalar".into()));
    }
    let consts = platoon_constants(params);
    let peak = y0.data().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let certified = peak <= consts.lambda_bound;
    if !certified && !opts.allow_uncertified {
        return Err(Error::CertifiedRegime {
            peak,
            bound: consts.lambda_bound,
        });
    }
    let comp: Arc<dyn ComponentDynamics> = if certified {
        Arc::new(PlatoonComponent::new(*params))
    } else {
        Arc::new(PlatoonComponent::exploratory(*params))
    };
    let u = TimeSeries::from_fn(y0.grid(), 2, |t, o| {
        o[0] = 0.0;
        o[1] = y0.hold(t)[0];
    })?;
    let w = TimeSeries::zeros(y0.grid(), 2)?;
    let cfg = StringConfig::new(comp, params.n, u, w)?;
    let xi = transform_state(initial, params)?.components();
    let traj = integrate(&cfg, &xi, opts.t_end, opts.base_step)?;

    let bound = platoon_bound(params)?;
    let slack = check_estimate(&traj, &bound, &xi)?;
    let cert = platoon_certificate(params);
    let budget = dissipation_budget(&traj, &cert, LyapunovMode::Bidirectional)?;
    let min_budget_slack = budget.data().iter().cloned().fold(f64::INFINITY, f64::min);

    let mut min_gap = f64::INFINITY;
    let mut speed_range = (f64::INFINITY, f64::NEG_INFINITY);
    let mut z = vec![0.0; params.n];
    let mut y = vec![0.0; params.n];
    let mut states = Vec::with_capacity(traj.len());
    for k in 0..traj.len() {
        for (i, s) in traj.states().iter().enumerate() {
            z[i] = s.sample(k)[0];
            y[i] = s.sample(k)[1];
        }
        let st = inverse_transform(
            &TransformedState {
                z: z.clone(),
                y: y.clone(),
            },
            params,
        )?;
        for (s, v) in st.s.iter().zip(&st.v) {
            min_gap = min_gap.min(*s);
            speed_range = (speed_range.0.min(*v), speed_range.1.max(*v));
        }
        states.push(st);
    }

    let original = if opts.compare_original {
        Some(simulate_original(params, initial, y0, opts.t_end, opts.base_step)?)
    } else {
        None
    };
    let transform_mismatch = match &original {
        Some(orig) => {
            let count = orig.grid.count.min(traj.len());
            let mut worst = 0.0_f64;
            for k in 0..count {
                let ts = transform_state(&orig.state(k), params)?;
                for (i, s) in traj.states().iter().enumerate() {
                    let x = s.sample(k);
                    worst = worst.max((ts.z[i] - x[0]).abs()).max((ts.y[i] - x[1]).abs());
                }
            }
            if orig.grid.count != traj.len() {
                worst = f64::INFINITY;
            }
            Some(worst)
        }
        None => None,
    };

    let report = PlatoonReport {
        n: params.n,
        k: consts.k,
        lambda_bound: consts.lambda_bound,
        leader_peak: peak,
        certified_regime: certified,
        min_slack: slack.min_slack,
        slack,
        min_budget_slack,
        collision_free: min_gap > params.l_safe,
        speed_bounds_ok: speed_range.0 > 0.0 && speed_range.1 < params.v_max,
        min_gap,
        speed_range,
        transform_mismatch,
        exit: traj.exit_reason(),
    };
    Ok(PlatoonRun {
        report,
        transformed: traj,
        original,
    })
}

/// Transformed leader input `y0(t) = amplitude·sin(2π·frequency·t)` on `[0, t_end]`.
pub fn sinusoidal_leader(amplitude: f64, frequency: f64, t_end: f64, dt: f64) -> Result<TimeSeries> {
    let spec = crate::signals::InputSpec::sinusoid(amplitude, frequency);
    crate::signals::generate_input(&spec, Grid::span(t_end, dt)?, 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn pp() -> PlatoonParams {
        PlatoonParams::default()
    }

    #[test]
    fn potential_values() {
        let p = pp();
        let v = potential(15.0, &p).unwrap();
        assert_relative_eq!(v.value, 1000.0, epsilon = 1e-9);
        assert_relative_eq!(v.d1, -500.0, epsilon = 1e-9);
        assert_relative_eq!(v.d2, 220.0, epsilon = 1e-9);
        for x in [25.0, 30.0, 1e6] {
            assert_eq!(potential(x, &p).unwrap(), Potential { value: 0.0, d1: 0.0, d2: 0.0, d3: 0.0 });
        }
        assert!(matches!(potential(5.0, &p), Err(Error::Domain(_))));
        let near = potential(5.0 + 1e-6, &p).unwrap().value;
        assert!(near > 1e11);
        assert!(potential(5.0 + 1e-7, &p).unwrap().value > near);
    }

    #[test]
    fn potential_derivatives_match_differences() {
        let p = pp();
        for x in [6.0, 10.0, 15.0, 22.0, 24.9] {
            let h = 1e-5;
            let a = potential(x - h, &p).unwrap();
            let b = potential(x + h, &p).unwrap();
            let v = potential(x, &p).unwrap();
            assert_relative_eq!(v.d1, (b.value - a.value) / (2.0 * h), max_relative = 1e-6);
            assert_relative_eq!(v.d2, (b.d1 - a.d1) / (2.0 * h), max_relative = 1e-6);
            assert_relative_eq!(v.d3, (b.d2 - a.d2) / (2.0 * h), max_relative = 1e-6);
        }
    }

    #[test]
    fn b_and_beta() {
        let p = pp();
        assert_eq!(b_fn(0.0, &p), (0.0, 2.5));
        assert_relative_eq!(b_fn(-50.0, &p).0, -2.5, epsilon = 1e-12);
        assert_relative_eq!(beta(30.0, 30.0, &p).unwrap(), 367_500.0 / 45_000.0, epsilon = 1e-12);
        assert_relative_eq!(beta(17.5, 17.5, &p).unwrap(), 4.0, epsilon = 1e-12);
        assert!(beta(0.0, 1.0, &p).is_err());
        assert!(beta(1.0, 35.0, &p).is_err());
    }

    #[test]
    fn p_values() {
        let p = pp();
        assert_relative_eq!(p_fn(0.0, 0.0, &p), 150f64.sqrt(), epsilon = 1e-12);
        assert!(p_fn(1e8, 0.0, &p).abs() < 1e-6);
        assert!(p_fn(-1e8, 3.0, &p).abs() < 1e-6);
    }

    #[test]
    fn equilibrium_controller_is_zero() {
        let p = pp().with_n(4);
        let st = PlatoonState::uniform(&p, 30.0);
        for i in 0..4 {
            assert_eq!(controller(&st, i, p.v_star, &p).unwrap(), 0.0);
        }
    }

    #[test]
    fn compressed_gap_is_opened() {
        let p = pp().with_n(3);
        let mut st = PlatoonState::uniform(&p, 30.0);
        st.s[1] = 15.0;
        // vehicle 2 is too close to vehicle 1: it slows down, vehicle 1 speeds up
        assert!(controller(&st, 1, p.v_star, &p).unwrap() < 0.0);
        assert!(controller(&st, 0, p.v_star, &p).unwrap() > 0.0);
    }

    #[test]
    fn transform_examples() {
        let p = pp().with_n(2);
        let st = PlatoonState {
            s: vec![30.0, 30.0],
            v: vec![20.0, 20.0],
        };
        let ts = transform_state(&st, &p).unwrap();
        assert_eq!(ts.z, vec![5.0, 5.0]);
        for y in &ts.y {
            assert_relative_eq!(*y, -10.0 / 300f64.sqrt(), epsilon = 1e-14);
        }
        let eq = transform_state(&PlatoonState::uniform(&p, 26.0), &p).unwrap();
        assert_eq!(eq.y, vec![0.0, 0.0]);
        let back = inverse_transform(&ts, &p).unwrap();
        for (a, b) in back.v.iter().zip(&st.v) {
            assert_relative_eq!(*a, *b, max_relative = 1e-12);
        }
    }

    #[test]
    fn leader_examples() {
        let p = pp();
        let li = leader_input(30.0, 25.0, &p).unwrap();
        assert_eq!(li.y0, 0.0);
        assert!(li.certified);
        let li = leader_input(30.3, 40.0, &p).unwrap();
        assert_relative_eq!(li.y0, 0.3 / (4.7f64 * 30.3).sqrt(), epsilon = 1e-14);
        assert_relative_eq!(li.y0, 0.025_14, epsilon = 1e-5);
        let v0 = leader_speed(li.y0, 40.0, &p).unwrap();
        assert_relative_eq!(v0, 30.3, max_relative = 1e-13);
    }

    #[test]
    fn leader_flag_is_closed() {
        let p = pp();
        let lam = platoon_constants(&p).lambda_bound;
        for s1 in [12.0, 30.0] {
            let v0 = leader_speed(lam, s1, &p).unwrap();
            let y0 = leader_input(v0, s1, &p).unwrap().y0;
            let edge = LeaderInput {
                y0,
                certified: y0.abs() <= lam,
            };
            assert!((edge.y0 - lam).abs() < 1e-14);
        }
        let y_bound = LeaderInput { y0: lam, certified: lam.abs() <= lam };
        assert!(y_bound.certified);
    }

    #[test]
    fn constants() {
        let c = platoon_constants(&pp());
        assert_relative_eq!(c.varpi, 1.25);
        assert_relative_eq!(c.x, 0.549_306_144_334_054_8, epsilon = 1e-15);
        assert_eq!(c.eta, 1.875);
        assert_relative_eq!(c.lambda_bound, 1.0 / 35.0, epsilon = 1e-15);
        assert_eq!(c.c, 1225.0);
        assert_relative_eq!(c.gamma1, 255.208_333_333_333_3, epsilon = 1e-9);
        assert_relative_eq!(c.k, 0.456_435_464_587_638, epsilon = 1e-12);
        assert_relative_eq!(c.k, 5.0 / (8.0 * (c.eta * 1.0f64).sqrt()), epsilon = 1e-12);
        let c4 = platoon_constants(&PlatoonParams { mu: 4.0, ..pp() });
        assert_relative_eq!(c4.k, 0.5 * c.k, epsilon = 1e-15);
        let cq = platoon_constants(&PlatoonParams { mu: 3.0, q: 7.0, ..pp() });
        assert_eq!(cq.lambda_bound, c.lambda_bound);
    }

    #[test]
    fn component_equilibrium_and_v() {
        let p = pp();
        let comp = PlatoonComponent::new(p);
        for (u, x, w) in [([0.0, 0.0], [0.0, 0.0], [0.0, 0.0]), ([3.0, 0.0], [1.5, 0.0], [7.0, 0.3])] {
            assert_eq!(comp.rhs_vec(&u, &x, &w), vec![0.0, 0.0]);
        }
        assert_eq!(lyapunov_v(&[0.5, 0.0], &p), 0.0);
    }

    #[test]
    fn vdot_matches_decomposition() {
        let p = pp();
        let comp = PlatoonComponent::new(p);
        let cert = platoon_certificate(&p);
        let grad = cert.grad_v.clone().unwrap();
        for (u, x, w) in [
            ([0.0, 0.01], [-10.0, 0.3], [-5.0, 0.0]),
            ([-3.0, -0.5], [-12.0, -0.2], [2.0, 1.0]),
            ([1.0, 0.02], [-0.5, 0.0], [-14.0, 0.4]),
        ] {
            let mut g = [0.0; 2];
            grad.eval(&x, &mut g);
            let f = comp.rhs_vec(&u, &x, &w);
            let vdot = g[0] * f[0] + g[1] * f[1];
            let rhs = -cert.c * x[1] * x[1] + cert.g.eval(&u, &x) + cert.r.eval(&x, &w);
            assert_relative_eq!(vdot, rhs, max_relative = 1e-10, epsilon = 1e-9);
        }
    }

    #[test]
    fn equilibrium_run_has_qn_slack() {
        let p = pp().with_n(3);
        let init = PlatoonState::uniform(&p, 30.0);
        let y0 = TimeSeries::zeros(Grid::span(2.0, 0.01).unwrap(), 1).unwrap();
        let opts = VerifyOptions {
            t_end: 2.0,
            base_step: 0.01,
            ..Default::default()
        };
        let run = verify_certified_bound(&p, &init, &y0, &opts).unwrap();
        assert_eq!(run.report.min_slack, 0.0);
        assert!(run.report.passes(1e-9));
        assert_eq!(run.report.transform_mismatch, Some(0.0));
    }

    #[test]
    fn uncertified_leader_rejected_unless_allowed() {
        let p = pp().with_n(2);
        let init = PlatoonState::uniform(&p, 30.0);
        let y0 = sinusoidal_leader(0.5, 0.1, 1.0, 0.01).unwrap();
        let mut opts = VerifyOptions {
            t_end: 1.0,
            base_step: 0.01,
            ..Default::default()
        };
        assert!(matches!(
            verify_certified_bound(&p, &init, &y0, &opts),
            Err(Error::CertifiedRegime { .. })
        ));
        opts.allow_uncertified = true;
        let run = verify_certified_bound(&p, &init, &y0, &opts).unwrap();
        assert!(!run.report.certified_regime);
        assert!(!run.report.passes(1e-6));
    }

    #[test]
    fn csv_headers() {
        let p = pp().with_n(2);
        let init = PlatoonState::uniform(&p, 30.0);
        let y0 = TimeSeries::zeros(Grid::span(0.02, 0.01).unwrap(), 1).unwrap();
        let opts = VerifyOptions {
            t_end: 0.02,
            base_step: 0.01,
            ..Default::default()
        };
        let run = verify_certified_bound(&p, &init, &y0, &opts).unwrap();
        let mut buf = Vec::new();
        run.original.unwrap().write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("t,s_1,s_2,v_1,v_2\n"));
        let mut buf = Vec::new();
        write_transformed_csv(&run.transformed, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,z_1,z_2,y_1,y_2\n"));
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn params_validation() {
        assert!(pp().validate().is_ok());
        assert!(PlatoonParams { a_amp: 5.0, ..pp() }.validate().is_err());
        assert!(PlatoonParams { lambda: 4.0, ..pp() }.validate().is_err());
        assert!(PlatoonParams { n: 1, ..pp() }.validate().is_err());
    }
}
