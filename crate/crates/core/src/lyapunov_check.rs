//! Sampling falsifier for pointwise certificate inequalities, and the integrated
//! dissipation budget along simulated trajectories.
//!
//! A sampled worst gap `≤ 0` is evidence on the sampled box only. A positive gap
//! is a genuine counterexample and comes with the point that produced it.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::certificates::{DissipationData, LyapunovCertificate};
use crate::error::{Error, Result};
use crate::linear_string::LyapunovMode;
use crate::signals::{cumulative_trapezoid, euclid_pow, TimeSeries};
use crate::string_sim::{BoxRegion, ComponentDynamics, Trajectory};

/// Default number of random samples.
pub const DEFAULT_SAMPLES: usize = 100_000;

/// Corners are enumerated only when the combined argument dimension is at most this.
pub const MAX_CORNER_DIM: usize = 16;

const CHUNK: usize = 4096;

/// The pointwise inequalities a certificate must satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum InequalityId {
    /// `∇V·f(u,x,w) ≤ −c|h(x)|^p + γ^p c|h(u)|^p + δ^p c|h(w)|^p`
    GainDissipation,
    /// `∇V·f(u,x,w) ≤ −c|h(x)|^p + g(u,x) + r(x,w)`
    Decomposition,
    /// `r(x,w) + g(x,w) ≤ cσ|h(x)|^p + cω|h(w)|^p`
    CrossCoupling,
    /// `g(u,x) ≤ Γ₁|h(u)|^p + cω|h(x)|^p`, `u ∈ Ω`
    UpstreamCoupling,
    /// `r(x,w) ≤ cσ|h(x)|^p + Γ₂|h(w)|^p`, `w ∈ S`
    DownstreamCoupling,
    /// `r(x,w) + L·g(x,w) ≤ cσ|h(x)|^p + cωL|h(w)|^p`
    WeightedCrossCoupling,
    /// `r(x,0) ≤ cσ|h(x)|^p`
    FreeEnd,
}

impl InequalityId {
    pub const ALL: [InequalityId; 7] = [
        InequalityId::GainDissipation,
        InequalityId::Decomposition,
        InequalityId::CrossCoupling,
        InequalityId::UpstreamCoupling,
        InequalityId::DownstreamCoupling,
        InequalityId::WeightedCrossCoupling,
        InequalityId::FreeEnd,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            InequalityId::GainDissipation => "gain-dissipation",
            InequalityId::Decomposition => "decomposition",
            InequalityId::CrossCoupling => "cross-coupling",
            InequalityId::UpstreamCoupling => "upstream-coupling",
            InequalityId::DownstreamCoupling => "downstream-coupling",
            InequalityId::WeightedCrossCoupling => "weighted-cross-coupling",
            InequalityId::FreeEnd => "free-end",
        }
    }

    /// Which of `(u, w)` the inequality reads besides `x`.
    pub fn arguments(&self) -> (bool, bool) {
        match self {
            InequalityId::GainDissipation | InequalityId::Decomposition => (true, true),
            InequalityId::UpstreamCoupling => (true, false),
            InequalityId::CrossCoupling
            | InequalityId::DownstreamCoupling
            | InequalityId::WeightedCrossCoupling => (false, true),
            InequalityId::FreeEnd => (false, false),
        }
    }
}

impl fmt::Display for InequalityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InequalityId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Self::ALL.iter().map(|i| i.as_str()).collect();
                Error::Input(format!("unknown inequality '{s}' (expected one of {})", names.join(", ")))
            })
    }
}

/// Constants read by an inequality.
#[derive(Debug, Clone)]
pub enum Constants {
    Gain(DissipationData),
    Lyapunov(LyapunovCertificate),
}

#[derive(Clone)]
pub struct InequalitySpec {
    pub id: InequalityId,
    pub component: Arc<dyn ComponentDynamics>,
    pub constants: Constants,
}

impl fmt::Debug for InequalitySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("InequalitySpec")
            .field("id", &self.id)
            .field("component", &self.component.name())
            .field("constants", &self.constants)
            .finish()
    }
}

impl InequalitySpec {
    pub fn new(id: InequalityId, component: Arc<dyn ComponentDynamics>, constants: Constants) -> Result<Self> {
        match (&constants, id) {
            (Constants::Gain(d), InequalityId::GainDissipation) => {
                if !(d.c > 0.0 && d.p >= 1.0 && d.p.is_finite()) {
                    return Err(Error::Input("dissipation data needs c > 0 and finite p >= 1".into()));
                }
            }
            (Constants::Gain(_), _) => {
                return Err(Error::Input(format!("{id} needs a dissipation certificate")));
            }
            (Constants::Lyapunov(_), InequalityId::GainDissipation) => {
                return Err(Error::Input(format!("{id} needs gain dissipation data")));
            }
            (Constants::Lyapunov(c), _) => {
                c.validate()?;
                if id == InequalityId::Decomposition && c.grad_v.is_none() {
                    return Err(Error::Input(format!("{id} needs the gradient of V")));
                }
            }
        }
        Ok(InequalitySpec { id, component, constants })
    }

    /// `LHS − RHS` at one point; positive means the inequality fails there.
    pub fn gap(&self, x: &[f64], u: &[f64], w: &[f64]) -> f64 {
        let comp = self.component.as_ref();
        let hp = |z: &[f64], p: f64| euclid_pow(&comp.output_vec(z), p);
        let vdot = |grad: &crate::maps::GradFn| {
            let mut gv = vec![0.0; x.len()];
            grad.eval(x, &mut gv);
            let f = comp.rhs_vec(u, x, w);
            gv.iter().zip(&f).map(|(a, b)| a * b).sum::<f64>()
        };
        match &self.constants {
            Constants::Gain(d) => {
                let rhs = -d.c * hp(x, d.p)
                    + d.gamma.powf(d.p) * d.c * hp(u, d.p)
                    + d.delta.powf(d.p) * d.c * hp(w, d.p);
                vdot(&d.grad_v) - rhs
            }
            Constants::Lyapunov(c) => {
                let p = c.p;
                match self.id {
                    InequalityId::Decomposition => {
                        let grad = c.grad_v.as_ref().expect("checked at construction");
                        vdot(grad) - (-c.c * hp(x, p) + c.g.eval(u, x) + c.r.eval(x, w))
                    }
                    InequalityId::CrossCoupling => {
                        c.r.eval(x, w) + c.g.eval(x, w) - c.c * (c.sigma * hp(x, p) + c.omega * hp(w, p))
                    }
                    InequalityId::UpstreamCoupling => {
                        c.g.eval(u, x) - (c.gamma1 * hp(u, p) + c.c * c.omega * hp(x, p))
                    }
                    InequalityId::DownstreamCoupling => {
                        c.r.eval(x, w) - (c.c * c.sigma * hp(x, p) + c.gamma2 * hp(w, p))
                    }
                    InequalityId::WeightedCrossCoupling => {
                        c.r.eval(x, w) + c.l * c.g.eval(x, w)
                            - c.c * (c.sigma * hp(x, p) + c.omega * c.l * hp(w, p))
                    }
                    InequalityId::FreeEnd => {
                        let zero = vec![0.0; x.len()];
                        c.r.eval(x, &zero) - c.c * c.sigma * hp(x, p)
                    }
                    InequalityId::GainDissipation => unreachable!("rejected at construction"),
                }
            }
        }
    }

    fn admissible(&self, x: &[f64], u: &[f64], w: &[f64]) -> bool {
        let comp = self.component.as_ref();
        let (use_u, use_w) = self.id.arguments();
        if !comp.in_domain(x) {
            return false;
        }
        let u_ok = !use_u
            || match self.id {
                InequalityId::Decomposition => comp.in_domain(u),
                _ => comp.in_upstream_set(u),
            };
        let w_ok = !use_w
            || match self.id {
                InequalityId::GainDissipation | InequalityId::DownstreamCoupling => comp.in_downstream_set(w),
                _ => comp.in_domain(w),
            };
        u_ok && w_ok
    }
}

/// Sampling boxes for `x`, `u`, `w`, the random sample count and the seed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleBox {
    pub x: Option<BoxRegion>,
    pub u: Option<BoxRegion>,
    pub w: Option<BoxRegion>,
    pub samples: usize,
    pub seed: u64,
}

impl SampleBox {
    /// Uses the component's own sampling boxes.
    pub fn component_default(samples: usize, seed: u64) -> Self {
        SampleBox {
            x: None,
            u: None,
            w: None,
            samples,
            seed,
        }
    }

    pub fn uniform(dim: usize, lo: f64, hi: f64, samples: usize, seed: u64) -> Result<Self> {
        let b = BoxRegion::cube(dim, lo, hi)?;
        Ok(SampleBox {
            x: Some(b.clone()),
            u: Some(b.clone()),
            w: Some(b),
            samples,
            seed,
        })
    }

    /// Parses `"x:-10:10,u:-10:10,w:-10:10"`. A bare name applies the interval to
    /// every coordinate; `x0`, `x1`, ... set single coordinates and override it.
    pub fn parse(spec: &str, dim: usize, samples: usize, seed: u64) -> Result<Self> {
        if spec.trim().is_empty() {
            return Err(Error::Input("empty box specification".into()));
        }
        if dim == 0 {
            return Err(Error::Input("box dimension must be positive".into()));
        }
        let mut bounds: [Option<(Vec<f64>, Vec<f64>)>; 3] = [None, None, None];
        let mut per_coord: Vec<(usize, usize, f64, f64)> = Vec::new();
        for item in spec.split(',') {
            let parts: Vec<&str> = item.trim().split(':').collect();
            if parts.len() != 3 {
                return Err(Error::Input(format!("box entry '{item}' must look like name:lo:hi")));
            }
            let num = |s: &str| -> Result<f64> {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Input(format!("bad bound '{s}' in box entry '{item}'")))
            };
            let (lo, hi) = (num(parts[1])?, num(parts[2])?);
            let name = parts[0].trim();
            let slot = match name.chars().next() {
                Some('x') => 0,
                Some('u') => 1,
                Some('w') => 2,
                _ => return Err(Error::Input(format!("unknown box argument '{name}'"))),
            };
            let rest = &name[1..];
            if rest.is_empty() {
                bounds[slot] = Some((vec![lo; dim], vec![hi; dim]));
            } else {
                let j: usize = rest
                    .parse()
                    .map_err(|_| Error::Input(format!("unknown box argument '{name}'")))?;
                if j >= dim {
                    return Err(Error::Input(format!("coordinate {j} out of range for dimension {dim}")));
                }
                per_coord.push((slot, j, lo, hi));
            }
        }
        for (slot, j, lo, hi) in per_coord {
            let entry = bounds[slot].get_or_insert_with(|| (vec![f64::NAN; dim], vec![f64::NAN; dim]));
            entry.0[j] = lo;
            entry.1[j] = hi;
        }
        let mut boxes = Vec::with_capacity(3);
        for b in bounds {
            boxes.push(match b {
                Some((lo, hi)) => {
                    if lo.iter().chain(&hi).any(|v| v.is_nan()) {
                        return Err(Error::Input("per-coordinate box is missing coordinates".into()));
                    }
                    Some(BoxRegion::new(lo, hi)?)
                }
                None => None,
            });
        }
        let mut it = boxes.into_iter();
        Ok(SampleBox {
            x: it.next().flatten(),
            u: it.next().flatten(),
            w: it.next().flatten(),
            samples,
            seed,
        })
    }
}

/// One evaluation point. Unused arguments are omitted.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplePoint {
    pub x: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViolationReport {
    pub inequality: InequalityId,
    /// Largest `LHS − RHS` seen; positive is a violation.
    pub worst_gap: f64,
    pub worst_point: SamplePoint,
    pub violation_count: usize,
    /// Points evaluated (random, corners and origin).
    pub evaluated: usize,
    /// Points outside their domain predicates.
    pub skipped: usize,
    pub samples: usize,
    pub seed: u64,
}

impl ViolationReport {
    pub fn holds(&self) -> bool {
        self.worst_gap <= 0.0
    }
}

struct Layout {
    x: BoxRegion,
    u: Option<BoxRegion>,
    w: Option<BoxRegion>,
}

impl Layout {
    fn boxes(&self) -> impl Iterator<Item = &BoxRegion> {
        std::iter::once(&self.x).chain(self.u.as_ref()).chain(self.w.as_ref())
    }

    fn dim(&self) -> usize {
        self.boxes().map(BoxRegion::dim).sum()
    }

    fn split(&self, flat: &[f64]) -> SamplePoint {
        let kx = self.x.dim();
        let mut at = kx;
        let mut take = |b: &Option<BoxRegion>| {
            b.as_ref().map(|b| {
                let v = flat[at..at + b.dim()].to_vec();
                at += b.dim();
                v
            })
        };
        let u = take(&self.u);
        let w = take(&self.w);
        SamplePoint {
            x: flat[..kx].to_vec(),
            u,
            w,
        }
    }
}

#[derive(Clone)]
struct Partial {
    worst: Option<(f64, SamplePoint)>,
    violations: usize,
    evaluated: usize,
    skipped: usize,
}

impl Partial {
    fn empty() -> Self {
        Partial {
            worst: None,
            violations: 0,
            evaluated: 0,
            skipped: 0,
        }
    }

    /// Earlier partials win ties so the merge does not depend on chunking.
    fn merge(mut self, other: Partial) -> Partial {
        self.violations += other.violations;
        self.evaluated += other.evaluated;
        self.skipped += other.skipped;
        if let Some((g, p)) = other.worst {
            if self.worst.as_ref().is_none_or(|(best, _)| g > *best) {
                self.worst = Some((g, p));
            }
        }
        self
    }
}

fn evaluate(spec: &InequalitySpec, layout: &Layout, flat: &[f64], acc: &mut Partial) {
    let pt = layout.split(flat);
    let kx = pt.x.len();
    let zero = vec![0.0; kx];
    let u = pt.u.as_deref().unwrap_or(&zero);
    let w = pt.w.as_deref().unwrap_or(&zero);
    if !spec.admissible(&pt.x, u, w) {
        acc.skipped += 1;
        return;
    }
    let g = spec.gap(&pt.x, u, w);
    acc.evaluated += 1;
    if g > 0.0 || g.is_nan() {
        acc.violations += 1;
    }
    let g = if g.is_nan() { f64::INFINITY } else { g };
    if acc.worst.as_ref().is_none_or(|(best, _)| g > *best) {
        acc.worst = Some((g, pt));
    }
}

/// Evaluates `LHS − RHS` at `N` seeded uniform points, every box corner (when the
/// combined dimension is at most [`MAX_CORNER_DIM`]) and the origin.
pub fn falsify_inequality(spec: &InequalitySpec, sample_box: &SampleBox) -> Result<ViolationReport> {
    let comp = spec.component.as_ref();
    let k = comp.state_dim();
    let (use_u, use_w) = spec.id.arguments();
    let pick = |given: &Option<BoxRegion>, default: BoxRegion| -> Result<BoxRegion> {
        let b = given.clone().unwrap_or(default);
        if b.dim() != k {
            return Err(Error::Input(format!("sampling box has dimension {}, expected {k}", b.dim())));
        }
        Ok(b)
    };
    let layout = Layout {
        x: pick(&sample_box.x, comp.domain_box())?,
        u: if use_u { Some(pick(&sample_box.u, comp.upstream_box())?) } else { None },
        w: if use_w { Some(pick(&sample_box.w, comp.downstream_box())?) } else { None },
    };
    let dim = layout.dim();
    let lower: Vec<f64> = layout.boxes().flat_map(|b| b.lower.clone()).collect();
    let upper: Vec<f64> = layout.boxes().flat_map(|b| b.upper.clone()).collect();

    let n = sample_box.samples;
    let chunks = n.div_ceil(CHUNK);
    let random = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(sample_box.seed);
            rng.set_stream(c as u64);
            let mut acc = Partial::empty();
            let mut flat = vec![0.0; dim];
            for _ in c * CHUNK..((c + 1) * CHUNK).min(n) {
                for (j, v) in flat.iter_mut().enumerate() {
                    *v = if lower[j] == upper[j] { lower[j] } else { rng.gen_range(lower[j]..=upper[j]) };
                }
                evaluate(spec, &layout, &flat, &mut acc);
            }
            acc
        })
        .collect::<Vec<_>>();

    let mut fixed = Partial::empty();
    evaluate(spec, &layout, &vec![0.0; dim], &mut fixed);
    if dim <= MAX_CORNER_DIM {
        let mut flat = vec![0.0; dim];
        for mask in 0u32..(1u32 << dim) {
            for (j, v) in flat.iter_mut().enumerate() {
                *v = if mask >> j & 1 == 1 { upper[j] } else { lower[j] };
            }
            evaluate(spec, &layout, &flat, &mut fixed);
        }
    }

    let total = std::iter::once(fixed)
        .chain(random)
        .fold(Partial::empty(), Partial::merge);
    let Some((worst_gap, worst_point)) = total.worst else {
        return Err(Error::Input(format!(
            "all {} sample points fell outside the domain predicates",
            total.skipped
        )));
    };
    Ok(ViolationReport {
        inequality: spec.id,
        worst_gap,
        worst_point,
        violation_count: total.violations,
        evaluated: total.evaluated,
        skipped: total.skipped,
        samples: n,
        seed: sample_box.seed,
    })
}

/// Integrated dissipation budget along a trajectory, `RHS(t) − LHS(t)`.
///
/// Bidirectional: `W = Σ V(x_i)` and
/// `W(x(t)) + c(1−σ−ω) Σ ∫|y_i|^p ≤ W(x(0)) + Γ₁∫|ū|^p + Γ₂∫|w̄|^p`.
/// One-sided: `W = Σ L^i V(x_i)` and
/// `W(x(t)) + c(1−σ−ω) Σ L^i ∫|y_i|^p ≤ W(x(0)) + Γ₁ L ∫|ū|^p`.
pub fn dissipation_budget(traj: &Trajectory, cert: &LyapunovCertificate, mode: LyapunovMode) -> Result<TimeSeries> {
    cert.validate()?;
    let n = traj.n();
    let len = traj.len();
    let grid = traj.grid();
    let p = cert.p;
    let weight = |i: usize| match mode {
        LyapunovMode::Bidirectional => 1.0,
        LyapunovMode::OneSided => cert.l.powi(i as i32 + 1),
    };
    let energy = |s: &TimeSeries| -> Vec<f64> {
        let v: Vec<f64> = s.samples().map(|y| euclid_pow(y, p)).collect();
        cumulative_trapezoid(&v, grid.dt)
    };
    let mut w_now = vec![0.0; len];
    let mut dissipated = vec![0.0; len];
    for i in 0..n {
        let wt = weight(i);
        for (acc, x) in w_now.iter_mut().zip(traj.state(i).samples()) {
            *acc += wt * cert.v.eval(x);
        }
        for (acc, e) in dissipated.iter_mut().zip(energy(traj.output(i))) {
            *acc += wt * e;
        }
    }
    let eu = energy(traj.upstream_output());
    let ew = energy(traj.downstream_output());
    let rate = cert.c * (1.0 - cert.sigma - cert.omega);
    let w0 = w_now[0];
    let slack: Vec<f64> = (0..len)
        .map(|t| {
            let rhs = match mode {
                LyapunovMode::Bidirectional => w0 + cert.gamma1 * eu[t] + cert.gamma2 * ew[t],
                LyapunovMode::OneSided => w0 + cert.gamma1 * cert.l * eu[t],
            };
            rhs - (w_now[t] + rate * dissipated[t])
        })
        .collect();
    TimeSeries::new(grid.t0, grid.dt, 1, slack)
}

/// Largest `∇V(x_i)·f − (−c|h(x_i)|^p + g(x_{i−1}, x_i) + r(x_i, x_{i+1}))` over
/// the grid points and components of a trajectory.
pub fn decomposition_residual(
    traj: &Trajectory,
    component: &dyn ComponentDynamics,
    cert: &LyapunovCertificate,
) -> Result<f64> {
    let grad = cert
        .grad_v
        .as_ref()
        .ok_or_else(|| Error::Input("certificate has no gradient of V".into()))?;
    let k = component.state_dim();
    let n = traj.n();
    let mut gv = vec![0.0; k];
    let mut f = vec![0.0; k];
    let mut worst = f64::NEG_INFINITY;
    for step in 0..traj.len() {
        for i in 0..n {
            let x = traj.state(i).sample(step);
            let u = if i == 0 { traj.upstream_input().sample(step) } else { traj.state(i - 1).sample(step) };
            let w = if i + 1 == n { traj.downstream_input().sample(step) } else { traj.state(i + 1).sample(step) };
            grad.eval(x, &mut gv);
            component.rhs(u, x, w, &mut f);
            let vdot: f64 = gv.iter().zip(&f).map(|(a, b)| a * b).sum();
            let bound = -cert.c * euclid_pow(&component.output_vec(x), cert.p) + cert.g.eval(u, x) + cert.r.eval(x, w);
            worst = worst.max(vdot - bound);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear_string::{linear_component, linear_lyapunov_certificate, optimal_trajectory_gains, LinearMode, LinearParams};
    use crate::signals::{Grid, TimeSeries};
    use crate::string_sim::{integrate, StringConfig};

    fn gain_spec(gamma_scale: f64) -> InequalitySpec {
        let p = LinearParams::new(1.0, 0.0, 2.0).unwrap();
        let tuned = optimal_trajectory_gains(&p, LinearMode::OneDirectional).unwrap();
        let mut d = tuned.dissipation();
        d.gamma *= gamma_scale;
        InequalitySpec::new(InequalityId::GainDissipation, linear_component(p), Constants::Gain(d)).unwrap()
    }

    #[test]
    fn certified_gain_holds() {
        let b = SampleBox::uniform(1, -10.0, 10.0, 20_000, 7).unwrap();
        let rep = falsify_inequality(&gain_spec(1.0), &b).unwrap();
        assert!(rep.worst_gap <= 0.0, "{rep:?}");
        assert_eq!(rep.violation_count, 0);
        assert_eq!(rep.evaluated, 20_000 + 1 + 8);
    }

    #[test]
    fn lowered_gain_is_refuted() {
        let spec = gain_spec(0.8);
        let b = SampleBox::uniform(1, -10.0, 10.0, 20_000, 7).unwrap();
        let rep = falsify_inequality(&spec, &b).unwrap();
        assert!(rep.worst_gap > 0.0);
        let pt = &rep.worst_point;
        let (x, u) = (pt.x[0], pt.u.as_ref().unwrap()[0]);
        // ∇V·f = x(u − 2x), rhs = −x² + 0.16u²
        let direct = x * (u - 2.0 * x) - (-x * x + 0.16 * u * u);
        assert!(direct > 0.0);
        assert!((direct - rep.worst_gap).abs() <= 1e-9 * direct.abs().max(1.0));
    }

    #[test]
    fn origin_only() {
        let b = SampleBox::uniform(1, 0.0, 0.0, 1, 1).unwrap();
        for id in InequalityId::ALL {
            let p = LinearParams::new(1.0, -0.9, 0.5).unwrap();
            let spec = if id == InequalityId::GainDissipation {
                gain_spec(1.0)
            } else {
                let c = linear_lyapunov_certificate(&p, LyapunovMode::Bidirectional).unwrap();
                InequalitySpec::new(id, linear_component(p), Constants::Lyapunov(c)).unwrap()
            };
            let rep = falsify_inequality(&spec, &b).unwrap();
            assert_eq!(rep.worst_gap, 0.0, "{id}");
        }
    }

    #[test]
    fn deterministic_across_runs() {
        let b = SampleBox::uniform(1, -3.0, 3.0, 10_000, 99).unwrap();
        let a = falsify_inequality(&gain_spec(0.9), &b).unwrap();
        let c = falsify_inequality(&gain_spec(0.9), &b).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn all_skipped_is_an_error() {
        let comp = crate::string_sim::FnComponent::scalar(|_, x, _| -x)
            .with_domain(|x| x[0] > 100.0, BoxRegion::cube(1, 200.0, 300.0).unwrap())
            .into_arc();
        let p = LinearParams::new(1.0, 0.0, 2.0).unwrap();
        let d = optimal_trajectory_gains(&p, LinearMode::OneDirectional).unwrap().dissipation();
        let spec = InequalitySpec::new(InequalityId::GainDissipation, comp, Constants::Gain(d)).unwrap();
        let b = SampleBox::uniform(1, -1.0, 1.0, 100, 0).unwrap();
        assert!(matches!(falsify_inequality(&spec, &b), Err(Error::Input(_))));
    }

    #[test]
    fn box_parsing() {
        let b = SampleBox::parse("x:-10:10,u:-10:10,w:-10:10", 1, 10, 0).unwrap();
        assert_eq!(b.x.unwrap().lower, vec![-10.0]);
        let b = SampleBox::parse("x:-1:1,x1:0:5,u:-2:2", 2, 10, 0).unwrap();
        let x = b.x.unwrap();
        assert_eq!((x.lower, x.upper), (vec![-1.0, 0.0], vec![1.0, 5.0]));
        assert!(b.w.is_none());
        let b = SampleBox::parse("x0:-1:1,x1:0:5", 2, 10, 0).unwrap();
        assert_eq!(b.x.unwrap().upper, vec![1.0, 5.0]);
        for bad in ["", "  ", "x:-1", "q:0:1", "x:1:0", "x0:0:1", "x2:0:1", "x:a:1"] {
            assert!(SampleBox::parse(bad, 2, 10, 0).is_err(), "{bad}");
        }
    }

    #[test]
    fn ids_round_trip() {
        for id in InequalityId::ALL {
            assert_eq!(id.as_str().parse::<InequalityId>().unwrap(), id);
        }
        assert!("nope".parse::<InequalityId>().is_err());
    }

    #[test]
    fn equilibrium_budget_is_zero() {
        let p = LinearParams::new(1.0, -0.9, 0.5).unwrap();
        let z = TimeSeries::zeros(Grid::span(2.0, 0.01).unwrap(), 1).unwrap();
        let cfg = StringConfig::new(linear_component(p), 3, z.clone(), z).unwrap();
        let traj = integrate(&cfg, &vec![vec![0.0]; 3], 2.0, 0.01).unwrap();
        for mode in [LyapunovMode::Bidirectional, LyapunovMode::OneSided] {
            let cert = linear_lyapunov_certificate(&p, mode).unwrap();
            let s = dissipation_budget(&traj, &cert, mode).unwrap();
            assert!(s.data().iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn linear_budget_nonnegative() {
        let p = LinearParams::new(1.0, -0.9, 0.5).unwrap();
        let z = TimeSeries::zeros(Grid::span(20.0, 1e-3).unwrap(), 1).unwrap();
        let cfg = StringConfig::new(linear_component(p), 5, z.clone(), z).unwrap();
        let xi = vec![vec![0.7], vec![-0.4], vec![1.0], vec![-1.0], vec![0.2]];
        let traj = integrate(&cfg, &xi, 20.0, 1e-3).unwrap();
        let cert = linear_lyapunov_certificate(&p, LyapunovMode::Bidirectional).unwrap();
        let s = dissipation_budget(&traj, &cert, LyapunovMode::Bidirectional).unwrap();
        let min = s.data().iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min >= -1e-6, "{min}");
        let comp = linear_component(p);
        assert!(decomposition_residual(&traj, comp.as_ref(), &cert).unwrap() <= 1e-12);
    }
}
