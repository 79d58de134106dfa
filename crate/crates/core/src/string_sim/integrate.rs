use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::component::ComponentDynamics;
use crate::error::{Error, Result};
use crate::signals::{fmt_f64, Grid, TimeSeries};

/// Number of step halvings tried before a base step is given up.
pub const MAX_HALVINGS: u32 = 10;

/// A string of length `n` built from one component, with boundary inputs
/// `x_0 = u(t)` and `x_{n+1} = w(t)`.
#[derive(Clone)]
pub struct StringConfig {
    pub component: Arc<dyn ComponentDynamics>,
    pub n: usize,
    pub u: TimeSeries,
    pub w: TimeSeries,
}

impl StringConfig {
    pub fn new(
        component: Arc<dyn ComponentDynamics>,
        n: usize,
        u: TimeSeries,
        w: TimeSeries,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::Input("string length must be at least 1".into()));
        }
        let k = component.state_dim();
        if u.dim() != k || w.dim() != k {
            return Err(Error::Input(format!(
                "boundary signals must have the state dimension {k} (got {} and {})",
                u.dim(),
                w.dim()
            )));
        }
        if let Some(k) = u.samples().position(|s| !component.in_upstream_set(s)) {
            return Err(Error::Input(format!("upstream input leaves its set at sample {k}")));
        }
        if let Some(k) = w.samples().position(|s| !component.in_downstream_set(s)) {
            return Err(Error::Input(format!("downstream input leaves its set at sample {k}")));
        }
        Ok(StringConfig { component, n, u, w })
    }
}

/// The assembled vector field of dimension `n·k`.
pub struct StringField<'a> {
    component: &'a dyn ComponentDynamics,
    n: usize,
    k: usize,
    u: &'a TimeSeries,
    w: &'a TimeSeries,
}

/// Builds the string vector field: component `i` evolves by `f(x_{i-1}, x_i, x_{i+1})`.
pub fn assemble_string(cfg: &StringConfig) -> StringField<'_> {
    StringField {
        component: cfg.component.as_ref(),
        n: cfg.n,
        k: cfg.component.state_dim(),
        u: &cfg.u,
        w: &cfg.w,
    }
}

impl StringField<'_> {
    pub fn dim(&self) -> usize {
        self.n * self.k
    }

    /// Derivative with explicitly supplied boundary values.
    pub fn derivative_with(&self, u: &[f64], w: &[f64], x: &[f64], dx: &mut [f64]) {
        let k = self.k;
        for i in 0..self.n {
            let up = if i == 0 { u } else { &x[(i - 1) * k..i * k] };
            let down = if i + 1 == self.n { w } else { &x[(i + 1) * k..(i + 2) * k] };
            self.component
                .rhs(up, &x[i * k..(i + 1) * k], down, &mut dx[i * k..(i + 1) * k]);
        }
    }

    /// Derivative with boundary inputs taken by zero-order hold at time `t`.
    pub fn derivative(&self, t: f64, x: &[f64], dx: &mut [f64]) {
        self.derivative_with(self.u.hold(t), self.w.hold(t), x, dx)
    }

    /// First component (1-based) whose state lies outside the domain.
    pub fn first_outside(&self, x: &[f64]) -> Option<usize> {
        x.chunks_exact(self.k)
            .position(|xi| xi.iter().any(|v| !v.is_finite()) || !self.component.in_domain(xi))
            .map(|i| i + 1)
    }
}

/// Why an integration stopped before the requested end time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ExitReason {
    None,
    /// The end state of a floor-sized step left the domain in component `component`.
    DomainExit { component: usize, t: f64 },
    /// A Runge–Kutta stage state left the domain in component `component` even at
    /// the floor step.
    StepFloor { component: usize, t: f64 },
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum StepFailure {
    Domain(usize),
    Stage(usize),
}

/// Fixed-step RK4 with a reject-and-halve domain guard.
///
/// `deriv(t_hold, x, dx)` evaluates the field with inputs held at `t_hold` (the
/// start of the current sub-step). `outside(x)` returns the 1-based block index of
/// the first block outside the domain. `block` maps flat indices to blocks when a
/// non-finite derivative is reported.
pub(crate) struct GuardedRk4 {
    dim: usize,
    block: usize,
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    stage: Vec<f64>,
}

impl GuardedRk4 {
    pub(crate) fn new(dim: usize, block: usize) -> Self {
        GuardedRk4 {
            dim,
            block,
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            stage: vec![0.0; dim],
        }
    }

    fn check_finite(&self, dx: &[f64], t: f64) -> Result<()> {
        match dx.iter().position(|v| !v.is_finite()) {
            Some(idx) => Err(Error::Numeric {
                component: idx / self.block + 1,
                t,
            }),
            None => Ok(()),
        }
    }

    /// One classical RK4 step of size `h` from `(t, y)`, written back into `y`.
    fn step<F, C>(
        &mut self,
        t: f64,
        h: f64,
        y: &mut [f64],
        deriv: &mut F,
        outside: &C,
    ) -> Result<std::result::Result<(), StepFailure>>
    where
        F: FnMut(f64, &[f64], &mut [f64]),
        C: Fn(&[f64]) -> Option<usize>,
    {
        let half = 0.5 * h;
        deriv(t, y, &mut self.k1);
        self.check_finite(&self.k1, t)?;

        for ((s, y), k) in self.stage.iter_mut().zip(y.iter()).zip(&self.k1) {
            *s = y + half * k;
        }
        if let Some(i) = outside(&self.stage) {
            return Ok(Err(StepFailure::Stage(i)));
        }
        deriv(t, &self.stage, &mut self.k2);
        self.check_finite(&self.k2, t + half)?;

        for ((s, y), k) in self.stage.iter_mut().zip(y.iter()).zip(&self.k2) {
            *s = y + half * k;
        }
        if let Some(i) = outside(&self.stage) {
            return Ok(Err(StepFailure::Stage(i)));
        }
        deriv(t, &self.stage, &mut self.k3);
        self.check_finite(&self.k3, t + half)?;

        for ((s, y), k) in self.stage.iter_mut().zip(y.iter()).zip(&self.k3) {
            *s = y + h * k;
        }
        if let Some(i) = outside(&self.stage) {
            return Ok(Err(StepFailure::Stage(i)));
        }
        deriv(t, &self.stage, &mut self.k4);
        self.check_finite(&self.k4, t + h)?;

        for j in 0..self.dim {
            self.stage[j] =
                y[j] + h / 6.0 * (self.k1[j] + 2.0 * self.k2[j] + 2.0 * self.k3[j] + self.k4[j]);
        }
        if let Some(i) = outside(&self.stage) {
            return Ok(Err(StepFailure::Domain(i)));
        }
        y.copy_from_slice(&self.stage);
        Ok(Ok(()))
    }

    /// Advances `x` by one base step `dt` from `t`, halving on rejection. Returns
    /// the failure seen at the floor step size together with its start time.
    pub(crate) fn advance<F, C>(
        &mut self,
        t: f64,
        dt: f64,
        x: &mut Vec<f64>,
        deriv: &mut F,
        outside: &C,
    ) -> Result<std::result::Result<(), (StepFailure, f64)>>
    where
        F: FnMut(f64, &[f64], &mut [f64]),
        C: Fn(&[f64]) -> Option<usize>,
    {
        let mut trial = x.clone();
        let mut last = (StepFailure::Domain(0), t);
        for level in 0..=MAX_HALVINGS {
            let m = 1usize << level;
            let h = dt / m as f64;
            trial.copy_from_slice(x);
            let mut ok = true;
            for s in 0..m {
                let ts = t + s as f64 * h;
                if let Err(fail) = self.step(ts, h, &mut trial, deriv, outside)? {
                    last = (fail, ts);
                    ok = false;
                    break;
                }
            }
            if ok {
                std::mem::swap(x, &mut trial);
                return Ok(Ok(()));
            }
        }
        Ok(Err(last))
    }
}

/// A (possibly truncated) solution of a string on a uniform grid.
#[derive(Debug, Clone)]
pub struct Trajectory {
    grid: Grid,
    states: Vec<TimeSeries>,
    outputs: Vec<TimeSeries>,
    u: TimeSeries,
    w: TimeSeries,
    u_bar: TimeSeries,
    w_bar: TimeSeries,
    exit: ExitReason,
}

impl Trajectory {
    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn len(&self) -> usize {
        self.grid.count
    }

    pub fn is_empty(&self) -> bool {
        self.grid.count == 0
    }

    pub fn n(&self) -> usize {
        self.states.len()
    }

    /// State series of component `i` (0-based).
    pub fn state(&self, i: usize) -> &TimeSeries {
        &self.states[i]
    }

    pub fn states(&self) -> &[TimeSeries] {
        &self.states
    }

    pub fn output(&self, i: usize) -> &TimeSeries {
        &self.outputs[i]
    }

    pub fn outputs(&self) -> &[TimeSeries] {
        &self.outputs
    }

    /// Raw boundary inputs as held on the trajectory grid.
    pub fn upstream_input(&self) -> &TimeSeries {
        &self.u
    }

    pub fn downstream_input(&self) -> &TimeSeries {
        &self.w
    }

    /// `ū = h(u)` on the trajectory grid.
    pub fn upstream_output(&self) -> &TimeSeries {
        &self.u_bar
    }

    /// `w̄ = h(w)` on the trajectory grid.
    pub fn downstream_output(&self) -> &TimeSeries {
        &self.w_bar
    }

    pub fn exit_reason(&self) -> ExitReason {
        self.exit
    }

    pub fn completed(&self) -> bool {
        self.exit == ExitReason::None
    }

    /// Flat string state at grid index `k`.
    pub fn flat_state(&self, k: usize) -> Vec<f64> {
        self.states.iter().flat_map(|s| s.sample(k).to_vec()).collect()
    }

    /// Columns `t, x_1_0..x_1_{k-1}, ..., x_n_{k-1}, u_0.., w_0..`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let k = self.states.first().map(TimeSeries::dim).unwrap_or(0);
        let mut header = vec!["t".to_string()];
        for i in 1..=self.n() {
            header.extend((0..k).map(|j| format!("x_{i}_{j}")));
        }
        header.extend((0..self.u.dim()).map(|j| format!("u_{j}")));
        header.extend((0..self.w.dim()).map(|j| format!("w_{j}")));
        writeln!(out, "{}", header.join(","))?;
        let mut line = String::new();
        for step in 0..self.len() {
            line.clear();
            line.push_str(&fmt_f64(self.grid.time(step)));
            let cols = self
                .states
                .iter()
                .map(|s| s.sample(step))
                .chain([self.u.sample(step), self.w.sample(step)]);
            for col in cols {
                for v in col {
                    line.push(',');
                    line.push_str(&fmt_f64(*v));
                }
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

/// Integrates the string from `xi0` over `[t0, t_end]` (`t0` is the start of the
/// boundary signals) with RK4 at `base_step`, rejecting and halving steps that
/// leave the domain. A base step that still fails at `base_step / 2^10` truncates
/// the trajectory.
pub fn integrate(
    cfg: &StringConfig,
    xi0: &[Vec<f64>],
    t_end: f64,
    base_step: f64,
) -> Result<Trajectory> {
    let comp = cfg.component.as_ref();
    let (n, k, m) = (cfg.n, comp.state_dim(), comp.output_dim());
    if xi0.len() != n || xi0.iter().any(|x| x.len() != k) {
        return Err(Error::Input(format!(
            "initial state must have {n} components of dimension {k}"
        )));
    }
    if let Some(i) = xi0.iter().position(|x| !comp.in_domain(x)) {
        return Err(Error::Precondition(format!(
            "initial state of component {} lies outside the domain",
            i + 1
        )));
    }
    if !(base_step.is_finite() && base_step > 0.0) {
        return Err(Error::Input(format!("base step must be positive, got {base_step}")));
    }
    let t0 = cfg.u.t0();
    if !(t_end.is_finite() && t_end > t0) {
        return Err(Error::Input(format!("end time must exceed {t0}, got {t_end}")));
    }
    let steps = ((t_end - t0) / base_step).round().max(1.0) as usize;

    let field = assemble_string(cfg);
    let mut x: Vec<f64> = xi0.concat();
    let mut per_comp: Vec<Vec<f64>> = vec![Vec::with_capacity((steps + 1) * k); n];
    let record = |x: &[f64], per_comp: &mut Vec<Vec<f64>>| {
        for (i, buf) in per_comp.iter_mut().enumerate() {
            buf.extend_from_slice(&x[i * k..(i + 1) * k]);
        }
    };
    record(&x, &mut per_comp);

    let mut rk = GuardedRk4::new(n * k, k);
    let mut deriv = |t: f64, x: &[f64], dx: &mut [f64]| field.derivative(t, x, dx);
    let outside = |x: &[f64]| field.first_outside(x);
    let mut exit = ExitReason::None;
    for step in 0..steps {
        let t = t0 + step as f64 * base_step;
        match rk.advance(t, base_step, &mut x, &mut deriv, &outside)? {
            Ok(()) => record(&x, &mut per_comp),
            Err((fail, at)) => {
                exit = match fail {
                    StepFailure::Domain(i) => ExitReason::DomainExit { component: i, t: at },
                    StepFailure::Stage(i) => ExitReason::StepFloor { component: i, t: at },
                };
                break;
            }
        }
    }

    let count = per_comp[0].len() / k;
    let grid = Grid::new(t0, base_step, count)?;
    let states = per_comp
        .into_iter()
        .map(|d| TimeSeries::new(t0, base_step, k, d))
        .collect::<Result<Vec<_>>>()?;
    let outputs = states
        .iter()
        .map(|s| s.map(m, |x, y| comp.output(x, y)))
        .collect::<Result<Vec<_>>>()?;
    let u = TimeSeries::from_fn(grid, k, |t, o| o.copy_from_slice(cfg.u.hold(t)))?;
    let w = TimeSeries::from_fn(grid, k, |t, o| o.copy_from_slice(cfg.w.hold(t)))?;
    let u_bar = u.map(m, |x, y| comp.output(x, y))?;
    let w_bar = w.map(m, |x, y| comp.output(x, y))?;
    Ok(Trajectory {
        grid,
        states,
        outputs,
        u,
        w,
        u_bar,
        w_bar,
        exit,
    })
}
