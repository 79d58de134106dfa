use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box used to sample component arguments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxRegion {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxRegion {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::Input("box bounds must be non-empty and of equal length".into()));
        }
        for (lo, hi) in lower.iter().zip(&upper) {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::Input(format!("invalid box interval [{lo}, {hi}]")));
            }
        }
        Ok(BoxRegion { lower, upper })
    }

    /// The cube `[lo, hi]^dim`.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }
}

/// One component of a homogeneous string: `ẋ = f(u, x, w)`, `y = h(x)`.
///
/// `u` is the upstream neighbour (or the string's upstream input), `w` the
/// downstream neighbour (or downstream input). Implementations must satisfy
/// `h(0) = 0` and have `0` in the domain and in both input sets. `f` must be
/// locally Lipschitz in `x`; this is not checked at runtime.
pub trait ComponentDynamics: Send + Sync {
    fn state_dim(&self) -> usize;

    fn output_dim(&self) -> usize;

    /// Writes `f(u, x, w)` into `dx`. Called only with `x` inside the domain.
    fn rhs(&self, u: &[f64], x: &[f64], w: &[f64], dx: &mut [f64]);

    /// Writes `h(x)` into `y`.
    fn output(&self, x: &[f64], y: &mut [f64]);

    /// Membership in the open state domain `D`.
    fn in_domain(&self, _x: &[f64]) -> bool {
        true
    }

    /// Membership in the upstream input set `Ω`.
    fn in_upstream_set(&self, u: &[f64]) -> bool {
        self.in_domain(u)
    }

    /// Membership in the downstream input set `S`.
    fn in_downstream_set(&self, w: &[f64]) -> bool {
        self.in_domain(w)
    }

    /// Sampling box for `D`.
    fn domain_box(&self) -> BoxRegion;

    fn upstream_box(&self) -> BoxRegion {
        self.domain_box()
    }

    fn downstream_box(&self) -> BoxRegion {
        self.domain_box()
    }

    fn name(&self) -> String {
        "component".into()
    }

    fn output_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.output_dim()];
        self.output(x, &mut y);
        y
    }

    fn rhs_vec(&self, u: &[f64], x: &[f64], w: &[f64]) -> Vec<f64> {
        let mut dx = vec![0.0; self.state_dim()];
        self.rhs(u, x, w, &mut dx);
        dx
    }
}

type Rhs = dyn Fn(&[f64], &[f64], &[f64], &mut [f64]) + Send + Sync;
type Out = dyn Fn(&[f64], &mut [f64]) + Send + Sync;
type Pred = dyn Fn(&[f64]) -> bool + Send + Sync;

/// Component assembled from closures; the route for user-supplied dynamics.
pub struct FnComponent {
    name: String,
    state_dim: usize,
    output_dim: usize,
    f: Box<Rhs>,
    h: Box<Out>,
    domain: Box<Pred>,
    domain_box: BoxRegion,
}

impl FnComponent {
    /// Component with `D = ℝ^k` and a default sampling box `[-1, 1]^k`.
    pub fn new(
        state_dim: usize,
        output_dim: usize,
        f: impl Fn(&[f64], &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
        h: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        FnComponent {
            name: "fn-component".into(),
            state_dim,
            output_dim,
            f: Box::new(f),
            h: Box::new(h),
            domain: Box::new(|_| true),
            domain_box: BoxRegion {
                lower: vec![-1.0; state_dim],
                upper: vec![1.0; state_dim],
            },
        }
    }

    /// Scalar state, identity output.
    pub fn scalar(f: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::new(1, 1, move |u, x, w, dx| dx[0] = f(u[0], x[0], w[0]), |x, y| y[0] = x[0])
    }

    pub fn with_domain(
        mut self,
        pred: impl Fn(&[f64]) -> bool + Send + Sync + 'static,
        sampling_box: BoxRegion,
    ) -> Self {
        self.domain = Box::new(pred);
        self.domain_box = sampling_box;
        self
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn into_arc(self) -> Arc<dyn ComponentDynamics> {
        Arc::new(self)
    }
}

impl ComponentDynamics for FnComponent {
    fn state_dim(&self) -> usize {
        self.state_dim
    }

    fn output_dim(&self) -> usize {
        self.output_dim
    }

    fn rhs(&self, u: &[f64], x: &[f64], w: &[f64], dx: &mut [f64]) {
        (self.f)(u, x, w, dx)
    }

    fn output(&self, x: &[f64], y: &mut [f64]) {
        (self.h)(x, y)
    }

    fn in_domain(&self, x: &[f64]) -> bool {
        (self.domain)(x)
    }

    fn domain_box(&self) -> BoxRegion {
        self.domain_box.clone()
    }

    fn name(&self) -> String {
        self.name.clone()
    }
}
