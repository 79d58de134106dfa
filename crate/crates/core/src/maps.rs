//! Labelled, shareable closures over component states.
//!
//! Certificates carry functions (`Q`, `V`, `g`, `r`, `∇V`) rather than parameter
//! records. The label travels with the closure so bounds can be reported as JSON.

use std::fmt;
use std::sync::Arc;

/// Scalar function of one state vector.
#[derive(Clone)]
pub struct StateFn {
    label: Arc<str>,
    f: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
}

impl StateFn {
    pub fn new(label: impl Into<String>, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        StateFn {
            label: label.into().into(),
            f: Arc::new(f),
        }
    }

    pub fn zero() -> Self {
        Self::new("0", |_| 0.0)
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

impl fmt::Debug for StateFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "StateFn({})", self.label)
    }
}

/// Scalar function of two state vectors, e.g. a coupling term `g(u, x)`.
#[derive(Clone)]
pub struct PairFn {
    label: Arc<str>,
    f: Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>,
}

impl PairFn {
    pub fn new(
        label: impl Into<String>,
        f: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        PairFn {
            label: label.into().into(),
            f: Arc::new(f),
        }
    }

    pub fn zero() -> Self {
        Self::new("0", |_, _| 0.0)
    }

    #[inline]
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        (self.f)(a, b)
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

impl fmt::Debug for PairFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PairFn({})", self.label)
    }
}

/// Gradient of a scalar state function, written into `out`.
#[derive(Clone)]
pub struct GradFn {
    label: Arc<str>,
    f: Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>,
}

impl GradFn {
    pub fn new(
        label: impl Into<String>,
        f: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        GradFn {
            label: label.into().into(),
            f: Arc::new(f),
        }
    }

    #[inline]
    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        (self.f)(x, out)
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

impl fmt::Debug for GradFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GradFn({})", self.label)
    }
}
