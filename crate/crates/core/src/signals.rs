//! Uniformly sampled vector signals, their `L^p` norms over `[t0, t]`, and a small
//! catalogue of deterministic boundary-input generators.
//!
//! Norms use the Euclidean length of each sample. Finite orders integrate `|y|^p`
//! with the composite trapezoid rule on the sample grid; the infinite order takes
//! the grid maximum.

use std::f64::consts::PI;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Order of an `L^p` norm: finite `p >= 1` or the supremum norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormOrder {
    Finite(f64),
    Inf,
}

impl NormOrder {
    pub fn finite(p: f64) -> Result<Self> {
        if !(p.is_finite() && p >= 1.0) {
            return Err(Error::Input(format!("norm order must satisfy p >= 1, got {p}")));
        }
        Ok(NormOrder::Finite(p))
    }

    /// Parses `"inf"` or a real `p >= 1`.
    pub fn parse(s: &str) -> Result<Self> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("inf") || t.eq_ignore_ascii_case("infinity") {
            return Ok(NormOrder::Inf);
        }
        let p: f64 = t
            .parse()
            .map_err(|_| Error::Input(format!("cannot parse norm order '{s}'")))?;
        if p.is_infinite() && p > 0.0 {
            return Ok(NormOrder::Inf);
        }
        Self::finite(p)
    }

    pub fn exponent(&self) -> Option<f64> {
        match self {
            NormOrder::Finite(p) => Some(*p),
            NormOrder::Inf => None,
        }
    }
}

impl std::fmt::Display for NormOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NormOrder::Finite(p) => write!(f, "{p}"),
            NormOrder::Inf => write!(f, "inf"),
        }
    }
}

/// A uniform time grid `t0, t0 + dt, ..., t0 + (count - 1) dt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub t0: f64,
    pub dt: f64,
    pub count: usize,
}

impl Grid {
    pub fn new(t0: f64, dt: f64, count: usize) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Input(format!("grid step must be positive, got {dt}")));
        }
        if !t0.is_finite() {
            return Err(Error::Input("grid start must be finite".into()));
        }
        if count == 0 {
            return Err(Error::Input("grid needs at least one sample".into()));
        }
        Ok(Grid { t0, dt, count })
    }

    /// Grid covering `[0, t_end]` with step `dt` (last point rounded to the nearest step).
    pub fn span(t_end: f64, dt: f64) -> Result<Self> {
        if !(t_end.is_finite() && t_end > 0.0) {
            return Err(Error::Input(format!("end time must be positive, got {t_end}")));
        }
        let steps = (t_end / dt).round().max(1.0) as usize;
        Grid::new(0.0, dt, steps + 1)
    }

    #[inline]
    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn end(&self) -> f64 {
        self.time(self.count - 1)
    }
}

/// Uniformly sampled, fixed-dimension vector signal stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    t0: f64,
    dt: f64,
    dim: usize,
    data: Vec<f64>,
}

impl TimeSeries {
    /// Builds a series from flat row-major data (`data.len()` must be a multiple of `dim`).
    pub fn new(t0: f64, dt: f64, dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Input("series dimension must be positive".into()));
        }
        if data.is_empty() {
            return Err(Error::Input("series must contain at least one sample".into()));
        }
        if data.len() % dim != 0 {
            return Err(Error::Input(format!(
                "data length {} is not a multiple of dimension {dim}",
                data.len()
            )));
        }
        Grid::new(t0, dt, data.len() / dim)?;
        Ok(TimeSeries { t0, dt, dim, data })
    }

    pub fn from_samples(t0: f64, dt: f64, samples: &[Vec<f64>]) -> Result<Self> {
        let dim = samples.first().map(Vec::len).unwrap_or(0);
        if samples.iter().any(|s| s.len() != dim) {
            return Err(Error::Input("samples have inconsistent dimensions".into()));
        }
        Self::new(t0, dt, dim, samples.concat())
    }

    pub fn scalar(t0: f64, dt: f64, values: Vec<f64>) -> Result<Self> {
        Self::new(t0, dt, 1, values)
    }

    /// Samples `f(t, out)` on `grid`.
    pub fn from_fn(grid: Grid, dim: usize, mut f: impl FnMut(f64, &mut [f64])) -> Result<Self> {
        let mut data = vec![0.0; grid.count * dim];
        for (k, row) in data.chunks_exact_mut(dim.max(1)).enumerate() {
            f(grid.time(k), row);
        }
        Self::new(grid.t0, grid.dt, dim, data)
    }

    pub fn zeros(grid: Grid, dim: usize) -> Result<Self> {
        Self::new(grid.t0, grid.dt, dim, vec![0.0; grid.count * dim])
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn grid(&self) -> Grid {
        Grid {
            t0: self.t0,
            dt: self.dt,
            count: self.len(),
        }
    }

    #[inline]
    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn end_time(&self) -> f64 {
        self.time(self.len() - 1)
    }

    #[inline]
    pub fn sample(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn samples(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    /// Applies `f` sample-wise, producing a series of dimension `out_dim` on the same grid.
    pub fn map(&self, out_dim: usize, mut f: impl FnMut(&[f64], &mut [f64])) -> Result<Self> {
        let mut data = vec![0.0; self.len() * out_dim];
        for (src, dst) in self.samples().zip(data.chunks_exact_mut(out_dim.max(1))) {
            f(src, dst);
        }
        Self::new(self.t0, self.dt, out_dim, data)
    }

    /// Index of the grid point nearest to `t`. Times beyond either end by more than
    /// a rounding margin are a range error.
    pub fn index_at(&self, t: f64) -> Result<usize> {
        let eps = 1e-9 * self.dt;
        let end = self.end_time();
        if !(t >= self.t0 - eps && t <= end + eps) {
            return Err(Error::Range {
                what: "time",
                value: t,
                lo: self.t0,
                hi: end,
            });
        }
        let k = ((t - self.t0) / self.dt).round() as usize;
        Ok(k.min(self.len() - 1))
    }

    /// Zero-order-hold value at time `t`: the latest sample at or before `t`,
    /// clamped to the first/last sample outside the grid.
    #[inline]
    pub fn hold(&self, t: f64) -> &[f64] {
        let rel = (t - self.t0) / self.dt;
        let k = if rel <= 0.0 {
            0
        } else {
            // Tolerate rounding so that t = t0 + k dt maps to k.
            ((rel + 1e-9).floor() as usize).min(self.len() - 1)
        };
        self.sample(k)
    }

    /// Writes `t,v0,...,v{d-1}` with 17 significant digits per value.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let header: Vec<String> = std::iter::once("t".to_string())
            .chain((0..self.dim).map(|j| format!("v{j}")))
            .collect();
        writeln!(out, "{}", header.join(","))?;
        for (k, row) in self.samples().enumerate() {
            write_row(&mut out, self.time(k), row)?;
        }
        Ok(())
    }
}

pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub(crate) fn write_row<W: Write>(out: &mut W, t: f64, values: &[f64]) -> std::io::Result<()> {
    write!(out, "{}", fmt_f64(t))?;
    for v in values {
        write!(out, ",{}", fmt_f64(*v))?;
    }
    writeln!(out)
}

#[inline]
pub(crate) fn euclid(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `|v|^p` for the Euclidean length, avoiding the square root when `p == 2`.
#[inline]
pub(crate) fn euclid_pow(v: &[f64], p: f64) -> f64 {
    let sq: f64 = v.iter().map(|x| x * x).sum();
    if p == 2.0 {
        sq
    } else {
        sq.sqrt().powf(p)
    }
}

/// Cumulative trapezoid integrals of `values` on spacing `dt`; entry `k` is the
/// integral over the first `k` intervals.
pub(crate) fn cumulative_trapezoid(values: &[f64], dt: f64) -> Vec<f64> {
    let mut acc = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    acc.push(0.0);
    for w in values.windows(2) {
        sum += 0.5 * dt * (w[0] + w[1]);
        acc.push(sum);
    }
    acc
}

/// `‖y‖_{[t0, up_to], p}` for the sampled signal.
pub fn lp_norm(series: &TimeSeries, up_to: f64, order: NormOrder) -> Result<f64> {
    if series.is_empty() {
        return Err(Error::Input("empty series".into()));
    }
    let last = series.index_at(up_to)?;
    let magnitudes = series.samples().take(last + 1).map(euclid);
    Ok(match order {
        NormOrder::Inf => magnitudes.fold(0.0, f64::max),
        NormOrder::Finite(p) => {
            let pw: Vec<f64> = series
                .samples()
                .take(last + 1)
                .map(|s| euclid_pow(s, p))
                .collect();
            let integral = cumulative_trapezoid(&pw, series.dt())[last];
            integral.max(0.0).powf(1.0 / p)
        }
    })
}

/// Scalar series whose sample `k` is `lp_norm(series, t_k, order)`.
pub fn running_lp_norm(series: &TimeSeries, order: NormOrder) -> Result<TimeSeries> {
    if series.is_empty() {
        return Err(Error::Input("empty series".into()));
    }
    let values = match order {
        NormOrder::Inf => {
            let mut peak = 0.0_f64;
            series
                .samples()
                .map(|s| {
                    peak = peak.max(euclid(s));
                    peak
                })
                .collect()
        }
        NormOrder::Finite(p) => {
            let pw: Vec<f64> = series.samples().map(|s| euclid_pow(s, p)).collect();
            cumulative_trapezoid(&pw, series.dt())
                .into_iter()
                .map(|v| v.max(0.0).powf(1.0 / p))
                .collect()
        }
    };
    TimeSeries::scalar(series.t0(), series.dt(), values)
}

/// Kind of deterministic boundary input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputKind {
    Zero,
    Constant,
    Step,
    Sinusoid,
    SeededNoise,
}

impl std::str::FromStr for InputKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(InputKind::Zero),
            "constant" => Ok(InputKind::Constant),
            "step" => Ok(InputKind::Step),
            "sinusoid" | "sin" => Ok(InputKind::Sinusoid),
            "seeded-noise" | "noise" => Ok(InputKind::SeededNoise),
            other => Err(Error::Input(format!("unknown input kind '{other}'"))),
        }
    }
}

/// Parameters of a generated boundary input. Every coordinate receives the same
/// waveform except seeded noise, which draws each coordinate independently.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputSpec {
    pub kind: InputKind,
    pub amplitude: f64,
    /// Hz; sinusoid only.
    pub frequency: Option<f64>,
    /// Seconds; step only.
    pub switch_time: Option<f64>,
    /// Noise only.
    pub seed: Option<u64>,
}

impl InputSpec {
    pub fn zero() -> Self {
        InputSpec {
            kind: InputKind::Zero,
            amplitude: 0.0,
            frequency: None,
            switch_time: None,
            seed: None,
        }
    }

    pub fn constant(amplitude: f64) -> Self {
        InputSpec {
            kind: InputKind::Constant,
            amplitude,
            ..Self::zero()
        }
    }

    pub fn step(amplitude: f64, switch_time: f64) -> Self {
        InputSpec {
            kind: InputKind::Step,
            amplitude,
            switch_time: Some(switch_time),
            ..Self::zero()
        }
    }

    pub fn sinusoid(amplitude: f64, frequency: f64) -> Self {
        InputSpec {
            kind: InputKind::Sinusoid,
            amplitude,
            frequency: Some(frequency),
            ..Self::zero()
        }
    }

    pub fn noise(amplitude: f64, seed: u64) -> Self {
        InputSpec {
            kind: InputKind::SeededNoise,
            amplitude,
            seed: Some(seed),
            ..Self::zero()
        }
    }

    fn validate(&self) -> Result<()> {
        if !self.amplitude.is_finite() {
            return Err(Error::Input("input amplitude must be finite".into()));
        }
        if let Some(f) = self.frequency {
            if !(f.is_finite() && f > 0.0) {
                return Err(Error::Input(format!("frequency must be positive, got {f}")));
            }
        }
        match self.kind {
            InputKind::Sinusoid if self.frequency.is_none() => {
                Err(Error::Input("sinusoid input needs a frequency".into()))
            }
            InputKind::Step if !self.switch_time.is_some_and(f64::is_finite) => {
                Err(Error::Input("step input needs a finite switch time".into()))
            }
            InputKind::SeededNoise if self.seed.is_none() => {
                Err(Error::Input("noise input needs a seed".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Samples the input described by `spec` on `grid` in `dim` coordinates.
pub fn generate_input(spec: &InputSpec, grid: Grid, dim: usize) -> Result<TimeSeries> {
    spec.validate()?;
    let grid = Grid::new(grid.t0, grid.dt, grid.count)?;
    if dim == 0 {
        return Err(Error::Input("input dimension must be positive".into()));
    }
    let a = spec.amplitude;
    match spec.kind {
        InputKind::Zero => TimeSeries::zeros(grid, dim),
        InputKind::Constant => TimeSeries::from_fn(grid, dim, |_, out| out.fill(a)),
        InputKind::Step => {
            let ts = spec.switch_time.unwrap_or(0.0);
            // A switch time within rounding of a grid point switches at that point.
            let eps = 1e-9 * grid.dt;
            TimeSeries::from_fn(grid, dim, |t, out| {
                out.fill(if t + eps >= ts { a } else { 0.0 })
            })
        }
        InputKind::Sinusoid => {
            let w = 2.0 * PI * spec.frequency.unwrap_or(1.0);
            TimeSeries::from_fn(grid, dim, |t, out| out.fill(a * (w * t).sin()))
        }
        InputKind::SeededNoise => {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.unwrap_or(0));
            TimeSeries::from_fn(grid, dim, |_, out| {
                for v in out.iter_mut() {
                    *v = a * rng.gen_range(-1.0..=1.0);
                }
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sine(dt: f64) -> TimeSeries {
        let count = (2.0 * PI / dt).round() as usize + 1;
        // Last point placed exactly at 2π so the oracle interval is exact.
        let dt = 2.0 * PI / (count - 1) as f64;
        TimeSeries::from_fn(Grid::new(0.0, dt, count).unwrap(), 1, |t, o| o[0] = t.sin()).unwrap()
    }

    #[test]
    fn constant_one_l2() {
        let s = TimeSeries::scalar(0.0, 0.5, vec![1.0; 9]).unwrap();
        assert_relative_eq!(lp_norm(&s, 4.0, NormOrder::Finite(2.0)).unwrap(), 2.0, epsilon = 1e-14);
    }

    #[test]
    fn ramp_sup() {
        let s = TimeSeries::from_fn(Grid::new(0.0, 0.01, 301).unwrap(), 1, |t, o| o[0] = t).unwrap();
        assert_relative_eq!(lp_norm(&s, 3.0, NormOrder::Inf).unwrap(), 3.0, epsilon = 1e-12);
    }

    #[test]
    fn sine_l2_matches_sqrt_pi() {
        let s = sine(1e-3);
        let n = lp_norm(&s, s.end_time(), NormOrder::Finite(2.0)).unwrap();
        assert!((n - PI.sqrt()).abs() < 1e-4, "{n}");
        let run = running_lp_norm(&s, NormOrder::Finite(2.0)).unwrap();
        assert!((run.sample(run.len() - 1)[0] - PI.sqrt()).abs() < 1e-4);
    }

    #[test]
    fn running_constant_is_sqrt_t() {
        let s = TimeSeries::scalar(0.0, 1.0, vec![1.0; 3]).unwrap();
        let r = running_lp_norm(&s, NormOrder::Finite(2.0)).unwrap();
        assert_eq!(r.data(), &[0.0, 1.0, 2f64.sqrt()]);
    }

    #[test]
    fn running_zero_is_zero() {
        let s = TimeSeries::zeros(Grid::new(0.0, 0.1, 11).unwrap(), 3).unwrap();
        for order in [NormOrder::Finite(1.0), NormOrder::Finite(3.5), NormOrder::Inf] {
            assert!(running_lp_norm(&s, order).unwrap().data().iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn vector_samples_use_euclidean_length() {
        let s = TimeSeries::from_samples(0.0, 1.0, &[vec![3.0, 4.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!(lp_norm(&s, 0.0, NormOrder::Inf).unwrap(), 5.0);
        // trapezoid of |y|^1: (5 + 0)/2
        assert_eq!(lp_norm(&s, 1.0, NormOrder::Finite(1.0)).unwrap(), 2.5);
    }

    #[test]
    fn out_of_range_time_rejected() {
        let s = TimeSeries::scalar(0.0, 1.0, vec![1.0; 3]).unwrap();
        assert!(matches!(lp_norm(&s, 2.5, NormOrder::Inf), Err(Error::Range { .. })));
        assert!(matches!(lp_norm(&s, -0.1, NormOrder::Inf), Err(Error::Range { .. })));
        // snapped to nearest grid point
        assert_eq!(lp_norm(&s, 1.4, NormOrder::Finite(1.0)).unwrap(), 1.0);
    }

    #[test]
    fn empty_series_rejected() {
        assert!(TimeSeries::new(0.0, 1.0, 1, vec![]).is_err());
        assert!(TimeSeries::new(0.0, 0.0, 1, vec![1.0]).is_err());
        assert!(TimeSeries::new(0.0, 1.0, 2, vec![1.0]).is_err());
    }

    #[test]
    fn norm_order_parsing() {
        assert_eq!(NormOrder::parse("inf").unwrap(), NormOrder::Inf);
        assert_eq!(NormOrder::parse("2").unwrap(), NormOrder::Finite(2.0));
        assert!(NormOrder::parse("0.5").is_err());
        assert!(NormOrder::finite(f64::NAN).is_err());
    }

    #[test]
    fn generators() {
        let g = Grid::new(0.0, 0.1, 5).unwrap();
        let z = generate_input(&InputSpec::zero(), g, 2).unwrap();
        assert_eq!(z.len(), 5);
        assert!(z.data().iter().all(|v| *v == 0.0));

        let c = generate_input(&InputSpec::constant(0.5), g, 1).unwrap();
        assert!(c.data().iter().all(|v| *v == 0.5));

        let st = generate_input(&InputSpec::step(2.0, 0.2), g, 1).unwrap();
        assert_eq!(st.data(), &[0.0, 0.0, 2.0, 2.0, 2.0]);

        let a = generate_input(&InputSpec::noise(1.0, 42), g, 3).unwrap();
        let b = generate_input(&InputSpec::noise(1.0, 42), g, 3).unwrap();
        assert_eq!(a, b);
        assert!(a.data().iter().all(|v| v.abs() <= 1.0));
        let c = generate_input(&InputSpec::noise(1.0, 43), g, 3).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn invalid_generator_specs() {
        let g = Grid::new(0.0, 0.1, 5).unwrap();
        let mut s = InputSpec::sinusoid(1.0, 1.0);
        s.frequency = Some(0.0);
        assert!(generate_input(&s, g, 1).is_err());
        s.frequency = None;
        assert!(generate_input(&s, g, 1).is_err());
        assert!(generate_input(&InputSpec::constant(f64::INFINITY), g, 1).is_err());
        let mut n = InputSpec::noise(1.0, 1);
        n.seed = None;
        assert!(generate_input(&n, g, 1).is_err());
        assert!(generate_input(&InputSpec::zero(), Grid { t0: 0.0, dt: 0.1, count: 0 }, 1).is_err());
    }

    #[test]
    fn hold_is_left_continuous_on_grid() {
        let s = TimeSeries::scalar(0.0, 0.1, vec![0.0, 1.0, 2.0]).unwrap();
        assert_eq!(s.hold(0.1)[0], 1.0);
        assert_eq!(s.hold(0.1999)[0], 1.0);
        assert_eq!(s.hold(0.3)[0], 2.0);
        assert_eq!(s.hold(-1.0)[0], 0.0);
    }

    #[test]
    fn csv_layout() {
        let s = TimeSeries::from_samples(0.0, 0.5, &[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,v0,v1");
        let row: Vec<f64> = lines.nth(1).unwrap().split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(row, vec![0.5, 3.0, 4.0]);
    }
}
