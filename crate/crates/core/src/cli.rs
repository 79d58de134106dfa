//! Experiment drivers behind the `sslab` binary.
//!
//! Every run writes its report files plus `manifest.json` into `--out`.
//! Exit codes: 0 success, 1 falsified, 2 condition or small-gain failure,
//! 3 integration truncation, 64 usage error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::certificates::{
    compose_bidirectional, compose_lyapunov_bidirectional, compose_lyapunov_one_sided, compose_one_directional,
    compose_one_sided, ComponentGain,
};
use crate::error::{Error, Result};
use crate::linear_string::{
    linear_bounds, linear_component, linear_lyapunov_certificate, lyapunov_conditions, optimal_trajectory_gains,
    region_table, trajectory_conditions, write_region_csv, LinearMode, LinearParams, LyapunovMode,
};
use crate::lyapunov_check::{
    dissipation_budget, falsify_inequality, Constants, InequalityId, InequalitySpec, SampleBox, DEFAULT_SAMPLES,
};
use crate::maps::StateFn;
use crate::platoon::{
    inverse_transform, platoon_bound, platoon_certificate, platoon_constants, sinusoidal_leader, transformed_component,
    verify_certified_bound, write_transformed_csv, PlatoonParams, PlatoonState, TransformedState, VerifyOptions,
};
use crate::signals::{generate_input, Grid, InputKind, InputSpec, NormOrder, TimeSeries};
use crate::string_sim::{check_estimate, integrate, ExitReason, SlackReport, StringBound, StringConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FALSIFIED: i32 = 1;
pub const EXIT_CONDITION: i32 = 2;
pub const EXIT_TRUNCATED: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

/// Exit code for a library error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::SmallGain { .. } | Error::Precondition(_) | Error::CertifiedRegime { .. } => EXIT_CONDITION,
        Error::Numeric { .. } => EXIT_TRUNCATED,
        Error::Input(_) | Error::Range { .. } | Error::Domain(_) | Error::Io(_) => EXIT_USAGE,
    }
}

#[derive(Debug, Parser)]
#[command(name = "sslab", version, about = "String stability experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Output directory.
    #[arg(long, global = true, default_value = "sslab-out")]
    pub out: PathBuf,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate the scalar linear chain and check its closed-form bound.
    Linear(LinearArgs),
    /// Compose a certificate into a string bound without simulating.
    Certify(CertifyArgs),
    /// Search for violations of a pointwise certificate inequality.
    SampleCheck(SampleCheckArgs),
    /// Verify the certified bound of the vehicle string.
    Platoon(PlatoonArgs),
    /// Repeat a run over several string lengths.
    Sweep(SweepArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Linear(_) => "linear",
            Command::Certify(_) => "certify",
            Command::SampleCheck(_) => "sample-check",
            Command::Platoon(_) => "platoon",
            Command::Sweep(_) => "sweep",
        }
    }

    fn parameters(&self) -> Value {
        let v = match self {
            Command::Linear(a) => serde_json::to_value(a),
            Command::Certify(a) => serde_json::to_value(a),
            Command::SampleCheck(a) => serde_json::to_value(a),
            Command::Platoon(a) => serde_json::to_value(a),
            Command::Sweep(a) => serde_json::to_value(a),
        };
        v.unwrap_or(Value::Null)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CertificateKind {
    Trajectory,
    Lyapunov,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BoundaryArgs {
    /// Upstream input kind: zero, constant, step, sinusoid, noise.
    #[arg(long = "u", default_value = "zero")]
    pub u_kind: String,
    #[arg(long, default_value_t = 1.0)]
    pub u_amp: f64,
    #[arg(long, default_value_t = 0.1)]
    pub u_freq: f64,
    /// Downstream input kind.
    #[arg(long = "w", default_value = "zero")]
    pub w_kind: String,
    #[arg(long, default_value_t = 1.0)]
    pub w_amp: f64,
    #[arg(long, default_value_t = 0.1)]
    pub w_freq: f64,
    /// Switch time of step inputs.
    #[arg(long, default_value_t = 1.0)]
    pub switch_time: f64,
}

impl BoundaryArgs {
    fn spec(kind: &str, amp: f64, freq: f64, switch: f64, seed: u64) -> Result<InputSpec> {
        Ok(match kind.parse::<InputKind>()? {
            InputKind::Zero => InputSpec::zero(),
            InputKind::Constant => InputSpec::constant(amp),
            InputKind::Step => InputSpec::step(amp, switch),
            InputKind::Sinusoid => InputSpec::sinusoid(amp, freq),
            InputKind::SeededNoise => InputSpec::noise(amp, seed),
        })
    }

    fn upstream(&self, seed: u64) -> Result<InputSpec> {
        Self::spec(&self.u_kind, self.u_amp, self.u_freq, self.switch_time, seed)
    }

    fn downstream(&self, seed: u64) -> Result<InputSpec> {
        Self::spec(&self.w_kind, self.w_amp, self.w_freq, self.switch_time, seed.wrapping_add(1))
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct LinearSetup {
    #[arg(long, allow_hyphen_values = true)]
    pub a: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub b: f64,
    #[arg(long)]
    pub k: f64,
    /// Norm order; the linear certificates are quadratic, so only 2 is accepted.
    #[arg(long, default_value = "2")]
    pub p: String,
    /// one-directional, bidirectional or one-sided.
    #[arg(long, default_value = "bidirectional")]
    pub mode: String,
    #[arg(long, value_enum, default_value_t = CertificateKind::Trajectory)]
    pub certificate: CertificateKind,
    #[arg(long = "t-end", default_value_t = 10.0)]
    pub t_end: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub step: f64,
    /// Initial state of every component, or `random` for seeded draws in [-1, 1].
    #[arg(long, default_value = "1", allow_hyphen_values = true)]
    pub xi: String,
    #[arg(long, default_value_t = 1e-6)]
    pub tolerance: f64,
    #[command(flatten)]
    pub inputs: BoundaryArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct LinearArgs {
    #[arg(long, default_value_t = 3)]
    pub n: usize,
    #[command(flatten)]
    pub setup: LinearSetup,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CertifySource {
    /// Given component gains `γ`, `δ` and `Q(ξ) = q_scale·|ξ|`.
    Gains,
    Linear,
    Platoon,
    /// Region table of the linear chain over a grid of `(a, b)`.
    Regions,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CertifyArgs {
    #[arg(long, value_enum, default_value_t = CertifySource::Linear)]
    pub source: CertifySource,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub q_scale: f64,
    #[arg(long, default_value = "2")]
    pub p: String,
    #[arg(long, allow_hyphen_values = true)]
    pub a: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub b: Option<f64>,
    #[arg(long)]
    pub k: Option<f64>,
    #[arg(long, default_value = "bidirectional")]
    pub mode: String,
    #[arg(long, value_enum, default_value_t = CertificateKind::Trajectory)]
    pub certificate: CertificateKind,
    /// String length, used by one-sided compositions.
    #[arg(long, default_value_t = 1)]
    pub n: usize,
    /// `lo:hi:count` grid of `a` for the region table.
    #[arg(long, allow_hyphen_values = true)]
    pub a_values: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub b_values: Option<String>,
    #[command(flatten)]
    pub platoon: PlatoonSetup,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComponentSource {
    Linear,
    Platoon,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SampleCheckArgs {
    /// gain-dissipation, decomposition, cross-coupling, upstream-coupling,
    /// downstream-coupling, weighted-cross-coupling, free-end.
    #[arg(long)]
    pub inequality: String,
    #[arg(long, value_enum, default_value_t = ComponentSource::Linear)]
    pub source: ComponentSource,
    #[arg(long, allow_hyphen_values = true)]
    pub a: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub b: Option<f64>,
    #[arg(long)]
    pub k: Option<f64>,
    #[arg(long, default_value = "bidirectional")]
    pub mode: String,
    /// Multiplies the certified upstream gain before checking.
    #[arg(long, default_value_t = 1.0)]
    pub gamma_scale: f64,
    /// Sampling box, e.g. `x:-10:10,u:-10:10,w:-10:10`. Defaults to the component's boxes.
    #[arg(long = "box", allow_hyphen_values = true)]
    pub sample_box: Option<String>,
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    pub samples: usize,
    #[command(flatten)]
    pub platoon: PlatoonSetup,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PlatoonSetup {
    #[arg(long, default_value_t = 5.0)]
    pub l_safe: f64,
    #[arg(long, default_value_t = 25.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 35.0)]
    pub v_max: f64,
    #[arg(long, default_value_t = 30.0)]
    pub v_star: f64,
    #[arg(long, default_value_t = 1.0)]
    pub mu: f64,
    #[arg(long, default_value_t = 1.0)]
    pub q: f64,
    #[arg(long = "coupling-amp", default_value_t = 2.5)]
    pub a_amp: f64,
}

impl PlatoonSetup {
    fn params(&self, n: usize) -> PlatoonParams {
        PlatoonParams {
            n,
            l_safe: self.l_safe,
            lambda: self.lambda,
            v_max: self.v_max,
            v_star: self.v_star,
            mu: self.mu,
            q: self.q,
            a_amp: self.a_amp,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PlatoonRunSetup {
    #[command(flatten)]
    pub vehicle: PlatoonSetup,
    /// Leader amplitude as a fraction of the certified bound.
    #[arg(long, default_value_t = 0.8)]
    pub amplitude_fraction: f64,
    /// Absolute leader amplitude in transformed units; overrides the fraction.
    #[arg(long)]
    pub amplitude: Option<f64>,
    #[arg(long, default_value_t = 0.05)]
    pub frequency: f64,
    #[arg(long = "t-end", default_value_t = 60.0)]
    pub t_end: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub step: f64,
    /// Mean initial gap.
    #[arg(long, default_value_t = 25.0)]
    pub gap: f64,
    /// Initial gaps are drawn uniformly from `gap ± gap_jitter`.
    #[arg(long, default_value_t = 8.0)]
    pub gap_jitter: f64,
    /// Initial normalized speed errors are drawn uniformly from `±y_jitter`.
    #[arg(long, default_value_t = 0.1)]
    pub y_jitter: f64,
    #[arg(long)]
    pub allow_uncertified: bool,
    /// Skip the integration in original coordinates.
    #[arg(long)]
    pub no_original: bool,
    #[arg(long, default_value_t = 1e-6)]
    pub tolerance: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PlatoonArgs {
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    #[command(flatten)]
    pub setup: PlatoonRunSetup,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepTarget {
    Linear,
    Platoon,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SweepArgs {
    #[arg(long, value_enum, default_value_t = SweepTarget::Linear)]
    pub target: SweepTarget,
    /// Comma-separated string lengths.
    #[arg(long, default_value = "1,5,20,50")]
    pub ns: String,
    #[arg(long, allow_hyphen_values = true)]
    pub a: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub b: Option<f64>,
    #[arg(long)]
    pub k: Option<f64>,
    #[arg(long, default_value = "2")]
    pub p: String,
    #[arg(long, default_value = "bidirectional")]
    pub mode: String,
    #[arg(long, value_enum, default_value_t = CertificateKind::Trajectory)]
    pub certificate: CertificateKind,
    #[arg(long = "linear-t-end", default_value_t = 10.0)]
    pub linear_t_end: f64,
    #[arg(long = "linear-step", default_value_t = 1e-3)]
    pub linear_step: f64,
    #[arg(long, default_value = "random", allow_hyphen_values = true)]
    pub xi: String,
    #[command(flatten)]
    pub inputs: BoundaryArgs,
    #[command(flatten)]
    pub platoon: PlatoonRunSetup,
}

/// Resolved configuration echoed into `manifest.json`.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub command: String,
    pub parameters: Value,
    pub out: PathBuf,
    pub seed: u64,
}

/// Files written and the exit code of one run.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Outcome {
    pub exit_code: i32,
    pub outputs: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

struct Writer<'a> {
    dir: &'a Path,
    outputs: Vec<String>,
}

impl<'a> Writer<'a> {
    fn new(dir: &'a Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Writer {
            dir,
            outputs: Vec::new(),
        })
    }

    fn bytes(&mut self, name: &str, data: &[u8]) -> Result<()> {
        write_atomic(&self.dir.join(name), data)?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    fn json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.bytes(name, text.as_bytes())
    }

    fn csv(&mut self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.bytes(name, &buf)
    }
}

fn write_atomic(path: &Path, data: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, data)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => {
            let outcome = run(&cli);
            if let Some(e) = &outcome.error {
                eprintln!("sslab: {e}");
            }
            outcome.exit_code
        }
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            code
        }
    }
}

pub fn run(cli: &Cli) -> Outcome {
    let config = ExperimentConfig {
        command: cli.command.name().to_string(),
        parameters: cli.command.parameters(),
        out: cli.out.clone(),
        seed: cli.seed,
    };
    let mut w = match Writer::new(&cli.out) {
        Ok(w) => w,
        Err(e) => {
            return Outcome {
                exit_code: EXIT_USAGE,
                outputs: Vec::new(),
                error: Some(e.to_string()),
            }
        }
    };
    let result = match &cli.command {
        Command::Linear(a) => run_linear(a, cli.seed, &mut w),
        Command::Certify(a) => run_certify(a, &mut w),
        Command::SampleCheck(a) => run_sample_check(a, cli.seed, &mut w),
        Command::Platoon(a) => run_platoon(a, cli.seed, &mut w),
        Command::Sweep(a) => run_sweep(a, cli.seed, &mut w),
    };
    let (exit_code, error) = match result {
        Ok(code) => (code, None),
        Err(e) => {
            let _ = w.json("error.json", &error_json(&e));
            (exit_code(&e), Some(e.to_string()))
        }
    };
    let manifest = json!({
        "tool": "sslab",
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "exit_code": exit_code,
        "outputs": w.outputs,
    });
    let mut outcome = Outcome {
        exit_code,
        outputs: w.outputs.clone(),
        error,
    };
    if let Err(e) = w.json("manifest.json", &manifest) {
        outcome.exit_code = EXIT_USAGE;
        outcome.error = Some(e.to_string());
    }
    outcome.outputs.push("manifest.json".into());
    outcome
}

fn error_json(e: &Error) -> Value {
    let mut v = json!({ "error": e.to_string(), "exit_code": exit_code(e) });
    match e {
        Error::SmallGain { condition, margin } => {
            v["condition"] = json!(condition);
            v["margin"] = json!(margin);
        }
        Error::CertifiedRegime { peak, bound } => {
            v["peak"] = json!(peak);
            v["bound"] = json!(bound);
        }
        Error::Numeric { component, t } => {
            v["component"] = json!(component);
            v["t"] = json!(t);
        }
        _ => {}
    }
    v
}

fn require(name: &str, v: Option<f64>) -> Result<f64> {
    v.ok_or_else(|| Error::Input(format!("missing required key --{name}")))
}

fn require_quadratic(p: &str) -> Result<()> {
    match NormOrder::parse(p)? {
        NormOrder::Finite(q) if q == 2.0 => Ok(()),
        other => Err(Error::Input(format!(
            "the linear certificates are quadratic; p = {other} is not supported"
        ))),
    }
}

fn lyapunov_mode(mode: LinearMode) -> Result<LyapunovMode> {
    match mode {
        LinearMode::Bidirectional => Ok(LyapunovMode::Bidirectional),
        LinearMode::OneSided => Ok(LyapunovMode::OneSided),
        LinearMode::OneDirectional => Err(Error::Input(
            "the dissipation certificate has bidirectional and one-sided modes only".into(),
        )),
    }
}

fn linear_string_bound(params: &LinearParams, mode: LinearMode, kind: CertificateKind, n: usize) -> Result<StringBound> {
    match kind {
        CertificateKind::Trajectory => linear_bounds(params, mode, n),
        CertificateKind::Lyapunov => {
            let lm = lyapunov_mode(mode)?;
            let cert = linear_lyapunov_certificate(params, lm)?;
            match lm {
                LyapunovMode::Bidirectional => compose_lyapunov_bidirectional(&cert),
                LyapunovMode::OneSided => Ok(compose_lyapunov_one_sided(&cert)?.for_length(n)),
            }
        }
    }
}

fn initial_states(spec: &str, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if spec == "random" {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        return Ok((0..n).map(|_| vec![rng.gen_range(-1.0..=1.0)]).collect());
    }
    let v: f64 = spec
        .parse()
        .map_err(|_| Error::Input(format!("--xi must be a number or 'random', got '{spec}'")))?;
    Ok(vec![vec![v]; n])
}

#[derive(Debug, Clone, Serialize)]
struct LinearRunSummary {
    n: usize,
    slack: SlackReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    min_budget_slack: Option<f64>,
    exit: ExitReason,
}

/// Simulates the linear chain of length `n` against `bound`.
fn simulate_linear(
    setup: &LinearSetup,
    params: LinearParams,
    mode: LinearMode,
    bound: &StringBound,
    n: usize,
    seed: u64,
) -> Result<(crate::string_sim::Trajectory, LinearRunSummary)> {
    let u_spec = setup.inputs.upstream(seed)?;
    let w_spec = setup.inputs.downstream(seed)?;
    if matches!(mode, LinearMode::OneSided | LinearMode::OneDirectional) && w_spec.kind != InputKind::Zero {
        return Err(Error::Input(format!("{mode} runs need a zero downstream input")));
    }
    let grid = Grid::span(setup.t_end, setup.step)?;
    let u = generate_input(&u_spec, grid, 1)?;
    let w = generate_input(&w_spec, grid, 1)?;
    let xi = initial_states(&setup.xi, n, seed)?;
    let cfg = StringConfig::new(linear_component(params), n, u, w)?;
    let traj = integrate(&cfg, &xi, setup.t_end, setup.step)?;
    let slack = check_estimate(&traj, bound, &xi)?.with_tolerance(setup.tolerance);
    let min_budget_slack = match setup.certificate {
        CertificateKind::Lyapunov => {
            let lm = lyapunov_mode(mode)?;
            let cert = linear_lyapunov_certificate(&params, lm)?;
            let budget = dissipation_budget(&traj, &cert, lm)?;
            Some(budget.data().iter().cloned().fold(f64::INFINITY, f64::min))
        }
        CertificateKind::Trajectory => None,
    };
    let summary = LinearRunSummary {
        n,
        slack,
        min_budget_slack,
        exit: traj.exit_reason(),
    };
    Ok((traj, summary))
}

fn summary_code(s: &LinearRunSummary, tol: f64) -> i32 {
    if s.exit != ExitReason::None {
        EXIT_TRUNCATED
    } else if !s.slack.holds() || s.min_budget_slack.is_some_and(|b| b < -tol) {
        EXIT_FALSIFIED
    } else {
        EXIT_OK
    }
}

fn run_linear(args: &LinearArgs, seed: u64, w: &mut Writer) -> Result<i32> {
    let s = &args.setup;
    let params = LinearParams::new(s.a, s.b, s.k)?;
    require_quadratic(&s.p)?;
    let mode: LinearMode = s.mode.parse()?;
    w.json(
        "regions.json",
        &json!({
            "trajectory": trajectory_conditions(&params),
            "lyapunov": lyapunov_conditions(&params),
        }),
    )?;
    let bound = linear_string_bound(&params, mode, s.certificate, args.n)?;
    w.json("bound.json", &bound.to_json())?;
    let (traj, summary) = simulate_linear(s, params, mode, &bound, args.n, seed)?;
    w.csv("trajectory.csv", |b| traj.write_csv(b))?;
    w.json("slack.json", &summary)?;
    Ok(summary_code(&summary, s.tolerance))
}

fn parse_range(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || Error::Input(format!("range '{spec}' must look like lo:hi:count"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].parse().map_err(|_| bad())?;
    let count: usize = parts[2].parse().map_err(|_| bad())?;
    if count == 0 || !(lo.is_finite() && hi.is_finite()) {
        return Err(bad());
    }
    if count == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect())
}

fn run_certify(args: &CertifyArgs, w: &mut Writer) -> Result<i32> {
    let bound = match args.source {
        CertifySource::Regions => {
            let k = require("k", args.k)?;
            let av = parse_range(args.a_values.as_deref().unwrap_or("-2:2:41"))?;
            let bv = parse_range(args.b_values.as_deref().unwrap_or("-2:2:41"))?;
            let rows = region_table(k, &av, &bv)?;
            w.csv("regions.csv", |b| write_region_csv(&rows, b))?;
            return Ok(EXIT_OK);
        }
        CertifySource::Gains => {
            let p = NormOrder::parse(&args.p)?;
            let q = args.q_scale;
            let gain = ComponentGain::new(
                p,
                require("gamma", args.gamma)?,
                require("delta", args.delta)?,
                StateFn::new(format!("{q}*|x|"), move |x| q * crate::signals::euclid(x)),
            )?;
            match args.mode.parse::<LinearMode>()? {
                LinearMode::Bidirectional => compose_bidirectional(&gain)?,
                LinearMode::OneDirectional => compose_one_directional(&gain)?,
                LinearMode::OneSided => compose_one_sided(&gain, args.n)?,
            }
        }
        CertifySource::Linear => {
            require_quadratic(&args.p)?;
            let params = LinearParams::new(require("a", args.a)?, require("b", args.b)?, require("k", args.k)?)?;
            let mode: LinearMode = args.mode.parse()?;
            w.json(
                "regions.json",
                &json!({
                    "trajectory": trajectory_conditions(&params),
                    "lyapunov": lyapunov_conditions(&params),
                }),
            )?;
            match args.certificate {
                CertificateKind::Trajectory => {
                    w.json("gains.json", &optimal_trajectory_gains(&params, mode)?)?;
                }
                CertificateKind::Lyapunov => {
                    let cert = linear_lyapunov_certificate(&params, lyapunov_mode(mode)?)?;
                    w.json("certificate.json", &cert.to_json())?;
                }
            }
            linear_string_bound(&params, mode, args.certificate, args.n)?
        }
        CertifySource::Platoon => {
            let params = args.platoon.params(args.n.max(2));
            params.validate()?;
            w.json("constants.json", &platoon_constants(&params))?;
            w.json("certificate.json", &platoon_certificate(&params).to_json())?;
            platoon_bound(&params)?
        }
    };
    w.json("bound.json", &bound.to_json())?;
    Ok(EXIT_OK)
}

fn run_sample_check(args: &SampleCheckArgs, seed: u64, w: &mut Writer) -> Result<i32> {
    let id: InequalityId = args.inequality.parse()?;
    if !(args.gamma_scale.is_finite() && args.gamma_scale >= 0.0) {
        return Err(Error::Input(format!("gamma scale must be nonnegative, got {}", args.gamma_scale)));
    }
    let spec = match args.source {
        ComponentSource::Linear => {
            let params = LinearParams::new(require("a", args.a)?, require("b", args.b)?, require("k", args.k)?)?;
            let mode: LinearMode = args.mode.parse()?;
            let comp = linear_component(params);
            if id == InequalityId::GainDissipation {
                let mut d = optimal_trajectory_gains(&params, mode)?.dissipation();
                d.gamma *= args.gamma_scale;
                InequalitySpec::new(id, comp, Constants::Gain(d))?
            } else {
                let mut cert = linear_lyapunov_certificate(&params, lyapunov_mode(mode)?)?;
                cert.gamma1 *= args.gamma_scale;
                InequalitySpec::new(id, comp, Constants::Lyapunov(cert))?
            }
        }
        ComponentSource::Platoon => {
            let params = args.platoon.params(2);
            params.validate()?;
            let mut cert = platoon_certificate(&params);
            cert.gamma1 *= args.gamma_scale;
            InequalitySpec::new(id, transformed_component(&params), Constants::Lyapunov(cert))?
        }
    };
    let dim = spec.component.state_dim();
    let sample_box = match &args.sample_box {
        Some(s) => SampleBox::parse(s, dim, args.samples, seed)?,
        None => SampleBox::component_default(args.samples, seed),
    };
    let report = falsify_inequality(&spec, &sample_box)?;
    w.json("violation.json", &report)?;
    Ok(if report.holds() { EXIT_OK } else { EXIT_FALSIFIED })
}

/// Leader input, initial platoon and resolved parameters of one platoon run.
fn platoon_inputs(s: &PlatoonRunSetup, n: usize, seed: u64) -> Result<(PlatoonParams, PlatoonState, TimeSeries)> {
    let params = s.vehicle.params(n);
    params.validate()?;
    let lam = platoon_constants(&params).lambda_bound;
    let amp = s.amplitude.unwrap_or(s.amplitude_fraction * lam);
    let y0 = sinusoidal_leader(amp, s.frequency, s.t_end, s.step)?;
    if !(s.gap_jitter >= 0.0 && s.y_jitter >= 0.0) {
        return Err(Error::Input("jitters must be nonnegative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut jitter = |j: f64| if j > 0.0 { rng.gen_range(-j..=j) } else { 0.0 };
    let z: Vec<f64> = (0..n).map(|_| s.gap + jitter(s.gap_jitter) - params.lambda).collect();
    let y: Vec<f64> = (0..n).map(|_| jitter(s.y_jitter)).collect();
    let initial = inverse_transform(&TransformedState { z, y }, &params)?;
    initial.check(&params)?;
    Ok((params, initial, y0))
}

fn platoon_options(s: &PlatoonRunSetup) -> VerifyOptions {
    VerifyOptions {
        t_end: s.t_end,
        base_step: s.step,
        allow_uncertified: s.allow_uncertified,
        compare_original: !s.no_original,
    }
}

fn run_platoon(args: &PlatoonArgs, seed: u64, w: &mut Writer) -> Result<i32> {
    let s = &args.setup;
    let (params, initial, y0) = platoon_inputs(s, args.n, seed)?;
    let run = verify_certified_bound(&params, &initial, &y0, &platoon_options(s))?;
    w.json("initial.json", &initial)?;
    w.json("bound.json", &platoon_bound(&params)?.to_json())?;
    w.csv("transformed.csv", |b| write_transformed_csv(&run.transformed, b))?;
    if let Some(orig) = &run.original {
        w.csv("original.csv", |b| orig.write_csv(b))?;
    }
    w.json("report.json", &run.report)?;
    Ok(if run.report.exit != ExitReason::None {
        EXIT_TRUNCATED
    } else if !run.report.certified_regime {
        EXIT_CONDITION
    } else if run.report.passes(s.tolerance) {
        EXIT_OK
    } else {
        EXIT_FALSIFIED
    })
}

#[derive(Debug, Clone, Serialize)]
struct SweepRow {
    n: usize,
    max_i_norm: f64,
    bound_value: f64,
    slack: f64,
    status: &'static str,
    exit_code: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

impl SweepRow {
    fn failed(n: usize, e: &Error) -> Self {
        SweepRow {
            n,
            max_i_norm: f64::NAN,
            bound_value: f64::NAN,
            slack: f64::NAN,
            status: "error",
            exit_code: exit_code(e),
            error: Some(e.to_string()),
        }
    }
}

fn status_of(code: i32) -> &'static str {
    match code {
        EXIT_OK => "ok",
        EXIT_FALSIFIED => "violated",
        EXIT_CONDITION => "uncertified",
        EXIT_TRUNCATED => "truncated",
        _ => "error",
    }
}

fn parse_ns(spec: &str) -> Result<Vec<usize>> {
    let ns: Vec<usize> = spec
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .ok()
                .filter(|n| *n > 0)
                .ok_or_else(|| Error::Input(format!("bad string length '{t}' in --ns")))
        })
        .collect::<Result<_>>()?;
    if ns.is_empty() {
        return Err(Error::Input("--ns is empty".into()));
    }
    Ok(ns)
}

fn run_sweep(args: &SweepArgs, seed: u64, w: &mut Writer) -> Result<i32> {
    let ns = parse_ns(&args.ns)?;
    let rows: Vec<SweepRow> = match args.target {
        SweepTarget::Linear => {
            let params = LinearParams::new(require("a", args.a)?, require("b", args.b)?, require("k", args.k)?)?;
            require_quadratic(&args.p)?;
            let mode: LinearMode = args.mode.parse()?;
            // certification is checked once, before any simulation
            let max_n = *ns.iter().max().expect("nonempty");
            linear_string_bound(&params, mode, args.certificate, max_n)?;
            let setup = LinearSetup {
                a: params.a,
                b: params.b,
                k: params.k,
                p: args.p.clone(),
                mode: args.mode.clone(),
                certificate: args.certificate,
                t_end: args.linear_t_end,
                step: args.linear_step,
                xi: args.xi.clone(),
                tolerance: args.platoon.tolerance,
                inputs: args.inputs.clone(),
            };
            ns.par_iter()
                .map(|&n| {
                    let row = linear_string_bound(&params, mode, args.certificate, n)
                        .and_then(|bound| simulate_linear(&setup, params, mode, &bound, n, seed))
                        .map(|(_, s)| {
                            let code = summary_code(&s, setup.tolerance);
                            SweepRow {
                                n,
                                max_i_norm: s.slack.max_norm,
                                bound_value: s.slack.bound_value,
                                slack: s.slack.min_slack,
                                status: status_of(code),
                                exit_code: code,
                                error: None,
                            }
                        });
                    row.unwrap_or_else(|e| SweepRow::failed(n, &e))
                })
                .collect()
        }
        SweepTarget::Platoon => {
            let s = &args.platoon;
            let p = s.vehicle.params(2);
            p.validate()?;
            let lam = platoon_constants(&p).lambda_bound;
            let peak = s.amplitude.unwrap_or(s.amplitude_fraction * lam).abs();
            if peak > lam && !s.allow_uncertified {
                return Err(Error::CertifiedRegime { peak, bound: lam });
            }
            ns.par_iter()
                .map(|&n| {
                    let row = platoon_inputs(s, n, seed)
                        .and_then(|(params, initial, y0)| {
                            verify_certified_bound(&params, &initial, &y0, &platoon_options(s))
                        })
                        .map(|run| {
                            let r = &run.report;
                            let code = if r.exit != ExitReason::None {
                                EXIT_TRUNCATED
                            } else if r.passes(s.tolerance) {
                                EXIT_OK
                            } else {
                                EXIT_FALSIFIED
                            };
                            SweepRow {
                                n,
                                max_i_norm: r.slack.max_norm,
                                bound_value: r.slack.bound_value,
                                slack: r.min_slack,
                                status: status_of(code),
                                exit_code: code,
                                error: None,
                            }
                        });
                    row.unwrap_or_else(|e| SweepRow::failed(n, &e))
                })
                .collect()
        }
    };
    for row in &rows {
        w.json(&format!("row_n{}.json", row.n), row)?;
    }
    w.csv("sweep.csv", |b| write_sweep_csv(&rows, b))?;
    let worst = rows.iter().map(|r| r.exit_code).max().unwrap_or(EXIT_OK);
    Ok(worst)
}

fn write_sweep_csv(rows: &[SweepRow], out: &mut Vec<u8>) -> std::io::Result<()> {
    use std::io::Write;
    use crate::signals::fmt_f64;
    writeln!(out, "n,max_i_norm,bound_value,slack,status")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.n,
            fmt_f64(r.max_i_norm),
            fmt_f64(r.bound_value),
            fmt_f64(r.slack),
            r.status
        )?;
    }
    Ok(())
}
