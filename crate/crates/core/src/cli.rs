//! Config-driven command-line front end.
//!
//! Exit codes: 0 success, 1 a bound or consistency check failed, 2 invalid
//! configuration, 3 I/O failure.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::bodies::Body;
use crate::diagnostics::{
    enlarged_volume_ratio_mc, expected_trials_check, grid_tv_check, stationary_escape_check, stationary_failure_check,
    BoundCheck, DiagnosticsReport, DEFAULT_INNER_MC,
};
use crate::error::Error;
use crate::planner::{check_plan_consistency, expected_trials_bound, plan, Plan, PlanInputs, Violation};
use crate::rng::chain_seed;
use crate::sampler::{run_ensemble, run_in_and_out_traced, ChainParams, EnsembleSummary, FailureTrend, Outcome, UniformStart};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Plan,
    Sample,
    Diagnose,
}

/// Declarative body tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BodySpec {
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
    Box {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    /// `{x : a x <= b}` containing the ball `B(inner_center, inner_radius)`.
    Polytope {
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
        inner_center: Vec<f64>,
        inner_radius: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        volume: Option<f64>,
    },
    Union {
        parts: Vec<BodySpec>,
        volume: f64,
    },
    /// `outer` minus the interior of `hole`; `volume` is what remains.
    Exclusion {
        outer: std::boxed::Box<BodySpec>,
        hole: std::boxed::Box<BodySpec>,
        volume: f64,
    },
    /// Union of convex parts all containing the origin-centered core ball.
    Star {
        parts: Vec<BodySpec>,
        core_radius: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        volume: Option<f64>,
    },
}

impl BodySpec {
    pub fn build(&self) -> crate::Result<Body> {
        match self {
            Self::Ball { center, radius } => Body::ball(center.clone(), *radius),
            Self::Box { lo, hi } => Body::cuboid(lo.clone(), hi.clone()),
            Self::Polytope { a, b, inner_center, inner_radius, volume } => {
                let body = Body::halfspace_polytope(a.clone(), b.clone(), inner_center.clone(), *inner_radius)?;
                match volume {
                    Some(v) => body.with_exact_volume(*v),
                    None => Ok(body),
                }
            }
            Self::Union { parts, volume } => {
                Body::union(parts.iter().map(Self::build).collect::<crate::Result<_>>()?, *volume)
            }
            Self::Exclusion { outer, hole, volume } => Body::exclusion(outer.build()?, hole.build()?, *volume),
            Self::Star { parts, core_radius, volume } => {
                let body = Body::star_shaped(parts.iter().map(Self::build).collect::<crate::Result<_>>()?, *core_radius)?;
                match volume {
                    Some(v) => body.with_exact_volume(*v),
                    None => Ok(body),
                }
            }
        }
    }
}

/// A certificate parameter: a number, or `"auto"` to take it from the body.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "serde_json::Value", into = "serde_json::Value")]
pub enum CertParam {
    #[default]
    Auto,
    Value(f64),
}

impl TryFrom<serde_json::Value> for CertParam {
    type Error = String;

    fn try_from(v: serde_json::Value) -> Result<Self, String> {
        match v {
            serde_json::Value::String(s) if s == "auto" => Ok(Self::Auto),
            serde_json::Value::Number(n) => Ok(Self::Value(n.as_f64().ok_or("certificate value out of range")?)),
            other => Err(format!("expected a number or \"auto\", got {other}")),
        }
    }
}

impl From<CertParam> for serde_json::Value {
    fn from(p: CertParam) -> Self {
        match p {
            CertParam::Auto => "auto".into(),
            CertParam::Value(x) => x.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, rename = "M", skip_serializing_if = "Option::is_none")]
    pub warmness: Option<f64>,
    #[serde(default, rename = "C_PI", skip_serializing_if = "Option::is_none")]
    pub c_pi: Option<f64>,
    #[serde(default)]
    pub alpha: CertParam,
    #[serde(default)]
    pub beta: CertParam,
    /// Run at most this many iterations even if the plan asks for more.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<u64>,
    /// Replace the planned step size (for probing hypothesis checks).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    /// Take the schedule from a plan document instead of planning inline.
    /// Relative paths are resolved against the config file's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from_file: Option<PathBuf>,
}

fn default_chains() -> u64 {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExecutionSpec {
    #[serde(default = "default_chains")]
    pub n_chains: u64,
    #[serde(default)]
    pub seed: u64,
    /// Also write every accepted iterate to trace.jsonl.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub trace: bool,
}

impl Default for ExecutionSpec {
    fn default() -> Self {
        Self { n_chains: default_chains(), seed: 0, trace: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsSpec {
    pub n_mc: u64,
    pub inner_mc: u64,
    pub escape_radii: Vec<f64>,
    pub growth_t: Vec<f64>,
    pub growth_mc: u64,
    /// Grid cells per axis of the uniformity test.
    pub resolution: usize,
    /// Chains for the uniformity test; by default 60 per grid cell.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tv_chains: Option<u64>,
    pub tv_steps: u64,
}

impl Default for DiagnosticsSpec {
    fn default() -> Self {
        Self {
            n_mc: 10_000,
            inner_mc: DEFAULT_INNER_MC,
            escape_radii: vec![0.25, 0.5, 1.0],
            growth_t: vec![0.1, 0.5, 1.0],
            growth_mc: 100_000,
            resolution: 8,
            tv_chains: None,
            tv_steps: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    pub body: BodySpec,
    #[serde(default)]
    pub plan: PlanSpec,
    #[serde(default)]
    pub execution: ExecutionSpec,
    #[serde(default)]
    pub diagnostics: DiagnosticsSpec,
}

#[derive(Debug)]
pub enum CliError {
    /// A check did not pass; the output was still written.
    Failed(String),
    Config(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Failed(_) => 1,
            Self::Config(_) => 2,
            Self::Io(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Failed(m) => write!(f, "check failed: {m}"),
            Self::Config(m) => write!(f, "invalid config: {m}"),
            Self::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(config_err)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// The plan document: inputs, the evaluated schedule and its consistency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanDocument {
    #[serde(flatten)]
    pub inputs: PlanInputs,
    #[serde(flatten)]
    pub plan: Plan,
    pub consistent: bool,
    pub violations: Vec<Violation>,
}

impl PlanDocument {
    pub fn new(inputs: PlanInputs, plan: Plan) -> Self {
        let report = check_plan_consistency(&plan, &inputs);
        Self { inputs, plan, consistent: report.is_consistent(), violations: report.violations }
    }
}

fn required(v: Option<f64>, name: &str) -> Result<f64, CliError> {
    v.ok_or_else(|| CliError::Config(format!("{name} required")))
}

/// Plan inputs with `"auto"` certificate values taken from the body.
pub fn resolve_inputs(spec: &PlanSpec, body: &Body) -> Result<PlanInputs, CliError> {
    let q = required(spec.q, "q")?;
    let eps = required(spec.eps, "eps")?;
    let m = required(spec.warmness, "M")?;
    let c = required(spec.c_pi, "C_PI")?;
    let cert = body.growth();
    let pick = |p: CertParam, name: &str, get: fn(&crate::GrowthCertificate) -> f64| match p {
        CertParam::Value(x) => Ok(x),
        CertParam::Auto => cert
            .as_ref()
            .map(get)
            .ok_or_else(|| CliError::Config(format!("{name} = \"auto\" but the body has no derivable certificate"))),
    };
    let alpha = pick(spec.alpha, "alpha", |g| g.alpha)?;
    let beta = pick(spec.beta, "beta", |g| g.beta)?;
    PlanInputs::new(q, eps, m, c, alpha, beta, body.dim() as u32).map_err(config_err)
}

/// Resolve the schedule for a config: inline planning or a plan document,
/// then the optional step-size override.
pub fn resolve_plan(cfg: &RunConfig, base_dir: &Path, body: &Body) -> Result<PlanDocument, CliError> {
    let (inputs, mut schedule) = match &cfg.plan.from_file {
        Some(path) => {
            let path = base_dir.join(path);
            let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
            let doc: PlanDocument = serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
            if doc.inputs.n as usize != body.dim() {
                return Err(CliError::Config(format!("plan file is for n = {}, body has dimension {}", doc.inputs.n, body.dim())));
            }
            (doc.inputs, doc.plan)
        }
        None => {
            let inputs = resolve_inputs(&cfg.plan, body)?;
            let schedule = plan(&inputs).map_err(config_err)?;
            (inputs, schedule)
        }
    };
    if let Some(h) = cfg.plan.h {
        if !(h > 0.0) || !h.is_finite() {
            return Err(CliError::Config(format!("plan.h must be positive, got {h}")));
        }
        schedule.h = h;
    }
    Ok(PlanDocument::new(inputs, schedule))
}

fn chain_params(doc: &PlanDocument, max_steps: Option<u64>) -> Result<ChainParams, CliError> {
    let p = ChainParams::new(doc.plan.steps, doc.plan.h, doc.plan.threshold).map_err(config_err)?;
    Ok(match max_steps {
        Some(m) => p.truncated(m),
        None => p,
    })
}

fn prepare(cfg: &RunConfig, base_dir: &Path) -> Result<(Body, PlanDocument), CliError> {
    let body = cfg.body.build().map_err(|e| config_err(format!("body: {e}")))?;
    let doc = resolve_plan(cfg, base_dir, &body)?;
    Ok((body, doc))
}

fn check_mode(cfg: &RunConfig, want: Mode) -> Result<(), CliError> {
    match cfg.mode {
        Some(m) if m != want => Err(CliError::Config(format!("config mode is {m:?}, command is {want:?}"))),
        _ => Ok(()),
    }
}

/// Evaluate the schedule. Fails with exit code 1 if it is inconsistent.
pub fn cmd_plan(cfg: &RunConfig, base_dir: &Path) -> Result<PlanDocument, CliError> {
    let (_, doc) = prepare(cfg, base_dir)?;
    Ok(doc)
}

/// 17 significant digits, exact on round trip; non-finite as null.
fn push_f64(out: &mut String, x: f64) {
    if x.is_finite() {
        let _ = write!(out, "{x:.16e}");
    } else {
        out.push_str("null");
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub n_chains: u64,
    pub failure_fraction: f64,
    pub mean_total_trials: f64,
    pub max_total_trials: u64,
    pub all_failed: bool,
    pub steps_run: u64,
    /// Bound on the expected total number of membership queries per chain.
    pub trials_bound: f64,
    pub failures_by_iteration: Vec<(u64, u64)>,
    pub failure_trend: FailureTrend,
    pub plan: PlanDocument,
    pub seed: u64,
    pub wall_time_s: f64,
}

pub struct SampleOutput {
    /// One JSON record per chain, in chain order.
    pub jsonl: String,
    /// One record per accepted iterate, when tracing is enabled.
    pub trace_jsonl: Option<String>,
    pub summary: SampleSummary,
}

fn push_point(out: &mut String, x: &[f64]) {
    out.push('[');
    for (k, v) in x.iter().enumerate() {
        if k > 0 {
            out.push(',');
        }
        push_f64(out, *v);
    }
    out.push(']');
}

/// Run the ensemble and render its outputs (nothing is written).
pub fn cmd_sample(cfg: &RunConfig, base_dir: &Path) -> Result<SampleOutput, CliError> {
    check_mode(cfg, Mode::Sample)?;
    let (body, doc) = prepare(cfg, base_dir)?;
    let n = cfg.execution.n_chains;
    if n == 0 {
        return Err(CliError::Config("execution.n_chains must be >= 1".into()));
    }
    let params = chain_params(&doc, cfg.plan.max_steps)?;
    let start = Instant::now();
    let ensemble = run_ensemble(&body, &UniformStart { body: &body }, &params, n, cfg.execution.seed).map_err(config_err)?;
    let wall = start.elapsed().as_secs_f64();

    let mut jsonl = String::new();
    for (i, run) in ensemble.runs.iter().enumerate() {
        let (outcome, x): (&str, &[f64]) = match &run.outcome {
            Outcome::Success { x } => ("success", x),
            _ => ("failure", &[]),
        };
        let _ = write!(jsonl, "{{\"chain\":{i},\"outcome\":\"{outcome}\",\"x\":");
        push_point(&mut jsonl, x);
        let _ = write!(jsonl, ",\"total_trials\":{},\"failed_at\":", run.total_trials);
        match run.failed_at() {
            Some(k) => {
                let _ = write!(jsonl, "{k}");
            }
            None => jsonl.push_str("null"),
        }
        jsonl.push_str("}\n");
    }

    // Traced reruns reproduce each chain exactly from its derived seed.
    let trace_jsonl = if cfg.execution.trace {
        let mut out = String::new();
        for (i, x0) in ensemble.starts.iter().enumerate() {
            let (_, trace) = run_in_and_out_traced(&body, x0, &params, chain_seed(cfg.execution.seed, i as u64)).map_err(config_err)?;
            for t in trace {
                let _ = write!(out, "{{\"chain\":{i},\"iteration\":{},\"x\":", t.iteration);
                push_point(&mut out, &t.x);
                let _ = writeln!(out, ",\"attempts\":{}}}", t.attempts);
            }
        }
        Some(out)
    } else {
        None
    };

    let s: &EnsembleSummary = &ensemble.summary;
    let summary = SampleSummary {
        n_chains: s.n_chains,
        failure_fraction: s.failure_fraction,
        mean_total_trials: s.mean_total_trials,
        max_total_trials: s.max_total_trials,
        all_failed: s.failures == s.n_chains,
        steps_run: params.steps,
        trials_bound: expected_trials_bound(&doc.inputs, &doc.plan),
        failures_by_iteration: s.failures_by_iteration.clone(),
        failure_trend: s.failure_trend(10),
        plan: doc,
        seed: cfg.execution.seed,
        wall_time_s: wall,
    };
    Ok(SampleOutput { jsonl, trace_jsonl, summary })
}

/// Seeds of the individual checks, derived from the master seed.
mod stream {
    pub const ESCAPE: u64 = 1 << 32;
    pub const FAILURE: u64 = 2 << 32;
    pub const TRIALS: u64 = 3 << 32;
    pub const GROWTH: u64 = 4 << 32;
    pub const UNIFORMITY: u64 = 5 << 32;
}

/// Run the bound-check suite and the grid uniformity test.
pub fn cmd_diagnose(cfg: &RunConfig, base_dir: &Path) -> Result<DiagnosticsReport, CliError> {
    check_mode(cfg, Mode::Diagnose)?;
    let (body, doc) = prepare(cfg, base_dir)?;
    let d = &cfg.diagnostics;
    let seed = cfg.execution.seed;
    let plan = &doc.plan;
    let mut report = DiagnosticsReport::new(seed, d.n_mc, d.resolution);

    for (k, &r) in d.escape_radii.iter().enumerate() {
        let result = stationary_escape_check(&body, plan.h, r, d.n_mc, chain_seed(seed, stream::ESCAPE + k as u64));
        report.push_bound(format!("stationary_escape(r={r})"), result);
    }
    report.push_bound("stationary_failure", stationary_failure_check(&body, plan, d.n_mc, d.inner_mc, chain_seed(seed, stream::FAILURE)));
    report.push_bound("expected_trials", expected_trials_check(&body, plan, d.n_mc, d.inner_mc, chain_seed(seed, stream::TRIALS)));

    for (k, &t) in d.growth_t.iter().enumerate() {
        let name = format!("volume_growth(t={t})");
        let result = match body.growth() {
            None => Err(Error::Unsupported("body has no growth certificate".into())),
            Some(cert) => enlarged_volume_ratio_mc(&body, t, d.growth_mc, chain_seed(seed, stream::GROWTH + k as u64))
                .map(|(est, se)| BoundCheck::new(name.clone(), est, cert.growth_bound(t, body.dim()), se, d.growth_mc)),
        };
        report.push_bound(name, result);
    }

    let uniformity = if body.dim() != 2 {
        Err(Error::Unsupported("grid uniformity test is 2-D only".into()))
    } else {
        let chains = d.tv_chains.unwrap_or(60 * (d.resolution * d.resolution) as u64).max(1);
        let params = chain_params(&doc, Some(d.tv_steps))?;
        run_ensemble(&body, &UniformStart { body: &body }, &params, chains, chain_seed(seed, stream::UNIFORMITY)).and_then(|e| {
            let xs: Vec<Vec<f64>> = e.runs.iter().filter_map(|r| r.final_point().map(<[f64]>::to_vec)).collect();
            grid_tv_check(&body, &xs, d.resolution)
        })
    };
    report.push_uniformity("grid_uniformity", uniformity, 0.01);
    Ok(report)
}

#[derive(Debug, Parser)]
#[command(name = "inout", version, about = "Uniform sampling from a body given a membership oracle")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Overrides {
    /// Override execution.seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override execution.n_chains.
    #[arg(long)]
    pub chains: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate the parameter schedule and check its consistency.
    Plan {
        #[arg(long)]
        config: PathBuf,
        /// Write the plan document here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run an ensemble of chains; writes samples.jsonl, summary.json and
    /// optionally trace.jsonl.
    Sample {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run the bound-check suite and write a JSON report.
    Diagnose {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
}

fn load_with_overrides(path: &Path, o: &Overrides) -> Result<(RunConfig, PathBuf), CliError> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(s) = o.seed {
        cfg.execution.seed = s;
    }
    if let Some(c) = o.chains {
        cfg.execution.n_chains = c;
    }
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((cfg, base))
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

/// Execute a parsed command line.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Plan { config, out, overrides } => {
            let (cfg, base) = load_with_overrides(config, overrides)?;
            let doc = cmd_plan(&cfg, &base)?;
            let text = pretty(&doc);
            match out {
                Some(p) => write(p, &text)?,
                None => print!("{text}"),
            }
            if doc.consistent {
                Ok(())
            } else {
                for v in &doc.violations {
                    eprintln!("violated: {} ({})", v.check, v.detail);
                }
                Err(CliError::Failed("plan is inconsistent".into()))
            }
        }
        Command::Sample { config, out, overrides } => {
            let (cfg, base) = load_with_overrides(config, overrides)?;
            let output = cmd_sample(&cfg, &base)?;
            fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
            write(&out.join("samples.jsonl"), &output.jsonl)?;
            write(&out.join("summary.json"), &pretty(&output.summary))?;
            if let Some(trace) = &output.trace_jsonl {
                write(&out.join("trace.jsonl"), trace)?;
            }
            Ok(())
        }
        Command::Diagnose { config, out, overrides } => {
            let (cfg, base) = load_with_overrides(config, overrides)?;
            let report = cmd_diagnose(&cfg, &base)?;
            write(out, &pretty(&report))?;
            if report.all_satisfied() {
                Ok(())
            } else {
                for e in report.entries.iter().filter(|e| !matches!(e.status, crate::diagnostics::CheckStatus::Satisfied | crate::diagnostics::CheckStatus::Skipped)) {
                    eprintln!("{}: {:?}{}", e.name, e.status, e.reason.as_deref().map(|r| format!(" ({r})")).unwrap_or_default());
                }
                Err(CliError::Failed("diagnostics not all satisfied".into()))
            }
        }
    }
}
