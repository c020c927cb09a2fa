//! The `qnd` command line.
//!
//! Every subcommand resolves its parameters from three layers (built-in
//! defaults, an optional `--config` file, then flags) into an
//! [`ExperimentConfig`], runs, and emits a [`RunReport`] that embeds the
//! resolved config. Passing such a report back through `--config` reruns
//! the same experiment.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::error::{ContextKind, ContextValue, ErrorKind};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::cnot_qnd::{self, gamma_grid, ObservableBasis, SweepRow};
use crate::error::{QndError, Result};
use crate::hilbert::{c64, ProbDist, PureState};
use crate::metrics::{fidelities_from_records, InputFidelity};
use crate::photonics::{self, CoincidenceResult, LinearCircuit, OpticalQnd, ETA_QND};
use crate::report::format_significant;
use crate::weakval::{self, PostSelect, WeakValueResult};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

const DEFAULT_SWEEP_POINTS: usize = 11;
const DEFAULT_ALPHA: f64 = 0.8;
const DEFAULT_GAMMA: f64 = 0.8;
const SUM_RULE_TOL: f64 = 1e-10;

#[derive(Debug, Parser)]
#[command(name = "qnd", version, about = "Quantum non-demolition measurement simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Classical fidelities from recorded outcome distributions.
    Fidelity {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        params: FidelityParams,
    },
    /// Characterize the CNOT QND device over a range of meter strengths.
    CnotSweep {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        params: SweepParams,
    },
    /// Run the heralded linear-optical QND gate.
    Optics {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        params: OpticsParams,
    },
    /// Post-selected weak values, analytic or sampled.
    Weak {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        params: WeakParams,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML config file, or a JSON config or run report.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Write output here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<OutputFormat>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Fidelity,
    CnotSweep,
    Optics,
    Weak,
}

impl ExperimentKind {
    fn name(self) -> &'static str {
        match self {
            ExperimentKind::Fidelity => "fidelity",
            ExperimentKind::CnotSweep => "cnot-sweep",
            ExperimentKind::Optics => "optics",
            ExperimentKind::Weak => "weak",
        }
    }
}

/// Recorded distributions; each list is normalized before use.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FidelityParams {
    /// Signal input distribution.
    #[arg(long, value_delimiter = ',')]
    pub p_in: Option<Vec<f64>>,
    /// Signal output distribution.
    #[arg(long, value_delimiter = ',')]
    pub p_out: Option<Vec<f64>>,
    /// Meter outcome distribution.
    #[arg(long, value_delimiter = ',')]
    pub p_m: Option<Vec<f64>>,
    /// Probability that the signal output matches each meter outcome.
    #[arg(long, value_delimiter = ',')]
    pub conditional: Option<Vec<f64>>,
    /// TOML or JSON file of counts with keys p_in, p_out, p_m, conditional.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counts: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepParams {
    /// Meter strengths; overrides --points.
    #[arg(long, value_delimiter = ',')]
    pub gamma: Option<Vec<f64>>,
    /// Evenly spaced strengths from 1/√2 to 1.
    #[arg(long)]
    pub points: Option<usize>,
    /// Measured observable: z, x or y.
    #[arg(long)]
    pub basis: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpticsParams {
    /// Signal polarization: H, V, D, A, R or L.
    #[arg(long)]
    pub signal: Option<String>,
    /// Signal H amplitude (with --beta, instead of --signal).
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<f64>,
    /// Signal V amplitude.
    #[arg(long, allow_hyphen_values = true)]
    pub beta: Option<f64>,
    /// Beamsplitter reflectance.
    #[arg(long)]
    pub eta: Option<f64>,
    /// Variable-strength meter a|H⟩ + √(1−a²)|V⟩, a ∈ [0, √3/2].
    #[arg(long)]
    pub strength_a: Option<f64>,
    /// Include the signal-arm loss (default: on with --strength-a).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub loss: Option<bool>,
    #[arg(long, conflicts_with = "loss")]
    #[serde(skip)]
    pub no_loss: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeakParams {
    /// Signal |0⟩ amplitude.
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<f64>,
    /// Signal |1⟩ amplitude (default −√(1−α²)).
    #[arg(long, allow_hyphen_values = true)]
    pub beta: Option<f64>,
    /// Meter strength.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Closed form only, even if --shots is given.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub analytic: Option<bool>,
    /// Monte-Carlo shots (requires --seed).
    #[arg(long)]
    pub shots: Option<u64>,
    /// Final outcome to keep: plus or minus.
    #[arg(long)]
    pub post: Option<String>,
    /// Report the largest γ giving a negative mean for this α.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub bound: Option<bool>,
}

impl FidelityParams {
    fn or(self, file: Self) -> Self {
        FidelityParams {
            p_in: self.p_in.or(file.p_in),
            p_out: self.p_out.or(file.p_out),
            p_m: self.p_m.or(file.p_m),
            conditional: self.conditional.or(file.conditional),
            counts: self.counts.or(file.counts),
        }
    }
}

impl SweepParams {
    fn or(self, file: Self) -> Self {
        // An explicit point count on the command line beats a file's list.
        let gamma = match (&self.gamma, self.points) {
            (None, Some(_)) => None,
            _ => self.gamma.or(file.gamma),
        };
        SweepParams {
            gamma,
            points: self.points.or(file.points),
            basis: self.basis.or(file.basis),
        }
    }
}

impl OpticsParams {
    fn or(self, file: Self) -> Self {
        let loss = if self.no_loss { Some(false) } else { self.loss.or(file.loss) };
        let (signal, alpha, beta) = if self.signal.is_some() || self.alpha.is_some() || self.beta.is_some() {
            (self.signal, self.alpha, self.beta)
        } else {
            (file.signal, file.alpha, file.beta)
        };
        OpticsParams {
            signal,
            alpha,
            beta,
            eta: self.eta.or(file.eta),
            strength_a: self.strength_a.or(file.strength_a),
            loss,
            no_loss: false,
        }
    }
}

impl WeakParams {
    fn or(self, file: Self) -> Self {
        WeakParams {
            alpha: self.alpha.or(file.alpha),
            beta: self.beta.or(file.beta),
            gamma: self.gamma.or(file.gamma),
            analytic: self.analytic.or(file.analytic),
            shots: self.shots.or(file.shots),
            post: self.post.or(file.post),
            bound: self.bound.or(file.bound),
        }
    }
}

/// A config file, and the resolved config echoed in every report.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<ExperimentKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<OutputFormat>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fidelity: Option<FidelityParams>,
    #[serde(skip_serializing_if = "Option::is_none", alias = "cnot-sweep")]
    pub cnot_sweep: Option<SweepParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub optics: Option<OpticsParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weak: Option<WeakParams>,
}

/// What a run emits in JSON form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub version: String,
    pub config: ExperimentConfig,
    pub results: serde_json::Value,
    pub duration_secs: f64,
}

/// Machine-readable failure written to stderr.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub error: String,
    pub field: Option<String>,
}

impl From<&QndError> for ErrorReport {
    fn from(e: &QndError) -> Self {
        ErrorReport {
            error: e.to_string(),
            field: e.field().map(str::to_string),
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> QndError {
    QndError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn is_json(path: &Path, text: &str) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) || text.trim_start().starts_with('{')
}

/// Field path of a deserialization error: the key that failed, or the
/// unknown key itself when that was the problem.
fn error_field<E: std::fmt::Display>(err: &serde_path_to_error::Error<E>, fallback: &str) -> (String, String) {
    let message = err.inner().to_string();
    let mut path = err.path().to_string();
    if let Some(name) = message.strip_prefix("unknown field `").and_then(|m| m.split('`').next()) {
        path = if path == "." {
            name.to_string()
        } else {
            format!("{path}.{name}")
        };
    }
    if path == "." || path.is_empty() {
        path = fallback.to_string();
    }
    (path, message)
}

fn parse_file<T: DeserializeOwned>(path: &Path, text: &str, what: &str) -> Result<T> {
    if is_json(path, text) {
        let mut de = serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(&mut de).map_err(|e| {
            let (field, message) = error_field(&e, what);
            QndError::config(field, message)
        })
    } else {
        let de = toml::Deserializer::parse(text).map_err(|e| QndError::config(what, e.message().to_string()))?;
        serde_path_to_error::deserialize(de).map_err(|e| {
            let (field, _) = error_field(&e, what);
            QndError::config(field, e.into_inner().message().to_string())
        })
    }
}

/// Reads a TOML config, a JSON config, or the config embedded in a JSON
/// run report.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    if is_json(path, &text) {
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| QndError::config("config", e.to_string()))?;
        if value.get("version").is_some() {
            if let Some(embedded) = value.get("config") {
                return serde_path_to_error::deserialize(embedded).map_err(|e| {
                    let (field, message) = error_field(&e, "config");
                    QndError::config(field, message)
                });
            }
        }
    }
    parse_file(path, &text, "config")
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CountsFile {
    p_in: Option<Vec<f64>>,
    p_out: Option<Vec<f64>>,
    p_m: Option<Vec<f64>>,
    conditional: Option<Vec<f64>>,
}

fn load_counts(path: &Path) -> Result<CountsFile> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    parse_file(path, &text, "counts")
}

fn in_field(field: &'static str) -> impl Fn(QndError) -> QndError {
    move |e| match e {
        QndError::OutOfRange { .. } | QndError::Config { .. } => e,
        other => QndError::config(field, other.to_string()),
    }
}

/// Parsed command-line invocation.
pub struct Invocation {
    pub kind: ExperimentKind,
    pub common: CommonArgs,
    pub config: ExperimentConfig,
}

impl Invocation {
    pub fn from_cli(cli: Cli) -> Result<Self> {
        let (kind, common, flags) = match cli.command {
            Command::Fidelity { common, params } => (
                ExperimentKind::Fidelity,
                common,
                ExperimentConfig {
                    fidelity: Some(params),
                    ..Default::default()
                },
            ),
            Command::CnotSweep { common, params } => (
                ExperimentKind::CnotSweep,
                common,
                ExperimentConfig {
                    cnot_sweep: Some(params),
                    ..Default::default()
                },
            ),
            Command::Optics { common, params } => (
                ExperimentKind::Optics,
                common,
                ExperimentConfig {
                    optics: Some(params),
                    ..Default::default()
                },
            ),
            Command::Weak { common, params } => (
                ExperimentKind::Weak,
                common,
                ExperimentConfig {
                    weak: Some(params),
                    ..Default::default()
                },
            ),
        };
        let file = match &common.config {
            Some(path) => load_config(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(k) = file.kind {
            if k != kind {
                return Err(QndError::config(
                    "kind",
                    format!("config is for `{}`, not `{}`", k.name(), kind.name()),
                ));
            }
        }
        let config = ExperimentConfig {
            kind: Some(kind),
            seed: common.seed.or(file.seed),
            format: common.format.or(file.format),
            out: common.out.clone().or(file.out),
            fidelity: pick(flags.fidelity, file.fidelity, FidelityParams::or),
            cnot_sweep: pick(flags.cnot_sweep, file.cnot_sweep, SweepParams::or),
            optics: pick(flags.optics, file.optics, OpticsParams::or),
            weak: pick(flags.weak, file.weak, WeakParams::or),
        };
        Ok(Invocation { kind, common, config })
    }
}

fn pick<T: Default>(flags: Option<T>, file: Option<T>, merge: fn(T, T) -> T) -> Option<T> {
    flags.map(|f| merge(f, file.unwrap_or_default()))
}

/// Results of one run, before serialization.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Fidelity(FidelityOutput),
    Sweep(SweepOutput),
    Optics(Box<OpticsOutput>),
    Weak(WeakOutput),
    Bound(BoundOutput),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityOutput {
    pub f_m: Option<f64>,
    pub f_qnd: Option<f64>,
    pub f_qsp: Option<f64>,
    pub per_input: Vec<InputFidelity>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutput {
    pub basis: String,
    pub rows: Vec<SweepRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpticsOutput {
    pub signal: PureState,
    pub meter: PureState,
    pub eta: f64,
    pub include_signal_loss: bool,
    pub circuit: LinearCircuit,
    #[serde(flatten)]
    pub coincidence: CoincidenceResult,
    pub analytic_success: f64,
    /// Correlation of meter and signal outputs for an unknown input.
    pub c2: f64,
    pub gamma_eff: f64,
    pub device: cnot_qnd::Characterization,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakOutput {
    #[serde(flatten)]
    pub result: WeakValueResult,
    pub alpha: f64,
    pub beta: f64,
    pub analytic_value: f64,
    pub p_post: f64,
    /// Largest gap between the closed form and the simulated joint state.
    pub simulation_discrepancy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundOutput {
    pub alpha: f64,
    pub gamma_max: f64,
}

impl Outcome {
    pub fn to_json(&self) -> serde_json::Value {
        let v = match self {
            Outcome::Fidelity(o) => serde_json::to_value(o),
            Outcome::Sweep(o) => serde_json::to_value(o),
            Outcome::Optics(o) => serde_json::to_value(o),
            Outcome::Weak(o) => serde_json::to_value(o),
            Outcome::Bound(o) => serde_json::to_value(o),
        };
        v.expect("results serialize")
    }

    pub fn to_csv(&self) -> String {
        let opt = |x: Option<f64>| x.map(|v| format_significant(v, 12)).unwrap_or_default();
        let num = |x: f64| format_significant(x, 12);
        let table = |header: &[&str], row: Vec<String>| {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(header).expect("in-memory write");
            w.write_record(row).expect("in-memory write");
            String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
        };
        match self {
            Outcome::Fidelity(o) => table(&["f_m", "f_qnd", "f_qsp"], vec![opt(o.f_m), opt(o.f_qnd), opt(o.f_qsp)]),
            Outcome::Sweep(o) => {
                let mut buf = Vec::new();
                cnot_qnd::write_sweep_csv(&o.rows, &mut buf).expect("in-memory write");
                String::from_utf8(buf).expect("utf-8")
            }
            Outcome::Optics(o) => {
                let d = &o.device;
                let f = &o.coincidence.failure_breakdown;
                table(
                    &[
                        "success_prob",
                        "both_in_signal",
                        "both_in_meter",
                        "dump_occupied",
                        "analytic_success",
                        "f_m",
                        "f_qnd",
                        "f_qsp",
                        "k",
                        "k_bar",
                        "c2_raw",
                        "gamma_eff",
                    ],
                    [
                        o.coincidence.success_prob,
                        f.both_in_signal,
                        f.both_in_meter,
                        f.dump_occupied,
                        o.analytic_success,
                        d.report.f_m,
                        d.report.f_qnd,
                        d.report.f_qsp,
                        d.distinguishability.k,
                        d.distinguishability.k_bar,
                        d.c2.raw,
                        o.gamma_eff,
                    ]
                    .map(num)
                    .to_vec(),
                )
            }
            Outcome::Weak(o) => {
                let r = &o.result;
                let mode = serde_json::to_value(r.mode).expect("mode serializes");
                table(
                    &["value", "stderr", "shots", "gamma", "mode", "seed"],
                    vec![
                        num(r.value),
                        num(r.stderr),
                        r.shots.to_string(),
                        num(r.gamma),
                        mode.as_str().unwrap_or_default().to_string(),
                        r.seed.map(|s| s.to_string()).unwrap_or_default(),
                    ],
                )
            }
            Outcome::Bound(o) => table(&["alpha", "gamma_max"], vec![num(o.alpha), num(o.gamma_max)]),
        }
    }
}

/// Fills in defaults, validates, and runs. Returns the outcome and the
/// fully resolved config.
pub fn run_experiment(kind: ExperimentKind, config: &ExperimentConfig) -> Result<(Outcome, ExperimentConfig)> {
    let mut resolved = config.clone();
    resolved.kind = Some(kind);
    let outcome = match kind {
        ExperimentKind::Fidelity => {
            let params = config.fidelity.clone().unwrap_or_default();
            let (outcome, params) = run_fidelity(params)?;
            resolved.fidelity = Some(params);
            outcome
        }
        ExperimentKind::CnotSweep => {
            let (outcome, params) = run_sweep(config.cnot_sweep.clone().unwrap_or_default())?;
            resolved.cnot_sweep = Some(params);
            outcome
        }
        ExperimentKind::Optics => {
            let (outcome, params) = run_optics(config.optics.clone().unwrap_or_default())?;
            resolved.optics = Some(params);
            outcome
        }
        ExperimentKind::Weak => {
            let (outcome, params) = run_weak(config.weak.clone().unwrap_or_default(), config.seed)?;
            resolved.weak = Some(params);
            outcome
        }
    };
    Ok((outcome, resolved))
}

fn dist(field: &'static str, weights: &[f64]) -> Result<ProbDist> {
    ProbDist::from_weights(weights.to_vec()).map_err(in_field(field))
}

fn run_fidelity(params: FidelityParams) -> Result<(Outcome, FidelityParams)> {
    let counts = match &params.counts {
        Some(path) => load_counts(path)?,
        None => CountsFile::default(),
    };
    let resolved = FidelityParams {
        p_in: params.p_in.or(counts.p_in),
        p_out: params.p_out.or(counts.p_out),
        p_m: params.p_m.or(counts.p_m),
        conditional: params.conditional.or(counts.conditional),
        counts: None,
    };
    let p_in = dist(
        "p_in",
        resolved
            .p_in
            .as_deref()
            .ok_or_else(|| QndError::config("p_in", "an input distribution is required"))?,
    )?;
    let p_out = resolved.p_out.as_deref().map(|w| dist("p_out", w)).transpose()?;
    let p_m = resolved.p_m.as_deref().map(|w| dist("p_m", w)).transpose()?;
    for (field, d) in [("p_out", &p_out), ("p_m", &p_m)] {
        if let Some(d) = d {
            if d.len() != p_in.len() {
                return Err(QndError::config(
                    field,
                    format!("has {} outcomes, p_in has {}", d.len(), p_in.len()),
                ));
            }
        }
    }
    if let Some(c) = &resolved.conditional {
        if p_m.is_none() {
            return Err(QndError::config("conditional", "needs p_m"));
        }
        if c.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(QndError::config("conditional", "entries must be probabilities in [0, 1]"));
        }
    }
    let f = fidelities_from_records(&p_in, p_out.as_ref(), p_m.as_ref(), resolved.conditional.as_deref())
        .map_err(in_field("conditional"))?;
    let per_input = match (f.f_m, f.f_qnd) {
        (Some(f_m), Some(f_qnd)) => vec![InputFidelity {
            label: "recorded".into(),
            f_m,
            f_qnd,
        }],
        _ => Vec::new(),
    };
    Ok((
        Outcome::Fidelity(FidelityOutput {
            f_m: f.f_m,
            f_qnd: f.f_qnd,
            f_qsp: f.f_qsp,
            per_input,
        }),
        resolved,
    ))
}

fn run_sweep(params: SweepParams) -> Result<(Outcome, SweepParams)> {
    let basis_name = params.basis.clone().unwrap_or_else(|| "z".into());
    let basis = ObservableBasis::from_name(&basis_name)?;
    let gammas = match params.gamma {
        Some(g) if g.is_empty() => return Err(QndError::config("gamma", "empty strength list")),
        Some(g) => g,
        None => {
            let n = params.points.unwrap_or(DEFAULT_SWEEP_POINTS);
            if n == 0 {
                return Err(QndError::config("points", "must be at least 1"));
            }
            gamma_grid(n)
        }
    };
    let rows = cnot_qnd::strength_sweep(&gammas, &basis, &cnot_qnd::default_ensemble(&basis))?;
    for r in &rows {
        if (r.f_qnd - 1.0).abs() > 1e-10 {
            return Err(QndError::Invariant(format!("F_QND = {} at gamma = {}", r.f_qnd, r.gamma)));
        }
        if (r.englert - 1.0).abs() > 1e-9 {
            return Err(QndError::Invariant(format!("K² + K̄² = {} at gamma = {}", r.englert, r.gamma)));
        }
    }
    let resolved = SweepParams {
        gamma: Some(gammas),
        points: None,
        basis: Some(basis_name.to_ascii_lowercase()),
    };
    Ok((
        Outcome::Sweep(SweepOutput {
            basis: basis_name.to_ascii_lowercase(),
            rows,
        }),
        resolved,
    ))
}

fn run_optics(params: OpticsParams) -> Result<(Outcome, OpticsParams)> {
    if params.signal.is_some() && (params.alpha.is_some() || params.beta.is_some()) {
        return Err(QndError::config("signal", "give either --signal or --alpha/--beta"));
    }
    let signal = match (params.alpha, params.beta) {
        (None, None) => photonics::polarization(params.signal.as_deref().unwrap_or("H"))?,
        (a, b) => {
            let a = a.unwrap_or_else(|| (1.0 - b.unwrap_or(0.0).powi(2)).max(0.0).sqrt());
            let b = b.unwrap_or_else(|| (1.0 - a * a).max(0.0).sqrt());
            PureState::qubit(c64(a, 0.0), c64(b, 0.0)).map_err(in_field("alpha"))?
        }
    };
    let eta = params.eta.unwrap_or(ETA_QND);
    let meter = match params.strength_a {
        Some(a) => photonics::meter_prep_strength(a)?,
        None => photonics::meter_prep(eta)?,
    };
    let loss = params.loss.unwrap_or(params.strength_a.is_some());
    let device = OpticalQnd::new(meter.clone(), eta, loss)?;
    let coincidence = photonics::run_circuit(device.circuit(), &signal, &meter)?;
    let analytic_success = photonics::success_for_meter(signal.amps()[0], signal.amps()[1], &meter, eta, loss)?;
    let total = coincidence.success_prob + coincidence.failure_breakdown.total();
    if (total - 1.0).abs() > 1e-10 {
        return Err(QndError::Invariant(format!("outcome probabilities sum to {total}")));
    }
    if (coincidence.success_prob - analytic_success).abs() > 1e-10 {
        return Err(QndError::Invariant(format!(
            "simulated success {} differs from closed form {analytic_success}",
            coincidence.success_prob
        )));
    }
    let characterization =
        cnot_qnd::characterize_device(&device, &ObservableBasis::stokes_s1(), &photonics::polarization_ensemble())?;
    let resolved = OpticsParams {
        signal: params.signal,
        alpha: params.alpha,
        beta: params.beta,
        eta: Some(eta),
        strength_a: params.strength_a,
        loss: Some(loss),
        no_loss: false,
    };
    Ok((
        Outcome::Optics(Box::new(OpticsOutput {
            signal,
            meter,
            eta,
            include_signal_loss: loss,
            circuit: device.circuit().clone(),
            coincidence,
            analytic_success,
            c2: characterization.c2.raw,
            gamma_eff: characterization.report.f_qsp.sqrt(),
            device: characterization,
        })),
        resolved,
    ))
}

fn run_weak(params: WeakParams, seed: Option<u64>) -> Result<(Outcome, WeakParams)> {
    let alpha = params.alpha.unwrap_or(DEFAULT_ALPHA);
    if params.bound.unwrap_or(false) {
        let gamma_max = weakval::negativity_gamma_bound(alpha)?;
        let resolved = WeakParams {
            alpha: Some(alpha),
            bound: Some(true),
            ..params
        };
        return Ok((Outcome::Bound(BoundOutput { alpha, gamma_max }), resolved));
    }
    let beta = params.beta.unwrap_or_else(|| -(1.0 - alpha * alpha).max(0.0).sqrt());
    let gamma = params.gamma.unwrap_or(DEFAULT_GAMMA);
    let post: PostSelect = params.post.as_deref().unwrap_or("plus").parse()?;
    let analytic = params.analytic.unwrap_or(false);
    let shots = params.shots.unwrap_or(0);
    let (a, b) = (c64(alpha, 0.0), c64(beta, 0.0));
    PureState::qubit(a, b).map_err(in_field("beta"))?;

    let check = weakval::cross_check_postselected(a, b, gamma)?;
    let means = check.closed_form;
    let beta2 = beta * beta / (alpha * alpha + beta * beta);
    if (means.total() - beta2).abs() > SUM_RULE_TOL {
        return Err(QndError::Invariant(format!(
            "sum rule: P(+)·⟨n⟩₊ + P(−)·⟨n⟩₋ = {} ≠ |β|² = {beta2}",
            means.total()
        )));
    }
    let result = if shots > 0 && !analytic {
        let seed = seed.ok_or_else(|| QndError::config("seed", "required when shots > 0"))?;
        weakval::estimate_sampled(a, b, gamma, shots, seed, post)?
    } else {
        weakval::analytic_result(a, b, gamma, post)?
    };
    let p_post = match post {
        PostSelect::Plus => means.p_plus,
        PostSelect::Minus => means.p_minus,
    };
    let resolved = WeakParams {
        alpha: Some(alpha),
        beta: Some(beta),
        gamma: Some(gamma),
        analytic: Some(analytic),
        shots: Some(shots),
        post: Some(match post {
            PostSelect::Plus => "plus".into(),
            PostSelect::Minus => "minus".into(),
        }),
        bound: Some(false),
    };
    Ok((
        Outcome::Weak(WeakOutput {
            result,
            alpha,
            beta,
            analytic_value: means.value(post),
            p_post,
            simulation_discrepancy: check.max_discrepancy,
        }),
        resolved,
    ))
}

/// Runs an invocation and renders its output text.
pub fn execute(inv: &Invocation) -> Result<(String, Option<PathBuf>)> {
    let start = Instant::now();
    let (outcome, config) = run_experiment(inv.kind, &inv.config)?;
    let duration_secs = start.elapsed().as_secs_f64();
    let text = match config.format.unwrap_or_default() {
        OutputFormat::Csv => outcome.to_csv(),
        OutputFormat::Json => {
            let out = config.out.clone();
            let report = RunReport {
                version: VERSION.to_string(),
                config,
                results: outcome.to_json(),
                duration_secs,
            };
            let mut s = serde_json::to_string_pretty(&report).expect("report serializes");
            s.push('\n');
            return Ok((s, out));
        }
    };
    Ok((text, config.out))
}

fn clap_field(e: &clap::Error) -> Option<String> {
    match e.get(ContextKind::InvalidArg) {
        Some(ContextValue::String(s)) => {
            let name = s.split_whitespace().next().unwrap_or(s);
            Some(name.trim_start_matches('-').replace('-', "_"))
        }
        _ => None,
    }
}

fn emit_error(report: &ErrorReport) {
    eprintln!("{}", serde_json::to_string(report).expect("error serializes"));
}

/// Entry point for the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            let message = e.to_string();
            let first = message.lines().next().unwrap_or_default();
            emit_error(&ErrorReport {
                error: first.trim_start_matches("error: ").to_string(),
                field: clap_field(&e),
            });
            return 2;
        }
    };
    let result = Invocation::from_cli(cli).and_then(|inv| execute(&inv));
    match result {
        Ok((text, Some(path))) => match fs::write(&path, text) {
            Ok(()) => 0,
            Err(e) => {
                emit_error(&ErrorReport::from(&io_error(&path, e)));
                1
            }
        },
        Ok((text, None)) => {
            let mut out = std::io::stdout().lock();
            match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
                Ok(()) => 0,
                // A closed pipe means the reader has what it wanted.
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => 0,
                Err(e) => {
                    emit_error(&ErrorReport::from(&QndError::Io {
                        path: "<stdout>".into(),
                        message: e.to_string(),
                    }));
                    1
                }
            }
        }
        Err(e) => {
            emit_error(&ErrorReport::from(&e));
            1
        }
    }
}
