//! Command-line front end: JSON configs in, CSV or JSON out.
//!
//! Exit codes: 0 success, 2 configuration or I/O error, 3 domain error,
//! 4 validation tolerance exceeded. Failures print one JSON object per line
//! on stderr.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrator::{
    integrate_full, integrate_quench, integrate_reduced, QuenchSchedule, QuenchSegment, TimeUnit,
    Trajectory, TrajectoryMeta,
};
use crate::model::{reduce_with_diagnostics, PhysicalParams, ReducedParams, SeparatedFamily};
use crate::numeric::ZERO;
use crate::propagator::{amplitudes_from_rest, energy_record};
use crate::sweep::{
    dynamics_panel, eigenvalue_profile, linspace, phase_diagram, tcrit_curve, write_dynamics_csv,
    write_eigen_csv,
};

#[derive(Debug, Parser)]
#[command(
    name = "epbattery",
    version,
    about = "Exceptional-point quantum battery toolkit"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON config; built-in defaults are used when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output file; standard output when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Worker threads for sweeps (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Eigenvalues displaced by i gamma_b over a detuning range.
    Spectrum,
    /// Energy and power time series (closed form, RK4, quench or panel).
    Dynamics,
    /// Growth rate and regime over the (delta_r, alpha) plane.
    PhaseDiagram,
    /// Critical time to reach an energy threshold.
    Tcrit,
    /// Full three-mode model against the reduced closed form.
    Validate,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Dynamics => "dynamics",
            Command::PhaseDiagram => "phase-diagram",
            Command::Tcrit => "tcrit",
            Command::Validate => "validate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// A config file: the command block plus optional output settings, which
/// command-line flags override.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
    #[serde(flatten)]
    pub command: CommandConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum CommandConfig {
    Spectrum(SpectrumConfig),
    Dynamics(DynamicsConfig),
    PhaseDiagram(PhaseDiagramConfig),
    Tcrit(TcritConfig),
    Validate(ValidateConfig),
}

impl CommandConfig {
    pub fn default_for(cmd: Command) -> Self {
        match cmd {
            Command::Spectrum => CommandConfig::Spectrum(SpectrumConfig::default()),
            Command::Dynamics => CommandConfig::Dynamics(DynamicsConfig::default()),
            Command::PhaseDiagram => CommandConfig::PhaseDiagram(PhaseDiagramConfig::default()),
            Command::Tcrit => CommandConfig::Tcrit(TcritConfig::default()),
            Command::Validate => CommandConfig::Validate(ValidateConfig::default()),
        }
    }

    pub fn command(&self) -> Command {
        match self {
            CommandConfig::Spectrum(_) => Command::Spectrum,
            CommandConfig::Dynamics(_) => Command::Dynamics,
            CommandConfig::PhaseDiagram(_) => Command::PhaseDiagram,
            CommandConfig::Tcrit(_) => Command::Tcrit,
            CommandConfig::Validate(_) => Command::Validate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumConfig {
    pub gamma_b: f64,
    pub alpha: f64,
    pub delta_min: f64,
    pub delta_max: f64,
    pub points: usize,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self {
            gamma_b: 0.5,
            alpha: 0.0,
            delta_min: -2.0,
            delta_max: 2.0,
            points: 401,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhaseDiagramConfig {
    pub gamma_b: f64,
    pub delta_min: f64,
    pub delta_max: f64,
    /// Defaults to the domain edge `-gamma_b / 2`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_min: Option<f64>,
    pub alpha_max: f64,
    pub n_delta: usize,
    pub n_alpha: usize,
}

impl Default for PhaseDiagramConfig {
    fn default() -> Self {
        Self {
            gamma_b: 0.5,
            delta_min: -3.0,
            delta_max: 3.0,
            alpha_min: None,
            alpha_max: 3.0,
            n_delta: 201,
            n_alpha: 201,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TcritConfig {
    pub gamma_b: f64,
    /// Threshold in units of `eps_r^2`.
    pub e_max: f64,
    pub delta_min: f64,
    pub delta_max: f64,
    pub points: usize,
}

impl Default for TcritConfig {
    fn default() -> Self {
        Self {
            gamma_b: 0.5,
            e_max: 1e3,
            delta_min: -1.0,
            delta_max: 1.0,
            points: 401,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateConfig {
    pub family: SeparatedFamily,
    pub ratios: Vec<f64>,
    /// Comparison time, rescaled.
    pub t: f64,
    /// Samples per trajectory.
    pub samples: usize,
    /// Largest allowed endpoint error at the largest ratio.
    pub tolerance: f64,
    pub require_decreasing: bool,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        Self {
            family: SeparatedFamily::default(),
            ratios: vec![10.0, 30.0, 100.0],
            t: 5.0,
            samples: 200,
            tolerance: 0.05,
            require_decreasing: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DynamicsConfig {
    /// Closed-form propagator on a uniform grid.
    ClosedForm(ReducedRun),
    /// RK4 on the reduced equations.
    Reduced(ReducedRun),
    /// RK4 on the three-mode equations, physical time.
    Full(FullRun),
    /// Piecewise-constant reduced parameters.
    Quench(QuenchRun),
    /// Several `(delta_r, alpha)` points at fixed `gamma_b`, `eps_r = 1`.
    Panel(PanelRun),
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        DynamicsConfig::Panel(PanelRun::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReducedRun {
    pub params: ReducedParams,
    pub t_end: f64,
    pub dt: f64,
    #[serde(default)]
    pub init: [Complex64; 2],
    /// Output times in `1/gamma_eff` (rescaled) or physical units.
    #[serde(default = "rescaled")]
    pub time_unit: TimeUnit,
}

fn rescaled() -> TimeUnit {
    TimeUnit::Rescaled
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FullRun {
    pub params: PhysicalParams,
    pub t_end: f64,
    pub dt: f64,
    #[serde(default)]
    pub init: [Complex64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuenchRun {
    pub segments: Vec<QuenchSegment>,
    pub dt: f64,
    #[serde(default)]
    pub init: [Complex64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PanelRun {
    pub gamma_b: f64,
    /// `[delta_r, alpha]` pairs.
    pub points: Vec<[f64; 2]>,
    pub t_end: f64,
    pub dt: f64,
}

impl Default for PanelRun {
    fn default() -> Self {
        // Broken, boundary and unbroken points on the delta_r = 0 line.
        Self {
            gamma_b: 0.5,
            points: vec![[0.0, 0.0], [0.0, 0.75], [0.0, 1.5]],
            t_end: 20.0,
            dt: 0.01,
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Domain(String),
    #[error("{0}")]
    Tolerance(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Domain(_) => 3,
            CliError::Tolerance(_) => 4,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Domain(_) => "domain",
            CliError::Tolerance(_) => "tolerance",
        }
    }

    /// Single-line JSON record for stderr.
    pub fn record(&self, command: &str) -> String {
        serde_json::json!({
            "error": self.kind(),
            "command": command,
            "message": self.to_string(),
            "exit_code": self.exit_code(),
        })
        .to_string()
    }
}

fn domain<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Domain(e.to_string())
}

fn io_err<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Config(format!("I/O error: {e}"))
}

pub fn load_config(cmd: Command, path: Option<&Path>) -> Result<RunConfig, CliError> {
    let Some(path) = path else {
        return Ok(RunConfig {
            out: None,
            format: None,
            command: CommandConfig::default_for(cmd),
        });
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let cfg: RunConfig = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if cfg.command.command() != cmd {
        return Err(CliError::Config(format!(
            "config is for '{}', not '{}'",
            cfg.command.command().name(),
            cmd.name()
        )));
    }
    Ok(cfg)
}

/// Where results go: a file (with a `.meta.json` sidecar for CSV) or stdout.
struct Sink {
    path: Option<PathBuf>,
    format: Format,
}

impl Sink {
    fn writer(&self) -> Result<Box<dyn Write>, CliError> {
        Ok(match &self.path {
            Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| {
                CliError::Config(format!("cannot create {}: {e}", p.display()))
            })?)),
            None => Box::new(BufWriter::new(io::stdout().lock())),
        })
    }

    fn emit<T, F>(&self, value: &T, meta: serde_json::Value, csv: F) -> Result<(), CliError>
    where
        T: Serialize,
        F: FnOnce(&mut dyn Write) -> csv::Result<()>,
    {
        let mut w = self.writer()?;
        match self.format {
            Format::Json => {
                serde_json::to_writer_pretty(&mut w, value).map_err(io_err)?;
                writeln!(w).map_err(io_err)?;
            }
            Format::Csv => {
                csv(&mut w).map_err(io_err)?;
                if let Some(p) = &self.path {
                    let side = sidecar_path(p);
                    let f = File::create(&side).map_err(io_err)?;
                    serde_json::to_writer_pretty(BufWriter::new(f), &meta).map_err(io_err)?;
                }
            }
        }
        w.flush().map_err(io_err)
    }
}

/// `out.csv` -> `out.meta.json`
pub fn sidecar_path(p: &Path) -> PathBuf {
    p.with_extension("meta.json")
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        // Fails only if a pool already exists, e.g. when run twice in-process.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    let cfg = load_config(cli.command, cli.config.as_deref())?;
    let sink = Sink {
        path: cli.out.clone().or(cfg.out.clone()),
        format: cli.format.or(cfg.format).unwrap_or_default(),
    };
    let echo = serde_json::to_value(&cfg.command).unwrap_or_default();
    match &cfg.command {
        CommandConfig::Spectrum(c) => cmd_spectrum(c, &sink, echo),
        CommandConfig::Dynamics(c) => cmd_dynamics(c, &sink, echo),
        CommandConfig::PhaseDiagram(c) => cmd_phase_diagram(c, &sink, echo),
        CommandConfig::Tcrit(c) => cmd_tcrit(c, &sink, echo),
        CommandConfig::Validate(c) => cmd_validate(c, &sink, echo),
    }
}

fn check_range(lo: f64, hi: f64, n: usize) -> Result<(), CliError> {
    if n == 0 || !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(CliError::Domain(format!(
            "empty range [{lo}, {hi}] with {n} points"
        )));
    }
    Ok(())
}

fn with_config(mut meta: serde_json::Value, echo: serde_json::Value) -> serde_json::Value {
    if let Some(obj) = meta.as_object_mut() {
        obj.insert("config".into(), echo);
        obj.insert("version".into(), env!("CARGO_PKG_VERSION").into());
    }
    meta
}

fn cmd_spectrum(c: &SpectrumConfig, sink: &Sink, echo: serde_json::Value) -> Result<(), CliError> {
    check_range(c.delta_min, c.delta_max, c.points)?;
    if !(c.gamma_b >= 0.0) {
        return Err(CliError::Domain(format!(
            "gamma_b must be >= 0, got {}",
            c.gamma_b
        )));
    }
    let rows = eigenvalue_profile(
        c.gamma_b,
        c.alpha,
        &linspace(c.delta_min, c.delta_max, c.points),
    );
    let meta = serde_json::json!({
        "kind": "spectrum",
        "displacement": "lambda + i gamma_b",
        "rows": rows.len(),
    });
    sink.emit(&rows, with_config(meta, echo), |w| {
        write_eigen_csv(&rows, w)
    })
}

fn cmd_phase_diagram(
    c: &PhaseDiagramConfig,
    sink: &Sink,
    echo: serde_json::Value,
) -> Result<(), CliError> {
    let alpha_min = c.alpha_min.unwrap_or(-0.5 * c.gamma_b);
    check_range(c.delta_min, c.delta_max, c.n_delta)?;
    check_range(alpha_min, c.alpha_max, c.n_alpha)?;
    let grid = phase_diagram(
        c.gamma_b,
        (c.delta_min, c.delta_max),
        (alpha_min, c.alpha_max),
        c.n_delta,
        c.n_alpha,
    )
    .map_err(domain)?;
    sink.emit(&grid, with_config(grid.metadata(), echo), |w| {
        grid.write_csv(w)
    })
}

fn cmd_tcrit(c: &TcritConfig, sink: &Sink, echo: serde_json::Value) -> Result<(), CliError> {
    check_range(c.delta_min, c.delta_max, c.points)?;
    let curve =
        tcrit_curve(c.gamma_b, c.e_max, (c.delta_min, c.delta_max), c.points).map_err(domain)?;
    sink.emit(&curve, with_config(curve.metadata(), echo), |w| {
        curve.write_csv(w)
    })
}

fn closed_form_trajectory(run: &ReducedRun) -> Result<Trajectory, CliError> {
    run.params.validate().map_err(domain)?;
    if !(run.t_end > 0.0 && run.dt > 0.0) {
        return Err(CliError::Domain(format!(
            "need t_end, dt > 0; got {}, {}",
            run.t_end, run.dt
        )));
    }
    let n = (run.t_end / run.dt).round().max(1.0) as usize;
    let times = linspace(0.0, run.t_end, n + 1);
    let [a0, b0] = run.init;
    let recs: Vec<_> = times
        .iter()
        .map(|&t| energy_record(&run.params, t, a0, b0))
        .collect();
    Ok(Trajectory {
        times,
        amps: recs
            .iter()
            .map(|r| crate::integrator::Amplitudes {
                a: r.a,
                b: r.b,
                c: None,
            })
            .collect(),
        energies: recs.iter().map(|r| r.energy).collect(),
        powers: recs.iter().map(|r| r.power).collect(),
        meta: TrajectoryMeta {
            model: "closed_form".into(),
            time_unit: TimeUnit::Rescaled,
            dt_sample: run.t_end / n as f64,
            dt_step: 0.0,
            refinements: 0,
            error_estimate: 0.0,
            gamma_eff: Some(run.params.gamma_eff),
            switch_times: Vec::new(),
            overshoot: None,
            params: serde_json::to_value(run.params).unwrap_or_default(),
        },
    })
}

/// Convert a rescaled-time trajectory to physical time: `t -> t / gamma_eff`,
/// `P -> gamma_eff P`.
fn to_physical(mut tr: Trajectory, gamma_eff: f64) -> Trajectory {
    for t in &mut tr.times {
        *t /= gamma_eff;
    }
    for p in &mut tr.powers {
        *p *= gamma_eff;
    }
    tr.meta.dt_sample /= gamma_eff;
    tr.meta.dt_step /= gamma_eff;
    for t in &mut tr.meta.switch_times {
        *t /= gamma_eff;
    }
    tr.meta.time_unit = TimeUnit::Physical;
    tr
}

fn cmd_dynamics(c: &DynamicsConfig, sink: &Sink, echo: serde_json::Value) -> Result<(), CliError> {
    let traj = match c {
        DynamicsConfig::Panel(p) => {
            let points: Vec<(f64, f64)> = p.points.iter().map(|q| (q[0], q[1])).collect();
            let series = dynamics_panel(p.gamma_b, &points, p.t_end, p.dt).map_err(domain)?;
            let meta = serde_json::json!({
                "kind": "dynamics_panel",
                "eps_r": 1.0,
                "time_unit": "rescaled",
                "regimes": series.iter().map(|s| s.regime).collect::<Vec<_>>(),
                "steady_states": series.iter().map(|s| s.steady_state).collect::<Vec<_>>(),
            });
            return sink.emit(&series, with_config(meta, echo), |w| {
                write_dynamics_csv(&series, w)
            });
        }
        DynamicsConfig::ClosedForm(run) => {
            let tr = closed_form_trajectory(run)?;
            match run.time_unit {
                TimeUnit::Rescaled => tr,
                TimeUnit::Physical => to_physical(tr, run.params.gamma_eff),
            }
        }
        DynamicsConfig::Reduced(run) => {
            run.params.validate().map_err(domain)?;
            let tr = integrate_reduced(&run.params, run.t_end, run.dt, run.init).map_err(domain)?;
            match run.time_unit {
                TimeUnit::Rescaled => tr,
                TimeUnit::Physical => to_physical(tr, run.params.gamma_eff),
            }
        }
        DynamicsConfig::Full(run) => {
            run.params.validate().map_err(domain)?;
            integrate_full(&run.params, run.t_end, run.dt, run.init).map_err(domain)?
        }
        DynamicsConfig::Quench(run) => {
            let schedule = QuenchSchedule {
                segments: run.segments.clone(),
            };
            integrate_quench(&schedule, run.init, run.dt).map_err(domain)?
        }
    };
    let meta = serde_json::json!({ "kind": "trajectory", "meta": traj.meta });
    sink.emit(&traj, with_config(meta, echo), |w| traj.write_csv(w))
}

/// One row of the full-versus-reduced comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationRow {
    pub ratio: f64,
    pub separation_ratio: f64,
    /// `|b_full - b_reduced| / |b_reduced|` at the comparison time.
    pub error_at_t: f64,
    /// Largest `|b_full - b_reduced|` over the run, relative to `max |b_reduced|`.
    pub max_error: f64,
}

pub fn validation_row(
    family: &SeparatedFamily,
    ratio: f64,
    t: f64,
    samples: usize,
) -> Result<ValidationRow, CliError> {
    let p = family.member(ratio);
    let (r, diag) = reduce_with_diagnostics(&p).map_err(domain)?;
    let t_phys = t / r.gamma_eff;
    let tr =
        integrate_full(&p, t_phys, t_phys / samples.max(1) as f64, [ZERO; 3]).map_err(domain)?;
    let gauge = Complex64::from_polar(1.0, diag.coupling_phase);
    let mut worst: f64 = 0.0;
    let mut peak: f64 = 0.0;
    let mut at_t = 0.0;
    for (tp, s) in tr.times.iter().zip(&tr.amps) {
        let (_, b) = amplitudes_from_rest(&r, tp * r.gamma_eff);
        let b = b * gauge;
        let diff = (s.b - b).norm();
        worst = worst.max(diff);
        peak = peak.max(b.norm());
        at_t = diff / b.norm();
    }
    Ok(ValidationRow {
        ratio,
        separation_ratio: diag.separation_ratio.value(),
        error_at_t: at_t,
        max_error: if peak > 0.0 { worst / peak } else { 0.0 },
    })
}

fn write_validation_csv(rows: &[ValidationRow], w: &mut dyn Write) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["ratio", "separation_ratio", "error_at_t", "max_error"])?;
    for r in rows {
        out.write_record([
            crate::sweep::fmt(r.ratio),
            crate::sweep::fmt(r.separation_ratio),
            crate::sweep::fmt(r.error_at_t),
            crate::sweep::fmt(r.max_error),
        ])?;
    }
    out.flush()?;
    Ok(())
}

fn cmd_validate(c: &ValidateConfig, sink: &Sink, echo: serde_json::Value) -> Result<(), CliError> {
    if c.ratios.is_empty() || c.ratios.iter().any(|&k| !(k > 0.0)) {
        return Err(CliError::Domain(
            "ratios must be a non-empty list of positive numbers".into(),
        ));
    }
    if !(c.t > 0.0) {
        return Err(CliError::Domain(format!("t must be positive, got {}", c.t)));
    }
    let rows: Vec<ValidationRow> = c
        .ratios
        .iter()
        .map(|&k| validation_row(&c.family, k, c.t, c.samples))
        .collect::<Result<_, _>>()?;

    let mut sorted = rows.clone();
    sorted.sort_by(|a, b| a.ratio.total_cmp(&b.ratio));
    let decreasing = sorted.windows(2).all(|w| w[1].error_at_t < w[0].error_at_t);
    let last = sorted.last().map(|r| r.error_at_t).unwrap_or(0.0);
    let within = last < c.tolerance;
    let pass = within && (decreasing || !c.require_decreasing);

    let meta = serde_json::json!({
        "kind": "validate",
        "decreasing": decreasing,
        "largest_ratio_error": last,
        "tolerance": c.tolerance,
        "pass": pass,
    });
    sink.emit(&rows, with_config(meta, echo), |w| {
        write_validation_csv(&rows, w)
    })?;
    if !within {
        return Err(CliError::Tolerance(format!(
            "error {last:e} at the largest ratio exceeds {}",
            c.tolerance
        )));
    }
    if c.require_decreasing && !decreasing {
        return Err(CliError::Tolerance(
            "error does not decrease with the separation ratio".into(),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn defaults_round_trip_for_every_command() {
        for cmd in [
            Command::Spectrum,
            Command::Dynamics,
            Command::PhaseDiagram,
            Command::Tcrit,
            Command::Validate,
        ] {
            let cfg = RunConfig {
                out: Some("x.csv".into()),
                format: Some(Format::Json),
                command: CommandConfig::default_for(cmd),
            };
            let text = serde_json::to_string(&cfg).unwrap();
            assert!(text.contains(&format!("\"command\":\"{}\"", cmd.name())));
            assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), cfg);
        }
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let bad = r#"{"command": "tcrit", "gamma_b": 0.5, "emax": 10}"#;
        assert!(serde_json::from_str::<RunConfig>(bad).is_err());
    }

    #[test]
    fn error_records_are_single_line_json() {
        let e = CliError::Domain("bad\nthing".into());
        let rec = e.record("tcrit");
        assert!(!rec.contains('\n'));
        let v: serde_json::Value = serde_json::from_str(&rec).unwrap();
        assert_eq!(v["exit_code"], 3);
        assert_eq!(v["error"], "domain");
    }

    #[test]
    fn sidecar_name() {
        assert_eq!(
            sidecar_path(Path::new("out/tc.csv")),
            PathBuf::from("out/tc.meta.json")
        );
    }

    fn arb_reduced() -> impl Strategy<Value = ReducedParams> {
        (
            0.0..3.0f64,
            0.0..3.0f64,
            -5.0..5.0f64,
            0.0..3.0f64,
            0.01..10.0f64,
        )
            .prop_map(|(ga, gb, d, e, g)| ReducedParams {
                gamma_eff: g,
                ..ReducedParams::new(ga, gb, d, e)
            })
    }

    fn arb_config() -> impl Strategy<Value = RunConfig> {
        let spectrum = (
            0.0..3.0f64,
            -1.0..3.0f64,
            -5.0..0.0f64,
            0.0..5.0f64,
            1usize..1000,
        )
            .prop_map(|(g, a, lo, hi, n)| {
                CommandConfig::Spectrum(SpectrumConfig {
                    gamma_b: g,
                    alpha: a,
                    delta_min: lo,
                    delta_max: hi,
                    points: n,
                })
            });
        let tcrit = (0.0..1.0f64, 1.0..1e9f64, 1usize..500).prop_map(|(g, e, n)| {
            CommandConfig::Tcrit(TcritConfig {
                gamma_b: g,
                e_max: e,
                points: n,
                ..Default::default()
            })
        });
        let phase = (0.1..3.0f64, proptest::option::of(-1.0..0.0f64), 1usize..300).prop_map(
            |(g, amin, n)| {
                CommandConfig::PhaseDiagram(PhaseDiagramConfig {
                    gamma_b: g,
                    alpha_min: amin,
                    n_delta: n,
                    ..Default::default()
                })
            },
        );
        let closed =
            (arb_reduced(), 0.1..50.0f64, 1e-3..1.0f64, -2.0..2.0f64).prop_map(|(r, t, dt, x)| {
                CommandConfig::Dynamics(DynamicsConfig::ClosedForm(ReducedRun {
                    params: r,
                    t_end: t,
                    dt,
                    init: [Complex64::new(x, -x), ZERO],
                    time_unit: TimeUnit::Physical,
                }))
            });
        let quench = (arb_reduced(), arb_reduced(), 0.1..10.0f64).prop_map(|(a, b, d)| {
            CommandConfig::Dynamics(DynamicsConfig::Quench(QuenchRun {
                segments: vec![
                    QuenchSegment {
                        duration: d,
                        params: a,
                    },
                    QuenchSegment {
                        duration: 2.0 * d,
                        params: b,
                    },
                ],
                dt: 0.01,
                init: [ZERO; 2],
            }))
        });
        let validate =
            (proptest::collection::vec(1.0..1e3f64, 1..5), 0.1..10.0f64).prop_map(|(ratios, t)| {
                CommandConfig::Validate(ValidateConfig {
                    ratios,
                    t,
                    ..Default::default()
                })
            });
        (
            prop_oneof![spectrum, tcrit, phase, closed, quench, validate],
            proptest::option::of(prop_oneof![Just(Format::Csv), Just(Format::Json)]),
        )
            .prop_map(|(command, format)| RunConfig {
                out: None,
                format,
                command,
            })
    }

    proptest! {
        #[test]
        fn run_config_round_trips(cfg in arb_config()) {
            let text = serde_json::to_string_pretty(&cfg).unwrap();
            let back: RunConfig = serde_json::from_str(&text).unwrap();
            prop_assert_eq!(back, cfg);
        }
    }
}
