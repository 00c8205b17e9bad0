//! Subcommand implementations for the `epsdual` binary.
//!
//! Each `cmd_*` writes human-readable output to the given writer and returns
//! a [`CliError`] whose [`CliError::exit_code`] the binary forwards.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use epsdual::config::{
    AssumptionViolation, BuildError, BuiltExperiment, ConfigError, ExperimentConfig, OracleRegistry,
};
use epsdual::dynamics::{check_schedule, DynamicsError, Experiment, Mode, Variant};
use epsdual::reference::{lemma1_check, solve_saddle, ReferenceError, SaddlePoint};
use epsdual::trace::{self, format_f64, max_primal_magnitude, tail_min_delta, Trace, TraceError};
use log::warn;
use thiserror::Error;

/// Horizon of the early-phase overshoot statistic.
pub const OVERSHOOT_HORIZON: u64 = 100;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Assumption(#[from] AssumptionViolation),
    #[error("reference solution failed: {0}")]
    Saddle(#[from] ReferenceError),
    #[error("configs describe different problems: {0}")]
    Mismatch(String),
    #[error("run failed: {0}")]
    Dynamics(#[from] DynamicsError),
    #[error("trace output failed: {0}")]
    Trace(#[from] TraceError),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl From<BuildError> for CliError {
    fn from(e: BuildError) -> Self {
        match e {
            BuildError::Config(c) => CliError::Config(c),
            BuildError::Assumption(a) => CliError::Assumption(a),
        }
    }
}

impl CliError {
    /// 2 config, 3 assumption, 4 saddle, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Mismatch(_) => 2,
            CliError::Assumption(_) => 3,
            CliError::Saddle(_) => 4,
            CliError::Dynamics(_) | CliError::Trace(_) | CliError::Io(_) => 1,
        }
    }
}

/// Flags shared by the subcommands.
#[derive(Debug, Clone, Default)]
pub struct Options {
    pub out: Option<PathBuf>,
    pub iters: Option<usize>,
    pub quiet: bool,
}

/// `%g`-style formatting with 6 significant digits.
pub fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return if v.is_nan() {
            "nan".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(&format!("{v:.decimals$}"))
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_owned()
    } else {
        s.to_owned()
    }
}

fn fmt_list(values: &[f64]) -> String {
    let items: Vec<String> = values.iter().map(|&v| fmt_num(v)).collect();
    format!("({})", items.join(", "))
}

fn load(path: &Path, opts: &Options) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(iters) = opts.iters {
        cfg.iters = iters;
    }
    Ok(cfg)
}

/// Reference saddle point, when the problem is one the reference oracle
/// supports (scalar, interval sets). Anything else runs without one.
fn try_reference(built: &BuiltExperiment) -> Option<SaddlePoint> {
    match solve_saddle(&built.graph, &built.problem) {
        Ok(s) => Some(s),
        Err(e) => {
            warn!("no reference solution ({e}); gap, delta and residual columns left empty");
            None
        }
    }
}

fn execute(
    cfg: &ExperimentConfig,
    built: &BuiltExperiment,
    reference: Option<&SaddlePoint>,
) -> Result<Trace, CliError> {
    let exp = Experiment {
        graph: &built.graph,
        problem: &built.problem,
        alpha: cfg.alpha.clone(),
        eps: cfg.eps.clone(),
        variant: cfg.variant,
        normalization: built.normalization,
    };
    Ok(epsdual::run(
        &exp,
        built.x0.clone(),
        built.v0.clone(),
        cfg.iters,
        reference,
    )?)
}

fn default_out(config_path: &Path, suffix: &str) -> PathBuf {
    let stem = config_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("trace");
    PathBuf::from(format!("{stem}{suffix}"))
}

fn opt_num(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_else(|| "n/a".into())
}

/// Runs one experiment, writes its CSV trace and prints a summary line.
pub fn cmd_run(config_path: &Path, opts: &Options, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = load(config_path, opts)?;
    let built = cfg.build(&OracleRegistry::default())?;
    let reference = try_reference(&built);

    let started = Instant::now();
    let trace = execute(&cfg, &built, reference.as_ref())?;
    let wall = started.elapsed().as_secs_f64();

    let path = opts
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| default_out(config_path, ".csv"));
    trace::write_csv(&trace.records, (built.x0.n(), built.x0.dim()), &path)?;

    if opts.quiet {
        return Ok(());
    }
    let last = trace.last().expect("run yields at least one record");
    writeln!(
        out,
        "final residual: {}  final consensus error: {}  iterations: {}  wall time: {} s",
        opt_num(last.residual),
        fmt_num(last.consensus_error),
        cfg.iters,
        fmt_num(wall)
    )?;
    if let (Some(saddle), Variant::Plain) = (&reference, cfg.variant) {
        let report = lemma1_check(&trace.records, saddle, &cfg.alpha, &cfg.eps)?;
        writeln!(
            out,
            "descent inequality: {} (fitted C1 = {}, {} steps)",
            if report.holds { "holds" } else { "fails" },
            fmt_num(report.fitted_c1),
            report.steps_checked
        )?;
    }
    if reference.is_some() && !trace.is_empty() {
        writeln!(
            out,
            "tail-min delta (last 20%): {}",
            fmt_num(tail_min_delta(&trace.records, 0.2)?)
        )?;
    }
    writeln!(out, "trace: {}", path.display())?;
    Ok(())
}

/// Prints schedule verdicts and assumption diagnostics. Exits 3 when an
/// assumption fails, after printing everything that could be evaluated.
pub fn cmd_check(config_path: &Path, opts: &Options, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = load(config_path, opts)?;
    let t1 = check_schedule(&cfg.alpha, &cfg.eps, Mode::Theorem1);
    let t2 = check_schedule(&cfg.alpha, &cfg.eps, Mode::Theorem2);
    let graph = cfg.graph()?;
    let intervals = cfg.intervals()?;
    let mut violation = None;

    let mut lines = vec![format!(
        "{}: {t1}; {}: {t2}",
        Mode::Theorem1,
        Mode::Theorem2
    )];
    if graph.is_connected() {
        let diameter = graph.diameter().expect("connected graph has a diameter");
        lines.push("connected: yes".into());
        lines.push(format!("diameter: {diameter}"));
        lines.push(format!("min D: {}", diameter + 1));
    } else {
        lines.push("connected: no (Assumption 2 violated)".into());
        lines.push("diameter: inf".into());
        lines.push("min D: n/a".into());
        violation = Some(AssumptionViolation {
            number: 2,
            message: "communication graph is not connected".into(),
        });
    }
    let feasible = intervals
        .iter()
        .try_fold(epsdual::Interval::real_line(), |acc, s| acc.intersect(s));
    match feasible {
        Ok(x) => lines.push(format!(
            "X = [{}, {}]",
            fmt_num(x.lower()),
            fmt_num(x.upper())
        )),
        Err(_) => {
            lines.push("X = empty (Assumption 1 violated)".into());
            violation.get_or_insert(AssumptionViolation {
                number: 1,
                message: "constraint sets have empty intersection".into(),
            });
        }
    }
    if !opts.quiet {
        for line in lines {
            writeln!(out, "{line}")?;
        }
    }
    match violation {
        Some(v) => Err(v.into()),
        None => Ok(()),
    }
}

/// Prints the centralized optimum and a saddle point of the Lagrangian.
pub fn cmd_reference(
    config_path: &Path,
    opts: &Options,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let cfg = load(config_path, opts)?;
    let built = cfg.build(&OracleRegistry::default())?;
    let saddle = solve_saddle(&built.graph, &built.problem)?;
    if !opts.quiet {
        writeln!(out, "x* = {}", fmt_num(saddle.x_star_scalar()))?;
        writeln!(out, "f* = {}", fmt_num(saddle.f_star))?;
        writeln!(out, "v* = {}", fmt_list(saddle.v_star.as_slice()))?;
        writeln!(out, "n = {}", fmt_list(&saddle.multipliers))?;
    }
    Ok(())
}

/// Runs two configs over the same problem and start, writing `a.csv`,
/// `b.csv` and `residuals.csv` into the output directory.
pub fn cmd_compare(
    config_a: &Path,
    config_b: &Path,
    opts: &Options,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let cfg_a = load(config_a, opts)?;
    let cfg_b = load(config_b, opts)?;
    if !cfg_a.same_setup(&cfg_b) {
        return Err(CliError::Mismatch(
            "graph, problem and initial state must agree".into(),
        ));
    }
    let built_a = cfg_a.build(&OracleRegistry::default())?;
    let built_b = cfg_b.build(&OracleRegistry::default())?;
    let reference = try_reference(&built_a);
    let trace_a = execute(&cfg_a, &built_a, reference.as_ref())?;
    let trace_b = execute(&cfg_b, &built_b, reference.as_ref())?;

    let dir = opts.out.clone().unwrap_or_else(|| PathBuf::from("compare"));
    fs::create_dir_all(&dir)?;
    let shape = (built_a.x0.n(), built_a.x0.dim());
    trace::write_csv(&trace_a.records, shape, dir.join("a.csv"))?;
    trace::write_csv(&trace_b.records, shape, dir.join("b.csv"))?;
    write_joined(&trace_a, &trace_b, &dir.join("residuals.csv"))?;

    if !opts.quiet {
        writeln!(
            out,
            "overshoot a: {}  overshoot b: {}  (max |x_i(k)|, k <= {OVERSHOOT_HORIZON})",
            fmt_num(max_primal_magnitude(&trace_a.records, OVERSHOOT_HORIZON)),
            fmt_num(max_primal_magnitude(&trace_b.records, OVERSHOOT_HORIZON)),
        )?;
        writeln!(
            out,
            "final residual a: {}  final residual b: {}",
            opt_num(trace_a.last().and_then(|r| r.residual)),
            opt_num(trace_b.last().and_then(|r| r.residual)),
        )?;
        writeln!(out, "traces: {}", dir.display())?;
    }
    Ok(())
}

fn write_joined(a: &Trace, b: &Trace, path: &Path) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(TraceError::from)?;
    w.write_record(["k", "residual_a", "residual_b"])
        .map_err(TraceError::from)?;
    let cell = |r: Option<&epsdual::TraceRecord>| {
        r.and_then(|r| r.residual)
            .map(format_f64)
            .unwrap_or_default()
    };
    for idx in 0..a.len().max(b.len()) {
        let (ra, rb) = (a.records.get(idx), b.records.get(idx));
        let k = ra
            .or(rb)
            .map(|r| r.k)
            .expect("index within the longer trace");
        w.write_record([k.to_string(), cell(ra), cell(rb)])
            .map_err(TraceError::from)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(fmt_num(4.0), "4");
        assert_eq!(fmt_num(-7.0), "-7");
        assert_eq!(fmt_num(13.6), "13.6");
        assert_eq!(fmt_num(-0.9583333333333324), "-0.958333");
        assert_eq!(fmt_num(123456.7), "123457");
        assert_eq!(fmt_num(999999.7), "1e+06");
        assert_eq!(fmt_num(1.5e-5), "1.5e-05");
        assert_eq!(fmt_num(0.0001), "0.0001");
        assert_eq!(fmt_num(f64::INFINITY), "inf");
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Config(ConfigError::Missing("x0")).exit_code(), 2);
        assert_eq!(CliError::Mismatch(String::new()).exit_code(), 2);
        let v = AssumptionViolation {
            number: 1,
            message: String::new(),
        };
        assert_eq!(CliError::Assumption(v).exit_code(), 3);
        assert_eq!(
            CliError::Saddle(ReferenceError::Disconnected).exit_code(),
            4
        );
        assert_eq!(CliError::Io(io::Error::other("x")).exit_code(), 1);
    }
}
