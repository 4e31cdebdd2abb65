//! `stab`: command-line front end for the averaged-functional stability
//! toolkit.
//!
//! Five subcommands cover the pipeline: `analyze` classifies an
//! equilibrium from the cycle-averaged functionals, `linearize` builds
//! the averaged state matrix next to the finite-difference Jacobian,
//! `sweep` tracks its eigenvalues across an excitation range, `portrait`
//! integrates a ring of seed trajectories for external plotting, and
//! `compare-jacobian` measures the small-epsilon convergence rate.
//!
//! Exit codes: 0 success, 1 usage, 2 the origin is not an equilibrium,
//! 3 numerical failure, 4 definition-file parse error.

mod report;

use std::env;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use stab_core::averaging::limit_cycle_amplitude;
use stab_core::classify::{analyze, AnalyzeOptions, DEFAULT_ZERO_TOL};
use stab_core::expr::{parse_system, SystemDef};
use stab_core::linearize::{
    averaging_matrix, compare_jacobian, epsilon_sweep, inf_norm, jacobian_fd, EpsilonSweep,
    FD_STEP,
};
use stab_core::ode::{portrait, trajectory_csv, Trajectory, DEFAULT_STEP};
use stab_core::StabError;

use report::{
    to_json, AnalyzeReport, ComparePair, CompareJacobianReport, ComplexOut, EigenSummaryOut,
    LinearizeReport, PortraitFile, PortraitIndex, SweepBlock, SweepReport, SweepSampleOut,
};

/// Integration horizon for `portrait`; long enough for several periods
/// of the bundled oscillators at unit frequency.
const PORTRAIT_T_END: f64 = 30.0;

/// Trajectory samples earlier than this are excluded from the
/// return-distance search so the starting point does not match itself.
const RETURN_MIN_TIME: f64 = 1.0;

#[derive(Parser)]
#[command(
    name = "stab",
    version,
    about = "Stability analysis of equilibria via cycle-averaged functionals"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Classify the origin from the averaged functionals t1 and t2.
    Analyze(CommonArgs),
    /// Build the averaged state matrix and the finite-difference Jacobian.
    Linearize(CommonArgs),
    /// Track eigenvalues of the averaged matrix across an epsilon range.
    Sweep(CommonArgs),
    /// Integrate a ring of seed states and write one CSV per trajectory.
    Portrait(CommonArgs),
    /// Measure how fast the averaged matrix approaches the Jacobian.
    CompareJacobian(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// System definition file (JSON).
    #[arg(long)]
    input: PathBuf,

    /// Excitation orbit radius (portrait: seed-ring radius).
    #[arg(long, default_value_t = 1e-3)]
    epsilon: f64,

    /// Epsilon range for sweep and compare-jacobian, as MIN:MAX.
    #[arg(long, value_parser = parse_eps_range)]
    eps_range: Option<(f64, f64)>,

    /// Sample count: sweep points, comparison points, or portrait seeds.
    #[arg(long)]
    samples: Option<usize>,

    /// Quadrature node count; beats STAB_NODES and the per-system default.
    #[arg(long)]
    nodes: Option<usize>,

    /// Snapping tolerance for the sign classification.
    #[arg(long, default_value_t = DEFAULT_ZERO_TOL)]
    zero_tol: f64,

    /// Equilibrium to move to the origin, as comma-separated coordinates.
    #[arg(long)]
    shift: Option<String>,

    /// Seed for stochastic procedures. The current subcommands are fully
    /// deterministic; the flag is accepted so scripts can pin it.
    #[arg(long, default_value_t = 42)]
    seed: u64,

    /// Write the report here instead of stdout (portrait: output directory).
    #[arg(long)]
    output: Option<PathBuf>,

    /// Report encoding.
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Text,
}

fn parse_eps_range(raw: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = raw
        .split_once(':')
        .ok_or_else(|| String::from("expected MIN:MAX"))?;
    let lo: f64 = lo
        .trim()
        .parse()
        .map_err(|_| format!("`{lo}` is not a number"))?;
    let hi: f64 = hi
        .trim()
        .parse()
        .map_err(|_| format!("`{hi}` is not a number"))?;
    if !(lo.is_finite() && hi.is_finite() && 0.0 < lo && lo < hi) {
        return Err(String::from("need 0 < MIN < MAX"));
    }
    Ok((lo, hi))
}

/// Error carrying the process exit code alongside the message.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: 1,
            message: message.into(),
        }
    }
}

impl From<StabError> for Failure {
    fn from(e: StabError) -> Self {
        let code = match &e {
            StabError::Syntax { .. }
            | StabError::UnknownSymbol { .. }
            | StabError::Arity { .. }
            | StabError::DimensionMismatch { .. }
            | StabError::Document(_) => 4,
            StabError::NotAnEquilibrium { .. } => 2,
            StabError::InvalidParameter(_) => 1,
            _ => 3,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        // clap exits with 2 by default, which this tool reserves for
        // non-equilibrium inputs; remap parse failures to the usage code.
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Cmd::Analyze(args) => cmd_analyze(&args),
        Cmd::Linearize(args) => cmd_linearize(&args),
        Cmd::Sweep(args) => cmd_sweep(&args),
        Cmd::Portrait(args) => cmd_portrait(&args),
        Cmd::CompareJacobian(args) => cmd_compare_jacobian(&args),
    }
}

fn load_system(args: &CommonArgs) -> Result<SystemDef, Failure> {
    if !(args.epsilon.is_finite() && args.epsilon > 0.0) {
        return Err(Failure::usage("--epsilon must be positive"));
    }
    if !(args.zero_tol.is_finite() && args.zero_tol > 0.0) {
        return Err(Failure::usage("--zero-tol must be positive"));
    }
    let text = fs::read_to_string(&args.input).map_err(|e| {
        Failure::usage(format!("cannot read {}: {e}", args.input.display()))
    })?;
    let s = parse_system(&text)?;
    match &args.shift {
        Some(raw) => {
            let xe = parse_shift(raw, s.n)?;
            Ok(s.shift_equilibrium(&xe)?)
        }
        None => Ok(s),
    }
}

fn parse_shift(raw: &str, n: usize) -> Result<Vec<f64>, Failure> {
    let parts: Result<Vec<f64>, _> = raw.split(',').map(|p| p.trim().parse::<f64>()).collect();
    let xe = parts.map_err(|_| {
        Failure::usage(format!("--shift expects comma-separated numbers, got `{raw}`"))
    })?;
    if xe.len() != n {
        return Err(Failure::usage(format!(
            "--shift supplies {} coordinate(s) but the system has {} state(s)",
            xe.len(),
            n
        )));
    }
    Ok(xe)
}

fn resolve_nodes(args: &CommonArgs, s: &SystemDef) -> Result<usize, Failure> {
    if let Some(n) = args.nodes {
        return Ok(n);
    }
    match env::var("STAB_NODES") {
        Ok(v) => v.trim().parse::<usize>().map_err(|_| {
            Failure::usage(format!("STAB_NODES must be a positive integer, got `{v}`"))
        }),
        Err(env::VarError::NotPresent) => Ok(s.default_nodes()),
        Err(e) => Err(Failure::usage(format!("STAB_NODES: {e}"))),
    }
}

fn emit(args: &CommonArgs, body: String) -> Result<(), Failure> {
    match &args.output {
        Some(path) => fs::write(path, body)
            .map_err(|e| Failure::usage(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

fn matrix_rows(m: &stab_core::linearize::Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect())
        .collect()
}

fn complex_out(eigenvalues: &[stab_core::linearize::Eigenvalue]) -> Vec<ComplexOut> {
    eigenvalues
        .iter()
        .map(|e| ComplexOut { re: e.re, im: e.im })
        .collect()
}

fn sweep_samples(sweep: &EpsilonSweep) -> Vec<SweepSampleOut> {
    sweep
        .samples
        .iter()
        .map(|s| SweepSampleOut {
            epsilon: s.epsilon,
            eigenvalues: complex_out(&s.eigenvalues),
            max_re: s.max_re,
            re_tol: s.re_tol,
        })
        .collect()
}

fn cmd_analyze(args: &CommonArgs) -> Result<(), Failure> {
    let s = load_system(args)?;
    let nodes = resolve_nodes(args, &s)?;
    let options = AnalyzeOptions {
        zero_tol: args.zero_tol,
        nodes: Some(nodes),
        ..AnalyzeOptions::default()
    };
    let analysis = analyze(&s, args.epsilon, &options)?;
    let report = AnalyzeReport {
        label: s.label.clone(),
        epsilon: analysis.functionals.epsilon,
        nodes,
        t1: analysis.functionals.t1,
        t2: analysis.functionals.t2,
        quad_error: analysis.functionals.quad_error,
        verdict: analysis.verdict.status.as_str(),
        criterion: analysis.verdict.criterion.as_str(),
        status: analysis.status.as_str(),
        singular_point: analysis.singular.kind.as_str(),
        back_solved: analysis.singular.back_solved,
        eigen_summary: EigenSummaryOut {
            sum_re: analysis.eigen.sum_re,
            prod_re: analysis.eigen.prod_re,
        },
        sweep_derived: analysis.sweep_derived,
        sweep: analysis.sweep.as_ref().map(|sw| SweepBlock {
            eps_min: sw.eps_range.0,
            eps_max: sw.eps_range.1,
            verdict: sw.verdict.as_str(),
            samples: sweep_samples(sw),
        }),
    };
    let body = match args.format {
        Format::Json => to_json(&report),
        Format::Csv => report.to_csv(),
        Format::Text => report.to_text(),
    };
    emit(args, body)
}

fn cmd_linearize(args: &CommonArgs) -> Result<(), Failure> {
    let s = load_system(args)?;
    let nodes = resolve_nodes(args, &s)?;
    let averaged = averaging_matrix(&s, args.epsilon, nodes)?;
    let jacobian = jacobian_fd(&s, FD_STEP)?;
    let diff_norm = inf_norm(&(&averaged.matrix - &jacobian.matrix));
    let report = LinearizeReport {
        label: s.label.clone(),
        epsilon: args.epsilon,
        nodes,
        matrix: matrix_rows(&averaged.matrix),
        eigenvalues: complex_out(&averaged.eigenvalues),
        jacobian: matrix_rows(&jacobian.matrix),
        jacobian_step: FD_STEP,
        diff_norm,
        cross_coupling: averaged.cross_coupling.iter().map(|i| i + 1).collect(),
    };
    let body = match args.format {
        Format::Json => to_json(&report),
        Format::Csv => report.to_csv(),
        Format::Text => report.to_text(),
    };
    emit(args, body)
}

fn cmd_sweep(args: &CommonArgs) -> Result<(), Failure> {
    let s = load_system(args)?;
    let nodes = resolve_nodes(args, &s)?;
    let (eps_min, eps_max) = args
        .eps_range
        .unwrap_or((args.epsilon, 10.0 * args.epsilon));
    let samples = args.samples.unwrap_or(12);
    let sweep = epsilon_sweep(&s, eps_min, eps_max, samples, nodes)?;
    let limit_cycle_roots = if s.n == 2 {
        limit_cycle_amplitude(&s, eps_max, nodes)?
    } else {
        Vec::new()
    };
    let report = SweepReport {
        label: s.label.clone(),
        eps_min: sweep.eps_range.0,
        eps_max: sweep.eps_range.1,
        nodes,
        verdict: sweep.verdict.as_str(),
        samples: sweep_samples(&sweep),
        limit_cycle_roots,
    };
    let body = match args.format {
        Format::Json => to_json(&report),
        Format::Csv => report.to_csv(),
        Format::Text => report.to_text(),
    };
    emit(args, body)
}

fn cmd_portrait(args: &CommonArgs) -> Result<(), Failure> {
    let dir = args
        .output
        .clone()
        .ok_or_else(|| Failure::usage("portrait requires --output DIR"))?;
    let s = load_system(args)?;
    let k = args.samples.unwrap_or(8);
    if k == 0 {
        return Err(Failure::usage("--samples must be at least 1"));
    }
    let seeds: Vec<Vec<f64>> = (0..k)
        .map(|j| {
            let th = std::f64::consts::TAU * j as f64 / k as f64;
            vec![args.epsilon * th.cos(), args.epsilon * th.sin()]
        })
        .collect();
    let trajectories = portrait(&s, &seeds, PORTRAIT_T_END, DEFAULT_STEP)?;
    fs::create_dir_all(&dir)
        .map_err(|e| Failure::usage(format!("cannot create {}: {e}", dir.display())))?;
    let mut files = Vec::with_capacity(trajectories.len());
    for (j, tr) in trajectories.iter().enumerate() {
        let file = format!("portrait_{j:02}.csv");
        fs::write(dir.join(&file), trajectory_csv(tr))
            .map_err(|e| Failure::usage(format!("cannot write {file}: {e}")))?;
        files.push(PortraitFile {
            file,
            x0: tr.x0.clone(),
            samples: tr.t.len(),
            diverged: tr.diverged,
            return_distance: return_distance(tr),
        });
    }
    let index = PortraitIndex {
        label: s.label.clone(),
        epsilon: args.epsilon,
        t_end: PORTRAIT_T_END,
        step: DEFAULT_STEP,
        files,
    };
    let body = to_json(&index);
    fs::write(dir.join("index.json"), &body)
        .map_err(|e| Failure::usage(format!("cannot write index.json: {e}")))?;
    print!("{body}");
    Ok(())
}

/// Closest later return to the starting state, skipping the initial
/// transient so the seed sample itself does not count.
fn return_distance(tr: &Trajectory) -> Option<f64> {
    let mut best: Option<f64> = None;
    for (i, t) in tr.t.iter().enumerate() {
        if *t < RETURN_MIN_TIME {
            continue;
        }
        let d = tr.states[i]
            .iter()
            .zip(&tr.x0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if best.is_none_or(|b| d < b) {
            best = Some(d);
        }
    }
    best
}

fn cmd_compare_jacobian(args: &CommonArgs) -> Result<(), Failure> {
    let s = load_system(args)?;
    let nodes = resolve_nodes(args, &s)?;
    let (eps_min, eps_max) = args.eps_range.unwrap_or((1e-3, 1e-1));
    let samples = args.samples.unwrap_or(3);
    if samples < 2 {
        return Err(Failure::usage("--samples must be at least 2 for a range"));
    }
    let ratio = eps_max / eps_min;
    let grid: Vec<f64> = (0..samples)
        .map(|i| {
            if i == samples - 1 {
                eps_max
            } else {
                eps_min * ratio.powf(i as f64 / (samples - 1) as f64)
            }
        })
        .collect();
    let cmp = compare_jacobian(&s, &grid, FD_STEP, nodes)?;
    let report = CompareJacobianReport {
        label: s.label.clone(),
        jacobian_step: FD_STEP,
        nodes,
        jacobian: matrix_rows(&cmp.jacobian.matrix),
        eigenvalues: complex_out(&cmp.jacobian.eigenvalues),
        pairs: cmp
            .diffs
            .iter()
            .map(|&(epsilon, diff_norm)| ComparePair { epsilon, diff_norm })
            .collect(),
        slope: cmp.slope,
    };
    let body = match args.format {
        Format::Json => to_json(&report),
        Format::Csv => report.to_csv(),
        Format::Text => report.to_text(),
    };
    emit(args, body)
}
