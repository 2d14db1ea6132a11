//! Command-line front end.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use num::rational::BigRational;

use crate::boundary::{trace_boundary, trace_on_grid};
use crate::error::{Error, Result};
use crate::expr::Real;
use crate::gl_validator::{
    empirical_verdict, resolved_run, simulate, CrossCheck, SimulationConfig,
};
use crate::output;
use crate::quasipoly::QuasiPolynomial;
use crate::rational_oracle::{
    oracle_from_reduction, reduce_terms, DEFAULT_TAU_ARG, MAX_ROOT_DEGREE,
};
use crate::regions::{
    classify_grid, connected_components_resolved, region_report, scan, spot_check,
};
use crate::rhp_counter::{verdict, CounterConfig, VerdictKind, DEFAULT_TAU_MARGIN};
use crate::slice::SliceProblem;
use crate::specfile::SystemSpec;

pub const EXIT_STABLE: i32 = 0;
pub const EXIT_UNSTABLE: i32 = 1;
pub const EXIT_MARGINAL: i32 = 2;
pub const EXIT_ERROR: i32 = 3;

/// Random interior cells re-checked per region after a map.
const SPOT_SAMPLES: usize = 20;

#[derive(Debug, Parser)]
#[command(
    name = "fracstab",
    version,
    about = "Stability of fractional-order systems with real-valued orders"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Right-half-plane root count at a single point.
    Analyze(PointArgs),
    /// Region decomposition of a two-parameter slice.
    Map(GridArgs),
    /// Verdicts along a one-parameter slice.
    Scan(GridArgs),
    /// Stability boundary curves of a two-parameter slice.
    Boundary(GridArgs),
    /// Exact reduction and polynomial roots for rational orders.
    Oracle(PointArgs),
    /// Grünwald–Letnikov trajectory and empirical decay test.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// System spec (TOML).
    pub spec: PathBuf,
    /// Output directory for CSV and SVG files.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Smallest normalized |Δ| on the imaginary axis before a point counts as marginal.
    #[arg(long, default_value_t = DEFAULT_TAU_MARGIN)]
    pub tol_margin: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct PointArgs {
    #[command(flatten)]
    pub common: Common,
    /// Slice coordinates, comma separated; decimals and fractions are read exactly.
    #[arg(long)]
    pub at: Option<String>,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[command(flatten)]
    pub common: Common,
    /// Grid nodes per axis.
    #[arg(long, default_value_t = 100)]
    pub res: usize,
    /// Also render an SVG.
    #[arg(long)]
    pub svg: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub point: PointArgs,
    #[arg(long, default_value_t = 1e-3)]
    pub step: f64,
    #[arg(long, default_value_t = 50.0)]
    pub horizon: f64,
}

/// Runs a parsed command, writing the human-readable summary to `out`.
/// Returns the process exit code.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<i32> {
    match &cli.command {
        Command::Analyze(args) => analyze(args, out),
        Command::Map(args) => map(args, out),
        Command::Scan(args) => scan_cmd(args, out),
        Command::Boundary(args) => boundary(args, out),
        Command::Oracle(args) => oracle(args, out),
        Command::Simulate(args) => simulate_cmd(args, out),
    }
}

fn exit_code(kind: VerdictKind) -> i32 {
    match kind {
        VerdictKind::Stable => EXIT_STABLE,
        VerdictKind::Unstable(_) => EXIT_UNSTABLE,
        VerdictKind::Marginal => EXIT_MARGINAL,
    }
}

fn config(common: &Common) -> Result<CounterConfig> {
    if !(common.tol_margin > 0.0 && common.tol_margin.is_finite()) {
        return Err(Error::InvalidSlice(format!(
            "--tol-margin must be positive, got {}",
            common.tol_margin
        )));
    }
    Ok(CounterConfig::default().with_tau_margin(common.tol_margin))
}

fn parse_point(at: Option<&str>, spec: &SystemSpec) -> Result<Vec<Real>> {
    let params = spec.params();
    let point = match at {
        None => Vec::new(),
        Some(text) => text
            .split(',')
            .map(Real::parse)
            .collect::<Result<Vec<_>>>()?,
    };
    if point.len() != params.len() {
        if point.is_empty() {
            return Err(Error::InvalidSlice(format!(
                "spec has free parameters {}; pass --at",
                params.join(", ")
            )));
        }
        return Err(Error::PointArity {
            expected: params.len(),
            got: point.len(),
        });
    }
    Ok(point)
}

fn bind(spec: &SystemSpec, point: &[f64]) -> Result<QuasiPolynomial> {
    if let Some(system) = spec.system() {
        system.orders_at(point)?;
    }
    spec.symbolic()?.bind(point)
}

fn values(point: &[Real]) -> Vec<f64> {
    point.iter().map(Real::value).collect()
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, contents)?;
    Ok(path)
}

fn analyze(args: &PointArgs, out: &mut dyn Write) -> Result<i32> {
    let spec = SystemSpec::from_path(&args.common.spec)?;
    let point = parse_point(args.at.as_deref(), &spec)?;
    let qp = bind(&spec, &values(&point))?;
    let v = verdict(&qp, &config(&args.common)?)?;
    writeln!(out, "{}", v.kind)?;
    match v.kind.rhp_count() {
        Some(k) => writeln!(out, "rhp roots: {k}")?,
        None => writeln!(out, "rhp roots: undetermined")?,
    }
    writeln!(out, "margin: {:.6e}", v.margin)?;
    Ok(exit_code(v.kind))
}

fn problem(common: &Common, dims: usize, suggestion: &str) -> Result<(SystemSpec, SliceProblem)> {
    let spec = SystemSpec::from_path(&common.spec)?;
    let problem = SliceProblem::from_spec(&spec)?.with_config(config(common)?);
    if problem.dims() != dims {
        return Err(Error::InvalidSlice(format!(
            "slice has {} parameter(s); {suggestion}",
            problem.dims()
        )));
    }
    Ok((spec, problem))
}

fn map(args: &GridArgs, out: &mut dyn Write) -> Result<i32> {
    let (spec, problem) = problem(&args.common, 2, "use `scan` for one-parameter slices")?;
    let names = spec.params();
    let grid = classify_grid(&problem, args.res)?;
    let regions = connected_components_resolved(grid, &problem);
    let report = region_report(&regions, &problem)?;
    let lines = trace_on_grid(&problem, &regions.grid);
    let text = report.render(&names);
    write!(out, "{text}")?;
    let dir = &args.common.out;
    write_file(dir, "grid.csv", &output::map_csv(&regions, &names))?;
    write_file(dir, "boundary.csv", &output::boundary_csv(&lines, &names))?;
    write_file(dir, "regions.txt", &text)?;
    if args.svg {
        write_file(dir, "map.svg", &output::map_svg(&regions, &lines, &names))?;
    }
    let mismatches = spot_check(&regions, &problem, SPOT_SAMPLES, args.common.seed);
    for (id, cell) in &mismatches {
        writeln!(
            out,
            "spot check: region {id} disagrees at {:?} under a refined counter",
            regions.grid.point(*cell)
        )?;
    }
    Ok(EXIT_STABLE)
}

fn scan_cmd(args: &GridArgs, out: &mut dyn Write) -> Result<i32> {
    let (spec, problem) = problem(&args.common, 1, "use `map` for two-parameter slices")?;
    let name = &spec.params()[0];
    let result = scan(&problem, args.res)?;
    write_file(
        &args.common.out,
        "scan.csv",
        &output::scan_csv(&result, name),
    )?;
    let labels = result.grid.labels();
    let mut start = 0;
    for i in 1..=labels.len() {
        if i == labels.len() || labels[i] != labels[start] {
            let (a, b) = (result.grid.point(start)[0], result.grid.point(i - 1)[0]);
            writeln!(out, "{name} in [{a:.6}, {b:.6}]: {}", labels[start])?;
            start = i;
        }
    }
    for c in &result.crossings {
        writeln!(
            out,
            "crossing at {name} = {:.12} (r = {:.6e})",
            c.point[0], c.r
        )?;
    }
    Ok(EXIT_STABLE)
}

fn boundary(args: &GridArgs, out: &mut dyn Write) -> Result<i32> {
    let (spec, problem) = problem(&args.common, 2, "use `scan` for one-parameter slices")?;
    let lines = trace_boundary(&problem, args.res)?;
    let points: usize = lines.iter().map(|l| l.points.len()).sum();
    let unrefined = lines
        .iter()
        .flat_map(|l| &l.points)
        .filter(|p| !p.refined)
        .count();
    write_file(
        &args.common.out,
        "boundary.csv",
        &output::boundary_csv(&lines, &spec.params()),
    )?;
    writeln!(
        out,
        "{} polyline(s), {points} point(s), {unrefined} unrefined",
        lines.len()
    )?;
    Ok(EXIT_STABLE)
}

fn oracle(args: &PointArgs, out: &mut dyn Write) -> Result<i32> {
    let spec = SystemSpec::from_path(&args.common.spec)?;
    let point = parse_point(args.at.as_deref(), &spec)?;
    let exact: Vec<BigRational> = point
        .iter()
        .map(|r| {
            r.as_exact()
                .cloned()
                .ok_or_else(|| Error::NotRational(r.value().to_string()))
        })
        .collect::<Result<_>>()?;
    if let Some(system) = spec.system() {
        system.at_exact(&exact)?;
    }
    let terms = spec.symbolic()?.bind_rational(&exact)?;
    let reduction = match reduce_terms(&terms) {
        Err(e @ Error::DegreeTooLarge { .. }) => {
            writeln!(
                out,
                "orders with large denominators are better handled by `analyze`"
            )?;
            return Err(e);
        }
        r => r?,
    };
    writeln!(out, "m: {}", reduction.m)?;
    writeln!(out, "degree: {}", reduction.polynomial.degree())?;
    if reduction.polynomial.degree() > MAX_ROOT_DEGREE {
        writeln!(out, "root finding skipped: degree above {MAX_ROOT_DEGREE}")?;
        return Err(Error::DegreeTooLarge {
            degree: reduction.polynomial.degree(),
            cap: MAX_ROOT_DEGREE,
        });
    }
    let report = oracle_from_reduction(reduction, DEFAULT_TAU_ARG)?;
    write_file(
        &args.common.out,
        "roots.csv",
        &output::roots_csv(&report.roots),
    )?;
    writeln!(out, "roots: {}", report.roots.len())?;
    writeln!(out, "{}", report.verdict.kind)?;
    Ok(exit_code(report.verdict.kind))
}

fn simulate_cmd(args: &SimulateArgs, out: &mut dyn Write) -> Result<i32> {
    let common = &args.point.common;
    let spec = SystemSpec::from_path(&common.spec)?;
    let system = spec
        .system()
        .ok_or_else(|| Error::Simulation("needs a spec with `A` and `orders`".into()))?;
    let point = parse_point(args.point.at.as_deref(), &spec)?;
    let system = system.at(&values(&point))?;
    let cfg = SimulationConfig {
        h: args.step,
        horizon: args.horizon,
        ..SimulationConfig::default()
    };
    let trajectory = simulate(&system, &cfg)?;
    write_file(&common.out, "trajectory.csv", &trajectory.to_csv())?;
    let check = CrossCheck {
        coarse: empirical_verdict(&trajectory)?,
        resolved: resolved_run(&system, &cfg)?,
    };
    if trajectory.escaped {
        writeln!(out, "escaped after {} steps", trajectory.steps())?;
    }
    if let Some(fine) = check.resolved {
        writeln!(
            out,
            "step {} run: {}; fine-step run: {fine}",
            cfg.h, check.coarse
        )?;
    }
    writeln!(out, "{}", check.verdict())?;
    Ok(EXIT_STABLE)
}
