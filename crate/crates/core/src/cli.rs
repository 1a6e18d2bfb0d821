//! The `rugose` command-line front end.
//!
//! Exit codes: 0 on success, 1 on solver or output failure (including a failed
//! validation case), 2 on configuration or usage errors. Every failure is
//! reported as a single JSON object on standard error.

use crate::cell::{solve_cell, CellProblem};
use crate::config::{parse_config_in, ConfigError, RunConfig};
use crate::error::Error;
use crate::flux::{build_flux_table, plateau_mobility, ExactFlux, FluxTable, TableGrid};
use crate::gap;
use crate::macroscale::{estimate_rho_max, filtration_velocity, solve_macro, MacroSolution};
use crate::validation::{run_battery, BatteryInputs, OracleReport};
use crate::vec2::Vec2;
use clap::{Args, Parser, Subcommand};
use serde_json::json;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Built-in configuration used when `--config` is not given.
pub const DEFAULT_CONFIG: &str = include_str!("../../../configs/default.toml");

#[derive(Debug, Parser)]
#[command(name = "rugose", version, about = "Homogenized Reynolds flow of Carreau fluids through rough gaps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Configuration file (TOML); the built-in default is used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set numerics.cell_n=32`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Output directory, overriding `[output] dir`.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Also write a gnuplot script for the CSV outputs.
    #[arg(long, global = true)]
    gnuplot: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Tabulate shear rate and effective viscosity against shear stress.
    PsiTable {
        #[arg(long, default_value_t = 100.0)]
        tau_max: f64,
        /// Number of rows, from tau = 0 to tau_max.
        #[arg(long, default_value_t = 50)]
        n: usize,
        /// CSV destination; standard output when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Velocity profile across a flat gap.
    Profile {
        /// Gap height; defaults to the mid-range of the configured profile.
        #[arg(long)]
        h: Option<f64>,
        #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
        d1: f64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        d2: f64,
        /// Number of heights sampled, walls included.
        #[arg(long, default_value_t = 101)]
        n: usize,
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Solve one cell problem and report the local flux.
    CellSolve {
        #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
        d1: f64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        d2: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Precompute the homogenized flux table.
    FluxTable {
        /// Worker threads; defaults to the available parallelism.
        #[arg(long)]
        jobs: Option<usize>,
        /// Table file; defaults to `<out>/flux_table.json`.
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Solve the macroscopic pressure problem.
    MacroSolve {
        /// Flux table file; defaults to `<out>/flux_table.json`.
        #[arg(long, conflicts_with = "exact")]
        table: Option<PathBuf>,
        /// Evaluate the flux map by a cell solve per face instead of a table.
        #[arg(long)]
        exact: bool,
        /// Worker threads for table rebuilds.
        #[arg(long)]
        jobs: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Run the oracle battery.
    Validate {
        /// Print the reports as JSON instead of a table.
        #[arg(long)]
        json: bool,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Solver(#[from] Error),
    #[error("{0}")]
    Io(String),
    #[error("{0} of {1} validation cases failed")]
    Validation(usize, usize),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Solver(_) | CliError::Io(_) | CliError::Validation(..) => 1,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Config(_) => "config",
            CliError::Solver(_) => "solver",
            CliError::Io(_) => "io",
            CliError::Validation(..) => "validation",
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Runs the command line `args` (program name first) and returns the exit code.
pub fn run_command<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_command_with(args, &mut stdout.lock(), &mut stderr.lock())
}

/// As [`run_command`], writing to the given streams.
pub fn run_command_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return 0;
            }
            return report(err, &CliError::Usage(e.to_string().trim_end().to_string()));
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(()) => 0,
        Err(e) => report(err, &e),
    }
}

fn report(err: &mut dyn Write, e: &CliError) -> i32 {
    let code = e.exit_code();
    let doc = json!({ "error": { "kind": e.kind(), "message": e.to_string(), "exit_code": code } });
    let _ = writeln!(err, "{doc}");
    code
}

fn load(common: &Common, err: &mut dyn Write) -> CliResult<RunConfig> {
    let (text, base) = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| ConfigError::Parse(format!("cannot read {}: {e}", path.display())))?;
            let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
            (text, base)
        }
        None => (DEFAULT_CONFIG.to_string(), PathBuf::from(".")),
    };
    let mut cfg = parse_config_in(&text, &base, &common.set)?;
    for d in &cfg.defaults_applied {
        log(err, &format!("default {d}"));
    }
    for s in &common.set {
        log(err, &format!("override {s}"));
    }
    if let Some(dir) = &common.out_dir {
        log(err, &format!("override output.dir = {}", dir.display()));
        cfg.output_dir = dir.clone();
    }
    Ok(cfg)
}

fn log(err: &mut dyn Write, msg: &str) {
    let _ = writeln!(err, "rugose: {msg}");
}

/// 17 significant digits; negative zero prints as zero.
fn num(v: f64) -> String {
    let v = if v == 0.0 { 0.0 } else { v };
    format!("{v:.16e}")
}

fn write_file(path: &Path, content: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    }
    std::fs::write(path, content).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

fn emit(out: &mut dyn Write, text: &str) -> CliResult<()> {
    out.write_all(text.as_bytes()).map_err(|e| CliError::Io(format!("cannot write output: {e}")))
}

/// Row-major grid CSV: one line per x2 index, x1 varying along the line.
fn grid_csv(title: &str, nx: usize, ny: usize, values: impl Fn(usize, usize) -> f64) -> String {
    let mut s = format!("# {title}\n# grid n1={nx} n2={ny}; rows: x2 index, columns: x1 index\n");
    for j in 0..ny {
        let row: Vec<String> = (0..nx).map(|i| num(values(i, j))).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

fn params_header(cfg: &RunConfig) -> String {
    let p = &cfg.params;
    format!("eta0={} eta_inf={} lambda={} r={}", p.eta0(), p.eta_inf(), p.lambda(), p.r())
}

fn gnuplot_lines(csv: &Path, using: &str, xlabel: &str, ylabel: &str) -> String {
    format!(
        "set datafile separator ','\nset xlabel '{xlabel}'\nset ylabel '{ylabel}'\nplot {}\npause -1\n",
        using
            .split(';')
            .map(|u| format!("'{}' using {u} with lines", csv.display()))
            .collect::<Vec<_>>()
            .join(", ")
    )
}

fn gnuplot_image(csv: &Path, title: &str) -> String {
    format!(
        "set datafile separator ','\nset title '{title}'\nset view map\nplot '{}' matrix with image\npause -1\n",
        csv.display()
    )
}

fn dispatch(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<()> {
    match command {
        Command::PsiTable { tau_max, n, output, common } => {
            let cfg = load(&common, err)?;
            if !(tau_max >= 0.0 && tau_max.is_finite()) || n == 0 {
                return Err(CliError::Usage("--tau-max must be finite and >= 0, --n must be >= 1".into()));
            }
            let mut csv = format!("# rugose psi-table {}\n# tau,gamma,psi\n", params_header(&cfg));
            for k in 0..n {
                let tau = if n == 1 { 0.0 } else { tau_max * k as f64 / (n - 1) as f64 };
                let gamma = cfg.params.shear_from_stress(tau)?;
                let psi = cfg.params.psi(tau)?;
                let _ = writeln!(csv, "{},{},{}", num(tau), num(gamma), num(psi));
            }
            let target = output.or_else(|| common.gnuplot.then(|| cfg.output_dir.join("psi_table.csv")));
            finish_curve(out, &cfg, target, &csv, common.gnuplot, "psi_table.gp", "1:3", "shear stress", "psi")
        }
        Command::Profile { h, d1, d2, n, output, common } => {
            let cfg = load(&common, err)?;
            let (lo, hi) = cfg.profile.bounds();
            let h = h.unwrap_or(0.5 * (lo + hi));
            if n < 2 {
                return Err(CliError::Usage("--n must be >= 2".into()));
            }
            let drive = Vec2::new(d1, d2);
            let k = gap::flux_kernel(&cfg.params, h, drive.norm())?;
            let flux = (-2.0 * k) * drive;
            let mut csv = format!(
                "# rugose profile {} h={} drive=({},{})\n# gap flux {},{}\n# z3,w1,w2\n",
                params_header(&cfg),
                num(h),
                num(d1),
                num(d2),
                num(flux.x),
                num(flux.y)
            );
            for i in 0..n {
                let z = if i + 1 == n { h } else { h * i as f64 / (n - 1) as f64 };
                let w = gap::velocity_profile(&cfg.params, h, drive, z)?;
                let _ = writeln!(csv, "{},{},{}", num(z), num(w.x), num(w.y));
            }
            let target = output.or_else(|| common.gnuplot.then(|| cfg.output_dir.join("profile.csv")));
            finish_curve(out, &cfg, target, &csv, common.gnuplot, "profile.gp", "2:1;3:1", "velocity", "z3")
        }
        Command::CellSolve { d1, d2, common } => {
            let cfg = load(&common, err)?;
            let delta = Vec2::new(d1, d2);
            let problem = CellProblem { params: cfg.params, profile: &cfg.profile, delta, numerics: cfg.cell };
            let sol = solve_cell(&problem)?;
            let n = sol.n;
            let path = cfg.output_dir.join("cell_corrector.csv");
            write_file(&path, &grid_csv(&format!("rugose cell corrector N={n}"), n, n, |i, j| sol.q[j * n + i]))?;
            if common.gnuplot {
                write_file(&cfg.output_dir.join("cell_corrector.gp"), &gnuplot_image(Path::new("cell_corrector.csv"), "corrector"))?;
            }
            let doc = json!({
                "delta": [delta.x, delta.y],
                "flux": [sol.flux.x, sol.flux.y],
                "residual": sol.residual,
                "iterations": sol.iterations,
                "n": n,
                "corrector": path.display().to_string(),
            });
            emit(out, &format!("{doc}\n"))
        }
        Command::FluxTable { jobs, output, common } => {
            let cfg = load(&common, err)?;
            let path = output.unwrap_or_else(|| cfg.output_dir.join("flux_table.json"));
            let rho_max = match cfg.table.rho_max {
                Some(r) => r,
                None => {
                    let r = estimate_range(&cfg)?;
                    log(err, &format!("estimated table range rho_max = {r:?}"));
                    r
                }
            };
            let table = build_table(&cfg, rho_max, jobs)?;
            write_file(&path, &table.to_json())?;
            let max_res = table.nodes().iter().map(|n| n.residual).fold(0.0, f64::max);
            let doc = json!({
                "table": path.display().to_string(),
                "nodes": table.nodes().len() + 1,
                "rho_max": rho_max,
                "max_residual": max_res,
                "fingerprint": table.meta.fingerprint,
            });
            emit(out, &format!("{doc}\n"))
        }
        Command::MacroSolve { table, exact, jobs, common } => {
            let cfg = load(&common, err)?;
            let (sol, kind) = if exact {
                let map = ExactFlux { params: cfg.params, profile: cfg.profile.clone(), numerics: cfg.cell };
                (solve_macro(&cfg.domain, &map, &cfg.macro_numerics)?, "exact")
            } else {
                let path = table.unwrap_or_else(|| cfg.output_dir.join("flux_table.json"));
                (solve_with_table(&cfg, &path, jobs, err)?, "table")
            };
            write_macro_outputs(out, &cfg, &sol, kind, common.gnuplot)
        }
        Command::Validate { json: as_json, common } => {
            let cfg = load(&common, err)?;
            let inputs = BatteryInputs { params: cfg.params, profile: cfg.profile.clone(), cell: cfg.cell };
            let reports = run_battery(&inputs);
            let doc = serde_json::to_string_pretty(&reports).expect("serializable reports");
            write_file(&cfg.output_dir.join("validation.json"), &format!("{doc}\n"))?;
            if as_json {
                emit(out, &format!("{doc}\n"))?;
            } else {
                emit(out, &validation_table(&reports))?;
            }
            let failed = reports.iter().filter(|r| !r.pass).count();
            if failed > 0 {
                return Err(CliError::Validation(failed, reports.len()));
            }
            Ok(())
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn finish_curve(
    out: &mut dyn Write,
    cfg: &RunConfig,
    target: Option<PathBuf>,
    csv: &str,
    gnuplot: bool,
    script: &str,
    using: &str,
    xlabel: &str,
    ylabel: &str,
) -> CliResult<()> {
    match target {
        None => emit(out, csv),
        Some(path) => {
            write_file(&path, csv)?;
            if gnuplot {
                let dir = path.parent().map(Path::to_path_buf).unwrap_or_else(|| cfg.output_dir.clone());
                let name = path.file_name().map(PathBuf::from).unwrap_or_default();
                write_file(&dir.join(script), &gnuplot_lines(&name, using, xlabel, ylabel))?;
            }
            emit(out, &format!("{}\n", json!({ "csv": path.display().to_string() })))
        }
    }
}

fn estimate_range(cfg: &RunConfig) -> CliResult<f64> {
    let exact = ExactFlux { params: cfg.params, profile: cfg.profile.clone(), numerics: cfg.cell };
    Ok(estimate_rho_max(&cfg.domain, plateau_mobility(&exact)?)?)
}

fn build_table(cfg: &RunConfig, rho_max: f64, jobs: Option<usize>) -> CliResult<FluxTable> {
    let jobs = jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if jobs == 0 {
        return Err(CliError::Usage("--jobs must be >= 1".into()));
    }
    let grid = TableGrid { m: cfg.table.m, n: cfg.table.n, rho_max, rho_min_ratio: cfg.table.rho_min_ratio };
    Ok(build_flux_table(&cfg.params, &cfg.profile, grid, &cfg.cell, jobs)?)
}

fn solve_with_table(cfg: &RunConfig, path: &Path, jobs: Option<usize>, err: &mut dyn Write) -> CliResult<MacroSolution> {
    let text = std::fs::read_to_string(path).map_err(|_| {
        CliError::Usage(format!(
            "no flux table at {}; run `rugose flux-table` first, pass --table FILE, or use --exact",
            path.display()
        ))
    })?;
    let mut table = FluxTable::from_json(&text)?;
    if !table.matches(&cfg.params, &cfg.profile) {
        return Err(CliError::Usage(format!(
            "flux table {} was built for different constants or profile; rerun `rugose flux-table`",
            path.display()
        )));
    }
    for _ in 0..4 {
        match solve_macro(&cfg.domain, &table, &cfg.macro_numerics) {
            Err(Error::OutOfRange { magnitude, rho_max }) => {
                let wider = (2.0 * rho_max).max(1.5 * magnitude);
                log(err, &format!("drive {magnitude:?} exceeds table range {rho_max:?}; rebuilding with rho_max = {wider:?}"));
                let meta = &table.meta;
                let grid = TableGrid { rho_max: wider, ..meta.grid };
                let jobs = jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
                table = build_flux_table(&meta.params, &meta.profile, grid, &meta.numerics, jobs.max(1))?;
                write_file(path, &table.to_json())?;
            }
            other => return Ok(other?),
        }
    }
    Err(CliError::Solver(Error::OutOfRange { magnitude: f64::NAN, rho_max: table.rho_max() }))
}

fn write_macro_outputs(out: &mut dyn Write, cfg: &RunConfig, sol: &MacroSolution, kind: &str, gnuplot: bool) -> CliResult<()> {
    let (n1, n2) = (sol.n1, sol.n2);
    let dir = &cfg.output_dir;
    let v = filtration_velocity(sol);
    write_file(&dir.join("pressure.csv"), &grid_csv("rugose pressure", n1, n2, |i, j| sol.p[j * n1 + i]))?;
    write_file(&dir.join("velocity_x1.csv"), &grid_csv("rugose filtration velocity V1 (cell centres)", n1, n2, |i, j| v[j * n1 + i].x))?;
    write_file(&dir.join("velocity_x2.csv"), &grid_csv("rugose filtration velocity V2 (cell centres)", n1, n2, |i, j| v[j * n1 + i].y))?;
    if gnuplot {
        write_file(&dir.join("pressure.gp"), &gnuplot_image(Path::new("pressure.csv"), "pressure"))?;
    }
    let cells = (n1 * n2) as f64;
    let mean_flux = [v.iter().map(|w| w.x).sum::<f64>() / cells, v.iter().map(|w| w.y).sum::<f64>() / cells];
    let doc = json!({
        "flux_map": kind,
        "iterations": sol.iterations,
        "residual": sol.residual,
        "mean_flux": mean_flux,
        "extrema": {
            "p": extrema(sol.p.iter().copied()),
            "v1": extrema(v.iter().map(|w| w.x)),
            "v2": extrema(v.iter().map(|w| w.y)),
        },
        "files": ["pressure.csv", "velocity_x1.csv", "velocity_x2.csv"],
    });
    let text = format!("{}\n", serde_json::to_string_pretty(&doc).expect("serializable summary"));
    write_file(&dir.join("macro_summary.json"), &text)?;
    emit(out, &text)
}

/// `[min, max]` of a sequence.
fn extrema(values: impl Iterator<Item = f64>) -> [f64; 2] {
    values.fold([f64::INFINITY, f64::NEG_INFINITY], |[lo, hi], v| [lo.min(v), hi.max(v)])
}

fn validation_table(reports: &[OracleReport]) -> String {
    let mut s = format!("{:<6} {:<38} {:>12} {:>12}\n", "result", "case", "error", "tolerance");
    for r in reports {
        let _ = writeln!(
            s,
            "{:<6} {:<38} {:>12.3e} {:>12.3e}{}",
            if r.pass { "PASS" } else { "FAIL" },
            r.case,
            r.rel_error,
            r.tolerance,
            if r.detail.is_empty() { String::new() } else { format!("  ({})", r.detail) }
        );
    }
    let passed = reports.iter().filter(|r| r.pass).count();
    let _ = writeln!(s, "{passed}/{} cases passed", reports.len());
    s
}
