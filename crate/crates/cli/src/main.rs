//! `gpkrylov` command-line driver.
//!
//! Exit codes: 0 tolerance reached (or all checks passed), 1 usage or input
//! error, 2 iteration limit reached, 3 breakdown.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::thread;

use clap::{Args, Parser, Subcommand, ValueEnum};

use gpkrylov::checks::{run_checks, CheckConfig};
use gpkrylov::io::convergence::{write_convergence_csv, write_merged_csv_file};
use gpkrylov::io::experiment::{build_experiment, build_from_matrices, experiment_available, Experiment};
use gpkrylov::io::{parse_matrix_market, read_matrix_market, write_svg, SparseMatrix};
use gpkrylov::synthetic::random_system;
use gpkrylov::{
    solve, Error, Method, Operator, PartitionedSystem, ReductionOptions, ResidualPolicy, SolveOptions,
    SolveReport,
};

const USAGE_ERROR: u8 = 1;
const TOL_ENV: &str = "GPKRYLOV_TOL";

#[derive(Parser, Debug)]
#[command(name = "gpkrylov", version, about = "Krylov solvers for [λI A; B μI][x; y] = [b; c]")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve one system with one method.
    Solve(SolveArgs),
    /// Run several methods on the same system and write their histories.
    Compare(CompareArgs),
    /// Run the invariant suite on seeded random systems.
    Check(CheckArgs),
    /// Print the benchmark systems and the matrix files they need.
    ListExperiments,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Gpbilq,
    Gpbicg,
    Gpqmr,
    Gpmr,
    GpmrRestarted,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Gpbilq => Method::GpBiLq,
            MethodArg::Gpbicg => Method::GpBiCg,
            MethodArg::Gpqmr => Method::GpQmr,
            MethodArg::Gpmr => Method::Gpmr,
            MethodArg::GpmrRestarted => Method::GpmrRestarted,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ResidualArg {
    Estimate,
    Explicit,
}

#[derive(Clone, Copy, Debug, ValueEnum, PartialEq, Eq)]
enum ShadowArg {
    /// `f = b`, `g = c`
    EqualBc,
    /// Read `f`, `g` from `--f`, `--g`.
    Files,
}

/// Where the system comes from.
#[derive(Args, Debug)]
struct SystemArgs {
    /// Matrix Market file for A (m×n).
    #[arg(long = "a", value_name = "PATH")]
    a: Option<PathBuf>,
    /// Matrix Market file for B (n×m); omitted means B = Aᵀ.
    #[arg(long = "b", value_name = "PATH")]
    b: Option<PathBuf>,
    /// Use the transpose of the matrix read with `--a`.
    #[arg(long)]
    transpose_a: bool,
    #[arg(long, allow_hyphen_values = true, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, allow_hyphen_values = true, default_value_t = 1.0)]
    mu: f64,
    /// Right-hand side files (plain numbers or a one-column Matrix Market
    /// array); default makes the all-ones vector the exact solution.
    #[arg(long, value_name = "PATH", requires = "rhs_c")]
    rhs_b: Option<PathBuf>,
    #[arg(long, value_name = "PATH", requires = "rhs_b")]
    rhs_c: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ShadowArg::EqualBc)]
    fg: ShadowArg,
    #[arg(long = "f", value_name = "PATH")]
    f: Option<PathBuf>,
    #[arg(long = "g", value_name = "PATH")]
    g: Option<PathBuf>,
    /// Benchmark system by name (see `list-experiments`); sets λ and μ.
    #[arg(long, conflicts_with_all = ["a", "random"])]
    experiment: Option<String>,
    /// Directory holding `<name>.mtx` files for `--experiment`.
    #[arg(long, default_value = "data")]
    data_dir: PathBuf,
    /// Seeded random system with m = n = SIZE instead of files.
    #[arg(long, value_name = "SIZE", conflicts_with = "a")]
    random: Option<usize>,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Args, Debug)]
struct SolverArgs {
    /// Absolute residual tolerance (default from $GPKRYLOV_TOL, else 1e-8).
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    maxit: usize,
    #[arg(long, value_enum, default_value_t = ResidualArg::Explicit)]
    residual: ResidualArg,
    /// Cycle length of the restarted method.
    #[arg(long, default_value_t = 9)]
    restart: usize,
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[arg(long, value_enum)]
    method: MethodArg,
    #[command(flatten)]
    system: SystemArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Convergence history CSV.
    #[arg(long, value_name = "PATH")]
    output: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    svg: Option<PathBuf>,
    /// Write the solution `[x; y]`, one value per line.
    #[arg(long, value_name = "PATH")]
    solution: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CompareArgs {
    /// Comma-separated methods.
    #[arg(long, value_enum, value_delimiter = ',', required = true)]
    methods: Vec<MethodArg>,
    #[command(flatten)]
    system: SystemArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Directory for `<method>.csv`, `merged.csv` and `convergence.svg`.
    #[arg(long, default_value = "compare_out")]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct CheckArgs {
    #[arg(long, default_value_t = 12)]
    size: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Add a system with an orthogonal shadow vector.
    #[arg(long)]
    force_breakdown: bool,
}

fn read_vector(path: &Path) -> Result<Vec<f64>, Error> {
    let text = fs::read_to_string(path)?;
    if text.trim_start().starts_with("%%MatrixMarket") {
        let m = parse_matrix_market(&text)?;
        if m.ncols() != 1 {
            return Err(Error::InvalidArgument(format!("{} is not a single column", path.display())));
        }
        let mut v = vec![0.0; m.nrows()];
        for (i, _, x) in m.triplets() {
            v[i] = x;
        }
        return Ok(v);
    }
    text.split_whitespace()
        .map(|t| {
            t.parse()
                .map_err(|_| Error::InvalidArgument(format!("bad number `{t}` in {}", path.display())))
        })
        .collect()
}

fn build_system(s: &SystemArgs) -> Result<PartitionedSystem, Error> {
    let mut sys = if let Some(name) = &s.experiment {
        let exp: Experiment = name.parse()?;
        build_experiment(exp, &s.data_dir)?
    } else if let Some(size) = s.random {
        if size == 0 {
            return Err(Error::InvalidArgument("random size must be positive".into()));
        }
        random_system(size, size, s.lambda, s.mu, s.seed)
    } else {
        let path = s
            .a
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("one of --a, --experiment, --random is required".into()))?;
        let mut a = read_matrix_market(path)?;
        if s.transpose_a {
            a = a.transpose();
        }
        let b: SparseMatrix = match &s.b {
            Some(p) => read_matrix_market(p)?,
            None => a.transpose(),
        };
        build_from_matrices(Arc::new(a), Arc::new(b), s.lambda, s.mu)?
    };
    if let (Some(pb), Some(pc)) = (&s.rhs_b, &s.rhs_c) {
        sys = sys.with_rhs(read_vector(pb)?, read_vector(pc)?)?;
    }
    if s.fg == ShadowArg::Files {
        let (pf, pg) = s
            .f
            .as_ref()
            .zip(s.g.as_ref())
            .ok_or_else(|| Error::InvalidArgument("--fg files needs both --f and --g".into()))?;
        sys = sys.with_shadows(read_vector(pf)?, read_vector(pg)?)?;
    }
    Ok(sys)
}

fn solve_options(a: &SolverArgs) -> Result<SolveOptions, Error> {
    let tol = match a.tol {
        Some(t) => t,
        None => match std::env::var(TOL_ENV) {
            Ok(v) => v
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("{TOL_ENV}={v} is not a number")))?,
            Err(_) => 1e-8,
        },
    };
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    if a.restart == 0 {
        return Err(Error::InvalidArgument("--restart must be at least 1".into()));
    }
    Ok(SolveOptions {
        tol,
        maxit: a.maxit,
        residual: match a.residual {
            ResidualArg::Estimate => ResidualPolicy::Estimate,
            ResidualArg::Explicit => ResidualPolicy::Explicit,
        },
        restart: a.restart,
        reduction: ReductionOptions::default(),
    })
}

fn summary(r: &SolveReport) {
    println!(
        "{:<15} iterations {:>6}  residual {:>11.4e}  {}",
        r.method.name(),
        r.iterations,
        r.residual,
        r.termination
    );
}

fn write_solution(r: &SolveReport, path: &Path) -> Result<(), Error> {
    let text: String = r.x.iter().chain(&r.y).map(|v| format!("{v:e}\n")).collect();
    fs::write(path, text)?;
    Ok(())
}

fn cmd_solve(a: &SolveArgs) -> Result<u8, Error> {
    let sys = build_system(&a.system)?;
    let opts = solve_options(&a.solver)?;
    let r = solve(&sys, a.method.into(), &opts)?;
    if let Some(p) = &a.output {
        write_convergence_csv(&r.record, p)?;
    }
    if let Some(p) = &a.svg {
        write_svg(std::slice::from_ref(&r.record), r.method.name(), p)?;
    }
    if let Some(p) = &a.solution {
        write_solution(&r, p)?;
    }
    summary(&r);
    Ok(r.termination.exit_code() as u8)
}

fn cmd_compare(a: &CompareArgs) -> Result<u8, Error> {
    let sys = build_system(&a.system)?;
    let opts = solve_options(&a.solver)?;
    let mut methods: Vec<Method> = a.methods.iter().map(|&m| m.into()).collect();
    methods.dedup();
    let results: Vec<Result<SolveReport, Error>> = thread::scope(|s| {
        let handles: Vec<_> = methods
            .iter()
            .map(|&m| {
                let sys = &sys;
                let opts = &opts;
                s.spawn(move || solve(sys, m, opts))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("solver thread panicked"))
            .collect()
    });
    let reports = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    fs::create_dir_all(&a.out_dir)?;
    for r in &reports {
        write_convergence_csv(&r.record, a.out_dir.join(format!("{}.csv", r.method.name())))?;
        summary(r);
    }
    let records: Vec<_> = reports.iter().map(|r| r.record.clone()).collect();
    write_merged_csv_file(&records, a.out_dir.join("merged.csv"))?;
    write_svg(&records, "residual norm", a.out_dir.join("convergence.svg"))?;
    Ok(reports
        .iter()
        .map(|r| r.termination.exit_code() as u8)
        .max()
        .unwrap_or(0))
}

fn cmd_check(a: &CheckArgs) -> Result<u8, Error> {
    let cfg = CheckConfig {
        size: a.size,
        seed: a.seed,
        force_breakdown: a.force_breakdown,
    };
    let checks = run_checks(&cfg)?;
    for c in &checks {
        println!("{c}");
    }
    let failed: Vec<_> = checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
    if failed.is_empty() {
        println!("all {} checks passed", checks.len());
        Ok(0)
    } else {
        eprintln!("failed: {}", failed.join(", "));
        Ok(4)
    }
}

fn cmd_list() -> u8 {
    for e in Experiment::ALL {
        let (l, m) = e.shifts();
        let layout = if e.is_sqd() {
            format!("A = {0}, B = {0}ᵀ", e.files()[0])
        } else {
            format!("A = {}ᵀ, B = {}", e.files()[0], e.files()[1])
        };
        let files: Vec<String> = e.files().iter().map(|f| format!("{f}.mtx")).collect();
        println!("{:<11} {layout:<32} lambda {l:>4}  mu {m:>6}  files: {}", e.name(), files.join(" "));
    }
    let present: Vec<_> = Experiment::ALL
        .into_iter()
        .filter(|&e| experiment_available(e, "data"))
        .map(|e| e.name())
        .collect();
    if !present.is_empty() {
        println!("available in ./data: {}", present.join(", "));
    }
    println!("download the files from the SuiteSparse Matrix Collection (Matrix Market format)");
    0
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { USAGE_ERROR } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let res = match &cli.cmd {
        Command::Solve(a) => cmd_solve(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Check(a) => cmd_check(a),
        Command::ListExperiments => Ok(cmd_list()),
    };
    match res {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(USAGE_ERROR)
        }
    }
}
