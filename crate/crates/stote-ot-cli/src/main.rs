//! `stote-ot`: transport costs, stote inversion, sweeps and verification suites.

mod io;
mod sweep;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use stote_ot::conic::SolveStatus;
use stote_ot::linalg::{partial_trace, BipartiteDims, HermitianMatrix, Subsystem};
use stote_ot::stote::{invert_stote, invert_stote_sdp, DensityMatrix, InversionMethod};
use stote_ot::transport::{transport_cost, unitary_invariant_k, CostMatrix, SdpOptions};

use io::{emit, parse_state, status_name, MatrixFile, Role};

const EXIT_VERIFY_FAILED: u8 = 1;
const EXIT_BAD_INPUT: u8 = 2;
const EXIT_MAX_ITER: u8 = 3;

#[derive(Parser)]
#[command(name = "stote-ot", version, about = "Quantum optimal transport through states over time")]
struct Cli {
    /// Solver tolerance on residuals and duality gap.
    #[arg(long, global = true, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, global = true, default_value_t = 200_000)]
    max_iter: usize,
    /// Output file (stdout when omitted).
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for sweeps (0 = logical cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimal transport cost between two states.
    Cost(CostArgs),
    /// Recover (rho, J) from a state over time and check validity.
    Invert(InvertArgs),
    /// Grid sweeps emitting CSV.
    Sweep {
        #[command(subcommand)]
        kind: SweepKind,
    },
    /// Run an invariant suite; exit 1 if any property fails.
    Verify {
        #[arg(long, value_enum, default_value = "core")]
        suite: verify::Suite,
    },
}

#[derive(Args)]
struct CostArgs {
    /// Cost matrix MatrixFile on H_A (x) H_B.
    #[arg(long, conflicts_with = "ui", required_unless_present = "ui")]
    k: Option<PathBuf>,
    /// Use the unitary-invariant cost d - S.
    #[arg(long)]
    ui: bool,
    /// Divide the unitary-invariant cost by d.
    #[arg(long)]
    normalized: bool,
    /// Source state: MatrixFile path, `diag=p1,..`, `pure-alpha=a` or `depolarized=p`.
    #[arg(long)]
    rho: String,
    /// Target state, same syntax as --rho.
    #[arg(long)]
    sigma: String,
    /// Dimension for the built-in constructors.
    #[arg(long, default_value_t = 2)]
    dim: usize,
}

#[derive(Args)]
struct InvertArgs {
    /// MatrixFile holding the state over time.
    omega: PathBuf,
    /// Subsystem dimensions dA,dB (overrides the file).
    #[arg(long, value_delimiter = ',')]
    dims: Option<Vec<usize>>,
}

#[derive(Subcommand)]
enum SweepKind {
    /// Forward and backward cost against depolarized copies of rho.
    SymmetryGap(GridArgs),
    /// Optimal versus unitary-restricted cost over the pure-state overlap.
    UnitaryVsOptimal(GridArgs),
    /// Embedded commuting pair over growing dimension against the limit.
    EmbedLimit {
        #[arg(long, value_delimiter = ',', default_value = "0.7,0.3")]
        p: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0.2,0.8")]
        q: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "2,4,8,16,32")]
        d_list: Vec<usize>,
    },
}

#[derive(Args)]
struct GridArgs {
    #[arg(long, default_value_t = 2)]
    d: usize,
    #[arg(long, default_value_t = 11)]
    grid: usize,
    /// Weight of |0><0| in rho (1 = pure).
    #[arg(long, default_value_t = 1.0)]
    p_rho: f64,
    #[arg(long)]
    normalized: bool,
}

#[derive(Serialize)]
struct CostRecord {
    value: f64,
    dual_value: f64,
    gap: f64,
    primal_residual: f64,
    dual_residual: f64,
    iterations: usize,
    status: &'static str,
    #[serde(rename = "optimal_J")]
    optimal_j: MatrixFile,
}

#[derive(Serialize)]
struct ViolationReport {
    choi_min_eigenvalue: f64,
    trace_preservation_error: f64,
    method: &'static str,
}

#[derive(Serialize)]
struct InvertRecord {
    rho: MatrixFile,
    #[serde(rename = "J")]
    j: MatrixFile,
    is_valid_stote: bool,
    slack_x: f64,
    violation_report: ViolationReport,
}

fn json(value: &impl Serialize) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn cmd_cost(cli: &Cli, args: &CostArgs, opts: SdpOptions) -> Result<ExitCode> {
    let rho = parse_state(&args.rho, args.dim, Role::Source).context("--rho")?;
    let sigma = parse_state(&args.sigma, args.dim, Role::Target).context("--sigma")?;
    let k = match &args.k {
        Some(path) => {
            let file = MatrixFile::read(path)?;
            let dims = file.bipartite_dims(None)?;
            CostMatrix::new(dims, file.to_hermitian()?)?
        }
        None => unitary_invariant_k(rho.dim(), args.normalized),
    };
    let res = transport_cost(&k, &rho, &sigma, opts)?;
    let record = CostRecord {
        value: res.value,
        dual_value: res.dual_value,
        gap: res.gap,
        primal_residual: res.primal_residual,
        dual_residual: res.dual_residual,
        iterations: res.iterations,
        status: status_name(res.status),
        optimal_j: MatrixFile::from_matrix(res.optimal_j.matrix(), Some(res.optimal_j.dims())),
    };
    emit(cli.output.as_deref(), &json(&record)?)?;
    Ok(if res.status == SolveStatus::Solved {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_MAX_ITER)
    })
}

fn cmd_invert(cli: &Cli, args: &InvertArgs, opts: SdpOptions) -> Result<ExitCode> {
    let file = MatrixFile::read(&args.omega)?;
    let dims: BipartiteDims = file.bipartite_dims(args.dims.as_deref())?;
    let omega = file.to_hermitian()?;
    let marginal = DensityMatrix::new(HermitianMatrix::from_hermitian_part(&partial_trace(&omega, dims, Subsystem::B)?));
    let inv = match marginal {
        Ok(rho) if !rho.is_faithful() => invert_stote_sdp(&omega, dims, opts.tol, opts.max_iter)?,
        _ => invert_stote(&omega, dims)?,
    };
    let record = InvertRecord {
        rho: MatrixFile::from_matrix(inv.rho.matrix(), None),
        j: MatrixFile::from_matrix(&inv.j, Some(dims)),
        is_valid_stote: inv.is_valid(),
        slack_x: inv.slack.unwrap_or(inv.report.choi_min_eigenvalue),
        violation_report: ViolationReport {
            choi_min_eigenvalue: inv.report.choi_min_eigenvalue,
            trace_preservation_error: inv.report.trace_preservation_error,
            method: match inv.method {
                InversionMethod::Formula => "formula",
                InversionMethod::Sdp => "sdp",
            },
        },
    };
    emit(cli.output.as_deref(), &json(&record)?)?;
    Ok(match inv.solver_status {
        Some(SolveStatus::MaxIter) => ExitCode::from(EXIT_MAX_ITER),
        _ => ExitCode::SUCCESS,
    })
}

fn cmd_sweep(cli: &Cli, kind: &SweepKind, opts: SdpOptions) -> Result<ExitCode> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build()?;
    let out = pool.install(|| match kind {
        SweepKind::SymmetryGap(g) => sweep::symmetry_gap(g.d, g.grid, g.p_rho, g.normalized, opts),
        SweepKind::UnitaryVsOptimal(g) => sweep::unitary_vs_optimal(g.d, g.grid, g.p_rho, g.normalized, cli.seed, opts),
        SweepKind::EmbedLimit { p, q, d_list } => sweep::embed_limit(p, q, d_list, opts),
    })?;
    emit(cli.output.as_deref(), &out.csv)?;
    Ok(if out.hit_max_iter {
        ExitCode::from(EXIT_MAX_ITER)
    } else {
        ExitCode::SUCCESS
    })
}

fn cmd_verify(cli: &Cli, suite: verify::Suite, opts: SdpOptions) -> Result<ExitCode> {
    let report = verify::run(suite, cli.seed, opts);
    eprint!("{}", report.summary());
    emit(cli.output.as_deref(), &json(&report)?)?;
    Ok(if report.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_VERIFY_FAILED)
    })
}

fn run(cli: &Cli) -> Result<ExitCode> {
    if cli.tol.is_nan() || cli.tol <= 0.0 {
        bail!("--tol must be positive");
    }
    let opts = SdpOptions {
        tol: cli.tol,
        max_iter: cli.max_iter,
    };
    match &cli.command {
        Command::Cost(args) => cmd_cost(cli, args, opts),
        Command::Invert(args) => cmd_invert(cli, args, opts),
        Command::Sweep { kind } => cmd_sweep(cli, kind, opts),
        Command::Verify { suite } => cmd_verify(cli, *suite, opts),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            let max_iter = err.chain().any(|e| {
                matches!(
                    e.downcast_ref::<stote_ot::Error>(),
                    Some(stote_ot::Error::Solver {
                        status: SolveStatus::MaxIter,
                        ..
                    })
                )
            });
            ExitCode::from(if max_iter { EXIT_MAX_ITER } else { EXIT_BAD_INPUT })
        }
    }
}
