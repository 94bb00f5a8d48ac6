//! `awdist` — command line front end for the adapted-distance solver.
//!
//! Verbs:
//!
//! * `solve <instance.json>` — closed-form value, optimizer blocks, and
//!   coupling covariance for the instance's lambda (or `--lambda`).
//! * `verify <instance.json>` — same solve, then checks it against the
//!   requested numerical oracles and reports the gaps.
//! * `interpolate <instance.json>` — displacement interpolation of the
//!   optimal (or supplied) coupling, emitted as CSV.
//! * `examples` — prints the three bundled instances (or writes them with
//!   `--output <dir>`).
//!
//! Exit codes: 0 success, 2 input/validation error, 3 verification gap
//! above tolerance, 4 numerical failure inside a solve or oracle.

mod instances;
mod schema;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use awdist::coupling::{build_coupling, GaussianCoupling};
use awdist::gausslaw::ProcessLaw;
use awdist::oracle::param::{param_search_report, ParamSearchConfig};
use awdist::oracle::{eval_cost, nested_sinkhorn, DiscreteInstance, SinkhornConfig};
use awdist::solver::{solve_aw_with, solve_w2, SolveOptions, SolveReport, ZeroMode};
use awdist::AwError;
use clap::{Parser, Subcommand, ValueEnum};
use schema::{
    mat_to_rows, Breakdown, InstanceFile, OracleSection, ResultFile, W2Section,
};

/// Gap tolerance for the parametric-search oracle, scaled by value size.
const VERIFY_PARAM_TOL: f64 = 1e-6;
/// Relative gap tolerance for the discretized backward-induction oracle.
const VERIFY_DP_REL_TOL: f64 = 2e-2;
/// Default per-axis grid for the parametric-search oracle.
const DEFAULT_PARAM_GRID: usize = 201;
/// Default discretization points for the backward-induction oracle.
const DEFAULT_DP_GRID: usize = 120;

#[derive(Parser)]
#[command(
    name = "awdist",
    version,
    about = "Adapted Wasserstein distances between Gaussian process laws",
    long_about = "Computes entropic adapted Wasserstein distances between \
                  non-degenerate Gaussian laws of discrete-time processes in \
                  closed form, reports the optimal bi-causal couplings, and \
                  can verify every number against independent numerical \
                  oracles."
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve an instance in closed form and print the result document.
    Solve {
        /// Path to an instance JSON file.
        instance: PathBuf,
        /// Override the instance's regularization strength (must be >= 0).
        #[arg(long)]
        lambda: Option<f64>,
        /// Fill-in for zero singular values at lambda = 0.
        #[arg(long, value_enum, default_value_t = ZeroModeArg::One)]
        zero_mode: ZeroModeArg,
        /// Also solve the classical (non-adapted) problem.
        #[arg(long)]
        with_w2: bool,
        /// Write the document here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Solve, then check the value against numerical oracles.
    Verify {
        /// Path to an instance JSON file.
        instance: PathBuf,
        /// Which oracle(s) to run.
        #[arg(long, value_enum, default_value_t = OracleArg::Param)]
        oracle: OracleArg,
        /// Grid resolution: points per axis (param) / support points (dp).
        #[arg(long)]
        grid: Option<usize>,
        /// Seed for the parametric search's random restarts.
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Override the instance's regularization strength (must be >= 0).
        #[arg(long)]
        lambda: Option<f64>,
        /// Write the document here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Emit displacement-interpolation data for the optimal coupling as CSV.
    Interpolate {
        /// Path to an instance JSON file.
        instance: PathBuf,
        /// Comma-separated interpolation times in [0, 1].
        #[arg(long, value_delimiter = ',')]
        times: Option<Vec<f64>>,
        /// Which coupling to interpolate. The regularized variants use the
        /// instance's lambda (or --lambda); `aw` and `w2` always use
        /// lambda = 0. A `P` override in the instance file is honored for
        /// `aw` and `aw-reg`.
        #[arg(long, value_enum, default_value_t = WhichArg::Aw)]
        which: WhichArg,
        /// Override the instance's regularization strength (must be >= 0).
        #[arg(long)]
        lambda: Option<f64>,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Print the bundled example instances.
    Examples {
        /// Write ex1.json, ex2.json, ex3.json into this directory instead.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum ZeroModeArg {
    One,
    Zero,
}

impl ZeroModeArg {
    fn to_mode(self) -> ZeroMode {
        match self {
            ZeroModeArg::One => ZeroMode::One,
            ZeroModeArg::Zero => ZeroMode::Zero,
        }
    }

    fn label(self) -> &'static str {
        match self {
            ZeroModeArg::One => "one",
            ZeroModeArg::Zero => "zero",
        }
    }
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum OracleArg {
    Param,
    Dp,
    Both,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum WhichArg {
    /// Adapted optimal coupling at lambda = 0.
    Aw,
    /// Adapted optimal coupling at the instance's lambda.
    AwReg,
    /// Classical optimal coupling at lambda = 0.
    W2,
    /// Classical optimal coupling at the instance's lambda.
    W2Reg,
}

/// A command failure carrying its process exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Failure { code: 2, message: message.into() }
    }
}

impl From<AwError> for Failure {
    fn from(e: AwError) -> Self {
        let code = match e {
            AwError::NumericalFailure(_)
            | AwError::SingularEntropy { .. }
            | AwError::SinkhornDiverged { .. }
            | AwError::NotMonge { .. } => 4,
            _ => 2,
        };
        let message = match &e {
            AwError::NotPositiveDefinite { .. } => format!(
                "{e}; the input laws must be non-degenerate \
                 (strictly positive definite covariances)"
            ),
            _ => e.to_string(),
        };
        Failure { code, message }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version requests are successes; everything else is a
            // usage problem and maps to the input-error exit code.
            let benign = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp
                    | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return if benign { ExitCode::SUCCESS } else { ExitCode::from(2) };
        }
    };
    let outcome = match cli.cmd {
        Cmd::Solve { instance, lambda, zero_mode, with_w2, output } => {
            cmd_solve(&instance, lambda, zero_mode, with_w2, output.as_deref())
        }
        Cmd::Verify { instance, oracle, grid, seed, lambda, output } => {
            cmd_verify(&instance, oracle, grid, seed, lambda, output.as_deref())
        }
        Cmd::Interpolate { instance, times, which, lambda, output } => {
            cmd_interpolate(&instance, times, which, lambda, output.as_deref())
        }
        Cmd::Examples { output } => cmd_examples(output.as_deref()),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load_instance(path: &Path) -> Result<InstanceFile, Failure> {
    let text = fs::read_to_string(path).map_err(|e| {
        Failure::input(format!("cannot read {}: {e}", path.display()))
    })?;
    serde_json::from_str(&text).map_err(|e| {
        Failure::input(format!("malformed instance {}: {e}", path.display()))
    })
}

fn resolve_lambda(inst: &InstanceFile, flag: Option<f64>) -> Result<f64, Failure> {
    let lambda = flag.unwrap_or(inst.lambda);
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Failure::input(format!(
            "lambda must be finite and >= 0, got {lambda}"
        )));
    }
    Ok(lambda)
}

fn emit(text: &str, output: Option<&Path>) -> Result<(), Failure> {
    match output {
        Some(path) => fs::write(path, text).map_err(|e| {
            Failure::input(format!("cannot write {}: {e}", path.display()))
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn render(result: &ResultFile) -> Result<String, Failure> {
    let mut text = serde_json::to_string_pretty(result).map_err(|e| Failure {
        code: 4,
        message: format!("serialization failed: {e}"),
    })?;
    text.push('\n');
    Ok(text)
}

/// Shared solve path: builds the result document for one instance.
fn solve_document(
    inst: &InstanceFile,
    mu: &ProcessLaw,
    nu: &ProcessLaw,
    lambda: f64,
    zero_mode: ZeroModeArg,
    with_w2: bool,
) -> Result<(ResultFile, SolveReport), Failure> {
    let opts = SolveOptions { zero_mode: zero_mode.to_mode() };
    let report = solve_aw_with(mu, nu, lambda, opts)?;
    let coupling = build_coupling(mu, nu, &report.p_opt)?;

    let mut notes = Vec::new();
    if !report.unique {
        let max_s = report.s_diag.iter().cloned().fold(0.0f64, f64::max);
        let zeros = report
            .s_diag
            .iter()
            .filter(|&&s| s <= 1e-9 * max_s.max(1.0))
            .count();
        notes.push(format!(
            "optimum is not unique ({zeros} vanishing singular value{}); \
             zero-mode '{}' selects the reported representative",
            if zeros == 1 { "" } else { "s" },
            zero_mode.label(),
        ));
    }
    let off_diagonal = report.p_opt.blocks().iter().any(|b| {
        (0..b.rows())
            .any(|i| (0..b.cols()).any(|j| i != j && b.get(i, j).abs() > 1e-9))
    });
    if off_diagonal {
        notes.push(
            "optimal parameter blocks are block-diagonal but not diagonal \
             (off-diagonal entries present)"
                .to_string(),
        );
    }
    if let Some(p) = inst.p_override()? {
        match eval_cost(mu, nu, &p, lambda) {
            Ok(cost) => notes.push(format!(
                "supplied parameter P evaluates to {cost:.12} \
                 (optimal value {:.12})",
                report.value
            )),
            Err(e) => notes.push(format!("supplied parameter P rejected: {e}")),
        }
    }

    let w2 = if with_w2 {
        let w = solve_w2(mu, nu, lambda)?;
        Some(W2Section {
            value: w.value,
            coupling_covariance: mat_to_rows(&w.coupling_cov),
        })
    } else {
        None
    };

    let result = ResultFile {
        lambda,
        zero_mode: zero_mode.label().to_string(),
        value: report.value,
        value_breakdown: Breakdown {
            mean: report.mean_term,
            trace: report.trace_term,
            coupling: report.coupling_term,
            entropy: report.entropy_term,
        },
        s_diag: report.s_diag.clone(),
        d_lambda_diag: report.d_lambda_diag.clone(),
        p_blocks: report.p_opt.blocks().iter().map(mat_to_rows).collect(),
        coupling_covariance: mat_to_rows(coupling.cov()),
        unique: report.unique,
        monge: report.monge,
        notes,
        w2,
        oracle: None,
    };
    Ok((result, report))
}

fn cmd_solve(
    path: &Path,
    lambda_flag: Option<f64>,
    zero_mode: ZeroModeArg,
    with_w2: bool,
    output: Option<&Path>,
) -> Result<u8, Failure> {
    let inst = load_instance(path)?;
    let (mu, nu) = inst.to_laws()?;
    let lambda = resolve_lambda(&inst, lambda_flag)?;
    let (result, _) = solve_document(&inst, &mu, &nu, lambda, zero_mode, with_w2)?;
    emit(&render(&result)?, output)?;
    Ok(0)
}

fn cmd_verify(
    path: &Path,
    oracle: OracleArg,
    grid: Option<usize>,
    seed: u64,
    lambda_flag: Option<f64>,
    output: Option<&Path>,
) -> Result<u8, Failure> {
    let inst = load_instance(path)?;
    let (mu, nu) = inst.to_laws()?;
    let lambda = resolve_lambda(&inst, lambda_flag)?;
    let (mut result, report) =
        solve_document(&inst, &mu, &nu, lambda, ZeroModeArg::One, false)?;

    let mut section = OracleSection {
        param_search_value: None,
        param_gap: None,
        param_tie_count: None,
        param_ties: None,
        nested_sinkhorn_value: None,
        dp_relative_gap: None,
        within_tolerance: true,
    };

    if matches!(oracle, OracleArg::Param | OracleArg::Both) {
        let cfg = ParamSearchConfig {
            grid_points_per_axis: grid.unwrap_or(DEFAULT_PARAM_GRID),
            seed,
            ..ParamSearchConfig::default()
        };
        let search = param_search_report(&mu, &nu, lambda, &cfg)?;
        let gap = (search.best_value - report.value).abs();
        section.param_search_value = Some(search.best_value);
        section.param_gap = Some(gap);
        section.param_tie_count = Some(search.tie_count);
        section.param_ties =
            Some(search.ties.iter().map(|p| mat_to_rows(&p.embed())).collect());
        if search.tie_count > 1 {
            result.notes.push(format!(
                "parametric search found {} tied optima; {} listed",
                search.tie_count,
                search.ties.len()
            ));
        }
        if gap > VERIFY_PARAM_TOL * (1.0 + report.value.abs()) {
            section.within_tolerance = false;
        }
    }

    if matches!(oracle, OracleArg::Dp | OracleArg::Both) {
        let instance =
            DiscreteInstance::discretize(&mu, &nu, grid.unwrap_or(DEFAULT_DP_GRID))?;
        let dp_value = nested_sinkhorn(&instance, lambda, &SinkhornConfig::default())?;
        let rel = (dp_value - report.value).abs() / report.value.abs().max(1.0);
        section.nested_sinkhorn_value = Some(dp_value);
        section.dp_relative_gap = Some(rel);
        if rel > VERIFY_DP_REL_TOL {
            section.within_tolerance = false;
        }
    }

    let ok = section.within_tolerance;
    result.oracle = Some(section);
    emit(&render(&result)?, output)?;
    Ok(if ok { 0 } else { 3 })
}

fn cmd_interpolate(
    path: &Path,
    times_flag: Option<Vec<f64>>,
    which: WhichArg,
    lambda_flag: Option<f64>,
    output: Option<&Path>,
) -> Result<u8, Failure> {
    let inst = load_instance(path)?;
    let (mu, nu) = inst.to_laws()?;
    let lambda = match which {
        WhichArg::Aw | WhichArg::W2 => 0.0,
        WhichArg::AwReg | WhichArg::W2Reg => resolve_lambda(&inst, lambda_flag)?,
    };

    let coupling: GaussianCoupling = match which {
        WhichArg::Aw | WhichArg::AwReg => {
            let p = match inst.p_override()? {
                Some(p) => p,
                None => {
                    solve_aw_with(&mu, &nu, lambda, SolveOptions::default())?.p_opt
                }
            };
            build_coupling(&mu, &nu, &p)?
        }
        WhichArg::W2 | WhichArg::W2Reg => {
            let w = solve_w2(&mu, &nu, lambda)?;
            let mean = [mu.mean(), nu.mean()].concat();
            GaussianCoupling::from_parts(
                mu.d(),
                mu.time_steps(),
                mean,
                w.coupling_cov,
            )?
        }
    };

    let times = times_flag
        .or_else(|| inst.times.clone())
        .unwrap_or_else(|| (0..=10).map(|k| k as f64 / 10.0).collect());

    let n = coupling.marginal_dim();
    let mut csv = String::from("t");
    for i in 0..n {
        csv.push_str(&format!(",mean_{}", i + 1));
    }
    for i in 0..n {
        for j in 0..n {
            csv.push_str(&format!(",cov_{}_{}", i + 1, j + 1));
        }
    }
    csv.push_str(",min_eig\n");
    for &t in &times {
        let (mean, cov, min_eig) = awdist::coupling::interpolate(&coupling, t)?;
        csv.push_str(&format!("{t}"));
        for v in &mean {
            csv.push_str(&format!(",{v}"));
        }
        for i in 0..n {
            for j in 0..n {
                csv.push_str(&format!(",{}", cov.get(i, j)));
            }
        }
        csv.push_str(&format!(",{min_eig}\n"));
    }

    emit(&csv, output)?;
    Ok(0)
}

fn cmd_examples(output: Option<&Path>) -> Result<u8, Failure> {
    match output {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| {
                Failure::input(format!("cannot create {}: {e}", dir.display()))
            })?;
            for (name, inst) in instances::all() {
                let text = instance_json(&inst)?;
                let path = dir.join(format!("{name}.json"));
                fs::write(&path, text).map_err(|e| {
                    Failure::input(format!("cannot write {}: {e}", path.display()))
                })?;
            }
        }
        None => {
            for (name, inst) in instances::all() {
                println!("--- {name}.json");
                print!("{}", instance_json(&inst)?);
            }
        }
    }
    Ok(0)
}

fn instance_json(inst: &InstanceFile) -> Result<String, Failure> {
    let mut text = serde_json::to_string_pretty(inst).map_err(|e| Failure {
        code: 4,
        message: format!("serialization failed: {e}"),
    })?;
    text.push('\n');
    Ok(text)
}
