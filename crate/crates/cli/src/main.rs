//! `dhym`: run the flow, solve the stationary problem, check subsolutions,
//! evaluate functionals and run the randomized property suite.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dhym_core::cone::{check_compatibility, elliptic_subsolution_check, parabolic_margin, CompatibilityReport};
use dhym_core::config::Problem;
use dhym_core::elliptic::{newton_solve, NewtonOptions};
use dhym_core::flow::{evaluate, run_flow};
use dhym_core::functionals::{dissipation, j_from_cy, path_independence_check, CyFunctional};
use dhym_core::hessian::complex_hessian;
use dhym_core::io::{write_diagnostics, write_snapshot};
use dhym_core::verify::{run_verify, VerifyOptions};
use dhym_core::{Error, ScalarField};

#[derive(Parser)]
#[command(
    name = "dhym",
    version,
    about = "Parabolic deformed Hermitian-Yang-Mills flow on boxes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the flow, writing diagnostics, snapshots and the monitor report.
    RunFlow(Common),
    /// Solve the stationary Dirichlet problem by damped Newton.
    SolveElliptic(Common),
    /// Report the cone and subsolution margins of the subsolution (or the
    /// initial data when none is configured).
    CheckSubsolution(Common),
    /// CY, J and path independence for the reference/target pair.
    EvalFunctionals(Common),
    /// Run the randomized property suite.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Abort on the first monitor violation.
    #[arg(long)]
    strict: bool,
    /// Output directory; overrides the configured one.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Optional; supplies the seed when `--seed` is absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Accepted for uniformity; any failing property already fails the run.
    #[arg(long)]
    #[allow(dead_code)]
    strict: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

/// A failed command and its exit code.
#[derive(Debug)]
enum Failure {
    Config(String),
    Numeric(String),
    Invariant(String),
    Property(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Property(_) => 1,
            Failure::Config(_) => 2,
            Failure::Numeric(_) => 3,
            Failure::Invariant(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Numeric(m) | Failure::Invariant(m) | Failure::Property(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Invariant { .. } => Failure::Invariant(e.to_string()),
            e if e.is_numeric() => Failure::Numeric(e.to_string()),
            e => Failure::Config(e.to_string()),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn load(common: &Common) -> Result<Problem, Failure> {
    let mut problem = Problem::load(&common.config)?;
    if common.strict {
        problem.config.strict = true;
    }
    if let Some(seed) = common.seed {
        problem.config.seed = seed;
    }
    Ok(problem)
}

fn out_dir(common: &Common, problem: &Problem) -> Result<PathBuf, Failure> {
    let dir = common
        .out
        .clone()
        .or_else(|| {
            problem.config.output.as_ref().map(|o| {
                let base = common.config.parent().unwrap_or(Path::new("."));
                base.join(&o.dir)
            })
        })
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(|e| Failure::Config(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn write_text(path: &Path, text: &str) -> CmdResult {
    fs::write(path, text).map_err(|e| Failure::Config(format!("cannot write {}: {e}", path.display())))
}

fn describe_compatibility(r: &CompatibilityReport) -> String {
    let mut s = String::new();
    for (name, v) in [
        ("initial data equals boundary data at t = 0", &r.c1),
        ("initial phase in (0, π/2)", &r.initial_phase),
        ("boundary phase in (θ₀, π/2 − θ₀)", &r.c2),
    ] {
        let _ = write!(s, "{} {name}", if v.ok() { "ok" } else { "FAILED" });
        if !v.ok() {
            let _ = write!(s, ": {} node(s), e.g.", v.count);
            for (c, val) in v.samples.iter().take(3) {
                let _ = write!(s, " {val:.6e} at {c:?}");
            }
        }
        s.push('\n');
    }
    s
}

fn run_flow_cmd(common: &Common) -> CmdResult {
    let problem = load(common)?;
    let dir = out_dir(common, &problem)?;
    let flow_problem = problem.flow_problem()?;
    let compat = check_compatibility(
        &flow_problem.initial,
        problem.boundary.as_ref(),
        problem.config.theta0,
        problem.config.t_end,
    )?;
    if !compat.ok() {
        return Err(Failure::Config(format!(
            "initial and boundary data are incompatible:\n{}",
            describe_compatibility(&compat)
        )));
    }
    write_snapshot(&flow_problem.initial, &dir.join("initial.bin"))?;
    match run_flow(flow_problem) {
        Ok(out) => {
            write_diagnostics(&out.rows, &dir.join("diagnostics.csv"))?;
            write_snapshot(&out.state.u, &dir.join("final.bin"))?;
            let report = format!(
                "termination: {:?}\nsteps: {}\nt: {}\n{}",
                out.termination, out.state.step_index, out.state.t, out.monitor
            );
            write_text(&dir.join("monitor.txt"), &report)?;
            print!("{report}");
            Ok(())
        }
        Err(abort) => {
            // forensic dump: everything recorded up to the failure
            write_diagnostics(&abort.rows, &dir.join("diagnostics.csv"))?;
            write_snapshot(&abort.state.u, &dir.join("abort.bin"))?;
            let report = format!(
                "aborted at step {}, t = {}: {}\n",
                abort.state.step_index, abort.state.t, abort.error
            );
            write_text(&dir.join("monitor.txt"), &report)?;
            Err(abort.error.into())
        }
    }
}

fn solve_elliptic_cmd(common: &Common) -> CmdResult {
    let problem = load(common)?;
    let dir = out_dir(common, &problem)?;
    let mut phi = problem.initial_field()?;
    phi.copy_boundary_from(&problem.boundary.sample(&problem.grid, 0.0)?)?;
    let out = newton_solve(&phi, &NewtonOptions::new(problem.hat_theta))?;
    let mut trace = String::from("iteration,residual_sup,damping,linear_iterations,linear_residual\n");
    for s in &out.trace {
        let _ = writeln!(
            trace,
            "{},{:.16e},{:.16e},{},{:.16e}",
            s.iteration, s.residual_sup, s.damping, s.linear_iterations, s.linear_residual
        );
    }
    write_text(&dir.join("newton.csv"), &trace)?;
    write_snapshot(&out.state.u, &dir.join("solution.bin"))?;
    println!(
        "Newton: {} iteration(s), residual {:.3e}, converged = {}",
        out.state.iteration, out.state.residual_sup, out.converged
    );
    if out.converged {
        Ok(())
    } else {
        Err(Failure::Numeric(format!(
            "Newton did not converge in {} iterations (residual {:.3e})",
            out.state.iteration, out.state.residual_sup
        )))
    }
}

fn check_subsolution_cmd(common: &Common) -> CmdResult {
    let problem = load(common)?;
    let (label, source) = match &problem.subsolution {
        Some(s) => ("subsolution", s.clone()),
        None => ("initial data", problem.initial.clone()),
    };
    let grid = &problem.grid;
    let field = source.sample(grid, 0.0)?;
    let hess = complex_hessian(&field);
    let dt: Vec<f64> = grid
        .interior()
        .iter()
        .map(|&i| source.time_derivative(&grid.coords(i), 0.0))
        .collect();
    let elliptic = elliptic_subsolution_check(&hess, problem.hat_theta)?;
    let margin = parabolic_margin(&hess, &dt, problem.hat_theta)?;
    let is_sub = elliptic.all_ok && margin.certifies();
    println!("field: {label}, θ̂ = {}", problem.hat_theta);
    println!(
        "cone condition: worst partial phase {:.6e} {} θ̂ ({} of {} nodes fail)",
        elliptic.worst_partial_phase,
        if elliptic.all_ok { "<" } else { "≥" },
        elliptic.node_ok.iter().filter(|ok| !**ok).count(),
        elliptic.node_ok.len()
    );
    for c in elliptic.failing_coords.iter().take(3) {
        println!("  fails at {c:?}");
    }
    println!("parabolic margin: {margin:?}");
    println!("{}", if is_sub { "subsolution" } else { "not a subsolution" });
    Ok(())
}

fn eval_functionals_cmd(common: &Common) -> CmdResult {
    let problem = load(common)?;
    let grid = &problem.grid;
    let phi = problem
        .reference
        .as_ref()
        .unwrap_or(&problem.initial)
        .sample(grid, 0.0)?;
    let psi: ScalarField = problem
        .target
        .as_ref()
        .ok_or_else(|| Failure::Config("config error at `target`: required by eval-functionals".into()))?
        .sample(grid, 0.0)?;
    let s_samples = problem.config.s_samples;
    let cy = CyFunctional::new(&phi, s_samples)?.eval(&psi)?;
    let j = j_from_cy(cy.value, problem.hat_theta);
    let path = path_independence_check(&phi, &psi, s_samples)?;
    let eval = evaluate(&psi, problem.hat_theta, 1.0)?;
    let s = dissipation(&eval.hess, &eval.rhs, problem.hat_theta);
    println!("CY = {:.16e} + {:.16e} i", cy.value.re, cy.value.im);
    println!("J = {j:.16e}");
    println!("S = {s:.16e}");
    println!(
        "path independence: {path:.6e} absolute, {:.6e} relative",
        path / cy.value.norm().max(f64::MIN_POSITIVE)
    );
    if cy.outside_admissible {
        println!("note: target and reference differ on the boundary layer (outside the admissible class)");
    }
    Ok(())
}

fn verify_cmd(args: &VerifyArgs) -> CmdResult {
    let seed = match (args.seed, &args.config) {
        (Some(s), _) => s,
        (None, Some(path)) => Problem::load(path)?.config.seed,
        (None, None) => 0,
    };
    let report = run_verify(&VerifyOptions::new(seed));
    print!("{report}");
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir).map_err(|e| Failure::Config(format!("cannot create {}: {e}", dir.display())))?;
        write_text(&dir.join("verify.txt"), &report.to_string())?;
    }
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Property("property suite failed".into()))
    }
}

fn init_threads() -> CmdResult {
    let Ok(v) = std::env::var("DHYM_THREADS") else {
        return Ok(());
    };
    let threads: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| Failure::Config(format!("DHYM_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Failure::Config(format!("thread pool: {e}")))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = init_threads().and_then(|()| match &cli.command {
        Command::RunFlow(c) => run_flow_cmd(c),
        Command::SolveElliptic(c) => solve_elliptic_cmd(c),
        Command::CheckSubsolution(c) => check_subsolution_cmd(c),
        Command::EvalFunctionals(c) => eval_functionals_cmd(c),
        Command::Verify(v) => verify_cmd(v),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
