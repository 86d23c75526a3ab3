//! Command-line interface: reads problem JSON, runs a solver and writes JSON
//! (or CSV for sweeps) to standard output.
//!
//! Exit codes: 0 on success, 1 for invalid input or usage, 2 when a solver
//! fails or a verification check does not pass. Errors are written to standard
//! error as `{"error": {"kind": ..., "message": ...}}`.

use std::ffi::OsString;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};
use serde_json::{json, Value};

use crate::contract_opt::{
    closed_form_ces_with, closed_form_cobb_douglas_with, optimal_active_set_with_cap, optimize_general,
    optimize_quadratic_binary, OptimalContractResult, OptimizerOptions,
};
use crate::diagnostics::{check_cross_agent_ratios, check_cross_outcome_ratios, compute_balance_report};
use crate::equilibrium::{solve_equilibrium_general_with, solve_equilibrium_quadratic_binary, EquilibriumResult};
use crate::equity::optimize_equity;
use crate::error::Error;
use crate::model::{Contract, ProductionFunction, Problem};
use crate::oracle;
use crate::statics::{dperformance_dlink, dshare_dlink, parse_grid, sweep, SweepParameter};

#[derive(Debug, Parser)]
#[command(name = "netcontract", version, about = "Optimal incentive contracts for teams with spillovers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a problem file and list every violated invariant.
    Validate(ProblemArg),
    /// Solve the effort equilibrium under a contract.
    Equilibrium(ContractArgs),
    /// Balance diagnostics of a contract at its equilibrium.
    Diagnose(ContractArgs),
    /// Compute an optimal contract.
    Optimize(OptimizeArgs),
    /// Rank candidate active sets of a quadratic network problem.
    ActiveSet(ActiveSetArgs),
    /// Link derivatives of the optimal contract of a quadratic network problem.
    Statics(StaticsArgs),
    /// Optimal contracts along a parameter grid, as CSV.
    Sweep(SweepArgs),
    /// Compute an optimal equity contract.
    Equity(OptimizerFlags),
    /// Cross-check the solvers against the brute-force oracle.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
struct ProblemArg {
    /// Problem JSON file.
    problem: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EquilibriumMethod {
    /// The quadratic-binary solver when applicable, the general solver otherwise.
    Auto,
    General,
    Quadratic,
}

#[derive(Debug, Args)]
struct ContractArgs {
    /// Problem JSON file.
    problem: PathBuf,
    /// Contract JSON file `{"payments": [[...], ...]}`, one row per agent.
    #[arg(long, conflicts_with = "tau")]
    contract: Option<PathBuf>,
    /// Success payments of a binary-outcome problem, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    tau: Option<Vec<f64>>,
    /// Initial action profile of the general solver, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    init: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value_t = EquilibriumMethod::Auto)]
    method: EquilibriumMethod,
    /// First-order-condition tolerance of the general solver.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OptimizeMethod {
    General,
    Quadratic,
    CobbDouglas,
    Ces,
}

#[derive(Debug, Args)]
struct OptimizerFlags {
    /// Problem JSON file.
    problem: PathBuf,
    /// Number of optimizer starts.
    #[arg(long, default_value_t = 8)]
    starts: usize,
    /// KKT tolerance.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// Iteration limit per start.
    #[arg(long, default_value_t = 3000)]
    max_iterations: usize,
}

impl OptimizerFlags {
    fn options(&self) -> OptimizerOptions {
        OptimizerOptions {
            starts: self.starts,
            tol: self.tol,
            max_iterations: self.max_iterations,
            ..OptimizerOptions::default()
        }
    }
}

#[derive(Debug, Args)]
struct OptimizeArgs {
    #[command(flatten)]
    flags: OptimizerFlags,
    #[arg(long, value_enum, default_value_t = OptimizeMethod::General)]
    method: OptimizeMethod,
}

#[derive(Debug, Args)]
struct ActiveSetArgs {
    /// Problem JSON file.
    problem: PathBuf,
    /// Largest network size for enumeration.
    #[arg(long, default_value_t = 16)]
    cap: usize,
}

#[derive(Debug, Args)]
struct StaticsArgs {
    /// Problem JSON file.
    problem: PathBuf,
    /// Parameter to vary: beta, G<i><j> or G<i>,<j> (1-based).
    #[arg(long, requires = "grid")]
    param: Option<String>,
    /// Grid start:stop:step (inclusive).
    #[arg(long, requires = "param")]
    grid: Option<String>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Problem JSON file.
    problem: PathBuf,
    /// Parameter to vary: beta, G<i><j> or G<i>,<j> (1-based).
    #[arg(long)]
    param: String,
    /// Grid start:stop:step (inclusive).
    #[arg(long)]
    grid: String,
    /// Worker threads (0 uses all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Write the CSV here instead of standard output.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Problem JSON file.
    problem: PathBuf,
    /// Contract whose equilibrium is cross-checked.
    #[arg(long)]
    contract: Option<PathBuf>,
    /// Finest grid step of the contract search.
    #[arg(long, default_value_t = 2e-3)]
    grid_step: f64,
    /// Upper bound of every searched payment.
    #[arg(long, default_value_t = 1.0)]
    max_payment: f64,
    /// Largest admitted payoff shortfall of the optimizer against the grid.
    #[arg(long, default_value_t = 1e-3)]
    payoff_tol: f64,
}

/// Failure of a command, mapped to an exit code.
struct Failure {
    kind: String,
    message: String,
    code: i32,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if e.is_input_error() { 1 } else { 2 };
        Self { kind: e.kind().into(), message: e.to_string(), code }
    }
}

fn input_failure(message: String) -> Failure {
    Failure { kind: "input".into(), message, code: 1 }
}

/// Writes floats with 17 significant digits so they parse back to the same value.
struct RoundTripFormatter<'a>(PrettyFormatter<'a>);

impl Formatter for RoundTripFormatter<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }

    fn begin_array<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_array(writer)
    }

    fn end_array<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_array(writer)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(writer, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_array_value(writer)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_object(writer)
    }

    fn end_object<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_object(writer)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(writer, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_object_value(writer)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_object_value(writer)
    }
}

/// Serialize to pretty JSON with round-trip float formatting; non-finite floats become `null`.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, RoundTripFormatter(PrettyFormatter::new()));
    value.serialize(&mut ser).expect("serializing in-memory values cannot fail");
    String::from_utf8(buf).expect("JSON output is UTF-8")
}

fn read_text(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| input_failure(format!("cannot read {}: {e}", path.display())))
}

fn load_problem(path: &Path) -> Result<Problem, Failure> {
    let problem = Problem::from_json(&read_text(path)?)
        .map_err(|e| input_failure(format!("malformed problem {}: {e}", path.display())))?;
    let report = problem.validate();
    if !report.is_ok() {
        return Err(Error::Invalid(report).into());
    }
    Ok(problem)
}

fn load_contract(problem: &Problem, file: Option<&Path>, tau: Option<&[f64]>) -> Result<Contract, Failure> {
    let contract = match (file, tau) {
        (Some(path), _) => serde_json::from_str::<Contract>(&read_text(path)?)
            .map_err(|e| input_failure(format!("malformed contract {}: {e}", path.display())))?,
        (None, Some(tau)) => {
            if problem.num_outcomes() != 2 || problem.outcomes.success().is_none() {
                return Err(input_failure("--tau needs a binary-outcome problem; use --contract".into()));
            }
            Contract::success_only(tau)
        }
        (None, None) => return Err(input_failure("give a contract with --contract or --tau".into())),
    };
    contract.check(problem).map_err(Error::from)?;
    Ok(contract)
}

fn default_init(problem: &Problem) -> Vec<f64> {
    vec![if problem.production.singular_at_zero() { 1.0 } else { 0.0 }; problem.n]
}

fn solve_equilibrium(problem: &Problem, contract: &Contract, args: &ContractArgs) -> Result<EquilibriumResult, Failure> {
    let quadratic = problem.as_quadratic_binary().filter(|_| contract.outcome_column(0).iter().all(|&t| t == 0.0));
    match (args.method, quadratic) {
        (EquilibriumMethod::Quadratic, None) => Err(input_failure(
            "the quadratic solver needs quadratic network production, a binary outcome, linear utilities, unit quadratic costs and no failure payments".into(),
        )),
        (EquilibriumMethod::Quadratic | EquilibriumMethod::Auto, Some(qb)) => Ok(solve_equilibrium_quadratic_binary(
            &qb.network,
            &qb.standalone,
            &contract.outcome_column(1),
            &qb.success,
        )?),
        _ => {
            let init = args.init.clone().unwrap_or_else(|| default_init(problem));
            let opts = crate::equilibrium::EquilibriumOptions { tol: args.tol, ..Default::default() };
            Ok(solve_equilibrium_general_with(problem, contract, &init, &opts)?)
        }
    }
}

fn quadratic_parts(problem: &Problem) -> Result<crate::model::QuadraticBinary, Failure> {
    let qb = problem.as_quadratic_binary().ok_or_else(|| {
        input_failure("needs quadratic network production, a binary outcome, linear utilities and unit quadratic costs".into())
    })?;
    if qb.standalone.iter().any(|&b| b != 1.0) {
        return Err(input_failure("needs unit standalone coefficients".into()));
    }
    Ok(qb)
}

fn closed_form_parts(problem: &Problem) -> Result<crate::model::SuccessProbability, Failure> {
    let risk_neutral = problem.utilities.iter().all(|u| *u == crate::model::Utility::Linear);
    let unit_cost = problem.costs.iter().all(|c| c.is_unit_quadratic());
    match problem.outcomes.success() {
        Some(p) if risk_neutral && unit_cost => Ok(p.clone()),
        _ => Err(input_failure("closed forms need a binary outcome, linear utilities and unit quadratic costs".into())),
    }
}

fn optimize(problem: &Problem, method: OptimizeMethod, opts: &OptimizerOptions) -> Result<OptimalContractResult, Failure> {
    match method {
        OptimizeMethod::General => Ok(optimize_general(problem, opts)?),
        OptimizeMethod::Quadratic => {
            let qb = quadratic_parts(problem)?;
            Ok(optimize_quadratic_binary(&qb.network, &qb.success, opts)?)
        }
        OptimizeMethod::CobbDouglas => {
            let p = closed_form_parts(problem)?;
            let ProductionFunction::CobbDouglas { gamma } = &problem.production else {
                return Err(input_failure("--method cobb-douglas needs cobb_douglas production".into()));
            };
            Ok(closed_form_cobb_douglas_with(gamma, &p, opts)?)
        }
        OptimizeMethod::Ces => {
            let p = closed_form_parts(problem)?;
            let ProductionFunction::Ces { gamma, rho, kappa } = &problem.production else {
                return Err(input_failure("--method ces needs ces production".into()));
            };
            Ok(closed_form_ces_with(gamma, *rho, *kappa, &p, opts)?)
        }
    }
}

fn statics_at(problem: &Problem, opts: &OptimizerOptions) -> Result<Value, Failure> {
    let qb = quadratic_parts(problem)?;
    let opt = optimize_quadratic_binary(&qb.network, &qb.success, opts)?;
    let shares = dshare_dlink(&qb.network, &qb.success, &opt)?;
    let performance = dperformance_dlink(&qb.network, &qb.success, &opt)?;
    let rows: Vec<Vec<f64>> = performance.row_iter().map(|r| r.iter().copied().collect()).collect();
    Ok(json!({
        "optimum": serde_json::to_value(&opt).expect("serializable"),
        "dshare_dlink": serde_json::to_value(&shares).expect("serializable"),
        "dperformance_dlink": rows,
    }))
}

fn verify(problem: &Problem, args: &VerifyArgs) -> Result<(Value, bool), Failure> {
    let mut checks = Vec::new();
    let mut push = |name: &str, value: f64, tolerance: f64| {
        let passed = value <= tolerance;
        checks.push(json!({"name": name, "value": value, "tolerance": tolerance, "passed": passed}));
        passed
    };
    let mut all = true;
    if let Some(path) = &args.contract {
        let contract = load_contract(problem, Some(path), None)?;
        let analytic = solve_equilibrium_general_with(problem, &contract, &default_init(problem), &Default::default())?;
        let reference = oracle::best_response_iterate(problem, &contract, 1e-12, 0.5)
            .map_err(|e| Failure { kind: "oracle".into(), message: e.to_string(), code: 2 })?;
        let gap = analytic.actions.iter().zip(&reference.actions).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        all &= push("equilibrium_vs_oracle", gap, 1e-8);
    }
    let m = problem.num_outcomes();
    let revenues = problem.outcomes.revenues();
    let bounds: Vec<(f64, f64)> = (0..problem.n * m)
        .map(|k| if revenues[k % m] > 0.0 { (0.0, args.max_payment) } else { (0.0, 0.0) })
        .collect();
    let dims = bounds.iter().filter(|(lo, hi)| hi > lo).count();
    if dims <= oracle::MAX_GRID_DIMENSION {
        let opts = OptimizerOptions::default();
        let optimum = match quadratic_parts(problem) {
            Ok(qb) => optimize_quadratic_binary(&qb.network, &qb.success, &opts)?,
            Err(_) => optimize_general(problem, &opts)?,
        };
        let mut resolutions = vec![0.05, 0.01, args.grid_step];
        resolutions.retain(|&r| r >= args.grid_step);
        resolutions.dedup();
        let grid = oracle::brute_force_refined(problem, &resolutions, &bounds)
            .map_err(|e| Failure { kind: "oracle".into(), message: e.to_string(), code: 2 })?;
        all &= push("payoff_shortfall_vs_grid", grid.payoff - optimum.principal_payoff, args.payoff_tol);
        let distance = optimum
            .contract
            .payments
            .iter()
            .zip(grid.contract.payments.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        all &= push("contract_distance_vs_grid", distance, args.grid_step * (1.0 + 1e-9));
    }
    Ok((json!({"checks": checks, "passed": all}), all))
}

fn sweep_axis(param: &str, grid: &str) -> Result<(SweepParameter, Vec<f64>), Failure> {
    let param = param.parse::<SweepParameter>().map_err(|e| input_failure(e.to_string()))?;
    let grid = parse_grid(grid).map_err(|e| input_failure(e.to_string()))?;
    Ok((param, grid))
}

fn execute(cli: Cli) -> Result<(String, i32), Failure> {
    let out = |v: &dyn erased::Json| Ok((v.render(), 0));
    match cli.command {
        Command::Validate(args) => {
            let problem = Problem::from_json(&read_text(&args.problem)?)
                .map_err(|e| input_failure(format!("malformed problem {}: {e}", args.problem.display())))?;
            let report = problem.validate();
            let code = if report.is_ok() { 0 } else { 1 };
            let value = json!({"valid": report.is_ok(), "violations": serde_json::to_value(&report.violations).expect("serializable")});
            Ok((to_json(&value), code))
        }
        Command::Equilibrium(args) => {
            let problem = load_problem(&args.problem)?;
            let contract = load_contract(&problem, args.contract.as_deref(), args.tau.as_deref())?;
            out(&solve_equilibrium(&problem, &contract, &args)?)
        }
        Command::Diagnose(args) => {
            let problem = load_problem(&args.problem)?;
            let contract = load_contract(&problem, args.contract.as_deref(), args.tau.as_deref())?;
            let eq = solve_equilibrium(&problem, &contract, &args)?;
            let report = compute_balance_report(&problem, &contract, &eq)?;
            let value = json!({
                "equilibrium": serde_json::to_value(&eq).expect("serializable"),
                "report": serde_json::to_value(&report).expect("serializable"),
                "cross_agent": serde_json::to_value(check_cross_agent_ratios(&report, &contract)).expect("serializable"),
                "cross_outcome": serde_json::to_value(check_cross_outcome_ratios(&report, &contract, &eq)).expect("serializable"),
            });
            out(&value)
        }
        Command::Optimize(args) => {
            let problem = load_problem(&args.flags.problem)?;
            out(&optimize(&problem, args.method, &args.flags.options())?)
        }
        Command::ActiveSet(args) => {
            let problem = load_problem(&args.problem)?;
            let qb = quadratic_parts(&problem)?;
            out(&optimal_active_set_with_cap(&qb.network, &qb.success, args.cap)?)
        }
        Command::Statics(args) => {
            let problem = load_problem(&args.problem)?;
            let opts = OptimizerOptions::default();
            match (&args.param, &args.grid) {
                (Some(param), Some(grid)) => {
                    let (param, grid) = sweep_axis(param, grid)?;
                    let qb = quadratic_parts(&problem)?;
                    let mut points = Vec::new();
                    for value in grid {
                        let network = param.apply(&qb.network, value)?;
                        let shifted = Problem::quadratic_binary(network, None, qb.success.clone());
                        let result = match statics_at(&shifted, &opts) {
                            Ok(v) => v,
                            Err(f) => json!({"error": {"kind": f.kind, "message": f.message}}),
                        };
                        points.push(json!({"value": value, "statics": result}));
                    }
                    out(&json!({"parameter": param.to_string(), "points": points}))
                }
                _ => out(&statics_at(&problem, &opts)?),
            }
        }
        Command::Sweep(args) => {
            let problem = load_problem(&args.problem)?;
            let (param, grid) = sweep_axis(&args.param, &args.grid)?;
            let curve = sweep(&problem, param, &grid, &OptimizerOptions::default(), args.jobs)?;
            let csv = curve.to_csv(problem.n)?;
            match &args.output {
                Some(path) => {
                    std::fs::write(path, &csv)
                        .map_err(|e| input_failure(format!("cannot write {}: {e}", path.display())))?;
                    Ok((String::new(), 0))
                }
                None => Ok((csv, 0)),
            }
        }
        Command::Equity(flags) => {
            let problem = load_problem(&flags.problem)?;
            let (shares, diagnostics) = optimize_equity(&problem, &flags.options())?;
            out(&json!({
                "shares": serde_json::to_value(&shares).expect("serializable"),
                "diagnostics": serde_json::to_value(&diagnostics).expect("serializable"),
            }))
        }
        Command::Verify(args) => {
            let problem = load_problem(&args.problem)?;
            let (value, passed) = verify(&problem, &args)?;
            Ok((to_json(&value), if passed { 0 } else { 2 }))
        }
    }
}

mod erased {
    /// Object-safe rendering of serializable results.
    pub trait Json {
        fn render(&self) -> String;
    }

    impl<T: serde::Serialize> Json for T {
        fn render(&self) -> String {
            super::to_json(self)
        }
    }
}

/// Run the command line `args` (including the program name) and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            report_failure(&input_failure(e.to_string().trim_end().to_string()));
            return 1;
        }
    };
    match execute(cli) {
        Ok((text, code)) => {
            let mut stdout = io::stdout().lock();
            if !text.is_empty() {
                let _ = writeln!(stdout, "{}", text.trim_end());
            }
            code
        }
        Err(failure) => {
            report_failure(&failure);
            failure.code
        }
    }
}

fn report_failure(failure: &Failure) {
    let value = json!({"error": {"kind": failure.kind, "message": failure.message}});
    eprintln!("{}", to_json(&value));
}
