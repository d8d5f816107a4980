use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pba::baseline::{self, SaConfig};
use pba::harness::checks::{self, CheckReport, Verdict, DEFAULT_CHECKPOINTS};
use pba::harness::{self, report, Algorithm, ExperimentSpec, HarnessError, SaSettings};
use pba::sequential_test::{self, boundary_value};
use pba::solver::{self, SolverConfig};
use pba::{ConstantPOracle, ProblemSpec, SignOracle, StepSampler};

const LINEAR_PROBLEM: &str = "shape=linear,c=1;noise=gaussian,sigma=1";
const STEP_PROBLEM: &str = "shape=step,h=1;noise=gaussian,sigma=1";
/// Per-test cap used by `check` unless overridden.
const CHECK_MAX_TEST_STEPS: u64 = 1_000_000_000_000;

#[derive(Parser)]
#[command(
    name = "pba",
    version,
    about = "Probabilistic bisection for stochastic root finding"
)]
struct Cli {
    /// Worker threads for replication studies (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one trace and write its CSV.
    Run(RunArgs),
    /// Replication study with aggregate tables.
    Bench(BenchArgs),
    /// Convergence checks; exits 0 only if every selected check passes.
    Check(CheckArgs),
    /// Monte Carlo validation of the power-one test.
    Powerone(PoweroneArgs),
    /// Error against queries spent, PBA next to stochastic approximation.
    Compare(CompareArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SamplerArg {
    Direct,
    SkipAhead,
}

impl From<SamplerArg> for StepSampler {
    fn from(s: SamplerArg) -> Self {
        match s {
            SamplerArg::Direct => StepSampler::Direct,
            SamplerArg::SkipAhead => StepSampler::SkipAhead,
        }
    }
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum AlgorithmArg {
    PbaExtended,
    PbaClassical,
    Sa,
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    Thm1,
    Prop1,
    Prop2,
    Thm3,
    All,
}

#[derive(Args, Clone)]
struct SolverArgs {
    /// Problem spec, e.g. "shape=linear,c=1,root=0.3;noise=gaussian,sigma=1".
    #[arg(long)]
    problem: Option<String>,
    #[arg(long, default_value_t = solver::DEFAULT_GAMMA)]
    gamma: f64,
    #[arg(long, default_value_t = 0.7)]
    update_p: f64,
    #[arg(long)]
    macro_iters: Option<usize>,
    /// Total evaluation budget across all tests.
    #[arg(long)]
    max_queries: Option<u64>,
    /// Evaluation cap for a single test.
    #[arg(long)]
    max_test_steps: Option<u64>,
    #[arg(long, value_enum, default_value_t = SamplerArg::SkipAhead)]
    sampler: SamplerArg,
    #[arg(long, value_enum, default_value_t = AlgorithmArg::PbaExtended)]
    algorithm: AlgorithmArg,
    /// Signal accuracy for the classical algorithm.
    #[arg(long, default_value_t = 0.8)]
    oracle_p: f64,
    #[arg(long, default_value_t = 0.1)]
    estimator_epsilon: f64,
}

impl SolverArgs {
    fn problem(&self, default: &str) -> Result<ProblemSpec, String> {
        self.problem
            .as_deref()
            .unwrap_or(default)
            .parse()
            .map_err(|e| format!("--problem: {e}"))
    }

    fn config(&self, macro_iters: usize, max_test_steps: u64, seed: u64) -> SolverConfig {
        SolverConfig {
            gamma: self.gamma,
            update_p: self.update_p,
            macro_iters: self.macro_iters.unwrap_or(macro_iters),
            max_total_queries: self.max_queries.unwrap_or(u64::MAX),
            max_test_steps: self.max_test_steps.unwrap_or(max_test_steps),
            renorm_every: solver::DEFAULT_RENORM_EVERY,
            seed,
            sampler: self.sampler.into(),
        }
    }

    fn algorithm(&self) -> Algorithm {
        match self.algorithm {
            AlgorithmArg::PbaExtended => Algorithm::PbaExtended,
            AlgorithmArg::PbaClassical => Algorithm::PbaClassical {
                oracle_p: self.oracle_p,
            },
            AlgorithmArg::Sa => Algorithm::Sa,
        }
    }
}

#[derive(Args, Clone)]
struct SaArgs {
    /// SA gain numerator (default: 2/c for linear shapes, else 2).
    #[arg(long)]
    sa_a: Option<f64>,
    #[arg(long, default_value_t = 100_000)]
    sa_iters: u64,
    #[arg(long, default_value_t = 0.5)]
    sa_x0: f64,
}

impl SaArgs {
    fn settings(&self) -> SaSettings {
        SaSettings {
            a: self.sa_a,
            x0: self.sa_x0,
            iters: self.sa_iters,
        }
    }
}

#[derive(Args, Clone)]
struct ReplicationArgs {
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long, default_value_t = 0)]
    base_seed: u64,
    /// Draw the root uniformly from (0.05, 0.95) per replication.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    randomize_root: bool,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    sa: SaArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    sa: SaArgs,
    #[command(flatten)]
    rep: ReplicationArgs,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long, value_enum, default_value_t = Which::All)]
    which: Which,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    rep: ReplicationArgs,
}

#[derive(Args)]
struct PoweroneArgs {
    #[arg(long, default_value_t = solver::DEFAULT_GAMMA)]
    gamma: f64,
    /// Probability of a +1 step; 0.5 is zero drift.
    #[arg(long, default_value_t = 0.5)]
    drift_p: f64,
    #[arg(long, default_value_t = 2000)]
    reps: usize,
    #[arg(long, default_value_t = 100_000)]
    max_steps: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = SamplerArg::SkipAhead)]
    sampler: SamplerArg,
    /// Per-replication outcomes CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    sa: SaArgs,
    #[command(flatten)]
    rep: ReplicationArgs,
}

fn write_file(path: &Path, contents: &str) -> Result<(), String> {
    fs::write(path, contents).map_err(|e| format!("writing {}: {e}", path.display()))
}

fn ensure_dir(dir: &Path) -> Result<(), String> {
    fs::create_dir_all(dir).map_err(|e| format!("creating {}: {e}", dir.display()))
}

fn experiment(
    solver: &SolverArgs,
    sa: &SaArgs,
    rep: &ReplicationArgs,
    default_reps: usize,
) -> Result<ExperimentSpec, String> {
    let mut spec = ExperimentSpec::new(solver.problem(LINEAR_PROBLEM)?, solver.algorithm());
    spec.solver = solver.config(100, solver::DEFAULT_MAX_TEST_STEPS, 0);
    spec.sa = sa.settings();
    spec.reps = rep.reps.unwrap_or(default_reps);
    spec.base_seed = rep.base_seed;
    spec.randomize_root = rep.randomize_root;
    spec.epsilon = solver.estimator_epsilon;
    Ok(spec)
}

fn cmd_run(args: &RunArgs) -> Result<ExitCode, String> {
    let spec = args
        .solver
        .problem("shape=linear,c=1,root=0.3;noise=gaussian,sigma=1")?;
    let problem = spec
        .build()
        .map_err(|e| format!("--problem: {e} (add root=<x>)"))?;
    let cfg = args
        .solver
        .config(100, solver::DEFAULT_MAX_TEST_STEPS, args.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let (csv, note) = match args.solver.algorithm() {
        Algorithm::Sa => {
            let sa = SaConfig {
                a: args
                    .sa
                    .sa_a
                    .unwrap_or_else(|| SaConfig::default_gain(&problem)),
                x0: args.sa.sa_x0,
                iters: args.sa.sa_iters,
                seed: args.seed,
            };
            let path = baseline::run_sa(&problem, &sa, &mut rng).map_err(|e| e.to_string())?;
            (baseline::path_csv(&path, problem.root()), None)
        }
        Algorithm::PbaExtended => {
            let trace =
                solver::run_extended(&problem, &cfg, &mut rng).map_err(|e| e.to_string())?;
            let csv = trace
                .to_csv(problem.root(), args.solver.estimator_epsilon)
                .map_err(|e| e.to_string())?;
            (csv, trace.stall.map(|s| format!("stalled: {s:?}")))
        }
        Algorithm::PbaClassical { oracle_p } => {
            let oracle =
                ConstantPOracle::new(problem.root(), oracle_p).map_err(|e| e.to_string())?;
            let trace =
                solver::run_classical_with(&oracle, &cfg, &mut rng).map_err(|e| e.to_string())?;
            let csv = trace
                .to_csv(problem.root(), args.solver.estimator_epsilon)
                .map_err(|e| e.to_string())?;
            (csv, None)
        }
    };
    match &args.out {
        Some(path) => write_file(path, &csv)?,
        None => print!("{csv}"),
    }
    if let Some(note) = note {
        eprintln!("{note}");
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_bench(args: &BenchArgs) -> Result<ExitCode, String> {
    let spec = experiment(&args.solver, &args.sa, &args.rep, 20)?;
    let out = harness::run_replications(&spec).map_err(|e| e.to_string())?;
    ensure_dir(&args.rep.out_dir)?;
    write_file(&args.rep.out_dir.join("aggregate.csv"), &out.table.to_csv())?;
    write_file(
        &args.rep.out_dir.join("reps.csv"),
        &harness::reps_csv(&out.reps),
    )?;
    let text = report::bench_report(&spec, &out);
    write_file(&args.rep.out_dir.join("report.txt"), &text)?;
    print!("{text}");
    Ok(ExitCode::SUCCESS)
}

fn check_spec(
    args: &CheckArgs,
    default_problem: &str,
    iters: usize,
    reps: usize,
) -> Result<ExperimentSpec, String> {
    let mut spec = ExperimentSpec::new(
        args.solver.problem(default_problem)?,
        Algorithm::PbaExtended,
    );
    spec.solver = args.solver.config(iters, CHECK_MAX_TEST_STEPS, 0);
    spec.reps = args.rep.reps.unwrap_or(reps);
    spec.base_seed = args.rep.base_seed;
    spec.randomize_root = args.rep.randomize_root;
    spec.epsilon = args.solver.estimator_epsilon;
    Ok(spec)
}

fn verdict_line(name: &str, result: Result<CheckReport, HarnessError>) -> (bool, String) {
    match result {
        Ok(r) => (r.verdict == Verdict::Pass, r.to_string()),
        Err(e) => (false, format!("FAIL {name}: {e}")),
    }
}

fn cmd_check(args: &CheckArgs) -> Result<ExitCode, String> {
    let which = |w: Which| {
        matches!(args.which, Which::All)
            || std::mem::discriminant(&args.which) == std::mem::discriminant(&w)
    };
    let horizon = *DEFAULT_CHECKPOINTS.last().unwrap();
    let mut text = checks::thresholds_header();
    let mut all_pass = true;
    let mut record = |spec: &ExperimentSpec, name: &str, result| {
        let (ok, line) = verdict_line(name, result);
        all_pass &= ok;
        text += &report::spec_header(spec);
        let _ = writeln!(text, "{line}");
        println!("{line}");
    };
    if which(Which::Thm1) {
        let spec = check_spec(args, LINEAR_PROBLEM, horizon, 20)?;
        record(&spec, "thm1", checks::check_theorem1(&spec));
    }
    if which(Which::Prop1) {
        let spec = check_spec(args, STEP_PROBLEM, 60, 20)?;
        record(&spec, "prop1", checks::check_prop1(&spec));
    }
    if which(Which::Prop2) {
        let spec = check_spec(args, LINEAR_PROBLEM, horizon, 50)?;
        record(
            &spec,
            "prop2",
            checks::check_prop2(&spec, &DEFAULT_CHECKPOINTS),
        );
    }
    if which(Which::Thm3) {
        let spec = check_spec(args, LINEAR_PROBLEM, horizon, 50)?;
        record(
            &spec,
            "thm3",
            checks::check_theorem3(&spec, args.solver.estimator_epsilon, &DEFAULT_CHECKPOINTS),
        );
    }
    ensure_dir(&args.rep.out_dir)?;
    write_file(&args.rep.out_dir.join("report.txt"), &text)?;
    Ok(if all_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn cmd_powerone(args: &PoweroneArgs) -> Result<ExitCode, String> {
    let outcomes = sequential_test::simulate_outcomes(
        args.drift_p,
        args.gamma,
        args.reps,
        args.max_steps,
        args.seed,
        args.sampler.into(),
    )
    .map_err(|e| e.to_string())?;
    let est = sequential_test::summarize(&outcomes);
    let n = est.reps as f64;
    let sd = (args.gamma * (1.0 - args.gamma) / n).sqrt();
    println!(
        "gamma={} drift_p={} reps={} max_steps={} seed={}",
        args.gamma, args.drift_p, args.reps, args.max_steps, args.seed
    );
    println!("first possible stop: m={}", first_stop(args.gamma));
    println!("stop_fraction={:.6}", est.stop_fraction);
    println!("wrong_sign_fraction={:.6}", est.wrong_sign_fraction);
    println!("gamma + 3 sd = {:.6}", args.gamma + 3.0 * sd);
    if let Some(path) = &args.out {
        let mut csv = String::from("rep,decision,runlength,final_sum\n");
        for (i, o) in outcomes.iter().enumerate() {
            let d = o.decision.map_or(0, |s| s.as_i8());
            let _ = writeln!(csv, "{i},{d},{},{}", o.runlength, o.final_sum);
        }
        write_file(path, &csv)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn first_stop(gamma: f64) -> u64 {
    (1..10_000)
        .find(|&m| boundary_value(m, gamma).is_ok_and(|k| m as f64 >= k))
        .unwrap_or(0)
}

fn cmd_compare(args: &CompareArgs) -> Result<ExitCode, String> {
    let mut pba = experiment(&args.solver, &args.sa, &args.rep, 20)?;
    if matches!(pba.algorithm, Algorithm::Sa) {
        pba.algorithm = Algorithm::PbaExtended;
    }
    pba.solver.macro_iters = args.solver.macro_iters.unwrap_or(1_000_000);
    pba.solver.max_total_queries = args.solver.max_queries.unwrap_or(args.sa.sa_iters);
    let mut sa = pba;
    sa.algorithm = Algorithm::Sa;
    let cmp = harness::compare_sa(&pba, &sa).map_err(|e| e.to_string())?;
    ensure_dir(&args.rep.out_dir)?;
    write_file(&args.rep.out_dir.join("compare.csv"), &cmp.to_csv())?;
    let text = format!("{}{}", report::spec_header(&pba), cmp.summary());
    write_file(&args.rep.out_dir.join("report.txt"), &text)?;
    print!("{text}");
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Check(a) => cmd_check(a),
        Command::Powerone(a) => cmd_powerone(a),
        Command::Compare(a) => cmd_compare(a),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::from(2)
    })
}
