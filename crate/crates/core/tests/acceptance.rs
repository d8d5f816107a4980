//! Acceptance suite: one PASS/FAIL line per criterion, then a nonzero exit if any failed.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use common::DenseGrid;
use pba::harness::checks::{self, CheckReport, Verdict, DEFAULT_CHECKPOINTS};
use pba::harness::compare::sa_rate;
use pba::harness::{run_reps, Algorithm, ExperimentSpec, HarnessError};
use pba::sequential_test::{estimate_error_probability, run_test};
use pba::{BeliefDensity, ProblemSpec, Sign, StepSampler, TestBoundary};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LINEAR: &str = "shape=linear,c=1;noise=gaussian,sigma=1";
const STEP: &str = "shape=step,h=1;noise=gaussian,sigma=1";
/// Per-test cap for the convergence checks; large enough that the exact
/// skip-ahead sampler, not the cap, decides how deep a run can go in budget.
const CHECK_CAP: u64 = 1_000_000_000_000;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, limit_s: u64) -> bool {
    elapsed.as_secs_f64() < limit_s as f64
}

// 1. Belief exactness against a dense grid, plus hand-derived values.
fn belief_exactness() -> Outcome {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
    let h = |b: &BeliefDensity| b.log_heights().iter().map(|l| l.exp()).collect::<Vec<_>>();
    let d1 = BeliefDensity::uniform()
        .update(0.5, Sign::Plus, 0.6)
        .unwrap();
    let d2 = d1.update(d1.median(), Sign::Minus, 0.6).unwrap();
    let (h1, h2) = (h(&d1), h(&d2));
    let hand = close(h1[0], 0.8)
        && close(h1[1], 1.2)
        && close(h2[0], 0.96)
        && close(h2[1], 1.44)
        && close(h2[2], 0.96)
        && close(d1.median(), 7.0 / 12.0)
        && close(d2.median(), 0.5 + 0.02 / 1.44)
        && (d2.median() - 0.5138889).abs() < 5e-8;

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    let mut sequences = 0;
    for p in [0.6, 0.7, 0.9] {
        for _ in 0..40 {
            let len = rng.random_range(0..=8);
            let mut belief = BeliefDensity::uniform();
            let mut grid = DenseGrid::uniform(100_000);
            for _ in 0..len {
                let x = rng.random_range(1..32u32) as f64 / 32.0;
                let z = if rng.random_bool(0.5) {
                    Sign::Plus
                } else {
                    Sign::Minus
                };
                belief.apply_update(x, z, p).unwrap();
                grid.update(x, z, p);
            }
            let mass = belief.total_mass();
            for j in (0..100_000).step_by(250) {
                let ours = belief.density_at(grid.bin_mid(j)) / mass;
                worst = worst.max((ours - grid.normalized(j)).abs());
            }
            worst = worst.max((belief.median() - grid.median()).abs());
            sequences += 1;
        }
    }
    outcome(
        hand && worst < 1e-9,
        format!("hand examples exact={hand}; {sequences} dyadic sequences, max deviation {worst:.2e} (tol 1e-9)"),
    )
}

// 2. Zero-drift stopping probability bounded by gamma.
fn power_one_bound() -> Outcome {
    let est =
        estimate_error_probability(0.5, 0.2, 2000, 100_000, 0, StepSampler::SkipAhead).unwrap();
    outcome(
        est.stop_fraction <= 0.227,
        format!("stop fraction {:.4} (limit 0.227)", est.stop_fraction),
    )
}

// 3. Wrong-sign bound under drift and the deterministic stopping time.
fn power_one_correctness() -> Outcome {
    let est =
        estimate_error_probability(0.6, 0.2, 2000, 100_000, 0, StepSampler::SkipAhead).unwrap();
    let b = TestBoundary::new(0.2, 1000).unwrap();
    let all_plus = run_test(std::iter::repeat(1i8), &b).unwrap();
    let ok = est.wrong_sign_fraction <= 0.120
        && est.stop_fraction >= 0.999
        && all_plus.runlength == 8
        && all_plus.decision == Some(Sign::Plus);
    outcome(
        ok,
        format!(
            "wrong sign {:.4} (limit 0.120), stop fraction {:.4} (min 0.999), all-plus stream stops at N={}",
            est.wrong_sign_fraction, est.stop_fraction, all_plus.runlength
        ),
    )
}

fn check_spec(problem: &str, reps: usize, macro_iters: usize) -> ExperimentSpec {
    let mut spec = ExperimentSpec::new(
        problem.parse::<ProblemSpec>().unwrap(),
        Algorithm::PbaExtended,
    );
    spec.reps = reps;
    spec.solver.gamma = 0.2;
    spec.solver.update_p = 0.7;
    spec.solver.macro_iters = macro_iters;
    spec.solver.max_test_steps = CHECK_CAP;
    spec
}

/// How far the replications got before stalling, for failed checks.
fn depth_profile(spec: &ExperimentSpec) -> String {
    let reps = run_reps(spec).unwrap();
    let mut depth: Vec<usize> = reps
        .iter()
        .map(|r| r.trace().unwrap().records.len())
        .collect();
    depth.sort_unstable();
    let mut spent: Vec<u64> = reps
        .iter()
        .map(|r| r.trace().unwrap().total_queries())
        .collect();
    spent.sort_unstable();
    let mut err: Vec<f64> = reps
        .iter()
        .filter_map(|r| {
            r.trace()
                .unwrap()
                .records
                .last()
                .map(|l| (l.x - r.root).abs())
        })
        .collect();
    err.sort_by(f64::total_cmp);
    format!(
        "records reached min/median/max {}/{}/{}, median evaluations {:.2e}, median final error {:.2e}",
        depth[0],
        depth[depth.len() / 2],
        depth[depth.len() - 1],
        spent[spent.len() / 2] as f64,
        err.get(err.len() / 2).copied().unwrap_or(f64::NAN)
    )
}

fn judge(
    result: Result<CheckReport, HarnessError>,
    spec: &ExperimentSpec,
    elapsed: Duration,
    limit_s: u64,
) -> Outcome {
    let timing = format!("{:.1}s (limit {limit_s}s)", elapsed.as_secs_f64());
    match result {
        Ok(r) => outcome(
            r.verdict == Verdict::Pass && within(elapsed, limit_s),
            format!("{r}; {timing}"),
        ),
        Err(e) => {
            let extra = match e {
                HarnessError::InsufficientReps { .. } => format!("; {}", depth_profile(spec)),
                _ => String::new(),
            };
            outcome(false, format!("{e}{extra}; {timing}"))
        }
    }
}

// 4. Exponential decay in macro time on the linear problem.
fn macro_time_rate() -> Outcome {
    let spec = check_spec(LINEAR, 20, 200);
    let t = Instant::now();
    let r = checks::check_theorem1(&spec);
    judge(r, &spec, t.elapsed(), 600)
}

// 5. Exponential decay in wall-clock time on the step problem.
fn wall_clock_rate() -> Outcome {
    let spec = check_spec(STEP, 20, 60);
    let t = Instant::now();
    let r = checks::check_prop1(&spec);
    judge(r, &spec, t.elapsed(), 300)
}

// 6. Square-root normalized error grows.
fn non_tightness() -> Outcome {
    let spec = check_spec(LINEAR, 50, 200);
    let t = Instant::now();
    let r = checks::check_prop2(&spec, &DEFAULT_CHECKPOINTS);
    judge(r, &spec, t.elapsed(), 900)
}

// 7. Weighted estimator error at the slower normalization stays bounded.
fn weighted_tightness() -> Outcome {
    let spec = check_spec(LINEAR, 50, 200);
    let t = Instant::now();
    let r = checks::check_theorem3(&spec, 0.1, &DEFAULT_CHECKPOINTS);
    judge(r, &spec, t.elapsed(), 900)
}

// 8. Stochastic approximation decays at the square-root rate.
fn sa_rate_criterion() -> Outcome {
    let mut spec = ExperimentSpec::new(LINEAR.parse().unwrap(), Algorithm::Sa);
    spec.reps = 50;
    spec.sa.a = Some(2.0);
    spec.sa.iters = 100_000;
    let t = Instant::now();
    let fit = sa_rate(&spec, 100, 100_000).unwrap();
    let elapsed = t.elapsed();
    outcome(
        (-0.6..=-0.4).contains(&fit.slope) && within(elapsed, 120),
        format!(
            "log-log slope {:.4} (band [-0.6, -0.4]), r2 {:.4}, {} points; {:.1}s (limit 120s)",
            fit.slope,
            fit.r_squared,
            fit.n_points,
            elapsed.as_secs_f64()
        ),
    )
}

/// Runs the CLI in `dir` and returns stdout followed by every output file, sorted by name.
fn cli_output(dir: &Path, threads: &str, args: &[&str]) -> Vec<u8> {
    std::fs::create_dir_all(dir).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_pba"))
        .current_dir(dir)
        .arg("--threads")
        .arg(threads)
        .args(args)
        .output()
        .unwrap();
    let mut bytes = out.stdout;
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    for f in files {
        bytes.extend_from_slice(f.file_name().unwrap().to_string_lossy().as_bytes());
        bytes.extend(std::fs::read(&f).unwrap());
    }
    bytes.extend(out.status.code().unwrap_or(-1).to_le_bytes());
    bytes
}

// 9. Byte-identical CLI output across runs and thread counts.
fn determinism() -> Outcome {
    let commands: [&[&str]; 6] = [
        &[
            "run",
            "--seed",
            "5",
            "--macro-iters",
            "12",
            "--out",
            "trace.csv",
        ],
        &[
            "run",
            "--seed",
            "5",
            "--algorithm",
            "sa",
            "--sa-iters",
            "5000",
            "--out",
            "sa.csv",
        ],
        &[
            "bench",
            "--reps",
            "6",
            "--macro-iters",
            "15",
            "--base-seed",
            "3",
        ],
        &[
            "check",
            "--which",
            "prop1",
            "--reps",
            "4",
            "--base-seed",
            "9",
        ],
        &[
            "powerone",
            "--reps",
            "300",
            "--seed",
            "2",
            "--out",
            "outcomes.csv",
        ],
        &[
            "compare",
            "--reps",
            "4",
            "--sa-iters",
            "20000",
            "--base-seed",
            "1",
        ],
    ];
    let root = tempfile::tempdir().unwrap();
    let mut mismatches = Vec::new();
    for (i, args) in commands.iter().enumerate() {
        let a = cli_output(&root.path().join(format!("{i}a")), "1", args);
        let b = cli_output(&root.path().join(format!("{i}b")), "1", args);
        let c = cli_output(&root.path().join(format!("{i}c")), "4", args);
        if a.len() < 16 || a != b || a != c {
            mismatches.push(args[0]);
        }
    }
    outcome(
        mismatches.is_empty(),
        format!(
            "{} commands, run twice and at 1 vs 4 threads; mismatched: {mismatches:?}",
            commands.len()
        ),
    )
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("belief exactness", belief_exactness),
        ("power-one zero-drift bound", power_one_bound),
        ("power-one correctness", power_one_correctness),
        ("exponential rate in macro time", macro_time_rate),
        (
            "exponential rate in wall-clock time (step)",
            wall_clock_rate,
        ),
        ("square-root normalization not tight", non_tightness),
        ("weighted estimator tightness", weighted_tightness),
        ("stochastic approximation rate", sa_rate_criterion),
        ("CLI determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {} [{tag}] {name}: {}", i + 1, o.detail);
        failed += usize::from(!o.pass);
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
