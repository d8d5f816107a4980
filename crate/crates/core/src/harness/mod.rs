//! Seeded replication studies, rate regressions and convergence checks.
//!
//! Replication `i` owns a ChaCha8 generator seeded with `base_seed + i`; when
//! the root is randomized it is the first draw of that generator. Results are
//! merged in replication order, so every table is independent of how rayon
//! schedules the work.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::baseline::{self, SaConfig, SaError};
use crate::oracle::{ConstantPOracle, ProblemError, ProblemSpec, Shape};
use crate::solver::{self, SolverConfig, SolverError, SolverTrace, StallReason};

pub mod checks;
pub mod compare;
pub mod rate;
pub mod report;

pub use checks::{check_prop1, check_prop2, check_theorem1, check_theorem3, CheckReport};
pub use compare::{compare_sa, Comparison};
pub use rate::{fit_log_rate, RateFit};

/// Randomized roots are drawn from `Uniform(ROOT_RANGE)`.
pub const ROOT_RANGE: (f64, f64) = (0.05, 0.95);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error("input lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("invalid {0} value {1}")]
    BadValue(&'static str, f64),
    #[error("need at least 3 usable points for a rate fit, got {0}")]
    TooFewPoints(usize),
    #[error("all abscissae are equal")]
    DegenerateAbscissa,
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Sa(#[from] SaError),
    #[error("at least one replication is required")]
    NoReps,
    #[error("{check} requires a {expected} problem")]
    Hypothesis {
        check: &'static str,
        expected: &'static str,
    },
    #[error("{check} needs the {algorithm} algorithm")]
    Algorithm {
        check: &'static str,
        algorithm: &'static str,
    },
    #[error(
        "only {completed} of {required} replications reached macro iteration {horizon} without stalling \
         (deepest common iteration: {common})"
    )]
    InsufficientReps {
        completed: usize,
        required: usize,
        horizon: usize,
        /// Largest `n` such that every replication has record `n`, if any.
        common: usize,
    },
    #[error("invalid checkpoints: {0}")]
    Checkpoints(String),
    #[error("epsilon {0} must lie in (0, 1/2)")]
    Epsilon(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Algorithm {
    /// Classical bisection against a constant-probability oracle at the problem's root.
    PbaClassical {
        oracle_p: f64,
    },
    PbaExtended,
    Sa,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::PbaClassical { .. } => "pba_classical",
            Algorithm::PbaExtended => "pba_extended",
            Algorithm::Sa => "sa",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaSettings {
    /// Gain numerator; `None` picks `2/c` (linear shapes) or `2`.
    pub a: Option<f64>,
    pub x0: f64,
    pub iters: u64,
}

impl Default for SaSettings {
    fn default() -> Self {
        Self {
            a: None,
            x0: 0.5,
            iters: 100_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentSpec {
    pub problem: ProblemSpec,
    pub algorithm: Algorithm,
    /// Solver settings; the seed field is replaced per replication.
    pub solver: SolverConfig,
    pub sa: SaSettings,
    pub reps: usize,
    pub base_seed: u64,
    pub randomize_root: bool,
    /// Exponent for the weighted-average estimator in tables.
    pub epsilon: f64,
}

impl ExperimentSpec {
    pub fn new(problem: ProblemSpec, algorithm: Algorithm) -> Self {
        Self {
            problem,
            algorithm,
            solver: SolverConfig::default(),
            sa: SaSettings::default(),
            reps: 20,
            base_seed: 0,
            randomize_root: true,
            epsilon: 0.1,
        }
    }

    pub fn rep_seed(&self, rep: usize) -> u64 {
        self.base_seed.wrapping_add(rep as u64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RepOutcome {
    Pba(SolverTrace),
    /// `(t, x_t)` on the thinned grid from [`query_grid`].
    Sa(Vec<(u64, f64)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepResult {
    pub rep: usize,
    pub seed: u64,
    pub root: f64,
    pub outcome: RepOutcome,
}

impl RepResult {
    pub fn trace(&self) -> Option<&SolverTrace> {
        match &self.outcome {
            RepOutcome::Pba(t) => Some(t),
            RepOutcome::Sa(_) => None,
        }
    }

    pub fn stalled(&self) -> bool {
        self.trace().is_some_and(|t| t.stalled)
    }
}

/// All integers up to 100, then about `per_decade` log-spaced integers per decade, ending at `max`.
pub fn query_grid(max: u64, per_decade: u32) -> Vec<u64> {
    let mut grid: Vec<u64> = (1..=max.min(100)).collect();
    if max > 100 {
        let step = 10f64.powf(1.0 / per_decade as f64);
        let mut v = 100.0 * step;
        while v < max as f64 {
            let t = v.round() as u64;
            if t > *grid.last().unwrap() {
                grid.push(t);
            }
            v *= step;
        }
        if max > *grid.last().unwrap() {
            grid.push(max);
        }
    }
    grid
}

fn run_one(spec: &ExperimentSpec, rep: usize) -> Result<RepResult, HarnessError> {
    let seed = spec.rep_seed(rep);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let root = if spec.randomize_root {
        rng.random_range(ROOT_RANGE.0..ROOT_RANGE.1)
    } else {
        spec.problem.root.ok_or(ProblemError::MissingRoot)?
    };
    let cfg = SolverConfig {
        seed,
        ..spec.solver
    };
    let outcome = match spec.algorithm {
        Algorithm::PbaExtended => {
            let problem = spec.problem.with_root(root)?;
            RepOutcome::Pba(solver::run_extended(&problem, &cfg, &mut rng)?)
        }
        Algorithm::PbaClassical { oracle_p } => {
            let oracle = ConstantPOracle::new(root, oracle_p)?;
            RepOutcome::Pba(solver::run_classical_with(&oracle, &cfg, &mut rng)?)
        }
        Algorithm::Sa => {
            let problem = spec.problem.with_root(root)?;
            let sa = SaConfig {
                a: spec
                    .sa
                    .a
                    .unwrap_or_else(|| SaConfig::default_gain(&problem)),
                x0: spec.sa.x0,
                iters: spec.sa.iters,
                seed,
            };
            let path = baseline::run_sa(&problem, &sa, &mut rng)?;
            let grid = query_grid(spec.sa.iters, 20);
            RepOutcome::Sa(grid.iter().map(|&t| path[t as usize]).collect())
        }
    };
    Ok(RepResult {
        rep,
        seed,
        root,
        outcome,
    })
}

/// Runs every replication (in parallel) and returns them in replication order.
pub fn run_reps(spec: &ExperimentSpec) -> Result<Vec<RepResult>, HarnessError> {
    if spec.reps == 0 {
        return Err(HarnessError::NoReps);
    }
    (0..spec.reps)
        .into_par_iter()
        .map(|rep| run_one(spec, rep))
        .collect()
}

/// Geometric mean of the positive entries, arithmetic mean of all, and the zero count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorSummary {
    pub geo: f64,
    pub mean: f64,
    pub zeros: usize,
}

pub fn summarize_errors(errs: &[f64]) -> ErrorSummary {
    let positive: Vec<f64> = errs.iter().copied().filter(|&e| e > 0.0).collect();
    let geo = if positive.is_empty() {
        f64::NAN
    } else {
        (positive.iter().map(|e| e.ln()).sum::<f64>() / positive.len() as f64).exp()
    };
    ErrorSummary {
        geo,
        mean: errs.iter().sum::<f64>() / errs.len() as f64,
        zeros: errs.len() - positive.len(),
    }
}

/// One row of the per-`n` (PBA) or per-`t` (SA) aggregate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregateRow {
    /// Macro iteration `n` or query count `t`.
    pub index: u64,
    /// Replications contributing to this row.
    pub reps: usize,
    /// `|X_n - x*|` (PBA) or `|x_t - x*|` (SA).
    pub err: ErrorSummary,
    /// Weighted-average estimator over records `0..=n`.
    pub err_wavg: Option<ErrorSummary>,
    /// Runlength-average estimator over records `0..=n`.
    pub err_pavg: Option<ErrorSummary>,
    /// Mean of `T_n` across contributing replications.
    pub mean_t: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateTable {
    pub algorithm: Algorithm,
    pub rows: Vec<AggregateRow>,
}

pub fn aggregate(
    spec: &ExperimentSpec,
    reps: &[RepResult],
) -> Result<AggregateTable, HarnessError> {
    let rows = match spec.algorithm {
        Algorithm::Sa => aggregate_sa(reps),
        _ => aggregate_pba(reps, spec.epsilon)?,
    };
    Ok(AggregateTable {
        algorithm: spec.algorithm,
        rows,
    })
}

fn aggregate_pba(reps: &[RepResult], epsilon: f64) -> Result<Vec<AggregateRow>, HarnessError> {
    let mut per_rep = Vec::with_capacity(reps.len());
    for r in reps {
        if let Some(trace) = r.trace() {
            per_rep.push((r.root, trace, trace.prefix_estimates(epsilon)?));
        }
    }
    let depth = per_rep
        .iter()
        .map(|(_, t, _)| t.records.len())
        .max()
        .unwrap_or(0);
    let rows = (0..depth)
        .map(|n| {
            let live: Vec<_> = per_rep
                .iter()
                .filter(|(_, t, _)| t.records.len() > n)
                .collect();
            let errs = |f: &dyn Fn(f64, &SolverTrace, &[solver::Estimates]) -> f64| -> Vec<f64> {
                live.iter().map(|(root, t, e)| f(*root, t, e)).collect()
            };
            let err = errs(&|root, t, _| (t.records[n].x - root).abs());
            let wavg = errs(&|root, _, e| (e[n].weighted - root).abs());
            let pavg = errs(&|root, _, e| (e[n].perfect - root).abs());
            let mean_t = live
                .iter()
                .map(|(_, t, _)| t.records[n].total as f64)
                .sum::<f64>()
                / live.len() as f64;
            AggregateRow {
                index: n as u64,
                reps: live.len(),
                err: summarize_errors(&err),
                err_wavg: Some(summarize_errors(&wavg)),
                err_pavg: Some(summarize_errors(&pavg)),
                mean_t: Some(mean_t),
            }
        })
        .collect();
    Ok(rows)
}

fn aggregate_sa(reps: &[RepResult]) -> Vec<AggregateRow> {
    let paths: Vec<(f64, &Vec<(u64, f64)>)> = reps
        .iter()
        .filter_map(|r| match &r.outcome {
            RepOutcome::Sa(p) => Some((r.root, p)),
            RepOutcome::Pba(_) => None,
        })
        .collect();
    let Some((_, first)) = paths.first() else {
        return Vec::new();
    };
    (0..first.len())
        .map(|i| {
            let errs: Vec<f64> = paths
                .iter()
                .map(|(root, p)| (p[i].1 - root).abs())
                .collect();
            AggregateRow {
                index: first[i].0,
                reps: paths.len(),
                err: summarize_errors(&errs),
                err_wavg: None,
                err_pavg: None,
                mean_t: None,
            }
        })
        .collect()
}

impl AggregateTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        match self.algorithm {
            Algorithm::Sa => {
                out.push_str("t,reps,geo_err,mean_err,zeros\n");
                for r in &self.rows {
                    let _ = writeln!(
                        out,
                        "{},{},{:.16e},{:.16e},{}",
                        r.index, r.reps, r.err.geo, r.err.mean, r.err.zeros
                    );
                }
            }
            _ => {
                out.push_str("n,reps,geo_err_median,geo_err_wavg,geo_err_pavg,mean_err_median,mean_t_n,zeros\n");
                for r in &self.rows {
                    let nan = || f64::NAN;
                    let _ = writeln!(
                        out,
                        "{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
                        r.index,
                        r.reps,
                        r.err.geo,
                        r.err_wavg.map_or_else(nan, |s| s.geo),
                        r.err_pavg.map_or_else(nan, |s| s.geo),
                        r.err.mean,
                        r.mean_t.unwrap_or_else(nan),
                        r.err.zeros
                    );
                }
            }
        }
        out
    }
}

/// Per-replication summary CSV; stalled runs are flagged, never dropped.
pub fn reps_csv(reps: &[RepResult]) -> String {
    let mut out =
        String::from("rep,seed,root,records,stalled,stall_reason,total_queries,final_abs_err\n");
    for r in reps {
        let (records, stalled, reason, queries, last_x) = match &r.outcome {
            RepOutcome::Pba(t) => (
                t.records.len() as u64,
                t.stalled,
                match t.stall.map(|s| s.reason) {
                    Some(StallReason::TestCap) => "test_cap",
                    Some(StallReason::Budget) => "budget",
                    None => "",
                },
                t.total_queries(),
                t.records.last().map(|rec| rec.x),
            ),
            RepOutcome::Sa(p) => {
                let last = p.last().copied();
                let t = last.map_or(0, |l| l.0);
                (t, false, "", t, last.map(|l| l.1))
            }
        };
        let err = last_x.map_or(f64::NAN, |x| (x - r.root).abs());
        let _ = writeln!(
            out,
            "{},{},{:.16e},{},{},{},{},{:.16e}",
            r.rep, r.seed, r.root, records, stalled, reason, queries, err
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Replications {
    pub reps: Vec<RepResult>,
    pub table: AggregateTable,
}

impl Replications {
    pub fn stalled_count(&self) -> usize {
        self.reps.iter().filter(|r| r.stalled()).count()
    }
}

/// Runs the study and aggregates geometric-mean errors per `n` (or per `t`).
pub fn run_replications(spec: &ExperimentSpec) -> Result<Replications, HarnessError> {
    let reps = run_reps(spec)?;
    let table = aggregate(spec, &reps)?;
    Ok(Replications { reps, table })
}

pub(crate) fn require_shape(
    spec: &ExperimentSpec,
    check: &'static str,
    expected: &'static str,
    matches: fn(&Shape) -> bool,
) -> Result<(), HarnessError> {
    if matches(&spec.problem.shape) {
        Ok(())
    } else {
        Err(HarnessError::Hypothesis { check, expected })
    }
}

pub(crate) fn require_extended(
    spec: &ExperimentSpec,
    check: &'static str,
) -> Result<(), HarnessError> {
    if spec.algorithm == Algorithm::PbaExtended {
        Ok(())
    } else {
        Err(HarnessError::Algorithm {
            check,
            algorithm: "pba_extended",
        })
    }
}
