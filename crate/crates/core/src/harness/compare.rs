//! PBA against stochastic approximation on a shared query-count grid.

use std::fmt::Write as _;

use super::{
    fit_log_rate, query_grid, run_reps, summarize_errors, Algorithm, ExperimentSpec, HarnessError,
    RateFit, RepOutcome, RepResult,
};
use crate::oracle::Shape;
use crate::solver::{Estimates, SolverTrace};

/// Fits over the grid start at this many queries.
pub const FIT_FROM: u64 = 100;
/// Errors at or below this are double-precision resolution, not convergence, and are left out of fits.
pub const RESOLUTION_FLOOR: f64 = 1e-13;
/// Log-spaced grid density per decade.
pub const GRID_PER_DECADE: u32 = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompareRow {
    pub t: u64,
    /// PBA replications whose run covers `t` queries.
    pub pba_reps: usize,
    pub pba_median: f64,
    pub pba_weighted: f64,
    pub pba_perfect: f64,
    pub sa: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub rows: Vec<CompareRow>,
    /// `true` when fits regress on `ln t` (log-log), `false` for semilog (step shapes).
    pub log_x: bool,
    pub sa_fit: RateFit,
    pub pba_median_fit: RateFit,
    pub pba_weighted_fit: RateFit,
    pub epsilon: f64,
}

impl Comparison {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "t,pba_reps,pba_geo_err_median,pba_geo_err_wavg,pba_geo_err_pavg,sa_geo_err\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{:.16e},{:.16e},{:.16e},{:.16e}",
                r.t, r.pba_reps, r.pba_median, r.pba_weighted, r.pba_perfect, r.sa
            );
        }
        out
    }

    /// Row at the largest grid point not exceeding `t`.
    pub fn row_at(&self, t: u64) -> Option<&CompareRow> {
        self.rows.iter().take_while(|r| r.t <= t).last()
    }

    pub fn summary(&self) -> String {
        let axes = if self.log_x { "log-log" } else { "semilog" };
        let line = |name: &str, axes: &str, f: &RateFit| {
            format!(
                "{name} ({axes}, t >= {FIT_FROM}, err > {RESOLUTION_FLOOR:e}): slope={:.6e} r2={:.4} points={}\n",
                f.slope, f.r_squared, f.n_points
            )
        };
        let mut s = line("sa", "log-log", &self.sa_fit);
        s += &line("pba_median", axes, &self.pba_median_fit);
        s += &line(
            &format!("pba_wavg(eps={})", self.epsilon),
            axes,
            &self.pba_weighted_fit,
        );
        s
    }
}

/// Estimates in force after `t` queries (last observation carried forward), or `None`
/// once `t` exceeds the queries the run actually spent.
fn estimates_at(trace: &SolverTrace, prefix: &[Estimates], t: u64) -> Option<Estimates> {
    if t > trace.total_queries() {
        return None;
    }
    let done = trace.records.partition_point(|r| r.total <= t);
    Some(match done {
        0 => {
            let x = trace.records.first().map_or(trace.next_query(), |r| r.x);
            Estimates {
                median: x,
                weighted: x,
                perfect: x,
            }
        }
        k => prefix[k - 1],
    })
}

fn geo(errs: &[f64]) -> f64 {
    if errs.is_empty() {
        f64::NAN
    } else {
        summarize_errors(errs).geo
    }
}

fn fit_rows(
    rows: &[CompareRow],
    log_x: bool,
    pick: fn(&CompareRow) -> f64,
) -> Result<RateFit, HarnessError> {
    let usable: Vec<&CompareRow> = rows
        .iter()
        .filter(|r| r.t >= FIT_FROM && pick(r).is_finite() && pick(r) > RESOLUTION_FLOOR)
        .collect();
    let xs: Vec<f64> = usable.iter().map(|r| r.t as f64).collect();
    let ys: Vec<f64> = usable.iter().map(|r| pick(r)).collect();
    fit_log_rate(&xs, &ys, log_x)
}

/// Geometric-mean error against queries spent, PBA estimators versus SA.
///
/// Both specs must describe the same problem family. The grid ends at the SA
/// iteration count; PBA runs should use a matching query budget.
pub fn compare_sa(pba: &ExperimentSpec, sa: &ExperimentSpec) -> Result<Comparison, HarnessError> {
    if sa.algorithm != Algorithm::Sa || matches!(pba.algorithm, Algorithm::Sa) {
        return Err(HarnessError::Algorithm {
            check: "compare",
            algorithm: "one pba and one sa",
        });
    }
    if std::mem::discriminant(&pba.problem.shape) != std::mem::discriminant(&sa.problem.shape) {
        return Err(HarnessError::Hypothesis {
            check: "compare",
            expected: "common shape family",
        });
    }
    let pba_reps = run_reps(pba)?;
    let sa_reps = run_reps(sa)?;
    let grid = query_grid(sa.sa.iters, GRID_PER_DECADE);

    let mut pba_data: Vec<(f64, &SolverTrace, Vec<Estimates>)> = Vec::with_capacity(pba_reps.len());
    for r in &pba_reps {
        if let Some(t) = r.trace() {
            pba_data.push((r.root, t, t.prefix_estimates(pba.epsilon)?));
        }
    }
    let sa_paths: Vec<(f64, &Vec<(u64, f64)>)> = sa_reps
        .iter()
        .filter_map(|r: &RepResult| match &r.outcome {
            RepOutcome::Sa(p) => Some((r.root, p)),
            RepOutcome::Pba(_) => None,
        })
        .collect();

    let rows: Vec<CompareRow> = grid
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let (mut med, mut wav, mut pav) = (Vec::new(), Vec::new(), Vec::new());
            for (root, trace, prefix) in &pba_data {
                if let Some(e) = estimates_at(trace, prefix, t) {
                    med.push((e.median - root).abs());
                    wav.push((e.weighted - root).abs());
                    pav.push((e.perfect - root).abs());
                }
            }
            // SA paths are stored on this same grid.
            let sa_errs: Vec<f64> = sa_paths
                .iter()
                .map(|(root, p)| (p[i].1 - root).abs())
                .collect();
            CompareRow {
                t,
                pba_reps: med.len(),
                pba_median: geo(&med),
                pba_weighted: geo(&wav),
                pba_perfect: geo(&pav),
                sa: geo(&sa_errs),
            }
        })
        .collect();

    let log_x = !matches!(pba.problem.shape, Shape::Step { .. });
    Ok(Comparison {
        sa_fit: fit_rows(&rows, true, |r| r.sa)?,
        pba_median_fit: fit_rows(&rows, log_x, |r| r.pba_median)?,
        pba_weighted_fit: fit_rows(&rows, log_x, |r| r.pba_weighted)?,
        log_x,
        epsilon: pba.epsilon,
        rows,
    })
}

/// SA rate alone: log-log slope of geometric-mean error over `t` in `[lo, hi]`.
pub fn sa_rate(spec: &ExperimentSpec, lo: u64, hi: u64) -> Result<RateFit, HarnessError> {
    let out = super::run_replications(spec)?;
    let rows: Vec<_> = out
        .table
        .rows
        .iter()
        .filter(|r| r.index >= lo && r.index <= hi)
        .collect();
    let xs: Vec<f64> = rows.iter().map(|r| r.index as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.err.geo).collect();
    fit_log_rate(&xs, &ys, true)
}
