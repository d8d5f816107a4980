//! Plain-text summaries written next to the CSV outputs.

use std::fmt::Write as _;

use super::checks::{thresholds_header, BURN_IN};
use super::compare::FIT_FROM;
use super::{fit_log_rate, Algorithm, ExperimentSpec, Replications};

/// Describes the experiment; never includes timings or host details.
pub fn spec_header(spec: &ExperimentSpec) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# problem: {}", spec.problem);
    let _ = writeln!(s, "# algorithm: {}", spec.algorithm.name());
    match spec.algorithm {
        Algorithm::Sa => {
            let a = spec
                .sa
                .a
                .map_or_else(|| "auto".to_string(), |a| a.to_string());
            let _ = writeln!(s, "# sa: a={a} x0={} iters={}", spec.sa.x0, spec.sa.iters);
        }
        Algorithm::PbaClassical { oracle_p } => {
            let _ = writeln!(
                s,
                "# solver: oracle_p={oracle_p} update_p={} macro_iters={}",
                spec.solver.update_p, spec.solver.macro_iters
            );
        }
        Algorithm::PbaExtended => {
            let c = &spec.solver;
            let budget = if c.max_total_queries == u64::MAX {
                "none".to_string()
            } else {
                c.max_total_queries.to_string()
            };
            let _ = writeln!(
                s,
                "# solver: gamma={} update_p={} macro_iters={} max_test_steps={} max_queries={budget} sampler={:?}",
                c.gamma, c.update_p, c.macro_iters, c.max_test_steps, c.sampler
            );
        }
    }
    let _ = writeln!(
        s,
        "# reps={} base_seed={} randomize_root={} epsilon={}",
        spec.reps, spec.base_seed, spec.randomize_root, spec.epsilon
    );
    s
}

/// Report for a replication study: stall counts and a rate fit over rows every replication reached.
pub fn bench_report(spec: &ExperimentSpec, out: &Replications) -> String {
    let mut s = thresholds_header();
    s += &spec_header(spec);
    let total = out.reps.len();
    let _ = writeln!(
        s,
        "stalled replications: {} of {total}",
        out.stalled_count()
    );
    let full: Vec<_> = out.table.rows.iter().filter(|r| r.reps == total).collect();
    let (label, lo, log_x) = match spec.algorithm {
        Algorithm::Sa => ("ln geo-mean error vs ln t", FIT_FROM, true),
        _ => ("ln geo-mean error vs n", BURN_IN as u64, false),
    };
    let rows: Vec<_> = full.iter().filter(|r| r.index >= lo).collect();
    let xs: Vec<f64> = rows.iter().map(|r| r.index as f64).collect();
    let ys: Vec<f64> = rows
        .iter()
        .map(|r| if r.err.geo.is_nan() { 0.0 } else { r.err.geo })
        .collect();
    match fit_log_rate(&xs, &ys, log_x) {
        Ok(f) => {
            let _ = writeln!(
                s,
                "fit {label} (index >= {lo}, all reps present): slope={:.6e} intercept={:.6e} r2={:.4} points={} zeros={}",
                f.slope, f.intercept, f.r_squared, f.n_points, f.dropped_zeros
            );
        }
        Err(e) => {
            let _ = writeln!(
                s,
                "fit {label} (index >= {lo}, all reps present): unavailable ({e})"
            );
        }
    }
    if let Some(last) = full.last() {
        let _ = writeln!(
            s,
            "deepest common index {}: geo-mean error {:.6e}",
            last.index, last.err.geo
        );
    }
    s
}
