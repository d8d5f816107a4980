//! Robbins–Monro stochastic approximation on the same problems, one function
//! evaluation per iteration.

use std::fmt::Write as _;

use rand::Rng;
use thiserror::Error;

use crate::oracle::Problem;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SaError {
    #[error("gain numerator {0} must be finite and positive")]
    Gain(f64),
    #[error("start point {0} must lie in [0, 1]")]
    Start(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaConfig {
    /// Gain numerator: step `t` uses `a / (t + 1)`.
    pub a: f64,
    pub x0: f64,
    pub iters: u64,
    pub seed: u64,
}

impl SaConfig {
    /// `a = 2/c` for a linear shape with slope `c`, else `a = 2`.
    pub fn default_gain(problem: &Problem) -> f64 {
        problem.shape().slope().map_or(2.0, |c| 2.0 / c)
    }

    pub fn for_problem(problem: &Problem, iters: u64, seed: u64) -> Self {
        Self {
            a: Self::default_gain(problem),
            x0: 0.5,
            iters,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SaError> {
        if !(self.a.is_finite() && self.a > 0.0) {
            return Err(SaError::Gain(self.a));
        }
        if !(0.0..=1.0).contains(&self.x0) {
            return Err(SaError::Start(self.x0));
        }
        Ok(())
    }
}

/// `clamp(x + gain * y, 0, 1)`. Observations are positive left of the root,
/// so a positive `y` moves the iterate right.
pub fn sa_step(x: f64, y: f64, gain: f64) -> f64 {
    (x + gain * y).clamp(0.0, 1.0)
}

/// Iterates `x_{t+1} = sa_step(x_t, Y(x_t), a/(t+1))`; returns `(t, x_t)` for `t = 0..=iters`.
pub fn run_sa<R: Rng + ?Sized>(
    problem: &Problem,
    cfg: &SaConfig,
    rng: &mut R,
) -> Result<Vec<(u64, f64)>, SaError> {
    cfg.validate()?;
    let mut path = Vec::with_capacity(cfg.iters as usize + 1);
    let mut x = cfg.x0;
    path.push((0, x));
    for t in 0..cfg.iters {
        let y = problem.observe(x, rng);
        x = sa_step(x, y, cfg.a / (t + 1) as f64);
        path.push((t + 1, x));
    }
    Ok(path)
}

/// CSV `t,x_t,abs_err` at `t = 1, 2, 4, 8, ...`.
pub fn path_csv(path: &[(u64, f64)], root: f64) -> String {
    let mut out = String::from("t,x_t,abs_err\n");
    for &(t, x) in path.iter().filter(|(t, _)| t.is_power_of_two()) {
        let _ = writeln!(out, "{t},{x:.16e},{:.16e}", (x - root).abs());
    }
    out
}
