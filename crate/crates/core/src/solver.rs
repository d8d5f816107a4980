//! Probabilistic bisection drivers and root estimators.
//!
//! Two timescales are tracked: macro time `n` (one belief update per query
//! point) and wall-clock time `T_n`, the cumulative number of function
//! evaluations. The classical driver spends exactly one signal per macro
//! step; the extended driver runs a power-one test at each median and feeds
//! its decision to the update.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::belief::{BeliefDensity, BeliefError, MASS_TOLERANCE};
use crate::oracle::{ConstantPOracle, SignOracle};
use crate::sequential_test::{self, StepSampler, TestBoundary, TestError};
use crate::sign::Sign;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("update probability {p} must lie in (1/2, {upper})")]
    UpdateP { p: f64, upper: f64 },
    #[error("`{0}` must be at least 1")]
    Zero(&'static str),
    #[error(transparent)]
    Test(#[from] TestError),
    #[error(transparent)]
    Belief(#[from] BeliefError),
    #[error("belief mass drifted to {mass} after {updates} updates")]
    MassDrift { mass: f64, updates: u64 },
    #[error("estimator needs at least one completed record")]
    EmptyTrace,
    #[error("estimator exponent epsilon = {0} must lie in (0, 1/2]")]
    Epsilon(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Power-one confidence parameter (extended mode only).
    pub gamma: f64,
    /// Probability used in the bisection update.
    pub update_p: f64,
    pub macro_iters: usize,
    /// Cap on total function evaluations across the run.
    pub max_total_queries: u64,
    /// Per-test truncation.
    pub max_test_steps: u64,
    pub renorm_every: u64,
    pub seed: u64,
    pub sampler: StepSampler,
}

pub const DEFAULT_GAMMA: f64 = 0.2;
pub const DEFAULT_MAX_TEST_STEPS: u64 = 10_000_000;
pub const DEFAULT_RENORM_EVERY: u64 = 64;

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            gamma: DEFAULT_GAMMA,
            update_p: Self::default_update_p(DEFAULT_GAMMA),
            macro_iters: 100,
            max_total_queries: u64::MAX,
            max_test_steps: DEFAULT_MAX_TEST_STEPS,
            renorm_every: DEFAULT_RENORM_EVERY,
            seed: 0,
            sampler: StepSampler::default(),
        }
    }
}

impl SolverConfig {
    /// `p_c = 1 - γ/2`, the guaranteed correctness of a power-one decision.
    pub fn critical_p(gamma: f64) -> f64 {
        1.0 - gamma / 2.0
    }

    /// Midpoint of `(1/2, p_c)`.
    pub fn default_update_p(gamma: f64) -> f64 {
        (0.5 + Self::critical_p(gamma)) / 2.0
    }

    fn validate_common(&self) -> Result<(), SolverError> {
        if self.max_total_queries == 0 {
            return Err(SolverError::Zero("max_total_queries"));
        }
        if self.max_test_steps == 0 {
            return Err(SolverError::Zero("max_test_steps"));
        }
        if self.renorm_every == 0 {
            return Err(SolverError::Zero("renorm_every"));
        }
        Ok(())
    }

    pub fn validate_extended(&self) -> Result<TestBoundary, SolverError> {
        self.validate_common()?;
        let boundary = TestBoundary::new(self.gamma, self.max_test_steps)?;
        let upper = Self::critical_p(self.gamma);
        if !(self.update_p > 0.5 && self.update_p < upper) {
            return Err(SolverError::UpdateP {
                p: self.update_p,
                upper,
            });
        }
        Ok(boundary)
    }

    pub fn validate_classical(&self) -> Result<(), SolverError> {
        self.validate_common()?;
        if !(self.update_p > 0.5 && self.update_p < 1.0) {
            return Err(SolverError::UpdateP {
                p: self.update_p,
                upper: 1.0,
            });
        }
        Ok(())
    }
}

/// One completed macro iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub n: usize,
    /// Query point `X_n`, the median of the belief before this update.
    pub x: f64,
    /// Aggregated direction `Z_n`.
    pub z: Sign,
    /// Evaluations spent at `X_n`.
    pub runlength: u64,
    /// `T_n`, evaluations through this record.
    pub total: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StallReason {
    /// The power-one test hit `max_test_steps` without a decision.
    TestCap,
    /// The run exhausted `max_total_queries`.
    Budget,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stall {
    pub n: usize,
    pub x: f64,
    pub steps: u64,
    pub reason: StallReason,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverTrace {
    pub records: Vec<TraceRecord>,
    pub stalled: bool,
    pub stall: Option<Stall>,
    /// Belief after the last completed update.
    pub belief: BeliefDensity,
}

impl SolverTrace {
    /// Evaluations including any spent in a stalled final test.
    pub fn total_queries(&self) -> u64 {
        let done = self.records.last().map_or(0, |r| r.total);
        done + self.stall.map_or(0, |s| s.steps)
    }

    /// Median of the final belief; the point the next iteration would query.
    pub fn next_query(&self) -> f64 {
        self.belief.median()
    }

    pub fn median_estimate(&self) -> Result<f64, SolverError> {
        median_estimate(&self.records)
    }

    pub fn weighted_average_estimate(&self, epsilon: f64) -> Result<f64, SolverError> {
        weighted_average_estimate(&self.records, epsilon)
    }

    pub fn perfect_average_estimate(&self) -> Result<f64, SolverError> {
        perfect_average_estimate(&self.records)
    }

    /// Estimators over every prefix `records[..=n]`, computed from running sums.
    pub fn prefix_estimates(&self, epsilon: f64) -> Result<Vec<Estimates>, SolverError> {
        check_epsilon(epsilon)?;
        let power = 0.5 - epsilon;
        let (mut w_sum, mut wx_sum, mut n_sum, mut nx_sum) = (0.0, 0.0, 0.0, 0.0);
        Ok(self
            .records
            .iter()
            .map(|r| {
                let n = r.runlength as f64;
                let w = n.powf(power);
                w_sum += w;
                wx_sum += w * r.x;
                n_sum += n;
                nx_sum += n * r.x;
                Estimates {
                    median: r.x,
                    weighted: wx_sum / w_sum,
                    perfect: nx_sum / n_sum,
                }
            })
            .collect())
    }

    /// CSV with header `n,x_n,z_n,n_n,t_n,abs_err,est_median,est_wavg,est_pavg`.
    /// Row `n` carries the estimators over records `0..=n`.
    pub fn to_csv(&self, root: f64, epsilon: f64) -> Result<String, SolverError> {
        let est = self.prefix_estimates(epsilon)?;
        let mut out = String::from("n,x_n,z_n,n_n,t_n,abs_err,est_median,est_wavg,est_pavg\n");
        for (r, e) in self.records.iter().zip(&est) {
            let _ = writeln!(
                out,
                "{},{:.16e},{},{},{},{:.16e},{:.16e},{:.16e},{:.16e}",
                r.n,
                r.x,
                r.z,
                r.runlength,
                r.total,
                (r.x - root).abs(),
                e.median,
                e.weighted,
                e.perfect
            );
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimates {
    pub median: f64,
    pub weighted: f64,
    pub perfect: f64,
}

/// Last query point.
pub fn median_estimate(records: &[TraceRecord]) -> Result<f64, SolverError> {
    records.last().map(|r| r.x).ok_or(SolverError::EmptyTrace)
}

fn check_epsilon(epsilon: f64) -> Result<(), SolverError> {
    if epsilon > 0.0 && epsilon <= 0.5 {
        Ok(())
    } else {
        Err(SolverError::Epsilon(epsilon))
    }
}

/// `Σ N_i^{1/2-ε} X_i / Σ N_i^{1/2-ε}` over all records.
pub fn weighted_average_estimate(
    records: &[TraceRecord],
    epsilon: f64,
) -> Result<f64, SolverError> {
    check_epsilon(epsilon)?;
    if records.is_empty() {
        return Err(SolverError::EmptyTrace);
    }
    let power = 0.5 - epsilon;
    let (num, den) = records.iter().fold((0.0, 0.0), |(num, den), r| {
        let w = (r.runlength as f64).powf(power);
        (num + w * r.x, den + w)
    });
    Ok(num / den)
}

/// `Σ N_i X_i / Σ N_i` over all records.
pub fn perfect_average_estimate(records: &[TraceRecord]) -> Result<f64, SolverError> {
    if records.is_empty() {
        return Err(SolverError::EmptyTrace);
    }
    let (num, den) = records.iter().fold((0.0, 0.0), |(num, den), r| {
        let n = r.runlength as f64;
        (num + n * r.x, den + n)
    });
    Ok(num / den)
}

enum Query {
    Decided(Sign, u64),
    Undecided(u64),
}

// Shared macro loop: median, query, update, periodic renormalization.
fn run_loop<F>(cfg: &SolverConfig, mut query: F) -> Result<SolverTrace, SolverError>
where
    F: FnMut(f64, u64) -> Query,
{
    let mut belief = BeliefDensity::uniform();
    let mut records = Vec::with_capacity(cfg.macro_iters);
    let mut total = 0u64;
    let mut stall = None;
    // Mass the exact update rule predicts from F at the (rounded) query point.
    let mut predicted_mass = 1.0;

    for n in 0..cfg.macro_iters {
        let x = belief.median();
        let remaining = cfg.max_total_queries - total;
        if remaining == 0 {
            stall = Some(Stall {
                n,
                x,
                steps: 0,
                reason: StallReason::Budget,
            });
            break;
        }
        let cap = cfg.max_test_steps.min(remaining);
        match query(x, cap) {
            Query::Decided(z, runlength) => {
                total += runlength;
                records.push(TraceRecord {
                    n,
                    x,
                    z,
                    runlength,
                    total,
                });
                let below = belief.cdf(x);
                let (p, q) = (cfg.update_p, 1.0 - cfg.update_p);
                predicted_mass *= match z {
                    Sign::Plus => 2.0 * p * (1.0 - below) + 2.0 * q * below,
                    Sign::Minus => 2.0 * q * (1.0 - below) + 2.0 * p * below,
                };
                belief.apply_update(x, z, cfg.update_p)?;
                if belief.update_count().is_multiple_of(cfg.renorm_every) {
                    let mass = belief.total_mass();
                    if (mass - predicted_mass).abs() >= MASS_TOLERANCE * predicted_mass {
                        return Err(SolverError::MassDrift {
                            mass,
                            updates: belief.update_count(),
                        });
                    }
                    belief.renormalize_in_place()?;
                    predicted_mass = 1.0;
                }
            }
            Query::Undecided(steps) => {
                let reason = if cap < cfg.max_test_steps {
                    StallReason::Budget
                } else {
                    StallReason::TestCap
                };
                stall = Some(Stall {
                    n,
                    x,
                    steps,
                    reason,
                });
                break;
            }
        }
    }

    Ok(SolverTrace {
        records,
        stalled: stall.is_some(),
        stall,
        belief,
    })
}

/// Classical bisection: one constant-probability signal per macro step.
/// `update_p` may differ from the oracle's `p` for misspecification experiments.
pub fn run_classical(
    oracle: &ConstantPOracle,
    cfg: &SolverConfig,
) -> Result<SolverTrace, SolverError> {
    run_classical_with(oracle, cfg, &mut ChaCha8Rng::seed_from_u64(cfg.seed))
}

/// [`run_classical`] drawing signals from a caller-owned generator.
pub fn run_classical_with<R: Rng + ?Sized>(
    oracle: &ConstantPOracle,
    cfg: &SolverConfig,
    rng: &mut R,
) -> Result<SolverTrace, SolverError> {
    cfg.validate_classical()?;
    run_loop(cfg, |x, _| {
        Query::Decided(oracle.constant_p_signal(x, rng), 1)
    })
}

/// Extended bisection: a power-one test on the sign stream at each median.
pub fn run_extended<O, R>(
    oracle: &O,
    cfg: &SolverConfig,
    rng: &mut R,
) -> Result<SolverTrace, SolverError>
where
    O: SignOracle,
    R: Rng + ?Sized,
{
    let boundary = cfg.validate_extended()?;
    run_loop(cfg, |x, cap| {
        let b = boundary.with_max_steps(cap).expect("cap is positive");
        let outcome = match cfg.sampler {
            StepSampler::Direct => sequential_test::run_with(|| oracle.sample_sign(x, rng), &b),
            StepSampler::SkipAhead => {
                sequential_test::run_bernoulli(oracle.plus_probability(x), &b, cfg.sampler, rng)
            }
        };
        match outcome.decision {
            Some(z) => Query::Decided(z, outcome.runlength),
            None => Query::Undecided(outcome.runlength),
        }
    })
}

/// [`run_extended`] with a ChaCha8 generator seeded from `cfg.seed`.
pub fn run_extended_seeded<O: SignOracle>(
    oracle: &O,
    cfg: &SolverConfig,
) -> Result<SolverTrace, SolverError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    run_extended(oracle, cfg, &mut rng)
}
