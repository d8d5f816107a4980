//! Stochastic root finding by probabilistic bisection.
//!
//! The solver keeps a piecewise-constant belief over the root location in
//! `[0, 1]`, queries at its median, and turns a stream of noisy sign
//! observations into a single reliable direction with a power-one sequential
//! test before each belief update. A Robbins–Monro baseline and a seeded
//! replication harness are included for convergence-rate experiments.

pub mod baseline;
pub mod belief;
pub mod harness;
pub mod oracle;
pub mod sign;
pub mod solver;

pub use belief::{BeliefDensity, BeliefError};
pub use oracle::{ConstantPOracle, Noise, Problem, ProblemError, ProblemSpec, Shape, SignOracle};
pub use sequential_test::{StepSampler, TestBoundary, TestError, TestOutcome};
pub use sign::Sign;
pub use solver::{SolverConfig, SolverError, SolverTrace, TraceRecord};
