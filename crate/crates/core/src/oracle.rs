//! Root-finding problems and the signals they produce.
//!
//! A [`Problem`] pairs a decreasing-through-the-root function `g` with an
//! additive noise model. Querying at `x` yields `Y(x) = g(x) + ε`; the sign
//! observation is `+1` iff `Y(x) >= 0`. Because every noise family here is
//! symmetric with a closed-form distribution function, the probability of each
//! sign is also available exactly.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal, StudentT};
use statrs::distribution::{ContinuousCDF, StudentsT as StudentsTCdf};
use thiserror::Error;

use crate::sign::Sign;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProblemError {
    #[error("root {0} must lie strictly inside (0, 1)")]
    Root(f64),
    #[error("parameter `{name}` = {value} is out of range ({expected})")]
    Parameter {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },
    #[error("constant correctness probability {0} must lie in (1/2, 1]")]
    Probability(f64),
    #[error("malformed problem spec: {0}")]
    Syntax(String),
    #[error("problem spec has no root; pass `root=...` or randomize it")]
    MissingRoot,
}

/// Shape of the underlying function `g`; positive left of the root, negative right of it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    /// `g(x) = c (x* - x)`
    Linear { slope: f64 },
    /// `g(x) = h sign(x* - x)`
    Step { level: f64 },
    /// `g(x) = c cbrt(x* - x)`
    CubeRoot { scale: f64 },
}

impl Shape {
    fn validate(&self) -> Result<(), ProblemError> {
        let (name, value) = match *self {
            Shape::Linear { slope } => ("c", slope),
            Shape::Step { level } => ("h", level),
            Shape::CubeRoot { scale } => ("c", scale),
        };
        positive(name, value)
    }

    pub fn eval(&self, root: f64, x: f64) -> f64 {
        let d = root - x;
        match *self {
            Shape::Linear { slope } => slope * d,
            Shape::Step { level } => {
                if d > 0.0 {
                    level
                } else if d < 0.0 {
                    -level
                } else {
                    0.0
                }
            }
            Shape::CubeRoot { scale } => scale * d.cbrt(),
        }
    }

    /// Slope of a linear shape, used for the default stochastic-approximation gain.
    pub fn slope(&self) -> Option<f64> {
        match *self {
            Shape::Linear { slope } => Some(slope),
            _ => None,
        }
    }
}

/// Additive noise `ε`; each family is symmetric about zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Noise {
    Gaussian { sigma: f64 },
    Uniform { half_width: f64 },
    StudentT { nu: f64, scale: f64 },
}

impl Noise {
    fn validate(&self) -> Result<(), ProblemError> {
        match *self {
            Noise::Gaussian { sigma } => positive("sigma", sigma),
            Noise::Uniform { half_width } => positive("half_width", half_width),
            Noise::StudentT { nu, scale } => {
                if !(nu.is_finite() && nu > 2.0) {
                    return Err(ProblemError::Parameter {
                        name: "nu",
                        value: nu,
                        expected: "nu > 2",
                    });
                }
                positive("scale", scale)
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Noise::Gaussian { sigma } => Normal::new(0.0, sigma)
                .expect("validated sigma")
                .sample(rng),
            Noise::Uniform { half_width } => half_width * (2.0 * rng.random::<f64>() - 1.0),
            Noise::StudentT { nu, scale } => {
                scale * StudentT::new(nu).expect("validated nu").sample(rng)
            }
        }
    }

    /// `P(ε <= t)`.
    pub fn cdf(&self, t: f64) -> f64 {
        match *self {
            Noise::Gaussian { sigma } => 0.5 * libm::erfc(-t / (sigma * std::f64::consts::SQRT_2)),
            Noise::Uniform { half_width } => {
                ((t + half_width) / (2.0 * half_width)).clamp(0.0, 1.0)
            }
            Noise::StudentT { nu, scale } => StudentsTCdf::new(0.0, scale, nu)
                .expect("validated parameters")
                .cdf(t),
        }
    }
}

fn positive(name: &'static str, value: f64) -> Result<(), ProblemError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(ProblemError::Parameter {
            name,
            value,
            expected: "finite and > 0",
        })
    }
}

fn check_root(root: f64) -> Result<(), ProblemError> {
    if root > 0.0 && root < 1.0 {
        Ok(())
    } else {
        Err(ProblemError::Root(root))
    }
}

/// Anything that answers "which side is the root on?" with a random sign.
pub trait SignOracle {
    fn root(&self) -> f64;

    /// Probability that a single query at `x` returns `+1`.
    fn plus_probability(&self, x: f64) -> f64;

    fn sample_sign<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> Sign;

    /// Probability that one sign at `x` points toward the root.
    fn correct_probability(&self, x: f64) -> f64 {
        let plus = self.plus_probability(x);
        if x <= self.root() {
            plus
        } else {
            1.0 - plus
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Problem {
    root: f64,
    shape: Shape,
    noise: Noise,
}

impl Problem {
    pub fn new(root: f64, shape: Shape, noise: Noise) -> Result<Self, ProblemError> {
        check_root(root)?;
        shape.validate()?;
        noise.validate()?;
        Ok(Self { root, shape, noise })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn noise(&self) -> Noise {
        self.noise
    }

    pub fn g(&self, x: f64) -> f64 {
        self.shape.eval(self.root, x)
    }

    /// `Y(x) = g(x) + ε` with a fresh noise draw.
    pub fn observe<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> f64 {
        self.g(x) + self.noise.sample(rng)
    }

    /// `+1` iff `observe(x) >= 0`.
    pub fn sign_observe<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> Sign {
        Sign::of(self.observe(x, rng))
    }

    /// Exact probability that one sign observation at `x` is correct.
    pub fn exact_tilde_p(&self, x: f64) -> f64 {
        self.correct_probability(x)
    }

    pub fn spec(&self) -> ProblemSpec {
        ProblemSpec {
            root: Some(self.root),
            shape: self.shape,
            noise: self.noise,
        }
    }
}

impl SignOracle for Problem {
    fn root(&self) -> f64 {
        self.root
    }

    // P(g + ε >= 0) = P(ε <= g) by symmetry of ε.
    fn plus_probability(&self, x: f64) -> f64 {
        self.noise.cdf(self.g(x))
    }

    fn sample_sign<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> Sign {
        self.sign_observe(x, rng)
    }
}

/// Classical signal model: the sign is correct with a fixed probability `p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantPOracle {
    root: f64,
    p: f64,
}

impl ConstantPOracle {
    pub fn new(root: f64, p: f64) -> Result<Self, ProblemError> {
        check_root(root)?;
        if !(p > 0.5 && p <= 1.0) {
            return Err(ProblemError::Probability(p));
        }
        Ok(Self { root, p })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// Points toward the root with probability `p`; at the root itself `+1` has probability `p`.
    pub fn constant_p_signal<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> Sign {
        let toward = if x <= self.root {
            Sign::Plus
        } else {
            Sign::Minus
        };
        if self.p >= 1.0 || rng.random::<f64>() < self.p {
            toward
        } else {
            toward.flip()
        }
    }
}

impl SignOracle for ConstantPOracle {
    fn root(&self) -> f64 {
        self.root
    }

    fn plus_probability(&self, x: f64) -> f64 {
        if x <= self.root {
            self.p
        } else {
            1.0 - self.p
        }
    }

    fn sample_sign<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> Sign {
        self.constant_p_signal(x, rng)
    }
}

/// Parsed form of `shape=linear,c=1.0,root=0.31;noise=gaussian,sigma=1.0`.
/// The root is optional so replication studies can draw it per run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemSpec {
    pub root: Option<f64>,
    pub shape: Shape,
    pub noise: Noise,
}

impl ProblemSpec {
    pub fn with_root(&self, root: f64) -> Result<Problem, ProblemError> {
        Problem::new(root, self.shape, self.noise)
    }

    pub fn build(&self) -> Result<Problem, ProblemError> {
        self.with_root(self.root.ok_or(ProblemError::MissingRoot)?)
    }
}

struct Section<'a> {
    kind: &'a str,
    params: Vec<(&'a str, &'a str)>,
}

impl<'a> Section<'a> {
    fn parse(text: &'a str, head: &str) -> Result<Self, ProblemError> {
        let mut kind = None;
        let mut params = Vec::new();
        for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| ProblemError::Syntax(format!("expected key=value, got `{item}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if key == head {
                kind = Some(value);
            } else {
                params.push((key, value));
            }
        }
        let kind = kind.ok_or_else(|| ProblemError::Syntax(format!("missing `{head}=`")))?;
        Ok(Self { kind, params })
    }

    fn take(&mut self, names: &[&str]) -> Result<Option<f64>, ProblemError> {
        let Some(pos) = self.params.iter().position(|(k, _)| names.contains(k)) else {
            return Ok(None);
        };
        let (key, raw) = self.params.remove(pos);
        raw.parse::<f64>()
            .map(Some)
            .map_err(|_| ProblemError::Syntax(format!("`{key}` is not a number: `{raw}`")))
    }

    fn take_or(&mut self, names: &[&str], default: f64) -> Result<f64, ProblemError> {
        Ok(self.take(names)?.unwrap_or(default))
    }

    fn finish(self) -> Result<(), ProblemError> {
        match self.params.first() {
            None => Ok(()),
            Some((k, _)) => Err(ProblemError::Syntax(format!(
                "unknown key `{k}` for `{}`",
                self.kind
            ))),
        }
    }
}

impl FromStr for ProblemSpec {
    type Err = ProblemError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (shape_part, noise_part) = s
            .split_once(';')
            .ok_or_else(|| ProblemError::Syntax("expected `shape=...;noise=...`".into()))?;

        let mut sec = Section::parse(shape_part, "shape")?;
        let root = sec.take(&["root"])?;
        let shape = match sec.kind {
            "linear" => Shape::Linear {
                slope: sec.take_or(&["c", "slope"], 1.0)?,
            },
            "step" => Shape::Step {
                level: sec.take_or(&["h", "level"], 1.0)?,
            },
            "cube_root" | "cuberoot" => Shape::CubeRoot {
                scale: sec.take_or(&["c", "scale"], 1.0)?,
            },
            other => return Err(ProblemError::Syntax(format!("unknown shape `{other}`"))),
        };
        sec.finish()?;

        let mut sec = Section::parse(noise_part, "noise")?;
        let noise = match sec.kind {
            "gaussian" | "normal" => Noise::Gaussian {
                sigma: sec.take_or(&["sigma"], 1.0)?,
            },
            "uniform" => Noise::Uniform {
                half_width: sec.take_or(&["half_width", "w"], 1.0)?,
            },
            "student_t" | "t" => Noise::StudentT {
                nu: sec.take_or(&["nu"], 3.0)?,
                scale: sec.take_or(&["scale", "s"], 1.0)?,
            },
            other => return Err(ProblemError::Syntax(format!("unknown noise `{other}`"))),
        };
        sec.finish()?;

        if let Some(r) = root {
            check_root(r)?;
        }
        shape.validate()?;
        noise.validate()?;
        Ok(Self { root, shape, noise })
    }
}

impl fmt::Display for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.shape {
            Shape::Linear { slope } => write!(f, "shape=linear,c={slope}")?,
            Shape::Step { level } => write!(f, "shape=step,h={level}")?,
            Shape::CubeRoot { scale } => write!(f, "shape=cube_root,c={scale}")?,
        }
        if let Some(root) = self.root {
            write!(f, ",root={root}")?;
        }
        match self.noise {
            Noise::Gaussian { sigma } => write!(f, ";noise=gaussian,sigma={sigma}"),
            Noise::Uniform { half_width } => write!(f, ";noise=uniform,half_width={half_width}"),
            Noise::StudentT { nu, scale } => write!(f, ";noise=student_t,nu={nu},scale={scale}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const PHI_HALF: f64 = 0.691_462_461_274_013_1;
    const PHI_ONE: f64 = 0.841_344_746_068_542_9;

    fn linear_gauss(root: f64, sigma: f64) -> Problem {
        Problem::new(
            root,
            Shape::Linear { slope: 1.0 },
            Noise::Gaussian { sigma },
        )
        .unwrap()
    }

    #[test]
    fn noiseless_limit_returns_g() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = linear_gauss(0.5, 1e-12);
        assert!((p.observe(0.2, &mut rng) - 0.3).abs() < 1e-11);
        let step = Problem::new(
            0.5,
            Shape::Step { level: 1.0 },
            Noise::Gaussian { sigma: 1e-12 },
        )
        .unwrap();
        assert!((step.observe(0.6, &mut rng) + 1.0).abs() < 1e-11);
        assert_eq!(p.sign_observe(0.3, &mut rng), Sign::Plus);
        assert_eq!(p.sign_observe(0.7, &mut rng), Sign::Minus);
    }

    #[test]
    fn observation_mean_matches_g() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = linear_gauss(0.5, 1.0);
        let n = 100_000;
        let mean = (0..n).map(|_| p.observe(0.2, &mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 0.3).abs() < 0.01);
    }

    #[test]
    fn sign_frequency_matches_exact_probability() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = linear_gauss(0.5, 1.0);
        let n = 100_000;
        let plus = (0..n)
            .filter(|_| p.sign_observe(0.0, &mut rng) == Sign::Plus)
            .count();
        assert!((plus as f64 / n as f64 - PHI_HALF).abs() < 0.005);
    }

    #[test]
    fn exact_tilde_p_values() {
        let p = linear_gauss(0.5, 1.0);
        assert!((p.exact_tilde_p(0.5) - 0.5).abs() < 1e-15);
        assert!((p.exact_tilde_p(0.0) - PHI_HALF).abs() < 1e-12);
        assert!((p.exact_tilde_p(1.0) - PHI_HALF).abs() < 1e-12);
        let step = Problem::new(
            0.37,
            Shape::Step { level: 1.0 },
            Noise::Gaussian { sigma: 1.0 },
        )
        .unwrap();
        for x in [0.0, 0.1, 0.36, 0.38, 0.9, 1.0] {
            assert!((step.exact_tilde_p(x) - PHI_ONE).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_and_student_probabilities() {
        let u = Problem::new(
            0.5,
            Shape::Linear { slope: 1.0 },
            Noise::Uniform { half_width: 0.2 },
        )
        .unwrap();
        assert!((u.exact_tilde_p(0.4) - 0.75).abs() < 1e-15);
        assert_eq!(u.exact_tilde_p(0.1), 1.0);
        // t with 3 degrees of freedom: F(1) = 1/2 + (1/π)(atan(1/√3) + (1/√3)/(1 + 1/3))
        let t = Problem::new(
            0.5,
            Shape::Step { level: 1.0 },
            Noise::StudentT {
                nu: 3.0,
                scale: 1.0,
            },
        )
        .unwrap();
        let r = 1.0 / 3f64.sqrt();
        let expected = 0.5 + (r.atan() + r / (1.0 + r * r)) / std::f64::consts::PI;
        assert!((t.exact_tilde_p(0.2) - expected).abs() < 1e-12);
    }

    #[test]
    fn assumption_two_on_grid() {
        let shapes = [
            Shape::Linear { slope: 1.0 },
            Shape::Step { level: 1.0 },
            Shape::CubeRoot { scale: 1.0 },
        ];
        let noises = [
            Noise::Gaussian { sigma: 1.0 },
            Noise::Uniform { half_width: 1.0 },
            Noise::StudentT {
                nu: 3.0,
                scale: 1.0,
            },
        ];
        let root = 0.4321;
        for shape in shapes {
            for noise in noises {
                let prob = Problem::new(root, shape, noise).unwrap();
                for i in 0..=1000 {
                    let x = i as f64 / 1000.0;
                    if x != root {
                        assert!(prob.exact_tilde_p(x) > 0.5, "{shape:?} {noise:?} x={x}");
                    }
                }
            }
        }
    }

    #[test]
    fn linear_gaussian_growth_bounds() {
        let (c, sigma, root) = (1.0, 1.0, 0.4321);
        let prob = linear_gauss(root, sigma);
        let upper = c / (sigma * (2.0 * std::f64::consts::PI).sqrt());
        let mut lower = f64::INFINITY;
        for i in 0..=1000 {
            let x = i as f64 / 1000.0;
            let d = (x - root).abs();
            if d == 0.0 {
                continue;
            }
            let excess = prob.exact_tilde_p(x) - 0.5;
            assert!(excess <= upper * d + 1e-15);
            lower = lower.min(excess / d);
        }
        assert!(
            lower > 0.3,
            "linear lower-bound constant collapsed: {lower}"
        );
    }

    #[test]
    fn consecutive_observations_are_uncorrelated() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = linear_gauss(0.5, 1.0);
        let ys: Vec<f64> = (0..100_000).map(|_| p.observe(0.3, &mut rng)).collect();
        let mean = ys.iter().sum::<f64>() / ys.len() as f64;
        let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>();
        let cov = ys
            .windows(2)
            .map(|w| (w[0] - mean) * (w[1] - mean))
            .sum::<f64>();
        assert!((cov / var).abs() < 0.01);
    }

    #[test]
    fn constant_p_signals() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let exact = ConstantPOracle::new(0.3, 1.0).unwrap();
        for _ in 0..1000 {
            assert_eq!(exact.constant_p_signal(0.1, &mut rng), Sign::Plus);
            assert_eq!(exact.constant_p_signal(0.9, &mut rng), Sign::Minus);
        }
        let noisy = ConstantPOracle::new(0.3, 0.7).unwrap();
        let n = 100_000;
        let plus = (0..n)
            .filter(|_| noisy.constant_p_signal(0.1, &mut rng) == Sign::Plus)
            .count();
        assert!((plus as f64 / n as f64 - 0.7).abs() < 0.005);
        assert!(ConstantPOracle::new(0.3, 0.5).is_err());
        assert!(ConstantPOracle::new(0.3, 1.1).is_err());
        assert!(ConstantPOracle::new(1.0, 0.7).is_err());
    }

    #[test]
    fn parses_problem_specs() {
        let spec: ProblemSpec = "shape=linear,c=1.0,root=0.31;noise=gaussian,sigma=1.0"
            .parse()
            .unwrap();
        assert_eq!(spec.root, Some(0.31));
        assert_eq!(spec.shape, Shape::Linear { slope: 1.0 });
        assert_eq!(spec.noise, Noise::Gaussian { sigma: 1.0 });
        let spec: ProblemSpec = "shape=step,h=2;noise=student_t,nu=4,s=0.5".parse().unwrap();
        assert_eq!(spec.root, None);
        assert_eq!(
            spec.noise,
            Noise::StudentT {
                nu: 4.0,
                scale: 0.5
            }
        );
        assert!(matches!(spec.build(), Err(ProblemError::MissingRoot)));
        let spec: ProblemSpec = "shape=cube_root,c=3,root=0.2;noise=uniform,w=0.5"
            .parse()
            .unwrap();
        assert_eq!(spec.build().unwrap().g(0.2 - 0.125), 1.5);
    }

    #[test]
    fn rejects_bad_specs() {
        for bad in [
            "shape=linear,c=1.0",
            "shape=wiggly;noise=gaussian",
            "shape=linear,c=-1;noise=gaussian",
            "shape=linear,root=1.5;noise=gaussian",
            "shape=linear;noise=gaussian,sigma=abc",
            "shape=linear;noise=gaussian,mu=1",
            "shape=linear;noise=student_t,nu=2",
            "c=1;noise=gaussian",
        ] {
            assert!(bad.parse::<ProblemSpec>().is_err(), "{bad}");
        }
    }

    proptest::proptest! {
        #[test]
        fn spec_display_round_trips(
            root in 0.001f64..0.999,
            param in 0.01f64..10.0,
            nu in 2.5f64..30.0,
            which in 0usize..9,
        ) {
            let shape = match which % 3 {
                0 => Shape::Linear { slope: param },
                1 => Shape::Step { level: param },
                _ => Shape::CubeRoot { scale: param },
            };
            let noise = match which / 3 {
                0 => Noise::Gaussian { sigma: param },
                1 => Noise::Uniform { half_width: param },
                _ => Noise::StudentT { nu, scale: param },
            };
            let spec = ProblemSpec { root: Some(root), shape, noise };
            let back: ProblemSpec = spec.to_string().parse().unwrap();
            proptest::prop_assert_eq!(back, spec);
        }
    }
}
