//! Belief density over the root location.
//!
//! The density is kept exactly piecewise constant on `[0, 1]`: a sorted list of
//! breakpoints and one natural-log height per cell. A bisection update at `x`
//! inserts (at most) one breakpoint and adds `ln(2p)` or `ln(2q)` to every cell
//! on each side, so heights are never stored in direct space. Cells are
//! half-open `[lo, hi)`; the point `x` itself belongs to the right-hand side.

use std::fmt::Write as _;

use thiserror::Error;

use crate::sign::Sign;

/// Run-time guard on mass drift between renormalizations.
pub const MASS_TOLERANCE: f64 = 1e-9;

const RENORM_WINDOW: (f64, f64) = (1e-6, 1e6);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BeliefError {
    #[error("update point {0} must lie strictly inside (0, 1)")]
    PointOutOfRange(f64),
    #[error("update probability {0} must lie in [1/2, 1)")]
    ProbabilityOutOfRange(f64),
    #[error("quantile level {0} must lie in (0, 1)")]
    LevelOutOfRange(f64),
    #[error("interval [{lo}, {hi}] is not an ordered subinterval of [0, 1]")]
    BadInterval { lo: f64, hi: f64 },
    #[error("total mass {0} is outside the renormalization window; belief is corrupted")]
    Corrupted(f64),
    #[error("invalid cell layout: {0}")]
    InvalidCells(&'static str),
}

/// Piecewise-constant probability density on `[0, 1]` in log space.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefDensity {
    breakpoints: Vec<f64>,
    log_heights: Vec<f64>,
    update_count: u64,
}

impl Default for BeliefDensity {
    fn default() -> Self {
        Self::uniform()
    }
}

impl BeliefDensity {
    /// Uniform prior: a single cell of height one.
    pub fn uniform() -> Self {
        Self {
            breakpoints: vec![0.0, 1.0],
            log_heights: vec![0.0],
            update_count: 0,
        }
    }

    /// Builds a density from an explicit cell layout. The layout is validated;
    /// the mass is not, so callers building other priors should `renormalize`.
    pub fn from_cells(breakpoints: Vec<f64>, log_heights: Vec<f64>) -> Result<Self, BeliefError> {
        if breakpoints.len() < 2 || log_heights.len() + 1 != breakpoints.len() {
            return Err(BeliefError::InvalidCells("need one log height per cell"));
        }
        if breakpoints[0] != 0.0 || *breakpoints.last().unwrap() != 1.0 {
            return Err(BeliefError::InvalidCells(
                "breakpoints must start at 0 and end at 1",
            ));
        }
        if breakpoints
            .windows(2)
            .any(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less))
        {
            return Err(BeliefError::InvalidCells(
                "breakpoints must be strictly increasing",
            ));
        }
        if log_heights.iter().any(|h| !h.is_finite()) {
            return Err(BeliefError::InvalidCells("log heights must be finite"));
        }
        Ok(Self {
            breakpoints,
            log_heights,
            update_count: 0,
        })
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn log_heights(&self) -> &[f64] {
        &self.log_heights
    }

    pub fn update_count(&self) -> u64 {
        self.update_count
    }

    pub fn num_cells(&self) -> usize {
        self.log_heights.len()
    }

    /// Returns the updated density, leaving `self` untouched.
    pub fn update(&self, x: f64, z: Sign, p: f64) -> Result<Self, BeliefError> {
        let mut next = self.clone();
        next.apply_update(x, z, p)?;
        Ok(next)
    }

    /// Multiplies the density by `2p` on the side of `x` indicated by `z` and by
    /// `2(1 - p)` on the other side. No renormalization is performed: the mass
    /// changes unless `x` is the current median.
    pub fn apply_update(&mut self, x: f64, z: Sign, p: f64) -> Result<(), BeliefError> {
        if !(x.is_finite() && x > 0.0 && x < 1.0) {
            return Err(BeliefError::PointOutOfRange(x));
        }
        if !(p.is_finite() && (0.5..1.0).contains(&p)) {
            return Err(BeliefError::ProbabilityOutOfRange(p));
        }
        let split = self.split_at(x);
        let up = (2.0 * p).ln();
        let down = (2.0 * (1.0 - p)).ln();
        let (right, left) = match z {
            Sign::Plus => (up, down),
            Sign::Minus => (down, up),
        };
        let (lo_cells, hi_cells) = self.log_heights.split_at_mut(split);
        lo_cells.iter_mut().for_each(|h| *h += left);
        hi_cells.iter_mut().for_each(|h| *h += right);
        self.update_count += 1;
        Ok(())
    }

    /// Ensures `x` is a breakpoint and returns the index of the first cell at or right of it.
    fn split_at(&mut self, x: f64) -> usize {
        let j = self.breakpoints.partition_point(|&b| b < x);
        if self.breakpoints[j] != x {
            self.breakpoints.insert(j, x);
            let inherited = self.log_heights[j - 1];
            self.log_heights.insert(j, inherited);
        }
        j
    }

    fn max_log_height(&self) -> f64 {
        self.log_heights
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Cell masses scaled by `exp(-shift)`, together with the shift.
    fn scaled_masses(&self) -> (f64, Vec<f64>) {
        let shift = self.max_log_height();
        let masses = self
            .log_heights
            .iter()
            .zip(self.breakpoints.windows(2))
            .map(|(h, w)| (h - shift).exp() * (w[1] - w[0]))
            .collect();
        (shift, masses)
    }

    /// Integral of the density over `[0, 1]`.
    pub fn total_mass(&self) -> f64 {
        let (shift, masses) = self.scaled_masses();
        neumaier_sum(masses) * shift.exp()
    }

    /// Integral of the density over `[lo, hi]`.
    pub fn mass(&self, lo: f64, hi: f64) -> Result<f64, BeliefError> {
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return Err(BeliefError::BadInterval { lo, hi });
        }
        let shift = self.max_log_height();
        Ok(self.scaled_mass_between(shift, lo, hi) * shift.exp())
    }

    fn scaled_mass_between(&self, shift: f64, lo: f64, hi: f64) -> f64 {
        let terms = self
            .log_heights
            .iter()
            .zip(self.breakpoints.windows(2))
            .filter_map(|(h, w)| {
                let overlap = hi.min(w[1]) - lo.max(w[0]);
                (overlap > 0.0).then(|| (h - shift).exp() * overlap)
            });
        neumaier_sum(terms)
    }

    /// Normalized distribution function `F(x) = mass(0, x) / mass(0, 1)`.
    pub fn cdf(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        let shift = self.max_log_height();
        let total = self.scaled_mass_between(shift, 0.0, 1.0);
        self.scaled_mass_between(shift, 0.0, x) / total
    }

    /// Density value at `y`, using the half-open cell convention.
    pub fn density_at(&self, y: f64) -> f64 {
        let y = y.clamp(0.0, 1.0);
        let j = self.breakpoints.partition_point(|&b| b <= y);
        let cell = j.saturating_sub(1).min(self.num_cells() - 1);
        self.log_heights[cell].exp()
    }

    /// Median of the normalized distribution.
    pub fn median(&self) -> f64 {
        self.invert(0.5)
    }

    pub fn quantile(&self, u: f64) -> Result<f64, BeliefError> {
        if !(u > 0.0 && u < 1.0) {
            return Err(BeliefError::LevelOutOfRange(u));
        }
        Ok(self.invert(u))
    }

    // Cell-wise accumulation, then linear inversion inside the crossing cell.
    fn invert(&self, u: f64) -> f64 {
        let (_, masses) = self.scaled_masses();
        let total = neumaier_sum(masses.iter().copied());
        let target = u * total;
        let last = masses.iter().rposition(|&m| m > 0.0).unwrap_or(0);
        let mut acc = Neumaier::default();
        for (i, &m) in masses.iter().enumerate() {
            let before = acc.value();
            if m > 0.0 && (before + m >= target || i == last) {
                let (lo, hi) = (self.breakpoints[i], self.breakpoints[i + 1]);
                let height = m / (hi - lo);
                return (lo + (target - before) / height).clamp(lo, hi);
            }
            acc.add(m);
        }
        unreachable!("a density with finite log heights has positive mass")
    }

    /// Shifts every log height so the total mass is one.
    pub fn renormalize(&self) -> Result<Self, BeliefError> {
        let mut next = self.clone();
        next.renormalize_in_place()?;
        Ok(next)
    }

    pub fn renormalize_in_place(&mut self) -> Result<(), BeliefError> {
        let total = self.total_mass();
        if !(total >= RENORM_WINDOW.0 && total <= RENORM_WINDOW.1) {
            return Err(BeliefError::Corrupted(total));
        }
        let shift = total.ln();
        self.log_heights.iter_mut().for_each(|h| *h -= shift);
        Ok(())
    }

    /// One `lo hi log_height` line per cell, 17 significant digits.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (h, w) in self.log_heights.iter().zip(self.breakpoints.windows(2)) {
            let _ = writeln!(out, "{:.16e} {:.16e} {:.16e}", w[0], w[1], h);
        }
        out
    }
}

#[derive(Debug, Default, Clone, Copy)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

fn neumaier_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = Neumaier::default();
    values.into_iter().for_each(|v| acc.add(v));
    acc.value()
}
