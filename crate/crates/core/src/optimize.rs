//! One-dimensional minimization over a bandwidth range: a log-spaced grid scan
//! followed by golden-section refinement of the bracketing cell.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Candidate bandwidths `[lower, upper]` scanned on a `grid_size` log grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchRange {
    lower: f64,
    upper: f64,
    grid_size: usize,
}

impl SearchRange {
    pub const DEFAULT_GRID: usize = 64;
    pub const MIN_GRID: usize = 16;

    pub fn new(lower: f64, upper: f64, grid_size: usize) -> Result<Self> {
        if !(lower > 0.0 && lower < upper && upper.is_finite()) {
            return Err(Error::InvalidRange(format!(
                "need 0 < lower < upper, got [{lower}, {upper}]"
            )));
        }
        if grid_size < Self::MIN_GRID {
            return Err(Error::InvalidRange(format!(
                "grid size must be at least {}, got {grid_size}",
                Self::MIN_GRID
            )));
        }
        Ok(Self {
            lower,
            upper,
            grid_size,
        })
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    pub fn grid(&self) -> Vec<f64> {
        let (a, b) = (self.lower.ln(), self.upper.ln());
        let step = (b - a) / (self.grid_size - 1) as f64;
        (0..self.grid_size)
            .map(|i| match i {
                0 => self.lower,
                i if i == self.grid_size - 1 => self.upper,
                i => (a + step * i as f64).exp(),
            })
            .collect()
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.lower * factor, self.upper * factor, self.grid_size)
    }
}

/// A bandwidth and its objective value on the scan grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub h: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub h: f64,
    pub value: f64,
    /// Minimizer lies within one grid step of a range end.
    pub at_boundary: bool,
    pub curve: Vec<CurvePoint>,
}

/// Relative width at which golden-section refinement stops.
pub const GOLDEN_TOLERANCE: f64 = 1e-3;

/// Minimize `objective` over `range`.
pub fn minimize<F: FnMut(f64) -> f64>(range: &SearchRange, mut objective: F) -> Minimum {
    let grid = range.grid();
    let curve: Vec<CurvePoint> = grid
        .iter()
        .map(|&h| CurvePoint {
            h,
            score: objective(h),
        })
        .collect();

    // NaN scores never win.
    let best = curve
        .iter()
        .enumerate()
        .filter(|(_, p)| !p.score.is_nan())
        .min_by(|a, b| a.1.score.total_cmp(&b.1.score))
        .map(|(i, _)| i)
        .unwrap_or(0);

    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(grid.len() - 1)];
    let (mut h, mut value) = golden(lo.ln(), hi.ln(), |u| objective(u.exp()));
    h = h.exp();
    if !(value <= curve[best].score) {
        h = curve[best].h;
        value = curve[best].score;
    }

    let at_boundary = h < grid[1] || h > grid[grid.len() - 2];
    Minimum {
        h,
        value,
        at_boundary,
        curve,
    }
}

/// Golden-section search of a unimodal function on `[a, b]`; returns the best
/// abscissa seen and its value.
fn golden<F: FnMut(f64) -> f64>(mut a: f64, mut b: f64, mut f: F) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > GOLDEN_TOLERANCE {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}
