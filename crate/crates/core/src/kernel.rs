//! Gaussian kernel density estimates, the reflected estimator of a density on
//! `[0, inf)`, and closed-form L2 products of estimates.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grouped::ContinuousSample;

pub(crate) const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
#[inline]
pub fn gaussian_kernel(u: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * u * u).exp()
}

/// Normal density with mean zero and standard deviation `sd`, at `x`.
#[inline]
pub fn normal_pdf(x: f64, sd: f64) -> f64 {
    gaussian_kernel(x / sd) / sd
}

pub(crate) fn check_bandwidth(h: f64) -> Result<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidBandwidth(h))
    }
}

/// An equally weighted Gaussian mixture: one kernel of scale `bandwidth` per center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    centers: Vec<f64>,
    bandwidth: f64,
    weight: f64,
}

impl DensityEstimate {
    pub fn new(centers: Vec<f64>, bandwidth: f64) -> Result<Self> {
        check_bandwidth(bandwidth)?;
        if centers.is_empty() {
            return Err(Error::EmptySample);
        }
        let weight = 1.0 / (centers.len() as f64 * bandwidth);
        Ok(Self {
            centers,
            bandwidth,
            weight,
        })
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    /// `1 / (m h)` for `m` centers.
    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        let inv_h = 1.0 / self.bandwidth;
        self.weight
            * self
                .centers
                .iter()
                .map(|&c| gaussian_kernel((x - c) * inv_h))
                .sum::<f64>()
    }

    /// Density on `[0, inf)` obtained by folding this estimate at zero.
    pub fn folded_eval(&self, x: f64) -> Result<f64> {
        if x < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "folded density is defined on [0, inf), got x = {x}"
            )));
        }
        Ok(self.evaluate(x) + self.evaluate(-x))
    }

    /// Squared L2 norm, `∫ f(x)^2 dx`.
    pub fn l2_norm_squared(&self) -> f64 {
        l2_cross_integral(self, self)
    }

    /// Interval outside of which the estimate has negligible mass.
    pub fn support(&self, sds: f64) -> (f64, f64) {
        let (lo, hi) = min_max(&self.centers);
        (lo - sds * self.bandwidth, hi + sds * self.bandwidth)
    }
}

pub(crate) fn min_max(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
}

/// Kernel density estimate of `sample` with bandwidth `h`.
pub fn kde(sample: &ContinuousSample, h: f64) -> Result<DensityEstimate> {
    DensityEstimate::new(sample.values().to_vec(), h)
}

/// Reflected estimate of `f(0)` from nonnegative distances:
/// `(2 / (n h)) Σ K(x_i / h)`.
pub fn f0_hat(distances: &[f64], h: f64) -> Result<f64> {
    check_bandwidth(h)?;
    if distances.is_empty() {
        return Err(Error::EmptySample);
    }
    if let Some(&neg) = distances.iter().find(|&&x| x < 0.0) {
        return Err(Error::NegativeDistance(neg));
    }
    let sum: f64 = distances.iter().map(|&x| gaussian_kernel(x / h)).sum();
    Ok(2.0 * sum / (distances.len() as f64 * h))
}

/// `∫ a(x) b(x) dx` in closed form.
///
/// Uses `∫ φ_s(x - c) φ_t(x - d) dx = φ_{sqrt(s² + t²)}(c - d)`.
pub fn l2_cross_integral(a: &DensityEstimate, b: &DensityEstimate) -> f64 {
    let sd = a.bandwidth.hypot(b.bandwidth);
    let inv_sd = 1.0 / sd;
    let mut total = 0.0;
    for &ca in &a.centers {
        let mut row = 0.0;
        for &cb in &b.centers {
            row += gaussian_kernel((ca - cb) * inv_sd);
        }
        total += row;
    }
    total * inv_sd / (a.centers.len() as f64 * b.centers.len() as f64)
}

/// Write `x,density` rows for every grid point.
pub fn write_curve_csv<W: Write, F: Fn(f64) -> f64>(
    out: W,
    grid: &[f64],
    density: F,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "density"])?;
    for &x in grid {
        w.write_record([x.to_string(), density(x).to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// `len` equally spaced points from `lo` to `hi` inclusive.
pub fn linear_grid(lo: f64, hi: f64, len: usize) -> Vec<f64> {
    match len {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / (len - 1) as f64;
            (0..len).map(|i| lo + step * i as f64).collect()
        }
    }
}
