//! Point estimates and smoothed-bootstrap confidence intervals for `f(0)` and
//! the animal density `D = n f(0) / (2L)`.
//!
//! Three intervals are produced from `B` bootstrap replicates drawn from the
//! folded pilot estimate:
//!
//! * a pivot interval from `R_b = f̂_b(0; h_S) - f̂(0; h_in)`,
//! * a studentized interval from `U_b = R_b / σ̂_b(0)`,
//! * an interval for `D` from `W_b = (D̂_b - D̂_in) / σ̂_{b,D}`.
//!
//! Quantiles are order statistics, so every endpoint is built from an
//! observed replicate.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bandwidth::BandwidthSelection;
use crate::error::{Error, Result};
use crate::grouped::{ContinuousSample, GroupedSample};
use crate::kernel::{check_bandwidth, f0_hat, gaussian_kernel};
use crate::streams::{Purpose, RngStreams};

/// Animal density `n f0 / (2L)`, in inverse squared length units of `L`.
pub fn estimate_d(n: usize, line_length: f64, f0: f64) -> Result<f64> {
    if !(line_length > 0.0 && line_length.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "transect length must be positive, got {line_length}"
        )));
    }
    if !(f0 >= 0.0 && f0.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "f(0) must be nonnegative, got {f0}"
        )));
    }
    Ok(n as f64 * f0 / (2.0 * line_length))
}

/// Variance of a kernel mean `(1/(nh)) Σ k_i`, given the kernel values `k_i`
/// and the estimate itself; the bracket is floored at zero.
fn kernel_mean_variance(
    kernel_values: impl Iterator<Item = f64>,
    n: usize,
    h: f64,
    estimate: f64,
) -> (f64, bool) {
    let nh = n as f64 * h;
    let sum_sq: f64 = kernel_values.map(|k| k * k).sum();
    let bracket = sum_sq / nh - h * estimate * estimate;
    if bracket < 0.0 {
        (0.0, true)
    } else {
        (bracket / nh, false)
    }
}

/// Standard deviation of the kernel estimate at `x`:
/// `σ̂²(x) = (1/(nh)) [ (1/(nh)) Σ K((x - X_i)/h)² - h f̂(x)² ]`, floored at zero.
pub fn sigma_hat(sample: &ContinuousSample, h: f64, x: f64, f_at_x: f64) -> Result<f64> {
    check_bandwidth(h)?;
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    let k = sample
        .values()
        .iter()
        .map(|&xi| gaussian_kernel((x - xi) / h));
    Ok(kernel_mean_variance(k, sample.len(), h, f_at_x).0.sqrt())
}

/// Standard deviation of the reflected estimate `f̂(0) = (2/(nh)) Σ K(x_i/h)`:
/// the same estimator with the folded kernel `2K`. Also reports whether the
/// variance bracket had to be floored.
pub fn folded_sigma0(distances: &[f64], h: f64) -> Result<(f64, bool)> {
    let f0 = f0_hat(distances, h)?;
    let k = distances.iter().map(|&x| 2.0 * gaussian_kernel(x / h));
    let (var, floored) = kernel_mean_variance(k, distances.len(), h, f0);
    Ok((var.sqrt(), floored))
}

/// The `⌈p·B⌉`-th smallest value, the minimum for `p = 0`.
pub fn quantile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptySample);
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!(
            "quantile level must be in [0, 1], got {p}"
        )));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(quantile_sorted(&sorted, p))
}

fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let b = sorted.len();
    // Guard 0.975 * 1000 = 975.0000000000001 style products.
    let rank = ((p * b as f64) - 1e-9).ceil().max(1.0) as usize;
    sorted[rank.min(b) - 1]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Statistics of one bootstrap replicate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Replicate {
    pub f0: f64,
    pub sigma0: f64,
    pub floored: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalConfig {
    /// Bootstrap replicates `B`.
    pub bootstrap: usize,
    /// Total transect length `L`.
    pub line_length: f64,
    pub alpha: f64,
    /// Variance of the detection count; `None` uses the Poisson value `n`.
    pub count_variance: Option<f64>,
    pub seed: u64,
}

impl Default for IntervalConfig {
    fn default() -> Self {
        Self {
            bootstrap: 1000,
            line_length: 1.0,
            alpha: 0.05,
            count_variance: None,
            seed: 0,
        }
    }
}

/// Minimum number of replicates accepted by [`bootstrap_pivots`].
pub const MIN_BOOTSTRAP: usize = 100;

/// Fraction of zero-variance replicates above which the studentized intervals
/// are refused.
pub const MAX_DROPPED_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransectEstimate {
    /// `f̂(0; h_S)`.
    pub f0_hat: f64,
    /// `f̂(0; h_in)`, the value the bootstrap pivots are centred on.
    pub f0_pilot: f64,
    pub d_hat: f64,
    pub se_f0: f64,
    pub se_d: f64,
    pub n: usize,
    pub line_length: f64,
    pub alpha: f64,
    pub h_in: f64,
    pub h_s: f64,
    pub count_variance: f64,
    pub bootstrap: usize,
    pub ci_f0_pivot: Interval,
    pub ci_f0_studentized: Interval,
    pub ci_d: Interval,
    /// Replicates left out of the studentized pivots because `σ̂_b(0) = 0`.
    pub dropped_replicates: usize,
    /// Replicates whose variance bracket was negative and floored.
    pub floored_variances: usize,
    pub seed: u64,
}

/// Turn replicate statistics into the three intervals.
#[allow(clippy::too_many_arguments)]
pub fn intervals_from_replicates(
    replicates: &[Replicate],
    n: usize,
    f0_hat: f64,
    f0_pilot: f64,
    sigma0: f64,
    cfg: &IntervalConfig,
    h_in: f64,
    h_s: f64,
) -> Result<TransectEstimate> {
    let alpha = cfg.alpha;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha must be in (0, 1), got {alpha}"
        )));
    }
    if replicates.is_empty() {
        return Err(Error::EmptySample);
    }
    if n == 0 {
        return Err(Error::TooFewObservations { needed: 1, got: 0 });
    }
    let var_n = cfg.count_variance.unwrap_or(n as f64);
    let nf = n as f64;
    let d_hat = estimate_d(n, cfg.line_length, f0_hat)?;
    let d_pilot = estimate_d(n, cfg.line_length, f0_pilot)?;
    let rel_count = var_n / (nf * nf);

    let mut r = Vec::with_capacity(replicates.len());
    let mut u = Vec::with_capacity(replicates.len());
    let mut w = Vec::with_capacity(replicates.len());
    let mut dropped = 0;
    for rep in replicates {
        let diff = rep.f0 - f0_pilot;
        r.push(diff);
        if !(rep.sigma0 > 0.0 && rep.f0 > 0.0) {
            dropped += 1;
            continue;
        }
        u.push(diff / rep.sigma0);
        let d_b = estimate_d(n, cfg.line_length, rep.f0)?;
        let ratio = rep.sigma0 / rep.f0;
        let sigma_d_b = d_b * (rel_count + ratio * ratio).sqrt();
        w.push((d_b - d_pilot) / sigma_d_b);
    }
    if dropped as f64 > MAX_DROPPED_FRACTION * replicates.len() as f64 {
        return Err(Error::DegenerateReplicates {
            dropped,
            total: replicates.len(),
        });
    }
    let floored_variances = replicates.iter().filter(|r| r.floored).count();
    for v in [&mut r, &mut u, &mut w] {
        v.sort_by(f64::total_cmp);
    }
    let (lo_p, hi_p) = (alpha / 2.0, 1.0 - alpha / 2.0);
    let ci_f0_pivot = Interval {
        lower: f0_hat - quantile_sorted(&r, hi_p),
        upper: f0_hat - quantile_sorted(&r, lo_p),
    };

    let ratio = if f0_hat > 0.0 { sigma0 / f0_hat } else { 0.0 };
    let se_d = d_hat * (rel_count + ratio * ratio).sqrt();
    let (ci_f0_studentized, ci_d) = if u.is_empty() {
        let point = Interval {
            lower: f0_hat,
            upper: f0_hat,
        };
        (
            point,
            Interval {
                lower: d_hat,
                upper: d_hat,
            },
        )
    } else {
        (
            Interval {
                lower: f0_hat - quantile_sorted(&u, hi_p) * sigma0,
                upper: f0_hat - quantile_sorted(&u, lo_p) * sigma0,
            },
            Interval {
                lower: d_hat - quantile_sorted(&w, hi_p) * se_d,
                upper: d_hat - quantile_sorted(&w, lo_p) * se_d,
            },
        )
    };

    Ok(TransectEstimate {
        f0_hat,
        f0_pilot,
        d_hat,
        se_f0: sigma0,
        se_d,
        n,
        line_length: cfg.line_length,
        alpha,
        h_in,
        h_s,
        count_variance: var_n,
        bootstrap: replicates.len(),
        ci_f0_pivot,
        ci_f0_studentized,
        ci_d,
        dropped_replicates: dropped,
        floored_variances,
        seed: cfg.seed,
    })
}

/// One folded smoothed-bootstrap sample: resample the jittered distances,
/// add `h_in` times normal noise and reflect back onto `[0, inf)`.
pub fn folded_resample<R: Rng + ?Sized>(distances: &[f64], h_in: f64, rng: &mut R) -> Vec<f64> {
    (0..distances.len())
        .map(|_| {
            let pick = distances[rng.random_range(0..distances.len())];
            let z: f64 = rng.sample(StandardNormal);
            (pick + h_in * z).abs()
        })
        .collect()
}

/// Smoothed-bootstrap intervals for `f(0)` and `D` from a bandwidth selection
/// on distance data.
pub fn bootstrap_pivots(
    g: &GroupedSample,
    sel: &BandwidthSelection,
    cfg: &IntervalConfig,
) -> Result<TransectEstimate> {
    if !sel.reflected {
        return Err(Error::InvalidArgument(
            "intervals for f(0) need a selection made on reflected distances".into(),
        ));
    }
    if cfg.bootstrap < MIN_BOOTSTRAP {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_BOOTSTRAP} bootstrap replicates, got {}",
            cfg.bootstrap
        )));
    }
    let x = sel.jittered.values();
    if x.len() != g.n() {
        return Err(Error::InvalidArgument(format!(
            "selection was made on {} observations but the grouped data has {}",
            x.len(),
            g.n()
        )));
    }
    let (h_in, h_s) = (sel.h_in, sel.h_s);
    let f0_s = f0_hat(x, h_s)?;
    let f0_in = f0_hat(x, h_in)?;
    let (sigma0, _) = folded_sigma0(x, h_s)?;

    let streams = RngStreams::new(cfg.seed);
    let replicates: Vec<Replicate> = (0..cfg.bootstrap)
        .into_par_iter()
        .map(|b| {
            let mut rng = streams.stream(Purpose::IntervalBootstrap, b as u64);
            let xs = folded_resample(x, h_in, &mut rng);
            let f0 = f0_hat(&xs, h_s)?;
            let (sigma0, floored) = folded_sigma0(&xs, h_s)?;
            Ok(Replicate {
                f0,
                sigma0,
                floored,
            })
        })
        .collect::<Result<_>>()?;

    intervals_from_replicates(&replicates, x.len(), f0_s, f0_in, sigma0, cfg, h_in, h_s)
}
