//! Bandwidth selection for grouped data.
//!
//! Cross-validation on tied (binned) values is driven towards zero, so the
//! selector works in two stages:
//!
//! 1. Jitter the grouped data uniformly within bins (reflecting about zero for
//!    distance data) and minimize the cross-validation score. Averaging over
//!    many jitters gives the pilot bandwidth `h_in`.
//! 2. Draw smoothed bootstrap samples from the pilot estimate built on one
//!    retained jittered realization and minimize the bootstrap mean
//!    integrated squared error against that pilot, giving `h_S`.
//!
//! The same bootstrap samples are reused at every candidate bandwidth, so the
//! second objective is a deterministic, smooth function of `h`.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grouped::{ContinuousSample, GroupedSample, Provenance};
use crate::kernel::{
    check_bandwidth, gaussian_kernel, l2_cross_integral, min_max, DensityEstimate, FRAC_1_SQRT_2PI,
};
use crate::optimize::{minimize, CurvePoint, Minimum, SearchRange};
use crate::pairsum::PairMoments;
use crate::streams::{Purpose, RngStreams};

const FRAC_1_2SQRT_PI: f64 = 0.282_094_791_773_878_14;

/// Least-squares cross-validation score in closed form:
///
/// `CV(h) = (1/n²) Σ_{i,j} φ_{√2 h}(X_i - X_j) - (2 / (n (n-1) h)) Σ_{i≠j} K((X_i - X_j) / h)`.
pub fn cv_score(sample: &ContinuousSample, h: f64) -> Result<f64> {
    check_bandwidth(h)?;
    let x = sample.values();
    let n = x.len();
    if n < 2 {
        return Err(Error::TooFewObservations { needed: 2, got: n });
    }
    let sd2 = std::f64::consts::SQRT_2 * h;
    let (mut overlap, mut leave_out) = (0.0, 0.0);
    for (i, &a) in x.iter().enumerate() {
        for &b in &x[i + 1..] {
            let d = a - b;
            overlap += gaussian_kernel(d / sd2);
            leave_out += gaussian_kernel(d / h);
        }
    }
    let nf = n as f64;
    let integral = (nf * gaussian_kernel(0.0) + 2.0 * overlap) / (sd2 * nf * nf);
    let loo = 2.0 * leave_out / (h * (nf - 1.0));
    Ok(integral - 2.0 * loo / nf)
}

/// Cross-validation score backed by a pair-distance table; agrees with
/// [`cv_score`] to ~1e-12 relative for bandwidths inside `range`.
#[derive(Debug, Clone)]
pub struct CvObjective {
    n: f64,
    pairs: PairMoments,
}

impl CvObjective {
    pub fn new(sample: &ContinuousSample, range: &SearchRange) -> Result<Self> {
        let x = sample.values();
        if x.len() < 2 {
            return Err(Error::TooFewObservations {
                needed: 2,
                got: x.len(),
            });
        }
        let (lo, hi) = min_max(x);
        let lower = range.lower();
        let mut pairs = PairMoments::new(1.0 / (2.0 * lower * lower), (hi - lo) * (hi - lo));
        pairs.add_within(x, 1.0);
        Ok(Self {
            n: x.len() as f64,
            pairs,
        })
    }

    pub fn score(&self, h: f64) -> f64 {
        let n = self.n;
        let h2 = h * h;
        let overlap = self.pairs.sum_exp(0.25 / h2);
        let leave_out = self.pairs.sum_exp(0.5 / h2);
        let integral = FRAC_1_2SQRT_PI / h * (n + 2.0 * overlap) / (n * n);
        let loo = 2.0 * FRAC_1_SQRT_2PI * leave_out / (h * (n - 1.0));
        integral - 2.0 * loo / n
    }
}

/// Normal-reference range `[0.1 h_ref, 2 h_ref]` with `h_ref = 1.06 sd n^(-1/5)`.
pub fn default_range(sample: &ContinuousSample) -> Result<SearchRange> {
    let n = sample.len();
    if n < 2 {
        return Err(Error::TooFewObservations { needed: 2, got: n });
    }
    let sd = sample.std_dev();
    if !(sd > 0.0) {
        return Err(Error::ZeroVariance);
    }
    let h_ref = 1.06 * sd * (n as f64).powf(-0.2);
    SearchRange::new(0.1 * h_ref, 2.0 * h_ref, SearchRange::DEFAULT_GRID)
}

/// Cross-validation bandwidth over `range`.
pub fn minimize_cv(sample: &ContinuousSample, range: &SearchRange) -> Result<Minimum> {
    let objective = CvObjective::new(sample, range)?;
    Ok(minimize(range, |h| objective.score(h)))
}

/// Draw `m` values from the kernel estimate of `sample` with bandwidth `h`:
/// resample with replacement, then add `h` times standard normal noise.
pub fn smoothed_resample<R: Rng + ?Sized>(
    sample: &ContinuousSample,
    h: f64,
    m: usize,
    rng: &mut R,
) -> Result<ContinuousSample> {
    check_bandwidth(h)?;
    let y = sample.values();
    if y.is_empty() {
        return Err(Error::EmptySample);
    }
    let values = (0..m)
        .map(|_| {
            let pick = y[rng.random_range(0..y.len())];
            let z: f64 = rng.sample(StandardNormal);
            pick + h * z
        })
        .collect();
    Ok(ContinuousSample::from_parts(values, Provenance::Bootstrap))
}

/// Monte Carlo bootstrap MISE: the average over `boot_samples` of
/// `∫ (f̂_b(x; h) - pilot(x))² dx`, each term in closed form.
pub fn bmise(h: f64, boot_samples: &[ContinuousSample], pilot: &DensityEstimate) -> Result<f64> {
    check_bandwidth(h)?;
    if boot_samples.is_empty() {
        return Err(Error::EmptySample);
    }
    let pilot_norm = pilot.l2_norm_squared();
    let mut total = 0.0;
    for s in boot_samples {
        let est = DensityEstimate::new(s.values().to_vec(), h)?;
        total += est.l2_norm_squared() - 2.0 * l2_cross_integral(&est, pilot) + pilot_norm;
    }
    Ok(total / boot_samples.len() as f64)
}

fn bootstrap_resample(
    centers: &ContinuousSample,
    h_in: f64,
    index: usize,
    streams: &RngStreams,
) -> ContinuousSample {
    let mut rng = streams.stream(Purpose::BandwidthBootstrap, index as u64);
    smoothed_resample(centers, h_in, centers.len(), &mut rng)
        .expect("pilot bandwidth and centers are valid")
}

/// The `b` smoothed resamples that [`BmiseObjective::generate`] tabulates.
pub fn bandwidth_resamples(
    pilot: &DensityEstimate,
    b: usize,
    streams: &RngStreams,
) -> Vec<ContinuousSample> {
    let centers = ContinuousSample::from_parts(pilot.centers().to_vec(), Provenance::Jittered);
    (0..b)
        .map(|i| bootstrap_resample(&centers, pilot.bandwidth(), i, streams))
        .collect()
}

/// Samples per parallel work item when building the bootstrap tables. Fixed so
/// that the summation order never depends on the thread count.
const BOOTSTRAP_CHUNK: usize = 8;

/// Bootstrap MISE over a fixed set of smoothed resamples, backed by pair tables.
#[derive(Debug, Clone)]
pub struct BmiseObjective {
    size: f64,
    pilot_size: f64,
    samples: f64,
    pilot_h2: f64,
    pilot_norm: f64,
    within: PairMoments,
    between: PairMoments,
}

impl BmiseObjective {
    /// Generate `b` resamples of size `|pilot_centers|` from the pilot estimate
    /// and tabulate them. Resample `i` uses stream `i` of `streams`.
    pub fn generate(
        pilot: &DensityEstimate,
        b: usize,
        range: &SearchRange,
        streams: &RngStreams,
    ) -> Result<Self> {
        if b == 0 {
            return Err(Error::InvalidArgument(
                "need at least one bootstrap sample".into(),
            ));
        }
        let centers = ContinuousSample::from_parts(pilot.centers().to_vec(), Provenance::Jittered);
        let h_in = pilot.bandwidth();
        let tables = Self::empty_tables(pilot, range, 12.0);

        let chunks: Vec<(PairMoments, PairMoments)> = (0..b.div_ceil(BOOTSTRAP_CHUNK))
            .into_par_iter()
            .map(|c| {
                let (mut within, mut between) = tables.clone();
                let end = ((c + 1) * BOOTSTRAP_CHUNK).min(b);
                for i in c * BOOTSTRAP_CHUNK..end {
                    let s = bootstrap_resample(&centers, h_in, i, streams);
                    within.add_within(s.values(), 1.0);
                    between.add_between(s.values(), centers.values(), 1.0);
                }
                (within, between)
            })
            .collect();

        let (mut within, mut between) = tables;
        for (w, x) in &chunks {
            within.merge(w);
            between.merge(x);
        }
        Ok(Self::from_tables(pilot, centers.len(), b, within, between))
    }

    /// Tabulate caller-supplied resamples; all must have the same size.
    pub fn from_samples(
        pilot: &DensityEstimate,
        boot_samples: &[ContinuousSample],
        range: &SearchRange,
    ) -> Result<Self> {
        let m = boot_samples.first().ok_or(Error::EmptySample)?.len();
        if m == 0 || boot_samples.iter().any(|s| s.len() != m) {
            return Err(Error::InvalidArgument(
                "bootstrap samples must be nonempty and of equal size".into(),
            ));
        }
        let (mut within, mut between) = Self::empty_tables(pilot, range, 12.0);
        for s in boot_samples {
            within.add_within(s.values(), 1.0);
            between.add_between(s.values(), pilot.centers(), 1.0);
        }
        Ok(Self::from_tables(
            pilot,
            m,
            boot_samples.len(),
            within,
            between,
        ))
    }

    fn empty_tables(
        pilot: &DensityEstimate,
        range: &SearchRange,
        pad_sds: f64,
    ) -> (PairMoments, PairMoments) {
        let (lo, hi) = pilot.support(pad_sds);
        let span2 = (hi - lo) * (hi - lo);
        let lower2 = range.lower() * range.lower();
        let h_in2 = pilot.bandwidth() * pilot.bandwidth();
        (
            PairMoments::new(0.25 / lower2, span2),
            PairMoments::new(0.5 / (lower2 + h_in2), span2),
        )
    }

    fn from_tables(
        pilot: &DensityEstimate,
        m: usize,
        b: usize,
        within: PairMoments,
        between: PairMoments,
    ) -> Self {
        Self {
            size: m as f64,
            pilot_size: pilot.centers().len() as f64,
            samples: b as f64,
            pilot_h2: pilot.bandwidth() * pilot.bandwidth(),
            pilot_norm: pilot.l2_norm_squared(),
            within,
            between,
        }
    }

    pub fn score(&self, h: f64) -> f64 {
        let (m, b) = (self.size, self.samples);
        let h2 = h * h;
        let within = self.within.sum_exp(0.25 / h2);
        let s2 = h2 + self.pilot_h2;
        let between = self.between.sum_exp(0.5 / s2);
        let self_term = FRAC_1_2SQRT_PI / h * (m * b + 2.0 * within) / (m * m * b);
        let cross = FRAC_1_SQRT_2PI / s2.sqrt() * between / (m * self.pilot_size * b);
        self_term - 2.0 * cross + self.pilot_norm
    }
}

/// Average of per-jitter cross-validation bandwidths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotBandwidth {
    pub h_in: f64,
    pub boundary_warnings: usize,
    pub replicates: Vec<f64>,
}

/// The jittered (and, for distances, reflected) realization used by one pilot replicate.
fn jittered_realization<R: Rng + ?Sized>(
    g: &GroupedSample,
    reflect: bool,
    rng: &mut R,
) -> Result<ContinuousSample> {
    let j = g.jitter(rng);
    if reflect {
        j.symmetrize()
    } else {
        Ok(j)
    }
}

/// Pilot bandwidth from `reps` jittered cross-validation fits.
pub fn pilot_bandwidth(
    g: &GroupedSample,
    reps: usize,
    range: &SearchRange,
    reflect: bool,
    streams: &RngStreams,
) -> Result<PilotBandwidth> {
    if reps == 0 {
        return Err(Error::InvalidArgument(
            "pilot needs at least one replicate".into(),
        ));
    }
    let fits: Vec<(f64, bool)> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = streams.stream(Purpose::Pilot, r as u64);
            let y = jittered_realization(g, reflect, &mut rng)?;
            let m = minimize_cv(&y, range)?;
            Ok((m.h, m.at_boundary))
        })
        .collect::<Result<_>>()?;
    let replicates: Vec<f64> = fits.iter().map(|f| f.0).collect();
    Ok(PilotBandwidth {
        h_in: replicates.iter().sum::<f64>() / reps as f64,
        boundary_warnings: fits.iter().filter(|f| f.1).count(),
        replicates,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectorConfig {
    /// Jitter replicates averaged into the pilot bandwidth.
    pub pilot_reps: usize,
    /// Smoothed bootstrap samples in the BMISE average.
    pub bootstrap_samples: usize,
    /// Overrides the normal-reference search range.
    pub range: Option<SearchRange>,
    /// Reflect about zero before smoothing (perpendicular distances).
    pub reflect: bool,
    pub seed: u64,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        Self {
            pilot_reps: 1000,
            bootstrap_samples: 1000,
            range: None,
            reflect: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthSelection {
    pub h_in: f64,
    pub h_s: f64,
    pub pilot_reps: usize,
    /// Pilot replicates whose cross-validation minimum sat at a range end.
    pub boundary_warnings: usize,
    pub bmise_at_boundary: bool,
    pub bootstrap_samples: usize,
    pub reflected: bool,
    pub range: SearchRange,
    pub seed: u64,
    /// Cross-validation score of the retained jittered sample.
    pub cv_curve: Vec<CurvePoint>,
    pub bmise_curve: Vec<CurvePoint>,
    /// The retained jittered realization, before any reflection.
    pub jittered: ContinuousSample,
}

impl BandwidthSelection {
    /// The sample the pilot and final estimates are built on.
    pub fn reference_sample(&self) -> ContinuousSample {
        if self.reflected {
            self.jittered
                .symmetrize()
                .expect("jittered distances are nonnegative")
        } else {
            self.jittered.clone()
        }
    }

    /// Estimate of the reference sample at bandwidth `h`.
    pub fn estimate(&self, h: f64) -> Result<DensityEstimate> {
        DensityEstimate::new(self.reference_sample().into_values(), h)
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.boundary_warnings > 0 {
            out.push(format!(
                "{} of {} pilot cross-validation fits had their minimum at one end of the range",
                self.boundary_warnings, self.pilot_reps
            ));
        }
        if self.bmise_at_boundary {
            out.push(format!(
                "bootstrap MISE minimum occurred at one end of the range [{}, {}]",
                self.range.lower(),
                self.range.upper()
            ));
        }
        out
    }
}

/// Pilot cross-validation on jittered data, then smoothed-bootstrap MISE minimization.
pub fn select_bandwidth(g: &GroupedSample, cfg: &SelectorConfig) -> Result<BandwidthSelection> {
    if g.num_bins() < 3 {
        return Err(Error::InvalidArgument(format!(
            "kernel bandwidth selection needs at least 3 bins, got {}",
            g.num_bins()
        )));
    }
    if g.n() < 2 {
        return Err(Error::TooFewObservations {
            needed: 2,
            got: g.n(),
        });
    }
    if cfg.bootstrap_samples == 0 {
        return Err(Error::InvalidArgument(
            "need at least one bootstrap sample".into(),
        ));
    }
    let streams = RngStreams::new(cfg.seed);
    let jittered = g.jitter(&mut streams.stream(Purpose::Reference, 0));
    let reference = if cfg.reflect {
        jittered.symmetrize()?
    } else {
        jittered.clone()
    };
    let range = match cfg.range {
        Some(r) => r,
        None => default_range(&reference)?,
    };

    let pilot = pilot_bandwidth(g, cfg.pilot_reps, &range, cfg.reflect, &streams)?;
    let cv_curve = minimize_cv(&reference, &range)?.curve;

    let pilot_estimate = DensityEstimate::new(reference.values().to_vec(), pilot.h_in)?;
    let objective =
        BmiseObjective::generate(&pilot_estimate, cfg.bootstrap_samples, &range, &streams)?;
    let best = minimize(&range, |h| objective.score(h));

    Ok(BandwidthSelection {
        h_in: pilot.h_in,
        h_s: best.h,
        pilot_reps: cfg.pilot_reps,
        boundary_warnings: pilot.boundary_warnings,
        bmise_at_boundary: best.at_boundary,
        bootstrap_samples: cfg.bootstrap_samples,
        reflected: cfg.reflect,
        range,
        seed: cfg.seed,
        cv_curve,
        bmise_curve: best.curve,
        jittered,
    })
}

/// Write `h,score` rows.
pub fn write_curve_csv<W: std::io::Write>(out: W, curve: &[CurvePoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["h", "score"])?;
    for p in curve {
        w.write_record([p.h.to_string(), p.score.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
