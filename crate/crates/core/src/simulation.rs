//! Simulation studies: normal-mixture test densities, binning, the comparison
//! of four bandwidth selectors on binned data, and a half-normal line-transect
//! generator.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bandwidth::{default_range, minimize_cv, select_bandwidth, SelectorConfig};
use crate::error::{Error, Result};
use crate::grouped::{ContinuousSample, GroupedSample};
use crate::kernel::{min_max, normal_pdf, DensityEstimate};
use crate::streams::{Purpose, RngStreams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub weight: f64,
    pub mean: f64,
    pub sd: f64,
}

/// `Σ p_k N(μ_k, σ_k²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureModel {
    components: Vec<Component>,
}

impl MixtureModel {
    pub fn new(components: Vec<Component>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidArgument("mixture needs a component".into()));
        }
        if let Some(c) = components
            .iter()
            .find(|c| !(c.weight > 0.0) || !(c.sd > 0.0) || !c.mean.is_finite())
        {
            return Err(Error::InvalidArgument(format!(
                "components need positive weight and sd, got {c:?}"
            )));
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "mixture weights sum to {total}, not 1"
            )));
        }
        Ok(Self { components })
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn density(&self, x: f64) -> f64 {
        self.components
            .iter()
            .map(|c| c.weight * normal_pdf(x - c.mean, c.sd))
            .sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> ContinuousSample {
        let pick = WeightedIndex::new(self.components.iter().map(|c| c.weight))
            .expect("weights validated on construction");
        let values = (0..n)
            .map(|_| {
                let c = &self.components[pick.sample(rng)];
                let z: f64 = rng.sample(StandardNormal);
                c.mean + c.sd * z
            })
            .collect();
        ContinuousSample::observed(values).expect("normal draws are finite")
    }

    /// `∫ f(x)² dx`.
    pub fn l2_norm_squared(&self) -> f64 {
        let mut s = 0.0;
        for a in &self.components {
            for b in &self.components {
                s += a.weight * b.weight * normal_pdf(a.mean - b.mean, a.sd.hypot(b.sd));
            }
        }
        s
    }

    /// `∫ f(x) est(x) dx`.
    pub fn cross_integral(&self, est: &DensityEstimate) -> f64 {
        let h = est.bandwidth();
        let m = est.centers().len() as f64;
        self.components
            .iter()
            .map(|c| {
                let sd = c.sd.hypot(h);
                c.weight
                    * est
                        .centers()
                        .iter()
                        .map(|&x| normal_pdf(x - c.mean, sd))
                        .sum::<f64>()
            })
            .sum::<f64>()
            / m
    }

    /// Integrated squared error of `est` against this density, exact in closed form.
    pub fn ise(&self, est: &DensityEstimate) -> f64 {
        (est.l2_norm_squared() - 2.0 * self.cross_integral(est) + self.l2_norm_squared()).max(0.0)
    }
}

fn comp(weight: f64, mean: f64, sd: f64) -> Component {
    Component { weight, mean, sd }
}

/// Test densities: 1 Gaussian, 2 separated bimodal, 3 claw, 4 asymmetric claw.
pub fn builtin_model(id: u32) -> Result<MixtureModel> {
    let components = match id {
        1 => vec![comp(1.0, 0.0, 1.0)],
        2 => vec![comp(0.5, -1.5, 0.5), comp(0.5, 1.5, 0.5)],
        3 => std::iter::once(comp(0.5, 0.0, 1.0))
            .chain((0..5).map(|k| comp(0.1, k as f64 / 2.0 - 1.0, 0.1)))
            .collect(),
        4 => std::iter::once(comp(0.5, 0.0, 1.0))
            .chain((-2..=2).map(|l: i32| {
                comp(
                    2f64.powi(1 - l) / 31.0,
                    l as f64 + 0.5,
                    2f64.powi(-l) / 10.0,
                )
            }))
            .collect(),
        other => return Err(Error::UnknownModel(other)),
    };
    MixtureModel::new(components)
}

pub fn model_name(id: u32) -> &'static str {
    match id {
        1 => "gaussian",
        2 => "separated bimodal",
        3 => "claw",
        4 => "asymmetric claw",
        _ => "unknown",
    }
}

/// Bin `values` on the mesh `origin + k width`, left-closed bins.
/// `origin` defaults to the sample minimum rounded down to a multiple of `width`.
pub fn bin(values: &[f64], width: f64, origin: Option<f64>) -> Result<GroupedSample> {
    if !(width > 0.0 && width.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "bin width must be positive, got {width}"
        )));
    }
    if values.is_empty() {
        return Err(Error::EmptySample);
    }
    let (lo, hi) = min_max(values);
    let origin = origin.unwrap_or_else(|| (lo / width).floor() * width);
    if origin > lo {
        return Err(Error::InvalidArgument(format!(
            "bin origin {origin} is above the smallest value {lo}"
        )));
    }
    let mut k = ((hi - origin) / width).floor() as usize + 1;
    while origin + k as f64 * width <= hi {
        k += 1;
    }
    let edges: Vec<f64> = (0..=k).map(|i| origin + i as f64 * width).collect();
    let mut counts = vec![0u64; k];
    for &x in values {
        let idx = edges.partition_point(|&e| e <= x) - 1;
        counts[idx] += 1;
    }
    GroupedSample::new(edges, counts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub pilot_reps: usize,
    pub bootstrap_samples: usize,
    pub origin: Option<f64>,
    pub seed: u64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            pilot_reps: 1000,
            bootstrap_samples: 1000,
            origin: None,
            seed: 0,
        }
    }
}

/// Four bandwidths for one model, and the ISE of the estimate each gives on
/// the binned data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub model: u32,
    pub n: usize,
    pub bin_width: f64,
    pub h_cv_raw: f64,
    pub h_cv_binned: f64,
    pub h_in: f64,
    pub h_s: f64,
    pub ise_cv_raw: f64,
    pub ise_cv_binned: f64,
    pub ise_pilot: f64,
    pub ise_smoothed: f64,
    pub cv_raw_at_boundary: bool,
    pub cv_binned_at_boundary: bool,
    pub pilot_boundary_warnings: usize,
    pub bmise_at_boundary: bool,
    pub seed: u64,
    pub binned: GroupedSample,
}

impl StudyRow {
    pub fn bandwidths(&self) -> [f64; 4] {
        [self.h_cv_raw, self.h_cv_binned, self.h_in, self.h_s]
    }

    /// Truth and the four binned-data estimates on `grid`:
    /// rows of `[x, truth, cv_raw, cv_binned, pilot, smoothed]`.
    pub fn curves(&self, grid: &[f64]) -> Result<Vec<[f64; 6]>> {
        let model = builtin_model(self.model)?;
        let centers = self.binned.expand().into_values();
        let est: Vec<DensityEstimate> = self
            .bandwidths()
            .iter()
            .map(|&h| DensityEstimate::new(centers.clone(), h))
            .collect::<Result<_>>()?;
        Ok(grid
            .iter()
            .map(|&x| {
                [
                    x,
                    model.density(x),
                    est[0].evaluate(x),
                    est[1].evaluate(x),
                    est[2].evaluate(x),
                    est[3].evaluate(x),
                ]
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub seed: u64,
    pub rows: Vec<StudyRow>,
}

impl StudyResult {
    pub const COLUMNS: [&'static str; 14] = [
        "model",
        "h_cv_raw",
        "h_cv_binned",
        "h_in",
        "h_s",
        "ise_cv_raw",
        "ise_cv_binned",
        "ise_pilot",
        "ise_smoothed",
        "cv_binned_at_boundary",
        "pilot_boundary_warnings",
        "bmise_at_boundary",
        "n",
        "seed",
    ];

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::COLUMNS)?;
        for r in &self.rows {
            w.write_record([
                r.model.to_string(),
                r.h_cv_raw.to_string(),
                r.h_cv_binned.to_string(),
                r.h_in.to_string(),
                r.h_s.to_string(),
                r.ise_cv_raw.to_string(),
                r.ise_cv_binned.to_string(),
                r.ise_pilot.to_string(),
                r.ise_smoothed.to_string(),
                r.cv_binned_at_boundary.to_string(),
                r.pilot_boundary_warnings.to_string(),
                r.bmise_at_boundary.to_string(),
                r.n.to_string(),
                r.seed.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// One model of the bandwidth comparison. Uses only streams derived from
/// `seed` and the model id, so a model's row does not depend on which other
/// models are run.
pub fn study_model(model_id: u32, n: usize, width: f64, cfg: &StudyConfig) -> Result<StudyRow> {
    let model = builtin_model(model_id)?;
    let streams = RngStreams::new(cfg.seed).child(u64::from(model_id));
    let raw = model.sample(n, &mut streams.stream(Purpose::Simulation, 0));
    let binned = bin(raw.values(), width, cfg.origin)?;
    let midpoints = binned.expand();

    let cv_raw = minimize_cv(&raw, &default_range(&raw)?)?;
    let cv_binned = minimize_cv(&midpoints, &default_range(&midpoints)?)?;
    let selection = select_bandwidth(
        &binned,
        &SelectorConfig {
            pilot_reps: cfg.pilot_reps,
            bootstrap_samples: cfg.bootstrap_samples,
            range: None,
            reflect: false,
            seed: streams.seed(),
        },
    )?;

    let ise = |h: f64| -> Result<f64> {
        Ok(model.ise(&DensityEstimate::new(midpoints.values().to_vec(), h)?))
    };
    Ok(StudyRow {
        model: model_id,
        n,
        bin_width: width,
        h_cv_raw: cv_raw.h,
        h_cv_binned: cv_binned.h,
        h_in: selection.h_in,
        h_s: selection.h_s,
        ise_cv_raw: ise(cv_raw.h)?,
        ise_cv_binned: ise(cv_binned.h)?,
        ise_pilot: ise(selection.h_in)?,
        ise_smoothed: ise(selection.h_s)?,
        cv_raw_at_boundary: cv_raw.at_boundary,
        cv_binned_at_boundary: cv_binned.at_boundary,
        pilot_boundary_warnings: selection.boundary_warnings,
        bmise_at_boundary: selection.bmise_at_boundary,
        seed: cfg.seed,
        binned,
    })
}

/// Sample `n` points from each model, bin at `width`, and compare the
/// raw-data CV, binned-data CV, pilot and smoothed-bootstrap bandwidths.
pub fn run_bandwidth_study(
    models: &[u32],
    n: usize,
    width: f64,
    cfg: &StudyConfig,
) -> Result<StudyResult> {
    if n < 2 {
        return Err(Error::TooFewObservations { needed: 2, got: n });
    }
    let rows = models
        .iter()
        .map(|&m| study_model(m, n, width, cfg))
        .collect::<Result<_>>()?;
    Ok(StudyResult {
        seed: cfg.seed,
        rows,
    })
}

/// `f(0)` for half-normal distances with scale `sigma`: `2 / (σ √(2π))`.
pub fn halfnormal_f0(sigma: f64) -> f64 {
    2.0 * normal_pdf(0.0, sigma)
}

fn halfnormal_draws<R: Rng + ?Sized>(sigma: f64, n: usize, rng: &mut R) -> Result<Vec<f64>> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    if n == 0 {
        return Err(Error::EmptySample);
    }
    Ok((0..n)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            (sigma * z).abs()
        })
        .collect())
}

/// Half-normal perpendicular distances binned at `width` from 0; returns the
/// grouped data and the true `f(0)`.
pub fn halfnormal_transect_generator<R: Rng + ?Sized>(
    sigma: f64,
    n: usize,
    width: f64,
    rng: &mut R,
) -> Result<(GroupedSample, f64)> {
    let x = halfnormal_draws(sigma, n, rng)?;
    Ok((bin(&x, width, Some(0.0))?, halfnormal_f0(sigma)))
}

/// As [`halfnormal_transect_generator`], but with `bins` equal-width classes
/// spanning `[0, max distance]`.
pub fn halfnormal_transect_bins<R: Rng + ?Sized>(
    sigma: f64,
    n: usize,
    bins: usize,
    rng: &mut R,
) -> Result<(GroupedSample, f64)> {
    if bins == 0 {
        return Err(Error::InvalidArgument("need at least one bin".into()));
    }
    let x = halfnormal_draws(sigma, n, rng)?;
    let (_, hi) = min_max(&x);
    let width = hi / bins as f64;
    let mut edges: Vec<f64> = (0..=bins).map(|k| k as f64 * width).collect();
    if edges[bins] <= hi {
        edges[bins] = hi.next_up();
    }
    let probe = GroupedSample::new(edges.clone(), {
        let mut c = vec![0; bins];
        c[0] = 1;
        c
    })?;
    let counts = probe.rebin(&x)?;
    Ok((GroupedSample::new(edges, counts)?, halfnormal_f0(sigma)))
}
