use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use grouped_kde::bandwidth::{self, BandwidthSelection};
use grouped_kde::grouped::read_grouped_csv_path;
use grouped_kde::kernel::{linear_grid, write_curve_csv, DensityEstimate};
use grouped_kde::simulation::{builtin_model, run_bandwidth_study, StudyConfig, StudyResult};
use grouped_kde::{
    bootstrap_pivots, GroupedSample, IntervalConfig, SearchRange, SelectorConfig, TransectEstimate,
};

mod output;
use output::Outputs;

const CURVE_POINTS: usize = 401;

#[derive(Parser)]
#[command(
    name = "grouped-kde",
    version,
    about = "Kernel density estimation for grouped data"
)]
struct Cli {
    /// Worker threads (defaults to all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate f(0) and the line-transect density D with bootstrap intervals.
    Estimate(EstimateArgs),
    /// Select the bandwidth for grouped data.
    SelectBw(SelectArgs),
    /// Compare bandwidth selectors on binned samples from the built-in mixtures.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct Common {
    /// Jitter replicates averaged into the pilot bandwidth.
    #[arg(long, default_value_t = 1000)]
    pilot_reps: usize,
    /// Bootstrap replicates B.
    #[arg(long, default_value_t = 1000)]
    bootstrap: usize,
    /// Master seed; drawn at random (and reported) when omitted.
    #[arg(long)]
    seed: Option<u64>,
    /// Lower end of the bandwidth search range.
    #[arg(long, requires = "h_max")]
    h_min: Option<f64>,
    #[arg(long, requires = "h_min")]
    h_max: Option<f64>,
    #[arg(long)]
    out_json: Option<PathBuf>,
    /// Directory for curve CSVs.
    #[arg(long)]
    out_curves: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    /// Grouped CSV of perpendicular distances (`lower,upper,count`).
    #[arg(long)]
    input: PathBuf,
    /// Total transect length L, in the distance unit.
    #[arg(long)]
    line_length: f64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Variance of the number of detections; Poisson (= n) by default.
    #[arg(long)]
    count_variance: Option<f64>,
    /// Factor applied to D for reporting, e.g. 1e4 for per hectare from metres.
    #[arg(long, default_value_t = 1.0)]
    density_scale: f64,
    /// Unit label for distances, carried through to the output.
    #[arg(long, default_value = "")]
    units: String,
    #[command(flatten)]
    common: Common,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Support {
    /// Distances on [0, inf): reflect about zero.
    Distance,
    /// Unbounded data.
    Line,
}

#[derive(Args)]
struct SelectArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = Support::Distance)]
    support: Support,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct SimulateArgs {
    /// Comma-separated model ids (1 gaussian, 2 separated bimodal, 3 claw, 4 asymmetric claw).
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
    models: Vec<u32>,
    #[arg(long, default_value_t = 500)]
    n: usize,
    #[arg(long, default_value_t = 0.25)]
    bin_width: f64,
    /// Bin origin; defaults to the sample minimum rounded down to the bin width.
    #[arg(long, allow_negative_numbers = true)]
    bin_origin: Option<f64>,
    /// Table CSV, one row per model.
    #[arg(long)]
    out_table: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

/// Everything that determines a result. Output locations and the thread count
/// are deliberately absent so that reruns compare byte for byte.
#[derive(Serialize)]
struct RunConfig {
    command: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    input: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    line_length: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    count_variance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    density_scale: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    units: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    support: Option<Support>,
    pilot_reps: usize,
    bootstrap: usize,
    seed: u64,
    h_range: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    models: Option<Vec<u32>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bin_width: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bin_origin: Option<f64>,
}

impl RunConfig {
    fn new(command: &'static str, common: &Common, seed: u64) -> Self {
        Self {
            command,
            input: None,
            line_length: None,
            alpha: None,
            count_variance: None,
            density_scale: None,
            units: None,
            support: None,
            pilot_reps: common.pilot_reps,
            bootstrap: common.bootstrap,
            seed,
            h_range: common.h_min.zip(common.h_max).map(|(a, b)| [a, b]),
            models: None,
            n: None,
            bin_width: None,
            bin_origin: None,
        }
    }
}

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    version: &'static str,
    config: &'a RunConfig,
    result: T,
    warnings: &'a [String],
}

#[derive(Serialize)]
struct EstimateResult<'a> {
    #[serde(flatten)]
    estimate: &'a TransectEstimate,
    /// `d_hat` and `ci_d` multiplied by `density_scale`.
    d_scaled: f64,
    ci_d_scaled: [f64; 2],
    units: &'a str,
}

#[derive(Serialize)]
struct SelectionResult<'a> {
    h_in: f64,
    h_s: f64,
    pilot_reps: usize,
    boundary_warnings: usize,
    bmise_at_boundary: bool,
    bootstrap_samples: usize,
    reflected: bool,
    h_range: [f64; 2],
    seed: u64,
    n: usize,
    cv_curve: &'a [grouped_kde::optimize::CurvePoint],
    bmise_curve: &'a [grouped_kde::optimize::CurvePoint],
}

impl<'a> SelectionResult<'a> {
    fn new(sel: &'a BandwidthSelection) -> Self {
        Self {
            h_in: sel.h_in,
            h_s: sel.h_s,
            pilot_reps: sel.pilot_reps,
            boundary_warnings: sel.boundary_warnings,
            bmise_at_boundary: sel.bmise_at_boundary,
            bootstrap_samples: sel.bootstrap_samples,
            reflected: sel.reflected,
            h_range: [sel.range.lower(), sel.range.upper()],
            seed: sel.seed,
            n: sel.jittered.len(),
            cv_curve: &sel.cv_curve,
            bmise_curve: &sel.bmise_curve,
        }
    }
}

fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s = rand::random::<u64>();
        eprintln!("note: no --seed given, using {s}");
        s
    })
}

fn search_range(common: &Common) -> Result<Option<SearchRange>> {
    match (common.h_min, common.h_max) {
        (Some(lo), Some(hi)) => Ok(Some(SearchRange::new(lo, hi, SearchRange::DEFAULT_GRID)?)),
        _ => Ok(None),
    }
}

fn read_input(path: &Path) -> Result<GroupedSample> {
    read_grouped_csv_path(path).with_context(|| format!("reading {}", path.display()))
}

fn write_json<T: Serialize>(outputs: &mut Outputs, path: &Path, report: &T) -> Result<()> {
    outputs.write(path, |w| {
        serde_json::to_writer_pretty(&mut *w, report)?;
        writeln!(w)?;
        Ok(())
    })
}

fn write_selection_curves(
    outputs: &mut Outputs,
    dir: &Path,
    sel: &BandwidthSelection,
) -> Result<()> {
    outputs.dir(dir)?;
    outputs.write(&dir.join("cv_curve.csv"), |w| {
        Ok(bandwidth::write_curve_csv(w, &sel.cv_curve)?)
    })?;
    outputs.write(&dir.join("bmise_curve.csv"), |w| {
        Ok(bandwidth::write_curve_csv(w, &sel.bmise_curve)?)
    })?;
    Ok(())
}

fn write_density_curve(
    outputs: &mut Outputs,
    dir: &Path,
    g: &GroupedSample,
    sel: &BandwidthSelection,
) -> Result<()> {
    let lo = if sel.reflected { 0.0 } else { g.edges()[0] };
    let hi = *g.edges().last().expect("grouped data has edges");
    let grid = linear_grid(lo, hi, CURVE_POINTS);
    outputs.write(&dir.join("density.csv"), |w| {
        if sel.reflected {
            let est = DensityEstimate::new(sel.jittered.values().to_vec(), sel.h_s)?;
            write_curve_csv(w, &grid, |x| {
                est.folded_eval(x).expect("grid is nonnegative")
            })?;
        } else {
            let est = sel.estimate(sel.h_s)?;
            write_curve_csv(w, &grid, |x| est.evaluate(x))?;
        }
        Ok(())
    })
}

fn check_common(common: &Common) -> Result<()> {
    ensure!(common.pilot_reps > 0, "--pilot-reps must be positive");
    ensure!(common.bootstrap > 0, "--bootstrap must be positive");
    Ok(())
}

fn cmd_estimate(args: EstimateArgs) -> Result<()> {
    check_common(&args.common)?;
    ensure!(
        args.line_length > 0.0 && args.line_length.is_finite(),
        "--line-length must be positive"
    );
    ensure!(
        args.alpha > 0.0 && args.alpha < 1.0,
        "--alpha must lie in (0, 1)"
    );
    ensure!(args.density_scale > 0.0, "--density-scale must be positive");
    let seed = resolve_seed(args.common.seed);
    let g = read_input(&args.input)?;

    let sel = grouped_kde::select_bandwidth(
        &g,
        &SelectorConfig {
            pilot_reps: args.common.pilot_reps,
            bootstrap_samples: args.common.bootstrap,
            range: search_range(&args.common)?,
            reflect: true,
            seed,
        },
    )?;
    let est = bootstrap_pivots(
        &g,
        &sel,
        &IntervalConfig {
            bootstrap: args.common.bootstrap,
            line_length: args.line_length,
            alpha: args.alpha,
            count_variance: args.count_variance,
            seed,
        },
    )?;

    let mut warnings = sel.warnings();
    if est.floored_variances > 0 {
        warnings.push(format!(
            "{} bootstrap variance estimates were negative and set to zero",
            est.floored_variances
        ));
    }
    for w in &warnings {
        eprintln!("warning: {w}");
    }

    let scale = args.density_scale;
    let mut config = RunConfig::new("estimate", &args.common, seed);
    config.input = Some(args.input.display().to_string());
    config.line_length = Some(args.line_length);
    config.alpha = Some(args.alpha);
    config.count_variance = args.count_variance;
    config.density_scale = Some(scale);
    config.units = Some(args.units.clone());

    let level = 100.0 * (1.0 - args.alpha);
    let unit = if args.units.is_empty() {
        String::new()
    } else {
        format!(" {}", args.units)
    };
    println!("n = {}, L = {}{unit}", est.n, est.line_length);
    println!("h_in = {:.6}, h_S = {:.6}", est.h_in, est.h_s);
    println!("f(0) = {:.6} (se {:.6})", est.f0_hat, est.se_f0);
    println!(
        "  {level}% pivot interval       [{:.6}, {:.6}]",
        est.ci_f0_pivot.lower, est.ci_f0_pivot.upper
    );
    println!(
        "  {level}% studentized interval [{:.6}, {:.6}]",
        est.ci_f0_studentized.lower, est.ci_f0_studentized.upper
    );
    println!("D = {:.6} (se {:.6})", est.d_hat * scale, est.se_d * scale);
    println!(
        "  {level}% interval [{:.6}, {:.6}]",
        est.ci_d.lower * scale,
        est.ci_d.upper * scale
    );

    let mut outputs = Outputs::default();
    if let Some(path) = &args.common.out_json {
        let result = EstimateResult {
            estimate: &est,
            d_scaled: est.d_hat * scale,
            ci_d_scaled: [est.ci_d.lower * scale, est.ci_d.upper * scale],
            units: &args.units,
        };
        let report = Report {
            version: env!("CARGO_PKG_VERSION"),
            config: &config,
            result,
            warnings: &warnings,
        };
        write_json(&mut outputs, path, &report)?;
    }
    if let Some(dir) = &args.common.out_curves {
        write_selection_curves(&mut outputs, dir, &sel)?;
        write_density_curve(&mut outputs, dir, &g, &sel)?;
    }
    outputs.commit()
}

fn cmd_select_bw(args: SelectArgs) -> Result<()> {
    check_common(&args.common)?;
    let seed = resolve_seed(args.common.seed);
    let g = read_input(&args.input)?;
    let reflect = matches!(args.support, Support::Distance);
    let sel = grouped_kde::select_bandwidth(
        &g,
        &SelectorConfig {
            pilot_reps: args.common.pilot_reps,
            bootstrap_samples: args.common.bootstrap,
            range: search_range(&args.common)?,
            reflect,
            seed,
        },
    )?;
    let warnings = sel.warnings();
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    println!("h_in = {:.6}", sel.h_in);
    println!("h_S  = {:.6}", sel.h_s);
    println!(
        "pilot fits at a range end: {} of {}",
        sel.boundary_warnings, sel.pilot_reps
    );

    let mut config = RunConfig::new("select-bw", &args.common, seed);
    config.input = Some(args.input.display().to_string());
    config.support = Some(args.support);

    let mut outputs = Outputs::default();
    if let Some(path) = &args.common.out_json {
        let report = Report {
            version: env!("CARGO_PKG_VERSION"),
            config: &config,
            result: SelectionResult::new(&sel),
            warnings: &warnings,
        };
        write_json(&mut outputs, path, &report)?;
    }
    if let Some(dir) = &args.common.out_curves {
        write_selection_curves(&mut outputs, dir, &sel)?;
        write_density_curve(&mut outputs, dir, &g, &sel)?;
    }
    outputs.commit()
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    check_common(&args.common)?;
    ensure!(
        !args.models.is_empty(),
        "--models must name at least one model"
    );
    for &m in &args.models {
        builtin_model(m).with_context(|| format!("--models {m}"))?;
    }
    ensure!(args.n >= 2, "--n must be at least 2");
    ensure!(args.bin_width > 0.0, "--bin-width must be positive");
    if args.common.h_min.is_some() {
        bail!("simulate uses each sample's own search range; --h-min/--h-max are not supported");
    }
    let seed = resolve_seed(args.common.seed);
    let cfg = StudyConfig {
        pilot_reps: args.common.pilot_reps,
        bootstrap_samples: args.common.bootstrap,
        origin: args.bin_origin,
        seed,
    };
    let study = run_bandwidth_study(&args.models, args.n, args.bin_width, &cfg)?;

    let mut warnings = Vec::new();
    for r in &study.rows {
        if r.cv_binned_at_boundary {
            warnings.push(format!(
                "model {}: cross-validation on binned data has its minimum at a range end",
                r.model
            ));
        }
    }
    for w in &warnings {
        eprintln!("note: {w}");
    }
    println!("model  h_cv_raw  h_cv_binned  h_in      h_S       ISE(h_S)");
    for r in &study.rows {
        println!(
            "{:<6} {:<9.4} {:<12.4} {:<9.4} {:<9.4} {:.3e}",
            r.model, r.h_cv_raw, r.h_cv_binned, r.h_in, r.h_s, r.ise_smoothed
        );
    }

    let mut config = RunConfig::new("simulate", &args.common, seed);
    config.models = Some(args.models.clone());
    config.n = Some(args.n);
    config.bin_width = Some(args.bin_width);
    config.bin_origin = args.bin_origin;

    let mut outputs = Outputs::default();
    if let Some(path) = &args.out_table {
        outputs.write(path, |w| Ok(study.write_csv(w)?))?;
    }
    if let Some(path) = &args.common.out_json {
        let report = Report {
            version: env!("CARGO_PKG_VERSION"),
            config: &config,
            result: &study,
            warnings: &warnings,
        };
        write_json(&mut outputs, path, &report)?;
    }
    if let Some(dir) = &args.common.out_curves {
        write_study_curves(&mut outputs, dir, &study)?;
    }
    outputs.commit()
}

fn write_study_curves(outputs: &mut Outputs, dir: &Path, study: &StudyResult) -> Result<()> {
    outputs.dir(dir)?;
    let grid = linear_grid(-3.5, 3.5, CURVE_POINTS);
    for row in &study.rows {
        let curves = row.curves(&grid)?;
        outputs.write(&dir.join(format!("model{}_density.csv", row.model)), |w| {
            let mut csv = csv::Writer::from_writer(w);
            csv.write_record(["x", "truth", "cv_raw", "cv_binned", "h_in", "h_s"])?;
            for c in &curves {
                csv.write_record(c.iter().map(|v| v.to_string()))?;
            }
            csv.flush()?;
            Ok(())
        })?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        ensure!(t > 0, "--threads must be positive");
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Estimate(a) => cmd_estimate(a),
        Command::SelectBw(a) => cmd_select_bw(a),
        Command::Simulate(a) => cmd_simulate(a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
