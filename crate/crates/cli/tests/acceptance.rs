//! Acceptance criteria. Runs without the libtest harness so that every
//! criterion prints its `PASS`/`FAIL` line; exits nonzero if any fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use grouped_kde::bandwidth::{bmise, cv_score, BmiseObjective};
use grouped_kde::grouped::{
    stake_data, ContinuousSample, STAKE_LINE_LENGTH, STAKE_TRUE_DENSITY_PER_HA,
};
use grouped_kde::inference::{quantile, sigma_hat};
use grouped_kde::kernel::{gaussian_kernel, l2_cross_integral, DensityEstimate};
use grouped_kde::simulation::{halfnormal_transect_bins, study_model, StudyConfig, StudyRow};
use grouped_kde::streams::{Purpose, RngStreams};
use grouped_kde::{
    bootstrap_pivots, select_bandwidth, IntervalConfig, SearchRange, SelectorConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: std::ops::RangeInclusive<u64> = 1..=20;
const PER_HECTARE: f64 = 1e4;

fn report(criterion: &str, pass: bool, detail: String) {
    println!(
        "{} {criterion}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len().is_multiple_of(2) {
        (v[m - 1] + v[m]) / 2.0
    } else {
        v[m]
    }
}

fn criterion_1_stake_data() -> bool {
    let g = stake_data();
    let mut d = Vec::new();
    let mut covered = 0;
    let mut slowest = Duration::ZERO;
    for seed in SEEDS {
        let start = Instant::now();
        let sel = select_bandwidth(
            &g,
            &SelectorConfig {
                seed,
                ..Default::default()
            },
        )
        .unwrap();
        let est = bootstrap_pivots(
            &g,
            &sel,
            &IntervalConfig {
                line_length: STAKE_LINE_LENGTH,
                seed,
                ..Default::default()
            },
        )
        .unwrap();
        slowest = slowest.max(start.elapsed());
        d.push(est.d_hat * PER_HECTARE);
        let ci = est.ci_d;
        if (ci.lower * PER_HECTARE..=ci.upper * PER_HECTARE).contains(&STAKE_TRUE_DENSITY_PER_HA) {
            covered += 1;
        }
    }
    let med = median(&d);
    let pass = (31.6..=38.6).contains(&med) && covered >= 18 && slowest <= Duration::from_secs(120);
    report(
        "1 stake data",
        pass,
        format!(
            "median D = {med:.3}/ha (band [31.6, 38.6]), 95% D interval covers 37.5 in {covered}/20 (need 18), slowest run {:.2}s (limit 120s)",
            slowest.as_secs_f64()
        ),
    );
    pass
}

const MODELS: [u32; 4] = [1, 2, 3, 4];
const TABLE_H_S: [f64; 4] = [0.154, 0.144, 0.074, 0.112];

fn study() -> &'static Vec<Vec<StudyRow>> {
    static STUDY: OnceLock<Vec<Vec<StudyRow>>> = OnceLock::new();
    STUDY.get_or_init(|| {
        MODELS
            .iter()
            .map(|&m| {
                SEEDS
                    .map(|seed| {
                        study_model(
                            m,
                            500,
                            0.25,
                            &StudyConfig {
                                seed,
                                ..Default::default()
                            },
                        )
                        .unwrap()
                    })
                    .collect()
            })
            .collect()
    })
}

fn criterion_2_bandwidth_bands() -> bool {
    let rows = study();
    let mut pass = true;
    let mut parts = Vec::new();
    for (i, model_rows) in rows.iter().enumerate() {
        let h: Vec<f64> = model_rows.iter().map(|r| r.h_s).collect();
        let med = median(&h);
        let (lo, hi) = (0.6 * TABLE_H_S[i], 1.4 * TABLE_H_S[i]);
        let in_band = (lo..=hi).contains(&med);
        let flagged = model_rows
            .iter()
            .filter(|r| r.cv_binned_at_boundary)
            .count();
        pass &= in_band && flagged == model_rows.len();
        parts.push(format!(
            "model {}: median h_S {med:.4} in [{lo:.4}, {hi:.4}] {}, binned-CV flagged {flagged}/{}",
            MODELS[i],
            if in_band { "yes" } else { "NO" },
            model_rows.len()
        ));
    }
    report("2 bandwidth bands", pass, parts.join("; "));
    pass
}

fn criterion_3_ise_dominance() -> bool {
    let rows = study();
    let all: Vec<&StudyRow> = rows.iter().flatten().collect();
    let dominated = all
        .iter()
        .filter(|r| r.ise_smoothed < r.ise_cv_binned)
        .count();
    let close = all
        .iter()
        .filter(|r| r.ise_smoothed <= 1.5 * r.ise_cv_raw)
        .count();
    let pass = dominated == all.len() && close as f64 >= 0.8 * all.len() as f64;
    report(
        "3 ISE dominance",
        pass,
        format!(
            "ISE(h_S) < ISE(h_cv_binned) in {dominated}/{} runs (need all), ISE(h_S) <= 1.5 ISE(h_cv_raw) in {close}/{} (need 80%)",
            all.len(),
            all.len()
        ),
    );
    pass
}

fn criterion_4_halfnormal_coverage() -> bool {
    const REPS: u64 = 100;
    let master = RngStreams::new(4);
    let mut covered = 0;
    let mut f0 = Vec::new();
    let mut truth = 0.0;
    for rep in 0..REPS {
        let mut rng = master.stream(Purpose::Simulation, rep);
        let (g, f0_true) = halfnormal_transect_bins(10.0, 105, 20, &mut rng).unwrap();
        truth = f0_true;
        let seed = master.child(rep).seed();
        let sel = select_bandwidth(
            &g,
            &SelectorConfig {
                bootstrap_samples: 400,
                seed,
                ..Default::default()
            },
        )
        .unwrap();
        let est = bootstrap_pivots(
            &g,
            &sel,
            &IntervalConfig {
                bootstrap: 400,
                line_length: 1.0,
                seed,
                ..Default::default()
            },
        )
        .unwrap();
        f0.push(est.f0_hat);
        if est.ci_f0_studentized.contains(f0_true) {
            covered += 1;
        }
    }
    let med = median(&f0);
    let rel = (med - 0.0798).abs() / 0.0798;
    let pass = (88..=99).contains(&covered) && rel <= 0.15;
    report(
        "4 half-normal coverage",
        pass,
        format!(
            "studentized f(0) interval covers {truth:.6} in {covered}/{REPS} (band 88-99), median f(0) {med:.5} ({:.1}% from 0.0798, limit 15%)",
            100.0 * rel
        ),
    );
    pass
}

/// Composite Simpson on `[a, b]` with `panels` (even) panels.
fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    let mut s = f(a) + f(b);
    for i in 1..panels {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn brute_force_cv(x: &[f64], h: f64) -> f64 {
    let n = x.len();
    let f = |t: f64| {
        x.iter()
            .map(|&xi| gaussian_kernel((t - xi) / h))
            .sum::<f64>()
            / (n as f64 * h)
    };
    let (lo, hi) = x
        .iter()
        .fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
    let integral = simpson(|t| f(t).powi(2), lo - 12.0 * h, hi + 12.0 * h, 200_000);
    let mut loo = 0.0;
    for i in 0..n {
        let mut s = 0.0;
        for j in 0..n {
            if i != j {
                s += gaussian_kernel((x[i] - x[j]) / h);
            }
        }
        loo += s / ((n - 1) as f64 * h);
    }
    integral - 2.0 * loo / n as f64
}

fn criterion_5_oracle_suite() -> bool {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut failures = Vec::new();

    // Cross-validation score against leave-one-out loops and quadrature.
    let mut cv_err: f64 = 0.0;
    for n in [2usize, 3, 10, 25, 50] {
        let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 8.0 - 4.0).collect();
        let s = ContinuousSample::observed(x.clone()).unwrap();
        for h in [0.07, 0.5, 2.0] {
            let (fast, slow) = (cv_score(&s, h).unwrap(), brute_force_cv(&x, h));
            cv_err = cv_err.max(((fast - slow) / slow).abs());
        }
    }
    if cv_err >= 1e-8 {
        failures.push(format!("cv_score rel err {cv_err:.2e}"));
    }

    // L2 cross integral and bootstrap MISE against quadrature.
    let mut l2_err: f64 = 0.0;
    let mut bmise_err: f64 = 0.0;
    for _ in 0..5 {
        let a: Vec<f64> = (0..7).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
        let b: Vec<f64> = (0..5).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
        let (ea, eb) = (
            DensityEstimate::new(a.clone(), 0.3).unwrap(),
            DensityEstimate::new(b.clone(), 0.45).unwrap(),
        );
        let quad = simpson(|t| ea.evaluate(t) * eb.evaluate(t), -10.0, 10.0, 100_000);
        l2_err = l2_err.max(((l2_cross_integral(&ea, &eb) - quad) / quad).abs());

        let boots: Vec<ContinuousSample> = (0..3)
            .map(|_| {
                ContinuousSample::observed(
                    (0..5).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect(),
                )
                .unwrap()
            })
            .collect();
        for h in [0.1, 0.4, 1.1] {
            let quad = boots
                .iter()
                .map(|s| {
                    let e = DensityEstimate::new(s.values().to_vec(), h).unwrap();
                    simpson(
                        |t| (e.evaluate(t) - eb.evaluate(t)).powi(2),
                        -15.0,
                        15.0,
                        100_000,
                    )
                })
                .sum::<f64>()
                / boots.len() as f64;
            let range = SearchRange::new(0.05, 2.0, 16).unwrap();
            let table = BmiseObjective::from_samples(&eb, &boots, &range).unwrap();
            for v in [bmise(h, &boots, &eb).unwrap(), table.score(h)] {
                bmise_err = bmise_err.max(((v - quad) / quad).abs());
            }
        }
    }
    if l2_err >= 1e-6 {
        failures.push(format!("l2_cross_integral rel err {l2_err:.2e}"));
    }
    if bmise_err >= 1e-6 {
        failures.push(format!("bmise rel err {bmise_err:.2e}"));
    }

    // Standard deviation of the estimate against the literal formula.
    let mut sigma_exact = true;
    for n in [3usize, 20, 68] {
        let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 5.0).collect();
        let s = ContinuousSample::observed(x.clone()).unwrap();
        for (h, at) in [(0.4, 0.0), (1.3, 2.0)] {
            let nh = n as f64 * h;
            let f = x
                .iter()
                .map(|&xi| gaussian_kernel((at - xi) / h))
                .sum::<f64>()
                / nh;
            let sq = x
                .iter()
                .map(|&xi| gaussian_kernel((at - xi) / h).powi(2))
                .sum::<f64>();
            let literal = ((sq / nh - h * f * f).max(0.0) / nh).sqrt();
            sigma_exact &= sigma_hat(&s, h, at, f).unwrap() == literal;
        }
    }
    if !sigma_exact {
        failures.push("sigma_hat differs from the literal formula".into());
    }

    // Quantile against the sorted-array order statistic.
    let mut quantile_ok = true;
    for b in [1usize, 7, 100, 400, 1000] {
        let v: Vec<f64> = (0..b).map(|_| rng.random::<f64>()).collect();
        let mut sorted = v.clone();
        sorted.sort_by(f64::total_cmp);
        for p in [0.0, 0.025, 0.1, 0.5, 0.975, 1.0] {
            // Empirical inverse CDF: the first order statistic whose rank fraction reaches p.
            let k = (1..=b).find(|&k| k as f64 / b as f64 >= p).unwrap();
            quantile_ok &= quantile(&v, p).unwrap() == sorted[k - 1];
        }
    }
    if !quantile_ok {
        failures.push("quantile differs from the order statistic".into());
    }

    let elapsed = start.elapsed();
    if elapsed >= Duration::from_secs(30) {
        failures.push(format!("took {:.1}s", elapsed.as_secs_f64()));
    }
    let pass = failures.is_empty();
    report(
        "5 oracle suite",
        pass,
        format!(
            "cv {cv_err:.1e} (< 1e-8), l2 {l2_err:.1e} / bmise {bmise_err:.1e} (< 1e-6), sigma exact {sigma_exact}, quantile {quantile_ok}, {:.1}s (< 30s){}",
            elapsed.as_secs_f64(),
            if pass { String::new() } else { format!(" -- {}", failures.join(", ")) }
        ),
    );
    pass
}

fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_grouped-kde")
}

fn stake_csv(dir: &Path) -> PathBuf {
    let p = dir.join("stake.csv");
    std::fs::write(&p, grouped_kde::grouped::STAKE_CSV).unwrap();
    p
}

/// Run a command in `dir` and return every output file's bytes, by name.
fn run_outputs(dir: &Path, threads: usize, args: &[&str]) -> Vec<(String, Vec<u8>)> {
    let out = dir.join("out");
    let _ = std::fs::remove_dir_all(&out);
    std::fs::create_dir(&out).unwrap();
    let status = Command::new(binary())
        .current_dir(dir)
        .arg("--threads")
        .arg(threads.to_string())
        .args(args)
        .output()
        .unwrap();
    assert!(
        status.status.success(),
        "{}",
        String::from_utf8_lossy(&status.stderr)
    );
    let mut files: Vec<(String, Vec<u8>)> = walk(&out)
        .into_iter()
        .map(|p| {
            (
                p.strip_prefix(&out).unwrap().display().to_string(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn walk(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

fn criterion_6_determinism() -> bool {
    let dir = tempfile::tempdir().unwrap();
    stake_csv(dir.path());
    let commands: [(&str, Vec<&str>); 3] = [
        (
            "estimate",
            vec![
                "estimate",
                "--input",
                "stake.csv",
                "--line-length",
                "1000",
                "--seed",
                "9",
                "--pilot-reps",
                "200",
                "--bootstrap",
                "200",
                "--out-json",
                "out/e.json",
                "--out-curves",
                "out/curves",
            ],
        ),
        (
            "select-bw",
            vec![
                "select-bw",
                "--input",
                "stake.csv",
                "--seed",
                "9",
                "--pilot-reps",
                "200",
                "--bootstrap",
                "200",
                "--out-json",
                "out/s.json",
                "--out-curves",
                "out/curves",
            ],
        ),
        (
            "simulate",
            vec![
                "simulate",
                "--n",
                "200",
                "--seed",
                "9",
                "--pilot-reps",
                "40",
                "--bootstrap",
                "40",
                "--out-table",
                "out/t.csv",
                "--out-json",
                "out/sim.json",
                "--out-curves",
                "out/curves",
            ],
        ),
    ];
    let mut parts = Vec::new();
    let mut pass = true;
    for (name, args) in &commands {
        let a = run_outputs(dir.path(), 1, args);
        let b = run_outputs(dir.path(), 1, args);
        let c = run_outputs(dir.path(), 4, args);
        let ok = !a.is_empty() && a == b && a == c;
        pass &= ok;
        parts.push(format!(
            "{name}: {} files {}",
            a.len(),
            if ok { "identical" } else { "DIFFER" }
        ));
    }
    report(
        "6 determinism",
        pass,
        format!(
            "runs x2 at 1 thread and once at 4 threads; {}",
            parts.join(", ")
        ),
    );
    pass
}

fn main() {
    let criteria: [(&str, fn() -> bool); 6] = [
        ("5", criterion_5_oracle_suite),
        ("6", criterion_6_determinism),
        ("1", criterion_1_stake_data),
        ("2", criterion_2_bandwidth_bands),
        ("3", criterion_3_ise_dominance),
        ("4", criterion_4_halfnormal_coverage),
    ];
    let failed: Vec<&str> = criteria
        .iter()
        .filter(|(_, run)| !run())
        .map(|(name, _)| *name)
        .collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria pass", criteria.len());
    } else {
        println!(
            "acceptance: {} of {} criteria fail ({})",
            failed.len(),
            criteria.len(),
            failed.join(", ")
        );
        std::process::exit(1);
    }
}
