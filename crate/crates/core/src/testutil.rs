//! Quadrature oracle shared by unit tests.

/// Composite adaptive Simpson quadrature over `[a, b]`.
///
/// The interval is first cut into fixed panels so narrow peaks are never
/// skipped by the adaptive refinement.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    const PANELS: usize = 2048;
    let width = (b - a) / PANELS as f64;
    (0..PANELS)
        .map(|i| {
            let lo = a + width * i as f64;
            let hi = lo + width;
            let (flo, fmid, fhi) = (f(lo), f(0.5 * (lo + hi)), f(hi));
            let whole = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
            simpson(&f, lo, hi, flo, fmid, fhi, whole, 1e-15, 40)
        })
        .sum()
}

#[allow(clippy::too_many_arguments)]
fn simpson<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    eps: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * eps {
        left + right + delta / 15.0
    } else {
        simpson(f, a, m, fa, flm, fm, left, eps / 2.0, depth - 1)
            + simpson(f, m, b, fm, frm, fb, right, eps / 2.0, depth - 1)
    }
}
