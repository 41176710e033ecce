//! One-dimensional quadrature: a globally adaptive 21-point Gauss–Kronrod
//! integrator, a log-domain wrapper for integrands of the form `exp(g)`, and
//! Gauss–Legendre rules for the composite tensor/polar grids used in dim ≤ 2.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

#[allow(clippy::excessive_precision)]
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

#[allow(clippy::excessive_precision)]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_958_109_831_074,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

/// Tolerances and subdivision budget for [`integrate`].
#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-12,
            abs_tol: 0.0,
            max_intervals: 4000,
        }
    }
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: f64,
    pub abs_error: f64,
    /// Integral of `|f|`, used by callers that need a scale for tolerances.
    pub abs_value: f64,
    pub intervals: usize,
}

fn kronrod21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut res_k = WGK[10] * fc;
    let mut res_g = 0.0;
    let mut res_abs = (WGK[10] * fc).abs();
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let value = res_k * half;
    let err = ((res_k - res_g) * half).abs();
    (value, err, res_abs * half.abs())
}

#[derive(Debug)]
struct Piece {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
    abs_value: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

/// Globally adaptive Gauss–Kronrod integration of `f` over `[a, b]` (finite).
///
/// The interval with the largest error estimate is bisected until the summed
/// error is below `max(abs_tol, rel_tol·|I|)`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, opts: QuadOptions) -> Result<QuadResult> {
    integrate_with_breaks(f, &[a, b], opts)
}

/// As [`integrate`], with the initial partition given by `breaks` (sorted).
/// Kinks and peaks of the integrand should be listed here.
pub fn integrate_with_breaks<F: Fn(f64) -> f64>(
    f: F,
    breaks: &[f64],
    opts: QuadOptions,
) -> Result<QuadResult> {
    if breaks.len() < 2 {
        return Err(Error::InvalidInput("quadrature needs at least two break points".into()));
    }
    if breaks.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("quadrature limits must be finite".into()));
    }
    let mut heap = BinaryHeap::new();
    let mut total = 0.0;
    let mut total_err = 0.0;
    let mut total_abs = 0.0;
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let (value, err, abs_value) = kronrod21(&f, a, b);
        total += value;
        total_err += err;
        total_abs += abs_value;
        heap.push(Piece { a, b, value, err, abs_value });
    }
    if !total.is_finite() {
        return Err(Error::QuadratureFailure("integrand produced a non-finite value".into()));
    }
    loop {
        let tol = opts.abs_tol.max(opts.rel_tol * total.abs());
        if total_err <= tol || heap.is_empty() {
            break;
        }
        if heap.len() >= opts.max_intervals {
            // Accept when the residual error is at round-off level relative to |f|.
            if total_err <= 1e3 * f64::EPSILON * total_abs {
                break;
            }
            return Err(Error::QuadratureFailure(format!(
                "subdivision budget of {} intervals exhausted (error {:.3e}, target {:.3e})",
                opts.max_intervals, total_err, tol
            )));
        }
        let worst = heap.pop().expect("heap is non-empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval cannot be split further in floating point; freeze it.
            total_err -= worst.err;
            continue;
        }
        let (v1, e1, a1) = kronrod21(&f, worst.a, mid);
        let (v2, e2, a2) = kronrod21(&f, mid, worst.b);
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.err;
        total_abs += a1 + a2 - worst.abs_value;
        heap.push(Piece { a: worst.a, b: mid, value: v1, err: e1, abs_value: a1 });
        heap.push(Piece { a: mid, b: worst.b, value: v2, err: e2, abs_value: a2 });
        if !total.is_finite() {
            return Err(Error::QuadratureFailure("integrand produced a non-finite value".into()));
        }
    }
    let intervals = heap.len();
    // Re-sum to shed accumulated cancellation from the running updates.
    let (value, abs_error, abs_value) = heap
        .iter()
        .fold((0.0, 0.0, 0.0), |acc, p| (acc.0 + p.value, acc.1 + p.err, acc.2 + p.abs_value));
    Ok(QuadResult { value, abs_error: abs_error.max(0.0), abs_value, intervals })
}

/// Location and value of the maximum of `g` on `[a, b]`, found by dense
/// sampling followed by golden-section refinement around the best sample.
pub fn locate_max<G: Fn(f64) -> f64>(g: &G, a: f64, b: f64, samples: usize) -> (f64, f64) {
    let samples = samples.max(8);
    let step = (b - a) / samples as f64;
    let mut best_x = a;
    let mut best = g(a);
    for i in 1..=samples {
        let x = if i == samples { b } else { a + step * i as f64 };
        let v = g(x);
        if v > best || (best.is_nan() && !v.is_nan()) {
            best = v;
            best_x = x;
        }
    }
    let mut lo = (best_x - step).max(a);
    let mut hi = (best_x + step).min(b);
    let invphi = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - invphi * (hi - lo);
    let mut x2 = lo + invphi * (hi - lo);
    let mut f1 = g(x1);
    let mut f2 = g(x2);
    for _ in 0..80 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + invphi * (hi - lo);
            f2 = g(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - invphi * (hi - lo);
            f1 = g(x1);
        }
        if hi - lo <= 1e-15 * (1.0 + best_x.abs()) {
            break;
        }
    }
    let xm = 0.5 * (lo + hi);
    let vm = g(xm);
    if vm > best {
        (xm, vm)
    } else {
        (best_x, best)
    }
}

/// Largest `x` in `[from, limit]` (searching rightwards) with `g(x) >= level`,
/// assuming `g` eventually stays below `level`. Returns `limit` when `g` is
/// still above `level` there.
pub fn level_crossing_right<G: Fn(f64) -> f64>(g: &G, from: f64, limit: f64, level: f64) -> f64 {
    if g(limit) >= level {
        return limit;
    }
    // March outwards geometrically to bracket the last crossing, then bisect.
    let mut lo = from;
    let mut step = (limit - from) / 4096.0;
    let mut hi = from + step;
    while hi < limit && g(hi) >= level {
        lo = hi;
        step *= 1.5;
        hi = (hi + step).min(limit);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) >= level {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * (1.0 + hi.abs()) {
            break;
        }
    }
    hi
}

/// Mirror image of [`level_crossing_right`]: smallest `x` in `[limit, from]`
/// with `g(x) >= level`.
pub fn level_crossing_left<G: Fn(f64) -> f64>(g: &G, from: f64, limit: f64, level: f64) -> f64 {
    let reflected = |x: f64| g(-x);
    -level_crossing_right(&reflected, -from, -limit, level)
}

/// `ln ∫ exp(log_f(x)) dx` over `[a, b]` for integrands spanning many orders
/// of magnitude. The peak of `log_f` is located and factored out, and the
/// integration range is trimmed to where `log_f ≥ peak − drop` (`drop` ≈ 60
/// keeps the neglected part below 1e-26 relative for unimodal integrands).
pub fn integrate_log<G: Fn(f64) -> f64>(
    log_f: G,
    a: f64,
    b: f64,
    extra_breaks: &[f64],
    opts: QuadOptions,
) -> Result<f64> {
    if b <= a {
        return Ok(f64::NEG_INFINITY);
    }
    let (x_peak, peak) = locate_max(&log_f, a, b, 2048);
    if !peak.is_finite() {
        return Err(Error::QuadratureFailure("log-integrand has no finite maximum".into()));
    }
    let drop = 60.0;
    let lo = if log_f(a) >= peak - drop {
        a
    } else {
        level_crossing_left(&log_f, x_peak, a, peak - drop)
    };
    let hi = if log_f(b) >= peak - drop {
        b
    } else {
        level_crossing_right(&log_f, x_peak, b, peak - drop)
    };
    let mut breaks = vec![lo, x_peak.clamp(lo, hi), hi];
    breaks.extend(extra_breaks.iter().copied().filter(|&x| x > lo && x < hi));
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let res = integrate_with_breaks(|x| (log_f(x) - peak).exp(), &breaks, opts)?;
    if res.value <= 0.0 {
        return Err(Error::QuadratureFailure("log-domain integral is not positive".into()));
    }
    Ok(peak + res.value.ln())
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` (Newton iteration on P_n).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss–Legendre rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { x } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        if n == 1 {
            x = 0.0;
            dp = 1.0;
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n == 1 {
        weights[0] = 2.0;
    }
    (nodes, weights)
}

/// Composite Gauss–Legendre rule on `[a, b]` with `panels` equal panels.
pub fn composite_rule(a: f64, b: f64, panels: usize, order: usize) -> (Vec<f64>, Vec<f64>) {
    let (xs, ws) = gauss_legendre(order);
    let width = (b - a) / panels as f64;
    let mut nodes = Vec::with_capacity(panels * order);
    let mut weights = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let left = a + width * p as f64;
        for (x, w) in xs.iter().zip(&ws) {
            nodes.push(left + 0.5 * width * (x + 1.0));
            weights.push(0.5 * width * w);
        }
    }
    (nodes, weights)
}
