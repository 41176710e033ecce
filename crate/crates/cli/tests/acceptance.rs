//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit status if
//! any criterion fails. Every tolerance is a named constant below.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use gapcert_core::field::harmonic_half;
use gapcert_core::localbound::{
    bound_capped_ratio, bound_constant_floor, bound_half_min, bound_shifted_k, bound_signed_kappa, default_k_grid,
};
use gapcert_core::oracle::{grid_gap, line_gap, radial_sector_gap, schrodinger_ground_energy};
use gapcert_core::potential::{PolynomialPotential, PowerLawProfile, ScaledProfile};
use gapcert_core::powerlaw::{
    assemble_two_piece_bound, i_integral_log, inner_bracket, itilde_integral_log, mean_rho_ball, outer_bracket,
};
use gapcert_core::{
    normalize, BoundConfig, Cell, LocalBoundReport, MeasureSpec, Monotonicity, PoincareEstimate, PoincareSource,
    PowerLawBranch, PowerLawSpec, RadialMeasure, ScalarField, SpectralResult,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::ln_gamma;

const GAUSSIAN_MESH: usize = 4096;
const GAUSSIAN_TOL: f64 = 1e-3;
const GAUSSIAN_SECONDS: f64 = 10.0;
const SIGMAS: f64 = 3.0;
const ORACLE_MESH: usize = 4096;
const L_MAX: usize = 4;
const SOUNDNESS_CASES: usize = 50;
const SOUNDNESS_MESH: usize = 2048;
const SOUNDNESS_SECONDS: f64 = 60.0;
const SLOPE_TOL: f64 = 0.15;
const ALPHA_TWO_TOL: f64 = 1e-2;
const LAPLACE_TOL: f64 = 0.05;
const LAPLACE_N: usize = 200;
const SQUARE_TOL: f64 = 1e-2;
const GRID_GAUSSIAN_TOL: f64 = 2e-2;
const CROSS_TOL: f64 = 2e-2;
const ADDITIVITY_TOL: f64 = 1e-9;
const SCALING_TOL: f64 = 1e-2;
const REDUCTION_TOL: f64 = 1e-12;
const MALFORMED_EXIT: i32 = 2;
const SUITE_SECONDS: f64 = 300.0;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn core<T>(r: gapcert_core::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn power_law(n: usize, alpha: f64) -> Result<RadialMeasure, String> {
    core(RadialMeasure::power_law(n, alpha, 1.0, 1.0, PowerLawBranch::Pure))
}

fn whole_space_gap(rm: &RadialMeasure, mesh: usize) -> Result<SpectralResult, String> {
    let n = rm.dim;
    if n == 1 {
        core(line_gap(&MeasureSpec::Radial(rm.clone()), &Cell::whole(1), mesh))
    } else {
        core(radial_sector_gap(rm, &Cell::whole(n), L_MAX, mesh))
    }
}

fn gaussian_calibration() -> Check {
    let mut worst: f64 = 0.0;
    for n in [1, 2, 5, 10] {
        let start = Instant::now();
        let r = whole_space_gap(&RadialMeasure::gaussian(n), GAUSSIAN_MESH)?;
        let secs = start.elapsed().as_secs_f64();
        ensure((r.value - 1.0).abs() <= GAUSSIAN_TOL, || format!("n={n}: gap {}", r.value))?;
        ensure(secs < GAUSSIAN_SECONDS, || format!("n={n}: {secs:.1}s"))?;
        worst = worst.max((r.value - 1.0).abs());
    }
    Ok(format!("max |λ₁ − 1| = {worst:.2e}"))
}

/// `E|x|² = α^{2/α} Γ((n+2)/α) / Γ(n/α)`.
fn closed_form_m2(n: usize, alpha: f64) -> f64 {
    let n = n as f64;
    (2.0 / alpha * alpha.ln() + ln_gamma((n + 2.0) / alpha) - ln_gamma(n / alpha)).exp()
}

fn bobkov_sandwich() -> Check {
    let mut passed = 0;
    for alpha in [1.5, 2.0, 3.0, 4.0] {
        for n in [2, 5, 10, 20] {
            let m2 = closed_form_m2(n, alpha);
            let r = whole_space_gap(&power_law(n, alpha)?, ORACLE_MESH)?;
            let sigma = SIGMAS * r.error_estimate;
            let (lo, hi) = ((n as f64 - 1.0) / m2 - sigma, n as f64 / m2 + sigma);
            ensure(r.value >= lo && r.value <= hi, || format!("α={alpha} n={n}: {} ∉ [{lo}, {hi}]", r.value))?;
            passed += 1;
        }
    }
    Ok(format!("{passed}/16 cases inside the sandwich"))
}

struct SoundnessCase {
    measure: MeasureSpec,
    cell: Cell,
    u: ScalarField,
}

fn random_case(rng: &mut ChaCha8Rng) -> Result<SoundnessCase, String> {
    let measure = match rng.random_range(0..3) {
        0 => MeasureSpec::Radial(RadialMeasure::gaussian(1)),
        1 => MeasureSpec::Radial(power_law(1, rng.random_range(1.2..4.0))?),
        _ => MeasureSpec::Evaluator(Arc::new(core(PolynomialPotential::new(
            vec![vec![rng.random_range(0.2..2.0)]],
            vec![rng.random_range(-1.0..1.0)],
            vec![rng.random_range(0.0..0.5)],
        ))?)),
    };
    let a = rng.random_range(-2.0..0.5);
    let cell = core(Cell::boxed(vec![a], vec![a + rng.random_range(0.5..3.0)]))?;
    let lambda = core(line_gap(&measure, &cell, SOUNDNESS_MESH))?.value;
    let (c1, omega, phase) = (rng.random_range(-1.0..1.0), rng.random_range(0.5..4.0), rng.random_range(0.0..6.3));
    let (c2, x0) = (rng.random_range(-1.0..1.0), rng.random_range(a..a + 0.5));
    let raw = move |x: f64| c1 * (omega * x + phase).sin() + c2 * (x - x0).abs();
    let lo = cell.bounding_box().ok_or("bounded cell")?.0[0];
    let hi = cell.bounding_box().ok_or("bounded cell")?.1[0];
    let inf = (0..=4096).map(|i| raw(lo + (hi - lo) * i as f64 / 4096.0)).fold(f64::INFINITY, f64::min);
    // Half the cases change sign, with the negative part small enough for some κ.
    let target = if rng.random_bool(0.5) {
        -rng.random_range(0.0..0.45) * lambda
    } else {
        rng.random_range(0.0..1.5)
    };
    let shift = target - inf;
    let u = ScalarField::point(1, move |x: &[f64]| raw(x[0]) + shift).with_lipschitz(c1.abs() * omega + c2.abs());
    Ok(SoundnessCase { measure, cell, u })
}

fn local_bound_soundness() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut evaluated = 0;
    let mut mixed = 0;
    for case in 0..SOUNDNESS_CASES {
        let SoundnessCase { measure, cell, u } = random_case(&mut rng)?;
        let m = core(normalize(&measure, 1e-12))?;
        let gap = core(line_gap(&measure, &cell, SOUNDNESS_MESH))?;
        let p = PoincareEstimate {
            lambda1: gap.value - SIGMAS * gap.error_estimate,
            certified: false,
            source: PoincareSource::NumericalOracle,
            sampled_certificate: false,
        };
        let e0 = core(schrodinger_ground_energy(&measure, &cell, &u, SOUNDNESS_MESH))?;
        let ceiling = e0.value + SIGMAS * e0.error_estimate;
        let k_grid = default_k_grid(&u, &cell, &m, p.lambda1, 16);
        let kappa_grid: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
        let reports = [
            bound_constant_floor(&u, &cell),
            bound_capped_ratio(&u, &cell, &p, &m),
            bound_half_min(&u, &cell, &p, &m),
            bound_shifted_k(&u, &cell, &p, &m, &k_grid),
            bound_signed_kappa(&u, &cell, &p, &m, &kappa_grid, &k_grid),
        ];
        let applicable: Vec<LocalBoundReport> = reports.into_iter().filter_map(|r| r.ok()).collect();
        ensure(!applicable.is_empty(), || format!("case {case}: no method applies"))?;
        if applicable.iter().any(|r| r.potential_inf < 0.0) {
            mixed += 1;
        }
        for r in &applicable {
            evaluated += 1;
            ensure(r.value <= ceiling, || {
                format!("case {case} ({}): {:?} gives {} > ground energy {}", cell.label(), r.method, r.value, e0.value)
            })?;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < SOUNDNESS_SECONDS, || format!("took {secs:.1}s"))?;
    Ok(format!("{evaluated} method values below the ground energy over {SOUNDNESS_CASES} cells ({mixed} sign-changing) in {secs:.1}s"))
}

fn covering_soundness() -> Check {
    let mut worst: f64 = 0.0;
    for alpha in [1.5, 2.0, 3.0, 4.0] {
        for n in [4, 8, 16] {
            let spec = core(PowerLawSpec::new(alpha, 1.0, 1.0, n, PowerLawBranch::Pure))?;
            let g = core(assemble_two_piece_bound(&spec, &BoundConfig::default()))?;
            let o = whole_space_gap(&core(spec.measure())?, ORACLE_MESH)?;
            ensure(g.certified, || format!("α={alpha} n={n}: not certified ({:?})", g.notes))?;
            ensure(g.value > 0.0 && g.value <= o.value + SIGMAS * o.error_estimate, || {
                format!("α={alpha} n={n}: bound {} vs oracle {}", g.value, o.value)
            })?;
            worst = worst.max(g.value / o.value);
        }
    }
    Ok(format!("12/12 certified, largest bound/oracle ratio {worst:.3}"))
}

fn slope(ns: &[usize], values: &[f64]) -> f64 {
    let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let k = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn dimension_asymptotics() -> Check {
    let ns = [4, 8, 16, 32, 64];
    let mut report = Vec::new();
    for alpha in [1.5, 3.0, 4.0] {
        let gaps = ns.iter().map(|&n| whole_space_gap(&power_law(n, alpha)?, ORACLE_MESH).map(|r| r.value)).collect::<Result<Vec<_>, _>>()?;
        let s = slope(&ns, &gaps);
        let target = 1.0 - 2.0 / alpha;
        ensure((s - target).abs() <= SLOPE_TOL, || format!("α={alpha}: slope {s:.3}, expected {target:.3}"))?;
        report.push(format!("α={alpha}: {s:.3}"));
    }
    for &n in &ns {
        let g = whole_space_gap(&power_law(n, 2.0)?, ORACLE_MESH)?.value;
        ensure((g - 1.0).abs() <= ALPHA_TWO_TOL, || format!("α=2 n={n}: gap {g}"))?;
    }
    Ok(format!("slopes {}; α=2 flat", report.join(", ")))
}

fn laplace_check() -> Check {
    let mut worst: f64 = 0.0;
    for alpha in [2.0, 3.0] {
        for a in [0.5, 1.0, 2.0] {
            let m = core(mean_rho_ball(alpha, LAPLACE_N, a))?;
            let rel = (m.ratio / m.asymptotic - 1.0).abs();
            ensure(rel <= LAPLACE_TOL, || format!("α={alpha} a={a}: ratio {} vs {}", m.ratio, m.asymptotic))?;
            worst = worst.max(rel);
        }
    }
    Ok(format!("largest relative deviation {worst:.3}"))
}

fn arithmetic_lock() -> Check {
    let inner = core(inner_bracket(&core(PowerLawSpec::new(2.0, 1.0, 1.0, 10, PowerLawBranch::Inner))?))?;
    let outer = core(outer_bracket(&core(PowerLawSpec::new(1.5, 1.0, 1.0, 8, PowerLawBranch::Outer))?))?;
    ensure(inner == 0.25, || format!("inner bracket {inner:e}"))?;
    ensure(outer == 0.125, || format!("outer bracket {outer:e}"))?;
    Ok("0.25 and 0.125 exactly".into())
}

fn grid_calibration() -> Check {
    let pi2 = std::f64::consts::PI.powi(2);
    let flat = MeasureSpec::Evaluator(Arc::new(PolynomialPotential::zero(2)));
    let square = core(Cell::boxed(vec![0.0, 0.0], vec![1.0, 1.0]))?;
    let sq = core(grid_gap(&flat, &square, 1.0 / 32.0))?.value;
    ensure((sq / pi2 - 1.0).abs() <= SQUARE_TOL, || format!("unit square gap {sq}"))?;
    let gauss = MeasureSpec::Evaluator(Arc::new(PolynomialPotential::gaussian(2)));
    let bx = core(Cell::boxed(vec![-6.0, -6.0], vec![6.0, 6.0]))?;
    let g = core(grid_gap(&gauss, &bx, 12.0 / 96.0))?.value;
    ensure((g - 1.0).abs() <= GRID_GAUSSIAN_TOL, || format!("Gaussian grid gap {g}"))?;
    let radial = whole_space_gap(&RadialMeasure::gaussian(2), ORACLE_MESH)?.value;
    ensure((g / radial - 1.0).abs() <= CROSS_TOL, || format!("Gaussian grid {g} vs radial {radial}"))?;
    // A non-Gaussian cross-check: V = |x|⁴/4 in the plane.
    let quartic = core(RadialMeasure::power_law(2, 4.0, 1.0, 1.0, PowerLawBranch::Pure))?;
    let q_radial = whole_space_gap(&quartic, ORACLE_MESH)?.value;
    let q_box = core(Cell::boxed(vec![-4.0, -4.0], vec![4.0, 4.0]))?;
    let q_grid = core(grid_gap(&MeasureSpec::Radial(quartic), &q_box, 8.0 / 96.0))?.value;
    ensure((q_grid / q_radial - 1.0).abs() <= CROSS_TOL, || format!("quartic grid {q_grid} vs radial {q_radial}"))?;
    Ok(format!("square {:.4}·π², Gaussian {g:.4}, quartic grid/radial {:.4}", sq / pi2, q_grid / q_radial))
}

fn invariant_additivity(rng: &mut ChaCha8Rng) -> Result<(), String> {
    for _ in 0..50 {
        let alpha: f64 = rng.random_range(1.0..4.0);
        let n = rng.random_range(1..60usize);
        let radius: f64 = rng.random_range(0.1..5.0);
        let gamma = rng.random_range(-(n as f64) + 0.5..4.0);
        let total = core(i_integral_log(alpha, n, f64::INFINITY, gamma))?;
        let sum = (core(i_integral_log(alpha, n, radius, gamma))? - total).exp()
            + (core(itilde_integral_log(alpha, n, radius, gamma))? - total).exp();
        ensure((sum - 1.0).abs() <= ADDITIVITY_TOL, || format!("additivity: α={alpha} n={n} R={radius}: {sum}"))?;
    }
    Ok(())
}

fn invariant_scaling() -> Result<(), String> {
    for s in [0.5, 2.0] {
        let base = RadialMeasure::custom(3, Arc::new(PowerLawProfile::pure(3.0)));
        let scaled = RadialMeasure::custom(3, Arc::new(ScaledProfile { inner: Arc::new(PowerLawProfile::pure(3.0)), scale: s }));
        let a = whole_space_gap(&base, ORACLE_MESH)?.value;
        let b = whole_space_gap(&scaled, ORACLE_MESH)?.value;
        ensure((b * s * s / a - 1.0).abs() <= SCALING_TOL, || format!("scaling s={s}: {a} vs {b}"))?;
    }
    Ok(())
}

fn invariant_local_bounds(rng: &mut ChaCha8Rng) -> Result<(), String> {
    for _ in 0..10_000 {
        let a = 10f64.powf(rng.random_range(-8.0..8.0));
        let b = 10f64.powf(rng.random_range(-8.0..8.0));
        let h = harmonic_half(a, b);
        ensure(0.5 * a.min(b) <= h && h <= a.min(b), || format!("harmonic chain: a={a} b={b} h={h}"))?;
    }
    let m = core(normalize(&MeasureSpec::Radial(RadialMeasure::gaussian(3)), 1e-12))?;
    for _ in 0..20 {
        let (c0, c2) = (rng.random_range(0.0..2.0), rng.random_range(0.0..2.0));
        let u = ScalarField::radial(move |r| c0 + c2 * r * r, vec![(0.0, Monotonicity::Increasing)]);
        let cell = core(Cell::centered_ball(3, rng.random_range(0.2..3.0)))?;
        let lambda = rng.random_range(0.1..5.0);
        let p = PoincareEstimate { lambda1: lambda, certified: true, source: PoincareSource::UserConstant, sampled_certificate: false };
        let half = core(bound_half_min(&u, &cell, &p, &m))?.value;
        let shifted = core(bound_shifted_k(&u, &cell, &p, &m, &[0.0, rng.random_range(0.0..2.0)]))?.value;
        ensure(shifted >= half, || format!("dominance: shifted {shifted} < half {half}"))?;
        let signed = core(bound_signed_kappa(&u, &cell, &p, &m, &[rng.random_range(0.05..0.95)], &[0.0]))?.value;
        ensure((signed - half).abs() <= REDUCTION_TOL, || format!("reduction: signed {signed} vs half {half}"))?;
    }
    Ok(())
}

fn gapcert(config: &Path, extra: &[&str]) -> Result<std::process::Output, String> {
    Command::new(env!("CARGO_BIN_EXE_gapcert"))
        .arg("--config")
        .arg(config)
        .arg("--quiet")
        .args(extra)
        .output()
        .map_err(|e| e.to_string())
}

fn invariant_cli_reruns(dir: &Path) -> Result<(), String> {
    let cfg = dir.join("sweep.json");
    std::fs::write(&cfg, r#"{"command": "sweep", "sweep": {"n": [8, 4], "alpha": [3, 1.5]}}"#).map_err(|e| e.to_string())?;
    for format in ["json", "csv"] {
        let first = gapcert(&cfg, &["--format", format])?;
        let second = gapcert(&cfg, &["--format", format])?;
        ensure(first.status.success(), || format!("rerun: exit {:?}", first.status.code()))?;
        ensure(first.stdout == second.stdout, || format!("rerun: {format} output differs"))?;
    }
    Ok(())
}

const MALFORMED: [&str; 20] = [
    "{",
    "",
    r#"{"command": "bound", "colour": 1}"#,
    r#"{"measure": {"family": "gaussian", "n": 2}}"#,
    r#"{"command": "bond"}"#,
    r#"{"command": "powerlaw", "powerlaw": {"alpha": 2, "n": 10}, "output": {"precision": 3}}"#,
    r#"{"command": "powerlaw", "powerlaw": {"alpha": 2, "n": 10}, "output": {"precision": 18}}"#,
    r#"{"command": "bound", "measure": {"family": "gaussian", "n": 2}}"#,
    r#"{"command": "bound", "covering": {"kind": "two_piece", "radius": 1}}"#,
    r#"{"command": "oracle-radial", "measure": {"family": "cauchy", "n": 2}}"#,
    r#"{"command": "oracle-radial", "measure": {"family": "gaussian"}}"#,
    r#"{"command": "oracle-radial", "measure": {"family": "gaussian", "dim": 2}}"#,
    r#"{"command": "powerlaw", "powerlaw": {"alpha": 2, "n": 10}, "bound": {"poincare_policy": "user"}}"#,
    r#"{"command": "powerlaw", "powerlaw": {"alpha": 2, "n": 10}, "bound": {"user_value": 0.5}}"#,
    r#"{"command": "powerlaw", "powerlaw": {"alpha": 2, "n": 10}, "bound": {"form_bound_alpha": 1.5}}"#,
    r#"{"command": "powerlaw", "powerlaw": {"alpha": 2, "n": 10}, "bound": {"kappa_grid": [1.5]}}"#,
    r#"{"command": "powerlaw", "powerlaw": {"alpha": 2, "n": 10}, "bound": {"methods_enabled": ["magic"]}}"#,
    r#"{"command": "oracle-grid", "measure": {"family": "gaussian", "n": 2}}"#,
    r#"{"command": "bound", "measure": {"family": "gaussian", "n": 2}, "covering": {"kind": "ball_lattice", "radius": 1}}"#,
    r#"{"command": "oracle-radial", "measure": {"family": "gaussian", "n": "ten"}, "output": {"format": "xml"}}"#,
];

fn invariant_malformed(dir: &Path) -> Result<(), String> {
    for (i, text) in MALFORMED.iter().enumerate() {
        let path = dir.join(format!("bad{i:02}.json"));
        std::fs::write(&path, text).map_err(|e| e.to_string())?;
        let out = Command::new(env!("CARGO_BIN_EXE_gapcert")).arg("--config").arg(&path).output().map_err(|e| e.to_string())?;
        ensure(out.status.code() == Some(MALFORMED_EXIT), || format!("malformed #{i}: exit {:?}", out.status.code()))?;
        let stderr = String::from_utf8_lossy(&out.stderr);
        let prefix = format!("{}:", path.display());
        let anchored = stderr.lines().next().and_then(|l| l.strip_prefix(&prefix)).is_some_and(|rest| {
            let mut parts = rest.splitn(3, ':');
            let line_ok = parts.next().is_some_and(|p| p.parse::<usize>().is_ok());
            let col_ok = parts.next().is_some_and(|p| p.parse::<usize>().is_ok());
            line_ok && col_ok
        });
        ensure(anchored, || format!("malformed #{i}: diagnostic not line-anchored: {stderr}"))?;
    }
    Ok(())
}

fn invariant_suites() -> Check {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    invariant_additivity(&mut rng)?;
    invariant_scaling()?;
    invariant_local_bounds(&mut rng)?;
    invariant_cli_reruns(dir.path())?;
    invariant_malformed(dir.path())?;
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < SUITE_SECONDS, || format!("took {secs:.1}s"))?;
    Ok(format!(
        "additivity, scaling, harmonic chain, dominance, reduction, reruns, {} malformed configs in {secs:.1}s",
        MALFORMED.len()
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 9] = [
        ("gaussian calibration", gaussian_calibration),
        ("bobkov sandwich", bobkov_sandwich),
        ("local-bound soundness", local_bound_soundness),
        ("covering soundness", covering_soundness),
        ("dimension asymptotics", dimension_asymptotics),
        ("laplace method", laplace_check),
        ("bracket arithmetic", arithmetic_lock),
        ("grid oracle calibration", grid_calibration),
        ("invariant suites", invariant_suites),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {} [{name}]: PASS ({detail}) [{secs:.1}s]", i + 1),
            Err(why) => {
                failures += 1;
                println!("criterion {} [{name}]: FAIL ({why}) [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
