//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed.

use std::process::ExitCode;
use std::time::Instant;

use num_complex::Complex64;
use potloop::describing::COMPARATOR_LEVEL;
use potloop::{
    closed_loop_roots, comparator_describing_gain, default_r_sweep, fs_range_for_pm, open_loop_tf,
    phase_margin, pm_at_fs, predict_limit_cycle, run_comparison, simulate, simulate_linear,
    stability_limit, step_metrics, step_update, ElectrodeLoad, LoopConfig, SimConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 0x5EED_2024;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn table_cfg(fs: f64) -> LoopConfig {
    LoopConfig::new(10e-9, fs, 10, 0.6, 1.2).unwrap()
}

fn phase_margin_reproduction() -> Outcome {
    let load = ElectrodeLoad::new(60e6, 1e-9).unwrap();
    let mut worst = 0.0f64;
    let mut got = Vec::new();
    for (fs, expected) in [(1e3, 3.82), (10e3, 1.21), (100e3, 0.38)] {
        let pm = phase_margin(&open_loop_tf(&load, &table_cfg(fs)))
            .map_err(|e| e.to_string())?
            .pm_deg;
        worst = worst.max((pm - expected).abs());
        got.push(format!("{pm:.4}"));
    }
    check(
        worst <= 0.05,
        format!(
            "PM = [{}] deg, max |err| = {worst:.4} deg (tol 0.05)",
            got.join(", ")
        ),
    )
}

struct ReferenceRow {
    r: f64,
    c: f64,
    fs_low: f64,
    fs_high: f64,
    pm_at_low: f64,
    pm_at_high: f64,
}

fn reference_table() -> Vec<ReferenceRow> {
    let row = |r, c, fs_low, fs_high, pm_at_low, pm_at_high| ReferenceRow {
        r,
        c,
        fs_low,
        fs_high,
        pm_at_low,
        pm_at_high,
    };
    vec![
        row(60e6, 0.1e-9, 150.0, 350.0, 29.2, 20.4),
        row(60e6, 1e-9, 15.0, 35.0, 29.2, 20.4),
        row(60e6, 10e-9, 1.5, 3.5, 29.2, 20.4),
        row(12e6, 0.1e-9, 17e3, 40e3, 31.3, 20.8),
        row(12e6, 1e-9, 1.7e3, 4e3, 31.3, 20.8),
        row(12e6, 10e-9, 170.0, 400.0, 31.3, 20.8),
    ]
}

fn table_reproduction() -> Outcome {
    let cfg = table_cfg(1e3);
    let (mut worst_pm, mut worst_fs) = (0.0f64, 0.0f64);
    for row in reference_table() {
        let load = ElectrodeLoad::new(row.r, row.c).unwrap();
        let pm_low = pm_at_fs(&load, &cfg, row.fs_low).map_err(|e| e.to_string())?;
        let pm_high = pm_at_fs(&load, &cfg, row.fs_high).map_err(|e| e.to_string())?;
        worst_pm = worst_pm
            .max((pm_low - row.pm_at_low).abs())
            .max((pm_high - row.pm_at_high).abs());
        let w = fs_range_for_pm(&load, &cfg, row.pm_at_high, row.pm_at_low)
            .map_err(|e| e.to_string())?;
        worst_fs = worst_fs
            .max(((w.fs_low - row.fs_low) / row.fs_low).abs())
            .max(((w.fs_high - row.fs_high) / row.fs_high).abs());
    }
    check(
        worst_pm <= 0.5 && worst_fs <= 0.15,
        format!(
            "max PM err at reference fs = {worst_pm:.3} deg (tol 0.5), \
             max fs endpoint err = {:.1}% (tol 15%)",
            100.0 * worst_fs
        ),
    )
}

/// Largest `|V_RE - V_REF|` over a window of the trace.
fn excursion(v: &[f64], v_ref: f64) -> f64 {
    v.iter().map(|x| (x - v_ref).abs()).fold(0.0, f64::max)
}

fn stability_boundary() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let ts_over_tau = 10f64.powf(rng.random_range(-4.0..1.0));
        let p = (-ts_over_tau).exp();
        // gm R = 1 puts K' = gm R (1-p) at its limit.
        let pair = closed_loop_roots(p, 1.0 * (1.0 - p));
        worst = worst.max((pair.spectral_radius() - 1.0).abs());
    }

    // Linear-mode loop started 10% below a mid-scale equilibrium.
    let gm = 10e-9;
    let run = |gm_r: f64| {
        let v_ref = 512.0 * gm_r;
        let cfg = LoopConfig::from_gm(gm, 1e3, 10, v_ref, 2.0 * v_ref).unwrap();
        let load = ElectrodeLoad::new(gm_r / gm, 1e-9).unwrap();
        let sim = SimConfig::new(load, cfg, 20.0)
            .and_then(|s| s.with_initial(0.9 * v_ref, 512))
            .unwrap();
        (
            simulate_linear(&sim).unwrap(),
            v_ref,
            cfg.full_scale_code() as f64,
        )
    };
    let (below, v_ref, fsc) = run(0.99);
    let n = below.v_re.len();
    let never_clamped = below.accumulator.iter().all(|&a| a > 0.0 && a < fsc);
    let early = excursion(&below.v_re[n / 4..n / 2], v_ref);
    let late = excursion(&below.v_re[3 * n / 4..], v_ref);
    let bounded = never_clamped && late <= early;

    let (above, _, fsc) = run(1.05);
    let saturated =
        above.accumulator.iter().any(|&a| a >= fsc) && above.accumulator.iter().any(|&a| a <= 0.0);

    check(
        worst <= 1e-9 && bounded && saturated,
        format!(
            "(a) max ||r|-1| = {worst:.2e} over 50 Ts/tau (tol 1e-9); \
             (b) gmR=0.99 bounded={bounded} (excursion {early:.3e} -> {late:.3e} V), \
             gmR=1.05 reaches both rails={saturated}"
        ),
    )
}

fn limit_cycle_accuracy() -> Outcome {
    let cfg = LoopConfig::new(125e-12, 1e3, 10, 0.6, 1.2).unwrap();
    let report =
        run_comparison(&default_r_sweep(&cfg), 10e-9, &cfg, 10.0).map_err(|e| e.to_string())?;
    let worst = |v: Vec<Option<f64>>| {
        v.into_iter()
            .map(|e| e.unwrap_or(f64::INFINITY))
            .fold(0.0, f64::max)
    };
    let max_a = worst(report.rows.iter().map(|r| r.err_a).collect());
    let max_w = worst(report.rows.iter().map(|r| r.err_omega).collect());
    let all_valid = report.summary.n_valid_rows == report.rows.len();
    check(
        all_valid && max_a < 0.2 && max_w < 0.2,
        format!(
            "{}/{} rows measurable, max err_a = {max_a:.3}, max err_omega = {max_w:.3} (tol 0.2)",
            report.summary.n_valid_rows,
            report.rows.len()
        ),
    )
}

fn scale_invariance() -> Outcome {
    let mut worst = 0.0f64;
    let mut points = 0;
    for gm_r in [0.05, 0.2, 0.5, 0.8] {
        for ts_over_tau in [1e-3, 1e-2, 0.1, 1.0, 3.0] {
            let (r, c) = (60e6, 1e-9);
            let fs = 1.0 / (ts_over_tau * r * c);
            let cfg = LoopConfig::from_gm(gm_r / r, fs, 10, 0.6, 1.2).unwrap();
            let a = pm_at_fs(&ElectrodeLoad::new(r, c).unwrap(), &cfg, fs);
            let b = pm_at_fs(&ElectrodeLoad::new(r, 10.0 * c).unwrap(), &cfg, fs / 10.0);
            let (a, b) = (a.map_err(|e| e.to_string())?, b.map_err(|e| e.to_string())?);
            worst = worst.max((a - b).abs());
            points += 1;
        }
    }
    check(
        worst <= 1e-6,
        format!("max |PM(tau, fs) - PM(10 tau, fs/10)| = {worst:.2e} deg over {points} points (tol 1e-6)"),
    )
}

fn quadratic_oracle(b: f64, c: f64) -> [Complex64; 2] {
    let d = Complex64::new(b * b - 4.0 * c, 0.0).sqrt();
    let q = if b >= 0.0 {
        -0.5 * (b + d)
    } else {
        -0.5 * (b - d)
    };
    [q, c / q]
}

fn rk4(v0: f64, i_in: f64, r: f64, c: f64, dt: f64, steps: usize) -> f64 {
    let f = |v: f64| (i_in - v / r) / c;
    let h = dt / steps as f64;
    let mut v = v0;
    for _ in 0..steps {
        let k1 = f(v);
        let k2 = f(v + 0.5 * h * k1);
        let k3 = f(v + 0.5 * h * k2);
        let k4 = f(v + h * k3);
        v += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    v
}

/// Step response of `K / ((z-1)(z-p) + K)` by direct recursion.
fn closed_loop_step(p: f64, k: f64, v_ref: f64, n: usize) -> Vec<f64> {
    let mut y = vec![0.0; n];
    for i in 2..n {
        y[i] = (1.0 + p) * y[i - 1] - (p + k) * y[i - 2] + k * v_ref;
    }
    y
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 6);

    let mut worst_roots = 0.0f64;
    for _ in 0..10_000 {
        let p = rng.random_range(1e-6..1.0 - 1e-6);
        let k = rng.random_range(0.0..4.0);
        let pair = closed_loop_roots(p, k);
        let oracle = quadratic_oracle(-(1.0 + p), p + k);
        for z in [pair.r1, pair.r2] {
            let residual = ((z - 1.0) * (z - p) + k).norm();
            worst_roots = worst_roots.max(residual);
            let nearest = oracle
                .iter()
                .map(|o| (o - z).norm())
                .fold(f64::INFINITY, f64::min);
            // Near breakaway both solvers lose ~sqrt(eps); report the residual.
            if discriminant_gap(p, k) > 1e-6 {
                worst_roots = worst_roots.max(nearest);
            }
        }
    }

    let mut worst_step = 0.0f64;
    for _ in 0..1_000 {
        let r = 10f64.powf(rng.random_range(3.0..10.0));
        let c = 10f64.powf(rng.random_range(-12.0..-5.0));
        let tau = r * c;
        let dt = tau * 10f64.powf(rng.random_range(-3.0..0.7));
        let v0 = rng.random_range(-1.0..1.0);
        let i_in = rng.random_range(-1.0..1.0) / r;
        let load = ElectrodeLoad::new(r, c).unwrap();
        let exact = step_update(v0, i_in, &load, dt);
        let reference = rk4(v0, i_in, r, c, dt, 10_000);
        let scale = exact.abs().max(v0.abs()).max((i_in * r).abs());
        worst_step = worst_step.max((exact - reference).abs() / scale);
    }

    // Deviations from an interior operating point, away from the DAC clamp.
    let mut worst_linear = 0.0f64;
    for _ in 0..200 {
        let gm_r = rng.random_range(0.02..0.95);
        let ts_over_tau = 10f64.powf(rng.random_range(-2.0..0.5));
        let (r, c, fs) = (1e8, 1e-9, 1.0 / (ts_over_tau * 0.1));
        let (code0, step) = (1000u32, 0.5);
        let v0 = code0 as f64 * gm_r;
        let cfg = LoopConfig::from_gm(gm_r / r, fs, 16, v0 + step, 4.0 * v0).unwrap();
        let load = ElectrodeLoad::new(r, c).unwrap();
        let sim = SimConfig::new(load, cfg, 400.0 / fs)
            .and_then(|s| s.with_initial(v0, code0))
            .unwrap();
        let trace = simulate_linear(&sim).unwrap();
        let p = load.sampled(fs).unwrap().pole();
        let model = closed_loop_step(p, gm_r * (1.0 - p), step, trace.v_re.len());
        for (s, m) in trace.v_re.iter().zip(&model) {
            worst_linear = worst_linear.max((s - v0 - m).abs() / step);
        }
    }

    let mut worst_fixed = 0.0f64;
    for _ in 0..1_000 {
        let r = 10f64.powf(rng.random_range(5.0..10.0));
        let c = 10f64.powf(rng.random_range(-12.0..-6.0));
        let fs = 10f64.powf(rng.random_range(0.0..6.0));
        let gm_r = rng.random_range(1e-4..0.999);
        let load = ElectrodeLoad::new(r, c).unwrap();
        let cfg = LoopConfig::from_gm(gm_r / r, fs, 10, 0.6, 1.2).unwrap();
        let pred = predict_limit_cycle(&load, &cfg).map_err(|e| e.to_string())?;
        let p = load.sampled(fs).unwrap().pole();
        let k_eq = comparator_describing_gain(pred.amplitude, COMPARATOR_LEVEL).unwrap();
        let lhs = k_eq * cfg.gm_r(&load) * (1.0 - p);
        worst_fixed = worst_fixed.max((lhs - stability_limit(p)).abs() / stability_limit(p));
    }

    check(
        worst_roots < 1e-10 && worst_step < 1e-6 && worst_linear < 1e-6 && worst_fixed < 1e-12,
        format!(
            "(a) roots {worst_roots:.2e} (tol 1e-10); (b) RC step {worst_step:.2e} (tol 1e-6); \
             (c) linear loop {worst_linear:.2e} (tol 1e-6); (d) fixed point {worst_fixed:.2e} (tol 1e-12)"
        ),
    )
}

fn discriminant_gap(p: f64, k: f64) -> f64 {
    ((1.0 + p).powi(2) - 4.0 * (p + k)).abs()
}

fn overshoot_trend() -> Outcome {
    let load = ElectrodeLoad::new(50e6, 1e-9).unwrap();
    let metrics = |fs: f64| {
        let cfg = LoopConfig::new(125e-12, fs, 10, 0.6, 1.2).unwrap();
        let trace = simulate(&SimConfig::new(load, cfg, 2.0).unwrap()).unwrap();
        step_metrics(&trace, cfg.v_ref()).unwrap()
    };
    let (slow, fast) = (metrics(1e3), metrics(10e3));
    let settle = |m: &potloop::StepMetrics| m.settling_time.unwrap_or(f64::INFINITY);
    check(
        fast.overshoot_fraction > slow.overshoot_fraction && settle(&fast) < settle(&slow),
        format!(
            "overshoot {:.4} -> {:.4}, settling {:.4} s -> {:.4} s (1 kHz -> 10 kHz)",
            slow.overshoot_fraction,
            fast.overshoot_fraction,
            settle(&slow),
            settle(&fast)
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 7] = [
        ("phase margin at 1/10/100 kHz", phase_margin_reproduction),
        ("operating-conditions table", table_reproduction),
        ("stability boundary", stability_boundary),
        ("limit-cycle prediction accuracy", limit_cycle_accuracy),
        ("phase-margin scale invariance", scale_invariance),
        ("oracle equivalence", oracle_equivalence),
        ("overshoot and settling trend", overshoot_trend),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!("criterion {} [{tag}] {name}: {detail} ({secs:.1} s)", i + 1);
        failed += outcome.is_err() as usize;
    }
    println!("{} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
