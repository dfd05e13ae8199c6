//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::path::Path;
use std::time::Instant;

use micromaser_cli::config::RunConfig;
use micromaser_core::steady::{fixed_point_state, pump_sweep_with, FixedPointOptions};
use micromaser_core::{
    analytic_product_stats, evolve, fixed_point_stats, photon_stats, run_trajectory, trap_condition, AtomPass,
    CachedPropagator, DensityMatrix, Error, FockSpace, LiouvillianSpec, Mode, PhotonStats, SystemParams,
    TrajectoryConfig, TrajectoryRecord,
};
use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

type Outcome = Result<String, String>;

fn preset(name: &str) -> RunConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name);
    RunConfig::from_path(&path).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn params_of(config: &RunConfig) -> SystemParams {
    config.resolve().expect("preset resolves").params
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    let u = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
    lo + (hi - lo) * u
}

fn max_abs_diff(a: &DensityMatrix, b: &DensityMatrix) -> f64 {
    a.entries().iter().zip(b.entries()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut worst_v, mut worst_p) = (0.0f64, 0.0f64);
    let mut failures = Vec::new();
    for k in 0..50 {
        let n_atoms = uniform(&mut rng, 1.0, 50.0);
        let g_tau = uniform(&mut rng, 0.3, 3.0);
        let n_th = uniform(&mut rng, 0.0, 0.1);
        let kappa = 1e-5;
        let mut p = SystemParams {
            g: 1.0,
            tau: g_tau,
            kappa,
            gamma: 0.0,
            n_th,
            flux: SystemParams::flux_for(kappa, n_atoms),
            n_max: 72,
        };
        let analytic = loop {
            match analytic_product_stats(&p) {
                Err(Error::Truncation { .. }) if p.n_max < 256 => p.n_max = (p.n_max * 3 / 2).div_ceil(8) * 8,
                r => break r,
            }
        };
        let pair = analytic.and_then(|a| fixed_point_stats(&p, Mode::AtomFieldEq6).map(|f| (a, f)));
        let (a, f) = match pair {
            Ok(x) => x,
            Err(e) => {
                failures.push(format!("sample {k}: {e}"));
                continue;
            }
        };
        let dv = match (a.stats.v, f.stats.v) {
            (Some(x), Some(y)) => (x - y).abs(),
            (None, None) => 0.0,
            _ => f64::INFINITY,
        };
        let dp = a.stats.p.iter().zip(&f.stats.p).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        worst_v = worst_v.max(dv);
        worst_p = worst_p.max(dp);
        if dv > 0.02 || dp > 2e-3 {
            failures.push(format!("sample {k} (N={n_atoms:.2}, gτ={g_tau:.3}, n_th={n_th:.3}): dv={dv:.2e} dp={dp:.2e}"));
        }
    }
    check(
        failures.is_empty(),
        format!("50 samples, max |Δv| = {worst_v:.2e}, max |ΔP(n)| = {worst_p:.2e}{}", if failures.is_empty() {
            String::new()
        } else {
            format!("; {}", failures.join("; "))
        }),
    )
}

fn criterion_2() -> Outcome {
    let config = preset("micromaser-ref1a.toml");
    let stats = analytic_product_stats(&params_of(&config)).map_err(|e| e.to_string())?.stats;
    let v = stats.v.ok_or("v undefined")?;
    check((v - 0.5522).abs() <= 0.05, format!("v = {v:.4} (target 0.5522 ± 0.05)"))
}

fn criterion_3(record: &TrajectoryRecord) -> Outcome {
    let p = params_of(&preset("micromaser-fig1to4.toml"));
    let v_fp = fixed_point_stats(&p, Mode::AtomFieldEq6).map_err(|e| e.to_string())?.stats.v.ok_or("v undefined")?;
    let vs: Vec<f64> = record.rows_in(2000..=10000).filter_map(|r| r.v).collect();
    let lo = vs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = vs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    check(
        (v_fp - 0.597).abs() <= 0.02 && lo <= v_fp && v_fp <= hi && vs.len() == 8001,
        format!("fixed-point v = {v_fp:.4} (target 0.597 ± 0.02); trajectory v over atoms 2000-10000 in [{lo:.3}, {hi:.3}]"),
    )
}

fn criterion_4(record: &TrajectoryRecord) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for k in [7000, 9000] {
        let snap = record.snapshot(k).ok_or(format!("snapshot {k} missing"))?;
        let stats = PhotonStats::from_distribution(snap.p.clone());
        let peak = stats.p[stats.mode()];
        let maxima = stats.local_maxima(0.01 * peak);
        let v = stats.v.unwrap_or(f64::NAN);
        ok &= maxima.len() == 1 && (13..=15).contains(&stats.mode()) && (0.3..=0.8).contains(&v);
        parts.push(format!("atom {k}: mode {}, maxima {:?}, v = {v:.3}", stats.mode(), maxima));
    }
    check(ok, parts.join("; "))
}

fn criterion_5(record: &TrajectoryRecord) -> Outcome {
    let median = record.summary.median_p_a.ok_or("no post-burn-in atoms")?;
    let exact = record.rows.iter().all(|r| r.projection_noise == r.p_a * (1.0 - r.p_a));
    check(
        (0.7..=0.9).contains(&median) && exact,
        format!("median p_a = {median:.3} (target [0.7, 0.9]); (ΔJ)² = p_a(1 − p_a) on every row: {exact}"),
    )
}

fn criterion_6() -> Outcome {
    let config = preset("microlaser-ref3.toml");
    let base = params_of(&config);
    let sweep = config.sweep.as_ref().ok_or("preset has no sweep")?;
    let start = Instant::now();
    let result = pump_sweep_with(&base, &sweep.d_grid, sweep.n_fixed.unwrap_or(100.0), &FixedPointOptions::default())
        .map_err(|e| e.to_string())?;
    let at = |d: f64| -> Option<f64> {
        result.points.iter().find(|p| (p.d - d).abs() < 1e-9).and_then(|p| p.mean_n())
    };
    let (lo, hi) = (at(0.8).ok_or("no value at D = 0.8")?, at(1.2).ok_or("no value at D = 1.2")?);
    let best = result.argmax_mean().ok_or("no converged point")?;
    let (n31, n62) = (at(31.4).ok_or("no value at D = 31.4")?, at(62.8).ok_or("no value at D = 62.8")?);
    check(
        hi > 5.0 * lo && (1.4..=1.9).contains(&best.d) && n31 < 0.5 && n62 < 0.5,
        format!(
            "<n>(0.8) = {lo:.3}, <n>(1.2) = {hi:.2}, argmax D = {:.2}, <n>(31.4) = {n31:.2e}, <n>(62.8) = {n62:.2e}, \
             {:.0}% converged, {:.0} s",
            best.d,
            100.0 * result.converged_fraction(),
            start.elapsed().as_secs_f64()
        ),
    )
}

fn criterion_7(record: &TrajectoryRecord) -> Outcome {
    let config = preset("micromaser-fig1to4.toml");
    let report = trap_condition(&params_of(&config), 0..=config.trap.n_hi, config.trap.loose_tolerance)
        .map_err(|e| e.to_string())?;
    let zeros: Vec<usize> = report.zeros().filter(|&n| n >= 1).collect();
    let v_min = record.rows.iter().filter_map(|r| r.v).fold(f64::INFINITY, f64::min);
    check(zeros.is_empty() && v_min > 0.1, format!("zeros with n >= 1: {zeros:?}; minimum trajectory v = {v_min:.3}"))
}

fn criterion_8() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;

    // trace drift and positivity over repeated passes at the operating point
    let p = params_of(&preset("micromaser-fig1to4.toml"));
    let (mut field, _) = fixed_point_state(&p, Mode::AtomFieldEq6, &FixedPointOptions::default()).map_err(|e| e.to_string())?;
    let pass = AtomPass::rk4(p, Mode::AtomFieldEq6, false).map_err(|e| e.to_string())?;
    let (mut drift, mut min_eig) = (0.0f64, f64::INFINITY);
    for _ in 0..3 {
        let (next, _) = pass.apply(&field).map_err(|e| e.to_string())?;
        drift = drift.max((next.trace() - field.trace()).abs());
        min_eig = min_eig.min(next.min_eigenvalue());
        field = next;
    }
    ok &= drift < 1e-9 && min_eig >= -1e-8;
    parts.push(format!("trace drift {drift:.1e}, min eigenvalue {min_eig:.1e}"));

    // step halving against the matrix exponential
    let q = SystemParams { g: 1.0, tau: 1.2, kappa: 0.05, gamma: 0.0, n_th: 0.0, flux: 0.01, n_max: 16 };
    let space = FockSpace::new(q.n_max).map_err(|e| e.to_string())?;
    let start = DensityMatrix::coherent(space, Complex64::new(1.2, 0.0));
    let exact = AtomPass::cached(q, Mode::AtomFieldEq1, false).and_then(|a| a.apply(&start)).map_err(|e| e.to_string())?.0;
    let err = |h: f64| -> Result<f64, String> {
        let out = AtomPass::rk4_with_step(q, Mode::AtomFieldEq1, h).and_then(|a| a.apply(&start)).map_err(|e| e.to_string())?;
        Ok(max_abs_diff(&out.0, &exact))
    };
    let (e1, e2) = (err(0.1)?, err(0.05)?);
    let ratio = e1 / e2;
    ok &= (12.0..=20.0).contains(&ratio);
    parts.push(format!("step-halving ratio {ratio:.2}"));

    // coherent state
    let coh = photon_stats(&DensityMatrix::coherent(FockSpace::new(40).map_err(|e| e.to_string())?, Complex64::new(2.0, 0.0)));
    let v = coh.v.unwrap_or(f64::NAN);
    ok &= (v - 1.0).abs() <= 1e-3;
    parts.push(format!("coherent v = {v:.6}"));

    // thermal state is stationary under field-only damping
    let r = SystemParams { g: 0.0, tau: 1.0, kappa: 0.5, gamma: 0.0, n_th: 0.3, flux: 0.1, n_max: 40 };
    let thermal = DensityMatrix::thermal(FockSpace::new(r.n_max).map_err(|e| e.to_string())?, r.n_th).map_err(|e| e.to_string())?;
    let spec = LiouvillianSpec { mode: Mode::FieldOnlyEq2, params: r, eq6_atomic_decay: false };
    let later = evolve(&spec, &thermal, 1.0 / r.kappa).map_err(|e| e.to_string())?;
    let cached = CachedPropagator::fixed(spec, 1.0 / r.kappa).and_then(|c| c.apply(&thermal)).map_err(|e| e.to_string())?;
    let change = max_abs_diff(&later, &thermal).max(max_abs_diff(&cached, &thermal));
    ok &= change < 1e-10;
    parts.push(format!("thermal change {change:.1e}"));

    check(ok, parts.join("; "))
}

fn shared_trajectory() -> Result<TrajectoryRecord, String> {
    let config = preset("micromaser-fig1to4.toml");
    let t = &config.trajectory;
    let run = TrajectoryConfig {
        snapshots: t.snapshots.clone(),
        snapshot_timing: t.snapshot_timing.timing(),
        burn_in: t.burn_in,
        ..TrajectoryConfig::new(t.n_atoms, t.seed)
    };
    run_trajectory(&params_of(&config), &run).map_err(|e| e.to_string())
}

fn main() {
    let mut failed = 0;
    let mut report = |n: usize, outcome: Outcome, elapsed: f64| {
        match outcome {
            Ok(d) => println!("criterion {n}: PASS ({elapsed:.1} s) {d}"),
            Err(d) => {
                failed += 1;
                println!("criterion {n}: FAIL ({elapsed:.1} s) {d}");
            }
        }
    };
    let timed = |f: &dyn Fn() -> Outcome| {
        let t = Instant::now();
        let o = f();
        (o, t.elapsed().as_secs_f64())
    };

    let (o, t) = timed(&criterion_1);
    report(1, o, t);
    let (o, t) = timed(&criterion_2);
    report(2, o, t);

    let t0 = Instant::now();
    let trajectory = shared_trajectory();
    println!("trajectory: 10000 atoms in {:.1} s", t0.elapsed().as_secs_f64());
    for (n, f) in [(3, criterion_3 as fn(&TrajectoryRecord) -> Outcome), (4, criterion_4), (5, criterion_5), (7, criterion_7)] {
        let (o, t) = match &trajectory {
            Ok(rec) => timed(&|| f(rec)),
            Err(e) => (Err(format!("trajectory failed: {e}")), 0.0),
        };
        report(n, o, t);
    }

    let (o, t) = timed(&criterion_6);
    report(6, o, t);
    let (o, t) = timed(&criterion_8);
    report(8, o, t);

    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
