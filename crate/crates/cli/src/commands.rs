//! Subcommand runners. Each computes everything first and returns the files
//! to write, so a failed run leaves no partial output behind.

use micromaser_core::steady::{fixed_point_stats_with, pump_sweep_with, FixedPointOptions};
use micromaser_core::trajectory::TrajectoryConfig;
use micromaser_core::{analytic_product_stats, run_trajectory, trap_condition, PhotonStats};

use crate::config::{MethodName, RunConfig};
use crate::output::{config_echo, csv_file, float, opt_float, OutputFile, Summary};
use crate::CliError;

/// Minimum share of converged points for a sweep to count as a success.
pub const SWEEP_MIN_CONVERGED: f64 = 0.9;

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub atoms: Option<usize>,
    pub snapshots: Option<Vec<usize>>,
}

impl Overrides {
    pub fn apply(&self, config: &mut RunConfig) {
        if let Some(seed) = self.seed {
            config.trajectory.seed = seed;
        }
        if let Some(n) = self.atoms {
            config.trajectory.n_atoms = n;
        }
        if let Some(s) = &self.snapshots {
            config.trajectory.snapshots = s.clone();
        }
    }
}

/// Files of a finished run and whether it counts as a success.
#[derive(Debug)]
pub struct RunOutput {
    pub files: Vec<OutputFile>,
    pub status: Result<(), CliError>,
}

fn distribution_csv(name: &str, p: &[f64]) -> OutputFile {
    csv_file(name, &["n", "P_n"], p.iter().enumerate().map(|(n, x)| vec![n.to_string(), float(*x)]))
}

fn stats_summary(s: &mut Summary, stats: &PhotonStats) {
    s.float("mean_n", stats.mean).opt_float("v", stats.v).push("mode_n", stats.mode()).float("tail_mass", stats.tail_mass);
}

pub fn steady(config: &RunConfig) -> Result<RunOutput, CliError> {
    let resolved = config.resolve()?;
    let p = resolved.params;
    let result = match config.steady.method {
        MethodName::Analytic => analytic_product_stats(&p),
        MethodName::FixedPoint => {
            let opts = FixedPointOptions { max_iterations: config.steady.max_iterations, ..Default::default() };
            fixed_point_stats_with(&p, config.steady.mode.mode(), &opts)
        }
    }
    .map_err(|e| match e {
        micromaser_core::Error::InvalidParameter { .. } => CliError::Invalid(e.to_string()),
        e => CliError::Simulation(e),
    })?;
    let mut s = Summary::default();
    s.push("method", result.method.name());
    if config.steady.method == MethodName::FixedPoint {
        s.push("mode", format!("{:?}", config.steady.mode).to_lowercase());
    }
    stats_summary(&mut s, &result.stats);
    s.float("residual", result.residual).push("iterations", result.iterations).push("n_max", p.n_max);
    Ok(RunOutput {
        files: vec![
            distribution_csv("steady_state.csv", &result.stats.p),
            s.into_file("summary.txt"),
            config_echo(config, &resolved),
        ],
        status: Ok(()),
    })
}

pub fn sweep(config: &RunConfig) -> Result<RunOutput, CliError> {
    let resolved = config.resolve()?;
    let section = config.sweep_section()?;
    let base = resolved.params;
    let n_fixed = section.n_fixed.unwrap_or_else(|| base.n_per_lifetime());
    let opts = FixedPointOptions { max_iterations: config.steady.max_iterations, ..Default::default() };
    let result = pump_sweep_with(&base, &section.d_grid, n_fixed, &opts).map_err(|e| CliError::Invalid(e.to_string()))?;

    let rows = result.points.iter().map(|pt| {
        vec![
            float(pt.d),
            float(pt.tau),
            opt_float(pt.mean_n()),
            opt_float(pt.v()),
            pt.converged().to_string(),
            pt.n_max.to_string(),
        ]
    });
    let table = csv_file("sweep.csv", &["D", "tau", "mean_n", "v", "converged", "n_max"], rows);

    let total = result.points.len();
    let converged = result.points.iter().filter(|p| p.converged()).count();
    let mut s = Summary::default();
    s.float("n_fixed", n_fixed).push("points", total).push("converged", converged);
    if let Some(best) = result.argmax_mean() {
        s.float("argmax_D", best.d).opt_float("max_mean_n", best.mean_n());
    }
    for pt in result.points.iter().filter(|p| !p.converged()) {
        if let Err(e) = &pt.outcome {
            s.push(&format!("failure_D_{}", pt.d), e);
        }
    }
    let status = if converged as f64 >= SWEEP_MIN_CONVERGED * total as f64 {
        Ok(())
    } else {
        Err(CliError::SweepIncomplete { converged, total })
    };
    Ok(RunOutput { files: vec![table, s.into_file("summary.txt"), config_echo(config, &resolved)], status })
}

pub fn trajectory(config: &RunConfig) -> Result<RunOutput, CliError> {
    let resolved = config.resolve()?;
    config.validate_trajectory()?;
    let t = &config.trajectory;
    let run = TrajectoryConfig {
        snapshots: t.snapshots.clone(),
        snapshot_timing: t.snapshot_timing.timing(),
        atomic_decay: t.atomic_decay,
        burn_in: t.burn_in,
        ..TrajectoryConfig::new(t.n_atoms, t.seed)
    };
    let record = run_trajectory(&resolved.params, &run)?;

    let rows = record.rows.iter().map(|r| {
        vec![
            r.index.to_string(),
            float(r.gap),
            float(r.t_cav),
            float(r.p_a),
            float(r.projection_noise),
            opt_float(r.v),
            float(r.mean_n),
            float(r.tail_mass),
        ]
    });
    let mut files = vec![csv_file(
        "trajectory.csv",
        &["atom", "t_r", "t_cav", "p_a", "projection_noise", "v", "mean_n", "tail_mass"],
        rows,
    )];
    for snap in &record.snapshots {
        files.push(distribution_csv(&format!("snapshot_{}.csv", snap.index), &snap.p));
    }
    let sum = &record.summary;
    let mut s = Summary::default();
    s.push("n_atoms", sum.n_atoms)
        .push("seed", record.seed)
        .push("rng", "chacha8")
        .push("burn_in", sum.burn_in)
        .push("snapshot_timing", format!("{:?}", t.snapshot_timing).to_lowercase())
        .opt_float("median_p_a", sum.median_p_a)
        .opt_float("v_min", sum.v_band.map(|b| b.0))
        .opt_float("v_max", sum.v_band.map(|b| b.1))
        .push("rejections", sum.rejections)
        .float("final_tail_mass", sum.final_tail_mass);
    for snap in &record.snapshots {
        let stats = PhotonStats::from_distribution(snap.p.clone());
        s.push(&format!("snapshot_{}_mode_n", snap.index), stats.mode());
        s.opt_float(&format!("snapshot_{}_v", snap.index), stats.v);
    }
    files.push(s.into_file("summary.txt"));
    files.push(config_echo(config, &resolved));
    Ok(RunOutput { files, status: Ok(()) })
}

pub fn trap(config: &RunConfig) -> Result<RunOutput, CliError> {
    let resolved = config.resolve()?;
    config.validate_trap()?;
    let section = &config.trap;
    let report = trap_condition(&resolved.params, section.n_lo..=section.n_hi, section.loose_tolerance)
        .map_err(|e| CliError::Invalid(e.to_string()))?;
    let rows = report
        .rows
        .iter()
        .map(|r| vec![r.n.to_string(), float(r.f), r.is_zero.to_string(), float(r.fock_residual)]);
    let table = csv_file("trap.csv", &["n", "f_n", "is_zero", "fock_candidate_residual"], rows);

    let list = |xs: &[usize]| xs.iter().map(usize::to_string).collect::<Vec<_>>().join(" ");
    let zeros: Vec<usize> = report.zeros().collect();
    let mut s = Summary::default();
    s.push("zeros", list(&zeros))
        .push("strict_candidates", list(&report.strict_candidates))
        .float("loose_tolerance", report.loose_tolerance)
        .push("loose_candidates", list(&report.loose_candidates));
    if let Some(best) = report.closest_fock_candidate() {
        s.push("closest_candidate_n", best.n).float("closest_candidate_residual", best.fock_residual);
    }
    s.push("exponent_grouping", report.exponent_grouping);
    Ok(RunOutput { files: vec![table, s.into_file("summary.txt"), config_echo(config, &resolved)], status: Ok(()) })
}
