//! Atom-by-atom Monte Carlo of the maser: Poisson arrivals, one transit per
//! atom, free cavity decay in between.

use std::ops::RangeInclusive;

use ndarray::Array2;
use num_complex::Complex64 as C64;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{invalid, Error, Result};
use crate::linalg;
use crate::liouvillian::{Liouvillian, LiouvillianSpec, Mode, SystemParams};
use crate::propagator::{rk4_integrate, AtomPass, TRACE_DRIFT_LIMIT};
use crate::quantum::{photon_stats, DensityMatrix, Space};

/// Atoms discarded before summary statistics are taken.
pub const DEFAULT_BURN_IN: usize = 1000;

/// Exponential inter-arrival times from a seeded ChaCha8 stream.
///
/// Gaps shorter than the transit time would put two atoms in the cavity;
/// they are redrawn and counted.
#[derive(Debug, Clone)]
pub struct ArrivalSampler {
    mu: f64,
    tau: f64,
    seed: u64,
    rng: ChaCha8Rng,
    rejections: u64,
}

impl ArrivalSampler {
    pub fn new(mu: f64, tau: f64, seed: u64) -> Result<Self> {
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(invalid("mu", format!("must be finite and > 0, got {mu}")));
        }
        if !(tau >= 0.0) || !tau.is_finite() {
            return Err(invalid("tau", format!("must be finite and >= 0, got {tau}")));
        }
        Ok(Self { mu, tau, seed, rng: ChaCha8Rng::seed_from_u64(seed), rejections: 0 })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn rejections(&self) -> u64 {
        self.rejections
    }

    /// Uniform deviate in the open interval (0, 1): the top 53 bits of one
    /// draw, shifted to the centre of their cell.
    pub fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) / (1u64 << 53) as f64
    }

    /// One unconditioned gap `-μ ln x`.
    pub fn raw_gap(&mut self) -> f64 {
        gap_from_uniform(self.mu, self.uniform())
    }
}

pub fn gap_from_uniform(mu: f64, x: f64) -> f64 {
    -mu * x.ln()
}

/// Next accepted arrival gap `t_R ≥ τ`.
pub fn sample_gap(sampler: &mut ArrivalSampler) -> f64 {
    loop {
        let t = sampler.raw_gap();
        if t >= sampler.tau {
            return t;
        }
        sampler.rejections += 1;
    }
}

/// Quantum projection noise `p_a (1 - p_a)` of one exit measurement.
pub fn projection_noise(p_a: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p_a) {
        return Err(invalid("p_a", format!("must lie in [0, 1], got {p_a}")));
    }
    Ok(p_a * (1.0 - p_a))
}

/// When the `P(n)` snapshot of an atom is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SnapshotTiming {
    /// Right after the atom leaves.
    #[default]
    AtomExit,
    /// After the empty-cavity gap that follows it.
    AfterGap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryConfig {
    pub n_atoms: usize,
    pub seed: u64,
    /// 1-based atom indices.
    pub snapshots: Vec<usize>,
    pub snapshot_timing: SnapshotTiming,
    /// Adds atomic decay to the transit.
    pub atomic_decay: bool,
    pub burn_in: usize,
    /// Atoms whose post-gap `P(n)` enters the time average.
    pub average_window: Option<RangeInclusive<usize>>,
}

impl TrajectoryConfig {
    pub fn new(n_atoms: usize, seed: u64) -> Self {
        Self {
            n_atoms,
            seed,
            snapshots: Vec::new(),
            snapshot_timing: SnapshotTiming::default(),
            atomic_decay: false,
            burn_in: DEFAULT_BURN_IN,
            average_window: None,
        }
    }
}

/// One atom of the record. `v` and `mean_n` describe the field at the
/// atom's exit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRow {
    pub index: usize,
    /// Arrival gap `t_R` before the next atom.
    pub gap: f64,
    /// Empty-cavity time `t_R - τ`.
    pub t_cav: f64,
    pub p_a: f64,
    pub projection_noise: f64,
    pub v: Option<f64>,
    pub mean_n: f64,
    pub tail_mass: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub index: usize,
    pub p: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySummary {
    pub n_atoms: usize,
    pub burn_in: usize,
    /// Median `p_a` over atoms after the burn-in.
    pub median_p_a: Option<f64>,
    /// Smallest and largest `v` after the burn-in.
    pub v_band: Option<(f64, f64)>,
    pub rejections: u64,
    pub final_tail_mass: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub params: SystemParams,
    pub seed: u64,
    pub rows: Vec<TrajectoryRow>,
    pub snapshots: Vec<Snapshot>,
    pub window_average: Option<Vec<f64>>,
    pub summary: TrajectorySummary,
}

impl TrajectoryRecord {
    pub fn snapshot(&self, index: usize) -> Option<&Snapshot> {
        self.snapshots.iter().find(|s| s.index == index)
    }

    /// Rows with 1-based index in `range`.
    pub fn rows_in(&self, range: RangeInclusive<usize>) -> impl Iterator<Item = &TrajectoryRow> {
        self.rows.iter().filter(move |r| range.contains(&r.index))
    }
}

fn median(mut xs: Vec<f64>) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    Some(if xs.len() % 2 == 1 { xs[m] } else { 0.5 * (xs[m - 1] + xs[m]) })
}

fn summarize(rows: &[TrajectoryRow], burn_in: usize, rejections: u64, final_tail_mass: f64) -> TrajectorySummary {
    let kept: Vec<&TrajectoryRow> = rows.iter().filter(|r| r.index > burn_in).collect();
    let v_band = kept.iter().filter_map(|r| r.v).fold(None, |band: Option<(f64, f64)>, v| {
        Some(band.map_or((v, v), |(lo, hi)| (lo.min(v), hi.max(v))))
    });
    TrajectorySummary {
        n_atoms: rows.len(),
        burn_in,
        median_p_a: median(kept.iter().map(|r| r.p_a).collect()),
        v_band,
        rejections,
        final_tail_mass,
    }
}

fn free_decay(gap: &Liouvillian, step: f64, field: &Array2<C64>, t: f64) -> Result<Array2<C64>> {
    let out = rk4_integrate(gap, field, t, step);
    if out.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    let drift = (linalg::trace(&out).re - linalg::trace(field).re).abs();
    if drift > TRACE_DRIFT_LIMIT {
        return Err(Error::TraceDrift { drift, limit: TRACE_DRIFT_LIMIT });
    }
    Ok(out)
}

/// Run `config.n_atoms` atoms through the cavity from the thermal state.
///
/// Every atom enters in |a⟩, crosses under the thermal atom–field generator
/// for `τ`, and is followed by a free-decay interval `t_cav = t_R − τ`.
pub fn run_trajectory(params: &SystemParams, config: &TrajectoryConfig) -> Result<TrajectoryRecord> {
    params.validate()?;
    if config.n_atoms == 0 {
        return Err(invalid("n_atoms", "must be >= 1"));
    }
    if let Some(&k) = config.snapshots.iter().find(|&&k| k == 0 || k > config.n_atoms) {
        return Err(invalid("snapshots", format!("index {k} outside 1..={}", config.n_atoms)));
    }
    let pass = AtomPass::cached(*params, Mode::AtomFieldEq6, config.atomic_decay)?;
    let gap = Liouvillian::new(LiouvillianSpec::new(Mode::FieldOnlyEq2, *params))?;
    let gap_step = gap.rk4_step();
    let mut sampler = ArrivalSampler::new(params.mean_arrival_gap(), params.tau, config.seed)?;
    let space = params.fock_space()?;

    let mut field = DensityMatrix::thermal(space, params.n_th)?;
    let mut rows = Vec::with_capacity(config.n_atoms);
    let mut snapshots = Vec::new();
    let mut window_sum: Option<Vec<f64>> = config.average_window.as_ref().map(|_| vec![0.0; params.n_max]);
    let mut window_count = 0usize;

    for index in 1..=config.n_atoms {
        let abort = |e: Error| Error::TrajectoryAborted { atom: index, source: Box::new(e) };
        let t_r = sample_gap(&mut sampler);
        let t_cav = t_r - params.tau;
        let (exit, p_a) = pass.apply(&field).map_err(abort)?;
        let stats = photon_stats(&exit);
        let wants_snapshot = config.snapshots.contains(&index);
        if wants_snapshot && config.snapshot_timing == SnapshotTiming::AtomExit {
            snapshots.push(Snapshot { index, p: stats.p.clone() });
        }
        rows.push(TrajectoryRow {
            index,
            gap: t_r,
            t_cav,
            p_a,
            projection_noise: projection_noise(p_a).map_err(abort)?,
            v: stats.v,
            mean_n: stats.mean,
            tail_mass: stats.tail_mass,
        });

        let mut next = free_decay(&gap, gap_step, exit.entries(), t_cav).map_err(abort)?;
        linalg::hermitize(&mut next);
        field = DensityMatrix::from_raw(Space::Field(space), next);
        field.check_tail().map_err(abort)?;
        let populations = field.field_populations();
        if wants_snapshot && config.snapshot_timing == SnapshotTiming::AfterGap {
            snapshots.push(Snapshot { index, p: populations.clone() });
        }
        if let (Some(sum), Some(window)) = (window_sum.as_mut(), config.average_window.as_ref()) {
            if window.contains(&index) {
                sum.iter_mut().zip(&populations).for_each(|(s, p)| *s += p);
                window_count += 1;
            }
        }
    }

    let window_average = window_sum
        .filter(|_| window_count > 0)
        .map(|s| s.into_iter().map(|x| x / window_count as f64).collect());
    let summary = summarize(&rows, config.burn_in, sampler.rejections(), field.tail_mass());
    Ok(TrajectoryRecord { params: *params, seed: config.seed, rows, snapshots, window_average, summary })
}

/// Grouping used for the transit-decay exponent in `f(n)`.
pub const TRAP_EXPONENT_GROUPING: &str = "exp[-(gamma + (2n-1) kappa) tau]";
/// `|f(n)|` below this counts as a zero.
pub const TRAP_ZERO_TOL: f64 = 1e-9;
/// `|sin(gτ√(n+1))|` below this marks an exact Fock candidate.
pub const FOCK_STRICT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrapRow {
    pub n: usize,
    pub f: f64,
    pub is_zero: bool,
    /// `|sin(gτ√(n+1))|`.
    pub fock_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrapReport {
    pub rows: Vec<TrapRow>,
    pub strict_candidates: Vec<usize>,
    pub loose_tolerance: f64,
    pub loose_candidates: Vec<usize>,
    pub exponent_grouping: &'static str,
}

impl TrapReport {
    pub fn zeros(&self) -> impl Iterator<Item = usize> + '_ {
        self.rows.iter().filter(|r| r.is_zero).map(|r| r.n)
    }

    /// Row with the smallest Fock residual.
    pub fn closest_fock_candidate(&self) -> Option<&TrapRow> {
        self.rows.iter().min_by(|a, b| a.fock_residual.total_cmp(&b.fock_residual))
    }

    pub fn row(&self, n: usize) -> Option<&TrapRow> {
        self.rows.iter().find(|r| r.n == n)
    }
}

/// Evaluate the trapping function
/// `f(n) = -2n n_th - 2N sin²(√n gτ) exp[-(γ + (2n-1)κ)τ]` over `n_grid`
/// and list the photon numbers where `sin(gτ√(n+1))` vanishes.
pub fn trap_condition(params: &SystemParams, n_grid: RangeInclusive<usize>, loose_tolerance: f64) -> Result<TrapReport> {
    params.validate()?;
    if !(params.kappa > 0.0) {
        return Err(invalid("kappa", "f(n) needs kappa > 0 for a finite N"));
    }
    if !(loose_tolerance >= 0.0) {
        return Err(invalid("loose_tolerance", format!("must be >= 0, got {loose_tolerance}")));
    }
    if n_grid.is_empty() {
        return Err(invalid("n_grid", "must not be empty"));
    }
    let n_atoms = params.n_per_lifetime();
    let g_tau = params.g_tau();
    let rows: Vec<TrapRow> = n_grid
        .map(|n| {
            let nf = n as f64;
            let s = (nf.sqrt() * g_tau).sin();
            let decay = (-(params.gamma + (2.0 * nf - 1.0) * params.kappa) * params.tau).exp();
            let f = -2.0 * nf * params.n_th - 2.0 * n_atoms * s * s * decay;
            TrapRow { n, f, is_zero: f.abs() < TRAP_ZERO_TOL, fock_residual: (g_tau * (nf + 1.0).sqrt()).sin().abs() }
        })
        .collect();
    let below = |tol: f64| rows.iter().filter(|r| r.fock_residual < tol).map(|r| r.n).collect::<Vec<_>>();
    Ok(TrapReport {
        strict_candidates: below(FOCK_STRICT_TOL),
        loose_candidates: below(loose_tolerance),
        loose_tolerance,
        exponent_grouping: TRAP_EXPONENT_GROUPING,
        rows,
    })
}
