//! Steady-state photon statistics: the detailed-balance product for
//! lossless atoms, the fixed point of the one-atom cycle map, and pump
//! sweeps built on the latter.

use std::collections::HashMap;

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::linalg::{self, ZERO};
use crate::liouvillian::{LiouvillianSpec, Mode, SystemParams};
use crate::propagator::{AtomPass, CachedPropagator};
use crate::quantum::{tail_mass, DensityMatrix, PhotonStats, Space, TAIL_MASS_LIMIT};

/// Convergence threshold on the trace norm of one more map application.
pub const FIXED_POINT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITERATIONS: u64 = 1_000_000;
/// Truncation ceiling for adaptive sweeps.
pub const SWEEP_N_MAX_CAP: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SteadyMethod {
    AnalyticProduct,
    FixedPoint,
}

impl SteadyMethod {
    pub fn name(self) -> &'static str {
        match self {
            SteadyMethod::AnalyticProduct => "analytic_product",
            SteadyMethod::FixedPoint => "fixed_point",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyStateResult {
    pub stats: PhotonStats,
    pub method: SteadyMethod,
    /// Number of cycle-map applications the result stands for.
    pub iterations: u64,
    /// Trace norm of the last update.
    pub residual: f64,
}

/// Detailed-balance steady state for atoms that do not decay.
///
/// `P_n = P_0 ∏_{m=1}^{n} [n_th·m + N sin²(gτ√m)] / [m (1 + n_th)]`.
pub fn analytic_product_stats(params: &SystemParams) -> Result<SteadyStateResult> {
    params.validate()?;
    if params.gamma != 0.0 {
        return Err(invalid("gamma", format!("the product formula needs gamma = 0, got {}", params.gamma)));
    }
    if params.kappa <= 0.0 {
        return Err(invalid("kappa", "the product formula needs kappa > 0"));
    }
    let n_atoms = params.n_per_lifetime();
    let g_tau = params.g_tau();
    let mut p = Vec::with_capacity(params.n_max);
    let mut x = 1.0;
    p.push(x);
    for m in 1..params.n_max {
        let m = m as f64;
        let s = (g_tau * m.sqrt()).sin();
        x *= (params.n_th * m + n_atoms * s * s) / (m * (1.0 + params.n_th));
        p.push(x);
    }
    let norm: f64 = p.iter().sum();
    if !norm.is_finite() {
        return Err(Error::NonFinite);
    }
    p.iter_mut().for_each(|x| *x /= norm);
    let tail = tail_mass(&p);
    if tail > TAIL_MASS_LIMIT {
        return Err(Error::Truncation { tail_mass: tail, limit: TAIL_MASS_LIMIT, n_max: params.n_max });
    }
    Ok(SteadyStateResult {
        stats: PhotonStats::from_distribution(p),
        method: SteadyMethod::AnalyticProduct,
        iterations: 0,
        residual: 0.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointOptions {
    pub tolerance: f64,
    pub max_iterations: u64,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self { tolerance: FIXED_POINT_TOL, max_iterations: DEFAULT_MAX_ITERATIONS }
    }
}

/// The cycle map: one atom transit followed by an empty-cavity gap, with the
/// gap averaged over the same exponential law the trajectory samples.
pub struct CycleMap {
    pass: AtomPass,
    gap: CachedPropagator,
    n_max: usize,
}

impl CycleMap {
    pub fn new(params: &SystemParams, mode: Mode) -> Result<Self> {
        params.validate()?;
        let pass = AtomPass::cached(*params, mode, false)?;
        let gap = CachedPropagator::gap_averaged(
            LiouvillianSpec::new(Mode::FieldOnlyEq2, *params),
            params.mean_arrival_gap(),
        )?;
        Ok(Self { pass, gap, n_max: params.n_max })
    }

    pub(crate) fn apply_raw(&self, field: &Array2<C64>) -> Result<Array2<C64>> {
        let (after_pass, _) = self.pass.apply_raw(field)?;
        self.gap.apply_raw(&after_pass)
    }

    /// The map as a dense matrix on the smallest set of matrix elements that
    /// contains the support of `start` and is closed under the map.
    fn restricted_matrix(&self, start: &Array2<C64>) -> Result<(Vec<usize>, Array2<C64>)> {
        let d = self.n_max;
        let mut support: Vec<usize> = start.iter().enumerate().filter(|(_, x)| **x != ZERO).map(|(k, _)| k).collect();
        let mut position: HashMap<usize, usize> = support.iter().enumerate().map(|(i, &k)| (k, i)).collect();
        let mut columns = Vec::new();
        let mut next = 0;
        while next < support.len() {
            let k = support[next];
            let mut unit = Array2::<C64>::zeros((d, d));
            unit[[k / d, k % d]] = C64::from(1.0);
            let image = self.apply_raw(&unit)?;
            let mut column = Vec::new();
            for (j, x) in image.iter().enumerate() {
                if *x == ZERO {
                    continue;
                }
                let row = *position.entry(j).or_insert_with(|| {
                    support.push(j);
                    support.len() - 1
                });
                column.push((row, *x));
            }
            columns.push(column);
            next += 1;
        }
        let n = support.len();
        let mut t = Array2::<C64>::zeros((n, n));
        for (c, column) in columns.into_iter().enumerate() {
            for (r, x) in column {
                t[[r, c]] = x;
            }
        }
        Ok((support, t))
    }
}

fn embed(support: &[usize], x: &Array1<C64>, d: usize) -> Array2<C64> {
    let mut m = Array2::<C64>::zeros((d, d));
    for (&k, v) in support.iter().zip(x.iter()) {
        m[[k / d, k % d]] = *v;
    }
    m
}

/// Steady state of the cycle map, starting from the thermal state.
pub fn fixed_point_stats(params: &SystemParams, mode: Mode) -> Result<SteadyStateResult> {
    fixed_point_stats_with(params, mode, &FixedPointOptions::default())
}

pub fn fixed_point_stats_with(params: &SystemParams, mode: Mode, opts: &FixedPointOptions) -> Result<SteadyStateResult> {
    fixed_point_state(params, mode, opts).map(|(_, r)| r)
}

/// Like [`fixed_point_stats_with`], also returning the steady field state.
///
/// The iteration is accelerated by repeated squaring: after stage `s` the
/// state equals `2^s` applications of the map to the start.
pub fn fixed_point_state(
    params: &SystemParams,
    mode: Mode,
    opts: &FixedPointOptions,
) -> Result<(DensityMatrix, SteadyStateResult)> {
    let map = CycleMap::new(params, mode)?;
    let space = params.fock_space()?;
    let start = DensityMatrix::thermal(space, params.n_th)?;
    start.check_tail()?;
    let d = params.n_max;
    let (support, t) = map.restricted_matrix(start.entries())?;
    let mut x = Array1::from_iter(support.iter().map(|&k| start.entries()[[k / d, k % d]]));
    let mut power = t.clone();
    let mut iterations: u64 = 0;
    let mut step: u64 = 1;
    let mut history = Vec::new();
    loop {
        let y = t.dot(&x);
        let residual = linalg::trace_norm(&embed(&support, &(&y - &x), d));
        if !residual.is_finite() {
            return Err(Error::NonFinite);
        }
        history.push(residual);
        if residual < opts.tolerance {
            break;
        }
        if iterations + step > opts.max_iterations {
            return Err(Error::NotConverged { iterations, last: residual, history });
        }
        x = power.dot(&x);
        iterations += step;
        power = power.dot(&power);
        step *= 2;
    }
    let mut rho = embed(&support, &x, d);
    let tr = linalg::trace(&rho).re;
    rho.mapv_inplace(|v| v / tr);
    linalg::hermitize(&mut rho);
    let rho = DensityMatrix::new(Space::Field(space), rho)?;
    rho.check_tail()?;
    let result = SteadyStateResult {
        stats: crate::quantum::photon_stats(&rho),
        method: SteadyMethod::FixedPoint,
        iterations,
        residual: *history.last().expect("at least one residual"),
    };
    Ok((rho, result))
}

/// One point of a pump sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub d: f64,
    pub tau: f64,
    /// Truncation the point was finally computed with.
    pub n_max: usize,
    pub outcome: std::result::Result<SteadyStateResult, Error>,
}

impl SweepPoint {
    pub fn converged(&self) -> bool {
        self.outcome.is_ok()
    }

    pub fn mean_n(&self) -> Option<f64> {
        self.outcome.as_ref().ok().map(|r| r.stats.mean)
    }

    pub fn v(&self) -> Option<f64> {
        self.outcome.as_ref().ok().and_then(|r| r.stats.v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub n_fixed: f64,
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    pub fn axis(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.d).collect()
    }

    pub fn taus(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.tau).collect()
    }

    pub fn mean_n(&self) -> Vec<Option<f64>> {
        self.points.iter().map(SweepPoint::mean_n).collect()
    }

    pub fn v(&self) -> Vec<Option<f64>> {
        self.points.iter().map(SweepPoint::v).collect()
    }

    pub fn converged_fraction(&self) -> f64 {
        if self.points.is_empty() {
            return 0.0;
        }
        self.points.iter().filter(|p| p.converged()).count() as f64 / self.points.len() as f64
    }

    /// Point with the largest ⟨n⟩ among converged points.
    pub fn argmax_mean(&self) -> Option<&SweepPoint> {
        self.points
            .iter()
            .filter(|p| p.converged())
            .max_by(|a, b| a.mean_n().unwrap().total_cmp(&b.mean_n().unwrap()))
    }
}

fn grow_n_max(n: usize) -> usize {
    let grown = (n as f64 * 1.5).ceil() as usize;
    (grown.div_ceil(8) * 8).min(SWEEP_N_MAX_CAP)
}

fn sweep_point(base: &SystemParams, d: f64, n_fixed: f64, opts: &FixedPointOptions) -> SweepPoint {
    let tau = d / (n_fixed.sqrt() * base.g);
    let mut params = SystemParams { tau, flux: SystemParams::flux_for(base.kappa, n_fixed), n_th: 0.0, ..*base };
    loop {
        let outcome = fixed_point_stats_with(&params, Mode::AtomFieldEq1, opts);
        match outcome {
            Err(Error::Truncation { .. }) if params.n_max < SWEEP_N_MAX_CAP => {
                params.n_max = grow_n_max(params.n_max);
            }
            outcome => return SweepPoint { d, tau, n_max: params.n_max, outcome },
        }
    }
}

/// Microlaser characteristic curve: steady states across pump parameters
/// `D` at fixed `N`, with `τ = D / (√N g)`, `R = 2κN` and no thermal photons.
///
/// Each point's truncation starts at `base.n_max` and grows when the tail
/// guard trips. Failed points are kept with their error.
pub fn pump_sweep(base: &SystemParams, d_grid: &[f64], n_fixed: f64) -> Result<SweepResult> {
    pump_sweep_with(base, d_grid, n_fixed, &FixedPointOptions::default())
}

pub fn pump_sweep_with(base: &SystemParams, d_grid: &[f64], n_fixed: f64, opts: &FixedPointOptions) -> Result<SweepResult> {
    if d_grid.is_empty() {
        return Err(invalid("d_grid", "must not be empty"));
    }
    if d_grid.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
        return Err(invalid("d_grid", "values must be finite and > 0"));
    }
    if d_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("d_grid", "must be strictly increasing"));
    }
    if !(n_fixed > 0.0) || !n_fixed.is_finite() {
        return Err(invalid("n_fixed", format!("must be finite and > 0, got {n_fixed}")));
    }
    if !(base.g > 0.0) {
        return Err(invalid("g", "a pump sweep needs g > 0"));
    }
    if !(base.kappa > 0.0) {
        return Err(invalid("kappa", "a pump sweep needs kappa > 0"));
    }
    let points = d_grid.par_iter().map(|&d| sweep_point(base, d, n_fixed, opts)).collect();
    Ok(SweepResult { n_fixed, points })
}

/// Where the normalized variance spikes inside a window of `D`.
#[derive(Debug, Clone, PartialEq)]
pub struct VariancePeakReport {
    pub sweep: SweepResult,
    /// Interior local maximum of `v` with the largest value, if any.
    pub spike: Option<VarianceSpike>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceSpike {
    pub d: f64,
    pub v: f64,
    /// Local maxima of `P(n)` at the spike.
    pub maxima: Vec<usize>,
    /// First point past the spike and its `v`.
    pub after: Option<(f64, f64)>,
}

impl VarianceSpike {
    pub fn sub_poissonian_after(&self) -> bool {
        self.after.is_some_and(|(_, v)| v < 1.0)
    }
}

/// Sweep `n_points` values of `D` evenly over `window` and locate the
/// variance spike.
pub fn variance_peak_scan(
    base: &SystemParams,
    n_fixed: f64,
    window: (f64, f64),
    n_points: usize,
) -> Result<VariancePeakReport> {
    let (lo, hi) = window;
    if !(lo > 0.0 && hi > lo) || n_points < 3 {
        return Err(invalid("window", "need 0 < lo < hi and at least 3 points"));
    }
    let grid: Vec<f64> = (0..n_points).map(|i| lo + (hi - lo) * i as f64 / (n_points - 1) as f64).collect();
    let sweep = pump_sweep(base, &grid, n_fixed)?;
    let v = sweep.v();
    let mut spike: Option<usize> = None;
    for i in 1..v.len() - 1 {
        let (Some(l), Some(c), Some(r)) = (v[i - 1], v[i], v[i + 1]) else { continue };
        if c > l && c >= r && spike.is_none_or(|s| c > v[s].unwrap()) {
            spike = Some(i);
        }
    }
    let spike = spike.map(|i| {
        let point = &sweep.points[i];
        let stats = &point.outcome.as_ref().unwrap().stats;
        VarianceSpike {
            d: point.d,
            v: v[i].unwrap(),
            maxima: stats.local_maxima(1e-6),
            after: v[i + 1].map(|vv| (sweep.points[i + 1].d, vv)),
        }
    });
    Ok(VariancePeakReport { sweep, spike })
}
