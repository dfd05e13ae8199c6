//! Operators and states on the truncated Fock space of the cavity mode, the
//! two-level atom, and their joint space.
//!
//! Conventions used throughout the crate:
//! * atomic basis: index 0 is the upper level |a⟩, index 1 the lower level |b⟩;
//! * joint basis: field index major, atom index minor, so |n, s⟩ ↦ 2n + s.

use ndarray::Array2;
use num_complex::Complex64 as C64;

use crate::error::{invalid, Error, Result};
use crate::linalg::{self, ONE, ZERO};

/// Largest tolerated probability in the two highest Fock levels.
pub const TAIL_MASS_LIMIT: f64 = 1e-8;
/// Hermiticity tolerance of a [`DensityMatrix`].
pub const HERMITICITY_TOL: f64 = 1e-12;
/// Trace tolerance of a [`DensityMatrix`].
pub const TRACE_TOL: f64 = 1e-9;
/// Mean photon numbers at or below this have no normalized variance.
pub const ZERO_MEAN_CUTOFF: f64 = 1e-12;

pub type DenseOperator = Array2<C64>;

/// Photon-number truncation: states |0⟩ … |n_max − 1⟩.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FockSpace {
    n_max: usize,
}

impl FockSpace {
    pub fn new(n_max: usize) -> Result<Self> {
        if n_max < 2 {
            return Err(invalid("n_max", format!("must be at least 2, got {n_max}")));
        }
        Ok(Self { n_max })
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn joint_dim(&self) -> usize {
        2 * self.n_max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AtomLevel {
    Upper,
    Lower,
}

impl AtomLevel {
    pub fn index(self) -> usize {
        match self {
            AtomLevel::Upper => 0,
            AtomLevel::Lower => 1,
        }
    }
}

/// Which Hilbert space a density matrix lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Space {
    Field(FockSpace),
    Atom,
    Joint(FockSpace),
}

impl Space {
    pub fn dim(&self) -> usize {
        match self {
            Space::Field(f) => f.n_max(),
            Space::Atom => 2,
            Space::Joint(f) => f.joint_dim(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Space::Field(_) => "field",
            Space::Atom => "atom",
            Space::Joint(_) => "joint",
        }
    }

    pub fn fock(&self) -> Option<FockSpace> {
        match self {
            Space::Field(f) | Space::Joint(f) => Some(*f),
            Space::Atom => None,
        }
    }
}

/// Sparse operator stored as `(row, col, value)` triplets.
///
/// The ladder and coupling operators have O(dim) nonzeros, so products with
/// dense matrices through this type cost O(dim²) instead of O(dim³).
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOp {
    dim: usize,
    entries: Vec<(usize, usize, C64)>,
}

impl SparseOp {
    pub fn from_dense(m: &DenseOperator) -> Self {
        let entries = m
            .indexed_iter()
            .filter(|(_, x)| **x != ZERO)
            .map(|((i, j), x)| (i, j, *x))
            .collect();
        Self { dim: m.nrows(), entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(usize, usize, C64)] {
        &self.entries
    }

    pub fn to_dense(&self) -> DenseOperator {
        let mut m = Array2::zeros((self.dim, self.dim));
        for &(i, j, x) in &self.entries {
            m[[i, j]] += x;
        }
        m
    }

    pub fn adjoint(&self) -> Self {
        Self {
            dim: self.dim,
            entries: self.entries.iter().map(|&(i, j, x)| (j, i, x.conj())).collect(),
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            dim: self.dim,
            entries: self.entries.iter().map(|&(i, j, x)| (i, j, x * s)).collect(),
        }
    }

    /// `self · other`, both sparse.
    pub fn compose(&self, other: &SparseOp) -> Self {
        let mut dense = Array2::<C64>::zeros((self.dim, self.dim));
        for &(i, k, x) in &self.entries {
            for &(k2, j, y) in &other.entries {
                if k == k2 {
                    dense[[i, j]] += x * y;
                }
            }
        }
        Self::from_dense(&dense)
    }

    /// `self · m`
    pub fn mul_left(&self, m: &DenseOperator) -> DenseOperator {
        let mut out = Array2::zeros(m.raw_dim());
        let cols = m.ncols();
        for &(i, k, x) in &self.entries {
            for j in 0..cols {
                out[[i, j]] += x * m[[k, j]];
            }
        }
        out
    }

    /// `m · self`
    pub fn mul_right(&self, m: &DenseOperator) -> DenseOperator {
        let mut out = Array2::zeros(m.raw_dim());
        let rows = m.nrows();
        for &(k, j, x) in &self.entries {
            for i in 0..rows {
                out[[i, j]] += m[[i, k]] * x;
            }
        }
        out
    }
}

/// Photon annihilation operator: `a[n−1, n] = √n`.
pub fn annihilation_op(space: FockSpace) -> DenseOperator {
    let n = space.n_max();
    let mut a = Array2::zeros((n, n));
    for k in 1..n {
        a[[k - 1, k]] = C64::from((k as f64).sqrt());
    }
    a
}

pub fn creation_op(space: FockSpace) -> DenseOperator {
    linalg::dagger(&annihilation_op(space))
}

/// `a†a`
pub fn number_op(space: FockSpace) -> DenseOperator {
    Array2::from_diag(&ndarray::Array1::from_iter((0..space.n_max()).map(|k| C64::from(k as f64))))
}

/// Pseudo-spin raising and lowering operators `(S⁺, S⁻)` with
/// `S⁺ = |a⟩⟨b|` and `S⁻ = |b⟩⟨a|`.
pub fn atomic_ops() -> (DenseOperator, DenseOperator) {
    let mut sp = Array2::zeros((2, 2));
    sp[[0, 1]] = ONE;
    let sm = linalg::dagger(&sp);
    (sp, sm)
}

/// Projector on one atomic level.
pub fn atomic_projector(level: AtomLevel) -> DenseOperator {
    let mut p = Array2::zeros((2, 2));
    p[[level.index(), level.index()]] = ONE;
    p
}

/// Embed a field operator and an atomic operator into the joint space.
pub fn tensor(field_op: &DenseOperator, atom_op: &DenseOperator) -> Result<DenseOperator> {
    if !field_op.is_square() {
        return Err(Error::DimensionMismatch { expected: field_op.nrows(), found: field_op.ncols() });
    }
    if atom_op.dim() != (2, 2) {
        return Err(Error::DimensionMismatch { expected: 2, found: atom_op.nrows().max(atom_op.ncols()) });
    }
    if field_op.nrows() < 2 {
        return Err(invalid("n_max", "field operator needs at least 2 levels"));
    }
    Ok(linalg::kron(field_op, atom_op))
}

/// Hermitian, unit-trace density matrix tagged with its space.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    space: Space,
    entries: Array2<C64>,
}

impl DensityMatrix {
    /// Validating constructor: shape, finiteness, Hermiticity and trace.
    pub fn new(space: Space, entries: Array2<C64>) -> Result<Self> {
        let dim = space.dim();
        if entries.dim() != (dim, dim) {
            return Err(Error::DimensionMismatch { expected: dim, found: entries.nrows() });
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        let deviation = linalg::hermiticity_error(&entries);
        if deviation > HERMITICITY_TOL {
            return Err(Error::NotHermitian { deviation });
        }
        let trace = linalg::trace(&entries).re;
        if (trace - 1.0).abs() > TRACE_TOL {
            return Err(Error::NotNormalized { trace });
        }
        Ok(Self { space, entries })
    }

    pub(crate) fn from_raw(space: Space, entries: Array2<C64>) -> Self {
        debug_assert_eq!(entries.nrows(), space.dim());
        Self { space, entries }
    }

    /// Diagonal field state with the given populations (renormalized).
    pub fn from_populations(space: FockSpace, p: &[f64]) -> Result<Self> {
        if p.len() != space.n_max() {
            return Err(Error::DimensionMismatch { expected: space.n_max(), found: p.len() });
        }
        if p.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(invalid("populations", "must be finite and non-negative"));
        }
        let total: f64 = p.iter().sum();
        if total <= 0.0 {
            return Err(invalid("populations", "sum to zero"));
        }
        let diag = ndarray::Array1::from_iter(p.iter().map(|x| C64::from(x / total)));
        Ok(Self { space: Space::Field(space), entries: Array2::from_diag(&diag) })
    }

    pub fn fock(space: FockSpace, n: usize) -> Result<Self> {
        if n >= space.n_max() {
            return Err(invalid("n", format!("Fock level {n} outside truncation {}", space.n_max())));
        }
        let mut p = vec![0.0; space.n_max()];
        p[n] = 1.0;
        Self::from_populations(space, &p)
    }

    pub fn vacuum(space: FockSpace) -> Self {
        Self::fock(space, 0).expect("n_max >= 2")
    }

    /// Thermal state `P(n) ∝ (n̄/(1+n̄))ⁿ`, renormalized on the truncated space.
    pub fn thermal(space: FockSpace, n_th: f64) -> Result<Self> {
        if !(n_th >= 0.0) || !n_th.is_finite() {
            return Err(invalid("n_th", format!("must be finite and >= 0, got {n_th}")));
        }
        let ratio = n_th / (1.0 + n_th);
        let p: Vec<f64> = (0..space.n_max()).map(|n| ratio.powi(n as i32)).collect();
        Self::from_populations(space, &p)
    }

    /// Pure coherent state |α⟩ truncated to the space and renormalized.
    pub fn coherent(space: FockSpace, alpha: C64) -> Self {
        let n = space.n_max();
        let mut amp = Vec::with_capacity(n);
        let mut c = C64::from((-0.5 * alpha.norm_sqr()).exp());
        for k in 0..n {
            if k > 0 {
                c = c * alpha / (k as f64).sqrt();
            }
            amp.push(c);
        }
        let norm: f64 = amp.iter().map(|x| x.norm_sqr()).sum();
        let entries = Array2::from_shape_fn((n, n), |(i, j)| amp[i] * amp[j].conj() / norm);
        Self { space: Space::Field(space), entries }
    }

    /// `ρ_field ⊗ |s⟩⟨s|` on the joint space.
    pub fn with_atom(&self, level: AtomLevel) -> Result<Self> {
        let Space::Field(f) = self.space else {
            return Err(Error::WrongSpace { expected: "field", found: self.space.name() });
        };
        let entries = linalg::kron(&self.entries, &atomic_projector(level));
        Ok(Self { space: Space::Joint(f), entries })
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn entries(&self) -> &Array2<C64> {
        &self.entries
    }

    pub fn into_entries(self) -> Array2<C64> {
        self.entries
    }

    pub fn trace(&self) -> f64 {
        linalg::trace(&self.entries).re
    }

    pub fn hermiticity_error(&self) -> f64 {
        linalg::hermiticity_error(&self.entries)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        linalg::hermitian_eigenvalues(&self.entries)[0]
    }

    /// Photon-number distribution (marginal over the atom for joint states).
    pub fn field_populations(&self) -> Vec<f64> {
        match self.space {
            Space::Field(_) => self.entries.diag().iter().map(|x| x.re).collect(),
            Space::Joint(f) => {
                (0..f.n_max()).map(|n| self.entries[[2 * n, 2 * n]].re + self.entries[[2 * n + 1, 2 * n + 1]].re).collect()
            }
            Space::Atom => vec![],
        }
    }

    /// `P(n_max − 1) + P(n_max − 2)`.
    pub fn tail_mass(&self) -> f64 {
        tail_mass(&self.field_populations())
    }

    /// Fails if the truncation tail exceeds [`TAIL_MASS_LIMIT`].
    pub fn check_tail(&self) -> Result<()> {
        let tail_mass = self.tail_mass();
        if tail_mass > TAIL_MASS_LIMIT {
            let n_max = self.space.fock().map_or(0, |f| f.n_max());
            return Err(Error::Truncation { tail_mass, limit: TAIL_MASS_LIMIT, n_max });
        }
        Ok(())
    }
}

pub(crate) fn tail_mass(p: &[f64]) -> f64 {
    p.iter().rev().take(2).map(|x| x.max(0.0)).sum()
}

/// Photon-number statistics of a field state.
#[derive(Debug, Clone, PartialEq)]
pub struct PhotonStats {
    pub p: Vec<f64>,
    pub mean: f64,
    pub second_moment: f64,
    /// `sqrt((⟨n²⟩ − ⟨n⟩²)/⟨n⟩)`; `None` when ⟨n⟩ ≤ [`ZERO_MEAN_CUTOFF`].
    pub v: Option<f64>,
    pub tail_mass: f64,
}

impl PhotonStats {
    pub fn from_distribution(p: Vec<f64>) -> Self {
        let mean: f64 = p.iter().enumerate().map(|(n, x)| n as f64 * x).sum();
        let second_moment: f64 = p.iter().enumerate().map(|(n, x)| (n * n) as f64 * x).sum();
        let v = (mean > ZERO_MEAN_CUTOFF).then(|| ((second_moment - mean * mean).max(0.0) / mean).sqrt());
        let tail_mass = tail_mass(&p);
        Self { p, mean, second_moment, v, tail_mass }
    }

    pub fn variance(&self) -> f64 {
        self.second_moment - self.mean * self.mean
    }

    /// Most probable photon number.
    pub fn mode(&self) -> usize {
        self.p
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (n, &x)| if x > best.1 { (n, x) } else { best })
            .0
    }

    /// Indices `n` where `P(n)` is a strict local maximum (n = 0 counts when
    /// `P(0) > P(1)`).
    pub fn local_maxima(&self, min_height: f64) -> Vec<usize> {
        let p = &self.p;
        (0..p.len())
            .filter(|&n| {
                let left = if n == 0 { f64::NEG_INFINITY } else { p[n - 1] };
                let right = p.get(n + 1).copied().unwrap_or(f64::NEG_INFINITY);
                p[n] > left && p[n] >= right && p[n] > min_height
            })
            .collect()
    }
}

/// Reduce a joint state to the field by tracing out the atom.
pub fn partial_trace_atom(rho: &DensityMatrix) -> Result<DensityMatrix> {
    let Space::Joint(f) = rho.space else {
        return Err(Error::WrongSpace { expected: "joint", found: rho.space.name() });
    };
    Ok(DensityMatrix::from_raw(Space::Field(f), trace_out_atom(&rho.entries)))
}

pub(crate) fn trace_out_atom(joint: &Array2<C64>) -> Array2<C64> {
    let n = joint.nrows() / 2;
    Array2::from_shape_fn((n, n), |(i, j)| joint[[2 * i, 2 * j]] + joint[[2 * i + 1, 2 * j + 1]])
}

/// Photon distribution, moments and normalized variance of a field state.
pub fn photon_stats(rho: &DensityMatrix) -> PhotonStats {
    PhotonStats::from_distribution(rho.field_populations())
}

/// Probability `p_a` of finding the atom in its upper level.
pub fn upper_state_population(rho: &DensityMatrix) -> Result<f64> {
    let Space::Joint(_) = rho.space else {
        return Err(Error::WrongSpace { expected: "joint", found: rho.space.name() });
    };
    Ok(upper_population_raw(&rho.entries).clamp(0.0, 1.0))
}

pub(crate) fn upper_population_raw(joint: &Array2<C64>) -> f64 {
    (0..joint.nrows() / 2).map(|n| joint[[2 * n, 2 * n]].re).sum()
}
