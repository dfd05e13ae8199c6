//! Physical parameters, the Jaynes–Cummings Hamiltonian and the three
//! master-equation generators used by the simulator.
//!
//! Every dissipator uses the sign and factor convention
//! `−Γ (c†c ρ − 2 c ρ c† + ρ c†c)`, so a cavity rate `kappa` empties the
//! mode at an energy decay rate of `2 kappa` and the photon lifetime is
//! `1 / (2 kappa)`.

use ndarray::Array2;
use num_complex::Complex64 as C64;

use crate::error::{invalid, Error, Result};
use crate::linalg;
use crate::quantum::{self, DenseOperator, DensityMatrix, FockSpace, Space, SparseOp};

/// Physical configuration of the cavity, the atoms and the truncation.
///
/// All rates are angular frequencies in s⁻¹ and times in s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    /// Atom–field coupling.
    pub g: f64,
    /// Interaction (transit) time of one atom.
    pub tau: f64,
    /// Cavity decay constant.
    pub kappa: f64,
    /// Atomic decay constant.
    pub gamma: f64,
    /// Mean thermal photon number of the cavity reservoir.
    pub n_th: f64,
    /// Atom flux `R`.
    pub flux: f64,
    /// Photon-number truncation.
    pub n_max: usize,
}

impl SystemParams {
    /// Check every physical constraint, including the single-atom
    /// condition `R·τ ≤ 1`.
    ///
    /// `g = 0` and `kappa = 0` are accepted; they are the decoupled and
    /// lossless limits.
    pub fn validate(&self) -> Result<()> {
        fn finite(field: &'static str, x: f64) -> Result<()> {
            if x.is_finite() {
                Ok(())
            } else {
                Err(invalid(field, format!("must be finite, got {x}")))
            }
        }
        finite("g", self.g)?;
        finite("tau", self.tau)?;
        finite("kappa", self.kappa)?;
        finite("gamma", self.gamma)?;
        finite("n_th", self.n_th)?;
        finite("flux", self.flux)?;
        if self.g < 0.0 {
            return Err(invalid("g", format!("must be >= 0, got {}", self.g)));
        }
        if self.tau <= 0.0 {
            return Err(invalid("tau", format!("must be > 0, got {}", self.tau)));
        }
        if self.kappa < 0.0 {
            return Err(invalid("kappa", format!("must be >= 0, got {}", self.kappa)));
        }
        if self.gamma < 0.0 {
            return Err(invalid("gamma", format!("must be >= 0, got {}", self.gamma)));
        }
        if self.n_th < 0.0 {
            return Err(invalid("n_th", format!("must be >= 0, got {}", self.n_th)));
        }
        if self.flux <= 0.0 {
            return Err(invalid("flux", format!("must be > 0, got {}", self.flux)));
        }
        if self.flux * self.tau > 1.0 {
            return Err(invalid(
                "flux",
                format!("R*tau = {} exceeds 1: more than one atom in the cavity on average", self.flux * self.tau),
            ));
        }
        FockSpace::new(self.n_max)?;
        Ok(())
    }

    pub fn fock_space(&self) -> Result<FockSpace> {
        FockSpace::new(self.n_max)
    }

    /// `N = R / 2κ`, atoms per photon lifetime (infinite when `kappa = 0`).
    pub fn n_per_lifetime(&self) -> f64 {
        self.flux / (2.0 * self.kappa)
    }

    /// Pump parameter `D = √N · g · τ`.
    pub fn pump_parameter(&self) -> f64 {
        self.n_per_lifetime().sqrt() * self.g * self.tau
    }

    pub fn g_tau(&self) -> f64 {
        self.g * self.tau
    }

    /// Flux that gives `n_per_lifetime` atoms per photon lifetime.
    pub fn flux_for(kappa: f64, n_per_lifetime: f64) -> f64 {
        2.0 * kappa * n_per_lifetime
    }

    /// Mean inter-arrival time `μ = 1/R`.
    pub fn mean_arrival_gap(&self) -> f64 {
        1.0 / self.flux
    }
}

/// Which master equation drives the evolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Atom and field with cavity decay `kappa` and atomic decay `gamma`,
    /// no thermal photons.
    AtomFieldEq1,
    /// Atom and field with the thermal cavity reservoir and no atomic decay.
    AtomFieldEq6,
    /// Empty cavity relaxing towards the thermal state.
    FieldOnlyEq2,
}

impl Mode {
    pub fn is_joint(self) -> bool {
        !matches!(self, Mode::FieldOnlyEq2)
    }
}

/// A generator: the mode plus the parameters that fill in its rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LiouvillianSpec {
    pub mode: Mode,
    pub params: SystemParams,
    /// Adds the `gamma` channel to [`Mode::AtomFieldEq6`]. Ignored by the
    /// other modes.
    pub eq6_atomic_decay: bool,
}

impl LiouvillianSpec {
    pub fn new(mode: Mode, params: SystemParams) -> Self {
        Self { mode, params, eq6_atomic_decay: false }
    }

    pub fn space(&self) -> Result<Space> {
        let f = self.params.fock_space()?;
        Ok(if self.mode.is_joint() { Space::Joint(f) } else { Space::Field(f) })
    }
}

/// Resonant interaction-picture Hamiltonian `g (a ⊗ S⁺ + a† ⊗ S⁻)`.
pub fn jc_hamiltonian(params: &SystemParams) -> Result<DenseOperator> {
    let f = params.fock_space()?;
    let (sp, sm) = quantum::atomic_ops();
    let a = quantum::annihilation_op(f);
    let ad = quantum::creation_op(f);
    let h = quantum::tensor(&a, &sp)? + quantum::tensor(&ad, &sm)?;
    Ok(h.mapv(|x| x * params.g))
}

#[derive(Debug, Clone)]
pub(crate) struct Channel {
    pub rate: f64,
    pub op: SparseOp,
    /// `op† op`
    pub op_dag_op: SparseOp,
}

impl Channel {
    fn new(rate: f64, op: SparseOp) -> Self {
        let op_dag_op = op.adjoint().compose(&op);
        Self { rate, op, op_dag_op }
    }
}

/// Sparse form of a [`LiouvillianSpec`]: Hamiltonian plus decay channels.
#[derive(Debug, Clone)]
pub struct Liouvillian {
    spec: LiouvillianSpec,
    space: Space,
    hamiltonian: Option<SparseOp>,
    channels: Vec<Channel>,
}

impl Liouvillian {
    pub fn new(spec: LiouvillianSpec) -> Result<Self> {
        spec.params.validate()?;
        let p = spec.params;
        let f = p.fock_space()?;
        let space = spec.space()?;
        let eye2 = linalg::identity(2);
        let field = |op: DenseOperator| -> Result<SparseOp> {
            Ok(SparseOp::from_dense(&if spec.mode.is_joint() { quantum::tensor(&op, &eye2)? } else { op }))
        };
        let a = field(quantum::annihilation_op(f))?;
        let ad = field(quantum::creation_op(f))?;
        let lowering = || -> Result<SparseOp> {
            let (_, sm) = quantum::atomic_ops();
            Ok(SparseOp::from_dense(&quantum::tensor(&linalg::identity(f.n_max()), &sm)?))
        };

        let mut channels = Vec::new();
        let mut push = |rate: f64, op: SparseOp| {
            if rate > 0.0 {
                channels.push(Channel::new(rate, op));
            }
        };
        let hamiltonian = match spec.mode {
            Mode::AtomFieldEq1 => {
                push(p.kappa, a);
                push(p.gamma, lowering()?);
                Some(SparseOp::from_dense(&jc_hamiltonian(&p)?))
            }
            Mode::AtomFieldEq6 => {
                push(p.kappa * (1.0 + p.n_th), a);
                push(p.kappa * p.n_th, ad);
                if spec.eq6_atomic_decay {
                    push(p.gamma, lowering()?);
                }
                Some(SparseOp::from_dense(&jc_hamiltonian(&p)?))
            }
            Mode::FieldOnlyEq2 => {
                push(p.kappa * (1.0 + p.n_th), a);
                push(p.kappa * p.n_th, ad);
                None
            }
        };
        let hamiltonian = hamiltonian.filter(|h| !h.entries().is_empty());
        Ok(Self { spec, space, hamiltonian, channels })
    }

    pub fn spec(&self) -> &LiouvillianSpec {
        &self.spec
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    /// `dρ/dt` for a raw matrix on this generator's space.
    pub fn apply(&self, rho: &Array2<C64>) -> Array2<C64> {
        let mut out = Array2::<C64>::zeros(rho.raw_dim());
        if let Some(h) = &self.hamiltonian {
            let comm = h.mul_left(rho) - h.mul_right(rho);
            out.scaled_add(C64::new(0.0, -1.0), &comm);
        }
        for ch in &self.channels {
            let sandwich = ch.op.mul_left(&ch.op.adjoint().mul_right(rho));
            out.scaled_add(C64::from(2.0 * ch.rate), &sandwich);
            out.scaled_add(C64::from(-ch.rate), &ch.op_dag_op.mul_left(rho));
            out.scaled_add(C64::from(-ch.rate), &ch.op_dag_op.mul_right(rho));
        }
        out
    }

    /// Integration step for fixed-step RK4 over a span.
    ///
    /// Every rate present in the generator satisfies `rate · h ≤ 0.01`, and
    /// the fastest population decay satisfies `λ · h ≤ 0.25`.
    pub fn rk4_step(&self) -> f64 {
        let p = &self.spec.params;
        // the fastest Rabi frequency in the truncated space is g·sqrt(n_max)
        let rabi = p.g * (p.n_max as f64).sqrt();
        let rates = match self.spec.mode {
            Mode::AtomFieldEq1 => vec![rabi, p.kappa, p.gamma],
            Mode::AtomFieldEq6 => {
                vec![rabi, p.kappa * (1.0 + p.n_th), if self.spec.eq6_atomic_decay { p.gamma } else { 0.0 }]
            }
            Mode::FieldOnlyEq2 => vec![p.kappa * (1.0 + p.n_th)],
        };
        let mut h = rates.into_iter().filter(|r| *r > 0.0).fold(f64::INFINITY, |h, r| h.min(0.01 / r));
        let stiff = self.max_decay_rate();
        if stiff > 0.0 {
            h = h.min(0.25 / stiff);
        }
        h
    }

    /// Fastest decay rate of any diagonal element, `Σ 2 Γ max(c†c)`.
    pub fn max_decay_rate(&self) -> f64 {
        self.channels
            .iter()
            .map(|c| 2.0 * c.rate * c.op_dag_op.entries().iter().map(|e| e.2.re).fold(0.0, f64::max))
            .sum()
    }

    /// Superoperator as triplets over the row-major vectorization
    /// `(i, j) ↦ i·dim + j`.
    pub fn superoperator(&self) -> Vec<(usize, usize, C64)> {
        let d = self.dim();
        let idx = |i: usize, j: usize| i * d + j;
        let mut t = Vec::new();
        let minus_i = C64::new(0.0, -1.0);
        let left = |t: &mut Vec<(usize, usize, C64)>, op: &SparseOp, s: C64| {
            for &(i, k, x) in op.entries() {
                for j in 0..d {
                    t.push((idx(i, j), idx(k, j), s * x));
                }
            }
        };
        if let Some(h) = &self.hamiltonian {
            left(&mut t, h, minus_i);
        }
        for ch in &self.channels {
            left(&mut t, &ch.op_dag_op, C64::from(-ch.rate));
        }
        let right = |t: &mut Vec<(usize, usize, C64)>, op: &SparseOp, s: C64| {
            for &(l, j, x) in op.entries() {
                for i in 0..d {
                    t.push((idx(i, j), idx(i, l), s * x));
                }
            }
        };
        if let Some(h) = &self.hamiltonian {
            right(&mut t, h, -minus_i);
        }
        for ch in &self.channels {
            right(&mut t, &ch.op_dag_op, C64::from(-ch.rate));
            for &(i, k, x) in ch.op.entries() {
                for &(j, l, y) in ch.op.entries() {
                    t.push((idx(i, j), idx(k, l), 2.0 * ch.rate * x * y.conj()));
                }
            }
        }
        t
    }
}

/// `dρ/dt` of the master equation selected by `spec`.
pub fn liouvillian_rhs(spec: &LiouvillianSpec, rho: &DensityMatrix) -> Result<Array2<C64>> {
    let l = Liouvillian::new(*spec)?;
    if rho.space() != l.space() {
        return Err(Error::WrongSpace { expected: l.space().name(), found: rho.space().name() });
    }
    Ok(l.apply(rho.entries()))
}

/// Partition of the vectorized operator space into blocks that the
/// superoperator never couples.
#[derive(Debug, Clone)]
pub(crate) struct SectorPartition {
    #[cfg_attr(not(test), allow(dead_code))]
    pub sector_of: Vec<usize>,
    pub members: Vec<Vec<usize>>,
    /// Superoperator triplets in sector-local coordinates, grouped by sector.
    pub blocks: Vec<Vec<(usize, usize, C64)>>,
}

impl SectorPartition {
    pub fn new(n_nodes: usize, triplets: &[(usize, usize, C64)]) -> Self {
        let mut parent: Vec<usize> = (0..n_nodes).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for &(r, c, v) in triplets {
            if v == linalg::ZERO {
                continue;
            }
            let (a, b) = (find(&mut parent, r), find(&mut parent, c));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
        let mut root_to_sector = vec![usize::MAX; n_nodes];
        let mut sector_of = vec![0; n_nodes];
        let mut local = vec![0; n_nodes];
        let mut members: Vec<Vec<usize>> = Vec::new();
        for node in 0..n_nodes {
            let root = find(&mut parent, node);
            if root_to_sector[root] == usize::MAX {
                root_to_sector[root] = members.len();
                members.push(Vec::new());
            }
            let s = root_to_sector[root];
            sector_of[node] = s;
            local[node] = members[s].len();
            members[s].push(node);
        }
        let mut blocks = vec![Vec::new(); members.len()];
        for &(r, c, v) in triplets {
            if v == linalg::ZERO {
                continue;
            }
            blocks[sector_of[r]].push((local[r], local[c], v));
        }
        Self { sector_of, members, blocks }
    }

    pub fn dense_block(&self, s: usize) -> Array2<C64> {
        let n = self.members[s].len();
        let mut m = Array2::zeros((n, n));
        for &(r, c, v) in &self.blocks[s] {
            m[[r, c]] += v;
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_abs, ONE};
    use crate::quantum::{AtomLevel, DensityMatrix};
    use proptest::prelude::*;

    pub(crate) fn params(n_max: usize) -> SystemParams {
        SystemParams { g: 1.0, tau: 0.3, kappa: 0.05, gamma: 0.02, n_th: 0.2, flux: 0.5, n_max }
    }

    #[test]
    fn validation_rejects_bad_fields() {
        let ok = params(5);
        assert!(ok.validate().is_ok());
        let bad = SystemParams { kappa: -1.0, ..ok };
        assert!(matches!(bad.validate(), Err(Error::InvalidParameter { field: "kappa", .. })));
        let bad = SystemParams { tau: 0.0, ..ok };
        assert!(matches!(bad.validate(), Err(Error::InvalidParameter { field: "tau", .. })));
        let crowded = SystemParams { flux: 4.0, ..ok };
        assert!(matches!(crowded.validate(), Err(Error::InvalidParameter { field: "flux", .. })));
        let tiny = SystemParams { n_max: 1, ..ok };
        assert!(tiny.validate().is_err());
    }

    #[test]
    fn derived_quantities() {
        let p = SystemParams { g: 2.0, tau: 0.5, kappa: 0.1, gamma: 0.0, n_th: 0.0, flux: 0.8, n_max: 4 };
        assert!((p.n_per_lifetime() - 4.0).abs() < 1e-15);
        assert!((p.pump_parameter() - 2.0).abs() < 1e-15);
        assert!((SystemParams::flux_for(0.1, 4.0) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn hamiltonian_couples_one_photon_block() {
        let p = SystemParams { g: 0.7, ..params(4) };
        let h = jc_hamiltonian(&p).unwrap();
        // ⟨0,a| H |1,b⟩: |0,a⟩ ↦ 0, |1,b⟩ ↦ 3
        assert!((h[[0, 3]] - C64::from(0.7)).norm() < 1e-15);
        assert!(linalg::hermiticity_error(&h) == 0.0);
    }

    fn random_state(space: Space, seed: &[f64]) -> DensityMatrix {
        let d = space.dim();
        let g = Array2::from_shape_fn((d, d), |(i, j)| {
            C64::new(seed[(i * d + j) % seed.len()], seed[(i * 7 + j * 3 + 2) % seed.len()])
        });
        let m = g.dot(&linalg::dagger(&g));
        let t = linalg::trace(&m).re;
        let mut m = m.mapv(|x| x / t);
        linalg::hermitize(&mut m);
        DensityMatrix::new(space, m).unwrap()
    }

    proptest! {
        #[test]
        fn rhs_is_traceless_and_hermitian(seed in prop::collection::vec(-1.0f64..1.0, 11..30), mode_ix in 0usize..3) {
            let mode = [Mode::AtomFieldEq1, Mode::AtomFieldEq6, Mode::FieldOnlyEq2][mode_ix];
            let spec = LiouvillianSpec::new(mode, params(4));
            let rho = random_state(spec.space().unwrap(), &seed);
            let d = liouvillian_rhs(&spec, &rho).unwrap();
            prop_assert!(linalg::trace(&d).norm() < 1e-13);
            prop_assert!(linalg::hermiticity_error(&d) < 1e-13);
        }

        #[test]
        fn superoperator_matches_rhs(seed in prop::collection::vec(-1.0f64..1.0, 11..30), mode_ix in 0usize..3) {
            let mode = [Mode::AtomFieldEq1, Mode::AtomFieldEq6, Mode::FieldOnlyEq2][mode_ix];
            let mut spec = LiouvillianSpec::new(mode, params(3));
            spec.eq6_atomic_decay = true;
            let l = Liouvillian::new(spec).unwrap();
            let rho = random_state(l.space(), &seed);
            let d = l.dim();
            let mut via_super = Array2::<C64>::zeros((d, d));
            for (r, c, v) in l.superoperator() {
                via_super[[r / d, r % d]] += v * rho.entries()[[c / d, c % d]];
            }
            prop_assert!(max_abs(&(&via_super - &l.apply(rho.entries()))) < 1e-13);
        }
    }

    #[test]
    fn photon_decays_at_twice_kappa() {
        let p = SystemParams { kappa: 0.3, n_th: 0.0, ..params(4) };
        let spec = LiouvillianSpec::new(Mode::FieldOnlyEq2, p);
        let rho = DensityMatrix::fock(p.fock_space().unwrap(), 1).unwrap();
        let d = liouvillian_rhs(&spec, &rho).unwrap();
        let dn: f64 = (0..4).map(|n| n as f64 * d[[n, n]].re).sum();
        assert!((dn + 2.0 * 0.3).abs() < 1e-14);
    }

    #[test]
    fn thermal_state_is_stationary_under_field_decay() {
        for n_th in [0.0, 0.033, 0.5] {
            let p = SystemParams { n_th, n_max: 30, ..params(30) };
            let spec = LiouvillianSpec::new(Mode::FieldOnlyEq2, p);
            // Untruncated thermal populations satisfy detailed balance level by
            // level; truncation only alters the top level.
            let rho = DensityMatrix::thermal(p.fock_space().unwrap(), n_th).unwrap();
            let d = liouvillian_rhs(&spec, &rho).unwrap();
            assert!(max_abs(&d) / p.kappa < 1e-12, "n_th = {n_th}: {}", max_abs(&d));
        }
    }

    #[test]
    fn rhs_rejects_wrong_space() {
        let spec = LiouvillianSpec::new(Mode::AtomFieldEq1, params(3));
        let rho = DensityMatrix::vacuum(FockSpace::new(3).unwrap());
        assert!(matches!(liouvillian_rhs(&spec, &rho), Err(Error::WrongSpace { .. })));
        let joint = rho.with_atom(AtomLevel::Upper).unwrap();
        let field_spec = LiouvillianSpec::new(Mode::FieldOnlyEq2, params(3));
        assert!(liouvillian_rhs(&field_spec, &joint).is_err());
    }

    #[test]
    fn eq6_without_thermal_photons_equals_eq1_without_atomic_decay() {
        let p = SystemParams { n_th: 0.0, gamma: 0.0, ..params(4) };
        let l1 = Liouvillian::new(LiouvillianSpec::new(Mode::AtomFieldEq1, p)).unwrap();
        let l6 = Liouvillian::new(LiouvillianSpec::new(Mode::AtomFieldEq6, p)).unwrap();
        let rho = random_state(l1.space(), &[0.3, -0.2, 0.9, 0.1, -0.7, 0.5, 0.05]);
        assert!(max_abs(&(l1.apply(rho.entries()) - l6.apply(rho.entries()))) < 1e-15);
    }

    #[test]
    fn sectors_follow_excitation_difference() {
        let l = Liouvillian::new(LiouvillianSpec::new(Mode::AtomFieldEq6, params(5))).unwrap();
        let d = l.dim();
        let part = SectorPartition::new(d * d, &l.superoperator());
        let exc = |i: usize| (i / 2 + usize::from(i % 2 == 0)) as i64;
        for r in 0..d * d {
            for c in 0..d * d {
                let same = part.sector_of[r] == part.sector_of[c];
                let k_r = exc(r / d) - exc(r % d);
                let k_c = exc(c / d) - exc(c % d);
                if same {
                    assert_eq!(k_r, k_c);
                }
            }
        }
        // the populations of |n,a⟩ and |n,b⟩ share one sector
        assert_eq!(part.sector_of[0], part.sector_of[d + 1]);
        let _ = ONE;
    }
}
