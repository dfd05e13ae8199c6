//! One-atom maser and laser simulation: Jaynes–Cummings coupling of a
//! single cavity mode to a stream of two-level atoms, with cavity damping,
//! thermal photons and atomic decay.

pub mod error;
pub mod linalg;
pub mod liouvillian;
pub mod propagator;
pub mod quantum;
pub mod steady;
pub mod trajectory;

pub use error::{Error, Result};
pub use liouvillian::{jc_hamiltonian, liouvillian_rhs, Liouvillian, LiouvillianSpec, Mode, SystemParams};
pub use propagator::{atom_pass_map, evolve, AtomPass, CachedPropagator, Propagator};
pub use quantum::{
    annihilation_op, atomic_ops, atomic_projector, creation_op, number_op, partial_trace_atom, photon_stats, tensor,
    upper_state_population, AtomLevel, DensityMatrix, FockSpace, PhotonStats, Space,
};
pub use steady::{
    analytic_product_stats, fixed_point_stats, pump_sweep, variance_peak_scan, SteadyMethod, SteadyStateResult,
    SweepPoint, SweepResult,
};
pub use trajectory::{
    projection_noise, run_trajectory, sample_gap, trap_condition, ArrivalSampler, SnapshotTiming, TrajectoryConfig,
    TrajectoryRecord, TrajectoryRow, TrapReport,
};
