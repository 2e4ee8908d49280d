//! Phase-space solver for a turbulence model in which fluid portions moving
//! with different velocities exchange mass at every point.
//!
//! The state is an alpha-density `rho(x, alpha) >= 0` over position and
//! velocity. It evolves by upwind transport, diffusion, and a mass mixer that
//! moves mass between velocity classes according to their impulse.
//! [`moments`] recovers density, mean velocity and inner energy;
//! [`portions`] tracks tagged sub-densities to show that disjoint fluid
//! regions end up overlapping; [`localization`] checks the kernel identities
//! numerically.

pub mod error;
pub mod grid;
pub mod localization;
pub mod mixer;
pub mod moments;
pub mod portions;
pub mod scenario;
pub mod solver;

pub use error::{Error, Result};
pub use grid::{
    alpha_density_from_transport, field_stats, kappa_from_scales, AlphaField, Boundary, FieldStats, SpatialGrid,
    VelocityGrid,
};
pub use mixer::{
    angle_factor_phi, boundary_mixer, impulse_mixer, mass_mixer, mixing_integral, saturation_r, BoundaryModulation,
    MixerParams, MixingKernel,
};
pub use moments::{
    angular_momentum, energy_update, impulse_budget, mass_density, mean_velocity, total_impulse, EulerFields,
    ImpulseBudget,
};
pub use portions::{
    covering_set, evolve_tag, overlap_measure, predict_set_propagation, seed_portion, velocity_support, PortionTag,
    SupportSet,
};
pub use solver::{
    advection_term, diffusion_term, run, stable_dt, step, DtPolicy, Integrator, LedgerEntry, Model, Observer, Rates,
    RunFailure, RunOutcome, SolverConfig, SolverState, StepRecord,
};
