//! Finite-N mean-field coupled maps, deterministic and with state-dependent
//! noise: trajectories, absorption in the trap around the origin, one-step
//! law of large numbers and point-mass basin runs.
//!
//! Randomness is counter-addressed: the two draws of particle `i` at step `t`
//! of a chain sit at a fixed position of a ChaCha8 stream, so results do not
//! depend on the thread count.

mod chain;
mod dynamics;
mod lln;

pub use chain::{
    absorption_scaling, dw_to_dirac0, dw_to_lebesgue, run_chain, AbsorptionRow, AbsorptionTable,
    ChainConfig, ChainTrace, InitialState, KERNEL_GRID,
};
pub use dynamics::{det_step, det_step_with, noisy_step, NoiseStream};
pub use lln::{dirac_basin_run, fit_slope, lln_one_step, sample_from_density, LlnRow, LlnTable};
