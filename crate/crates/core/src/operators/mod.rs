//! Transfer operators of the coupled system.
//!
//! For an expanding map `f` with transfer operator `P`, a coupling kernel `H`
//! and strength `δ`, the mean-field drive of a density `φ` is
//! `g_φ(x) = x + δ∫H(x, y)φ̂(y)dy`, `φ̂ = φ/∫φ`. The self-consistent operator is
//! `𝒯φ = P L_φ φ` with `L_φ` the push-forward by `g_φ`; the noisy variant
//! composes with the noise operator `M`.

mod coupling;
mod drive;
mod maps;
mod noise;
mod sto;

pub use coupling::{CouplingSpec, CouplingTable};
pub use drive::{drive_field, g_bounds, DriveField, GBounds};
pub use maps::{BranchValue, MapSpec};
pub use noise::{BumpProfile, CutoffProfile, KernelChecks, NoiseKernel, NoiseParams};
pub use sto::StoModel;
