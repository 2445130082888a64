//! Fixed-point iteration of the self-consistent operators with Hilbert-metric
//! diagnostics, and evaluators for the explicit stability conditions.

mod checks;
mod iterate;
mod stability;

pub use checks::{cone_contraction_probe, order_preservation_check, ContractionProbe, OrderReport, ORDER_TOL};
pub use iterate::{fixed_point_iterate, FixedPointOp, IterationTrace, MAX_ENTRY_STEPS};
pub use stability::{
    basin_window, delta_max_trap, dirac_window, l1_norm_in_y, max_l1_norm, stability_condition, trap_contraction,
    Interval, StabilityReport,
};

#[cfg(test)]
mod tests {
    use crate::torus::wrap;
    use std::f64::consts::PI;

    /// The origin is fixed by `x ↦ kx + kδ sin(2πx)m` for every `δ` and mean field `m`.
    #[test]
    fn origin_is_fixed_at_map_level() {
        for k in [2.0, 5.0] {
            for delta in [-0.3, -0.155, 0.0, 0.2] {
                for m in [-1.0, -0.3, 0.0, 0.7, 1.0] {
                    let x: f64 = 0.0;
                    let y = wrap(k * (x + delta * (2.0 * PI * x).sin() * m));
                    assert_eq!(y, 0.0);
                }
            }
        }
    }
}
