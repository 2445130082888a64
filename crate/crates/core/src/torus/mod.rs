//! Calculus on the unit circle 𝕋 = [0, 1).
//!
//! Densities live on a uniform periodic grid `x_j = j / G` with `G` a power of
//! two. Quadrature is the periodic trapezoid rule (the arithmetic mean of the
//! node values), derivatives are spectral by default, and off-grid values come
//! from a periodic interpolant.

mod grid;
mod interp;
mod kde;
mod particles;
mod wasserstein;

pub use grid::{
    periodic_derivative, periodic_derivative_with, quad_integral, DerivativeMethod, GridDensity,
    GridFn, MIN_GRID_SIZE,
};
pub use interp::{Interpolant, Interpolation};
pub use kde::density_from_particles;
pub use particles::ParticleEnsemble;
pub use wasserstein::{wasserstein1_circle, CircleMeasure};

use serde::{Deserialize, Serialize};

/// Reduce a real coordinate to `[0, 1)`.
///
/// `rem_euclid` can round tiny negative inputs up to exactly `1.0`; those are
/// folded back onto `0.0`.
#[inline]
pub fn wrap(x: f64) -> f64 {
    let r = x.rem_euclid(1.0);
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Arc-length distance on the unit circle, in `[0, 1/2]`.
#[inline]
pub fn torus_dist(x: f64, y: f64) -> f64 {
    let d = (wrap(x) - wrap(y)).abs();
    d.min(1.0 - d)
}

/// Signed representative of `x` in `[-1/2, 1/2)`.
#[inline]
pub fn centered(x: f64) -> f64 {
    let w = wrap(x);
    if w >= 0.5 {
        w - 1.0
    } else {
        w
    }
}

/// A point of 𝕋, always stored reduced to `[0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TorusPoint(f64);

impl TorusPoint {
    pub fn new(x: f64) -> Self {
        TorusPoint(wrap(x))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn dist(self, other: TorusPoint) -> f64 {
        torus_dist(self.0, other.0)
    }
}

impl From<f64> for TorusPoint {
    fn from(x: f64) -> Self {
        TorusPoint::new(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn torus_dist_examples() {
        assert_eq!(torus_dist(0.0, 0.0), 0.0);
        assert!((torus_dist(0.1, 0.9) - 0.2).abs() < 1e-15);
        assert_eq!(torus_dist(0.25, 0.75), 0.5);
    }

    #[test]
    fn wrap_never_returns_one() {
        assert_eq!(wrap(-1e-20), 0.0);
        assert_eq!(wrap(1.0), 0.0);
        assert_eq!(wrap(-0.25), 0.75);
        assert_eq!(TorusPoint::new(3.5).value(), 0.5);
    }

    proptest! {
        #[test]
        fn dist_bounded_and_translation_invariant(x in -5.0f64..5.0, y in -5.0f64..5.0, s in -3.0f64..3.0) {
            let d = torus_dist(x, y);
            prop_assert!((0.0..=0.5).contains(&d));
            prop_assert!((torus_dist(x + s, y + s) - d).abs() < 1e-12);
            prop_assert!((torus_dist(y, x) - d).abs() == 0.0);
        }

        #[test]
        fn wrap_in_unit_interval(x in -1e6f64..1e6) {
            let w = wrap(x);
            prop_assert!((0.0..1.0).contains(&w));
        }
    }
}
