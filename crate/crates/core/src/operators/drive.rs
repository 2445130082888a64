use serde::{Deserialize, Serialize};

use super::coupling::{CouplingSpec, CouplingTable};
use crate::error::{Result, StoError};
use crate::torus::{wrap, GridDensity, GridFn, Interpolant, Interpolation};

/// Mean-field displacement `c(x) = ∫H(x, y)φ̂(y)dy` of a density, defining
/// the drive `g_φ(x) = x + δc(x) mod 1`.
#[derive(Clone, Debug)]
pub struct DriveField {
    delta: f64,
    /// `c, c′, c″, c‴` on the grid
    c: [GridFn; 4],
    c_interp: Interpolant,
    c1_interp: Interpolant,
    c_sup: f64,
}

/// Build the drive of `φ`. Fails when `g′ = 1 + δc′` is not positive.
pub fn drive_field(
    phi: &GridDensity,
    table: &CouplingTable,
    delta: f64,
    interp: Interpolation,
) -> Result<DriveField> {
    let mass = phi.integral();
    let phi_hat = phi.as_fn().scale(1.0 / mass);
    DriveField::from_weight(&phi_hat, table, delta, interp)
}

impl DriveField {
    /// Drive of the signed weight `w` (already normalized by the caller).
    pub(crate) fn from_weight(
        w: &GridFn,
        table: &CouplingTable,
        delta: f64,
        interp: Interpolation,
    ) -> Result<Self> {
        if !delta.is_finite() {
            return Err(StoError::Domain("delta must be finite".into()));
        }
        let c = [
            table.integrate(0, w),
            table.integrate(1, w),
            table.integrate(2, w),
            table.integrate(3, w),
        ];
        let c_interp = Interpolant::new(&c[0], interp);
        let c1_interp = Interpolant::new(&c[1], interp);
        let field = DriveField {
            delta,
            c_sup: c[0].sup_norm(),
            c,
            c_interp,
            c1_interp,
        };
        // g′ on the grid and at midpoints
        let g = w.grid_size();
        let min_gp = (0..2 * g)
            .map(|j| field.g_prime(j as f64 / (2 * g) as f64))
            .fold(f64::INFINITY, f64::min);
        if min_gp <= 0.0 {
            return Err(StoError::CouplingTooStrong(format!(
                "min g' = {min_gp:.6} <= 0 at delta = {delta}; the drive is not a diffeomorphism"
            )));
        }
        Ok(field)
    }

    /// The identity drive (`c ≡ 0`).
    pub fn identity(grid_size: usize, interp: Interpolation) -> Result<Self> {
        let zero = GridFn::constant(grid_size, 0.0)?;
        Ok(DriveField {
            delta: 0.0,
            c_interp: Interpolant::new(&zero, interp),
            c1_interp: Interpolant::new(&zero, interp),
            c: [zero.clone(), zero.clone(), zero.clone(), zero],
            c_sup: 0.0,
        })
    }

    /// `g` is the identity map.
    pub fn is_identity(&self) -> bool {
        self.delta == 0.0 || self.c_sup == 0.0
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn grid_size(&self) -> usize {
        self.c[0].grid_size()
    }

    /// `c^{(i)}` on the grid, `i ∈ 0..=3`.
    pub fn c(&self, i: usize) -> &GridFn {
        &self.c[i]
    }

    /// Lift of the drive to ℝ: `y + δc(y)`.
    pub fn g_lift(&self, y: f64) -> f64 {
        y + self.delta * self.c_interp.eval(y)
    }

    pub fn g(&self, y: f64) -> f64 {
        wrap(self.g_lift(y))
    }

    pub fn g_prime(&self, y: f64) -> f64 {
        1.0 + self.delta * self.c1_interp.eval(y)
    }

    /// `g′` on the grid nodes.
    pub fn g_prime_grid(&self) -> GridFn {
        self.c[1].map(|v| 1.0 + self.delta * v)
    }

    /// The unique `y ∈ [0, 1)` with `g(y) = x mod 1`.
    ///
    /// Newton on the lift, safeguarded by the bracket `|y − x| ≤ |δ| sup|c|`.
    pub fn g_inverse(&self, x: f64) -> Result<f64> {
        let x = wrap(x);
        if self.is_identity() {
            return Ok(x);
        }
        let reach = self.delta.abs() * self.c_sup * 1.01 + 1e-12;
        let (mut lo, mut hi) = (x - reach, x + reach);
        let mut y = (x - self.delta * self.c_interp.eval(x)).clamp(lo, hi);
        let mut polish = false;
        for _ in 0..200 {
            let f = self.g_lift(y) - x;
            if f > 0.0 {
                hi = hi.min(y);
            } else if f < 0.0 {
                lo = lo.max(y);
            } else {
                return Ok(wrap(y));
            }
            let mut next = y - f / self.g_prime(y);
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            let step = (next - y).abs();
            y = next;
            if polish {
                return Ok(wrap(y));
            }
            if step < 1e-13 {
                polish = true;
            }
            if hi - lo < 1e-16 {
                return Ok(wrap(y));
            }
        }
        Err(StoError::Numerical(format!("g_inverse did not converge at x = {x}")))
    }
}

/// Sup-norm bounds on the drive and its inverse, uniform over densities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GBounds {
    /// `|g − id|∞ ≤ |δ| |H|∞`
    pub displacement: f64,
    /// `|g′|∞ ≤ 1 + |δ| |∂₁H|∞`
    pub g1: f64,
    /// `|g″|∞ ≤ |δ| |∂₁²H|∞`
    pub g2: f64,
    /// `|g‴|∞ ≤ |δ| |∂₁³H|∞`
    pub g3: f64,
    /// `|(g⁻¹)′|∞ ≤ (1 − |δ| |∂₁H|∞)⁻¹`
    pub inverse_derivative: f64,
}

/// Grid used for sampling `sup |∂₁ⁱH|`.
const SUP_SAMPLES: usize = 512;

pub fn g_bounds(h: CouplingSpec, delta: f64) -> Result<GBounds> {
    let d = delta.abs();
    let s: Vec<f64> = (0..4).map(|i| h.sup_d1(i, SUP_SAMPLES)).collect();
    if d * s[1] >= 1.0 {
        return Err(StoError::CouplingTooStrong(format!(
            "|delta| * |d1 H| = {:.6} >= 1",
            d * s[1]
        )));
    }
    Ok(GBounds {
        displacement: d * s[0],
        g1: 1.0 + d * s[1],
        g2: d * s[2],
        g3: d * s[3],
        inverse_derivative: 1.0 / (1.0 - d * s[1]),
    })
}
