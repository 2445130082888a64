use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Result, StoError};
use crate::operators::CouplingSpec;

/// Open interval `(lo, hi)` of coupling strengths.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo < x && x < self.hi
    }

    pub fn is_subset_of(&self, other: &Interval) -> bool {
        other.lo <= self.lo && self.hi <= other.hi
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    /// `max_x ‖∂₁H(x, ·)‖_{L¹}`
    pub norm_d1: f64,
    /// `max_x ‖∂₁²H(x, ·)‖_{L¹}`
    pub norm_d2: f64,
    /// `2(k − 1)`
    pub threshold: f64,
    /// `|δ| max(norm_d1, norm_d2)`
    pub lhs: f64,
    pub satisfied: bool,
    pub dirac_window: Interval,
    pub basin_window: Interval,
}

const Y_POINTS: usize = 1 << 15;
const X_POINTS: usize = 256;

/// `‖∂₁ⁱH(x, ·)‖_{L¹}` by the trapezoid rule on `2^15` nodes.
pub fn l1_norm_in_y(h: CouplingSpec, i: u32, x: f64) -> f64 {
    (0..Y_POINTS)
        .map(|l| h.d1(i, x, l as f64 / Y_POINTS as f64).abs())
        .sum::<f64>()
        / Y_POINTS as f64
}

/// `max_x ‖∂₁ⁱH(x, ·)‖_{L¹}`: a coarse scan in `x` refined by golden-section search.
pub fn max_l1_norm(h: CouplingSpec, i: u32) -> f64 {
    let f = |x: f64| l1_norm_in_y(h, i, x);
    let (best_j, mut best) = (0..X_POINTS)
        .map(|j| (j, f(j as f64 / X_POINTS as f64)))
        .fold((0, f64::NEG_INFINITY), |acc, (j, v)| if v > acc.1 { (j, v) } else { acc });
    let step = 1.0 / X_POINTS as f64;
    let (mut a, mut b) = (best_j as f64 * step - step, best_j as f64 * step + step);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..40 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    best = best.max(fc).max(fd);
    best
}

/// Contraction condition `|δ| max_i max_x ‖∂₁ⁱH(x, ·)‖₁ < 2(k − 1)` with both windows.
pub fn stability_condition(h: CouplingSpec, k: f64, delta: f64) -> Result<StabilityReport> {
    if !(k > 1.0) {
        return Err(StoError::Domain(format!("expansion k must exceed 1, got {k}")));
    }
    let norm_d1 = max_l1_norm(h, 1);
    let norm_d2 = max_l1_norm(h, 2);
    let threshold = 2.0 * (k - 1.0);
    let lhs = delta.abs() * norm_d1.max(norm_d2);
    Ok(StabilityReport {
        norm_d1,
        norm_d2,
        threshold,
        lhs,
        satisfied: lhs < threshold,
        dirac_window: dirac_window(k)?,
        basin_window: basin_window(k)?,
    })
}

/// Coupling strengths with `|k(1 + 2πδ)| < 1`, where the point mass at 0 is a
/// stable fixed point of the self-consistent operator for the sine-cosine coupling.
pub fn dirac_window(k: f64) -> Result<Interval> {
    if !(k > 1.0) {
        return Err(StoError::Domain(format!("expansion k must exceed 1, got {k}")));
    }
    Ok(Interval {
        lo: (-1.0 - 1.0 / k) / (2.0 * PI),
        hi: (-1.0 + 1.0 / k) / (2.0 * PI),
    })
}

/// Coupling strengths with `|k(1 + 2πδ)| < 2/3`, where the finite-N system
/// has a uniformly attracting fixed point at the origin.
pub fn basin_window(k: f64) -> Result<Interval> {
    if !(k > 2.0 / 3.0) {
        return Err(StoError::Domain(format!("basin window needs k > 2/3, got {k}")));
    }
    Ok(Interval {
        lo: -(2.0 + 3.0 * k) / (6.0 * PI * k),
        hi: -(3.0 * k - 2.0) / (6.0 * PI * k),
    })
}

/// `k(1 + 2πδ cos²(2πΔ))`, the contraction factor at the edge of `B_Δ`.
pub fn trap_contraction(delta: f64, k: f64, trap: f64) -> f64 {
    k * (1.0 + 2.0 * PI * delta * (2.0 * PI * trap).cos().powi(2))
}

/// `safety · Δ*`, where `Δ*` is the largest `Δ` with `k(1 + 2πδ cos²(2πΔ)) < 2/3`.
pub fn delta_max_trap(delta: f64, k: f64, safety: f64) -> Result<f64> {
    let window = basin_window(k)?;
    if !window.contains(delta) {
        return Err(StoError::Domain(format!(
            "delta = {delta} lies outside the basin window ({:.6}, {:.6})",
            window.lo, window.hi
        )));
    }
    if !(safety > 0.0 && safety <= 1.0) {
        return Err(StoError::Domain(format!("safety must lie in (0, 1], got {safety}")));
    }
    // increasing in Δ on [0, 1/4] because δ < 0
    let target = 2.0 / 3.0;
    let (mut lo, mut hi) = (0.0f64, 0.25f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if trap_contraction(delta, k, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-16 {
            break;
        }
    }
    Ok(safety * lo)
}
