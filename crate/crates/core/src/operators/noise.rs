//! State-dependent noise around the trap `[−Δ, Δ]`.
//!
//! The transition density from `x` is
//! `ξ(x, y) = (1 − w(x)) ξ̃(x − y) + w(x)` with `w(x) = γι(x)/(2Δ)`, where `ξ̃`
//! is a symmetric bump supported on `[−Δ/3, Δ/3]` and `ι` is a smooth cutoff
//! vanishing on `[−2Δ/3, 2Δ/3]`. On the grid every node carries the bump mass
//! of its cell, so rows are stochastic to rounding.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, StoError};
use crate::torus::{centered, periodic_derivative_with, wrap, DerivativeMethod, GridDensity, GridFn};

/// Shape of the base bump `ξ̃` on `(−r, r)`, `r = Δ/3`, up to normalization.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BumpProfile {
    /// `exp[−(r² − z²)⁻¹]`, literally; its width is of order `r²`.
    #[default]
    Paper,
    /// `exp[−(1 − z²/r²)⁻¹]`, the same bump stretched to fill its support.
    Scaled,
}

/// Shape of the cutoff `ι`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CutoffProfile {
    /// `0` for `|x| ≤ 2Δ/3`, `1` for `|x| ≥ 0.99Δ`, and the C^∞ transition
    /// `e^{−1/t} / (e^{−1/t} + e^{−1/(1−t)})` in between.
    #[default]
    Smooth,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    /// Trap half-width `Δ`.
    #[serde(rename = "Delta")]
    pub trap: f64,
    pub gamma: f64,
    #[serde(default)]
    pub bump: BumpProfile,
    #[serde(default)]
    pub cutoff: CutoffProfile,
}

/// Outcome of the kernel conditions, evaluated at construction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelChecks {
    /// `max_j |∫ξ(x_j, y)dy − 1|` on the grid.
    pub row_sum_error: f64,
    /// Largest uniform weight `w(x)` found with `|x| ≤ 2Δ/3`; zero when the kernel is the pure bump there.
    pub a1_max_weight_inside: f64,
    pub a1_holds: bool,
    /// `min_x ∫_{[−Δ,Δ]} ξ(x, y)dy`.
    pub a2_min_trap_mass: f64,
    pub a2_holds: bool,
    /// `sup_y ‖ξ(·, y) − ξ̃(· − y)‖_{C²} / γ` on the grid (zero when `γ = 0`).
    pub a3_constant: f64,
}

const FINE_POINTS: usize = 1 << 16;
const CHECK_POINTS: usize = 1 << 13;

#[derive(Clone, Debug)]
pub struct NoiseKernel {
    params: NoiseParams,
    grid_size: usize,
    /// Bump CDF on `FINE_POINTS + 1` equispaced knots of `[−r, r]`; also the inverse-CDF table.
    cdf: Vec<f64>,
    /// `G ∫_{cell m} ξ̃` for the grid offset `m`.
    bump_cells: Vec<f64>,
    /// `w(x_j)`
    weights: Vec<f64>,
    /// `c_ξ̃`, the normalizer of the profile.
    normalizer: f64,
    checks: KernelChecks,
}

impl NoiseKernel {
    pub fn new(params: NoiseParams, grid_size: usize) -> Result<Self> {
        let NoiseParams { trap, gamma, .. } = params;
        if !(trap > 0.0 && trap <= 0.25) {
            return Err(StoError::Domain(format!("trap half-width must lie in (0, 1/4], got {trap}")));
        }
        if !(gamma >= 0.0 && gamma <= 2.0 * trap) {
            return Err(StoError::Domain(format!(
                "gamma must lie in [0, 2*Delta] = [0, {}], got {gamma}",
                2.0 * trap
            )));
        }
        let shape = GridFn::constant(grid_size, 0.0)?;
        let r = trap / 3.0;

        // fine trapezoid CDF of the profile
        let dz = 2.0 * r / FINE_POINTS as f64;
        let pdf: Vec<f64> = (0..=FINE_POINTS)
            .map(|i| profile(params.bump, -r + i as f64 * dz, r))
            .collect();
        let mut cdf = Vec::with_capacity(pdf.len());
        let mut acc = 0.0;
        cdf.push(0.0);
        for w in pdf.windows(2) {
            acc += 0.5 * (w[0] + w[1]) * dz;
            cdf.push(acc);
        }
        let total = acc;
        if !(total > 0.0) {
            return Err(StoError::Numerical("bump profile has no mass".into()));
        }
        cdf.iter_mut().for_each(|c| *c /= total);

        let mut kernel = NoiseKernel {
            params,
            grid_size,
            cdf,
            bump_cells: Vec::new(),
            weights: Vec::new(),
            normalizer: 1.0 / total,
            checks: KernelChecks {
                row_sum_error: 0.0,
                a1_max_weight_inside: 0.0,
                a1_holds: true,
                a2_min_trap_mass: 0.0,
                a2_holds: true,
                a3_constant: 0.0,
            },
        };
        let h = shape.spacing();
        kernel.bump_cells = (0..grid_size)
            .map(|m| {
                let z = centered(m as f64 * h);
                (kernel.bump_cdf(z + 0.5 * h) - kernel.bump_cdf(z - 0.5 * h)) * grid_size as f64
            })
            .collect();
        kernel.weights = shape.nodes().map(|x| kernel.weight(x)).collect();
        kernel.checks = kernel.evaluate_checks();
        Ok(kernel)
    }

    pub fn params(&self) -> NoiseParams {
        self.params
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    pub fn checks(&self) -> KernelChecks {
        self.checks
    }

    /// `c_ξ̃`: the profile times this constant integrates to one.
    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    /// `ι(x)`
    pub fn cutoff(&self, x: f64) -> f64 {
        let d = self.params.trap;
        let (inner, outer) = (2.0 * d / 3.0, 0.99 * d);
        let t = (centered(x).abs() - inner) / (outer - inner);
        match self.params.cutoff {
            CutoffProfile::Smooth => {
                if t <= 0.0 {
                    0.0
                } else if t >= 1.0 {
                    1.0
                } else {
                    let a = (-1.0 / t).exp();
                    let b = (-1.0 / (1.0 - t)).exp();
                    a / (a + b)
                }
            }
        }
    }

    /// Weight `w(x) = γι(x)/(2Δ)` of the uniform component.
    pub fn weight(&self, x: f64) -> f64 {
        self.params.gamma * self.cutoff(x) / (2.0 * self.params.trap)
    }

    /// Normalized base bump `ξ̃(z)`.
    pub fn bump(&self, z: f64) -> f64 {
        self.normalizer * profile(self.params.bump, centered(z), self.params.trap / 3.0)
    }

    /// `∫_{−∞}^{z} ξ̃` for `z` in `[−1/2, 1/2)`.
    fn bump_cdf(&self, z: f64) -> f64 {
        let r = self.params.trap / 3.0;
        if z <= -r {
            return 0.0;
        }
        if z >= r {
            return 1.0;
        }
        let s = (z + r) / (2.0 * r) * FINE_POINTS as f64;
        let i = (s.floor() as usize).min(FINE_POINTS - 1);
        let t = s - i as f64;
        self.cdf[i] * (1.0 - t) + self.cdf[i + 1] * t
    }

    /// Grid kernel `ξ(x_j, y_l)`.
    pub fn entry(&self, j: usize, l: usize) -> f64 {
        let g = self.grid_size;
        let w = self.weights[j];
        (1.0 - w) * self.bump_cells[(j + g - l) % g] + w
    }

    /// `(Mφ)(y) = ∫ξ(x, y)φ(x)dx` on the grid.
    pub fn apply_m(&self, phi: &GridDensity) -> Result<GridDensity> {
        let g = self.grid_size;
        if phi.grid_size() != g {
            return Err(StoError::Domain(format!(
                "density grid {} does not match kernel grid {g}",
                phi.grid_size()
            )));
        }
        let v = phi.values();
        let u: Vec<f64> = v.iter().zip(&self.weights).map(|(p, w)| (1.0 - w) * p).collect();
        let uniform: f64 = v.iter().zip(&self.weights).map(|(p, w)| w * p).sum::<f64>() / g as f64;
        // the cell table is zero outside the bump support; skip those offsets
        let offsets: Vec<(usize, f64)> = self
            .bump_cells
            .iter()
            .enumerate()
            .filter(|(_, b)| **b != 0.0)
            .map(|(m, b)| (m, *b))
            .collect();
        let out = (0..g)
            .map(|l| {
                let conv: f64 = offsets.iter().map(|&(m, b)| u[(l + m) % g] * b).sum();
                conv / g as f64 + uniform
            })
            .collect();
        GridDensity::from_values(out)
    }

    /// Draw `y ~ ξ(x, ·)`, consuming exactly two `u64` from `rng`.
    pub fn sample<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> f64 {
        let u1: f64 = rng.random();
        let u2: f64 = rng.random();
        if u1 < self.weight(x) {
            u2
        } else {
            wrap(x + self.bump_quantile(u2))
        }
    }

    /// Inverse of the bump CDF, linear inside each fine cell.
    fn bump_quantile(&self, q: f64) -> f64 {
        let r = self.params.trap / 3.0;
        let dz = 2.0 * r / FINE_POINTS as f64;
        let k = self.cdf.partition_point(|&c| c < q).clamp(1, FINE_POINTS);
        let (c0, c1) = (self.cdf[k - 1], self.cdf[k]);
        let t = if c1 > c0 { ((q - c0) / (c1 - c0)).clamp(0.0, 1.0) } else { 0.5 };
        (-r + (k as f64 - 1.0 + t) * dz).clamp(-r, r)
    }

    /// Long-format CSV `x,y,xi` of the grid kernel.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["x", "y", "xi"])?;
        let h = 1.0 / self.grid_size as f64;
        for j in 0..self.grid_size {
            for l in 0..self.grid_size {
                wtr.serialize((j as f64 * h, l as f64 * h, self.entry(j, l)))?;
            }
        }
        wtr.flush()?;
        Ok(())
    }

    fn evaluate_checks(&self) -> KernelChecks {
        let g = self.grid_size;
        let d = self.params.trap;
        let gamma = self.params.gamma;
        let row_sum_error = (0..g)
            .map(|j| ((0..g).map(|l| self.entry(j, l)).sum::<f64>() / g as f64 - 1.0).abs())
            .fold(0.0, f64::max);

        let sweep = (0..CHECK_POINTS).map(|i| i as f64 / CHECK_POINTS as f64);
        let a1_max_weight_inside = sweep
            .clone()
            .chain(std::iter::once(2.0 * d / 3.0))
            .filter(|&x| centered(x).abs() <= 2.0 * d / 3.0)
            .map(|x| self.weight(x))
            .fold(0.0, f64::max);

        // exact continuum mass of ξ(x, ·) on [−Δ, Δ]
        let trap_mass = |x: f64| {
            let c = centered(x);
            let bump = self.bump_cdf(d - c) - self.bump_cdf(-d - c);
            let w = self.weight(x);
            (1.0 - w) * bump + w * 2.0 * d
        };
        let a2_min_trap_mass = sweep.map(trap_mass).fold(f64::INFINITY, f64::min);

        let a3_constant = if gamma > 0.0 {
            [0usize, g / 4, g / 2]
                .iter()
                .map(|&l| {
                    let diff = GridFn::from_raw(
                        (0..g)
                            .map(|j| self.entry(j, l) - self.bump_cells[(j + g - l) % g])
                            .collect(),
                    );
                    let mut norm = diff.sup_norm();
                    for order in 1..=2 {
                        let der = periodic_derivative_with(&diff, order, DerivativeMethod::FiniteDifference4);
                        norm = norm.max(der.sup_norm());
                    }
                    norm / gamma
                })
                .fold(0.0, f64::max)
        } else {
            0.0
        };

        KernelChecks {
            row_sum_error,
            a1_max_weight_inside,
            a1_holds: a1_max_weight_inside == 0.0,
            a2_min_trap_mass,
            a2_holds: a2_min_trap_mass >= gamma * (1.0 - 1e-12),
            a3_constant,
        }
    }
}

/// Unnormalized profile, scaled to peak value one.
fn profile(kind: BumpProfile, z: f64, r: f64) -> f64 {
    if z.abs() >= r {
        return 0.0;
    }
    let q = r * r - z * z;
    match kind {
        // exp(1/r² − 1/(r² − z²)), rearranged to avoid cancellation
        BumpProfile::Paper => (-(z * z) / (r * r * q)).exp(),
        BumpProfile::Scaled => (-(z * z) / q).exp(),
    }
}
