//! Log-Lipschitz cones and their Hilbert projective metric.
//!
//! `V_a = {ψ > 0 : |ψ′| ≤ aψ}` and `C_α = {ψ > 0 : |ψ″| ≤ αψ}`; their
//! intersection is `U_{a,α}`. The cone order is `φ ≤ ψ ⇔ ψ − φ ∈ V_a`.
//!
//! The constraints defining `βψ − φ ∈ V_a` are affine in `β`, so for interior
//! rays the least admissible `β` is the largest of the three node-wise ratios
//! `φ/ψ`, `(aφ − φ′)/(aψ − ψ′)` and `(aφ + φ′)/(aψ + ψ′)`. That closed form is
//! checked against a direct bisection on the order predicate.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, StoError};
use crate::rng::substream;
use crate::torus::{periodic_derivative, GridDensity, GridFn};

/// Absolute membership slack, relative to the sup of the data.
pub const MEMBERSHIP_TOL: f64 = 1e-10;
/// Minimum relative slack `(a − log_lip)/a` accepted by [`hilbert_metric`].
pub const HILBERT_MIN_SLACK: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeParams {
    pub a: f64,
    pub alpha: f64,
}

impl ConeParams {
    pub fn new(a: f64, alpha: f64) -> Result<Self> {
        if !(a >= 0.0 && alpha >= 0.0 && a.is_finite() && alpha.is_finite()) {
            return Err(StoError::Domain(format!(
                "cone parameters must be finite and nonnegative (a = {a}, alpha = {alpha})"
            )));
        }
        Ok(ConeParams { a, alpha })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeReport {
    /// `max_j |φ′/φ|`
    pub log_lip: f64,
    /// `max_j |φ″/φ|`
    pub second_ratio: f64,
    #[serde(rename = "in_Va")]
    pub in_va: bool,
    #[serde(rename = "in_Ualpha")]
    pub in_ualpha: bool,
    /// `a − log_lip`
    pub slack: f64,
}

pub fn cone_report(phi: &GridDensity, p: ConeParams) -> Result<ConeReport> {
    let f = phi.as_fn();
    if f.min() <= 0.0 {
        return Err(StoError::Domain("density must be strictly positive".into()));
    }
    let d1 = periodic_derivative(f, 1);
    let d2 = periodic_derivative(f, 2);
    let log_lip = ratio_max(&d1, f);
    let second_ratio = ratio_max(&d2, f);
    let in_va = log_lip <= p.a;
    Ok(ConeReport {
        log_lip,
        second_ratio,
        in_va,
        in_ualpha: in_va && second_ratio <= p.alpha,
        slack: p.a - log_lip,
    })
}

fn ratio_max(num: &GridFn, den: &GridFn) -> f64 {
    num.values()
        .iter()
        .zip(den.values())
        .map(|(n, d)| (n / d).abs())
        .fold(0.0, f64::max)
}

/// `g ∈ V_a` on the grid: `g > 0` and `|g′| ≤ a g + tol`.
pub fn in_cone(g: &GridFn, a: f64, tol: f64) -> bool {
    if g.min() <= 0.0 {
        return false;
    }
    let d = periodic_derivative(g, 1);
    d.values()
        .iter()
        .zip(g.values())
        .all(|(dg, v)| dg.abs() <= a * v + tol)
}

/// `φ ≤ ψ` in the order of `V_a`, with slack [`MEMBERSHIP_TOL`] times the larger sup.
pub fn partial_order_leq(phi: &GridDensity, psi: &GridDensity, a: f64) -> bool {
    partial_order_leq_tol(phi.as_fn(), psi.as_fn(), a, MEMBERSHIP_TOL)
}

/// Cone order for arbitrary grid functions with relative slack `rel_tol`.
pub fn partial_order_leq_tol(phi: &GridFn, psi: &GridFn, a: f64, rel_tol: f64) -> bool {
    let scale = phi.sup_norm().max(psi.sup_norm());
    in_cone(&(psi - phi), a, rel_tol * scale)
}

fn check_interior(phi: &GridDensity, a: f64, which: &str) -> Result<(GridFn, GridFn)> {
    let f = phi.as_fn().clone();
    let d = periodic_derivative(&f, 1);
    let log_lip = ratio_max(&d, &f);
    if a <= 0.0 || (a - log_lip) / a < HILBERT_MIN_SLACK {
        return Err(StoError::Precondition(format!(
            "{which} is not interior to V_a (log_lip = {log_lip:.6}, a = {a})"
        )));
    }
    Ok((f, d))
}

/// `M(φ, ψ) = inf{β : φ ≤ βψ}` from the three-ratio closed form.
fn upper_ratio(phi: (&GridFn, &GridFn), psi: (&GridFn, &GridFn), a: f64) -> f64 {
    let (f, df) = (phi.0.values(), phi.1.values());
    let (g, dg) = (psi.0.values(), psi.1.values());
    let mut m = f64::NEG_INFINITY;
    for j in 0..f.len() {
        let r0 = f[j] / g[j];
        let r1 = (a * f[j] - df[j]) / (a * g[j] - dg[j]);
        let r2 = (a * f[j] + df[j]) / (a * g[j] + dg[j]);
        m = m.max(r0).max(r1).max(r2);
    }
    m
}

/// Hilbert projective distance `log(M/m)` in `V_a` of two interior densities.
pub fn hilbert_metric(phi: &GridDensity, psi: &GridDensity, a: f64) -> Result<f64> {
    if phi.grid_size() != psi.grid_size() {
        return Err(StoError::Domain("grid sizes differ".into()));
    }
    let (f, df) = check_interior(phi, a, "first argument")?;
    let (g, dg) = check_interior(psi, a, "second argument")?;
    let big_m = upper_ratio((&f, &df), (&g, &dg), a);
    let inv_small_m = upper_ratio((&g, &dg), (&f, &df), a);
    Ok((big_m * inv_small_m).ln().max(0.0))
}

/// Reference Hilbert distance by bisection on the order predicate.
///
/// `β` is first scanned over `beta_steps` log-spaced values in `[1e-9, 1e9]`
/// to bracket the threshold, which is then refined by bisection.
pub fn hilbert_metric_bruteforce(
    phi: &GridDensity,
    psi: &GridDensity,
    a: f64,
    beta_steps: usize,
) -> Result<f64> {
    if beta_steps < 1000 {
        return Err(StoError::Domain(format!("beta_steps must be at least 1000, got {beta_steps}")));
    }
    let (f, g) = (phi.as_fn(), psi.as_fn());
    // M: least β with φ ≤ βψ; the predicate is monotone increasing in β
    let big_m = threshold(beta_steps, |b| partial_order_leq_tol(f, &g.scale(b), a, MEMBERSHIP_TOL))
        .ok_or_else(|| StoError::Unbounded("no β ≤ 1e9 with φ ≤ βψ".into()))?;
    // m: greatest β with βψ ≤ φ, i.e. least 1/β with ψ ≤ (1/β)φ
    let inv_m = threshold(beta_steps, |b| partial_order_leq_tol(g, &f.scale(b), a, MEMBERSHIP_TOL))
        .ok_or_else(|| StoError::Unbounded("no β ≥ 1e-9 with βψ ≤ φ".into()))?;
    Ok((big_m * inv_m).ln().max(0.0))
}

fn threshold(steps: usize, pred: impl Fn(f64) -> bool) -> Option<f64> {
    let (lo_exp, hi_exp) = (-9.0f64, 9.0f64);
    let beta = |i: usize| 10f64.powf(lo_exp + (hi_exp - lo_exp) * i as f64 / (steps - 1) as f64);
    let first = (0..steps).find(|&i| pred(beta(i)))?;
    if first == 0 {
        return Some(beta(0));
    }
    let (mut lo, mut hi) = (beta(first - 1), beta(first));
    while hi / lo - 1.0 > 1e-13 {
        let mid = (lo * hi).sqrt();
        if pred(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

/// Random element of `V_a` with log-density a trigonometric polynomial.
///
/// The degree is drawn from `1..=8`; the log-density is rescaled so that its
/// derivative peaks at exactly `target_log_lip`. With `alpha`, the sample is
/// shrunk towards the constant until `|φ″/φ| ≤ alpha` as well.
pub fn sample_cone_density<R: Rng + ?Sized>(
    rng: &mut R,
    grid_size: usize,
    target_log_lip: f64,
    alpha: Option<f64>,
) -> Result<GridDensity> {
    let degree = rng.random_range(1..=8usize);
    let mut coef = Vec::with_capacity(degree);
    for k in 1..=degree {
        let c: f64 = StandardNormal.sample(rng);
        let s: f64 = StandardNormal.sample(rng);
        coef.push((c / k as f64, s / k as f64));
    }
    let log_density = |x: f64| -> (f64, f64, f64) {
        let (mut u, mut du, mut ddu) = (0.0, 0.0, 0.0);
        for (k, (c, s)) in coef.iter().enumerate() {
            let w = 2.0 * std::f64::consts::PI * (k + 1) as f64;
            let (sn, cs) = (w * x).sin_cos();
            u += c * cs + s * sn;
            du += w * (-c * sn + s * cs);
            ddu -= w * w * (c * cs + s * sn);
        }
        (u, du, ddu)
    };
    let shape = GridFn::constant(grid_size, 0.0)?;
    let samples: Vec<(f64, f64, f64)> = shape.nodes().map(log_density).collect();
    let max_du = samples.iter().map(|s| s.1.abs()).fold(0.0, f64::max);
    if max_du == 0.0 || target_log_lip == 0.0 {
        return GridDensity::uniform(grid_size);
    }
    let mut scale = target_log_lip / max_du;
    if let Some(alpha) = alpha {
        let second = |s: f64| {
            samples
                .iter()
                .map(|(_, du, ddu)| (s * ddu + s * s * du * du).abs())
                .fold(0.0, f64::max)
        };
        while second(scale) > alpha {
            scale *= 0.9;
        }
    }
    GridDensity::from_values(samples.iter().map(|(u, _, _)| (scale * u).exp()).collect())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DiameterEstimate {
    pub diameter: f64,
    /// Hilbert distance of each sampled pair.
    pub distances: Vec<f64>,
}

impl DiameterEstimate {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["pair", "distance"])?;
        for (i, d) in self.distances.iter().enumerate() {
            wtr.serialize((i, d))?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Monte Carlo lower estimate of the `V_a`-diameter of `V_{λa}`.
///
/// Each of the `n_samples` pairs is drawn from its own substream of `seed`,
/// both members with log-Lipschitz constant exactly `λa`.
pub fn diameter_estimate(
    a: f64,
    lam: f64,
    n_samples: usize,
    seed: u64,
    grid_size: usize,
) -> Result<DiameterEstimate> {
    if !(lam > 0.0 && lam < 1.0) {
        return Err(StoError::Domain(format!("lam must lie in (0, 1), got {lam}")));
    }
    if n_samples < 2 {
        return Err(StoError::Domain("n_samples must be at least 2".into()));
    }
    let distances = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, i);
            let phi = sample_cone_density(&mut rng, grid_size, lam * a, None)?;
            let psi = sample_cone_density(&mut rng, grid_size, lam * a, None)?;
            hilbert_metric(&phi, &psi, a)
        })
        .collect::<Result<Vec<f64>>>()?;
    let diameter = distances.iter().cloned().fold(0.0, f64::max);
    Ok(DiameterEstimate { diameter, distances })
}

/// Perturbation size below which `ψ + ψ₁` stays in `V_a` for unit-mass `ψ ∈ V_{a′}`.
pub fn strict_inclusion_margin(a_prime: f64, a: f64) -> Result<f64> {
    if !(a_prime >= 0.0 && a_prime < a) {
        return Err(StoError::Domain(format!(
            "need 0 <= a' < a, got a' = {a_prime}, a = {a}"
        )));
    }
    let first = (a - a_prime) / (4.0 * a_prime * (a_prime / 2.0).exp() + 6.0 * a_prime.exp());
    let second = (-a_prime / 2.0).exp() / 2.0;
    Ok(first.min(second))
}
