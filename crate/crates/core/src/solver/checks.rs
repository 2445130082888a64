use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stability::stability_condition;
use crate::cones::{cone_report, in_cone, partial_order_leq_tol, sample_cone_density, strict_inclusion_margin, ConeParams};
use crate::error::{Result, StoError};
use crate::operators::StoModel;
use crate::rng::substream;
use crate::torus::{periodic_derivative, GridDensity};

/// Relative slack used when testing cone membership of images.
pub const ORDER_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderReport {
    pub n_pairs: usize,
    /// Pairs with `𝒯ψ − 𝒯φ ∉ V_a`.
    pub order_failures: usize,
    /// Directions `ξ ∈ V_a` with `D𝒯_φ(ξ) ∉ V_a`.
    pub differential_failures: usize,
    /// Largest `|h′|/h` over the image differences `h = 𝒯ψ − 𝒯φ`.
    pub worst_difference_log_lip: f64,
    /// Largest `|h′|/h` over the differential images.
    pub worst_differential_log_lip: f64,
}

fn require_stable(model: &StoModel) -> Result<()> {
    let k = model.map().expansion();
    let report = stability_condition(model.coupling(), k, model.delta())?;
    if !report.satisfied {
        return Err(StoError::Precondition(format!(
            "|delta| max ||d1^i H||_1 = {:.6} is not below 2(k - 1) = {:.6}",
            report.lhs, report.threshold
        )));
    }
    Ok(())
}

fn log_lip_signed(f: &crate::torus::GridFn) -> f64 {
    if f.min() <= 0.0 {
        return f64::INFINITY;
    }
    let d = periodic_derivative(f, 1);
    d.values()
        .iter()
        .zip(f.values())
        .map(|(n, v)| (n / v).abs())
        .fold(0.0, f64::max)
}

/// Monte Carlo check that `𝒯` preserves the order of `V_a` on `U_{a,α}`.
///
/// Pair `i` uses substream `i` of `seed`: `φ ∈ U_{a,α}` and
/// `ψ = φ + sξ` with `ξ ∈ U_{a,α}` of unit sup norm and `s` below the strict
/// inclusion margin of `φ`. The same `ξ` is used as a differential direction.
pub fn order_preservation_check(
    model: &StoModel,
    a: f64,
    alpha: f64,
    n_pairs: usize,
    seed: u64,
) -> Result<OrderReport> {
    ConeParams::new(a, alpha)?;
    require_stable(model)?;
    let g = model.grid_size();
    let results = (0..n_pairs as u64)
        .into_par_iter()
        .map(|i| -> Result<(bool, bool, f64, f64)> {
            let mut rng = substream(seed, i);
            let a_phi = a * rng.random_range(0.2..0.9);
            let a_xi = a * rng.random_range(0.2..0.95);
            let phi = sample_cone_density(&mut rng, g, a_phi, Some(alpha))?.normalized();
            let xi = sample_cone_density(&mut rng, g, a_xi, Some(alpha))?;
            let xi = xi.as_fn().scale(1.0 / xi.as_fn().sup_norm());
            let a_phi = cone_report(&phi, ConeParams::new(a, alpha)?)?.log_lip;
            let s = strict_inclusion_margin(a_phi, a)? * rng.random_range(0.1..1.0);
            let psi = GridDensity::new(phi.as_fn() + &xi.scale(s))?;

            let t_phi = model.apply_sto(&phi)?;
            let t_psi = model.apply_sto(&psi)?;
            let order_ok = partial_order_leq_tol(t_phi.as_fn(), t_psi.as_fn(), a, ORDER_TOL);
            let diff_ll = log_lip_signed(&(t_psi.as_fn() - t_phi.as_fn()));

            let d = model.sto_differential(&phi, &xi)?;
            let diff_ok = in_cone(&d, a, ORDER_TOL * d.sup_norm());
            Ok((order_ok, diff_ok, diff_ll, log_lip_signed(&d)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OrderReport {
        n_pairs,
        order_failures: results.iter().filter(|r| !r.0).count(),
        differential_failures: results.iter().filter(|r| !r.1).count(),
        worst_difference_log_lip: results.iter().map(|r| r.2).fold(0.0, f64::max),
        worst_differential_log_lip: results.iter().map(|r| r.3).fold(0.0, f64::max),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractionProbe {
    /// `max log_lip(𝒯ψ)/log_lip(ψ)` over the samples.
    pub lambda_hat: f64,
    /// `k⁻¹(1 + |δ| max_x‖∂₁²H(x, ·)‖₁ / 2)`
    pub lambda_predicted: f64,
    /// `lambda_hat − lambda_predicted`
    pub margin: f64,
    pub ratios: Vec<f64>,
}

/// Measured cone contraction of `𝒯` on `V_a` against the leading-order rate.
///
/// Sample `i` uses substream `i` of `seed` and has log-Lipschitz constant
/// uniform in `[a/2, a]`.
pub fn cone_contraction_probe(
    model: &StoModel,
    a: f64,
    n_samples: usize,
    seed: u64,
) -> Result<ContractionProbe> {
    if !(a > 0.0 && a <= 0.5) {
        return Err(StoError::Domain(format!("probe needs 0 < a <= 0.5, got {a}")));
    }
    if n_samples == 0 {
        return Err(StoError::Domain("n_samples must be positive".into()));
    }
    require_stable(model)?;
    let k = model.map().expansion();
    let norm_d2 = stability_condition(model.coupling(), k, model.delta())?.norm_d2;
    let g = model.grid_size();
    let ratios = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let mut rng = substream(seed, i);
            let target = a * rng.random_range(0.5..=1.0);
            let psi = sample_cone_density(&mut rng, g, target, None)?;
            let before = cone_report(&psi, ConeParams::new(a, f64::MAX)?)?.log_lip;
            let after = cone_report(&model.apply_sto(&psi)?, ConeParams::new(a, f64::MAX)?)?.log_lip;
            Ok(after / before)
        })
        .collect::<Result<Vec<f64>>>()?;
    let lambda_hat = ratios.iter().cloned().fold(0.0, f64::max);
    let lambda_predicted = (1.0 + model.delta().abs() * norm_d2 / 2.0) / k;
    Ok(ContractionProbe {
        lambda_hat,
        lambda_predicted,
        margin: lambda_hat - lambda_predicted,
        ratios,
    })
}
