use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::chain::dw_to_dirac0;
use super::dynamics::{add_noise, coupled_images, det_step, NoiseStream};
use crate::error::{Result, StoError};
use crate::operators::{NoiseKernel, StoModel};
use crate::torus::{wasserstein1_circle, wrap, GridDensity, ParticleEnsemble};

/// Map uniforms through the inverse CDF of `phi`, read as constant cells
/// `[x_j − h/2, x_j + h/2)` centred on the nodes.
pub fn sample_from_density(phi: &GridDensity, uniforms: &[f64]) -> Result<ParticleEnsemble> {
    let v = phi.values();
    let g = v.len();
    let h = 1.0 / g as f64;
    let total: f64 = v.iter().sum();
    let mut cum = Vec::with_capacity(g + 1);
    cum.push(0.0);
    for w in v {
        cum.push(cum.last().unwrap() + w / total);
    }
    let points = uniforms
        .iter()
        .map(|&u| {
            let j = (cum.partition_point(|&c| c <= u) - 1).min(g - 1);
            let frac = ((u - cum[j]) / (cum[j + 1] - cum[j])).clamp(0.0, 1.0);
            wrap((j as f64 - 0.5 + frac) * h)
        })
        .collect();
    ParticleEnsemble::new(points)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LlnRow {
    #[serde(rename = "N")]
    pub n: usize,
    /// Mean over replicas of `W₁` between the empirical one-step measure and `M(f_μ)_*μ`.
    pub error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LlnTable {
    pub rows: Vec<LlnRow>,
    /// Least-squares slope of `log error` against `log N`.
    pub slope: f64,
}

impl LlnTable {
    /// Columns `N, error`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["N", "error"])?;
        for r in &self.rows {
            wtr.serialize((r.n, r.error))?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// One step of `N` particles drawn from `phi` against the grid image of `phi`.
///
/// The reference is `M𝒯φ` (or `𝒯φ` without a kernel) computed from the
/// sampling density itself. Replica `r` of size `j` uses stream
/// `(j << 32) | r` of `seed`: step 0 of the stream places the particles,
/// step 1 perturbs them.
pub fn lln_one_step(
    phi: &GridDensity,
    n_list: &[usize],
    model: &StoModel,
    kernel: Option<&NoiseKernel>,
    replicas: usize,
    seed: u64,
) -> Result<LlnTable> {
    if n_list.len() < 2 || n_list.contains(&0) {
        return Err(StoError::Domain("need at least two positive sample sizes".into()));
    }
    if replicas == 0 {
        return Err(StoError::Domain("need at least one replica".into()));
    }
    let reference = match kernel {
        Some(k) => model.apply_noisy_sto(phi, k)?,
        None => model.apply_sto(phi)?,
    };
    let rows = n_list
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            let errors = (0..replicas as u64)
                .into_par_iter()
                .map(|r| {
                    let noise = NoiseStream::new(seed, ((j as u64) << 32) | r);
                    let x = sample_from_density(phi, &noise.uniform_points(n))?;
                    let images = coupled_images(x.points(), model.map(), model.coupling(), model.delta());
                    let next = match kernel {
                        Some(k) => add_noise(images, k, noise, 1),
                        None => images,
                    };
                    wasserstein1_circle(&ParticleEnsemble::new(next)?, &reference)
                })
                .collect::<Result<Vec<f64>>>()?;
            let error = errors.iter().sum::<f64>() / replicas as f64;
            Ok(LlnRow { n, error })
        })
        .collect::<Result<Vec<LlnRow>>>()?;
    let lx: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
    let ly: Vec<f64> = rows.iter().map(|r| r.error.ln()).collect();
    Ok(LlnTable { slope: fit_slope(&lx, &ly), rows })
}

/// `W₁(μ_t, δ₀)` for `t = 0..=n_steps`, where `μ_0` puts `N` equally spaced
/// atoms on `[−ε, ε]` and `μ_{t+1}` is the deterministic image of `μ_t`.
pub fn dirac_basin_run(epsilon: f64, delta: f64, k: f64, n_steps: usize, n: usize) -> Result<Vec<f64>> {
    if !(0.0..0.5).contains(&epsilon) {
        return Err(StoError::Domain(format!("epsilon must lie in [0, 1/2), got {epsilon}")));
    }
    if n == 0 {
        return Err(StoError::Domain("N must be at least 1".into()));
    }
    let pts = (0..n).map(|i| epsilon * ((2 * i + 1) as f64 / n as f64 - 1.0)).collect();
    let mut x = ParticleEnsemble::new(pts)?;
    let mut series = Vec::with_capacity(n_steps + 1);
    series.push(dw_to_dirac0(&x));
    for _ in 0..n_steps {
        x = det_step(&x, k, delta);
        series.push(dw_to_dirac0(&x));
    }
    Ok(series)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{CouplingSpec, MapSpec, NoiseParams};
    use std::f64::consts::PI;

    #[test]
    fn inverse_cdf_of_uniform_is_identity() {
        let one = GridDensity::uniform(64).unwrap();
        let u = [0.0, 0.1, 0.5, 0.77, 0.999];
        let x = sample_from_density(&one, &u).unwrap();
        for (a, b) in u.iter().zip(x.points()) {
            assert!(crate::torus::torus_dist(a - 0.5 / 64.0, *b) < 1e-12);
        }
    }

    #[test]
    fn inverse_cdf_samples_match_density() {
        let phi = GridDensity::from_fn(256, |x| 1.0 + 0.5 * (2.0 * PI * x).cos()).unwrap();
        let n = 4096;
        let u: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let x = sample_from_density(&phi, &u).unwrap();
        assert!(wasserstein1_circle(&x, &phi).unwrap() < 1e-3);
    }

    #[test]
    fn particles_match_density_operator() {
        let g = 256;
        let model = StoModel::new(MapSpec::linear(5).unwrap(), CouplingSpec::SinCos, 0.1, g).unwrap();
        let phi = GridDensity::from_fn(g, |x| 1.0 + 0.4 * (2.0 * PI * x).cos()).unwrap();
        let n = 100_000;
        let x = sample_from_density(&phi, &NoiseStream::new(3, 0).uniform_points(n)).unwrap();
        let stepped = det_step(&x, 5.0, 0.1);
        let d = wasserstein1_circle(&stepped, &model.apply_sto(&phi).unwrap()).unwrap();
        assert!(d < 3.0 / (n as f64).sqrt() + 2e-3, "{d}");
    }

    #[test]
    fn deterministic_lln_decays_like_sampling_error() {
        let g = 256;
        let model = StoModel::new(MapSpec::linear(5).unwrap(), CouplingSpec::SinCos, 0.0, g).unwrap();
        let one = GridDensity::uniform(g).unwrap();
        let t = lln_one_step(&one, &[100, 1000, 10_000, 100_000], &model, None, 1, 1).unwrap();
        assert!(t.slope < -0.3 && t.slope > -0.7, "{t:?}");
    }

    #[test]
    fn noisy_lln_error_is_small() {
        let g = 256;
        let model = StoModel::new(MapSpec::linear(5).unwrap(), CouplingSpec::SinCos, -0.155, g).unwrap();
        let trap = crate::solver::delta_max_trap(-0.155, 5.0, 0.95).unwrap();
        let p = NoiseParams { trap, gamma: 0.02, bump: Default::default(), cutoff: Default::default() };
        let kern = NoiseKernel::new(p, g).unwrap();
        let phi = GridDensity::from_fn(g, |x| 1.0 + 0.3 * (2.0 * PI * x).sin()).unwrap();
        let t = lln_one_step(&phi, &[100, 1000, 10_000], &model, Some(&kern), 4, 7).unwrap();
        assert!(t.rows[2].error < 0.02, "{t:?}");
    }

    #[test]
    fn point_mass_stays_put() {
        let s = dirac_basin_run(0.0, -0.155, 5.0, 20, 100).unwrap();
        assert!(s.iter().all(|w| *w == 0.0));
    }

    #[test]
    fn basin_run_converges_inside_window() {
        let s = dirac_basin_run(0.01, -0.155, 5.0, 60, 10_000).unwrap();
        assert!(s.windows(2).take(5).all(|w| w[1] < w[0]));
        assert!(s[60] < 1e-6);
    }

    #[test]
    fn basin_run_escapes_outside_window() {
        let s = dirac_basin_run(0.01, -0.05, 5.0, 60, 10_000).unwrap();
        assert!(s[60] > 0.1, "{}", s[60]);
    }

    #[test]
    fn slope_of_exact_power_law() {
        let x: Vec<f64> = [1.0f64, 2.0, 3.0].iter().map(|v| v.ln()).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v).collect();
        assert!((fit_slope(&x, &y) + 0.5).abs() < 1e-14);
    }
}
