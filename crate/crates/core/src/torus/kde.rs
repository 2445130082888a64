use std::f64::consts::PI;

use super::{GridDensity, GridFn, ParticleEnsemble};
use crate::error::{Result, StoError};

/// Periodic Gaussian kernel-density estimate of an ensemble on a `G`-point grid.
///
/// The kernel is the wrapped normal with standard deviation `bandwidth`;
/// bandwidths below half a grid spacing are raised to `h/2` so the estimate
/// stays resolved. The result is normalized to unit quadrature integral and
/// floored at the smallest positive double.
pub fn density_from_particles(
    e: &ParticleEnsemble,
    grid_size: usize,
    bandwidth: f64,
) -> Result<GridDensity> {
    if e.is_empty() {
        return Err(StoError::Domain("particle ensemble is empty".into()));
    }
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(StoError::Domain(format!("bandwidth must be positive, got {bandwidth}")));
    }
    let shape = GridFn::constant(grid_size, 0.0)?;
    let h = shape.spacing();
    let sigma = bandwidth.max(0.5 * h);
    let images = (8.0 * sigma).ceil() as i64 + 1;
    let norm = 1.0 / (sigma * (2.0 * PI).sqrt() * e.len() as f64);
    let values: Vec<f64> = shape
        .nodes()
        .map(|x| {
            let mut acc = 0.0;
            for &p in e.points() {
                let d = x - p;
                for m in -images..=images {
                    let z = (d + m as f64) / sigma;
                    if z.abs() < 40.0 {
                        acc += (-0.5 * z * z).exp();
                    }
                }
            }
            acc * norm
        })
        .collect();
    let mean = values.iter().sum::<f64>() / grid_size as f64;
    GridDensity::from_values(
        values
            .into_iter()
            .map(|v| (v / mean).max(f64::MIN_POSITIVE))
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn point_mass_concentrates_at_origin() {
        let e = ParticleEnsemble::new(vec![0.0; 5]).unwrap();
        let d = density_from_particles(&e, 256, 0.01).unwrap();
        assert!((d.integral() - 1.0).abs() < 1e-10);
        let v = d.values();
        let peak = v.iter().cloned().fold(0.0, f64::max);
        assert_eq!(v[0], peak);
        assert!(v[128] < 1e-100);
        // mass within 0.05 of the origin
        let near: f64 = (0..256)
            .filter(|&j| crate::torus::torus_dist(j as f64 / 256.0, 0.0) < 0.05)
            .map(|j| v[j])
            .sum::<f64>()
            / 256.0;
        assert!(near > 0.999);
    }

    #[test]
    fn uniform_sample_is_nearly_flat() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
        let pts: Vec<f64> = (0..10_000).map(|_| rng.random()).collect();
        let e = ParticleEnsemble::new(pts).unwrap();
        let d = density_from_particles(&e, 256, 0.05).unwrap();
        let dev = d.values().iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
        assert!(dev < 0.2, "{dev}");
    }

    #[test]
    fn rejects_bad_bandwidth() {
        let e = ParticleEnsemble::equally_spaced(3).unwrap();
        assert!(density_from_particles(&e, 64, 0.0).is_err());
        assert!(density_from_particles(&e, 64, f64::NAN).is_err());
    }
}
