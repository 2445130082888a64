use std::f64::consts::PI;

use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::operators::{CouplingSpec, MapSpec, NoiseKernel};
use crate::rng::substream;
use crate::torus::{wrap, ParticleEnsemble};

/// Below this size the step runs on one thread.
const PAR_THRESHOLD: usize = 4096;
const CHUNK: usize = 1024;
/// 32-bit words consumed per particle per step (two `u64`).
const WORDS_PER_PARTICLE: u128 = 4;

/// Mean-field displacement `(1/N) Σ_j H(x, x_j)` for the built-in couplings,
/// reduced to trigonometric moments so that one step costs `O(N)`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct MeanField {
    coupling: CouplingSpec,
    mean_cos: f64,
    mean_sin: f64,
}

impl MeanField {
    pub(crate) fn new(coupling: CouplingSpec, points: &[f64]) -> Self {
        let n = points.len() as f64;
        let moments = |block: &[f64]| {
            block.iter().fold((0.0, 0.0), |acc, x| {
                let (s, c) = (2.0 * PI * x).sin_cos();
                (acc.0 + c, acc.1 + s)
            })
        };
        // fixed chunking keeps the summation order independent of the thread count
        let (c, s) = if points.len() >= PAR_THRESHOLD {
            let partial: Vec<(f64, f64)> = points.par_chunks(CHUNK).map(moments).collect();
            partial.iter().fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1))
        } else {
            points.chunks(CHUNK).map(moments).fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1))
        };
        MeanField { coupling, mean_cos: c / n, mean_sin: s / n }
    }

    pub(crate) fn mean_cos(&self) -> f64 {
        self.mean_cos
    }

    pub(crate) fn at(&self, x: f64) -> f64 {
        let (s, c) = (2.0 * PI * x).sin_cos();
        match self.coupling {
            CouplingSpec::SinCos => s * self.mean_cos,
            CouplingSpec::SineDiff => c * self.mean_sin - s * self.mean_cos,
        }
    }
}

/// `F_i(x) = f(x_i + δ(1/N)Σ_j H(x_i, x_j))` for every coordinate.
pub(crate) fn coupled_images(points: &[f64], map: MapSpec, coupling: CouplingSpec, delta: f64) -> Vec<f64> {
    let field = MeanField::new(coupling, points);
    let image = |x: &f64| map.eval(x + delta * field.at(*x));
    if points.len() >= PAR_THRESHOLD {
        points.par_iter().map(image).collect()
    } else {
        points.iter().map(image).collect()
    }
}

pub(crate) fn linear_images(points: &[f64], k: f64, delta: f64) -> Vec<f64> {
    let m = MeanField::new(CouplingSpec::SinCos, points).mean_cos();
    let image = |x: &f64| wrap(k * (x + delta * (2.0 * PI * x).sin() * m));
    if points.len() >= PAR_THRESHOLD {
        points.par_iter().map(image).collect()
    } else {
        points.iter().map(image).collect()
    }
}

/// One synchronous step `x_i ← k(x_i + δ sin(2πx_i)·(1/N)Σ_j cos(2πx_j)) mod 1`.
pub fn det_step(x: &ParticleEnsemble, k: f64, delta: f64) -> ParticleEnsemble {
    ParticleEnsemble::from_wrapped(linear_images(x.points(), k, delta))
}

/// Same update for any built-in map and coupling.
pub fn det_step_with(x: &ParticleEnsemble, map: MapSpec, coupling: CouplingSpec, delta: f64) -> ParticleEnsemble {
    ParticleEnsemble::from_wrapped(coupled_images(x.points(), map, coupling, delta))
}

/// Position of the random draws of one chain.
///
/// Step `t` of particle `i` reads words `4(tN + i)..4(tN + i) + 4` of ChaCha8
/// stream `stream` under `seed`, so a trajectory does not depend on how the
/// particles are split across threads.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseStream {
    pub seed: u64,
    pub stream: u64,
}

impl NoiseStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        NoiseStream { seed, stream }
    }

    /// Generator positioned at particle `i` of step `t` in a chain of `n`.
    pub(crate) fn at(&self, t: u64, n: usize, i: usize) -> ChaCha8Rng {
        let mut rng = substream(self.seed, self.stream);
        rng.set_word_pos((t as u128 * n as u128 + i as u128) * WORDS_PER_PARTICLE);
        rng
    }

    /// `n` uniform points from the step-0 block.
    pub(crate) fn uniform_points(&self, n: usize) -> Vec<f64> {
        let mut rng = self.at(0, n, 0);
        (0..n)
            .map(|_| {
                let v: f64 = rng.random();
                rng.next_u64();
                v
            })
            .collect()
    }
}

/// Perturb the images `F_i(x)` by the kernel noise of step `t`.
pub(crate) fn add_noise(images: Vec<f64>, kern: &NoiseKernel, noise: NoiseStream, t: u64) -> Vec<f64> {
    let n = images.len();
    let chunk = |(c, block): (usize, &[f64])| -> Vec<f64> {
        let mut rng = noise.at(t, n, c * CHUNK);
        block.iter().map(|&y| kern.sample(y, &mut rng)).collect::<Vec<f64>>()
    };
    if n >= PAR_THRESHOLD {
        images.par_chunks(CHUNK).enumerate().flat_map_iter(chunk).collect()
    } else {
        images.chunks(CHUNK).enumerate().flat_map(chunk).collect()
    }
}

/// `x_i(t + 1) = F_i(x(t)) + η_i`, `η_i ~ ξ(F_i(x(t)), ·) − F_i(x(t))`, using
/// the draws of step `t` of `noise`.
pub fn noisy_step(
    x: &ParticleEnsemble,
    k: f64,
    delta: f64,
    kern: &NoiseKernel,
    noise: NoiseStream,
    t: u64,
) -> ParticleEnsemble {
    let images = linear_images(x.points(), k, delta);
    ParticleEnsemble::from_wrapped(add_noise(images, kern, noise, t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::NoiseParams;
    use crate::torus::{centered, torus_dist};

    fn kernel(trap: f64, gamma: f64) -> NoiseKernel {
        let p = NoiseParams { trap, gamma, bump: Default::default(), cutoff: Default::default() };
        NoiseKernel::new(p, 256).unwrap()
    }

    #[test]
    fn origin_is_fixed() {
        let zero = ParticleEnsemble::new(vec![0.0; 7]).unwrap();
        for delta in [-0.3, -0.155, 0.0, 0.2] {
            assert_eq!(det_step(&zero, 5.0, delta), zero);
        }
    }

    #[test]
    fn uncoupled_step_is_the_map() {
        let x = ParticleEnsemble::new(vec![0.01, 0.37, 0.5, 0.93]).unwrap();
        let y = det_step(&x, 5.0, 0.0);
        for (a, b) in x.points().iter().zip(y.points()) {
            assert!(torus_dist(*b, 5.0 * a) < 1e-15);
        }
    }

    /// Scalar reference: the mean field of one particle is its own cosine.
    #[test]
    fn single_particle_matches_scalar_formula() {
        let x0: f64 = 0.1;
        let (k, delta) = (5.0, -0.155);
        let expect = (k * (x0 - 0.155 * (0.2 * PI).sin() * (0.2 * PI).cos())).rem_euclid(1.0);
        let got = det_step(&ParticleEnsemble::new(vec![x0]).unwrap(), k, delta).points()[0];
        assert!((got - expect).abs() < 1e-15);
        let via_spec = det_step_with(
            &ParticleEnsemble::new(vec![x0]).unwrap(),
            MapSpec::linear(5).unwrap(),
            CouplingSpec::SinCos,
            delta,
        );
        assert!((via_spec.points()[0] - expect).abs() < 1e-15);
    }

    #[test]
    fn sine_diff_mean_field_matches_direct_sum() {
        let pts: Vec<f64> = (0..50).map(|i| (i as f64 * 0.6180339887).fract()).collect();
        let f = MeanField::new(CouplingSpec::SineDiff, &pts);
        for x in [0.0, 0.2, 0.77] {
            let direct: f64 =
                pts.iter().map(|y| CouplingSpec::SineDiff.eval(x, *y)).sum::<f64>() / pts.len() as f64;
            assert!((f.at(x) - direct).abs() < 1e-14);
        }
    }

    #[test]
    fn noise_inside_inner_region_is_bump_only() {
        let trap = 0.05;
        let kern = kernel(trap, 0.0);
        let pts: Vec<f64> = (0..200).map(|i| (i as f64 / 199.0 - 0.5) * 4.0 * trap / 45.0).collect();
        let x = ParticleEnsemble::new(pts).unwrap();
        let images = linear_images(x.points(), 5.0, -0.155);
        let y = noisy_step(&x, 5.0, -0.155, &kern, NoiseStream::new(1, 0), 1);
        for (f, z) in images.iter().zip(y.points()) {
            assert!(centered(*f).abs() <= 2.0 * trap / 3.0);
            assert!(torus_dist(*f, *z) <= trap / 3.0 + 1e-12);
        }
    }

    #[test]
    fn trap_is_forward_invariant() {
        let (k, delta) = (5.0, -0.155);
        let trap = crate::solver::delta_max_trap(delta, k, 0.95).unwrap();
        let kern = kernel(trap, 0.05);
        let noise = NoiseStream::new(7, 3);
        let mut x = ParticleEnsemble::new(noise.uniform_points(500).iter().map(|u| (u - 0.5) * 2.0 * trap).collect())
            .unwrap();
        for t in 1..200 {
            x = noisy_step(&x, k, delta, &kern, noise, t);
            assert!(x.points().iter().all(|p| centered(*p).abs() <= trap));
        }
    }

    #[test]
    fn draws_do_not_depend_on_thread_split() {
        let kern = kernel(0.05, 0.05);
        let noise = NoiseStream::new(11, 2);
        let n = 3 * PAR_THRESHOLD + 17;
        let x = ParticleEnsemble::new(noise.uniform_points(n)).unwrap();
        let parallel = noisy_step(&x, 5.0, -0.155, &kern, noise, 4);
        let images = linear_images(x.points(), 5.0, -0.155);
        let serial: Vec<f64> = images
            .iter()
            .enumerate()
            .map(|(i, y)| kern.sample(*y, &mut noise.at(4, n, i)))
            .collect();
        assert_eq!(parallel.points(), &serial[..]);
        assert_eq!(noisy_step(&x, 5.0, -0.155, &kern, noise, 4), parallel);
        assert_ne!(noisy_step(&x, 5.0, -0.155, &kern, noise, 5), parallel);
    }

    #[test]
    fn contraction_at_origin_inside_trap() {
        let (k, delta) = (5.0, -0.17);
        let trap = crate::solver::delta_max_trap(delta, k, 0.95).unwrap();
        let n = 5000;
        for rep in 0..20u64 {
            let pts: Vec<f64> = NoiseStream::new(5, rep)
                .uniform_points(n)
                .iter()
                .map(|u| (u - 0.5) * 2.0 * trap)
                .collect();
            let images = linear_images(&pts, k, delta);
            for (x, f) in pts.iter().zip(&images) {
                assert!(torus_dist(*f, 0.0) <= 2.0 / 3.0 * torus_dist(*x, 0.0) + 1e-12);
            }
        }
    }
}
