//! Exact 1-Wasserstein distance on the circle.
//!
//! For measures `μ, ν` on 𝕋 with distribution functions `F, G` on `[0, 1)`,
//! `W₁(μ, ν) = min_α ∫₀¹ |F(t) − G(t) − α| dt`, the minimum attained at a
//! median of `F − G` under Lebesgue measure. Particle measures have piecewise
//! constant CDFs; grid densities are read as piecewise-constant cells
//! centred on the nodes, so their CDFs are piecewise linear. The difference
//! `F − G` is therefore linear between merged breakpoints and everything is
//! integrated in closed form.

use super::{GridDensity, ParticleEnsemble};
use crate::error::{Result, StoError};

#[derive(Clone, Copy, Debug)]
pub enum CircleMeasure<'a> {
    Particles(&'a ParticleEnsemble),
    Density(&'a GridDensity),
}

impl<'a> From<&'a ParticleEnsemble> for CircleMeasure<'a> {
    fn from(e: &'a ParticleEnsemble) -> Self {
        CircleMeasure::Particles(e)
    }
}

impl<'a> From<&'a GridDensity> for CircleMeasure<'a> {
    fn from(d: &'a GridDensity) -> Self {
        CircleMeasure::Density(d)
    }
}

enum Cdf {
    Atoms {
        sorted: Vec<f64>,
    },
    Cells {
        /// `cum[j] = Σ_{i<j} w_i`
        cum: Vec<f64>,
        weights: Vec<f64>,
    },
}

impl Cdf {
    fn build(m: CircleMeasure<'_>) -> Result<Cdf> {
        match m {
            CircleMeasure::Particles(e) => {
                if e.is_empty() {
                    return Err(StoError::Domain("empty particle ensemble".into()));
                }
                Ok(Cdf::Atoms {
                    sorted: e.sorted_points(),
                })
            }
            CircleMeasure::Density(d) => {
                let total: f64 = d.values().iter().sum();
                let weights: Vec<f64> = d.values().iter().map(|v| v / total).collect();
                let mut cum = Vec::with_capacity(weights.len() + 1);
                let mut acc = 0.0;
                cum.push(0.0);
                for w in &weights {
                    acc += w;
                    cum.push(acc);
                }
                Ok(Cdf::Cells { cum, weights })
            }
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        match self {
            Cdf::Atoms { sorted } => sorted.clone(),
            Cdf::Cells { weights, .. } => {
                let g = weights.len() as f64;
                (0..weights.len()).map(|j| (j as f64 + 0.5) / g).collect()
            }
        }
    }

    /// `(F(t⁻), F(t))` with `F(t) = μ([0, t])`.
    fn limits(&self, t: f64) -> (f64, f64) {
        match self {
            Cdf::Atoms { sorted } => {
                let n = sorted.len() as f64;
                let lt = sorted.partition_point(|&x| x < t) as f64 / n;
                let le = sorted.partition_point(|&x| x <= t) as f64 / n;
                (lt, le)
            }
            Cdf::Cells { cum, weights } => {
                let g = weights.len();
                let h = 1.0 / g as f64;
                // cell j covers [x_j - h/2, x_j + h/2); shift so cells start at multiples of h
                let mass_below = |s: f64| -> f64 {
                    if s < 1.0 {
                        let idx = ((s / h).floor() as usize).min(g - 1);
                        cum[idx] + weights[idx] * (s - idx as f64 * h) / h
                    } else {
                        1.0 + weights[0] * (s - 1.0) / h
                    }
                };
                let v = mass_below(t + 0.5 * h) - 0.5 * weights[0];
                (v, v)
            }
        }
    }
}

struct Segment {
    len: f64,
    d0: f64,
    d1: f64,
}

impl Segment {
    /// Lebesgue measure of `{D < α}` on this segment.
    fn measure_below(&self, alpha: f64) -> f64 {
        if self.d0 == self.d1 {
            return if self.d0 < alpha { self.len } else { 0.0 };
        }
        let tau = ((alpha - self.d0) / (self.d1 - self.d0)).clamp(0.0, 1.0);
        if self.d1 > self.d0 {
            tau * self.len
        } else {
            (1.0 - tau) * self.len
        }
    }

    /// `∫ |D − α|` over the segment.
    fn abs_integral(&self, alpha: f64) -> f64 {
        let a = self.d0 - alpha;
        let b = self.d1 - alpha;
        if a * b >= 0.0 {
            0.5 * self.len * (a + b).abs()
        } else {
            0.5 * self.len * (a * a + b * b) / (b - a).abs()
        }
    }
}

/// Circular W₁ between two measures; grid densities are normalized first.
pub fn wasserstein1_circle<'a, 'b>(
    mu: impl Into<CircleMeasure<'a>>,
    nu: impl Into<CircleMeasure<'b>>,
) -> Result<f64> {
    let f = Cdf::build(mu.into())?;
    let g = Cdf::build(nu.into())?;

    let mut knots = f.breakpoints();
    knots.extend(g.breakpoints());
    knots.push(0.0);
    knots.push(1.0);
    knots.sort_by(f64::total_cmp);
    knots.dedup();

    let segments: Vec<Segment> = knots
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| {
            let (_, f0) = f.limits(w[0]);
            let (_, g0) = g.limits(w[0]);
            let (f1, _) = f.limits(w[1]);
            let (g1, _) = g.limits(w[1]);
            Segment {
                len: w[1] - w[0],
                d0: f0 - g0,
                d1: f1 - g1,
            }
        })
        .collect();

    let (mut lo, mut hi) = segments.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |acc, s| {
        (acc.0.min(s.d0.min(s.d1)), acc.1.max(s.d0.max(s.d1)))
    });
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let below: f64 = segments.iter().map(|s| s.measure_below(mid)).sum();
        if below < 0.5 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let alpha = 0.5 * (lo + hi);
    Ok(segments.iter().map(|s| s.abs_integral(alpha)).sum())
}
