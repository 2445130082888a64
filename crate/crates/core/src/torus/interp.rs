use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::grid::{fft_forward, fft_inverse_real, GridFn};
use super::wrap;

/// How off-grid values of a grid function are reconstructed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Interpolation {
    /// Band-limited trigonometric interpolant; exact for trigonometric
    /// polynomials of degree below `G/2`.
    #[default]
    Trigonometric,
    /// Periodic cubic spline (C², fourth order).
    CubicSpline,
}

/// Off-grid evaluator built from the node values of a [`GridFn`].
#[derive(Clone, Debug)]
pub enum Interpolant {
    Trig {
        /// Coefficients `c_k`, `k = 0..=kmax`, of `f = Σ c_k e^{2πikx} + c.c.`
        coeffs: Vec<Complex64>,
        /// Real Nyquist coefficient, multiplies `cos(πGx)`.
        nyquist: f64,
        grid_size: usize,
    },
    Spline {
        values: Vec<f64>,
        moments: Vec<f64>,
    },
}

impl Interpolant {
    pub fn new(f: &GridFn, method: Interpolation) -> Self {
        match method {
            Interpolation::Trigonometric => Self::trig(f),
            Interpolation::CubicSpline => Self::spline(f),
        }
    }

    fn trig(f: &GridFn) -> Self {
        let g = f.grid_size();
        let spec = fft_forward(f.values());
        let scale = 1.0 / g as f64;
        let mut coeffs: Vec<Complex64> = spec[..g / 2].iter().map(|c| c * scale).collect();
        let nyquist = spec[g / 2].re * scale;
        // drop the negligible tail so smooth data evaluates in a few terms
        let cmax = coeffs.iter().map(|c| c.norm()).fold(nyquist.abs(), f64::max);
        let cutoff = 1e-17 * cmax;
        let keep = coeffs
            .iter()
            .rposition(|c| c.norm() > cutoff)
            .map_or(1, |k| k + 1);
        coeffs.truncate(keep);
        let nyquist = if nyquist.abs() > cutoff { nyquist } else { 0.0 };
        Interpolant::Trig {
            coeffs,
            nyquist,
            grid_size: g,
        }
    }

    fn spline(f: &GridFn) -> Self {
        let g = f.grid_size();
        let h = f.spacing();
        let y = f.values();
        // M_{i-1} + 4 M_i + M_{i+1} = 6 (y_{i+1} - 2 y_i + y_{i-1}) / h²; circulant, so solve in Fourier space
        let rhs: Vec<f64> = (0..g)
            .map(|i| {
                6.0 * (y[(i + 1) % g] - 2.0 * y[i] + y[(i + g - 1) % g]) / (h * h)
            })
            .collect();
        let mut spec = fft_forward(&rhs);
        for (k, c) in spec.iter_mut().enumerate() {
            *c /= 4.0 + 2.0 * (2.0 * PI * k as f64 / g as f64).cos();
        }
        Interpolant::Spline {
            values: y.to_vec(),
            moments: fft_inverse_real(spec),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.eval_with_derivative(x).0
    }

    /// Value and first derivative at `x`.
    pub fn eval_with_derivative(&self, x: f64) -> (f64, f64) {
        let x = wrap(x);
        match self {
            Interpolant::Trig {
                coeffs,
                nyquist,
                grid_size,
            } => {
                let theta = 2.0 * PI * x;
                let z = Complex64::new(theta.cos(), theta.sin());
                let mut w = Complex64::new(1.0, 0.0);
                let mut val = coeffs[0].re;
                let mut der = 0.0;
                for (k, c) in coeffs.iter().enumerate().skip(1) {
                    w *= z;
                    let t = c * w;
                    val += 2.0 * t.re;
                    // d/dx Re(c e^{2πikx}) = -2πk Im(c e^{2πikx})
                    der -= 4.0 * PI * k as f64 * t.im;
                }
                if *nyquist != 0.0 {
                    let arg = PI * *grid_size as f64 * x;
                    val += nyquist * arg.cos();
                    der -= nyquist * PI * *grid_size as f64 * arg.sin();
                }
                (val, der)
            }
            Interpolant::Spline { values, moments } => {
                let g = values.len();
                let h = 1.0 / g as f64;
                let s = x * g as f64;
                let i = (s.floor() as usize).min(g - 1);
                let j = (i + 1) % g;
                let t = x - i as f64 * h;
                let u = h - t;
                let (yi, yj, mi, mj) = (values[i], values[j], moments[i], moments[j]);
                let val = mi * u.powi(3) / (6.0 * h)
                    + mj * t.powi(3) / (6.0 * h)
                    + (yi - mi * h * h / 6.0) * u / h
                    + (yj - mj * h * h / 6.0) * t / h;
                let der = -mi * u * u / (2.0 * h) + mj * t * t / (2.0 * h) + (yj - yi) / h
                    - (mj - mi) * h / 6.0;
                (val, der)
            }
        }
    }
}
