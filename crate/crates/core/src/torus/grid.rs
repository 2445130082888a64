use std::cell::RefCell;
use std::f64::consts::PI;
use std::io::{Read, Write};
use std::ops::{Add, Mul, Sub};

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Result, StoError};

pub const MIN_GRID_SIZE: usize = 64;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Unnormalized forward DFT of real samples.
pub(crate) fn fft_forward(values: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(buf.len()).process(&mut buf));
    buf
}

/// Inverse DFT including the `1/G` factor; returns the real part.
pub(crate) fn fft_inverse_real(mut spectrum: Vec<Complex64>) -> Vec<f64> {
    let n = spectrum.len();
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n).process(&mut spectrum));
    spectrum.into_iter().map(|c| c.re / n as f64).collect()
}

/// Signed wavenumber of DFT bin `k` on a grid of size `g`.
#[inline]
pub(crate) fn wavenumber(k: usize, g: usize) -> f64 {
    if k <= g / 2 {
        k as f64
    } else {
        k as f64 - g as f64
    }
}

/// A real function sampled at the nodes `x_j = j / G` of the periodic grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridRecord", into = "GridRecord")]
pub struct GridFn {
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct GridRecord {
    grid_size: usize,
    values: Vec<f64>,
}

impl TryFrom<GridRecord> for GridFn {
    type Error = StoError;

    fn try_from(r: GridRecord) -> Result<Self> {
        if r.grid_size != r.values.len() {
            return Err(StoError::Domain(format!(
                "grid_size {} does not match {} values",
                r.grid_size,
                r.values.len()
            )));
        }
        GridFn::new(r.values)
    }
}

impl From<GridFn> for GridRecord {
    fn from(f: GridFn) -> Self {
        GridRecord {
            grid_size: f.values.len(),
            values: f.values,
        }
    }
}

fn check_grid_size(g: usize) -> Result<()> {
    if g < MIN_GRID_SIZE || !g.is_power_of_two() {
        return Err(StoError::Domain(format!(
            "grid size must be a power of two >= {MIN_GRID_SIZE}, got {g}"
        )));
    }
    Ok(())
}

impl GridFn {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_grid_size(values.len())?;
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(StoError::Domain(format!("non-finite grid value {v}")));
        }
        Ok(GridFn { values })
    }

    /// Sample `f` at the grid nodes.
    pub fn from_fn(grid_size: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        check_grid_size(grid_size)?;
        GridFn::new(
            (0..grid_size)
                .map(|j| f(j as f64 / grid_size as f64))
                .collect(),
        )
    }

    pub fn constant(grid_size: usize, c: f64) -> Result<Self> {
        GridFn::from_fn(grid_size, |_| c)
    }

    /// Trusted constructor for values produced by operators on a valid grid.
    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        debug_assert!(values.len().is_power_of_two() && values.len() >= MIN_GRID_SIZE);
        GridFn { values }
    }

    pub fn grid_size(&self) -> usize {
        self.values.len()
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.values.len() as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        j as f64 / self.values.len() as f64
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        let g = self.values.len() as f64;
        (0..self.values.len()).map(move |j| j as f64 / g)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridFn {
        GridFn::from_raw(self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_with(&self, other: &GridFn, f: impl Fn(f64, f64) -> f64) -> GridFn {
        assert_eq!(self.grid_size(), other.grid_size(), "grid size mismatch");
        GridFn::from_raw(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    pub fn scale(&self, c: f64) -> GridFn {
        self.map(|v| v * c)
    }

    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn dist_sup(&self, other: &GridFn) -> f64 {
        self.zip_with(other, |a, b| a - b).sup_norm()
    }

    /// Write `x_j,value` rows with a header.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["x", "value"])?;
        for (x, v) in self.nodes().zip(&self.values) {
            wtr.serialize((x, v))?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut values = Vec::new();
        for row in rdr.deserialize() {
            let (_x, v): (f64, f64) = row?;
            values.push(v);
        }
        GridFn::new(values)
    }
}

impl Add for &GridFn {
    type Output = GridFn;
    fn add(self, rhs: &GridFn) -> GridFn {
        self.zip_with(rhs, |a, b| a + b)
    }
}

impl Sub for &GridFn {
    type Output = GridFn;
    fn sub(self, rhs: &GridFn) -> GridFn {
        self.zip_with(rhs, |a, b| a - b)
    }
}

impl Mul for &GridFn {
    type Output = GridFn;
    fn mul(self, rhs: &GridFn) -> GridFn {
        self.zip_with(rhs, |a, b| a * b)
    }
}

/// Strictly positive grid function: the discrete stand-in for a density in C²(𝕋, ℝ⁺).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridFn", into = "GridFn")]
pub struct GridDensity(GridFn);

impl TryFrom<GridFn> for GridDensity {
    type Error = StoError;
    fn try_from(f: GridFn) -> Result<Self> {
        GridDensity::new(f)
    }
}

impl From<GridDensity> for GridFn {
    fn from(d: GridDensity) -> GridFn {
        d.0
    }
}

impl GridDensity {
    pub fn new(f: GridFn) -> Result<Self> {
        if let Some((j, v)) = f.values.iter().enumerate().find(|(_, &v)| v <= 0.0) {
            return Err(StoError::Domain(format!(
                "density must be strictly positive, value {v} at node {j}"
            )));
        }
        Ok(GridDensity(f))
    }

    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        GridDensity::new(GridFn::new(values)?)
    }

    pub fn from_fn(grid_size: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        GridDensity::new(GridFn::from_fn(grid_size, f)?)
    }

    /// The Lebesgue density `1`.
    pub fn uniform(grid_size: usize) -> Result<Self> {
        GridDensity::from_fn(grid_size, |_| 1.0)
    }

    pub fn as_fn(&self) -> &GridFn {
        &self.0
    }

    pub fn into_fn(self) -> GridFn {
        self.0
    }

    pub fn grid_size(&self) -> usize {
        self.0.grid_size()
    }

    pub fn values(&self) -> &[f64] {
        self.0.values()
    }

    pub fn integral(&self) -> f64 {
        self.0.integral()
    }

    /// Rescale to unit mass.
    pub fn normalized(&self) -> GridDensity {
        let m = self.integral();
        GridDensity(self.0.scale(1.0 / m))
    }

    pub fn scale(&self, c: f64) -> Result<GridDensity> {
        GridDensity::new(self.0.scale(c))
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        self.0.write_csv(w)
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        GridDensity::new(GridFn::read_csv(r)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Periodic trapezoid rule: the mean of the node values.
pub fn quad_integral(phi: &GridDensity) -> f64 {
    phi.integral()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DerivativeMethod {
    /// Multiply Fourier coefficients by `(2πik)^n`.
    #[default]
    Spectral,
    /// Fourth-order central differences with periodic wrap.
    #[serde(rename = "fd4")]
    FiniteDifference4,
}

/// Derivative of order 1, 2 or 3 by spectral differentiation.
pub fn periodic_derivative(f: &GridFn, order: u32) -> GridFn {
    periodic_derivative_with(f, order, DerivativeMethod::Spectral)
}

pub fn periodic_derivative_with(f: &GridFn, order: u32, method: DerivativeMethod) -> GridFn {
    assert!((1..=3).contains(&order), "derivative order must be 1, 2 or 3");
    match method {
        DerivativeMethod::Spectral => spectral_derivative(f, order),
        DerivativeMethod::FiniteDifference4 => fd4_derivative(f, order),
    }
}

fn spectral_derivative(f: &GridFn, order: u32) -> GridFn {
    let g = f.grid_size();
    let mut spec = fft_forward(f.values());
    for (k, c) in spec.iter_mut().enumerate() {
        if k == g / 2 && order % 2 == 1 {
            // the Nyquist mode has no odd derivative on the grid
            *c = Complex64::new(0.0, 0.0);
            continue;
        }
        let factor = Complex64::new(0.0, 2.0 * PI * wavenumber(k, g)).powu(order);
        *c *= factor;
    }
    GridFn::from_raw(fft_inverse_real(spec))
}

fn fd4_derivative(f: &GridFn, order: u32) -> GridFn {
    let g = f.grid_size();
    let h = f.spacing();
    let v = f.values();
    let at = |j: usize, off: isize| v[(j as isize + off).rem_euclid(g as isize) as usize];
    let out = (0..g)
        .map(|j| match order {
            1 => (-at(j, 2) + 8.0 * at(j, 1) - 8.0 * at(j, -1) + at(j, -2)) / (12.0 * h),
            2 => {
                (-at(j, 2) + 16.0 * at(j, 1) - 30.0 * at(j, 0) + 16.0 * at(j, -1) - at(j, -2))
                    / (12.0 * h * h)
            }
            _ => {
                (-at(j, 3) + 8.0 * at(j, 2) - 13.0 * at(j, 1) + 13.0 * at(j, -1)
                    - 8.0 * at(j, -2)
                    + at(j, -3))
                    / (8.0 * h * h * h)
            }
        })
        .collect();
    GridFn::from_raw(out)
}
