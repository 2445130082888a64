use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Result, StoError};
use crate::torus::GridFn;

const TAU: f64 = 2.0 * PI;

/// Coupling kernel `H(x, y)`. Built-ins only; selected by name.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CouplingSpec {
    /// `H(x, y) = sin(2πx) cos(2πy)`
    #[serde(rename = "sincos")]
    SinCos,
    /// `H(x, y) = sin(2π(y − x))`, the Kuramoto-type coupling.
    #[serde(rename = "sine-diff")]
    SineDiff,
}

impl CouplingSpec {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "sincos" => Ok(CouplingSpec::SinCos),
            "sine-diff" => Ok(CouplingSpec::SineDiff),
            other => Err(StoError::Domain(format!("unknown coupling '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CouplingSpec::SinCos => "sincos",
            CouplingSpec::SineDiff => "sine-diff",
        }
    }

    /// Whether `∫H(x, y)dy = 0` for every `x`.
    pub fn zero_mean(&self) -> bool {
        true
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.d1(0, x, y)
    }

    /// `∂₁ⁱH(x, y)` for `i ∈ 0..=3`.
    pub fn d1(&self, i: u32, x: f64, y: f64) -> f64 {
        // d^i/dx^i sin(2πx + c) = (2π)^i sin(2πx + c + iπ/2)
        let w = TAU.powi(i as i32);
        let shift = i as f64 * PI / 2.0;
        match self {
            CouplingSpec::SinCos => w * (TAU * x + shift).sin() * (TAU * y).cos(),
            CouplingSpec::SineDiff => {
                // sin(2π(y − x)) = −sin(2πx − 2πy)
                -w * (TAU * (x - y) + shift).sin()
            }
        }
    }

    /// `sup |∂₁ⁱH|` by sampling on a `n × n` grid.
    pub fn sup_d1(&self, i: u32, n: usize) -> f64 {
        let mut m = 0.0f64;
        for a in 0..n {
            let x = a as f64 / n as f64;
            for b in 0..n {
                m = m.max(self.d1(i, x, b as f64 / n as f64).abs());
            }
        }
        m
    }
}

/// Node values `∂₁ⁱH(x_j, y_l)`, `i = 0..=3`, on one grid.
#[derive(Clone, Debug)]
pub struct CouplingTable {
    spec: CouplingSpec,
    grid_size: usize,
    /// `tables[i][j * G + l]`
    tables: [Vec<f64>; 4],
}

impl CouplingTable {
    pub fn new(spec: CouplingSpec, grid_size: usize) -> Result<Self> {
        let shape = GridFn::constant(grid_size, 0.0)?;
        let g = grid_size;
        let h = shape.spacing();
        let build = |i: u32| {
            let mut t = Vec::with_capacity(g * g);
            for j in 0..g {
                for l in 0..g {
                    t.push(spec.d1(i, j as f64 * h, l as f64 * h));
                }
            }
            t
        };
        Ok(CouplingTable {
            spec,
            grid_size,
            tables: [build(0), build(1), build(2), build(3)],
        })
    }

    pub fn spec(&self) -> CouplingSpec {
        self.spec
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    /// `x ↦ ∫∂₁ⁱH(x, y) w(y) dy` on the grid, by the trapezoid rule in `y`.
    pub fn integrate(&self, i: usize, w: &GridFn) -> GridFn {
        let g = self.grid_size;
        assert_eq!(w.grid_size(), g, "grid size mismatch");
        let t = &self.tables[i];
        let wv = w.values();
        let out = (0..g)
            .map(|j| {
                let row = &t[j * g..(j + 1) * g];
                row.iter().zip(wv).map(|(a, b)| a * b).sum::<f64>() / g as f64
            })
            .collect();
        GridFn::from_raw(out)
    }
}
