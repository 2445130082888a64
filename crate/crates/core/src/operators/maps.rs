use serde::{Deserialize, Serialize};

use crate::error::{Result, StoError};
use crate::torus::{wrap, GridFn, Interpolant, Interpolation};

/// Uncoupled expanding circle map. Built-ins only; selected by name.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum MapSpec {
    /// `f(x) = kx mod 1`
    #[serde(rename = "linear-k")]
    Linear { k: u32 },
}

/// An inverse branch evaluated at a point: `f_i⁻¹(x)` and its first three derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BranchValue {
    pub y: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
}

impl MapSpec {
    pub fn linear(k: u32) -> Result<Self> {
        if k < 2 {
            return Err(StoError::Domain(format!("linear map needs k >= 2, got {k}")));
        }
        Ok(MapSpec::Linear { k })
    }

    /// Registry lookup; `param` is the map's integer parameter.
    pub fn from_name(name: &str, param: u32) -> Result<Self> {
        match name {
            "linear-k" => MapSpec::linear(param),
            other => Err(StoError::Domain(format!("unknown map '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MapSpec::Linear { .. } => "linear-k",
        }
    }

    pub fn degree(&self) -> usize {
        match *self {
            MapSpec::Linear { k } => k as usize,
        }
    }

    /// Minimal expansion `σ = min |f′|`.
    pub fn expansion(&self) -> f64 {
        match *self {
            MapSpec::Linear { k } => k as f64,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            MapSpec::Linear { k } => wrap(k as f64 * x),
        }
    }

    /// `f^{(order)}(x)` for `order ∈ 1..=3`.
    pub fn derivative(&self, _x: f64, order: u32) -> f64 {
        match *self {
            MapSpec::Linear { k } => {
                if order == 1 {
                    k as f64
                } else {
                    0.0
                }
            }
        }
    }

    pub fn inverse_branch(&self, i: usize, x: f64) -> BranchValue {
        match *self {
            MapSpec::Linear { k } => {
                let k = k as f64;
                BranchValue {
                    y: (wrap(x) + i as f64) / k,
                    d1: 1.0 / k,
                    d2: 0.0,
                    d3: 0.0,
                }
            }
        }
    }

    /// Transfer operator `Pψ(x) = Σ_i ψ(f_i⁻¹x)(f_i⁻¹)′(x)` on the grid.
    ///
    /// Linear in `ψ`; off-grid values of `ψ` come from the chosen interpolant.
    pub fn apply_p(&self, psi: &GridFn, interp: Interpolation) -> GridFn {
        let ip = Interpolant::new(psi, interp);
        let d = self.degree();
        GridFn::from_fn(psi.grid_size(), |x| {
            (0..d)
                .map(|i| {
                    let b = self.inverse_branch(i, x);
                    ip.eval(b.y) * b.d1.abs()
                })
                .sum()
        })
        .expect("grid size already validated")
    }
}
