use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::cones::{cone_report, hilbert_metric, ConeParams, HILBERT_MIN_SLACK};
use crate::error::{Result, StoError};
use crate::operators::{NoiseKernel, StoModel};
use crate::torus::GridDensity;

/// Operator iterated by [`fixed_point_iterate`].
#[derive(Clone, Copy, Debug)]
pub enum FixedPointOp<'a> {
    Sto(&'a StoModel),
    NoisySto(&'a StoModel, &'a NoiseKernel),
}

impl FixedPointOp<'_> {
    pub fn apply(&self, phi: &GridDensity) -> Result<GridDensity> {
        match self {
            FixedPointOp::Sto(m) => m.apply_sto(phi),
            FixedPointOp::NoisySto(m, k) => m.apply_noisy_sto(phi, k),
        }
    }

    pub fn model(&self) -> &StoModel {
        match self {
            FixedPointOp::Sto(m) | FixedPointOp::NoisySto(m, _) => m,
        }
    }
}

/// Steps allowed to bring a start outside the interior of `V_a` inside it.
pub const MAX_ENTRY_STEPS: usize = 20;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IterationTrace {
    /// `φ_0, φ_1, …`, each of unit mass; `φ_0` is the first interior iterate.
    pub iterates: Vec<GridDensity>,
    /// `d_{V_a}(φ_{n+1}, φ_n)`
    pub hilbert_steps: Vec<f64>,
    /// `hilbert_steps[n + 1] / hilbert_steps[n]`, skipping zero denominators.
    pub contraction_ratios: Vec<f64>,
    /// `‖φ_{n+1} − φ_n‖∞`
    pub sup_residuals: Vec<f64>,
    pub converged: bool,
    /// Operator applications after entering the cone.
    pub n_iters: usize,
    /// Applications spent entering the interior of `V_a`.
    pub entry_steps: usize,
    /// Median of the last ten contraction ratios.
    pub ratio_estimate: Option<f64>,
    pub a: f64,
    pub tol: f64,
}

impl IterationTrace {
    pub fn last(&self) -> &GridDensity {
        self.iterates.last().expect("trace holds at least the start")
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Columns `iteration, hilbert_step, sup_residual`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["iteration", "hilbert_step", "sup_residual"])?;
        for (n, (d, r)) in self.hilbert_steps.iter().zip(&self.sup_residuals).enumerate() {
            wtr.serialize((n + 1, d, r))?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn is_interior(phi: &GridDensity, a: f64) -> Result<bool> {
    let r = cone_report(phi, ConeParams::new(a, f64::MAX)?)?;
    Ok(r.slack / a >= HILBERT_MIN_SLACK)
}

fn median(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_by(|x, y| x.total_cmp(y));
    let n = s.len();
    Some(if n % 2 == 1 { s[n / 2] } else { 0.5 * (s[n / 2 - 1] + s[n / 2]) })
}

/// Iterate `op` projectively until the Hilbert step in `V_a` drops below `tol`.
///
/// A start outside the interior of `V_a` is first pushed by up to
/// [`MAX_ENTRY_STEPS`] applications; an iterate leaving the interior after
/// that is reported as a cone escape.
pub fn fixed_point_iterate(
    op: FixedPointOp<'_>,
    phi0: &GridDensity,
    a: f64,
    tol: f64,
    max_iters: usize,
) -> Result<IterationTrace> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(StoError::Domain(format!("cone parameter a must be positive, got {a}")));
    }
    if !(tol > 0.0) {
        return Err(StoError::Domain(format!("tolerance must be positive, got {tol}")));
    }
    let escape = |phi: &GridDensity, iteration: usize| -> Result<StoError> {
        let report = cone_report(phi, ConeParams::new(a, f64::MAX)?)?;
        Ok(StoError::ConeEscape { iteration, a, report: Box::new(report) })
    };

    let mut phi = phi0.normalized();
    let mut entry_steps = 0;
    while !is_interior(&phi, a)? {
        if entry_steps == MAX_ENTRY_STEPS {
            return Err(escape(&phi, 0)?);
        }
        phi = op.apply(&phi)?.normalized();
        entry_steps += 1;
    }

    let mut iterates = vec![phi.clone()];
    let (mut hilbert_steps, mut sup_residuals) = (Vec::new(), Vec::new());
    let mut converged = false;
    for n in 1..=max_iters {
        let next = op.apply(&phi)?.normalized();
        if !is_interior(&next, a)? {
            return Err(escape(&next, n)?);
        }
        let d = hilbert_metric(&next, &phi, a)?;
        sup_residuals.push(next.as_fn().dist_sup(phi.as_fn()));
        hilbert_steps.push(d);
        iterates.push(next.clone());
        phi = next;
        if d < tol {
            converged = true;
            break;
        }
    }
    let contraction_ratios: Vec<f64> = hilbert_steps
        .windows(2)
        .filter(|w| w[0] > 0.0)
        .map(|w| w[1] / w[0])
        .collect();
    let tail = &contraction_ratios[contraction_ratios.len().saturating_sub(10)..];
    Ok(IterationTrace {
        n_iters: hilbert_steps.len(),
        ratio_estimate: median(tail),
        iterates,
        hilbert_steps,
        contraction_ratios,
        sup_residuals,
        converged,
        entry_steps,
        a,
        tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{CouplingSpec, MapSpec};
    use std::f64::consts::PI;

    const G: usize = 256;

    fn model(delta: f64) -> StoModel {
        StoModel::new(MapSpec::linear(5).unwrap(), CouplingSpec::SinCos, delta, G).unwrap()
    }

    #[test]
    fn lebesgue_start_is_already_fixed() {
        let m = model(0.2);
        let one = GridDensity::uniform(G).unwrap();
        let t = fixed_point_iterate(FixedPointOp::Sto(&m), &one, 0.5, 1e-10, 50).unwrap();
        assert!(t.converged);
        assert_eq!(t.n_iters, 1);
        assert_eq!(t.entry_steps, 0);
        assert!(t.sup_residuals[0] < 1e-8);
    }

    #[test]
    fn converges_to_lebesgue_from_sine_start() {
        let m = model(0.2);
        let phi0 = GridDensity::from_fn(G, |x| 1.0 + 0.3 * (2.0 * PI * x).sin()).unwrap();
        let t = fixed_point_iterate(FixedPointOp::Sto(&m), &phi0, 3.0, 1e-12, 100).unwrap();
        assert!(t.converged);
        assert_eq!(t.entry_steps, 0);
        assert!(t.last().as_fn().map(|v| v - 1.0).sup_norm() < 1e-6);
    }

    #[test]
    fn geometric_decrease_from_cosine_start() {
        let m = model(0.2);
        let phi0 = GridDensity::from_fn(G, |x| 1.0 + 0.3 * (2.0 * PI * x).cos()).unwrap();
        let t = fixed_point_iterate(FixedPointOp::Sto(&m), &phi0, 0.5, 1e-12, 100).unwrap();
        assert!(t.converged);
        assert!(t.ratio_estimate.unwrap() <= 0.9, "{:?}", t.contraction_ratios);
        let last = t.last();
        let resid = m.apply_sto(last).unwrap().as_fn().dist_sup(last.as_fn());
        assert!(resid <= 10.0 * t.tol * last.as_fn().sup_norm() + 1e-12, "{resid:e}");
        assert!(last.as_fn().map(|v| v - 1.0).sup_norm() < 1e-6);
    }

    #[test]
    fn uncoupled_band_limited_start_is_one_step() {
        let m = model(0.0);
        let phi0 = GridDensity::from_fn(G, |x| {
            1.0 + 0.02 * (2.0 * PI * x).cos() + 0.01 * (8.0 * PI * x).sin()
        })
        .unwrap();
        let t = fixed_point_iterate(FixedPointOp::Sto(&m), &phi0, 0.5, 1e-10, 10).unwrap();
        assert!(t.converged);
        assert!(t.iterates[1].as_fn().map(|v| v - 1.0).sup_norm() < 1e-12);
        assert_eq!(t.n_iters, 2);
    }

    #[test]
    fn lengths_are_consistent_and_trace_serializes() {
        let m = model(0.1);
        let phi0 = GridDensity::from_fn(G, |x| 1.0 + 0.05 * (2.0 * PI * x).cos()).unwrap();
        let t = fixed_point_iterate(FixedPointOp::Sto(&m), &phi0, 0.5, 1e-9, 30).unwrap();
        assert_eq!(t.iterates.len(), t.n_iters + 1);
        assert_eq!(t.hilbert_steps.len(), t.sup_residuals.len());
        assert!(t.contraction_ratios.len() < t.hilbert_steps.len());
        assert!(*t.hilbert_steps.last().unwrap() <= t.tol);
        let back: IterationTrace = serde_json::from_str(&t.to_json().unwrap()).unwrap();
        assert_eq!(back.hilbert_steps, t.hilbert_steps);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), t.n_iters + 1);
    }

    #[test]
    fn escape_is_reported() {
        use crate::operators::{NoiseKernel, NoiseParams};
        let m = model(-0.155);
        let params = NoiseParams { trap: 0.05, gamma: 0.02, bump: Default::default(), cutoff: Default::default() };
        let kernel = NoiseKernel::new(params, G).unwrap();
        let one = GridDensity::uniform(G).unwrap();
        let err = fixed_point_iterate(FixedPointOp::NoisySto(&m, &kernel), &one, 1.0, 1e-10, 10).unwrap_err();
        match err {
            StoError::ConeEscape { iteration, report, .. } => {
                assert_eq!(iteration, 1);
                assert!(!report.in_va);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
