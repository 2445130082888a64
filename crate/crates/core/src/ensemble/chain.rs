use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dynamics::{add_noise, linear_images, NoiseStream};
use crate::error::{Result, StoError};
use crate::operators::{NoiseKernel, NoiseParams};
use crate::torus::{centered, torus_dist, wasserstein1_circle, GridDensity, ParticleEnsemble};

/// Grid on which the chain's noise kernel is tabulated.
pub const KERNEL_GRID: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialState {
    /// `N` independent uniform points drawn from the chain's stream.
    Uniform,
    /// `x_i = i/N`.
    EquallySpaced,
    Points(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    #[serde(rename = "N")]
    pub n: usize,
    pub k: f64,
    pub delta: f64,
    /// Kernel parameters; `None` runs the deterministic system.
    pub noise: Option<NoiseParams>,
    /// Half-width of the absorbing cube `[−Δ, Δ]^N`; defaults to the kernel's `Δ`.
    #[serde(default)]
    pub trap: Option<f64>,
    #[serde(rename = "T_max")]
    pub t_max: u64,
    pub seed: u64,
    #[serde(default)]
    pub stream: u64,
    pub record_every: u64,
    pub init: InitialState,
    #[serde(default)]
    pub stop_on_absorption: bool,
}

impl ChainConfig {
    /// Noisy chain from uniform initial data; trap and kernel share `Δ`.
    pub fn noisy(n: usize, k: f64, delta: f64, noise: NoiseParams, t_max: u64, seed: u64) -> Self {
        ChainConfig {
            n,
            k,
            delta,
            noise: Some(noise),
            trap: None,
            t_max,
            seed,
            stream: 0,
            record_every: 1,
            init: InitialState::Uniform,
            stop_on_absorption: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(StoError::Domain("N must be at least 1".into()));
        }
        if self.t_max == 0 || self.record_every == 0 {
            return Err(StoError::Domain("T_max and record_every must be at least 1".into()));
        }
        if let InitialState::Points(p) = &self.init {
            if p.len() != self.n {
                return Err(StoError::Domain(format!("{} initial points for N = {}", p.len(), self.n)));
            }
        }
        if let Some(t) = self.trap {
            if !(0.0..0.5).contains(&t) {
                return Err(StoError::Domain(format!("trap half-width must lie in [0, 1/2), got {t}")));
            }
        }
        Ok(())
    }

    pub fn kernel(&self) -> Result<Option<NoiseKernel>> {
        self.noise.map(|p| NoiseKernel::new(p, KERNEL_GRID)).transpose()
    }

    fn trap_width(&self) -> Option<f64> {
        self.trap.or(self.noise.map(|p| p.trap))
    }

    fn initial_state(&self) -> Result<ParticleEnsemble> {
        match &self.init {
            InitialState::Uniform => ParticleEnsemble::new(NoiseStream::new(self.seed, self.stream).uniform_points(self.n)),
            InitialState::EquallySpaced => ParticleEnsemble::equally_spaced(self.n),
            InitialState::Points(p) => ParticleEnsemble::new(p.clone()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainTrace {
    pub times: Vec<u64>,
    #[serde(rename = "dW_to_lebesgue")]
    pub dw_to_lebesgue: Vec<f64>,
    #[serde(rename = "dW_to_dirac0")]
    pub dw_to_dirac0: Vec<f64>,
    /// First `t` with every coordinate in `[−Δ, Δ]`.
    pub absorbed_at: Option<u64>,
    pub final_state: ParticleEnsemble,
    pub trap: Option<f64>,
    /// Steps after absorption that left the trap.
    pub trap_violations: u64,
    /// Largest `d(F_i(x), 0) / d(x_i, 0)` observed while absorbed.
    pub max_trap_contraction: Option<f64>,
    pub steps_run: u64,
}

impl ChainTrace {
    /// Columns `t, dW_to_lebesgue, dW_to_dirac0, absorbed`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["t", "dW_to_lebesgue", "dW_to_dirac0", "absorbed"])?;
        for (j, t) in self.times.iter().enumerate() {
            let absorbed = self.absorbed_at.is_some_and(|a| a <= *t);
            wtr.serialize((t, self.dw_to_lebesgue[j], self.dw_to_dirac0[j], absorbed))?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// `W₁` between the empirical measure and `δ₀`.
pub fn dw_to_dirac0(x: &ParticleEnsemble) -> f64 {
    x.points().iter().map(|p| torus_dist(*p, 0.0)).sum::<f64>() / x.len() as f64
}

/// `W₁` between the empirical measure and Lebesgue measure.
pub fn dw_to_lebesgue(x: &ParticleEnsemble) -> Result<f64> {
    let lebesgue = GridDensity::uniform(crate::torus::MIN_GRID_SIZE)?;
    wasserstein1_circle(x, &lebesgue)
}

fn inside(points: &[f64], trap: f64) -> bool {
    points.iter().all(|p| centered(*p).abs() <= trap)
}

pub fn run_chain(cfg: &ChainConfig) -> Result<ChainTrace> {
    cfg.validate()?;
    let kernel = cfg.kernel()?;
    run_chain_with(cfg, kernel.as_ref())
}

/// [`run_chain`] with a kernel built once by the caller.
pub(crate) fn run_chain_with(cfg: &ChainConfig, kernel: Option<&NoiseKernel>) -> Result<ChainTrace> {
    cfg.validate()?;
    let trap = cfg.trap_width();
    let noise = NoiseStream::new(cfg.seed, cfg.stream);
    let mut x = cfg.initial_state()?;
    let mut trace = ChainTrace {
        times: Vec::new(),
        dw_to_lebesgue: Vec::new(),
        dw_to_dirac0: Vec::new(),
        absorbed_at: None,
        final_state: x.clone(),
        trap,
        trap_violations: 0,
        max_trap_contraction: None,
        steps_run: 0,
    };
    let record = |trace: &mut ChainTrace, t: u64, x: &ParticleEnsemble| -> Result<()> {
        trace.times.push(t);
        trace.dw_to_lebesgue.push(dw_to_lebesgue(x)?);
        trace.dw_to_dirac0.push(dw_to_dirac0(x));
        Ok(())
    };
    record(&mut trace, 0, &x)?;
    if trap.is_some_and(|d| inside(x.points(), d)) {
        trace.absorbed_at = Some(0);
        if cfg.stop_on_absorption {
            trace.final_state = x;
            return Ok(trace);
        }
    }

    for t in 1..=cfg.t_max {
        let images = linear_images(x.points(), cfg.k, cfg.delta);
        if trace.absorbed_at.is_some() {
            let ratio = x
                .points()
                .iter()
                .zip(&images)
                .filter(|(p, _)| **p != 0.0)
                .map(|(p, f)| torus_dist(*f, 0.0) / torus_dist(*p, 0.0))
                .fold(0.0, f64::max);
            trace.max_trap_contraction = Some(trace.max_trap_contraction.unwrap_or(0.0).max(ratio));
        }
        let next = match kernel {
            Some(kern) => add_noise(images, kern, noise, t),
            None => images,
        };
        x = ParticleEnsemble::from_wrapped(next);
        trace.steps_run = t;

        let mut stop = false;
        if let Some(d) = trap {
            let now_inside = inside(x.points(), d);
            match trace.absorbed_at {
                Some(_) if !now_inside => trace.trap_violations += 1,
                None if now_inside => {
                    trace.absorbed_at = Some(t);
                    stop = cfg.stop_on_absorption;
                }
                _ => {}
            }
        }
        if t % cfg.record_every == 0 || t == cfg.t_max || stop {
            record(&mut trace, t, &x)?;
        }
        if stop {
            break;
        }
    }
    trace.final_state = x;
    Ok(trace)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbsorptionRow {
    #[serde(rename = "N")]
    pub n: usize,
    /// Mean absorption time, censored runs counted at `T_max`.
    pub mean_time: f64,
    pub std_error: f64,
    pub censored: usize,
    pub replicas: usize,
    pub times: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbsorptionTable {
    pub rows: Vec<AbsorptionRow>,
    /// Mean times strictly increase along the `N` list.
    pub strictly_increasing: bool,
}

impl AbsorptionTable {
    /// Columns `N, mean_time, std_error, censored, replicas`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["N", "mean_time", "std_error", "censored", "replicas"])?;
        for r in &self.rows {
            wtr.serialize((r.n, r.mean_time, r.std_error, r.censored, r.replicas))?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Mean time to absorption in `[−Δ, Δ]^N` for each `N`.
///
/// Replica `r` of the `j`-th size runs on stream `(j << 32) | r` of `seed`;
/// other fields come from `template`.
pub fn absorption_scaling(
    template: &ChainConfig,
    n_list: &[usize],
    replicas: usize,
    seed: u64,
) -> Result<AbsorptionTable> {
    if template.trap_width().is_none() {
        return Err(StoError::Domain("absorption needs a trap width or a noise kernel".into()));
    }
    if replicas == 0 || n_list.is_empty() {
        return Err(StoError::Domain("need at least one size and one replica".into()));
    }
    let kernel = template.kernel()?;
    let mut rows = Vec::with_capacity(n_list.len());
    for (j, &n) in n_list.iter().enumerate() {
        let times = (0..replicas as u64)
            .into_par_iter()
            .map(|r| {
                let cfg = ChainConfig {
                    n,
                    seed,
                    stream: ((j as u64) << 32) | r,
                    record_every: template.t_max,
                    init: InitialState::Uniform,
                    stop_on_absorption: true,
                    ..template.clone()
                };
                run_chain_with(&cfg, kernel.as_ref()).map(|t| t.absorbed_at)
            })
            .collect::<Result<Vec<Option<u64>>>>()?;
        let censored = times.iter().filter(|t| t.is_none()).count();
        let times: Vec<u64> = times.into_iter().map(|t| t.unwrap_or(template.t_max)).collect();
        let m = times.len() as f64;
        let mean_time = times.iter().map(|&t| t as f64).sum::<f64>() / m;
        let var = times.iter().map(|&t| (t as f64 - mean_time).powi(2)).sum::<f64>() / (m - 1.0).max(1.0);
        rows.push(AbsorptionRow {
            n,
            mean_time,
            std_error: (var / m).sqrt(),
            censored,
            replicas,
            times,
        });
    }
    let strictly_increasing = rows.windows(2).all(|w| w[1].mean_time > w[0].mean_time);
    Ok(AbsorptionTable { rows, strictly_increasing })
}
