//! One runner per experiment. Each writes `trace.csv` and `report.json`
//! (plus occasional extras) through [`Outputs`].

use std::f64::consts::PI;

use serde::Serialize;
use serde_json::{json, Value};

use stolab::cones::{cone_report, hilbert_metric, hilbert_metric_bruteforce, sample_cone_density, ConeParams};
use stolab::ensemble::{
    absorption_scaling, dirac_basin_run, lln_one_step, run_chain, ChainConfig, InitialState,
};
use stolab::operators::{NoiseKernel, StoModel};
use stolab::rng::substream;
use stolab::solver::{
    basin_window, cone_contraction_probe, dirac_window, fixed_point_iterate, l1_norm_in_y, order_preservation_check,
    stability_condition, trap_contraction, FixedPointOp,
};
use stolab::torus::GridDensity;
use stolab::Result;

use crate::config::{Experiment, Resolved};
use crate::output::Outputs;

/// Largest cone parameter accepted by the contraction probe.
const PROBE_MAX_A: f64 = 0.5;
/// Points at which the `L¹` norms are tabulated by `stability-check`.
const NORM_TABLE_POINTS: usize = 256;

/// Derived parameters echoed into the manifest before the experiment runs.
pub fn derived(r: &Resolved) -> Result<Value> {
    let k = r.k();
    let mut out = json!({
        "k": k,
        "dirac_window": dirac_window(k)?,
        "basin_window": basin_window(k)?,
    });
    if let Some(delta) = r.config.delta {
        out["stability"] = serde_json::to_value(stability_condition(r.coupling, k, delta)?)?;
    }
    if let Some(p) = r.noise {
        let kernel = NoiseKernel::new(p, r.grid())?;
        out["noise"] = json!({
            "Delta": p.trap,
            "trap_contraction": trap_contraction(r.delta(), k, p.trap),
            "kernel_checks": kernel.checks(),
        });
    }
    Ok(out)
}

pub fn run(r: &Resolved, out: &Outputs) -> Result<()> {
    match r.config.experiment {
        Experiment::StoIterate => sto_iterate(r, out),
        Experiment::StabilityCheck => stability_check(r, out),
        Experiment::HilbertValidate => hilbert_validate(r, out),
        Experiment::OrderCheck => order_check(r, out),
        Experiment::Ensemble => ensemble(r, out),
        Experiment::Metastable => metastable(r, out),
        Experiment::Lln => lln(r, out),
        Experiment::DiracBasin => dirac_basin(r, out),
    }
}

fn model(r: &Resolved) -> Result<StoModel> {
    StoModel::new(r.map, r.coupling, r.delta(), r.grid())
}

fn initial_density(r: &Resolved) -> Result<GridDensity> {
    let init = &r.config.init;
    GridDensity::from_fn(r.grid(), |x| {
        let cos: f64 = init.cos.iter().enumerate().map(|(n, c)| c * (2.0 * PI * (n + 1) as f64 * x).cos()).sum();
        let sin: f64 = init.sin.iter().enumerate().map(|(n, s)| s * (2.0 * PI * (n + 1) as f64 * x).sin()).sum();
        1.0 + cos + sin
    })
}

fn sto_iterate(r: &Resolved, out: &Outputs) -> Result<()> {
    let model = model(r)?;
    let kernel = r.noise.map(|p| NoiseKernel::new(p, r.grid())).transpose()?;
    let op = match &kernel {
        Some(k) => FixedPointOp::NoisySto(&model, k),
        None => FixedPointOp::Sto(&model),
    };
    let phi0 = initial_density(r)?;
    let (a, alpha) = (r.a(), r.config.cone.alpha.unwrap_or(f64::MAX));
    let trace = fixed_point_iterate(op, &phi0, a, r.config.run.tol.unwrap(), r.config.run.max_iters.unwrap())?;
    out.csv("trace.csv", |w| trace.write_csv(w))?;
    out.csv("density.csv", |w| trace.last().write_csv(w))?;
    let last = trace.last();
    let deviation = last.values().iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
    out.json(
        "report.json",
        &json!({
            "converged": trace.converged,
            "n_iters": trace.n_iters,
            "entry_steps": trace.entry_steps,
            "ratio_estimate": trace.ratio_estimate,
            "final_hilbert_step": trace.hilbert_steps.last(),
            "final_sup_residual": trace.sup_residuals.last(),
            "sup_deviation_from_uniform": deviation,
            "final_cone": cone_report(last, ConeParams::new(a, alpha)?)?,
        }),
    )
}

fn stability_check(r: &Resolved, out: &Outputs) -> Result<()> {
    let report = stability_condition(r.coupling, r.k(), r.delta())?;
    out.csv("trace.csv", |w| {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["x", "norm_d1", "norm_d2"])?;
        for j in 0..NORM_TABLE_POINTS {
            let x = j as f64 / NORM_TABLE_POINTS as f64;
            wtr.serialize((x, l1_norm_in_y(r.coupling, 1, x), l1_norm_in_y(r.coupling, 2, x)))?;
        }
        wtr.flush()?;
        Ok(())
    })?;
    let mut value = serde_json::to_value(report)?;
    value["delta_in_dirac_window"] = report.dirac_window.contains(r.delta()).into();
    value["delta_in_basin_window"] = report.basin_window.contains(r.delta()).into();
    out.json("report.json", &value)
}

#[derive(Serialize)]
struct HilbertRow {
    pair: usize,
    target_log_lip: f64,
    closed_form: f64,
    bruteforce: f64,
    abs_diff: f64,
}

fn hilbert_validate(r: &Resolved, out: &Outputs) -> Result<()> {
    let (a, pairs, steps) = (r.a(), r.config.run.pairs.unwrap(), r.config.run.beta_steps.unwrap());
    let mut rows = Vec::with_capacity(pairs);
    for i in 0..pairs {
        // log-Lipschitz targets spread over [0.1a, 0.9a]
        let target = a * (0.1 + 0.8 * (i as f64 + 0.5) / pairs as f64);
        let mut rng = substream(r.config.seed, i as u64);
        let phi = sample_cone_density(&mut rng, r.grid(), target, None)?;
        let psi = sample_cone_density(&mut rng, r.grid(), target, None)?;
        let closed_form = hilbert_metric(&phi, &psi, a)?;
        let bruteforce = hilbert_metric_bruteforce(&phi, &psi, a, steps)?;
        rows.push(HilbertRow { pair: i, target_log_lip: target, closed_form, bruteforce, abs_diff: (closed_form - bruteforce).abs() });
    }
    out.csv("trace.csv", |w| {
        let mut wtr = csv::Writer::from_writer(w);
        for row in &rows {
            wtr.serialize(row)?;
        }
        wtr.flush()?;
        Ok(())
    })?;
    let max_abs_diff = rows.iter().map(|r| r.abs_diff).fold(0.0, f64::max);
    out.json("report.json", &json!({ "pairs": pairs, "max_abs_diff": max_abs_diff }))
}

fn order_check(r: &Resolved, out: &Outputs) -> Result<()> {
    let model = model(r)?;
    let (a, alpha) = (r.a(), r.config.cone.alpha.unwrap());
    let order = order_preservation_check(&model, a, alpha, r.config.run.pairs.unwrap(), r.config.seed)?;
    let probe_a = a.min(PROBE_MAX_A);
    let probe = cone_contraction_probe(&model, probe_a, r.config.run.samples.unwrap(), r.config.seed)?;
    out.csv("trace.csv", |w| {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["sample", "contraction_ratio"])?;
        for (i, q) in probe.ratios.iter().enumerate() {
            wtr.serialize((i, q))?;
        }
        wtr.flush()?;
        Ok(())
    })?;
    out.json(
        "report.json",
        &json!({
            "order": order,
            "probe_a": probe_a,
            "lambda_hat": probe.lambda_hat,
            "lambda_predicted": probe.lambda_predicted,
            "margin": probe.margin,
        }),
    )
}

fn ensemble(r: &Resolved, out: &Outputs) -> Result<()> {
    let c = &r.config.chain;
    let cfg = ChainConfig {
        n: c.n.unwrap(),
        k: r.k(),
        delta: r.delta(),
        noise: r.noise,
        trap: None,
        t_max: c.t_max.unwrap(),
        seed: r.config.seed,
        stream: 0,
        record_every: c.record_every.unwrap(),
        init: InitialState::Uniform,
        stop_on_absorption: false,
    };
    let trace = run_chain(&cfg)?;
    out.csv("trace.csv", |w| trace.write_csv(w))?;
    out.csv("final_state.csv", |w| trace.final_state.write_csv(w))?;
    out.json(
        "report.json",
        &json!({
            "steps_run": trace.steps_run,
            "absorbed_at": trace.absorbed_at,
            "trap": trace.trap,
            "trap_violations": trace.trap_violations,
            "max_trap_contraction": trace.max_trap_contraction,
            "final_dW_to_lebesgue": trace.dw_to_lebesgue.last(),
            "final_dW_to_dirac0": trace.dw_to_dirac0.last(),
        }),
    )
}

fn metastable(r: &Resolved, out: &Outputs) -> Result<()> {
    let c = &r.config.chain;
    let noise = r.noise.expect("resolved");
    let template = ChainConfig::noisy(1, r.k(), r.delta(), noise, c.t_max.unwrap(), r.config.seed);
    let table = absorption_scaling(&template, c.n_list.as_ref().unwrap(), c.replicas.unwrap(), r.config.seed)?;
    out.csv("trace.csv", |w| table.write_csv(w))?;
    out.json("report.json", &table)
}

fn lln(r: &Resolved, out: &Outputs) -> Result<()> {
    let model = model(r)?;
    let kernel = r.noise.map(|p| NoiseKernel::new(p, r.grid())).transpose()?;
    let phi = initial_density(r)?;
    let c = &r.config.chain;
    let table = lln_one_step(&phi, c.n_list.as_ref().unwrap(), &model, kernel.as_ref(), c.replicas.unwrap(), r.config.seed)?;
    out.csv("trace.csv", |w| table.write_csv(w))?;
    out.json("report.json", &table)
}

fn dirac_basin(r: &Resolved, out: &Outputs) -> Result<()> {
    let (eps, steps, n) = (r.config.run.epsilon.unwrap(), r.config.run.steps.unwrap(), r.config.chain.n.unwrap());
    let series = dirac_basin_run(eps, r.delta(), r.k(), steps, n)?;
    out.csv("trace.csv", |w| {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["t", "dW_to_dirac0"])?;
        for (t, d) in series.iter().enumerate() {
            wtr.serialize((t, d))?;
        }
        wtr.flush()?;
        Ok(())
    })?;
    let window = basin_window(r.k())?;
    out.json(
        "report.json",
        &json!({
            "delta_in_basin_window": window.contains(r.delta()),
            "initial_dW_to_dirac0": series.first(),
            "final_dW_to_dirac0": series.last(),
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{parse_toml, resolve};

    #[test]
    fn initial_density_adds_modes() {
        let r = resolve(parse_toml("experiment = \"lln\"\ndelta = 0.0\n[chain]\nN_list = [10, 20]\n[init]\ncos = [0.0, 0.25]\nsin = [0.5]").unwrap()).unwrap();
        let phi = initial_density(&r).unwrap();
        for (j, v) in phi.values().iter().enumerate() {
            let x = j as f64 / 256.0;
            let want = 1.0 + 0.25 * (4.0 * PI * x).cos() + 0.5 * (2.0 * PI * x).sin();
            assert!((v - want).abs() < 1e-12);
        }
    }

    #[test]
    fn derived_values_include_windows_and_norms() {
        let r = resolve(parse_toml("experiment = \"stability-check\"\ndelta = 0.2").unwrap()).unwrap();
        let d = derived(&r).unwrap();
        assert!((d["stability"]["norm_d1"].as_f64().unwrap() - 4.0).abs() < 1e-6);
        assert!(d["basin_window"]["lo"].as_f64().unwrap() > d["dirac_window"]["lo"].as_f64().unwrap());
        assert!(d.get("noise").is_none());
    }
}
