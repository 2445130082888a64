//! Experiment configuration, read from TOML (or from the `config` field of a
//! run manifest) and resolved into a fully explicit form before dispatch.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use stolab::operators::{g_bounds, BumpProfile, CouplingSpec, CutoffProfile, MapSpec, NoiseParams};
use stolab::solver::delta_max_trap;

/// Safety factor applied to the largest admissible trap width when `Delta = "auto"`.
pub const AUTO_TRAP_SAFETY: f64 = 0.95;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    StoIterate,
    StabilityCheck,
    HilbertValidate,
    OrderCheck,
    Ensemble,
    Metastable,
    Lln,
    DiracBasin,
}

impl Experiment {
    pub const ALL: [Experiment; 8] = [
        Experiment::StoIterate,
        Experiment::StabilityCheck,
        Experiment::HilbertValidate,
        Experiment::OrderCheck,
        Experiment::Ensemble,
        Experiment::Metastable,
        Experiment::Lln,
        Experiment::DiracBasin,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::StoIterate => "sto-iterate",
            Experiment::StabilityCheck => "stability-check",
            Experiment::HilbertValidate => "hilbert-validate",
            Experiment::OrderCheck => "order-check",
            Experiment::Ensemble => "ensemble",
            Experiment::Metastable => "metastable",
            Experiment::Lln => "lln",
            Experiment::DiracBasin => "dirac-basin",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Experiment::StoIterate => "fixed-point iteration of the (noisy) self-consistent operator",
            Experiment::StabilityCheck => "coupling norms, contraction condition and stability windows",
            Experiment::HilbertValidate => "closed-form Hilbert metric against bisection on random pairs",
            Experiment::OrderCheck => "order preservation and cone-contraction rate by Monte Carlo",
            Experiment::Ensemble => "one finite-N chain with distances to Lebesgue and to the origin",
            Experiment::Metastable => "mean absorption time in the trap for several N",
            Experiment::Lln => "one-step law of large numbers against the grid operator",
            Experiment::DiracBasin => "point-mass basin run of the deterministic particle system",
        }
    }

    pub fn required_keys(self) -> &'static [&'static str] {
        match self {
            Experiment::StoIterate => &["delta", "cone.a"],
            Experiment::StabilityCheck => &["delta"],
            Experiment::HilbertValidate => &["cone.a"],
            Experiment::OrderCheck => &["delta", "cone.a"],
            Experiment::Ensemble => &["delta", "chain.N", "chain.T_max"],
            Experiment::Metastable => &["delta", "noise", "chain.N_list", "chain.T_max", "chain.replicas"],
            Experiment::Lln => &["delta", "chain.N_list"],
            Experiment::DiracBasin => &["delta", "chain.N", "run.epsilon", "run.steps"],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapConfig {
    pub name: String,
    pub k: u32,
}

impl Default for MapConfig {
    fn default() -> Self {
        MapConfig { name: "linear-k".into(), k: 5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingConfig {
    pub name: String,
}

impl Default for CouplingConfig {
    fn default() -> Self {
        CouplingConfig { name: "sincos".into() }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConeConfig {
    pub a: Option<f64>,
    /// Defaults to `10a`.
    pub alpha: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(rename = "G")]
    pub g: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { g: 256 }
    }
}

/// `Delta = "auto"` or a number.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TrapSetting {
    Value(f64),
    Named(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(rename = "Delta")]
    pub trap: TrapSetting,
    pub gamma: f64,
    #[serde(default)]
    pub bump: BumpProfile,
    #[serde(default)]
    pub cutoff: CutoffProfile,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSection {
    #[serde(rename = "N")]
    pub n: Option<usize>,
    #[serde(rename = "N_list")]
    pub n_list: Option<Vec<usize>>,
    #[serde(rename = "T_max")]
    pub t_max: Option<u64>,
    pub replicas: Option<usize>,
    pub record_every: Option<u64>,
}

/// Experiment-specific numerical settings.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub tol: Option<f64>,
    pub max_iters: Option<usize>,
    pub pairs: Option<usize>,
    pub samples: Option<usize>,
    pub beta_steps: Option<usize>,
    pub epsilon: Option<f64>,
    pub steps: Option<usize>,
}

/// Initial density `1 + Σ_n (cos[n−1] cos 2πnx + sin[n−1] sin 2πnx)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSection {
    #[serde(default)]
    pub cos: Vec<f64>,
    #[serde(default)]
    pub sin: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub delta: Option<f64>,
    #[serde(default)]
    pub map: MapConfig,
    #[serde(default)]
    pub coupling: CouplingConfig,
    #[serde(default)]
    pub cone: ConeConfig,
    #[serde(default)]
    pub grid: GridConfig,
    pub noise: Option<NoiseConfig>,
    #[serde(default)]
    pub chain: ChainSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub init: InitSection,
}

/// Invalid or incomplete configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError {
    pub field: Option<String>,
    pub message: String,
}

impl ConfigError {
    fn field(field: &str, message: impl Into<String>) -> Self {
        ConfigError { field: Some(field.into()), message: message.into() }
    }

    fn missing(field: &str, experiment: Experiment) -> Self {
        ConfigError::field(field, format!("missing field `{field}` required by {}", experiment.name()))
    }

    /// Parse errors carry the offending key as "missing field `x`" or "unknown field `x`".
    fn from_parse(message: String) -> Self {
        let field = ["missing field `", "unknown field `", "unknown variant `"]
            .iter()
            .find_map(|p| message.split(p).nth(1))
            .and_then(|rest| rest.split('`').next())
            .map(str::to_string);
        ConfigError { field, message }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

/// A validated configuration with every default and derived value filled in.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub config: ExperimentConfig,
    pub map: MapSpec,
    pub coupling: CouplingSpec,
    pub noise: Option<NoiseParams>,
}

impl Resolved {
    pub fn delta(&self) -> f64 {
        self.config.delta.unwrap_or(0.0)
    }

    pub fn k(&self) -> f64 {
        self.map.expansion()
    }

    pub fn grid(&self) -> usize {
        self.config.grid.g
    }

    pub fn a(&self) -> f64 {
        self.config.cone.a.expect("resolved")
    }
}

/// Load a TOML config, or the `config` field of a JSON manifest.
pub fn load(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError { field: None, message: format!("cannot read {}: {e}", path.display()) })?;
    if path.extension().is_some_and(|e| e == "json") {
        #[derive(Deserialize)]
        struct Manifest {
            config: ExperimentConfig,
        }
        serde_json::from_str::<Manifest>(&text)
            .map(|m| m.config)
            .map_err(|e| ConfigError::from_parse(e.to_string()))
    } else {
        parse_toml(&text)
    }
}

pub fn parse_toml(text: &str) -> Result<ExperimentConfig, ConfigError> {
    toml::from_str(text).map_err(|e| ConfigError::from_parse(e.message().to_string()))
}

fn positive(field: &str, v: f64) -> Result<f64, ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(ConfigError::field(field, format!("`{field}` must be positive and finite, got {v}")))
    }
}

fn at_least<T: PartialOrd + fmt::Display + Copy>(field: &str, v: T, min: T) -> Result<T, ConfigError> {
    if v >= min {
        Ok(v)
    } else {
        Err(ConfigError::field(field, format!("`{field}` must be at least {min}, got {v}")))
    }
}

/// Check required fields and ranges, fill defaults and resolve `Delta = "auto"`.
pub fn resolve(mut cfg: ExperimentConfig) -> Result<Resolved, ConfigError> {
    use Experiment::*;
    let e = cfg.experiment;
    let needs = |key: &str| e.required_keys().contains(&key);

    let map = MapSpec::from_name(&cfg.map.name, cfg.map.k).map_err(|err| ConfigError::field("map", err.to_string()))?;
    let coupling =
        CouplingSpec::from_name(&cfg.coupling.name).map_err(|err| ConfigError::field("coupling.name", err.to_string()))?;
    at_least("grid.G", cfg.grid.g, stolab::torus::MIN_GRID_SIZE)?;

    match cfg.delta {
        None if needs("delta") => return Err(ConfigError::missing("delta", e)),
        Some(d) if !d.is_finite() => return Err(ConfigError::field("delta", "`delta` must be finite")),
        _ => {}
    }
    let delta = cfg.delta.unwrap_or(0.0);
    if matches!(e, StoIterate | OrderCheck | Lln) {
        g_bounds(coupling, delta).map_err(|err| ConfigError::field("delta", err.to_string()))?;
    }

    if needs("cone.a") {
        let a = cfg.cone.a.ok_or_else(|| ConfigError::missing("cone.a", e))?;
        positive("cone.a", a)?;
        let alpha = cfg.cone.alpha.unwrap_or(10.0 * a);
        cfg.cone.alpha = Some(positive("cone.alpha", alpha)?);
    }

    let noise = match &cfg.noise {
        None if needs("noise") => return Err(ConfigError::missing("noise", e)),
        None => None,
        Some(n) => {
            let trap = match &n.trap {
                TrapSetting::Value(v) => *v,
                TrapSetting::Named(s) if s == "auto" => delta_max_trap(delta, map.expansion(), AUTO_TRAP_SAFETY)
                    .map_err(|err| ConfigError::field("noise.Delta", err.to_string()))?,
                TrapSetting::Named(s) => {
                    return Err(ConfigError::field("noise.Delta", format!("expected a number or \"auto\", got \"{s}\"")))
                }
            };
            let params = NoiseParams { trap, gamma: n.gamma, bump: n.bump, cutoff: n.cutoff };
            // validated by building the kernel once
            stolab::operators::NoiseKernel::new(params, cfg.grid.g)
                .map_err(|err| ConfigError::field("noise", err.to_string()))?;
            cfg.noise = Some(NoiseConfig { trap: TrapSetting::Value(trap), ..n.clone() });
            Some(params)
        }
    };

    let chain = &mut cfg.chain;
    if needs("chain.N") {
        let n = chain.n.ok_or_else(|| ConfigError::missing("chain.N", e))?;
        at_least("chain.N", n, 1)?;
    }
    if needs("chain.N_list") {
        let list = chain.n_list.as_ref().ok_or_else(|| ConfigError::missing("chain.N_list", e))?;
        let min_len = if e == Lln { 2 } else { 1 };
        at_least("chain.N_list", list.len(), min_len)?;
        if list.contains(&0) {
            return Err(ConfigError::field("chain.N_list", "sizes must be positive"));
        }
    }
    if needs("chain.T_max") {
        at_least("chain.T_max", chain.t_max.ok_or_else(|| ConfigError::missing("chain.T_max", e))?, 1)?;
    }
    if needs("chain.replicas") {
        at_least("chain.replicas", chain.replicas.ok_or_else(|| ConfigError::missing("chain.replicas", e))?, 1)?;
    }
    match e {
        Ensemble => chain.record_every = Some(at_least("chain.record_every", chain.record_every.unwrap_or(1), 1)?),
        Lln => chain.replicas = Some(at_least("chain.replicas", chain.replicas.unwrap_or(1), 1)?),
        _ => {}
    }

    let run = &mut cfg.run;
    match e {
        StoIterate => {
            run.tol = Some(positive("run.tol", run.tol.unwrap_or(1e-10))?);
            run.max_iters = Some(at_least("run.max_iters", run.max_iters.unwrap_or(100), 1)?);
        }
        HilbertValidate => {
            run.pairs = Some(at_least("run.pairs", run.pairs.unwrap_or(50), 1)?);
            run.beta_steps = Some(at_least("run.beta_steps", run.beta_steps.unwrap_or(2000), 1000)?);
        }
        OrderCheck => {
            run.pairs = Some(at_least("run.pairs", run.pairs.unwrap_or(200), 1)?);
            run.samples = Some(at_least("run.samples", run.samples.unwrap_or(200), 1)?);
        }
        DiracBasin => {
            let eps = run.epsilon.ok_or_else(|| ConfigError::missing("run.epsilon", e))?;
            if !(0.0..0.5).contains(&eps) {
                return Err(ConfigError::field("run.epsilon", format!("`run.epsilon` must lie in [0, 1/2), got {eps}")));
            }
            run.steps.ok_or_else(|| ConfigError::missing("run.steps", e))?;
        }
        _ => {}
    }

    Ok(Resolved { config: cfg, map, coupling, noise })
}

#[cfg(test)]
mod tests {
    use super::*;

    const ITERATE: &str = r#"
        experiment = "sto-iterate"
        delta = 0.1
        seed = 3
        [cone]
        a = 0.5
        [init]
        sin = [0.3]
    "#;

    #[test]
    fn defaults_are_filled() {
        let r = resolve(parse_toml(ITERATE).unwrap()).unwrap();
        assert_eq!(r.config.cone.alpha, Some(5.0));
        assert_eq!(r.config.run.max_iters, Some(100));
        assert_eq!(r.grid(), 256);
        assert_eq!(r.k(), 5.0);
    }

    #[test]
    fn missing_delta_names_the_field() {
        let err = resolve(parse_toml("experiment = \"stability-check\"").unwrap()).unwrap_err();
        assert_eq!(err.field.as_deref(), Some("delta"));
    }

    #[test]
    fn unknown_keys_and_experiments_are_rejected() {
        let err = parse_toml("experiment = \"sto-iterate\"\ndelta = 0.1\nbogus = 1").unwrap_err();
        assert_eq!(err.field.as_deref(), Some("bogus"));
        let err = parse_toml("experiment = \"nope\"").unwrap_err();
        assert_eq!(err.field.as_deref(), Some("nope"));
    }

    #[test]
    fn auto_trap_is_resolved() {
        let text = r#"
            experiment = "metastable"
            delta = -0.155
            [noise]
            Delta = "auto"
            gamma = 0.05
            [chain]
            N_list = [2, 4]
            T_max = 1000
            replicas = 4
        "#;
        let r = resolve(parse_toml(text).unwrap()).unwrap();
        let trap = r.noise.unwrap().trap;
        assert!((trap - delta_max_trap(-0.155, 5.0, 0.95).unwrap()).abs() < 1e-15);
        assert_eq!(r.config.noise.unwrap().trap, TrapSetting::Value(trap));
    }

    #[test]
    fn auto_trap_outside_window_fails() {
        let text = "experiment = \"metastable\"\ndelta = 0.1\n[noise]\nDelta = \"auto\"\ngamma = 0.05\n[chain]\nN_list = [2]\nT_max = 10\nreplicas = 1";
        let err = resolve(parse_toml(text).unwrap()).unwrap_err();
        assert_eq!(err.field.as_deref(), Some("noise.Delta"));
    }

    #[test]
    fn strong_coupling_is_rejected_before_dispatch() {
        let text = ITERATE.replace("delta = 0.1", "delta = 2.0");
        let err = resolve(parse_toml(&text).unwrap()).unwrap_err();
        assert_eq!(err.field.as_deref(), Some("delta"));
        assert!(err.message.contains("coupling too strong"));
    }

    #[test]
    fn resolved_config_round_trips_through_json() {
        let r = resolve(parse_toml(ITERATE).unwrap()).unwrap();
        let json = serde_json::to_string(&r.config).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r.config);
    }
}
