//! Run configuration: a sectioned TOML document, environment thread count and
//! `--section.key=value` overrides, merged as CLI > env > file > default.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::harness::{
    DensityPreset, DtPolicy, InitialRecipe, MonitorTolerances, OxygenPreset, Scenario, VelocityPreset,
};
use crate::regularization::{DiffusionVariant, FaceAverage, FluidVariant, ModelParams, PotentialGradient};
use crate::scalar::StepControls;

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "CHEMONS_THREADS";

/// Every accepted key, with its section.
pub const KNOWN_KEYS: &[&str] = &[
    "grid.cells",
    "grid.lengths",
    "model.chi",
    "model.kappa",
    "model.mu",
    "model.m",
    "model.eps",
    "model.grad_phi",
    "model.diffusion",
    "model.fluid",
    "model.face_average",
    "model.viscosity",
    "initial.n",
    "initial.n_base",
    "initial.n_amp",
    "initial.n_width",
    "initial.c",
    "initial.c_base",
    "initial.c_amp",
    "initial.u",
    "initial.u_amp",
    "initial.noise",
    "time.t_final",
    "time.sample_dt",
    "time.policy",
    "time.dt",
    "time.cfl_target",
    "time.dt_max",
    "time.dt_min",
    "solver.lin_tol",
    "solver.max_iters",
    "solver.enforce_cfl",
    "monitor.k_const",
    "monitor.floor",
    "monitor.mass_tol",
    "monitor.c_monotone_tol",
    "monitor.gradc_tol",
    "monitor.energy_factor",
    "output.dir",
    "output.every",
    "output.snapshots",
    "output.checkpoint",
    "run.threads",
    "run.seed",
    "sweep.eps",
    "sweep.m",
    "sweep.grids",
    "sweep.dt_over_h",
    "sweep.t_support",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputConfig {
    pub dir: String,
    /// CSV row cadence in steps.
    pub every: usize,
    pub snapshots: bool,
    pub checkpoint: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub eps: Vec<f64>,
    pub m: Vec<f64>,
    pub grids: Vec<usize>,
    pub dt_over_h: f64,
    /// Support of the weak-form test functions as a fraction of `T`.
    pub t_support: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            eps: vec![1e-1, 1e-2, 1e-3, 1e-4],
            m: vec![0.5, 1.0, 2.0],
            grids: vec![32, 64, 128],
            dt_over_h: 0.2,
            t_support: 0.75,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub output: OutputConfig,
    pub monitor: MonitorTolerances,
    pub energy_factor: f64,
    pub threads: usize,
    pub seed: u64,
    pub sweep: SweepConfig,
}

/// Flattened `section.key → value` view used for merging and lookups.
#[derive(Clone, Debug, Default)]
pub struct ConfigMap {
    values: BTreeMap<String, toml::Value>,
}

fn suggestion(key: &str) -> Option<&'static str> {
    let leaf = key.rsplit('.').next().unwrap_or(key);
    KNOWN_KEYS
        .iter()
        .map(|k| {
            let kleaf = k.rsplit('.').next().unwrap_or(k);
            (k, strsim::jaro_winkler(key, k).max(strsim::jaro_winkler(leaf, kleaf)))
        })
        .filter(|(_, s)| *s > 0.8)
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(k, _)| *k)
}

fn unknown(key: &str) -> Error {
    let msg = match suggestion(key) {
        Some(k) => {
            let leaf = k.rsplit('.').next().unwrap_or(k);
            format!("unknown key; did you mean `{leaf}` (`{k}`)?")
        }
        None => "unknown key".to_string(),
    };
    Error::config(key, msg)
}

impl ConfigMap {
    pub fn from_toml(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::config("<document>", e.to_string()))?;
        let mut values = BTreeMap::new();
        for (section, v) in table {
            let toml::Value::Table(inner) = v else {
                return Err(Error::config(&section, "expected a [section] table"));
            };
            for (k, v) in inner {
                if matches!(v, toml::Value::Table(_)) {
                    return Err(Error::config(format!("{section}.{k}"), "nested tables are not supported"));
                }
                values.insert(format!("{section}.{k}"), v);
            }
        }
        let map = Self { values };
        map.check_known()?;
        Ok(map)
    }

    fn check_known(&self) -> Result<()> {
        for k in self.values.keys() {
            if !KNOWN_KEYS.contains(&k.as_str()) {
                return Err(unknown(k));
            }
        }
        Ok(())
    }

    /// Sets a key from text; the text is read as a TOML value, falling back to
    /// a plain string.
    pub fn set_str(&mut self, key: &str, raw: &str) -> Result<()> {
        if !KNOWN_KEYS.contains(&key) {
            return Err(unknown(key));
        }
        let value = format!("v = {raw}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.to_string()));
        self.values.insert(key.to_string(), value);
        Ok(())
    }

    /// Applies `--section.key=value` arguments.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, args: &[S]) -> Result<()> {
        for a in args {
            let a = a.as_ref();
            let body = a
                .strip_prefix("--")
                .ok_or_else(|| Error::config(a, "overrides look like --section.key=value"))?;
            let (k, v) = body
                .split_once('=')
                .ok_or_else(|| Error::config(body, "overrides look like --section.key=value"))?;
            self.set_str(k, v)?;
        }
        Ok(())
    }

    pub fn contains(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    fn get(&self, key: &str) -> Option<&toml::Value> {
        self.values.get(key)
    }

    fn float(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            None => Ok(default),
            Some(toml::Value::Float(f)) => Ok(*f),
            Some(toml::Value::Integer(i)) => Ok(*i as f64),
            Some(other) => Err(type_error(key, "a number", other)),
        }
    }

    fn uint(&self, key: &str, default: usize) -> Result<usize> {
        match self.get(key) {
            None => Ok(default),
            Some(toml::Value::Integer(i)) if *i >= 0 => Ok(*i as usize),
            Some(other) => Err(type_error(key, "a nonnegative integer", other)),
        }
    }

    fn boolean(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key) {
            None => Ok(default),
            Some(toml::Value::Boolean(b)) => Ok(*b),
            Some(other) => Err(type_error(key, "true or false", other)),
        }
    }

    fn string(&self, key: &str) -> Result<Option<String>> {
        match self.get(key) {
            None => Ok(None),
            Some(toml::Value::String(s)) => Ok(Some(s.clone())),
            Some(other) => Err(type_error(key, "a string", other)),
        }
    }

    fn floats(&self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        match self.get(key) {
            None => Ok(default.to_vec()),
            Some(toml::Value::Array(a)) => a
                .iter()
                .map(|v| match v {
                    toml::Value::Float(f) => Ok(*f),
                    toml::Value::Integer(i) => Ok(*i as f64),
                    other => Err(type_error(key, "an array of numbers", other)),
                })
                .collect(),
            Some(other) => Err(type_error(key, "an array of numbers", other)),
        }
    }

    fn uints(&self, key: &str, default: &[usize]) -> Result<Vec<usize>> {
        match self.get(key) {
            None => Ok(default.to_vec()),
            Some(toml::Value::Array(a)) => a
                .iter()
                .map(|v| match v {
                    toml::Value::Integer(i) if *i > 0 => Ok(*i as usize),
                    other => Err(type_error(key, "an array of positive integers", other)),
                })
                .collect(),
            Some(other) => Err(type_error(key, "an array of positive integers", other)),
        }
    }

    fn choice<T: Copy>(&self, key: &str, options: &[(&str, T)], default: T) -> Result<T> {
        match self.string(key)? {
            None => Ok(default),
            Some(s) => options.iter().find(|(name, _)| *name == s).map(|(_, v)| *v).ok_or_else(|| {
                let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
                Error::config(key, format!("`{s}` is not one of {}", names.join(", ")))
            }),
        }
    }
}

fn type_error(key: &str, want: &str, got: &toml::Value) -> Error {
    Error::config(key, format!("expected {want}, got `{got}` ({})", got.type_str()))
}

#[derive(Clone, Copy)]
enum NKind {
    Bump,
    Uniform,
    Cosine,
}

#[derive(Clone, Copy)]
enum CKind {
    Uniform,
    Cosine,
}

#[derive(Clone, Copy)]
enum UKind {
    Zero,
    Vortex,
}

#[derive(Clone, Copy)]
enum Policy {
    Adaptive,
    Fixed,
}

fn build(map: &ConfigMap) -> Result<RunConfig> {
    let cells = map.uints("grid.cells", &[64, 64])?;
    let lengths = map.floats("grid.lengths", &vec![1.0; cells.len()])?;
    let grid = GridSpec::new(&cells, &lengths).map_err(|e| Error::config("grid.cells", e.to_string()))?;

    let dp = ModelParams::default();
    let gp = map.floats("model.grad_phi", &[0.0, -1.0, 0.0])?;
    if gp.is_empty() || gp.len() > 3 {
        return Err(Error::config("model.grad_phi", "expected 1 to 3 components"));
    }
    let mut grad_phi = [0.0; 3];
    grad_phi[..gp.len()].copy_from_slice(&gp);
    let params = ModelParams {
        chi: map.float("model.chi", dp.chi)?,
        kappa: map.float("model.kappa", dp.kappa)?,
        mu: map.float("model.mu", dp.mu)?,
        m: map.float("model.m", dp.m)?,
        eps: map.float("model.eps", dp.eps)?,
        grad_phi: PotentialGradient::Constant(grad_phi),
        diffusion: map.choice(
            "model.diffusion",
            &[("degenerate", DiffusionVariant::Degenerate), ("nondegenerate", DiffusionVariant::Nondegenerate)],
            dp.diffusion,
        )?,
        fluid: map.choice(
            "model.fluid",
            &[
                ("navier_stokes", FluidVariant::NavierStokes),
                ("stokes", FluidVariant::Stokes),
                ("frozen", FluidVariant::Frozen),
            ],
            dp.fluid,
        )?,
        face_average: map.choice(
            "model.face_average",
            &[("arithmetic", FaceAverage::Arithmetic), ("harmonic", FaceAverage::Harmonic)],
            dp.face_average,
        )?,
        viscosity: map.float("model.viscosity", dp.viscosity)?,
    };
    params.validate()?;

    let seed = map.uint("run.seed", 0)? as u64;
    let n = match map.choice(
        "initial.n",
        &[("gaussian-bump", NKind::Bump), ("uniform", NKind::Uniform), ("cosine-mode", NKind::Cosine)],
        NKind::Bump,
    )? {
        NKind::Bump => DensityPreset::GaussianBump {
            base: map.float("initial.n_base", 0.2)?,
            amp: map.float("initial.n_amp", 2.0)?,
            width: map.float("initial.n_width", 0.1)?,
        },
        NKind::Uniform => DensityPreset::Uniform(map.float("initial.n_base", 1.0)?),
        NKind::Cosine => DensityPreset::CosineMode {
            amp: map.float("initial.n_amp", 0.5)?,
        },
    };
    let c = match map.choice(
        "initial.c",
        &[("uniform-oxygen", CKind::Uniform), ("cosine", CKind::Cosine)],
        CKind::Uniform,
    )? {
        CKind::Uniform => OxygenPreset::Uniform(map.float("initial.c_base", 1.0)?),
        CKind::Cosine => OxygenPreset::Cosine {
            base: map.float("initial.c_base", 1.0)?,
            amp: map.float("initial.c_amp", 0.5)?,
        },
    };
    let u = match map.choice("initial.u", &[("zero", UKind::Zero), ("vortex", UKind::Vortex)], UKind::Zero)? {
        UKind::Zero => VelocityPreset::Zero,
        UKind::Vortex => VelocityPreset::Vortex {
            amp: map.float("initial.u_amp", 0.2)?,
        },
    };
    let initial = InitialRecipe {
        n,
        c,
        u,
        noise: map.float("initial.noise", 0.0)?,
        seed,
    };

    let dc = StepControls::default();
    let controls = StepControls {
        dt: map.float("time.dt", dc.dt)?,
        cfl_target: map.float("time.cfl_target", dc.cfl_target)?,
        lin_tol: map.float("solver.lin_tol", dc.lin_tol)?,
        max_iters: map.uint("solver.max_iters", dc.max_iters)?,
        dt_max: map.float("time.dt_max", dc.dt_max)?,
        dt_min: map.float("time.dt_min", dc.dt_min)?,
        enforce_cfl: map.boolean("solver.enforce_cfl", true)?,
    };
    let dt_policy = match map.choice("time.policy", &[("adaptive", Policy::Adaptive), ("fixed", Policy::Fixed)], Policy::Adaptive)? {
        Policy::Adaptive => DtPolicy::Adaptive,
        Policy::Fixed => DtPolicy::Fixed(controls.dt),
    };
    let scenario = Scenario {
        grid,
        params,
        initial,
        t_final: map.float("time.t_final", 1.0)?,
        sample_dt: map.float("time.sample_dt", 0.05)?,
        controls,
        dt_policy,
        k_const: map.float("monitor.k_const", 1.0)?,
        floor: map.float("monitor.floor", crate::diagnostics::DEFAULT_FLOOR)?,
    };
    scenario.validate()?;

    let dm = MonitorTolerances::default();
    let monitor = MonitorTolerances {
        mass: map.float("monitor.mass_tol", dm.mass)?,
        c_monotone: map.float("monitor.c_monotone_tol", dm.c_monotone)?,
        gradc_budget: map.float("monitor.gradc_tol", dm.gradc_budget)?,
    };
    for (k, v) in [
        ("monitor.mass_tol", monitor.mass),
        ("monitor.c_monotone_tol", monitor.c_monotone),
        ("monitor.gradc_tol", monitor.gradc_budget),
    ] {
        if !(v > 0.0) {
            return Err(Error::config(k, "tolerances must be positive"));
        }
    }
    let energy_factor = map.float("monitor.energy_factor", 2.0)?;
    if !(energy_factor > 1.0) {
        return Err(Error::config("monitor.energy_factor", "factor > 1 required"));
    }

    let dir = map
        .string("output.dir")?
        .ok_or_else(|| Error::config("output.dir", "required key is missing"))?;
    let output = OutputConfig {
        dir,
        every: map.uint("output.every", 1)?,
        snapshots: map.boolean("output.snapshots", true)?,
        checkpoint: map.boolean("output.checkpoint", true)?,
    };
    if output.every == 0 {
        return Err(Error::config("output.every", "cadence must be at least one step"));
    }

    let threads = map.uint("run.threads", 1)?;
    if threads == 0 {
        return Err(Error::config("run.threads", "at least one thread required"));
    }

    let ds = SweepConfig::default();
    let sweep = SweepConfig {
        eps: map.floats("sweep.eps", &ds.eps)?,
        m: map.floats("sweep.m", &ds.m)?,
        grids: map.uints("sweep.grids", &ds.grids)?,
        dt_over_h: map.float("sweep.dt_over_h", ds.dt_over_h)?,
        t_support: map.float("sweep.t_support", ds.t_support)?,
    };
    if !(sweep.t_support > 0.0 && sweep.t_support < 1.0) {
        return Err(Error::config("sweep.t_support", "0 < t_support < 1 required"));
    }
    if !(sweep.dt_over_h > 0.0) {
        return Err(Error::config("sweep.dt_over_h", "dt_over_h > 0 required"));
    }

    Ok(RunConfig {
        scenario,
        output,
        monitor,
        energy_factor,
        threads,
        seed,
        sweep,
    })
}

/// Parses and validates a configuration document with defaults only.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    build(&ConfigMap::from_toml(text)?)
}

/// Parses a document, then applies the thread-count environment value (if
/// `env_threads` is given) and the CLI overrides, in that order.
pub fn resolve_config<S: AsRef<str>>(text: &str, env_threads: Option<&str>, overrides: &[S]) -> Result<RunConfig> {
    let mut map = ConfigMap::from_toml(text)?;
    if let Some(t) = env_threads {
        map.set_str("run.threads", t)?;
    }
    map.apply_overrides(overrides)?;
    build(&map)
}
