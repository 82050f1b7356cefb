//! Scenarios, the time loop, parameter sweeps and exact-solution oracles.

mod oracles;
mod sweep;

pub use oracles::{
    barenblatt_profile, barenblatt_test, barenblatt_test_with, heat_mode_test, weak_refinement, BarenblattResult,
    HeatModeResult, RefinementReport,
};
pub use sweep::{eps_sweep, grid_sweep, m_sweep, spacetime_distance, CauchyTrend, RunSummary, SweepAxis, SweepReport};

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{
    check_c_monotone, check_gradc_budget, check_mass_bound, compute_record, FunctionalRecord, MonitorVerdict,
    DEFAULT_FLOOR,
};
use crate::error::{Error, Result};
use crate::flow::step_u;
use crate::grid::{curl_of_potential, GridSpec, ScalarField, VectorField};
use crate::regularization::ModelParams;
use crate::scalar::{cfl_dt, step_c, step_n, StepControls};
use crate::state::{InitialData, State};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum DensityPreset {
    /// `base + amp·exp(−|x − x_mid|² / (2 width²))`.
    GaussianBump { base: f64, amp: f64, width: f64 },
    Uniform(f64),
    /// `1 + amp·∏ cos(π x_a / L_a)`.
    CosineMode { amp: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum OxygenPreset {
    Uniform(f64),
    /// `base + amp·cos(π x / L_x)`.
    Cosine { base: f64, amp: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum VelocityPreset {
    Zero,
    /// Discrete curl of `amp·∏ sin²(π x_a / L_a)`.
    Vortex { amp: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialRecipe {
    pub n: DensityPreset,
    pub c: OxygenPreset,
    pub u: VelocityPreset,
    /// Relative amplitude of the multiplicative perturbation of `n0`.
    pub noise: f64,
    pub seed: u64,
}

impl Default for InitialRecipe {
    fn default() -> Self {
        Self {
            n: DensityPreset::GaussianBump {
                base: 0.2,
                amp: 2.0,
                width: 0.1,
            },
            c: OxygenPreset::Uniform(1.0),
            u: VelocityPreset::Zero,
            noise: 0.0,
            seed: 0,
        }
    }
}

impl InitialRecipe {
    pub fn build(&self, g: &GridSpec) -> Result<InitialData> {
        if !(0.0..1.0).contains(&self.noise) {
            return Err(Error::config("initial.noise", "0 ≤ noise < 1 required"));
        }
        let mid: Vec<f64> = g.lengths().iter().map(|l| 0.5 * l).collect();
        let dim = g.dim();
        let mut n0 = match &self.n {
            DensityPreset::GaussianBump { base, amp, width } => ScalarField::from_fn(g, |x| {
                let r2: f64 = (0..dim).map(|a| (x[a] - mid[a]).powi(2)).sum();
                base + amp * (-r2 / (2.0 * width * width)).exp()
            }),
            DensityPreset::Uniform(v) => ScalarField::constant(g, *v),
            DensityPreset::CosineMode { amp } => ScalarField::from_fn(g, |x| {
                1.0 + amp * (0..dim).map(|a| (PI * x[a] / g.lengths()[a]).cos()).product::<f64>()
            }),
        };
        if self.noise > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            for v in &mut n0.values {
                *v *= 1.0 + self.noise * rng.gen_range(-1.0..1.0);
            }
        }
        let c0 = match &self.c {
            OxygenPreset::Uniform(v) => ScalarField::constant(g, *v),
            OxygenPreset::Cosine { base, amp } => {
                ScalarField::from_fn(g, |x| base + amp * (PI * x[0] / g.lengths()[0]).cos())
            }
        };
        let u0 = match &self.u {
            VelocityPreset::Zero => VectorField::zeros(g),
            VelocityPreset::Vortex { amp } => curl_of_potential(g, |x| {
                amp * (0..dim).map(|a| (PI * x[a] / g.lengths()[a]).sin().powi(2)).product::<f64>()
            }),
        };
        InitialData::new(n0, c0, u0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum DtPolicy {
    /// `cfl_dt` at every step.
    Adaptive,
    /// A fixed step (still clipped to sample times).
    Fixed(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub grid: GridSpec,
    pub params: ModelParams,
    pub initial: InitialRecipe,
    pub t_final: f64,
    pub sample_dt: f64,
    pub controls: StepControls,
    pub dt_policy: DtPolicy,
    /// Weight `K` of the kinetic term in the energy functional.
    pub k_const: f64,
    pub floor: f64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            grid: GridSpec::unit_square(64).expect("valid grid"),
            params: ModelParams::default(),
            initial: InitialRecipe::default(),
            t_final: 2.0,
            sample_dt: 0.05,
            controls: StepControls::default(),
            dt_policy: DtPolicy::Adaptive,
            k_const: 1.0,
            floor: DEFAULT_FLOOR,
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.controls.validate()?;
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(Error::config("time.t_final", "T > 0 required"));
        }
        if !(self.sample_dt > 0.0) {
            return Err(Error::config("time.sample_dt", "sample_dt > 0 required"));
        }
        if !(self.k_const > 0.0) {
            return Err(Error::config("monitor.k_const", "K > 0 required"));
        }
        if !(self.floor > 0.0) {
            return Err(Error::config("monitor.floor", "floor > 0 required"));
        }
        if let DtPolicy::Fixed(dt) = self.dt_policy {
            if !(dt > 0.0) {
                return Err(Error::config("time.dt", "dt > 0 required"));
            }
        }
        Ok(())
    }

    pub fn initial_state(&self) -> Result<State> {
        let init = self.initial.build(&self.grid)?;
        Ok(State::from_initial(&init, self.params.eps))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    /// One record per step, the first at the initial time.
    pub history: Vec<FunctionalRecord>,
    /// States at the sample times `t0, t0 + sample_dt, …, T`.
    pub samples: Vec<State>,
    /// Every state of the run when requested.
    pub trajectory: Vec<State>,
    pub steps: usize,
    pub final_state: Option<State>,
}

/// Everything required to continue a run bit-identically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub scenario: Scenario,
    pub state: State,
    pub t_start: f64,
    pub steps: usize,
    pub next_sample: usize,
    pub output: RunOutput,
}

#[derive(Debug)]
pub struct RunError {
    pub error: Error,
    pub partial: Box<RunOutput>,
    pub checkpoint: Box<Checkpoint>,
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "run aborted at t = {} after {} steps: {}",
            self.checkpoint.state.t, self.checkpoint.steps, self.error
        )
    }
}

impl std::error::Error for RunError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// The time loop. Each step advances `n`, `c` and `u` from the same old
/// state; the step length follows the scenario policy and is clipped so that
/// every sample time is hit exactly.
pub struct Runner {
    scenario: Scenario,
    state: State,
    t_start: f64,
    steps: usize,
    next_sample: usize,
    keep_trajectory: bool,
    output: RunOutput,
}

impl Runner {
    pub fn new(scenario: Scenario) -> Result<Self> {
        scenario.validate()?;
        let state = scenario.initial_state()?;
        Ok(Self::with_state(scenario, state))
    }

    /// Starts from an arbitrary state (its `t` is the start time).
    pub fn with_state(scenario: Scenario, state: State) -> Self {
        let t_start = state.t;
        let rec = compute_record(&state, &scenario.params, scenario.k_const, scenario.floor);
        let output = RunOutput {
            history: vec![rec],
            samples: vec![state.clone()],
            ..RunOutput::default()
        };
        Self {
            scenario,
            state,
            t_start,
            steps: 0,
            next_sample: 1,
            keep_trajectory: false,
            output,
        }
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        ck.scenario.validate()?;
        if ck.state.grid() != &ck.scenario.grid {
            return Err(Error::Input("checkpoint state does not match its scenario grid".into()));
        }
        let keep_trajectory = !ck.output.trajectory.is_empty();
        Ok(Self {
            scenario: ck.scenario,
            state: ck.state,
            t_start: ck.t_start,
            steps: ck.steps,
            next_sample: ck.next_sample,
            keep_trajectory,
            output: ck.output,
        })
    }

    pub fn keep_trajectory(mut self, keep: bool) -> Self {
        self.keep_trajectory = keep;
        if keep && self.output.trajectory.is_empty() {
            self.output.trajectory.push(self.state.clone());
        }
        self
    }

    pub fn state(&self) -> &State {
        &self.state
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn output(&self) -> &RunOutput {
        &self.output
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            scenario: self.scenario.clone(),
            state: self.state.clone(),
            t_start: self.t_start,
            steps: self.steps,
            next_sample: self.next_sample,
            output: self.output.clone(),
        }
    }

    fn sample_time(&self, k: usize) -> f64 {
        (self.t_start + k as f64 * self.scenario.sample_dt).min(self.scenario.t_final)
    }

    pub fn finished(&self) -> bool {
        self.state.t >= self.scenario.t_final
    }

    fn next_dt(&self) -> f64 {
        let sc = &self.scenario;
        let dt = match sc.dt_policy {
            DtPolicy::Adaptive => cfl_dt(&self.state, &sc.params, &sc.controls),
            DtPolicy::Fixed(dt) => dt,
        };
        let target = self.sample_time(self.next_sample);
        let left = target - self.state.t;
        // absorb slivers instead of taking a tiny final step
        if dt * (1.0 + 1e-6) >= left {
            left
        } else {
            dt
        }
    }

    /// Takes one step.
    pub fn step(&mut self) -> Result<()> {
        let dt = self.next_dt();
        let sc = &self.scenario;
        let controls = sc.controls.with_dt(dt);
        let n = step_n(&self.state, &sc.params, &controls)?;
        let c = step_c(&self.state, &sc.params, &controls)?;
        let (u, p) = step_u(&self.state, &sc.params, &controls)?;
        let target = self.sample_time(self.next_sample);
        let t = if dt == target - self.state.t { target } else { self.state.t + dt };
        let new = State {
            t,
            n,
            c,
            u,
            p,
            eps: self.state.eps,
        };
        let rec = compute_record(&new, &sc.params, sc.k_const, sc.floor);
        if !rec.all_finite() {
            return Err(Error::Numerical {
                what: format!("functionals at t = {t}"),
                residual: f64::NAN,
                iterations: self.steps + 1,
                history: Vec::new(),
            });
        }
        self.state = new;
        self.steps += 1;
        self.output.history.push(rec);
        if self.keep_trajectory {
            self.output.trajectory.push(self.state.clone());
        }
        if self.state.t == target {
            self.output.samples.push(self.state.clone());
            self.next_sample += 1;
        }
        Ok(())
    }

    /// Steps until `t_final`, or until `max_steps` further steps were taken.
    pub fn advance(&mut self, max_steps: Option<usize>) -> Result<(), Box<RunError>> {
        let mut taken = 0;
        while !self.finished() && max_steps.is_none_or(|m| taken < m) {
            if let Err(error) = self.step() {
                log::error!("step {} failed: {error}", self.steps + 1);
                return Err(Box::new(RunError {
                    error,
                    partial: Box::new(self.output.clone()),
                    checkpoint: Box::new(self.checkpoint()),
                }));
            }
            taken += 1;
        }
        Ok(())
    }

    pub fn finish(mut self) -> RunOutput {
        self.output.steps = self.steps;
        self.output.final_state = Some(self.state);
        self.output
    }
}

/// Runs a scenario to its final time.
pub fn run(scenario: &Scenario) -> Result<RunOutput, Box<RunError>> {
    let mut runner = Runner::new(scenario.clone()).map_err(|error| {
        let state = State {
            t: 0.0,
            n: ScalarField::zeros(&scenario.grid),
            c: ScalarField::zeros(&scenario.grid),
            u: VectorField::zeros(&scenario.grid),
            p: ScalarField::zeros(&scenario.grid),
            eps: scenario.params.eps,
        };
        Box::new(RunError {
            error,
            partial: Box::default(),
            checkpoint: Box::new(Checkpoint {
                scenario: scenario.clone(),
                state,
                t_start: 0.0,
                steps: 0,
                next_sample: 1,
                output: RunOutput::default(),
            }),
        })
    })?;
    runner.advance(None)?;
    Ok(runner.finish())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonitorTolerances {
    pub mass: f64,
    pub c_monotone: f64,
    pub gradc_budget: f64,
}

impl Default for MonitorTolerances {
    fn default() -> Self {
        Self {
            mass: 1e-2,
            c_monotone: 1e-8,
            gradc_budget: 5e-2,
        }
    }
}

/// The per-run monitor suite: mass bound, oxygen maximum, gradient budget.
pub fn evaluate_monitors(
    history: &[FunctionalRecord],
    c0: &ScalarField,
    p: &ModelParams,
    tol: &MonitorTolerances,
) -> Vec<MonitorVerdict> {
    vec![
        check_mass_bound(history, p, c0.grid.domain_volume(), tol.mass),
        check_c_monotone(history, tol.c_monotone),
        check_gradc_budget(history, c0, tol.gradc_budget),
    ]
}
