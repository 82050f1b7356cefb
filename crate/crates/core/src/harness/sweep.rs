use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run, DtPolicy, RunOutput, Scenario};
use crate::diagnostics::FunctionalRecord;
use crate::error::{Error, Result};
use crate::grid::{pairwise_sum, restrict, GridSpec, ScalarField};
use crate::state::State;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    Eps,
    M,
    Grid,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Eps => "eps",
            SweepAxis::M => "m",
            SweepAxis::Grid => "grid",
        }
    }
}

/// Outcome of the successive-distance test along a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CauchyTrend {
    /// Every ratio is below 1.
    Converging,
    /// Mixed ratios with finite distances.
    Inconclusive,
    /// No ratio below 1, or a distance is not finite.
    Diverging,
    /// Fewer than three runs.
    Degenerate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub value: f64,
    pub steps: usize,
    pub max_mass: f64,
    pub max_nmax: f64,
    pub max_energy: f64,
    pub max_div_u: f64,
}

impl RunSummary {
    fn new(value: f64, out: &RunOutput) -> Self {
        let max = |f: fn(&FunctionalRecord) -> f64| out.history.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        Self {
            value,
            steps: out.steps,
            max_mass: max(|r| r.mass),
            max_nmax: max(|r| r.nmax),
            max_energy: max(|r| r.energy_f.abs()),
            max_div_u: max(|r| r.div_u_max),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    /// Space-time L² distances of `n`.
    pub dist_n: Vec<Vec<f64>>,
    /// Space-time L² distances of `(n+ε)^(m/2)`.
    pub dist_pow: Vec<Vec<f64>>,
    pub cauchy_ratios: Vec<f64>,
    pub cauchy_ratios_pow: Vec<f64>,
    pub trend: CauchyTrend,
    pub summaries: Vec<RunSummary>,
    /// Runs that failed, with their error messages. Their distances are NaN.
    pub failures: Vec<(f64, String)>,
    /// Full histories of the successful runs, in sweep order.
    #[serde(skip)]
    pub histories: Vec<(f64, Vec<FunctionalRecord>)>,
}

/// Sampled fields of one run on the comparison grid.
struct SampleFields {
    times: Vec<f64>,
    n: Vec<ScalarField>,
    pow: Vec<ScalarField>,
}

type RunResult = std::result::Result<(RunOutput, SampleFields), String>;

fn trend_of(ratios: &[f64], dist: &[Vec<f64>]) -> CauchyTrend {
    if ratios.is_empty() {
        return CauchyTrend::Degenerate;
    }
    if dist.iter().flatten().any(|d| !d.is_finite()) {
        return CauchyTrend::Diverging;
    }
    let below = ratios.iter().filter(|r| **r < 1.0).count();
    if below == ratios.len() {
        CauchyTrend::Converging
    } else if below == 0 {
        CauchyTrend::Diverging
    } else {
        log::info!("Cauchy ratios {ratios:?} are not monotone; trend inconclusive");
        CauchyTrend::Inconclusive
    }
}

fn sample_fields(samples: &[State], m: f64, eps: f64, coarse: Option<&GridSpec>) -> Result<SampleFields> {
    let mut out = SampleFields {
        times: Vec::with_capacity(samples.len()),
        n: Vec::with_capacity(samples.len()),
        pow: Vec::with_capacity(samples.len()),
    };
    for s in samples {
        let pow = s.n.map(|v| (v.max(0.0) + eps).powf(0.5 * m));
        let (n, pow) = match coarse {
            Some(cg) if cg != s.grid() => {
                let factor = s.grid().cells()[0] / cg.cells()[0];
                (restrict(&s.n, cg, factor)?, restrict(&pow, cg, factor)?)
            }
            _ => (s.n.clone(), pow),
        };
        out.times.push(s.t);
        out.n.push(n);
        out.pow.push(pow);
    }
    Ok(out)
}

fn l2_sq(a: &ScalarField, b: &ScalarField) -> f64 {
    let d: Vec<f64> = a.values.iter().zip(&b.values).map(|(x, y)| (x - y) * (x - y)).collect();
    pairwise_sum(&d) * a.grid.cell_volume()
}

/// Trapezoidal `sqrt(∫ q dt)` from samples of the squared spatial distance.
pub fn spacetime_distance(times: &[f64], sq: &[f64]) -> f64 {
    let parts: Vec<f64> = times
        .windows(2)
        .zip(sq.windows(2))
        .map(|(t, q)| 0.5 * (t[1] - t[0]) * (q[0] + q[1]))
        .collect();
    pairwise_sum(&parts).sqrt()
}

fn distance(a: &[ScalarField], b: &[ScalarField], times_a: &[f64], times_b: &[f64]) -> f64 {
    if times_a != times_b {
        return f64::NAN;
    }
    let sq: Vec<f64> = a.iter().zip(b).map(|(x, y)| l2_sq(x, y)).collect();
    spacetime_distance(times_a, &sq)
}

fn run_all(scenarios: &[Scenario], coarse: Option<&GridSpec>) -> Vec<RunResult> {
    scenarios
        .par_iter()
        .map(|s| {
            let mut out = run(s).map_err(|e| e.to_string())?;
            let fields = sample_fields(&out.samples, s.params.m, s.params.eps, coarse).map_err(|e| e.to_string())?;
            out.samples.clear();
            Ok((out, fields))
        })
        .collect()
}

fn report(axis: SweepAxis, values: Vec<f64>, scenarios: &[Scenario], coarse: Option<&GridSpec>) -> SweepReport {
    let runs = run_all(scenarios, coarse);
    let k = values.len();
    let mut dist_n = vec![vec![0.0; k]; k];
    let mut dist_pow = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in i + 1..k {
            let (dn, dp) = match (&runs[i], &runs[j]) {
                (Ok((_, a)), Ok((_, b))) => (
                    distance(&a.n, &b.n, &a.times, &b.times),
                    distance(&a.pow, &b.pow, &a.times, &b.times),
                ),
                _ => (f64::NAN, f64::NAN),
            };
            dist_n[i][j] = dn;
            dist_n[j][i] = dn;
            dist_pow[i][j] = dp;
            dist_pow[j][i] = dp;
        }
    }
    let ratios = |d: &[Vec<f64>]| -> Vec<f64> { (0..k.saturating_sub(2)).map(|i| d[i + 1][i + 2] / d[i][i + 1]).collect() };
    let cauchy_ratios = ratios(&dist_n);
    let cauchy_ratios_pow = ratios(&dist_pow);
    let trend = trend_of(&cauchy_ratios, &dist_n);
    let mut summaries = Vec::new();
    let mut failures = Vec::new();
    let mut histories = Vec::new();
    for (v, r) in values.iter().zip(runs) {
        match r {
            Ok((out, _)) => {
                summaries.push(RunSummary::new(*v, &out));
                histories.push((*v, out.history));
            }
            Err(msg) => {
                log::warn!("sweep run at {} = {v} failed: {msg}", axis.name());
                failures.push((*v, msg));
            }
        }
    }
    SweepReport {
        axis,
        values,
        dist_n,
        dist_pow,
        cauchy_ratios,
        cauchy_ratios_pow,
        trend,
        summaries,
        failures,
        histories,
    }
}

fn check_decreasing(values: &[f64], key: &str) -> Result<()> {
    if values.is_empty() {
        return Err(Error::config(key, "sweep needs at least one value"));
    }
    if values.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::config(key, "sweep values must be strictly decreasing"));
    }
    Ok(())
}

/// Runs the scenario once per ε (strictly decreasing) on the same grid and
/// step policy and compares the trajectories.
pub fn eps_sweep(scenario: &Scenario, eps_list: &[f64]) -> Result<SweepReport> {
    check_decreasing(eps_list, "sweep.eps")?;
    let scenarios: Vec<Scenario> = eps_list
        .iter()
        .map(|&eps| {
            let mut s = scenario.clone();
            s.params.eps = eps;
            s
        })
        .collect();
    for s in &scenarios {
        s.validate()?;
    }
    Ok(report(SweepAxis::Eps, eps_list.to_vec(), &scenarios, None))
}

/// Runs the scenario once per diffusion exponent.
pub fn m_sweep(scenario: &Scenario, m_list: &[f64]) -> Result<SweepReport> {
    if m_list.is_empty() {
        return Err(Error::config("sweep.m", "sweep needs at least one value"));
    }
    let scenarios: Vec<Scenario> = m_list
        .iter()
        .map(|&m| {
            let mut s = scenario.clone();
            s.params.m = m;
            s
        })
        .collect();
    for s in &scenarios {
        s.validate()?;
    }
    Ok(report(SweepAxis::M, m_list.to_vec(), &scenarios, None))
}

/// Runs the scenario on `cells`² grids (each a multiple of the first), with a
/// fixed step proportional to the spacing, and compares on the coarsest grid.
pub fn grid_sweep(scenario: &Scenario, cells: &[usize], dt_over_h: f64) -> Result<SweepReport> {
    let base = *cells.first().ok_or_else(|| Error::config("sweep.grid", "sweep needs at least one grid"))?;
    if cells.iter().any(|c| *c % base != 0) {
        return Err(Error::config("sweep.grid", "grids must be multiples of the first"));
    }
    let lengths = scenario.grid.lengths().to_vec();
    let dim = scenario.grid.dim();
    let shape = |c: usize| -> Vec<usize> { (0..dim).map(|_| c).collect() };
    let coarse = GridSpec::new(&shape(base), &lengths)?;
    let mut scenarios = Vec::new();
    for &c in cells {
        let mut s = scenario.clone();
        s.grid = GridSpec::new(&shape(c), &lengths)?;
        s.dt_policy = DtPolicy::Fixed(dt_over_h * s.grid.min_spacing());
        s.validate()?;
        scenarios.push(s);
    }
    let values = cells.iter().map(|c| *c as f64).collect();
    Ok(report(SweepAxis::Grid, values, &scenarios, Some(&coarse)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regularization::{FluidVariant, PotentialGradient};

    fn decoupled() -> Scenario {
        let mut s = Scenario {
            grid: GridSpec::unit_square(16).unwrap(),
            t_final: 0.1,
            sample_dt: 0.02,
            ..Scenario::default()
        };
        s.params.m = 1.0;
        s.params.chi = 0.0;
        s.params.fluid = FluidVariant::Frozen;
        s.params.grad_phi = PotentialGradient::Constant([0.0; 3]);
        s
    }

    #[test]
    fn decoupled_density_ignores_eps() {
        let r = eps_sweep(&decoupled(), &[0.1, 0.01, 0.001]).unwrap();
        for i in 0..3 {
            assert_eq!(r.dist_n[i][i], 0.0);
            for j in 0..3 {
                assert_eq!(r.dist_n[i][j], r.dist_n[j][i]);
                assert!(r.dist_n[i][j] <= 1e-13);
            }
        }
        assert!(r.failures.is_empty());
    }

    #[test]
    fn single_value_is_degenerate() {
        let r = eps_sweep(&decoupled(), &[0.1]).unwrap();
        assert!(r.cauchy_ratios.is_empty());
        assert_eq!(r.trend, CauchyTrend::Degenerate);
        assert_eq!(r.dist_n, vec![vec![0.0]]);
    }

    #[test]
    fn rejects_increasing_eps() {
        assert!(eps_sweep(&decoupled(), &[0.01, 0.1]).is_err());
    }

    #[test]
    fn trend_classification() {
        let d = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        assert_eq!(trend_of(&[0.5, 0.2], &d), CauchyTrend::Converging);
        assert_eq!(trend_of(&[0.5, 1.2], &d), CauchyTrend::Inconclusive);
        assert_eq!(trend_of(&[1.5, 1.2], &d), CauchyTrend::Diverging);
    }

    #[test]
    fn spacetime_distance_of_constant_gap() {
        let d = spacetime_distance(&[0.0, 0.5, 1.0], &[4.0, 4.0, 4.0]);
        assert!((d - 2.0).abs() < 1e-15);
    }

    #[test]
    fn grid_sweep_compares_on_coarse_grid() {
        let r = grid_sweep(&decoupled(), &[8, 16], 0.2).unwrap();
        assert!(r.failures.is_empty(), "{:?}", r.failures);
        assert!(r.dist_n[0][1] > 0.0 && r.dist_n[0][1].is_finite());
    }
}
