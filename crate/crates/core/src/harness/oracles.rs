use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{DtPolicy, Runner, Scenario};
use crate::diagnostics::{weak_residual, TestFunctionSpec, WeakResidualNorms};
use crate::error::{Error, Result};
use crate::grid::{integrate, pairwise_sum, GridSpec, ScalarField, VectorField};
use crate::regularization::{FluidVariant, ModelParams, PotentialGradient};
use crate::state::State;

/// Parameters with every coupling switched off: pure nonlinear diffusion.
fn diffusion_only(m: f64, eps: f64) -> ModelParams {
    ModelParams {
        chi: 0.0,
        kappa: 0.0,
        mu: 0.0,
        m,
        eps,
        grad_phi: PotentialGradient::Constant([0.0; 3]),
        fluid: FluidVariant::Frozen,
        ..ModelParams::default()
    }
}

fn diffusion_scenario(grid: &GridSpec, params: ModelParams, t_final: f64, sample_dt: f64, dt: f64) -> Scenario {
    Scenario {
        grid: grid.clone(),
        params,
        t_final,
        sample_dt,
        dt_policy: DtPolicy::Fixed(dt),
        ..Scenario::default()
    }
}

/// Barenblatt source solution of `n_t = Δn^m` in `d` dimensions, centred at
/// `center`, with free constant `c`.
pub fn barenblatt_profile(m: f64, d: usize, c: f64, center: [f64; 3], x: [f64; 3], t: f64) -> f64 {
    let df = d as f64;
    let alpha = df / (df * (m - 1.0) + 2.0);
    let beta = alpha / df;
    let k = alpha * (m - 1.0) / (2.0 * m * df);
    let r2: f64 = (0..d).map(|a| (x[a] - center[a]).powi(2)).sum();
    let inner = c - k * r2 * t.powf(-2.0 * beta);
    if inner <= 0.0 {
        0.0
    } else {
        t.powf(-alpha) * inner.powf(1.0 / (m - 1.0))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BarenblattResult {
    pub l1_error: f64,
    pub mass: f64,
    pub relative: f64,
    pub steps: usize,
}

/// `barenblatt_test_with` using a support radius of 60% of the half-width at
/// `t1` and `dt = h/2`.
pub fn barenblatt_test(m: f64, grid: &GridSpec, t0: f64, t1: f64) -> Result<BarenblattResult> {
    barenblatt_test_with(m, grid, t0, t1, 0.6, 0.5)
}

/// Starts from the exact profile at `t0`, diffuses with `χ = κ = μ = 0` and a
/// frozen fluid until `t1`, and returns the L¹ distance to the profile at `t1`.
/// The constant is chosen so the support radius at `t1` is
/// `support_fraction` of the smallest half-width.
pub fn barenblatt_test_with(
    m: f64,
    grid: &GridSpec,
    t0: f64,
    t1: f64,
    support_fraction: f64,
    dt_over_h: f64,
) -> Result<BarenblattResult> {
    if !(m > 1.0) {
        return Err(Error::Domain(format!("Barenblatt oracle needs m > 1, got {m}")));
    }
    if !(t0 > 0.0 && t1 >= t0) {
        return Err(Error::Input(format!("need 0 < t0 ≤ t1, got t0 = {t0}, t1 = {t1}")));
    }
    if !(support_fraction > 0.0) {
        return Err(Error::Input("support fraction must be positive".into()));
    }
    if support_fraction >= 1.0 {
        return Err(Error::Setup(format!(
            "Barenblatt support reaches the wall before t1 (radius {support_fraction} of the half-width)"
        )));
    }
    let d = grid.dim();
    let df = d as f64;
    let alpha = df / (df * (m - 1.0) + 2.0);
    let beta = alpha / df;
    let k = alpha * (m - 1.0) / (2.0 * m * df);
    let half = (0..d).map(|a| 0.5 * grid.lengths()[a]).fold(f64::INFINITY, f64::min);
    let radius = support_fraction * half;
    let c = k * radius * radius * t1.powf(-2.0 * beta);
    let mut center = [0.0; 3];
    for (a, ca) in center.iter_mut().enumerate().take(d) {
        *ca = 0.5 * grid.lengths()[a];
    }
    let exact = |t: f64| ScalarField::from_fn(grid, |x| barenblatt_profile(m, d, c, center, x, t));

    let n0 = exact(t0);
    let mass = integrate(&n0);
    let (n1, steps) = if t1 == t0 {
        (n0, 0)
    } else {
        let dt = dt_over_h * grid.min_spacing();
        let params = diffusion_only(m, 1e-8);
        let state = State {
            t: t0,
            n: n0,
            // oxygen is inert here; zero keeps its solve trivial
            c: ScalarField::zeros(grid),
            u: VectorField::zeros(grid),
            p: ScalarField::zeros(grid),
            eps: params.eps,
        };
        let scenario = diffusion_scenario(grid, params, t1, t1 - t0, dt);
        let mut r = Runner::with_state(scenario, state);
        r.advance(None).map_err(|e| e.error)?;
        let steps = r.steps();
        (r.finish().final_state.expect("final state").n, steps)
    };
    let reference = exact(t1);
    let diff: Vec<f64> = n1.values.iter().zip(&reference.values).map(|(a, b)| (a - b).abs()).collect();
    let l1_error = pairwise_sum(&diff) * grid.cell_volume();
    Ok(BarenblattResult {
        l1_error,
        mass,
        relative: if mass > 0.0 { l1_error / mass } else { 0.0 },
        steps,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatModeResult {
    pub linf_error: f64,
    pub dt: f64,
    pub steps: usize,
    /// Eigenvalue of the discrete Neumann Laplacian for the mode.
    pub eigenvalue: f64,
}

/// Linear diffusion (`m = 1`) of `1 + a·∏ cos(π x_a / L_a)` up to `t1`,
/// compared with `1 + a·e^{λ t1}·∏ cos(π x_a / L_a)` for the discrete
/// eigenvalue `λ = −Σ_a (2/h_a²)(1 − cos(π h_a / L_a))`.
pub fn heat_mode_test(grid: &GridSpec, t1: f64, amplitude: f64, dt: f64) -> Result<HeatModeResult> {
    if !(t1 > 0.0 && dt > 0.0) {
        return Err(Error::Input(format!("need t1 > 0 and dt > 0, got {t1}, {dt}")));
    }
    let d = grid.dim();
    let mode = |x: [f64; 3]| (0..d).map(|a| (PI * x[a] / grid.lengths()[a]).cos()).product::<f64>();
    let lambda: f64 = (0..d)
        .map(|a| {
            let h = grid.spacing(a);
            -(2.0 / (h * h)) * (1.0 - (PI * h / grid.lengths()[a]).cos())
        })
        .sum();
    let steps_wanted = (t1 / dt).round().max(1.0);
    let dt = t1 / steps_wanted;
    let params = diffusion_only(1.0, 0.01);
    let state = State {
        t: 0.0,
        n: ScalarField::from_fn(grid, |x| 1.0 + amplitude * mode(x)),
        c: ScalarField::zeros(grid),
        u: VectorField::zeros(grid),
        p: ScalarField::zeros(grid),
        eps: params.eps,
    };
    let scenario = diffusion_scenario(grid, params, t1, t1, dt);
    let mut r = Runner::with_state(scenario, state);
    r.advance(None).map_err(|e| e.error)?;
    let steps = r.steps();
    let n1 = r.finish().final_state.expect("final state").n;
    let decay = (lambda * t1).exp();
    let reference = ScalarField::from_fn(grid, |x| 1.0 + amplitude * decay * mode(x));
    let linf_error = n1
        .values
        .iter()
        .zip(&reference.values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(HeatModeResult {
        linf_error,
        dt,
        steps,
        eigenvalue: lambda,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinementReport {
    pub cells: Vec<usize>,
    pub residuals: Vec<WeakResidualNorms>,
    /// `log2(r_coarse / r_fine)` between successive grids (for a factor-2
    /// refinement), per identity.
    pub orders: Vec<WeakResidualNorms>,
}

impl RefinementReport {
    /// Residuals decrease strictly along the refinement for all identities
    /// whose residuals are nonzero.
    pub fn monotone(&self) -> bool {
        self.residuals.windows(2).all(|w| {
            let dec = |a: f64, b: f64| b < a || (a == 0.0 && b == 0.0);
            dec(w[0].n, w[1].n) && dec(w[0].c, w[1].c) && dec(w[0].u, w[1].u)
        })
    }

    pub fn min_order(&self) -> f64 {
        self.orders
            .iter()
            .flat_map(|o| [o.n, o.c, o.u])
            .filter(|v| !v.is_nan())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Weak-form residuals of the scenario on `cells`² grids with a fixed step
/// `dt_over_h · h`.
pub fn weak_refinement(
    scenario: &Scenario,
    cells: &[usize],
    dt_over_h: f64,
    spec: &TestFunctionSpec,
) -> Result<RefinementReport> {
    let dim = scenario.grid.dim();
    let lengths = scenario.grid.lengths().to_vec();
    let results: Vec<Result<WeakResidualNorms>> = cells
        .par_iter()
        .map(|&c| {
            let shape: Vec<usize> = (0..dim).map(|_| c).collect();
            let mut s = scenario.clone();
            s.grid = GridSpec::new(&shape, &lengths)?;
            s.dt_policy = DtPolicy::Fixed(dt_over_h * s.grid.min_spacing());
            let mut r = Runner::new(s.clone())?.keep_trajectory(true);
            r.advance(None).map_err(|e| e.error)?;
            let out = r.finish();
            let res = weak_residual(&out.trajectory, &s.params, spec, s.controls.lin_tol, s.controls.max_iters)?;
            Ok(res.norms())
        })
        .collect();
    let residuals = results.into_iter().collect::<Result<Vec<_>>>()?;
    let orders = residuals
        .windows(2)
        .zip(cells.windows(2))
        .map(|(r, c)| {
            let lr = (c[1] as f64 / c[0] as f64).ln();
            let ord = |a: f64, b: f64| (a / b).ln() / lr;
            WeakResidualNorms {
                n: ord(r[0].n, r[1].n),
                c: ord(r[0].c, r[1].c),
                u: ord(r[0].u, r[1].u),
            }
        })
        .collect();
    Ok(RefinementReport {
        cells: cells.to_vec(),
        residuals,
        orders,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_mass_is_time_invariant() {
        let g = GridSpec::unit_square(200).unwrap();
        let c = 0.004;
        let mass = |t: f64| integrate(&ScalarField::from_fn(&g, |x| barenblatt_profile(2.0, 2, c, [0.5, 0.5, 0.0], x, t)));
        let (a, b) = (mass(1.0), mass(1.5));
        assert!((a - b).abs() < 1e-3 * a, "{a} {b}");
    }

    #[test]
    fn profile_closed_form_for_quadratic_exponent() {
        let x = [0.6, 0.5, 0.0];
        let t: f64 = 1.3;
        let want = t.powf(-0.5) * (0.01 - 0.01 * t.powf(-0.5) / 16.0);
        let got = barenblatt_profile(2.0, 2, 0.01, [0.5, 0.5, 0.0], x, t);
        assert!((got - want).abs() < 1e-16);
    }

    #[test]
    fn barenblatt_at_initial_time_is_exact() {
        let g = GridSpec::unit_square(32).unwrap();
        let r = barenblatt_test(2.0, &g, 1.0, 1.0).unwrap();
        assert_eq!(r.l1_error, 0.0);
        assert!(r.mass > 0.0);
    }

    #[test]
    fn barenblatt_rejects_wide_support_and_linear_exponent() {
        let g = GridSpec::unit_square(16).unwrap();
        assert!(matches!(barenblatt_test_with(2.0, &g, 1.0, 1.5, 1.2, 0.5), Err(Error::Setup(_))));
        assert!(barenblatt_test(1.0, &g, 1.0, 1.5).is_err());
    }

    #[test]
    fn flat_heat_mode_stays_flat() {
        let g = GridSpec::unit_square(16).unwrap();
        let r = heat_mode_test(&g, 0.05, 0.0, 1e-3).unwrap();
        assert!(r.linf_error <= 1e-10, "{}", r.linf_error);
    }

    #[test]
    fn heat_mode_error_is_first_order_in_dt() {
        let g = GridSpec::unit_square(16).unwrap();
        let a = heat_mode_test(&g, 0.1, 0.5, 2e-3).unwrap();
        let b = heat_mode_test(&g, 0.1, 0.5, 1e-3).unwrap();
        let ratio = a.linf_error / b.linf_error;
        assert!((1.8..2.2).contains(&ratio), "{ratio}");
    }
}
