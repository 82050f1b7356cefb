//! Time step of the two scalar equations: explicit upwind transport
//! (advection and chemotaxis), implicit diffusion with lagged coefficient,
//! then the reaction terms in a positivity-preserving split.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{apply_neumann_operator, divergence, gradient, GridSpec, ScalarField, VectorField};
use crate::linsolve::{conjugate_gradient, NeumannDiffusion, SolveOptions};
use crate::regularization::{
    consumption_unchecked, diffusivity_unchecked, sensitivity_unchecked, FaceAverage, ModelParams,
};
use crate::state::State;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepControls {
    pub dt: f64,
    pub cfl_target: f64,
    pub lin_tol: f64,
    pub max_iters: usize,
    pub dt_max: f64,
    pub dt_min: f64,
    /// When false the positivity preconditions are not checked; only useful
    /// to provoke instabilities on purpose.
    pub enforce_cfl: bool,
}

impl Default for StepControls {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            cfl_target: 0.5,
            lin_tol: 1e-10,
            max_iters: 20_000,
            dt_max: 1e-2,
            dt_min: 1e-9,
            enforce_cfl: true,
        }
    }
}

impl StepControls {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config("time.dt", "dt > 0 required"));
        }
        if !(self.cfl_target > 0.0 && self.cfl_target < 1.0) {
            return Err(Error::config("time.cfl_target", "0 < cfl_target < 1 required"));
        }
        if !(self.lin_tol > 0.0) {
            return Err(Error::config("solver.lin_tol", "tolerance must be positive"));
        }
        if self.max_iters == 0 {
            return Err(Error::config("solver.max_iters", "at least one iteration required"));
        }
        if !(self.dt_min > 0.0 && self.dt_min <= self.dt_max) {
            return Err(Error::config("time.dt_min", "0 < dt_min ≤ dt_max required"));
        }
        Ok(())
    }

    pub fn with_dt(&self, dt: f64) -> Self {
        Self { dt, ..self.clone() }
    }

    fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            tol: self.lin_tol,
            max_iters: self.max_iters,
            mean_zero: false,
            jacobi: true,
        }
    }
}

/// Cells on either side of an interior face: (lower, upper).
#[inline]
fn face_cells(g: &GridSpec, axis: usize, fidx: usize) -> Option<(usize, usize)> {
    let i = g.face_coords(axis, fidx);
    if g.is_boundary_face(axis, i) {
        return None;
    }
    let hi = g.cell_index(i);
    Some((hi - g.cell_stride(axis), hi))
}

/// Largest explicit transport rate over all cells: `Σ_faces (|u| + χ|∂c|) / h`.
/// Explicit transport keeps densities nonnegative when `dt * rate ≤ 1`.
pub fn explicit_rate(state: &State, p: &ModelParams) -> f64 {
    let g = state.grid();
    let grad_c = if p.chi > 0.0 { Some(gradient(&state.c)) } else { None };
    let mut rate = 0.0f64;
    for idx in 0..g.num_cells() {
        let i = g.cell_coords(idx);
        let mut r = 0.0;
        for a in 0..g.dim() {
            let lo = g.face_index(a, i);
            let hi = lo + g.face_stride(a, a);
            let mut s = state.u.components[a][lo].abs() + state.u.components[a][hi].abs();
            if let Some(gc) = &grad_c {
                s += p.chi * (gc.components[a][lo].abs() + gc.components[a][hi].abs());
            }
            r += s / g.spacing(a);
        }
        rate = rate.max(r);
    }
    rate
}

/// Adaptive step: `cfl_target / rate`, a logistic cap `cfl_target / (κ + μ max n)`,
/// clamped to `[dt_min, dt_max]`.
pub fn cfl_dt(state: &State, p: &ModelParams, sc: &StepControls) -> f64 {
    let mut dt = sc.dt_max;
    let rate = explicit_rate(state, p);
    if rate > 0.0 {
        dt = dt.min(sc.cfl_target / rate);
    }
    let reaction = p.kappa + p.mu * state.n.max().max(0.0);
    if reaction > 0.0 {
        dt = dt.min(sc.cfl_target / reaction);
    }
    dt.max(sc.dt_min)
}

fn check_transport_dt(state: &State, p: &ModelParams, sc: &StepControls, with_chemotaxis: bool) -> Result<()> {
    if !sc.enforce_cfl {
        return Ok(());
    }
    let rate = if with_chemotaxis {
        explicit_rate(state, p)
    } else {
        explicit_rate(state, &ModelParams { chi: 0.0, ..p.clone() })
    };
    if sc.dt * rate > 1.0 + 1e-12 {
        return Err(Error::Precondition(format!(
            "dt = {:e} violates the transport bound {:e}",
            sc.dt,
            1.0 / rate
        )));
    }
    Ok(())
}

fn check_nonnegative(f: &ScalarField, name: &str, sc: &StepControls) -> Result<()> {
    if sc.enforce_cfl && f.min() < 0.0 {
        return Err(Error::Precondition(format!("{name} has negative values (min {:e})", f.min())));
    }
    Ok(())
}

/// Implicit diffusion `(I - dt div(D grad)) x = rhs`, returned in the
/// conservative form `rhs + dt div(D grad x)`, which keeps the total exactly
/// equal to that of `rhs`.
fn implicit_diffusion(
    rhs: &ScalarField,
    coeff: Option<&VectorField>,
    sc: &StepControls,
    what: &str,
) -> Result<ScalarField> {
    let g = &rhs.grid;
    let op = NeumannDiffusion { grid: g, coeff, dt: sc.dt };
    let mut x = rhs.values.clone();
    conjugate_gradient(&op, &rhs.values, &mut x, &sc.solve_options(), what)?;
    let mut flux_div = vec![0.0; g.num_cells()];
    apply_neumann_operator(g, coeff, &x, &mut flux_div);
    let values = rhs.values.iter().zip(&flux_div).map(|(r, d)| r + sc.dt * d).collect();
    Ok(ScalarField {
        grid: g.clone(),
        values,
    })
}

/// Removes round-off negatives left by the inexact linear solve; anything
/// more negative than solver noise is an error.
fn clean_negatives(f: &mut ScalarField, sc: &StepControls, what: &str) -> Result<()> {
    if !sc.enforce_cfl {
        return Ok(());
    }
    let noise = 10.0 * sc.lin_tol * f.max_abs().max(1.0);
    for v in &mut f.values {
        if *v < 0.0 {
            if *v >= -noise {
                *v = 0.0;
            } else {
                return Err(Error::Numerical {
                    what: format!("{what}: positivity lost"),
                    residual: *v,
                    iterations: 0,
                    history: Vec::new(),
                });
            }
        }
    }
    Ok(())
}

fn upwind_advection_flux(u: &VectorField, q: &ScalarField, flux: &mut VectorField) {
    let g = &q.grid;
    for a in 0..g.dim() {
        for (fidx, f) in flux.components[a].iter_mut().enumerate() {
            if let Some((lo, hi)) = face_cells(g, a, fidx) {
                let uf = u.components[a][fidx];
                *f += if uf > 0.0 { uf * q.values[lo] } else { uf * q.values[hi] };
            }
        }
    }
}

/// Face diffusivities from the old density; wall faces carry no flux.
pub fn face_diffusivity(n: &ScalarField, p: &ModelParams) -> VectorField {
    let g = &n.grid;
    let shift = p.diffusion_shift();
    let mut d = VectorField::zeros(g);
    for a in 0..g.dim() {
        for (fidx, dv) in d.components[a].iter_mut().enumerate() {
            if let Some((lo, hi)) = face_cells(g, a, fidx) {
                let (nl, nh) = (n.values[lo].max(0.0), n.values[hi].max(0.0));
                *dv = match p.face_average {
                    FaceAverage::Arithmetic => diffusivity_unchecked(0.5 * (nl + nh), p.m, shift),
                    FaceAverage::Harmonic => {
                        let dl = diffusivity_unchecked(nl, p.m, shift);
                        let dh = diffusivity_unchecked(nh, p.m, shift);
                        2.0 * dl * dh / (dl + dh)
                    }
                };
            }
        }
    }
    d
}

/// Advances the density by one step of length `sc.dt`.
pub fn step_n(state: &State, p: &ModelParams, sc: &StepControls) -> Result<ScalarField> {
    check_nonnegative(&state.n, "n", sc)?;
    check_transport_dt(state, p, sc, true)?;
    let g = state.grid();
    let dt = sc.dt;
    let n = &state.n;

    let mut flux = VectorField::zeros(g);
    upwind_advection_flux(&state.u, n, &mut flux);
    if p.chi > 0.0 {
        let grad_c = gradient(&state.c);
        for a in 0..g.dim() {
            for (fidx, f) in flux.components[a].iter_mut().enumerate() {
                if let Some((lo, hi)) = face_cells(g, a, fidx) {
                    let gf = grad_c.components[a][fidx];
                    // cells drift up the oxygen gradient
                    let up = if gf > 0.0 { n.values[lo] } else { n.values[hi] };
                    *f += p.chi * gf * sensitivity_unchecked(up.max(0.0), p.eps);
                }
            }
        }
    }
    let div = divergence(&flux);
    let transported = ScalarField {
        grid: g.clone(),
        values: n.values.iter().zip(&div.values).map(|(v, d)| v - dt * d).collect(),
    };

    let coeff = face_diffusivity(n, p);
    let mut out = implicit_diffusion(&transported, Some(&coeff), sc, "n diffusion")?;

    let grow = 1.0 + dt * p.kappa;
    for v in &mut out.values {
        *v = *v * grow / (1.0 + dt * p.mu * *v);
    }
    clean_negatives(&mut out, sc, "step_n")?;
    Ok(out)
}

/// Advances the oxygen concentration by one step of length `sc.dt`.
pub fn step_c(state: &State, p: &ModelParams, sc: &StepControls) -> Result<ScalarField> {
    check_nonnegative(&state.c, "c", sc)?;
    check_transport_dt(state, p, sc, false)?;
    let g = state.grid();
    let dt = sc.dt;
    let c = &state.c;

    let mut flux = VectorField::zeros(g);
    upwind_advection_flux(&state.u, c, &mut flux);
    let div = divergence(&flux);
    let transported = ScalarField {
        grid: g.clone(),
        values: c.values.iter().zip(&div.values).map(|(v, d)| v - dt * d).collect(),
    };

    let mut out = implicit_diffusion(&transported, None, sc, "c diffusion")?;
    for (v, nv) in out.values.iter_mut().zip(&state.n.values) {
        *v /= 1.0 + dt * consumption_unchecked(nv.max(0.0), p.eps);
    }
    clean_negatives(&mut out, sc, "step_c")?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::integrate;
    use crate::regularization::FluidVariant;

    fn quiet_params() -> ModelParams {
        ModelParams {
            chi: 0.0,
            kappa: 0.0,
            mu: 1.0,
            m: 2.0,
            eps: 0.01,
            fluid: FluidVariant::Frozen,
            ..ModelParams::default()
        }
    }

    fn state_with(g: &GridSpec, n: ScalarField, c: ScalarField, eps: f64) -> State {
        State {
            t: 0.0,
            n,
            c,
            u: VectorField::zeros(g),
            p: ScalarField::zeros(g),
            eps,
        }
    }

    #[test]
    fn constant_density_is_steady() {
        let g = GridSpec::unit_square(16).unwrap();
        let s = state_with(&g, ScalarField::constant(&g, 0.7), ScalarField::constant(&g, 1.0), 0.01);
        // κ = μ = 0: all fluxes and reactions vanish
        let p = ModelParams {
            mu: 0.0,
            ..quiet_params()
        };
        let sc = StepControls::default().with_dt(0.05);
        let n = step_n(&s, &p, &sc).unwrap();
        assert!(n.values.iter().all(|&v| v == 0.7));
    }

    #[test]
    fn logistic_split_matches_formula_and_ode() {
        let g = GridSpec::unit_square(8).unwrap();
        let p = ModelParams {
            kappa: 1.0,
            mu: 1.0,
            ..quiet_params()
        };
        let sc = StepControls::default().with_dt(0.1);
        let s = state_with(&g, ScalarField::constant(&g, 0.5), ScalarField::constant(&g, 1.0), 0.01);
        let n = step_n(&s, &p, &sc).unwrap();
        let want = 0.5 * 1.1 / 1.05;
        assert!(n.values.iter().all(|v| (v - want).abs() < 1e-14));
        assert!((want - 0.5238).abs() < 1e-4);

        // trajectory against RK4 for n' = n - n²
        let rk4 = |mut y: f64, t: f64, steps: usize| {
            let h = t / steps as f64;
            let f = |y: f64| y - y * y;
            for _ in 0..steps {
                let k1 = f(y);
                let k2 = f(y + 0.5 * h * k1);
                let k3 = f(y + 0.5 * h * k2);
                let k4 = f(y + h * k3);
                y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            }
            y
        };
        let mut errs = Vec::new();
        for dt in [0.02, 0.01] {
            let sc = StepControls::default().with_dt(dt);
            let mut st = s.clone();
            let steps = (2.0 / dt).round() as usize;
            for _ in 0..steps {
                st.n = step_n(&st, &p, &sc).unwrap();
            }
            let want = rk4(0.5, 2.0, 2000);
            errs.push((st.n.values[0] - want).abs());
        }
        assert!(errs[0] < 0.02 && errs[1] < 0.01, "{errs:?}");
        let ratio = errs[0] / errs[1];
        assert!((1.7..2.3).contains(&ratio), "{ratio}");
        // and the long-time limit is κ/μ
        let sc = StepControls::default().with_dt(0.1);
        let mut st = s.clone();
        for _ in 0..400 {
            st.n = step_n(&st, &p, &sc).unwrap();
        }
        assert!((st.n.values[0] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn oxygen_cases() {
        let g = GridSpec::unit_square(8).unwrap();
        let p = ModelParams {
            eps: 1.0,
            ..quiet_params()
        };
        let sc = StepControls::default().with_dt(0.1);
        let s = state_with(&g, ScalarField::zeros(&g), ScalarField::constant(&g, 1.0), 1.0);
        let c = step_c(&s, &p, &sc).unwrap();
        assert!(c.values.iter().all(|&v| v == 1.0));

        let s = state_with(&g, ScalarField::constant(&g, 1.0), ScalarField::constant(&g, 1.0), 1.0);
        let c = step_c(&s, &p, &sc).unwrap();
        let want = 1.0 / (1.0 + 0.1 * 2f64.ln());
        assert!(c.values.iter().all(|v| (v - want).abs() < 1e-14));
        assert!((want - 0.935178).abs() < 1e-6);
    }

    #[test]
    fn cfl_caps_and_scaling() {
        let g = GridSpec::unit_square(16).unwrap();
        let mut p = quiet_params();
        p.mu = 0.0;
        let sc = StepControls::default();
        let mut s = state_with(&g, ScalarField::constant(&g, 1.0), ScalarField::constant(&g, 1.0), 0.01);
        assert_eq!(cfl_dt(&s, &p, &sc), sc.dt_max);

        s.u = crate::grid::curl_of_potential(&g, |x| {
            3.0 * (std::f64::consts::PI * x[0]).sin().powi(2) * (std::f64::consts::PI * x[1]).sin().powi(2)
        });
        let d1 = cfl_dt(&s, &p, &StepControls { dt_max: 1.0, ..sc.clone() });
        s.u.scale(2.0);
        let d2 = cfl_dt(&s, &p, &StepControls { dt_max: 1.0, ..sc.clone() });
        assert!((d1 / d2 - 2.0).abs() < 1e-12);
        assert!(d1 <= 1.0);
        s.u.scale(1e12);
        assert_eq!(cfl_dt(&s, &p, &sc), sc.dt_min);
    }

    #[test]
    fn cfl_violation_is_a_precondition_error() {
        let g = GridSpec::unit_square(16).unwrap();
        let mut s = state_with(&g, ScalarField::constant(&g, 1.0), ScalarField::constant(&g, 1.0), 0.01);
        s.u = crate::grid::curl_of_potential(&g, |x| {
            (std::f64::consts::PI * x[0]).sin().powi(2) * (std::f64::consts::PI * x[1]).sin().powi(2)
        });
        let sc = StepControls::default().with_dt(10.0);
        assert!(matches!(step_n(&s, &quiet_params(), &sc), Err(Error::Precondition(_))));
        assert!(matches!(step_c(&s, &quiet_params(), &sc), Err(Error::Precondition(_))));
    }

    #[test]
    fn conservation_with_transport_and_diffusion() {
        let g = GridSpec::unit_square(24).unwrap();
        let n = ScalarField::from_fn(&g, |x| 1.0 + 0.5 * (6.0 * x[0]).sin() * (4.0 * x[1]).cos());
        let c = ScalarField::from_fn(&g, |x| 1.0 + x[0] * x[1]);
        let mut s = state_with(&g, n, c, 0.05);
        s.u = crate::grid::curl_of_potential(&g, |x| {
            0.2 * (std::f64::consts::PI * x[0]).sin().powi(2) * (std::f64::consts::PI * x[1]).sin().powi(2)
        });
        let p = ModelParams {
            chi: 1.0,
            kappa: 0.0,
            mu: 0.0,
            m: 0.5,
            ..quiet_params()
        };
        let sc = StepControls::default();
        let sc = sc.with_dt(cfl_dt(&s, &p, &sc));
        let m0 = integrate(&s.n);
        let n1 = step_n(&s, &p, &sc).unwrap();
        assert!(((integrate(&n1) - m0) / m0).abs() < 1e-14);
        assert!(n1.min() > 0.0);
    }

    #[test]
    fn unit_exponent_is_blind_to_eps() {
        let g = GridSpec::unit_square(16).unwrap();
        let n = ScalarField::from_fn(&g, |x| 1.0 + (3.0 * x[0]).cos() * x[1]);
        let c = ScalarField::from_fn(&g, |x| 1.0 + x[0]);
        let sc = StepControls::default().with_dt(0.01);
        let mut outs = Vec::new();
        for eps in [0.5, 0.01, 1e-6] {
            let p = ModelParams {
                m: 1.0,
                eps,
                kappa: 0.5,
                ..quiet_params()
            };
            let s = state_with(&g, n.clone(), c.clone(), eps);
            outs.push(step_n(&s, &p, &sc).unwrap());
        }
        for o in &outs[1..] {
            for (a, b) in o.values.iter().zip(&outs[0].values) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
