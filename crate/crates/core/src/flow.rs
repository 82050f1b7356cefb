//! Velocity step: smoothed upwind convection, implicit viscosity, buoyancy
//! `n ∇Φ`, and a non-incremental pressure projection onto discretely
//! divergence-free face fields.

use crate::error::{Error, Result};
use crate::grid::{divergence, gradient, integrate, GridSpec, ScalarField, VectorField};
use crate::linsolve::{conjugate_gradient, NegDirichletLaplacian, NegNeumannLaplacian, SolveOptions};
use crate::regularization::{helmholtz_dirichlet, yosida_smooth, FluidVariant, ModelParams};
use crate::scalar::StepControls;
use crate::state::State;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoissonBc {
    /// Homogeneous Neumann walls with a mean-zero gauge.
    NeumannMeanZero,
    /// Homogeneous Dirichlet walls.
    Dirichlet,
}

#[derive(Clone, Debug)]
pub struct PoissonSolution {
    pub phi: ScalarField,
    pub iterations: usize,
    pub residual: f64,
    /// Mean subtracted from an incompatible Neumann right-hand side.
    pub mean_correction: f64,
}

/// Relative size of the right-hand-side mean above which the Neumann
/// compatibility correction is reported.
const COMPATIBILITY_TOL: f64 = 1e-12;

/// Solves `Δφ = rhs` to `‖Δφ - rhs‖∞ ≤ tol`. For Neumann walls the
/// right-hand side is first made mean-zero and the solution is mean-zero.
pub fn poisson_solve(
    rhs: &ScalarField,
    bc: PoissonBc,
    tol: f64,
    max_iters: usize,
    guess: Option<&ScalarField>,
) -> Result<PoissonSolution> {
    let g = &rhs.grid;
    let mut b: Vec<f64> = rhs.values.iter().map(|v| -v).collect();
    let mut mean_correction = 0.0;
    if bc == PoissonBc::NeumannMeanZero {
        let mean = integrate(rhs) / g.domain_volume();
        if mean.abs() > COMPATIBILITY_TOL * rhs.max_abs().max(f64::MIN_POSITIVE) {
            log::debug!("Neumann Poisson rhs has mean {mean:e}; subtracted");
        }
        if mean != 0.0 {
            for v in &mut b {
                *v += mean;
            }
        }
        mean_correction = mean;
    }
    let mut x = match guess {
        Some(f) => f.values.clone(),
        None => vec![0.0; g.num_cells()],
    };
    let opts = SolveOptions {
        tol,
        max_iters,
        mean_zero: bc == PoissonBc::NeumannMeanZero,
        jacobi: false,
    };
    let stats = match bc {
        PoissonBc::NeumannMeanZero => {
            conjugate_gradient(&NegNeumannLaplacian(g), &b, &mut x, &opts, "pressure poisson")?
        }
        PoissonBc::Dirichlet => {
            conjugate_gradient(&NegDirichletLaplacian(g), &b, &mut x, &opts, "dirichlet poisson")?
        }
    };
    Ok(PoissonSolution {
        phi: ScalarField {
            grid: g.clone(),
            values: x,
        },
        iterations: stats.iterations,
        residual: stats.residual,
        mean_correction,
    })
}

/// Upwind `(w·∇)u` on the interior faces of every component; no-slip ghosts
/// across the walls.
pub fn convection(w: &VectorField, u: &VectorField) -> VectorField {
    let g = &u.grid;
    let dim = g.dim();
    let mut out = VectorField::zeros(g);
    for a in 0..dim {
        let shape = g.face_shape(a);
        let ua = &u.components[a];
        for fidx in 0..g.num_faces(a) {
            let i = g.face_coords(a, fidx);
            if g.is_boundary_face(a, i) {
                continue;
            }
            let mut acc = 0.0;
            for b in 0..dim {
                let wb = advecting_component(g, w, a, b, i, fidx);
                if wb == 0.0 {
                    continue;
                }
                let stride = g.face_stride(a, b);
                let h = g.spacing(b);
                let here = ua[fidx];
                let diff = if wb > 0.0 {
                    let below = if b == a || i[b] > 0 { ua[fidx - stride] } else { -here };
                    (here - below) / h
                } else {
                    let above = if b == a || i[b] + 1 < shape[b] { ua[fidx + stride] } else { -here };
                    (above - here) / h
                };
                acc += wb * diff;
            }
            out.components[a][fidx] = acc;
        }
    }
    out
}

/// Component `b` of `w` interpolated to the interior `a`-face at `i`.
fn advecting_component(g: &GridSpec, w: &VectorField, a: usize, b: usize, i: [usize; 3], fidx: usize) -> f64 {
    if a == b {
        return w.components[a][fidx];
    }
    let wb = &w.components[b];
    let mut s = 0.0;
    for da in [0usize, 1] {
        for db in [0usize, 1] {
            let mut j = i;
            j[a] = i[a] + da - 1;
            j[b] = i[b] + db;
            s += wb[g.face_index(b, j)];
        }
    }
    0.25 * s
}

/// Buoyancy `n ∇Φ` on interior faces, with `n` averaged from the two cells.
pub fn buoyancy(n: &ScalarField, p: &ModelParams) -> VectorField {
    let g = &n.grid;
    let mut f = VectorField::zeros(g);
    if p.grad_phi.is_zero() {
        return f;
    }
    for a in 0..g.dim() {
        let stride = g.cell_stride(a);
        for (fidx, v) in f.components[a].iter_mut().enumerate() {
            let i = g.face_coords(a, fidx);
            if g.is_boundary_face(a, i) {
                continue;
            }
            let hi = g.cell_index(i);
            let nf = 0.5 * (n.values[hi] + n.values[hi - stride]);
            *v = nf * p.grad_phi.face_value(a, fidx);
        }
    }
    f
}

/// Advances the velocity by one step; returns the new velocity and pressure.
pub fn step_u(state: &State, p: &ModelParams, sc: &StepControls) -> Result<(VectorField, ScalarField)> {
    if p.fluid == FluidVariant::Frozen {
        return Ok((state.u.clone(), state.p.clone()));
    }
    let dt = sc.dt;
    let u = &state.u;

    let mut rhs = u.clone();
    if p.fluid == FluidVariant::NavierStokes && u.max_abs() > 0.0 {
        let w = yosida_smooth(u, p.eps, sc.lin_tol, sc.max_iters)?;
        let conv = convection(&w, u);
        for (rc, cc) in rhs.components.iter_mut().zip(&conv.components) {
            for (r, c) in rc.iter_mut().zip(cc) {
                *r -= dt * c;
            }
        }
    }
    let mut star = helmholtz_dirichlet(&rhs, dt * p.viscosity, sc.lin_tol, sc.max_iters, "viscous step")?;
    let force = buoyancy(&state.n, p);
    for (sc_, fc) in star.components.iter_mut().zip(&force.components) {
        for (s, f) in sc_.iter_mut().zip(fc) {
            *s += dt * f;
        }
    }

    // Δψ = div u*, u = u* - ∇ψ, and ψ = dt φ with φ the projection potential.
    let div = divergence(&star);
    let guess = state.p.map(|v| -v * dt);
    let sol = poisson_solve(&div, PoissonBc::NeumannMeanZero, sc.lin_tol, sc.max_iters, Some(&guess))
        .map_err(|e| match e {
            Error::Numerical { residual, iterations, history, .. } => Error::Numerical {
                what: "pressure projection".into(),
                residual,
                iterations,
                history,
            },
            other => other,
        })?;
    let grad = gradient(&sol.phi);
    for (sc_, gc) in star.components.iter_mut().zip(&grad.components) {
        for (s, gv) in sc_.iter_mut().zip(gc) {
            *s -= gv;
        }
    }
    // momentum equation carries +∇P, so P = -φ
    let pressure = sol.phi.map(|v| -v / dt);
    Ok((star, pressure))
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::regularization::PotentialGradient;

    fn bump(g: &GridSpec) -> ScalarField {
        ScalarField::from_fn(g, |x| 1.0 + (-(x[0] - 0.4).powi(2) * 20.0 - (x[1] - 0.6).powi(2) * 30.0).exp())
    }

    fn rest_state(g: &GridSpec, n: ScalarField) -> State {
        State {
            t: 0.0,
            c: ScalarField::constant(g, 1.0),
            u: VectorField::zeros(g),
            p: ScalarField::zeros(g),
            n,
            eps: 0.01,
        }
    }

    #[test]
    fn poisson_zero_rhs() {
        let g = GridSpec::unit_square(16).unwrap();
        let s = poisson_solve(&ScalarField::zeros(&g), PoissonBc::NeumannMeanZero, 1e-12, 100, None).unwrap();
        assert_eq!(s.phi.max_abs(), 0.0);
    }

    #[test]
    fn poisson_manufactured_cosine() {
        let mut errs = Vec::new();
        for n in [32, 64] {
            let g = GridSpec::unit_square(n).unwrap();
            let exact = ScalarField::from_fn(&g, |x| (PI * x[0]).cos() * (PI * x[1]).cos());
            let rhs = exact.map(|v| -2.0 * PI * PI * v);
            let s = poisson_solve(&rhs, PoissonBc::NeumannMeanZero, 1e-10, 10_000, None).unwrap();
            assert!(s.residual <= 1e-10);
            let e = s
                .phi
                .values
                .iter()
                .zip(&exact.values)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            errs.push(e);
        }
        assert!(errs[0] < 2e-3, "{errs:?}");
        let order = (errs[0] / errs[1]).log2();
        assert!(order > 1.8, "{order}");
    }

    #[test]
    fn poisson_incompatible_rhs_is_corrected() {
        let g = GridSpec::unit_square(16).unwrap();
        let rhs = ScalarField::from_fn(&g, |x| 1.0 + (PI * x[0]).cos());
        let s = poisson_solve(&rhs, PoissonBc::NeumannMeanZero, 1e-10, 10_000, None).unwrap();
        assert!((s.mean_correction - 1.0).abs() < 1e-12);
        assert!(crate::grid::integrate(&s.phi).abs() < 1e-12);
    }

    #[test]
    fn poisson_dirichlet_mode() {
        let g = GridSpec::unit_square(32).unwrap();
        let h = g.spacing(0);
        let lam = -2.0 * (2.0 / (h * h)) * (1.0 - (PI * h).cos());
        let exact = ScalarField::from_fn(&g, |x| (PI * x[0]).sin() * (PI * x[1]).sin());
        let rhs = exact.map(|v| lam * v);
        let s = poisson_solve(&rhs, PoissonBc::Dirichlet, 1e-11, 10_000, None).unwrap();
        for (a, b) in s.phi.values.iter().zip(&exact.values) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn non_convergence_is_reported() {
        let g = GridSpec::unit_square(32).unwrap();
        let rhs = ScalarField::from_fn(&g, |x| (PI * x[0]).cos());
        let r = poisson_solve(&rhs, PoissonBc::NeumannMeanZero, 1e-14, 3, None);
        assert!(matches!(r, Err(Error::Numerical { .. })));
    }

    #[test]
    fn rest_state_without_force_stays_at_rest() {
        let g = GridSpec::unit_square(16).unwrap();
        let p = ModelParams {
            grad_phi: PotentialGradient::Constant([0.0; 3]),
            ..ModelParams::default()
        };
        let (u, _) = step_u(&rest_state(&g, bump(&g)), &p, &StepControls::default().with_dt(0.01)).unwrap();
        assert_eq!(u.max_abs(), 0.0);
    }

    #[test]
    fn gradient_force_is_projected_out() {
        let g = GridSpec::unit_square(32).unwrap();
        let p = ModelParams {
            grad_phi: PotentialGradient::Constant([0.3, -2.0, 0.0]),
            ..ModelParams::default()
        };
        let sc = StepControls::default().with_dt(0.01);
        let mut s = rest_state(&g, ScalarField::constant(&g, 1.7));
        for _ in 0..5 {
            let (u, pr) = step_u(&s, &p, &sc).unwrap();
            s.u = u;
            s.p = pr;
        }
        assert!(s.u.max_abs() <= sc.lin_tol, "{}", s.u.max_abs());
        // the pressure balances the force: ∇P = -n∇Φ
        let gp = gradient(&s.p);
        let idx = g.face_index(1, [5, 7, 0]);
        assert!((gp.components[1][idx] - 1.7 * 2.0).abs() < 1e-6);
    }

    #[test]
    fn projection_makes_velocity_solenoidal() {
        let g = GridSpec::unit_square(32).unwrap();
        let p = ModelParams::default();
        let sc = StepControls::default().with_dt(0.01);
        let mut s = rest_state(&g, bump(&g));
        for _ in 0..5 {
            let (u, pr) = step_u(&s, &p, &sc).unwrap();
            assert!(divergence(&u).max_abs() <= sc.lin_tol);
            assert_eq!(u.boundary_normal_max(), 0.0);
            s.u = u;
            s.p = pr;
        }
        assert!(s.u.max_abs() > 1e-4);
    }

    #[test]
    fn frozen_returns_input() {
        let g = GridSpec::unit_square(8).unwrap();
        let mut s = rest_state(&g, bump(&g));
        s.u = crate::grid::curl_of_potential(&g, |x| (PI * x[0]).sin().powi(2) * (PI * x[1]).sin().powi(2));
        let p = ModelParams {
            fluid: FluidVariant::Frozen,
            ..ModelParams::default()
        };
        let (u, _) = step_u(&s, &p, &StepControls::default()).unwrap();
        assert_eq!(u, s.u);
    }

    fn tg_state(g: &GridSpec) -> State {
        let mut s = rest_state(g, ScalarField::constant(g, 1.0));
        // Taylor–Green vortex, normal components vanish on the walls
        s.u = VectorField::from_fn(g, |x| {
            [
                (PI * x[0]).sin() * (PI * x[1]).cos(),
                -(PI * x[0]).cos() * (PI * x[1]).sin(),
                0.0,
            ]
        });
        s
    }

    #[test]
    fn taylor_green_decay_is_bracketed_by_free_slip_and_no_slip_rates() {
        // With no-slip walls the closed-form free-slip rate 2ν|k|² = 4π² is a
        // lower bound for the energy decay rate, and twice the first Stokes
        // eigenvalue of the unit square (≈ 52.3447) the late-time limit.
        let g = GridSpec::unit_square(64).unwrap();
        let p = ModelParams {
            grad_phi: PotentialGradient::Constant([0.0; 3]),
            eps: 1e-4,
            ..ModelParams::default()
        };
        let sc = StepControls::default().with_dt(1e-3);
        let mut s = tg_state(&g);
        let e0 = s.u.dot(&s.u);
        let mut prev = e0;
        for _ in 0..100 {
            let (u, pr) = step_u(&s, &p, &sc).unwrap();
            s.u = u;
            s.p = pr;
            let e = s.u.dot(&s.u);
            assert!(e <= prev * (1.0 + 1e-12));
            prev = e;
        }
        let rate = -(prev / e0).ln() / 0.1;
        assert!(rate > 4.0 * PI * PI, "rate {rate}");
        assert!(rate < 2.0 * 52.3447 * 1.05, "rate {rate}");
    }

    #[test]
    fn stokes_step_does_not_increase_energy() {
        let g = GridSpec::unit_square(32).unwrap();
        let p = ModelParams {
            grad_phi: PotentialGradient::Constant([0.0; 3]),
            fluid: FluidVariant::Stokes,
            ..ModelParams::default()
        };
        let sc = StepControls::default().with_dt(5e-3);
        let mut s = tg_state(&g);
        let mut s2 = s.clone();
        s2.u = crate::regularization::leray_project(&s.u, 1e-12, 10_000, "t").unwrap();
        s = s2;
        let e0 = s.u.dot(&s.u);
        let (u, _) = step_u(&s, &p, &sc).unwrap();
        assert!(u.dot(&u) <= e0 * (1.0 + sc.dt * sc.lin_tol));
    }

    #[test]
    fn stokes_and_navier_stokes_agree_at_rest() {
        let g = GridSpec::unit_square(16).unwrap();
        let s = rest_state(&g, bump(&g));
        let sc = StepControls::default().with_dt(0.01);
        let ns = step_u(&s, &ModelParams::default(), &sc).unwrap();
        let st = step_u(
            &s,
            &ModelParams {
                fluid: FluidVariant::Stokes,
                ..ModelParams::default()
            },
            &sc,
        )
        .unwrap();
        assert_eq!(ns.0, st.0);
    }
}
