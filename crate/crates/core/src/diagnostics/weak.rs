//! Residuals of the three space-time integral identities that define a weak
//! solution, evaluated on a discrete trajectory with the regularized
//! nonlinearities in place of the limit ones.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::convection;
use crate::grid::{curl_of_potential, divergence, gradient, pairwise_sum, vector_laplacian_dirichlet, GridSpec, ScalarField, VectorField};
use crate::regularization::{consumption_unchecked, sensitivity_unchecked, yosida_smooth, FluidVariant, ModelParams};
use crate::state::State;

/// Divergence above which a supplied solenoidal test field is rejected.
pub const SOLENOIDAL_TOL: f64 = 1e-10;

/// `∏_a cos(k_a π x_a / L_a)`, which has zero normal derivative on the walls.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarTestFn {
    pub k: [u32; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SolenoidalTestFn {
    /// Discrete curl of `∏ sin²(k_a π x_a / L_a)`, vanishing on the walls.
    Stream { k: [u32; 3] },
    /// A prescribed face field. Must be discretely divergence-free.
    Field(VectorField),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestFunctionSpec {
    pub scalar: Vec<ScalarTestFn>,
    pub solenoidal: Vec<SolenoidalTestFn>,
    /// Test functions are multiplied by a cutoff that vanishes for
    /// `t ≥ t_support`.
    pub t_support: f64,
}

impl TestFunctionSpec {
    /// A few low cosine and stream-function modes.
    pub fn standard(t_support: f64) -> Self {
        Self {
            scalar: vec![
                ScalarTestFn { k: [0, 0, 0] },
                ScalarTestFn { k: [1, 0, 0] },
                ScalarTestFn { k: [1, 1, 0] },
                ScalarTestFn { k: [2, 1, 0] },
            ],
            solenoidal: vec![
                SolenoidalTestFn::Stream { k: [1, 1, 1] },
                SolenoidalTestFn::Stream { k: [2, 1, 1] },
            ],
            t_support,
        }
    }
}

/// Per-test-function residuals `|LHS − RHS|` of the three identities.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WeakResidual {
    pub n: Vec<f64>,
    pub c: Vec<f64>,
    pub u: Vec<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WeakResidualNorms {
    pub n: f64,
    pub c: f64,
    pub u: f64,
}

impl WeakResidual {
    pub fn norms(&self) -> WeakResidualNorms {
        let max = |v: &[f64]| v.iter().fold(0.0f64, |a, b| a.max(*b));
        WeakResidualNorms {
            n: max(&self.n),
            c: max(&self.c),
            u: max(&self.u),
        }
    }
}

/// C¹ cutoff equal to 1 at t=0 and 0 for t ≥ t_s.
fn cutoff(t: f64, t_s: f64) -> f64 {
    if t >= t_s {
        0.0
    } else {
        let s = (0.5 * PI * t / t_s).cos();
        s * s
    }
}

fn sample_scalar(g: &GridSpec, f: &ScalarTestFn) -> ScalarField {
    ScalarField::from_fn(g, |x| {
        (0..g.dim())
            .map(|a| (f.k[a] as f64 * PI * x[a] / g.lengths()[a]).cos())
            .product()
    })
}

fn sample_solenoidal(g: &GridSpec, f: &SolenoidalTestFn) -> Result<VectorField> {
    let psi = match f {
        SolenoidalTestFn::Stream { k } => curl_of_potential(g, |x| {
            (0..g.dim())
                .map(|a| (k[a].max(1) as f64 * PI * x[a] / g.lengths()[a]).sin().powi(2))
                .product()
        }),
        SolenoidalTestFn::Field(v) => {
            if &v.grid != g {
                return Err(Error::Input("solenoidal test field lives on a different grid".into()));
            }
            v.clone()
        }
    };
    let div = divergence(&psi).max_abs();
    if div > SOLENOIDAL_TOL || psi.boundary_normal_max() != 0.0 {
        return Err(Error::Input(format!(
            "solenoidal test field is not divergence-free (max |div| = {div:e})"
        )));
    }
    Ok(psi)
}

fn dot_cells(g: &GridSpec, a: &[f64], b: &[f64]) -> f64 {
    let v: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    pairwise_sum(&v) * g.cell_volume()
}

/// `Σ_faces q_face · v · ∇φ` over interior faces, with `q` averaged from the
/// two neighbouring cells (or `None` for unit weight).
fn face_pairing(g: &GridSpec, q: Option<&[f64]>, v: &VectorField, grad_phi: &VectorField) -> f64 {
    let mut terms = Vec::new();
    for a in 0..g.dim() {
        let stride = g.cell_stride(a);
        for fidx in 0..g.num_faces(a) {
            let i = g.face_coords(a, fidx);
            if g.is_boundary_face(a, i) {
                continue;
            }
            let w = match q {
                Some(q) => {
                    let hi = g.cell_index(i);
                    0.5 * (q[hi] + q[hi - stride])
                }
                None => 1.0,
            };
            terms.push(w * v.components[a][fidx] * grad_phi.components[a][fidx]);
        }
    }
    pairwise_sum(&terms) * g.cell_volume()
}

/// Spatial parts of the three identities at one trajectory level, with the
/// time-independent test fields (cutoff applied by the caller).
struct LevelTerms {
    n: Vec<f64>,
    c: Vec<f64>,
    u: Vec<f64>,
}

struct Tests {
    phi: Vec<ScalarField>,
    grad_phi: Vec<VectorField>,
    psi: Vec<VectorField>,
}

/// `RHS − (transport part of LHS)` integrand at one level, so that the
/// identity reads `Σ ∫ (q_{k+1} − q_k) φ_k = ∫ G dt`.
fn level_terms(s: &State, p: &ModelParams, tests: &Tests, lin_tol: f64, max_iters: usize) -> Result<LevelTerms> {
    let g = s.grid();
    let shift = p.diffusion_shift();
    let n: Vec<f64> = s.n.values.iter().map(|v| v.max(0.0)).collect();
    let c = &s.c.values;

    let pm = ScalarField {
        grid: g.clone(),
        values: n.iter().map(|v| (v + shift).powf(p.m)).collect(),
    };
    let grad_pm = gradient(&pm);
    let grad_c = gradient(&s.c);
    let sens: Vec<f64> = n.iter().map(|v| sensitivity_unchecked(*v, p.eps)).collect();
    let react: Vec<f64> = n.iter().map(|v| p.kappa * v - p.mu * v * v).collect();
    let sink: Vec<f64> = n.iter().zip(c).map(|(nv, cv)| -consumption_unchecked(*nv, p.eps) * cv).collect();

    let mut out = LevelTerms {
        n: Vec::with_capacity(tests.phi.len()),
        c: Vec::with_capacity(tests.phi.len()),
        u: Vec::with_capacity(tests.psi.len()),
    };
    for (phi, gphi) in tests.phi.iter().zip(&tests.grad_phi) {
        let adv_n = face_pairing(g, Some(&n), &s.u, gphi);
        let diff_n = face_pairing(g, None, &grad_pm, gphi);
        let chemo = p.chi * face_pairing(g, Some(&sens), &grad_c, gphi);
        let reac = dot_cells(g, &react, &phi.values);
        out.n.push(adv_n - diff_n + chemo + reac);

        let adv_c = face_pairing(g, Some(c), &s.u, gphi);
        let diff_c = face_pairing(g, None, &grad_c, gphi);
        let sk = dot_cells(g, &sink, &phi.values);
        out.c.push(adv_c - diff_c + sk);
    }

    if !tests.psi.is_empty() {
        let active = p.fluid != FluidVariant::Frozen;
        let lap = vector_laplacian_dirichlet(&s.u);
        let conv = if p.fluid == FluidVariant::NavierStokes && s.u.max_abs() > 0.0 {
            let w = yosida_smooth(&s.u, p.eps, lin_tol, max_iters)?;
            Some(convection(&w, &s.u))
        } else {
            None
        };
        let mut force = VectorField::zeros(g);
        for a in 0..g.dim() {
            let stride = g.cell_stride(a);
            for (fidx, f) in force.components[a].iter_mut().enumerate() {
                let i = g.face_coords(a, fidx);
                if g.is_boundary_face(a, i) {
                    continue;
                }
                let hi = g.cell_index(i);
                *f = 0.5 * (n[hi] + n[hi - stride]) * p.grad_phi.face_value(a, fidx);
            }
        }
        for psi in &tests.psi {
            if !active {
                out.u.push(0.0);
                continue;
            }
            let visc = p.viscosity * lap.dot(psi);
            let cv = conv.as_ref().map_or(0.0, |cv| cv.dot(psi));
            let buoy = force.dot(psi);
            out.u.push(visc - cv + buoy);
        }
    }
    Ok(out)
}

/// Evaluates the residuals of the weak identities on `trajectory`, whose
/// first entry is the initial state. Time derivatives are summed by parts in
/// the telescoping form `Σ_k ∫ (q_{k+1} − q_k) φ(t_k)`; the remaining terms
/// use the trapezoidal rule over the trajectory times.
pub fn weak_residual(
    trajectory: &[State],
    p: &ModelParams,
    spec: &TestFunctionSpec,
    lin_tol: f64,
    max_iters: usize,
) -> Result<WeakResidual> {
    let first = trajectory
        .first()
        .ok_or_else(|| Error::Input("weak residual needs a nonempty trajectory".into()))?;
    let last = trajectory.last().unwrap();
    if !(spec.t_support > first.t) || last.t < spec.t_support {
        return Err(Error::Input(format!(
            "trajectory [{}, {}] must cover the test support [{}, {}]",
            first.t, last.t, first.t, spec.t_support
        )));
    }
    let g = first.grid();
    for w in trajectory.windows(2) {
        if w[1].grid() != g || !(w[1].t > w[0].t) {
            return Err(Error::Input("trajectory times must increase on a single grid".into()));
        }
    }
    let phi: Vec<ScalarField> = spec.scalar.iter().map(|f| sample_scalar(g, f)).collect();
    let grad_phi = phi.iter().map(gradient).collect();
    let psi = spec
        .solenoidal
        .iter()
        .map(|f| sample_solenoidal(g, f))
        .collect::<Result<Vec<_>>>()?;
    let tests = Tests { phi, grad_phi, psi };
    let t0 = first.t;
    let eta = |t: f64| cutoff(t - t0, spec.t_support - t0);

    let ns = tests.phi.len();
    let nv = tests.psi.len();
    let mut time_n = vec![Vec::new(); ns];
    let mut time_c = vec![Vec::new(); ns];
    let mut time_u = vec![Vec::new(); nv];
    let mut int_n = vec![Vec::new(); ns];
    let mut int_c = vec![Vec::new(); ns];
    let mut int_u = vec![Vec::new(); nv];

    let mut prev = level_terms(first, p, &tests, lin_tol, max_iters)?;
    for k in 0..trajectory.len() - 1 {
        let (a, b) = (&trajectory[k], &trajectory[k + 1]);
        if eta(a.t) == 0.0 {
            break;
        }
        let next = level_terms(b, p, &tests, lin_tol, max_iters)?;
        let (ea, eb) = (eta(a.t), eta(b.t));
        let half = 0.5 * (b.t - a.t);
        let dn: Vec<f64> = b.n.values.iter().zip(&a.n.values).map(|(x, y)| x - y).collect();
        let dc: Vec<f64> = b.c.values.iter().zip(&a.c.values).map(|(x, y)| x - y).collect();
        for j in 0..ns {
            time_n[j].push(ea * dot_cells(g, &dn, &tests.phi[j].values));
            time_c[j].push(ea * dot_cells(g, &dc, &tests.phi[j].values));
            int_n[j].push(half * (ea * prev.n[j] + eb * next.n[j]));
            int_c[j].push(half * (ea * prev.c[j] + eb * next.c[j]));
        }
        if nv > 0 {
            let mut du = b.u.clone();
            for (dc, ac) in du.components.iter_mut().zip(&a.u.components) {
                for (x, y) in dc.iter_mut().zip(ac) {
                    *x -= y;
                }
            }
            for j in 0..nv {
                time_u[j].push(ea * du.dot(&tests.psi[j]));
                int_u[j].push(half * (ea * prev.u[j] + eb * next.u[j]));
            }
        }
        prev = next;
    }

    let resid = |time: &[Vec<f64>], int: &[Vec<f64>]| -> Vec<f64> {
        time.iter()
            .zip(int)
            .map(|(t, i)| (pairwise_sum(t) - pairwise_sum(i)).abs())
            .collect()
    };
    Ok(WeakResidual {
        n: resid(&time_n, &int_n),
        c: resid(&time_c, &int_c),
        u: resid(&time_u, &int_u),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn steady(g: &GridSpec, t: f64) -> State {
        let p = ModelParams::default();
        State {
            t,
            n: ScalarField::constant(g, p.kappa / p.mu),
            c: ScalarField::zeros(g),
            u: VectorField::zeros(g),
            p: ScalarField::zeros(g),
            eps: p.eps,
        }
    }

    #[test]
    fn steady_state_has_zero_residual() {
        let g = GridSpec::unit_square(16).unwrap();
        let traj: Vec<State> = (0..=20).map(|k| steady(&g, k as f64 * 0.05)).collect();
        let r = weak_residual(&traj, &ModelParams::default(), &TestFunctionSpec::standard(0.8), 1e-12, 1000).unwrap();
        let nr = r.norms();
        assert!(nr.n <= 1e-14 && nr.c <= 1e-14 && nr.u <= 1e-14, "{nr:?}");
    }

    #[test]
    fn stream_tests_are_solenoidal() {
        let g = GridSpec::unit_square(24).unwrap();
        let psi = sample_solenoidal(&g, &SolenoidalTestFn::Stream { k: [2, 1, 1] }).unwrap();
        assert!(psi.max_abs() > 0.1);
    }

    #[test]
    fn divergent_test_field_is_rejected() {
        let g = GridSpec::unit_square(8).unwrap();
        let v = VectorField::from_fn(&g, |x| [x[0] * (1.0 - x[0]), 0.0, 0.0]);
        let mut spec = TestFunctionSpec::standard(0.5);
        spec.solenoidal.push(SolenoidalTestFn::Field(v));
        let traj: Vec<State> = (0..=10).map(|k| steady(&g, k as f64 * 0.1)).collect();
        let err = weak_residual(&traj, &ModelParams::default(), &spec, 1e-12, 100).unwrap_err();
        assert!(matches!(err, Error::Input(_)));
    }

    #[test]
    fn short_trajectory_is_rejected() {
        let g = GridSpec::unit_square(8).unwrap();
        let traj: Vec<State> = (0..=2).map(|k| steady(&g, k as f64 * 0.1)).collect();
        assert!(weak_residual(&traj, &ModelParams::default(), &TestFunctionSpec::standard(0.5), 1e-12, 100).is_err());
    }
}
