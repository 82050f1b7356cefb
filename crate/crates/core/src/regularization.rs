//! The ε-family of coefficient functions that turns the degenerate model into
//! a uniformly parabolic one, and the resolvent smoother applied to the
//! advecting velocity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{poisson_solve, PoissonBc};
use crate::grid::{divergence, gradient, GridSpec, VectorField};
use crate::linsolve::{conjugate_gradient, FaceHelmholtz, SolveOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffusionVariant {
    /// `Δ(n+ε)^m`
    Degenerate,
    /// `Δ(n+1)^m`
    Nondegenerate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FluidVariant {
    NavierStokes,
    /// Convection dropped.
    Stokes,
    /// Velocity held at its initial value.
    Frozen,
}

/// How the face diffusivity is formed from the two adjacent cells.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaceAverage {
    /// Diffusivity of the mean density.
    Arithmetic,
    /// Harmonic mean of the two cell diffusivities.
    Harmonic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum PotentialGradient {
    Constant([f64; 3]),
    Sampled(VectorField),
}

impl PotentialGradient {
    /// Value of component `axis` of ∇Φ at face `fidx`.
    pub fn face_value(&self, axis: usize, fidx: usize) -> f64 {
        match self {
            PotentialGradient::Constant(g) => g[axis],
            PotentialGradient::Sampled(v) => v.components[axis][fidx],
        }
    }

    /// ∇Φ at a cell centre (sampled fields are face-averaged).
    pub fn cell_value(&self, cell_avg: Option<&[[f64; 3]]>, idx: usize) -> [f64; 3] {
        match (self, cell_avg) {
            (PotentialGradient::Constant(g), _) => *g,
            (PotentialGradient::Sampled(_), Some(avg)) => avg[idx],
            (PotentialGradient::Sampled(v), None) => v.cell_average()[idx],
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            PotentialGradient::Constant(g) => g.iter().all(|v| *v == 0.0),
            PotentialGradient::Sampled(v) => v.max_abs() == 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub chi: f64,
    pub kappa: f64,
    pub mu: f64,
    pub m: f64,
    pub eps: f64,
    pub grad_phi: PotentialGradient,
    pub diffusion: DiffusionVariant,
    pub fluid: FluidVariant,
    pub face_average: FaceAverage,
    /// Momentum diffusion coefficient; the model has it equal to one.
    pub viscosity: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            chi: 1.0,
            kappa: 0.5,
            mu: 1.0,
            m: 2.0,
            eps: 0.01,
            grad_phi: PotentialGradient::Constant([0.0, -1.0, 0.0]),
            diffusion: DiffusionVariant::Degenerate,
            fluid: FluidVariant::NavierStokes,
            face_average: FaceAverage::Arithmetic,
            viscosity: 1.0,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, key: &str, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::config(format!("model.{key}"), msg))
            }
        };
        check(self.chi.is_finite() && self.chi >= 0.0, "chi", "χ ≥ 0 required")?;
        check(self.kappa.is_finite() && self.kappa >= 0.0, "kappa", "κ ≥ 0 required")?;
        check(self.mu.is_finite() && self.mu > 0.0, "mu", "μ > 0 required")?;
        check(self.m.is_finite() && self.m > 0.0, "m", "m > 0 required")?;
        check(self.eps > 0.0 && self.eps <= 1.0, "eps", "0 < ε ≤ 1 required")?;
        check(
            self.viscosity.is_finite() && self.viscosity > 0.0,
            "viscosity",
            "viscosity > 0 required",
        )?;
        Ok(())
    }

    /// Shift added to the density inside the diffusion power.
    pub fn diffusion_shift(&self) -> f64 {
        match self.diffusion {
            DiffusionVariant::Degenerate => self.eps,
            DiffusionVariant::Nondegenerate => 1.0,
        }
    }
}

fn check_nonnegative(s: f64, what: &str) -> Result<()> {
    if s >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("{what} needs s ≥ 0, got {s}")))
    }
}

/// Nonlinear diffusivity `m (s+ε)^(m-1)`, or `m (s+1)^(m-1)` for the
/// nondegenerate variant.
pub fn diffusivity(s: f64, p: &ModelParams) -> Result<f64> {
    check_nonnegative(s, "diffusivity")?;
    Ok(diffusivity_unchecked(s, p.m, p.diffusion_shift()))
}

#[inline]
pub(crate) fn diffusivity_unchecked(s: f64, m: f64, shift: f64) -> f64 {
    if m == 1.0 {
        1.0
    } else {
        m * (s + shift).powf(m - 1.0)
    }
}

/// Saturated chemotactic sensitivity `s / (1 + ε s)`.
pub fn sensitivity(s: f64, eps: f64) -> Result<f64> {
    check_nonnegative(s, "sensitivity")?;
    Ok(sensitivity_unchecked(s, eps))
}

#[inline]
pub(crate) fn sensitivity_unchecked(s: f64, eps: f64) -> f64 {
    s / (1.0 + eps * s)
}

/// Softened consumption rate `f_ε(s) = log(1 + ε s) / ε`.
pub fn consumption_f(s: f64, eps: f64) -> Result<f64> {
    check_nonnegative(s, "consumption_f")?;
    if eps <= 0.0 {
        return Err(Error::Domain(format!("consumption_f needs ε > 0, got {eps}")));
    }
    Ok(consumption_unchecked(s, eps))
}

#[inline]
pub(crate) fn consumption_unchecked(s: f64, eps: f64) -> f64 {
    (eps * s).ln_1p() / eps
}

/// Derivative `1 / (1 + ε s)` of the consumption rate.
pub fn consumption_f_prime(s: f64, eps: f64) -> Result<f64> {
    check_nonnegative(s, "consumption_f_prime")?;
    Ok(1.0 / (1.0 + eps * s))
}

/// Approximates `(I + εA)^{-1} u` for the Stokes operator `A`: a
/// componentwise Helmholtz solve with no-slip walls followed by a discrete
/// Leray projection. `eps == 0` returns the input unchanged.
pub fn yosida_smooth(u: &VectorField, eps: f64, tol: f64, max_iters: usize) -> Result<VectorField> {
    if eps == 0.0 {
        return Ok(u.clone());
    }
    if eps < 0.0 {
        return Err(Error::Domain(format!("Yosida parameter must be ≥ 0, got {eps}")));
    }
    let smoothed = helmholtz_dirichlet(u, eps, tol, max_iters, "yosida helmholtz")?;
    leray_project(&smoothed, tol, max_iters, "yosida projection")
}

/// Solves `(I - alpha Δ) v = rhs` componentwise with no-slip walls.
pub(crate) fn helmholtz_dirichlet(
    rhs: &VectorField,
    alpha: f64,
    tol: f64,
    max_iters: usize,
    what: &str,
) -> Result<VectorField> {
    let grid = &rhs.grid;
    let mut out = rhs.clone();
    let opts = SolveOptions {
        tol,
        max_iters,
        mean_zero: false,
        jacobi: true,
    };
    for a in 0..grid.dim() {
        let op = FaceHelmholtz {
            grid,
            comp: a,
            alpha,
        };
        let mut b = rhs.components[a].clone();
        zero_boundary(grid, a, &mut b);
        let x = &mut out.components[a];
        x.copy_from_slice(&b);
        conjugate_gradient(&op, &b, x, &opts, what)?;
        zero_boundary(grid, a, x);
    }
    Ok(out)
}

fn zero_boundary(grid: &GridSpec, comp: usize, v: &mut [f64]) {
    for (fidx, x) in v.iter_mut().enumerate() {
        if grid.is_boundary_face(comp, grid.face_coords(comp, fidx)) {
            *x = 0.0;
        }
    }
}

/// Discrete Leray projection `v - ∇φ` with `Δφ = div v`, Neumann walls.
pub(crate) fn leray_project(
    v: &VectorField,
    tol: f64,
    max_iters: usize,
    what: &str,
) -> Result<VectorField> {
    let div = divergence(v);
    let sol = poisson_solve(&div, PoissonBc::NeumannMeanZero, tol, max_iters, None)
        .map_err(|e| relabel(e, what))?;
    let grad = gradient(&sol.phi);
    let mut out = v.clone();
    for (oc, gc) in out.components.iter_mut().zip(&grad.components) {
        for (o, g) in oc.iter_mut().zip(gc) {
            *o -= g;
        }
    }
    Ok(out)
}

fn relabel(e: Error, what: &str) -> Error {
    match e {
        Error::Numerical {
            residual,
            iterations,
            history,
            ..
        } => Error::Numerical {
            what: what.to_string(),
            residual,
            iterations,
            history,
        },
        other => other,
    }
}
