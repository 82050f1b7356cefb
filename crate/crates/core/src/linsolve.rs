//! Preconditioned conjugate gradients for the symmetric positive
//! (semi-)definite systems that arise in every implicit sub-step.

use crate::error::{Error, Result};

pub trait LinearOperator {
    fn len(&self) -> usize;

    fn apply(&self, x: &[f64], y: &mut [f64]);

    /// Diagonal of the operator, used for Jacobi preconditioning.
    fn diagonal(&self) -> Option<Vec<f64>> {
        None
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SolveOptions {
    /// Target for the max-norm of the true residual `b - A x`.
    pub tol: f64,
    pub max_iters: usize,
    /// Treat the operator as singular with constant null space: iterates and
    /// residuals are kept mean-zero.
    pub mean_zero: bool,
    pub jacobi: bool,
}

#[derive(Clone, Debug, Default)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
    pub history: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    const BLOCK: usize = 256;
    if a.len() <= BLOCK {
        let mut s = 0.0;
        for (x, y) in a.iter().zip(b) {
            s += x * y;
        }
        s
    } else {
        let mid = a.len() / 2;
        dot(&a[..mid], &b[..mid]) + dot(&a[mid..], &b[mid..])
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn remove_mean(v: &mut [f64]) {
    let mean = crate::grid::pairwise_sum(v) / v.len() as f64;
    for x in v {
        *x -= mean;
    }
}

/// Solves `A x = b` starting from the contents of `x`.
pub fn conjugate_gradient(
    op: &dyn LinearOperator,
    b: &[f64],
    x: &mut [f64],
    opts: &SolveOptions,
    what: &str,
) -> Result<SolveStats> {
    let n = op.len();
    assert_eq!(b.len(), n);
    assert_eq!(x.len(), n);

    let inv_diag: Option<Vec<f64>> = if opts.jacobi {
        op.diagonal()
            .map(|d| d.into_iter().map(|v| if v > 0.0 { 1.0 / v } else { 1.0 }).collect())
    } else {
        None
    };

    let mut r = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut ap = vec![0.0; n];
    let mut stats = SolveStats::default();

    if opts.mean_zero {
        remove_mean(x);
    }

    // Restart loop: the recursive residual drifts from the true one, so every
    // apparent convergence is confirmed against b - A x.
    let mut restarts = 0;
    loop {
        op.apply(x, &mut ap);
        for i in 0..n {
            r[i] = b[i] - ap[i];
        }
        if opts.mean_zero {
            remove_mean(&mut r);
        }
        let res = max_abs(&r);
        stats.residual = res;
        stats.history.push(res);
        if res <= opts.tol {
            return Ok(stats);
        }
        if stats.iterations >= opts.max_iters || restarts > 20 {
            return Err(Error::Numerical {
                what: what.to_string(),
                residual: res,
                iterations: stats.iterations,
                history: stats.history,
            });
        }
        restarts += 1;

        precondition(&inv_diag, &r, &mut z, opts.mean_zero);
        p.copy_from_slice(&z);
        let mut rz = dot(&r, &z);

        while stats.iterations < opts.max_iters {
            op.apply(&p, &mut ap);
            let pap = dot(&p, &ap);
            if pap <= 0.0 || !pap.is_finite() {
                break;
            }
            let alpha = rz / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            stats.iterations += 1;
            let res = max_abs(&r);
            stats.history.push(res);
            if !res.is_finite() {
                return Err(Error::Numerical {
                    what: what.to_string(),
                    residual: res,
                    iterations: stats.iterations,
                    history: stats.history,
                });
            }
            if res <= 0.5 * opts.tol {
                break;
            }
            precondition(&inv_diag, &r, &mut z, opts.mean_zero);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        if opts.mean_zero {
            remove_mean(x);
        }
    }
}

fn precondition(inv_diag: &Option<Vec<f64>>, r: &[f64], z: &mut [f64], mean_zero: bool) {
    match inv_diag {
        Some(d) => {
            for i in 0..r.len() {
                z[i] = d[i] * r[i];
            }
            if mean_zero {
                remove_mean(z);
            }
        }
        None => z.copy_from_slice(r),
    }
}

/// `x - dt div(coeff grad x)` with zero-flux walls.
pub(crate) struct NeumannDiffusion<'a> {
    pub grid: &'a crate::grid::GridSpec,
    pub coeff: Option<&'a crate::grid::VectorField>,
    pub dt: f64,
}

impl LinearOperator for NeumannDiffusion<'_> {
    fn len(&self) -> usize {
        self.grid.num_cells()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        crate::grid::apply_neumann_operator(self.grid, self.coeff, x, y);
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi = xi - self.dt * *yi;
        }
    }

    fn diagonal(&self) -> Option<Vec<f64>> {
        let g = self.grid;
        let mut d = vec![1.0; g.num_cells()];
        for (idx, di) in d.iter_mut().enumerate() {
            let i = g.cell_coords(idx);
            for a in 0..g.dim() {
                let h2 = g.spacing(a) * g.spacing(a);
                let flo = g.face_index(a, i);
                let fhi = flo + g.face_stride(a, a);
                let (clo, chi) = match self.coeff {
                    Some(c) => (c.components[a][flo], c.components[a][fhi]),
                    None => (1.0, 1.0),
                };
                if i[a] > 0 {
                    *di += self.dt * clo / h2;
                }
                if i[a] + 1 < g.cells()[a] {
                    *di += self.dt * chi / h2;
                }
            }
        }
        Some(d)
    }
}

/// `-Δ` with homogeneous Neumann closure (singular, constant null space).
pub(crate) struct NegNeumannLaplacian<'a>(pub &'a crate::grid::GridSpec);

impl LinearOperator for NegNeumannLaplacian<'_> {
    fn len(&self) -> usize {
        self.0.num_cells()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        crate::grid::apply_neumann_operator(self.0, None, x, y);
        for v in y.iter_mut() {
            *v = -*v;
        }
    }
}

/// `-Δ` with homogeneous Dirichlet closure on cell-centred values.
pub(crate) struct NegDirichletLaplacian<'a>(pub &'a crate::grid::GridSpec);

impl LinearOperator for NegDirichletLaplacian<'_> {
    fn len(&self) -> usize {
        self.0.num_cells()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        crate::grid::apply_dirichlet_cell_operator(self.0, x, y);
        for v in y.iter_mut() {
            *v = -*v;
        }
    }
}

/// `x - alpha Δ x` for one velocity component with no-slip walls. Boundary
/// faces are identity rows, decoupled from the interior.
pub(crate) struct FaceHelmholtz<'a> {
    pub grid: &'a crate::grid::GridSpec,
    pub comp: usize,
    pub alpha: f64,
}

impl LinearOperator for FaceHelmholtz<'_> {
    fn len(&self) -> usize {
        self.grid.num_faces(self.comp)
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        crate::grid::apply_dirichlet_face_operator(self.grid, self.comp, x, y);
        let g = self.grid;
        for (fidx, (yi, xi)) in y.iter_mut().zip(x).enumerate() {
            if g.is_boundary_face(self.comp, g.face_coords(self.comp, fidx)) {
                *yi = *xi;
            } else {
                *yi = xi - self.alpha * *yi;
            }
        }
    }

    fn diagonal(&self) -> Option<Vec<f64>> {
        let g = self.grid;
        let mut diag_lap = 0.0;
        for a in 0..g.dim() {
            diag_lap += 2.0 / (g.spacing(a) * g.spacing(a));
        }
        // Wall-adjacent rows pick up an extra 1/h² from the antireflected
        // ghost; the interior value is a close enough preconditioner.
        Some(
            (0..self.len())
                .map(|fidx| {
                    if g.is_boundary_face(self.comp, g.face_coords(self.comp, fidx)) {
                        1.0
                    } else {
                        1.0 + self.alpha * diag_lap
                    }
                })
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Tridiag(usize);

    impl LinearOperator for Tridiag {
        fn len(&self) -> usize {
            self.0
        }
        fn apply(&self, x: &[f64], y: &mut [f64]) {
            let n = self.0;
            for i in 0..n {
                let mut v = 3.0 * x[i];
                if i > 0 {
                    v -= x[i - 1];
                }
                if i + 1 < n {
                    v -= x[i + 1];
                }
                y[i] = v;
            }
        }
        fn diagonal(&self) -> Option<Vec<f64>> {
            Some(vec![3.0; self.0])
        }
    }

    #[test]
    fn solves_spd_tridiagonal() {
        let op = Tridiag(50);
        let want: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut b = vec![0.0; 50];
        op.apply(&want, &mut b);
        let mut x = vec![0.0; 50];
        let opts = SolveOptions {
            tol: 1e-13,
            max_iters: 500,
            mean_zero: false,
            jacobi: true,
        };
        let stats = conjugate_gradient(&op, &b, &mut x, &opts, "test").unwrap();
        assert!(stats.residual <= 1e-13);
        for (a, w) in x.iter().zip(&want) {
            assert!((a - w).abs() < 1e-12);
        }
    }

    #[test]
    fn reports_non_convergence() {
        let op = Tridiag(200);
        let b = vec![1.0; 200];
        let mut x = vec![0.0; 200];
        let opts = SolveOptions {
            tol: 1e-14,
            max_iters: 2,
            mean_zero: false,
            jacobi: false,
        };
        match conjugate_gradient(&op, &b, &mut x, &opts, "capped") {
            Err(Error::Numerical { iterations, history, .. }) => {
                assert_eq!(iterations, 2);
                assert!(!history.is_empty());
            }
            other => panic!("expected numerical failure, got {other:?}"),
        }
    }
}
