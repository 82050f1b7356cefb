//! Functionals of the a-priori estimate ladder, evaluated on a state, plus
//! the monitors that check their discrete analogues along a run and the
//! weak-form residual checker.

mod monitors;
mod weak;

pub use monitors::{
    check_c_monotone, check_energy_boundedness, check_gradc_budget, check_mass_bound, cumulative,
    EnergyReport, MonitorVerdict,
};
pub use weak::{
    weak_residual, ScalarTestFn, SolenoidalTestFn, TestFunctionSpec, WeakResidual, WeakResidualNorms,
};

use serde::{Deserialize, Serialize};

use crate::grid::{cell_gradient, divergence, norm2, pairwise_sum, vector_laplacian_dirichlet, GridSpec, ScalarField};
use crate::regularization::ModelParams;
use crate::state::State;

/// Default singularity floor for logarithms and denominators.
pub const DEFAULT_FLOOR: f64 = 1e-12;

/// One time-stamped row of monitored functionals. Field order is the CSV
/// column order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FunctionalRecord {
    pub t: f64,
    pub mass: f64,
    pub l2n: f64,
    pub cmax: f64,
    pub grad_c_l2: f64,
    pub ent_n: f64,
    pub fisher_c: f64,
    pub kin_u: f64,
    pub energy_f: f64,
    pub diss_nlog: f64,
    pub diss_grad_m1: f64,
    pub diss_grad_m1_eps: f64,
    pub hess_logc: f64,
    pub quart_c: f64,
    pub grad_u_l2: f64,
    pub grad_m_half: f64,
    pub pow_m: f64,
    pub pow_m1: f64,
    pub grad_2m3: f64,
    pub grad_2m4: f64,
    pub grad_nm_43: f64,
    pub div_u_max: f64,
    pub nmax: f64,
    pub k_const: f64,
    /// Cells where `n` or `c` fell below the floor. Not a CSV column.
    #[serde(skip)]
    pub floor_hits: usize,
}

/// CSV header, one name per [`FunctionalRecord`] column.
pub const CSV_COLUMNS: [&str; 24] = [
    "t",
    "mass",
    "l2n",
    "cmax",
    "grad_c_l2",
    "ent_n",
    "fisher_c",
    "kin_u",
    "energy_F",
    "diss_nlog",
    "diss_grad_m1",
    "diss_grad_m1_eps",
    "hess_logc",
    "quart_c",
    "grad_u_l2",
    "grad_m_half",
    "pow_m",
    "pow_m1",
    "grad_2m3",
    "grad_2m4",
    "grad_nm_43",
    "div_u_max",
    "nmax",
    "K_const",
];

impl FunctionalRecord {
    pub fn values(&self) -> [f64; 24] {
        [
            self.t,
            self.mass,
            self.l2n,
            self.cmax,
            self.grad_c_l2,
            self.ent_n,
            self.fisher_c,
            self.kin_u,
            self.energy_f,
            self.diss_nlog,
            self.diss_grad_m1,
            self.diss_grad_m1_eps,
            self.hess_logc,
            self.quart_c,
            self.grad_u_l2,
            self.grad_m_half,
            self.pow_m,
            self.pow_m1,
            self.grad_2m3,
            self.grad_2m4,
            self.grad_nm_43,
            self.div_u_max,
            self.nmax,
            self.k_const,
        ]
    }

    pub fn from_values(v: &[f64; 24]) -> Self {
        Self {
            t: v[0],
            mass: v[1],
            l2n: v[2],
            cmax: v[3],
            grad_c_l2: v[4],
            ent_n: v[5],
            fisher_c: v[6],
            kin_u: v[7],
            energy_f: v[8],
            diss_nlog: v[9],
            diss_grad_m1: v[10],
            diss_grad_m1_eps: v[11],
            hess_logc: v[12],
            quart_c: v[13],
            grad_u_l2: v[14],
            grad_m_half: v[15],
            pow_m: v[16],
            pow_m1: v[17],
            grad_2m3: v[18],
            grad_2m4: v[19],
            grad_nm_43: v[20],
            div_u_max: v[21],
            nmax: v[22],
            k_const: v[23],
            floor_hits: 0,
        }
    }

    pub fn all_finite(&self) -> bool {
        self.values().iter().all(|v| v.is_finite())
    }
}

#[inline]
fn xlogx(s: f64, floor: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else {
        s * s.max(floor).ln()
    }
}

fn integral(grid: &GridSpec, vals: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = vals.collect();
    pairwise_sum(&v) * grid.cell_volume()
}

/// Central difference along `axis` with Neumann ghost reflection.
fn central_diff(grid: &GridSpec, f: &[f64], axis: usize) -> Vec<f64> {
    let h = grid.spacing(axis);
    let stride = grid.cell_stride(axis);
    let n = grid.cells()[axis];
    (0..grid.num_cells())
        .map(|idx| {
            let i = grid.cell_coords(idx)[axis];
            let up = if i + 1 < n { f[idx + stride] } else { f[idx] };
            let dn = if i > 0 { f[idx - stride] } else { f[idx] };
            (up - dn) / (2.0 * h)
        })
        .collect()
}

/// `∫ c |D² log c|²` with the Hessian from nested central differences of
/// `log(max(c, floor))`.
fn hessian_log_term(c: &ScalarField, floor: f64) -> f64 {
    let g = &c.grid;
    let logc: Vec<f64> = c.values.iter().map(|v| v.max(floor).ln()).collect();
    let first: Vec<Vec<f64>> = (0..g.dim()).map(|a| central_diff(g, &logc, a)).collect();
    let mut h2 = vec![0.0; g.num_cells()];
    for fa in &first {
        for b in 0..g.dim() {
            let second = central_diff(g, fa, b);
            for (acc, s) in h2.iter_mut().zip(&second) {
                *acc += s * s;
            }
        }
    }
    integral(g, c.values.iter().zip(&h2).map(|(cv, h)| cv.max(0.0) * h))
}

/// `∫|∇u|²` as the discrete Dirichlet energy `-⟨u, Δu⟩`.
fn dirichlet_energy(state: &State) -> f64 {
    let lap = vector_laplacian_dirichlet(&state.u);
    -state.u.dot(&lap)
}

pub fn compute_record(state: &State, p: &ModelParams, k_const: f64, floor: f64) -> FunctionalRecord {
    let g = state.grid();
    let eps = p.eps;
    let m = p.m;
    let n: Vec<f64> = state.n.values.iter().map(|v| v.max(0.0)).collect();
    let c = &state.c.values;

    let floor_hits = n.iter().zip(c).filter(|(nv, cv)| **nv < floor || **cv < floor).count();

    let grad_c = cell_gradient(&state.c);
    let grad_n = cell_gradient(&state.n);
    let q = state.n.map(|v| (v.max(0.0) + eps).powf(0.5 * (m + 1.0)));
    let grad_q = cell_gradient(&q);
    let grad_half = cell_gradient(&state.n.map(|v| (v.max(0.0) + eps).powf(0.5 * m)));
    let grad_pm = cell_gradient(&state.n.map(|v| (v.max(0.0) + eps).powf(m)));

    let mass = integral(g, n.iter().copied());
    let l2n = integral(g, n.iter().map(|v| v * v));
    let grad_c_l2 = integral(g, grad_c.iter().map(norm2));
    let ent_n = integral(g, n.iter().map(|&v| xlogx(v, floor)));
    let fisher_c = integral(g, grad_c.iter().zip(c).map(|(gc, cv)| norm2(gc) / cv.max(floor)));
    let kin_u = integral(g, state.u.cell_average().iter().map(norm2));
    let energy_f = ent_n + 0.5 * p.chi * fisher_c + k_const * p.chi * kin_u;
    let diss_nlog = integral(g, n.iter().map(|&v| v * xlogx(v, floor)));
    let diss_grad_m1 = integral(g, grad_q.iter().zip(&n).map(|(gq, nv)| norm2(gq) / (nv + floor)));
    let diss_grad_m1_eps = integral(g, grad_q.iter().zip(&n).map(|(gq, nv)| norm2(gq) / (nv + eps)));
    let hess_logc = hessian_log_term(&state.c, floor);
    let quart_c = integral(
        g,
        grad_c.iter().zip(c).map(|(gc, cv)| {
            let s = norm2(gc);
            s * s / cv.max(floor).powi(3)
        }),
    );
    let grad_u_l2 = dirichlet_energy(state);
    let grad_m_half = integral(g, grad_half.iter().map(norm2));
    let pow_m = integral(g, n.iter().map(|v| (v + eps).powf(m)));
    let pow_m1 = integral(g, n.iter().map(|v| (v + eps).powf(m - 1.0)));
    let grad_2m3 = integral(g, grad_n.iter().zip(&n).map(|(gn, v)| (v + eps).powf(2.0 * m - 3.0) * norm2(gn)));
    let grad_2m4 = integral(g, grad_n.iter().zip(&n).map(|(gn, v)| (v + eps).powf(2.0 * m - 4.0) * norm2(gn)));
    let grad_nm_43 = integral(g, grad_pm.iter().map(|gp| norm2(gp).powf(2.0 / 3.0)));
    let div_u_max = divergence(&state.u).max_abs();
    let nmax = state.n.max();
    let cmax = state.c.max();

    if floor_hits > 0 {
        log::trace!("floor active in {floor_hits} cells at t = {}", state.t);
    }

    FunctionalRecord {
        t: state.t,
        mass,
        l2n,
        cmax,
        grad_c_l2,
        ent_n,
        fisher_c,
        kin_u,
        energy_f,
        diss_nlog,
        diss_grad_m1,
        diss_grad_m1_eps,
        hess_logc,
        quart_c,
        grad_u_l2,
        grad_m_half,
        pow_m,
        pow_m1,
        grad_2m3,
        grad_2m4,
        grad_nm_43,
        div_u_max,
        nmax,
        k_const,
        floor_hits,
    }
}

/// Second route to `diss_grad_m1` through the chain rule:
/// `((m+1)/2)² (n+ε)^(m-1) |∇n|² / (n + floor)`.
pub fn diss_grad_m1_chain_rule(state: &State, p: &ModelParams, floor: f64) -> f64 {
    let g = state.grid();
    let k = 0.25 * (p.m + 1.0) * (p.m + 1.0);
    let grad_n = cell_gradient(&state.n);
    integral(
        g,
        grad_n.iter().zip(&state.n.values).map(|(gn, v)| {
            let v = v.max(0.0);
            k * (v + p.eps).powf(p.m - 1.0) * norm2(gn) / (v + floor)
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::VectorField;

    fn state(n: ScalarField, c: ScalarField) -> State {
        let g = n.grid.clone();
        State {
            t: 0.0,
            n,
            c,
            u: VectorField::zeros(&g),
            p: ScalarField::zeros(&g),
            eps: 0.01,
        }
    }

    #[test]
    fn uniform_unit_state_has_zero_energy() {
        let g = GridSpec::unit_square(16).unwrap();
        let s = state(ScalarField::constant(&g, 1.0), ScalarField::constant(&g, 1.0));
        let r = compute_record(&s, &ModelParams::default(), 1.0, DEFAULT_FLOOR);
        assert_eq!(r.ent_n, 0.0);
        assert_eq!(r.fisher_c, 0.0);
        assert_eq!(r.kin_u, 0.0);
        assert_eq!(r.energy_f, 0.0);
        assert!((r.mass - 1.0).abs() < 1e-14);
        assert!(r.all_finite());
    }

    #[test]
    fn entropy_of_e() {
        let g = GridSpec::unit_square(16).unwrap();
        let e = std::f64::consts::E;
        let s = state(ScalarField::constant(&g, e), ScalarField::constant(&g, 1.0));
        let r = compute_record(&s, &ModelParams::default(), 1.0, DEFAULT_FLOOR);
        assert!((r.ent_n - e).abs() < 1e-12);
    }

    #[test]
    fn zero_density_is_handled_by_floor() {
        let g = GridSpec::unit_square(8).unwrap();
        let s = state(ScalarField::zeros(&g), ScalarField::zeros(&g));
        let r = compute_record(&s, &ModelParams::default(), 1.0, DEFAULT_FLOOR);
        assert!(r.all_finite());
        assert_eq!(r.ent_n, 0.0);
        assert_eq!(r.floor_hits, 64);
    }

    fn random_smooth(g: &GridSpec, seed: u64) -> ScalarField {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let modes: Vec<(f64, f64, f64, f64)> = (0..4)
            .map(|_| (rng.gen_range(-0.2..0.2), rng.gen_range(0.5..2.5), rng.gen_range(0.5..2.5), rng.gen_range(0.0..6.0)))
            .collect();
        ScalarField::from_fn(g, |x| {
            1.0 + modes
                .iter()
                .map(|(a, kx, ky, ph)| a * (kx * x[0] + ph).cos() * (ky * x[1]).cos())
                .sum::<f64>()
        })
    }

    #[test]
    fn half_power_gradient_matches_chain_rule_for_unit_exponent() {
        let g = GridSpec::unit_square(128).unwrap();
        let n = random_smooth(&g, 7);
        let s = state(n.clone(), ScalarField::constant(&g, 1.0));
        let p = ModelParams {
            m: 1.0,
            ..ModelParams::default()
        };
        let r = compute_record(&s, &p, 1.0, DEFAULT_FLOOR);
        let grad = cell_gradient(&n);
        let other = integral(&g, grad.iter().zip(&n.values).map(|(gn, v)| 0.25 * norm2(gn) / (v + p.eps)));
        assert!((r.grad_m_half - other).abs() <= 1e-3 * other, "{} {}", r.grad_m_half, other);
    }

    #[test]
    fn eps_dissipation_is_dominated_by_floor_dissipation() {
        let g = GridSpec::unit_square(32).unwrap();
        let s = state(random_smooth(&g, 3), ScalarField::constant(&g, 1.0));
        let r = compute_record(&s, &ModelParams::default(), 1.0, DEFAULT_FLOOR);
        assert!(r.diss_grad_m1_eps <= r.diss_grad_m1);
    }
}
