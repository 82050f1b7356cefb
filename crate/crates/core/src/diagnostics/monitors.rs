use serde::{Deserialize, Serialize};

use super::FunctionalRecord;
use crate::grid::{integrate_with, ScalarField};
use crate::regularization::ModelParams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonitorVerdict {
    pub name: String,
    pub passed: bool,
    pub observed: f64,
    pub bound: f64,
    pub tolerance: f64,
}

impl MonitorVerdict {
    pub fn new(name: &str, observed: f64, bound: f64, tolerance: f64) -> Self {
        let passed = observed.is_finite() && bound.is_finite() && observed <= bound * (1.0 + tolerance);
        Self {
            name: name.to_string(),
            passed,
            observed,
            bound,
            tolerance,
        }
    }
}

impl std::fmt::Display for MonitorVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {}: observed {:.6e}, bound {:.6e}, tol {:.1e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.observed,
            self.bound,
            self.tolerance
        )
    }
}

/// Right-endpoint time sum `Σ_k (t_k − t_{k−1}) q(t_k)`.
pub fn cumulative(history: &[FunctionalRecord], q: impl Fn(&FunctionalRecord) -> f64) -> f64 {
    history.windows(2).map(|w| (w[1].t - w[0].t) * q(&w[1])).sum()
}

fn first(history: &[FunctionalRecord]) -> &FunctionalRecord {
    history.first().expect("monitor needs a nonempty history")
}

/// Every `mass(t)` stays below `max(mass(0), κ|Ω|/μ)`.
pub fn check_mass_bound(history: &[FunctionalRecord], p: &ModelParams, volume: f64, tol: f64) -> MonitorVerdict {
    let m0 = first(history).mass;
    let bound = m0.max(p.kappa * volume / p.mu);
    let observed = history.iter().map(|r| r.mass).fold(f64::NEG_INFINITY, f64::max);
    MonitorVerdict::new("mass_bound", observed, bound, tol)
}

/// `cmax` never grows by more than `tol·cmax(0)` between samples. Reported
/// as `cmax(0) + largest increase` against `cmax(0)`.
pub fn check_c_monotone(history: &[FunctionalRecord], tol: f64) -> MonitorVerdict {
    let c0 = first(history).cmax;
    let rise = history
        .windows(2)
        .map(|w| w[1].cmax - w[0].cmax)
        .fold(0.0f64, f64::max);
    let rise = if history.iter().all(|r| r.cmax.is_finite()) { rise } else { f64::INFINITY };
    MonitorVerdict::new("c_monotone", c0 + rise, c0, tol)
}

/// `Σ dt ∫|∇c|² ≤ ½ ∫ c₀²`.
pub fn check_gradc_budget(history: &[FunctionalRecord], c0: &ScalarField, tol: f64) -> MonitorVerdict {
    let observed = cumulative(history, |r| r.grad_c_l2);
    let bound = 0.5 * integrate_with(c0, |v| v * v);
    MonitorVerdict::new("gradc_budget", observed, bound, tol)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub eps: f64,
    pub sup_energy: f64,
    pub diss_nlog: f64,
    pub diss_grad_m1: f64,
    pub hess_logc: f64,
    pub quart_c: f64,
    pub grad_u_l2: f64,
}

impl EnergyReport {
    pub fn from_history(eps: f64, history: &[FunctionalRecord]) -> Self {
        Self {
            eps,
            sup_energy: history.iter().map(|r| r.energy_f.abs()).fold(0.0, f64::max),
            diss_nlog: cumulative(history, |r| r.diss_nlog),
            diss_grad_m1: cumulative(history, |r| r.diss_grad_m1),
            hess_logc: cumulative(history, |r| r.hess_logc),
            quart_c: cumulative(history, |r| r.quart_c),
            grad_u_l2: cumulative(history, |r| r.grad_u_l2),
        }
    }

    pub fn all_finite(&self) -> bool {
        [
            self.sup_energy,
            self.diss_nlog,
            self.diss_grad_m1,
            self.hess_logc,
            self.quart_c,
            self.grad_u_l2,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// `sup_t |F_ε|` is finite for every ε and its spread across the sweep
/// (largest over smallest) stays below `factor`.
pub fn check_energy_boundedness(
    histories: &[(f64, Vec<FunctionalRecord>)],
    factor: f64,
    tol: f64,
) -> (MonitorVerdict, Vec<EnergyReport>) {
    let reports: Vec<EnergyReport> = histories
        .iter()
        .map(|(eps, h)| EnergyReport::from_history(*eps, h))
        .collect();
    let finite = reports.len() >= 2
        && reports.iter().all(EnergyReport::all_finite)
        && histories.iter().all(|(_, h)| h.iter().all(|r| r.energy_f.is_finite()));
    let observed = if finite {
        let hi = reports.iter().map(|r| r.sup_energy).fold(0.0, f64::max);
        let lo = reports.iter().map(|r| r.sup_energy).fold(f64::INFINITY, f64::min);
        if hi == 0.0 {
            1.0
        } else {
            hi / lo
        }
    } else {
        f64::INFINITY
    };
    (MonitorVerdict::new("energy_boundedness", observed, factor, tol), reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    fn rec(t: f64, mass: f64, cmax: f64) -> FunctionalRecord {
        FunctionalRecord {
            t,
            mass,
            cmax,
            ..FunctionalRecord::default()
        }
    }

    #[test]
    fn mass_bound_uses_logistic_level() {
        let p = ModelParams::default();
        let h = vec![rec(0.0, 0.2, 1.0), rec(1.0, 0.45, 1.0), rec(2.0, 0.499, 1.0)];
        let v = check_mass_bound(&h, &p, 1.0, 1e-2);
        assert_eq!(v.bound, 0.5);
        assert!(v.passed);
        let h = vec![rec(0.0, 0.2, 1.0), rec(1.0, 0.6, 1.0)];
        assert!(!check_mass_bound(&h, &p, 1.0, 1e-2).passed);
    }

    #[test]
    fn mass_bound_without_growth_is_initial_mass() {
        let p = ModelParams {
            kappa: 0.0,
            ..ModelParams::default()
        };
        let h = vec![rec(0.0, 2.0, 1.0), rec(1.0, 1.5, 1.0)];
        let v = check_mass_bound(&h, &p, 1.0, 0.0);
        assert_eq!(v.bound, 2.0);
        assert!(v.passed);
    }

    #[test]
    fn c_monotone_detects_growth() {
        let h = vec![rec(0.0, 1.0, 1.0), rec(1.0, 1.0, 0.9), rec(2.0, 1.0, 0.95)];
        assert!(!check_c_monotone(&h, 1e-8).passed);
        assert!(check_c_monotone(&h, 0.06).passed);
        let h = vec![rec(0.0, 1.0, 1.0), rec(1.0, 1.0, 1.0)];
        assert!(check_c_monotone(&h, 0.0).passed);
    }

    #[test]
    fn budget_for_constant_oxygen() {
        let g = GridSpec::unit_square(4).unwrap();
        let c0 = ScalarField::constant(&g, 2.0);
        let h = vec![rec(0.0, 1.0, 2.0), rec(1.0, 1.0, 2.0)];
        let v = check_gradc_budget(&h, &c0, 0.05);
        assert_eq!(v.observed, 0.0);
        assert!((v.bound - 2.0).abs() < 1e-15);
        assert!(v.passed);
    }

    #[test]
    fn energy_spread_and_blow_up() {
        let mk = |e: f64| {
            vec![
                FunctionalRecord { t: 0.0, energy_f: e, ..FunctionalRecord::default() },
                FunctionalRecord { t: 1.0, energy_f: 0.5 * e, ..FunctionalRecord::default() },
            ]
        };
        let (v, reports) = check_energy_boundedness(&[(0.1, mk(1.0)), (0.01, mk(1.5))], 2.0, 0.0);
        assert!(v.passed);
        assert_eq!(reports.len(), 2);
        assert!((v.observed - 1.5).abs() < 1e-15);
        let (v, _) = check_energy_boundedness(&[(0.1, mk(1.0)), (0.01, mk(f64::NAN))], 2.0, 0.0);
        assert!(!v.passed);
        let (v, _) = check_energy_boundedness(&[(0.1, mk(1.0))], 2.0, 0.0);
        assert!(!v.passed);
    }
}
