use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{divergence, GridSpec, ScalarField, VectorField};

/// Divergence level below which initial velocities count as solenoidal.
pub const INITIAL_DIVERGENCE_TOL: f64 = 1e-10;

/// Solution snapshot: density `n`, oxygen `c`, face velocity `u` and
/// pressure `p` at time `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub t: f64,
    pub n: ScalarField,
    pub c: ScalarField,
    pub u: VectorField,
    pub p: ScalarField,
    pub eps: f64,
}

impl State {
    pub fn grid(&self) -> &GridSpec {
        &self.n.grid
    }

    pub fn from_initial(init: &InitialData, eps: f64) -> Self {
        Self {
            t: 0.0,
            n: init.n0.clone(),
            c: init.c0.clone(),
            u: init.u0.clone(),
            p: ScalarField::zeros(&init.n0.grid),
            eps,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialData {
    pub n0: ScalarField,
    pub c0: ScalarField,
    pub u0: VectorField,
}

impl InitialData {
    pub fn new(n0: ScalarField, c0: ScalarField, u0: VectorField) -> Result<Self> {
        if n0.grid != c0.grid || n0.grid != u0.grid {
            return Err(Error::Input("initial fields live on different grids".into()));
        }
        if !(n0.min() > 0.0) {
            return Err(Error::Input(format!("n0 must be strictly positive (min {})", n0.min())));
        }
        if !(c0.min() > 0.0) {
            return Err(Error::Input(format!("c0 must be strictly positive (min {})", c0.min())));
        }
        if u0.boundary_normal_max() != 0.0 {
            return Err(Error::Input("u0 has nonzero normal component on the wall".into()));
        }
        let div = divergence(&u0).max_abs();
        if div > INITIAL_DIVERGENCE_TOL {
            return Err(Error::Input(format!("u0 is not divergence-free (max |div| = {div:e})")));
        }
        Ok(Self { n0, c0, u0 })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_nonpositive_and_divergent_data() {
        let g = GridSpec::unit_square(8).unwrap();
        let one = ScalarField::constant(&g, 1.0);
        let u = VectorField::zeros(&g);
        assert!(InitialData::new(one.clone(), one.clone(), u.clone()).is_ok());
        assert!(InitialData::new(ScalarField::zeros(&g), one.clone(), u.clone()).is_err());
        assert!(InitialData::new(one.clone(), ScalarField::zeros(&g), u.clone()).is_err());
        let mut bad = u.clone();
        let idx = g.face_index(0, [3, 3, 0]);
        bad.components[0][idx] = 1.0;
        assert!(InitialData::new(one.clone(), one, bad).is_err());
    }
}
