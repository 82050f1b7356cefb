//! Uniform MAC grids on a box, cell/face fields and the discrete operators
//! with the boundary closures of the model: homogeneous Neumann for the
//! scalars and no-slip Dirichlet for the velocity.
//!
//! Scalars live at cell centres. Component `a` of a vector field lives on the
//! faces normal to axis `a`, so along that axis it has one more entry than
//! there are cells. Faces on the boundary carry the normal component and are
//! held at zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest admissible cell count along any axis.
pub const MIN_CELLS: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    dim: usize,
    cells: [usize; 3],
    lengths: [f64; 3],
}

impl GridSpec {
    pub fn new(cells: &[usize], lengths: &[f64]) -> Result<Self> {
        let dim = cells.len();
        if !(2..=3).contains(&dim) {
            return Err(Error::Input(format!("grid dimension must be 2 or 3, got {dim}")));
        }
        if lengths.len() != dim {
            return Err(Error::Input(format!(
                "grid has {dim} cell counts but {} lengths",
                lengths.len()
            )));
        }
        let mut c = [1usize; 3];
        let mut l = [1.0f64; 3];
        for a in 0..dim {
            if cells[a] < MIN_CELLS {
                return Err(Error::Input(format!(
                    "axis {a} has {} cells, at least {MIN_CELLS} required",
                    cells[a]
                )));
            }
            if !(lengths[a].is_finite() && lengths[a] > 0.0) {
                return Err(Error::Input(format!("axis {a} length must be positive")));
            }
            c[a] = cells[a];
            l[a] = lengths[a];
        }
        Ok(Self {
            dim,
            cells: c,
            lengths: l,
        })
    }

    /// Unit square with `n` cells per side.
    pub fn unit_square(n: usize) -> Result<Self> {
        Self::new(&[n, n], &[1.0, 1.0])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells[..self.dim]
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths[..self.dim]
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.lengths[axis] / self.cells[axis] as f64
    }

    pub fn min_spacing(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing(a)).fold(f64::INFINITY, f64::min)
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing(a)).product()
    }

    pub fn domain_volume(&self) -> f64 {
        self.lengths().iter().product()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.iter().product()
    }

    /// Per-axis extents of the face array holding component `axis`.
    pub fn face_shape(&self, axis: usize) -> [usize; 3] {
        let mut s = self.cells;
        s[axis] += 1;
        s
    }

    pub fn num_faces(&self, axis: usize) -> usize {
        self.face_shape(axis).iter().product()
    }

    #[inline]
    pub fn cell_index(&self, i: [usize; 3]) -> usize {
        i[0] + self.cells[0] * (i[1] + self.cells[1] * i[2])
    }

    #[inline]
    pub fn cell_coords(&self, idx: usize) -> [usize; 3] {
        let nx = self.cells[0];
        let ny = self.cells[1];
        [idx % nx, (idx / nx) % ny, idx / (nx * ny)]
    }

    #[inline]
    pub fn face_index(&self, axis: usize, i: [usize; 3]) -> usize {
        let s = self.face_shape(axis);
        i[0] + s[0] * (i[1] + s[1] * i[2])
    }

    #[inline]
    pub fn face_coords(&self, axis: usize, idx: usize) -> [usize; 3] {
        let s = self.face_shape(axis);
        [idx % s[0], (idx / s[0]) % s[1], idx / (s[0] * s[1])]
    }

    /// True for faces of component `axis` that lie on the boundary.
    #[inline]
    pub fn is_boundary_face(&self, axis: usize, i: [usize; 3]) -> bool {
        i[axis] == 0 || i[axis] == self.cells[axis]
    }

    pub fn cell_center(&self, idx: usize) -> [f64; 3] {
        let i = self.cell_coords(idx);
        let mut x = [0.0; 3];
        for a in 0..self.dim {
            x[a] = (i[a] as f64 + 0.5) * self.spacing(a);
        }
        x
    }

    pub fn face_center(&self, axis: usize, idx: usize) -> [f64; 3] {
        let i = self.face_coords(axis, idx);
        let mut x = [0.0; 3];
        for a in 0..self.dim {
            let off = if a == axis { 0.0 } else { 0.5 };
            x[a] = (i[a] as f64 + off) * self.spacing(a);
        }
        x
    }

    /// Offset of one cell step along `axis` in the cell index space.
    #[inline]
    pub fn cell_stride(&self, axis: usize) -> usize {
        match axis {
            0 => 1,
            1 => self.cells[0],
            _ => self.cells[0] * self.cells[1],
        }
    }

    #[inline]
    pub fn face_stride(&self, comp: usize, axis: usize) -> usize {
        let s = self.face_shape(comp);
        match axis {
            0 => 1,
            1 => s[0],
            _ => s[0] * s[1],
        }
    }

    /// Same grid with every cell count multiplied by `factor`.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        let cells: Vec<usize> = self.cells().iter().map(|c| c * factor).collect();
        Self::new(&cells, self.lengths())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: &GridSpec) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &GridSpec, value: f64) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![value; grid.num_cells()],
        }
    }

    pub fn from_values(grid: &GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.num_cells() {
            return Err(Error::Input(format!(
                "scalar field needs {} values, got {}",
                grid.num_cells(),
                values.len()
            )));
        }
        Ok(Self {
            grid: grid.clone(),
            values,
        })
    }

    /// Samples `f` at every cell centre.
    pub fn from_fn(grid: &GridSpec, f: impl Fn([f64; 3]) -> f64) -> Self {
        let values = (0..grid.num_cells()).map(|i| f(grid.cell_center(i))).collect();
        Self {
            grid: grid.clone(),
            values,
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VectorField {
    pub grid: GridSpec,
    pub components: Vec<Vec<f64>>,
}

impl VectorField {
    pub fn zeros(grid: &GridSpec) -> Self {
        let components = (0..grid.dim()).map(|a| vec![0.0; grid.num_faces(a)]).collect();
        Self {
            grid: grid.clone(),
            components,
        }
    }

    /// Samples `f` at face centres; component `a` of the result is `f(x)[a]`.
    /// Boundary normal faces are set to zero regardless of `f`.
    pub fn from_fn(grid: &GridSpec, f: impl Fn([f64; 3]) -> [f64; 3]) -> Self {
        let mut v = Self::zeros(grid);
        for a in 0..grid.dim() {
            for (idx, val) in v.components[a].iter_mut().enumerate() {
                if !grid.is_boundary_face(a, grid.face_coords(a, idx)) {
                    *val = f(grid.face_center(a, idx))[a];
                }
            }
        }
        v
    }

    pub fn from_components(grid: &GridSpec, components: Vec<Vec<f64>>) -> Result<Self> {
        if components.len() != grid.dim() {
            return Err(Error::Input("wrong number of vector components".into()));
        }
        for (a, c) in components.iter().enumerate() {
            if c.len() != grid.num_faces(a) {
                return Err(Error::Input(format!(
                    "component {a} needs {} face values, got {}",
                    grid.num_faces(a),
                    c.len()
                )));
            }
        }
        Ok(Self {
            grid: grid.clone(),
            components,
        })
    }

    /// Largest magnitude on boundary normal faces (zero for admissible fields).
    pub fn boundary_normal_max(&self) -> f64 {
        let g = &self.grid;
        let mut m = 0.0f64;
        for a in 0..g.dim() {
            for (idx, v) in self.components[a].iter().enumerate() {
                if g.is_boundary_face(a, g.face_coords(a, idx)) {
                    m = m.max(v.abs());
                }
            }
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        self.components
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scale(&mut self, s: f64) {
        for c in &mut self.components {
            for v in c {
                *v *= s;
            }
        }
    }

    /// Discrete L² inner product with face weights equal to the cell volume.
    pub fn dot(&self, other: &VectorField) -> f64 {
        let vol = self.grid.cell_volume();
        let parts: Vec<f64> = self
            .components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| {
                let prod: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
                pairwise_sum(&prod)
            })
            .collect();
        pairwise_sum(&parts) * vol
    }

    pub fn l2_norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Velocity averaged to cell centres, one vector per cell.
    pub fn cell_average(&self) -> Vec<[f64; 3]> {
        let g = &self.grid;
        let mut out = vec![[0.0; 3]; g.num_cells()];
        for (idx, o) in out.iter_mut().enumerate() {
            let i = g.cell_coords(idx);
            for a in 0..g.dim() {
                let lo = g.face_index(a, i);
                let hi = lo + g.face_stride(a, a);
                o[a] = 0.5 * (self.components[a][lo] + self.components[a][hi]);
            }
        }
        out
    }
}

/// Pairwise summation with a fixed splitting, so the result depends only on
/// the input order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 128;
    if values.len() <= BLOCK {
        let mut s = 0.0;
        for v in values {
            s += v;
        }
        s
    } else {
        let mid = values.len() / 2;
        pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
    }
}

/// Midpoint-rule integral over the domain.
pub fn integrate(f: &ScalarField) -> f64 {
    pairwise_sum(&f.values) * f.grid.cell_volume()
}

/// Midpoint-rule integral of `g(value)` over the domain.
pub fn integrate_with(f: &ScalarField, g: impl Fn(f64) -> f64) -> f64 {
    let vals: Vec<f64> = f.values.iter().map(|&v| g(v)).collect();
    pairwise_sum(&vals) * f.grid.cell_volume()
}

/// Integral of cell-centred samples on `grid`.
pub fn integrate_values(grid: &GridSpec, values: &[f64]) -> f64 {
    pairwise_sum(values) * grid.cell_volume()
}

/// Face differences `(f[i] - f[i-1]) / h`. Boundary faces get zero, which is
/// the homogeneous Neumann ghost rule.
pub fn gradient(f: &ScalarField) -> VectorField {
    let g = &f.grid;
    let mut out = VectorField::zeros(g);
    for a in 0..g.dim() {
        let h = g.spacing(a);
        let stride = g.cell_stride(a);
        let comp = &mut out.components[a];
        for (fidx, val) in comp.iter_mut().enumerate() {
            let i = g.face_coords(a, fidx);
            if g.is_boundary_face(a, i) {
                continue;
            }
            let hi = g.cell_index(i);
            *val = (f.values[hi] - f.values[hi - stride]) / h;
        }
    }
    out
}

/// MAC divergence at cell centres.
pub fn divergence(v: &VectorField) -> ScalarField {
    let g = &v.grid;
    let mut out = ScalarField::zeros(g);
    for (idx, o) in out.values.iter_mut().enumerate() {
        let i = g.cell_coords(idx);
        let mut s = 0.0;
        for a in 0..g.dim() {
            let lo = g.face_index(a, i);
            let hi = lo + g.face_stride(a, a);
            s += (v.components[a][hi] - v.components[a][lo]) / g.spacing(a);
        }
        *o = s;
    }
    out
}

/// `div(coeff * grad x)` with zero boundary flux, written into `out`.
/// `coeff = None` means unit coefficient.
pub(crate) fn apply_neumann_operator(
    grid: &GridSpec,
    coeff: Option<&VectorField>,
    x: &[f64],
    out: &mut [f64],
) {
    let dim = grid.dim();
    let inv_h2: Vec<f64> = (0..dim).map(|a| 1.0 / (grid.spacing(a) * grid.spacing(a))).collect();
    for (idx, o) in out.iter_mut().enumerate() {
        let i = grid.cell_coords(idx);
        let xi = x[idx];
        let mut s = 0.0;
        for a in 0..dim {
            let stride = grid.cell_stride(a);
            let flo = grid.face_index(a, i);
            let fhi = flo + grid.face_stride(a, a);
            let (dlo, dhi) = match coeff {
                Some(c) => (c.components[a][flo], c.components[a][fhi]),
                None => (1.0, 1.0),
            };
            let mut acc = 0.0;
            if i[a] + 1 < grid.cells[a] {
                acc += dhi * (x[idx + stride] - xi);
            }
            if i[a] > 0 {
                acc -= dlo * (xi - x[idx - stride]);
            }
            s += acc * inv_h2[a];
        }
        *o = s;
    }
}

/// Standard 5/7-point Laplacian with homogeneous Neumann closure (ghost
/// reflection across the boundary).
pub fn laplacian_neumann(f: &ScalarField) -> ScalarField {
    let mut out = ScalarField::zeros(&f.grid);
    apply_neumann_operator(&f.grid, None, &f.values, &mut out.values);
    out
}

/// Cell-centred Laplacian with homogeneous Dirichlet closure: the ghost value
/// is the antireflection about zero.
pub fn laplacian_dirichlet(f: &ScalarField) -> ScalarField {
    let mut out = ScalarField::zeros(&f.grid);
    apply_dirichlet_cell_operator(&f.grid, &f.values, &mut out.values);
    out
}

pub(crate) fn apply_dirichlet_cell_operator(grid: &GridSpec, x: &[f64], out: &mut [f64]) {
    let dim = grid.dim();
    for (idx, o) in out.iter_mut().enumerate() {
        let i = grid.cell_coords(idx);
        let xi = x[idx];
        let mut s = 0.0;
        for a in 0..dim {
            let h = grid.spacing(a);
            let stride = grid.cell_stride(a);
            let up = if i[a] + 1 < grid.cells[a] { x[idx + stride] } else { -xi };
            let dn = if i[a] > 0 { x[idx - stride] } else { -xi };
            s += (up - 2.0 * xi + dn) / (h * h);
        }
        *o = s;
    }
}

/// Dirichlet Laplacian of one velocity component on its interior faces.
/// Along its own axis the neighbours at the wall are the boundary faces
/// (value zero); across the other axes the wall ghost is antireflected.
/// Boundary faces of `out` are set to zero.
pub(crate) fn apply_dirichlet_face_operator(
    grid: &GridSpec,
    comp: usize,
    x: &[f64],
    out: &mut [f64],
) {
    let dim = grid.dim();
    let shape = grid.face_shape(comp);
    for (fidx, o) in out.iter_mut().enumerate() {
        let i = grid.face_coords(comp, fidx);
        if grid.is_boundary_face(comp, i) {
            *o = 0.0;
            continue;
        }
        let xi = x[fidx];
        let mut s = 0.0;
        for a in 0..dim {
            let h = grid.spacing(a);
            let stride = grid.face_stride(comp, a);
            let (up, dn) = if a == comp {
                let up = if i[a] + 1 < grid.cells[a] { x[fidx + stride] } else { 0.0 };
                let dn = if i[a] > 1 { x[fidx - stride] } else { 0.0 };
                (up, dn)
            } else {
                let up = if i[a] + 1 < shape[a] { x[fidx + stride] } else { -xi };
                let dn = if i[a] > 0 { x[fidx - stride] } else { -xi };
                (up, dn)
            };
            s += (up - 2.0 * xi + dn) / (h * h);
        }
        *o = s;
    }
}

/// Componentwise Dirichlet Laplacian of a face field.
pub fn vector_laplacian_dirichlet(v: &VectorField) -> VectorField {
    let mut out = VectorField::zeros(&v.grid);
    for a in 0..v.grid.dim() {
        apply_dirichlet_face_operator(&v.grid, a, &v.components[a], &mut out.components[a]);
    }
    out
}

/// Cell-centred gradient: average of the two face differences bracketing
/// each cell along every axis.
pub fn cell_gradient(f: &ScalarField) -> Vec<[f64; 3]> {
    gradient(f).cell_average()
}

/// Cell-centred gradient of `g(f)`.
pub fn cell_gradient_of(f: &ScalarField, g: impl Fn(f64) -> f64) -> Vec<[f64; 3]> {
    cell_gradient(&f.map(g))
}

#[inline]
pub(crate) fn norm2(v: &[f64; 3]) -> f64 {
    v[0] * v[0] + v[1] * v[1] + v[2] * v[2]
}

/// Restriction to a grid coarser by `factor` along every axis, by averaging.
pub fn restrict(f: &ScalarField, coarse: &GridSpec, factor: usize) -> Result<ScalarField> {
    let fine = &f.grid;
    for a in 0..fine.dim() {
        if coarse.cells()[a] * factor != fine.cells()[a] {
            return Err(Error::Input("restriction grids are not nested".into()));
        }
    }
    let mut out = ScalarField::zeros(coarse);
    let per = factor.pow(fine.dim() as u32) as f64;
    for (idx, v) in f.values.iter().enumerate() {
        let i = fine.cell_coords(idx);
        let mut ci = [0usize; 3];
        for a in 0..fine.dim() {
            ci[a] = i[a] / factor;
        }
        out.values[coarse.cell_index(ci)] += v / per;
    }
    Ok(out)
}

/// Face field `curl(s e_z)` built from a potential sampled at the grid nodes
/// (edges along z in 3D). Discretely divergence-free by construction; it
/// vanishes on the walls when `s` is constant along the boundary.
pub fn curl_of_potential(grid: &GridSpec, s: impl Fn([f64; 3]) -> f64) -> VectorField {
    let mut v = VectorField::zeros(grid);
    let (hx, hy) = (grid.spacing(0), grid.spacing(1));
    let node = |i: usize, j: usize, k: usize| -> [f64; 3] {
        let z = if grid.dim() == 3 { (k as f64 + 0.5) * grid.spacing(2) } else { 0.0 };
        [i as f64 * hx, j as f64 * hy, z]
    };
    for a in 0..2 {
        for fidx in 0..grid.num_faces(a) {
            let i = grid.face_coords(a, fidx);
            if grid.is_boundary_face(a, i) {
                continue;
            }
            v.components[a][fidx] = if a == 0 {
                // x-face (i, j+1/2): d s / d y between nodes (i, j) and (i, j+1)
                (s(node(i[0], i[1] + 1, i[2])) - s(node(i[0], i[1], i[2]))) / hy
            } else {
                -(s(node(i[0] + 1, i[1], i[2])) - s(node(i[0], i[1], i[2]))) / hx
            };
        }
    }
    v
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;

    fn interior_cells(g: &GridSpec) -> impl Iterator<Item = usize> + '_ {
        (0..g.num_cells()).filter(move |&idx| {
            let i = g.cell_coords(idx);
            (0..g.dim()).all(|a| i[a] > 0 && i[a] + 1 < g.cells()[a])
        })
    }

    #[test]
    fn grid_validation() {
        assert!(GridSpec::new(&[3, 8], &[1.0, 1.0]).is_err());
        assert!(GridSpec::new(&[8], &[1.0]).is_err());
        assert!(GridSpec::new(&[8, 8], &[1.0, 0.0]).is_err());
        let g = GridSpec::new(&[8, 4, 5], &[2.0, 1.0, 0.5]).unwrap();
        assert_eq!(g.num_cells(), 160);
        assert!((g.cell_volume() - 0.25 * 0.25 * 0.1).abs() < 1e-15);
        assert!((g.domain_volume() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn integrate_constants_and_linear() {
        let g = GridSpec::unit_square(32).unwrap();
        assert_eq!(integrate(&ScalarField::constant(&g, 1.0)), 1.0);
        assert_eq!(integrate(&ScalarField::zeros(&g)), 0.0);
        let g = GridSpec::unit_square(64).unwrap();
        let f = ScalarField::from_fn(&g, |x| x[0]);
        let h = g.spacing(0);
        assert!((integrate(&f) - 0.5).abs() <= h * h);
    }

    #[test]
    fn integrate_is_bitwise_deterministic() {
        let g = GridSpec::unit_square(50).unwrap();
        let f = ScalarField::from_fn(&g, |x| (7.0 * x[0]).sin() * (3.0 * x[1]).exp());
        let a = integrate(&f);
        let b = integrate(&f.clone());
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn gradient_of_constant_and_linear() {
        let g = GridSpec::unit_square(16).unwrap();
        let grad = gradient(&ScalarField::constant(&g, 4.2));
        assert_eq!(grad.max_abs(), 0.0);

        let f = ScalarField::from_fn(&g, |x| 2.0 * x[0] + 3.0 * x[1]);
        let grad = gradient(&f);
        for a in 0..2 {
            let want = [2.0, 3.0][a];
            for (idx, v) in grad.components[a].iter().enumerate() {
                let i = g.face_coords(a, idx);
                if g.is_boundary_face(a, i) {
                    assert_eq!(*v, 0.0);
                } else {
                    assert!((v - want).abs() < 1e-12, "{v} vs {want}");
                }
            }
        }
    }

    #[test]
    fn gradient_neumann_boundary_face() {
        let g = GridSpec::unit_square(16).unwrap();
        let f = ScalarField::from_fn(&g, |x| (PI * x[0]).cos());
        let grad = gradient(&f);
        for (idx, v) in grad.components[0].iter().enumerate() {
            let i = g.face_coords(0, idx);
            if i[0] == 0 || i[0] == 16 {
                assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn divergence_cases() {
        let g = GridSpec::unit_square(16).unwrap();
        let v = VectorField::from_fn(&g, |_| [1.5, -0.5, 0.0]);
        let d = divergence(&v);
        for idx in interior_cells(&g) {
            assert!(d.values[idx].abs() < 1e-12);
        }

        let f = ScalarField::from_fn(&g, |x| x[0] * x[0]);
        let d = divergence(&gradient(&f));
        for idx in interior_cells(&g) {
            assert!((d.values[idx] - 2.0).abs() < 1e-9, "{}", d.values[idx]);
        }
    }

    #[test]
    fn discrete_curl_is_divergence_free() {
        let g = GridSpec::new(&[24, 16], &[1.0, 0.7]).unwrap();
        // potential vanishing on the walls
        let s = |x: f64, y: f64| (PI * x).sin() * (PI * y / 0.7).sin() * (1.0 + x * y);
        let v = curl_of_potential(&g, |p| s(p[0], p[1]));
        let d = divergence(&v);
        assert!(d.max_abs() < 1e-12, "{}", d.max_abs());
        assert!(v.max_abs() > 0.1);
        assert_eq!(v.boundary_normal_max(), 0.0);
    }

    #[test]
    fn divergence_theorem_for_neumann_gradient() {
        let g = GridSpec::new(&[20, 12], &[1.3, 0.9]).unwrap();
        let f = ScalarField::from_fn(&g, |x| (5.0 * x[0] * x[1]).sin() + x[0].exp());
        let lap = divergence(&gradient(&f));
        assert!(integrate(&lap).abs() < 1e-11);
    }

    #[test]
    fn neumann_eigenmode() {
        let g = GridSpec::unit_square(64).unwrap();
        let f = ScalarField::from_fn(&g, |x| (PI * x[0]).cos() * (PI * x[1]).cos());
        let lap = laplacian_neumann(&f);
        let h = g.spacing(0);
        let discrete = -2.0 * (2.0 / (h * h)) * (1.0 - (PI * h).cos());
        let mut err_discrete = 0.0f64;
        let mut err_cont = 0.0f64;
        for (l, v) in lap.values.iter().zip(&f.values) {
            err_discrete = err_discrete.max((l - discrete * v).abs());
            err_cont = err_cont.max((l + 2.0 * PI * PI * v).abs());
        }
        assert!(err_discrete < 1e-9, "{err_discrete}");
        assert!(err_cont < 2.0 * PI.powi(4) * h * h / 12.0 * 1.5, "{err_cont}");
        assert_eq!(laplacian_neumann(&ScalarField::constant(&g, 3.0)).max_abs(), 0.0);
    }

    #[test]
    fn dirichlet_eigenmode_cells_and_faces() {
        let g = GridSpec::unit_square(32).unwrap();
        let h = g.spacing(0);
        let lam = -2.0 * (2.0 / (h * h)) * (1.0 - (PI * h).cos());
        let f = ScalarField::from_fn(&g, |x| (PI * x[0]).sin() * (PI * x[1]).sin());
        let lap = laplacian_dirichlet(&f);
        for (l, v) in lap.values.iter().zip(&f.values) {
            assert!((l - lam * v).abs() < 1e-9);
        }
        let v = VectorField::from_fn(&g, |x| {
            let m = (PI * x[0]).sin() * (PI * x[1]).sin();
            [m, m, 0.0]
        });
        let lap = vector_laplacian_dirichlet(&v);
        for a in 0..2 {
            for (l, x) in lap.components[a].iter().zip(&v.components[a]) {
                assert!((l - lam * x).abs() < 1e-8, "{l} {x}");
            }
        }
    }

    #[test]
    fn restriction_preserves_integral() {
        let g = GridSpec::unit_square(16).unwrap();
        let f = ScalarField::from_fn(&g, |x| x[0] * x[0] + x[1]);
        let c = GridSpec::unit_square(8).unwrap();
        let r = restrict(&f, &c, 2).unwrap();
        assert!((integrate(&r) - integrate(&f)).abs() < 1e-14);
    }
}
