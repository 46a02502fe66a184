//! Uniform Cartesian grids on a box, cell/face fields, and the discrete
//! calculus used by every solver module.
//!
//! Scalars live at cell centers. Staggered vector quantities carry one
//! component per interior face and axis; boundary faces are zero-flux and are
//! not stored. With that convention `gradient` and `-divergence` are exact
//! adjoints for the volume-weighted inner products, which is what makes the
//! transport step discretely mass conservative.

use crate::error::{Result, WfrError};
use rayon::prelude::*;

/// Uniform Cartesian grid in dimension 1 or 2 on a box `[origin, origin + length]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dim: usize,
    extents: [usize; 2],
    origin: [f64; 2],
    lengths: [f64; 2],
    spacing: [f64; 2],
}

impl Grid {
    /// 1D grid with `n` cells on `[origin, origin + length]`.
    pub fn new_1d(n: usize, origin: f64, length: f64) -> Result<Self> {
        Self::build(1, [n, 1], [origin, 0.0], [length, 1.0])
    }

    /// 2D grid with `n1 x n2` cells on the box `[o1, o1+l1] x [o2, o2+l2]`.
    pub fn new_2d(n: [usize; 2], origin: [f64; 2], lengths: [f64; 2]) -> Result<Self> {
        Self::build(2, n, origin, lengths)
    }

    /// Unit-box helper used throughout the tests: `[0,1]` or `[0,1]^2`.
    pub fn unit(dim: usize, n_per_axis: usize) -> Result<Self> {
        match dim {
            1 => Self::new_1d(n_per_axis, 0.0, 1.0),
            2 => Self::new_2d([n_per_axis, n_per_axis], [0.0, 0.0], [1.0, 1.0]),
            d => Err(WfrError::Config(format!("unsupported dimension {d}"))),
        }
    }

    fn build(dim: usize, extents: [usize; 2], origin: [f64; 2], lengths: [f64; 2]) -> Result<Self> {
        for k in 0..dim {
            if extents[k] < 2 {
                return Err(WfrError::Config(format!(
                    "grid needs at least 2 cells per axis, got {} on axis {k}",
                    extents[k]
                )));
            }
            if !(lengths[k] > 0.0) || !lengths[k].is_finite() {
                return Err(WfrError::Config(format!(
                    "box length on axis {k} must be positive and finite, got {}",
                    lengths[k]
                )));
            }
        }
        let mut spacing = [1.0; 2];
        for k in 0..dim {
            spacing[k] = lengths[k] / extents[k] as f64;
        }
        Ok(Self { dim, extents, origin, lengths, spacing })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Cells along each axis; axis 1 reports 1 in dimension 1.
    pub fn extents(&self) -> [usize; 2] {
        self.extents
    }

    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }

    pub fn lengths(&self) -> [f64; 2] {
        self.lengths
    }

    pub fn spacing(&self) -> [f64; 2] {
        self.spacing
    }

    pub fn num_cells(&self) -> usize {
        self.extents[0] * self.extents[1]
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing[0] * if self.dim == 2 { self.spacing[1] } else { 1.0 }
    }

    /// Flat index of cell `(i, j)`; axis 0 varies fastest.
    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.extents[0] && j < self.extents[1]);
        i + self.extents[0] * j
    }

    /// Center coordinates of the cell with flat index `c`.
    pub fn cell_center(&self, c: usize) -> [f64; 2] {
        let i = c % self.extents[0];
        let j = c / self.extents[0];
        [
            self.origin[0] + (i as f64 + 0.5) * self.spacing[0],
            self.origin[1] + (j as f64 + 0.5) * self.spacing[1],
        ]
    }

    /// Number of interior faces normal to `axis`.
    pub fn num_faces(&self, axis: usize) -> usize {
        match (self.dim, axis) {
            (1, 0) => self.extents[0] - 1,
            (2, 0) => (self.extents[0] - 1) * self.extents[1],
            (2, 1) => self.extents[0] * (self.extents[1] - 1),
            _ => 0,
        }
    }

    /// Measure of a face normal to `axis` (1 in 1D, transverse spacing in 2D).
    pub fn face_measure(&self, axis: usize) -> f64 {
        self.cell_volume() / self.spacing[axis]
    }

    pub fn same_as(&self, other: &Grid) -> bool {
        self == other
    }
}

/// Real-valued cell-centered field; no sign constraint.
///
/// Used for potentials, pressures, convolution outputs and solver workspaces.
#[derive(Debug, Clone)]
pub struct CellField {
    grid: Grid,
    values: Vec<f64>,
}

impl CellField {
    pub fn new(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.num_cells() {
            return Err(WfrError::LayoutMismatch(format!(
                "cell field has {} values, grid has {} cells",
                values.len(),
                grid.num_cells()
            )));
        }
        Ok(Self { grid: grid.clone(), values })
    }

    pub fn constant(grid: &Grid, value: f64) -> Self {
        Self { grid: grid.clone(), values: vec![value; grid.num_cells()] }
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    /// Evaluate `f` at every cell center.
    pub fn from_fn(grid: &Grid, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.num_cells())
            .map(|c| {
                let x = grid.cell_center(c);
                f(&x[..grid.dim()])
            })
            .collect();
        Self { grid: grid.clone(), values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Volume-weighted integral of the field over the box.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn max(&self) -> f64 {
        self.values.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |m, &v| m.min(v))
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Volume-weighted L1 distance to another field on the same grid.
    pub fn l1_distance(&self, other: &CellField) -> Result<f64> {
        self.check_same_grid(other)?;
        let sum: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .sum();
        Ok(sum * self.grid.cell_volume())
    }

    pub fn check_same_grid(&self, other: &CellField) -> Result<()> {
        if self.grid.same_as(&other.grid) {
            Ok(())
        } else {
            Err(WfrError::GridMismatch(
                "fields live on different grids".to_string(),
            ))
        }
    }
}

/// Nonnegative cell density in mass-per-volume units.
#[derive(Debug, Clone)]
pub struct DensityField {
    field: CellField,
}

impl DensityField {
    /// Wrap a cell field, rejecting negative or non-finite entries.
    pub fn new(field: CellField) -> Result<Self> {
        for (c, &v) in field.values().iter().enumerate() {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(WfrError::Config(format!(
                    "density must be finite and nonnegative, cell {c} holds {v}"
                )));
            }
        }
        Ok(Self { field })
    }

    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        Self::new(CellField::new(grid, values)?)
    }

    pub fn constant(grid: &Grid, value: f64) -> Result<Self> {
        Self::new(CellField::constant(grid, value))
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self { field: CellField::zeros(grid) }
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        Self::new(CellField::from_fn(grid, f))
    }

    /// Clamp tiny negative entries to zero and wrap; used on solver outputs.
    pub fn clamped(field: CellField) -> Result<Self> {
        let mut field = field;
        for v in field.values_mut() {
            if !v.is_finite() {
                return Err(WfrError::ScalarSolve(
                    "non-finite density produced by solver".to_string(),
                ));
            }
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        Ok(Self { field })
    }

    pub fn as_cell_field(&self) -> &CellField {
        &self.field
    }

    pub fn into_cell_field(self) -> CellField {
        self.field
    }

    pub fn grid(&self) -> &Grid {
        self.field.grid()
    }

    pub fn values(&self) -> &[f64] {
        self.field.values()
    }

    /// Total mass, `sum(values) * cell volume`.
    pub fn mass(&self) -> f64 {
        self.field.integral()
    }

    pub fn max(&self) -> f64 {
        self.field.max()
    }

    pub fn l1_distance(&self, other: &DensityField) -> Result<f64> {
        self.field.l1_distance(&other.field)
    }

    /// Rescale so the total mass equals `target` exactly.
    pub fn renormalized_to_mass(mut self, target: f64) -> Result<Self> {
        let current = self.mass();
        if current <= 0.0 {
            return Err(WfrError::ZeroMass);
        }
        let scale = target / current;
        for v in self.field.values_mut() {
            *v *= scale;
        }
        Ok(self)
    }
}

/// Face-staggered vector field: one component per interior face and axis.
/// Boundary faces carry zero flux and are not stored.
#[derive(Debug, Clone)]
pub struct VectorField {
    grid: Grid,
    components: Vec<Vec<f64>>,
}

impl VectorField {
    pub fn zeros(grid: &Grid) -> Self {
        let components = (0..grid.dim())
            .map(|axis| vec![0.0; grid.num_faces(axis)])
            .collect();
        Self { grid: grid.clone(), components }
    }

    pub fn new(grid: &Grid, components: Vec<Vec<f64>>) -> Result<Self> {
        if components.len() != grid.dim() {
            return Err(WfrError::LayoutMismatch(format!(
                "vector field has {} components, grid dimension is {}",
                components.len(),
                grid.dim()
            )));
        }
        for (axis, comp) in components.iter().enumerate() {
            if comp.len() != grid.num_faces(axis) {
                return Err(WfrError::LayoutMismatch(format!(
                    "axis {axis} has {} face values, grid has {} interior faces",
                    comp.len(),
                    grid.num_faces(axis)
                )));
            }
        }
        Ok(Self { grid: grid.clone(), components })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn component(&self, axis: usize) -> &[f64] {
        &self.components[axis]
    }

    pub fn component_mut(&mut self, axis: usize) -> &mut [f64] {
        &mut self.components[axis]
    }

    /// Volume-weighted inner product with another face field.
    pub fn inner(&self, other: &VectorField) -> Result<f64> {
        if !self.grid.same_as(&other.grid) {
            return Err(WfrError::GridMismatch(
                "vector fields live on different grids".to_string(),
            ));
        }
        let vol = self.grid.cell_volume();
        let mut total = 0.0;
        for axis in 0..self.grid.dim() {
            let dot: f64 = self.components[axis]
                .iter()
                .zip(&other.components[axis])
                .map(|(a, b)| a * b)
                .sum();
            total += dot * vol;
        }
        Ok(total)
    }
}

/// Volume-weighted inner product of two cell fields.
pub fn cell_inner(a: &CellField, b: &CellField) -> Result<f64> {
    a.check_same_grid(b)?;
    let dot: f64 = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| x * y)
        .sum();
    Ok(dot * a.grid().cell_volume())
}

/// Total variation: discrete TV seminorm over interior faces plus the L1 norm.
pub fn total_variation(f: &CellField) -> f64 {
    let grid = f.grid();
    let v = f.values();
    let [n1, n2] = grid.extents();
    let mut tv = 0.0;

    let fm0 = grid.face_measure(0);
    for j in 0..n2 {
        for i in 0..n1 - 1 {
            tv += (v[grid.idx(i + 1, j)] - v[grid.idx(i, j)]).abs() * fm0;
        }
    }
    if grid.dim() == 2 {
        let fm1 = grid.face_measure(1);
        for j in 0..n2 - 1 {
            for i in 0..n1 {
                tv += (v[grid.idx(i, j + 1)] - v[grid.idx(i, j)]).abs() * fm1;
            }
        }
    }

    let l1: f64 = v.iter().map(|x| x.abs()).sum::<f64>() * grid.cell_volume();
    tv + l1
}

/// Discrete gradient: cell field to interior-face field, `(f_right - f_left) / dx`.
pub fn gradient(f: &CellField) -> VectorField {
    let grid = f.grid();
    let v = f.values();
    let [n1, n2] = grid.extents();
    let [dx, dy] = grid.spacing();
    let mut out = VectorField::zeros(grid);

    {
        let g0 = out.component_mut(0);
        for j in 0..n2 {
            for i in 0..n1 - 1 {
                g0[i + (n1 - 1) * j] = (v[grid.idx(i + 1, j)] - v[grid.idx(i, j)]) / dx;
            }
        }
    }
    if grid.dim() == 2 {
        let g1 = out.component_mut(1);
        for j in 0..n2 - 1 {
            for i in 0..n1 {
                g1[i + n1 * j] = (v[grid.idx(i, j + 1)] - v[grid.idx(i, j)]) / dy;
            }
        }
    }
    out
}

/// Discrete divergence: interior-face field to cell field, zero-flux boundary.
///
/// Exactly adjoint to `gradient`: `<gradient(f), v>_faces = -<f, divergence(v)>_cells`.
pub fn divergence(v: &VectorField) -> CellField {
    let grid = v.grid();
    let [n1, n2] = grid.extents();
    let [dx, dy] = grid.spacing();
    let mut out = CellField::zeros(grid);

    {
        let comp = v.component(0);
        let o = out.values_mut();
        for j in 0..n2 {
            for i in 0..n1 {
                let right = if i < n1 - 1 { comp[i + (n1 - 1) * j] } else { 0.0 };
                let left = if i > 0 { comp[i - 1 + (n1 - 1) * j] } else { 0.0 };
                o[i + n1 * j] += (right - left) / dx;
            }
        }
    }
    if grid.dim() == 2 {
        let comp = v.component(1);
        let o = out.values_mut();
        for j in 0..n2 {
            for i in 0..n1 {
                let up = if j < n2 - 1 { comp[i + n1 * j] } else { 0.0 };
                let down = if j > 0 { comp[i + n1 * (j - 1)] } else { 0.0 };
                o[i + n1 * j] += (up - down) / dy;
            }
        }
    }
    out
}

/// Direct midpoint-quadrature convolution `out(x_i) = sum_j K(x_i - x_j) f_j vol`.
///
/// O(N^2) on purpose; the interaction kernels are smooth and the grids small.
pub fn convolve<K>(kernel: K, f: &CellField) -> CellField
where
    K: Fn(&[f64]) -> f64 + Sync,
{
    let grid = f.grid();
    let dim = grid.dim();
    let vol = grid.cell_volume();
    let n = grid.num_cells();
    let centers: Vec<[f64; 2]> = (0..n).map(|c| grid.cell_center(c)).collect();
    let fv = f.values();

    let mut out = vec![0.0; n];
    out.par_iter_mut().enumerate().for_each(|(i, o)| {
        let xi = centers[i];
        let mut acc = 0.0;
        for (j, &fj) in fv.iter().enumerate() {
            if fj == 0.0 {
                continue;
            }
            let d = [xi[0] - centers[j][0], xi[1] - centers[j][1]];
            acc += kernel(&d[..dim]) * fj;
        }
        *o = acc * vol;
    });
    CellField::new(grid, out).expect("convolution output matches input layout")
}
