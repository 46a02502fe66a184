//! Discrete space-time operators for the dynamic transport solver.
//!
//! The potential phi lives on time nodes `j = 0..=n_t` over cell centers.
//! Dual and multiplier fields live collocated at (time interval, cell):
//! the scalar slot pairs with the discrete time derivative, the d vector
//! slots pair with the spatial gradient averaged from the four surrounding
//! interior faces (two per adjacent time node). Boundary faces carry zero
//! flux, so cell-average gradients at the wall see half weights and no
//! momentum crosses the boundary by construction.
//!
//! The phi-step Hessian is assembled with trapezoidal node weights, which
//! makes it the compact space-time Neumann Laplacian plus the final-time
//! mass term. The gap between that stiffness and the averaged operator is
//! positive semidefinite, so using it amounts to a proximal ADMM variant
//! with an exactly solvable, well conditioned linear substep.

use crate::grid::Grid;
use rayon::prelude::*;

/// Geometry and scratch-free operator kernels for one (grid, n_t) pairing.
#[derive(Debug, Clone)]
pub struct SpaceTimeOps {
    pub dim: usize,
    pub n1: usize,
    pub n2: usize,
    pub ncells: usize,
    pub n_t: usize,
    pub dt: f64,
    pub dx: [f64; 2],
    pub cell_volume: f64,
}

impl SpaceTimeOps {
    pub fn new(grid: &Grid, n_t: usize) -> Self {
        let [n1, n2] = grid.extents();
        Self {
            dim: grid.dim(),
            n1,
            n2,
            ncells: grid.num_cells(),
            n_t,
            dt: 1.0 / n_t as f64,
            dx: grid.spacing(),
            cell_volume: grid.cell_volume(),
        }
    }

    pub fn phi_len(&self) -> usize {
        (self.n_t + 1) * self.ncells
    }

    pub fn slot_len(&self) -> usize {
        self.n_t * self.ncells
    }

    /// Trapezoidal weight of time node `j`.
    #[inline]
    pub fn node_weight(&self, j: usize) -> f64 {
        if j == 0 || j == self.n_t {
            0.5
        } else {
            1.0
        }
    }

    /// Discrete time derivative: `(phi_{j+1} - phi_j) / dt` per interval.
    pub fn apply_dt(&self, phi: &[f64], out: &mut [f64]) {
        let n = self.ncells;
        let inv_dt = 1.0 / self.dt;
        out.par_chunks_mut(n).enumerate().for_each(|(j, slab)| {
            let lo = &phi[j * n..(j + 1) * n];
            let hi = &phi[(j + 1) * n..(j + 2) * n];
            for c in 0..n {
                slab[c] = (hi[c] - lo[c]) * inv_dt;
            }
        });
    }

    /// Adjoint of `apply_dt`, accumulated into `out` with factor `scale`.
    pub fn accumulate_dt_adjoint(&self, w: &[f64], scale: f64, out: &mut [f64]) {
        let n = self.ncells;
        let s = scale / self.dt;
        for j in 0..self.n_t {
            let slab = &w[j * n..(j + 1) * n];
            for c in 0..n {
                out[(j + 1) * n + c] += s * slab[c];
                out[j * n + c] -= s * slab[c];
            }
        }
    }

    /// Cell-average spatial gradient of one node slice along `axis`,
    /// zero-flux boundary faces included with half weight.
    #[inline]
    fn cell_avg_gradient(&self, slice: &[f64], axis: usize, c: usize) -> f64 {
        let n1 = self.n1;
        match axis {
            0 => {
                let i = c % n1;
                let left = if i > 0 { (slice[c] - slice[c - 1]) / self.dx[0] } else { 0.0 };
                let right = if i < n1 - 1 { (slice[c + 1] - slice[c]) / self.dx[0] } else { 0.0 };
                0.5 * (left + right)
            }
            _ => {
                let j2 = c / n1;
                let down = if j2 > 0 { (slice[c] - slice[c - n1]) / self.dx[1] } else { 0.0 };
                let up = if j2 < self.n2 - 1 { (slice[c + n1] - slice[c]) / self.dx[1] } else { 0.0 };
                0.5 * (down + up)
            }
        }
    }

    /// Collocated space gradient: average of the two adjacent nodes' cell
    /// gradients, one output slab per (interval, axis).
    pub fn apply_bx(&self, phi: &[f64], out: &mut [Vec<f64>]) {
        let n = self.ncells;
        for (axis, comp) in out.iter_mut().enumerate().take(self.dim) {
            comp.par_chunks_mut(n).enumerate().for_each(|(j, slab)| {
                let lo = &phi[j * n..(j + 1) * n];
                let hi = &phi[(j + 1) * n..(j + 2) * n];
                for c in 0..n {
                    slab[c] =
                        0.5 * (self.cell_avg_gradient(lo, axis, c) + self.cell_avg_gradient(hi, axis, c));
                }
            });
        }
    }

    /// Adjoint of `apply_bx`, accumulated into `out` with factor `scale`.
    pub fn accumulate_bx_adjoint(&self, w: &[Vec<f64>], scale: f64, out: &mut [f64]) {
        let n = self.ncells;
        let n1 = self.n1;
        for (axis, comp) in w.iter().enumerate().take(self.dim) {
            let inv = scale * 0.25 / self.dx[axis];
            for j in 0..self.n_t {
                let slab = &comp[j * n..(j + 1) * n];
                for node in [j, j + 1] {
                    let base = node * n;
                    for c in 0..n {
                        let v = inv * slab[c];
                        if v == 0.0 {
                            continue;
                        }
                        match axis {
                            0 => {
                                let i = c % n1;
                                if i > 0 {
                                    out[base + c] += v;
                                    out[base + c - 1] -= v;
                                }
                                if i < n1 - 1 {
                                    out[base + c + 1] += v;
                                    out[base + c] -= v;
                                }
                            }
                            _ => {
                                let j2 = c / n1;
                                if j2 > 0 {
                                    out[base + c] += v;
                                    out[base + c - n1] -= v;
                                }
                                if j2 < self.n2 - 1 {
                                    out[base + c + n1] += v;
                                    out[base + c] -= v;
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    /// Compact spatial Neumann stiffness of one node slice at cell `c`.
    #[inline]
    fn compact_laplacian(&self, slice: &[f64], c: usize) -> f64 {
        let n1 = self.n1;
        let i = c % n1;
        let inv_dx2 = 1.0 / (self.dx[0] * self.dx[0]);
        let mut acc = 0.0;
        if i > 0 {
            acc += (slice[c] - slice[c - 1]) * inv_dx2;
        }
        if i < n1 - 1 {
            acc += (slice[c] - slice[c + 1]) * inv_dx2;
        }
        if self.dim == 2 {
            let j2 = c / n1;
            let inv_dy2 = 1.0 / (self.dx[1] * self.dx[1]);
            if j2 > 0 {
                acc += (slice[c] - slice[c - n1]) * inv_dy2;
            }
            if j2 < self.n2 - 1 {
                acc += (slice[c] - slice[c + n1]) * inv_dy2;
            }
        }
        acc
    }

    /// Hessian of the phi substep:
    /// `r dt (Dt^T Dt + Gx^T W Gx) phi + r e1^T e1 phi`.
    pub fn apply_hessian(&self, r: f64, phi: &[f64], out: &mut [f64]) {
        let n = self.ncells;
        let n_t = self.n_t;
        let inv_dt2 = 1.0 / (self.dt * self.dt);
        let scale = r * self.dt;
        out.par_chunks_mut(n).enumerate().for_each(|(j, slab)| {
            let cur = &phi[j * n..(j + 1) * n];
            let w = self.node_weight(j);
            for c in 0..n {
                // Time part of the compact space-time Laplacian.
                let mut tt = 0.0;
                if j > 0 {
                    tt += (cur[c] - phi[(j - 1) * n + c]) * inv_dt2;
                }
                if j < n_t {
                    tt += (cur[c] - phi[(j + 1) * n + c]) * inv_dt2;
                }
                let mut v = scale * (tt + w * self.compact_laplacian(cur, c));
                if j == n_t {
                    v += r * cur[c];
                }
                slab[c] = v;
            }
        });
    }

    /// Diagonal of the Hessian, for Jacobi preconditioning.
    pub fn hessian_diagonal(&self, r: f64) -> Vec<f64> {
        let n = self.ncells;
        let n1 = self.n1;
        let inv_dt2 = 1.0 / (self.dt * self.dt);
        let mut diag = vec![0.0; self.phi_len()];
        for j in 0..=self.n_t {
            let w = self.node_weight(j);
            let tt = if j == 0 || j == self.n_t { inv_dt2 } else { 2.0 * inv_dt2 };
            for c in 0..n {
                let i = c % n1;
                let mut lap = 0.0;
                let faces_x = (i > 0) as usize + (i < n1 - 1) as usize;
                lap += faces_x as f64 / (self.dx[0] * self.dx[0]);
                if self.dim == 2 {
                    let j2 = c / n1;
                    let faces_y = (j2 > 0) as usize + (j2 < self.n2 - 1) as usize;
                    lap += faces_y as f64 / (self.dx[1] * self.dx[1]);
                }
                let mut v = r * self.dt * (tt + w * lap);
                if j == self.n_t {
                    v += r;
                }
                diag[j * n + c] = v;
            }
        }
        diag
    }

    /// Proximal correction `P phi = r dt (Gx^T W Gx - Bx^T Bx) phi`,
    /// accumulated into `out`. `work_b` provides per-axis interval slabs.
    pub fn accumulate_proximal_term(
        &self,
        r: f64,
        phi: &[f64],
        work_b: &mut [Vec<f64>],
        out: &mut [f64],
    ) {
        let n = self.ncells;
        let scale = r * self.dt;
        // Gx^T W Gx phi: compact stiffness per node with trapezoid weights.
        for j in 0..=self.n_t {
            let slice = &phi[j * n..(j + 1) * n];
            let w = self.node_weight(j) * scale;
            for c in 0..n {
                out[j * n + c] += w * self.compact_laplacian(slice, c);
            }
        }
        // Minus Bx^T Bx phi.
        self.apply_bx(phi, work_b);
        self.accumulate_bx_adjoint(work_b, -scale, out);
    }
}
