//! Uniform grids on the unit interval or square, nodal fields, and the
//! discrete difference operators shared by the scheme and the estimators.
//!
//! Gradients are forward differences living on cells. The divergence of a
//! cell vector field is the negative adjoint of the gradient with respect to
//! the nodal inner product, so discrete integration by parts is exact.

use serde::{Deserialize, Serialize};

use crate::banded::{BandLu, BandMatrix};
use crate::error::{Error, Result};

/// Per-cell vector; the second component is unused in 1D.
pub type CellVec = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    n_cells: usize,
}

impl Grid {
    pub fn new(dim: usize, n_cells: usize) -> Result<Self> {
        if !(dim == 1 || dim == 2) {
            return Err(Error::param("dim", format!("must be 1 or 2, got {dim}")));
        }
        if n_cells < 2 {
            return Err(Error::param(
                "n_cells",
                format!("need at least 2 cells per axis, got {n_cells}"),
            ));
        }
        Ok(Self { dim, n_cells })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Cells per axis.
    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n_cells as f64
    }

    pub fn nodes_per_axis(&self) -> usize {
        self.n_cells + 1
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes_per_axis().pow(self.dim as u32)
    }

    pub fn n_cells_total(&self) -> usize {
        self.n_cells.pow(self.dim as u32)
    }

    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.dim as i32)
    }

    fn node_ij(&self, node: usize) -> (usize, usize) {
        let m = self.nodes_per_axis();
        (node % m, node / m)
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        let n = self.n_cells;
        let (i, j) = self.node_ij(node);
        let on = |k: usize| k == 0 || k == n;
        if self.dim == 1 {
            on(i)
        } else {
            on(i) || on(j)
        }
    }

    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.n_nodes())
            .filter(|&k| !self.is_boundary(k))
            .collect()
    }

    pub fn boundary_nodes(&self) -> Vec<usize> {
        (0..self.n_nodes())
            .filter(|&k| self.is_boundary(k))
            .collect()
    }

    pub fn n_interior(&self) -> usize {
        (self.n_cells - 1).pow(self.dim as u32)
    }

    /// Position of an interior node in the unknown vector, natural ordering.
    pub fn interior_index(&self, node: usize) -> Option<usize> {
        if self.is_boundary(node) {
            return None;
        }
        let (i, j) = self.node_ij(node);
        Some(if self.dim == 1 {
            i - 1
        } else {
            (i - 1) + (j - 1) * (self.n_cells - 1)
        })
    }

    /// Half bandwidth of operators assembled over interior unknowns.
    pub fn bandwidth(&self) -> usize {
        if self.dim == 1 {
            1
        } else {
            self.n_cells - 1
        }
    }

    pub fn coords(&self, node: usize) -> [f64; 2] {
        let h = self.h();
        let (i, j) = self.node_ij(node);
        if self.dim == 1 {
            [i as f64 * h, 0.0]
        } else {
            [i as f64 * h, j as f64 * h]
        }
    }

    /// Trapezoidal quadrature weight of a node.
    pub fn node_weight(&self, node: usize) -> f64 {
        let n = self.n_cells;
        let (i, j) = self.node_ij(node);
        let half = |k: usize| if k == 0 || k == n { 0.5 } else { 1.0 };
        let w = if self.dim == 1 {
            half(i)
        } else {
            half(i) * half(j)
        };
        w * self.cell_volume()
    }

    /// Nodes of a cell: `[base, +x neighbour, +y neighbour]`; the last entry
    /// is meaningless in 1D.
    pub(crate) fn cell_nodes(&self, cell: usize) -> [usize; 3] {
        let n = self.n_cells;
        let m = self.nodes_per_axis();
        let (ci, cj) = (cell % n, cell / n);
        let base = ci + cj * m;
        [base, base + 1, base + m]
    }

    /// Derivatives of the cell gradient with respect to the local nodes.
    pub(crate) fn local_gradient(&self) -> [[f64; 3]; 2] {
        let inv_h = 1.0 / self.h();
        [[-inv_h, inv_h, 0.0], [-inv_h, 0.0, inv_h]]
    }

    /// Assembles a banded operator over interior unknowns from per-cell local
    /// blocks (rows and columns indexed by local nodes) plus `mass` on the
    /// diagonal.
    pub(crate) fn assemble<F>(&self, mass: f64, mut block: F) -> BandMatrix
    where
        F: FnMut(usize) -> [[f64; 3]; 3],
    {
        let bw = self.bandwidth();
        let mut mat = BandMatrix::zeros(self.n_interior(), bw, bw);
        for r in 0..self.n_interior() {
            mat.add(r, r, mass);
        }
        let local = self.dim + 1;
        for cell in 0..self.n_cells_total() {
            let nodes = self.cell_nodes(cell);
            let b = block(cell);
            for a in 0..local {
                let Some(row) = self.interior_index(nodes[a]) else {
                    continue;
                };
                for c in 0..local {
                    if let Some(col) = self.interior_index(nodes[c]) {
                        if b[a][c] != 0.0 {
                            mat.add(row, col, b[a][c]);
                        }
                    }
                }
            }
        }
        mat
    }
}

/// Which discrete Sobolev space a field belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Space {
    /// Vanishes on the boundary nodes.
    ZeroBoundary,
    /// Arbitrary boundary trace.
    FreeBoundary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
    space: Space,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<f64>, space: Space) -> Result<Self> {
        if values.len() != grid.n_nodes() {
            return Err(Error::InvalidField(format!(
                "expected {} nodal values, got {}",
                grid.n_nodes(),
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidField(format!("non-finite value at node {k}")));
        }
        if space == Space::ZeroBoundary {
            if let Some(k) = grid
                .boundary_nodes()
                .into_iter()
                .find(|&k| values[k] != 0.0)
            {
                return Err(Error::InvalidField(format!(
                    "zero-boundary field is {} at boundary node {k}",
                    values[k]
                )));
            }
        }
        Ok(Self {
            grid,
            values,
            space,
        })
    }

    pub(crate) fn from_raw(grid: Grid, values: Vec<f64>, space: Space) -> Self {
        debug_assert_eq!(values.len(), grid.n_nodes());
        Self {
            grid,
            values,
            space,
        }
    }

    pub fn zeros(grid: Grid, space: Space) -> Self {
        Self::from_raw(grid, vec![0.0; grid.n_nodes()], space)
    }

    /// Samples `f` at the nodes. Zero-boundary fields are clamped to zero on
    /// the boundary.
    pub fn from_fn(grid: Grid, space: Space, mut f: impl FnMut([f64; 2]) -> f64) -> Self {
        let values = (0..grid.n_nodes())
            .map(|k| {
                if space == Space::ZeroBoundary && grid.is_boundary(k) {
                    0.0
                } else {
                    f(grid.coords(k))
                }
            })
            .collect();
        Self::from_raw(grid, values, space)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn scaled(&self, c: f64) -> Field {
        Self::from_raw(
            self.grid,
            self.values.iter().map(|v| c * v).collect(),
            self.space,
        )
    }

    fn combine(&self, other: &Field, op: impl Fn(f64, f64) -> f64) -> Result<Field> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let space = if self.space == Space::ZeroBoundary && other.space == Space::ZeroBoundary {
            Space::ZeroBoundary
        } else {
            Space::FreeBoundary
        };
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| op(a, b))
            .collect();
        Ok(Self::from_raw(self.grid, values, space))
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.combine(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.combine(other, |a, b| a - b)
    }

    /// Sets boundary values to zero.
    pub fn project_zero_boundary(&self) -> Field {
        let mut values = self.values.clone();
        for k in self.grid.boundary_nodes() {
            values[k] = 0.0;
        }
        Self::from_raw(self.grid, values, Space::ZeroBoundary)
    }

    /// Keeps only the boundary values (a Dirichlet lift with zero interior).
    pub fn boundary_trace(&self) -> Field {
        let mut values = vec![0.0; self.values.len()];
        for k in self.grid.boundary_nodes() {
            values[k] = self.values[k];
        }
        Self::from_raw(self.grid, values, Space::FreeBoundary)
    }

    pub(crate) fn with_space(mut self, space: Space) -> Field {
        self.space = space;
        self
    }
}

fn same_grid(f: &Field, g: &Field) -> Result<()> {
    if f.grid != g.grid {
        Err(Error::GridMismatch)
    } else {
        Ok(())
    }
}

fn check_p(p: f64) -> Result<()> {
    if p > 1.0 && p.is_finite() {
        Ok(())
    } else {
        Err(Error::param(
            "p",
            format!("norm exponent must exceed 1, got {p}"),
        ))
    }
}

pub(crate) fn gradient_of(grid: &Grid, values: &[f64]) -> Vec<CellVec> {
    let inv_h = 1.0 / grid.h();
    (0..grid.n_cells_total())
        .map(|cell| {
            let [b, r, u] = grid.cell_nodes(cell);
            let gx = (values[r] - values[b]) * inv_h;
            let gy = if grid.dim == 2 {
                (values[u] - values[b]) * inv_h
            } else {
                0.0
            };
            [gx, gy]
        })
        .collect()
}

/// Forward-difference gradient on each cell.
pub fn gradient(f: &Field) -> Vec<CellVec> {
    gradient_of(&f.grid, &f.values)
}

pub(crate) fn div_flux_values(grid: &Grid, flux: &[CellVec]) -> Vec<f64> {
    assert_eq!(flux.len(), grid.n_cells_total());
    let inv_h = 1.0 / grid.h();
    let mut out = vec![0.0; grid.n_nodes()];
    for (cell, g) in flux.iter().enumerate() {
        let nodes = grid.cell_nodes(cell);
        for a in 0..grid.dim {
            out[nodes[0]] += g[a] * inv_h;
            out[nodes[a + 1]] -= g[a] * inv_h;
        }
    }
    for k in grid.boundary_nodes() {
        out[k] = 0.0;
    }
    out
}

/// Discrete divergence of a cell vector field: the negative adjoint of
/// [`gradient`] against zero-boundary test functions.
pub fn div_flux(grid: &Grid, flux: &[CellVec]) -> Field {
    Field::from_raw(*grid, div_flux_values(grid, flux), Space::ZeroBoundary)
}

#[inline]
pub(crate) fn norm2(g: &CellVec) -> f64 {
    (g[0] * g[0] + g[1] * g[1]).sqrt()
}

pub(crate) fn grad_lp_pow_values(grid: &Grid, values: &[f64], p: f64) -> f64 {
    let sum: f64 = gradient_of(grid, values)
        .iter()
        .map(|g| norm2(g).powf(p))
        .sum();
    sum * grid.cell_volume()
}

/// `Σ_cells |∇f|^p h^dim`, the p-th power of [`lp_grad_norm`].
pub fn grad_lp_pow(f: &Field, p: f64) -> Result<f64> {
    check_p(p)?;
    Ok(grad_lp_pow_values(&f.grid, &f.values, p))
}

/// `(Σ_cells |∇f|^p h^dim)^{1/p}`.
pub fn lp_grad_norm(f: &Field, p: f64) -> Result<f64> {
    Ok(grad_lp_pow(f, p)?.powf(1.0 / p))
}

pub fn l2_inner(f: &Field, g: &Field) -> Result<f64> {
    same_grid(f, g)?;
    let grid = &f.grid;
    Ok(f.values
        .iter()
        .zip(&g.values)
        .enumerate()
        .map(|(k, (a, b))| grid.node_weight(k) * a * b)
        .sum())
}

pub fn l2_norm(f: &Field) -> f64 {
    l2_inner(f, f).expect("same grid").sqrt()
}

pub fn l1_norm(f: &Field) -> f64 {
    f.values
        .iter()
        .enumerate()
        .map(|(k, v)| f.grid.node_weight(k) * v.abs())
        .sum()
}

/// `Σ w_k |f_k|^p` with trapezoidal weights.
pub fn lp_norm_pow(f: &Field, p: f64) -> Result<f64> {
    check_p(p)?;
    Ok(f.values
        .iter()
        .enumerate()
        .map(|(k, v)| f.grid.node_weight(k) * v.abs().powf(p))
        .sum())
}

/// `‖f‖_{L^p}^p + ‖∇f‖_{L^p}^p`.
pub fn w1p_norm_pow(f: &Field, p: f64) -> Result<f64> {
    Ok(lp_norm_pow(f, p)? + grad_lp_pow(f, p)?)
}

/// Nodal values of `-div(|∇φ|^{p-2} ∇φ)`.
pub(crate) fn neg_p_laplacian(grid: &Grid, phi: &[f64], p: f64) -> Vec<f64> {
    let flux: Vec<CellVec> = gradient_of(grid, phi)
        .iter()
        .map(|g| {
            let a = norm2(g).powf(p - 2.0);
            [a * g[0], a * g[1]]
        })
        .collect();
    div_flux_values(grid, &flux)
        .into_iter()
        .map(|v| -v)
        .collect()
}

fn laplacian_lu(grid: &Grid) -> Result<BandLu> {
    let d = grid.local_gradient();
    let dim = grid.dim;
    let mat = grid.assemble(0.0, |_| {
        let mut k = [[0.0; 3]; 3];
        for (i, row) in k.iter_mut().enumerate() {
            for (j, entry) in row.iter_mut().enumerate() {
                *entry = (0..dim).map(|a| d[a][i] * d[a][j]).sum();
            }
        }
        k
    });
    mat.factor()
}

fn interior_to_nodal(grid: &Grid, interior: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; grid.n_nodes()];
    for (k, idx) in grid.interior_nodes().into_iter().zip(0..) {
        out[k] = interior[idx];
    }
    out
}

fn nodal_to_interior(grid: &Grid, nodal: &[f64]) -> Vec<f64> {
    grid.interior_nodes()
        .into_iter()
        .map(|k| nodal[k])
        .collect()
}

/// Lower bound on the discrete `W^{-1,p'}` norm of `g`:
/// `sup_φ (g, φ) / ‖∇φ‖_{L^p}` over zero-boundary `φ`.
///
/// Starts from the Poisson solution `-Δφ = g` and performs `iters - 1`
/// Sobolev-gradient ascent steps on the ratio, returning the best ratio seen,
/// so the result is nondecreasing in `iters`.
pub fn dual_norm_estimate(g: &Field, p: f64, iters: usize) -> Result<f64> {
    check_p(p)?;
    if iters == 0 {
        return Err(Error::param("iters", "need at least one iteration"));
    }
    let grid = g.grid;
    let interior = grid.interior_nodes();
    let scale = interior
        .iter()
        .map(|&k| grid.node_weight(k) * g.values[k] * g.values[k])
        .sum::<f64>()
        .sqrt();
    if scale == 0.0 {
        return Ok(0.0);
    }
    let g_unit: Vec<f64> = g
        .values
        .iter()
        .enumerate()
        .map(|(k, v)| if grid.is_boundary(k) { 0.0 } else { v / scale })
        .collect();

    let lu = laplacian_lu(&grid)?;
    let w = grid.cell_volume();
    let pairing =
        |phi: &[f64]| -> f64 { interior.iter().map(|&k| g_unit[k] * phi[k]).sum::<f64>() * w };
    let ratio = |phi: &[f64]| -> f64 {
        let den = grad_lp_pow_values(&grid, phi, p).powf(1.0 / p);
        if den == 0.0 {
            0.0
        } else {
            pairing(phi) / den
        }
    };

    let mut phi = interior_to_nodal(&grid, &lu.solve(&nodal_to_interior(&grid, &g_unit)));
    let mut best = ratio(&phi);

    for _ in 1..iters {
        let norm = grad_lp_pow_values(&grid, &phi, p).powf(1.0 / p);
        if norm == 0.0 {
            break;
        }
        phi.iter_mut().for_each(|v| *v /= norm);
        let r = pairing(&phi);
        let lap = neg_p_laplacian(&grid, &phi, p);
        let ascent: Vec<f64> = interior.iter().map(|&k| g_unit[k] - r * lap[k]).collect();
        let dir = interior_to_nodal(&grid, &lu.solve(&ascent));

        let current = ratio(&phi);
        let mut step = 1.0;
        let mut accepted = None;
        while step > 1e-12 {
            let trial: Vec<f64> = phi.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
            let value = ratio(&trial);
            if value > current {
                accepted = Some((trial, value));
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some((trial, value)) => {
                phi = trial;
                best = best.max(value);
            }
            None => break,
        }
    }
    Ok(best * scale)
}
