//! Uniform box grid with cell-centered scalars and MAC face-staggered vectors.
//!
//! The domain is an axis-aligned box. Scalars (`n`, `c`, pressure) live at
//! cell centers and carry zero-flux Neumann closure; velocity-like fields
//! store one normal component per cell face and are pinned to zero on all
//! boundary faces (no-slip / no-penetration).
//!
//! A 2D run is represented with `dims[2] == 1`: every z-face is then a
//! boundary face, so no z-dynamics can occur and all kernels share one code
//! path.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Uniform axis-aligned box grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dims: [usize; 3],
    extents: [f64; 3],
    h: [f64; 3],
    dim: usize,
}

impl Grid {
    /// Build a grid with `dim` active axes (2 or 3). Active axes need at
    /// least 4 cells; inactive axes are fixed to a single cell of unit extent.
    pub fn new(dim: usize, dims_in: &[usize], extents_in: &[f64]) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::Validation(format!("dim must be 2 or 3, got {dim}")));
        }
        if dims_in.len() != dim || extents_in.len() != dim {
            return Err(Error::Validation(format!(
                "expected {dim} grid dims and extents, got {} and {}",
                dims_in.len(),
                extents_in.len()
            )));
        }
        let mut dims = [1usize; 3];
        let mut extents = [1.0f64; 3];
        for a in 0..dim {
            dims[a] = dims_in[a];
            extents[a] = extents_in[a];
            if dims[a] < 4 {
                return Err(Error::Validation(format!(
                    "axis {a} has {} cells; at least 4 required",
                    dims[a]
                )));
            }
            if !(extents[a] > 0.0) || !extents[a].is_finite() {
                return Err(Error::Validation(format!(
                    "axis {a} extent must be positive and finite, got {}",
                    extents[a]
                )));
            }
        }
        let mut h = [1.0f64; 3];
        for a in 0..3 {
            h[a] = extents[a] / dims[a] as f64;
        }
        Ok(Self { dims, extents, h, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn extents(&self) -> [f64; 3] {
        self.extents
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.h
    }

    /// Smallest spacing over the active axes.
    pub fn min_spacing(&self) -> f64 {
        (0..self.dim).map(|a| self.h[a]).fold(f64::INFINITY, f64::min)
    }

    pub fn min_extent(&self) -> f64 {
        (0..self.dim)
            .map(|a| self.extents[a])
            .fold(f64::INFINITY, f64::min)
    }

    pub fn is_active(&self, axis: usize) -> bool {
        axis < self.dim
    }

    pub fn cell_count(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn cell_volume(&self) -> f64 {
        self.h[0] * self.h[1] * self.h[2]
    }

    #[inline]
    pub fn cell_idx(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    /// Shape of the face-normal component array for `axis`.
    pub fn face_dims(&self, axis: usize) -> [usize; 3] {
        let mut d = self.dims;
        d[axis] += 1;
        d
    }

    pub fn face_count(&self, axis: usize) -> usize {
        let d = self.face_dims(axis);
        d[0] * d[1] * d[2]
    }

    #[inline]
    pub fn face_idx(&self, axis: usize, i: usize, j: usize, k: usize) -> usize {
        let d = self.face_dims(axis);
        i + d[0] * (j + d[1] * k)
    }

    pub fn cell_center(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        [
            (i as f64 + 0.5) * self.h[0],
            (j as f64 + 0.5) * self.h[1],
            (k as f64 + 0.5) * self.h[2],
        ]
    }

    pub fn face_center(&self, axis: usize, i: usize, j: usize, k: usize) -> [f64; 3] {
        let mut x = self.cell_center(i, j, k);
        x[axis] -= 0.5 * self.h[axis];
        x
    }

    /// Distance from a cell center to the nearest boundary wall (active axes).
    pub fn boundary_distance(&self, i: usize, j: usize, k: usize) -> f64 {
        let x = self.cell_center(i, j, k);
        let mut d = f64::INFINITY;
        for a in 0..self.dim {
            d = d.min(x[a]).min(self.extents[a] - x[a]);
        }
        d
    }
}

/// Boundary closure for cell-centered scalars.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScalarBc {
    /// Zero normal flux through every wall.
    NeumannZeroFlux,
}

/// Boundary closure for face-staggered vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VectorBc {
    /// Normal components vanish exactly on boundary faces.
    DirichletZero,
}

/// Cell-centered scalar field.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    data: Vec<f64>,
    bc: ScalarBc,
}

impl ScalarField {
    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        Self {
            grid,
            data: vec![value; grid.cell_count()],
            bc: ScalarBc::NeumannZeroFlux,
        }
    }

    /// Sample `f` at cell centers.
    pub fn from_fn(grid: Grid, mut f: impl FnMut([f64; 3]) -> f64) -> Self {
        let [nx, ny, nz] = grid.dims();
        let mut data = Vec::with_capacity(grid.cell_count());
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    data.push(f(grid.cell_center(i, j, k)));
                }
            }
        }
        Self {
            grid,
            data,
            bc: ScalarBc::NeumannZeroFlux,
        }
    }

    pub fn from_data(grid: Grid, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), grid.cell_count(), "scalar data length mismatch");
        Self {
            grid,
            data,
            bc: ScalarBc::NeumannZeroFlux,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn bc(&self) -> ScalarBc {
        self.bc
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Discrete integral over the box: midpoint quadrature.
    pub fn integrate(&self) -> f64 {
        let vol = self.grid.cell_volume();
        self.data.iter().sum::<f64>() * vol
    }

    /// Discrete L^p norm; `p = f64::INFINITY` gives the max norm.
    pub fn norm_lp(&self, p: f64) -> Result<f64> {
        if !(p >= 1.0) {
            return Err(Error::Domain(format!("norm_lp requires p >= 1, got {p}")));
        }
        if p.is_infinite() {
            return Ok(self.max_abs());
        }
        let vol = self.grid.cell_volume();
        let sum: f64 = if p == 1.0 {
            self.data.iter().map(|v| v.abs()).sum()
        } else if p == 2.0 {
            self.data.iter().map(|v| v * v).sum()
        } else {
            self.data.iter().map(|v| v.abs().powf(p)).sum()
        };
        Ok((sum * vol).powf(1.0 / p))
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    pub fn axpy(&mut self, a: f64, other: &ScalarField) {
        assert_eq!(self.grid, other.grid, "grid mismatch");
        for (v, w) in self.data.iter_mut().zip(&other.data) {
            *v += a * w;
        }
    }
}

/// Face-staggered vector field (MAC layout).
///
/// Component `a` stores the `a`-normal value on every `a`-face. Boundary
/// faces are held at exactly zero; constructors and kernels never write
/// them, which realizes the Dirichlet condition bit-exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: Grid,
    comps: [Vec<f64>; 3],
    bc: VectorBc,
}

impl VectorField {
    /// Inactive axes carry no storage: every face normal to them is a
    /// boundary face and identically zero.
    pub fn zeros(grid: Grid) -> Self {
        let comp = |axis: usize| {
            if grid.is_active(axis) {
                vec![0.0; grid.face_count(axis)]
            } else {
                Vec::new()
            }
        };
        Self {
            grid,
            comps: [comp(0), comp(1), comp(2)],
            bc: VectorBc::DirichletZero,
        }
    }

    /// Sample `f(axis, position)` on interior faces; boundary faces stay zero.
    pub fn from_fn(grid: Grid, mut f: impl FnMut(usize, [f64; 3]) -> f64) -> Self {
        let mut v = Self::zeros(grid);
        for axis in 0..grid.dim() {
            let fd = grid.face_dims(axis);
            for k in 0..fd[2] {
                for j in 0..fd[1] {
                    for i in 0..fd[0] {
                        if grid.is_boundary_face(axis, i, j, k) {
                            continue;
                        }
                        let idx = grid.face_idx(axis, i, j, k);
                        v.comps[axis][idx] = f(axis, grid.face_center(axis, i, j, k));
                    }
                }
            }
        }
        v
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn bc(&self) -> VectorBc {
        self.bc
    }

    pub fn comp(&self, axis: usize) -> &[f64] {
        &self.comps[axis]
    }

    pub fn comp_mut(&mut self, axis: usize) -> &mut [f64] {
        &mut self.comps[axis]
    }

    /// Re-pin all boundary faces to exactly zero. Kernels that write whole
    /// component slices call this before handing the field back.
    pub fn zero_boundary_faces(&mut self) {
        let grid = self.grid;
        for axis in 0..grid.dim() {
            let fd = grid.face_dims(axis);
            for k in 0..fd[2] {
                for j in 0..fd[1] {
                    for i in 0..fd[0] {
                        if grid.is_boundary_face(axis, i, j, k) {
                            self.comps[axis][grid.face_idx(axis, i, j, k)] = 0.0;
                        }
                    }
                }
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.comps
            .iter()
            .all(|c| c.iter().all(|v| v.is_finite()))
    }

    pub fn max_abs(&self) -> f64 {
        self.comps
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Face-weighted L2 norm: each face value carries one cell volume.
    pub fn norm_l2(&self) -> f64 {
        let vol = self.grid.cell_volume();
        let sum: f64 = self
            .comps
            .iter()
            .map(|c| c.iter().map(|v| v * v).sum::<f64>())
            .sum();
        (sum * vol).sqrt()
    }

    pub fn axpy(&mut self, a: f64, other: &VectorField) {
        assert_eq!(self.grid, other.grid, "grid mismatch");
        for axis in 0..3 {
            for (v, w) in self.comps[axis].iter_mut().zip(&other.comps[axis]) {
                *v += a * w;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for c in &mut self.comps {
            for v in c.iter_mut() {
                *v *= s;
            }
        }
    }

    /// Face-weighted inner product.
    pub fn dot(&self, other: &VectorField) -> f64 {
        assert_eq!(self.grid, other.grid, "grid mismatch");
        let vol = self.grid.cell_volume();
        let mut sum = 0.0;
        for axis in 0..3 {
            for (v, w) in self.comps[axis].iter().zip(&other.comps[axis]) {
                sum += v * w;
            }
        }
        sum * vol
    }
}

impl Grid {
    /// True when face `(i, j, k)` of `axis` lies on the domain boundary.
    ///
    /// Faces normal to an inactive axis are all boundary faces, and the
    /// first/last face along the owning axis always is.
    #[inline]
    pub fn is_boundary_face(&self, axis: usize, i: usize, j: usize, k: usize) -> bool {
        let idx = [i, j, k];
        if idx[axis] == 0 || idx[axis] == self.dims[axis] {
            return true;
        }
        !self.is_active(axis)
    }
}

/// Average the two adjacent face values of each component back to centers.
///
/// Returns one cell-centered field per axis (all three; inactive axes give
/// zero fields).
pub fn face_to_center(v: &VectorField) -> [ScalarField; 3] {
    let grid = *v.grid();
    let [nx, ny, nz] = grid.dims();
    let mut out = [
        ScalarField::zeros(grid),
        ScalarField::zeros(grid),
        ScalarField::zeros(grid),
    ];
    for axis in 0..grid.dim() {
        let comp = v.comp(axis);
        let data = out[axis].data_mut();
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let lo = grid.face_idx(axis, i, j, k);
                    let mut up = [i, j, k];
                    up[axis] += 1;
                    let hi = grid.face_idx(axis, up[0], up[1], up[2]);
                    data[grid.cell_idx(i, j, k)] = 0.5 * (comp[lo] + comp[hi]);
                }
            }
        }
    }
    out
}
