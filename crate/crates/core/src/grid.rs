//! Phase-space discretization: the spatial grid, the velocity ball `A` with its
//! quadrature, and the discrete alpha-density living on their product.

use crate::error::{invalid, Error, Result};

/// Largest dimension the index arithmetic is written for. Construction only
/// accepts 1 and 2.
pub(crate) const MAX_DIM: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Boundary {
    Periodic,
    Outflow,
}

/// Uniform Cartesian grid of cubic cells with spacing `h`.
///
/// Cells are numbered with the first axis varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGrid {
    dim: usize,
    cells: [usize; MAX_DIM],
    h: f64,
    origin: [f64; MAX_DIM],
    boundary: Boundary,
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 1 || dim == 2 {
        Ok(())
    } else {
        Err(Error::UnsupportedDimension(dim))
    }
}

impl SpatialGrid {
    pub fn new(
        dim: usize,
        cells_per_axis: &[usize],
        h: f64,
        origin: &[f64],
        boundary: Boundary,
    ) -> Result<Self> {
        check_dim(dim)?;
        if cells_per_axis.len() != dim || origin.len() != dim {
            return Err(invalid(
                "grid.nx",
                format!("expected {dim} entries for cells and origin"),
            ));
        }
        if let Some(n) = cells_per_axis.iter().find(|&&n| n < 4) {
            return Err(invalid("grid.nx", format!("need at least 4 cells per axis, got {n}")));
        }
        if !(h.is_finite() && h > 0.0) {
            return Err(invalid("grid.h", format!("spacing must be positive, got {h}")));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(invalid("grid.origin", "origin must be finite"));
        }
        let mut cells = [1; MAX_DIM];
        let mut org = [0.0; MAX_DIM];
        cells[..dim].copy_from_slice(cells_per_axis);
        org[..dim].copy_from_slice(origin);
        Ok(Self {
            dim,
            cells,
            h,
            origin: org,
            boundary,
        })
    }

    /// `n` cells per axis, origin at zero.
    pub fn uniform(dim: usize, n: usize, h: f64, boundary: Boundary) -> Result<Self> {
        check_dim(dim)?;
        Self::new(dim, &vec![n; dim], h, &vec![0.0; dim], boundary)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells_per_axis(&self) -> &[usize] {
        &self.cells[..self.dim]
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin[..self.dim]
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn n_cells(&self) -> usize {
        self.cells[..self.dim].iter().product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    pub fn domain_volume(&self) -> f64 {
        self.cell_volume() * self.n_cells() as f64
    }

    /// Length of the domain along `axis`.
    pub fn extent(&self, axis: usize) -> f64 {
        self.cells[axis] as f64 * self.h
    }

    /// Geometric center of the domain.
    pub fn domain_center(&self) -> Vec<f64> {
        (0..self.dim)
            .map(|a| self.origin[a] + 0.5 * self.extent(a))
            .collect()
    }

    pub(crate) fn multi_index(&self, cell: usize) -> [usize; MAX_DIM] {
        let mut idx = [0; MAX_DIM];
        let mut rest = cell;
        for (a, slot) in idx.iter_mut().enumerate().take(self.dim) {
            *slot = rest % self.cells[a];
            rest /= self.cells[a];
        }
        idx
    }

    pub(crate) fn linear_index(&self, idx: &[usize; MAX_DIM]) -> usize {
        let mut cell = 0;
        for a in (0..self.dim).rev() {
            cell = cell * self.cells[a] + idx[a];
        }
        cell
    }

    /// Cell center coordinates.
    pub fn center(&self, cell: usize) -> Vec<f64> {
        let idx = self.multi_index(cell);
        (0..self.dim)
            .map(|a| self.origin[a] + (idx[a] as f64 + 0.5) * self.h)
            .collect()
    }

    /// Neighbouring cell one step along `axis` (`forward` = increasing index).
    /// `None` when the step leaves an outflow domain.
    pub fn neighbor(&self, cell: usize, axis: usize, forward: bool) -> Option<usize> {
        let mut idx = self.multi_index(cell);
        let n = self.cells[axis];
        let i = idx[axis];
        idx[axis] = match (forward, self.boundary) {
            (true, _) if i + 1 < n => i + 1,
            (false, _) if i > 0 => i - 1,
            (true, Boundary::Periodic) => 0,
            (false, Boundary::Periodic) => n - 1,
            (_, Boundary::Outflow) => return None,
        };
        Some(self.linear_index(&idx))
    }

    /// Cell containing `point`. Off-grid points wrap (periodic) or clamp
    /// to the nearest boundary cell (outflow).
    pub fn locate(&self, point: &[f64]) -> usize {
        let mut idx = [0; MAX_DIM];
        for a in 0..self.dim {
            let n = self.cells[a] as i64;
            let k = ((point[a] - self.origin[a]) / self.h).floor() as i64;
            idx[a] = match self.boundary {
                Boundary::Periodic => k.rem_euclid(n) as usize,
                Boundary::Outflow => k.clamp(0, n - 1) as usize,
            };
        }
        self.linear_index(&idx)
    }
}

/// Quadrature of the velocity ball `A`: nodes with volume weights, plus the
/// scaling constant `kappa` applied once per velocity integration.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityGrid {
    dim: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    speeds: Vec<f64>,
    radius: f64,
    kappa: f64,
}

impl VelocityGrid {
    /// Cell centers of a uniform `nodes_per_axis`-lattice over `[-R, R]^dim`,
    /// clipped to the closed ball of radius `R`. `kappa` defaults to 1.
    pub fn build(dim: usize, radius: f64, nodes_per_axis: usize) -> Result<Self> {
        check_dim(dim)?;
        if nodes_per_axis < 2 {
            return Err(invalid(
                "velocity.nodes_per_axis",
                format!("need at least 2 nodes per axis, got {nodes_per_axis}"),
            ));
        }
        if !(radius.is_finite() && radius > 0.0) {
            return Err(invalid("velocity.radius", format!("must be positive, got {radius}")));
        }
        let spacing = 2.0 * radius / nodes_per_axis as f64;
        let coord = |k: usize| -radius + (k as f64 + 0.5) * spacing;
        let total = nodes_per_axis.pow(dim as u32);
        let mut nodes = Vec::new();
        let mut point = vec![0.0; dim];
        for flat in 0..total {
            let mut rest = flat;
            for p in point.iter_mut() {
                *p = coord(rest % nodes_per_axis);
                rest /= nodes_per_axis;
            }
            if norm(&point) <= radius {
                nodes.extend_from_slice(&point);
            }
        }
        let n = nodes.len() / dim;
        let weights = vec![spacing.powi(dim as i32); n];
        Self::from_nodes(dim, nodes, weights, radius)
    }

    /// Arbitrary node set (flattened, `dim` coordinates per node).
    pub fn from_nodes(dim: usize, nodes: Vec<f64>, weights: Vec<f64>, radius: f64) -> Result<Self> {
        check_dim(dim)?;
        if nodes.len() != weights.len() * dim {
            return Err(Error::ShapeMismatch {
                expected: weights.len() * dim,
                actual: nodes.len(),
            });
        }
        if weights.is_empty() {
            return Err(invalid("velocity.nodes", "velocity grid has no nodes"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(invalid("velocity.weights", "weights must be positive"));
        }
        let speeds: Vec<f64> = nodes.chunks(dim).map(norm).collect();
        if speeds.iter().any(|s| !s.is_finite() || *s > radius * (1.0 + 1e-12)) {
            return Err(invalid("velocity.nodes", format!("node outside the ball of radius {radius}")));
        }
        Ok(Self {
            dim,
            nodes,
            weights,
            speeds,
            radius,
            kappa: 1.0,
        })
    }

    pub fn with_kappa(mut self, kappa: f64) -> Result<Self> {
        if !(kappa.is_finite() && kappa >= 0.0) {
            return Err(invalid("params.kappa", format!("must be non-negative, got {kappa}")));
        }
        self.kappa = kappa;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn node(&self, j: usize) -> &[f64] {
        &self.nodes[j * self.dim..(j + 1) * self.dim]
    }

    pub fn nodes(&self) -> impl Iterator<Item = &[f64]> {
        self.nodes.chunks(self.dim)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, j: usize) -> f64 {
        self.weights[j]
    }

    /// Euclidean norm of node `j`.
    pub fn speed(&self, j: usize) -> f64 {
        self.speeds[j]
    }

    pub fn speeds(&self) -> &[f64] {
        &self.speeds
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Largest absolute velocity component over all nodes.
    pub fn max_abs_component(&self) -> f64 {
        self.nodes.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// Index of the node equal to `-alpha_j`, if present.
    pub fn mirror(&self, j: usize) -> Option<usize> {
        let a = self.node(j);
        (0..self.len()).find(|&k| {
            self.node(k)
                .iter()
                .zip(a)
                .all(|(x, y)| (x + y).abs() <= 1e-12 * self.radius)
        })
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Discrete alpha-density: mass per (space volume x velocity volume), stored
/// row-major by spatial cell.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaField {
    n_cells: usize,
    n_nodes: usize,
    values: Vec<f64>,
    pub t: f64,
}

impl AlphaField {
    pub fn zeros(n_cells: usize, n_nodes: usize) -> Self {
        Self {
            n_cells,
            n_nodes,
            values: vec![0.0; n_cells * n_nodes],
            t: 0.0,
        }
    }

    pub fn for_grids(spatial: &SpatialGrid, velocity: &VelocityGrid) -> Self {
        Self::zeros(spatial.n_cells(), velocity.len())
    }

    /// Wraps `values` after checking shape, finiteness and sign.
    pub fn from_values(n_cells: usize, n_nodes: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_cells * n_nodes {
            return Err(Error::ShapeMismatch {
                expected: n_cells * n_nodes,
                actual: values.len(),
            });
        }
        let field = Self {
            n_cells,
            n_nodes,
            values,
            t: 0.0,
        };
        field.validate()?;
        Ok(field)
    }

    /// Like [`AlphaField::from_values`] but skips the sign and finiteness checks.
    pub(crate) fn from_raw(n_cells: usize, n_nodes: usize, values: Vec<f64>, t: f64) -> Self {
        debug_assert_eq!(values.len(), n_cells * n_nodes);
        Self {
            n_cells,
            n_nodes,
            values,
            t,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (idx, v) in self.values.iter().enumerate() {
            if !v.is_finite() || *v < 0.0 {
                return Err(invalid(
                    "field",
                    format!(
                        "entry (cell {}, node {}) = {v} is not a finite non-negative value",
                        idx / self.n_nodes,
                        idx % self.n_nodes
                    ),
                ));
            }
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
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

    pub fn get(&self, cell: usize, node: usize) -> f64 {
        self.values[cell * self.n_nodes + node]
    }

    pub fn set(&mut self, cell: usize, node: usize, value: f64) {
        self.values[cell * self.n_nodes + node] = value;
    }

    pub fn row(&self, cell: usize) -> &[f64] {
        &self.values[cell * self.n_nodes..(cell + 1) * self.n_nodes]
    }

    pub fn row_mut(&mut self, cell: usize) -> &mut [f64] {
        &mut self.values[cell * self.n_nodes..(cell + 1) * self.n_nodes]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.n_nodes)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn scale(&mut self, c: f64) {
        self.values.iter_mut().for_each(|v| *v *= c);
    }

    pub(crate) fn check_shape(&self, spatial: &SpatialGrid, velocity: &VelocityGrid) -> Result<()> {
        let expected = spatial.n_cells() * velocity.len();
        if self.n_cells != spatial.n_cells() || self.n_nodes != velocity.len() {
            return Err(Error::ShapeMismatch {
                expected,
                actual: self.values.len(),
            });
        }
        Ok(())
    }
}

/// `kappa = (3 / 4 pi) (delta / epsilon)^3`.
pub fn kappa_from_scales(delta: f64, epsilon: f64) -> Result<f64> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(invalid("params.epsilon", format!("must be positive, got {epsilon}")));
    }
    if !(delta.is_finite() && delta >= 0.0) {
        return Err(invalid("params.delta", format!("must be non-negative, got {delta}")));
    }
    Ok(3.0 / (4.0 * std::f64::consts::PI) * (delta / epsilon).powi(3))
}

/// Short-time transport approximation of the alpha-density: fluid now at `x`
/// with velocity `alpha` came from (or is found at) `x + delta * alpha`, so
/// `rho(x, alpha) = g(x + delta * alpha)` on the velocity set `V(x)`.
///
/// `g` is sampled piecewise-constant per cell using the grid's boundary rule.
pub fn alpha_density_from_transport<F>(
    g: &[f64],
    in_velocity_set: F,
    delta: f64,
    spatial: &SpatialGrid,
    velocity: &VelocityGrid,
) -> Result<AlphaField>
where
    F: Fn(usize, usize) -> bool,
{
    if g.len() != spatial.n_cells() {
        return Err(Error::ShapeMismatch {
            expected: spatial.n_cells(),
            actual: g.len(),
        });
    }
    if g.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(invalid("g", "spatial density must be finite and non-negative"));
    }
    let mut field = AlphaField::for_grids(spatial, velocity);
    let mut point = vec![0.0; spatial.dim()];
    for cell in 0..spatial.n_cells() {
        let x = spatial.center(cell);
        for j in 0..velocity.len() {
            if !in_velocity_set(cell, j) {
                continue;
            }
            for ((p, xa), a) in point.iter_mut().zip(&x).zip(velocity.node(j)) {
                *p = xa + delta * a;
            }
            field.set(cell, j, g[spatial.locate(&point)]);
        }
    }
    Ok(field)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldStats {
    pub min: f64,
    pub max: f64,
    pub total_mass: f64,
    /// Fraction of (cell, node) entries that are strictly positive.
    pub support_fraction: f64,
}

/// Total mass is `kappa * sum_i sum_j rho[i,j] w_j h^dim`.
pub fn field_stats(field: &AlphaField, velocity: &VelocityGrid, spatial: &SpatialGrid) -> FieldStats {
    let w = velocity.weights();
    let sum: f64 = field
        .rows()
        .map(|row| row.iter().zip(w).map(|(r, w)| r * w).sum::<f64>())
        .sum();
    let positive = field.values().iter().filter(|v| **v > 0.0).count();
    let n = field.values().len().max(1);
    FieldStats {
        min: field.min(),
        max: field.max(),
        total_mass: velocity.kappa() * sum * spatial.cell_volume(),
        support_fraction: positive as f64 / n as f64,
    }
}
