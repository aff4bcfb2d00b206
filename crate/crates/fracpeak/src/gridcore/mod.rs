//! Lattice grids over the rescaled domain, fields with the exterior-zero
//! convention, and the discrete fractional operators built on them.
//!
//! Every grid is a box of the lattice `h·Z^n` (the origin is always a node),
//! which lets free-space and Dirichlet operators share one kernel.

mod dirichlet;
mod fft;
mod io;
mod symbol;

pub use dirichlet::{assemble_dirichlet, assemble_dirichlet_with, solve_dirichlet, DirichletOp, ExteriorDatum};
pub use fft::{apply_free, apply_periodic, image_sum, LatticeConv, PeriodicBox};
pub use io::{read_field, write_field, FieldMeta};
pub use symbol::{frac_constant, lattice_kernel_1d, LatticeKernel, Symbol};

use crate::error::{invalid, Result};
use serde::{Deserialize, Serialize};

/// Dense-solver threshold (number of interior unknowns).
pub const DENSE_LIMIT: usize = 4096;
/// Hard cap on interior unknowns (256² at desk scale).
pub const UNKNOWN_BUDGET: usize = 256 * 256;

/// A rectangular block of lattice nodes `x = (first + idx)·h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub n: usize,
    pub dims: [usize; 2],
    pub first: [i64; 2],
    pub h: f64,
}

impl Grid {
    pub fn new(n: usize, dims: [usize; 2], first: [i64; 2], h: f64) -> Self {
        assert!(n == 1 || n == 2, "only 1D and 2D grids are supported");
        let dims = if n == 1 { [dims[0], 1] } else { dims };
        let first = if n == 1 { [first[0], 0] } else { first };
        Grid { n, dims, first, h }
    }

    /// Symmetric grid with `half` nodes on each side of the origin along every axis.
    pub fn centered(n: usize, half: usize, h: f64) -> Self {
        let m = 2 * half + 1;
        Grid::new(n, [m, m], [-(half as i64), -(half as i64)], h)
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Quadrature weight of a node, `h^n`.
    pub fn cell(&self) -> f64 {
        self.h.powi(self.n as i32)
    }

    /// Row-major index: axis 0 is the slow axis.
    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.dims[1] + j
    }

    #[inline]
    pub fn multi(&self, idx: usize) -> [usize; 2] {
        [idx / self.dims[1], idx % self.dims[1]]
    }

    /// Integer lattice coordinates of a node.
    #[inline]
    pub fn lattice(&self, idx: usize) -> [i64; 2] {
        let [i, j] = self.multi(idx);
        [self.first[0] + i as i64, self.first[1] + j as i64]
    }

    /// Physical coordinates (in Ω_ε units) of a node; unused axes are zero.
    #[inline]
    pub fn coord(&self, idx: usize) -> [f64; 2] {
        let m = self.lattice(idx);
        [m[0] as f64 * self.h, m[1] as f64 * self.h]
    }

    pub fn coords(&self) -> Vec<[f64; 2]> {
        (0..self.len()).map(|k| self.coord(k)).collect()
    }

    /// Node index of lattice coordinates, if inside the block.
    pub fn locate(&self, m: [i64; 2]) -> Option<usize> {
        let i = m[0] - self.first[0];
        let j = m[1] - self.first[1];
        if i < 0 || j < 0 || i as usize >= self.dims[0] || j as usize >= self.dims[1] {
            return None;
        }
        Some(self.index(i as usize, j as usize))
    }
}

/// Shape of the original domain Ω (before rescaling by ε).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

impl Shape {
    pub fn dim(&self) -> usize {
        match self {
            Shape::Box { lo, .. } => lo.len(),
            Shape::Ball { center, .. } => center.len(),
        }
    }

    /// Inradius of Ω.
    pub fn inradius(&self) -> f64 {
        match self {
            Shape::Box { lo, hi } => lo
                .iter()
                .zip(hi)
                .map(|(a, b)| 0.5 * (b - a))
                .fold(f64::INFINITY, f64::min),
            Shape::Ball { radius, .. } => *radius,
        }
    }

    /// Is `xi` (in Ω coordinates) strictly inside Ω?
    pub fn contains(&self, xi: &[f64]) -> bool {
        self.boundary_distance(xi) > 0.0
    }

    /// Signed distance to ∂Ω, positive inside.
    pub fn boundary_distance(&self, xi: &[f64]) -> f64 {
        match self {
            Shape::Box { lo, hi } => lo
                .iter()
                .zip(hi)
                .zip(xi)
                .map(|((a, b), x)| (x - a).min(b - x))
                .fold(f64::INFINITY, f64::min),
            Shape::Ball { center, radius } => {
                let d2: f64 = center.iter().zip(xi).map(|(c, x)| (x - c) * (x - c)).sum();
                radius - d2.sqrt()
            }
        }
    }

    /// Bounding box `(lo, hi)`.
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            Shape::Box { lo, hi } => (lo.clone(), hi.clone()),
            Shape::Ball { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
        }
    }
}

/// The rescaled domain Ω_ε = Ω/ε discretized on the lattice `h·Z^n`.
#[derive(Debug, Clone)]
pub struct Domain {
    pub shape: Shape,
    pub eps: f64,
    pub grid: Grid,
    /// Number of exterior lattice layers kept around Ω_ε.
    pub margin: usize,
    mask: Vec<bool>,
    interior: Vec<usize>,
    slot: Vec<usize>,
}

impl Domain {
    /// Builds the grid covering Ω_ε plus `margin` exterior layers.
    pub fn new(shape: Shape, eps: f64, h: f64, margin: usize) -> Result<Self> {
        let n = shape.dim();
        if !(n == 1 || n == 2) {
            return Err(invalid(format!("dimension {n} not supported")));
        }
        if eps <= 0.0 || h <= 0.0 {
            return Err(invalid("eps and h must be positive"));
        }
        let (lo, hi) = shape.bounds();
        let mut dims = [1usize; 2];
        let mut first = [0i64; 2];
        for a in 0..n {
            let f = (lo[a] / (eps * h)).floor() as i64 - margin as i64;
            let l = (hi[a] / (eps * h)).ceil() as i64 + margin as i64;
            first[a] = f;
            dims[a] = (l - f + 1) as usize;
        }
        let grid = Grid::new(n, dims, first, h);
        let tol = 1e-9 * h;
        let mut mask = vec![false; grid.len()];
        let mut interior = Vec::new();
        let mut slot = vec![usize::MAX; grid.len()];
        for k in 0..grid.len() {
            let x = grid.coord(k);
            let xi: Vec<f64> = x[..n].iter().map(|v| v * eps).collect();
            if shape.boundary_distance(&xi) / eps > tol {
                mask[k] = true;
                slot[k] = interior.len();
                interior.push(k);
            }
        }
        if interior.len() > UNKNOWN_BUDGET {
            return Err(crate::Error::BudgetExceeded {
                requested: interior.len(),
                budget: UNKNOWN_BUDGET,
            });
        }
        Ok(Domain {
            shape,
            eps,
            grid,
            margin,
            mask,
            interior,
            slot,
        })
    }

    pub fn n(&self) -> usize {
        self.grid.n
    }

    pub fn h(&self) -> f64 {
        self.grid.h
    }

    /// Inradius of Ω_ε.
    pub fn inradius(&self) -> f64 {
        self.shape.inradius() / self.eps
    }

    /// Default δ_* (in Ω units): a quarter of the inradius of Ω.
    pub fn delta_star(&self) -> f64 {
        0.25 * self.shape.inradius()
    }

    pub fn is_interior(&self, idx: usize) -> bool {
        self.mask[idx]
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Grid indices of interior nodes, in increasing order.
    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    pub fn n_interior(&self) -> usize {
        self.interior.len()
    }

    /// Position of a grid node within the interior list.
    pub fn slot(&self, idx: usize) -> Option<usize> {
        let s = self.slot[idx];
        (s != usize::MAX).then_some(s)
    }

    /// Distance (Ω_ε units) from a point to ∂Ω_ε, positive inside.
    pub fn boundary_distance(&self, x: &[f64]) -> f64 {
        let xi: Vec<f64> = x.iter().map(|v| v * self.eps).collect();
        self.shape.boundary_distance(&xi) / self.eps
    }

    /// Values at interior nodes.
    pub fn restrict(&self, f: &Field) -> Vec<f64> {
        self.interior.iter().map(|&k| f.values[k]).collect()
    }

    /// Exterior-zero field from interior values.
    pub fn extend(&self, v: &[f64]) -> Field {
        assert_eq!(v.len(), self.interior.len());
        let mut f = Field::zeros(self.grid);
        for (&k, &x) in self.interior.iter().zip(v) {
            f.values[k] = x;
        }
        f.exterior_zero = true;
        f
    }

    /// Sets exterior values to zero and raises the flag.
    pub fn zero_exterior(&self, f: &mut Field) {
        for (v, &m) in f.values.iter_mut().zip(&self.mask) {
            if !m {
                *v = 0.0;
            }
        }
        f.exterior_zero = true;
    }

    /// Quadrature of `f·g` over Ω_ε.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        f.iter().zip(g).map(|(a, b)| a * b).sum::<f64>() * self.grid.cell()
    }

    /// Field sampled from a function of the node coordinates.
    pub fn sample(&self, f: impl FnMut([f64; 2]) -> f64) -> Field {
        Field::from_fn(self.grid, f)
    }
}

/// Real values on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub grid: Grid,
    pub values: Vec<f64>,
    /// When set, the field is exactly zero at every exterior node.
    pub exterior_zero: bool,
}

impl Field {
    pub fn zeros(grid: Grid) -> Self {
        Field {
            grid,
            values: vec![0.0; grid.len()],
            exterior_zero: false,
        }
    }

    pub fn from_fn(grid: Grid, mut f: impl FnMut([f64; 2]) -> f64) -> Self {
        let values = (0..grid.len()).map(|k| f(grid.coord(k))).collect();
        Field {
            grid,
            values,
            exterior_zero: false,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
            exterior_zero: self.exterior_zero && f(0.0) == 0.0,
        }
    }

    /// `self + a·other`.
    pub fn axpy(&self, a: f64, other: &Field) -> Field {
        assert_eq!(self.grid, other.grid);
        Field {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(x, y)| x + a * y)
                .collect(),
            exterior_zero: self.exterior_zero && other.exterior_zero,
        }
    }

    /// Checks the exterior-zero invariant against a domain mask.
    pub fn exterior_is_zero(&self, domain: &Domain) -> bool {
        self.values
            .iter()
            .zip(domain.mask())
            .all(|(v, &m)| m || *v == 0.0)
    }
}

/// Signed power `|t|^{p-1} t`.
#[inline]
pub fn spow(t: f64, p: f64) -> f64 {
    if p == 2.0 {
        t.abs() * t
    } else if p == 3.0 {
        t * t * t
    } else {
        t.abs().powf(p - 1.0) * t
    }
}

/// `|t|^q` with cheap paths for small integer exponents.
#[inline]
pub fn apow(t: f64, q: f64) -> f64 {
    let a = t.abs();
    if q == 1.0 {
        a
    } else if q == 2.0 {
        a * a
    } else if q == 3.0 {
        a * a * a
    } else if q == 4.0 {
        let b = a * a;
        b * b
    } else {
        a.powf(q)
    }
}
