//! Built-in potentials `V(ξ)` on the original domain Ω.

use crate::error::{invalid, Result};
use crate::gridcore::Shape;
use serde::{Deserialize, Serialize};

/// A positive `C²` potential with closed-form derivatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case")]
pub enum Potential {
    Constant {
        v0: f64,
    },
    /// `v0 + a|ξ − c|²`: a nondegenerate minimum for `a > 0`, maximum for `a < 0`.
    Quadratic {
        v0: f64,
        a: f64,
        #[serde(default)]
        center: [f64; 2],
    },
    /// `v0 + a((ξ_1² − r0²)² + ξ_2²)`: wells at `ξ_1 = ±r0`
    /// (minima for `a > 0`) and a saddle or maximum at the origin.
    DoubleWell {
        v0: f64,
        a: f64,
        r0: f64,
    },
    /// `v0 + amp·exp(−|ξ − c|²/(2w²))`: a strict maximum for `amp > 0`
    /// with no plateau.
    Bump {
        v0: f64,
        amp: f64,
        width: f64,
        #[serde(default)]
        center: [f64; 2],
    },
}

impl Potential {
    fn at(xi: &[f64]) -> [f64; 2] {
        [xi[0], xi.get(1).copied().unwrap_or(0.0)]
    }

    pub fn value(&self, xi: &[f64]) -> f64 {
        let x = Self::at(xi);
        match *self {
            Potential::Constant { v0 } => v0,
            Potential::Quadratic { v0, a, center } => {
                let d = [x[0] - center[0], x[1] - center[1]];
                v0 + a * (d[0] * d[0] + d[1] * d[1])
            }
            Potential::DoubleWell { v0, a, r0 } => {
                let t = x[0] * x[0] - r0 * r0;
                v0 + a * (t * t + x[1] * x[1])
            }
            Potential::Bump {
                v0,
                amp,
                width,
                center,
            } => {
                let d = [x[0] - center[0], x[1] - center[1]];
                v0 + amp * (-(d[0] * d[0] + d[1] * d[1]) / (2.0 * width * width)).exp()
            }
        }
    }

    pub fn grad(&self, xi: &[f64]) -> [f64; 2] {
        let x = Self::at(xi);
        match *self {
            Potential::Constant { .. } => [0.0, 0.0],
            Potential::Quadratic { a, center, .. } => {
                [2.0 * a * (x[0] - center[0]), 2.0 * a * (x[1] - center[1])]
            }
            Potential::DoubleWell { a, r0, .. } => {
                [4.0 * a * x[0] * (x[0] * x[0] - r0 * r0), 2.0 * a * x[1]]
            }
            Potential::Bump {
                amp, width, center, ..
            } => {
                let d = [x[0] - center[0], x[1] - center[1]];
                let w2 = width * width;
                let e = amp * (-(d[0] * d[0] + d[1] * d[1]) / (2.0 * w2)).exp();
                [-e * d[0] / w2, -e * d[1] / w2]
            }
        }
    }

    pub fn hessian(&self, xi: &[f64]) -> [[f64; 2]; 2] {
        let x = Self::at(xi);
        match *self {
            Potential::Constant { .. } => [[0.0; 2]; 2],
            Potential::Quadratic { a, .. } => [[2.0 * a, 0.0], [0.0, 2.0 * a]],
            Potential::DoubleWell { a, r0, .. } => {
                [[4.0 * a * (3.0 * x[0] * x[0] - r0 * r0), 0.0], [0.0, 2.0 * a]]
            }
            Potential::Bump {
                amp, width, center, ..
            } => {
                let d = [x[0] - center[0], x[1] - center[1]];
                let w2 = width * width;
                let e = amp * (-(d[0] * d[0] + d[1] * d[1]) / (2.0 * w2)).exp();
                let mut h = [[0.0; 2]; 2];
                for a in 0..2 {
                    for b in 0..2 {
                        let delta = if a == b { 1.0 } else { 0.0 };
                        h[a][b] = e * (d[a] * d[b] / (w2 * w2) - delta / w2);
                    }
                }
                h
            }
        }
    }

    /// Central-difference gradient, the fallback for checking closed forms.
    pub fn grad_fd(&self, xi: &[f64], step: f64) -> [f64; 2] {
        let mut g = [0.0; 2];
        for (j, gj) in g.iter_mut().enumerate().take(xi.len()) {
            let mut a = xi.to_vec();
            let mut b = xi.to_vec();
            a[j] += step;
            b[j] -= step;
            *gj = (self.value(&a) - self.value(&b)) / (2.0 * step);
        }
        g
    }

    /// Nondegenerate critical points known in closed form, in dimension `n`.
    pub fn critical_points(&self, n: usize) -> Vec<[f64; 2]> {
        let keep = |c: [f64; 2]| if n == 1 { [c[0], 0.0] } else { c };
        match *self {
            Potential::Constant { .. } => vec![],
            Potential::Quadratic { center, .. } | Potential::Bump { center, .. } => vec![keep(center)],
            Potential::DoubleWell { r0, .. } => vec![[-r0, 0.0], [r0, 0.0]],
        }
    }

    /// Lower bound of `V` over Ω, sampled on a 201^n lattice of the
    /// bounding box (exact for the built-ins' extrema on that lattice).
    pub fn inf_over(&self, shape: &Shape) -> f64 {
        let n = shape.dim();
        let (lo, hi) = match shape {
            Shape::Box { lo, hi } => (lo.clone(), hi.clone()),
            Shape::Ball { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
        };
        let m = 200;
        let mut best = f64::INFINITY;
        let pts = |a: usize, i: usize| lo[a] + (hi[a] - lo[a]) * i as f64 / m as f64;
        for i in 0..=m {
            if n == 1 {
                best = best.min(self.value(&[pts(0, i)]));
                continue;
            }
            for j in 0..=m {
                let xi = [pts(0, i), pts(1, j)];
                if shape.boundary_distance(&xi) >= 0.0 {
                    best = best.min(self.value(&xi));
                }
            }
        }
        best
    }

    /// Checks `inf_Ω V > 0`.
    pub fn validate(&self, shape: &Shape) -> Result<()> {
        let m = self.inf_over(shape);
        if !(m > 0.0) {
            return Err(invalid(format!("potential is not positive on the domain (inf {m:.3e})")));
        }
        Ok(())
    }
}
