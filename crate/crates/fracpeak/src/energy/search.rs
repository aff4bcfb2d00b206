//! Critical configurations of the asymptotic reduced energy.

use super::reduced::{asymptotic_energy, asymptotic_gradient, Mode};
use super::Potential;
use crate::corrections::{dist, PeakConfig};
use crate::error::{invalid, Error, Result};
use crate::gridcore::Shape;
use crate::groundstate::GroundState;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Where peak locations `ξ_i ∈ Ω` may live.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Region {
    /// `Ξ_η`: every `ξ_i` at least `δ_*` from `∂Ω`, mutual distances in
    /// `Ω_ε` at least `eta_min`.
    Xi { shape: Shape, eta_min: f64 },
    /// `A = {ξ_i ∈ B(center, radius), min|ξ_i − ξ_ℓ| > ε^{1−α/(n+2s)}}`.
    Cluster { center: [f64; 2], radius: f64, alpha: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    pub restarts: usize,
    pub seed: u64,
    /// Stationarity tolerance on the projected gradient in `q`.
    pub tol: f64,
    /// Critical points closer than this (in `ξ`) are the same.
    pub dedup: f64,
    pub max_iter: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            restarts: 20,
            seed: 0,
            tol: 1e-8,
            dedup: 1e-4,
            max_iter: 20_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Placement {
    Interior,
    Boundary,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriticalSearch {
    pub config: PeakConfig,
    /// Peak locations in Ω.
    pub xi: Vec<[f64; 2]>,
    pub value: f64,
    /// Projected gradient norm in `q`.
    pub grad_norm: f64,
    pub placement: Placement,
    /// Distinct stationary configurations found, best first.
    pub distinct: Vec<Vec<[f64; 2]>>,
    /// Energy along the best run.
    pub trace: Vec<f64>,
}

struct Problem<'a> {
    v: &'a Potential,
    gs: &'a GroundState,
    eps: f64,
    n: usize,
    k: usize,
    region: &'a Region,
}

impl Problem<'_> {
    fn to_q(&self, x: &[f64]) -> Vec<[f64; 2]> {
        (0..self.k)
            .map(|i| {
                let mut c = [0.0; 2];
                for j in 0..self.n {
                    c[j] = x[i * self.n + j] / self.eps;
                }
                c
            })
            .collect()
    }

    fn points(&self, x: &[f64]) -> Vec<[f64; 2]> {
        (0..self.k)
            .map(|i| {
                let mut c = [0.0; 2];
                c[..self.n].copy_from_slice(&x[i * self.n..(i + 1) * self.n]);
                c
            })
            .collect()
    }

    fn value(&self, x: &[f64]) -> f64 {
        asymptotic_energy(&self.to_q(x), self.n, self.eps, self.v, self.gs)
    }

    /// Gradient in `ξ`.
    fn grad(&self, x: &[f64]) -> Vec<f64> {
        asymptotic_gradient(&self.to_q(x), self.n, self.eps, self.v, self.gs)
            .into_iter()
            .map(|g| g / self.eps)
            .collect()
    }

    fn floor(&self) -> f64 {
        match self.region {
            Region::Xi { eta_min, .. } => eta_min * self.eps,
            Region::Cluster { alpha, .. } => {
                let e = self.n as f64 + 2.0 * self.gs.s;
                self.eps.powf(1.0 - alpha / e)
            }
        }
    }

    /// Signed slack of the location constraint of one point (positive inside).
    fn slack(&self, c: [f64; 2]) -> f64 {
        match self.region {
            Region::Xi { shape, .. } => shape.boundary_distance(&c[..self.n]) - 0.25 * shape.inradius(),
            Region::Cluster { center, radius, .. } => radius - dist(c, *center),
        }
    }

    fn project(&self, x: &mut [f64]) {
        let n = self.n;
        if let Region::Cluster { center, radius, .. } = self.region {
            for i in 0..self.k {
                let c = &mut x[i * n..(i + 1) * n];
                let r = (0..n).map(|j| (c[j] - center[j]).powi(2)).sum::<f64>().sqrt();
                if r > *radius {
                    for j in 0..n {
                        c[j] = center[j] + (c[j] - center[j]) * radius / r;
                    }
                }
            }
        }
        let floor = self.floor();
        for _ in 0..8 {
            let mut moved = false;
            for i in 0..self.k {
                for l in i + 1..self.k {
                    let d: Vec<f64> = (0..n).map(|j| x[l * n + j] - x[i * n + j]).collect();
                    let r = d.iter().map(|t| t * t).sum::<f64>().sqrt();
                    if r < floor {
                        let dir: Vec<f64> = if r > 0.0 {
                            d.iter().map(|t| t / r).collect()
                        } else {
                            (0..n).map(|j| if j == 0 { 1.0 } else { 0.0 }).collect()
                        };
                        let push = 0.5 * (floor - r) * (1.0 + 1e-12);
                        for j in 0..n {
                            x[i * n + j] -= push * dir[j];
                            x[l * n + j] += push * dir[j];
                        }
                        moved = true;
                    }
                }
            }
            if !moved {
                break;
            }
        }
    }

    fn on_boundary(&self, x: &[f64]) -> bool {
        let pts = self.points(x);
        let scale = match self.region {
            Region::Xi { shape, .. } => shape.inradius(),
            Region::Cluster { radius, .. } => *radius,
        };
        let tight = 1e-6;
        if pts.iter().any(|&c| self.slack(c) <= tight * scale) {
            return true;
        }
        let floor = self.floor();
        for i in 0..self.k {
            for l in i + 1..self.k {
                if dist(pts[i], pts[l]) <= floor * (1.0 + tight) {
                    return true;
                }
            }
        }
        false
    }

    fn admissible(&self, x: &[f64]) -> bool {
        let pts = self.points(x);
        let floor = self.floor();
        pts.iter().all(|&c| self.slack(c) > 0.0)
            && (0..self.k).all(|i| (i + 1..self.k).all(|l| dist(pts[i], pts[l]) > floor))
    }

    /// Projected gradient in `q` units.
    fn projected_grad_norm(&self, x: &[f64], g: &[f64]) -> f64 {
        let t = 1e-7;
        let mut y: Vec<f64> = x.iter().zip(g).map(|(a, b)| a + t * b).collect();
        self.project(&mut y);
        let s = y.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() / t;
        s * self.eps
    }

    /// Newton on `∇I = 0` with a finite-difference Jacobian.
    fn newton(&self, x0: &[f64], tol: f64) -> Option<Vec<f64>> {
        let m = x0.len();
        let mut x = x0.to_vec();
        for _ in 0..60 {
            let g = self.grad(&x);
            let gn = g.iter().map(|t| t * t).sum::<f64>().sqrt() * self.eps;
            if gn <= tol {
                return Some(x);
            }
            let mut jac = DMatrix::zeros(m, m);
            for c in 0..m {
                let hs = 1e-6 * x[c].abs().max(1e-2);
                let mut a = x.clone();
                let mut b = x.clone();
                a[c] += hs;
                b[c] -= hs;
                let (ga, gb) = (self.grad(&a), self.grad(&b));
                for r in 0..m {
                    jac[(r, c)] = (ga[r] - gb[r]) / (2.0 * hs);
                }
            }
            let dx = jac.lu().solve(&DVector::from_vec(g))?;
            for c in 0..m {
                x[c] -= dx[c];
            }
            if x.iter().any(|t| !t.is_finite()) {
                return None;
            }
        }
        None
    }

    /// Projected gradient ascent with backtracking, then a Newton polish
    /// when the maximizer is interior.
    fn ascend(&self, x0: &[f64], opts: &SearchOptions, trace: &mut Vec<f64>) -> (Vec<f64>, f64) {
        let mut x = x0.to_vec();
        self.project(&mut x);
        let mut f = self.value(&x);
        let mut step = 1e-2;
        trace.push(f);
        for _ in 0..opts.max_iter {
            let g = self.grad(&x);
            if self.projected_grad_norm(&x, &g) <= opts.tol {
                break;
            }
            let mut accepted = false;
            while step > 1e-18 {
                let mut y: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a + step * b).collect();
                self.project(&mut y);
                let fy = self.value(&y);
                let lin: f64 = g.iter().zip(y.iter().zip(&x)).map(|(gi, (a, b))| gi * (a - b)).sum();
                if fy >= f + 1e-4 * lin && fy.is_finite() {
                    let moved = y.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                    x = y;
                    f = fy;
                    trace.push(f);
                    step *= 2.0;
                    accepted = moved > 0.0;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
            if self.projected_grad_norm(&x, &self.grad(&x)) <= 1e-5 && !self.on_boundary(&x) {
                if let Some(y) = self.newton(&x, opts.tol) {
                    if self.admissible(&y) && self.value(&y) >= f - 1e-12 * f.abs() {
                        x = y;
                        f = self.value(&x);
                        trace.push(f);
                        break;
                    }
                }
            }
        }
        let pg = self.projected_grad_norm(&x, &self.grad(&x));
        (x, pg)
    }

    fn random_start(&self, rng: &mut ChaCha8Rng) -> Option<Vec<f64>> {
        let (lo, hi) = match self.region {
            Region::Xi { shape, .. } => shape.bounds(),
            Region::Cluster { center, radius, .. } => (
                (0..self.n).map(|j| center[j] - radius).collect(),
                (0..self.n).map(|j| center[j] + radius).collect(),
            ),
        };
        for _ in 0..10_000 {
            let x: Vec<f64> = (0..self.k * self.n)
                .map(|c| {
                    let j = c % self.n;
                    rng.random_range(lo[j]..hi[j])
                })
                .collect();
            if self.admissible(&x) {
                return Some(x);
            }
        }
        None
    }
}

fn canonical(mut pts: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts
}

/// Critical configuration of the asymptotic `I_ε` with `k` peaks.
///
/// In `Ξ_η` with at least `k` closed-form critical points of `V`, Newton
/// starts from those points (they need not be maxima). Otherwise `I_ε` is
/// maximized by projected ascent from `restarts` seeded random starts, and
/// a best maximizer on the boundary of the region gives `HitBoundary`.
pub fn find_critical_config(
    v: &Potential,
    gs: &GroundState,
    eps: f64,
    k: usize,
    region: &Region,
    mode: Mode<'_>,
    opts: &SearchOptions,
) -> Result<CriticalSearch> {
    if let Mode::Exact(_) = mode {
        return Err(invalid(
            "critical search runs on the asymptotic energy; check exact gradients at the result instead",
        ));
    }
    if k == 0 {
        return Err(invalid("need at least one peak"));
    }
    let n = gs.n;
    let pb = Problem {
        v,
        gs,
        eps,
        n,
        k,
        region,
    };
    let crit = v.critical_points(n);
    let mut trace = Vec::new();
    let mut found: Vec<(Vec<f64>, f64, f64)> = Vec::new();
    if matches!(region, Region::Xi { .. }) && crit.len() >= k {
        let x0: Vec<f64> = crit[..k].iter().flat_map(|c| c[..n].to_vec()).collect();
        let x = pb.newton(&x0, opts.tol).ok_or(Error::NoConvergence {
            iterations: 60,
            residual: f64::NAN,
            trace: vec![],
        })?;
        let pg = pb.projected_grad_norm(&x, &pb.grad(&x));
        trace.push(pb.value(&x));
        found.push((x.clone(), pb.value(&x), pg));
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        for _ in 0..opts.restarts.max(1) {
            let Some(x0) = pb.random_start(&mut rng) else {
                return Err(invalid("no admissible configuration found in the region"));
            };
            let mut t = Vec::new();
            let (x, pg) = pb.ascend(&x0, opts, &mut t);
            let f = pb.value(&x);
            if found.is_empty() || f > found[0].1 {
                trace = t;
            }
            found.push((x, f, pg));
            found.sort_by(|a, b| b.1.total_cmp(&a.1));
        }
    }
    let mut distinct: Vec<Vec<[f64; 2]>> = Vec::new();
    for (x, _, _) in &found {
        let c = canonical(pb.points(x));
        let same = distinct.iter().any(|d| {
            d.iter()
                .zip(&c)
                .all(|(a, b)| (a[0] - b[0]).abs().max((a[1] - b[1]).abs()) < opts.dedup)
        });
        if !same {
            distinct.push(c);
        }
    }
    let (x, value, grad_norm) = found.swap_remove(0);
    let placement = if pb.on_boundary(&x) || !pb.admissible(&x) {
        Placement::Boundary
    } else {
        Placement::Interior
    };
    if placement == Placement::Boundary {
        return Err(Error::HitBoundary);
    }
    let xi = pb.points(&x);
    let config = PeakConfig::from_xi(n, eps, &xi, v)?;
    Ok(CriticalSearch {
        config,
        xi,
        value,
        grad_norm,
        placement,
        distinct,
        trace,
    })
}
