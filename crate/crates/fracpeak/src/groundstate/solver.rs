//! Ground state on a periodic box: Nehari-normalized semi-implicit flow,
//! then Newton–GMRES on the even (dihedral) subspace.

use crate::error::{Error, Result};
use crate::gridcore::{apow, frac_constant, image_sum, spow, PeriodicBox, Symbol};
use crate::linalg::{self, sup};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy)]
pub(crate) struct BoxProblem {
    pub n: usize,
    pub s: f64,
    pub p: f64,
    pub symbol: Symbol,
    pub h: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct BoxSolution {
    pub pbox: PeriodicBox,
    pub u: Vec<f64>,
    pub flow_steps: usize,
    pub newton_trace: Vec<f64>,
    /// Box values are free-space values (images already accounted for).
    pub free_space: bool,
}

impl BoxProblem {
    /// Table of `σ(k) + 1` over Fourier indices.
    pub fn l_table(&self, pbox: &PeriodicBox) -> Vec<f64> {
        let (sym, s, h) = (self.symbol, self.s, self.h);
        pbox.multiplier_table(|k| sym.eval(k, s, h) + 1.0)
    }
}

/// Projects onto functions even in every coordinate (and symmetric under
/// the axis swap in 2D). Values are in wrapped order.
pub(crate) fn symmetrize(pbox: &PeriodicBox, v: &mut [f64]) {
    let m0 = pbox.dims[0];
    let neg = |i: usize, m: usize| (m - i) % m;
    if pbox.n == 1 {
        for i in 1..=m0 / 2 {
            let j = neg(i, m0);
            let a = 0.5 * (v[i] + v[j]);
            v[i] = a;
            v[j] = a;
        }
        return;
    }
    let m1 = pbox.dims[1];
    assert_eq!(m0, m1, "dihedral symmetrization needs a square box");
    let src = v.to_vec();
    for i in 0..m0 {
        for j in 0..m1 {
            let (ni, nj) = (neg(i, m0), neg(j, m1));
            let at = |a: usize, b: usize| src[a * m1 + b];
            v[i * m1 + j] = 0.125
                * (at(i, j) + at(ni, j) + at(i, nj) + at(ni, nj) + at(j, i) + at(nj, i) + at(j, ni) + at(nj, ni));
        }
    }
}

fn radius(pbox: &PeriodicBox, idx: usize) -> f64 {
    let x = pbox.coord(idx);
    (x[0] * x[0] + x[1] * x[1]).sqrt()
}

/// Even positive bump; `seed = None` gives the deterministic default.
pub(crate) fn initial_bump(pbox: &PeriodicBox, seed: Option<u64>) -> Vec<f64> {
    let (amp, width, wig, freq) = match seed {
        None => (1.5, 1.0, 0.0, 1.0),
        Some(sd) => {
            let mut rng = ChaCha8Rng::seed_from_u64(sd);
            (
                rng.random_range(0.5..3.0),
                rng.random_range(0.5..2.0),
                rng.random_range(-0.3..0.3),
                rng.random_range(0.5..2.0),
            )
        }
    };
    (0..pbox.len())
        .map(|i| {
            let r = radius(pbox, i);
            amp * (-0.5 * r * r / (width * width)).exp() * (1.0 + wig * (freq * r).cos())
        })
        .collect()
}

fn nehari_factor(pbox: &PeriodicBox, lt: &[f64], p: f64, u: &[f64]) -> f64 {
    let spec = pbox.to_spectrum(u);
    let nn = pbox.len() as f64;
    let quad: f64 = spec.iter().zip(lt).map(|(c, l)| l * c.norm_sqr()).sum::<f64>() / nn;
    let pp: f64 = u.iter().map(|v| apow(*v, p + 1.0)).sum();
    (quad / pp).powf(1.0 / (p - 1.0))
}

/// `sup |L u − u^p| / sup |u|`.
pub(crate) fn residual(pbox: &PeriodicBox, lt: &[f64], p: f64, u: &[f64]) -> f64 {
    let lu = pbox.apply_table(u, lt);
    let r: Vec<f64> = lu.iter().zip(u).map(|(a, b)| a - spow(*b, p)).collect();
    sup(&r) / sup(u)
}

/// Semi-implicit flow `u ← t·(1+τL)^{-1}(u + τu^p)` with the Nehari factor `t`.
pub(crate) fn flow(
    pbox: &PeriodicBox,
    lt: &[f64],
    p: f64,
    mut u: Vec<f64>,
    tau: f64,
    tol: f64,
    max_steps: usize,
) -> Result<(Vec<f64>, usize)> {
    let ft: Vec<f64> = lt.iter().map(|l| 1.0 / (1.0 + tau * l)).collect();
    let mut res = f64::INFINITY;
    for step in 1..=max_steps {
        let rhs: Vec<f64> = u.iter().map(|v| v + tau * spow(*v, p)).collect();
        let mut us = pbox.apply_table(&rhs, &ft);
        symmetrize(pbox, &mut us);
        let t = nehari_factor(pbox, lt, p, &us);
        us.iter_mut().for_each(|v| *v *= t);
        u = us;
        let (lo, hi) = u.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
        if !(hi > 0.0) || lo < -1e-3 * hi {
            return Err(Error::PositivityLost { ratio: lo / hi });
        }
        if step % 10 == 0 {
            res = residual(pbox, lt, p, &u);
            if res < tol {
                return Ok((u, step));
            }
        }
    }
    Err(Error::NoConvergence {
        iterations: max_steps,
        residual: res,
        trace: vec![],
    })
}

/// Periodic images of the far field `a·|x|^{−(n+2s)}`: `a` per unit of
/// `∫u^p`, and the image sum at every node.
pub(crate) struct Images {
    pub per_mass: f64,
    pub sum: Vec<f64>,
}

impl Images {
    pub fn new(pbox: &PeriodicBox, n: usize, s: f64) -> Self {
        let lengths = pbox.lengths();
        let a_exp = n as f64 + 2.0 * s;
        let sum: Vec<f64> = (0..pbox.len())
            .map(|i| image_sum(n, a_exp, lengths, pbox.coord(i)))
            .collect();
        Images {
            per_mass: frac_constant(n, s),
            sum,
        }
    }
}

/// Newton on `F(u) = u − L^{-1}u^p`, restricted to even functions so the
/// translation modes drop out of the Jacobian.
///
/// With `images`, `u` is the free-space solution on the box. The periodic
/// solve returns the periodization `u + I` (`I` the images of the tail,
/// where `(−Δ)^s w ≈ −w`), so `F(u) = u + I − L^{-1}u^p` with the tail
/// amplitude lagged.
pub(crate) fn newton(
    pbox: &PeriodicBox,
    lt: &[f64],
    p: f64,
    mut u: Vec<f64>,
    tol: f64,
    max_iter: usize,
    images: Option<&Images>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let linv: Vec<f64> = lt.iter().map(|l| 1.0 / l).collect();
    let restart = if pbox.n == 1 { 40 } else { 20 };
    let mut trace = Vec::new();
    for _ in 0..=max_iter {
        let up: Vec<f64> = u.iter().map(|v| spow(*v, p)).collect();
        let g = pbox.apply_table(&up, &linv);
        let mut f: Vec<f64> = u.iter().zip(&g).map(|(a, b)| a - b).collect();
        if let Some(im) = images {
            let a = im.per_mass * up.iter().sum::<f64>() * pbox.cell();
            for (x, s) in f.iter_mut().zip(&im.sum) {
                *x += a * s;
            }
        }
        let res = sup(&f) / sup(&u);
        trace.push(res);
        if res <= tol {
            return Ok((u, trace));
        }
        if trace.len() > 1 && res > 10.0 * trace[trace.len() - 2] {
            return Err(Error::NewtonDiverged { residual: res });
        }
        let dp: Vec<f64> = u.iter().map(|v| p * apow(*v, p - 1.0)).collect();
        let jac = |v: &[f64]| {
            let mut v = v.to_vec();
            symmetrize(pbox, &mut v);
            let w: Vec<f64> = v.iter().zip(&dp).map(|(a, b)| a * b).collect();
            let t = pbox.apply_table(&w, &linv);
            v.iter().zip(&t).map(|(a, b)| a - b).collect::<Vec<f64>>()
        };
        let mut rhs: Vec<f64> = f.iter().map(|v| -v).collect();
        // round-off asymmetry is outside the range of the restricted Jacobian
        symmetrize(pbox, &mut rhs);
        let eta = (0.1 * res).clamp(1e-10, 1e-2);
        let mut du = linalg::gmres(jac, &rhs, None, eta, restart, 400)?;
        symmetrize(pbox, &mut du);
        for (a, b) in u.iter_mut().zip(&du) {
            *a += b;
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual: *trace.last().unwrap(),
        trace,
    })
}

/// Copies a small-box solution into a larger box with the same spacing and
/// continues it by `c·|x|^{−(n+2s)}` beyond 40% of the small box.
pub(crate) fn embed(small: &PeriodicBox, u: &[f64], big: &PeriodicBox, a_exp: f64) -> Vec<f64> {
    let m = small.dims[0];
    let k = (2 * m) / 5;
    let rm = k as f64 * small.h;
    let edge = u[k * small.dims[1]].max(0.0);
    let c = edge * rm.powf(a_exp);
    (0..big.len())
        .map(|idx| {
            let r = radius(big, idx);
            if r <= rm {
                let l = big.lattice(idx);
                let i = l[0].rem_euclid(m as i64) as usize;
                let j = if big.n == 2 {
                    l[1].rem_euclid(small.dims[1] as i64) as usize
                } else {
                    0
                };
                u[i * small.dims[1] + j]
            } else {
                c * r.powf(-a_exp)
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct SolveParams {
    pub n_flow: usize,
    pub n_box: usize,
    pub tau: f64,
    pub switch: f64,
    pub newton_tol: f64,
}

/// Flow on the small box, embed, Newton on the large box. Positivity loss
/// restarts the flow with half the step.
pub(crate) fn solve_box(pb: &BoxProblem, prm: &SolveParams, seed: Option<u64>) -> Result<BoxSolution> {
    let small = PeriodicBox::cube(pb.n, prm.n_flow, pb.h);
    let lts = pb.l_table(&small);
    let mut tau = prm.tau;
    let (u_small, steps) = loop {
        match flow(&small, &lts, pb.p, initial_bump(&small, seed), tau, prm.switch, 200_000) {
            Ok(v) => break v,
            Err(Error::PositivityLost { ratio }) => {
                if tau < 1e-4 {
                    return Err(Error::PositivityLost { ratio });
                }
                log::warn!("ground-state flow lost positivity, halving the step to {}", tau / 2.0);
                tau *= 0.5;
            }
            Err(e) => return Err(e),
        }
    };
    let big = PeriodicBox::cube(pb.n, prm.n_box, pb.h);
    let a_exp = pb.n as f64 + 2.0 * pb.s;
    let u0 = embed(&small, &u_small, &big, a_exp);
    let lt = pb.l_table(&big);
    // 1D: solve for the free-space profile directly; in 2D the image sum on
    // every node is too costly and the resolution error dominates anyway
    let images = (pb.n == 1).then(|| Images::new(&big, pb.n, pb.s));
    let (u, trace) = newton(&big, &lt, pb.p, u0, prm.newton_tol, 30, images.as_ref())?;
    Ok(BoxSolution {
        pbox: big,
        u,
        flow_steps: steps,
        newton_trace: trace,
        free_space: images.is_some(),
    })
}
