//! The projected problem around an ansatz: the weighted norm, the linear
//! operator `T_q` with its multipliers `c_ij`, the error and nonlinear terms
//! `E(φ)`, `N(φ)`, and the fixed point `φ = Φ(q)`.
//!
//! Sign conventions. `T_q[g]` solves
//! `(−Δ)^s φ + V(εx)φ − pW_q^{p−1}φ + g = Σ c_ij Z_ij` with `∫φZ_ij = 0`,
//! and the nonlinear projected problem is
//! `(−Δ)^s φ + V(εx)φ − pW_q^{p−1}φ = E(φ) + N(φ) + Σ c_ij Z_ij`,
//! so its fixed-point map is `φ ↦ T_q[−(E(φ) + N(φ))]`.

use crate::corrections::{dist, AnsatzBundle};
use crate::energy::Potential;
use crate::error::{invalid, Error, Result};
use crate::gridcore::{spow, Field, DENSE_LIMIT};
use crate::groundstate::{z_kernel, Peak};
use crate::linalg;
use nalgebra::{DMatrix, DVector, SymmetricEigen, LU};
use serde::{Deserialize, Serialize};

/// Weight `ρ_q(x) = Σ_i (1 + |x − q_i|)^{−μ}` of the norm `‖φ‖_* = ‖φ/ρ_q‖_∞`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormSpec {
    pub mu: f64,
    pub q: Vec<[f64; 2]>,
}

impl NormSpec {
    /// `μ` at the midpoint of `(n/2, (n+2s)/2)`.
    pub fn midpoint(n: usize, s: f64, q: Vec<[f64; 2]>) -> Self {
        let n = n as f64;
        NormSpec {
            mu: 0.5 * (n / 2.0 + (n + 2.0 * s) / 2.0),
            q,
        }
    }

    pub fn with_mu(n: usize, s: f64, mu: f64, q: Vec<[f64; 2]>) -> Result<Self> {
        let nf = n as f64;
        if !(mu > nf / 2.0 && mu < (nf + 2.0 * s) / 2.0) {
            return Err(Error::ConfigInvalid {
                field: "mu".into(),
                message: format!("μ = {mu} must lie in ({}, {})", nf / 2.0, (nf + 2.0 * s) / 2.0),
            });
        }
        Ok(NormSpec { mu, q })
    }

    pub fn rho(&self, x: [f64; 2]) -> f64 {
        self.q
            .iter()
            .map(|&c| (1.0 + dist(x, c)).powf(-self.mu))
            .sum()
    }

    /// `ρ_q` on every node of a field's grid.
    pub fn weights(&self, f: &Field) -> Vec<f64> {
        (0..f.grid.len()).map(|k| self.rho(f.grid.coord(k))).collect()
    }
}

/// `max |f|/ρ_q` over the nodes of `f`.
pub fn star_norm(f: &Field, ns: &NormSpec) -> f64 {
    f.values
        .iter()
        .enumerate()
        .fold(0.0f64, |m, (k, v)| m.max(v.abs() / ns.rho(f.grid.coord(k))))
}

/// Weighted sup norm with precomputed weights.
fn star_with(values: &[f64], rho: &[f64]) -> f64 {
    values
        .iter()
        .zip(rho)
        .fold(0.0f64, |m, (v, r)| m.max(v.abs() / r))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReductionOptions {
    /// Fixed-point tolerance on `‖φ_{m+1} − φ_m‖_*`.
    pub tol: f64,
    pub max_iter: usize,
    /// Initial damping of the fixed-point update.
    pub damping: f64,
    /// Smallest damping before giving up.
    pub min_damping: f64,
    /// Relative tolerance of iterative bordered solves.
    pub krylov_tol: f64,
}

impl Default for ReductionOptions {
    fn default() -> Self {
        ReductionOptions {
            tol: 1e-10,
            max_iter: 200,
            damping: 1.0,
            min_damping: 1.0 / 64.0,
            krylov_tol: 1e-13,
        }
    }
}

/// A solution of the projected problem.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProjectedSolve {
    #[serde(skip)]
    pub phi: Option<Field>,
    /// `c_ij`, `k × n`.
    pub c: Vec<Vec<f64>>,
    pub mu: f64,
    pub star_norm: f64,
    /// Residual of the bordered system relative to its right-hand side.
    pub residual: f64,
    /// `|∫φZ_ij| / (‖φ‖_{L²}‖Z_ij‖_{L²})`.
    pub orthogonality: Vec<f64>,
    /// `‖φ_m‖_*` per fixed-point iteration (empty for a linear solve).
    pub trace: Vec<f64>,
    pub iterations: usize,
    /// `‖φ‖_*/(ε + η^{μ−n−2s})`.
    pub bound_ratio: f64,
}

impl ProjectedSolve {
    pub fn phi(&self) -> &Field {
        self.phi.as_ref().expect("solution field")
    }

    pub fn max_multiplier(&self) -> f64 {
        self.c.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }
}

enum Factor {
    Dense(LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
    Krylov,
}

/// The linearized operator `L = A + V(εx) − pW_q^{p−1}` on Ω_ε, bordered
/// by the translation kernels. Factored once per configuration.
pub struct ProjectedProblem<'a> {
    pub bundle: &'a AnsatzBundle,
    pub potential: Potential,
    pub norm: NormSpec,
    /// `V(εx)` at interior nodes.
    v: Vec<f64>,
    /// `V(εx) − pW_q^{p−1}` at interior nodes.
    diag: Vec<f64>,
    /// `Z_ij` at interior nodes, unit Euclidean norm.
    z: Vec<Vec<f64>>,
    /// Euclidean norms the kernels were divided by.
    z_scale: Vec<f64>,
    /// `ρ_q` at every grid node.
    rho: Vec<f64>,
    factor: Factor,
    krylov_tol: f64,
}

impl std::fmt::Debug for ProjectedProblem<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProjectedProblem")
            .field("unknowns", &self.diag.len())
            .field("constraints", &self.z.len())
            .finish()
    }
}

impl<'a> ProjectedProblem<'a> {
    pub fn new(bundle: &'a AnsatzBundle, potential: &Potential, norm: NormSpec) -> Result<Self> {
        let d = &bundle.domain;
        let eps = bundle.config.eps;
        let n = bundle.n();
        let p = bundle.p;
        let mut v = Vec::with_capacity(d.n_interior());
        let mut diag = Vec::with_capacity(d.n_interior());
        for &k in d.interior() {
            let x = d.grid.coord(k);
            let vx = potential.value(&[eps * x[0], eps * x[1]][..n]);
            let w = bundle.w_sum.values[k];
            v.push(vx);
            diag.push(vx - p * w.abs().powf(p - 1.0));
        }
        let mut z = Vec::new();
        let mut z_scale = Vec::new();
        for f in bundle.z_list() {
            let zi = d.restrict(f);
            let nz = linalg::norm(&zi);
            if !(nz > 0.0) {
                return Err(Error::SingularBordered);
            }
            z.push(zi.iter().map(|t| t / nz).collect::<Vec<_>>());
            z_scale.push(nz);
        }
        // normalized Gram matrix: a near-zero eigenvalue means dependent kernels
        let m = z.len();
        let gram = DMatrix::from_fn(m, m, |a, b| linalg::dot(&z[a], &z[b]));
        let lo = SymmetricEigen::new(gram).eigenvalues.min();
        if lo < 1e-8 {
            return Err(Error::SingularBordered);
        }
        let rho = (0..d.grid.len()).map(|k| norm.rho(d.grid.coord(k))).collect();
        let mut prob = ProjectedProblem {
            bundle,
            potential: potential.clone(),
            norm,
            v,
            diag,
            z,
            z_scale,
            rho,
            factor: Factor::Krylov,
            krylov_tol: ReductionOptions::default().krylov_tol,
        };
        if d.n_interior() <= DENSE_LIMIT {
            prob.factor = Factor::Dense(prob.bordered_matrix().lu());
        }
        Ok(prob)
    }

    pub fn with_krylov_tol(mut self, tol: f64) -> Self {
        self.krylov_tol = tol;
        self
    }

    fn n_int(&self) -> usize {
        self.diag.len()
    }

    /// `[[L, Z], [Zᵀ, 0]]` with unit-norm kernel columns.
    fn bordered_matrix(&self) -> DMatrix<f64> {
        let ni = self.n_int();
        let m = self.z.len();
        let mut a = DMatrix::zeros(ni + m, ni + m);
        a.view_mut((0, 0), (ni, ni)).copy_from(&self.bundle.op.matrix());
        for i in 0..ni {
            a[(i, i)] += self.diag[i];
        }
        for (j, zj) in self.z.iter().enumerate() {
            for i in 0..ni {
                a[(i, ni + j)] = zj[i];
                a[(ni + j, i)] = zj[i];
            }
        }
        a
    }

    fn apply_bordered(&self, x: &[f64]) -> Vec<f64> {
        let ni = self.n_int();
        let (phi, b) = x.split_at(ni);
        let mut out = self.bundle.op.apply(phi);
        for i in 0..ni {
            out[i] += self.diag[i] * phi[i];
        }
        for (j, zj) in self.z.iter().enumerate() {
            for i in 0..ni {
                out[i] += b[j] * zj[i];
            }
        }
        out.extend(self.z.iter().map(|zj| linalg::dot(zj, phi)));
        out
    }

    /// `L φ` on interior values.
    pub fn apply_linear(&self, phi: &[f64]) -> Vec<f64> {
        let mut out = self.bundle.op.apply(phi);
        for (o, (d, x)) in out.iter_mut().zip(self.diag.iter().zip(phi)) {
            *o += d * x;
        }
        out
    }

    /// `T_q[g]`: interior values of `φ` and the multipliers.
    fn solve_raw(&self, g: &[f64]) -> Result<(Vec<f64>, Vec<f64>, f64)> {
        let ni = self.n_int();
        let m = self.z.len();
        let mut rhs: Vec<f64> = g.iter().map(|t| -t).collect();
        rhs.extend(std::iter::repeat_n(0.0, m));
        let x = match &self.factor {
            Factor::Dense(lu) => lu
                .solve(&DVector::from_column_slice(&rhs))
                .ok_or(Error::SingularBordered)?
                .as_slice()
                .to_vec(),
            Factor::Krylov => linalg::minres(|x| self.apply_bordered(x), &rhs, self.krylov_tol, 20_000)?,
        };
        let ax = self.apply_bordered(&x);
        let rn = linalg::norm(&rhs);
        let res = if rn > 0.0 {
            ax.iter().zip(&rhs).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() / rn
        } else {
            0.0
        };
        if !res.is_finite() || res > 1e-6 {
            return Err(Error::SingularBordered);
        }
        // L φ + Σ b_j ẑ_j = −g  ⇔  L φ + g = Σ c_j Z_j with c_j = −b_j/|Z_j|
        let c = (0..m).map(|j| -x[ni + j] / self.z_scale[j]).collect();
        Ok((x[..ni].to_vec(), c, res))
    }

    fn report(&self, phi: Field, c: Vec<f64>, residual: f64, trace: Vec<f64>) -> ProjectedSolve {
        let b = self.bundle;
        let d = &b.domain;
        let n = b.n();
        let vals = d.restrict(&phi);
        let pn = linalg::norm(&vals);
        let orthogonality = self
            .z
            .iter()
            .map(|zj| {
                if pn == 0.0 {
                    0.0
                } else {
                    linalg::dot(zj, &vals).abs() / pn
                }
            })
            .collect();
        let star = star_with(&phi.values, &self.rho);
        let cm = c.chunks(n).map(|r| r.to_vec()).collect();
        ProjectedSolve {
            phi: Some(phi),
            c: cm,
            mu: self.norm.mu,
            star_norm: star,
            residual,
            orthogonality,
            iterations: trace.len(),
            trace,
            bound_ratio: star / self.tau(),
        }
    }

    /// `τ = ε + η^{μ−n−2s}`.
    pub fn tau(&self) -> f64 {
        let b = self.bundle;
        let e = self.norm.mu - b.n() as f64 - 2.0 * b.s;
        let eta = b.config.eta();
        b.config.eps + if eta.is_finite() { eta.powf(e) } else { 0.0 }
    }

    /// `T_q[g]` for a field `g` on the domain grid (only interior values used).
    pub fn solve_linear(&self, g: &Field) -> Result<ProjectedSolve> {
        let d = &self.bundle.domain;
        let gi = d.restrict(g);
        if gi.iter().any(|t| !t.is_finite()) {
            return Err(invalid("g is not finite"));
        }
        let (phi, c, res) = self.solve_raw(&gi)?;
        Ok(self.report(d.extend(&phi), c, res, vec![]))
    }

    /// `E(φ)` on Ω_ε, zero outside.
    pub fn error_term(&self, phi: &Field) -> Field {
        let b = self.bundle;
        let d = &b.domain;
        let p = b.p;
        let mut out = Field::zeros(d.grid);
        for (slot, &k) in d.interior().iter().enumerate() {
            let f = phi.values[k];
            let u = b.u_sum.values[k];
            let w = b.w_sum.values[k];
            let mut e = spow(u + f, p) - spow(w + f, p) + spow(w, p);
            for pp in &b.peaks {
                e += (pp.peak.lambda - self.v[slot]) * pp.corr.ubar.values[k]
                    - spow(pp.corr.w.values[k], p);
            }
            out.values[k] = e;
        }
        out.exterior_zero = true;
        out
    }

    /// `N(φ)` on Ω_ε, zero outside.
    pub fn nonlinear_term(&self, phi: &Field) -> Field {
        let b = self.bundle;
        let d = &b.domain;
        let p = b.p;
        let mut out = Field::zeros(d.grid);
        for &k in d.interior() {
            let f = phi.values[k];
            let w = b.w_sum.values[k];
            out.values[k] = if p == 2.0 && w >= 0.0 && w + f >= 0.0 {
                f * f
            } else {
                spow(w + f, p) - p * w.abs().powf(p - 1.0) * f - spow(w, p)
            };
        }
        out.exterior_zero = true;
        out
    }

    /// `K_q(φ) = T_q[−(E(φ) + N(φ))]`.
    pub fn k_map(&self, phi: &Field) -> Result<ProjectedSolve> {
        let g = self.error_term(phi).axpy(1.0, &self.nonlinear_term(phi)).map(|t| -t);
        self.solve_linear(&g)
    }

    pub fn star(&self, f: &Field) -> f64 {
        star_with(&f.values, &self.rho)
    }

    /// Fixed point of `K_q` from `φ = 0`.
    pub fn solve_nonlinear(&self, opts: &ReductionOptions) -> Result<ProjectedSolve> {
        let d = &self.bundle.domain;
        let mut phi = d.extend(&vec![0.0; d.n_interior()]);
        let mut damping = opts.damping;
        let mut last_step = f64::INFINITY;
        let mut trace = Vec::new();
        for _ in 0..opts.max_iter {
            let next = self.k_map(&phi)?;
            let kphi = next.phi();
            let step = self.star(&kphi.axpy(-1.0, &phi));
            if step <= opts.tol {
                trace.push(next.star_norm);
                let phi = next.phi.clone().expect("field");
                let c = next.c.concat();
                return Ok(self.report(phi, c, next.residual, trace));
            }
            if step >= last_step {
                damping *= 0.5;
                if damping < opts.min_damping {
                    return Err(Error::ContractionFailed { trace });
                }
            }
            last_step = step;
            phi = phi.axpy(damping, &kphi.axpy(-1.0, &phi));
            phi.exterior_zero = true;
            trace.push(self.star(&phi));
        }
        Err(Error::ContractionFailed { trace })
    }

    /// `‖K_q(φ₁) − K_q(φ₂)‖_* / ‖φ₁ − φ₂‖_*`.
    pub fn contraction_ratio(&self, phi1: &Field, phi2: &Field) -> Result<f64> {
        let k1 = self.k_map(phi1)?;
        let k2 = self.k_map(phi2)?;
        let num = self.star(&k1.phi().axpy(-1.0, k2.phi()));
        let den = self.star(&phi1.axpy(-1.0, phi2));
        Ok(num / den)
    }

    /// `(−Δ)^s u + V(εx)u − u^p` on Ω_ε for an exterior-zero `u`, zero outside.
    pub fn pde_residual(&self, u: &Field) -> Field {
        let b = self.bundle;
        let d = &b.domain;
        let ui = d.restrict(u);
        let mut r = b.op.apply(&ui);
        for (i, rv) in r.iter_mut().enumerate() {
            *rv += self.v[i] * ui[i] - spow(ui[i], b.p);
        }
        d.extend(&r)
    }

    /// `V(εx)` at interior nodes.
    pub fn potential_values(&self) -> &[f64] {
        &self.v
    }

    /// Newton on the unprojected discrete equation
    /// `(−Δ)^s u + V(εx)u = u^p` in Ω_ε, `u = 0` outside, from `u0`.
    ///
    /// Translating a peak costs almost nothing and the lattice corrugates
    /// that direction, so a plain Newton iteration wanders. Instead the
    /// centers move off the lattice: for fixed `q` an inner Newton solves
    /// the projected problem for `u = Σ w_i(· − q_i) + φ`, `∫φZ_ij = 0`,
    /// and an outer damped Newton drives its multipliers `c(q)` to zero.
    pub fn polish(&self, u0: &Field, tol: f64, max_iter: usize) -> Result<Polished> {
        let b = self.bundle;
        let d = &b.domain;
        let (n, k) = (b.n(), b.k());
        let m = k * n;
        let col = Collective {
            prob: self,
            dense: (self.n_int() <= DENSE_LIMIT).then(|| b.op.matrix()),
            tol: 0.1 * tol,
        };
        let shift = |q: &[[f64; 2]], dq: &[f64], t: f64| -> Vec<[f64; 2]> {
            let mut out = q.to_vec();
            for i in 0..k {
                for j in 0..n {
                    out[i][j] -= t * dq[i * n + j];
                }
            }
            out
        };
        let mut q = b.config.q.clone();
        let ui = d.restrict(u0);
        let phi0: Vec<f64> = ui.iter().zip(col.profile(&q)).map(|(a, w)| a - w).collect();
        let mut cur = col.inner(&q, &phi0)?;
        let mut trace = vec![cur.residual];
        let fd = 1e-4;
        for _ in 0..max_iter {
            if cur.residual <= tol {
                break;
            }
            // ∂c/∂q by central differences, each from the current φ
            let mut jac = DMatrix::zeros(m, m);
            for c in 0..m {
                let mut e = vec![0.0; m];
                e[c] = fd;
                let plus = col.inner(&shift(&q, &e, -1.0), &cur.phi)?;
                let minus = col.inner(&shift(&q, &e, 1.0), &cur.phi)?;
                for r in 0..m {
                    jac[(r, c)] = (plus.c[r] - minus.c[r]) / (2.0 * fd);
                }
            }
            let dq = jac
                .lu()
                .solve(&DVector::from_column_slice(&cur.c))
                .ok_or_else(|| Error::SingularSystem("reduced Jacobian".into()))?;
            let c0 = linalg::norm(&cur.c);
            let mut t = 1.0;
            let mut accepted = false;
            while t >= 1.0 / 64.0 {
                let qt = shift(&q, dq.as_slice(), t);
                if let Ok(nx) = col.inner(&qt, &cur.phi) {
                    if linalg::norm(&nx.c) <= (1.0 - 1e-4 * t) * c0 {
                        q = qt;
                        cur = nx;
                        accepted = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !accepted {
                // the lattice makes ‖c‖ non-monotone along the step; look
                // for a sign change of the component along c(q) instead
                let dir: Vec<f64> = cur.c.iter().map(|x| x / c0).collect();
                let along = |t: f64| -> Result<(f64, InnerSolve)> {
                    let nx = col.inner(&shift(&q, dq.as_slice(), t), &cur.phi)?;
                    Ok((linalg::dot(&nx.c, &dir), nx))
                };
                let mut bracket = None;
                'scan: for mag in [0.25, 0.5, 1.0, 2.0, 4.0] {
                    for t in [mag, -mag] {
                        let (v, _) = along(t)?;
                        if v < 0.0 {
                            bracket = Some(t);
                            break 'scan;
                        }
                    }
                }
                let Some(tb) = bracket else {
                    return Err(Error::NewtonDiverged { residual: cur.residual });
                };
                // Illinois regula falsi on [0, tb]
                let (mut a, mut fa, mut b2, mut fb) = (0.0, c0, tb, along(tb)?.0);
                let mut side = 0;
                let mut best = None;
                for _ in 0..60 {
                    let t = (a * fb - b2 * fa) / (fb - fa);
                    let (v, nx) = along(t)?;
                    let done = linalg::norm(&nx.c) <= 1e-3 * c0 || nx.residual <= tol;
                    best = Some((t, nx));
                    if done {
                        break;
                    }
                    if v > 0.0 {
                        (a, fa) = (t, v);
                        if side == 1 {
                            fb *= 0.5;
                        }
                        side = 1;
                    } else {
                        (b2, fb) = (t, v);
                        if side == -1 {
                            fa *= 0.5;
                        }
                        side = -1;
                    }
                }
                let (t, nx) = best.expect("at least one step");
                q = shift(&q, dq.as_slice(), t);
                cur = nx;
            }
            trace.push(cur.residual);
        }
        if !(cur.residual <= tol) {
            return Err(Error::NewtonDiverged { residual: cur.residual });
        }
        Ok(Polished {
            u: d.extend(&cur.u),
            q,
            residual: cur.residual,
            iterations: trace.len() - 1,
            trace,
        })
    }
}

/// Projected solves with continuously placed, uncorrected peaks.
struct Collective<'p, 'a> {
    prob: &'p ProjectedProblem<'a>,
    dense: Option<DMatrix<f64>>,
    tol: f64,
}

struct InnerSolve {
    phi: Vec<f64>,
    u: Vec<f64>,
    /// Multipliers against unit-norm kernels.
    c: Vec<f64>,
    /// Relative residual of the unprojected equation.
    residual: f64,
}

impl Collective<'_, '_> {
    fn peaks<'q>(&'q self, q: &'q [[f64; 2]]) -> impl Iterator<Item = Peak> + 'q {
        self.prob
            .bundle
            .peaks
            .iter()
            .zip(q)
            .map(|(pp, c)| Peak { center: *c, ..pp.peak.clone() })
    }

    fn profile(&self, q: &[[f64; 2]]) -> Vec<f64> {
        let d = &self.prob.bundle.domain;
        let mut w = vec![0.0; self.prob.n_int()];
        for pk in self.peaks(q) {
            for (slot, &kk) in d.interior().iter().enumerate() {
                w[slot] += pk.value(d.grid.coord(kk));
            }
        }
        w
    }

    fn kernels(&self, q: &[[f64; 2]]) -> Result<Vec<Vec<f64>>> {
        let d = &self.prob.bundle.domain;
        let mut out = Vec::new();
        for pk in self.peaks(q) {
            for j in 0..self.prob.bundle.n() {
                let z = d.restrict(&z_kernel(&pk, j, &d.grid)?);
                let nz = linalg::norm(&z);
                out.push(z.iter().map(|t| t / nz).collect());
            }
        }
        Ok(out)
    }

    fn pde(&self, u: &[f64]) -> Vec<f64> {
        let b = self.prob.bundle;
        let mut r = b.op.apply(u);
        for (i, rv) in r.iter_mut().enumerate() {
            *rv += self.prob.v[i] * u[i] - spow(u[i], b.p);
        }
        r
    }

    /// Newton on `F(W_q + φ) = Σ c_j Ẑ_j`, `⟨φ, Ẑ_j⟩ = 0` for fixed `q`.
    fn inner(&self, q: &[[f64; 2]], phi0: &[f64]) -> Result<InnerSolve> {
        let b = self.prob.bundle;
        let p = b.p;
        let ni = self.prob.n_int();
        let w = self.profile(q);
        let z = self.kernels(q)?;
        let m = z.len();
        // start from the part of φ0 orthogonal to the kernels
        let mut phi = phi0.to_vec();
        for zj in &z {
            let a = linalg::dot(&phi, zj);
            for (x, t) in phi.iter_mut().zip(zj) {
                *x -= a * t;
            }
        }
        let mut c = vec![0.0; m];
        let rel = |r: &[f64], u: &[f64]| linalg::sup(r) / linalg::sup(u).max(f64::MIN_POSITIVE);
        let eval = |phi: &[f64], c: &[f64]| {
            let u: Vec<f64> = w.iter().zip(phi).map(|(a, b)| a + b).collect();
            let f = self.pde(&u);
            let mut g = f.clone();
            for (zj, cj) in z.iter().zip(c) {
                for (x, t) in g.iter_mut().zip(zj) {
                    *x -= cj * t;
                }
            }
            for zj in &z {
                g.push(linalg::dot(phi, zj));
            }
            (u, f, g)
        };
        let (mut u, mut f, mut g) = eval(&phi, &c);
        for _ in 0..50 {
            if rel(&g, &u) <= self.tol {
                break;
            }
            let jd: Vec<f64> = (0..ni).map(|i| self.prob.v[i] - p * u[i].abs().powf(p - 1.0)).collect();
            let step = if let Some(a) = &self.dense {
                let mut j = DMatrix::zeros(ni + m, ni + m);
                j.view_mut((0, 0), (ni, ni)).copy_from(a);
                for i in 0..ni {
                    j[(i, i)] += jd[i];
                }
                for (cc, zj) in z.iter().enumerate() {
                    for i in 0..ni {
                        j[(i, ni + cc)] = -zj[i];
                        j[(ni + cc, i)] = zj[i];
                    }
                }
                j.lu()
                    .solve(&DVector::from_column_slice(&g))
                    .ok_or_else(|| Error::SingularSystem("projected Newton".into()))?
                    .as_slice()
                    .to_vec()
            } else {
                let apply = |x: &[f64]| {
                    let mut y = b.op.apply(&x[..ni]);
                    for i in 0..ni {
                        y[i] += jd[i] * x[i];
                    }
                    for (cc, zj) in z.iter().enumerate() {
                        for i in 0..ni {
                            y[i] -= zj[i] * x[ni + cc];
                        }
                    }
                    for zj in &z {
                        y.push(linalg::dot(zj, &x[..ni]));
                    }
                    y
                };
                linalg::gmres(apply, &g, None, 1e-2 * self.tol, 200, 20_000)?
            };
            let g0 = linalg::norm(&g);
            let mut t = 1.0;
            loop {
                let phi_t: Vec<f64> = phi.iter().zip(&step).map(|(x, dx)| x - t * dx).collect();
                let c_t: Vec<f64> = c.iter().zip(&step[ni..]).map(|(x, dx)| x - t * dx).collect();
                let (u_t, f_t, g_t) = eval(&phi_t, &c_t);
                if linalg::norm(&g_t) <= (1.0 - 1e-4 * t) * g0 || t < 1.0 / 64.0 {
                    (phi, c, u, f, g) = (phi_t, c_t, u_t, f_t, g_t);
                    break;
                }
                t *= 0.5;
            }
        }
        // the outer iteration judges the final residual; here only refuse
        // solves that stalled far from it
        if !(rel(&g, &u) <= 100.0 * self.tol) {
            return Err(Error::NewtonDiverged { residual: rel(&g, &u) });
        }
        Ok(InnerSolve {
            residual: rel(&f, &u),
            phi,
            u,
            c,
        })
    }
}

/// A solution of the unprojected discrete problem.
#[derive(Debug, Clone)]
pub struct Polished {
    pub u: Field,
    /// Centers of the profile part after the last step.
    pub q: Vec<[f64; 2]>,
    /// `‖(−Δ)^s u + Vu − u^p‖_∞ / ‖u‖_∞` on Ω_ε.
    pub residual: f64,
    pub iterations: usize,
    pub trace: Vec<f64>,
}

/// `‖φ‖_*` for the bundle's default weight.
pub fn default_norm(bundle: &AnsatzBundle) -> NormSpec {
    NormSpec::midpoint(bundle.n(), bundle.s, bundle.config.q.clone())
}

/// `E(φ)` for a bundle and potential.
pub fn error_term(bundle: &AnsatzBundle, phi: &Field, v: &Potential) -> Result<Field> {
    Ok(ProjectedProblem::new(bundle, v, default_norm(bundle))?.error_term(phi))
}

/// `N(φ)`; signed powers keep it real for non-integer `p`.
pub fn nonlinear_term(bundle: &AnsatzBundle, phi: &Field) -> Result<Field> {
    let v = Potential::Constant { v0: 1.0 };
    Ok(ProjectedProblem::new(bundle, &v, default_norm(bundle))?.nonlinear_term(phi))
}

/// `T_q[g]`.
pub fn solve_projected_linear(bundle: &AnsatzBundle, g: &Field, v: &Potential) -> Result<ProjectedSolve> {
    ProjectedProblem::new(bundle, v, default_norm(bundle))?.solve_linear(g)
}

/// `Φ(q)` as the fixed point of `φ ↦ T_q[−(E(φ) + N(φ))]`.
pub fn solve_nonlinear_projected(
    bundle: &AnsatzBundle,
    v: &Potential,
    opts: &ReductionOptions,
) -> Result<ProjectedSolve> {
    ProjectedProblem::new(bundle, v, default_norm(bundle))?
        .with_krylov_tol(opts.krylov_tol)
        .solve_nonlinear(opts)
}

/// Computed multipliers against the leading-order prediction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MultiplierTable {
    pub computed: Vec<Vec<f64>>,
    pub predicted: Vec<Vec<f64>>,
    /// `γ_i = −c0(λ_i)/α(λ_i) > 0`.
    pub gamma: Vec<f64>,
    /// `|computed − predicted| / |predicted|` (infinite when the prediction is 0).
    pub deviation: Vec<Vec<f64>>,
}

/// Leading-order multipliers `c_ij ≈ −ε γ_i ∂_j V(ξ_i)`.
///
/// The minus sign follows from `E(0) ∋ (λ_i − V(εx))ū_i` and
/// `∫(x − q_i)_j w_i Z_ij = c0 < 0`.
pub fn multipliers_leading(bundle: &AnsatzBundle, v: &Potential, solve: &ProjectedSolve) -> MultiplierTable {
    let cfg = &bundle.config;
    let n = cfg.n;
    let mut predicted = Vec::new();
    let mut gamma = Vec::new();
    let mut deviation = Vec::new();
    for i in 0..cfg.k() {
        let c = bundle.base.constants_at(cfg.lambdas[i]);
        let g = -c.c0 / c.alpha_z;
        let xi = cfg.xi(i);
        let grad = v.grad(&xi[..n]);
        let row: Vec<f64> = (0..n).map(|j| -cfg.eps * g * grad[j]).collect();
        deviation.push(
            row.iter()
                .zip(&solve.c[i])
                .map(|(p, c)| if *p == 0.0 { f64::INFINITY } else { ((c - p) / p).abs() })
                .collect(),
        );
        predicted.push(row);
        gamma.push(g);
    }
    MultiplierTable {
        computed: solve.c.clone(),
        predicted,
        gamma,
        deviation,
    }
}
