//! The Dirichlet-mode operator: rows at interior nodes of Ω_ε, exterior
//! values pinned to a datum.

use super::{Domain, Field, LatticeConv, LatticeKernel, Symbol, DENSE_LIMIT};
use crate::error::{Error, Result};
use crate::linalg;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use std::sync::{Arc, OnceLock};

/// Values imposed on `R^n ∖ Ω_ε`.
#[derive(Debug, Clone)]
pub enum ExteriorDatum {
    Zero,
    /// The same constant on the whole exterior (including beyond the grid).
    Constant(f64),
    /// Values at the exterior nodes of the grid; zero beyond it.
    Field(Field),
}

/// Lattice fractional Laplacian restricted to the interior nodes, plus a
/// constant shift `λ`.
#[derive(Clone)]
pub struct DirichletOp {
    pub domain: Arc<Domain>,
    pub s: f64,
    pub lambda: f64,
    kernel: Arc<LatticeKernel>,
    conv: Arc<LatticeConv>,
    /// `Σ_{b∉Ω_ε} K(a−b)` per interior node: how strongly each row feels
    /// the exterior.
    exterior_weight: Arc<Vec<f64>>,
    chol: Arc<OnceLock<Option<Cholesky<f64, Dyn>>>>,
}

impl std::fmt::Debug for DirichletOp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DirichletOp")
            .field("n_interior", &self.domain.n_interior())
            .field("s", &self.s)
            .field("lambda", &self.lambda)
            .finish()
    }
}

/// Builds the Dirichlet operator for `(−Δ)^s + λ` on a domain.
pub fn assemble_dirichlet(domain: &Domain, s: f64, lambda: f64) -> Result<DirichletOp> {
    assemble_dirichlet_with(domain, s, lambda, Symbol::Lattice)
}

/// As [`assemble_dirichlet`], with the operator's symbol chosen explicitly.
pub fn assemble_dirichlet_with(domain: &Domain, s: f64, lambda: f64, symbol: Symbol) -> Result<DirichletOp> {
    if !(s > 0.0 && s < 1.0) {
        return Err(crate::error::invalid(format!("s = {s} outside (0,1)")));
    }
    if lambda < 0.0 {
        return Err(crate::error::invalid("shift must be non-negative"));
    }
    let domain = Arc::new(domain.clone());
    let g = domain.grid;
    let kernel = Arc::new(LatticeKernel::for_dims(g.n, s, g.h, g.dims, symbol));
    let conv = Arc::new(LatticeConv::new(g, |m| kernel.coefficient(m)));
    let mut ind = vec![0.0; g.len()];
    for &k in domain.interior() {
        ind[k] = 1.0;
    }
    let c1 = conv.apply(&ind);
    let exterior_weight = Arc::new(domain.interior().iter().map(|&k| c1[k]).collect());
    let op = DirichletOp {
        domain,
        s,
        lambda,
        kernel,
        conv,
        exterior_weight,
        chol: Arc::new(OnceLock::new()),
    };
    let margin = op.definiteness_margin();
    if symbol == Symbol::Lattice && !(margin > 0.0) && lambda > 0.0 {
        return Err(Error::SingularSystem(format!(
            "diagonal-dominance margin {margin:.3e} is not positive"
        )));
    }
    Ok(op)
}

impl DirichletOp {
    pub fn n_interior(&self) -> usize {
        self.domain.n_interior()
    }

    pub fn symbol(&self) -> Symbol {
        self.kernel.symbol
    }

    pub fn kernel(&self) -> &LatticeKernel {
        &self.kernel
    }

    /// Same discretization with a different shift; shares the kernel.
    pub fn with_shift(&self, lambda: f64) -> DirichletOp {
        DirichletOp {
            lambda,
            chol: Arc::new(OnceLock::new()),
            ..self.clone()
        }
    }

    /// Exterior weight of every interior row (see [`DirichletOp`]).
    pub fn exterior_weight(&self) -> &[f64] {
        &self.exterior_weight
    }

    /// Lower bound for the smallest eigenvalue: every row is strictly
    /// diagonally dominant by `λ + Σ_{b∉Ω_ε} K(a−b)`.
    pub fn definiteness_margin(&self) -> f64 {
        self.exterior_weight
            .iter()
            .fold(f64::INFINITY, |m, &w| m.min(w))
            + self.lambda
    }

    /// Diagonal entry of every row.
    pub fn diagonal(&self) -> f64 {
        self.kernel.diag + self.lambda
    }

    /// `(A + λ) v` on interior values.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let d = &self.domain;
        let mut full = vec![0.0; d.grid.len()];
        for (&k, &x) in d.interior().iter().zip(v) {
            full[k] = x;
        }
        let out = self.conv.apply(&full);
        d.interior()
            .iter()
            .zip(v)
            .map(|(&k, &x)| out[k] + self.lambda * x)
            .collect()
    }

    /// `(A + λ) u` for an exterior-zero field, returned on the whole grid
    /// (exterior rows included, which the quadratic form never needs).
    pub fn apply_field(&self, u: &Field) -> Field {
        let d = &self.domain;
        let v = d.restrict(u);
        d.extend(&self.apply(&v))
    }

    /// Dense matrix of `A + λ` over interior nodes.
    pub fn matrix(&self) -> DMatrix<f64> {
        let d = &self.domain;
        let idx = d.interior();
        let n = idx.len();
        let lat: Vec<[i64; 2]> = idx.iter().map(|&k| d.grid.lattice(k)).collect();
        let mut m = DMatrix::zeros(n, n);
        for a in 0..n {
            for b in a..n {
                let off = [lat[a][0] - lat[b][0], lat[a][1] - lat[b][1]];
                let v = self.kernel.coefficient(off);
                m[(a, b)] = v;
                m[(b, a)] = v;
            }
            m[(a, a)] += self.lambda;
        }
        m
    }

    fn cholesky(&self) -> Option<&Cholesky<f64, Dyn>> {
        self.chol
            .get_or_init(|| {
                (self.n_interior() <= DENSE_LIMIT)
                    .then(|| Cholesky::new(self.matrix()))
                    .flatten()
            })
            .as_ref()
    }

    /// Solves `(A + λ) x = b` on interior nodes to relative residual `tol`.
    pub fn solve(&self, b: &[f64], tol: f64) -> Result<Vec<f64>> {
        if self.n_interior() <= DENSE_LIMIT {
            let ch = self.cholesky().ok_or_else(|| {
                Error::SingularSystem("Cholesky factorization failed".into())
            })?;
            let x = ch.solve(&DVector::from_column_slice(b));
            return Ok(x.as_slice().to_vec());
        }
        let dinv = 1.0 / self.diagonal();
        linalg::pcg(|v| self.apply(v), |r| r.iter().map(|x| x * dinv).collect(), b, tol, 5000)
    }

    /// Smallest eigenvalue of `A + λ` by inverse iteration.
    pub fn lowest_eigenvalue(&self, tol: f64) -> Result<f64> {
        let n = self.n_interior();
        let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.01 * (i % 7) as f64).collect();
        let mut est = 0.0;
        for it in 0..500 {
            let nv = linalg::norm(&v);
            v.iter_mut().for_each(|x| *x /= nv);
            let w = self.solve(&v, 1e-13)?;
            let ray = linalg::dot(&v, &w);
            let next = 1.0 / ray;
            if it > 0 && (next - est).abs() <= tol * next.abs() {
                return Ok(next);
            }
            est = next;
            v = w;
        }
        Err(Error::NoConvergence {
            iterations: 500,
            residual: est,
            trace: vec![],
        })
    }

    /// Extra right-hand side produced by a non-zero exterior datum.
    fn datum_rhs(&self, datum: &ExteriorDatum) -> Option<Vec<f64>> {
        let d = &self.domain;
        match datum {
            ExteriorDatum::Zero => None,
            ExteriorDatum::Constant(c) => Some(self.exterior_weight.iter().map(|w| c * w).collect()),
            ExteriorDatum::Field(f) => {
                let mut ext = f.values.clone();
                for &k in d.interior() {
                    ext[k] = 0.0;
                }
                let out = self.conv.apply(&ext);
                Some(d.interior().iter().map(|&k| -out[k]).collect())
            }
        }
    }
}

/// Solves `(−Δ)^s u + λu = rhs` in Ω_ε with `u = datum` outside.
pub fn solve_dirichlet(op: &DirichletOp, rhs: &Field, datum: &ExteriorDatum, tol: f64) -> Result<Field> {
    let d = &op.domain;
    if op.lambda <= 0.0 {
        return Err(crate::error::invalid("Dirichlet solve needs a positive shift"));
    }
    let mut b = d.restrict(rhs);
    if b.iter().any(|v| !v.is_finite()) {
        return Err(crate::error::invalid("right-hand side is not finite"));
    }
    if let Some(extra) = op.datum_rhs(datum) {
        for (x, e) in b.iter_mut().zip(extra) {
            *x += e;
        }
    }
    let x = op.solve(&b, tol)?;
    let mut u = d.extend(&x);
    match datum {
        ExteriorDatum::Zero => {}
        ExteriorDatum::Constant(c) => {
            for (v, &m) in u.values.iter_mut().zip(d.mask()) {
                if !m {
                    *v = *c;
                }
            }
            u.exterior_zero = *c == 0.0;
        }
        ExteriorDatum::Field(f) => {
            for (k, v) in u.values.iter_mut().enumerate() {
                if !d.is_interior(k) {
                    *v = f.values[k];
                }
            }
            u.exterior_zero = false;
        }
    }
    Ok(u)
}
