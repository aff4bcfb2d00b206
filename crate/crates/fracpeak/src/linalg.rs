//! Small Krylov solvers over plain slices.

use crate::error::{Error, Result};

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn sup(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Preconditioned conjugate gradients for SPD operators.
pub fn pcg(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    precond: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let n = b.len();
    let bn = norm(b);
    let mut x = vec![0.0; n];
    if bn == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut trace = Vec::new();
    for _ in 0..max_iter {
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::SingularSystem("operator is not positive definite".into()));
        }
        let a = rz / pap;
        for i in 0..n {
            x[i] += a * p[i];
            r[i] -= a * ap[i];
        }
        let rel = norm(&r) / bn;
        trace.push(rel);
        if rel <= tol {
            return Ok(x);
        }
        z = precond(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual: *trace.last().unwrap_or(&1.0),
        trace,
    })
}

/// Restarted GMRES with modified Gram–Schmidt; the operator is applied as
/// given (precondition by wrapping it).
pub fn gmres(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    restart: usize,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let n = b.len();
    let bn = norm(b);
    let mut x = x0.map_or_else(|| vec![0.0; n], |v| v.to_vec());
    if bn == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let mut trace = Vec::new();
    let mut total = 0;
    while total < max_iter {
        let ax = apply(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(a, c)| a - c).collect();
        let beta = norm(&r);
        trace.push(beta / bn);
        if beta / bn <= tol {
            return Ok(x);
        }
        let m = restart.min(max_iter - total).max(1);
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|t| t / beta).collect()];
        let mut hess = vec![vec![0.0; m]; m + 1];
        let mut cs = vec![0.0; m];
        let mut sn = vec![0.0; m];
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..m {
            total += 1;
            let mut w = apply(&v[k]);
            for (j, vj) in v.iter().enumerate().take(k + 1) {
                let hjk = dot(&w, vj);
                hess[j][k] = hjk;
                for (wi, vi) in w.iter_mut().zip(vj) {
                    *wi -= hjk * vi;
                }
            }
            let wn = norm(&w);
            hess[k + 1][k] = wn;
            for j in 0..k {
                let t = cs[j] * hess[j][k] + sn[j] * hess[j + 1][k];
                hess[j + 1][k] = -sn[j] * hess[j][k] + cs[j] * hess[j + 1][k];
                hess[j][k] = t;
            }
            let den = hess[k][k].hypot(hess[k + 1][k]);
            if den == 0.0 {
                return Err(Error::SingularSystem("GMRES breakdown".into()));
            }
            cs[k] = hess[k][k] / den;
            sn[k] = hess[k + 1][k] / den;
            hess[k][k] = den;
            hess[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k_used = k + 1;
            if g[k + 1].abs() / bn <= tol || wn == 0.0 {
                break;
            }
            v.push(w.iter().map(|t| t / wn).collect());
        }
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s -= hess[i][j] * y[j];
            }
            y[i] = s / hess[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            for (xi, vi) in x.iter_mut().zip(&v[j]) {
                *xi += yj * vi;
            }
        }
    }
    let ax = apply(&x);
    let res = norm(&b.iter().zip(&ax).map(|(a, c)| a - c).collect::<Vec<_>>()) / bn;
    if res <= tol {
        return Ok(x);
    }
    trace.push(res);
    Err(Error::NoConvergence {
        iterations: total,
        residual: res,
        trace,
    })
}

/// MINRES for symmetric (possibly indefinite) operators.
pub fn minres(apply: impl Fn(&[f64]) -> Vec<f64>, b: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = b.len();
    let bn = norm(b);
    let mut x = vec![0.0; n];
    if bn == 0.0 {
        return Ok(x);
    }
    let mut v_old = vec![0.0; n];
    let mut v: Vec<f64> = b.iter().map(|t| t / bn).collect();
    let mut beta = bn;
    let mut w_old = vec![0.0; n];
    let mut w_older = vec![0.0; n];
    let (mut c_old, mut s_old, mut c, mut s) = (1.0, 0.0, 1.0, 0.0);
    let mut eta = bn;
    let mut trace = Vec::new();
    for _ in 0..max_iter {
        let mut av = apply(&v);
        let alpha = dot(&v, &av);
        for i in 0..n {
            av[i] -= alpha * v[i] + beta * v_old[i];
        }
        let beta_next = norm(&av);
        // QR update with the two previous rotations
        let eps_k = s_old * beta;
        let delta_bar = c_old * beta;
        let delta = c * delta_bar + s * alpha;
        let gamma_bar = -s * delta_bar + c * alpha;
        let gamma = gamma_bar.hypot(beta_next);
        if gamma == 0.0 {
            return Err(Error::SingularSystem("MINRES breakdown".into()));
        }
        let c_new = gamma_bar / gamma;
        let s_new = beta_next / gamma;
        let w: Vec<f64> = (0..n)
            .map(|i| (v[i] - eps_k * w_older[i] - delta * w_old[i]) / gamma)
            .collect();
        for i in 0..n {
            x[i] += c_new * eta * w[i];
        }
        eta *= -s_new;
        trace.push(eta.abs() / bn);
        if eta.abs() / bn <= tol {
            return Ok(x);
        }
        w_older = w_old;
        w_old = w;
        c_old = c;
        s_old = s;
        c = c_new;
        s = s_new;
        v_old = v;
        v = av.iter().map(|t| t / beta_next).collect();
        beta = beta_next;
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual: *trace.last().unwrap_or(&1.0),
        trace,
    })
}
