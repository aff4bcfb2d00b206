//! Fourier symbols of the fractional Laplacian and the lattice kernel that
//! realizes the Dirichlet operator.

use super::PeriodicBox;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, ln_gamma};
use std::f64::consts::PI;

/// Which symbol represents `(-Δ)^s` on a lattice of spacing `h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Symbol {
    /// `|k|^{2s}`: spectrally accurate for band-limited functions.
    Continuum,
    /// `(Σ_d (2/h)² sin²(k_d h/2))^s`: the lattice fractional Laplacian,
    /// second-order consistent, with an explicit positive kernel in 1D.
    Lattice,
}

impl Symbol {
    #[inline]
    pub fn eval(self, k: [f64; 2], s: f64, h: f64) -> f64 {
        let q = match self {
            Symbol::Continuum => k[0] * k[0] + k[1] * k[1],
            Symbol::Lattice => {
                let a = (2.0 / h) * (0.5 * k[0] * h).sin();
                let b = (2.0 / h) * (0.5 * k[1] * h).sin();
                a * a + b * b
            }
        };
        if q == 0.0 {
            0.0
        } else if s == 0.5 {
            q.sqrt()
        } else {
            q.powf(s)
        }
    }
}

/// Normalization `c_{n,s} = 4^s Γ(n/2+s) / (π^{n/2} |Γ(-s)|)` of the
/// singular integral; also the tail constant of `F^{-1}[|k|^{2s}]`.
pub fn frac_constant(n: usize, s: f64) -> f64 {
    let nf = n as f64;
    4f64.powf(s) * gamma(0.5 * nf + s) / (PI.powf(0.5 * nf) * gamma(-s).abs())
}

/// Closed-form 1D lattice kernel: returns `(diag, K)` with
/// `K[m] = C Γ(m−s)/Γ(m+1+s) / h^{2s}` for `m ≥ 1` (`K[0]` unused).
pub fn lattice_kernel_1d(s: f64, h: f64, m_max: usize) -> (f64, Vec<f64>) {
    let scale = h.powf(-2.0 * s);
    let c = 4f64.powf(s) * gamma(0.5 + s) / (PI.sqrt() * gamma(-s).abs());
    let diag = (ln_gamma(2.0 * s + 1.0) - 2.0 * ln_gamma(s + 1.0)).exp() * scale;
    let mut k = vec![0.0; m_max + 1];
    if m_max >= 1 {
        let mut r = (ln_gamma(1.0 - s) - ln_gamma(2.0 + s)).exp();
        k[1] = c * r * scale;
        for m in 1..m_max {
            let mf = m as f64;
            r *= (mf - s) / (mf + 1.0 + s);
            k[m + 1] = c * r * scale;
        }
    }
    (diag, k)
}

/// Off-diagonal weights `K(m)` of the lattice operator
/// `(A u)_a = Σ_{b≠a} K(a−b)(u_a − u_b)` over offsets `|m_d| ≤ range_d`.
#[derive(Debug, Clone)]
pub struct LatticeKernel {
    pub n: usize,
    pub s: f64,
    pub h: f64,
    /// `Σ_{m≠0} K(m)`, the diagonal of the operator.
    pub diag: f64,
    pub symbol: Symbol,
    range: [usize; 2],
    /// Quarter table indexed by `(|m0|, |m1|)`.
    table: Vec<f64>,
}

impl LatticeKernel {
    pub fn new(n: usize, s: f64, h: f64, range: [usize; 2]) -> Self {
        LatticeKernel::with_symbol(n, s, h, range, Symbol::Lattice)
    }

    /// Kernel of the operator whose symbol on the Brillouin zone is
    /// `symbol`. The continuum symbol gives the spectral (sinc-interpolant)
    /// operator; its weights change sign, so it has no maximum principle.
    pub fn with_symbol(n: usize, s: f64, h: f64, range: [usize; 2], symbol: Symbol) -> Self {
        if n == 1 {
            let r = range[0].max(1);
            let (diag, k) = match symbol {
                Symbol::Lattice => lattice_kernel_1d(s, h, r),
                Symbol::Continuum => {
                    let m = (4 * r).next_power_of_two().max(1024);
                    let pbox = PeriodicBox::new(1, [m, 1], 1.0);
                    let sym = pbox.multiplier_table(|k| Symbol::Continuum.eval(k, s, 1.0));
                    let coef = pbox.from_spectrum(
                        sym.iter()
                            .map(|&v| rustfft::num_complex::Complex64::new(v, 0.0))
                            .collect(),
                    );
                    let scale = h.powf(-2.0 * s);
                    let mut k = vec![0.0; r + 1];
                    for (a, v) in k.iter_mut().enumerate().skip(1) {
                        *v = -0.5 * (coef[a % m] + coef[(m - a % m) % m]) * scale;
                    }
                    (coef[0] * scale, k)
                }
            };
            return LatticeKernel {
                n,
                s,
                h,
                diag,
                symbol,
                range: [r, 0],
                table: k,
            };
        }
        // 2D: Fourier coefficients of the symbol sampled on a fine periodic
        // lattice; aliasing error decays like M^{-(2+2s)}.
        let span = range[0].max(range[1]);
        let m = (4 * span).next_power_of_two().max(1024);
        let pbox = PeriodicBox::cube(2, m, 1.0);
        let sym = pbox.multiplier_table(|k| symbol.eval(k, s, 1.0));
        let coef = pbox.from_spectrum(
            sym.iter()
                .map(|&v| rustfft::num_complex::Complex64::new(v, 0.0))
                .collect(),
        );
        let scale = h.powf(-2.0 * s);
        let r = [range[0].max(1), range[1].max(1)];
        let mut table = vec![0.0; (r[0] + 1) * (r[1] + 1)];
        for a in 0..=r[0] {
            for b in 0..=r[1] {
                // symmetrize over sign flips and the axis swap
                let pick = |i: usize, j: usize| coef[(i % m) * m + (j % m)];
                let v = 0.25
                    * (pick(a, b) + pick((m - a) % m, b) + pick(a, (m - b) % m)
                        + pick((m - a) % m, (m - b) % m));
                let w = if a <= r[1] && b <= r[0] {
                    0.25 * (pick(b, a)
                        + pick((m - b) % m, a)
                        + pick(b, (m - a) % m)
                        + pick((m - b) % m, (m - a) % m))
                } else {
                    v
                };
                table[a * (r[1] + 1) + b] = -0.5 * (v + w) * scale;
            }
        }
        let diag = coef[0] * scale;
        table[0] = 0.0;
        LatticeKernel {
            n,
            s,
            h,
            diag,
            symbol,
            range: r,
            table,
        }
    }

    /// Kernel sized for every pair of nodes in a grid block.
    pub fn for_dims(n: usize, s: f64, h: f64, dims: [usize; 2], symbol: Symbol) -> Self {
        let range = [dims[0], if n == 2 { dims[1] } else { 0 }];
        LatticeKernel::with_symbol(n, s, h, range, symbol)
    }

    /// Off-diagonal weight `K(m)` (zero at `m = 0`).
    #[inline]
    pub fn weight(&self, m: [i64; 2]) -> f64 {
        let a = m[0].unsigned_abs() as usize;
        let b = m[1].unsigned_abs() as usize;
        if self.n == 1 {
            if a == 0 {
                0.0
            } else {
                self.table[a]
            }
        } else {
            assert!(a <= self.range[0] && b <= self.range[1], "offset outside kernel table");
            self.table[a * (self.range[1] + 1) + b]
        }
    }

    /// Convolution coefficient of the operator: `diag` at 0, `−K(m)` elsewhere.
    #[inline]
    pub fn coefficient(&self, m: [i64; 2]) -> f64 {
        if m == [0, 0] {
            self.diag
        } else {
            -self.weight(m)
        }
    }
}
