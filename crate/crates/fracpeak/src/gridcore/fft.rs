//! Periodic FFT boxes, Fourier-multiplier application and lattice
//! convolutions.

use super::{frac_constant, Field, Grid, Symbol};
use crate::error::{Error, Result};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::sync::Arc;

/// A periodic lattice box with FFT plans. Nodes are stored in wrapped
/// order: index `j` sits at `j·h` for `j < N/2` and at `(j-N)·h` otherwise,
/// so the origin is index 0.
#[derive(Clone)]
pub struct PeriodicBox {
    pub n: usize,
    pub dims: [usize; 2],
    pub h: f64,
    fwd: [Arc<dyn Fft<f64>>; 2],
    inv: [Arc<dyn Fft<f64>>; 2],
}

impl std::fmt::Debug for PeriodicBox {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PeriodicBox")
            .field("n", &self.n)
            .field("dims", &self.dims)
            .field("h", &self.h)
            .finish()
    }
}

impl PeriodicBox {
    pub fn new(n: usize, dims: [usize; 2], h: f64) -> Self {
        let dims = if n == 1 { [dims[0], 1] } else { dims };
        let mut planner = FftPlanner::new();
        let fwd = [
            planner.plan_fft_forward(dims[0]),
            planner.plan_fft_forward(dims[1]),
        ];
        let inv = [
            planner.plan_fft_inverse(dims[0]),
            planner.plan_fft_inverse(dims[1]),
        ];
        PeriodicBox {
            n,
            dims,
            h,
            fwd,
            inv,
        }
    }

    /// Cubic box with `m` nodes per axis.
    pub fn cube(n: usize, m: usize, h: f64) -> Self {
        PeriodicBox::new(n, [m, m], h)
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell(&self) -> f64 {
        self.h.powi(self.n as i32)
    }

    /// Box side lengths.
    pub fn lengths(&self) -> [f64; 2] {
        [self.dims[0] as f64 * self.h, self.dims[1] as f64 * self.h]
    }

    #[inline]
    fn wrap(j: usize, m: usize) -> i64 {
        if j < m.div_ceil(2) {
            j as i64
        } else {
            j as i64 - m as i64
        }
    }

    /// Signed lattice coordinates of a node.
    #[inline]
    pub fn lattice(&self, idx: usize) -> [i64; 2] {
        let i = idx / self.dims[1];
        let j = idx % self.dims[1];
        if self.n == 1 {
            [Self::wrap(i, self.dims[0]), 0]
        } else {
            [Self::wrap(i, self.dims[0]), Self::wrap(j, self.dims[1])]
        }
    }

    #[inline]
    pub fn coord(&self, idx: usize) -> [f64; 2] {
        let m = self.lattice(idx);
        [m[0] as f64 * self.h, m[1] as f64 * self.h]
    }

    /// Angular wavenumbers of a node in Fourier space; the Nyquist mode
    /// gets the negative sign.
    #[inline]
    pub fn wavenumber(&self, idx: usize) -> [f64; 2] {
        let i = idx / self.dims[1];
        let j = idx % self.dims[1];
        let k = |t: usize, m: usize| {
            let w = if t < m.div_ceil(2) {
                t as f64
            } else {
                t as f64 - m as f64
            };
            2.0 * PI * w / (m as f64 * self.h)
        };
        if self.n == 1 {
            [k(i, self.dims[0]), 0.0]
        } else {
            [k(i, self.dims[0]), k(j, self.dims[1])]
        }
    }

    /// Is this Fourier index a Nyquist mode along some axis?
    pub fn is_nyquist(&self, idx: usize, axis: usize) -> bool {
        let i = idx / self.dims[1];
        let j = idx % self.dims[1];
        let (t, m) = if axis == 0 {
            (i, self.dims[0])
        } else {
            (j, self.dims[1])
        };
        m % 2 == 0 && t == m / 2
    }

    fn transform(&self, data: &mut [Complex64], plans: &[Arc<dyn Fft<f64>>; 2]) {
        let [m0, m1] = self.dims;
        if self.n == 1 {
            plans[0].process(data);
            return;
        }
        plans[1].process(data);
        let mut t = vec![Complex64::new(0.0, 0.0); data.len()];
        for i in 0..m0 {
            for j in 0..m1 {
                t[j * m0 + i] = data[i * m1 + j];
            }
        }
        plans[0].process(&mut t);
        for i in 0..m0 {
            for j in 0..m1 {
                data[i * m1 + j] = t[j * m0 + i];
            }
        }
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, &self.fwd);
    }

    /// Normalized inverse transform.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, &self.inv);
        let s = 1.0 / self.len() as f64;
        for v in data.iter_mut() {
            *v *= s;
        }
    }

    pub fn to_spectrum(&self, values: &[f64]) -> Vec<Complex64> {
        let mut d: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&mut d);
        d
    }

    pub fn from_spectrum(&self, mut spec: Vec<Complex64>) -> Vec<f64> {
        self.inverse(&mut spec);
        spec.into_iter().map(|c| c.re).collect()
    }

    /// Applies a real Fourier multiplier `m(k)`.
    pub fn apply_multiplier(&self, values: &[f64], m: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
        let mut d = self.to_spectrum(values);
        for (idx, v) in d.iter_mut().enumerate() {
            *v *= m(self.wavenumber(idx));
        }
        self.from_spectrum(d)
    }

    /// Multiplier table `m(k)` evaluated at every Fourier index.
    pub fn multiplier_table(&self, m: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
        (0..self.len()).map(|idx| m(self.wavenumber(idx))).collect()
    }

    pub fn apply_table(&self, values: &[f64], table: &[f64]) -> Vec<f64> {
        let mut d = self.to_spectrum(values);
        for (v, t) in d.iter_mut().zip(table) {
            *v *= t;
        }
        self.from_spectrum(d)
    }
}

/// `(symbol + λ)·f` on a periodic box; `f` in wrapped order.
pub fn apply_periodic(pbox: &PeriodicBox, f: &[f64], symbol: Symbol, s: f64, lambda: f64) -> Vec<f64> {
    let h = pbox.h;
    pbox.apply_multiplier(f, |k| symbol.eval(k, s, h) + lambda)
}

/// Free-space application of `(-Δ)^s + λ` to a field that decays at the
/// edge of its grid: the field is zero-padded to a box four times larger
/// per axis, the symbol applied, and the result cropped back.
///
/// `tail_tol` is the admissible edge magnitude relative to `max |f|`.
pub fn apply_free(f: &Field, symbol: Symbol, s: f64, lambda: f64, tail_tol: f64) -> Result<Field> {
    let g = f.grid;
    let peak = f.max_abs();
    if peak == 0.0 {
        return Ok(Field::zeros(g));
    }
    let mut edge = 0.0f64;
    for idx in 0..g.len() {
        let [i, j] = g.multi(idx);
        let on_edge = i == 0
            || i + 1 == g.dims[0]
            || (g.n == 2 && (j == 0 || j + 1 == g.dims[1]));
        if on_edge {
            edge = edge.max(f.values[idx].abs());
        }
    }
    if edge > tail_tol * peak {
        return Err(Error::TailTooLarge {
            edge,
            threshold: tail_tol * peak,
        });
    }
    let pd = [4 * g.dims[0], if g.n == 2 { 4 * g.dims[1] } else { 1 }];
    let pbox = PeriodicBox::new(g.n, pd, g.h);
    let mut buf = vec![0.0; pbox.len()];
    for idx in 0..g.len() {
        let [i, j] = g.multi(idx);
        buf[i * pd[1] + j] = f.values[idx];
    }
    let out = apply_periodic(&pbox, &buf, symbol, s, lambda);
    // The periodic result is the periodization of the free-space one, whose
    // far field is −c_{n,s}·(∫f)·|x|^{−n−2s}; remove the images of that tail.
    let mass = f.integral();
    let amp = -frac_constant(g.n, s) * mass;
    let lengths = pbox.lengths();
    let center = [
        (g.first[0] as f64 + 0.5 * (g.dims[0] - 1) as f64) * g.h,
        (g.first[1] as f64 + 0.5 * (g.dims[1] - 1) as f64) * g.h,
    ];
    let mut res = Field::zeros(g);
    for idx in 0..g.len() {
        let [i, j] = g.multi(idx);
        let x = g.coord(idx);
        let rel = [x[0] - center[0], if g.n == 2 { x[1] - center[1] } else { 0.0 }];
        let img = if amp == 0.0 {
            0.0
        } else {
            amp * image_sum(g.n, g.n as f64 + 2.0 * s, lengths, rel)
        };
        res.values[idx] = out[i * pd[1] + j] - img;
    }
    Ok(res)
}

/// `Σ_{j≠0} |x + j∘L|^{−a}` over the periodic images of a box with side
/// lengths `L`, with the far shells replaced by their integral.
pub fn image_sum(n: usize, a: f64, lengths: [f64; 2], x: [f64; 2]) -> f64 {
    if n == 1 {
        let jmax = 64i64;
        let l = lengths[0];
        let mut acc = 0.0;
        for j in 1..=jmax {
            let jf = j as f64 * l;
            acc += (x[0] + jf).abs().powf(-a) + (x[0] - jf).abs().powf(-a);
        }
        let r = (jmax as f64 + 0.5) * l;
        acc + 2.0 * r.powf(1.0 - a) / ((a - 1.0) * l)
    } else {
        let jmax = 8i64;
        let mut acc = 0.0;
        for j0 in -jmax..=jmax {
            for j1 in -jmax..=jmax {
                if j0 == 0 && j1 == 0 {
                    continue;
                }
                let y0 = x[0] + j0 as f64 * lengths[0];
                let y1 = x[1] + j1 as f64 * lengths[1];
                acc += (y0 * y0 + y1 * y1).powf(-0.5 * a);
            }
        }
        // shells outside the (2J+1)² block, approximated by a disc of equal area
        let r = (2 * jmax + 1) as f64 * (lengths[0] * lengths[1]).sqrt() / PI.sqrt();
        acc + 2.0 * PI * r.powf(2.0 - a) / ((a - 2.0) * lengths[0] * lengths[1])
    }
}

/// Linear (aperiodic) convolution over a lattice block with a kernel given
/// as a function of integer offsets: `out_a = Σ_b c(m_a − m_b) in_b`.
#[derive(Clone)]
pub struct LatticeConv {
    grid: Grid,
    pbox: PeriodicBox,
    kernel_hat: Vec<Complex64>,
}

impl std::fmt::Debug for LatticeConv {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LatticeConv").field("grid", &self.grid).finish()
    }
}

impl LatticeConv {
    pub fn new(grid: Grid, c: impl Fn([i64; 2]) -> f64) -> Self {
        let n = grid.n;
        let pd = [
            (2 * grid.dims[0]).next_power_of_two(),
            if n == 2 {
                (2 * grid.dims[1]).next_power_of_two()
            } else {
                1
            },
        ];
        let pbox = PeriodicBox::new(n, pd, grid.h);
        let mut ker = vec![Complex64::new(0.0, 0.0); pbox.len()];
        let r0 = grid.dims[0] as i64 - 1;
        let r1 = if n == 2 { grid.dims[1] as i64 - 1 } else { 0 };
        for d0 in -r0..=r0 {
            for d1 in -r1..=r1 {
                let i = d0.rem_euclid(pd[0] as i64) as usize;
                let j = d1.rem_euclid(pd[1] as i64) as usize;
                ker[i * pd[1] + j] = Complex64::new(c([d0, d1]), 0.0);
            }
        }
        pbox.forward(&mut ker);
        LatticeConv {
            grid,
            pbox,
            kernel_hat: ker,
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn apply(&self, input: &[f64]) -> Vec<f64> {
        let g = self.grid;
        let pd = self.pbox.dims;
        let mut buf = vec![Complex64::new(0.0, 0.0); self.pbox.len()];
        for idx in 0..g.len() {
            let [i, j] = g.multi(idx);
            buf[i * pd[1] + j] = Complex64::new(input[idx], 0.0);
        }
        self.pbox.forward(&mut buf);
        for (b, k) in buf.iter_mut().zip(&self.kernel_hat) {
            *b *= k;
        }
        self.pbox.inverse(&mut buf);
        (0..g.len())
            .map(|idx| {
                let [i, j] = g.multi(idx);
                buf[i * pd[1] + j].re
            })
            .collect()
    }
}
