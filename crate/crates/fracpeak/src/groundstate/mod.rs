//! The radial ground state `w` of `(−Δ)^s w + w = w^p`, its rescalings
//! `w_λ`, the translation kernels `Z_j = ∂_j w_λ` and the scalar constants
//! used by the reduction.

mod cache;
mod family;
pub mod radial;
mod solver;

pub use cache::{solve_cached, CacheEntry, GsCache, CACHE_ENV};
pub use family::GsFamily;
pub use radial::{RadialProfile, TailModel};

use crate::error::{invalid, Error, Result};
use crate::gridcore::{frac_constant, image_sum, Field, Grid, PeriodicBox, Symbol};
use crate::linalg::sup;
use radial::sphere_area;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use solver::{BoxProblem, BoxSolution, SolveParams};
use std::f64::consts::PI;
use std::sync::Arc;

/// Numerical parameters of a ground-state solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GsOptions {
    pub symbol: Symbol,
    /// Spacing of the periodic box.
    pub h: f64,
    /// Nodes per axis of the Newton box.
    pub n_box: usize,
    /// Nodes per axis of the gradient-flow box.
    pub n_flow: usize,
    pub r_max: f64,
    pub flow_step: f64,
    /// Flow residual at which Newton takes over.
    pub flow_switch: f64,
    pub newton_tol: f64,
    /// Extra solves from random initial data (uniqueness probe).
    pub probes: usize,
    pub seed: u64,
}

impl GsOptions {
    /// Spectral discretization of the continuum equation.
    pub fn continuum(n: usize) -> Self {
        if n == 1 {
            GsOptions {
                symbol: Symbol::Continuum,
                h: 1.0 / 32.0,
                n_box: 1 << 19,
                n_flow: 1 << 13,
                r_max: 2000.0,
                flow_step: 0.1,
                flow_switch: 1e-3,
                newton_tol: 1e-12,
                probes: 0,
                seed: 0,
            }
        } else {
            GsOptions {
                symbol: Symbol::Continuum,
                h: 1.0 / 16.0,
                n_box: 2048,
                n_flow: 256,
                r_max: 50.0,
                flow_step: 0.1,
                flow_switch: 1e-3,
                newton_tol: 1e-11,
                probes: 0,
                seed: 0,
            }
        }
    }

    /// Lattice equation on `h·Z^n`, consistent with the Dirichlet operator
    /// of the same spacing. Only radial in 1D; the 2D lattice solution is
    /// anisotropic and the radial profile of it does not solve anything.
    pub fn lattice(n: usize, h: f64) -> Self {
        let mut o = GsOptions::continuum(n);
        o.symbol = Symbol::Lattice;
        o.h = h;
        if n == 1 {
            o.n_box = ((8192.0 / h).ceil() as usize).next_power_of_two();
            o.n_flow = ((256.0 / h).ceil() as usize).next_power_of_two().max(512);
        } else {
            o.n_box = ((256.0 / h).ceil() as usize).next_power_of_two().min(1024);
            o.n_flow = ((64.0 / h).ceil() as usize).next_power_of_two().min(256);
            o.r_max = (0.4 * o.n_box as f64 * h).min(200.0);
        }
        o
    }

    pub fn box_length(&self) -> f64 {
        self.n_box as f64 * self.h
    }
}

/// Least-squares tail `A r^{−(n+2s)} + B r^{−b}` on `[r_fit, r_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub a_tail: f64,
    pub b_coef: f64,
    pub a_exp: f64,
    pub b_exp: f64,
    /// `c_{n,s}·∫w^p`, the prefactor predicted by the equation itself.
    pub a_predicted: f64,
    pub r_fit: f64,
    pub r_max: f64,
    /// Least-squares slope of `log w` against `log r` on the fit range.
    pub slope: f64,
    /// RMS relative misfit of the model on the fit range.
    pub misfit: f64,
}

/// Integrals of the ground state (over `R^n`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    /// `∫w²`
    pub m2: f64,
    /// `∫w^{p+1}`
    pub mp1: f64,
    /// `∫w^p`
    pub ip: f64,
    /// `∫(∂_1 w)²`
    pub alpha_z: f64,
    /// `∫(y_1²/|y|) w(|y|) w'(|y|) dy`
    pub c0: f64,
    /// `∫w (−Δ)^s w`
    pub kinetic: f64,
    /// `½(∫w(−Δ)^s w + ∫w²) − ∫w^{p+1}/(p+1)`
    pub c_star: f64,
}

/// A certified ground state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundState {
    pub n: usize,
    pub s: f64,
    pub p: f64,
    pub options: GsOptions,
    pub profile: RadialProfile,
    pub tail: TailFit,
    pub constants: Constants,
    /// Change of each constant when every other radial node is dropped.
    pub constant_changes: Constants,
    /// `‖(−Δ)^s w + w − w^p‖_∞/‖w‖_∞` on the verification grid.
    pub residual: f64,
    /// Largest sup-distance to solutions from random initial data.
    pub uniqueness_spread: Option<f64>,
    pub flow_steps: usize,
    pub newton_trace: Vec<f64>,
}

/// Checks `p > 1` and subcriticality.
pub fn check_exponents(n: usize, s: f64, p: f64) -> Result<()> {
    if !(s > 0.0 && s < 1.0) {
        return Err(invalid(format!("s = {s} must lie in (0, 1)")));
    }
    if !(p > 1.0) {
        return Err(invalid(format!("p = {p} must exceed 1")));
    }
    let nf = n as f64;
    if nf > 2.0 * s && p >= (nf + 2.0 * s) / (nf - 2.0 * s) {
        return Err(invalid(format!(
            "p = {p} is not subcritical: need p < (n+2s)/(n-2s) = {}",
            (nf + 2.0 * s) / (nf - 2.0 * s)
        )));
    }
    Ok(())
}

/// Secondary tail exponent: the first correction to `r^{−(n+2s)}`.
fn secondary_exponent(n: usize, s: f64) -> f64 {
    let nf = n as f64;
    if (s - 0.5).abs() < 1e-12 {
        nf + 3.0
    } else {
        (nf + 4.0 * s).min(nf + 2.0 * s + 2.0)
    }
}

/// Solves for the ground state and certifies it.
pub fn solve_ground_state(n: usize, s: f64, p: f64, opts: &GsOptions) -> Result<GroundState> {
    check_exponents(n, s, p)?;
    if !(n == 1 || n == 2) {
        return Err(invalid("only n = 1, 2 are supported"));
    }
    if n == 2 && opts.symbol == Symbol::Lattice {
        return Err(invalid("lattice ground states are only radial in 1D; use the continuum profile"));
    }
    if opts.r_max > 0.4 * opts.box_length() {
        return Err(invalid(format!(
            "r_max = {} exceeds 40% of the box length {}",
            opts.r_max,
            opts.box_length()
        )));
    }
    let pb = BoxProblem {
        n,
        s,
        p,
        symbol: opts.symbol,
        h: opts.h,
    };
    let prm = SolveParams {
        n_flow: opts.n_flow,
        n_box: opts.n_box,
        tau: opts.flow_step,
        switch: opts.flow_switch,
        newton_tol: opts.newton_tol,
    };
    let sol = solver::solve_box(&pb, &prm, None)?;
    let mut spread = None;
    if opts.probes > 0 {
        let scale = sup(&sol.u);
        let mut worst = 0.0f64;
        for k in 0..opts.probes {
            let other = solver::solve_box(&pb, &prm, Some(opts.seed.wrapping_add(k as u64 + 1)))?;
            let d = sol.u.iter().zip(&other.u).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            worst = worst.max(d / scale);
        }
        spread = Some(worst);
    }
    let mut gs = extract(&pb, opts, &sol)?;
    gs.uniqueness_spread = spread;
    gs.residual = certify(&gs)?;
    Ok(gs)
}

/// Spectrum of the restriction of the box solution to the first axis.
fn axis_spectrum(sol: &BoxSolution) -> Vec<Complex64> {
    let pbox = &sol.pbox;
    let spec = pbox.to_spectrum(&sol.u);
    if pbox.n == 1 {
        return spec;
    }
    let [m0, m1] = pbox.dims;
    (0..m0)
        .map(|i| spec[i * m1..(i + 1) * m1].iter().sum::<Complex64>() / m1 as f64)
        .collect()
}

/// Trigonometric interpolant of the axis line and its first two
/// derivatives on a grid `factor` times finer.
fn upsample(spec: &[Complex64], h: f64, factor: usize) -> [Vec<f64>; 3] {
    let n0 = spec.len();
    let m = n0 * factor;
    let fine = PeriodicBox::new(1, [m, 1], h / factor as f64);
    let mut bufs = [
        vec![Complex64::new(0.0, 0.0); m],
        vec![Complex64::new(0.0, 0.0); m],
        vec![Complex64::new(0.0, 0.0); m],
    ];
    let place = |bufs: &mut [Vec<Complex64>; 3], w: i64, c: Complex64| {
        let kappa = 2.0 * PI * w as f64 / (n0 as f64 * h);
        let pos = w.rem_euclid(m as i64) as usize;
        let c = c * factor as f64;
        bufs[0][pos] += c;
        bufs[1][pos] += c * Complex64::new(0.0, kappa);
        bufs[2][pos] += c * (-kappa * kappa);
    };
    for (k, &c) in spec.iter().enumerate() {
        if n0 % 2 == 0 && k == n0 / 2 {
            place(&mut bufs, k as i64, 0.5 * c);
            place(&mut bufs, -(k as i64), 0.5 * c);
        } else {
            let w = if k < n0.div_ceil(2) { k as i64 } else { k as i64 - n0 as i64 };
            place(&mut bufs, w, c);
        }
    }
    bufs.map(|b| fine.from_spectrum(b))
}

/// Fine-grid indices of the radial nodes: uniform up to r = 4, then spaced
/// about 0.5% of the radius. A lattice solution carries content up to the
/// lattice Nyquist frequency, so there every lattice node (every `lattice`-th
/// fine node) is kept instead.
fn graded_indices(h_f: f64, i_max: usize, lattice: Option<usize>) -> Vec<usize> {
    let i_u = ((4.0 / h_f).round() as usize).min(i_max);
    let mut idx: Vec<usize> = (0..=i_u).collect();
    let mut i = i_u;
    while i < i_max {
        let step = match lattice {
            Some(f) => f - i % f,
            None => ((0.005 * i as f64).floor() as usize).max(1),
        };
        i = (i + step).min(i_max);
        idx.push(i);
    }
    idx
}

/// Leading-order sum of the periodic images of the tail at `(r, 0)`, with
/// its first two `r`-derivatives.
fn images(n: usize, a_exp: f64, len: f64, r: f64) -> [f64; 3] {
    let l = [len, len];
    let f = |x: f64| image_sum(n, a_exp, l, [x, 0.0]);
    let d = len / 200.0;
    let (fm, f0, fp) = (f(r - d), f(r), f(r + d));
    [f0, (fp - fm) / (2.0 * d), (fp - 2.0 * f0 + fm) / (d * d)]
}

fn fit_tail(samples: &[(f64, f64)], a_exp: f64, b_exp: f64) -> (f64, f64, f64) {
    // weighted (relative) least squares in A, B
    let (mut s11, mut s12, mut s22, mut t1, mut t2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(r, v) in samples {
        let wgt = 1.0 / (v * v);
        let (x1, x2) = (r.powf(-a_exp), r.powf(-b_exp));
        s11 += wgt * x1 * x1;
        s12 += wgt * x1 * x2;
        s22 += wgt * x2 * x2;
        t1 += wgt * x1 * v;
        t2 += wgt * x2 * v;
    }
    let det = s11 * s22 - s12 * s12;
    let a = (t1 * s22 - t2 * s12) / det;
    let b = (s11 * t2 - s12 * t1) / det;
    let misfit = (samples
        .iter()
        .map(|&(r, v)| ((a * r.powf(-a_exp) + b * r.powf(-b_exp) - v) / v).powi(2))
        .sum::<f64>()
        / samples.len() as f64)
        .sqrt();
    (a, b, misfit)
}

/// Least-squares slope of `log v` against `log r`.
pub fn loglog_slope(samples: &[(f64, f64)]) -> f64 {
    let m = samples.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(r, v) in samples {
        let (x, y) = (r.ln(), v.ln());
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    (m * sxy - sx * sy) / (m * sxx - sx * sx)
}

fn extract(pb: &BoxProblem, opts: &GsOptions, sol: &BoxSolution) -> Result<GroundState> {
    let (n, s, p) = (pb.n, pb.s, pb.p);
    let h = opts.h;
    let len = opts.box_length();
    let factor = ((64.0 * h).ceil() as usize).next_power_of_two().max(1);
    let h_f = h / factor as f64;
    let [w_f, dw_f, d2w_f] = upsample(&axis_spectrum(sol), h, factor);
    let i_max = ((opts.r_max / h) + 1e-9).floor() as usize * factor;
    let r_max = i_max as f64 * h_f;

    let a_exp = n as f64 + 2.0 * s;
    let b_exp = secondary_exponent(n, s);
    let cell = h.powi(n as i32);
    let ip_box: f64 = sol.u.iter().map(|v| v.abs().powf(p)).sum::<f64>() * cell;
    let a_predicted = frac_constant(n, s) * ip_box;

    // tail fit on box nodes in [r_max/4, r_max], images removed iteratively
    let r_fit = 0.25 * r_max;
    let stride = (((r_max - r_fit) / h / 400.0).ceil() as usize).max(1) * factor;
    let raw: Vec<(f64, f64, f64)> = (0..=i_max)
        .step_by(stride)
        .map(|i| (i as f64 * h_f, w_f[i]))
        .filter(|(r, _)| *r >= r_fit)
        .map(|(r, v)| (r, v, images(n, a_exp, len, r)[0]))
        .collect();
    // box values are either free-space already or carry the tail's images
    let img_on = if sol.free_space { 0.0 } else { 1.0 };
    let mut a_img = a_predicted * img_on;
    let mut fit = (a_predicted, 0.0, 0.0);
    let mut samples = Vec::new();
    for _ in 0..4 {
        samples = raw.iter().map(|&(r, v, img)| (r, v - a_img * img)).collect::<Vec<_>>();
        if samples.iter().any(|(_, v)| *v <= 0.0) {
            return Err(Error::NoConvergence {
                iterations: 0,
                residual: f64::NAN,
                trace: vec![],
            });
        }
        fit = fit_tail(&samples, a_exp, b_exp);
        a_img = fit.0 * img_on;
    }
    let slope = loglog_slope(&samples);
    let tail = TailFit {
        a_tail: fit.0,
        b_coef: fit.1,
        a_exp,
        b_exp,
        a_predicted,
        r_fit,
        r_max,
        slope,
        misfit: fit.2,
    };

    let nodes = graded_indices(h_f, i_max, (pb.symbol == Symbol::Lattice).then_some(factor));
    let mut prof = RadialProfile {
        r: Vec::with_capacity(nodes.len()),
        w: Vec::with_capacity(nodes.len()),
        dw: Vec::with_capacity(nodes.len()),
        d2w: Vec::with_capacity(nodes.len()),
        tail: TailModel {
            a_coef: fit.0,
            a_exp,
            b_coef: fit.1,
            b_exp,
        },
    };
    for &i in &nodes {
        let r = i as f64 * h_f;
        let img = images(n, a_exp, len, r);
        prof.r.push(r);
        prof.w.push(w_f[i] - a_img * img[0]);
        prof.dw.push(if i == 0 { 0.0 } else { dw_f[i] - a_img * img[1] });
        prof.d2w.push(d2w_f[i] - a_img * img[2]);
    }

    let kinetic = {
        let spec = sol.pbox.to_spectrum(&sol.u);
        let nn = sol.pbox.len() as f64;
        let (sym, hh) = (pb.symbol, h);
        spec.iter()
            .enumerate()
            .map(|(k, c)| sym.eval(sol.pbox.wavenumber(k), s, hh) * c.norm_sqr())
            .sum::<f64>()
            * cell
            / nn
    };
    let constants = radial_constants(&prof, n, p, kinetic);
    let coarse = radial_constants(&prof.coarsened(), n, p, kinetic);
    let diff = |a: f64, b: f64| (a - b).abs();
    let constant_changes = Constants {
        m2: diff(constants.m2, coarse.m2),
        mp1: diff(constants.mp1, coarse.mp1),
        ip: diff(constants.ip, coarse.ip),
        alpha_z: diff(constants.alpha_z, coarse.alpha_z),
        c0: diff(constants.c0, coarse.c0),
        kinetic: 0.0,
        c_star: diff(constants.c_star, coarse.c_star),
    };
    Ok(GroundState {
        n,
        s,
        p,
        options: *opts,
        profile: prof,
        tail,
        constants,
        constant_changes,
        residual: f64::NAN,
        uniqueness_spread: None,
        flow_steps: sol.flow_steps,
        newton_trace: sol.newton_trace.clone(),
    })
}

fn radial_constants(prof: &RadialProfile, n: usize, p: f64, kinetic: f64) -> Constants {
    let om = sphere_area(n);
    let jac = |r: f64| if n == 1 { 1.0 } else { r };
    let m2 = om * prof.integrate(|r, w, _| w * w * jac(r));
    let mp1 = om * prof.integrate(|r, w, _| w.abs().powf(p + 1.0) * jac(r));
    let ip = om * prof.integrate(|r, w, _| w.abs().powf(p) * jac(r));
    let nf = n as f64;
    let alpha_z = om / nf * prof.integrate(|r, _, dw| dw * dw * jac(r));
    let c0 = om / nf * prof.integrate(|r, w, dw| r * w * dw * jac(r));
    let c_star = 0.5 * (kinetic + m2) - mp1 / (p + 1.0);
    Constants {
        m2,
        mp1,
        ip,
        alpha_z,
        c0,
        kinetic,
        c_star,
    }
}

/// Residual of the stored profile (with its tail closure) on a grid that
/// the solver never saw: spacing `3h/4` and a longer box for the continuum
/// symbol, the same lattice in a box twice as long for the lattice symbol.
fn certify(gs: &GroundState) -> Result<f64> {
    residual_rescaled(gs, 1.0)
}

/// Residual of `w_λ` in `(−Δ)^s w_λ + λw_λ = w_λ^p`, relative to
/// `λ‖w_λ‖_∞`, measured for `|x| ≤ R_max λ^{−1/(2s)}`.
pub fn residual_rescaled(gs: &GroundState, lambda: f64) -> Result<f64> {
    let o = &gs.options;
    let (h_v, n_v) = match o.symbol {
        Symbol::Continuum => (0.75 * o.h * lambda.powf(-0.5 / gs.s), 2 * o.n_box),
        Symbol::Lattice => (o.h * lambda.powf(-0.5 / gs.s), 2 * o.n_box),
    };
    let pbox = PeriodicBox::cube(gs.n, n_v, h_v);
    let wl = gs.rescaled(lambda);
    let u: Vec<f64> = (0..pbox.len())
        .map(|i| {
            let x = pbox.coord(i);
            wl.eval((x[0] * x[0] + x[1] * x[1]).sqrt())
        })
        .collect();
    let (sym, s) = (o.symbol, gs.s);
    let mut lu = pbox.apply_multiplier(&u, |k| sym.eval(k, s, h_v) + lambda);
    if gs.n == 1 {
        // free-space operator from the periodic one: add (σ+λ) applied to
        // the images of the tail
        let a_exp = 1.0 + 2.0 * s;
        let amp = gs.a_tail_at(lambda);
        let img: Vec<f64> = (0..pbox.len())
            .map(|i| amp * image_sum(1, a_exp, pbox.lengths(), pbox.coord(i)))
            .collect();
        let corr = pbox.apply_multiplier(&img, |k| sym.eval(k, s, h_v) + lambda);
        for (a, b) in lu.iter_mut().zip(corr) {
            *a += b;
        }
    }
    let r_lim = wl.r_max();
    let mut worst = 0.0f64;
    for i in 0..pbox.len() {
        let x = pbox.coord(i);
        if (x[0] * x[0] + x[1] * x[1]).sqrt() <= r_lim {
            worst = worst.max((lu[i] - u[i].abs().powf(gs.p - 1.0) * u[i]).abs());
        }
    }
    Ok(worst / (lambda * sup(&u)))
}

/// `w_λ(r) = λ^{1/(p−1)} w(λ^{1/(2s)} r)`.
#[derive(Debug, Clone, Copy)]
pub struct Rescaled<'a> {
    pub gs: &'a GroundState,
    pub lambda: f64,
    pub amp: f64,
    pub k: f64,
}

impl Rescaled<'_> {
    pub fn eval(&self, r: f64) -> f64 {
        self.amp * self.gs.profile.eval(self.k * r)
    }

    pub fn eval_with_deriv(&self, r: f64) -> (f64, f64) {
        let (w, dw) = self.gs.profile.eval_with_deriv(self.k * r);
        (self.amp * w, self.amp * self.k * dw)
    }

    /// Radius up to which samples (not the tail law) are used.
    pub fn r_max(&self) -> f64 {
        self.gs.profile.r_max() / self.k
    }
}

impl GroundState {
    pub fn value(&self, r: f64) -> f64 {
        self.profile.eval(r)
    }

    pub fn rescaled(&self, lambda: f64) -> Rescaled<'_> {
        Rescaled {
            gs: self,
            lambda,
            amp: lambda.powf(1.0 / (self.p - 1.0)),
            k: lambda.powf(0.5 / self.s),
        }
    }

    /// Exponent θ with `J(w_λ) = λ^θ c_*`.
    pub fn theta(&self) -> f64 {
        (self.p + 1.0) / (self.p - 1.0) - self.n as f64 / (2.0 * self.s)
    }

    /// Constants of `w_λ`, from those of `w` by change of variables.
    pub fn constants_at(&self, lambda: f64) -> Constants {
        let c = &self.constants;
        let q = 1.0 / (self.p - 1.0);
        let d = self.n as f64 / (2.0 * self.s);
        let pw = |e: f64| lambda.powf(e);
        Constants {
            m2: pw(2.0 * q - d) * c.m2,
            mp1: pw((self.p + 1.0) * q - d) * c.mp1,
            ip: pw(self.p * q - d) * c.ip,
            alpha_z: pw(2.0 * q + 1.0 / self.s - d) * c.alpha_z,
            c0: pw(2.0 * q - d) * c.c0,
            kinetic: pw(2.0 * q + 1.0 - d) * c.kinetic,
            c_star: pw(self.theta()) * c.c_star,
        }
    }

    /// Tail prefactor of `w_λ`: `w_λ(r) ≈ A_λ r^{−(n+2s)}`.
    pub fn a_tail_at(&self, lambda: f64) -> f64 {
        let e = 1.0 / (self.p - 1.0) - (self.n as f64 + 2.0 * self.s) / (2.0 * self.s);
        lambda.powf(e) * self.tail.a_tail
    }
}

/// One peak `w_λ(· − q)` in Ω_ε coordinates.
#[derive(Debug, Clone)]
pub struct Peak {
    pub gs: Arc<GroundState>,
    pub center: [f64; 2],
    pub lambda: f64,
}

impl Peak {
    pub fn new(gs: Arc<GroundState>, center: [f64; 2], lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(invalid("peak amplitude parameter must be positive"));
        }
        Ok(Peak { gs, center, lambda })
    }

    fn offset(&self, x: [f64; 2]) -> ([f64; 2], f64) {
        let d = [x[0] - self.center[0], x[1] - self.center[1]];
        (d, (d[0] * d[0] + d[1] * d[1]).sqrt())
    }

    /// Largest radius at which the tail law is trusted.
    fn valid_radius(&self) -> f64 {
        1e4 * self.gs.rescaled(self.lambda).r_max()
    }

    pub fn value(&self, x: [f64; 2]) -> f64 {
        self.gs.rescaled(self.lambda).eval(self.offset(x).1)
    }
}

/// Samples `w_i` on a grid (no exterior-zero flag).
pub fn sample_peak(peak: &Peak, grid: &Grid) -> Result<Field> {
    let wl = peak.gs.rescaled(peak.lambda);
    let lim = peak.valid_radius();
    let mut out = Field::zeros(*grid);
    for (idx, v) in out.values.iter_mut().enumerate() {
        let r = peak.offset(grid.coord(idx)).1;
        if r > lim {
            return Err(Error::OutOfRange { radius: r });
        }
        *v = wl.eval(r);
    }
    Ok(out)
}

/// `Z_j = ∂_j w_i = w_λ'(|x−q|)(x−q)_j/|x−q|`.
pub fn z_kernel(peak: &Peak, j: usize, grid: &Grid) -> Result<Field> {
    let wl = peak.gs.rescaled(peak.lambda);
    let lim = peak.valid_radius();
    let mut out = Field::zeros(*grid);
    for (idx, v) in out.values.iter_mut().enumerate() {
        let (d, r) = peak.offset(grid.coord(idx));
        if r > lim {
            return Err(Error::OutOfRange { radius: r });
        }
        *v = if r == 0.0 { 0.0 } else { wl.eval_with_deriv(r).1 * d[j] / r };
    }
    Ok(out)
}
