//! The multi-peak ansatz `W_q = Σ w_i`, the Dirichlet-corrected peaks
//! `ū_i` and their sum `U_q`, and the split `w_i − ū_i = Λ_i + Π_i`.
//!
//! `Λ_i` is the free-space response to the part of `w_i^p` lying outside
//! Ω_ε, computed with the lattice Green function of `A + λ_i`. `Π_i` is
//! whatever remains; on the lattice it is non-negative by the discrete
//! maximum principle.

use crate::energy::Potential;
use crate::error::{invalid, Error, Result};
use crate::gridcore::{
    assemble_dirichlet_with, frac_constant, image_sum, solve_dirichlet, spow, DirichletOp, Domain,
    ExteriorDatum, Field, Grid, LatticeConv, PeriodicBox, Symbol,
};
use crate::groundstate::{sample_peak, z_kernel, GroundState, GsFamily, Peak};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

/// Peak locations in Ω_ε coordinates with their amplitude parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakConfig {
    pub n: usize,
    pub eps: f64,
    pub q: Vec<[f64; 2]>,
    /// `λ_i = V(ε q_i)`.
    pub lambdas: Vec<f64>,
}

impl PeakConfig {
    pub fn new(n: usize, eps: f64, q: Vec<[f64; 2]>, v: &Potential) -> Result<Self> {
        let lambdas = q
            .iter()
            .map(|c| v.value(&[eps * c[0], eps * c[1]][..n]))
            .collect();
        PeakConfig::with_lambdas(n, eps, q, lambdas)
    }

    pub fn with_lambdas(n: usize, eps: f64, q: Vec<[f64; 2]>, lambdas: Vec<f64>) -> Result<Self> {
        if q.is_empty() || q.len() != lambdas.len() {
            return Err(invalid("need one λ per peak and at least one peak"));
        }
        if !(eps > 0.0) {
            return Err(invalid("ε must be positive"));
        }
        if let Some(l) = lambdas.iter().find(|l| !(**l > 0.0)) {
            return Err(invalid(format!("λ = {l} is not positive")));
        }
        let q = q
            .into_iter()
            .map(|c| if n == 1 { [c[0], 0.0] } else { c })
            .collect();
        Ok(PeakConfig { n, eps, q, lambdas })
    }

    /// The configuration of points `ξ_i` of Ω, mapped to Ω_ε.
    pub fn from_xi(n: usize, eps: f64, xi: &[[f64; 2]], v: &Potential) -> Result<Self> {
        let q = xi.iter().map(|x| [x[0] / eps, x[1] / eps]).collect();
        PeakConfig::new(n, eps, q, v)
    }

    pub fn k(&self) -> usize {
        self.q.len()
    }

    /// Are all centers lattice nodes of spacing `h`?
    pub fn on_lattice(&self, h: f64) -> bool {
        self.q
            .iter()
            .all(|c| c[..self.n].iter().all(|x| ((x / h) - (x / h).round()).abs() < 1e-9))
    }

    /// Centers moved to the nearest lattice nodes (λ_i kept).
    pub fn snapped(&self, h: f64) -> PeakConfig {
        let mut out = self.clone();
        for c in out.q.iter_mut() {
            for x in c[..self.n].iter_mut() {
                *x = (*x / h).round() * h;
            }
        }
        out
    }

    pub fn xi(&self, i: usize) -> [f64; 2] {
        [self.eps * self.q[i][0], self.eps * self.q[i][1]]
    }

    /// Minimal mutual distance η (infinite for one peak).
    pub fn eta(&self) -> f64 {
        let mut m = f64::INFINITY;
        for i in 0..self.k() {
            for l in i + 1..self.k() {
                m = m.min(dist(self.q[i], self.q[l]));
            }
        }
        m
    }

    /// Minimal distance `d` from a peak to ∂Ω_ε.
    pub fn boundary_gap(&self, domain: &Domain) -> f64 {
        self.q
            .iter()
            .map(|c| domain.boundary_distance(&c[..self.n]))
            .fold(f64::INFINITY, f64::min)
    }

    /// Membership in Ξ_η: every peak at least `δ_*/ε` from ∂Ω_ε and
    /// mutual distances at least `eta_min`.
    pub fn check(&self, domain: &Domain, eta_min: f64) -> Result<()> {
        if domain.n() != self.n {
            return Err(invalid("configuration and domain dimensions differ"));
        }
        let floor = domain.delta_star() / self.eps;
        let d = self.boundary_gap(domain);
        if d < floor {
            return Err(invalid(format!(
                "peak at distance {d:.3} from the boundary, below δ_*/ε = {floor:.3}"
            )));
        }
        let eta = self.eta();
        if eta < eta_min {
            return Err(invalid(format!("peak separation {eta:.3} below the minimum {eta_min:.3}")));
        }
        Ok(())
    }
}

pub(crate) fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectionOptions {
    /// Relative tolerance of the Dirichlet solves.
    pub tol: f64,
    /// `Π_i` below `−pi_tol·max w_i` on Ω_ε raises `NegativePi`.
    pub pi_tol: f64,
    /// Exterior source `w_i^p` is dropped below this value.
    pub tail_cut: f64,
    /// Largest lattice block used for the exterior convolution.
    pub max_ext_nodes: usize,
}

impl Default for CorrectionOptions {
    fn default() -> Self {
        CorrectionOptions {
            tol: 1e-12,
            pi_tol: 1e-6,
            tail_cut: 1e-14,
            max_ext_nodes: 1 << 18,
        }
    }
}

/// `ū_i`, `Λ_i`, `Π_i` for one peak, on the domain grid.
#[derive(Debug, Clone)]
pub struct Correction {
    pub w: Field,
    pub ubar: Field,
    pub lam: Field,
    pub pi: Field,
    /// Largest exterior source value left out of `Λ_i`.
    pub tail_dropped: f64,
}

/// Lattice Green function of `A + λ` as convolution weights:
/// `u = Σ_b g(a − b) f_b` solves `(A + λ)u = f` on `h·Z^n`.
pub struct GreenTable {
    n: usize,
    dims: [usize; 2],
    values: Vec<f64>,
}

impl GreenTable {
    /// Weights for offsets `|m_d| < range_d`.
    pub fn new(n: usize, s: f64, h: f64, lambda: f64, range: [usize; 2], symbol: Symbol) -> Self {
        let m0 = (2 * range[0] + 2).next_power_of_two().max(64);
        let m1 = if n == 2 {
            (2 * range[1] + 2).next_power_of_two().max(64)
        } else {
            1
        };
        let pbox = PeriodicBox::new(n, [m0, m1], h);
        let spec = pbox
            .multiplier_table(|k| 1.0 / (symbol.eval(k, s, h) + lambda))
            .into_iter()
            .map(|v| Complex64::new(v, 0.0))
            .collect();
        let mut values = pbox.from_spectrum(spec);
        // far field λ^{-2}·K(m) ≈ λ^{-2} c_{n,s} h^n |x|^{-(n+2s)}; remove its images
        let amp = frac_constant(n, s) * h.powi(n as i32) / (lambda * lambda);
        let lengths = pbox.lengths();
        for (idx, v) in values.iter_mut().enumerate() {
            *v -= amp * image_sum(n, n as f64 + 2.0 * s, lengths, pbox.coord(idx));
        }
        GreenTable {
            n,
            dims: [m0, m1],
            values,
        }
    }

    pub fn weight(&self, m: [i64; 2]) -> f64 {
        let i = m[0].rem_euclid(self.dims[0] as i64) as usize;
        let j = if self.n == 2 {
            m[1].rem_euclid(self.dims[1] as i64) as usize
        } else {
            0
        };
        self.values[i * self.dims[1] + j]
    }
}

/// Radius beyond which `w_λ^p` falls below `cut`, from the tail law.
fn source_radius(peak: &Peak, cut: f64) -> f64 {
    let gs = &peak.gs;
    let a = gs.a_tail_at(peak.lambda).abs().max(1e-300);
    let e = gs.n as f64 + 2.0 * gs.s;
    let r = (a.powf(gs.p) / cut).powf(1.0 / (gs.p * e));
    r.max(gs.rescaled(peak.lambda).r_max().min(4.0 * r))
}

/// `Λ_i` on the domain grid: the lattice convolution of `G_λ` with
/// `w_i^p·1_{R^n∖Ω_ε}`.
pub fn exterior_response(
    peak: &Peak,
    domain: &Domain,
    symbol: Symbol,
    opts: &CorrectionOptions,
) -> Result<(Field, f64)> {
    let g = domain.grid;
    let n = g.n;
    let h = g.h;
    let mut r = source_radius(peak, opts.tail_cut);
    let block = |r: f64| {
        let mut first = [0i64; 2];
        let mut dims = [1usize; 2];
        for a in 0..n {
            let lo = ((peak.center[a] - r) / h).floor() as i64;
            let hi = ((peak.center[a] + r) / h).ceil() as i64;
            let f = lo.min(g.first[a]);
            let l = hi.max(g.first[a] + g.dims[a] as i64 - 1);
            first[a] = f;
            dims[a] = (l - f + 1) as usize;
        }
        Grid::new(n, dims, first, h)
    };
    let mut ext = block(r);
    while ext.len() > opts.max_ext_nodes {
        r *= 0.8;
        let next = block(r);
        if next.len() == ext.len() {
            break;
        }
        ext = next;
    }
    let p = peak.gs.p;
    let mut src = vec![0.0; ext.len()];
    let mut dropped = 0.0f64;
    for (idx, v) in src.iter_mut().enumerate() {
        let m = ext.lattice(idx);
        let inside = g.locate(m).is_some_and(|k| domain.is_interior(k));
        if !inside {
            *v = spow(peak.value(ext.coord(idx)), p);
        }
    }
    // what the finite block leaves out, at its edge
    for a in 0..n {
        for side in [-1.0, 1.0] {
            let mut x = peak.center;
            x[a] += side * r;
            dropped = dropped.max(spow(peak.value(x), p));
        }
    }
    let range = [ext.dims[0], if n == 2 { ext.dims[1] } else { 0 }];
    let green = GreenTable::new(n, peak.gs.s, h, peak.lambda, range, symbol);
    let conv = LatticeConv::new(ext, |m| green.weight(m));
    let out = conv.apply(&src);
    let mut lam = Field::zeros(g);
    for (k, v) in lam.values.iter_mut().enumerate() {
        let e = ext.locate(g.lattice(k)).expect("domain grid inside the block");
        *v = out[e];
    }
    Ok((lam, dropped))
}

/// `ū_i`, `Λ_i` and `Π_i = w_i − ū_i − Λ_i` for one peak; `op` must carry
/// the shift `λ_i`.
pub fn corrected_peak_with(peak: &Peak, op: &DirichletOp, opts: &CorrectionOptions) -> Result<Correction> {
    let domain = &op.domain;
    if (op.lambda - peak.lambda).abs() > 1e-14 * peak.lambda {
        return Err(invalid("operator shift differs from the peak's λ"));
    }
    let w = sample_peak(peak, &domain.grid)?;
    let rhs = w.map(|v| spow(v, peak.gs.p));
    let ubar = solve_dirichlet(op, &rhs, &ExteriorDatum::Zero, opts.tol)?;
    let (lam, tail_dropped) = exterior_response(peak, domain, op.symbol(), opts)?;
    let mut pi = Field::zeros(domain.grid);
    for k in 0..pi.values.len() {
        pi.values[k] = w.values[k] - ubar.values[k] - lam.values[k];
    }
    let wmax = w.max_abs();
    let min = domain
        .interior()
        .iter()
        .map(|&k| pi.values[k])
        .fold(f64::INFINITY, f64::min);
    if min < -opts.pi_tol * wmax {
        return Err(Error::NegativePi { min });
    }
    Ok(Correction {
        w,
        ubar,
        lam,
        pi,
        tail_dropped,
    })
}

/// [`corrected_peak_with`] with a freshly assembled operator whose symbol
/// matches the one the ground state was solved with.
pub fn corrected_peak(peak: &Peak, domain: &Domain, opts: &CorrectionOptions) -> Result<Correction> {
    let op = assemble_dirichlet_with(domain, peak.gs.s, peak.lambda, peak.gs.options.symbol)?;
    corrected_peak_with(peak, &op, opts)
}

/// One peak of an ansatz with its correction and translation kernels.
#[derive(Debug, Clone)]
pub struct PeakParts {
    pub peak: Peak,
    pub corr: Correction,
    /// `Z_ij = ∂_j w_i`, `j < n`.
    pub z: Vec<Field>,
}

/// Everything the reduction needs about a configuration.
#[derive(Debug, Clone)]
pub struct AnsatzBundle {
    pub config: PeakConfig,
    pub domain: Arc<Domain>,
    /// The λ = 1 ground state (constants for asymptotic formulas).
    pub base: Arc<GroundState>,
    pub s: f64,
    pub p: f64,
    pub peaks: Vec<PeakParts>,
    /// `W_q` on the domain grid (not exterior-zero).
    pub w_sum: Field,
    /// `U_q`, exterior-zero.
    pub u_sum: Field,
    /// `A` restricted to Ω_ε, without shift.
    pub op: DirichletOp,
    pub opts: CorrectionOptions,
}

/// Builds the ansatz of a configuration on a domain.
pub fn build_ansatz(
    config: &PeakConfig,
    family: &GsFamily,
    domain: &Domain,
    opts: &CorrectionOptions,
) -> Result<AnsatzBundle> {
    if let Some(h) = family.lattice_h() {
        if (h - domain.h()).abs() > 1e-12 * h {
            return Err(invalid(format!(
                "lattice ground states were built for h = {h}, the domain has h = {}",
                domain.h()
            )));
        }
    }
    if config.n != domain.n() {
        return Err(invalid("configuration and domain dimensions differ"));
    }
    if family.lattice_h().is_some() && !config.on_lattice(domain.h()) {
        // a lattice ground state solves its equation only at lattice offsets
        return Err(invalid("lattice ground states need peak centers on the grid"));
    }
    let base = family.base().clone();
    let op = assemble_dirichlet_with(domain, base.s, 0.0, base.options.symbol)?;
    let mut shifted: BTreeMap<u64, DirichletOp> = BTreeMap::new();
    for &l in &config.lambdas {
        shifted.entry(l.to_bits()).or_insert_with(|| op.with_shift(l));
    }
    let peaks: Vec<Peak> = config
        .q
        .iter()
        .zip(&config.lambdas)
        .map(|(&c, &l)| family.peak(c, l))
        .collect::<Result<_>>()?;
    let parts: Vec<PeakParts> = peaks
        .into_par_iter()
        .map(|peak| {
            let sop = &shifted[&peak.lambda.to_bits()];
            let corr = corrected_peak_with(&peak, sop, opts)?;
            let z = (0..config.n)
                .map(|j| z_kernel(&peak, j, &domain.grid))
                .collect::<Result<_>>()?;
            Ok(PeakParts { peak, corr, z })
        })
        .collect::<Result<_>>()?;
    let g = domain.grid;
    let mut w_sum = Field::zeros(g);
    let mut u_sum = Field::zeros(g);
    for pp in &parts {
        w_sum = w_sum.axpy(1.0, &pp.corr.w);
        u_sum = u_sum.axpy(1.0, &pp.corr.ubar);
    }
    w_sum.exterior_zero = false;
    u_sum.exterior_zero = true;
    Ok(AnsatzBundle {
        config: config.clone(),
        domain: op.domain.clone(),
        base,
        s: op.s,
        p: family.base().p,
        peaks: parts,
        w_sum,
        u_sum,
        op,
        opts: *opts,
    })
}

impl AnsatzBundle {
    pub fn k(&self) -> usize {
        self.peaks.len()
    }

    pub fn n(&self) -> usize {
        self.config.n
    }

    /// `max |U_q − (W_q − Σ(Λ_i + Π_i))|` over the grid.
    pub fn decomposition_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for k in 0..self.w_sum.values.len() {
            let mut r = self.w_sum.values[k] - self.u_sum.values[k];
            for pp in &self.peaks {
                r -= pp.corr.lam.values[k] + pp.corr.pi.values[k];
            }
            worst = worst.max(r.abs());
        }
        worst
    }

    /// `sup_{Ω_ε} |U_q − W_q|`.
    pub fn sup_gap(&self) -> f64 {
        self.domain
            .interior()
            .iter()
            .map(|&k| (self.u_sum.values[k] - self.w_sum.values[k]).abs())
            .fold(0.0, f64::max)
    }

    /// Z kernels in `(i, j)` order, flattened.
    pub fn z_list(&self) -> Vec<&Field> {
        self.peaks.iter().flat_map(|pp| pp.z.iter()).collect()
    }

    /// `∫_{Ω_ε} w_i^r Π_ℓ^t` (signed powers).
    pub fn pi_weighted_integral(&self, i: usize, l: usize, r: f64, t: f64) -> f64 {
        pi_weighted_integrals(self, i, l, r, t)
    }

    /// Writes one field file per component plus `manifest.json`.
    pub fn export(&self, dir: &Path) -> Result<()> {
        use crate::gridcore::write_field;
        std::fs::create_dir_all(dir)?;
        write_field(&dir.join("W_q.fpk"), &self.w_sum, "W_q", serde_json::Value::Null)?;
        write_field(&dir.join("U_q.fpk"), &self.u_sum, "U_q", serde_json::Value::Null)?;
        for (i, pp) in self.peaks.iter().enumerate() {
            let c = &pp.corr;
            for (name, f) in [("w", &c.w), ("ubar", &c.ubar), ("Lambda", &c.lam), ("Pi", &c.pi)] {
                let tag = format!("{name}_{i}");
                write_field(&dir.join(format!("{tag}.fpk")), f, &tag, serde_json::Value::Null)?;
            }
            for (j, z) in pp.z.iter().enumerate() {
                let tag = format!("Z_{i}{j}");
                write_field(&dir.join(format!("{tag}.fpk")), z, &tag, serde_json::Value::Null)?;
            }
        }
        let manifest = serde_json::json!({
            "config": self.config,
            "h": self.domain.h(),
            "sup_gap": self.sup_gap(),
            "decomposition_defect": self.decomposition_defect(),
            "peaks": self.peaks.iter().map(|pp| serde_json::json!({
                "lambda": pp.peak.lambda,
                "sup_lambda": pp.corr.lam.max_abs(),
                "min_pi": self.domain.interior().iter().map(|&k| pp.corr.pi.values[k]).fold(f64::INFINITY, f64::min),
                "tail_dropped": pp.corr.tail_dropped,
            })).collect::<Vec<_>>(),
        });
        std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }
}

/// `∫ w_i^p w_ℓ` with the tail-law prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub value: f64,
    pub model: f64,
    pub spacing: f64,
}

/// Prediction `λ_i^{p/(p−1)−n/(2s)} λ_ℓ^{1/(p−1)−(n+2s)/(2s)} I_p A / |q_i−q_ℓ|^{n+2s}`.
pub fn interaction_model(gs: &GroundState, li: f64, ll: f64, spacing: f64) -> f64 {
    let n = gs.n as f64;
    let (s, p) = (gs.s, gs.p);
    li.powf(p / (p - 1.0) - n / (2.0 * s))
        * ll.powf(1.0 / (p - 1.0) - (n + 2.0 * s) / (2.0 * s))
        * gs.constants.ip
        * gs.tail.a_tail
        / spacing.powf(n + 2.0 * s)
}

/// Lattice quadrature of `∫ w_i^p w_ℓ` over a block of spacing `h` that
/// extends `pad` beyond both centers.
pub fn interaction_quadrature(pi: &Peak, pl: &Peak, h: f64, pad: f64) -> Result<f64> {
    let n = pi.gs.n;
    let mut first = [0i64; 2];
    let mut dims = [1usize; 2];
    for a in 0..n {
        let lo = pi.center[a].min(pl.center[a]) - pad;
        let hi = pi.center[a].max(pl.center[a]) + pad;
        first[a] = (lo / h).floor() as i64;
        dims[a] = ((hi / h).ceil() as i64 - first[a] + 1) as usize;
    }
    let grid = Grid::new(n, dims, first, h);
    let wi = sample_peak(pi, &grid)?;
    let wl = sample_peak(pl, &grid)?;
    let p = pi.gs.p;
    Ok(wi
        .values
        .iter()
        .zip(&wl.values)
        .map(|(a, b)| spow(*a, p) * b)
        .sum::<f64>()
        * grid.cell())
}

/// `∫ w_i^p w_ℓ` for two peaks of a bundle.
pub fn interaction_integral(bundle: &AnsatzBundle, i: usize, l: usize) -> Result<Interaction> {
    if i == l {
        return Err(invalid("interaction needs two different peaks"));
    }
    let (a, b) = (&bundle.peaks[i].peak, &bundle.peaks[l].peak);
    let pad = source_radius(a, bundle.opts.tail_cut);
    let value = interaction_quadrature(a, b, bundle.domain.h(), pad)?;
    let spacing = dist(a.center, b.center);
    let model = interaction_model(&bundle.base, a.lambda, b.lambda, spacing);
    Ok(Interaction {
        value,
        model,
        spacing,
    })
}

/// `∫_{Ω_ε} w_i^r Π_ℓ^t` (signed powers).
pub fn pi_weighted_integrals(bundle: &AnsatzBundle, i: usize, l: usize, r: f64, t: f64) -> f64 {
    let w = &bundle.peaks[i].corr.w;
    let pi = &bundle.peaks[l].corr.pi;
    bundle
        .domain
        .interior()
        .iter()
        .map(|&k| spow(w.values[k], r) * spow(pi.values[k], t))
        .sum::<f64>()
        * bundle.domain.grid.cell()
}
