//! Energies of the problem and the reduced landscape over peak locations.

mod potential;
mod reduced;
mod search;

pub use potential::Potential;
pub use reduced::{
    asymptotic_energy, asymptotic_energy_matched, asymptotic_gradient, balance_residual, pair_coefficient, reduced_energy, reduced_gradient,
    tau_bar, ExactContext, Mode, ReducedEnergyReport, ReducedGradient,
};
pub use search::{find_critical_config, CriticalSearch, Placement, Region, SearchOptions};

use crate::error::Result;
use crate::gridcore::{apow, DirichletOp, Field};
use crate::groundstate::GroundState;
use serde::Serialize;
use std::path::Path;

/// `J_ε(u) = ½∫(u(−Δ)^s u + V(εx)u²) − ∫|u|^{p+1}/(p+1)` for an
/// exterior-zero `u`, with the quadratic form of the Dirichlet operator
/// (`op` should carry no shift).
pub fn energy(op: &DirichletOp, u: &Field, v: &Potential, p: f64) -> f64 {
    let d = &op.domain;
    let eps = d.eps;
    let n = d.n();
    let ui = d.restrict(u);
    let au = op.apply(&ui);
    let mut acc = 0.0;
    for (slot, &k) in d.interior().iter().enumerate() {
        let x = d.grid.coord(k);
        let vx = v.value(&[eps * x[0], eps * x[1]][..n]);
        let w = ui[slot];
        acc += 0.5 * (w * (au[slot] - op.lambda * w) + vx * w * w) - apow(w, p + 1.0) / (p + 1.0);
    }
    acc * d.grid.cell()
}

/// `J_λ(w_λ) = λ^θ c_*`.
pub fn free_energy(lambda: f64, gs: &GroundState) -> f64 {
    lambda.powf(gs.theta()) * gs.constants.c_star
}

/// `(ε, I_exact, I_asym, gap)`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GapRow {
    pub eps: f64,
    pub i_exact: f64,
    pub i_asym: f64,
    pub gap: f64,
}

/// `(spacing, interaction)` with the tail-law model alongside.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct InteractionRow {
    pub spacing: f64,
    pub interaction: f64,
    pub model: f64,
}

/// One configuration with its reduced gradient and balance residual;
/// vectors are `;`-separated.
#[derive(Debug, Clone, Serialize)]
pub struct BalanceRow {
    pub config: String,
    pub gradient: String,
    pub balance: String,
}

impl BalanceRow {
    pub fn new(q: &[[f64; 2]], n: usize, gradient: &[f64], balance: &[f64]) -> Self {
        let join = |v: &mut dyn Iterator<Item = f64>| v.map(|x| format!("{x:e}")).collect::<Vec<_>>().join(";");
        BalanceRow {
            config: join(&mut q.iter().flat_map(|c| c[..n].to_vec())),
            gradient: join(&mut gradient.iter().copied()),
            balance: join(&mut balance.iter().copied()),
        }
    }
}

/// Writes rows with a fixed header to `path`.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
