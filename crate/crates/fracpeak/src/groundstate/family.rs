//! Ground states for every amplitude parameter λ that a configuration needs.
//!
//! With the continuum symbol one profile serves all λ through the exact
//! rescaling. With the lattice symbol on `h·Z^n` the rescaled profile must
//! solve the lattice equation at spacing `h·λ^{1/(2s)}`, so one solve per
//! distinct λ is memoized.

use super::cache::solve_cached;
use super::{GroundState, GsCache, GsOptions, Peak};
use crate::error::{Error, Result};
use std::collections::BTreeMap;
use std::sync::{Arc, Mutex, OnceLock};

type Slot = Arc<OnceLock<std::result::Result<Arc<GroundState>, String>>>;

#[derive(Debug)]
pub struct GsFamily {
    base: Arc<GroundState>,
    lattice_h: Option<f64>,
    cache: Option<GsCache>,
    memo: Mutex<BTreeMap<u64, Slot>>,
}

impl GsFamily {
    pub fn continuum(gs: Arc<GroundState>) -> Self {
        GsFamily {
            base: gs,
            lattice_h: None,
            cache: None,
            memo: Mutex::new(BTreeMap::new()),
        }
    }

    /// Lattice family for grids of spacing `h`.
    pub fn lattice(n: usize, s: f64, p: f64, h: f64, cache: Option<GsCache>) -> Result<Self> {
        let base = Arc::new(solve_cached(n, s, p, &GsOptions::lattice(n, h), cache.as_ref())?);
        let fam = GsFamily {
            base: base.clone(),
            lattice_h: Some(h),
            cache,
            memo: Mutex::new(BTreeMap::new()),
        };
        fam.memo
            .lock()
            .unwrap()
            .insert(1f64.to_bits(), Arc::new(OnceLock::from(Ok(base))));
        Ok(fam)
    }

    /// The λ = 1 ground state; its constants feed every asymptotic formula.
    pub fn base(&self) -> &Arc<GroundState> {
        &self.base
    }

    pub fn lattice_h(&self) -> Option<f64> {
        self.lattice_h
    }

    /// Profile whose rescaling by λ is exact on the family's lattice.
    pub fn for_lambda(&self, lambda: f64) -> Result<Arc<GroundState>> {
        let Some(h) = self.lattice_h else {
            return Ok(self.base.clone());
        };
        let slot = self
            .memo
            .lock()
            .unwrap()
            .entry(lambda.to_bits())
            .or_default()
            .clone();
        let b = &self.base;
        let res = slot.get_or_init(|| {
            let hl = h * lambda.powf(0.5 / b.s);
            solve_cached(b.n, b.s, b.p, &GsOptions::lattice(b.n, hl), self.cache.as_ref())
                .map(Arc::new)
                .map_err(|e| e.to_string())
        });
        res.clone().map_err(Error::Upstream)
    }

    pub fn peak(&self, center: [f64; 2], lambda: f64) -> Result<Peak> {
        Peak::new(self.for_lambda(lambda)?, center, lambda)
    }
}
