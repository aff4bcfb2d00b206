//! On-disk ground-state cache: a JSON header plus a binary file with the
//! radial samples, keyed by a hash of (n, s, p, R_max, h, symbol, box).

use super::{GroundState, GsOptions};
use crate::error::Result;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

static CACHE_LOCK: Mutex<()> = Mutex::new(());

/// Environment variable naming the cache root.
pub const CACHE_ENV: &str = "FRACPEAK_CACHE";

#[derive(Debug, Clone)]
pub struct GsCache {
    root: PathBuf,
}

/// One cached ground state as listed by [`GsCache::list`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub hash: String,
    pub n: usize,
    pub s: f64,
    pub p: f64,
    pub r_max: f64,
    pub h: f64,
    pub symbol: crate::gridcore::Symbol,
    pub residual: f64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    entry: CacheEntry,
    /// The ground state with empty sample vectors.
    gs: GroundState,
    nodes: usize,
}

fn key(n: usize, s: f64, p: f64, o: &GsOptions) -> String {
    let text = format!(
        "gs;n={n};s={s:?};p={p:?};r_max={:?};h={:?};symbol={:?};n_box={};n_flow={};tol={:?};probes={};seed={}",
        o.r_max, o.h, o.symbol, o.n_box, o.n_flow, o.newton_tol, o.probes, o.seed
    );
    hex::encode(Sha256::digest(text.as_bytes()))[..20].to_string()
}

impl GsCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        GsCache { root: root.into() }
    }

    /// Cache rooted at `$FRACPEAK_CACHE`, if set.
    pub fn from_env() -> Option<Self> {
        std::env::var_os(CACHE_ENV).map(GsCache::new)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn paths(&self, hash: &str) -> (PathBuf, PathBuf) {
        (
            self.root.join(format!("gs-{hash}.json")),
            self.root.join(format!("gs-{hash}.bin")),
        )
    }

    pub fn load(&self, n: usize, s: f64, p: f64, o: &GsOptions) -> Result<Option<GroundState>> {
        let (hp, bp) = self.paths(&key(n, s, p, o));
        if !hp.exists() || !bp.exists() {
            return Ok(None);
        }
        let header: Header = serde_json::from_str(&fs::read_to_string(&hp)?)?;
        let bytes = fs::read(&bp)?;
        let m = header.nodes;
        if bytes.len() != 32 * m {
            log::warn!("ignoring truncated cache entry {}", bp.display());
            return Ok(None);
        }
        let vals: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let mut gs = header.gs;
        gs.profile.r = vals[..m].to_vec();
        gs.profile.w = vals[m..2 * m].to_vec();
        gs.profile.dw = vals[2 * m..3 * m].to_vec();
        gs.profile.d2w = vals[3 * m..].to_vec();
        Ok(Some(gs))
    }

    pub fn store(&self, gs: &GroundState) -> Result<()> {
        fs::create_dir_all(&self.root)?;
        let hash = key(gs.n, gs.s, gs.p, &gs.options);
        let (hp, bp) = self.paths(&hash);
        let pr = &gs.profile;
        let mut bytes = Vec::with_capacity(32 * pr.r.len());
        for v in pr.r.iter().chain(&pr.w).chain(&pr.dw).chain(&pr.d2w) {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let mut bare = gs.clone();
        bare.profile.r.clear();
        bare.profile.w.clear();
        bare.profile.dw.clear();
        bare.profile.d2w.clear();
        let header = Header {
            entry: CacheEntry {
                hash: hash.clone(),
                n: gs.n,
                s: gs.s,
                p: gs.p,
                r_max: gs.options.r_max,
                h: gs.options.h,
                symbol: gs.options.symbol,
                residual: gs.residual,
            },
            gs: bare,
            nodes: pr.r.len(),
        };
        // write-then-rename keeps concurrent readers from seeing partial files
        let tmp_b = bp.with_extension(format!("bin.{}", std::process::id()));
        fs::write(&tmp_b, bytes)?;
        fs::rename(&tmp_b, &bp)?;
        let tmp_h = hp.with_extension(format!("json.{}", std::process::id()));
        fs::write(&tmp_h, serde_json::to_string_pretty(&header)?)?;
        fs::rename(&tmp_h, &hp)?;
        Ok(())
    }

    /// Cached entries, sorted by hash.
    pub fn list(&self) -> Result<Vec<CacheEntry>> {
        let mut out = Vec::new();
        if !self.root.exists() {
            return Ok(out);
        }
        for e in fs::read_dir(&self.root)? {
            let path = e?.path();
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
            if name.starts_with("gs-") && name.ends_with(".json") {
                let header: Header = serde_json::from_str(&fs::read_to_string(&path)?)?;
                out.push(header.entry);
            }
        }
        out.sort_by(|a, b| a.hash.cmp(&b.hash));
        Ok(out)
    }

    /// Removes every cache file; returns the number of entries removed.
    pub fn clear(&self) -> Result<usize> {
        let n = self.list()?.len();
        if self.root.exists() {
            for e in fs::read_dir(&self.root)? {
                let path = e?.path();
                let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
                if name.starts_with("gs-") {
                    fs::remove_file(&path)?;
                }
            }
        }
        Ok(n)
    }
}

/// Loads from the cache when possible, otherwise solves and stores.
pub fn solve_cached(n: usize, s: f64, p: f64, o: &GsOptions, cache: Option<&GsCache>) -> Result<GroundState> {
    // one solve per key at a time within the process
    let _guard = cache.map(|_| CACHE_LOCK.lock().unwrap_or_else(|e| e.into_inner()));
    if let Some(c) = cache {
        if let Some(gs) = c.load(n, s, p, o)? {
            return Ok(gs);
        }
    }
    let gs = super::solve_ground_state(n, s, p, o)?;
    if let Some(c) = cache {
        c.store(&gs)?;
    }
    Ok(gs)
}
