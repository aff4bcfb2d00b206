//! Peak detection and log-log exponent fits.

use crate::gridcore::Field;
use serde::{Deserialize, Serialize};

/// Local maxima above `0.5·max u`, refined by a parabola through the node
/// and its axis neighbours. Coordinates are those of the field's grid.
pub fn detect_peaks(u: &Field) -> Vec<[f64; 2]> {
    let g = u.grid;
    let top = u.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(top > 0.0) {
        return Vec::new();
    }
    let n = g.n;
    let mut out = Vec::new();
    for k in 0..g.len() {
        let v = u.values[k];
        if v <= 0.5 * top {
            continue;
        }
        let m = g.lattice(k);
        let mut is_max = true;
        let mut x = g.coord(k);
        for axis in 0..n {
            let step = |d: i64| {
                let mut mm = m;
                mm[axis] += d;
                g.locate(mm).map(|j| u.values[j])
            };
            let (lo, hi) = (step(-1), step(1));
            // ties break toward the lower index so a plateau gives one peak
            if lo.is_some_and(|a| a >= v) || hi.is_some_and(|b| b > v) {
                is_max = false;
                break;
            }
            if let (Some(a), Some(b)) = (lo, hi) {
                let curv = a - 2.0 * v + b;
                if curv < 0.0 {
                    x[axis] += 0.5 * g.h * (a - b) / curv;
                }
            }
        }
        if is_max {
            out.push(x);
        }
    }
    out
}

/// Greedy nearest-neighbour matching: entry `i` is the detected point
/// assigned to `predicted[i]`, closest pairs first.
pub fn assign_nearest(detected: &[[f64; 2]], predicted: &[[f64; 2]]) -> Vec<Option<usize>> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, p) in predicted.iter().enumerate() {
        for (j, d) in detected.iter().enumerate() {
            pairs.push((((p[0] - d[0]).powi(2) + (p[1] - d[1]).powi(2)).sqrt(), i, j));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut out = vec![None; predicted.len()];
    let mut used = vec![false; detected.len()];
    for (_, i, j) in pairs {
        if out[i].is_none() && !used[j] {
            out[i] = Some(j);
            used[j] = true;
        }
    }
    out
}

/// Least-squares slope of `ln y` against `ln x` with the consecutive
/// two-point slopes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    pub two_point: Vec<f64>,
}

pub fn fit_exponent(x: &[f64], y: &[f64]) -> ExponentFit {
    assert_eq!(x.len(), y.len());
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.abs().ln()).collect();
    let m = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    let two_point = lx
        .windows(2)
        .zip(ly.windows(2))
        .map(|(a, b)| (b[1] - b[0]) / (a[1] - a[0]))
        .collect();
    ExponentFit {
        slope,
        intercept: my - slope * mx,
        two_point,
    }
}
