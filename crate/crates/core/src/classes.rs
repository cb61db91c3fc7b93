//! Doubling diagnostics and the dyadic radii / index blocks attached to a
//! weight.
//!
//! Class membership is asymptotic and cannot be decided on a finite grid;
//! the reports below describe what the grid shows near `r = 1`.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridMeta};
use crate::weight::RadialWeight;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClassTag {
    Dhat,
    Dcheck,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Trend {
    Stable,
    Growing,
    Inconclusive,
    /// The shifted tail underflowed before the end of the grid.
    Divergent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Membership {
    Member,
    Fail,
    Inconclusive,
}

/// `C(K)` at successive truncation levels of the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcheckEntry {
    pub k: f64,
    pub level_co_radii: Vec<f64>,
    #[serde(with = "crate::num_serde::vector")]
    pub c_by_level: Vec<f64>,
    pub argmin_radius: f64,
    pub verdict: Membership,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoublingReport {
    pub class_tag: ClassTag,
    /// `sup` of the doubling ratio for `Dhat`; the largest `C(K)` for `Dcheck`.
    #[serde(with = "crate::num_serde::scalar")]
    pub sup_estimate: f64,
    pub argmax_radius: f64,
    pub trend: Trend,
    pub grid_meta: GridMeta,
    /// Ratio of band sups (last dyadic band over the previous one).
    #[serde(with = "crate::num_serde::scalar")]
    pub band_ratio: f64,
    #[serde(with = "crate::num_serde::scalar")]
    pub last_finite_ratio: f64,
    pub dcheck: Vec<DcheckEntry>,
    pub verdict: Option<Membership>,
}

/// Default grid for class diagnostics: 512 nodes geometric in `1 - r`,
/// from `1 - 10⁻¹` to `1 - t_min`.
pub fn class_grid(t_min: f64) -> Result<Grid> {
    if !(t_min > 0.0 && t_min < 0.1) {
        return Err(Error::Parameter(format!("class grid needs 0 < 1 - r_max < 0.1, got {t_min}")));
    }
    Ok(Grid::geometric(0.1, t_min, 511))
}

fn shifted_ratio(w: &RadialWeight, t: f64, k: f64) -> Result<Option<f64>> {
    let num = w.tail_co(t)?;
    let den = w.tail_co(t / k)?;
    if num == 0.0 {
        return Ok(None);
    }
    Ok(Some(if den == 0.0 { f64::INFINITY } else { num / den }))
}

fn band_sup(w: &RadialWeight, grid: &Grid, t_lo: f64, t_hi: f64) -> Result<Option<f64>> {
    let mut best: Option<f64> = None;
    let mut pts: Vec<f64> = grid.band(t_lo, t_hi).map(|i| grid.co_radius(i)).collect();
    pts.push(t_lo);
    pts.push(t_hi);
    for t in pts {
        match shifted_ratio(w, t, 2.0)? {
            Some(v) if v.is_finite() => best = Some(best.map_or(v, |b: f64| b.max(v))),
            _ => return Ok(None),
        }
    }
    Ok(best)
}

/// `sup ŵ(r)/ŵ((1+r)/2)` over the grid, with a trend read off the last two
/// dyadic bands `[1-2ε, 1-ε]` and `[1-4ε, 1-2ε]`.
pub fn dhat_profile(w: &RadialWeight, grid: &Grid) -> Result<DoublingReport> {
    let mut sup = f64::NEG_INFINITY;
    let mut argmax = grid.radius(0);
    let mut last_finite = f64::NAN;
    let mut underflow = false;
    for (i, &t) in grid.co_radii().iter().enumerate() {
        match shifted_ratio(w, t, 2.0)? {
            Some(v) if v.is_finite() => {
                last_finite = v;
                if v > sup {
                    sup = v;
                    argmax = grid.radius(i);
                }
            }
            _ => {
                underflow = true;
                break;
            }
        }
    }
    if sup == f64::NEG_INFINITY {
        return Err(Error::Degenerate(format!("tail of {w} vanishes on the whole grid")));
    }
    let eps = *grid.co_radii().last().unwrap();
    let (trend, band_ratio) = if underflow {
        (Trend::Divergent, f64::INFINITY)
    } else {
        match (band_sup(w, grid, eps, 2.0 * eps)?, band_sup(w, grid, 2.0 * eps, 4.0 * eps)?) {
            (Some(last), Some(prev)) => {
                let q = last / prev;
                let trend = if q > 1.05 {
                    Trend::Growing
                } else if q > 0.95 {
                    Trend::Stable
                } else {
                    Trend::Inconclusive
                };
                (trend, q)
            }
            _ => (Trend::Divergent, f64::INFINITY),
        }
    };
    Ok(DoublingReport {
        class_tag: ClassTag::Dhat,
        sup_estimate: sup,
        argmax_radius: argmax,
        trend,
        grid_meta: grid.meta(),
        band_ratio,
        last_finite_ratio: last_finite,
        dcheck: Vec::new(),
        verdict: None,
    })
}

/// Truncation levels used as the refinement sequence: the grid cut at
/// `ε·10⁴`, `ε·10²`, `ε`, keeping only levels inside the grid.
fn truncation_levels(grid: &Grid) -> Vec<f64> {
    let eps = *grid.co_radii().last().unwrap();
    let top = grid.co_radius(0);
    let mut levels: Vec<f64> = [1e4, 1e2, 1.0].iter().map(|f| eps * f).filter(|&t| t < top).collect();
    if levels.is_empty() {
        levels.push(eps);
    }
    levels
}

/// Margin by which `C(K)` must exceed 1 for an empirical membership claim.
pub const DCHECK_MARGIN: f64 = 0.05;

/// `C(K) = inf ŵ(r)/ŵ(1 - (1-r)/K)` over the grid for each candidate `K`.
pub fn dcheck_search(w: &RadialWeight, ks: &[f64], grid: &Grid) -> Result<DoublingReport> {
    if ks.is_empty() {
        return Err(Error::Parameter("no K candidates".into()));
    }
    if let Some(k) = ks.iter().find(|k| !(**k > 1.0 && k.is_finite())) {
        return Err(Error::Parameter(format!("K = {k} must exceed 1")));
    }
    let levels = truncation_levels(grid);
    let mut entries = Vec::with_capacity(ks.len());
    for &k in ks {
        let mut vals: Vec<(f64, f64)> = Vec::with_capacity(grid.len());
        for &t in grid.co_radii() {
            if let Some(v) = shifted_ratio(w, t, k)? {
                vals.push((t, v));
            }
        }
        if vals.is_empty() {
            return Err(Error::Degenerate(format!("tail of {w} vanishes on the whole grid")));
        }
        let mut c_by_level = Vec::with_capacity(levels.len());
        let mut argmin = 0.0;
        for &lev in &levels {
            let mut c = f64::INFINITY;
            for &(t, v) in vals.iter().filter(|(t, _)| *t >= lev * (1.0 - 1e-12)) {
                if v < c {
                    c = v;
                    argmin = 1.0 - t;
                }
            }
            c_by_level.push(c);
        }
        let excess: Vec<f64> = c_by_level.iter().map(|c| c - 1.0).collect();
        let last = *excess.last().unwrap();
        let shrinking = excess.len() >= 2
            && excess.windows(2).all(|e| e[1] < e[0])
            && last < 0.9 * excess[0];
        let verdict = if last <= 0.0 || shrinking {
            Membership::Fail
        } else if last > DCHECK_MARGIN {
            Membership::Member
        } else {
            Membership::Inconclusive
        };
        entries.push(DcheckEntry { k, level_co_radii: levels.clone(), c_by_level, argmin_radius: argmin, verdict });
    }
    let verdict = if entries.iter().any(|e| e.verdict == Membership::Member) {
        Membership::Member
    } else if entries.iter().all(|e| e.verdict == Membership::Fail) {
        Membership::Fail
    } else {
        Membership::Inconclusive
    };
    let best = entries
        .iter()
        .max_by(|a, b| a.c_by_level.last().unwrap().total_cmp(b.c_by_level.last().unwrap()))
        .unwrap();
    let trend = match best.verdict {
        Membership::Member => Trend::Stable,
        Membership::Fail => Trend::Inconclusive,
        Membership::Inconclusive => Trend::Inconclusive,
    };
    Ok(DoublingReport {
        class_tag: ClassTag::Dcheck,
        sup_estimate: *best.c_by_level.last().unwrap(),
        argmax_radius: best.argmin_radius,
        trend,
        grid_meta: grid.meta(),
        band_ratio: f64::NAN,
        last_finite_ratio: *best.c_by_level.last().unwrap(),
        dcheck: entries,
        verdict: Some(verdict),
    })
}

/// Dyadic radii `ŵ₁(ρ_n) = 2^{-n} ŵ₁(0)`, the integers `M_n = ⌊1/(1-ρ_n)⌋`
/// and the index blocks `I(0) = [0, M_1)`, `I(n) = [M_n, M_{n+1})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DyadicDecomposition {
    pub rho: Vec<f64>,
    /// `1 - ρ_n`, kept separately since `ρ_n` rounds to 1 early.
    pub co_rho: Vec<f64>,
    #[serde(rename = "M")]
    pub m: Vec<u64>,
    pub blocks: Vec<Range<u64>>,
    pub empty_blocks: Vec<usize>,
    /// Set when the sequence stopped before `n_max`.
    pub truncated_at: Option<usize>,
    pub tail1_at_zero: f64,
}

/// Relative distance to an integer under which `1/(1-ρ_n)` counts as a tie.
pub const TIE_TOLERANCE: f64 = 1e-9;

fn floor_with_ties(x: f64) -> u64 {
    let m = x.round();
    if x == m {
        return m as u64;
    }
    if (x - m).abs() <= TIE_TOLERANCE * x {
        // undecidable side of an integer: take the smaller candidate
        return (m as u64).saturating_sub(1);
    }
    x.floor() as u64
}

/// Largest `1/(1-ρ)` kept before the floor stops being exact.
const MAX_RECIPROCAL: f64 = 4_503_599_627_370_496.0; // 2^52

/// `None` when the solution lies below the smallest representable co-radius.
fn solve_co_radius(w: &RadialWeight, target: f64) -> Result<Option<f64>> {
    // ŵ₁ is increasing in the co-radius; bracket geometrically then bisect.
    let mut hi = 1.0;
    let mut lo = 0.5;
    while w.tail1_co(lo)? >= target {
        hi = lo;
        lo *= 0.5;
        if lo < 1e-300 {
            return Ok(None);
        }
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= 1e-16 * hi {
            break;
        }
        if w.tail1_co(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}

pub fn rho_sequence(w: &RadialWeight, n_max: usize) -> Result<DyadicDecomposition> {
    if n_max < 1 {
        return Err(Error::Parameter("n_max must be at least 1".into()));
    }
    let w0 = w.tail1_co(1.0)?;
    if !(w0.is_finite() && w0 > 0.0) {
        return Err(Error::Degenerate(format!("ŵ₁(0) = {w0} for {w}")));
    }
    let mut co_rho = vec![1.0];
    let mut truncated_at = None;
    for n in 1..=n_max {
        let target = w0 * 2f64.powi(-(n as i32));
        if !(target > 1e-300) {
            truncated_at = Some(n);
            break;
        }
        let t = match solve_co_radius(w, target)? {
            Some(t) if 1.0 / t <= MAX_RECIPROCAL => t,
            _ => {
                truncated_at = Some(n);
                break;
            }
        };
        co_rho.push(t);
    }
    let rho: Vec<f64> = co_rho.iter().map(|t| 1.0 - t).collect();
    let m: Vec<u64> = co_rho.iter().map(|t| floor_with_ties(1.0 / t)).collect();
    let mut blocks = Vec::with_capacity(m.len().saturating_sub(1));
    let mut empty_blocks = Vec::new();
    for n in 0..m.len().saturating_sub(1) {
        let start = if n == 0 { 0 } else { m[n] };
        let b = start..m[n + 1];
        if b.is_empty() {
            empty_blocks.push(n);
        }
        blocks.push(b);
    }
    Ok(DyadicDecomposition { rho, co_rho, m, blocks, empty_blocks, truncated_at, tail1_at_zero: w0 })
}

impl DyadicDecomposition {
    /// One past the largest index covered by the blocks.
    pub fn index_limit(&self) -> u64 {
        self.blocks.last().map_or(0, |b| b.end.max(b.start))
    }

    /// The unique `n` with `k ∈ I(n)`.
    pub fn block_of_index(&self, k: u64) -> Result<usize> {
        if k >= self.index_limit() {
            return Err(Error::Range(format!(
                "index {k} beyond the computed blocks (limit {})",
                self.index_limit()
            )));
        }
        // blocks are consecutive; find the first whose end exceeds k
        let n = self.blocks.partition_point(|b| b.end <= k);
        Ok(n)
    }
}
