//! The radial operators `H`, `H*`, the Stieltjes transform `S` and the
//! maximal function `M`, all taken with respect to `η = ω₁ = sω(s)`, plus
//! weighted norms, level points and operator-norm estimates.
//!
//! Profiles are piecewise linear in `r` with a constant extension beyond
//! the outermost node. Every grid cell carries a few Gauss–Legendre points
//! whose `η`-masses are rescaled to the exact cell mass
//! `ŵ₁(r_i) - ŵ₁(r_{i+1})`; the part beyond the outermost node is
//! integrated exactly. Every pointwise inequality between the operators
//! then holds term by term on the discrete level as well.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridMeta, Profile};
use crate::quad::gauss_legendre;
use crate::weight::{ExponentPair, RadialWeight};

pub const DEFAULT_GAUSS_POINTS: usize = 8;

/// Smallest tail mass kept before a node is dropped as underflowed.
const MIN_TAIL: f64 = 1e-280;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OperatorTag {
    H,
    Hstar,
    Stieltjes,
    Maximal,
    Calderon,
}

impl OperatorTag {
    pub fn is_linear(self) -> bool {
        self != OperatorTag::Maximal
    }

    pub fn name(self) -> &'static str {
        match self {
            OperatorTag::H => "h",
            OperatorTag::Hstar => "hstar",
            OperatorTag::Stieltjes => "stieltjes",
            OperatorTag::Maximal => "maximal",
            OperatorTag::Calderon => "calderon",
        }
    }
}

impl FromStr for OperatorTag {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "h" => OperatorTag::H,
            "hstar" | "h*" => OperatorTag::Hstar,
            "s" | "stieltjes" => OperatorTag::Stieltjes,
            "m" | "mmax" | "maximal" => OperatorTag::Maximal,
            "calderon" | "c" => OperatorTag::Calderon,
            other => return Err(Error::Parse(format!("unknown operator '{other}'"))),
        })
    }
}

/// Gauss points of every cell of a grid.
#[derive(Debug, Clone)]
struct Layout {
    grid: Grid,
    g: usize,
    /// co-radius of each point, cell-major
    tau: Vec<f64>,
    /// interpolation weight of the inner node of the cell
    lam: Vec<f64>,
    /// raw quadrature weight (cell width times GL weight)
    wt: Vec<f64>,
}

impl Layout {
    fn new(grid: Grid, g: usize) -> Layout {
        let (x, w) = gauss_legendre(g);
        let co = grid.co_radii();
        let cells = co.len() - 1;
        let mut tau = Vec::with_capacity(cells * g);
        let mut lam = Vec::with_capacity(cells * g);
        let mut wt = Vec::with_capacity(cells * g);
        for j in 0..cells {
            let (ta, tb) = (co[j], co[j + 1]);
            let h = ta - tb;
            for q in 0..g {
                let t = tb + 0.5 * h * (x[q] + 1.0);
                tau.push(t);
                lam.push((t - tb) / h);
                wt.push(0.5 * h * w[q]);
            }
        }
        Layout { grid, g, tau, lam, wt }
    }

    fn cells(&self) -> usize {
        self.grid.len() - 1
    }

    fn at_points(&self, fv: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.tau.len());
        for j in 0..self.cells() {
            for q in 0..self.g {
                let l = self.lam[j * self.g + q];
                out.push(l * fv[j] + (1.0 - l) * fv[j + 1]);
            }
        }
        out
    }

    /// Masses of `s·v(s) ds` at the points, rescaled per cell to the exact
    /// differences of `tail`, and the exact mass beyond the last node.
    fn masses(&self, v: &RadialWeight, tails: &[f64]) -> (Vec<f64>, f64) {
        let mut m = Vec::with_capacity(self.tau.len());
        for j in 0..self.cells() {
            let raw: Vec<f64> = (0..self.g)
                .map(|q| {
                    let k = j * self.g + q;
                    (1.0 - self.tau[k]) * v.density_co(self.tau[k]) * self.wt[k]
                })
                .collect();
            let exact = (tails[j] - tails[j + 1]).max(0.0);
            let total: f64 = raw.iter().sum();
            if total > 0.0 && total.is_finite() {
                m.extend(raw.iter().map(|r| r * exact / total));
            } else {
                m.extend(std::iter::repeat_n(exact / self.g as f64, self.g));
            }
        }
        (m, *tails.last().unwrap())
    }
}

/// `η = ω₁` quadrature data on a grid, shared by all four operators.
#[derive(Debug, Clone)]
pub struct Discretization {
    omega: RadialWeight,
    layout: Layout,
    dropped: usize,
    /// η-mass of each point
    c: Vec<f64>,
    /// ŵ₁ at each point
    wq: Vec<f64>,
    /// ŵ₁ at each node
    w: Vec<f64>,
}

impl Discretization {
    pub fn new(omega: &RadialWeight, grid: &Grid, gauss_points: usize) -> Result<Discretization> {
        if gauss_points == 0 {
            return Err(Error::Parameter("need at least one Gauss point per cell".into()));
        }
        if grid.len() < 2 {
            return Err(Error::Parameter("operator grid needs at least two nodes".into()));
        }
        let co = grid.co_radii();
        let mut w = Vec::with_capacity(co.len());
        for &t in co {
            let v = omega.tail1_co(t)?;
            if !v.is_finite() {
                return Err(Error::Parameter(format!("weight {omega} is not integrable")));
            }
            if v < MIN_TAIL {
                break;
            }
            w.push(v);
        }
        if w.len() < 2 {
            return Err(Error::Degenerate(format!("ŵ₁ of {omega} underflows on the whole grid")));
        }
        let dropped = co.len() - w.len();
        let grid = Grid::from_co_radii(co[..w.len()].to_vec())?;
        let layout = Layout::new(grid, gauss_points);
        let (c, _) = layout.masses(omega, &w);
        let wq = layout.tau.par_iter().map(|&t| omega.tail1_co(t)).collect::<Result<Vec<f64>>>()?;
        Ok(Discretization { omega: omega.clone(), layout, dropped, c, wq, w })
    }

    pub fn grid(&self) -> &Grid {
        &self.layout.grid
    }

    pub fn weight(&self) -> &RadialWeight {
        &self.omega
    }

    /// Outer nodes removed because ŵ₁ underflowed there.
    pub fn dropped_nodes(&self) -> usize {
        self.dropped
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    /// ŵ₁ at the nodes.
    pub fn tail1_nodes(&self) -> &[f64] {
        &self.w
    }

    pub fn sample(&self, f: &Profile) -> Vec<f64> {
        if f.grid == self.layout.grid {
            return f.values.clone();
        }
        self.layout.grid.co_radii().iter().map(|&t| f.eval_co(t)).collect()
    }

    fn profile(&self, values: Vec<f64>) -> Profile {
        Profile { grid: self.layout.grid.clone(), values }
    }

    fn last(&self) -> usize {
        self.w.len() - 1
    }

    /// `∫_0^1 f η`.
    pub fn integral(&self, fv: &[f64]) -> f64 {
        let fq = self.layout.at_points(fv);
        fq.iter().zip(&self.c).map(|(f, c)| f * c).sum::<f64>() + fv[self.last()] * self.w[self.last()]
    }

    pub fn h_values(&self, fv: &[f64]) -> Vec<f64> {
        let fq = self.layout.at_points(fv);
        let n = self.last();
        let g = self.layout.g;
        let mut out = vec![0.0; n + 1];
        let mut acc = fv[n] * self.w[n];
        out[n] = acc / self.w[n];
        for j in (0..n).rev() {
            acc += (0..g).map(|q| fq[j * g + q] * self.c[j * g + q]).sum::<f64>();
            out[j] = acc / self.w[j];
        }
        out
    }

    pub fn hstar_values(&self, fv: &[f64]) -> Vec<f64> {
        let fq = self.layout.at_points(fv);
        let n = self.last();
        let g = self.layout.g;
        let mut out = vec![0.0; n + 1];
        let mut acc = 0.0;
        for j in 0..n {
            acc += (0..g)
                .map(|q| {
                    let k = j * g + q;
                    fq[k] * self.c[k] / self.wq[k]
                })
                .sum::<f64>();
            out[j + 1] = acc;
        }
        out
    }

    pub fn s_values(&self, fv: &[f64]) -> Vec<f64> {
        let fq = self.layout.at_points(fv);
        let n = self.last();
        let tail_mass = self.w[n];
        (0..=n)
            .into_par_iter()
            .map(|i| {
                let wi = self.w[i];
                let body: f64 = fq
                    .iter()
                    .zip(self.c.iter().zip(&self.wq))
                    .map(|(f, (c, wq))| f * c / (wq + wi))
                    .sum();
                body + fv[n] * (tail_mass / wi).ln_1p()
            })
            .collect()
    }

    /// Running maximum over `b ≤ r` of the tail averages of `|f|`.
    pub fn mmax_values(&self, fv: &[f64]) -> Vec<f64> {
        let abs: Vec<f64> = fv.iter().map(|v| v.abs()).collect();
        let mut h = self.h_values(&abs);
        for i in 1..h.len() {
            h[i] = h[i].max(h[i - 1]);
        }
        h
    }

    pub fn apply_values(&self, op: OperatorTag, fv: &[f64]) -> Vec<f64> {
        match op {
            OperatorTag::H => self.h_values(fv),
            OperatorTag::Hstar => self.hstar_values(fv),
            OperatorTag::Stieltjes => self.s_values(fv),
            OperatorTag::Maximal => self.mmax_values(fv),
            OperatorTag::Calderon => {
                let a = self.h_values(fv);
                let b = self.hstar_values(fv);
                a.iter().zip(&b).map(|(x, y)| x + y).collect()
            }
        }
    }

    pub fn apply(&self, op: OperatorTag, f: &Profile) -> Profile {
        let fv = self.sample(f);
        self.profile(self.apply_values(op, &fv))
    }

    /// Dense row-major matrix of a linear operator acting on node values.
    pub fn matrix(&self, op: OperatorTag) -> Result<Vec<f64>> {
        if !op.is_linear() {
            return Err(Error::Parameter("the maximal function has no matrix".into()));
        }
        let n1 = self.len();
        let n = n1 - 1;
        let g = self.layout.g;
        let rows: Vec<Vec<f64>> = (0..n1)
            .into_par_iter()
            .map(|i| {
                let mut row = vec![0.0; n1];
                let wi = self.w[i];
                for j in 0..n {
                    for q in 0..g {
                        let k = j * g + q;
                        let kern = match op {
                            OperatorTag::H => {
                                if j >= i {
                                    1.0 / wi
                                } else {
                                    0.0
                                }
                            }
                            OperatorTag::Hstar => {
                                if j < i {
                                    1.0 / self.wq[k]
                                } else {
                                    0.0
                                }
                            }
                            OperatorTag::Calderon => {
                                if j >= i {
                                    1.0 / wi
                                } else {
                                    1.0 / self.wq[k]
                                }
                            }
                            OperatorTag::Stieltjes => 1.0 / (self.wq[k] + wi),
                            OperatorTag::Maximal => unreachable!(),
                        };
                        let e = kern * self.c[k];
                        let l = self.layout.lam[k];
                        row[j] += e * l;
                        row[j + 1] += e * (1.0 - l);
                    }
                }
                row[n] += match op {
                    OperatorTag::H | OperatorTag::Calderon => self.w[n] / wi,
                    OperatorTag::Hstar => 0.0,
                    OperatorTag::Stieltjes => (self.w[n] / wi).ln_1p(),
                    OperatorTag::Maximal => unreachable!(),
                };
                row
            })
            .collect();
        Ok(rows.concat())
    }

    /// `R(b) = ∫_b^1 f η / ŵ₁(b)` at co-radius `t` inside the grid range.
    /// `h` are the node values of `H f`.
    pub fn h_at_co(&self, fv: &[f64], h: &[f64], t: f64) -> Result<f64> {
        let co = self.layout.grid.co_radii();
        let n = self.last();
        if t >= co[0] {
            return Ok(h[0]);
        }
        if t <= co[n] {
            return Ok(fv[n]);
        }
        let j = self.layout.grid.cell_of_co_radius(t).expect("inside grid");
        let (ta, tb) = (co[j], co[j + 1]);
        let wt_b = self.omega.tail1_co(t)?;
        let exact = (wt_b - self.w[j + 1]).max(0.0);
        let (x, w) = gauss_legendre(self.layout.g);
        let width = t - tb;
        let mut raw_mass = 0.0;
        let mut raw_int = 0.0;
        for q in 0..self.layout.g {
            let s = tb + 0.5 * width * (x[q] + 1.0);
            let m = (1.0 - s) * self.omega.density_co(s) * 0.5 * width * w[q];
            let l = (s - tb) / (ta - tb);
            raw_mass += m;
            raw_int += m * (l * fv[j] + (1.0 - l) * fv[j + 1]);
        }
        let partial = if raw_mass > 0.0 { raw_int * exact / raw_mass } else { 0.0 };
        Ok((partial + h[j + 1] * self.w[j + 1]) / wt_b)
    }
}

/// `ν₁`-masses on the Gauss points of a discretization.
#[derive(Debug, Clone)]
pub struct NormMeasure {
    layout: Layout,
    m: Vec<f64>,
    tail: f64,
    lumped: Vec<f64>,
}

impl NormMeasure {
    pub fn new(nu: &RadialWeight, disc: &Discretization) -> Result<NormMeasure> {
        Self::on_layout(nu, disc.layout.clone())
    }

    pub fn on_grid(nu: &RadialWeight, grid: &Grid, gauss_points: usize) -> Result<NormMeasure> {
        if grid.len() < 2 {
            return Err(Error::Parameter("norm grid needs at least two nodes".into()));
        }
        Self::on_layout(nu, Layout::new(grid.clone(), gauss_points.max(1)))
    }

    fn on_layout(nu: &RadialWeight, layout: Layout) -> Result<NormMeasure> {
        let tails = layout
            .grid
            .co_radii()
            .iter()
            .map(|&t| nu.tail1_co(t))
            .collect::<Result<Vec<f64>>>()?;
        if tails.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter(format!("weight {nu} is not integrable")));
        }
        let (m, tail) = layout.masses(nu, &tails);
        let mut lumped = vec![0.0; layout.grid.len()];
        for j in 0..layout.cells() {
            for q in 0..layout.g {
                let k = j * layout.g + q;
                lumped[j] += m[k] * layout.lam[k];
                lumped[j + 1] += m[k] * (1.0 - layout.lam[k]);
            }
        }
        *lumped.last_mut().unwrap() += tail;
        Ok(NormMeasure { layout, m, tail, lumped })
    }

    /// `(2∫|f|^p ν₁)^{1/p}` for node values `fv`.
    pub fn norm(&self, fv: &[f64], p: f64) -> f64 {
        let fq = self.layout.at_points(fv);
        let n = fv.len() - 1;
        let body: f64 = fq.iter().zip(&self.m).map(|(f, m)| f.abs().powf(p) * m).sum();
        (2.0 * (body + fv[n].abs().powf(p) * self.tail)).powf(1.0 / p)
    }

    /// Node masses with each Gauss mass split between the two cell ends.
    pub fn lumped(&self) -> &[f64] {
        &self.lumped
    }
}

/// Worst violations of `M f ≤ 2 S f` and `(H f + H* f)/2 ≤ S f ≤ H f + H* f`
/// over the nodes, for a nonnegative `f`. Positive entries are violations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainDefect {
    pub maximal_excess: f64,
    pub lower_excess: f64,
    pub upper_excess: f64,
    /// Largest value of `M f` and `H f + H* f`.
    pub scale: f64,
}

impl ChainDefect {
    pub fn worst(&self) -> f64 {
        self.maximal_excess.max(self.lower_excess).max(self.upper_excess)
    }

    pub fn holds(&self, rel_tol: f64) -> bool {
        self.worst() <= rel_tol * self.scale
    }
}

pub fn chain_defects(disc: &Discretization, fv: &[f64]) -> ChainDefect {
    let h = disc.h_values(fv);
    let hs = disc.hstar_values(fv);
    let s = disc.s_values(fv);
    let m = disc.mmax_values(fv);
    let mut d = ChainDefect {
        maximal_excess: f64::NEG_INFINITY,
        lower_excess: f64::NEG_INFINITY,
        upper_excess: f64::NEG_INFINITY,
        scale: 0.0,
    };
    for i in 0..fv.len() {
        let c = h[i] + hs[i];
        d.maximal_excess = d.maximal_excess.max(m[i] - 2.0 * s[i]);
        d.lower_excess = d.lower_excess.max(0.5 * c - s[i]);
        d.upper_excess = d.upper_excess.max(s[i] - c);
        d.scale = d.scale.max(m[i]).max(c);
    }
    d
}

/// `‖f‖_{L^p_ν} = (2∫_0^1 |f(s)|^p s ν(s) ds)^{1/p}`.
pub fn lp_norm(nu: &RadialWeight, f: &Profile, p: f64) -> Result<f64> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::Parameter(format!("norm exponent p = {p} must be >= 1")));
    }
    let meas = NormMeasure::on_grid(nu, &f.grid, DEFAULT_GAUSS_POINTS)?;
    Ok(meas.norm(&f.values, p))
}

pub fn apply_h(w: &RadialWeight, f: &Profile) -> Result<Profile> {
    Ok(Discretization::new(w, &f.grid, DEFAULT_GAUSS_POINTS)?.apply(OperatorTag::H, f))
}

pub fn apply_hstar(w: &RadialWeight, f: &Profile) -> Result<Profile> {
    Ok(Discretization::new(w, &f.grid, DEFAULT_GAUSS_POINTS)?.apply(OperatorTag::Hstar, f))
}

pub fn apply_s(w: &RadialWeight, f: &Profile) -> Result<Profile> {
    Ok(Discretization::new(w, &f.grid, DEFAULT_GAUSS_POINTS)?.apply(OperatorTag::Stieltjes, f))
}

pub fn apply_mmax(w: &RadialWeight, f: &Profile) -> Result<Profile> {
    Ok(Discretization::new(w, &f.grid, DEFAULT_GAUSS_POINTS)?.apply(OperatorTag::Maximal, f))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelPoints {
    /// Attained levels `k_lo..=k_hi`; empty when `k_lo > k_hi`.
    pub k_range: (i32, i32),
    pub requested: (i32, i32),
    pub ks: Vec<i32>,
    pub b: Vec<f64>,
    pub co_b: Vec<f64>,
    /// `ŵ₁(b_{k+1})/ŵ₁(b_k)` for consecutive computed levels.
    pub bk1_ratios: Vec<f64>,
    /// `ŵ₁(b_k) / ∫_{b_k}^{b_{k+1}} ω₁`.
    pub bk2_factors: Vec<f64>,
    pub f: Profile,
}

fn bisect_crossing(
    disc: &Discretization,
    fv: &[f64],
    h: &[f64],
    level: f64,
    mut t_lo_side: f64,
    mut t_hi_side: f64,
) -> Result<f64> {
    // R(t_lo_side) <= level < R(t_hi_side); co-radii decrease toward r = 1
    for _ in 0..200 {
        let mid = 0.5 * (t_lo_side + t_hi_side);
        if mid >= t_lo_side || mid <= t_hi_side || (t_lo_side - t_hi_side) <= 1e-15 * t_lo_side {
            break;
        }
        if disc.h_at_co(fv, h, mid)? > level {
            t_hi_side = mid;
        } else {
            t_lo_side = mid;
        }
    }
    Ok(t_hi_side)
}

/// Radii `b_k` with `∫_{b_k}^1 f ω₁ / ŵ₁(b_k) = 2^k` for the attained `k`.
pub fn level_points(w: &RadialWeight, f: &Profile, k_min: i32, k_max: i32) -> Result<LevelPoints> {
    if k_min > k_max {
        return Err(Error::Parameter(format!("empty level range {k_min}..={k_max}")));
    }
    if f.values.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::Parameter("level points need a nonnegative profile".into()));
    }
    let disc = Discretization::new(w, &f.grid, DEFAULT_GAUSS_POINTS)?;
    let fv = disc.sample(f);
    let h = disc.h_values(&fv);
    for i in 1..h.len() {
        if !(h[i] > h[i - 1]) {
            return Err(Error::Degenerate(format!(
                "tail average is not strictly increasing on [{}, {}]",
                disc.grid().radius(i - 1),
                disc.grid().radius(i)
            )));
        }
    }
    let co = disc.grid().co_radii();
    let (r_lo, r_hi) = (h[0], *h.last().unwrap());
    let mut ks = Vec::new();
    let mut b = Vec::new();
    let mut co_b = Vec::new();
    for k in k_min..=k_max {
        let level = 2f64.powi(k);
        if level < r_lo || level > r_hi {
            continue;
        }
        let t = if level == r_lo {
            co[0]
        } else {
            let i = h.partition_point(|&v| v < level);
            if h[i] == level {
                co[i]
            } else {
                bisect_crossing(&disc, &fv, &h, level, co[i - 1], co[i])?
            }
        };
        ks.push(k);
        b.push(1.0 - t);
        co_b.push(t);
    }
    let tails = co_b.iter().map(|&t| w.tail1_co(t)).collect::<Result<Vec<f64>>>()?;
    let mut bk1 = Vec::new();
    let mut bk2 = Vec::new();
    for i in 0..tails.len().saturating_sub(1) {
        if ks[i + 1] != ks[i] + 1 {
            continue;
        }
        bk1.push(tails[i + 1] / tails[i]);
        bk2.push(tails[i] / (tails[i] - tails[i + 1]));
    }
    let k_range = match (ks.first(), ks.last()) {
        (Some(&a), Some(&z)) => (a, z),
        _ => (k_max, k_min),
    };
    Ok(LevelPoints {
        k_range,
        requested: (k_min, k_max),
        ks,
        b,
        co_b,
        bk1_ratios: bk1,
        bk2_factors: bk2,
        f: Profile { grid: disc.grid().clone(), values: fv },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeakTypeResult {
    /// Left end of the level set `{M f > λ} = (b, 1)`; `None` when empty.
    pub b: Option<f64>,
    pub level_measure: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Relative slack allowed in the weak-type comparison.
pub const WEAK_TYPE_SLACK: f64 = 1e-9;

/// Level set of the maximal function with respect to `η = ω₁` and the
/// comparison `η̂(b) ≤ ‖f‖_{L¹(η)}/λ`.
pub fn weak_type_check(w: &RadialWeight, f: &Profile, lambda: f64) -> Result<WeakTypeResult> {
    let disc = Discretization::new(w, &f.grid, DEFAULT_GAUSS_POINTS)?;
    weak_type_on(&disc, f, lambda)
}

pub fn weak_type_on(disc: &Discretization, f: &Profile, lambda: f64) -> Result<WeakTypeResult> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Parameter(format!("level λ = {lambda} must be positive")));
    }
    let fv: Vec<f64> = disc.sample(f).iter().map(|v| v.abs()).collect();
    let h = disc.h_values(&fv);
    let bound = disc.integral(&fv) / lambda;
    let co = disc.grid().co_radii();
    let first = h.iter().position(|&v| v > lambda);
    let (b, measure) = match first {
        None => (None, 0.0),
        Some(0) => (Some(0.0), disc.tail1_nodes()[0]),
        Some(i) => {
            let t = bisect_crossing(disc, &fv, &h, lambda, co[i - 1], co[i])?;
            (Some(1.0 - t), disc.weight().tail1_co(t)?)
        }
    };
    Ok(WeakTypeResult { b, level_measure: measure, bound, holds: measure <= bound * (1.0 + WEAK_TYPE_SLACK) })
}

/// Nonnegative piecewise-linear profile with log-normal knot values and a
/// random left end of the support.
pub fn random_profile<R: Rng + ?Sized>(grid: &Grid, rng: &mut R) -> Profile {
    let dist = LogNormal::new(0.0, 2.0).expect("valid log-normal");
    let n = grid.len();
    let start = if rng.random_bool(0.5) { rng.random_range(0..n) } else { 0 };
    let values = (0..n).map(|i| if i < start { 0.0 } else { dist.sample(rng) }).collect();
    Profile { grid: grid.clone(), values }
}

/// Strictly increasing positive profile whose values grow by heavy-tailed
/// factors; its tail averages increase strictly.
pub fn random_increasing_profile<R: Rng + ?Sized>(grid: &Grid, rng: &mut R) -> Profile {
    let dist = LogNormal::new(-1.0, 1.0).expect("valid log-normal");
    let mut v = rng.random_range(0.1..2.0);
    let values = (0..grid.len())
        .map(|_| {
            let out = v;
            v *= 1.0 + dist.sample(rng);
            out
        })
        .collect();
    Profile { grid: grid.clone(), values }
}

/// `(σ/ω)·χ_{[a,1)}` sampled on the grid for `a = r_start`.
pub fn extremal_profile(omega: &RadialWeight, nu: &RadialWeight, p: ExponentPair, grid: &Grid, start: usize) -> Profile {
    let values = grid
        .co_radii()
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            if i < start {
                return 0.0;
            }
            let w = omega.density_co(t);
            if w == 0.0 {
                return 0.0;
            }
            let n = nu.density_co(t);
            // σ/ω = ω^{p'-1} ν^{-p'/p}
            (w.ln() * (p.p_conj - 1.0) - n.ln() * p.p_conj / p.p).exp()
        })
        .collect();
    Profile { grid: grid.clone(), values }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpNormOptions {
    pub gauss_points: usize,
    /// Number of cut points `a` for the extremal family.
    pub extremal_members: usize,
    pub random_members: usize,
    pub seed: u64,
    pub max_iterations: usize,
    /// Also recompute on the grid with every cell split in two.
    pub refine: bool,
}

impl Default for OpNormOptions {
    fn default() -> Self {
        OpNormOptions {
            gauss_points: DEFAULT_GAUSS_POINTS,
            extremal_members: 48,
            random_members: 24,
            seed: 0x5eed,
            max_iterations: 400,
            refine: true,
        }
    }
}

/// Relative change under refinement below which an estimate counts as converged.
pub const CONVERGENCE_TOLERANCE: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpNormEstimate {
    pub op: OperatorTag,
    pub p: f64,
    /// Largest `‖Tf‖/‖f‖` over all exhibited test functions.
    #[serde(with = "crate::num_serde::scalar")]
    pub lower_bound: f64,
    #[serde(with = "crate::num_serde::scalar")]
    pub heuristic_estimate: f64,
    pub witness: Profile,
    pub grid_meta: GridMeta,
    pub converged: bool,
    /// Heuristic on the unrefined grid, when a refinement was run.
    pub coarse_heuristic: Option<f64>,
    pub iterations: usize,
    pub stagnated: bool,
}

struct Problem<'a> {
    op: OperatorTag,
    disc: &'a Discretization,
    meas: &'a NormMeasure,
    p: f64,
}

impl Problem<'_> {
    fn ratio(&self, fv: &[f64]) -> Option<f64> {
        let den = self.meas.norm(fv, self.p);
        if !(den > 0.0 && den.is_finite()) {
            return None;
        }
        let tf = self.disc.apply_values(self.op, fv);
        let r = self.meas.norm(&tf, self.p) / den;
        r.is_finite().then_some(r)
    }
}

/// Largest ratio over a family of test functions and its witness.
pub fn opnorm_lower(
    op: OperatorTag,
    omega: &RadialWeight,
    nu: &RadialWeight,
    p: ExponentPair,
    grid: &Grid,
    family: &[Profile],
) -> Result<(f64, Profile)> {
    if family.is_empty() {
        return Err(Error::Parameter("empty test family".into()));
    }
    let disc = Discretization::new(omega, grid, DEFAULT_GAUSS_POINTS)?;
    let meas = NormMeasure::new(nu, &disc)?;
    let prob = Problem { op, disc: &disc, meas: &meas, p: p.p };
    best_of(&prob, family).ok_or_else(|| Error::Degenerate("every test function has zero norm".into()))
}

fn best_of(prob: &Problem<'_>, family: &[Profile]) -> Option<(f64, Profile)> {
    let scored: Vec<Option<(f64, usize)>> = family
        .par_iter()
        .enumerate()
        .map(|(i, f)| prob.ratio(&prob.disc.sample(f)).map(|r| (r, i)))
        .collect();
    let mut best: Option<(f64, usize)> = None;
    for (r, i) in scored.into_iter().flatten() {
        if best.is_none_or(|(b, _)| r > b) {
            best = Some((r, i));
        }
    }
    best.map(|(r, i)| (r, Profile { grid: prob.disc.grid().clone(), values: prob.disc.sample(&family[i]) }))
}

/// Extremal functions at evenly spaced cut points plus seeded random profiles.
pub fn default_family(
    omega: &RadialWeight,
    nu: &RadialWeight,
    p: ExponentPair,
    grid: &Grid,
    opts: &OpNormOptions,
) -> Vec<Profile> {
    let n = grid.len();
    let m = opts.extremal_members.clamp(1, n - 1);
    let mut family: Vec<Profile> = (0..m)
        .map(|j| extremal_profile(omega, nu, p, grid, j * (n - 1) / m))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    family.extend((0..opts.random_members).map(|_| random_profile(grid, &mut rng)));
    family
}

/// Nonlinear power iteration for `max ‖Ax‖_{p,μ}/‖x‖_{p,μ}` over `x ≥ 0`
/// with lumped node masses `μ`. Each iterate is also scored exactly.
fn power_iteration(
    a: &[f64],
    mu: &[f64],
    p: f64,
    start: &[f64],
    max_iter: usize,
    mut score: impl FnMut(&[f64]),
) -> (f64, usize, bool) {
    let n = mu.len();
    let pc = p / (p - 1.0);
    let floor = mu.iter().cloned().fold(0.0, f64::max) * 1e-300;
    let mu: Vec<f64> = mu.iter().map(|m| m.max(floor).max(f64::MIN_POSITIVE)).collect();
    let dp: Vec<f64> = mu.iter().map(|m| m.powf(1.0 / p)).collect();
    // B = D A D^{-1}, D = diag(μ^{1/p})
    let b: Vec<f64> = (0..n * n).map(|k| dp[k / n] * a[k] / dp[k % n]).collect();
    let normalize = |x: &mut Vec<f64>| {
        let s = x.iter().map(|v| v.abs().powf(p)).sum::<f64>().powf(1.0 / p);
        if s > 0.0 {
            x.iter_mut().for_each(|v| *v /= s);
        }
    };
    let mut x: Vec<f64> = start.iter().zip(&dp).map(|(f, d)| f.abs() * d).collect();
    if x.iter().all(|v| *v == 0.0) {
        x = vec![1.0; n];
    }
    normalize(&mut x);
    let mut value = 0.0;
    let mut stagnated = true;
    let mut it = 0;
    while it < max_iter {
        it += 1;
        let y: Vec<f64> = (0..n).map(|i| (0..n).map(|j| b[i * n + j] * x[j]).sum()).collect();
        let v = y.iter().map(|t| t.abs().powf(p)).sum::<f64>().powf(1.0 / p);
        let z: Vec<f64> = y.iter().map(|t| t.abs().powf(p - 1.0)).collect();
        let mut u: Vec<f64> = (0..n).map(|j| (0..n).map(|i| b[i * n + j] * z[i]).sum::<f64>()).collect();
        u.iter_mut().for_each(|t| *t = t.abs().powf(pc - 1.0));
        normalize(&mut u);
        let f: Vec<f64> = u.iter().zip(&dp).map(|(t, d)| t / d).collect();
        score(&f);
        if (v - value).abs() <= 1e-12 * v {
            value = v;
            stagnated = false;
            break;
        }
        value = v;
        x = u;
    }
    (value, it, stagnated)
}

fn estimate_on(
    op: OperatorTag,
    omega: &RadialWeight,
    nu: &RadialWeight,
    p: ExponentPair,
    grid: &Grid,
    opts: &OpNormOptions,
) -> Result<(f64, f64, Profile, usize, bool, GridMeta)> {
    let disc = Discretization::new(omega, grid, opts.gauss_points)?;
    let meas = NormMeasure::new(nu, &disc)?;
    let prob = Problem { op, disc: &disc, meas: &meas, p: p.p };
    let family = default_family(omega, nu, p, disc.grid(), opts);
    let (mut lower, mut witness) =
        best_of(&prob, &family).ok_or_else(|| Error::Degenerate("every test function has zero norm".into()))?;
    // the maximal function dominates H on nonnegative functions; iterate on H
    let lin = if op.is_linear() { op } else { OperatorTag::H };
    let a = disc.matrix(lin)?;
    let start = witness.values.clone();
    let mut best_iter: Option<(f64, Vec<f64>)> = None;
    let (value, iterations, stagnated) = power_iteration(&a, meas.lumped(), p.p, &start, opts.max_iterations, |f| {
        if let Some(r) = prob.ratio(f) {
            if best_iter.as_ref().is_none_or(|(b, _)| r > *b) {
                best_iter = Some((r, f.to_vec()));
            }
        }
    });
    if let Some((r, f)) = best_iter {
        if r > lower {
            lower = r;
            witness = Profile { grid: disc.grid().clone(), values: f };
        }
    }
    let heuristic = if op.is_linear() { value.max(lower) } else { lower };
    Ok((lower, heuristic, witness, iterations, stagnated, disc.grid().meta()))
}

/// Certified lower bound and heuristic value of `‖T‖_{L^p_ν → L^p_ν}`.
pub fn opnorm_estimate(
    op: OperatorTag,
    omega: &RadialWeight,
    nu: &RadialWeight,
    p: ExponentPair,
    grid: &Grid,
    opts: &OpNormOptions,
) -> Result<OpNormEstimate> {
    let (lower, heuristic, witness, iterations, stagnated, meta) = estimate_on(op, omega, nu, p, grid, opts)?;
    if !opts.refine {
        return Ok(OpNormEstimate {
            op,
            p: p.p,
            lower_bound: lower,
            heuristic_estimate: heuristic,
            witness,
            grid_meta: meta,
            converged: !stagnated,
            coarse_heuristic: None,
            iterations,
            stagnated,
        });
    }
    let fine = grid.refined(2);
    let (lower2, heuristic2, witness2, iterations2, stagnated2, meta2) = estimate_on(op, omega, nu, p, &fine, opts)?;
    let converged = (heuristic2 - heuristic).abs() <= CONVERGENCE_TOLERANCE * heuristic;
    let (lower_bound, witness) = if lower2 >= lower { (lower2, witness2) } else { (lower, witness) };
    Ok(OpNormEstimate {
        op,
        p: p.p,
        lower_bound,
        heuristic_estimate: heuristic2.max(lower_bound),
        witness,
        grid_meta: meta2,
        converged,
        coarse_heuristic: Some(heuristic),
        iterations: iterations + iterations2,
        stagnated: stagnated || stagnated2,
    })
}
