//! The condition profiles `r ↦ A_p(ω,ν)(r)` and `r ↦ M_p(ω,ν)(r)`.
//!
//! Both sups are over `[0,1)` and are not computable; each profile carries
//! the sup over successive truncation levels of its grid, and the diagnosis
//! is read off that history.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridMeta, Profile};
use crate::quad::adaptive;
use crate::weight::{sigma_weight, ExponentPair, RadialWeight};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Diagnosis {
    Bounded,
    Diverging,
    Inconclusive,
}

/// Relative growth per level separating the two verdicts.
pub const GROWTH_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantProfile {
    pub radii: Vec<f64>,
    pub co_radii: Vec<f64>,
    /// `+inf` marks a divergent σ̂₁.
    #[serde(with = "crate::num_serde::vector")]
    pub values: Vec<f64>,
    #[serde(with = "crate::num_serde::scalar")]
    pub sup_estimate: f64,
    pub argmax: f64,
    pub diagnosis: Diagnosis,
    /// Sup over the grid cut at each entry of `level_co_radii`.
    #[serde(with = "crate::num_serde::vector")]
    pub refinement_history: Vec<f64>,
    pub level_co_radii: Vec<f64>,
    pub grid_meta: GridMeta,
}

/// Grid and refinement settings shared by both profiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileOptions {
    /// `1 - r` at the outermost node.
    pub grid_min: f64,
    pub nodes_per_decade: usize,
    /// Number of truncation levels, each `10²` closer to `r = 1`.
    pub refinements: usize,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        ProfileOptions { grid_min: 1e-8, nodes_per_decade: 16, refinements: 3 }
    }
}

impl ProfileOptions {
    pub fn grid(&self) -> Result<Grid> {
        Grid::graded(self.grid_min, self.nodes_per_decade)
    }
}

fn levels_for(grid: &Grid, refinements: usize) -> Vec<f64> {
    let eps = *grid.co_radii().last().unwrap();
    let n = refinements.max(1);
    (0..n)
        .map(|l| eps * 10f64.powi(2 * (n - 1 - l) as i32))
        .filter(|&t| t < grid.co_radius(0))
        .collect()
}

fn diagnose(history: &[f64], any_infinite: bool) -> Diagnosis {
    if any_infinite {
        return Diagnosis::Diverging;
    }
    let n = history.len();
    if n >= 3 {
        let tail = &history[n - 3..];
        if tail.windows(2).all(|w| w[1] > w[0] * (1.0 + GROWTH_THRESHOLD)) {
            return Diagnosis::Diverging;
        }
    }
    if n >= 2 {
        let (a, b) = (history[n - 2], history[n - 1]);
        if (b - a).abs() <= GROWTH_THRESHOLD * a.abs() {
            return Diagnosis::Bounded;
        }
        return Diagnosis::Inconclusive;
    }
    Diagnosis::Inconclusive
}

fn assemble(grid: &Grid, values: Vec<f64>, refinements: usize) -> ConstantProfile {
    let co = grid.co_radii();
    let any_inf = values.iter().any(|v| v.is_infinite() || v.is_nan());
    let levels = levels_for(grid, refinements);
    let history: Vec<f64> = levels
        .iter()
        .map(|&lev| {
            co.iter()
                .zip(&values)
                .filter(|(t, _)| **t >= lev * (1.0 - 1e-12))
                .map(|(_, v)| *v)
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let (mut sup, mut argmax) = (f64::NEG_INFINITY, grid.radius(0));
    for (i, &v) in values.iter().enumerate() {
        if v > sup || v.is_nan() {
            sup = if v.is_nan() { f64::INFINITY } else { v };
            argmax = grid.radius(i);
            if v.is_nan() {
                break;
            }
        }
    }
    let diagnosis = diagnose(&history, any_inf);
    ConstantProfile {
        radii: grid.radii(),
        co_radii: co.to_vec(),
        values,
        sup_estimate: sup,
        argmax,
        diagnosis,
        refinement_history: history,
        level_co_radii: levels,
        grid_meta: grid.meta(),
    }
}

/// `ν̂₁^{1/p} σ̂₁^{1/p'} / ŵ₁` at co-radius `t`, evaluated in logs.
pub fn ap_value_co(omega: &RadialWeight, nu: &RadialWeight, sigma: &RadialWeight, p: ExponentPair, t: f64) -> Result<f64> {
    let s1 = sigma.tail1_co(t)?;
    if s1.is_infinite() {
        return Ok(f64::INFINITY);
    }
    let n1 = nu.tail1_co(t)?;
    let w1 = omega.tail1_co(t)?;
    if w1 == 0.0 {
        return Err(Error::Degenerate(format!("ŵ₁ underflows at 1 - r = {t:e}")));
    }
    Ok((n1.ln() / p.p + s1.ln() / p.p_conj - w1.ln()).exp())
}

pub fn ap_profile(omega: &RadialWeight, nu: &RadialWeight, p: ExponentPair, grid: &Grid) -> Result<ConstantProfile> {
    ap_profile_with(omega, nu, p, grid, ProfileOptions::default().refinements)
}

pub fn ap_profile_with(
    omega: &RadialWeight,
    nu: &RadialWeight,
    p: ExponentPair,
    grid: &Grid,
    refinements: usize,
) -> Result<ConstantProfile> {
    let sigma = sigma_weight(omega, nu, p);
    let values = if sigma.tail1_co(1.0)?.is_infinite() {
        vec![f64::INFINITY; grid.len()]
    } else {
        grid.co_radii()
            .par_iter()
            .map(|&t| ap_value_co(omega, nu, &sigma, p, t))
            .collect::<Result<Vec<f64>>>()?
    };
    Ok(assemble(grid, values, refinements))
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// `ln ∫ sν(s)/ŵ₁(s)^p ds` over one grid cell, co-radii `t_a > t_b`.
fn log_cell_integral(omega: &RadialWeight, nu: &RadialWeight, p: f64, t_a: f64, t_b: f64) -> Result<f64> {
    let log_g = |t: f64| -> f64 {
        let d = (1.0 - t) * nu.density_co(t);
        if d == 0.0 {
            return f64::NEG_INFINITY;
        }
        let w1 = omega.tail1_co(t).unwrap_or(f64::NAN);
        d.ln() - p * w1.ln()
    };
    // the integrand is largest near the outer end; factor that out
    let reference = log_g(t_b).max(log_g(t_a)).max(log_g(0.5 * (t_a + t_b)));
    if reference == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    if reference.is_nan() {
        return Err(Error::Accuracy { best: f64::NAN, bound: f64::NAN });
    }
    let f = |t: f64| (log_g(t) - reference).exp();
    let res = adaptive(&f, t_b, t_a, omega.quadrature());
    if !res.value.is_finite() {
        return Err(Error::Accuracy { best: res.value, bound: res.error });
    }
    Ok(reference + res.value.ln())
}

pub fn mp_profile(omega: &RadialWeight, nu: &RadialWeight, p: ExponentPair, grid: &Grid) -> Result<ConstantProfile> {
    mp_profile_with(omega, nu, p, grid, ProfileOptions::default().refinements)
}

pub fn mp_profile_with(
    omega: &RadialWeight,
    nu: &RadialWeight,
    p: ExponentPair,
    grid: &Grid,
    refinements: usize,
) -> Result<ConstantProfile> {
    let sigma = sigma_weight(omega, nu, p);
    let co = grid.co_radii();
    if sigma.tail1_co(1.0)?.is_infinite() {
        return Ok(assemble(grid, vec![f64::INFINITY; grid.len()], refinements));
    }
    // cells in parallel, then a sequential prefix pass in log space
    let cells: Vec<f64> = (0..co.len().saturating_sub(1))
        .into_par_iter()
        .map(|i| log_cell_integral(omega, nu, p.p, co[i], co[i + 1]))
        .collect::<Result<Vec<f64>>>()?;
    let mut cum = Vec::with_capacity(co.len());
    // the integral starts at r = 0; a grid starting above 0 gets its first piece
    let first = if co[0] < 1.0 { log_cell_integral(omega, nu, p.p, 1.0, co[0])? } else { f64::NEG_INFINITY };
    cum.push(first);
    for c in &cells {
        let last = *cum.last().unwrap();
        cum.push(log_add(last, *c));
    }
    let values = co
        .par_iter()
        .zip(cum.par_iter())
        .map(|(&t, &lc)| {
            let s1 = sigma.tail1_co(t)?;
            Ok((log_add(lc, 0.0) / p.p + s1.ln() / p.p_conj).exp())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(assemble(grid, values, refinements))
}

/// Pointwise ratio `A_p(ω, ω·f)(r) / A_{p'}(ω, ω·f^{-p'/p})(r)` on the
/// factor's grid; identically 1 in exact arithmetic.
pub fn ap_duality_check(omega: &RadialWeight, factor: &Profile, p: ExponentPair) -> Result<Profile> {
    if factor.values.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Parameter("duality factor must be positive on its grid".into()));
    }
    let nu = omega.modulated(factor, 1.0)?;
    let nu_dual = omega.modulated(factor, -p.p_conj / p.p)?;
    let q = p.conjugate();
    let sigma = sigma_weight(omega, &nu, p);
    let sigma_dual = sigma_weight(omega, &nu_dual, q);
    let values = factor
        .grid
        .co_radii()
        .par_iter()
        .map(|&t| {
            let a = ap_value_co(omega, &nu, &sigma, p, t)?;
            let b = ap_value_co(omega, &nu_dual, &sigma_dual, q, t)?;
            Ok(a / b)
        })
        .collect::<Result<Vec<f64>>>()?;
    Profile::new(factor.grid.clone(), values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn std(g: f64) -> RadialWeight {
        RadialWeight::standard(g).unwrap()
    }

    #[test]
    fn equal_weights_give_one() {
        let g = Grid::graded(1e-8, 8).unwrap();
        for p in [1.5, 2.0, 3.0] {
            let prof = ap_profile(&std(0.7), &std(0.7), ExponentPair::new(p).unwrap(), &g).unwrap();
            assert!(prof.values.iter().all(|v| (v - 1.0).abs() < 1e-13));
            assert_eq!(prof.diagnosis, Diagnosis::Bounded);
        }
    }

    #[test]
    fn standard_pair_constant() {
        let g = Grid::graded(1e-8, 8).unwrap();
        let prof = ap_profile(&std(1.0), &std(0.0), ExponentPair::new(2.0).unwrap(), &g).unwrap();
        let c = 2.0 / 3f64.sqrt();
        assert!(prof.values.iter().all(|v| (v - c).abs() < 1e-12));
        let div = ap_profile(&std(0.0), &std(3.0), ExponentPair::new(2.0).unwrap(), &g).unwrap();
        assert_eq!(div.diagnosis, Diagnosis::Diverging);
    }

    #[test]
    fn log_counterexample_profiles() {
        let g = Grid::graded(1e-8, 16).unwrap();
        let p = ExponentPair::new(2.0).unwrap();
        let (w, nu) = (std(0.0), RadialWeight::log(2.0).unwrap());
        let ap = ap_profile(&w, &nu, p, &g).unwrap();
        assert_eq!(ap.diagnosis, Diagnosis::Diverging);
        let mp = mp_profile(&w, &nu, p, &g).unwrap();
        assert_eq!(mp.diagnosis, Diagnosis::Bounded, "{:?}", mp.refinement_history);
    }

    #[test]
    fn mp_equal_standard_closed_form() {
        let g = Grid::graded(1e-6, 16).unwrap();
        let p = ExponentPair::new(2.0).unwrap();
        let prof = mp_profile(&std(0.0), &std(0.0), p, &g).unwrap();
        for (r, v) in prof.radii.iter().zip(&prof.values) {
            let expect = ((1.0 + r * r) / 2.0).sqrt();
            assert!((v - expect).abs() < 1e-9 * expect, "r={r}: {v} vs {expect}");
        }
        assert!((prof.values[0] - 0.5f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn scaling_invariance() {
        let g = Grid::graded(1e-6, 8).unwrap();
        let p = ExponentPair::new(3.0).unwrap();
        let (w, nu) = (std(0.5), RadialWeight::log(3.0).unwrap());
        let a = ap_profile(&w, &nu, p, &g).unwrap();
        let b = ap_profile(&w.scaled(2.5).unwrap(), &nu.scaled(0.3).unwrap(), p, &g).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-12 * x, "{x} {y}");
        }
    }

    #[test]
    fn duality_ratio_is_one() {
        let g = Grid::graded(1e-4, 6).unwrap();
        let cases = [(0.0, 1.0, 2.0), (1.0, -0.5, 3.0)];
        for (gamma, e, p) in cases {
            let f = Profile::from_fn(&g, |r| (1.0 - r * r).powf(e));
            let ratio = ap_duality_check(&std(gamma), &f, ExponentPair::new(p).unwrap()).unwrap();
            for v in &ratio.values {
                assert!((v - 1.0).abs() < 1e-8, "{v}");
            }
        }
    }
}
