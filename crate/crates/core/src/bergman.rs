//! Bergman kernels through odd moments, the projection per Fourier mode and
//! on small polar grids, the adjoint of the projection on monomials, the
//! coefficient multiplier by odd moments, and dyadic Hardy block norms.

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::classes::{rho_sequence, DyadicDecomposition};
use crate::error::{Error, Result};
use crate::grid::{Grid, Profile};
use crate::quad::{boundary_tail, gauss_legendre};
use crate::weight::{sigma_weight, ExponentPair, RadialWeight, WeightKind};

/// Largest number of series terms backed by computed moments.
pub const N_MAX: usize = 1 << 14;
/// Default bound on `|z̄ζ|` for kernel evaluation.
pub const DEFAULT_CAP: f64 = 0.999;
/// Largest polar field accepted by the 2D projections.
pub const MAX_RESOLUTION: usize = 256;

#[derive(Debug, Clone)]
pub struct KernelSeries {
    weight: RadialWeight,
    cap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelValue {
    pub re: f64,
    pub im: f64,
    /// Index of the last term summed.
    pub terms: usize,
    /// Certified bound on the omitted tail.
    pub tail_bound: f64,
}

impl KernelValue {
    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }
}

impl KernelSeries {
    pub fn new(weight: &RadialWeight) -> KernelSeries {
        KernelSeries { weight: weight.clone(), cap: DEFAULT_CAP }
    }

    pub fn with_cap(weight: &RadialWeight, cap: f64) -> Result<KernelSeries> {
        if !(cap > 0.0 && cap < 1.0) {
            return Err(Error::Parameter(format!("kernel cap {cap} must lie in (0,1)")));
        }
        Ok(KernelSeries { weight: weight.clone(), cap })
    }

    pub fn weight(&self) -> &RadialWeight {
        &self.weight
    }

    pub fn cap(&self) -> f64 {
        self.cap
    }

    fn moments(&self, n: usize) -> Result<Vec<f64>> {
        self.weight.odd_moments(n.min(N_MAX + 2))
    }

    /// Bound on `Σ_{n>N} |u|^n / (2ω_{2n+1})`. Moments are log-convex in the
    /// exponent, so `q = ω_{2N+1}/ω_{2N+3}` dominates every later ratio.
    fn tail_bound(m: &[f64], n: usize, a: f64) -> f64 {
        let q = m[n] / m[n + 1];
        let x = a * q;
        if x >= 1.0 {
            return f64::INFINITY;
        }
        a.powi(n as i32) * x / (1.0 - x) / (2.0 * m[n])
    }

    /// Series coefficients `1/(2ω_{2n+1})` for `n < count`.
    pub fn coefficients(&self, count: usize) -> Result<Vec<f64>> {
        Ok(self.moments(count)?.iter().map(|m| 0.5 / m).collect())
    }

    /// Number of terms after which the tail at `|u| = a` is below
    /// `tol` times the leading coefficient.
    fn terms_for(&self, a: f64, tol: f64) -> Result<(usize, f64)> {
        let mut len = 64usize;
        loop {
            let m = self.moments(len + 2)?;
            let lead = 0.5 / m[0];
            for n in 0..len {
                let b = Self::tail_bound(&m, n, a);
                if b <= tol * lead {
                    return Ok((n, b));
                }
            }
            if len >= N_MAX {
                let b = Self::tail_bound(&m, N_MAX - 1, a);
                return Err(Error::Accuracy { best: f64::NAN, bound: b });
            }
            len = (len * 4).min(N_MAX);
        }
    }

    /// `B(u) = Σ u^n/(2ω_{2n+1})` with a certified relative tail below `tol`.
    pub fn eval(&self, u: Complex64, tol: f64) -> Result<KernelValue> {
        let a = u.norm();
        if !(a <= self.cap) {
            return Err(Error::Domain(format!("|u| = {a} exceeds the cap {}", self.cap)));
        }
        if !(tol > 0.0) {
            return Err(Error::Parameter("tolerance must be positive".into()));
        }
        let mut len = 64usize;
        loop {
            let m = self.moments(len + 2)?;
            let mut sum = Complex64::new(0.0, 0.0);
            let mut pow = Complex64::new(1.0, 0.0);
            for n in 0..len {
                sum += pow * (0.5 / m[n]);
                let bound = Self::tail_bound(&m, n, a);
                if bound <= tol * sum.norm() {
                    return Ok(KernelValue { re: sum.re, im: sum.im, terms: n, tail_bound: bound });
                }
                pow *= u;
            }
            if len >= N_MAX {
                let bound = Self::tail_bound(&m, N_MAX - 1, a);
                return Err(Error::Accuracy { best: sum.norm(), bound });
            }
            len = (len * 4).min(N_MAX);
        }
    }

    /// Kernel samples `B(ρ e^{2πi d/n})`, `d = 0..n`, by folding the
    /// coefficients modulo `n` and one inverse FFT.
    fn circle_samples(&self, rho: f64, n: usize, tol: f64, planner: &mut FftPlanner<f64>) -> Result<Vec<Complex64>> {
        if rho > self.cap {
            return Err(Error::Domain(format!("|u| = {rho} exceeds the cap {}", self.cap)));
        }
        let (terms, _) = if rho == 0.0 { (0, 0.0) } else { self.terms_for(rho, tol)? };
        let coef = self.coefficients(terms + 1)?;
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        let mut pow = 1.0;
        for (k, c) in coef.iter().enumerate() {
            buf[k % n] += c * pow;
            pow *= rho;
        }
        planner.plan_fft_inverse(n).process(&mut buf);
        Ok(buf)
    }
}

/// `B^ω` at `u = z̄ζ`.
pub fn kernel_eval(k: &KernelSeries, u: Complex64, tol: f64) -> Result<KernelValue> {
    k.eval(u, tol)
}

/// Coefficient `c` of `P_ω(g(s)e^{ikθ}) = c z^k`, i.e.
/// `∫_0^1 g(s) s^{k+1} ω(s) ds / ω_{2k+1}`.
pub fn project_mode(w: &RadialWeight, g: &Profile, k: i64) -> Result<f64> {
    let g_one = *g.values.last().unwrap();
    project_mode_fn(w, &|r| g.eval(r), g_one, k)
}

/// As [`project_mode`] for a radial function given in closed form;
/// `g_at_one` is its limit at `r = 1`. Negative modes project to zero.
pub fn project_mode_fn(w: &RadialWeight, g: &(dyn Fn(f64) -> f64 + Sync), g_at_one: f64, k: i64) -> Result<f64> {
    if k < 0 {
        return Ok(0.0);
    }
    let kk = k as i32;
    let num = w.integrate_against_omega1(&|r: f64| g(r) * r.powi(kk), g_at_one)?;
    let den = w.moment(2.0 * k as f64 + 1.0)?;
    Ok(num / den)
}

/// Complex samples on a polar grid: Gauss–Legendre in `s²`, uniform in
/// angle. Quadrature weights are normalized so that `∫ 1 dA = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarField {
    pub radii: Vec<f64>,
    /// weight of each radial node; all angular nodes share `1/n_theta`
    pub radial_weights: Vec<f64>,
    pub n_theta: usize,
    /// row-major `[radius][angle]`
    pub values: Vec<Complex64>,
}

impl PolarField {
    pub fn new(n_r: usize, n_theta: usize, f: impl Fn(Complex64) -> Complex64) -> Result<PolarField> {
        if n_r == 0 || n_theta == 0 {
            return Err(Error::Parameter("polar field needs nodes in both directions".into()));
        }
        if n_r > MAX_RESOLUTION || n_theta > MAX_RESOLUTION {
            return Err(Error::Refused(format!(
                "polar field {n_r}x{n_theta} exceeds the {MAX_RESOLUTION}x{MAX_RESOLUTION} cap"
            )));
        }
        let (x, w) = gauss_legendre(n_r);
        let radii: Vec<f64> = x.iter().map(|xi| (0.5 * (xi + 1.0)).sqrt()).collect();
        let radial_weights: Vec<f64> = w.iter().map(|wi| 0.5 * wi).collect();
        let mut values = Vec::with_capacity(n_r * n_theta);
        for &s in &radii {
            for j in 0..n_theta {
                values.push(f(Complex64::from_polar(s, Self::angle(n_theta, j))));
            }
        }
        Ok(PolarField { radii, radial_weights, n_theta, values })
    }

    pub fn angle(n_theta: usize, j: usize) -> f64 {
        2.0 * std::f64::consts::PI * j as f64 / n_theta as f64
    }

    pub fn n_r(&self) -> usize {
        self.radii.len()
    }

    pub fn point(&self, a: usize, j: usize) -> Complex64 {
        Complex64::from_polar(self.radii[a], Self::angle(self.n_theta, j))
    }

    pub fn row(&self, a: usize) -> &[Complex64] {
        &self.values[a * self.n_theta..(a + 1) * self.n_theta]
    }

    /// `∫ F dA`.
    pub fn integral(&self) -> Complex64 {
        let mut s = Complex64::new(0.0, 0.0);
        for a in 0..self.n_r() {
            let row: Complex64 = self.row(a).iter().sum();
            s += row * (self.radial_weights[a] / self.n_theta as f64);
        }
        s
    }

    fn with_values(&self, values: Vec<Complex64>) -> PolarField {
        PolarField { values, ..self.clone() }
    }
}

/// `P_ω F` (or `P⁺_ω F`) at the nodes of `F`.
pub fn project_grid(w: &RadialWeight, f: &PolarField, absolute_kernel: bool) -> Result<PolarField> {
    if f.n_r() > MAX_RESOLUTION || f.n_theta > MAX_RESOLUTION {
        return Err(Error::Refused("polar field exceeds the resolution cap".into()));
    }
    if absolute_kernel {
        project_grid_kernel(w, f, true, 1e-12)
    } else {
        project_grid_modes(w, f)
    }
}

/// Mode-by-mode projection: the kernel acts diagonally on `z^n`.
fn project_grid_modes(w: &RadialWeight, f: &PolarField) -> Result<PolarField> {
    let n = f.n_theta;
    let modes = n.div_ceil(2);
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let moments = w.odd_moments(modes)?;
    let dens: Vec<f64> = f.radii.iter().map(|&s| w.density_co(1.0 - s)).collect();
    let mut coef = vec![Complex64::new(0.0, 0.0); modes];
    for (a, d) in dens.iter().enumerate() {
        let mut row = f.row(a).to_vec();
        fwd.process(&mut row);
        let weight = f.radial_weights[a] * d / n as f64;
        let mut pow = 1.0;
        for (m, c) in coef.iter_mut().enumerate() {
            *c += row[m] * (weight * pow);
            pow *= f.radii[a];
        }
    }
    for (m, c) in coef.iter_mut().enumerate() {
        *c /= 2.0 * moments[m];
    }
    let mut out = Vec::with_capacity(f.values.len());
    for &r in &f.radii {
        let mut row = vec![Complex64::new(0.0, 0.0); n];
        let mut pow = 1.0;
        for m in 0..modes {
            row[m] = coef[m] * pow;
            pow *= r;
        }
        inv.process(&mut row);
        out.extend(row);
    }
    Ok(f.with_values(out))
}

/// Projection by quadrature against the kernel. The kernel depends on
/// `z ζ̄` only, so each pair of radii is an angular convolution; its Fourier
/// coefficients come from an oversampled circle so that the only
/// approximation in angle is the trigonometric interpolant of `F`.
pub fn project_grid_kernel(w: &RadialWeight, f: &PolarField, absolute: bool, tol: f64) -> Result<PolarField> {
    let n = f.n_theta;
    let nr = f.n_r();
    if f.radii.iter().any(|&s| s * s > DEFAULT_CAP) {
        return Err(Error::Refused(format!(
            "radial nodes too close to the boundary for the kernel cap {DEFAULT_CAP}; use fewer radial nodes"
        )));
    }
    let ks = KernelSeries::new(w);
    let rho_max = f.radii.iter().fold(0.0f64, |m, &s| m.max(s * s));
    let (terms, _) = if rho_max == 0.0 { (0, 0.0) } else { ks.terms_for(rho_max, tol)? };
    let big = (2 * (terms + 1)).max(4 * n).next_power_of_two().min(1 << 16);
    let dens: Vec<f64> = f.radii.iter().map(|&s| w.density_co(1.0 - s)).collect();
    let rows_hat: Vec<Vec<Complex64>> = (0..nr)
        .map(|a| {
            let mut planner = FftPlanner::<f64>::new();
            let mut row = f.row(a).to_vec();
            planner.plan_fft_forward(n).process(&mut row);
            row
        })
        .collect();
    let kernel_index = |j: usize| if j <= n / 2 { j } else { big - (n - j) };
    let out_rows: Vec<Vec<Complex64>> = (0..nr)
        .into_par_iter()
        .map(|b| -> Result<Vec<Complex64>> {
            let mut planner = FftPlanner::<f64>::new();
            let fwd = planner.plan_fft_forward(big);
            let mut acc = vec![Complex64::new(0.0, 0.0); n];
            for a in 0..nr {
                let rho = f.radii[b] * f.radii[a];
                let mut kappa = ks.circle_samples(rho, big, tol, &mut planner)?;
                if absolute {
                    kappa.iter_mut().for_each(|v| *v = Complex64::new(v.norm(), 0.0));
                }
                fwd.process(&mut kappa);
                let weight = f.radial_weights[a] * dens[a] / big as f64;
                for (j, slot) in acc.iter_mut().enumerate() {
                    *slot += rows_hat[a][j] * kappa[kernel_index(j)] * weight;
                }
            }
            planner.plan_fft_inverse(n).process(&mut acc);
            acc.iter_mut().for_each(|v| *v /= n as f64);
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(f.with_values(out_rows.concat()))
}

/// Finite Maclaurin coefficients with trailing zeros removed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientVector {
    pub coeffs: Vec<Complex64>,
}

impl CoefficientVector {
    pub fn new(mut coeffs: Vec<Complex64>) -> CoefficientVector {
        while coeffs.last().is_some_and(|c| *c == Complex64::new(0.0, 0.0)) {
            coeffs.pop();
        }
        CoefficientVector { coeffs }
    }

    pub fn from_real(coeffs: &[f64]) -> CoefficientVector {
        Self::new(coeffs.iter().map(|&c| Complex64::new(c, 0.0)).collect())
    }

    /// `c·z^k`.
    pub fn monomial(k: usize, c: Complex64) -> CoefficientVector {
        let mut v = vec![Complex64::new(0.0, 0.0); k + 1];
        v[k] = c;
        Self::new(v)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Degree, or `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    /// Samples on the circle of radius `r` at `n` equispaced angles
    /// (`n` must exceed the degree).
    pub fn circle_values(&self, r: f64, n: usize, planner: &mut FftPlanner<f64>) -> Vec<Complex64> {
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        let mut pow = 1.0;
        for (k, c) in self.coeffs.iter().enumerate() {
            buf[k % n] += c * pow;
            pow *= r;
        }
        planner.plan_fft_inverse(n).process(&mut buf);
        buf
    }
}

/// `I^ω g`: coefficients multiplied by the odd moments.
pub fn i_omega(w: &RadialWeight, g: &CoefficientVector) -> Result<CoefficientVector> {
    let m = w.odd_moments(g.coeffs.len())?;
    Ok(CoefficientVector::new(g.coeffs.iter().zip(&m).map(|(c, m)| c * m).collect()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockNorm {
    pub n: usize,
    pub start: u64,
    pub end: u64,
    pub norm: f64,
}

/// Circle samples per block: a power of two, at least 8 per coefficient.
fn samples_for(len: usize) -> usize {
    (8 * len.max(1)).next_power_of_two()
}

fn hardy_norm(coeffs: &[Complex64], p: f64, planner: &mut FftPlanner<f64>) -> f64 {
    let nz: Vec<&Complex64> = coeffs.iter().filter(|c| c.norm() != 0.0).collect();
    match nz.len() {
        0 => return 0.0,
        1 => return nz[0].norm(),
        _ => {}
    }
    let n = samples_for(coeffs.len());
    let poly = CoefficientVector { coeffs: coeffs.to_vec() };
    let vals = poly.circle_values(1.0, n, planner);
    (vals.iter().map(|v| v.norm().powf(p)).sum::<f64>() / n as f64).powf(1.0 / p)
}

/// `‖Δ_n f‖_{H^p}` for every block meeting the coefficients of `f`.
/// Empty blocks are skipped.
pub fn hardy_block_norms(d: &DyadicDecomposition, f: &CoefficientVector, p: f64) -> Result<Vec<BlockNorm>> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::Parameter(format!("Hardy exponent p = {p} must be >= 1")));
    }
    let Some(deg) = f.degree() else {
        return Ok(Vec::new());
    };
    if deg as u64 >= d.index_limit() {
        return Err(Error::Range(format!(
            "degree {deg} beyond the computed blocks (limit {})",
            d.index_limit()
        )));
    }
    let mut out = Vec::new();
    let mut planner = FftPlanner::<f64>::new();
    for (n, b) in d.blocks.iter().enumerate() {
        if b.is_empty() {
            continue;
        }
        if b.start > deg as u64 {
            break;
        }
        let end = (b.end as usize).min(deg + 1);
        // a unimodular factor z^{start} does not change the boundary norm
        let slice = &f.coeffs[b.start as usize..end];
        out.push(BlockNorm { n, start: b.start, end: b.end, norm: hardy_norm(slice, p, &mut planner) });
    }
    Ok(out)
}

/// Dyadic decomposition covering indices up to at least `degree`.
pub fn decomposition_covering(w: &RadialWeight, degree: usize) -> Result<DyadicDecomposition> {
    let mut n_max = 8;
    loop {
        let d = rho_sequence(w, n_max)?;
        if d.index_limit() > degree as u64 {
            return Ok(d);
        }
        if d.truncated_at.is_some() || n_max > 4096 {
            return Err(Error::Range(format!("blocks of {w} stop before index {degree}")));
        }
        n_max *= 2;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockEquivalence {
    pub ratio: f64,
    pub block_sum: f64,
    /// `‖f‖_{A^p_ν}^p`.
    pub norm_p: f64,
    pub blocks: Vec<BlockNorm>,
    pub empty_blocks: Vec<usize>,
}

fn is_power_tail_of(nu: &RadialWeight, omega: &RadialWeight) -> bool {
    nu == omega || matches!(nu.kind(), WeightKind::PowerTail { base, .. } if base == omega)
}

/// `‖f‖_{A^p_ν}^p = ∫ |f|^p ν dA`: Parseval for `p = 2`, otherwise a
/// radial quadrature of circle means.
pub fn bergman_norm_p(nu: &RadialWeight, f: &CoefficientVector, p: f64) -> Result<f64> {
    if f.is_zero() {
        return Ok(0.0);
    }
    if p == 2.0 {
        let m = nu.odd_moments(f.coeffs.len())?;
        return Ok(f.coeffs.iter().zip(&m).map(|(c, m)| c.norm_sqr() * 2.0 * m).sum());
    }
    let n = samples_for(f.coeffs.len());
    let mean = |r: f64| {
        let mut planner = FftPlanner::<f64>::new();
        let vals = f.circle_values(r, n, &mut planner);
        vals.iter().map(|v| v.norm().powf(p)).sum::<f64>() / n as f64
    };
    let at_one = mean(1.0);
    Ok(2.0 * nu.integrate_against_omega1(&mean, at_one)?)
}

/// `Σ_n ν̂₁(ρ_n)‖Δ_n f‖_{H^p}^p / ‖f‖_{A^p_ν}^p` with blocks taken from `ω`.
pub fn block_norm_equivalence(
    omega: &RadialWeight,
    nu: &RadialWeight,
    f: &CoefficientVector,
    p: f64,
) -> Result<BlockEquivalence> {
    if !is_power_tail_of(nu, omega) {
        return Err(Error::Parameter("ν must equal ω or be of the form ω·ŵ₁^α".into()));
    }
    let Some(deg) = f.degree() else {
        return Err(Error::Degenerate("zero polynomial: ratio undefined".into()));
    };
    let d = decomposition_covering(omega, deg)?;
    block_equivalence_with(&d, nu, f, p)
}

/// As [`block_norm_equivalence`] with a precomputed decomposition.
pub fn block_equivalence_with(
    d: &DyadicDecomposition,
    nu: &RadialWeight,
    f: &CoefficientVector,
    p: f64,
) -> Result<BlockEquivalence> {
    if f.is_zero() {
        return Err(Error::Degenerate("zero polynomial: ratio undefined".into()));
    }
    let blocks = hardy_block_norms(d, f, p)?;
    let mut block_sum = 0.0;
    for b in &blocks {
        block_sum += nu.tail1_co(d.co_rho[b.n])? * b.norm.powf(p);
    }
    let norm_p = bergman_norm_p(nu, f, p)?;
    Ok(BlockEquivalence { ratio: block_sum / norm_p, block_sum, norm_p, blocks, empty_blocks: d.empty_blocks.clone() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjointMonomial {
    pub n: usize,
    pub p: f64,
    /// `s ↦ ω(s)ν_{2n+1}/(ν(s)ω_{2n+1}) · s^n` on a graded grid.
    pub radial_factor: Profile,
    /// `‖·‖_{L^{p'}_ν}` by direct quadrature of the factor.
    #[serde(with = "crate::num_serde::scalar")]
    pub norm_direct: f64,
    /// The same norm from `2(ν_{2n+1}/ω_{2n+1})^{p'} σ_{np'+1}`.
    #[serde(with = "crate::num_serde::scalar")]
    pub norm_identity: f64,
    #[serde(with = "crate::num_serde::scalar")]
    pub relative_difference: f64,
    pub divergent: bool,
}

/// The image of `z^n` under the adjoint of `P_ω : L^p_ν → L^p_ν` and its
/// `L^{p'}_ν` norm computed two ways.
pub fn adjoint_monomial(omega: &RadialWeight, nu: &RadialWeight, n: usize, p: ExponentPair) -> Result<AdjointMonomial> {
    let x = 2.0 * n as f64 + 1.0;
    let coef = nu.moment(x)? / omega.moment(x)?;
    let pc = p.p_conj;
    let factor_co = |t: f64| {
        let w = omega.density_co(t);
        if w == 0.0 {
            return 0.0;
        }
        coef * w / nu.density_co(t) * (1.0 - t).powi(n as i32)
    };
    let grid = Grid::graded(1e-8, 16)?;
    let radial_factor = Profile::new(grid.clone(), grid.co_radii().iter().map(|&t| factor_co(t)).collect())?;
    let sigma = sigma_weight(omega, nu, p);
    let sig_moment = sigma.moment(n as f64 * pc + 1.0)?;
    if !sig_moment.is_finite() {
        return Ok(AdjointMonomial {
            n,
            p: p.p,
            radial_factor,
            norm_direct: f64::INFINITY,
            norm_identity: f64::INFINITY,
            relative_difference: 0.0,
            divergent: true,
        });
    }
    let identity = 2.0 * coef.powf(pc) * sig_moment;
    let integrand = |t: f64| {
        let v = factor_co(t);
        if v == 0.0 {
            0.0
        } else {
            v.powf(pc) * (1.0 - t) * nu.density_co(t)
        }
    };
    let direct = 2.0 * boundary_tail(&integrand, 1.0, omega.quadrature())?;
    let (nd, ni) = (direct.powf(1.0 / pc), identity.powf(1.0 / pc));
    Ok(AdjointMonomial {
        n,
        p: p.p,
        radial_factor,
        norm_direct: nd,
        norm_identity: ni,
        relative_difference: (nd - ni).abs() / ni,
        divergent: !direct.is_finite(),
    })
}
