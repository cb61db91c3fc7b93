//! Quadrature on `[0, 1)` with the singular endpoint at `r = 1`.
//!
//! Integrands are written in the co-radius `t = 1 - r`, so that the
//! singular endpoint sits at `t = 0` and can be approached without the
//! cancellation of forming `1 - r` near one. Tails `∫_0^T g(t) dt` are
//! summed over geometric panels `[T/q^{j+1}, T/q^j]`; once the panel
//! contributions decay geometrically, the remainder is extrapolated.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

/// Tolerances and grading used by every adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct QuadratureSpec {
    pub relative_tolerance: f64,
    pub absolute_tolerance: f64,
    /// Ratio between consecutive geometric panels toward `r = 1` (> 1).
    pub graded_exponent: f64,
    /// Maximum number of bisections per adaptive integral.
    pub max_refinements: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            relative_tolerance: 1e-13,
            absolute_tolerance: 1e-300,
            graded_exponent: 2.0,
            max_refinements: 400,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.relative_tolerance > 0.0 && self.absolute_tolerance > 0.0) {
            return Err(Error::Parameter("quadrature tolerances must be > 0".into()));
        }
        if self.max_refinements < 1 {
            return Err(Error::Parameter("max_refinements must be >= 1".into()));
        }
        if !(self.graded_exponent > 1.0) {
            return Err(Error::Parameter("graded_exponent must be > 1".into()));
        }
        Ok(())
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn rescale_error(err: f64, resabs: f64, resasc: f64) -> f64 {
    let mut e = err.abs();
    if resasc != 0.0 && e != 0.0 {
        let scale = (200.0 * e / resasc).powf(1.5);
        e = if scale < 1.0 { resasc * scale } else { resasc };
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        let min_err = 50.0 * f64::EPSILON * resabs;
        if min_err > e {
            e = min_err;
        }
    }
    e
}

/// One Gauss–Kronrod 7/15 panel. Returns (value, error estimate).
pub fn gk15<F: Fn(f64) -> f64 + ?Sized>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut resk = fc * WGK[7];
    let mut resg = fc * WG[3];
    let mut resabs = resk.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        resk += WGK[j] * (f1 + f2);
        resabs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            resg += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = resk * 0.5;
    let mut resasc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        resasc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = resk * half;
    let err = rescale_error((resk - resg) * half, resabs * half.abs(), resasc * half.abs());
    (value, err)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub converged: bool,
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Globally adaptive Gauss–Kronrod integration of `f` over `[a, b]`.
///
/// A non-finite integrand value makes the result `+inf` (or NaN), which
/// callers treat as divergence.
pub fn adaptive<F: Fn(f64) -> f64 + ?Sized>(f: &F, a: f64, b: f64, spec: &QuadratureSpec) -> QuadResult {
    if a == b {
        return QuadResult { value: 0.0, error: 0.0, converged: true };
    }
    let (v, e) = gk15(f, a, b);
    if !v.is_finite() {
        return QuadResult { value: v, error: f64::INFINITY, converged: false };
    }
    let mut heap = BinaryHeap::new();
    heap.push(Panel { a, b, value: v, error: e });
    let mut total = v;
    let mut err = e;
    let mut splits = 0;
    while err > spec.absolute_tolerance.max(spec.relative_tolerance * total.abs()) {
        if splits >= spec.max_refinements {
            return QuadResult { value: total, error: err, converged: false };
        }
        let Some(p) = heap.pop() else { break };
        let mid = 0.5 * (p.a + p.b);
        if mid <= p.a.min(p.b) || mid >= p.a.max(p.b) {
            // interval cannot be split further in floating point
            heap.push(p);
            return QuadResult { value: total, error: err, converged: false };
        }
        let (v1, e1) = gk15(f, p.a, mid);
        let (v2, e2) = gk15(f, mid, p.b);
        if !(v1.is_finite() && v2.is_finite()) {
            return QuadResult { value: f64::INFINITY, error: f64::INFINITY, converged: false };
        }
        total += v1 + v2 - p.value;
        err += e1 + e2 - p.error;
        heap.push(Panel { a: p.a, b: mid, value: v1, error: e1 });
        heap.push(Panel { a: mid, b: p.b, value: v2, error: e2 });
        splits += 1;
    }
    // re-sum to shed accumulated cancellation from the running updates
    let mut value = 0.0;
    let mut error = 0.0;
    for p in heap.iter() {
        value += p.value;
        error += p.error;
    }
    QuadResult { value, error, converged: true }
}

/// Smallest co-radius a boundary panel may reach.
const TINY_CO_RADIUS: f64 = 1e-300;
/// Consecutive non-decreasing panels after which a tail is declared divergent.
const DIVERGENCE_RUN: usize = 48;
/// Consecutive empty panels after which a positive sum is final.
const ZERO_RUN: usize = 64;

/// `∫_0^{t_hi} g(t) dt` for a nonnegative integrand `g` that may be
/// (integrably) singular at `t = 0`.
///
/// Returns `Ok(+inf)` when the panel contributions stop decaying
/// (divergent integral) and `Error::Accuracy` when they decay too slowly
/// to be summed before the co-radius underflows.
pub fn boundary_tail<F: Fn(f64) -> f64 + ?Sized>(g: &F, t_hi: f64, spec: &QuadratureSpec) -> Result<f64> {
    if t_hi <= 0.0 {
        return Ok(0.0);
    }
    let q = spec.graded_exponent;
    let mut hi = t_hi;
    let mut sum = 0.0;
    let mut err = 0.0;
    let mut prev: Option<f64> = None;
    let mut run = 0usize;
    let mut zero_run = 0usize;
    loop {
        let lo = hi / q;
        let piece = adaptive(g, lo, hi, spec);
        if !piece.value.is_finite() {
            return Ok(f64::INFINITY);
        }
        sum += piece.value;
        err += piece.error;
        if piece.value == 0.0 {
            zero_run += 1;
            // weights may vanish on whole annuli; only a long gap ends the sum
            if zero_run >= ZERO_RUN && sum > 0.0 {
                return Ok(sum);
            }
        } else {
            zero_run = 0;
        }
        if let Some(p) = prev {
            if piece.value >= p && piece.value > 0.0 {
                run += 1;
                if run >= DIVERGENCE_RUN {
                    return Ok(f64::INFINITY);
                }
            } else {
                run = 0;
            }
            if p > 0.0 {
                let ratio = piece.value / p;
                if ratio < 1.0 {
                    let rem = piece.value * ratio / (1.0 - ratio);
                    if rem <= spec.relative_tolerance * sum.abs() + spec.absolute_tolerance {
                        return Ok(sum + rem);
                    }
                }
            }
        }
        if lo < TINY_CO_RADIUS {
            if sum == 0.0 {
                return Ok(0.0);
            }
            return Err(Error::Accuracy { best: sum, bound: err.max(prev.unwrap_or(sum)) });
        }
        prev = Some(piece.value);
        hi = lo;
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        // recompute derivative at the converged node
        let mut p1 = 1.0;
        let mut p2 = 0.0;
        for j in 0..n {
            let p3 = p2;
            p2 = p1;
            p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
        }
        if n > 0 {
            dp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}
