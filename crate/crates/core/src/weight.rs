//! Radial weights on the unit disc: densities, tails `ŵ`, `ŵ₁`, moments
//! `ω_x`, and the derived weights `ω·ŵ₁^α` and `σ = (ω/ν^{1/p})^{p'}`.
//!
//! Everything is evaluated in the co-radius `t = 1 - r`. Closed forms are
//! used whenever the kind has one; the geometric-panel quadrature of
//! [`crate::quad`] is the fallback and the test oracle.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::sync::{Arc, RwLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::beta::{beta_reg, ln_beta};

use crate::error::{Error, Result};
use crate::grid::Profile;
use crate::quad::{boundary_tail, QuadratureSpec};
use crate::special::ln_upper_gamma;

/// A Lebesgue exponent `p ∈ (1, ∞)` together with its conjugate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentPair {
    pub p: f64,
    pub p_conj: f64,
}

impl ExponentPair {
    pub fn new(p: f64) -> Result<ExponentPair> {
        if !(p > 1.0 && p.is_finite()) {
            return Err(Error::Parameter(format!("exponent p = {p} must lie in (1, inf)")));
        }
        Ok(ExponentPair { p, p_conj: p / (p - 1.0) })
    }

    pub fn conjugate(&self) -> ExponentPair {
        ExponentPair { p: self.p_conj, p_conj: self.p }
    }
}

/// Piecewise-linear table `r ↦ value`, constant to the left of the first
/// node and decaying linearly to zero at `r = 1` after the last one.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    r: Vec<f64>,
    v: Vec<f64>,
    node_tail: Vec<f64>,
    node_tail1: Vec<f64>,
}

fn seg_integrals(a: f64, b: f64, fa: f64, fb: f64) -> (f64, f64) {
    let h = b - a;
    (0.5 * h * (fa + fb), h / 6.0 * (fa * (2.0 * a + b) + fb * (a + 2.0 * b)))
}

impl Table {
    pub fn new(r: Vec<f64>, v: Vec<f64>) -> Result<Table> {
        if r.len() != v.len() || r.is_empty() {
            return Err(Error::Parameter("table needs matching, nonempty r and value columns".into()));
        }
        if r[0] < 0.0 || *r.last().unwrap() >= 1.0 {
            return Err(Error::Domain("table radii must lie in [0,1)".into()));
        }
        if r.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Parameter("table radii must be strictly increasing".into()));
        }
        if v.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
            return Err(Error::Parameter("table values must be finite and nonnegative".into()));
        }
        if !(*v.last().unwrap() > 0.0) {
            return Err(Error::Parameter(
                "last table value must be positive so that the tail stays positive".into(),
            ));
        }
        let n = r.len();
        let mut node_tail = vec![0.0; n];
        let mut node_tail1 = vec![0.0; n];
        let tn = 1.0 - r[n - 1];
        node_tail[n - 1] = v[n - 1] * tn / 2.0;
        node_tail1[n - 1] = v[n - 1] / tn * (tn * tn / 2.0 - tn * tn * tn / 3.0);
        for i in (0..n - 1).rev() {
            let (s0, s1) = seg_integrals(r[i], r[i + 1], v[i], v[i + 1]);
            node_tail[i] = node_tail[i + 1] + s0;
            node_tail1[i] = node_tail1[i + 1] + s1;
        }
        Ok(Table { r, v, node_tail, node_tail1 })
    }

    pub fn from_csv(path: &Path) -> Result<Table> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_path(path)
            .map_err(|e| Error::Io(e.to_string()))?;
        let mut r = Vec::new();
        let mut v = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
            if rec.len() != 2 {
                return Err(Error::Parse(format!("line {}: expected two columns r,value", i + 1)));
            }
            let (a, b) = (rec[0].parse::<f64>(), rec[1].parse::<f64>());
            match (a, b) {
                (Ok(a), Ok(b)) => {
                    r.push(a);
                    v.push(b);
                }
                // a header line is tolerated only in first position
                _ if i == 0 => continue,
                _ => return Err(Error::Parse(format!("line {}: not numeric", i + 1))),
            }
        }
        Table::new(r, v)
    }

    pub fn radii(&self) -> &[f64] {
        &self.r
    }

    pub fn values(&self) -> &[f64] {
        &self.v
    }

    fn eval_co(&self, t: f64) -> f64 {
        let r = 1.0 - t;
        let n = self.r.len();
        let tn = 1.0 - self.r[n - 1];
        if t <= tn {
            return self.v[n - 1] * t / tn;
        }
        if r <= self.r[0] {
            return self.v[0];
        }
        let i = self.r.partition_point(|&x| x <= r) - 1;
        let lam = (r - self.r[i]) / (self.r[i + 1] - self.r[i]);
        self.v[i] * (1.0 - lam) + self.v[i + 1] * lam
    }

    /// (ŵ, ŵ₁) at co-radius `t`.
    fn tails(&self, t: f64) -> (f64, f64) {
        let n = self.r.len();
        let tn = 1.0 - self.r[n - 1];
        if t <= tn {
            let c = self.v[n - 1] / tn;
            return (c * t * t / 2.0, c * (t * t / 2.0 - t * t * t / 3.0));
        }
        let r = 1.0 - t;
        if r < self.r[0] {
            let (s0, s1) = seg_integrals(r, self.r[0], self.v[0], self.v[0]);
            return (self.node_tail[0] + s0, self.node_tail1[0] + s1);
        }
        let i = self.r.partition_point(|&x| x <= r) - 1;
        let fr = self.eval_co(t);
        let (s0, s1) = seg_integrals(r, self.r[i + 1], fr, self.v[i + 1]);
        (self.node_tail[i + 1] + s0, self.node_tail1[i + 1] + s1)
    }
}

/// The shape of a radial weight. Scalar multiples are carried separately.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightKind {
    /// `(1 - s²)^γ`, unnormalized.
    Standard { gamma: f64 },
    /// `(1 - s²)^{-1} (log(e/(1 - s²)))^{-α}`.
    Log { alpha: f64 },
    /// `exp(-c / (1 - s)^k)`.
    Exponential { c: f64, k: f64 },
    /// `ω(s) ŵ₁(s)^α` for a base weight `ω`.
    PowerTail { base: RadialWeight, alpha: f64 },
    Product(Vec<RadialWeight>),
    Tabulated(Table),
    /// `ω(s) f(s)^e` for a sampled positive factor `f`.
    Modulated { base: RadialWeight, factor: Profile, exponent: f64 },
    /// `(ω/ν^{1/p})^{p'}`, with 0 on the common zero set of ω and ν.
    Sigma { omega: RadialWeight, nu: RadialWeight, p: ExponentPair },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum CacheSlot {
    Tail,
    Tail1,
    LogExcess,
}

#[derive(Debug)]
struct Inner {
    kind: WeightKind,
    scale: f64,
    quad: QuadratureSpec,
    moments: RwLock<HashMap<u64, f64>>,
    odd_moments: RwLock<Vec<f64>>,
    tails: RwLock<HashMap<(CacheSlot, u64), f64>>,
}

/// A nonnegative integrable function on `[0,1)`, extended radially to the
/// disc. Cheap to clone; caches are shared and written once per key.
#[derive(Debug, Clone)]
pub struct RadialWeight {
    inner: Arc<Inner>,
}

impl PartialEq for RadialWeight {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
            || (self.inner.scale == other.inner.scale && self.inner.kind == other.inner.kind)
    }
}

fn co_u(t: f64) -> f64 {
    t * (2.0 - t)
}

fn sigma_density(w: f64, n: f64, p: &ExponentPair) -> f64 {
    if w == 0.0 {
        0.0
    } else if n == 0.0 {
        f64::INFINITY
    } else {
        (w / n.powf(1.0 / p.p)).powf(p.p_conj)
    }
}

impl RadialWeight {
    fn raw(kind: WeightKind, scale: f64) -> RadialWeight {
        RadialWeight {
            inner: Arc::new(Inner {
                kind,
                scale,
                quad: QuadratureSpec::default(),
                moments: RwLock::new(HashMap::new()),
                odd_moments: RwLock::new(Vec::new()),
                tails: RwLock::new(HashMap::new()),
            }),
        }
    }

    pub fn standard(gamma: f64) -> Result<RadialWeight> {
        if !(gamma > -1.0 && gamma.is_finite()) {
            return Err(Error::Parameter(format!("standard weight needs gamma > -1, got {gamma}")));
        }
        Ok(Self::raw(WeightKind::Standard { gamma }, 1.0))
    }

    pub fn log(alpha: f64) -> Result<RadialWeight> {
        if !(alpha > 1.0 && alpha.is_finite()) {
            return Err(Error::Parameter(format!("log weight needs alpha > 1, got {alpha}")));
        }
        Ok(Self::raw(WeightKind::Log { alpha }, 1.0))
    }

    pub fn exponential(c: f64, k: f64) -> Result<RadialWeight> {
        if !(c > 0.0 && k > 0.0 && c.is_finite() && k.is_finite()) {
            return Err(Error::Parameter(format!("exponential weight needs c, k > 0, got c={c} k={k}")));
        }
        Ok(Self::raw(WeightKind::Exponential { c, k }, 1.0))
    }

    pub fn tabulated(r: Vec<f64>, v: Vec<f64>) -> Result<RadialWeight> {
        Ok(Self::raw(WeightKind::Tabulated(Table::new(r, v)?), 1.0))
    }

    pub fn product(factors: Vec<RadialWeight>) -> Result<RadialWeight> {
        if factors.is_empty() {
            return Err(Error::Parameter("empty product".into()));
        }
        let w = Self::raw(WeightKind::Product(factors), 1.0);
        w.check_positive_tail()?;
        Ok(w)
    }

    /// `ν = ω·ŵ₁^α`, with `ν̂₁ = ŵ₁^{1+α}/(1+α)`.
    pub fn power_tail(&self, alpha: f64) -> Result<RadialWeight> {
        if !(alpha > -1.0 && alpha.is_finite()) {
            return Err(Error::Parameter(format!("power tail exponent must be > -1, got {alpha}")));
        }
        if alpha == 0.0 {
            return Ok(self.clone());
        }
        Ok(Self::raw(WeightKind::PowerTail { base: self.clone(), alpha }, 1.0))
    }

    pub fn scaled(&self, c: f64) -> Result<RadialWeight> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::Parameter(format!("scale factor must be positive, got {c}")));
        }
        Ok(Self::raw(self.inner.kind.clone(), self.inner.scale * c))
    }

    /// `ω·f^e` for a sampled factor `f >= 0`.
    pub fn modulated(&self, factor: &Profile, exponent: f64) -> Result<RadialWeight> {
        if factor.values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::Parameter("modulating factor must be finite and nonnegative".into()));
        }
        let w = Self::raw(
            WeightKind::Modulated { base: self.clone(), factor: factor.clone(), exponent },
            1.0,
        );
        w.check_positive_tail()?;
        Ok(w)
    }

    pub fn with_quadrature(&self, spec: QuadratureSpec) -> Result<RadialWeight> {
        spec.validate()?;
        let mut w = Self::raw(self.inner.kind.clone(), self.inner.scale);
        Arc::get_mut(&mut w.inner).expect("fresh weight").quad = spec;
        Ok(w)
    }

    fn check_positive_tail(&self) -> Result<()> {
        match self.tail_co(1e-12) {
            Ok(v) if v > 0.0 => Ok(()),
            Ok(_) => Err(Error::Parameter(format!("weight {self} has vanishing tail near r = 1"))),
            Err(_) => Ok(()),
        }
    }

    pub fn kind(&self) -> &WeightKind {
        &self.inner.kind
    }

    pub fn scale(&self) -> f64 {
        self.inner.scale
    }

    pub fn quadrature(&self) -> &QuadratureSpec {
        &self.inner.quad
    }

    /// True when `ŵ₁` is evaluated without quadrature.
    pub fn has_closed_tail1(&self) -> bool {
        match &self.inner.kind {
            WeightKind::Standard { .. }
            | WeightKind::Log { .. }
            | WeightKind::Exponential { .. }
            | WeightKind::Tabulated(_) => true,
            WeightKind::PowerTail { base, .. } => base.has_closed_tail1(),
            _ => false,
        }
    }

    /// `ω(r)` for `r ∈ [0,1)`.
    pub fn eval(&self, r: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&r) {
            return Err(Error::Domain(format!("radius {r} outside [0,1)")));
        }
        Ok(self.density_co(1.0 - r))
    }

    /// `ω(1 - t)` for a co-radius `t ∈ (0,1]`.
    pub fn density_co(&self, t: f64) -> f64 {
        self.inner.scale * self.shape_co(t)
    }

    fn shape_co(&self, t: f64) -> f64 {
        match &self.inner.kind {
            WeightKind::Standard { gamma } => co_u(t).powf(*gamma),
            WeightKind::Log { alpha } => {
                let u = co_u(t);
                1.0 / (u * (1.0 - u.ln()).powf(*alpha))
            }
            WeightKind::Exponential { c, k } => (-c / t.powf(*k)).exp(),
            WeightKind::PowerTail { base, alpha } => {
                let b = base.density_co(t);
                if b == 0.0 {
                    0.0
                } else {
                    b * base.tail1_co(t).map_or(f64::NAN, |x| x.powf(*alpha))
                }
            }
            WeightKind::Product(ws) => ws.iter().map(|w| w.density_co(t)).product(),
            WeightKind::Tabulated(tab) => tab.eval_co(t),
            WeightKind::Modulated { base, factor, exponent } => {
                let b = base.density_co(t);
                if b == 0.0 {
                    0.0
                } else {
                    b * factor.eval_co(t).powf(*exponent)
                }
            }
            WeightKind::Sigma { omega, nu, p } => sigma_density(omega.density_co(t), nu.density_co(t), p),
        }
    }

    fn cached(&self, slot: CacheSlot, t: f64, f: impl FnOnce() -> Result<f64>) -> Result<f64> {
        let key = (slot, t.to_bits());
        if let Some(v) = self.inner.tails.read().unwrap().get(&key) {
            return Ok(*v);
        }
        let v = f()?;
        self.inner.tails.write().unwrap().entry(key).or_insert(v);
        Ok(v)
    }

    /// `ŵ(r) = ∫_r^1 ω(s) ds`.
    pub fn tail(&self, r: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&r) {
            return Err(Error::Domain(format!("radius {r} outside [0,1)")));
        }
        self.tail_co(1.0 - r)
    }

    /// `ŵ₁(r) = ∫_r^1 s ω(s) ds`.
    pub fn tail1(&self, r: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&r) {
            return Err(Error::Domain(format!("radius {r} outside [0,1)")));
        }
        self.tail1_co(1.0 - r)
    }

    /// `ŵ` at co-radius `t`.
    pub fn tail_co(&self, t: f64) -> Result<f64> {
        if t <= 0.0 {
            return Ok(0.0);
        }
        let quad = self.inner.quad;
        let v = match &self.inner.kind {
            WeightKind::Standard { gamma } => {
                if *gamma <= -1.0 {
                    f64::INFINITY
                } else {
                    let u = co_u(t).min(1.0);
                    0.5 * ln_beta(0.5, gamma + 1.0).exp() * beta_reg(gamma + 1.0, 0.5, u)
                }
            }
            WeightKind::Log { alpha } => {
                let a = *alpha;
                let excess = self.cached(CacheSlot::LogExcess, t, || {
                    boundary_tail(&|tau: f64| 1.0 / ((2.0 - tau) * (1.0 - co_u(tau).ln()).powf(a)), t, &quad)
                })?;
                log_tail1(a, t) + excess
            }
            WeightKind::Exponential { c, k } => match exp_tails(*c, *k, t) {
                Some((tail, _)) => tail,
                None => self.cached(CacheSlot::Tail, t, || boundary_tail(&|tau| self.shape_co(tau), t, &quad))?,
            },
            WeightKind::Tabulated(tab) => tab.tails(t).0,
            _ => self.cached(CacheSlot::Tail, t, || boundary_tail(&|tau| self.shape_co(tau), t, &quad))?,
        };
        Ok(self.inner.scale * v)
    }

    /// `ŵ₁` at co-radius `t`.
    pub fn tail1_co(&self, t: f64) -> Result<f64> {
        if t <= 0.0 {
            return Ok(0.0);
        }
        let quad = self.inner.quad;
        let generic = || {
            self.cached(CacheSlot::Tail1, t, || {
                boundary_tail(&|tau| (1.0 - tau) * self.shape_co(tau), t, &quad)
            })
        };
        let v = match &self.inner.kind {
            WeightKind::Standard { gamma } => {
                if *gamma <= -1.0 {
                    f64::INFINITY
                } else {
                    co_u(t).powf(gamma + 1.0) / (2.0 * (gamma + 1.0))
                }
            }
            WeightKind::Log { alpha } => log_tail1(*alpha, t),
            WeightKind::Exponential { c, k } => match exp_tails(*c, *k, t) {
                Some((_, tail1)) => tail1,
                None => generic()?,
            },
            WeightKind::PowerTail { base, alpha } => {
                if *alpha <= -1.0 {
                    f64::INFINITY
                } else {
                    base.tail1_co(t)?.powf(1.0 + alpha) / (1.0 + alpha)
                }
            }
            WeightKind::Tabulated(tab) => tab.tails(t).1,
            _ => generic()?,
        };
        Ok(self.inner.scale * v)
    }

    /// `∫_{r_a}^{r_b} s^m ω(s) ds` for co-radii `t_a > t_b`, `m ∈ {0, 1}`,
    /// by adaptive quadrature on the segment.
    pub fn segment_integral_co(&self, t_a: f64, t_b: f64, m: i32) -> f64 {
        let f = |tau: f64| (1.0 - tau).powi(m) * self.density_co(tau);
        crate::quad::adaptive(&f, t_b, t_a, &self.inner.quad).value
    }

    /// `ω_x = ∫_0^1 r^x ω(r) dr`, cached per exponent.
    pub fn moment(&self, x: f64) -> Result<f64> {
        if !(x >= 0.0 && x.is_finite()) {
            return Err(Error::Parameter(format!("moment exponent must be >= 0, got {x}")));
        }
        if let Some(v) = self.inner.moments.read().unwrap().get(&x.to_bits()) {
            return Ok(*v);
        }
        let v = match &self.inner.kind {
            WeightKind::Standard { gamma } => {
                if *gamma <= -1.0 {
                    f64::INFINITY
                } else {
                    self.inner.scale * 0.5 * ln_beta((x + 1.0) / 2.0, gamma + 1.0).exp()
                }
            }
            _ => self.moment_by_quadrature(x)?,
        };
        self.inner.moments.write().unwrap().entry(x.to_bits()).or_insert(v);
        Ok(v)
    }

    /// Quadrature route for `ω_x`, also the oracle for the closed forms.
    pub fn moment_by_quadrature(&self, x: f64) -> Result<f64> {
        let quad = self.inner.quad;
        let scale = self.inner.scale;
        let direct = boundary_tail(&|t: f64| (1.0 - t).powf(x) * self.shape_co(t), 1.0, &quad);
        match direct {
            Ok(v) => Ok(scale * v),
            Err(Error::Accuracy { .. }) => {
                // Slowly decaying weights: subtract the divergent-looking part
                // through a tail that has a closed form.
                if x >= 1.0 {
                    let g = |t: f64| {
                        let s = 1.0 - t;
                        -s * ((x - 1.0) * (-t).ln_1p()).exp_m1() * self.shape_co(t)
                    };
                    Ok(self.tail1_co(1.0)? - scale * boundary_tail(&g, 1.0, &quad)?)
                } else {
                    let g = |t: f64| -(x * (-t).ln_1p()).exp_m1() * self.shape_co(t);
                    Ok(self.tail_co(1.0)? - scale * boundary_tail(&g, 1.0, &quad)?)
                }
            }
            Err(e) => Err(e),
        }
    }

    /// `ω_{2k+1}` for `k = 0..n`.
    pub fn odd_moments(&self, n: usize) -> Result<Vec<f64>> {
        {
            let cache = self.inner.odd_moments.read().unwrap();
            if cache.len() >= n {
                return Ok(cache[..n].to_vec());
            }
        }
        let fresh: Vec<f64> = match &self.inner.kind {
            WeightKind::Standard { gamma } => {
                let g = *gamma;
                if g <= -1.0 {
                    vec![f64::INFINITY; n]
                } else {
                    // ω_{2k+3} = ω_{2k+1} (k+1)/(k+2+γ)
                    let mut out = Vec::with_capacity(n);
                    let mut m = self.inner.scale / (2.0 * (g + 1.0));
                    for k in 0..n {
                        out.push(m);
                        m *= (k as f64 + 1.0) / (k as f64 + 2.0 + g);
                    }
                    out
                }
            }
            _ => (0..n)
                .into_par_iter()
                .map(|k| self.moment(2.0 * k as f64 + 1.0))
                .collect::<Result<Vec<f64>>>()?,
        };
        let mut cache = self.inner.odd_moments.write().unwrap();
        if cache.len() < fresh.len() {
            *cache = fresh.clone();
        }
        Ok(fresh)
    }

    /// `∫_0^1 h(r) r ω(r) dr`. `h_at_one` is the limit of `h` at `r = 1`,
    /// used to regularize slowly decaying weights.
    pub fn integrate_against_omega1(&self, h: &(dyn Fn(f64) -> f64 + Sync), h_at_one: f64) -> Result<f64> {
        let quad = self.inner.quad;
        let scale = self.inner.scale;
        let direct = boundary_tail(&|t: f64| h(1.0 - t) * (1.0 - t) * self.shape_co(t), 1.0, &quad);
        match direct {
            Ok(v) => Ok(scale * v),
            Err(Error::Accuracy { .. }) => {
                let g = |t: f64| (h_at_one - h(1.0 - t)) * (1.0 - t) * self.shape_co(t);
                Ok(h_at_one * self.tail1_co(1.0)? - scale * boundary_tail(&g, 1.0, &quad)?)
            }
            Err(e) => Err(e),
        }
    }

    /// True when both tails are finite at `r = 0`.
    pub fn is_integrable(&self) -> bool {
        matches!(self.tail1_co(1.0), Ok(v) if v.is_finite())
    }
}

fn log_tail1(alpha: f64, t: f64) -> f64 {
    let l = 1.0 - co_u(t).ln();
    l.powf(1.0 - alpha) / (2.0 * (alpha - 1.0))
}

/// (ŵ, ŵ₁) for `exp(-c/(1-s)^k)` via upper incomplete gamma functions.
fn exp_tails(c: f64, k: f64, t: f64) -> Option<(f64, f64)> {
    let v0 = c / t.powf(k);
    let a = (c.powf(1.0 / k) / k).ln() + ln_upper_gamma(-1.0 / k, v0)?;
    let b = (c.powf(2.0 / k) / k).ln() + ln_upper_gamma(-2.0 / k, v0)?;
    let tail = a.exp();
    let excess = b.exp();
    Some((tail, tail - excess))
}

/// `σ = (ω/ν^{1/p})^{p'}`. Shapes that close under the operation are
/// simplified so that their tails keep closed forms; a divergent `σ` is
/// returned as-is and reports `+inf` tails.
pub fn sigma_weight(omega: &RadialWeight, nu: &RadialWeight, p: ExponentPair) -> RadialWeight {
    let pc = p.p_conj;
    let fac = omega.scale().powf(pc) * nu.scale().powf(-pc / p.p);
    match (omega.kind(), nu.kind()) {
        (a, b) if a == b => RadialWeight::raw(a.clone(), fac),
        (WeightKind::Standard { gamma }, WeightKind::Standard { gamma: beta }) => {
            let mut delta = gamma * pc - beta * pc / p.p;
            // rounding must not move the borderline exponent to the integrable side
            if (delta + 1.0).abs() <= 1e-12 {
                delta = -1.0;
            }
            RadialWeight::raw(WeightKind::Standard { gamma: delta }, fac)
        }
        (_, WeightKind::PowerTail { base, alpha }) if base == omega => RadialWeight::raw(
            WeightKind::PowerTail { base: omega.clone(), alpha: -alpha * pc / p.p },
            nu.scale().powf(-pc / p.p),
        ),
        _ => RadialWeight::raw(WeightKind::Sigma { omega: omega.clone(), nu: nu.clone(), p }, 1.0),
    }
}

impl fmt::Display for RadialWeight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.inner.scale != 1.0 {
            write!(f, "{}*", self.inner.scale)?;
        }
        match &self.inner.kind {
            WeightKind::Standard { gamma } => write!(f, "std:gamma={gamma}"),
            WeightKind::Log { alpha } => write!(f, "log:alpha={alpha}"),
            WeightKind::Exponential { c, k } => write!(f, "exp:c={c},k={k}"),
            WeightKind::PowerTail { base, alpha } => write!(f, "powtail:base={base},alpha={alpha}"),
            WeightKind::Product(ws) => {
                write!(f, "prod:")?;
                for (i, w) in ws.iter().enumerate() {
                    if i > 0 {
                        write!(f, "*")?;
                    }
                    write!(f, "{w}")?;
                }
                Ok(())
            }
            WeightKind::Tabulated(t) => write!(f, "table:<{} nodes>", t.r.len()),
            WeightKind::Modulated { base, factor, exponent } => {
                write!(f, "modulated({base},<{} nodes>^{exponent})", factor.len())
            }
            WeightKind::Sigma { omega, nu, p } => write!(f, "sigma({omega},{nu},p={})", p.p),
        }
    }
}

fn parse_kv(body: &str) -> Result<HashMap<String, f64>> {
    let mut out = HashMap::new();
    for part in body.split(',') {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("expected key=value, got '{part}'")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("'{v}' is not a number")))?;
        out.insert(k.trim().to_string(), v);
    }
    Ok(out)
}

fn take(kv: &HashMap<String, f64>, key: &str, spec: &str) -> Result<f64> {
    kv.get(key)
        .copied()
        .ok_or_else(|| Error::Parse(format!("missing '{key}' in weight spec '{spec}'")))
}

/// Parses the weight mini-language: `std:gamma=<g>`, `log:alpha=<a>`,
/// `exp:c=<c>,k=<k>`, `powtail:base=<spec>,alpha=<a>`,
/// `prod:<spec>*<spec>`, `table:<path.csv>`.
pub fn parse_weight(spec: &str) -> Result<RadialWeight> {
    let spec = spec.trim();
    let (head, body) = spec
        .split_once(':')
        .ok_or_else(|| Error::Parse(format!("weight spec '{spec}' has no kind prefix")))?;
    match head.trim() {
        "std" => {
            let kv = parse_kv(body)?;
            RadialWeight::standard(take(&kv, "gamma", spec)?)
        }
        "log" => {
            let kv = parse_kv(body)?;
            RadialWeight::log(take(&kv, "alpha", spec)?)
        }
        "exp" => {
            let kv = parse_kv(body)?;
            RadialWeight::exponential(take(&kv, "c", spec)?, take(&kv, "k", spec)?)
        }
        "powtail" => {
            let rest = body
                .trim()
                .strip_prefix("base=")
                .ok_or_else(|| Error::Parse(format!("powtail spec '{spec}' must start with base=")))?;
            let (base, alpha) = rest
                .rsplit_once(",alpha=")
                .ok_or_else(|| Error::Parse(format!("powtail spec '{spec}' needs ,alpha=")))?;
            let alpha: f64 = alpha
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("'{alpha}' is not a number")))?;
            parse_weight(base)?.power_tail(alpha)
        }
        "prod" => {
            let factors = body.split('*').map(parse_weight).collect::<Result<Vec<_>>>()?;
            RadialWeight::product(factors)
        }
        "table" => {
            let tab = Table::from_csv(Path::new(body.trim()))?;
            Ok(RadialWeight::raw(WeightKind::Tabulated(tab), 1.0))
        }
        other => Err(Error::Parse(format!("unknown weight kind '{other}'"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::adaptive;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(1e-300)
    }

    /// Independent oracle: integrate the density directly in `r` with
    /// a change of variables that flattens the endpoint at 1.
    fn tail1_oracle(w: &RadialWeight, r: f64) -> f64 {
        let spec = QuadratureSpec::default();
        // s = 1 - (1-r) e^{-y}, y ∈ [0, ∞) mapped by y = v/(1-v)
        let f = |v: f64| {
            let y = v / (1.0 - v);
            let t = (1.0 - r) * (-y).exp();
            if t == 0.0 {
                return 0.0;
            }
            (1.0 - t) * w.density_co(t) * t / ((1.0 - v) * (1.0 - v))
        };
        adaptive(&f, 0.0, 1.0, &spec).value
    }

    #[test]
    fn evaluation_examples() {
        assert_eq!(RadialWeight::standard(0.0).unwrap().eval(0.5).unwrap(), 1.0);
        assert_eq!(RadialWeight::log(2.0).unwrap().eval(0.0).unwrap(), 1.0);
        let e = RadialWeight::exponential(1.0, 1.0).unwrap().eval(0.5).unwrap();
        assert!(close(e, 0.135_335_283_236_612_7, 1e-15));
        assert!(matches!(RadialWeight::standard(0.0).unwrap().eval(1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn tail_examples() {
        let w0 = RadialWeight::standard(0.0).unwrap();
        let w1 = RadialWeight::standard(1.0).unwrap();
        assert!(close(w0.tail(0.5).unwrap(), 0.5, 1e-14));
        assert!(close(w1.tail(0.0).unwrap(), 2.0 / 3.0, 1e-14));
        assert!(close(w0.tail1(0.6).unwrap(), 0.32, 1e-14));
        assert!(close(w1.tail1(0.0).unwrap(), 0.25, 1e-15));
    }

    #[test]
    fn log_tail1_matches_substitution_and_quadrature() {
        let w = RadialWeight::log(2.0).unwrap();
        for r in [0.0, 0.3, 0.9, 0.999] {
            let closed = w.tail1(r).unwrap();
            let expected = 0.5 / (1.0f64 - (1.0 - r * r).ln());
            assert!(close(closed, expected, 1e-13));
            let oracle = tail1_oracle(&w, r);
            assert!(close(closed, oracle, 1e-6), "r={r}: {closed} vs {oracle}");
        }
        // monotone decay toward 0
        let mut last = f64::INFINITY;
        for t in [1e-1, 1e-4, 1e-8, 1e-16, 1e-64] {
            let v = w.tail1_co(t).unwrap();
            assert!(v < last);
            last = v;
        }
        assert!(last < 0.005);
    }

    #[test]
    fn closed_tails_match_quadrature_oracle() {
        let weights = [
            RadialWeight::standard(-0.5).unwrap(),
            RadialWeight::standard(2.5).unwrap(),
            RadialWeight::exponential(1.0, 1.0).unwrap(),
            RadialWeight::exponential(0.5, 2.0).unwrap(),
            RadialWeight::standard(1.0).unwrap().power_tail(0.5).unwrap(),
        ];
        for w in &weights {
            for r in [0.0, 0.5, 0.9, 0.99] {
                let closed = w.tail1(r).unwrap();
                let oracle = tail1_oracle(w, r);
                assert!(close(closed, oracle, 1e-9), "{w} r={r}: {closed} vs {oracle}");
            }
        }
    }

    #[test]
    fn plain_tails_match_quadrature() {
        let quad = QuadratureSpec::default();
        for w in [
            RadialWeight::standard(-0.5).unwrap(),
            RadialWeight::standard(1.5).unwrap(),
            RadialWeight::exponential(1.0, 1.0).unwrap(),
            RadialWeight::log(3.0).unwrap(),
        ] {
            for t in [1.0, 0.5, 1e-3] {
                let closed = w.tail_co(t).unwrap();
                let q = boundary_tail(&|tau| w.density_co(tau), t, &quad);
                if let Ok(q) = q {
                    assert!(close(closed, q, 1e-10), "{w} t={t}: {closed} vs {q}");
                }
            }
        }
    }

    #[test]
    fn moment_examples() {
        let w0 = RadialWeight::standard(0.0).unwrap();
        assert!(close(w0.moment(3.0).unwrap(), 0.25, 1e-14));
        let w1 = RadialWeight::standard(1.0).unwrap();
        assert!(close(w1.moment(1.0).unwrap(), 0.25, 1e-14));
        // (1/2) B(3/2, 3/2) = π/16
        let wh = RadialWeight::standard(0.5).unwrap();
        let m = wh.moment(2.0).unwrap();
        assert!(close(m, std::f64::consts::PI / 16.0, 1e-13));
        assert!(close(m, wh.moment_by_quadrature(2.0).unwrap(), 1e-10));
    }

    #[test]
    fn log_moments_use_regularized_route() {
        let w = RadialWeight::log(2.0).unwrap();
        // ω_1 = ŵ₁(0) = 1/2
        assert!(close(w.moment(1.0).unwrap(), 0.5, 1e-12));
        let m0 = w.moment(0.0).unwrap();
        assert!(close(m0, w.tail(0.0).unwrap(), 1e-10));
        let mut last = m0;
        for x in [0.5, 1.0, 3.0, 11.0, 101.0] {
            let m = w.moment(x).unwrap();
            assert!(m < last, "x={x}");
            last = m;
        }
    }

    #[test]
    fn odd_moment_recurrence_matches_beta() {
        let w = RadialWeight::standard(2.5).unwrap();
        let odd = w.odd_moments(300).unwrap();
        for k in [0usize, 1, 7, 100, 299] {
            let b = w.moment(2.0 * k as f64 + 1.0).unwrap();
            assert!(close(odd[k], b, 1e-12), "k={k}");
        }
    }

    #[test]
    fn finite_difference_of_tail1() {
        for w in [
            RadialWeight::standard(1.0).unwrap(),
            RadialWeight::log(2.0).unwrap(),
            RadialWeight::exponential(1.0, 1.0).unwrap(),
        ] {
            for r in [0.2, 0.5, 0.8] {
                let h = 1e-5;
                let fd = (w.tail1(r + h).unwrap() - w.tail1(r - h).unwrap()) / (2.0 * h);
                let rw = r * w.eval(r).unwrap();
                assert!((fd + rw).abs() <= 1e-7 * (1.0 + rw), "{w} r={r}");
            }
        }
    }

    #[test]
    fn power_tail_identity() {
        let w = RadialWeight::standard(0.0).unwrap();
        let nu = w.power_tail(1.0).unwrap();
        for r in [0.0, 0.3, 0.7] {
            let expect = ((1.0 - r * r) / 2.0f64).powi(2) / 2.0;
            assert!(close(nu.tail1(r).unwrap(), expect, 1e-14));
            assert!(close(nu.eval(r).unwrap(), (1.0 - r * r) / 2.0, 1e-14));
        }
        let half = RadialWeight::log(2.0).unwrap().power_tail(-0.5).unwrap();
        let expect = RadialWeight::log(2.0).unwrap().tail1(0.0).unwrap().powf(0.5) / 0.5;
        assert!(close(half.tail1(0.0).unwrap(), expect, 1e-14));
        assert!(w.power_tail(-1.0).is_err());
        assert_eq!(w.power_tail(0.0).unwrap(), w);
    }

    #[test]
    fn sigma_examples() {
        let p2 = ExponentPair::new(2.0).unwrap();
        let w = RadialWeight::log(2.0).unwrap();
        assert_eq!(sigma_weight(&w, &w, p2), w);
        let s = sigma_weight(&RadialWeight::standard(1.0).unwrap(), &RadialWeight::standard(0.0).unwrap(), p2);
        assert!(close(s.eval(0.4).unwrap(), (1.0f64 - 0.16).powi(2), 1e-14));
        let s = sigma_weight(&RadialWeight::standard(0.0).unwrap(), &RadialWeight::standard(3.0).unwrap(), p2);
        assert!(close(s.eval(0.4).unwrap(), (1.0f64 - 0.16).powi(-3), 1e-14));
        assert!(s.tail1(0.5).unwrap().is_infinite());
        assert!(!s.is_integrable());
    }

    #[test]
    fn generic_sigma_flags_zeros_of_nu() {
        let p = ExponentPair::new(2.0).unwrap();
        let omega = RadialWeight::standard(0.0).unwrap();
        let nu = RadialWeight::tabulated(vec![0.0, 0.4, 0.5, 0.6], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let s = sigma_weight(&omega, &nu, p);
        assert!(s.eval(0.45).unwrap().is_infinite());
        // common zero set convention
        let omega0 = RadialWeight::tabulated(vec![0.0, 0.4, 0.5, 0.6], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let s = sigma_weight(&omega0, &RadialWeight::product(vec![omega0.clone(), omega0.clone()]).unwrap(), p);
        assert_eq!(s.eval(0.45).unwrap(), 0.0);
    }

    #[test]
    fn table_tails_are_exact_for_linear_data() {
        // ω(r) = 1 on the table, linear decay after 0.5
        let w = RadialWeight::tabulated(vec![0.0, 0.25, 0.5], vec![1.0, 1.0, 1.0]).unwrap();
        assert!(close(w.tail(0.0).unwrap(), 0.5 + 0.25, 1e-15));
        // ∫_0^{0.5} s ds + ∫_0^{0.5} (1-τ)·2τ dτ
        let expect = 0.125 + (0.25 - 2.0 * 0.125 / 3.0);
        assert!(close(w.tail1(0.0).unwrap(), expect, 1e-14));
        assert!(close(w.eval(0.75).unwrap(), 0.5, 1e-15));
    }

    #[test]
    fn scaling_is_degree_one() {
        let w = RadialWeight::log(2.0).unwrap();
        let c = w.scaled(3.5).unwrap();
        assert!(close(c.tail1(0.4).unwrap(), 3.5 * w.tail1(0.4).unwrap(), 1e-15));
        assert!(close(c.moment(5.0).unwrap(), 3.5 * w.moment(5.0).unwrap(), 1e-12));
    }

    #[test]
    fn parser_round_trips_display() {
        for s in ["std:gamma=1.5", "log:alpha=2", "exp:c=1,k=2", "powtail:base=std:gamma=1,alpha=0.5"] {
            let w = parse_weight(s).unwrap();
            assert_eq!(w.to_string(), s);
        }
        let p = parse_weight("prod:std:gamma=1*log:alpha=2").unwrap();
        assert!(matches!(p.kind(), WeightKind::Product(v) if v.len() == 2));
        let nested = parse_weight("powtail:base=exp:c=1,k=1,alpha=0.25").unwrap();
        assert!(matches!(nested.kind(), WeightKind::PowerTail { alpha, .. } if *alpha == 0.25));
        assert!(parse_weight("std:beta=1").is_err());
        assert!(parse_weight("nonsense").is_err());
        assert!(parse_weight("std:gamma=-1").is_err());
    }
}
