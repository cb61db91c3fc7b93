//! Scenario files, named checks and their reports.
//!
//! Reports are deterministic: everything random is seeded from the scenario
//! and sub-checks are merged in declaration order. Wall-clock time is left out
//! so that identical inputs give identical bytes.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::classes::{class_grid, dcheck_search, Membership};
use crate::error::{Error, Result};
use crate::grid::{Grid, GridMeta};
use crate::muckenhoupt::{ap_profile_with, mp_profile_with, ConstantProfile, Diagnosis};
use crate::operators::{
    chain_defects, default_family, opnorm_estimate, opnorm_lower, random_profile, Discretization, OpNormOptions,
    OperatorTag, DEFAULT_GAUSS_POINTS,
};
use crate::weight::{parse_weight, ExponentPair, RadialWeight};

/// Slack on `A_p ≤ ‖M‖` for the grid-limited extremal family.
pub const MAXIMAL_SLACK: f64 = 0.05;
/// Accepted range of `estimate / A_p`. A harness constant, not a sharp bound.
pub const COMPARABILITY_BAND: (f64, f64) = (0.25, 64.0);
const BAND_NOTE: &str =
    "comparability band [A_p/4, 64 A_p] is a harness acceptance constant, not a sharp-constant claim";

/// A float that serializes non-finite values as the strings `inf`, `-inf`, `nan`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Num(pub f64);

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let v = self.0;
        if v.is_finite() {
            s.serialize_f64(v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }
}

impl<'de> Deserialize<'de> for Num {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Num, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            F(f64),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::F(v) => Ok(Num(v)),
            Raw::S(s) => match s.as_str() {
                "inf" => Ok(Num(f64::INFINITY)),
                "-inf" => Ok(Num(f64::NEG_INFINITY)),
                "nan" => Ok(Num(f64::NAN)),
                _ => Err(serde::de::Error::custom(format!("bad number {s:?}"))),
            },
        }
    }
}

fn nums(v: &[f64]) -> Vec<Num> {
    v.iter().map(|x| Num(*x)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub value: Num,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected: Option<Num>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<Num>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<Num>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<Num>,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridMeta>,
}

impl CheckResult {
    fn flag(name: impl Into<String>, holds: bool, note: impl Into<String>) -> CheckResult {
        CheckResult {
            name: name.into(),
            value: Num(if holds { 1.0 } else { 0.0 }),
            expected: Some(Num(1.0)),
            tolerance: None,
            lower: None,
            upper: None,
            pass: holds,
            note: note.into(),
            grid: None,
        }
    }

    /// `|value - expected| ≤ tol·|expected|`.
    fn close(name: impl Into<String>, value: f64, expected: f64, tol: f64) -> CheckResult {
        let pass = (value - expected).abs() <= tol * expected.abs();
        CheckResult {
            name: name.into(),
            value: Num(value),
            expected: Some(Num(expected)),
            tolerance: Some(Num(tol)),
            lower: None,
            upper: None,
            pass,
            note: String::new(),
            grid: None,
        }
    }

    fn within(name: impl Into<String>, value: f64, lower: Option<f64>, upper: Option<f64>) -> CheckResult {
        let pass = value.is_finite() && lower.is_none_or(|l| value >= l) && upper.is_none_or(|u| value <= u);
        CheckResult {
            name: name.into(),
            value: Num(value),
            expected: None,
            tolerance: None,
            lower: lower.map(Num),
            upper: upper.map(Num),
            pass,
            note: String::new(),
            grid: None,
        }
    }

    fn noted(mut self, note: impl Into<String>) -> CheckResult {
        self.note = note.into();
        self
    }

    fn on(mut self, grid: GridMeta) -> CheckResult {
        self.grid = Some(grid);
        self
    }
}

/// Plot-ready data carried by a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub x_label: String,
    pub y_label: String,
    pub x: Vec<Num>,
    pub y: Vec<Num>,
}

impl Series {
    pub fn from_profile(name: impl Into<String>, y_label: &str, prof: &ConstantProfile) -> Series {
        Series {
            name: name.into(),
            x_label: "r".into(),
            y_label: y_label.into(),
            x: nums(&prof.radii),
            y: nums(&prof.values),
        }
    }
}

/// Numerical settings shared by every check of a scenario; enough to re-run it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    /// `1 - r` at the outermost node of the condition-profile grids.
    pub grid_min: f64,
    pub nodes_per_decade: usize,
    pub refinements: usize,
    /// Grid for operator-norm estimates.
    pub opnorm_grid_min: f64,
    pub opnorm_nodes_per_decade: usize,
    /// Random profiles used by the pointwise chain check.
    pub chain_profiles: usize,
    pub seed: u64,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            grid_min: 1e-8,
            nodes_per_decade: 16,
            refinements: 3,
            opnorm_grid_min: 1e-6,
            opnorm_nodes_per_decade: 8,
            chain_profiles: 1000,
            seed: 0x5eed,
        }
    }
}

impl Settings {
    fn profile_grid(&self) -> Result<Grid> {
        Grid::graded(self.grid_min, self.nodes_per_decade)
    }

    fn opnorm_grid(&self) -> Result<Grid> {
        Grid::graded(self.opnorm_grid_min, self.opnorm_nodes_per_decade)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub scenario: String,
    pub pass: bool,
    pub settings: Settings,
    pub checks: Vec<CheckResult>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub series: Vec<Series>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl Report {
    pub fn new(scenario: impl Into<String>, settings: Settings) -> Report {
        Report { scenario: scenario.into(), pass: false, settings, checks: Vec::new(), series: Vec::new(), notes: Vec::new() }
    }

    fn push(&mut self, c: CheckResult) {
        self.checks.push(c);
        self.update();
    }

    /// Appends another report's checks with `prefix/` on their names.
    pub fn absorb(&mut self, prefix: &str, other: Report) {
        for mut c in other.checks {
            c.name = format!("{prefix}/{}", c.name);
            self.checks.push(c);
        }
        self.series.extend(other.series);
        for n in other.notes {
            if !self.notes.contains(&n) {
                self.notes.push(n);
            }
        }
        self.update();
    }

    fn update(&mut self) {
        self.pass = !self.checks.is_empty() && self.checks.iter().all(|c| c.pass);
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

impl std::str::FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Format> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            _ => Err(Error::Config(format!("unknown format {s:?} (json|csv)"))),
        }
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn csv_err(e: impl fmt::Display) -> Error {
    Error::Io(e.to_string())
}

fn fmt_num(v: f64) -> String {
    format!("{}", Num(v))
}

impl fmt::Display for Num {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = self.0;
        if v.is_nan() {
            f.write_str("nan")
        } else if v.is_infinite() {
            f.write_str(if v > 0.0 { "inf" } else { "-inf" })
        } else {
            write!(f, "{v:e}")
        }
    }
}

/// Two columns `r,<label>`.
pub fn profile_csv(label: &str, radii: &[f64], values: &[f64]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["r", label]).map_err(csv_err)?;
    for (r, v) in radii.iter().zip(values) {
        w.write_record([fmt_num(*r), fmt_num(*v)]).map_err(csv_err)?;
    }
    String::from_utf8(w.into_inner().map_err(csv_err)?).map_err(csv_err)
}

/// One series gives two columns; several give `series,x,y` rows.
/// A report without series is written as its check table.
pub fn report_csv(report: &Report) -> Result<String> {
    if report.series.len() == 1 {
        let s = &report.series[0];
        let x: Vec<f64> = s.x.iter().map(|n| n.0).collect();
        let y: Vec<f64> = s.y.iter().map(|n| n.0).collect();
        return profile_csv(&s.y_label, &x, &y);
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    if report.series.is_empty() {
        w.write_record(["check", "value", "expected", "tolerance", "lower", "upper", "pass"]).map_err(csv_err)?;
        let opt = |o: Option<Num>| o.map(|n| n.to_string()).unwrap_or_default();
        for c in &report.checks {
            w.write_record([
                c.name.clone(),
                c.value.to_string(),
                opt(c.expected),
                opt(c.tolerance),
                opt(c.lower),
                opt(c.upper),
                c.pass.to_string(),
            ])
            .map_err(csv_err)?;
        }
    } else {
        w.write_record(["series", "x", "y"]).map_err(csv_err)?;
        for s in &report.series {
            for (x, y) in s.x.iter().zip(&s.y) {
                w.write_record([s.name.clone(), x.to_string(), y.to_string()]).map_err(csv_err)?;
            }
        }
    }
    String::from_utf8(w.into_inner().map_err(csv_err)?).map_err(csv_err)
}

pub fn emit(report: &Report, format: Format) -> Result<String> {
    match format {
        Format::Json => to_json(report),
        Format::Csv => report_csv(report),
    }
}

fn std_weight(g: f64) -> Result<RadialWeight> {
    RadialWeight::standard(g)
}

fn diag_name(d: Diagnosis) -> &'static str {
    match d {
        Diagnosis::Bounded => "bounded",
        Diagnosis::Diverging => "diverging",
        Diagnosis::Inconclusive => "inconclusive",
    }
}

/// `(γ+1)(β+1)^{-1/p}(γp' - βp'/p + 1)^{-1/p'}`, the constant of the
/// standard pair when it is finite.
pub fn standard_pair_constant(gamma: f64, beta: f64, p: ExponentPair) -> f64 {
    let d = gamma * p.p_conj - beta * p.p_conj / p.p + 1.0;
    if d <= 0.0 {
        return f64::INFINITY;
    }
    (gamma + 1.0) * (beta + 1.0).powf(-1.0 / p.p) * d.powf(-1.0 / p.p_conj)
}

/// Standard weights `(1-s²)^γ`, `(1-s²)^β`: the sign test `p(γ+1) > β+1`
/// against the `A_p` diagnosis, the constant when finite, and the
/// representation `ν = (2(γ+1))^α ω ŵ₁^α` with `α = (β-γ)/(γ+1)`.
pub fn verify_forelli_rudin(gamma: f64, beta: f64, p: f64, settings: &Settings) -> Result<Report> {
    if !(gamma > -1.0 && beta > -1.0) {
        return Err(Error::Parameter(format!("γ = {gamma}, β = {beta} must exceed -1")));
    }
    let pp = ExponentPair::new(p)?;
    let omega = std_weight(gamma)?;
    let nu = std_weight(beta)?;
    let grid = settings.profile_grid()?;
    let mut rep = Report::new(format!("forelli-rudin gamma={gamma} beta={beta} p={p}"), *settings);
    let sign = p * (gamma + 1.0) > beta + 1.0;
    let prof = ap_profile_with(&omega, &nu, pp, &grid, settings.refinements)?;
    let bounded = prof.diagnosis == Diagnosis::Bounded;
    let agree = prof.diagnosis != Diagnosis::Inconclusive && bounded == sign;
    rep.push(
        CheckResult::flag(
            "sign-matches-ap",
            agree,
            format!("p(γ+1) > β+1 is {sign}; A_p diagnosis {}", diag_name(prof.diagnosis)),
        )
        .on(prof.grid_meta.clone()),
    );
    if sign {
        rep.push(
            CheckResult::close("ap-constant", prof.sup_estimate, standard_pair_constant(gamma, beta, pp), 1e-6)
                .on(prof.grid_meta.clone()),
        );
    }
    let alpha = (beta - gamma) / (gamma + 1.0);
    let factor = (2.0 * (gamma + 1.0)).powf(alpha);
    let mut worst: f64 = 0.0;
    for &t in grid.co_radii() {
        let rep_value = factor * omega.density_co(t) * omega.tail1_co(t)?.powf(alpha);
        let target = nu.density_co(t);
        worst = worst.max((rep_value - target).abs() / target);
    }
    rep.push(
        CheckResult::within("power-tail-representation", worst, None, Some(1e-10))
            .noted(format!("alpha = {alpha}"))
            .on(grid.meta()),
    );
    Ok(rep)
}

/// `ω ≡ 1` against the log weight: not lower doubling, `M_p` bounded,
/// `A_p` diverging like a power of the logarithm.
pub fn counterexample_report(alpha: f64, p: f64, settings: &Settings) -> Result<Report> {
    if !(alpha > 1.0) {
        return Err(Error::Parameter(format!("alpha = {alpha} must exceed 1")));
    }
    let pp = ExponentPair::new(p)?;
    let omega = std_weight(0.0)?;
    let nu = RadialWeight::log(alpha)?;
    let grid = settings.profile_grid()?;
    let mut rep = Report::new(format!("counterexample alpha={alpha} p={p}"), *settings);

    let cg = class_grid(settings.grid_min)?;
    let dc = dcheck_search(&nu, &[2.0, 4.0, 16.0, 64.0], &cg)?;
    rep.push(
        CheckResult::flag("nu-not-lower-doubling", dc.verdict == Some(Membership::Fail), format!("{:?}", dc.verdict))
            .on(cg.meta()),
    );

    let mp = mp_profile_with(&omega, &nu, pp, &grid, settings.refinements)?;
    rep.push(
        CheckResult::flag("mp-bounded", mp.diagnosis == Diagnosis::Bounded, diag_name(mp.diagnosis))
            .on(mp.grid_meta.clone()),
    );
    let h = &mp.refinement_history;
    let change = if h.len() >= 2 { (h[h.len() - 1] - h[h.len() - 2]).abs() / h[h.len() - 2] } else { f64::NAN };
    rep.push(CheckResult::within("mp-refinement-change", change, None, Some(0.01)).on(mp.grid_meta.clone()));

    let ap = ap_profile_with(&omega, &nu, pp, &grid, settings.refinements)?;
    rep.push(
        CheckResult::flag("ap-diverging", ap.diagnosis == Diagnosis::Diverging, diag_name(ap.diagnosis))
            .on(ap.grid_meta.clone()),
    );
    let spread = log_ratio_spread(&ap, p);
    rep.push(
        CheckResult::within("ap-log-ratio-spread", spread, None, Some(0.10))
            .noted("relative spread of A_p(r)^p / log(e/(1-r²)) over the outermost band")
            .on(ap.grid_meta.clone()),
    );
    rep.series.push(Series::from_profile(format!("M_p alpha={alpha} p={p}"), "M_p", &mp));
    rep.series.push(Series::from_profile(format!("A_p alpha={alpha} p={p}"), "A_p", &ap));
    Ok(rep)
}

/// `(max - min)/min` of `A_p(r)^p / log(e/(1-r²))` over the last band,
/// i.e. co-radii between the finest two truncation levels.
pub fn log_ratio_spread(ap: &ConstantProfile, p: f64) -> f64 {
    let eps = *ap.co_radii.last().unwrap();
    let lo = ap.level_co_radii.iter().rev().nth(1).copied().unwrap_or(eps * 100.0);
    let ratios: Vec<f64> = ap
        .co_radii
        .iter()
        .zip(&ap.values)
        .filter(|(t, _)| **t <= lo * (1.0 + 1e-12))
        .map(|(&t, &v)| {
            let u = t * (2.0 - t);
            v.powf(p) / (1.0 - u.ln())
        })
        .collect();
    let max = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    if ratios.is_empty() || !(min > 0.0) {
        return f64::NAN;
    }
    (max - min) / min
}

/// Pointwise chain check on seeded random profiles; returns the worst
/// violation relative to the profile's scale.
pub fn chain_check(omega: &RadialWeight, grid: &Grid, profiles: usize, seed: u64) -> Result<f64> {
    let disc = Discretization::new(omega, grid, DEFAULT_GAUSS_POINTS)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fs: Vec<Vec<f64>> = (0..profiles).map(|_| disc.sample(&random_profile(disc.grid(), &mut rng))).collect();
    let worst = fs
        .par_iter()
        .map(|fv| {
            let d = chain_defects(&disc, fv);
            if d.scale > 0.0 {
                d.worst() / d.scale
            } else {
                d.worst().max(0.0)
            }
        })
        .collect::<Vec<f64>>()
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(worst)
}

/// `A_p` against estimates of `‖M‖`, `‖S‖` and `‖H + H*‖` on `L^p_ν`.
pub fn verify_calderon(omega_spec: &str, nu_spec: &str, p: f64, settings: &Settings) -> Result<Report> {
    let omega = parse_weight(omega_spec)?;
    let nu = parse_weight(nu_spec)?;
    let pp = ExponentPair::new(p)?;
    let mut rep = Report::new(format!("calderon omega={omega_spec} nu={nu_spec} p={p}"), *settings);
    let grid = settings.profile_grid()?;
    let ap = ap_profile_with(&omega, &nu, pp, &grid, settings.refinements)?;
    let og = settings.opnorm_grid()?;
    let opts = OpNormOptions { seed: settings.seed, ..OpNormOptions::default() };

    let chains = chain_check(&omega, &og, settings.chain_profiles, settings.seed)?;
    rep.push(
        CheckResult::within("pointwise-chains", chains, None, Some(1e-8))
            .noted("M ≤ 2S and (H+H*)/2 ≤ S ≤ H+H* at every node, relative to scale")
            .on(og.meta()),
    );

    match ap.diagnosis {
        Diagnosis::Bounded => {
            let a = ap.sup_estimate;
            rep.notes.push(BAND_NOTE.into());
            let ops = [OperatorTag::Maximal, OperatorTag::Stieltjes, OperatorTag::Calderon];
            let ests = ops
                .par_iter()
                .map(|&op| opnorm_estimate(op, &omega, &nu, pp, &og, &opts))
                .collect::<Result<Vec<_>>>()?;
            rep.push(
                CheckResult::within("ap-below-maximal", a, None, Some(ests[0].lower_bound * (1.0 + MAXIMAL_SLACK)))
                    .noted(format!("lower bound for the maximal operator {:e}", ests[0].lower_bound))
                    .on(ap.grid_meta.clone()),
            );
            for e in &ests {
                let (lo, hi) = COMPARABILITY_BAND;
                rep.push(
                    CheckResult::within(format!("band/{}", e.op.name()), e.heuristic_estimate, Some(lo * a), Some(hi * a))
                        .noted(format!("lower bound {:e}", e.lower_bound))
                        .on(e.grid_meta.clone()),
                );
                let coarse = e.coarse_heuristic.unwrap_or(f64::NAN);
                let change = (e.heuristic_estimate - coarse).abs() / coarse;
                rep.push(
                    CheckResult::within(format!("refinement/{}", e.op.name()), change, None, Some(0.02))
                        .on(e.grid_meta.clone()),
                );
            }
        }
        Diagnosis::Diverging => {
            let depths = [1e-4, 1e-6, 1e-8];
            let lowers = depths
                .par_iter()
                .map(|&t| {
                    let g = Grid::graded(t, settings.opnorm_nodes_per_decade)?;
                    let fam = default_family(&omega, &nu, pp, &g, &opts);
                    opnorm_lower(OperatorTag::Maximal, &omega, &nu, pp, &g, &fam).map(|(v, _)| v)
                })
                .collect::<Result<Vec<f64>>>()?;
            let growing = lowers.windows(2).all(|w| w[1] > w[0] * 1.01);
            rep.push(
                CheckResult::flag(
                    "maximal-lower-bounds-grow",
                    growing,
                    format!("lower bounds {:?} at outer co-radii {:?}", lowers, depths),
                )
                .on(og.meta()),
            );
        }
        Diagnosis::Inconclusive => {
            rep.push(CheckResult::flag("ap-diagnosis", false, "A_p diagnosis inconclusive").on(ap.grid_meta.clone()));
        }
    }
    Ok(rep)
}

/// The check names understood by scenarios.
pub const CHECKS: &[&str] = &[
    "forelli-rudin",
    "forelli-rudin-grid",
    "counterexample",
    "calderon",
    "ap-bounded",
    "ap-diverging",
    "mp-bounded",
    "mp-diverging",
];

pub const GRID_GAMMAS: [f64; 4] = [-0.5, 0.0, 1.0, 2.0];
pub const GRID_PS: [f64; 3] = [1.5, 2.0, 3.0];

/// A scenario file: a flat table of weights, exponents, grid settings,
/// seed and the checks to run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub omega: Option<String>,
    #[serde(default)]
    pub nu: Option<String>,
    #[serde(default = "default_ps")]
    pub p: Vec<f64>,
    #[serde(default)]
    pub gamma: Vec<f64>,
    #[serde(default)]
    pub beta: Vec<f64>,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub grid_min: Option<f64>,
    #[serde(default)]
    pub nodes_per_decade: Option<usize>,
    #[serde(default)]
    pub refinements: Option<usize>,
    #[serde(default)]
    pub opnorm_grid_min: Option<f64>,
    #[serde(default)]
    pub opnorm_nodes_per_decade: Option<usize>,
    #[serde(default)]
    pub chain_profiles: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    pub checks: Vec<String>,
}

fn default_ps() -> Vec<f64> {
    vec![2.0]
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Scenario> {
        let s: Scenario = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Scenario> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    /// Built-in scenarios by name.
    pub fn builtin(name: &str) -> Result<Scenario> {
        let base = Scenario {
            name: name.into(),
            omega: None,
            nu: None,
            p: default_ps(),
            gamma: Vec::new(),
            beta: Vec::new(),
            alpha: None,
            grid_min: None,
            nodes_per_decade: None,
            refinements: None,
            opnorm_grid_min: None,
            opnorm_nodes_per_decade: None,
            chain_profiles: None,
            seed: None,
            checks: Vec::new(),
        };
        let s = match name {
            "forelli-rudin-grid" => Scenario { checks: vec!["forelli-rudin-grid".into()], ..base },
            "counterexample" => Scenario { alpha: Some(2.0), checks: vec!["counterexample".into()], ..base },
            "calderon-standard" => Scenario {
                omega: Some("std:gamma=1".into()),
                nu: Some("std:gamma=0".into()),
                checks: vec!["calderon".into()],
                ..base
            },
            _ => return Err(Error::Config(format!("no built-in scenario {name:?}"))),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn settings(&self) -> Settings {
        let d = Settings::default();
        Settings {
            grid_min: self.grid_min.unwrap_or(d.grid_min),
            nodes_per_decade: self.nodes_per_decade.unwrap_or(d.nodes_per_decade),
            refinements: self.refinements.unwrap_or(d.refinements),
            opnorm_grid_min: self.opnorm_grid_min.unwrap_or(d.opnorm_grid_min),
            opnorm_nodes_per_decade: self.opnorm_nodes_per_decade.unwrap_or(d.opnorm_nodes_per_decade),
            chain_profiles: self.chain_profiles.unwrap_or(d.chain_profiles),
            seed: self.seed.unwrap_or(d.seed),
        }
    }

    /// Rejects unknown checks, unparsable weights and `p ≤ 1` before any
    /// computation.
    pub fn validate(&self) -> Result<()> {
        if self.checks.is_empty() {
            return Err(Error::Config("scenario lists no checks".into()));
        }
        for c in &self.checks {
            if !CHECKS.contains(&c.as_str()) {
                return Err(Error::Config(format!("unknown check {c:?}; known: {}", CHECKS.join(", "))));
            }
        }
        for spec in self.omega.iter().chain(self.nu.iter()) {
            parse_weight(spec)?;
        }
        for &p in &self.p {
            if !(p > 1.0 && p.is_finite()) {
                return Err(Error::Config(format!("exponent p = {p} must exceed 1")));
            }
        }
        let s = self.settings();
        if !(s.grid_min > 0.0 && s.grid_min < 1.0 && s.opnorm_grid_min > 0.0 && s.opnorm_grid_min < 1.0) {
            return Err(Error::Config("grid co-radii must lie in (0,1)".into()));
        }
        for c in &self.checks {
            match c.as_str() {
                "forelli-rudin" if self.gamma.is_empty() || self.beta.is_empty() => {
                    return Err(Error::Config("forelli-rudin needs gamma and beta lists".into()));
                }
                "counterexample" if !self.alpha.is_some_and(|a| a > 1.0) => {
                    return Err(Error::Config("counterexample needs alpha > 1".into()));
                }
                "calderon" | "ap-bounded" | "ap-diverging" | "mp-bounded" | "mp-diverging"
                    if self.omega.is_none() || self.nu.is_none() =>
                {
                    return Err(Error::Config(format!("{c} needs omega and nu")));
                }
                _ => {}
            }
        }
        Ok(())
    }
}

enum Task {
    ForelliRudin(f64, f64, f64),
    Counterexample(f64, f64),
    Calderon(String, String, f64),
    Profile { check: String, omega: String, nu: String, p: f64 },
}

impl Task {
    fn label(&self) -> String {
        match self {
            Task::ForelliRudin(g, b, p) => format!("forelli-rudin[gamma={g},beta={b},p={p}]"),
            Task::Counterexample(a, p) => format!("counterexample[alpha={a},p={p}]"),
            Task::Calderon(o, n, p) => format!("calderon[omega={o},nu={n},p={p}]"),
            Task::Profile { check, p, .. } => format!("{check}[p={p}]"),
        }
    }

    fn run(&self, s: &Settings) -> Result<Report> {
        match self {
            Task::ForelliRudin(g, b, p) => verify_forelli_rudin(*g, *b, *p, s),
            Task::Counterexample(a, p) => counterexample_report(*a, *p, s),
            Task::Calderon(o, n, p) => verify_calderon(o, n, *p, s),
            Task::Profile { check, omega, nu, p } => profile_check(check, omega, nu, *p, s),
        }
    }
}

fn profile_check(check: &str, omega: &str, nu: &str, p: f64, s: &Settings) -> Result<Report> {
    let (w, v) = (parse_weight(omega)?, parse_weight(nu)?);
    let pp = ExponentPair::new(p)?;
    let grid = s.profile_grid()?;
    let (kind, want) = check.split_once('-').unwrap();
    let prof = if kind == "ap" {
        ap_profile_with(&w, &v, pp, &grid, s.refinements)?
    } else {
        mp_profile_with(&w, &v, pp, &grid, s.refinements)?
    };
    let mut rep = Report::new(check, *s);
    rep.push(
        CheckResult::flag("diagnosis", diag_name(prof.diagnosis) == want, diag_name(prof.diagnosis))
            .on(prof.grid_meta.clone()),
    );
    let label = if kind == "ap" { "A_p" } else { "M_p" };
    rep.series.push(Series::from_profile(format!("{label} omega={omega} nu={nu} p={p}"), label, &prof));
    Ok(rep)
}

/// Runs every check of a validated scenario. Sub-checks run in parallel and
/// are merged in declaration order.
pub fn run_scenario(sc: &Scenario) -> Result<Report> {
    sc.validate()?;
    let settings = sc.settings();
    let mut tasks = Vec::new();
    for c in &sc.checks {
        match c.as_str() {
            "forelli-rudin" => {
                for &p in &sc.p {
                    for &g in &sc.gamma {
                        for &b in &sc.beta {
                            tasks.push(Task::ForelliRudin(g, b, p));
                        }
                    }
                }
            }
            "forelli-rudin-grid" => {
                for p in GRID_PS {
                    for g in GRID_GAMMAS {
                        for b in GRID_GAMMAS {
                            tasks.push(Task::ForelliRudin(g, b, p));
                        }
                    }
                }
            }
            "counterexample" => {
                for &p in &sc.p {
                    tasks.push(Task::Counterexample(sc.alpha.unwrap(), p));
                }
            }
            "calderon" => {
                for &p in &sc.p {
                    tasks.push(Task::Calderon(sc.omega.clone().unwrap(), sc.nu.clone().unwrap(), p));
                }
            }
            other => {
                for &p in &sc.p {
                    tasks.push(Task::Profile {
                        check: other.to_string(),
                        omega: sc.omega.clone().unwrap(),
                        nu: sc.nu.clone().unwrap(),
                        p,
                    });
                }
            }
        }
    }
    let parts = tasks.par_iter().map(|t| t.run(&settings)).collect::<Vec<Result<Report>>>();
    let mut report = Report::new(sc.name.clone(), settings);
    for (t, part) in tasks.iter().zip(parts) {
        match part {
            Ok(r) => report.absorb(&t.label(), r),
            Err(e) => report.push(CheckResult::flag(t.label(), false, format!("error: {e}"))),
        }
    }
    Ok(report)
}

/// Count of checks grouped by their leading task label.
pub fn summary(report: &Report) -> BTreeMap<String, (usize, usize)> {
    let mut m = BTreeMap::new();
    for c in &report.checks {
        let key = c.name.split('/').next().unwrap_or(&c.name).to_string();
        let e = m.entry(key).or_insert((0, 0));
        e.0 += c.pass as usize;
        e.1 += 1;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forelli_rudin_examples() {
        let s = Settings::default();
        let r = verify_forelli_rudin(0.0, 0.0, 2.0, &s).unwrap();
        assert!(r.pass, "{r:?}");
        let c = r.checks.iter().find(|c| c.name == "ap-constant").unwrap();
        assert!((c.value.0 - 1.0).abs() < 1e-12);
        let r = verify_forelli_rudin(1.0, 0.0, 2.0, &s).unwrap();
        assert!(r.pass);
        let c = r.checks.iter().find(|c| c.name == "ap-constant").unwrap();
        assert!((c.value.0 - 2.0 / 3f64.sqrt()).abs() < 1e-9);
        let r = verify_forelli_rudin(0.0, 3.0, 2.0, &s).unwrap();
        assert!(r.pass);
        assert!(!r.checks.iter().any(|c| c.name == "ap-constant"));
        assert!(verify_forelli_rudin(-1.0, 0.0, 2.0, &s).is_err());
    }

    #[test]
    fn non_finite_numbers_are_strings() {
        let v = serde_json::to_string(&vec![Num(1.5), Num(f64::INFINITY), Num(f64::NAN)]).unwrap();
        assert_eq!(v, r#"[1.5,"inf","nan"]"#);
        let back: Vec<Num> = serde_json::from_str(&v).unwrap();
        assert!(back[1].0.is_infinite() && back[2].0.is_nan());
    }

    #[test]
    fn unknown_check_is_a_config_error() {
        let text = "name = \"x\"\nchecks = [\"forelli-rudin-grid\", \"nope\"]\n";
        assert!(matches!(Scenario::from_toml(text), Err(Error::Config(_))));
        let text = "name = \"x\"\np = [0.5]\nchecks = [\"forelli-rudin-grid\"]\n";
        assert!(matches!(Scenario::from_toml(text), Err(Error::Config(_))));
        let text = "name = \"x\"\nomega = \"std:gamma=-2\"\nnu = \"std:gamma=0\"\nchecks = [\"calderon\"]\n";
        assert!(Scenario::from_toml(text).is_err());
    }

    #[test]
    fn csv_profile_has_two_columns() {
        let text = "name = \"ap\"\nomega = \"std:gamma=1\"\nnu = \"std:gamma=0\"\nchecks = [\"ap-bounded\"]\n";
        let r = run_scenario(&Scenario::from_toml(text).unwrap()).unwrap();
        assert!(r.pass);
        let csv = report_csv(&r).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "r,A_p");
        assert!(lines.all(|l| l.split(',').count() == 2));
    }
}
