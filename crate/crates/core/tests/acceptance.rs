//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rwlab::bergman::{adjoint_monomial, block_equivalence_with, decomposition_covering, CoefficientVector, KernelSeries};
use rwlab::harness::{chain_check, counterexample_report, verify_calderon, verify_forelli_rudin, Report, Settings};
use rwlab::operators::{
    level_points, random_increasing_profile, random_profile, weak_type_on, Discretization, DEFAULT_GAUSS_POINTS,
};
use rwlab::{parse_weight, ExponentPair, Grid, RadialWeight};

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn std_w(g: f64) -> RadialWeight {
    RadialWeight::standard(g).unwrap()
}

fn check<'a>(r: &'a Report, suffix: &str) -> Option<&'a rwlab::harness::CheckResult> {
    r.checks.iter().find(|c| c.name == suffix || c.name.ends_with(&format!("/{suffix}")))
}

fn kernel_closed_form() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for gamma in [0.0, 1.0, 2.5] {
        let k = KernelSeries::new(&std_w(gamma));
        for j in 0..200 {
            let u = 0.9 * j as f64 / 199.0;
            let v = match k.eval(Complex64::new(u, 0.0), 1e-12) {
                Ok(v) => v,
                Err(e) => return outcome(false, format!("gamma={gamma} u={u}: {e}")),
            };
            let exact = (gamma + 1.0) * (1.0 - u).powf(-(2.0 + gamma));
            worst = worst.max((v.re - exact).abs() / exact).max(v.im.abs() / exact);
        }
    }
    let t = start.elapsed();
    outcome(worst <= 1e-10 && t < Duration::from_secs(5), format!("max rel err {worst:.2e}, {:.2}s", t.as_secs_f64()))
}

fn forelli_rudin_grid() -> Outcome {
    let start = Instant::now();
    let s = Settings::default();
    let grid = [-0.5, 0.0, 1.0, 2.0];
    let (mut mismatches, mut worst, mut cases) = (0, 0.0f64, 0);
    for p in [1.5, 2.0, 3.0] {
        let pc = p / (p - 1.0);
        for gamma in grid {
            for beta in grid {
                cases += 1;
                let rep = match verify_forelli_rudin(gamma, beta, p, &s) {
                    Ok(r) => r,
                    Err(_) => {
                        mismatches += 1;
                        continue;
                    }
                };
                let bounded = p * (gamma + 1.0) > beta + 1.0;
                let note = &check(&rep, "sign-matches-ap").unwrap().note;
                let diag_bounded = note.ends_with("bounded");
                if diag_bounded != bounded {
                    mismatches += 1;
                }
                if bounded {
                    let expected = (gamma + 1.0)
                        * (beta + 1.0).powf(-1.0 / p)
                        * (gamma * pc - beta * pc / p + 1.0).powf(-1.0 / pc);
                    let got = check(&rep, "ap-constant").unwrap().value.0;
                    worst = worst.max((got - expected).abs() / expected);
                }
            }
        }
    }
    let t = start.elapsed();
    outcome(
        cases == 48 && mismatches == 0 && worst <= 1e-6 && t < Duration::from_secs(30),
        format!("{cases} cases, {mismatches} mismatches, constant rel err {worst:.2e}, {:.2}s", t.as_secs_f64()),
    )
}

fn counterexample() -> Outcome {
    let start = Instant::now();
    let s = Settings { grid_min: 1e-8, ..Settings::default() };
    let rep = match counterexample_report(2.0, 2.0, &s) {
        Ok(r) => r,
        Err(e) => return outcome(false, e.to_string()),
    };
    let change = check(&rep, "mp-refinement-change").unwrap().value.0;
    let diverging = check(&rep, "ap-diverging").unwrap().pass;
    let spread = check(&rep, "ap-log-ratio-spread").unwrap().value.0;
    let reach = check(&rep, "ap-diverging").unwrap().grid.as_ref().unwrap().co_radius_min;
    let t = start.elapsed();
    outcome(
        change < 0.01 && diverging && spread < 0.10 && reach <= 1e-8 && t < Duration::from_secs(30),
        format!(
            "M_2 change {change:.2e}, A_2 diverging {diverging}, log-ratio spread {spread:.3}, reach {reach:e}, {:.2}s",
            t.as_secs_f64()
        ),
    )
}

fn weak_type() -> Outcome {
    let grid = Grid::graded(1e-8, 12).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut failures, mut worst, mut nonempty) = (0, 0.0f64, 0);
    for gamma in [0.0, 1.0] {
        let disc = Discretization::new(&std_w(gamma), &grid, DEFAULT_GAUSS_POINTS).unwrap();
        for _ in 0..500 {
            let f = random_profile(&grid, &mut rng);
            let fv = disc.sample(&f);
            let h = disc.h_values(&fv);
            let lambda = h[rng.random_range(0..h.len())].max(1e-300) * rng.random_range(0.25..1.5);
            let r = weak_type_on(&disc, &f, lambda).unwrap();
            nonempty += r.b.is_some() as usize;
            if r.bound > 0.0 {
                worst = worst.max(r.level_measure / r.bound);
            }
            if r.level_measure > r.bound * (1.0 + 1e-9) || r.level_measure.is_nan() {
                failures += 1;
            }
        }
    }
    outcome(failures == 0, format!("1000 pairs, {nonempty} nonempty level sets, {failures} violations, max ratio {worst:.6}"))
}

fn level_sets() -> Outcome {
    let grid = Grid::graded(1e-8, 12).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut bk1, mut bk2, mut pairs, mut errors) = (0.0f64, 0.0f64, 0, 0);
    for i in 0..100 {
        let w = std_w(if i % 2 == 0 { 0.0 } else { 1.0 });
        let f = random_increasing_profile(&grid, &mut rng);
        match level_points(&w, &f, -40, 200) {
            Ok(lp) => {
                pairs += lp.bk1_ratios.len();
                bk1 = lp.bk1_ratios.iter().cloned().fold(bk1, f64::max);
                bk2 = lp.bk2_factors.iter().cloned().fold(bk2, f64::max);
            }
            Err(_) => errors += 1,
        }
    }
    outcome(
        errors == 0 && pairs > 0 && bk1 <= 0.5 + 1e-6 && bk2 <= 2.0 + 1e-6,
        format!("{pairs} consecutive levels, max tail ratio {bk1:.9}, max factor {bk2:.9}, {errors} errors"),
    )
}

fn chains() -> Outcome {
    let grid = Grid::graded(1e-8, 8).unwrap();
    let specs = ["std:gamma=0", "std:gamma=1", "log:alpha=2", "exp:c=1,k=1"];
    let mut worst = f64::NEG_INFINITY;
    for (i, s) in specs.iter().enumerate() {
        match chain_check(&parse_weight(s).unwrap(), &grid, 1000, 60 + i as u64) {
            Ok(v) => worst = worst.max(v),
            Err(e) => return outcome(false, format!("{s}: {e}")),
        }
    }
    outcome(worst <= 1e-8, format!("4 weights x 1000 profiles, worst violation/scale {worst:.2e}"))
}

fn calderon() -> Outcome {
    let pairs = [
        ("std:gamma=0", "std:gamma=0", 2.0),
        ("std:gamma=1", "std:gamma=0", 2.0),
        ("std:gamma=0", "std:gamma=0.5", 2.0),
        ("std:gamma=1", "std:gamma=1", 3.0),
        ("std:gamma=0", "std:gamma=0", 1.5),
        ("log:alpha=2", "log:alpha=2", 2.0),
        ("std:gamma=0", "powtail:base=std:gamma=0,alpha=0.5", 2.0),
    ];
    let s = Settings::default();
    let (mut bounded, mut good) = (0, 0);
    let mut bad = Vec::new();
    for (o, n, p) in pairs {
        let rep = match verify_calderon(o, n, p, &s) {
            Ok(r) => r,
            Err(e) => {
                bad.push(format!("{o},{n},{p}: {e}"));
                continue;
            }
        };
        if check(&rep, "ap-below-maximal").is_none() {
            continue;
        }
        bounded += 1;
        let relevant = rep.checks.iter().filter(|c| {
            c.name == "ap-below-maximal" || c.name.starts_with("band/") || c.name.starts_with("refinement/")
        });
        let fails: Vec<&str> = relevant.filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
        if fails.is_empty() {
            good += 1;
        } else {
            bad.push(format!("{o},{n},{p}: {}", fails.join(" ")));
        }
    }
    outcome(
        bounded >= 6 && good == bounded,
        format!("{good}/{bounded} bounded pairs within band and stable{}", if bad.is_empty() { String::new() } else { format!("; {}", bad.join("; ")) }),
    )
}

fn blocks() -> Outcome {
    let start = Instant::now();
    let w = std_w(0.0);
    let d = decomposition_covering(&w, 4096).unwrap();
    let (mut lo, mut hi, mut norm_err) = (f64::INFINITY, 0.0f64, 0.0f64);
    for k in 0..=4096usize {
        let f = CoefficientVector::monomial(k, Complex64::new(1.0, 0.0));
        let r = block_equivalence_with(&d, &w, &f, 2.0).unwrap();
        // ‖z^k‖² in the unweighted Bergman space is 1/(k+1)
        norm_err = norm_err.max((r.norm_p * (k as f64 + 1.0) - 1.0).abs());
        lo = lo.min(r.ratio);
        hi = hi.max(r.ratio);
    }
    let mono_ok = lo >= 0.125 && hi <= 8.0 && norm_err < 1e-10;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut plo, mut phi) = (f64::INFINITY, 0.0f64);
    for _ in 0..50 {
        let deg = rng.random_range(0..=1024usize);
        let c: Vec<Complex64> =
            (0..=deg).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        let r = block_equivalence_with(&d, &w, &CoefficientVector::new(c), 2.0).unwrap();
        plo = plo.min(r.ratio);
        phi = phi.max(r.ratio);
    }
    let t = start.elapsed();
    outcome(
        mono_ok && phi / plo <= 64.0 && t < Duration::from_secs(60),
        format!(
            "monomials ratio in [{lo:.4}, {hi:.4}], random band width {:.3}, {:.2}s",
            phi / plo,
            t.as_secs_f64()
        ),
    )
}

fn adjoint() -> Outcome {
    let pairs = [
        ("std:gamma=1", "std:gamma=0", 2.0),
        ("std:gamma=0", "std:gamma=0.5", 3.0),
        ("std:gamma=2", "powtail:base=std:gamma=2,alpha=0.3", 1.5),
        ("std:gamma=0", "log:alpha=2", 2.0),
    ];
    let (mut worst, mut oracle) = (0.0f64, 0.0f64);
    for (o, n, p) in pairs {
        let (w, v) = (parse_weight(o).unwrap(), parse_weight(n).unwrap());
        let pp = ExponentPair::new(p).unwrap();
        for k in 0..=64usize {
            let r = match adjoint_monomial(&w, &v, k, pp) {
                Ok(r) if !r.divergent => r,
                Ok(_) => return outcome(false, format!("{o},{n}: divergent at n={k}")),
                Err(e) => return outcome(false, format!("{o},{n},n={k}: {e}")),
            };
            worst = worst.max(r.relative_difference);
            if o == "std:gamma=1" {
                // 2(n+2)/((n+1)(n+3)) in closed form
                let kf = k as f64;
                let exact = 2.0 * (kf + 2.0) / ((kf + 1.0) * (kf + 3.0));
                oracle = oracle.max((r.norm_identity.powi(2) - exact).abs() / exact);
            }
        }
    }
    outcome(worst <= 1e-8 && oracle <= 1e-10, format!("max rel diff {worst:.2e}, closed-form err {oracle:.2e}"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("kernel closed form", kernel_closed_form),
        ("Forelli-Rudin grid", forelli_rudin_grid),
        ("log-weight counterexample", counterexample),
        ("weak type", weak_type),
        ("level sets", level_sets),
        ("pointwise chains", chains),
        ("Calderon comparability", calderon),
        ("block equivalence", blocks),
        ("adjoint identity", adjoint),
    ];
    let mut all = true;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let o = f();
        all &= o.pass;
        println!("criterion {} {name}: {} ({})", i + 1, if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
