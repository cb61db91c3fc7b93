use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use rwlab::bergman::{block_norm_equivalence, kernel_eval, project_mode_fn, CoefficientVector, KernelSeries};
use rwlab::classes::{class_grid, dcheck_search, dhat_profile};
use rwlab::harness::{emit, profile_csv, run_scenario, to_json, Format, Scenario};
use rwlab::muckenhoupt::{ap_profile_with, mp_profile_with};
use rwlab::operators::{opnorm_estimate, OpNormOptions, OperatorTag};
use rwlab::weight::Table;
use rwlab::{parse_weight, Error, ExponentPair, Grid, Result};

#[derive(Parser)]
#[command(name = "rwlab", version, about = "Radial weights, Bergman projections and averaging operators on the disc")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Json,
    Csv,
}

impl From<OutFormat> for Format {
    fn from(f: OutFormat) -> Format {
        match f {
            OutFormat::Json => Format::Json,
            OutFormat::Csv => Format::Csv,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ClassArg {
    Dhat,
    Dcheck,
}

#[derive(Subcommand)]
enum Cmd {
    /// Doubling-class diagnostics for one weight.
    Classes {
        #[arg(long)]
        weight: String,
        /// `1-<eps>` or a radius.
        #[arg(long, default_value = "1-1e-8")]
        grid_min: String,
        #[arg(long, value_enum, default_value = "dhat")]
        class: ClassArg,
        /// Candidate K values for the lower doubling search.
        #[arg(long, value_delimiter = ',', default_value = "2,4,16,64")]
        ks: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// The A_p condition profile.
    Ap(ProfileArgs),
    /// The M_p condition profile.
    Mp(ProfileArgs),
    /// Lower bound and heuristic estimate of an operator norm on L^p_nu.
    Opnorm {
        #[arg(long)]
        op: OperatorTag,
        #[arg(long)]
        omega: String,
        #[arg(long)]
        nu: String,
        #[arg(long)]
        p: f64,
        /// Number of grid nodes.
        #[arg(long, default_value_t = 49)]
        grid: usize,
        #[arg(long, default_value = "1-1e-6")]
        grid_min: String,
        #[arg(long, default_value_t = 0x5eed)]
        seed: u64,
        #[arg(long, value_enum, default_value = "json")]
        format: OutFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate the reproducing kernel at u = conj(z)·zeta.
    Kernel {
        #[arg(long)]
        weight: String,
        /// `a`, `a+bi`, `a-bi` or `a,b`.
        #[arg(long, allow_hyphen_values = true)]
        u: String,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Project g(|z|)e^{ik theta} onto analytic functions.
    Project {
        #[arg(long)]
        weight: String,
        #[arg(long, allow_hyphen_values = true)]
        mode: i64,
        /// `const:<v>`, `poly:<c0,c1,...>` or `table:<path.csv>`.
        #[arg(long)]
        g: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dyadic block norms against the A^p_nu norm, nu = omega·tail^alpha.
    Blocks {
        #[arg(long)]
        omega: String,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        alpha: f64,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long)]
        degree: usize,
        /// Use seeded random coefficients up to the degree instead of z^degree.
        #[arg(long)]
        random: bool,
        #[arg(long, default_value_t = 0x5eed)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a scenario file or a built-in scenario and write its report.
    Verify {
        /// Path to a TOML scenario, or `builtin:<name>`.
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "json")]
        format: OutFormat,
    },
}

#[derive(clap::Args)]
struct ProfileArgs {
    #[arg(long)]
    omega: String,
    #[arg(long)]
    nu: String,
    #[arg(long)]
    p: f64,
    #[arg(long, default_value = "1-1e-8")]
    grid_min: String,
    #[arg(long, default_value_t = 16)]
    nodes_per_decade: usize,
    #[arg(long, default_value_t = 3)]
    refinements: usize,
    #[arg(long, value_enum, default_value = "json")]
    format: OutFormat,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// `1-<eps>` gives the co-radius directly; anything else is a radius.
fn parse_grid_min(s: &str) -> Result<f64> {
    let bad = || Error::Parse(format!("grid minimum {s:?}: expected 1-<eps> or a radius"));
    let t = match s.strip_prefix("1-") {
        Some(eps) => eps.parse::<f64>().map_err(|_| bad())?,
        None => 1.0 - s.parse::<f64>().map_err(|_| bad())?,
    };
    if !(t > 0.0 && t < 1.0) {
        return Err(bad());
    }
    Ok(t)
}

fn parse_complex(s: &str) -> Result<Complex64> {
    let bad = || Error::Parse(format!("complex number {s:?}"));
    let s = s.trim();
    if let Some((a, b)) = s.split_once(',') {
        return Ok(Complex64::new(a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?));
    }
    s.parse::<Complex64>().map_err(|_| bad())
}

struct RadialProfile {
    f: Box<dyn Fn(f64) -> f64 + Sync>,
    at_one: f64,
}

fn parse_profile(spec: &str) -> Result<RadialProfile> {
    let bad = || Error::Parse(format!("profile spec {spec:?}"));
    let (kind, rest) = spec.split_once(':').ok_or_else(bad)?;
    match kind {
        "const" => {
            let v: f64 = rest.trim().parse().map_err(|_| bad())?;
            Ok(RadialProfile { f: Box::new(move |_| v), at_one: v })
        }
        "poly" => {
            let c: Vec<f64> = rest.split(',').map(|x| x.trim().parse()).collect::<std::result::Result<_, _>>().map_err(|_| bad())?;
            let at_one = c.iter().sum();
            Ok(RadialProfile { f: Box::new(move |r| c.iter().rev().fold(0.0, |acc, a| acc * r + a)), at_one })
        }
        "table" => {
            let t = Table::from_csv(Path::new(rest))?;
            let at_one = *t.values().last().unwrap();
            let (r, v) = (t.radii().to_vec(), t.values().to_vec());
            let grid = Grid::from_radii(&r)?;
            let prof = rwlab::Profile::new(grid, v)?;
            Ok(RadialProfile { f: Box::new(move |x| prof.eval(x)), at_one })
        }
        _ => Err(bad()),
    }
}

fn write_out(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

#[derive(Serialize)]
struct ModeProjection {
    weight: String,
    mode: i64,
    coefficient: f64,
}

fn profile_cmd(a: &ProfileArgs, which: &str) -> Result<bool> {
    let omega = parse_weight(&a.omega)?;
    let nu = parse_weight(&a.nu)?;
    let p = ExponentPair::new(a.p)?;
    let grid = Grid::graded(parse_grid_min(&a.grid_min)?, a.nodes_per_decade)?;
    let prof = if which == "ap" {
        ap_profile_with(&omega, &nu, p, &grid, a.refinements)?
    } else {
        mp_profile_with(&omega, &nu, p, &grid, a.refinements)?
    };
    let text = match a.format {
        OutFormat::Json => to_json(&prof)?,
        OutFormat::Csv => profile_csv(if which == "ap" { "A_p" } else { "M_p" }, &prof.radii, &prof.values)?,
    };
    write_out(&a.out, &text)?;
    Ok(true)
}

fn run(cmd: Cmd) -> Result<bool> {
    match cmd {
        Cmd::Classes { weight, grid_min, class, ks, out } => {
            let w = parse_weight(&weight)?;
            let grid = class_grid(parse_grid_min(&grid_min)?)?;
            let rep = match class {
                ClassArg::Dhat => dhat_profile(&w, &grid)?,
                ClassArg::Dcheck => dcheck_search(&w, &ks, &grid)?,
            };
            write_out(&out, &to_json(&rep)?)?;
            Ok(true)
        }
        Cmd::Ap(a) => profile_cmd(&a, "ap"),
        Cmd::Mp(a) => profile_cmd(&a, "mp"),
        Cmd::Opnorm { op, omega, nu, p, grid, grid_min, seed, format, out } => {
            let (w, v) = (parse_weight(&omega)?, parse_weight(&nu)?);
            let g = Grid::with_nodes(grid, parse_grid_min(&grid_min)?)?;
            let opts = OpNormOptions { seed, ..OpNormOptions::default() };
            let est = opnorm_estimate(op, &w, &v, ExponentPair::new(p)?, &g, &opts)?;
            let text = match format {
                OutFormat::Json => to_json(&est)?,
                OutFormat::Csv => profile_csv("witness", &est.witness.grid.radii(), &est.witness.values)?,
            };
            write_out(&out, &text)?;
            Ok(true)
        }
        Cmd::Kernel { weight, u, tol, out } => {
            let w = parse_weight(&weight)?;
            let v = kernel_eval(&KernelSeries::new(&w), parse_complex(&u)?, tol)?;
            write_out(&out, &to_json(&v)?)?;
            Ok(true)
        }
        Cmd::Project { weight, mode, g, out } => {
            let w = parse_weight(&weight)?;
            let prof = parse_profile(&g)?;
            let c = project_mode_fn(&w, &*prof.f, prof.at_one, mode)?;
            write_out(&out, &to_json(&ModeProjection { weight, mode, coefficient: c })?)?;
            Ok(true)
        }
        Cmd::Blocks { omega, alpha, p, degree, random, seed, out } => {
            let w = parse_weight(&omega)?;
            let nu = w.power_tail(alpha)?;
            let f = if random {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let c: Vec<Complex64> = (0..=degree)
                    .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                    .collect();
                CoefficientVector::new(c)
            } else {
                CoefficientVector::monomial(degree, Complex64::new(1.0, 0.0))
            };
            let r = block_norm_equivalence(&w, &nu, &f, p)?;
            write_out(&out, &to_json(&r)?)?;
            Ok(true)
        }
        Cmd::Verify { scenario, out, format } => {
            let sc = match scenario.strip_prefix("builtin:") {
                Some(name) => Scenario::builtin(name)?,
                None => Scenario::load(Path::new(&scenario))?,
            };
            let report = run_scenario(&sc)?;
            write_out(&out, &emit(&report, format.into())?)?;
            for c in report.failures() {
                eprintln!("FAIL {}: {}", c.name, c.note);
            }
            eprintln!(
                "{}: {} ({} checks)",
                report.scenario,
                if report.pass { "PASS" } else { "FAIL" },
                report.checks.len()
            );
            Ok(report.pass)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("rwlab: {e}");
            ExitCode::from(2)
        }
    }
}
