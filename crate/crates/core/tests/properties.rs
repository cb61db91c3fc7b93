use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rwlab::bergman::{bergman_norm_p, hardy_block_norms, i_omega, CoefficientVector, KernelSeries};
use rwlab::classes::rho_sequence;
use rwlab::harness::{emit, run_scenario, Format, Scenario};
use rwlab::muckenhoupt::{ap_duality_check, ap_value_co};
use rwlab::operators::{chain_defects, random_profile, weak_type_on, Discretization, DEFAULT_GAUSS_POINTS};
use rwlab::{parse_weight, sigma_weight, ExponentPair, Grid, Profile, RadialWeight};

/// Tail of `s ω(s)` by composite Gauss–Legendre on geometric cells in `1 - s`.
fn tail1_oracle(w: &RadialWeight, t: f64) -> f64 {
    let (x, wt) = ([-0.906_179_845_938_664, -0.538_469_310_105_683, 0.0, 0.538_469_310_105_683, 0.906_179_845_938_664],
        [0.236_926_885_056_189, 0.478_628_670_499_366, 0.568_888_888_888_889, 0.478_628_670_499_366, 0.236_926_885_056_189]);
    let mut sum = 0.0;
    let mut hi = t;
    while hi > 1e-300 {
        let lo = hi * 0.9;
        let (m, h) = (0.5 * (hi + lo), 0.5 * (hi - lo));
        let cell: f64 = x.iter().zip(&wt).map(|(xi, wi)| {
            let u = m + h * xi;
            wi * (1.0 - u) * w.density_co(u)
        }).sum::<f64>() * h;
        sum += cell;
        if cell <= 1e-17 * sum {
            break;
        }
        hi = lo;
    }
    sum
}

fn weight_strategy() -> impl Strategy<Value = String> {
    prop_oneof![
        (-0.9f64..4.0).prop_map(|g| format!("std:gamma={g}")),
        (1.1f64..4.0).prop_map(|a| format!("log:alpha={a}")),
        ((-0.5f64..2.0), (0.0f64..1.5)).prop_map(|(g, a)| format!("powtail:base=std:gamma={g},alpha={a}")),
        ((-0.5f64..1.0), (0.0f64..1.0)).prop_map(|(g, b)| format!("prod:std:gamma={g}*std:gamma={b}")),
    ]
}

/// Weights whose tails decay at least like a power of `1 - r`, so that a
/// truncated quadrature is an adequate oracle.
fn algebraic_strategy() -> impl Strategy<Value = String> {
    prop_oneof![
        (-0.9f64..4.0).prop_map(|g| format!("std:gamma={g}")),
        ((-0.5f64..2.0), (0.0f64..1.5)).prop_map(|(g, a)| format!("powtail:base=std:gamma={g},alpha={a}")),
        ((-0.5f64..1.0), (0.0f64..1.0)).prop_map(|(g, b)| format!("prod:std:gamma={g}*std:gamma={b}")),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn spec_strings_round_trip(spec in weight_strategy()) {
        let w = parse_weight(&spec).unwrap();
        let again = parse_weight(&w.to_string()).unwrap();
        for t in [0.9, 0.3, 1e-3, 1e-7] {
            let (a, b) = (w.density_co(t), again.density_co(t));
            prop_assert!((a - b).abs() <= 1e-14 * a.abs());
        }
    }

    #[test]
    fn tails_match_independent_quadrature(spec in algebraic_strategy(), e in 0.5f64..7.0) {
        let w = parse_weight(&spec).unwrap();
        let t = 10f64.powf(-e);
        let got = w.tail1_co(t).unwrap();
        let want = tail1_oracle(&w, t);
        prop_assert!((got - want).abs() <= 1e-8 * want, "{spec} t={t}: {got} vs {want}");
    }

    #[test]
    fn tails_decrease_toward_the_boundary(spec in weight_strategy()) {
        let w = parse_weight(&spec).unwrap();
        let mut prev = f64::INFINITY;
        for k in 0..40 {
            let t = 0.8f64.powi(k);
            let v = w.tail1_co(t).unwrap();
            prop_assert!(v > 0.0 && v <= prev * (1.0 + 1e-14));
            prop_assert!(v <= w.tail_co(t).unwrap() * (1.0 + 1e-12));
            prev = v;
        }
    }

    #[test]
    fn odd_moments_are_log_convex(spec in weight_strategy()) {
        let w = parse_weight(&spec).unwrap();
        let m = w.odd_moments(64).unwrap();
        for k in 1..63 {
            prop_assert!(m[k] < m[k - 1]);
            prop_assert!(m[k] * m[k] <= m[k - 1] * m[k + 1] * (1.0 + 1e-10));
        }
    }

    #[test]
    fn sigma_density_matches_definition(g in -0.5f64..2.0, b in -0.5f64..2.0, p in 1.2f64..4.0) {
        let (w, v) = (RadialWeight::standard(g).unwrap(), RadialWeight::standard(b).unwrap());
        let pp = ExponentPair::new(p).unwrap();
        let s = sigma_weight(&w, &v, pp);
        for t in [0.7, 0.1, 1e-4] {
            let want = (w.density_co(t) / v.density_co(t).powf(1.0 / p)).powf(pp.p_conj);
            prop_assert!((s.density_co(t) - want).abs() <= 1e-12 * want);
        }
    }

    #[test]
    fn ap_duality_holds(seed in any::<u64>(), p in 1.3f64..4.0) {
        let grid = Grid::graded(1e-6, 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let factor = random_profile(&grid, &mut rng).map(|v| v + 0.1);
        let ratio = ap_duality_check(&RadialWeight::standard(0.5).unwrap(), &factor, ExponentPair::new(p).unwrap()).unwrap();
        for v in &ratio.values {
            prop_assert!((v - 1.0).abs() <= 1e-8, "{v}");
        }
    }

    #[test]
    fn ap_scales_out(c in 0.01f64..100.0, d in 0.01f64..100.0, p in 1.3f64..4.0) {
        let (w, v) = (RadialWeight::standard(1.0).unwrap(), RadialWeight::log(3.0).unwrap());
        let pp = ExponentPair::new(p).unwrap();
        let (ws, vs) = (w.scaled(c).unwrap(), v.scaled(d).unwrap());
        for t in [0.5, 1e-3] {
            let a = ap_value_co(&w, &v, &sigma_weight(&w, &v, pp), pp, t).unwrap();
            let b = ap_value_co(&ws, &vs, &sigma_weight(&ws, &vs, pp), pp, t).unwrap();
            prop_assert!((a - b).abs() <= 1e-10 * a);
        }
    }

    #[test]
    fn chains_and_weak_type_hold(seed in any::<u64>(), g in -0.5f64..3.0, lam in 0.01f64..100.0) {
        let grid = Grid::graded(1e-7, 6).unwrap();
        let disc = Discretization::new(&RadialWeight::standard(g).unwrap(), &grid, DEFAULT_GAUSS_POINTS).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_profile(&grid, &mut rng);
        let d = chain_defects(&disc, &disc.sample(&f));
        prop_assert!(d.holds(1e-8), "{d:?}");
        let r = weak_type_on(&disc, &f, lam).unwrap();
        prop_assert!(r.holds);
    }

    #[test]
    fn kernel_is_hermitian_and_certified(spec in weight_strategy(), a in 0.0f64..0.9, th in 0.0f64..6.3) {
        let w = parse_weight(&spec).unwrap();
        let k = KernelSeries::new(&w);
        let u = Complex64::from_polar(a, th);
        let x = k.eval(u, 1e-12).unwrap();
        let y = k.eval(u.conj(), 1e-12).unwrap();
        prop_assert!((x.value() - y.value().conj()).norm() <= 1e-12 * x.value().norm());
        let tight = k.eval(u, 1e-15).unwrap();
        prop_assert!((x.value() - tight.value()).norm() <= x.tail_bound + 1e-14 * x.value().norm());
    }

    #[test]
    fn blocks_partition_and_parseval(coeffs in prop::collection::vec(-1.0f64..1.0, 1..300)) {
        let w = RadialWeight::standard(0.0).unwrap();
        let d = rho_sequence(&w, 12).unwrap();
        let mut covered = 0u64;
        for b in &d.blocks {
            prop_assert_eq!(b.start, covered);
            covered = b.end;
        }
        let f = CoefficientVector::from_real(&coeffs);
        prop_assume!(!f.is_zero());
        let norms = hardy_block_norms(&d, &f, 2.0).unwrap();
        let total: f64 = norms.iter().map(|b| b.norm * b.norm).sum();
        let direct: f64 = coeffs.iter().map(|c| c * c).sum();
        prop_assert!((total - direct).abs() <= 1e-12 * direct);
    }

    #[test]
    fn i_omega_is_coefficientwise(coeffs in prop::collection::vec(-1.0f64..1.0, 1..40)) {
        let w = RadialWeight::standard(1.0).unwrap();
        let f = CoefficientVector::from_real(&coeffs);
        let g = i_omega(&w, &f).unwrap();
        let m = w.odd_moments(coeffs.len()).unwrap();
        for (k, c) in g.coeffs.iter().enumerate() {
            prop_assert!((c.re - coeffs[k] * m[k]).abs() <= 1e-15);
        }
        // ‖f‖² = Σ |c_k|² 2ω_{2k+1}
        let n = bergman_norm_p(&w, &f, 2.0).unwrap();
        let want: f64 = coeffs.iter().zip(&m).map(|(c, m)| c * c * 2.0 * m).sum();
        prop_assert!((n - want).abs() <= 1e-14 * want.max(1e-300));
    }
}

#[test]
fn reports_are_byte_identical() {
    let text = "name = \"det\"\nomega = \"std:gamma=1\"\nnu = \"std:gamma=0\"\np = [2.0, 3.0]\nchain_profiles = 50\nseed = 7\nchecks = [\"calderon\", \"ap-bounded\"]\n";
    let sc = Scenario::from_toml(text).unwrap();
    let a = emit(&run_scenario(&sc).unwrap(), Format::Json).unwrap();
    let b = emit(&run_scenario(&sc).unwrap(), Format::Json).unwrap();
    assert_eq!(a, b);
    assert!(a.contains("\"grid_min\""));
}

#[test]
fn profile_of_a_constant_is_constant() {
    let g = Grid::graded(1e-6, 4).unwrap();
    let p = Profile::constant(&g, 2.5);
    assert!(p.values.iter().all(|v| *v == 2.5));
}
