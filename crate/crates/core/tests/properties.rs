use proptest::prelude::*;
use robust_ddc::bounds::{b_factor, dense_grid_certificate, q_bound, theorem1_sup, BoundCertificate, BoundMethod};
use robust_ddc::dp::{bellman_apply, linspace, solve_value_function, DrawSet, SolveSettings, ValueTable};
use robust_ddc::inference::{chi2_cdf, chi2_quantile, loglik_envelope, Observation, Panel};
use robust_ddc::model::{ClippedUniform, DdcModel, FiniteSurrogate, ModelSpec, SurrogateSpec, Theta};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Half the L1 distance between two clipped uniforms on a mesh of `n`
/// cells, using exact cell averages of each density.
fn mesh_tv(a: &ClippedUniform, b: &ClippedUniform, n: usize) -> f64 {
    let (lo, hi) = (a.lo, a.hi);
    let h = (hi - lo) / n as f64;
    let cell_mass = |k: &ClippedUniform, x0: f64, x1: f64| {
        let (p, q) = k.interior();
        k.density() * (x1.min(q) - x0.max(p)).max(0.0)
    };
    let mut total = (a.atom_lo() - b.atom_lo()).abs() + (a.atom_hi() - b.atom_hi()).abs();
    for i in 0..n {
        let x0 = lo + h * i as f64;
        let x1 = x0 + h;
        total += (cell_mass(a, x0, x1) - cell_mass(b, x0, x1)).abs();
    }
    0.5 * total
}

fn bus() -> ModelSpec {
    ModelSpec::table1()
}

fn state() -> impl Strategy<Value = f64> {
    0.0..=20.0f64
}

fn table(knots: &[f64], vals: &[f64]) -> ValueTable {
    ValueTable::new(knots.to_vec(), 2, vals.to_vec()).unwrap()
}

fn surrogate() -> (FiniteSurrogate, Theta, ValueTable) {
    let m = SurrogateSpec::new(12, 0.8, 5).build().unwrap();
    let theta = Theta::new(-0.5, -3.0);
    let s = SolveSettings {
        tol: 1e-13,
        max_iter: 20_000,
    };
    let v = solve_value_function(&m, &theta, m.states(), 1, &s, 0).unwrap().table;
    (m, theta, v)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tv_is_a_metric(s1 in state(), s2 in state(), s3 in state(), d1 in 0..2usize, d2 in 0..2usize, d3 in 0..2usize) {
        let m = bus();
        let ab = m.transition_tv(s1, d1, s2, d2);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(ab, m.transition_tv(s2, d2, s1, d1));
        prop_assert!(m.transition_tv(s1, d1, s1, d1) < 1e-15);
        let ac = m.transition_tv(s1, d1, s3, d3);
        let bc = m.transition_tv(s2, d2, s3, d3);
        prop_assert!(ac <= ab + bc + 1e-12);
    }

    #[test]
    fn tv_matches_mesh(s1 in -3.0..23.0f64, s2 in -3.0..23.0f64, w in 0.5..12.0f64) {
        let a = ClippedUniform::new(s1, w, 0.0, 20.0);
        let b = ClippedUniform::new(s2, w, 0.0, 20.0);
        prop_assert!((a.tv(&b) - mesh_tv(&a, &b, 20_000)).abs() < 1e-6);
    }

    #[test]
    fn bellman_contracts(
        a in prop::collection::vec(-30.0..30.0f64, 16),
        b in prop::collection::vec(-30.0..30.0f64, 16),
        t1 in -1.0..0.0f64, t2 in -8.0..0.0f64, seed in any::<u64>(),
    ) {
        let m = bus();
        let knots = linspace(0.0, 20.0, 8);
        let draws = DrawSet::generate(seed, 2, 20).unwrap();
        let theta = Theta::new(t1, t2);
        let (va, vb) = (table(&knots, &a), table(&knots, &b));
        let ta = bellman_apply(&va, &m, &theta, &draws);
        let tb = bellman_apply(&vb, &m, &theta, &draws);
        prop_assert!(ta.sup_distance(&tb) <= m.beta * va.sup_distance(&vb) + 1e-10);
    }

    #[test]
    fn bellman_is_monotone_and_shift_equivariant(
        a in prop::collection::vec(-30.0..30.0f64, 16),
        bump in prop::collection::vec(0.0..5.0f64, 16),
        c in -10.0..10.0f64, seed in any::<u64>(),
    ) {
        let m = bus();
        let knots = linspace(0.0, 20.0, 8);
        let draws = DrawSet::generate(seed, 2, 20).unwrap();
        let lo = table(&knots, &a);
        let hi_vals: Vec<f64> = a.iter().zip(&bump).map(|(x, y)| x + y).collect();
        let hi = table(&knots, &hi_vals);
        let (tl, th) = (bellman_apply(&lo, &m, &m.theta, &draws), bellman_apply(&hi, &m, &m.theta, &draws));
        for (x, y) in tl.values().iter().zip(th.values()) {
            prop_assert!(x <= &(y + 1e-12));
        }
        let ts = bellman_apply(&lo.shifted(c), &m, &m.theta, &draws);
        for (x, y) in ts.values().iter().zip(tl.values()) {
            prop_assert!((x - (y + m.beta * c)).abs() < 1e-9);
        }
    }

    #[test]
    fn value_difference_bound_is_sound(noise in prop::collection::vec(-2.0..2.0f64, 24), scale in 0.0..3.0f64) {
        let (m, theta, vstar) = surrogate();
        let vals: Vec<f64> = vstar.values().iter().zip(&noise).map(|(v, e)| v + scale * e).collect();
        let vt = ValueTable::new(vstar.knots().to_vec(), 2, vals).unwrap();
        let draws = DrawSet::generate(0, 2, 1).unwrap();
        let grid = m.states().to_vec();
        let sup = theorem1_sup(&vt, &m, &theta, &grid, &draws);
        let cert = dense_grid_certificate(&vt, &m, &theta, &grid, &draws);
        for &s in &grid {
            for d in 0..2 {
                for d2 in 0..2 {
                    let err = ((vt.eval(s, d2) - vt.eval(s, d)) - (vstar.eval(s, d2) - vstar.eval(s, d))).abs();
                    let b = b_factor(s, d, d2, &m, m.delta_sup()).unwrap();
                    prop_assert!(err <= b * sup + 1e-8);
                    prop_assert!(err <= q_bound(s, d, d2, &cert, &m).unwrap() + 1e-8);
                }
            }
        }
    }

    #[test]
    fn envelope_widens_with_the_bound(
        states in prop::collection::vec(state(), 1..40),
        choices in prop::collection::vec(0..2usize, 40),
        t1 in -1.5..0.5f64, t2 in -8.0..0.0f64, b in 0.0..3.0f64,
    ) {
        let m = bus();
        let obs = states.iter().zip(&choices).map(|(&s, &c)| Observation { state: s, choice: c }).collect();
        let panel = Panel::new(obs).unwrap();
        let knots = linspace(0.0, 20.0, 6);
        let v = ValueTable::from_fn(knots, 2, |s, d| -0.3 * s + d as f64).unwrap();
        let cert = BoundCertificate {
            delta_sup: 1.0,
            b_bar: 1.0,
            b_upper: b,
            b_lower: b,
            method: BoundMethod::DenseGrid,
        };
        let theta = Theta::new(t1, t2);
        let one = loglik_envelope(&panel, &theta, &m, &v, &cert).unwrap();
        let two = loglik_envelope(&panel, &theta, &m, &v, &cert.scaled(2.0)).unwrap();
        prop_assert!(one.ll_lower <= one.ll_point && one.ll_point <= one.ll_upper);
        prop_assert!(two.ll_lower <= one.ll_lower && one.ll_upper <= two.ll_upper);
        prop_assert_eq!(one.ll_point, two.ll_point);
        for s in [0.0, 7.5, 20.0] {
            let q1 = q_bound(s, 0, 1, &cert, &m).unwrap();
            let q2 = q_bound(s, 0, 1, &cert.scaled(2.0), &m).unwrap();
            prop_assert_eq!(q2, 2.0 * q1);
        }
    }

    #[test]
    fn chi_square_agrees_with_statrs(p in 0.001..0.999f64, k in 1u32..30) {
        let dist = ChiSquared::new(k as f64).unwrap();
        let q = chi2_quantile(p, k as f64).unwrap();
        prop_assert!((q - dist.inverse_cdf(p)).abs() < 1e-6 * (1.0 + q));
        prop_assert!((chi2_cdf(q, k as f64) - p).abs() < 1e-10);
    }

    #[test]
    fn value_table_csv_round_trips(vals in prop::collection::vec(-1e6..1e6f64, 10)) {
        let v = table(&linspace(0.0, 20.0, 5), &vals);
        let back = ValueTable::from_csv(&v.to_csv()).unwrap();
        prop_assert_eq!(back, v);
    }

    #[test]
    fn panel_csv_round_trips(states in prop::collection::vec(state(), 1..30), choices in prop::collection::vec(0..2usize, 30)) {
        let obs = states.iter().zip(&choices).map(|(&s, &c)| Observation { state: s, choice: c }).collect();
        let p = Panel::new(obs).unwrap();
        prop_assert_eq!(Panel::from_csv(&p.to_csv()).unwrap(), p);
    }
}
