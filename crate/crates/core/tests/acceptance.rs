// Acceptance criteria 1 to 8. Prints one PASS/FAIL line per criterion and
// fails if any criterion fails. Criteria 4 and 5 run the desk-scale
// replication studies and take most of an hour on one core.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use robust_ddc::bounds::{b_bar, b_factor, dense_grid_certificate, q_bound, refine_bound, theorem1_sup, RefineSettings};
use robust_ddc::cli::RunConfig;
use robust_ddc::dp::{bellman_apply, linspace, solve_value_function, DrawSet, SolveSettings, ValueTable};
use robust_ddc::experiments::{run_coverage, CoverageSettings};
use robust_ddc::inference::{loglik_envelope, Observation, Panel};
use robust_ddc::model::{ClippedUniform, DdcModel, ModelSpec, SurrogateSpec, Theta};

const BIN: &str = env!("CARGO_BIN_EXE_robust-ddc");

// Criterion 1
const FIXED_POINT_TOL: f64 = 1e-13;
const N_PERTURBATIONS: usize = 50;
const SOUNDNESS_SLACK: f64 = 1e-8;
// Criterion 2
const TAU_SHARE: f64 = 0.05;
const MAX_REFINE_ROUNDS: usize = 8;
// Criterion 3
const N_ENVELOPE_EVALS: usize = 1000;
const ENVELOPE_SLACK: f64 = 1e-12;
// Criterion 4
const NESTING_REPS: usize = 50;
// Criterion 5
const COVERAGE_REPS: usize = 100;
const ROBUST_MIN: f64 = 0.95;
const STANDARD_MAX_AT_10: f64 = 0.85;
const MSE_RANGE: (f64, f64) = (0.01, 0.05);
// Criterion 6
const RATIO_MAX: f64 = 0.8 + 1e-6;
// Criterion 7
const N_TV_TUPLES: usize = 100;
const MESH_CELLS: usize = 1_000_000;
const TV_TOL: f64 = 1e-6;

const HORIZON: usize = 1000;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(n: usize, budget: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let t0 = Instant::now();
    let o = f();
    let took = t0.elapsed();
    let pass = o.pass && took <= budget;
    println!(
        "criterion {n}: {} ({}; {:.1}s of {}s)",
        if pass { "PASS" } else { "FAIL" },
        o.detail,
        took.as_secs_f64(),
        budget.as_secs()
    );
    pass
}

fn soundness() -> Outcome {
    let m = SurrogateSpec::new(30, 0.8, 11).build().unwrap();
    let theta = Theta::new(-0.6, -4.0);
    let states = m.states().to_vec();
    let settings = SolveSettings {
        tol: FIXED_POINT_TOL,
        max_iter: 50_000,
    };
    let vstar = solve_value_function(&m, &theta, &states, 1, &settings, 0).unwrap().table;
    let draws = DrawSet::generate(0, 2, 1).unwrap();
    let residual = bellman_apply(&vstar, &m, &theta, &draws).sup_distance(&vstar);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_sup = f64::NEG_INFINITY;
    let mut worst_q = f64::NEG_INFINITY;
    for _ in 0..N_PERTURBATIONS {
        let scale = rng.random_range(0.0..3.0);
        let vals: Vec<f64> = vstar.values().iter().map(|v| v + scale * rng.random_range(-1.0..1.0)).collect();
        let vt = ValueTable::new(vstar.knots().to_vec(), 2, vals).unwrap();
        let sup = theorem1_sup(&vt, &m, &theta, &states, &draws);
        let cert = dense_grid_certificate(&vt, &m, &theta, &states, &draws);
        for &s in &states {
            for d in 0..2 {
                for d2 in 0..2 {
                    let err = ((vt.eval(s, d2) - vt.eval(s, d)) - (vstar.eval(s, d2) - vstar.eval(s, d))).abs();
                    let b = b_factor(s, d, d2, &m, m.delta_sup()).unwrap();
                    worst_sup = worst_sup.max(err - b * sup);
                    worst_q = worst_q.max(err - q_bound(s, d, d2, &cert, &m).unwrap());
                }
            }
        }
    }
    Outcome {
        pass: residual <= FIXED_POINT_TOL && worst_sup <= SOUNDNESS_SLACK && worst_q <= SOUNDNESS_SLACK,
        detail: format!(
            "fixed-point residual {residual:.1e}, {N_PERTURBATIONS} perturbations, max (error - b*sup) {worst_sup:.3}, max (error - Q) {worst_q:.3}"
        ),
    }
}

fn refinement() -> Outcome {
    let cfg = RunConfig::default();
    let m = ModelSpec::table1();
    let knots = linspace(0.0, 20.0, 10);
    let v = solve_value_function(&m, &m.theta, &knots, 100, &SolveSettings::default(), cfg.draw_seed())
        .unwrap()
        .table;
    let draws = DrawSet::generate(cfg.draw_seed(), 2, 100).unwrap();
    let tau = TAU_SHARE * b_bar(&v, &m, &m.theta);
    let grid = linspace(0.0, 20.0, 1001);
    match refine_bound(&v, &m, &m.theta, &grid, &draws, &RefineSettings::new(tau)) {
        Ok(r) => {
            let last = r.rounds.last().unwrap();
            let gap = last.b_upper - last.b_lower;
            let monotone = r.rounds.windows(2).all(|w| w[1].b_upper <= w[0].b_upper);
            Outcome {
                pass: r.rounds.len() <= MAX_REFINE_ROUNDS && gap <= tau && monotone,
                detail: format!(
                    "{} rounds, gap {gap:.4} <= tau {tau:.4}, B_upper nonincreasing {monotone}",
                    r.rounds.len()
                ),
            }
        }
        Err(e) => Outcome {
            pass: false,
            detail: e.to_string(),
        },
    }
}

fn envelope_ordering() -> Outcome {
    let m = ModelSpec::table1();
    let knots = linspace(0.0, 20.0, 10);
    let grid = linspace(0.0, 20.0, 201);
    let draws = DrawSet::generate(3, 2, 100).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut violations = 0;
    for _ in 0..N_ENVELOPE_EVALS {
        let theta = Theta::new(rng.random_range(-2.0..0.5), rng.random_range(-10.0..0.0));
        let n = rng.random_range(1..200);
        let obs = (0..n)
            .map(|_| Observation {
                state: rng.random_range(0.0..=20.0),
                choice: rng.random_range(0..2),
            })
            .collect();
        let panel = Panel::new(obs).unwrap();
        let v = solve_value_function(&m, &theta, &knots, 100, &SolveSettings::default(), 3).unwrap().table;
        let cert = dense_grid_certificate(&v, &m, &theta, &grid, &draws);
        let e = loglik_envelope(&panel, &theta, &m, &v, &cert).unwrap();
        if !(e.ll_lower <= e.ll_point + ENVELOPE_SLACK && e.ll_point <= e.ll_upper + ENVELOPE_SLACK) {
            violations += 1;
        }
    }
    Outcome {
        pass: violations == 0,
        detail: format!("{violations} violations in {N_ENVELOPE_EVALS} evaluations"),
    }
}

fn nesting() -> Outcome {
    let mut s = RunConfig::default().coverage_settings();
    s.sim.horizon = HORIZON;
    s.knot_counts = vec![10];
    s.n_replications = NESTING_REPS;
    s.dense_check = true;
    let study = run_coverage(&s).unwrap();
    let e = study.report.entry(10).unwrap();
    let (inside, checked) = e.dense_nesting.unwrap();
    Outcome {
        pass: inside == NESTING_REPS && checked == NESTING_REPS,
        detail: format!("dense MLE inside the 10-knot set estimate in {inside}/{checked} reps"),
    }
}

fn coverage() -> Outcome {
    let mut s: CoverageSettings = RunConfig::default().coverage_settings();
    s.sim.horizon = HORIZON;
    s.knot_counts = vec![10, 100];
    s.n_replications = COVERAGE_REPS;
    s.alpha = 0.05;
    let study = run_coverage(&s).unwrap();
    let (e10, e100) = (study.report.entry(10).unwrap(), study.report.entry(100).unwrap());
    let mse_ok = |m: f64| (MSE_RANGE.0..=MSE_RANGE.1).contains(&m);
    let parts = [
        ("robust@10", e10.robust_cov >= ROBUST_MIN),
        ("robust@100", e100.robust_cov >= ROBUST_MIN),
        ("standard@10", e10.std_cov <= STANDARD_MAX_AT_10),
        ("mse@10", mse_ok(e10.mse)),
        ("mse@100", mse_ok(e100.mse)),
    ];
    let failed: Vec<&str> = parts.iter().filter(|p| !p.1).map(|p| p.0).collect();
    Outcome {
        pass: failed.is_empty() && e10.n_failed == 0 && e100.n_failed == 0,
        detail: format!(
            "10 knots: robust {:.2} standard {:.2} set {:.2} mse {:.4}; 100 knots: robust {:.2} standard {:.2} set {:.2} mse {:.4}; failed fits {}+{}; unmet {:?}",
            e10.robust_cov,
            e10.std_cov,
            e10.set_cov,
            e10.mse,
            e100.robust_cov,
            e100.std_cov,
            e100.set_cov,
            e100.mse,
            e10.n_failed,
            e100.n_failed,
            failed
        ),
    }
}

fn contraction() -> Outcome {
    let cfg = RunConfig::default();
    let m = ModelSpec::table1();
    let sol = solve_value_function(
        &m,
        &m.theta,
        &linspace(0.0, 20.0, cfg.dp.knots),
        cfg.dp.n_draws,
        &cfg.dp.settings(),
        cfg.draw_seed(),
    )
    .unwrap();
    let d = &sol.report.deltas;
    let worst = (2..d.len()).map(|k| d[k] / d[k - 1]).fold(0.0, f64::max);
    Outcome {
        pass: worst <= RATIO_MAX,
        detail: format!("{} iterations, max ratio {worst:.8}", d.len()),
    }
}

/// `½∫|f − g|` over `cells` equal cells using exact cell masses, plus the
/// atom differences at both ends.
fn mesh_tv(a: &ClippedUniform, b: &ClippedUniform, cells: usize) -> f64 {
    let h = (a.hi - a.lo) / cells as f64;
    let mass = |k: &ClippedUniform, x0: f64, x1: f64| {
        let (p, q) = k.interior();
        k.density() * (x1.min(q) - x0.max(p)).max(0.0)
    };
    let mut total = (a.atom_lo() - b.atom_lo()).abs() + (a.atom_hi() - b.atom_hi()).abs();
    for i in 0..cells {
        let x0 = a.lo + h * i as f64;
        let x1 = a.lo + h * (i + 1) as f64;
        total += (mass(a, x0, x1) - mass(b, x0, x1)).abs();
    }
    0.5 * total
}

fn tv_oracle() -> Outcome {
    let m = ModelSpec::table1();
    let mut tuples = vec![(10.0, 0, 10.0, 1), (0.0, 0, 20.0, 0), (0.5, 0, 19.5, 1), (19.0, 0, 20.0, 0)];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    while tuples.len() < N_TV_TUPLES {
        // Every other tuple sits within a half-width of a boundary.
        let s = if tuples.len() % 2 == 0 {
            rng.random_range(0.0..=20.0)
        } else if rng.random_bool(0.5) {
            rng.random_range(0.0..6.0)
        } else {
            rng.random_range(14.0..=20.0)
        };
        tuples.push((s, rng.random_range(0..2), rng.random_range(0.0..=20.0), rng.random_range(0..2)));
    }
    let mut worst: f64 = 0.0;
    for &(s, d, s2, d2) in &tuples {
        let exact = m.transition_tv(s, d, s2, d2);
        let mesh = mesh_tv(&m.kernel(s, d), &m.kernel(s2, d2), MESH_CELLS);
        worst = worst.max((exact - mesh).abs());
    }
    let interior = m.transition_tv(10.0, 0, 10.0, 1);
    let disjoint = m.transition_tv(0.0, 0, 20.0, 0);
    Outcome {
        pass: worst <= TV_TOL && (interior - 0.2).abs() <= TV_TOL && (disjoint - 1.0).abs() <= TV_TOL,
        detail: format!(
            "{} tuples, max |exact - mesh| {worst:.2e}, interior {interior}, disjoint {disjoint}",
            tuples.len()
        ),
    }
}

/// Every file under `dir`, keyed by relative path.
fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn determinism() -> Outcome {
    let root = tempfile::tempdir().unwrap();
    let cfg = root.path().join("c.json");
    fs::write(&cfg, r#"{"experiments": {"knot_counts": [10]}}"#).unwrap();
    let cfg = cfg.to_str().unwrap();
    let commands: [&[&str]; 3] = [
        &["simulate"],
        &["coverage", "--reps", "2"],
        &["set-grid", "--grid", "-1.6:0.4:21,-10:2:21"],
    ];
    let mut mismatched = Vec::new();
    for cmd in commands {
        let mut snaps = Vec::new();
        for (run, threads) in [(0, "1"), (1, "1"), (2, "8")] {
            // Same relative --out from different working dirs, so the echoed
            // configs match too.
            let cwd = root.path().join(format!("{}-{run}", cmd[0]));
            fs::create_dir_all(&cwd).unwrap();
            let o = Command::new(BIN)
                .current_dir(&cwd)
                .args(["--config", cfg, "--seed", "3", "--threads", threads, "--out", "out"])
                .args(cmd)
                .output()
                .unwrap();
            assert!(o.status.success(), "{cmd:?}: {}", String::from_utf8_lossy(&o.stderr));
            snaps.push(snapshot(&cwd.join("out")));
        }
        if snaps[0] != snaps[1] || snaps[0] != snaps[2] {
            mismatched.push(cmd[0]);
        }
    }
    Outcome {
        pass: mismatched.is_empty(),
        detail: format!("simulate, coverage n=2, set-grid; two runs and 1 vs 8 threads; mismatches {mismatched:?}"),
    }
}

#[test]
fn acceptance() {
    let min = |m: u64| Duration::from_secs(60 * m);
    let results = [
        check(1, min(1), soundness),
        check(2, min(2), refinement),
        check(3, min(2), envelope_ordering),
        check(6, min(1), contraction),
        check(7, min(1), tv_oracle),
        check(8, min(10), determinism),
        check(4, min(30), nesting),
        check(5, min(120), coverage),
    ];
    let failed = results.iter().filter(|&&p| !p).count();
    assert_eq!(failed, 0, "{failed} acceptance criteria failed");
}
