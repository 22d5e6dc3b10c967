// On a finite model the fixed point is exact, so the bound on value
// differences can be checked directly against the truth.

use robust_ddc::bounds::{b_factor, theorem1_sup};
use robust_ddc::dp::{solve_value_function, DrawSet, SolveSettings, ValueTable};
use robust_ddc::model::{DdcModel, SurrogateSpec, Theta};

pub fn run_example() -> (f64, f64) {
    let m = SurrogateSpec::new(25, 0.9, 3).build().expect("valid surrogate");
    let theta = Theta::new(-0.4, -2.5);
    let settings = SolveSettings {
        tol: 1e-13,
        max_iter: 50_000,
    };
    let vstar = solve_value_function(&m, &theta, m.states(), 1, &settings, 0).expect("converges").table;
    let draws = DrawSet::generate(0, 2, 1).expect("draws");

    // A wobbly perturbation of the fixed point.
    let vt = ValueTable::from_fn(m.states().to_vec(), 2, |s, d| {
        vstar.eval(s, d) + 0.3 * (0.7 * s + d as f64).sin()
    })
    .expect("table");
    let grid = m.states().to_vec();
    let sup = theorem1_sup(&vt, &m, &theta, &grid, &draws);

    let mut worst_err = 0.0f64;
    let mut worst_slack = f64::INFINITY;
    for &s in &grid {
        let err = ((vt.eval(s, 1) - vt.eval(s, 0)) - (vstar.eval(s, 1) - vstar.eval(s, 0))).abs();
        let bound = b_factor(s, 0, 1, &m, m.delta_sup()).expect("finite") * sup;
        worst_err = worst_err.max(err);
        worst_slack = worst_slack.min(bound - err);
    }
    println!("residual spread {sup:.5}, largest value-difference error {worst_err:.5}");
    println!("smallest slack of the bound {worst_slack:.5}");
    (worst_err, worst_slack)
}

#[allow(dead_code)]
fn main() {
    run_example();
}
