// Value iteration on the reference model and its contraction rate.

use robust_ddc::dp::{linspace, solve_value_function, SolveReport, SolveSettings};
use robust_ddc::model::ModelSpec;

pub fn run_example() -> SolveReport {
    let m = ModelSpec::table1();
    let knots = linspace(0.0, 20.0, 201);
    let sol = solve_value_function(&m, &m.theta, &knots, 100, &SolveSettings::default(), 7).expect("converges");
    let r = &sol.report;
    println!("{} iterations, final change {:e}", r.iterations, r.final_delta());
    let worst = r.deltas.windows(2).skip(1).map(|w| w[1] / w[0]).fold(0.0, f64::max);
    println!("largest delta ratio after iteration 2: {worst:.6}");
    for s in [0.0, 5.0, 10.0, 15.0, 20.0] {
        println!("V({s:>4}, keep) = {:>9.4}  V({s:>4}, repair) = {:>9.4}", sol.table.eval(s, 0), sol.table.eval(s, 1));
    }
    sol.report
}

#[allow(dead_code)]
fn main() {
    run_example();
}
