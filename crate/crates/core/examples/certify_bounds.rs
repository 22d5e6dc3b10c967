// Certifying a coarse approximation: dense-grid supremum versus anchor
// refinement, then the implied widening of value differences.

use robust_ddc::bounds::{dense_grid_certificate, q_bound, refine_bound, RefineSettings, Refinement};
use robust_ddc::dp::{linspace, solve_value_function, DrawSet, SolveSettings};
use robust_ddc::model::ModelSpec;

pub fn run_example() -> Refinement {
    let m = ModelSpec::table1();
    let seed = 5;
    let sol = solve_value_function(&m, &m.theta, &linspace(0.0, 20.0, 10), 100, &SolveSettings::default(), seed)
        .expect("converges");
    let draws = DrawSet::generate(seed, 2, 100).expect("draws");
    let grid = linspace(0.0, 20.0, 1001);

    let dense = dense_grid_certificate(&sol.table, &m, &m.theta, &grid, &draws);
    println!("dense grid: B = {:.5}, b_bar = {:.3}", dense.b_upper, dense.b_bar);

    let tau = 0.05 * dense.b_bar;
    let r = refine_bound(&sol.table, &m, &m.theta, &grid, &draws, &RefineSettings::new(tau)).expect("halts");
    for (i, round) in r.rounds.iter().enumerate() {
        println!(
            "round {i}: {:>4} anchor states  [{:.5}, {:.5}]",
            round.anchor_states, round.b_lower, round.b_upper
        );
    }
    for s in [2.0, 10.0, 18.0] {
        let q = q_bound(s, 0, 1, &r.certificate, &m).expect("finite factor");
        println!("Q({s}, keep, repair) = {q:.5}");
    }
    r
}

#[allow(dead_code)]
fn main() {
    run_example();
}
