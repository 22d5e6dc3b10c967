// A miniature coverage study.

use robust_ddc::experiments::{run_coverage, CoverageReport, CoverageSettings};
use robust_ddc::model::ModelSpec;
use robust_ddc::sim::SimConfig;

pub fn run_example() -> CoverageReport {
    let mut sim = SimConfig::new(ModelSpec::table1(), 300, 0);
    sim.truth_knots = 101;
    let s = CoverageSettings::new(sim, vec![6, 12], 2, 99);
    let study = run_coverage(&s).expect("runs");
    print!("{}", study.report.to_csv());
    study.report
}

#[allow(dead_code)]
fn main() {
    run_example();
}
