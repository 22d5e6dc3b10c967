// Membership grid for one panel, written as CSV with a JSON sidecar.

use robust_ddc::experiments::{export_set_grid, SetGridMeta};
use robust_ddc::inference::{LikelihoodConfig, OptimSettings, RobustThreshold, ThetaGrid};
use robust_ddc::model::ModelSpec;
use robust_ddc::sim::{simulate_panel, SimConfig};

pub fn run_example() -> SetGridMeta {
    let mut cfg = SimConfig::new(ModelSpec::table1(), 300, 4);
    cfg.truth_knots = 201;
    let sim = simulate_panel(&cfg).expect("simulates");
    let m = &cfg.model;
    let grid: ThetaGrid = "-1.2:0:7,-7:-1:7".parse().expect("grid");
    let dir = tempfile::tempdir().expect("temp dir");
    let out = dir.path().join("set_grid.csv");
    let meta = export_set_grid(
        &sim.panel,
        m,
        LikelihoodConfig::replication(m, 8, cfg.truth_draw_seed()),
        &grid,
        0.05,
        &OptimSettings::default(),
        RobustThreshold::SupLower,
        &out,
    )
    .expect("grid");
    let csv = std::fs::read_to_string(&out).expect("written");
    let inside = |col: usize| csv.lines().skip(1).filter(|l| l.split(',').nth(col) == Some("1")).count();
    println!("{} points: {} in set, {} robust, {} standard", grid.len(), inside(2), inside(3), inside(4));
    println!("critical value {:.4}", meta.crit);
    meta
}

#[allow(dead_code)]
fn main() {
    run_example();
}
