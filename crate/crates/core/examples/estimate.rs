// Point estimate and likelihood envelope on a simulated panel.

use robust_ddc::inference::{LikelihoodConfig, MleFit, NestedLikelihood, OptimSettings};
use robust_ddc::model::ModelSpec;
use robust_ddc::sim::{simulate_panel, SimConfig};

pub fn run_example() -> MleFit {
    let mut cfg = SimConfig::new(ModelSpec::table1(), 400, 21);
    cfg.truth_knots = 201;
    let sim = simulate_panel(&cfg).expect("simulates");
    let m = &cfg.model;
    let nl = NestedLikelihood::new(m, &sim.panel, LikelihoodConfig::replication(m, 10, cfg.truth_draw_seed()))
        .expect("valid setup");
    let fit = nl.mle(&OptimSettings::default()).expect("optimizer converges");
    println!("theta_hat = ({:.4}, {:.4}), loglik {:.3}", fit.theta.t1(), fit.theta.t2(), fit.loglik);
    let e = nl.evaluate(&fit.theta).expect("evaluates");
    println!(
        "at theta_hat: L^L = {:.3}  L = {:.3}  L^U = {:.3}  (B = {:.4})",
        e.envelope.ll_lower, e.envelope.ll_point, e.envelope.ll_upper, e.certificate.b_upper
    );
    fit
}

#[allow(dead_code)]
fn main() {
    run_example();
}
