// Total variation between transition laws of the bus model.

use robust_ddc::model::{DdcModel, ModelSpec};

pub fn run_example() -> Vec<f64> {
    let m = ModelSpec::table1();
    let cases = [
        (10.0, 0, 10.0, 1),
        (10.0, 0, 11.0, 0),
        (0.0, 1, 20.0, 0),
        (19.5, 0, 19.5, 1),
    ];
    let mut out = Vec::new();
    for (s, d, s2, d2) in cases {
        let tv = m.transition_tv(s, d, s2, d2);
        println!("TV(F[{s},{d}], F[{s2},{d2}]) = {tv:.6}");
        out.push(tv);
    }
    println!("sup over all pairs: {}", m.delta_sup());
    out
}

#[allow(dead_code)]
fn main() {
    run_example();
}
