//! Synthetic panels from the bus-engine model.
//!
//! The value function is solved once on a dense grid and treated as the
//! truth. Each period draws two Gumbel shocks by inverse CDF, takes the
//! best alternative and then draws next period's mileage.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dp::{linspace, solve_with_stencil, DrawScheme, DrawSet, SolveReport, SolveSettings, Stencil, ValueTable};
use crate::error::{Error, Result};
use crate::inference::{Observation, Panel};
use crate::model::{DdcModel, ModelSpec};
use crate::rng::{derive_seed, stream_rng, tag};

fn default_horizon() -> usize {
    1000
}
fn default_truth_knots() -> usize {
    1001
}
fn default_truth_draws() -> usize {
    100
}
fn default_initial_state() -> f64 {
    10.0
}
fn default_burn_in() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub model: ModelSpec,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_truth_knots")]
    pub truth_knots: usize,
    #[serde(default = "default_truth_draws")]
    pub truth_draws: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_initial_state")]
    pub initial_state: f64,
    /// Periods simulated and discarded before recording starts.
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default)]
    pub solve: SolveSettings,
    #[serde(default)]
    pub draw_scheme: DrawScheme,
}

impl SimConfig {
    pub fn new(model: ModelSpec, horizon: usize, seed: u64) -> Self {
        SimConfig {
            model,
            horizon,
            truth_knots: default_truth_knots(),
            truth_draws: default_truth_draws(),
            seed,
            initial_state: default_initial_state(),
            burn_in: default_burn_in(),
            solve: SolveSettings::default(),
            draw_scheme: DrawScheme::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.solve.validate()?;
        if self.horizon == 0 {
            return Err(Error::invalid("sim.horizon", "horizon must be at least 1"));
        }
        if self.truth_knots < 2 || self.truth_draws == 0 {
            return Err(Error::invalid(
                "sim.truth_knots/truth_draws",
                "need at least 2 truth knots and 1 draw",
            ));
        }
        if !(self.model.state_lo..=self.model.state_hi).contains(&self.initial_state) {
            return Err(Error::invalid("sim.initial_state", "initial state outside the state interval"));
        }
        Ok(())
    }

    /// Seed of the draw set used by the truth solve. Estimation reuses it so
    /// that the dense solve is the exact counterpart of the estimation
    /// operator.
    pub fn truth_draw_seed(&self) -> u64 {
        derive_seed(self.seed, tag::TRUTH_DRAWS, 0)
    }

    pub fn truth_grid(&self) -> Vec<f64> {
        linspace(self.model.state_lo, self.model.state_hi, self.truth_knots)
    }
}

/// A panel together with the truth solve that generated it.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub panel: Panel,
    pub truth: ValueTable,
    pub report: SolveReport,
}

/// Sidecar written next to a panel file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimMeta {
    pub config: SimConfig,
    pub truth_draw_seed: u64,
    pub truth_iterations: usize,
    pub truth_final_delta: f64,
    pub truth_deltas: Vec<f64>,
    pub choice_frequencies: Vec<f64>,
}

impl Simulation {
    pub fn meta(&self, cfg: &SimConfig) -> SimMeta {
        SimMeta {
            config: cfg.clone(),
            truth_draw_seed: cfg.truth_draw_seed(),
            truth_iterations: self.report.iterations,
            truth_final_delta: self.report.final_delta(),
            truth_deltas: self.report.deltas.clone(),
            choice_frequencies: self.panel.choice_frequencies(cfg.model.n_choices),
        }
    }

    /// Writes `panel.csv` and `panel.meta.json` into `dir`.
    pub fn write(&self, cfg: &SimConfig, dir: &Path) -> Result<()> {
        self.panel.write_csv(&dir.join("panel.csv"))?;
        let meta = serde_json::to_string_pretty(&self.meta(cfg)).expect("metadata serializes");
        let p = dir.join("panel.meta.json");
        std::fs::write(&p, meta).map_err(|e| Error::io(&p, e))
    }
}

/// `−ln(−ln u)`, with `u` kept away from zero.
fn gumbel(u: f64) -> f64 {
    -(-u.max(f64::MIN_POSITIVE).ln()).ln()
}

/// Simulates a panel with a truth table already solved for `cfg`.
pub fn simulate_with_truth(cfg: &SimConfig, truth: &ValueTable) -> Result<Panel> {
    cfg.validate()?;
    let m = &cfg.model;
    let theta = m.theta;
    let nc = m.n_choices;
    let mut rng = stream_rng(derive_seed(cfg.seed, tag::PANEL, 0), 0);
    let mut s = cfg.initial_state;
    let mut obs = Vec::with_capacity(cfg.horizon);
    for t in 0..cfg.burn_in + cfg.horizon {
        let mut best = 0;
        let mut best_w = f64::NEG_INFINITY;
        for d in 0..nc {
            let eps = gumbel(rng.random::<f64>());
            let w = m.utility(s, d, &theta) + eps + m.beta * truth.eval(s, d);
            if w > best_w {
                best = d;
                best_w = w;
            }
        }
        if t >= cfg.burn_in {
            obs.push(Observation { state: s, choice: best });
        }
        s = m.transition_sample(s, best, rng.random::<f64>());
    }
    Panel::new(obs)
}

/// Solves the truth on the dense grid and simulates the panel.
pub fn simulate_panel(cfg: &SimConfig) -> Result<Simulation> {
    cfg.validate()?;
    let grid = cfg.truth_grid();
    let draws = DrawSet::with_scheme(cfg.draw_scheme, cfg.truth_draw_seed(), cfg.model.n_choices, cfg.truth_draws)?;
    let stencil = Stencil::new(&cfg.model, &grid, &grid, &draws);
    let sol = solve_with_stencil(&cfg.model, &cfg.model.theta, &stencil, &cfg.solve)?;
    let panel = simulate_with_truth(cfg, &sol.table)?;
    Ok(Simulation {
        panel,
        truth: sol.table,
        report: sol.report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Theta;

    fn quick(theta: Theta, horizon: usize, seed: u64) -> SimConfig {
        let mut c = SimConfig::new(ModelSpec::table1().with_theta(theta), horizon, seed);
        c.truth_knots = 101;
        c
    }

    #[test]
    fn dominated_repair_is_never_chosen() {
        let sim = simulate_panel(&quick(Theta::new(-0.6, -1e9), 500, 4)).unwrap();
        assert!(sim.panel.observations().iter().all(|o| o.choice == 0));
        assert!(sim.panel.observations().iter().all(|o| (0.0..=20.0).contains(&o.state)));
    }

    #[test]
    fn reproducible_and_mixed() {
        let cfg = quick(Theta::new(-0.6, -4.0), 2000, 9);
        let a = simulate_panel(&cfg).unwrap();
        let b = simulate_panel(&cfg).unwrap();
        assert_eq!(a.panel.to_csv(), b.panel.to_csv());
        let f = a.panel.choice_frequencies(2)[1];
        assert!(f > 0.0 && f < 1.0);
        let other = simulate_panel(&quick(Theta::new(-0.6, -4.0), 2000, 10)).unwrap();
        assert_ne!(a.panel.to_csv(), other.panel.to_csv());
    }

    #[test]
    fn config_validation_and_defaults() {
        let mut c = quick(Theta::new(-0.6, -4.0), 0, 1);
        assert!(c.validate().is_err());
        c.horizon = 10;
        c.initial_state = 30.0;
        assert!(c.validate().is_err());
        let j = serde_json::json!({"model": ModelSpec::table1()});
        let parsed: SimConfig = serde_json::from_value(j).unwrap();
        assert_eq!(parsed.horizon, 1000);
        assert_eq!(parsed.truth_knots, 1001);
        assert_eq!(parsed.initial_state, 10.0);
        assert_eq!(parsed.burn_in, 100);
    }
}
