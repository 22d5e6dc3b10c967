//! Monte Carlo coverage study and membership grids.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{
    chi2_quantile, grid_to_csv, BoundMode, GridRow, LikelihoodConfig, LikelihoodEnvelope, Membership,
    NestedLikelihood, OptimSettings, Panel, RobustThreshold, ThetaGrid, Thresholds, set_estimate_member,
};
use crate::model::{ModelSpec, Theta};
use crate::rng::{derive_seed, tag};
use crate::sim::{simulate_panel, SimConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverageSettings {
    /// Template for every replication; its seed is replaced per replication.
    pub sim: SimConfig,
    pub knot_counts: Vec<usize>,
    pub n_replications: usize,
    pub alpha: f64,
    pub master_seed: u64,
    #[serde(default)]
    pub optim: OptimSettings,
    /// Also fit the dense-grid likelihood and check that its maximiser lies
    /// in each set estimate.
    #[serde(default)]
    pub dense_check: bool,
    #[serde(default)]
    pub robust_threshold: RobustThreshold,
}

impl CoverageSettings {
    pub fn new(sim: SimConfig, knot_counts: Vec<usize>, n_replications: usize, master_seed: u64) -> Self {
        CoverageSettings {
            sim,
            knot_counts,
            n_replications,
            alpha: 0.05,
            master_seed,
            optim: OptimSettings::default(),
            dense_check: false,
            robust_threshold: RobustThreshold::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        self.optim.validate()?;
        if self.n_replications == 0 {
            return Err(Error::invalid("experiments.n_replications", "need at least one replication"));
        }
        if self.knot_counts.is_empty() || self.knot_counts.iter().any(|&k| k < 2) {
            return Err(Error::invalid("experiments.knot_counts", "need knot counts of at least 2"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid("experiments.alpha", format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        Ok(())
    }

    /// Estimation setup for one grid; draws follow the simulator's.
    pub fn likelihood_config(&self, knots: usize, draw_seed: u64) -> LikelihoodConfig {
        let mut c = LikelihoodConfig::replication(&self.sim.model, knots, draw_seed);
        c.n_draws = self.sim.truth_draws;
        c.draw_scheme = self.sim.draw_scheme;
        c
    }

    pub fn replication_seed(&self, index: usize) -> u64 {
        derive_seed(self.master_seed, tag::REPLICATION, index as u64)
    }
}

/// The infeasible dense-grid fit of one replication.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DenseFit {
    pub theta: Theta,
    pub loglik: f64,
}

/// Results for one replication and one estimation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnotOutcome {
    pub knots: usize,
    pub theta_hat: Theta,
    pub at_boundary: bool,
    pub sup_ll_point: f64,
    pub sup_ll_lower: f64,
    pub sup_ll_upper: Option<f64>,
    pub b_upper_at_truth: f64,
    pub at_truth: LikelihoodEnvelope,
    pub membership: Membership,
    /// Envelope at the dense-grid maximiser, when computed.
    pub at_dense: Option<LikelihoodEnvelope>,
    pub dense_in_set: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub index: usize,
    pub seed: u64,
    pub choice1_frequency: f64,
    pub outcomes: Vec<std::result::Result<KnotOutcome, String>>,
    pub dense: Option<std::result::Result<DenseFit, String>>,
}

fn knot_outcome(
    s: &CoverageSettings,
    model: &ModelSpec,
    panel: &Panel,
    knots: usize,
    draw_seed: u64,
    crit: f64,
) -> Result<(KnotOutcome, Theta)> {
    let nl = NestedLikelihood::new(model, panel, s.likelihood_config(knots, draw_seed))?;
    let mle = nl.mle(&s.optim)?;
    let local = s.optim.single_start(mle.theta.0, s.optim.initial_step);
    let lower = nl.sup_lower(&local)?;
    let upper = match s.robust_threshold {
        RobustThreshold::SupUpper => Some(nl.sup_upper(&local)?.loglik),
        RobustThreshold::SupLower => None,
    };
    let thresholds = Thresholds {
        sup_ll_lower: lower.loglik,
        sup_ll_point: mle.loglik,
        sup_ll_upper: upper,
        crit,
        robust: s.robust_threshold,
    };
    let truth = nl.evaluate(&model.theta)?;
    let membership = thresholds.classify(&truth.envelope)?;
    Ok((
        KnotOutcome {
            knots,
            theta_hat: mle.theta,
            at_boundary: mle.at_boundary,
            sup_ll_point: mle.loglik,
            sup_ll_lower: lower.loglik,
            sup_ll_upper: upper,
            b_upper_at_truth: truth.certificate.b_upper,
            at_truth: truth.envelope,
            membership,
            at_dense: None,
            dense_in_set: None,
        },
        mle.theta,
    ))
}

fn dense_fit(model: &ModelSpec, panel: &Panel, cfg: &SimConfig, optim: &OptimSettings, start: Theta) -> Result<DenseFit> {
    let mut lc = LikelihoodConfig::replication(model, cfg.truth_knots, cfg.truth_draw_seed());
    lc.n_draws = cfg.truth_draws;
    lc.draw_scheme = cfg.draw_scheme;
    lc.solve = cfg.solve;
    lc.bound = BoundMode::Exact;
    let nl = NestedLikelihood::new(model, panel, lc)?;
    let fit = nl.mle(&optim.single_start(start.0, [0.05, 0.3]))?;
    Ok(DenseFit {
        theta: fit.theta,
        loglik: fit.loglik,
    })
}

/// Simulates and analyses replication `index`.
pub fn run_replication(s: &CoverageSettings, index: usize) -> Result<Replication> {
    let seed = s.replication_seed(index);
    let mut cfg = s.sim.clone();
    cfg.seed = seed;
    let sim = simulate_panel(&cfg)?;
    let model = &cfg.model;
    let crit = chi2_quantile(1.0 - s.alpha, 2.0)?;
    let draw_seed = cfg.truth_draw_seed();
    let mut outcomes = Vec::new();
    let mut last_hat = None;
    for &k in &s.knot_counts {
        match knot_outcome(s, model, &sim.panel, k, draw_seed, crit) {
            Ok((o, hat)) => {
                last_hat = Some(hat);
                outcomes.push(Ok(o));
            }
            Err(e) => outcomes.push(Err(e.to_string())),
        }
    }
    let dense = if s.dense_check {
        let start = last_hat.unwrap_or(model.theta);
        let fit = dense_fit(model, &sim.panel, &cfg, &s.optim, start);
        if let Ok(f) = &fit {
            for (o, &k) in outcomes.iter_mut().zip(&s.knot_counts) {
                if let Ok(o) = o {
                    let nl = NestedLikelihood::new(model, &sim.panel, s.likelihood_config(k, draw_seed))?;
                    let env = nl.evaluate(&f.theta)?.envelope;
                    o.dense_in_set = Some(set_estimate_member(&env, o.sup_ll_lower));
                    o.at_dense = Some(env);
                }
            }
        }
        Some(fit.map_err(|e| e.to_string()))
    } else {
        None
    };
    Ok(Replication {
        index,
        seed,
        choice1_frequency: sim.panel.choice_frequencies(2)[1],
        outcomes,
        dense,
    })
}

/// Aggregate statistics for one estimation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageEntry {
    pub knots: usize,
    pub n_rep: usize,
    pub n_failed: usize,
    /// Mean over replications of the mean squared error of the two components.
    pub mse: f64,
    pub set_cov: f64,
    pub robust_cov: f64,
    pub std_cov: f64,
    /// `(contained, checked)` for the dense-grid maximiser.
    pub dense_nesting: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub alpha: f64,
    pub n_replications: usize,
    pub entries: Vec<CoverageEntry>,
}

impl CoverageReport {
    pub fn from_replications(s: &CoverageSettings, reps: &[Replication]) -> Self {
        let truth = s.sim.model.theta;
        let entries = s
            .knot_counts
            .iter()
            .enumerate()
            .map(|(j, &knots)| {
                let ok: Vec<&KnotOutcome> = reps.iter().filter_map(|r| r.outcomes.get(j)?.as_ref().ok()).collect();
                let n = ok.len();
                let freq = |f: &dyn Fn(&KnotOutcome) -> bool| {
                    if n == 0 {
                        f64::NAN
                    } else {
                        ok.iter().filter(|o| f(o)).count() as f64 / n as f64
                    }
                };
                let mse = ok
                    .iter()
                    .map(|o| {
                        let e1 = o.theta_hat.t1() - truth.t1();
                        let e2 = o.theta_hat.t2() - truth.t2();
                        0.5 * (e1 * e1 + e2 * e2)
                    })
                    .sum::<f64>()
                    / n as f64;
                let checked: Vec<bool> = ok.iter().filter_map(|o| o.dense_in_set).collect();
                CoverageEntry {
                    knots,
                    n_rep: n,
                    n_failed: reps.len() - n,
                    mse,
                    set_cov: freq(&|o| o.membership.set_estimate),
                    robust_cov: freq(&|o| o.membership.robust_ci),
                    std_cov: freq(&|o| o.membership.standard_ci),
                    dense_nesting: s
                        .dense_check
                        .then(|| (checked.iter().filter(|&&b| b).count(), checked.len())),
                }
            })
            .collect();
        CoverageReport {
            alpha: s.alpha,
            n_replications: reps.len(),
            entries,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("knots,n_rep,mse,set_cov,robust_cov,std_cov\n");
        for e in &self.entries {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                e.knots, e.n_rep, e.mse, e.set_cov, e.robust_cov, e.std_cov
            ));
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn entry(&self, knots: usize) -> Option<&CoverageEntry> {
        self.entries.iter().find(|e| e.knots == knots)
    }
}

#[derive(Debug, Clone)]
pub struct CoverageStudy {
    pub report: CoverageReport,
    pub replications: Vec<Replication>,
}

/// Runs every replication (in parallel) and aggregates. Replications that
/// fail outright are recorded as failures of every grid.
pub fn run_coverage(s: &CoverageSettings) -> Result<CoverageStudy> {
    run_coverage_in(s, None)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    settings: CoverageSettings,
    complete: bool,
}

fn rep_path(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("rep_{index:05}.json"))
}

fn write_atomic(path: &Path, text: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Like [`run_coverage`], but when `checkpoint` is given each finished
/// replication is stored there and reused by later runs with the same
/// settings.
pub fn run_coverage_in(s: &CoverageSettings, checkpoint: Option<&Path>) -> Result<CoverageStudy> {
    s.validate()?;
    if let Some(dir) = checkpoint {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mpath = dir.join("manifest.json");
        if mpath.exists() {
            let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
            let old: Manifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
                path: mpath.clone(),
                reason: e.to_string(),
            })?;
            if old.settings != *s {
                return Err(Error::invalid(
                    "coverage checkpoint",
                    format!("{} was written with different settings", mpath.display()),
                ));
            }
        }
        let m = Manifest {
            settings: s.clone(),
            complete: false,
        };
        write_atomic(&mpath, &serde_json::to_string_pretty(&m).expect("manifest serializes"))?;
    }
    let replications: Vec<Replication> = (0..s.n_replications)
        .into_par_iter()
        .map(|i| -> Result<Replication> {
            if let Some(dir) = checkpoint {
                let p = rep_path(dir, i);
                if let Ok(text) = fs::read_to_string(&p) {
                    if let Ok(r) = serde_json::from_str::<Replication>(&text) {
                        return Ok(r);
                    }
                }
            }
            let r = run_replication(s, i).unwrap_or_else(|e| Replication {
                index: i,
                seed: s.replication_seed(i),
                choice1_frequency: f64::NAN,
                outcomes: s.knot_counts.iter().map(|_| Err(e.to_string())).collect(),
                dense: None,
            });
            if let Some(dir) = checkpoint {
                write_atomic(&rep_path(dir, i), &serde_json::to_string(&r).expect("replication serializes"))?;
            }
            Ok(r)
        })
        .collect::<Result<_>>()?;
    if let Some(dir) = checkpoint {
        let m = Manifest {
            settings: s.clone(),
            complete: true,
        };
        write_atomic(&dir.join("manifest.json"), &serde_json::to_string_pretty(&m).expect("manifest serializes"))?;
    }
    Ok(CoverageStudy {
        report: CoverageReport::from_replications(s, &replications),
        replications,
    })
}

/// Summary written next to a membership grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetGridMeta {
    pub knots: usize,
    pub grid: String,
    pub alpha: f64,
    pub crit: f64,
    pub theta_hat: Theta,
    pub sup_ll_point: f64,
    pub sup_ll_lower: f64,
    pub sup_ll_upper: Option<f64>,
    pub theta_lower_hat: Theta,
    pub robust_threshold: RobustThreshold,
}

/// Computes the membership grid for one panel.
pub fn set_grid(
    panel: &Panel,
    model: &ModelSpec,
    config: LikelihoodConfig,
    grid: &ThetaGrid,
    alpha: f64,
    optim: &OptimSettings,
    robust: RobustThreshold,
) -> Result<(Vec<GridRow>, SetGridMeta)> {
    let knots = config.knots.len();
    let crit = chi2_quantile(1.0 - alpha, 2.0)?;
    let nl = NestedLikelihood::new(model, panel, config)?;
    let mle = nl.mle(optim)?;
    let local = optim.single_start(mle.theta.0, optim.initial_step);
    let lower = nl.sup_lower(&local)?;
    let upper = match robust {
        RobustThreshold::SupUpper => Some(nl.sup_upper(&local)?.loglik),
        RobustThreshold::SupLower => None,
    };
    let thresholds = Thresholds {
        sup_ll_lower: lower.loglik,
        sup_ll_point: mle.loglik,
        sup_ll_upper: upper,
        crit,
        robust,
    };
    let rows = nl.membership_grid(grid, &thresholds)?;
    let meta = SetGridMeta {
        knots,
        grid: grid.to_string(),
        alpha,
        crit,
        theta_hat: mle.theta,
        sup_ll_point: mle.loglik,
        sup_ll_lower: lower.loglik,
        sup_ll_upper: upper,
        theta_lower_hat: lower.theta,
        robust_threshold: robust,
    };
    Ok((rows, meta))
}

/// Writes the membership CSV to `out` and its sidecar to `out` with the
/// extension replaced by `meta.json`.
#[allow(clippy::too_many_arguments)]
pub fn export_set_grid(
    panel: &Panel,
    model: &ModelSpec,
    config: LikelihoodConfig,
    grid: &ThetaGrid,
    alpha: f64,
    optim: &OptimSettings,
    robust: RobustThreshold,
    out: &Path,
) -> Result<SetGridMeta> {
    let (rows, meta) = set_grid(panel, model, config, grid, alpha, optim, robust)?;
    fs::write(out, grid_to_csv(&rows)).map_err(|e| Error::io(out, e))?;
    let side = out.with_extension("meta.json");
    fs::write(&side, serde_json::to_string_pretty(&meta).expect("metadata serializes"))
        .map_err(|e| Error::io(&side, e))?;
    Ok(meta)
}
