//! Command-line front end. Every subcommand reads an optional JSON run
//! config, applies flag overrides, echoes the resolved config into the
//! output directory and writes its results there as CSV/JSON.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::bounds::{dense_grid_certificate, refine_bound, BoundCertificate, RefineRound, RefineSettings};
use crate::dp::{linspace, solve_with_stencil, DrawScheme, DrawSet, SolveReport, SolveSettings, Stencil, ValueTable};
use crate::error::{Error, Result};
use crate::experiments::{export_set_grid, run_coverage_in, CoverageSettings};
use crate::inference::{
    BoundMode, LikelihoodConfig, LikelihoodEnvelope, NestedLikelihood, OptimSettings, Panel, RobustThreshold,
    ThetaGrid, Widening,
};
use crate::model::{DdcModel, ModelSpec, SurrogateSpec, Theta};
use crate::sim::{simulate_panel, SimConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimBlock {
    pub horizon: usize,
    pub truth_knots: usize,
    pub truth_draws: usize,
    pub initial_state: f64,
    pub burn_in: usize,
    pub draw_scheme: DrawScheme,
}

impl Default for SimBlock {
    fn default() -> Self {
        let c = SimConfig::new(ModelSpec::table1(), 1000, 0);
        SimBlock {
            horizon: c.horizon,
            truth_knots: c.truth_knots,
            truth_draws: c.truth_draws,
            initial_state: c.initial_state,
            burn_in: c.burn_in,
            draw_scheme: c.draw_scheme,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DpBlock {
    /// Knot count for `solve`.
    pub knots: usize,
    pub n_draws: usize,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for DpBlock {
    fn default() -> Self {
        let s = SolveSettings::default();
        DpBlock {
            knots: 1001,
            n_draws: 100,
            tol: s.tol,
            max_iter: s.max_iter,
        }
    }
}

impl DpBlock {
    pub fn settings(&self) -> SolveSettings {
        SolveSettings {
            tol: self.tol,
            max_iter: self.max_iter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsBlock {
    /// Refinement tolerance; without it suprema are taken over the dense grid.
    pub tau: Option<f64>,
    pub eval_points: usize,
    pub initial_anchor_count: usize,
    pub max_rounds: usize,
    pub per_state_widening: bool,
}

impl Default for BoundsBlock {
    fn default() -> Self {
        let r = RefineSettings::new(1.0);
        BoundsBlock {
            tau: None,
            eval_points: 1001,
            initial_anchor_count: r.initial_anchor_count,
            max_rounds: r.max_rounds,
            per_state_widening: false,
        }
    }
}

impl BoundsBlock {
    fn refine_settings(&self, tau: f64) -> Result<RefineSettings> {
        let r = RefineSettings {
            tau,
            initial_anchor_count: self.initial_anchor_count,
            max_rounds: self.max_rounds,
            continuum_margin: false,
        };
        r.validate()?;
        Ok(r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceBlock {
    /// Estimation knot count.
    pub knots: usize,
    pub alpha: f64,
    /// Panel CSV; when absent the panel is simulated from the sim block.
    pub panel: Option<PathBuf>,
    /// θ grid for `set-grid`; defaults to a box around the model's θ.
    pub grid: Option<String>,
    pub robust_threshold: RobustThreshold,
    pub optim: OptimSettings,
}

impl Default for InferenceBlock {
    fn default() -> Self {
        InferenceBlock {
            knots: 10,
            alpha: 0.05,
            panel: None,
            grid: None,
            robust_threshold: RobustThreshold::default(),
            optim: OptimSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentsBlock {
    pub knot_counts: Vec<usize>,
    pub reps: usize,
    pub dense_check: bool,
}

impl Default for ExperimentsBlock {
    fn default() -> Self {
        ExperimentsBlock {
            knot_counts: vec![10, 100],
            reps: 100,
            dense_check: false,
        }
    }
}

/// A complete run configuration. Every field has a default, so `{}` is a
/// valid config describing the reference bus model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub sim: SimBlock,
    pub dp: DpBlock,
    pub bounds: BoundsBlock,
    pub inference: InferenceBlock,
    pub experiments: ExperimentsBlock,
    /// When present, `solve` and `bound` use this finite model instead of
    /// the bus model.
    pub surrogate: Option<SurrogateSpec>,
}

impl RunConfig {
    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            model: self.model.clone(),
            horizon: self.sim.horizon,
            truth_knots: self.sim.truth_knots,
            truth_draws: self.sim.truth_draws,
            seed: self.seed,
            initial_state: self.sim.initial_state,
            burn_in: self.sim.burn_in,
            solve: self.dp.settings(),
            draw_scheme: self.sim.draw_scheme,
        }
    }

    /// Draw seed for every solve in a run; the simulator uses the same one.
    pub fn draw_seed(&self) -> u64 {
        self.sim_config().truth_draw_seed()
    }

    pub fn output_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.dp.settings().validate()?;
        if self.dp.n_draws == 0 {
            return Err(Error::invalid("dp.n_draws", "need at least one draw"));
        }
        if self.bounds.eval_points < 2 {
            return Err(Error::invalid("bounds.eval_points", "need at least 2 points"));
        }
        if let Some(t) = self.bounds.tau {
            self.bounds.refine_settings(t)?;
        }
        if !(self.inference.alpha > 0.0 && self.inference.alpha < 1.0) {
            return Err(Error::invalid("inference.alpha", "alpha must lie in (0, 1)"));
        }
        if self.inference.knots < 2 {
            return Err(Error::invalid("inference.knots", "need at least 2 knots"));
        }
        if let Some(g) = &self.inference.grid {
            g.parse::<ThetaGrid>()?;
        }
        self.inference.optim.validate()?;
        self.sim_config().validate()
    }

    /// Likelihood setup for `knots` estimation knots.
    pub fn likelihood_config(&self, knots: usize) -> LikelihoodConfig {
        let m = &self.model;
        let mut c = LikelihoodConfig::replication(m, knots, self.draw_seed());
        c.n_draws = self.dp.n_draws;
        c.draw_scheme = self.sim.draw_scheme;
        c.solve = self.dp.settings();
        c.eval_grid = linspace(m.state_lo, m.state_hi, self.bounds.eval_points);
        if let Some(tau) = self.bounds.tau {
            c.bound = BoundMode::Refine(self.bounds.refine_settings(tau).expect("validated"));
        }
        if self.bounds.per_state_widening {
            c.widening = Widening::PerState;
        }
        c
    }

    pub fn coverage_settings(&self) -> CoverageSettings {
        let mut s = CoverageSettings::new(
            self.sim_config(),
            self.experiments.knot_counts.clone(),
            self.experiments.reps,
            self.seed,
        );
        s.sim.truth_draws = self.dp.n_draws;
        s.alpha = self.inference.alpha;
        s.optim = self.inference.optim.clone();
        s.dense_check = self.experiments.dense_check;
        s.robust_threshold = self.inference.robust_threshold;
        s
    }
}

#[derive(Debug, Parser)]
#[command(name = "robust-ddc", version, about = "Approximation-robust estimation for dynamic discrete choice models")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON run config; defaults apply to anything it leaves out.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory, created if missing.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a panel from the dense-grid solution.
    Simulate,
    /// Solve the value function and log convergence.
    Solve {
        #[arg(long)]
        knots: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Certify the residual supremum of a value table.
    Bound {
        /// Value-table CSV as written by `solve`.
        #[arg(long)]
        table: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        tau: Option<f64>,
    },
    /// Point estimate plus likelihood envelope.
    Estimate {
        #[arg(long)]
        panel: Option<PathBuf>,
        #[arg(long)]
        knots: Option<usize>,
        #[arg(long, allow_negative_numbers = true)]
        tau: Option<f64>,
    },
    /// Membership of a θ grid in the set estimate and confidence sets.
    SetGrid {
        #[arg(long)]
        panel: Option<PathBuf>,
        #[arg(long)]
        knots: Option<usize>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        grid: Option<String>,
    },
    /// Monte Carlo coverage study, resumable from `<out>/checkpoint`.
    Coverage {
        #[arg(long)]
        reps: Option<usize>,
        /// Comma-separated estimation knot counts.
        #[arg(long, value_delimiter = ',')]
        knots: Option<Vec<usize>>,
        #[arg(long)]
        alpha: Option<f64>,
    },
}

impl Cli {
    /// Loads the config and applies every flag override.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.common.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.common.seed {
            c.seed = s;
        }
        if let Some(o) = &self.common.out {
            c.out = Some(o.clone());
        }
        match &self.command {
            Command::Simulate => {}
            Command::Solve { knots, tol } => {
                if let Some(k) = knots {
                    c.dp.knots = *k;
                }
                if let Some(t) = tol {
                    c.dp.tol = *t;
                }
            }
            Command::Bound { tau, .. } => {
                if let Some(t) = tau {
                    c.bounds.tau = Some(*t);
                }
            }
            Command::Estimate { panel, knots, tau } => {
                if let Some(p) = panel {
                    c.inference.panel = Some(p.clone());
                }
                if let Some(k) = knots {
                    c.inference.knots = *k;
                }
                if let Some(t) = tau {
                    c.bounds.tau = Some(*t);
                }
            }
            Command::SetGrid {
                panel,
                knots,
                alpha,
                grid,
            } => {
                if let Some(p) = panel {
                    c.inference.panel = Some(p.clone());
                }
                if let Some(k) = knots {
                    c.inference.knots = *k;
                }
                if let Some(a) = alpha {
                    c.inference.alpha = *a;
                }
                if let Some(g) = grid {
                    c.inference.grid = Some(g.clone());
                }
            }
            Command::Coverage { reps, knots, alpha } => {
                if let Some(r) = reps {
                    c.experiments.reps = *r;
                }
                if let Some(k) = knots {
                    c.experiments.knot_counts = k.clone();
                }
                if let Some(a) = alpha {
                    c.inference.alpha = *a;
                }
            }
        }
        c.validate()?;
        Ok(c)
    }

    /// Runs the command on a pool of `--threads` workers.
    pub fn run(&self) -> Result<()> {
        let cfg = self.resolve()?;
        let mut pool = rayon::ThreadPoolBuilder::new();
        if let Some(n) = self.common.threads {
            if n == 0 {
                return Err(Error::invalid("--threads", "need at least one thread"));
            }
            pool = pool.num_threads(n);
        }
        let pool = pool
            .build()
            .map_err(|e| Error::invalid("--threads", e.to_string()))?;
        pool.install(|| execute(&self.command, &cfg))
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write(path, &serde_json::to_string_pretty(value).expect("output serializes"))
}

fn prepare_out(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg.output_dir();
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    write_json(&dir.join("config.resolved.json"), cfg)?;
    Ok(dir)
}

fn load_panel(cfg: &RunConfig) -> Result<Panel> {
    match &cfg.inference.panel {
        Some(p) => Panel::read_csv(p),
        None => Ok(simulate_panel(&cfg.sim_config())?.panel),
    }
}

fn convergence_csv(report: &SolveReport) -> String {
    let mut s = String::from("iteration,delta\n");
    for (i, d) in report.deltas.iter().enumerate() {
        s.push_str(&format!("{},{}\n", i + 1, d));
    }
    s
}

#[derive(Debug, Serialize)]
struct SolveSummary {
    knots: usize,
    n_draws: usize,
    draw_seed: u64,
    iterations: usize,
    final_delta: f64,
}

#[derive(Debug, Serialize)]
struct BoundOutput {
    certificate: BoundCertificate,
    rounds: Vec<RefineRound>,
}

#[derive(Debug, Serialize)]
struct EstimateOutput {
    knots: usize,
    theta_hat: Theta,
    loglik: f64,
    at_boundary: bool,
    evaluations: usize,
    envelope: LikelihoodEnvelope,
    certificate: BoundCertificate,
    theta_lower_hat: Theta,
    sup_ll_lower: f64,
}

fn solve_model<M: DdcModel>(model: &M, theta: &Theta, knots: &[f64], cfg: &RunConfig) -> Result<(ValueTable, SolveReport)> {
    let draws = DrawSet::with_scheme(cfg.sim.draw_scheme, cfg.draw_seed(), model.n_choices(), cfg.dp.n_draws)?;
    let stencil = Stencil::new(model, knots, knots, &draws);
    let sol = solve_with_stencil(model, theta, &stencil, &cfg.dp.settings())?;
    Ok((sol.table, sol.report))
}

fn bound_model<M: DdcModel>(model: &M, theta: &Theta, table: &ValueTable, grid: &[f64], cfg: &RunConfig) -> Result<BoundOutput> {
    let (lo, hi) = model.state_bounds();
    table.check_within(lo, hi)?;
    if table.n_choices() != model.n_choices() {
        return Err(Error::invalid("value table", "choice count does not match the model"));
    }
    let draws = DrawSet::with_scheme(cfg.sim.draw_scheme, cfg.draw_seed(), model.n_choices(), cfg.dp.n_draws)?;
    match cfg.bounds.tau {
        Some(tau) => {
            let r = refine_bound(table, model, theta, grid, &draws, &cfg.bounds.refine_settings(tau)?)?;
            Ok(BoundOutput {
                certificate: r.certificate,
                rounds: r.rounds,
            })
        }
        None => Ok(BoundOutput {
            certificate: dense_grid_certificate(table, model, theta, grid, &draws),
            rounds: Vec::new(),
        }),
    }
}

/// Runs one subcommand with an already resolved config.
pub fn execute(cmd: &Command, cfg: &RunConfig) -> Result<()> {
    let out = prepare_out(cfg)?;
    match cmd {
        Command::Simulate => {
            let sc = cfg.sim_config();
            let sim = simulate_panel(&sc)?;
            sim.write(&sc, &out)?;
            let f = sim.panel.choice_frequencies(cfg.model.n_choices);
            println!("T = {}", sim.panel.len());
            for (d, p) in f.iter().enumerate() {
                println!("choice {d}: {p:.4}");
            }
        }
        Command::Solve { .. } => {
            let (table, report) = match &cfg.surrogate {
                Some(spec) => {
                    let m = spec.build()?;
                    let states = m.states().to_vec();
                    solve_model(&m, &cfg.model.theta, &states, cfg)?
                }
                None => {
                    let m = &cfg.model;
                    solve_model(m, &m.theta, &linspace(m.state_lo, m.state_hi, cfg.dp.knots), cfg)?
                }
            };
            table.write_csv(&out.join("value_table.csv"))?;
            write(&out.join("convergence.csv"), &convergence_csv(&report))?;
            write_json(
                &out.join("solve.json"),
                &SolveSummary {
                    knots: table.knots().len(),
                    n_draws: cfg.dp.n_draws,
                    draw_seed: cfg.draw_seed(),
                    iterations: report.iterations,
                    final_delta: report.final_delta(),
                },
            )?;
            println!("converged in {} iterations", report.iterations);
        }
        Command::Bound { table, .. } => {
            let vtab = ValueTable::read_csv(table)?;
            let res = match &cfg.surrogate {
                Some(spec) => {
                    let m = spec.build()?;
                    let grid = m.states().to_vec();
                    bound_model(&m, &cfg.model.theta, &vtab, &grid, cfg)?
                }
                None => {
                    let m = &cfg.model;
                    let grid = linspace(m.state_lo, m.state_hi, cfg.bounds.eval_points);
                    bound_model(m, &m.theta, &vtab, &grid, cfg)?
                }
            };
            write_json(&out.join("certificate.json"), &res.certificate)?;
            if !res.rounds.is_empty() {
                write_json(&out.join("refinement.json"), &res.rounds)?;
            }
            println!("B_upper = {} B_lower = {}", res.certificate.b_upper, res.certificate.b_lower);
        }
        Command::Estimate { .. } => {
            let panel = load_panel(cfg)?;
            let model = &cfg.model;
            let nl = NestedLikelihood::new(model, &panel, cfg.likelihood_config(cfg.inference.knots))?;
            let mle = nl.mle(&cfg.inference.optim)?;
            let o = &cfg.inference.optim;
            let lower = nl.sup_lower(&o.single_start(mle.theta.0, o.initial_step))?;
            let e = nl.evaluate(&mle.theta)?;
            let res = EstimateOutput {
                knots: cfg.inference.knots,
                theta_hat: mle.theta,
                loglik: mle.loglik,
                at_boundary: mle.at_boundary,
                evaluations: mle.evaluations,
                envelope: e.envelope,
                certificate: e.certificate,
                theta_lower_hat: lower.theta,
                sup_ll_lower: lower.loglik,
            };
            write_json(&out.join("estimate.json"), &res)?;
            println!(
                "theta_hat = ({}, {}){}",
                mle.theta.t1(),
                mle.theta.t2(),
                if mle.at_boundary { " [at boundary]" } else { "" }
            );
        }
        Command::SetGrid { .. } => {
            let panel = load_panel(cfg)?;
            let grid = match &cfg.inference.grid {
                Some(g) => g.parse()?,
                None => ThetaGrid::around(&cfg.model.theta),
            };
            let meta = export_set_grid(
                &panel,
                &cfg.model,
                cfg.likelihood_config(cfg.inference.knots),
                &grid,
                cfg.inference.alpha,
                &cfg.inference.optim,
                cfg.inference.robust_threshold,
                &out.join("set_grid.csv"),
            )?;
            println!("{} grid points, theta_hat = ({}, {})", grid.len(), meta.theta_hat.t1(), meta.theta_hat.t2());
        }
        Command::Coverage { .. } => {
            let s = cfg.coverage_settings();
            let study = run_coverage_in(&s, Some(&out.join("checkpoint")))?;
            write(&out.join("coverage.csv"), &study.report.to_csv())?;
            write(&out.join("coverage.json"), &study.report.to_json())?;
            print!("{}", study.report.to_csv());
        }
    }
    Ok(())
}
