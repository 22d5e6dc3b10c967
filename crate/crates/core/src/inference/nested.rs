use std::cell::RefCell;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::optim::{maximize, OptimSettings};
use super::{loglik, loglik_envelope_with, GridRow, LikelihoodEnvelope, Panel, Thresholds, ThetaGrid};
use crate::bounds::{b_bar, b_factor, refine_bound, BoundCertificate, BoundMethod, RefineSettings};
use crate::dp::{linspace, solve_from, DrawScheme, DrawSet, SolveSettings, Stencil, ValueTable};
use crate::error::{Error, Result};
use crate::model::{DdcModel, ModelSpec, Theta};

/// How the residual supremum `B̄` is obtained at each candidate θ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundMode {
    /// Treat the approximation as exact (`B̄ = 0`).
    Exact,
    /// Maximise the residual spread over `eval_grid`.
    DenseGrid,
    /// Anchor refinement with `eval_grid` as the candidate grid.
    Refine(RefineSettings),
}

/// How `B̄` is turned into the widening `Q(s, d, d')`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Widening {
    /// `b(s, d, d')·B̄` with state-specific distances.
    PerState,
    /// `factor·B̄` for every rival alternative.
    ModelWide(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodConfig {
    pub knots: Vec<f64>,
    pub n_draws: usize,
    pub draw_seed: u64,
    #[serde(default)]
    pub draw_scheme: DrawScheme,
    pub solve: SolveSettings,
    pub bound: BoundMode,
    pub eval_grid: Vec<f64>,
    pub widening: Widening,
}

impl LikelihoodConfig {
    /// `knot_count` evenly spaced knots, 100 draws, dense-grid suprema over
    /// 1001 points and the model-wide factor.
    pub fn replication(model: &ModelSpec, knot_count: usize, draw_seed: u64) -> Self {
        LikelihoodConfig {
            knots: linspace(model.state_lo, model.state_hi, knot_count),
            n_draws: 100,
            draw_seed,
            draw_scheme: DrawScheme::default(),
            solve: SolveSettings::default(),
            bound: BoundMode::DenseGrid,
            eval_grid: linspace(model.state_lo, model.state_hi, 1001),
            widening: Widening::ModelWide(model.uniform_b_factor()),
        }
    }
}

/// Everything computed at one θ.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub theta: Theta,
    pub table: ValueTable,
    pub certificate: BoundCertificate,
    pub envelope: LikelihoodEnvelope,
    pub solve_iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MleFit {
    pub theta: Theta,
    pub loglik: f64,
    pub at_boundary: bool,
    pub evaluations: usize,
}

/// The nested fixed-point likelihood for one panel: every evaluation solves
/// the dynamic programme at the candidate θ with a fixed draw set.
pub struct NestedLikelihood<'a, M: DdcModel + ?Sized> {
    model: &'a M,
    panel: &'a Panel,
    config: LikelihoodConfig,
    draws: DrawSet,
    stencil: Stencil,
    grid_stencil: Option<Stencil>,
}

impl<'a, M: DdcModel + ?Sized> NestedLikelihood<'a, M> {
    pub fn new(model: &'a M, panel: &'a Panel, config: LikelihoodConfig) -> Result<Self> {
        panel.check(model)?;
        config.solve.validate()?;
        let (lo, hi) = model.state_bounds();
        ValueTable::zeros(config.knots.clone(), model.n_choices())?.check_within(lo, hi)?;
        if !matches!(config.bound, BoundMode::Exact) && config.eval_grid.is_empty() {
            return Err(Error::invalid("bounds.eval_grid", "evaluation grid is empty"));
        }
        if let Widening::ModelWide(f) = config.widening {
            if !(f >= 1.0 && f.is_finite()) {
                return Err(Error::invalid("bounds.widening", format!("model-wide factor must be >= 1, got {f}")));
            }
        }
        let draws = DrawSet::with_scheme(config.draw_scheme, config.draw_seed, model.n_choices(), config.n_draws)?;
        let stencil = Stencil::new(model, &config.knots, &config.knots, &draws);
        let grid_stencil = match config.bound {
            BoundMode::DenseGrid => Some(Stencil::new(model, &config.eval_grid, &config.knots, &draws)),
            _ => None,
        };
        Ok(NestedLikelihood {
            model,
            panel,
            config,
            draws,
            stencil,
            grid_stencil,
        })
    }

    pub fn config(&self) -> &LikelihoodConfig {
        &self.config
    }

    pub fn draws(&self) -> &DrawSet {
        &self.draws
    }

    pub fn solve(&self, theta: &Theta) -> Result<(ValueTable, usize)> {
        let sol = solve_from(self.model, theta, &self.stencil, &self.config.solve, None, true)?;
        Ok((sol.table, sol.report.iterations))
    }

    pub fn certificate(&self, theta: &Theta, table: &ValueTable) -> Result<BoundCertificate> {
        let model = self.model;
        match (&self.config.bound, &self.grid_stencil) {
            (BoundMode::Exact, _) => Ok(BoundCertificate::exact(model.delta_sup())),
            (BoundMode::DenseGrid, Some(st)) => {
                let r = crate::bounds::residual_with_stencil(table, model, theta, st);
                let (mn, mx) = r
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
                let sup = mx - mn;
                Ok(BoundCertificate {
                    delta_sup: model.delta_sup(),
                    b_bar: b_bar(table, model, theta),
                    b_upper: sup,
                    b_lower: sup,
                    method: BoundMethod::DenseGrid,
                })
            }
            (BoundMode::Refine(rs), _) => {
                Ok(refine_bound(table, model, theta, &self.config.eval_grid, &self.draws, rs)?.certificate)
            }
            (BoundMode::DenseGrid, None) => unreachable!("dense-grid stencil is built in new"),
        }
    }

    pub fn envelope(&self, theta: &Theta, table: &ValueTable, cert: &BoundCertificate) -> Result<LikelihoodEnvelope> {
        let model = self.model;
        let b = cert.b_upper;
        match self.config.widening {
            Widening::ModelWide(f) => {
                let q = |_: f64, _: usize, _: usize| f * b;
                Ok(loglik_envelope_with(self.panel, theta, model, table, &q))
            }
            Widening::PerState => {
                b_factor(0.0, 0, 0, model, cert.delta_sup)?;
                let q = |s: f64, d: usize, d2: usize| {
                    b_factor(s, d, d2, model, cert.delta_sup).unwrap_or(f64::INFINITY) * b
                };
                Ok(loglik_envelope_with(self.panel, theta, model, table, &q))
            }
        }
    }

    pub fn evaluate(&self, theta: &Theta) -> Result<Evaluation> {
        let (table, solve_iterations) = self.solve(theta)?;
        let certificate = self.certificate(theta, &table)?;
        let envelope = self.envelope(theta, &table, &certificate)?;
        Ok(Evaluation {
            theta: *theta,
            table,
            certificate,
            envelope,
            solve_iterations,
        })
    }

    /// Plug-in log-likelihood only; skips the certificate.
    pub fn point_loglik(&self, theta: &Theta) -> Result<f64> {
        let (table, _) = self.solve(theta)?;
        Ok(loglik(self.panel, theta, self.model, &table))
    }

    /// Runs the optimiser over `f(θ, V_θ)`. Each solve starts from the
    /// previous candidate's values.
    fn fit(&self, optim: &OptimSettings, f: impl Fn(&Theta, &ValueTable) -> Result<f64>) -> Result<MleFit> {
        let warm: RefCell<Option<Vec<f64>>> = RefCell::new(None);
        let objective = |theta: &Theta| -> Result<f64> {
            let init = warm.borrow_mut().take();
            let sol = solve_from(self.model, theta, &self.stencil, &self.config.solve, init.as_deref(), true);
            let table = match sol {
                Ok(s) => s.table,
                Err(e) => {
                    *warm.borrow_mut() = init;
                    return Err(e);
                }
            };
            let value = f(theta, &table);
            *warm.borrow_mut() = Some(table.values().to_vec());
            value
        };
        let r = maximize(|x| objective(&Theta(x)).unwrap_or(f64::NEG_INFINITY), optim)?;
        Ok(MleFit {
            theta: Theta(r.x),
            loglik: r.value,
            at_boundary: r.at_boundary,
            evaluations: r.evaluations,
        })
    }

    fn envelope_at(&self, theta: &Theta, table: &ValueTable) -> Result<LikelihoodEnvelope> {
        let cert = self.certificate(theta, table)?;
        self.envelope(theta, table, &cert)
    }

    /// Maximises the plug-in log-likelihood.
    pub fn mle(&self, optim: &OptimSettings) -> Result<MleFit> {
        self.fit(optim, |t, v| Ok(loglik(self.panel, t, self.model, v)))
    }

    /// Maximises the lower envelope `𝓛^L`.
    pub fn sup_lower(&self, optim: &OptimSettings) -> Result<MleFit> {
        self.fit(optim, |t, v| Ok(self.envelope_at(t, v)?.ll_lower))
    }

    /// Maximises the upper envelope `𝓛^U`.
    pub fn sup_upper(&self, optim: &OptimSettings) -> Result<MleFit> {
        self.fit(optim, |t, v| Ok(self.envelope_at(t, v)?.ll_upper))
    }

    pub fn classify(&self, theta: &Theta, thresholds: &Thresholds) -> Result<GridRow> {
        let e = self.evaluate(theta)?;
        Ok(GridRow {
            theta: *theta,
            membership: thresholds.classify(&e.envelope)?,
            envelope: e.envelope,
        })
    }

    /// Classifies every grid point; rows come back in grid order.
    pub fn membership_grid(&self, grid: &ThetaGrid, thresholds: &Thresholds) -> Result<Vec<GridRow>> {
        grid.points()
            .par_iter()
            .map(|t| self.classify(t, thresholds))
            .collect()
    }
}
