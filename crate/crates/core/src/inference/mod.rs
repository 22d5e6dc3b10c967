//! Likelihoods, likelihood envelopes and set-valued inference.
//!
//! The plug-in log-likelihood evaluates logit choice probabilities at the
//! approximate value function. The envelope shifts each rival's value
//! difference by `∓Q(Sₜ, Dₜ, d')`, giving bounds `𝓛^L ≤ 𝓛 ≤ 𝓛^U` on the
//! log-likelihood under the exact value function. Membership in the set
//! estimate, the robust confidence set and the standard likelihood-ratio
//! confidence set is decided from these three numbers.

pub mod chisq;
mod nested;
pub mod optim;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bounds::{q_bound, BoundCertificate};
use crate::dp::{linspace, ValueTable};
use crate::error::{Error, Result};
use crate::model::{DdcModel, Theta};

pub use chisq::{chi2_cdf, chi2_quantile};
pub use nested::{BoundMode, Evaluation, LikelihoodConfig, MleFit, NestedLikelihood, Widening};
pub use optim::{OptimResult, OptimSettings};

/// Smallest probability fed to `ln`.
pub const PROB_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub state: f64,
    pub choice: usize,
}

/// A single observed time series of states and choices.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    obs: Vec<Observation>,
}

impl Panel {
    pub fn new(obs: Vec<Observation>) -> Result<Self> {
        if obs.is_empty() {
            return Err(Error::invalid("panel", "panel has no observations"));
        }
        if let Some(o) = obs.iter().find(|o| !o.state.is_finite()) {
            return Err(Error::invalid("panel", format!("non-finite state {}", o.state)));
        }
        Ok(Panel { obs })
    }

    /// Checks states and choices against a model.
    pub fn check<M: DdcModel + ?Sized>(&self, model: &M) -> Result<()> {
        let (lo, hi) = model.state_bounds();
        for (t, o) in self.obs.iter().enumerate() {
            if !(lo..=hi).contains(&o.state) {
                return Err(Error::invalid(
                    "panel",
                    format!("observation {} has state {} outside [{lo}, {hi}]", t + 1, o.state),
                ));
            }
            if o.choice >= model.n_choices() {
                return Err(Error::ChoiceOutOfRange {
                    choice: o.choice,
                    n_choices: model.n_choices(),
                });
            }
        }
        Ok(())
    }

    pub fn observations(&self) -> &[Observation] {
        &self.obs
    }

    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    /// Fraction of periods in which each choice was made.
    pub fn choice_frequencies(&self, n_choices: usize) -> Vec<f64> {
        let mut c = vec![0.0; n_choices];
        for o in &self.obs {
            if o.choice < n_choices {
                c[o.choice] += 1.0;
            }
        }
        c.iter().map(|x| x / self.obs.len() as f64).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,state,choice\n");
        for (t, o) in self.obs.iter().enumerate() {
            s.push_str(&format!("{},{},{}\n", t + 1, o.state, o.choice));
        }
        s
    }

    pub fn from_csv(text: &str) -> std::result::Result<Self, String> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, h)) if h.trim() == "t,state,choice" => {}
            Some((_, h)) => return Err(format!("expected header `t,state,choice`, found `{h}`")),
            None => return Err("empty file".into()),
        }
        let mut obs = Vec::new();
        for (i, line) in lines {
            let f: Vec<&str> = line.trim().split(',').collect();
            if f.len() != 3 {
                return Err(format!("line {}: expected 3 fields", i + 1));
            }
            let state: f64 = f[1].parse().map_err(|e| format!("line {}: state: {e}", i + 1))?;
            let choice: usize = f[2].parse().map_err(|e| format!("line {}: choice: {e}", i + 1))?;
            obs.push(Observation { state, choice });
        }
        Panel::new(obs).map_err(|e| e.to_string())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Panel::from_csv(&text).map_err(|reason| Error::Parse {
            path: path.to_path_buf(),
            reason,
        })
    }
}

/// Logit probability of alternative `d` given index values `w`.
pub fn logit_prob(w: &[f64], d: usize) -> f64 {
    let m = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let denom: f64 = w.iter().map(|x| (x - m).exp()).sum();
    ((w[d] - m).exp() / denom).clamp(PROB_FLOOR, 1.0)
}

/// `ln P(d)` with the floor applied; avoids `exp` underflow for the chosen
/// alternative by working in logs.
fn log_logit(w: &[f64], d: usize) -> f64 {
    let m = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + w.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
    (w[d] - lse).max(PROB_FLOOR.ln())
}

/// Probability of choice `d` at state `s` when alternative `d'` has value
/// level `levels[d']`: the logit of `u(s, d'; θ) + β·levels[d']`.
pub fn choice_prob<M: DdcModel + ?Sized>(model: &M, s: f64, d: usize, levels: &[f64], theta: &Theta) -> f64 {
    let w: Vec<f64> = levels
        .iter()
        .enumerate()
        .map(|(k, l)| model.utility(s, k, theta) + model.beta() * l)
        .collect();
    logit_prob(&w, d)
}

/// Log probability of the observed choice with each rival's value difference
/// relative to the chosen alternative shifted by `shift · q(s, d, d')`.
fn obs_loglik<M: DdcModel + ?Sized>(
    model: &M,
    theta: &Theta,
    vtab: &ValueTable,
    o: &Observation,
    shift: f64,
    q: &dyn Fn(f64, usize, usize) -> f64,
    w: &mut Vec<f64>,
) -> f64 {
    let beta = model.beta();
    let own = vtab.eval(o.state, o.choice);
    w.clear();
    for k in 0..model.n_choices() {
        let level = if k == o.choice {
            0.0
        } else {
            vtab.eval(o.state, k) - own + shift * q(o.state, o.choice, k)
        };
        w.push(model.utility(o.state, k, theta) + beta * level);
    }
    log_logit(w, o.choice)
}

/// Plug-in log-likelihood `Σₜ ln P(Dₜ | Sₜ; Ṽ)`.
pub fn loglik<M: DdcModel + ?Sized>(panel: &Panel, theta: &Theta, model: &M, vtab: &ValueTable) -> f64 {
    let mut w = Vec::with_capacity(model.n_choices());
    let zero = |_: f64, _: usize, _: usize| 0.0;
    panel
        .obs
        .iter()
        .map(|o| obs_loglik(model, theta, vtab, o, 0.0, &zero, &mut w))
        .sum()
}

/// Lower, plug-in and upper log-likelihood at one θ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodEnvelope {
    pub ll_lower: f64,
    pub ll_point: f64,
    pub ll_upper: f64,
}

impl LikelihoodEnvelope {
    pub fn width(&self) -> f64 {
        self.ll_upper - self.ll_lower
    }
}

/// Envelope with an arbitrary widening `q(s, d, d') ≥ 0`.
pub fn loglik_envelope_with<M: DdcModel + ?Sized>(
    panel: &Panel,
    theta: &Theta,
    model: &M,
    vtab: &ValueTable,
    q: &dyn Fn(f64, usize, usize) -> f64,
) -> LikelihoodEnvelope {
    let mut w = Vec::with_capacity(model.n_choices());
    let (mut lo, mut pt, mut up) = (0.0, 0.0, 0.0);
    let zero = |_: f64, _: usize, _: usize| 0.0;
    for o in &panel.obs {
        up += obs_loglik(model, theta, vtab, o, -1.0, q, &mut w);
        pt += obs_loglik(model, theta, vtab, o, 0.0, &zero, &mut w);
        lo += obs_loglik(model, theta, vtab, o, 1.0, q, &mut w);
    }
    // Last-ulp rounding in the logit terms must not break the ordering.
    LikelihoodEnvelope {
        ll_lower: lo.min(pt),
        ll_point: pt,
        ll_upper: up.max(pt),
    }
}

/// Envelope with the per-state widening `Q(s, d, d') = b(s, d, d')·B̄`.
pub fn loglik_envelope<M: DdcModel + ?Sized>(
    panel: &Panel,
    theta: &Theta,
    model: &M,
    vtab: &ValueTable,
    cert: &BoundCertificate,
) -> Result<LikelihoodEnvelope> {
    // Surface a degenerate certificate before the closure swallows it.
    q_bound(0.0, 0, 0, cert, model)?;
    let q = |s: f64, d: usize, d2: usize| q_bound(s, d, d2, cert, model).unwrap_or(f64::INFINITY);
    Ok(loglik_envelope_with(panel, theta, model, vtab, &q))
}

/// Which supremum enters the robust confidence set threshold.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RobustThreshold {
    /// `sup 𝓛^L − 𝓛^U(θ) ≤ ½c`.
    #[default]
    SupLower,
    /// `sup 𝓛^U − 𝓛^L(θ) ≤ ½c`; far wider.
    SupUpper,
}

/// Everything needed to classify a θ from its envelope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub sup_ll_lower: f64,
    pub sup_ll_point: f64,
    pub sup_ll_upper: Option<f64>,
    /// Chi-squared critical value `c_{1−α}`.
    pub crit: f64,
    pub robust: RobustThreshold,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Membership {
    pub set_estimate: bool,
    pub robust_ci: bool,
    pub standard_ci: bool,
}

pub fn set_estimate_member(env: &LikelihoodEnvelope, sup_ll_lower: f64) -> bool {
    sup_ll_lower - env.ll_upper <= 0.0
}

pub fn robust_ci_member(env: &LikelihoodEnvelope, sup_ll_lower: f64, crit: f64) -> bool {
    sup_ll_lower - env.ll_upper <= 0.5 * crit
}

pub fn standard_ci_member(env: &LikelihoodEnvelope, sup_ll_point: f64, crit: f64) -> bool {
    sup_ll_point - env.ll_point <= 0.5 * crit
}

impl Thresholds {
    pub fn classify(&self, env: &LikelihoodEnvelope) -> Result<Membership> {
        let robust_ci = match self.robust {
            RobustThreshold::SupLower => robust_ci_member(env, self.sup_ll_lower, self.crit),
            RobustThreshold::SupUpper => {
                let sup = self.sup_ll_upper.ok_or_else(|| {
                    Error::invalid("inference.robust_threshold", "sup of the upper envelope was not computed")
                })?;
                sup - env.ll_lower <= 0.5 * self.crit
            }
        };
        Ok(Membership {
            set_estimate: set_estimate_member(env, self.sup_ll_lower),
            robust_ci,
            standard_ci: standard_ci_member(env, self.sup_ll_point, self.crit),
        })
    }
}

/// One axis of a rectangular θ grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Axis {
    pub fn points(&self) -> Vec<f64> {
        if self.n == 1 {
            vec![self.lo]
        } else {
            linspace(self.lo, self.hi, self.n)
        }
    }
}

/// Rectangular θ grid, written `t1_lo:t1_hi:n1,t2_lo:t2_hi:n2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaGrid {
    pub theta1: Axis,
    pub theta2: Axis,
}

impl ThetaGrid {
    /// 41 × 41 points over `[θ₁ − 1, θ₁ + 1] × [θ₂ − 3, θ₂ + 3]`.
    pub fn around(theta: &Theta) -> Self {
        ThetaGrid {
            theta1: Axis {
                lo: theta.t1() - 1.0,
                hi: theta.t1() + 1.0,
                n: 41,
            },
            theta2: Axis {
                lo: theta.t2() - 3.0,
                hi: theta.t2() + 3.0,
                n: 41,
            },
        }
    }

    /// Grid points, θ₁ varying slowest.
    pub fn points(&self) -> Vec<Theta> {
        let b = self.theta2.points();
        self.theta1
            .points()
            .into_iter()
            .flat_map(|a| b.iter().map(move |&b| Theta::new(a, b)))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.theta1.n * self.theta2.n
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl FromStr for ThetaGrid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |r: String| Error::invalid("grid", r);
        let axes: Vec<&str> = s.split(',').collect();
        if axes.len() != 2 {
            return Err(bad(format!("expected `t1_lo:t1_hi:n1,t2_lo:t2_hi:n2`, got `{s}`")));
        }
        let mut parsed = Vec::new();
        for a in axes {
            let f: Vec<&str> = a.trim().split(':').collect();
            if f.len() != 3 {
                return Err(bad(format!("axis `{a}` must be lo:hi:n")));
            }
            let lo: f64 = f[0].parse().map_err(|_| bad(format!("bad number `{}`", f[0])))?;
            let hi: f64 = f[1].parse().map_err(|_| bad(format!("bad number `{}`", f[1])))?;
            let n: usize = f[2].parse().map_err(|_| bad(format!("bad count `{}`", f[2])))?;
            if n == 0 {
                return Err(bad(format!("axis `{a}` has zero points")));
            }
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(bad(format!("axis `{a}` needs finite lo <= hi")));
            }
            parsed.push(Axis { lo, hi, n });
        }
        Ok(ThetaGrid {
            theta1: parsed[0],
            theta2: parsed[1],
        })
    }
}

impl fmt::Display for ThetaGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (a, b) = (self.theta1, self.theta2);
        write!(f, "{}:{}:{},{}:{}:{}", a.lo, a.hi, a.n, b.lo, b.hi, b.n)
    }
}

/// One row of a membership grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub theta: Theta,
    pub membership: Membership,
    pub envelope: LikelihoodEnvelope,
}

pub const GRID_CSV_HEADER: &str =
    "theta1,theta2,in_set_estimate,in_robust_ci,in_standard_ci,ll_upper,ll_lower,ll_point";

pub fn grid_to_csv(rows: &[GridRow]) -> String {
    let mut s = String::from(GRID_CSV_HEADER);
    s.push('\n');
    for r in rows {
        let m = r.membership;
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.theta.t1(),
            r.theta.t2(),
            m.set_estimate as u8,
            m.robust_ci as u8,
            m.standard_ci as u8,
            r.envelope.ll_upper,
            r.envelope.ll_lower,
            r.envelope.ll_point
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::{linspace, ValueTable};
    use crate::model::ModelSpec;

    #[test]
    fn logit_examples() {
        assert!((logit_prob(&[1.3, 1.3], 0) - 0.5).abs() < 1e-15);
        assert!((logit_prob(&[3f64.ln(), 0.0], 0) - 0.75).abs() < 1e-15);
        assert_eq!(logit_prob(&[0.0, 2000.0], 0), PROB_FLOOR);
        let m = ModelSpec::table1();
        let th = Theta::new(0.0, 0.0);
        let p0 = choice_prob(&m, 4.0, 0, &[0.0, 0.0], &th);
        let p1 = choice_prob(&m, 4.0, 0, &[0.0, 0.5], &th);
        assert!(p1 < p0);
    }

    #[test]
    fn logistic_oracle() {
        // P(Δε ≤ x) for Δε logistic, by trapezoid integration of its density.
        let x = 3f64.ln();
        let n = 200_000;
        let (a, h) = (-60.0, (x + 60.0) / n as f64);
        let dens = |z: f64| (-z).exp() / (1.0 + (-z).exp()).powi(2);
        let mut acc = 0.5 * (dens(a) + dens(x));
        for i in 1..n {
            acc += dens(a + i as f64 * h);
        }
        assert!((acc * h - logit_prob(&[x, 0.0], 0)).abs() < 1e-9);
    }

    fn flat(n: usize) -> ValueTable {
        ValueTable::zeros(linspace(0.0, 20.0, n), 2).unwrap()
    }

    #[test]
    fn loglik_examples() {
        let m = ModelSpec::table1();
        let th = Theta::new(0.0, 0.0);
        let p = Panel::new(vec![Observation { state: 3.0, choice: 1 }]).unwrap();
        assert!((loglik(&p, &th, &m, &flat(3)) - 0.5f64.ln()).abs() < 1e-15);
        let obs: Vec<Observation> = (0..7)
            .map(|i| Observation {
                state: i as f64 * 2.5,
                choice: i % 2,
            })
            .collect();
        let once = Panel::new(obs.clone()).unwrap();
        let twice = Panel::new([obs.clone(), obs].concat()).unwrap();
        let v = ValueTable::from_fn(linspace(0.0, 20.0, 5), 2, |s, d| -0.3 * s + d as f64).unwrap();
        let th = Theta::new(-0.6, -4.0);
        let (a, b) = (loglik(&twice, &th, &m, &v), loglik(&once, &th, &m, &v));
        assert!((a - 2.0 * b).abs() <= 1e-12 * b.abs());
    }

    #[test]
    fn envelope_collapses_and_orders() {
        let m = ModelSpec::table1();
        let th = Theta::new(-0.6, -4.0);
        let v = ValueTable::from_fn(linspace(0.0, 20.0, 5), 2, |s, d| -0.3 * s + d as f64).unwrap();
        let p = Panel::new(vec![
            Observation { state: 2.0, choice: 0 },
            Observation { state: 12.0, choice: 1 },
        ])
        .unwrap();
        let zero = loglik_envelope(&p, &th, &m, &v, &BoundCertificate::exact(1.0)).unwrap();
        assert_eq!(zero.ll_lower, zero.ll_point);
        assert_eq!(zero.ll_upper, zero.ll_point);
        let cert = BoundCertificate::exact(1.0).scaled(1.0);
        let cert = BoundCertificate { b_upper: 0.3, ..cert };
        let e = loglik_envelope(&p, &th, &m, &v, &cert).unwrap();
        assert!(e.ll_lower < e.ll_point && e.ll_point < e.ll_upper);
        assert_eq!(e.ll_point, loglik(&p, &th, &m, &v));
    }

    #[test]
    fn membership_thresholds() {
        let env = LikelihoodEnvelope {
            ll_lower: -110.0,
            ll_point: -105.0,
            ll_upper: -100.0,
        };
        let t = Thresholds {
            sup_ll_lower: -99.0,
            sup_ll_point: -103.0,
            sup_ll_upper: Some(-95.0),
            crit: chi2_quantile(0.95, 2.0).unwrap(),
            robust: RobustThreshold::SupLower,
        };
        let m = t.classify(&env).unwrap();
        assert!(!m.set_estimate && m.robust_ci && m.standard_ci);
        let wide = Thresholds {
            robust: RobustThreshold::SupUpper,
            ..t
        };
        assert!(!wide.classify(&env).unwrap().robust_ci);
        let missing = Thresholds {
            sup_ll_upper: None,
            ..wide
        };
        assert!(missing.classify(&env).is_err());
    }

    #[test]
    fn grid_parsing() {
        let g: ThetaGrid = "-1.6:0.4:41,-7:-1:3".parse().unwrap();
        assert_eq!(g.len(), 123);
        let pts = g.points();
        assert_eq!(pts[0], Theta::new(-1.6, -7.0));
        assert_eq!(pts[1], Theta::new(-1.6, -4.0));
        assert_eq!(pts[122], Theta::new(0.4, -1.0));
        assert!("0:1:0,0:1:3".parse::<ThetaGrid>().is_err());
        assert!("0:1:3".parse::<ThetaGrid>().is_err());
        assert!("1:0:3,0:1:3".parse::<ThetaGrid>().is_err());
        let back: ThetaGrid = g.to_string().parse().unwrap();
        assert_eq!(back, g);
        assert_eq!(ThetaGrid::around(&Theta::new(-0.6, -4.0)).len(), 41 * 41);
    }

    #[test]
    fn panel_csv_round_trip() {
        let p = Panel::new(vec![
            Observation { state: 0.1 + 0.2, choice: 0 },
            Observation { state: 20.0, choice: 1 },
        ])
        .unwrap();
        let back = Panel::from_csv(&p.to_csv()).unwrap();
        assert_eq!(back, p);
        assert!(Panel::from_csv("t,state,choice\n").is_err());
        assert!(Panel::from_csv("a,b\n1,2\n").is_err());
        let bad = Panel::new(vec![Observation { state: 25.0, choice: 0 }]).unwrap();
        assert!(bad.check(&ModelSpec::table1()).is_err());
    }
}
