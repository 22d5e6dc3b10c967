//! Dynamic discrete choice models.
//!
//! [`DdcModel`] is the interface the solver, the bound machinery and the
//! likelihood code are written against. Two implementations ship:
//! [`ModelSpec`], the continuous-mileage bus-engine repair model, and
//! [`FiniteSurrogate`], a finite-state model whose Bellman operator is
//! evaluated exactly and which serves as a test oracle.

mod kernel;
pub mod surrogate;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dp::DrawSet;
use crate::error::{Error, Result};

pub use kernel::ClippedUniform;
pub use surrogate::{FiniteSurrogate, SurrogateSpec};

/// Utility parameters `(θ₁, θ₂)`: the per-unit-state running cost slope and
/// the fixed repair payoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theta(pub [f64; 2]);

impl Theta {
    pub const fn new(t1: f64, t2: f64) -> Self {
        Theta([t1, t2])
    }

    pub fn t1(&self) -> f64 {
        self.0[0]
    }

    pub fn t2(&self) -> f64 {
        self.0[1]
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

impl fmt::Display for Theta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.0[0], self.0[1])
    }
}

/// A stationary infinite-horizon discrete choice model with additive iid
/// type-1 extreme value shocks and a one-dimensional state.
///
/// Implementations must be pure: every method is a function of its
/// arguments only, so a model can be shared across threads freely.
pub trait DdcModel: Sync {
    fn beta(&self) -> f64;

    fn n_choices(&self) -> usize;

    /// Closed state interval `[lo, hi]`.
    fn state_bounds(&self) -> (f64, f64);

    /// Deterministic flow utility `u(s, d; θ)`. Callers guarantee
    /// `d < n_choices()`.
    fn utility(&self, s: f64, d: usize, theta: &Theta) -> f64;

    /// Total variation distance between the transition laws at `(s, d)` and
    /// `(s2, d2)`.
    fn transition_tv(&self, s: f64, d: usize, s2: f64, d2: usize) -> f64;

    /// An upper bound on the total variation distance over all pairs of
    /// state-choice transition laws. `1.0` is always safe.
    fn delta_sup(&self) -> f64 {
        1.0
    }

    /// Appends the quadrature nodes `(next state, weight)` used to evaluate
    /// the expectation over next period's state at `(s, d)`. Weights sum to
    /// one. Models with a continuous transition use `draws`; exact models
    /// may ignore it.
    fn next_state_nodes(&self, s: f64, d: usize, draws: &DrawSet, out: &mut Vec<(f64, f64)>);

    /// Checked utility evaluation.
    fn checked_utility(&self, s: f64, d: usize, theta: &Theta) -> Result<f64> {
        if d >= self.n_choices() {
            return Err(Error::ChoiceOutOfRange {
                choice: d,
                n_choices: self.n_choices(),
            });
        }
        Ok(self.utility(s, d, theta))
    }
}

fn default_n_choices() -> usize {
    2
}

/// The bus-engine repair model: mileage on `[state_lo, state_hi]`, choice 0
/// keeps running (`u = θ₁·s`), choice 1 repairs (`u = θ₂`), and next period's
/// mileage is `s + γ_{d+1} + U[-γ₃, γ₃]` clipped to the state interval.
///
/// Field names are the JSON keys of the model block in run configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub beta: f64,
    pub theta: Theta,
    pub gamma: [f64; 3],
    pub state_lo: f64,
    pub state_hi: f64,
    #[serde(default = "default_n_choices")]
    pub n_choices: usize,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self::table1()
    }
}

impl ModelSpec {
    /// The reference parameterisation: β = 0.8, θ = (−0.6, −4),
    /// γ = (1, −1, 5), states in [0, 20].
    pub fn table1() -> Self {
        ModelSpec {
            beta: 0.8,
            theta: Theta::new(-0.6, -4.0),
            gamma: [1.0, -1.0, 5.0],
            state_lo: 0.0,
            state_hi: 20.0,
            n_choices: 2,
        }
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_theta(mut self, theta: Theta) -> Self {
        self.theta = theta;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0 && self.beta < 1.0) {
            return Err(Error::invalid(
                "model.beta",
                format!("discount factor must satisfy 0 <= beta < 1, got {}", self.beta),
            ));
        }
        if !(self.state_lo.is_finite() && self.state_hi.is_finite() && self.state_lo < self.state_hi)
        {
            return Err(Error::invalid(
                "model.state_lo/state_hi",
                format!(
                    "state bounds must satisfy state_lo < state_hi, got [{}, {}]",
                    self.state_lo, self.state_hi
                ),
            ));
        }
        if !(self.gamma[2] > 0.0 && self.gamma.iter().all(|g| g.is_finite())) {
            return Err(Error::invalid(
                "model.gamma",
                format!("gamma3 (uniform half-width) must be positive, got {:?}", self.gamma),
            ));
        }
        if !self.theta.is_finite() {
            return Err(Error::invalid("model.theta", "theta must be finite"));
        }
        if self.n_choices < 2 {
            return Err(Error::invalid(
                "model.n_choices",
                format!("need at least 2 choices, got {}", self.n_choices),
            ));
        }
        if self.n_choices != 2 {
            return Err(Error::invalid(
                "model.n_choices",
                "the bus-engine model has exactly 2 choices",
            ));
        }
        Ok(())
    }

    /// The transition law `F_{s,d}`.
    pub fn kernel(&self, s: f64, d: usize) -> ClippedUniform {
        ClippedUniform::new(
            s + self.gamma[d],
            self.gamma[2],
            self.state_lo,
            self.state_hi,
        )
    }

    /// Draws next period's state from `F_{s,d}` by inverse CDF.
    pub fn transition_sample(&self, s: f64, d: usize, u01: f64) -> f64 {
        transition_sample(s, d, &self.gamma, u01, self.state_lo, self.state_hi)
    }

    /// The model-wide amplification factor
    /// `(1 − β + β·min{|γ₁ − γ₂| / (2γ₃), 1}) / (1 − β)`, an upper bound on
    /// the per-state factor when the sup of the total variation is 1.
    pub fn uniform_b_factor(&self) -> f64 {
        let b = self.beta;
        let overlap = ((self.gamma[0] - self.gamma[1]) / (2.0 * self.gamma[2])).abs().min(1.0);
        (1.0 - b + b * overlap) / (1.0 - b)
    }
}

impl DdcModel for ModelSpec {
    fn beta(&self) -> f64 {
        self.beta
    }

    fn n_choices(&self) -> usize {
        self.n_choices
    }

    fn state_bounds(&self) -> (f64, f64) {
        (self.state_lo, self.state_hi)
    }

    #[inline]
    fn utility(&self, s: f64, d: usize, theta: &Theta) -> f64 {
        if d == 0 {
            theta.0[0] * s
        } else {
            theta.0[1]
        }
    }

    fn transition_tv(&self, s: f64, d: usize, s2: f64, d2: usize) -> f64 {
        self.kernel(s, d).tv(&self.kernel(s2, d2))
    }

    // Total variation between clipped shifted uniforms grows with the gap
    // between locations, so the extreme pair attains the supremum.
    fn delta_sup(&self) -> f64 {
        let (dmin, dmax) = (0..self.n_choices).fold((0, 0), |(lo, hi), d| {
            (
                if self.gamma[d] < self.gamma[lo] { d } else { lo },
                if self.gamma[d] > self.gamma[hi] { d } else { hi },
            )
        });
        self.transition_tv(self.state_lo, dmin, self.state_hi, dmax)
    }

    fn next_state_nodes(&self, s: f64, d: usize, draws: &DrawSet, out: &mut Vec<(f64, f64)>) {
        let mut u = Vec::with_capacity(draws.len());
        draws.uniforms_at(s, d, &mut u);
        let w = 1.0 / u.len() as f64;
        out.extend(u.iter().map(|&u| (self.transition_sample(s, d, u), w)));
    }
}

/// Flow utility of the bus-engine model: `θ₁·s` for `d = 0`, `θ₂` for `d = 1`.
pub fn utility(s: f64, d: usize, theta: &Theta) -> Result<f64> {
    match d {
        0 => Ok(theta.t1() * s),
        1 => Ok(theta.t2()),
        _ => Err(Error::ChoiceOutOfRange {
            choice: d,
            n_choices: 2,
        }),
    }
}

/// `clip(s + γ_{d+1} + (2·u01 − 1)·γ₃, lo, hi)`.
#[inline]
pub fn transition_sample(s: f64, d: usize, gamma: &[f64; 3], u01: f64, lo: f64, hi: f64) -> f64 {
    (s + gamma[d] + (2.0 * u01 - 1.0) * gamma[2]).clamp(lo, hi)
}
