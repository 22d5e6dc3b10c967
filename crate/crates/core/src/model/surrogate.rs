//! A finite-state model whose transition law is a discrete distribution
//! supported on its own states. On its state grid, linear interpolation is
//! the identity and the expectation over next period's state is an exact
//! finite sum, so its Bellman operator is evaluated without approximation
//! and its fixed point can be computed to machine precision. The bound
//! theorems can then be checked against the true value function.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{DdcModel, Theta};
use crate::dp::DrawSet;
use crate::error::{Error, Result};
use crate::rng::stream_rng;

fn default_lo() -> f64 {
    0.0
}
fn default_hi() -> f64 {
    20.0
}
fn default_shift() -> f64 {
    2.0
}
fn default_spread() -> f64 {
    3.0
}

/// Recipe for a [`FiniteSurrogate`]: `n_states` evenly spaced states on
/// `[lo, hi]`; from state `s` under choice `d` the next state is centred at
/// `s + shift` (d = 0) or `s − shift` (d ≥ 1) with a randomly perturbed
/// Gaussian-shaped profile of width `spread`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurrogateSpec {
    pub n_states: usize,
    pub beta: f64,
    pub seed: u64,
    #[serde(default = "default_lo")]
    pub lo: f64,
    #[serde(default = "default_hi")]
    pub hi: f64,
    #[serde(default = "default_shift")]
    pub shift: f64,
    #[serde(default = "default_spread")]
    pub spread: f64,
}

impl SurrogateSpec {
    pub fn new(n_states: usize, beta: f64, seed: u64) -> Self {
        SurrogateSpec {
            n_states,
            beta,
            seed,
            lo: default_lo(),
            hi: default_hi(),
            shift: default_shift(),
            spread: default_spread(),
        }
    }

    pub fn build(&self) -> Result<FiniteSurrogate> {
        if self.n_states < 2 {
            return Err(Error::invalid("surrogate.n_states", "need at least 2 states"));
        }
        if !(self.beta >= 0.0 && self.beta < 1.0) {
            return Err(Error::invalid(
                "surrogate.beta",
                format!("discount factor must satisfy 0 <= beta < 1, got {}", self.beta),
            ));
        }
        if !(self.lo < self.hi && self.spread > 0.0) {
            return Err(Error::invalid("surrogate", "need lo < hi and spread > 0"));
        }
        let n = self.n_states;
        let states: Vec<f64> = (0..n)
            .map(|i| self.lo + (self.hi - self.lo) * i as f64 / (n - 1) as f64)
            .collect();
        let mut rng = stream_rng(self.seed, 0);
        let mut probs = Vec::with_capacity(n * 2 * n);
        for &s in &states {
            for d in 0..2 {
                let centre = if d == 0 { s + self.shift } else { s - self.shift };
                let mut row: Vec<f64> = states
                    .iter()
                    .map(|&x| {
                        let z = (x - centre) / self.spread;
                        (-0.5 * z * z).exp() * rng.random_range(0.5..1.5)
                    })
                    .collect();
                let total: f64 = row.iter().sum();
                if total > 0.0 {
                    row.iter_mut().for_each(|p| *p /= total);
                } else {
                    let nearest = if centre <= self.lo { 0 } else { n - 1 };
                    row[nearest] = 1.0;
                }
                probs.extend(row);
            }
        }
        FiniteSurrogate::from_parts(self.beta, states, probs)
    }
}

/// Finite-state model with utilities `θ₁·s` (d = 0) and `θ₂` (d = 1).
#[derive(Debug, Clone)]
pub struct FiniteSurrogate {
    beta: f64,
    states: Vec<f64>,
    /// `probs[(k * 2 + d) * n + j]` = P(next = states[j] | states[k], d).
    probs: Vec<f64>,
    delta_sup: f64,
}

impl FiniteSurrogate {
    pub fn from_parts(beta: f64, states: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        let n = states.len();
        if probs.len() != n * 2 * n {
            return Err(Error::invalid("surrogate", "transition table has the wrong size"));
        }
        if states.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("surrogate", "states must be strictly increasing"));
        }
        for row in probs.chunks(n) {
            let total: f64 = row.iter().sum();
            if row.iter().any(|&p| p < 0.0) || (total - 1.0).abs() > 1e-12 {
                return Err(Error::invalid("surrogate", "transition rows must be distributions"));
            }
        }
        let mut m = FiniteSurrogate {
            beta,
            states,
            probs,
            delta_sup: 1.0,
        };
        let rows = 2 * n;
        let mut sup = 0.0f64;
        for a in 0..rows {
            for b in (a + 1)..rows {
                sup = sup.max(m.row_tv(a, b));
            }
        }
        m.delta_sup = sup;
        Ok(m)
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    fn n(&self) -> usize {
        self.states.len()
    }

    /// Index of the state nearest to `s`.
    pub fn state_index(&self, s: f64) -> usize {
        let i = self.states.partition_point(|&x| x < s);
        if i == 0 {
            0
        } else if i == self.n() {
            self.n() - 1
        } else if (self.states[i] - s) < (s - self.states[i - 1]) {
            i
        } else {
            i - 1
        }
    }

    pub fn row(&self, k: usize, d: usize) -> &[f64] {
        let n = self.n();
        let r = k * 2 + d;
        &self.probs[r * n..(r + 1) * n]
    }

    fn row_tv(&self, a: usize, b: usize) -> f64 {
        let n = self.n();
        let pa = &self.probs[a * n..(a + 1) * n];
        let pb = &self.probs[b * n..(b + 1) * n];
        0.5 * pa.iter().zip(pb).map(|(x, y)| (x - y).abs()).sum::<f64>()
    }
}

impl DdcModel for FiniteSurrogate {
    fn beta(&self) -> f64 {
        self.beta
    }

    fn n_choices(&self) -> usize {
        2
    }

    fn state_bounds(&self) -> (f64, f64) {
        (self.states[0], self.states[self.n() - 1])
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
        let a = self.state_index(s) * 2 + d;
        let b = self.state_index(s2) * 2 + d2;
        if a == b {
            0.0
        } else {
            self.row_tv(a, b)
        }
    }

    fn delta_sup(&self) -> f64 {
        self.delta_sup
    }

    fn next_state_nodes(&self, s: f64, d: usize, _draws: &DrawSet, out: &mut Vec<(f64, f64)>) {
        let k = self.state_index(s);
        out.extend(
            self.row(k, d)
                .iter()
                .zip(&self.states)
                .filter(|(p, _)| **p > 0.0)
                .map(|(&p, &x)| (x, p)),
        );
    }
}
