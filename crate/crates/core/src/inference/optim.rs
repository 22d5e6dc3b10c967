//! Box-constrained Nelder–Mead maximisation with a fixed list of starts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimSettings {
    pub starts: Vec<[f64; 2]>,
    pub initial_step: [f64; 2],
    /// Convergence when the simplex diameter falls below this.
    pub xtol: f64,
    pub max_evals: usize,
    pub lower: [f64; 2],
    pub upper: [f64; 2],
}

impl Default for OptimSettings {
    fn default() -> Self {
        OptimSettings {
            starts: vec![[-1.0, -3.0], [-0.3, -5.0], [-0.6, -2.0]],
            initial_step: [0.2, 1.0],
            xtol: 1e-5,
            max_evals: 600,
            lower: [-5.0, -40.0],
            upper: [5.0, 40.0],
        }
    }
}

impl OptimSettings {
    pub fn validate(&self) -> Result<()> {
        if self.starts.is_empty() {
            return Err(Error::invalid("inference.optim.starts", "need at least one start"));
        }
        if !(self.xtol > 0.0) || self.max_evals < 3 {
            return Err(Error::invalid("inference.optim", "xtol must be positive and max_evals at least 3"));
        }
        if (0..2).any(|i| !(self.lower[i] < self.upper[i]) || !(self.initial_step[i] > 0.0)) {
            return Err(Error::invalid("inference.optim", "need lower < upper and positive steps"));
        }
        Ok(())
    }

    /// Same settings with a single start.
    pub fn single_start(&self, x: [f64; 2], step: [f64; 2]) -> Self {
        OptimSettings {
            starts: vec![x],
            initial_step: step,
            ..self.clone()
        }
    }

    fn clamp(&self, x: [f64; 2]) -> [f64; 2] {
        [
            x[0].clamp(self.lower[0], self.upper[0]),
            x[1].clamp(self.lower[1], self.upper[1]),
        ]
    }

    fn near_bound(&self, x: &[f64; 2]) -> bool {
        (0..2).any(|i| {
            let slack = 10.0 * self.xtol;
            x[i] - self.lower[i] <= slack || self.upper[i] - x[i] <= slack
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimResult {
    pub x: [f64; 2],
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
    pub at_boundary: bool,
}

fn dist(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Maximises `f` from one start. Non-finite values count as `-∞`.
pub fn nelder_mead<F: FnMut([f64; 2]) -> f64>(f: &mut F, start: [f64; 2], s: &OptimSettings) -> OptimResult {
    let evals = std::cell::Cell::new(0usize);
    // Minimise the negation.
    let mut g = |x: [f64; 2]| {
        evals.set(evals.get() + 1);
        let v = f(x);
        if v.is_finite() {
            -v
        } else {
            f64::INFINITY
        }
    };
    let x0 = s.clamp(start);
    let mut simplex: Vec<([f64; 2], f64)> = Vec::with_capacity(3);
    simplex.push((x0, g(x0)));
    for i in 0..2 {
        let mut x = x0;
        x[i] += s.initial_step[i];
        if x[i] > s.upper[i] {
            x[i] = x0[i] - s.initial_step[i];
        }
        let x = s.clamp(x);
        simplex.push((x, g(x)));
    }
    let mut converged = false;
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let diameter = dist(&simplex[0].0, &simplex[1].0)
            .max(dist(&simplex[0].0, &simplex[2].0))
            .max(dist(&simplex[1].0, &simplex[2].0));
        if diameter < s.xtol {
            converged = true;
            break;
        }
        if evals.get() >= s.max_evals {
            break;
        }
        let (best, worst) = (simplex[0].1, simplex[2].1);
        let second = simplex[1].1;
        let c = [
            0.5 * (simplex[0].0[0] + simplex[1].0[0]),
            0.5 * (simplex[0].0[1] + simplex[1].0[1]),
        ];
        let xw = simplex[2].0;
        let along = |t: f64| s.clamp([c[0] + t * (xw[0] - c[0]), c[1] + t * (xw[1] - c[1])]);
        let xr = along(-1.0);
        let fr = g(xr);
        if fr < best {
            let xe = along(-2.0);
            let fe = g(xe);
            simplex[2] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < second {
            simplex[2] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < worst {
            let x = along(-0.5);
            (x, g(x))
        } else {
            let x = along(0.5);
            (x, g(x))
        };
        if fc < worst.min(fr) {
            simplex[2] = (xc, fc);
            continue;
        }
        let x0 = simplex[0].0;
        for v in simplex.iter_mut().skip(1) {
            let x = s.clamp([0.5 * (x0[0] + v.0[0]), 0.5 * (x0[1] + v.0[1])]);
            *v = (x, g(x));
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (mut x, mut v) = simplex[0];
    if converged {
        // A flat ridge running out to the box (perfect prediction) stops
        // the simplex early; probe the faces along each axis.
        for i in 0..2 {
            for b in [s.lower[i], s.upper[i]] {
                let mut y = x;
                y[i] = b;
                let fy = g(y);
                if fy <= v {
                    (x, v) = (y, fy);
                }
            }
        }
    }
    OptimResult {
        x,
        value: -v,
        evaluations: evals.get(),
        converged,
        at_boundary: s.near_bound(&x),
    }
}

/// Runs every start and keeps the best converged result.
pub fn maximize<F: FnMut([f64; 2]) -> f64>(mut f: F, s: &OptimSettings) -> Result<OptimResult> {
    s.validate()?;
    let mut best: Option<OptimResult> = None;
    let mut total = 0;
    for &start in &s.starts {
        let r = nelder_mead(&mut f, start, s);
        total += r.evaluations;
        if r.converged && r.value.is_finite() && best.is_none_or(|b| r.value > b.value) {
            best = Some(r);
        }
    }
    match best {
        Some(mut r) => {
            r.evaluations = total;
            Ok(r)
        }
        None => Err(Error::OptimizerFailed(format!(
            "none of {} starts converged within {} evaluations",
            s.starts.len(),
            s.max_evals
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_maximum() {
        let s = OptimSettings::default();
        let r = maximize(|x| -(x[0] - 0.3).powi(2) - 2.0 * (x[1] + 7.0).powi(2) + 1.0, &s).unwrap();
        assert!(r.converged && !r.at_boundary);
        assert!((r.x[0] - 0.3).abs() < 1e-4 && (r.x[1] + 7.0).abs() < 1e-4);
        assert!((r.value - 1.0).abs() < 1e-8);
    }

    #[test]
    fn rosenbrock() {
        let s = OptimSettings {
            max_evals: 5000,
            xtol: 1e-8,
            ..OptimSettings::default()
        };
        let r = maximize(|x| -(1.0 - x[0]).powi(2) - 100.0 * (x[1] - x[0] * x[0]).powi(2), &s).unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4, "{:?}", r.x);
    }

    #[test]
    fn boundary_optimum_is_flagged() {
        let s = OptimSettings::default();
        let r = maximize(|x| -x[1] - (x[0] - 1.0).powi(2), &s).unwrap();
        assert!(r.at_boundary);
        assert!((r.x[1] - s.lower[1]).abs() < 1e-4);
    }

    #[test]
    fn all_starts_failing_is_an_error() {
        let s = OptimSettings::default();
        assert!(matches!(maximize(|_| f64::NAN, &s), Err(Error::OptimizerFailed(_))));
        let tight = OptimSettings {
            max_evals: 4,
            ..OptimSettings::default()
        };
        assert!(maximize(|x| -x[0] * x[0] - x[1] * x[1], &tight).is_err());
    }
}
