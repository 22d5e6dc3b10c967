//! Approximate value-function iteration for models with type-1 extreme
//! value shocks.
//!
//! The choice-specific expected value function is stored on a knot grid and
//! linearly interpolated in between ([`ValueTable`]). The expectation over
//! next period's state is a fixed quadrature per `(state, choice)`: exact
//! for finite models, an average over pre-drawn transition variates
//! ([`DrawSet`]) for continuous ones. The draws are fixed once per solve and
//! shared across every Bellman iteration and every candidate parameter.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DdcModel, Theta};
use crate::rng::{derive_seed, stream_rng};

/// Euler–Mascheroni constant: the mean of a standard Gumbel variate.
pub const EULER_MASCHERONI: f64 = 0.577_215_664_901_532_9;

/// Default sup-norm tolerance for value iteration, in utils.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Default iteration cap for value iteration.
pub const DEFAULT_MAX_ITER: usize = 5_000;

/// `n` evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| {
                if i == n - 1 {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

/// Locates `s` on a sorted grid: returns `(i, j, w)` such that the linear
/// interpolant at `s` is `(1 − w)·f[i] + w·f[j]`. Points outside the grid
/// clamp to the end knots.
#[inline]
pub fn bracket(knots: &[f64], s: f64) -> (usize, usize, f64) {
    let last = knots.len() - 1;
    if last == 0 || s <= knots[0] {
        return (0, 0, 0.0);
    }
    if s >= knots[last] {
        return (last, last, 0.0);
    }
    let j = knots.partition_point(|&k| k <= s);
    let i = j - 1;
    let w = (s - knots[i]) / (knots[j] - knots[i]);
    (i, j, w)
}

/// Per-choice values on a strictly increasing knot grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    knots: Vec<f64>,
    n_choices: usize,
    /// Knot-major: `values[k * n_choices + d]`.
    values: Vec<f64>,
}

impl ValueTable {
    pub fn new(knots: Vec<f64>, n_choices: usize, values: Vec<f64>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::invalid("value table", "no knots"));
        }
        if n_choices == 0 || values.len() != knots.len() * n_choices {
            return Err(Error::invalid(
                "value table",
                format!(
                    "expected {} values for {} knots x {} choices, got {}",
                    knots.len() * n_choices,
                    knots.len(),
                    n_choices,
                    values.len()
                ),
            ));
        }
        if knots.windows(2).any(|w| w[0] >= w[1]) || knots.iter().any(|k| !k.is_finite()) {
            return Err(Error::invalid("value table", "knots must be finite and strictly increasing"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("value table", "values must be finite"));
        }
        Ok(ValueTable {
            knots,
            n_choices,
            values,
        })
    }

    pub fn zeros(knots: Vec<f64>, n_choices: usize) -> Result<Self> {
        let n = knots.len() * n_choices;
        Self::new(knots, n_choices, vec![0.0; n])
    }

    /// Builds a table by evaluating `f(state, choice)` at every knot.
    pub fn from_fn(knots: Vec<f64>, n_choices: usize, f: impl Fn(f64, usize) -> f64) -> Result<Self> {
        let values = knots
            .iter()
            .flat_map(|&s| (0..n_choices).map(move |d| (s, d)))
            .map(|(s, d)| f(s, d))
            .collect();
        Self::new(knots, n_choices, values)
    }

    /// Checks that every knot lies in `[lo, hi]`.
    pub fn check_within(&self, lo: f64, hi: f64) -> Result<()> {
        if self.knots[0] < lo || self.knots[self.knots.len() - 1] > hi {
            return Err(Error::invalid(
                "value table",
                format!("knots must lie within [{lo}, {hi}]"),
            ));
        }
        Ok(())
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn n_choices(&self) -> usize {
        self.n_choices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, k: usize, d: usize) -> f64 {
        self.values[k * self.n_choices + d]
    }

    pub fn set(&mut self, k: usize, d: usize, v: f64) {
        self.values[k * self.n_choices + d] = v;
    }

    /// Linear interpolation in the state, clamped outside the knot range.
    pub fn eval(&self, s: f64, d: usize) -> f64 {
        let (i, j, w) = bracket(&self.knots, s);
        let nc = self.n_choices;
        (1.0 - w) * self.values[i * nc + d] + w * self.values[j * nc + d]
    }

    /// `‖self − other‖∞` over knots and choices. Tables must share a grid.
    pub fn sup_distance(&self, other: &ValueTable) -> f64 {
        debug_assert_eq!(self.values.len(), other.values.len());
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn shifted(&self, c: f64) -> ValueTable {
        ValueTable {
            knots: self.knots.clone(),
            n_choices: self.n_choices,
            values: self.values.iter().map(|v| v + c).collect(),
        }
    }

    /// CSV with header `state,choice,value`, one row per knot and choice.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("state,choice,value\n");
        for (k, &s) in self.knots.iter().enumerate() {
            for d in 0..self.n_choices {
                let _ = writeln!(out, "{},{},{}", s, d, self.value(k, d));
            }
        }
        out
    }

    pub fn from_csv(text: &str) -> std::result::Result<Self, String> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next() {
            Some(h) if h.trim() == "state,choice,value" => {}
            other => return Err(format!("expected header state,choice,value, got {other:?}")),
        }
        let mut rows: Vec<(f64, usize, f64)> = Vec::new();
        for (i, line) in lines.enumerate() {
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 3 {
                return Err(format!("row {}: expected 3 fields", i + 2));
            }
            let s: f64 = f[0].parse().map_err(|e| format!("row {}: state: {e}", i + 2))?;
            let d: usize = f[1].parse().map_err(|e| format!("row {}: choice: {e}", i + 2))?;
            let v: f64 = f[2].parse().map_err(|e| format!("row {}: value: {e}", i + 2))?;
            rows.push((s, d, v));
        }
        if rows.is_empty() {
            return Err("no rows".into());
        }
        let n_choices = rows.iter().map(|r| r.1).max().unwrap_or(0) + 1;
        if !rows.len().is_multiple_of(n_choices) {
            return Err("rows do not cover every knot and choice".into());
        }
        let mut knots = Vec::with_capacity(rows.len() / n_choices);
        let mut values = Vec::with_capacity(rows.len());
        for (k, chunk) in rows.chunks(n_choices).enumerate() {
            let s = chunk[0].0;
            for (d, r) in chunk.iter().enumerate() {
                if r.0 != s || r.1 != d {
                    return Err(format!("knot {k}: rows must be grouped by state in choice order"));
                }
                values.push(r.2);
            }
            knots.push(s);
        }
        ValueTable::new(knots, n_choices, values).map_err(|e| e.to_string())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text).map_err(|reason| Error::Parse {
            path: path.to_path_buf(),
            reason,
        })
    }
}

/// How next-state draws vary with the current state.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DrawScheme {
    /// One row of variates per choice, reused at every state. The Monte
    /// Carlo operator is then smooth in the state.
    Common,
    /// Fresh variates for every `(state, choice)`, keyed by the state's bit
    /// pattern, so any two grids that share a state share its draws.
    #[default]
    PerState,
}

/// Uniform variates driving the Monte Carlo expectation over next period's
/// state: the `i`th next-state draw at `(s, d)` is the transition's inverse
/// CDF at `uniforms_at(s, d)[i]`. Variates come from counter-based streams
/// keyed by `(seed, state, choice)`, so a draw set is reproducible and
/// identical across candidate parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawSet {
    seed: u64,
    n: usize,
    n_choices: usize,
    scheme: DrawScheme,
    /// Rows for [`DrawScheme::Common`]; empty otherwise.
    uniforms: Vec<f64>,
}

impl DrawSet {
    pub fn generate(seed: u64, n_choices: usize, n: usize) -> Result<Self> {
        Self::with_scheme(DrawScheme::default(), seed, n_choices, n)
    }

    pub fn with_scheme(scheme: DrawScheme, seed: u64, n_choices: usize, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("draws", "need at least one draw"));
        }
        let mut uniforms = Vec::new();
        if scheme == DrawScheme::Common {
            for d in 0..n_choices {
                let mut rng = stream_rng(seed, d as u64);
                uniforms.extend((0..n).map(|_| rng.random::<f64>()));
            }
        }
        Ok(DrawSet {
            seed,
            n,
            n_choices,
            scheme,
            uniforms,
        })
    }

    /// A common-row draw set with explicit variates, `rows[d][i]`.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.first().map_or(0, Vec::len);
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(Error::invalid("draws", "rows must be nonempty and equally long"));
        }
        if rows.iter().flatten().any(|u| !(0.0..=1.0).contains(u)) {
            return Err(Error::invalid("draws", "variates must lie in [0, 1]"));
        }
        Ok(DrawSet {
            seed: 0,
            n,
            n_choices: rows.len(),
            scheme: DrawScheme::Common,
            uniforms: rows.concat(),
        })
    }

    pub fn scheme(&self) -> DrawScheme {
        self.scheme
    }

    /// Appends the variates for `(s, d)` to `out`.
    pub fn uniforms_at(&self, s: f64, d: usize, out: &mut Vec<f64>) {
        match self.scheme {
            DrawScheme::Common => out.extend_from_slice(self.row(d)),
            DrawScheme::PerState => {
                // +0.0 and -0.0 are the same state.
                let key = (s + 0.0).to_bits();
                let mut rng = stream_rng(derive_seed(self.seed, key, d as u64), 0);
                out.extend((0..self.n).map(|_| rng.random::<f64>()));
            }
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// The shared row of a common-row draw set.
    pub fn row(&self, d: usize) -> &[f64] {
        assert_eq!(self.scheme, DrawScheme::Common, "per-state draw sets have no shared rows");
        &self.uniforms[d * self.n..(d + 1) * self.n]
    }
}

/// Numerically stable `ln Σ exp(xᵢ)`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[inline]
fn lse2(a: f64, b: f64) -> f64 {
    let (m, other) = if a >= b { (a, b) } else { (b, a) };
    m + (other - m).exp().ln_1p()
}

/// Expected maximum of `u(s', d; θ) + β·V(s', d) + ε(d)` over choices at a
/// realised next state: `ln Σ_d exp(u + βV) + γ_E`.
pub fn emax<M: DdcModel + ?Sized>(model: &M, s_next: f64, vtab: &ValueTable, theta: &Theta) -> f64 {
    let beta = model.beta();
    let w: Vec<f64> = (0..model.n_choices())
        .map(|d| model.utility(s_next, d, theta) + beta * vtab.eval(s_next, d))
        .collect();
    log_sum_exp(&w) + EULER_MASCHERONI
}

#[derive(Debug, Clone, Copy)]
struct Node {
    state: f64,
    weight: f64,
    lo: u32,
    hi: u32,
    frac: f64,
}

/// The Bellman operator prepared for a fixed set of evaluation points, a
/// fixed interpolation grid and a fixed draw set. Next-state nodes and their
/// interpolation brackets do not depend on θ, so they are computed once and
/// reused by every application.
#[derive(Debug, Clone)]
pub struct Stencil {
    points: Vec<f64>,
    knots: Vec<f64>,
    n_choices: usize,
    /// `offsets[p * n_choices + d]..offsets[.. + 1]` indexes `nodes`.
    offsets: Vec<usize>,
    nodes: Vec<Node>,
}

const PAR_MIN_POINTS: usize = 64;

impl Stencil {
    pub fn new<M: DdcModel + ?Sized>(model: &M, points: &[f64], knots: &[f64], draws: &DrawSet) -> Self {
        let nc = model.n_choices();
        let mut offsets = Vec::with_capacity(points.len() * nc + 1);
        let mut nodes = Vec::new();
        let mut buf = Vec::new();
        offsets.push(0);
        for &s in points {
            for d in 0..nc {
                buf.clear();
                model.next_state_nodes(s, d, draws, &mut buf);
                nodes.extend(buf.iter().map(|&(x, weight)| {
                    let (lo, hi, frac) = bracket(knots, x);
                    Node {
                        state: x,
                        weight,
                        lo: lo as u32,
                        hi: hi as u32,
                        frac,
                    }
                }));
                offsets.push(nodes.len());
            }
        }
        Stencil {
            points: points.to_vec(),
            knots: knots.to_vec(),
            n_choices: nc,
            offsets,
            nodes,
        }
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    #[inline]
    fn node_emax<M: DdcModel + ?Sized>(&self, model: &M, beta: f64, v: &[f64], theta: &Theta, n: &Node) -> f64 {
        let nc = self.n_choices;
        let (lo, hi) = (n.lo as usize * nc, n.hi as usize * nc);
        let w = |d: usize| {
            let cont = (1.0 - n.frac) * v[lo + d] + n.frac * v[hi + d];
            model.utility(n.state, d, theta) + beta * cont
        };
        if nc == 2 {
            lse2(w(0), w(1))
        } else {
            let m = (0..nc).map(w).fold(f64::NEG_INFINITY, f64::max);
            m + (0..nc).map(|d| (w(d) - m).exp()).sum::<f64>().ln()
        }
    }

    /// `T[V + D] − T[V]` at one node, without cancellation:
    /// `ln Σ_d p_d e^{h_d}` with `p` the choice probabilities at `V` and
    /// `h = β·D`.
    #[inline]
    fn node_increment<M: DdcModel + ?Sized>(
        &self,
        model: &M,
        beta: f64,
        v: &[f64],
        dv: &[f64],
        theta: &Theta,
        n: &Node,
    ) -> f64 {
        let nc = self.n_choices;
        let (lo, hi) = (n.lo as usize * nc, n.hi as usize * nc);
        let interp = |x: &[f64], d: usize| (1.0 - n.frac) * x[lo + d] + n.frac * x[hi + d];
        let a = |d: usize| model.utility(n.state, d, theta) + beta * interp(v, d);
        let h0 = beta * interp(dv, 0);
        if nc == 2 {
            let p1 = 1.0 / (1.0 + (a(0) - a(1)).exp());
            let x = beta * interp(dv, 1) - h0;
            if x.abs() < 1e-3 {
                // Bernoulli cumulants; the fifth-order term is below 1e-16·|x|.
                let v = p1 * (1.0 - p1);
                let k3 = v * (1.0 - 2.0 * p1);
                let k4 = v * (1.0 - 6.0 * v);
                return h0 + x * (p1 + x * (0.5 * v + x * (k3 / 6.0 + x * k4 / 24.0)));
            }
            h0 + (p1 * x.exp_m1()).ln_1p()
        } else {
            let m = (0..nc).map(a).fold(f64::NEG_INFINITY, f64::max);
            let (mut z, mut acc) = (0.0, 0.0);
            for d in 0..nc {
                let e = (a(d) - m).exp();
                z += e;
                acc += e * (beta * interp(dv, d) - h0).exp_m1();
            }
            h0 + (acc / z).ln_1p()
        }
    }

    /// Writes `T[V + D] − T[V]` into `out`, accurate relative to `D` even
    /// when `D` is many orders of magnitude below `V`.
    pub fn apply_increment_into<M: DdcModel + ?Sized>(
        &self,
        model: &M,
        v: &[f64],
        dv: &[f64],
        theta: &Theta,
        out: &mut [f64],
    ) {
        let nc = self.n_choices;
        let beta = model.beta();
        let fill = |(p, chunk): (usize, &mut [f64])| {
            for (d, slot) in chunk.iter_mut().enumerate() {
                let k = p * nc + d;
                let nodes = &self.nodes[self.offsets[k]..self.offsets[k + 1]];
                *slot = nodes
                    .iter()
                    .map(|n| n.weight * self.node_increment(model, beta, v, dv, theta, n))
                    .sum();
            }
        };
        if self.points.len() >= PAR_MIN_POINTS {
            out.par_chunks_mut(nc).enumerate().for_each(fill);
        } else {
            out.chunks_mut(nc).enumerate().for_each(fill);
        }
    }

    fn entry<M: DdcModel + ?Sized>(&self, model: &M, beta: f64, v: &[f64], theta: &Theta, slot: usize) -> f64 {
        let nodes = &self.nodes[self.offsets[slot]..self.offsets[slot + 1]];
        let mut acc = 0.0;
        for n in nodes {
            acc += n.weight * self.node_emax(model, beta, v, theta, n);
        }
        acc + EULER_MASCHERONI
    }

    /// Writes `T[V](p, d)` for every point `p` and choice `d` into `out`
    /// (point-major). `v` holds knot-major values on `self.knots()`.
    pub fn apply_into<M: DdcModel + ?Sized>(&self, model: &M, v: &[f64], theta: &Theta, out: &mut [f64]) {
        let nc = self.n_choices;
        debug_assert_eq!(v.len(), self.knots.len() * nc);
        debug_assert_eq!(out.len(), self.points.len() * nc);
        let beta = model.beta();
        let fill = |(p, chunk): (usize, &mut [f64])| {
            for (d, slot) in chunk.iter_mut().enumerate() {
                *slot = self.entry(model, beta, v, theta, p * nc + d);
            }
        };
        if self.points.len() >= PAR_MIN_POINTS {
            out.par_chunks_mut(nc).enumerate().for_each(fill);
        } else {
            out.chunks_mut(nc).enumerate().for_each(fill);
        }
    }

    pub fn apply<M: DdcModel + ?Sized>(&self, model: &M, v: &[f64], theta: &Theta) -> Vec<f64> {
        let mut out = vec![0.0; self.points.len() * self.n_choices];
        self.apply_into(model, v, theta, &mut out);
        out
    }
}

/// One application of the Bellman operator on the table's own knots.
pub fn bellman_apply<M: DdcModel + ?Sized>(
    vtab: &ValueTable,
    model: &M,
    theta: &Theta,
    draws: &DrawSet,
) -> ValueTable {
    let stencil = Stencil::new(model, vtab.knots(), vtab.knots(), draws);
    let values = stencil.apply(model, vtab.values(), theta);
    ValueTable {
        knots: vtab.knots.clone(),
        n_choices: vtab.n_choices,
        values,
    }
}

/// Stopping rule for value iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveSettings {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolveSettings {
    fn default() -> Self {
        SolveSettings {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

impl SolveSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::invalid("dp.tol", format!("tolerance must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("dp.max_iter", "need at least one iteration"));
        }
        Ok(())
    }
}

/// Per-iteration sup-norm changes of a value iteration run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub deltas: Vec<f64>,
}

impl SolveReport {
    pub fn final_delta(&self) -> f64 {
        self.deltas.last().copied().unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub table: ValueTable,
    pub report: SolveReport,
}

/// Value iteration from `V₀ ≡ 0` with a prepared stencil whose points are
/// its knots. After the first step the iterates are advanced by their
/// increments `T[V_k] − T[V_{k−1}]`, computed directly, so the logged
/// sup-norm changes stay accurate down to the tolerance.
pub fn solve_with_stencil<M: DdcModel + ?Sized>(
    model: &M,
    theta: &Theta,
    stencil: &Stencil,
    settings: &SolveSettings,
) -> Result<Solution> {
    solve_from(model, theta, stencil, settings, None, false)
}

/// As [`solve_with_stencil`], starting from `init` (knot-major values on the
/// stencil's knots) instead of zero.
///
/// With `span_stop` the loop ends once `max − min` of the last increment is
/// below `tol`, and the remaining constant drift `β/(1−β)·mid-range` is added
/// to every entry. Value differences across states and choices are then as
/// accurate as under the sup-norm rule.
pub fn solve_from<M: DdcModel + ?Sized>(
    model: &M,
    theta: &Theta,
    stencil: &Stencil,
    settings: &SolveSettings,
    init: Option<&[f64]>,
    span_stop: bool,
) -> Result<Solution> {
    settings.validate()?;
    let nc = model.n_choices();
    let knots = stencil.knots().to_vec();
    debug_assert_eq!(stencil.points(), &knots[..]);
    let sup = |x: &[f64]| x.iter().fold(0.0, |m: f64, a| m.max(a.abs()));
    let mut prev = match init {
        Some(v) if v.len() == knots.len() * nc => v.to_vec(),
        _ => vec![0.0; knots.len() * nc],
    };
    let mut cur = stencil.apply(model, &prev, theta);
    let mut inc: Vec<f64> = cur.iter().zip(&prev).map(|(a, b)| a - b).collect();
    let mut next = vec![0.0; cur.len()];
    let mut deltas = vec![sup(&inc)];
    for it in 1..=settings.max_iter {
        let delta = deltas[it - 1];
        if !delta.is_finite() {
            break;
        }
        let (lo, hi) = inc
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        if span_stop && hi - lo < settings.tol {
            let beta = model.beta();
            let shift = beta / (1.0 - beta) * 0.5 * (lo + hi);
            cur.iter_mut().for_each(|c| *c += shift);
        }
        if delta < settings.tol || (span_stop && hi - lo < settings.tol) {
            return Ok(Solution {
                table: ValueTable::new(knots, nc, cur)?,
                report: SolveReport {
                    iterations: it,
                    deltas,
                },
            });
        }
        if it == settings.max_iter {
            break;
        }
        stencil.apply_increment_into(model, &prev, &inc, theta, &mut next);
        std::mem::swap(&mut inc, &mut next);
        prev.copy_from_slice(&cur);
        cur.iter_mut().zip(&inc).for_each(|(c, d)| *c += d);
        deltas.push(sup(&inc));
    }
    Err(Error::NonConvergence {
        max_iter: settings.max_iter,
        last_delta: deltas.last().copied().unwrap_or(f64::NAN),
    })
}

/// Solves for the choice-specific value function on `knots` with `n_draws`
/// transition draws per choice generated from `seed`.
pub fn solve_value_function<M: DdcModel + ?Sized>(
    model: &M,
    theta: &Theta,
    knots: &[f64],
    n_draws: usize,
    settings: &SolveSettings,
    seed: u64,
) -> Result<Solution> {
    let (lo, hi) = model.state_bounds();
    ValueTable::zeros(knots.to_vec(), model.n_choices())?.check_within(lo, hi)?;
    let draws = DrawSet::generate(seed, model.n_choices(), n_draws)?;
    let stencil = Stencil::new(model, knots, knots, &draws);
    solve_with_stencil(model, theta, &stencil, settings)
}
