//! Certified bounds on the error in approximate value differences.
//!
//! For an approximate value function `Ṽ` and the exact fixed point `V`,
//!
//! ```text
//! |(Ṽ(s,d) − Ṽ(s,d')) − (V(s,d) − V(s,d'))| ≤ b(s,d,d') · B
//! ```
//!
//! where `B = sup |[T Ṽ(s',d') − T Ṽ(s,d)] − [Ṽ(s',d') − Ṽ(s,d)]|` is the
//! spread of the Bellman residual and `b` is an amplification factor built
//! from total variation distances between transition laws. `B` can be
//! computed directly on a dense grid ([`theorem1_sup`]) or bracketed from the
//! operator's values on a finite anchor set ([`theorem2_envelope`]), with the
//! anchors refined until the bracket is tight ([`refine_bound`]).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dp::{bracket, DrawSet, Stencil, ValueTable};
use crate::error::{Error, Result};
use crate::model::{DdcModel, Theta};

/// How the upper bracket of a certificate was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundMethod {
    /// Direct maximisation of the residual spread over a dense grid.
    DenseGrid,
    /// Anchor-set envelope refined until the bracket closes.
    AnchorRefinement,
}

/// Everything needed to widen value differences inside a likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundCertificate {
    pub delta_sup: f64,
    pub b_bar: f64,
    #[serde(rename = "B_upper")]
    pub b_upper: f64,
    #[serde(rename = "B_lower")]
    pub b_lower: f64,
    pub method: BoundMethod,
}

impl BoundCertificate {
    /// A certificate asserting the approximation is exact.
    pub fn exact(delta_sup: f64) -> Self {
        BoundCertificate {
            delta_sup,
            b_bar: 0.0,
            b_upper: 0.0,
            b_lower: 0.0,
            method: BoundMethod::DenseGrid,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.delta_sup)
            && self.b_bar >= 0.0
            && self.b_lower >= 0.0
            && self.b_lower <= self.b_upper
            && self.b_upper.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("certificate", format!("inconsistent certificate {self:?}")))
        }
    }

    /// The same certificate with its upper bracket multiplied by `k ≥ 1`.
    pub fn scaled(&self, k: f64) -> Self {
        BoundCertificate {
            b_upper: self.b_upper * k,
            ..*self
        }
    }
}

/// Amplification factor
/// `(1 − β·δ̄ + β·δ(F_{s,d}, F_{s,d2})) / (1 − β·δ̄)` with `δ̄ = delta_sup`.
pub fn b_factor<M: DdcModel + ?Sized>(s: f64, d: usize, d2: usize, model: &M, delta_sup: f64) -> Result<f64> {
    let beta = model.beta();
    let denom = 1.0 - beta * delta_sup;
    if !(denom > 0.0) {
        return Err(Error::DegenerateBound(beta * delta_sup));
    }
    let delta = if d == d2 {
        0.0
    } else {
        model.transition_tv(s, d, s, d2)
    };
    Ok((denom + beta * delta) / denom)
}

/// `sup_{s,s',d} |u(s,d) + βṼ(s,d) − u(s',d) − βṼ(s',d)|`.
///
/// For utilities linear in the state and piecewise-linear `Ṽ`, the extremes
/// of `u + βṼ` are attained at knots or at the ends of the state interval,
/// so enumerating those points is exact.
pub fn b_bar<M: DdcModel + ?Sized>(vtab: &ValueTable, model: &M, theta: &Theta) -> f64 {
    let (lo, hi) = model.state_bounds();
    let beta = model.beta();
    let mut points: Vec<f64> = vtab.knots().iter().copied().filter(|s| (lo..=hi).contains(s)).collect();
    points.push(lo);
    points.push(hi);
    (0..model.n_choices())
        .map(|d| {
            let (mn, mx) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(mn, mx), &s| {
                let h = model.utility(s, d, theta) + beta * vtab.eval(s, d);
                (mn.min(h), mx.max(h))
            });
            mx - mn
        })
        .fold(0.0, f64::max)
}

/// Bellman residual `T[Ṽ](p, d) − Ṽ(p, d)` at every point and choice
/// (point-major).
pub fn bellman_residual<M: DdcModel + ?Sized>(
    vtab: &ValueTable,
    model: &M,
    theta: &Theta,
    points: &[f64],
    draws: &DrawSet,
) -> Vec<f64> {
    let stencil = Stencil::new(model, points, vtab.knots(), draws);
    residual_with_stencil(vtab, model, theta, &stencil)
}

pub(crate) fn residual_with_stencil<M: DdcModel + ?Sized>(
    vtab: &ValueTable,
    model: &M,
    theta: &Theta,
    stencil: &Stencil,
) -> Vec<f64> {
    let nc = model.n_choices();
    let mut t = stencil.apply(model, vtab.values(), theta);
    for (p, &s) in stencil.points().iter().enumerate() {
        for d in 0..nc {
            t[p * nc + d] -= vtab.eval(s, d);
        }
    }
    t
}

fn spread(xs: &[f64]) -> f64 {
    let (mn, mx) = xs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    if xs.is_empty() {
        0.0
    } else {
        mx - mn
    }
}

/// `max_{s,s',d,d'} |[T Ṽ(s',d') − T Ṽ(s,d)] − [Ṽ(s',d') − Ṽ(s,d)]|` over
/// `eval_grid`, computed as the spread `max g − min g` of the residual `g`.
pub fn theorem1_sup<M: DdcModel + ?Sized>(
    vtab: &ValueTable,
    model: &M,
    theta: &Theta,
    eval_grid: &[f64],
    draws: &DrawSet,
) -> f64 {
    spread(&bellman_residual(vtab, model, theta, eval_grid, draws))
}

/// Certificate from direct maximisation on a dense grid. Both brackets equal
/// the grid supremum.
pub fn dense_grid_certificate<M: DdcModel + ?Sized>(
    vtab: &ValueTable,
    model: &M,
    theta: &Theta,
    eval_grid: &[f64],
    draws: &DrawSet,
) -> BoundCertificate {
    let sup = theorem1_sup(vtab, model, theta, eval_grid, draws);
    BoundCertificate {
        delta_sup: model.delta_sup(),
        b_bar: b_bar(vtab, model, theta),
        b_upper: sup,
        b_lower: sup,
        method: BoundMethod::DenseGrid,
    }
}

/// Upper and lower brackets on the residual spread.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub b_upper: f64,
    pub b_lower: f64,
}

impl Envelope {
    pub fn gap(&self) -> f64 {
        self.b_upper - self.b_lower
    }
}

/// Options for [`theorem2_envelope`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeOptions {
    /// Add a margin covering states between candidate points, so that the
    /// upper bracket holds over the whole state interval rather than only
    /// over the candidate grid.
    pub continuum_margin: bool,
}

/// Brackets the residual spread using the operator's values on the finite
/// anchor set only. The upper bracket is
///
/// ```text
/// sup_{x, x'} [ min_a {T Ṽ(a) + δ(F_x, F_a)·b̄} − max_a {T Ṽ(a) − δ(F_x', F_a)·b̄} − (Ṽ(x) − Ṽ(x')) ]
/// ```
///
/// with `x, x'` ranging over `candidate_grid × choices`; the lower bracket is
/// the exact spread over the anchors themselves.
pub fn theorem2_envelope<M: DdcModel + ?Sized>(
    vtab: &ValueTable,
    model: &M,
    theta: &Theta,
    anchors: &[(f64, usize)],
    candidate_grid: &[f64],
    draws: &DrawSet,
    opts: EnvelopeOptions,
) -> Result<Envelope> {
    if anchors.is_empty() {
        return Err(Error::EmptyAnchorSet);
    }
    if candidate_grid.is_empty() {
        return Err(Error::invalid("candidate grid", "no candidate points"));
    }
    let nc = model.n_choices();
    if let Some(&(_, d)) = anchors.iter().find(|a| a.1 >= nc) {
        return Err(Error::ChoiceOutOfRange { choice: d, n_choices: nc });
    }
    let bb = b_bar(vtab, model, theta);
    let anchor_states: Vec<f64> = anchors.iter().map(|a| a.0).collect();
    let stencil = Stencil::new(model, &anchor_states, vtab.knots(), draws);
    let t_all = stencil.apply(model, vtab.values(), theta);
    let t_anchor: Vec<f64> = anchors.iter().enumerate().map(|(i, &(_, d))| t_all[i * nc + d]).collect();
    let resid: Vec<f64> = anchors
        .iter()
        .zip(&t_anchor)
        .map(|(&(s, d), t)| t - vtab.eval(s, d))
        .collect();
    let b_lower = spread(&resid);

    let candidates: Vec<(f64, usize)> = candidate_grid
        .iter()
        .flat_map(|&s| (0..nc).map(move |d| (s, d)))
        .collect();
    // (upper envelope − Ṽ, lower envelope − Ṽ) per candidate.
    let env: Vec<(f64, f64)> = candidates
        .par_iter()
        .with_min_len(16)
        .map(|&(s, d)| {
            let mut up = f64::INFINITY;
            let mut down = f64::NEG_INFINITY;
            for (&(sa, da), &ta) in anchors.iter().zip(&t_anchor) {
                let w = model.transition_tv(s, d, sa, da) * bb;
                up = up.min(ta + w);
                down = down.max(ta - w);
            }
            let v = vtab.eval(s, d);
            (up - v, down - v)
        })
        .collect();
    let max_up = env.iter().map(|e| e.0).fold(f64::NEG_INFINITY, f64::max);
    let min_down = env.iter().map(|e| e.1).fold(f64::INFINITY, f64::min);
    let mut b_upper = max_up - min_down;
    if opts.continuum_margin {
        b_upper += continuum_margin(vtab, model, candidate_grid, bb);
    }
    Ok(Envelope { b_upper, b_lower })
}

/// Twice the largest change, over half a candidate spacing, of
/// `δ(F_x, ·)·b̄ + |Ṽ|`: any state lies within half a spacing of a candidate.
fn continuum_margin<M: DdcModel + ?Sized>(vtab: &ValueTable, model: &M, grid: &[f64], bb: f64) -> f64 {
    let (lo, hi) = model.state_bounds();
    let mut worst = 0.0f64;
    for (i, &c) in grid.iter().enumerate() {
        let left = if i > 0 { 0.5 * (c - grid[i - 1]) } else { c - lo };
        let right = if i + 1 < grid.len() { 0.5 * (grid[i + 1] - c) } else { hi - c };
        for d in 0..model.n_choices() {
            for (a, b) in [(c - left, c), (c, c + right)] {
                if b <= a {
                    continue;
                }
                let far = if a < c { a } else { b };
                let tv = model.transition_tv(c, d, far, d);
                let vc = vtab.eval(c, d);
                let (ia, _, _) = bracket(vtab.knots(), a);
                let (_, jb, _) = bracket(vtab.knots(), b);
                let mut dv = (vtab.eval(a, d) - vc).abs().max((vtab.eval(b, d) - vc).abs());
                for k in ia..=jb {
                    let s = vtab.knots()[k];
                    if s > a && s < b {
                        dv = dv.max((vtab.value(k, d) - vc).abs());
                    }
                }
                worst = worst.max(tv * bb + dv);
            }
        }
    }
    2.0 * worst
}

/// Settings for [`refine_bound`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefineSettings {
    /// Target bracket width, in utils.
    pub tau: f64,
    pub initial_anchor_count: usize,
    pub max_rounds: usize,
    #[serde(default)]
    pub continuum_margin: bool,
}

impl RefineSettings {
    pub fn new(tau: f64) -> Self {
        RefineSettings {
            tau,
            initial_anchor_count: 11,
            max_rounds: 12,
            continuum_margin: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(Error::invalid("bounds.tau", format!("tau must be positive, got {}", self.tau)));
        }
        if self.initial_anchor_count == 0 || self.max_rounds == 0 {
            return Err(Error::invalid(
                "bounds",
                "initial_anchor_count and max_rounds must be positive",
            ));
        }
        Ok(())
    }
}

/// One round of anchor refinement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefineRound {
    pub anchor_states: usize,
    pub b_upper: f64,
    pub b_lower: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Refinement {
    pub certificate: BoundCertificate,
    pub rounds: Vec<RefineRound>,
}

/// Candidate-grid indices spaced `stride` apart, always including the last.
fn anchor_indices(n: usize, stride: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).step_by(stride).collect();
    if *idx.last().unwrap() != n - 1 {
        idx.push(n - 1);
    }
    idx
}

fn initial_stride(n: usize, want: usize) -> usize {
    let mut stride = 1usize;
    while anchor_indices(n, stride * 2).len() >= want && stride * 2 < n {
        stride *= 2;
    }
    stride
}

/// Brackets the residual spread to within `tau`. Anchors are evenly strided
/// candidate-grid states (all choices at each); each round halves the
/// stride, so anchor sets are nested and the upper bracket never increases.
/// Once the stride reaches one every candidate is an anchor.
pub fn refine_bound<M: DdcModel + ?Sized>(
    vtab: &ValueTable,
    model: &M,
    theta: &Theta,
    candidate_grid: &[f64],
    draws: &DrawSet,
    settings: &RefineSettings,
) -> Result<Refinement> {
    settings.validate()?;
    if candidate_grid.is_empty() {
        return Err(Error::invalid("candidate grid", "no candidate points"));
    }
    let n = candidate_grid.len();
    let nc = model.n_choices();
    let opts = EnvelopeOptions {
        continuum_margin: settings.continuum_margin,
    };
    let mut stride = initial_stride(n, settings.initial_anchor_count);
    let mut rounds = Vec::new();
    let mut last_gap = f64::INFINITY;
    for _ in 0..settings.max_rounds {
        let idx = anchor_indices(n, stride);
        let anchors: Vec<(f64, usize)> = idx
            .iter()
            .flat_map(|&i| (0..nc).map(move |d| (candidate_grid[i], d)))
            .collect();
        let env = theorem2_envelope(vtab, model, theta, &anchors, candidate_grid, draws, opts)?;
        rounds.push(RefineRound {
            anchor_states: idx.len(),
            b_upper: env.b_upper,
            b_lower: env.b_lower,
        });
        last_gap = env.gap();
        if last_gap <= settings.tau {
            let certificate = BoundCertificate {
                delta_sup: model.delta_sup(),
                b_bar: b_bar(vtab, model, theta),
                b_upper: env.b_upper.max(env.b_lower),
                b_lower: env.b_lower,
                method: BoundMethod::AnchorRefinement,
            };
            return Ok(Refinement { certificate, rounds });
        }
        if stride == 1 {
            break;
        }
        stride /= 2;
    }
    Err(Error::RefinementStalled {
        max_rounds: rounds.len(),
        gap: last_gap,
        tau: settings.tau,
    })
}

/// Bound on `|ΔṼ(s,d,d2) − ΔV(s,d,d2)|`: `b(s,d,d2) · B̄`.
pub fn q_bound<M: DdcModel + ?Sized>(s: f64, d: usize, d2: usize, cert: &BoundCertificate, model: &M) -> Result<f64> {
    Ok(b_factor(s, d, d2, model, cert.delta_sup)? * cert.b_upper)
}
