//! Centralized ground truth for checking the distributed iterations.
//!
//! Everything here sees the whole network at once: the augmented
//! Lagrangian `Φ(x, v) = f̃(x) + vᵀLx + ½xᵀLx`, the gap `Δ`, a scalar
//! constrained minimizer, a saddle point `(x*, v*)` of `Φ`, and a checker
//! that fits the constant of the one-step descent inequality to a trace.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::blocks::{graph_apply, Blocks};
use crate::dynamics::Schedule;
use crate::graph::CommGraph;
use crate::problem::{Interval, ProblemInstance};
use crate::trace::TraceRecord;

/// Slack allowed on `Δ ≥ 0` for rounding.
pub const DELTA_TOL: f64 = 1e-9;
/// Distance below which a bound counts as active.
pub const ACTIVE_SET_TOL: f64 = 1e-9;
/// Slack on the saddle inequalities, relative to `max(1, |Φ(x*, v*)|)`.
pub const SADDLE_TOL: f64 = 1e-9;
/// Random probes per saddle inequality.
pub const SADDLE_PROBES: usize = 1000;

const GRID_POINTS: usize = 4001;
const MAX_BRACKET_DOUBLINGS: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReferenceError {
    #[error("reference solvers need scalar decision variables, got dimension {0}")]
    NotScalar(usize),
    #[error("reference solvers need interval constraint sets")]
    NotIntervals,
    #[error("objective appears unbounded below")]
    Unbounded,
    #[error("graph is disconnected")]
    Disconnected,
    #[error("no multipliers balance the subgradients at x* (residual {0})")]
    NoBalance(f64),
    #[error("Laplacian system for v* could not be solved")]
    Singular,
    #[error("saddle inequality violated by {violation} at probe {probe}")]
    SaddleViolated { probe: usize, violation: f64 },
    #[error("Δ = {0} is negative; the saddle point is invalid")]
    NegativeDelta(f64),
    #[error("shape mismatch between trace, saddle point and problem")]
    ShapeMismatch,
    #[error("trace records {0} and {1} are not consecutive")]
    NonConsecutive(u64, u64),
    #[error("record {k} has no delta value")]
    MissingDelta { k: u64 },
}

/// A saddle point `(x*, v*)` of `Φ` with `x*` at consensus.
#[derive(Debug, Clone, PartialEq)]
pub struct SaddlePoint {
    pub x_star: Blocks,
    pub v_star: Blocks,
    pub f_star: f64,
    /// Exact subgradients `g_i* ∈ ∂f_i(x*)` used in the construction.
    pub subgradients: Vec<f64>,
    /// Normal-cone multipliers `n_i`; positive only at an active upper
    /// bound, negative only at an active lower bound.
    pub multipliers: Vec<f64>,
}

impl SaddlePoint {
    /// `‖z − z*‖` for `z = col(x, v)`.
    pub fn distance(&self, x: &Blocks, v: &Blocks) -> f64 {
        let dx = x.distance(&self.x_star);
        let dv = v.distance(&self.v_star);
        (dx * dx + dv * dv).sqrt()
    }

    /// The scalar optimum, for `d = 1`.
    pub fn x_star_scalar(&self) -> f64 {
        self.x_star.block(0)[0]
    }
}

/// `Φ(x, v) = f̃(x) + vᵀ(L⊗I)x + ½xᵀ(L⊗I)x`.
pub fn phi(g: &CommGraph, prob: &ProblemInstance, x: &Blocks, v: &Blocks) -> f64 {
    let lx = graph_apply(g, x);
    prob.separable_objective(x.as_slice()) + v.dot(&lx) + 0.5 * x.dot(&lx)
}

/// `Δ(x) = Φ(x, v*) − Φ(x*, v*) + ½xᵀLx`, nonnegative on `X̃`.
pub fn delta(
    g: &CommGraph,
    prob: &ProblemInstance,
    x: &Blocks,
    saddle: &SaddlePoint,
) -> Result<f64, ReferenceError> {
    if !x.same_shape(&saddle.x_star) {
        return Err(ReferenceError::ShapeMismatch);
    }
    let lx = graph_apply(g, x);
    let value = phi(g, prob, x, &saddle.v_star) - phi(g, prob, &saddle.x_star, &saddle.v_star)
        + 0.5 * x.dot(&lx);
    if value < -DELTA_TOL {
        return Err(ReferenceError::NegativeDelta(value));
    }
    Ok(value)
}

fn scalar_feasible_set(prob: &ProblemInstance) -> Result<Interval, ReferenceError> {
    if prob.dim() != 1 {
        return Err(ReferenceError::NotScalar(prob.dim()));
    }
    prob.feasible_interval().ok_or(ReferenceError::NotIntervals)
}

/// Walks from `start` in direction `dir` with doubling steps until the
/// objective stops decreasing or `limit` is hit.
fn bracket_side(
    f: &dyn Fn(f64) -> f64,
    start: f64,
    dir: f64,
    limit: f64,
) -> Result<f64, ReferenceError> {
    if limit.is_finite() {
        return Ok(limit);
    }
    let mut step = 1.0;
    let mut prev = f(start);
    for _ in 0..MAX_BRACKET_DOUBLINGS {
        let probe = start + dir * step;
        let value = f(probe);
        if value >= prev {
            return Ok(probe);
        }
        prev = value;
        step *= 2.0;
    }
    Err(ReferenceError::Unbounded)
}

/// Bisection on the sign of the summed subdifferential inside `[a, b]`.
/// Exact up to float spacing for convex objectives, unlike value-based
/// searches that stall at `√ε_machine` on a flat minimum.
fn subgradient_bisection(prob: &ProblemInstance, mut a: f64, mut b: f64) -> f64 {
    let sum_sub = |x: f64| {
        prob.agents().iter().fold((0.0, 0.0), |(l, h), agent| {
            let (gl, gh) = agent.oracle.subdifferential_1d(x);
            (l + gl, h + gh)
        })
    };
    if sum_sub(a).1 >= 0.0 {
        return a;
    }
    if sum_sub(b).0 <= 0.0 {
        return b;
    }
    loop {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            return m;
        }
        let (lo, hi) = sum_sub(m);
        if hi < 0.0 {
            a = m;
        } else if lo > 0.0 {
            b = m;
        } else {
            return m;
        }
    }
}

/// Minimizes `Σ f_i` over the intersection of the interval sets by a grid
/// scan followed by subgradient bisection. Returns `(x*, f*)`.
pub fn solve_1d(prob: &ProblemInstance) -> Result<(f64, f64), ReferenceError> {
    let set = scalar_feasible_set(prob)?;
    let f = |x: f64| prob.objective(&[x]);
    let start = set.project_scalar(0.0);
    let lo = bracket_side(&f, start, -1.0, set.lower())?;
    let hi = bracket_side(&f, start, 1.0, set.upper())?;

    let mut best = (lo, f(lo));
    let width = hi - lo;
    let grid: Vec<f64> = (0..GRID_POINTS)
        .map(|s| lo + width * s as f64 / (GRID_POINTS - 1) as f64)
        .collect();
    let mut best_idx = 0;
    for (idx, &x) in grid.iter().enumerate() {
        let fx = f(x);
        if fx < best.1 {
            best = (x, fx);
            best_idx = idx;
        }
    }
    let a = grid[best_idx.saturating_sub(1)];
    let b = grid[(best_idx + 1).min(GRID_POINTS - 1)];
    let refined = subgradient_bisection(prob, a, b);

    // Endpoints are candidates too, so a minimizer on the boundary is
    // reported exactly.
    let mut candidates = vec![refined, best.0];
    candidates.extend(
        [set.lower(), set.upper()]
            .into_iter()
            .filter(|v| v.is_finite()),
    );
    let (x_star, f_star) =
        candidates
            .into_iter()
            .map(|x| (x, f(x)))
            .fold(
                (f64::NAN, f64::INFINITY),
                |acc, c| if c.1 < acc.1 { c } else { acc },
            );
    Ok((x_star, f_star))
}

/// Picks `a_i ∈ [lo_i, hi_i]` (bounds may be infinite) with `Σ a_i = 0`,
/// starting from `start_i` and moving agents in index order.
fn balance(start: &[f64], lo: &[f64], hi: &[f64]) -> Result<Vec<f64>, ReferenceError> {
    let mut a: Vec<f64> = start
        .iter()
        .zip(lo.iter().zip(hi))
        .map(|(&s, (&l, &h))| s.clamp(l, h))
        .collect();
    let scale = 1.0 + a.iter().map(|v| v.abs()).sum::<f64>();
    let mut excess: f64 = a.iter().sum();
    for i in 0..a.len() {
        if excess.abs() <= 1e-12 * scale {
            break;
        }
        if excess > 0.0 {
            let take = (a[i] - lo[i]).min(excess);
            a[i] -= take;
            excess -= take;
        } else {
            let give = (hi[i] - a[i]).min(-excess);
            a[i] += give;
            excess += give;
        }
    }
    let residual: f64 = a.iter().sum();
    if residual.abs() > 1e-9 * scale {
        return Err(ReferenceError::NoBalance(residual));
    }
    Ok(a)
}

/// Mean-zero least-squares solution of `L v = rhs` for a connected graph,
/// via `(L + 11ᵀ/N) v = rhs`.
fn solve_laplacian(l: &DMatrix<f64>, rhs: &[f64]) -> Result<Vec<f64>, ReferenceError> {
    let n = rhs.len();
    let shifted = l + DMatrix::from_element(n, n, 1.0 / n as f64);
    let mean = rhs.iter().sum::<f64>() / n as f64;
    let b = DVector::from_iterator(n, rhs.iter().map(|r| r - mean));
    let mut v = shifted.lu().solve(&b).ok_or(ReferenceError::Singular)?;
    let vmean = v.mean();
    v.add_scalar_mut(-vmean);
    Ok(v.iter().copied().collect())
}

/// Constructs a saddle point of `Φ` for a scalar interval-constrained
/// problem on a connected graph and spot-checks both saddle inequalities.
pub fn solve_saddle(g: &CommGraph, prob: &ProblemInstance) -> Result<SaddlePoint, ReferenceError> {
    if !g.is_connected() {
        return Err(ReferenceError::Disconnected);
    }
    if g.node_count() != prob.agent_count() {
        return Err(ReferenceError::ShapeMismatch);
    }
    let (x_star, f_star) = solve_1d(prob)?;
    let n = prob.agent_count();

    let mut sub_lo = Vec::with_capacity(n);
    let mut sub_hi = Vec::with_capacity(n);
    let mut lo = Vec::with_capacity(n);
    let mut hi = Vec::with_capacity(n);
    for agent in prob.agents() {
        let set = agent
            .set
            .as_interval()
            .ok_or(ReferenceError::NotIntervals)?;
        let (gl, gh) = agent.oracle.subdifferential_1d(x_star);
        let lower_active = (x_star - set.lower()).abs() <= ACTIVE_SET_TOL;
        let upper_active = (set.upper() - x_star).abs() <= ACTIVE_SET_TOL;
        sub_lo.push(gl);
        sub_hi.push(gh);
        lo.push(if lower_active { f64::NEG_INFINITY } else { gl });
        hi.push(if upper_active { f64::INFINITY } else { gh });
    }
    let mid: Vec<f64> = sub_lo
        .iter()
        .zip(&sub_hi)
        .map(|(l, h)| 0.5 * (l + h))
        .collect();
    let combined = balance(&mid, &lo, &hi)?;
    let subgradients: Vec<f64> = combined
        .iter()
        .zip(sub_lo.iter().zip(&sub_hi))
        .map(|(&a, (&l, &h))| a.clamp(l, h))
        .collect();
    let multipliers: Vec<f64> = combined
        .iter()
        .zip(&subgradients)
        .map(|(a, s)| a - s)
        .collect();

    let rhs: Vec<f64> = combined.iter().map(|a| -a).collect();
    let v_star = solve_laplacian(&g.laplacian(), &rhs)?;

    let saddle = SaddlePoint {
        x_star: Blocks::from_scalars(&vec![x_star; n]),
        v_star: Blocks::from_scalars(&v_star),
        f_star,
        subgradients,
        multipliers,
    };
    verify_saddle(g, prob, &saddle, SADDLE_PROBES, 0x5add1e)?;
    Ok(saddle)
}

/// Checks `Φ(x*, v) ≤ Φ(x*, v*) ≤ Φ(x, v*)` on random probes: `x` over the
/// product of the sets (infinite sides truncated to `x* ± 10`), `v` over
/// the box `v* ± 10`.
pub fn verify_saddle(
    g: &CommGraph,
    prob: &ProblemInstance,
    saddle: &SaddlePoint,
    probes: usize,
    seed: u64,
) -> Result<(), ReferenceError> {
    let n = prob.agent_count();
    let center = phi(g, prob, &saddle.x_star, &saddle.v_star);
    let tol = SADDLE_TOL * center.abs().max(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs = saddle.x_star_scalar();
    let boxes: Vec<(f64, f64)> = prob
        .agents()
        .iter()
        .map(|a| {
            let set = a.set.as_interval().ok_or(ReferenceError::NotIntervals)?;
            Ok((set.lower().max(xs - 10.0), set.upper().min(xs + 10.0)))
        })
        .collect::<Result<_, ReferenceError>>()?;
    for probe in 0..probes {
        let v: Vec<f64> = saddle
            .v_star
            .as_slice()
            .iter()
            .map(|c| c + rng.random_range(-10.0..=10.0))
            .collect();
        let left = phi(g, prob, &saddle.x_star, &Blocks::from_scalars(&v)) - center;
        let x: Vec<f64> = boxes
            .iter()
            .map(|&(l, h)| rng.random_range(l..=h))
            .collect();
        let right = center - phi(g, prob, &Blocks::from_scalars(&x), &saddle.v_star);
        let violation = left.max(right);
        if violation > tol {
            return Err(ReferenceError::SaddleViolated { probe, violation });
        }
    }
    debug_assert_eq!(n, saddle.x_star.n());
    Ok(())
}

/// Outcome of fitting the one-step inequality
/// `‖z⁺ − z*‖² ≤ (1 + C α²)‖z − z*‖² − 2αΔ + 2Nαε + Cα²` to a trace.
#[derive(Debug, Clone, PartialEq)]
pub struct Lemma1Report {
    pub holds: bool,
    /// Smallest `C ≥ 0` satisfying every checked step.
    pub fitted_c1: f64,
    /// Step whose bound determined `fitted_c1`.
    pub binding_k: Option<u64>,
    pub steps_checked: usize,
}

/// Fits the constant `C` of the one-step inequality along a plain-variant
/// trace. Each step gives a closed-form lower bound on `C`; the fit is the
/// largest of them. The inequality fails to hold only when a step has a
/// vanishing `C` coefficient with a positive remainder, or a value is not
/// finite.
pub fn lemma1_check(
    records: &[TraceRecord],
    saddle: &SaddlePoint,
    alpha: &Schedule,
    eps: &Schedule,
) -> Result<Lemma1Report, ReferenceError> {
    let mut report = Lemma1Report {
        holds: true,
        fitted_c1: 0.0,
        binding_k: None,
        steps_checked: 0,
    };
    for pair in records.windows(2) {
        let (cur, next) = (&pair[0], &pair[1]);
        if next.k != cur.k + 1 {
            return Err(ReferenceError::NonConsecutive(cur.k, next.k));
        }
        if !cur.x.same_shape(&saddle.x_star) || !next.x.same_shape(&saddle.x_star) {
            return Err(ReferenceError::ShapeMismatch);
        }
        let delta = cur.delta.ok_or(ReferenceError::MissingDelta { k: cur.k })?;
        let n = cur.x.n() as f64;
        let a = alpha.value(cur.k);
        let e = eps.value(cur.k);
        let d0 = saddle.distance(&cur.x, &cur.v).powi(2);
        let d1 = saddle.distance(&next.x, &next.v).powi(2);
        let remainder = d1 - d0 + 2.0 * a * delta - 2.0 * n * a * e;
        let coefficient = a * a * (d0 + 1.0);
        report.steps_checked += 1;
        if !(remainder.is_finite() && coefficient.is_finite()) {
            report.holds = false;
            continue;
        }
        if coefficient > 0.0 {
            let needed = remainder / coefficient;
            if needed > report.fitted_c1 {
                report.fitted_c1 = needed;
                report.binding_k = Some(cur.k);
            }
        } else if remainder > 0.0 {
            report.holds = false;
        }
    }
    Ok(report)
}
