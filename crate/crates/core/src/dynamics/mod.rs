//! Projected primal-dual ε-subgradient iterations.
//!
//! Every agent `i` holds a primal estimate `x_i` and a dual variable `v_i`.
//! One synchronous round reads only the round-`k` state:
//!
//! ```text
//! x_i ← P_{X_i}[x_i − α (g_i + x̂_i + v̂_i)]
//! v_i ← v_i + α x̂_i
//! ```
//!
//! where `x̂_i = Σ_j a_ij (x_i − x_j)` and `g_i` is an ε-subgradient of `f_i`
//! at `x_i`. The normalized variant divides `α` per agent by
//! `max{c, δ_i}`, with `δ_i` the outcome of a max-consensus over the local
//! operator norms.

mod run;
mod schedule;

pub use run::{run, Experiment, Variant};
pub use schedule::{check_schedule, Mode, Schedule, ScheduleError, Validity, Verdict};

use thiserror::Error;

use crate::blocks::{laplacian_apply, Blocks, ShapeError};
use crate::graph::{max_consensus, CommGraph, GraphError};
use crate::problem::ProblemInstance;
use crate::reference::ReferenceError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("state has {state} agents of dimension {state_dim}, problem has {problem} of dimension {problem_dim}, graph has {graph} nodes")]
    Inconsistent {
        state: usize,
        state_dim: usize,
        problem: usize,
        problem_dim: usize,
        graph: usize,
    },
    #[error("step size must be positive and finite, got {0}")]
    BadStep(f64),
    #[error("accuracy ε must be nonnegative and finite, got {0}")]
    BadEps(f64),
    #[error("oracle of agent {agent} returned a non-finite ε-subgradient")]
    Oracle { agent: usize },
    #[error("normalization floor c must be positive, got {0}")]
    BadFloor(f64),
    #[error("max-consensus rounds D = {rounds} below diameter + 1 = {needed}")]
    TooFewRounds { rounds: usize, needed: usize },
    #[error("normalized variant needs a normalization config")]
    MissingNormalization,
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error(transparent)]
    Reference(#[from] ReferenceError),
}

/// Stacked primal/dual state `z(k) = col(x(k), v(k))`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub x: Blocks,
    pub v: Blocks,
    /// Iteration counter, starting at 1.
    pub k: u64,
}

impl NetworkState {
    pub fn new(x: Blocks, v: Blocks) -> Result<Self, ShapeError> {
        if !x.same_shape(&v) {
            return Err(ShapeError {
                n: x.n(),
                dim: x.dim(),
                expected: x.n() * x.dim(),
                got: v.n() * v.dim(),
            });
        }
        Ok(NetworkState { x, v, k: 1 })
    }

    /// Dual variables start at zero.
    pub fn with_zero_dual(x: Blocks) -> Self {
        let v = Blocks::zeros(x.n(), x.dim());
        NetworkState { x, v, k: 1 }
    }

    pub fn agent_count(&self) -> usize {
        self.x.n()
    }

    pub fn dim(&self) -> usize {
        self.x.dim()
    }
}

/// Floor `c` and number of max-consensus rounds `D` for the normalized
/// iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationConfig {
    pub floor: f64,
    pub rounds: usize,
}

impl NormalizationConfig {
    /// Validates `c > 0` and `D >= diameter(g) + 1`.
    pub fn new(floor: f64, rounds: usize, g: &CommGraph) -> Result<Self, DynamicsError> {
        let cfg = NormalizationConfig { floor, rounds };
        cfg.validate(g)?;
        Ok(cfg)
    }

    /// Smallest admissible `D` for the graph.
    pub fn min_rounds(g: &CommGraph) -> Result<usize, GraphError> {
        Ok(g.diameter()? + 1)
    }

    pub fn validate(&self, g: &CommGraph) -> Result<(), DynamicsError> {
        if !(self.floor.is_finite() && self.floor > 0.0) {
            return Err(DynamicsError::BadFloor(self.floor));
        }
        let needed = Self::min_rounds(g)?;
        if self.rounds < needed {
            return Err(DynamicsError::TooFewRounds {
                rounds: self.rounds,
                needed,
            });
        }
        Ok(())
    }
}

fn check_consistent(
    g: &CommGraph,
    prob: &ProblemInstance,
    s: &NetworkState,
) -> Result<(), DynamicsError> {
    let n = s.agent_count();
    if n != prob.agent_count()
        || n != g.node_count()
        || s.dim() != prob.dim()
        || !s.x.same_shape(&s.v)
    {
        return Err(DynamicsError::Inconsistent {
            state: n,
            state_dim: s.dim(),
            problem: prob.agent_count(),
            problem_dim: prob.dim(),
            graph: g.node_count(),
        });
    }
    Ok(())
}

fn check_step(alpha: f64, eps: f64) -> Result<(), DynamicsError> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(DynamicsError::BadStep(alpha));
    }
    if !(eps.is_finite() && eps >= 0.0) {
        return Err(DynamicsError::BadEps(eps));
    }
    Ok(())
}

/// `x̂_i = Σ_j a_ij (y_i − y_j)`.
pub fn disagreement(g: &CommGraph, y: &Blocks, i: usize) -> Vec<f64> {
    let mut out = vec![0.0; y.dim()];
    g.disagreement_into(y.as_slice(), y.dim(), i, &mut out);
    out
}

/// Per-agent ingredients of one round.
struct LocalTerms {
    /// `g_i + x̂_i + v̂_i`, stacked.
    primal_dir: Blocks,
    /// `x̂_i`, stacked.
    x_hat: Blocks,
}

fn local_terms(
    g: &CommGraph,
    prob: &ProblemInstance,
    s: &NetworkState,
    eps: f64,
) -> Result<LocalTerms, DynamicsError> {
    let (n, dim) = (s.agent_count(), s.dim());
    let mut primal_dir = Blocks::zeros(n, dim);
    let mut x_hat = Blocks::zeros(n, dim);
    let mut v_hat = vec![0.0; dim];
    for i in 0..n {
        let dir = primal_dir.block_mut(i);
        prob.agent(i).oracle.eps_subgradient(s.x.block(i), eps, dir);
        if dir.iter().any(|c| !c.is_finite()) {
            return Err(DynamicsError::Oracle { agent: i });
        }
        g.disagreement_into(s.x.as_slice(), dim, i, x_hat.block_mut(i));
        g.disagreement_into(s.v.as_slice(), dim, i, &mut v_hat);
        for c in 0..dim {
            dir[c] = dir[c] + x_hat.block(i)[c] + v_hat[c];
        }
    }
    Ok(LocalTerms { primal_dir, x_hat })
}

/// The stacked operator `T_ε(z) = col(g + Lx + Lv, −Lx)` of length `2Nd`.
pub fn t_operator(
    g: &CommGraph,
    prob: &ProblemInstance,
    s: &NetworkState,
    eps: f64,
) -> Result<Vec<f64>, DynamicsError> {
    check_consistent(g, prob, s)?;
    if !(eps.is_finite() && eps >= 0.0) {
        return Err(DynamicsError::BadEps(eps));
    }
    let terms = local_terms(g, prob, s, eps)?;
    let mut out = terms.primal_dir.into_vec();
    out.extend(terms.x_hat.as_slice().iter().map(|v| -v));
    Ok(out)
}

/// Agent `i`'s block `col(g_i + x̂_i + v̂_i, −x̂_i)` of `T_ε(z)`, as norms.
fn local_operator_norms(terms: &LocalTerms) -> Vec<f64> {
    (0..terms.x_hat.n())
        .map(|i| {
            let top: f64 = terms.primal_dir.block(i).iter().map(|c| c * c).sum();
            let bottom: f64 = terms.x_hat.block(i).iter().map(|c| c * c).sum();
            (top + bottom).sqrt()
        })
        .collect()
}

fn apply_steps(
    prob: &ProblemInstance,
    s: &NetworkState,
    terms: &LocalTerms,
    steps: &[f64],
) -> NetworkState {
    let mut next = s.clone();
    for (i, &step) in steps.iter().enumerate() {
        let xi = next.x.block_mut(i);
        for (c, xc) in xi.iter_mut().enumerate() {
            *xc -= step * terms.primal_dir.block(i)[c];
        }
        prob.agent(i).set.project(xi);
        let vi = next.v.block_mut(i);
        for (c, vc) in vi.iter_mut().enumerate() {
            *vc += step * terms.x_hat.block(i)[c];
        }
    }
    next.k += 1;
    next
}

/// One synchronous round of the plain iteration with step `alpha` and
/// accuracy `eps`, evaluated agent by agent.
pub fn pd_step(
    g: &CommGraph,
    prob: &ProblemInstance,
    s: &NetworkState,
    alpha: f64,
    eps: f64,
) -> Result<NetworkState, DynamicsError> {
    check_consistent(g, prob, s)?;
    check_step(alpha, eps)?;
    let terms = local_terms(g, prob, s, eps)?;
    Ok(apply_steps(prob, s, &terms, &vec![alpha; s.agent_count()]))
}

/// The same round in stacked form, `z⁺ = P_{X̄}[z − α T_ε(z)]`, with the
/// Laplacian products taken from the matrix `L`.
///
/// The top block is summed as `(g + Lx) + Lv` so that it rounds exactly like
/// the per-agent form; [`pd_step`] and this function agree bitwise.
pub fn pd_step_stacked(
    g: &CommGraph,
    prob: &ProblemInstance,
    s: &NetworkState,
    alpha: f64,
    eps: f64,
) -> Result<NetworkState, DynamicsError> {
    check_consistent(g, prob, s)?;
    check_step(alpha, eps)?;
    let (n, dim) = (s.agent_count(), s.dim());
    let l = g.laplacian();
    let lx = laplacian_apply(&l, &s.x);
    let lv = laplacian_apply(&l, &s.v);

    let mut subgrad = Blocks::zeros(n, dim);
    for i in 0..n {
        let gi = subgrad.block_mut(i);
        prob.agent(i).oracle.eps_subgradient(s.x.block(i), eps, gi);
        if gi.iter().any(|c| !c.is_finite()) {
            return Err(DynamicsError::Oracle { agent: i });
        }
    }
    let top: Vec<f64> = subgrad
        .as_slice()
        .iter()
        .zip(lx.as_slice())
        .zip(lv.as_slice())
        .map(|((gc, lxc), lvc)| gc + lxc + lvc)
        .collect();
    let bottom: Vec<f64> = lx.as_slice().iter().map(|c| -c).collect();

    let mut x: Vec<f64> =
        s.x.as_slice()
            .iter()
            .zip(&top)
            .map(|(xc, tc)| xc - alpha * tc)
            .collect();
    // P_{X̄} projects the primal part onto X_1 × ... × X_N and leaves v free.
    for i in 0..n {
        prob.agent(i).set.project(&mut x[i * dim..(i + 1) * dim]);
    }
    let v: Vec<f64> =
        s.v.as_slice()
            .iter()
            .zip(&bottom)
            .map(|(vc, bc)| vc - alpha * bc)
            .collect();
    Ok(NetworkState {
        x: Blocks::from_vec(n, dim, x)?,
        v: Blocks::from_vec(n, dim, v)?,
        k: s.k + 1,
    })
}

/// One round of the normalized iteration. Returns the next state and the
/// per-agent steps `α / max{c, δ_i}` that were applied.
pub fn npd_step_with_steps(
    g: &CommGraph,
    prob: &ProblemInstance,
    s: &NetworkState,
    alpha: f64,
    eps: f64,
    norm: &NormalizationConfig,
) -> Result<(NetworkState, Vec<f64>), DynamicsError> {
    check_consistent(g, prob, s)?;
    check_step(alpha, eps)?;
    norm.validate(g)?;
    let terms = local_terms(g, prob, s, eps)?;
    let local = local_operator_norms(&terms);
    let shared = max_consensus(g, &local, norm.rounds)?;
    let steps: Vec<f64> = shared.iter().map(|&d| alpha / norm.floor.max(d)).collect();
    Ok((apply_steps(prob, s, &terms, &steps), steps))
}

/// One round of the normalized iteration.
pub fn npd_step(
    g: &CommGraph,
    prob: &ProblemInstance,
    s: &NetworkState,
    alpha: f64,
    eps: f64,
    norm: &NormalizationConfig,
) -> Result<NetworkState, DynamicsError> {
    npd_step_with_steps(g, prob, s, alpha, eps, norm).map(|(next, _)| next)
}
