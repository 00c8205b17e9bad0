//! Per-agent objectives and constraint sets.
//!
//! Each agent owns an objective `f_i` queried through an ε-subgradient
//! oracle, and a closed convex set `X_i` queried through Euclidean
//! projection. Points are `&[f64]` blocks of the problem dimension.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// Absolute slack used when checking the ε-subgradient inequality.
pub const EPS_SUBGRADIENT_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("interval [{lower}, {upper}] is empty or malformed")]
    BadInterval { lower: f64, upper: f64 },
    #[error("constraint sets have empty intersection [{lower}, {upper}]")]
    EmptyIntersection { lower: f64, upper: f64 },
    #[error("problem needs at least one agent")]
    NoAgents,
    #[error("dimension must be positive")]
    ZeroDimension,
    #[error("agent {agent}: expected {expected} values, got {got}")]
    DimensionMismatch {
        agent: usize,
        expected: usize,
        got: usize,
    },
    #[error("regularization weight must be finite and nonnegative, got {0}")]
    BadLambda(f64),
}

/// Value and ε-subgradient selection for one convex objective.
///
/// Implementations must be deterministic: the same `(x, eps)` always yields
/// the same selection.
pub trait EpsSubgradientOracle: fmt::Debug + Send + Sync {
    fn value(&self, x: &[f64]) -> f64;

    /// Writes some `g` with `f(y) >= f(x) + g·(y - x) - eps` for all `y`.
    fn eps_subgradient(&self, x: &[f64], eps: f64, out: &mut [f64]);

    /// Exact subdifferential `[lo, hi]` of a scalar objective at `x`.
    ///
    /// The default treats the objective as differentiable and returns the
    /// degenerate interval around the `eps = 0` selection.
    fn subdifferential_1d(&self, x: f64) -> (f64, f64) {
        let mut g = [0.0];
        self.eps_subgradient(&[x], 0.0, &mut g);
        (g[0], g[0])
    }
}

/// A closed convex set with Euclidean projection.
pub trait ConstraintSet: fmt::Debug + Send + Sync {
    /// Replaces `x` by its projection onto the set.
    fn project(&self, x: &mut [f64]);

    fn contains(&self, x: &[f64]) -> bool;

    /// The set as a scalar interval, when it is one. Used for feasibility
    /// checks and the reference solvers.
    fn as_interval(&self) -> Option<Interval> {
        None
    }
}

/// Closed interval with possibly infinite endpoints. As a [`ConstraintSet`]
/// it acts on every coordinate, i.e. it is the box `[lower, upper]^d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    lower: f64,
    upper: f64,
}

impl Interval {
    pub fn new(lower: f64, upper: f64) -> Result<Self, ProblemError> {
        if lower.is_nan()
            || upper.is_nan()
            || lower > upper
            || lower == f64::INFINITY
            || upper == f64::NEG_INFINITY
        {
            return Err(ProblemError::BadInterval { lower, upper });
        }
        Ok(Interval { lower, upper })
    }

    pub fn real_line() -> Self {
        Interval {
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
        }
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn is_bounded(&self) -> bool {
        self.lower.is_finite() && self.upper.is_finite()
    }

    #[inline]
    pub fn project_scalar(&self, x: f64) -> f64 {
        x.clamp(self.lower, self.upper)
    }

    #[inline]
    pub fn contains_scalar(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    pub fn intersect(&self, other: &Interval) -> Result<Interval, ProblemError> {
        let lower = self.lower.max(other.lower);
        let upper = self.upper.min(other.upper);
        if lower > upper {
            return Err(ProblemError::EmptyIntersection { lower, upper });
        }
        Ok(Interval { lower, upper })
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lower, self.upper)
    }
}

impl ConstraintSet for Interval {
    fn project(&self, x: &mut [f64]) {
        for xc in x {
            *xc = self.project_scalar(*xc);
        }
    }

    fn contains(&self, x: &[f64]) -> bool {
        x.iter().all(|&xc| self.contains_scalar(xc))
    }

    fn as_interval(&self) -> Option<Interval> {
        Some(*self)
    }
}

/// ε-subgradient selection for `f(x) = ½(x - p)² + λ|x|`.
///
/// Three cases split at `|x| = ε/2`; the `λε/x` term only appears when
/// `|x| > ε/2`, so `x = 0` never divides.
#[inline]
pub fn lasso_eps_subgradient(x: f64, p: f64, lambda: f64, eps: f64) -> f64 {
    let half = eps / 2.0;
    if x < -half {
        x - p - lambda - lambda * eps / x
    } else if x <= half {
        x - p + lambda
    } else {
        x - p + lambda - lambda * eps / x
    }
}

/// `f(x) = ½‖x - p‖² + λ‖x‖₁`.
///
/// For `d > 1` the budget `eps` is split evenly over the coordinates, which
/// keeps the sum an ε-subgradient of the separable objective.
#[derive(Debug, Clone, PartialEq)]
pub struct Lasso {
    p: Vec<f64>,
    lambda: f64,
}

impl Lasso {
    pub fn new(p: Vec<f64>, lambda: f64) -> Result<Self, ProblemError> {
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(ProblemError::BadLambda(lambda));
        }
        if p.is_empty() {
            return Err(ProblemError::ZeroDimension);
        }
        Ok(Lasso { p, lambda })
    }

    pub fn scalar(p: f64, lambda: f64) -> Result<Self, ProblemError> {
        Self::new(vec![p], lambda)
    }

    pub fn target(&self) -> &[f64] {
        &self.p
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

impl EpsSubgradientOracle for Lasso {
    fn value(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.p)
            .map(|(&xc, &pc)| 0.5 * (xc - pc) * (xc - pc) + self.lambda * xc.abs())
            .sum()
    }

    fn eps_subgradient(&self, x: &[f64], eps: f64, out: &mut [f64]) {
        let share = eps / self.p.len() as f64;
        for ((o, &xc), &pc) in out.iter_mut().zip(x).zip(&self.p) {
            *o = lasso_eps_subgradient(xc, pc, self.lambda, share);
        }
    }

    fn subdifferential_1d(&self, x: f64) -> (f64, f64) {
        let p = self.p[0];
        if x > 0.0 {
            (x - p + self.lambda, x - p + self.lambda)
        } else if x < 0.0 {
            (x - p - self.lambda, x - p - self.lambda)
        } else {
            (-p - self.lambda, -p + self.lambda)
        }
    }
}

/// One agent's private data.
#[derive(Debug, Clone)]
pub struct Agent {
    pub oracle: Arc<dyn EpsSubgradientOracle>,
    pub set: Arc<dyn ConstraintSet>,
}

/// `N` agents sharing a decision-variable dimension `d`.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    agents: Vec<Agent>,
    dim: usize,
    feasible: Option<Interval>,
}

impl ProblemInstance {
    /// Validates the instance. When every set is an interval their
    /// intersection must be nonempty.
    pub fn new(agents: Vec<Agent>, dim: usize) -> Result<Self, ProblemError> {
        if agents.is_empty() {
            return Err(ProblemError::NoAgents);
        }
        if dim == 0 {
            return Err(ProblemError::ZeroDimension);
        }
        let intervals: Option<Vec<Interval>> = agents.iter().map(|a| a.set.as_interval()).collect();
        let feasible = match intervals {
            Some(sets) => Some(
                sets.iter()
                    .try_fold(Interval::real_line(), |acc, s| acc.intersect(s))?,
            ),
            None => None,
        };
        Ok(ProblemInstance {
            agents,
            dim,
            feasible,
        })
    }

    /// LASSO instance with `f_i(x) = ½‖x - p_i‖² + λ‖x‖₁` and interval sets.
    /// `targets[i]` holds `p_i` (length `d`).
    pub fn lasso(
        lambda: f64,
        targets: &[Vec<f64>],
        sets: &[Interval],
    ) -> Result<Self, ProblemError> {
        let dim = targets.first().map_or(0, Vec::len);
        if targets.len() != sets.len() {
            return Err(ProblemError::DimensionMismatch {
                agent: targets.len().min(sets.len()),
                expected: targets.len(),
                got: sets.len(),
            });
        }
        let agents = targets
            .iter()
            .zip(sets)
            .enumerate()
            .map(|(i, (p, set))| {
                if p.len() != dim {
                    return Err(ProblemError::DimensionMismatch {
                        agent: i,
                        expected: dim,
                        got: p.len(),
                    });
                }
                Ok(Agent {
                    oracle: Arc::new(Lasso::new(p.clone(), lambda)?),
                    set: Arc::new(*set),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(agents, dim)
    }

    /// Scalar LASSO instance, one target per agent.
    pub fn lasso_scalar(lambda: f64, p: &[f64], sets: &[Interval]) -> Result<Self, ProblemError> {
        let targets: Vec<Vec<f64>> = p.iter().map(|&pi| vec![pi]).collect();
        Self::lasso(lambda, &targets, sets)
    }

    pub fn agent_count(&self) -> usize {
        self.agents.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn agent(&self, i: usize) -> &Agent {
        &self.agents[i]
    }

    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }

    /// Intersection of all sets, available when they are all intervals.
    pub fn feasible_interval(&self) -> Option<Interval> {
        self.feasible
    }

    /// `f(x) = Σ f_i(x)` at a common point.
    pub fn objective(&self, x: &[f64]) -> f64 {
        self.agents.iter().map(|a| a.oracle.value(x)).sum()
    }

    /// `f̃(x) = Σ f_i(x_i)` over stacked blocks.
    pub fn separable_objective(&self, x: &[f64]) -> f64 {
        self.agents
            .iter()
            .enumerate()
            .map(|(i, a)| a.oracle.value(&x[i * self.dim..(i + 1) * self.dim]))
            .sum()
    }
}

/// Checks `f(y) >= f(x) + g·(y - x) - eps` at every probe for the oracle's
/// selection `g` at `(x, eps)`, with absolute slack [`EPS_SUBGRADIENT_TOL`].
pub fn validate_eps_subgradient(
    oracle: &dyn EpsSubgradientOracle,
    x: &[f64],
    eps: f64,
    probes: &[Vec<f64>],
) -> bool {
    let mut g = vec![0.0; x.len()];
    oracle.eps_subgradient(x, eps, &mut g);
    validate_selection(oracle, x, &g, eps, probes)
}

/// As [`validate_eps_subgradient`] but for a caller-supplied selection `g`.
pub fn validate_selection(
    oracle: &dyn EpsSubgradientOracle,
    x: &[f64],
    g: &[f64],
    eps: f64,
    probes: &[Vec<f64>],
) -> bool {
    let fx = oracle.value(x);
    probes.iter().all(|y| {
        let linear: f64 = g
            .iter()
            .zip(y)
            .zip(x)
            .map(|((gc, yc), xc)| gc * (yc - xc))
            .sum();
        oracle.value(y) >= fx + linear - eps - EPS_SUBGRADIENT_TOL
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(lo: f64, hi: f64, steps: usize) -> Vec<Vec<f64>> {
        (0..=steps)
            .map(|s| vec![lo + (hi - lo) * s as f64 / steps as f64])
            .collect()
    }

    #[test]
    fn projection_examples() {
        let set = Interval::new(-7.0, 4.0).unwrap();
        assert_eq!(set.project_scalar(10.0), 4.0);
        assert_eq!(set.project_scalar(0.0), 0.0);
        assert_eq!(set.project_scalar(-12.5), -7.0);
        let mut block = [10.0, -12.5];
        set.project(&mut block);
        assert_eq!(block, [4.0, -7.0]);
    }

    #[test]
    fn interval_validation() {
        assert!(Interval::new(1.0, 0.0).is_err());
        assert!(Interval::new(f64::NAN, 0.0).is_err());
        assert!(Interval::new(f64::INFINITY, f64::INFINITY).is_err());
        assert!(Interval::new(f64::NEG_INFINITY, 0.0).is_ok());
    }

    #[test]
    fn lasso_selection_cases() {
        assert!((lasso_eps_subgradient(0.0, 2.0, 0.1, 0.1) - (-1.9)).abs() < 1e-15);
        assert!((lasso_eps_subgradient(3.0, 2.0, 0.1, 0.0) - 1.1).abs() < 1e-15);
        assert!((lasso_eps_subgradient(4.0, 2.0, 0.1, 0.1) - 2.0975).abs() < 1e-15);
        // x = 0 with eps = 0 hits the middle branch, never divides.
        assert!(lasso_eps_subgradient(0.0, 1.0, 0.5, 0.0).is_finite());
        assert!((lasso_eps_subgradient(-1.0, 8.0, 0.1, 1.5) - (-8.95)).abs() < 1e-14);
    }

    #[test]
    fn lasso_selection_satisfies_definition_at_x4() {
        let f = Lasso::scalar(2.0, 0.1).unwrap();
        assert!(validate_eps_subgradient(
            &f,
            &[4.0],
            0.1,
            &grid(-10.0, 10.0, 2000)
        ));
    }

    #[test]
    fn validation_accepts_gradient_of_quadratic() {
        let f = Lasso::scalar(1.5, 0.0).unwrap();
        for x in [-3.0, 0.0, 0.7, 9.0] {
            assert!(validate_eps_subgradient(
                &f,
                &[x],
                0.0,
                &grid(-10.0, 10.0, 400)
            ));
        }
    }

    #[test]
    fn validation_rejects_inflated_selection() {
        let f = Lasso::scalar(1.5, 0.0).unwrap();
        let (x, y, eps) = (1.0, 2.0, 0.1);
        // The gradient at x is -0.5; the secant slope to y is 0. Inflate well
        // beyond the supremum slope compatible with eps.
        let g = -0.5 + 2.0 * eps / (y - x) + 1.0;
        assert!(!validate_selection(&f, &[x], &[g], eps, &[vec![y]]));
    }

    #[test]
    fn lasso_instance_feasible_set() {
        let p: Vec<f64> = (1..=4).map(|i| 2.0 * i as f64).collect();
        let sets: Vec<Interval> = (1..=4)
            .map(|i| Interval::new(-11.0 + i as f64, 8.0 - i as f64).unwrap())
            .collect();
        let prob = ProblemInstance::lasso_scalar(0.1, &p, &sets).unwrap();
        assert_eq!(
            prob.feasible_interval(),
            Some(Interval::new(-7.0, 4.0).unwrap())
        );
        assert_eq!(prob.agent_count(), 4);
        // f(4) = Σ ½(4 - 2i)² + 0.4·4 = 12 + 1.6
        assert!((prob.objective(&[4.0]) - 13.6).abs() < 1e-12);
    }

    #[test]
    fn empty_intersection_rejected() {
        let sets = [
            Interval::new(0.0, 1.0).unwrap(),
            Interval::new(2.0, 3.0).unwrap(),
        ];
        assert!(matches!(
            ProblemInstance::lasso_scalar(0.1, &[0.0, 1.0], &sets),
            Err(ProblemError::EmptyIntersection { .. })
        ));
    }

    #[test]
    fn rejects_negative_lambda() {
        assert!(matches!(
            Lasso::scalar(0.0, -1.0),
            Err(ProblemError::BadLambda(_))
        ));
    }

    #[test]
    fn lasso_subdifferential_at_kink() {
        let f = Lasso::scalar(2.0, 0.1).unwrap();
        assert_eq!(f.subdifferential_1d(0.0), (-2.1, -1.9));
        let (lo, hi) = f.subdifferential_1d(4.0);
        assert_eq!(lo, hi);
        assert!((lo - 2.1).abs() < 1e-15);
    }

    #[test]
    fn vector_lasso_splits_eps_budget() {
        let f = Lasso::new(vec![1.0, -2.0], 0.3).unwrap();
        let probes: Vec<Vec<f64>> = (-10..=10)
            .flat_map(|a| (-10..=10).map(move |b| vec![a as f64 * 0.5, b as f64 * 0.5]))
            .collect();
        for x in [[0.02, -0.01], [1.0, -3.0], [-0.2, 0.04]] {
            assert!(validate_eps_subgradient(&f, &x, 0.1, &probes));
        }
    }

    proptest! {
        #[test]
        fn projection_non_expansive(lo in -50.0f64..50.0, width in 0.0f64..40.0, x in -100.0f64..100.0, y in -100.0f64..100.0) {
            let set = Interval::new(lo, lo + width).unwrap();
            let (px, py) = (set.project_scalar(x), set.project_scalar(y));
            prop_assert!((px - py).abs() <= (x - y).abs() + 1e-12);
            prop_assert_eq!(set.project_scalar(px), px);
        }

        #[test]
        fn projection_variational_inequality(lo in -50.0f64..50.0, width in 0.0f64..40.0, x in -100.0f64..100.0, t in 0.0f64..=1.0) {
            let set = Interval::new(lo, lo + width).unwrap();
            let px = set.project_scalar(x);
            let y = lo + t * width;
            prop_assert!((x - px) * (y - px) <= 1e-12);
        }

        #[test]
        fn eps_subdifferential_is_monotone(x in -10.0f64..10.0, p in -10.0f64..10.0, eps in 0.0f64..1.0, extra in 0.0f64..2.0) {
            let f = Lasso::scalar(p, 0.1).unwrap();
            let mut g = [0.0];
            f.eps_subgradient(&[x], eps, &mut g);
            let probes = grid(-12.0, 12.0, 480);
            prop_assert!(validate_selection(&f, &[x], &g, eps, &probes));
            prop_assert!(validate_selection(&f, &[x], &g, eps + extra, &probes));
        }
    }
}
