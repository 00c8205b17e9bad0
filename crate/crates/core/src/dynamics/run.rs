use log::warn;

use super::{
    check_consistent, check_schedule, local_operator_norms, local_terms, npd_step_with_steps,
    pd_step, DynamicsError, Mode, NetworkState, NormalizationConfig, Schedule, Validity,
};
use crate::blocks::{graph_apply, Blocks};
use crate::graph::{max_consensus, CommGraph};
use crate::problem::ProblemInstance;
use crate::reference::{delta, SaddlePoint};
use crate::trace::{residual, Trace, TraceRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Plain,
    Normalized,
}

/// Everything that stays fixed across one run.
#[derive(Debug, Clone)]
pub struct Experiment<'a> {
    pub graph: &'a CommGraph,
    pub problem: &'a ProblemInstance,
    pub alpha: Schedule,
    pub eps: Schedule,
    pub variant: Variant,
    pub normalization: Option<NormalizationConfig>,
}

impl Experiment<'_> {
    /// The mode the schedules are naturally checked against: constant `ε`
    /// reads as the suboptimality setting, anything else as the exact one.
    pub fn schedule_mode(&self) -> Mode {
        match self.eps {
            Schedule::Constant { a } if a > 0.0 => Mode::Theorem1,
            _ => Mode::Theorem2,
        }
    }
}

/// Runs `iters` rounds from `x0` (and `v0`, default zero) and returns
/// `iters + 1` records, the first one being the initial state.
///
/// An infeasible `x0` is projected onto the agents' sets, and schedules that
/// fail their validity check still run; both cases leave a warning in the
/// trace. When `reference` is given, the records carry the objective gap,
/// `Δ` and the residual against it.
pub fn run(
    exp: &Experiment<'_>,
    x0: Blocks,
    v0: Option<Blocks>,
    iters: usize,
    reference: Option<&SaddlePoint>,
) -> Result<Trace, DynamicsError> {
    let mut trace = Trace::default();
    let norm = match exp.variant {
        Variant::Plain => None,
        Variant::Normalized => {
            let norm = exp
                .normalization
                .ok_or(DynamicsError::MissingNormalization)?;
            norm.validate(exp.graph)?;
            Some(norm)
        }
    };

    let mode = exp.schedule_mode();
    let verdict = check_schedule(&exp.alpha, &exp.eps, mode);
    if verdict.validity != Validity::Valid {
        let msg = format!("schedule check ({mode}): {verdict}");
        warn!("{msg}");
        trace.warnings.push(msg);
    }

    let v0 = v0.unwrap_or_else(|| Blocks::zeros(x0.n(), x0.dim()));
    let mut state = NetworkState::new(x0, v0)?;
    check_consistent(exp.graph, exp.problem, &state)?;
    for i in 0..state.agent_count() {
        let set = &exp.problem.agent(i).set;
        if !set.contains(state.x.block(i)) {
            set.project(state.x.block_mut(i));
            let msg = format!("initial x_{} projected onto its constraint set", i + 1);
            warn!("{msg}");
            trace.warnings.push(msg);
        }
    }

    let x1 = state.x.clone();
    let residual_ok = match reference {
        Some(saddle) if x1.distance(&saddle.x_star) == 0.0 => {
            trace
                .warnings
                .push("initial state equals x*; residual left empty".to_owned());
            false
        }
        _ => true,
    };

    trace.records.reserve(iters + 1);
    for step in 0..=iters {
        let alpha = exp.alpha.value(state.k);
        let eps = exp.eps.value(state.k);
        let last = step == iters;
        let (next, step_used) = match norm {
            None => {
                let next = if last {
                    None
                } else {
                    Some(pd_step(exp.graph, exp.problem, &state, alpha, eps)?)
                };
                (next, alpha)
            }
            Some(norm) => {
                if last {
                    (None, normalized_min_step(exp, &state, alpha, eps, &norm)?)
                } else {
                    let (next, steps) =
                        npd_step_with_steps(exp.graph, exp.problem, &state, alpha, eps, &norm)?;
                    (Some(next), steps.into_iter().fold(f64::INFINITY, f64::min))
                }
            }
        };

        let mut record = diagnostics(exp, &state, reference, &x1, residual_ok)?;
        record.step_used = step_used;
        record.eps_used = eps;
        trace.records.push(record);
        if let Some(next) = next {
            state = next;
        }
    }
    Ok(trace)
}

/// Smallest normalized step at `state` without applying it.
fn normalized_min_step(
    exp: &Experiment<'_>,
    state: &NetworkState,
    alpha: f64,
    eps: f64,
    norm: &NormalizationConfig,
) -> Result<f64, DynamicsError> {
    let terms = local_terms(exp.graph, exp.problem, state, eps)?;
    let shared = max_consensus(exp.graph, &local_operator_norms(&terms), norm.rounds)?;
    Ok(shared
        .iter()
        .map(|&d| alpha / norm.floor.max(d))
        .fold(f64::INFINITY, f64::min))
}

fn diagnostics(
    exp: &Experiment<'_>,
    state: &NetworkState,
    reference: Option<&SaddlePoint>,
    x1: &Blocks,
    residual_ok: bool,
) -> Result<TraceRecord, DynamicsError> {
    let consensus_error = graph_apply(exp.graph, &state.x).norm();
    let (objective_gap, delta_value, residual_value) = match reference {
        Some(saddle) => {
            let gap = exp.problem.separable_objective(state.x.as_slice()) - saddle.f_star;
            let d = delta(exp.graph, exp.problem, &state.x, saddle)?;
            let e = if residual_ok {
                residual(&state.x, x1, &saddle.x_star).ok()
            } else {
                None
            };
            (Some(gap), Some(d), e)
        }
        None => (None, None, None),
    };
    Ok(TraceRecord {
        k: state.k,
        x: state.x.clone(),
        v: state.v.clone(),
        consensus_error,
        objective_gap,
        delta: delta_value,
        residual: residual_value,
        step_used: 0.0,
        eps_used: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::Interval;
    use crate::reference::solve_saddle;

    fn setup() -> (CommGraph, ProblemInstance) {
        let g = CommGraph::from_edges(4, &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (0, 2, 1.0)])
            .unwrap();
        let p: Vec<f64> = (1..=4).map(|i| 2.0 * i as f64).collect();
        let sets: Vec<Interval> = (1..=4)
            .map(|i| Interval::new(-11.0 + i as f64, 8.0 - i as f64).unwrap())
            .collect();
        (g, ProblemInstance::lasso_scalar(0.1, &p, &sets).unwrap())
    }

    fn experiment<'a>(g: &'a CommGraph, prob: &'a ProblemInstance) -> Experiment<'a> {
        let s = Schedule::power(3.0, 1.0, 1.0).unwrap();
        Experiment {
            graph: g,
            problem: prob,
            alpha: s.clone(),
            eps: s,
            variant: Variant::Plain,
            normalization: None,
        }
    }

    #[test]
    fn zero_iterations_gives_initial_record() {
        let (g, prob) = setup();
        let exp = experiment(&g, &prob);
        let saddle = solve_saddle(&g, &prob).unwrap();
        let x0 = Blocks::from_scalars(&[1.0, 0.0, 5.0, -1.0]);
        let trace = run(&exp, x0.clone(), None, 0, Some(&saddle)).unwrap();
        assert_eq!(trace.len(), 1);
        let r = &trace.records[0];
        assert_eq!((r.k, &r.x), (1, &x0));
        assert_eq!(r.residual, Some(1.0));
        assert_eq!(r.step_used, 1.5);
        assert!(trace.warnings.is_empty());
    }

    #[test]
    fn projects_infeasible_start_and_warns_on_bad_schedule() {
        let (g, prob) = setup();
        let mut exp = experiment(&g, &prob);
        exp.alpha = Schedule::constant(0.1).unwrap();
        let trace = run(
            &exp,
            Blocks::from_scalars(&[20.0, 0.0, 0.0, 0.0]),
            None,
            3,
            None,
        )
        .unwrap();
        assert_eq!(trace.len(), 4);
        assert_eq!(trace.records[0].x.block(0), &[7.0]);
        assert_eq!(trace.warnings.len(), 2);
        assert!(trace.records.iter().all(|r| r.delta.is_none()));
    }

    #[test]
    fn normalized_requires_config() {
        let (g, prob) = setup();
        let mut exp = experiment(&g, &prob);
        exp.variant = Variant::Normalized;
        let x0 = Blocks::from_scalars(&[1.0, 0.0, 5.0, -1.0]);
        assert_eq!(
            run(&exp, x0, None, 1, None),
            Err(DynamicsError::MissingNormalization)
        );
    }

    #[test]
    fn trace_is_deterministic() {
        let (g, prob) = setup();
        let mut exp = experiment(&g, &prob);
        exp.variant = Variant::Normalized;
        exp.normalization = Some(NormalizationConfig::new(0.1, 3, &g).unwrap());
        let x0 = Blocks::from_scalars(&[1.0, 0.0, 5.0, -1.0]);
        let a = run(&exp, x0.clone(), None, 50, None).unwrap();
        let b = run(&exp, x0, None, 50, None).unwrap();
        assert_eq!(a, b);
    }
}
