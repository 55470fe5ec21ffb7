//! Fixed-step iteration for lower and upper limit probabilities.
//!
//! Starting from the event indicator (or its negation for upper bounds),
//! the iterate `g <- g + delta * Q_lower(g)` contracts towards a constant
//! vector whose midpoint is the limit probability. The stopping rule uses
//! the variation seminorm `||f||_v = (max f - min f) / 2` against the
//! midpoint `mid(f) = (max f + min f) / 2`.

use crate::operators::LowerOperator;
use crate::solvers::{BoundResult, IterationParams, SolverError};

/// Which side of the probability interval an iteration computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundSide {
    Lower,
    Upper,
}

/// Outcome of running the iteration at a step and at half that step.
#[derive(Debug, Clone, Copy)]
pub struct StepHalvingCheck {
    pub value_delta: f64,
    pub value_half_delta: f64,
    /// `|v1 - v2| < phi * |v2|` with both runs finishing cleanly.
    pub passed: bool,
    pub converged_delta: bool,
    pub converged_half_delta: bool,
}

struct Iteration {
    g: Vec<f64>,
    iterations: u64,
    converged: bool,
    residual_variation: f64,
    error_bound: Option<f64>,
}

fn span_stats(g: &[f64]) -> (f64, f64, bool) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut finite = true;
    for &v in g {
        if !v.is_finite() {
            finite = false;
        }
        if v < lo {
            lo = v;
        }
        if v > hi {
            hi = v;
        }
    }
    (lo, hi, finite)
}

/// For steps up to `1 / ||Q||` the update is a convex per-row combination,
/// so iterates provably stay inside the initial envelope and any escape is
/// a construction bug. The larger steps admitted by the stability contract
/// may overshoot transiently; there only unbounded growth is an error.
const DIVERGENCE_FACTOR: f64 = 64.0;

fn run(op: &LowerOperator, mut g: Vec<f64>, params: &IterationParams) -> Result<Iteration, SolverError> {
    let limit = if op.norm() > 0.0 {
        2.0 / op.norm()
    } else {
        f64::INFINITY
    };
    if !(params.delta > 0.0) || params.delta >= limit {
        return Err(SolverError::StepTooLarge {
            step: params.delta,
            limit,
        });
    }

    let (lo0, hi0, finite) = span_stats(&g);
    debug_assert!(finite);
    let span0 = hi0 - lo0;
    let envelope_is_invariant = params.delta * op.norm() <= 1.0 + 1e-12;
    let slack = 1e-12 * (1.0 + span0);

    let mut qg = vec![0.0; g.len()];
    let mut sum_variation = 0.0;
    let mut iterations: u64 = 0;
    loop {
        let (lo, hi, finite) = span_stats(&g);
        if !finite {
            return Err(SolverError::NonFiniteValue { iteration: iterations });
        }
        if envelope_is_invariant {
            if lo < lo0 - slack || hi > hi0 + slack {
                return Err(SolverError::UnstableIteration { iteration: iterations });
            }
        } else if hi - lo > DIVERGENCE_FACTOR * (span0 + 1.0) {
            return Err(SolverError::UnstableIteration { iteration: iterations });
        }

        let variation = (hi - lo) / 2.0;
        let midpoint = (hi + lo) / 2.0;
        if variation <= params.phi * midpoint.abs() {
            let error_bound = params.track_error_bound.then(|| {
                (2.0 * params.delta * params.delta * op.norm() * op.norm() * sum_variation)
                    .max(variation)
            });
            return Ok(Iteration {
                g,
                iterations,
                converged: true,
                residual_variation: variation,
                error_bound,
            });
        }
        if iterations >= params.max_iters {
            let error_bound = params.track_error_bound.then(|| {
                (2.0 * params.delta * params.delta * op.norm() * op.norm() * sum_variation)
                    .max(variation)
            });
            return Ok(Iteration {
                g,
                iterations,
                converged: false,
                residual_variation: variation,
                error_bound,
            });
        }

        sum_variation += variation;
        op.apply_lower_into(&g, &mut qg);
        for (gv, qv) in g.iter_mut().zip(&qg) {
            *gv += params.delta * *qv;
        }
        iterations += 1;
    }
}

fn indicator(event: &[bool], sign: f64) -> Vec<f64> {
    event
        .iter()
        .map(|&inside| if inside { sign } else { 0.0 })
        .collect()
}

fn check_event(op: &LowerOperator, event: &[bool]) -> Result<(), SolverError> {
    if event.len() != op.dim() {
        return Err(SolverError::DimensionMismatch {
            expected: op.dim(),
            got: event.len(),
        });
    }
    Ok(())
}

fn finish(outcome: Iteration, negate: bool) -> BoundResult {
    let (lo, hi, _) = span_stats(&outcome.g);
    let midpoint = (hi + lo) / 2.0;
    let value = if negate { -midpoint } else { midpoint };
    assert!(
        (-1e-9..=1.0 + 1e-9).contains(&value),
        "limit probability {value} escaped [0, 1]"
    );
    BoundResult {
        value,
        iterations: outcome.iterations,
        converged: outcome.converged,
        residual_variation: outcome.residual_variation,
        guaranteed_abs_error: outcome.error_bound,
    }
}

/// Lower limit probability of an event.
pub fn limit_lower_probability(
    op: &LowerOperator,
    event: &[bool],
    params: &IterationParams,
) -> Result<BoundResult, SolverError> {
    check_event(op, event)?;
    let outcome = run(op, indicator(event, 1.0), params)?;
    Ok(finish(outcome, false))
}

/// Upper limit probability of an event: iterate from the negated indicator
/// and negate the final midpoint.
pub fn limit_upper_probability(
    op: &LowerOperator,
    event: &[bool],
    params: &IterationParams,
) -> Result<BoundResult, SolverError> {
    check_event(op, event)?;
    let outcome = run(op, indicator(event, -1.0), params)?;
    Ok(finish(outcome, true))
}

/// Guaranteed upper bound on the absolute error of the final midpoint,
/// from the trace of variation seminorms `||g_0||_v, ..., ||g_n||_v`:
/// `max(2 delta^2 ||Q||^2 sum_{i<n} ||g_i||_v, ||g_n||_v)`.
pub fn guaranteed_error_bound(variations: &[f64], delta: f64, norm: f64) -> f64 {
    assert!(!variations.is_empty(), "variation trace must be non-empty");
    let last = *variations.last().unwrap();
    let sum: f64 = variations[..variations.len() - 1].iter().sum();
    (2.0 * delta * delta * norm * norm * sum).max(last)
}

/// Runs the iteration at `delta` and `delta / 2` and compares the outcomes.
/// Instability at either step is reported as a failed check, not an error.
pub fn step_halving_check(
    op: &LowerOperator,
    event: &[bool],
    params: &IterationParams,
    side: BoundSide,
) -> Result<StepHalvingCheck, SolverError> {
    check_event(op, event)?;
    let solve = |p: &IterationParams| match side {
        BoundSide::Lower => limit_lower_probability(op, event, p),
        BoundSide::Upper => limit_upper_probability(op, event, p),
    };
    let tolerate = |r: Result<BoundResult, SolverError>| match r {
        Ok(result) => Ok((result.value, result.converged)),
        Err(SolverError::NonFiniteValue { .. }) | Err(SolverError::UnstableIteration { .. }) => {
            Ok((f64::NAN, false))
        }
        Err(other) => Err(other),
    };
    let (value_delta, converged_delta) = tolerate(solve(params))?;
    let halved = params.delta(params.delta / 2.0);
    let (value_half_delta, converged_half_delta) = tolerate(solve(&halved))?;
    let passed = value_delta.is_finite()
        && value_half_delta.is_finite()
        && (value_delta - value_half_delta).abs() < params.phi * value_half_delta.abs();
    Ok(StepHalvingCheck {
        value_delta,
        value_half_delta,
        passed,
        converged_delta,
        converged_half_delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::Generator;

    fn two_state(a: f64, b: f64) -> LowerOperator {
        LowerOperator::singleton(Generator::from_off_diagonal_rows(vec![
            vec![(1, a)],
            vec![(0, b)],
        ]))
    }

    fn stable_params(op: &LowerOperator) -> IterationParams {
        IterationParams::precise_default(op.norm())
    }

    #[test]
    fn two_state_birth_death_limit() {
        for (a, b) in [(1.0, 1.0), (3.0, 7.0), (0.1, 9.9)] {
            let op = two_state(a, b);
            let params = stable_params(&op).phi(1e-6);
            let result = limit_lower_probability(&op, &[false, true], &params).unwrap();
            assert!(result.converged);
            let expected = a / (a + b);
            assert!(
                (result.value - expected).abs() < 1e-5,
                "a={a} b={b}: {} vs {expected}",
                result.value
            );
        }
    }

    #[test]
    fn full_and_empty_events_converge_immediately() {
        let op = two_state(1.0, 2.0);
        let params = stable_params(&op);
        let full = limit_lower_probability(&op, &[true, true], &params).unwrap();
        assert_eq!((full.value, full.iterations), (1.0, 0));
        let empty = limit_lower_probability(&op, &[false, false], &params).unwrap();
        assert_eq!((empty.value, empty.iterations), (0.0, 0));
    }

    #[test]
    fn upper_equals_lower_for_precise_chain() {
        let op = two_state(2.0, 3.0);
        let params = stable_params(&op).phi(1e-8);
        let event = [false, true];
        let lower = limit_lower_probability(&op, &event, &params).unwrap();
        let upper = limit_upper_probability(&op, &event, &params).unwrap();
        assert!((lower.value - upper.value).abs() < 1e-6);
        assert!(upper.value >= lower.value - 1e-12);
    }

    #[test]
    fn complement_identity() {
        let op = two_state(2.0, 3.0);
        let params = stable_params(&op).phi(1e-8);
        let upper = limit_upper_probability(&op, &[false, true], &params).unwrap();
        let lower_complement = limit_lower_probability(&op, &[true, false], &params).unwrap();
        assert!((upper.value - (1.0 - lower_complement.value)).abs() < 1e-6);
    }

    #[test]
    fn rejects_out_of_range_steps() {
        let op = two_state(1.0, 1.0);
        let params = IterationParams::precise_default(op.norm()).delta(2.0);
        assert!(matches!(
            limit_lower_probability(&op, &[false, true], &params),
            Err(SolverError::StepTooLarge { .. })
        ));
    }

    #[test]
    fn divergent_step_is_surfaced_not_masked() {
        // For the symmetric two-state chain any step above 1/||Q|| makes the
        // iteration matrix's second eigenvalue exceed 1 in magnitude.
        let op = two_state(1.0, 1.0);
        let params = IterationParams::precise_default(op.norm()).delta(1.8);
        let result = limit_lower_probability(&op, &[false, true], &params);
        assert!(matches!(
            result,
            Err(SolverError::UnstableIteration { .. }) | Err(SolverError::NonFiniteValue { .. })
        ));
    }

    #[test]
    fn error_bound_plug_in_example() {
        assert_eq!(guaranteed_error_bound(&[0.5, 0.25], 0.1, 1.0), 0.25);
        assert_eq!(guaranteed_error_bound(&[0.0], 0.3, 2.0), 0.0);
        let dominated_by_sum = guaranteed_error_bound(&[1.0, 0.5, 0.001], 1.0, 1.0);
        assert_eq!(dominated_by_sum, 2.0 * 1.5);
    }

    #[test]
    fn step_halving_passes_on_stable_chain() {
        let op = two_state(3.0, 7.0);
        let params = stable_params(&op);
        let check = step_halving_check(&op, &[false, true], &params, BoundSide::Lower).unwrap();
        assert!(check.passed, "{check:?}");
        assert!((check.value_delta - 0.3).abs() < 1e-3);
        assert!((check.value_half_delta - 0.3).abs() < 1e-3);
    }

    #[test]
    fn step_halving_reports_unstable_runs_as_failed() {
        let op = two_state(1.0, 1.0);
        let params = IterationParams::precise_default(op.norm()).delta(1.9);
        let check = step_halving_check(&op, &[false, true], &params, BoundSide::Lower).unwrap();
        assert!(!check.passed);
    }

    #[test]
    fn step_halving_trivial_event() {
        let op = two_state(1.0, 1.0);
        let params = stable_params(&op);
        let check = step_halving_check(&op, &[true, true], &params, BoundSide::Upper).unwrap();
        assert!(check.passed);
        assert_eq!(check.value_delta, 1.0);
        assert_eq!(check.value_half_delta, 1.0);
    }
}
