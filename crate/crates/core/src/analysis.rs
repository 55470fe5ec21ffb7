//! Blocking events, reachability-based ergodicity checks and the
//! bound-enclosure report.

use thiserror::Error;

use crate::generators::{
    build_exact, build_extremal_family, build_reduced_approx, Generator, ImpreciseModel, Policy,
    ReducedPolicy,
};
use crate::operators::LowerOperator;
use crate::scenario::Scenario;
use crate::solvers::{
    event_probability, limit_lower_probability, limit_upper_probability,
    stationary_by_linear_solve, IterationParams, SolverError,
};
use crate::statespace::{
    enumerate_detailed, enumerate_reduced, DetailedState, ReducedState, StateSpace,
    StateSpaceError,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    /// A type 1 request finds no free channel.
    Type1,
    /// A type 2 request finds no free superchannel.
    Type2,
}

impl std::fmt::Display for EventKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EventKind::Type1 => "BP1",
            EventKind::Type2 => "BP2",
        })
    }
}

/// States in which an incoming request of the given type is blocked.
pub trait BlockingState {
    fn blocks(&self, kind: EventKind, scenario: &Scenario) -> bool;
}

impl BlockingState for DetailedState {
    fn blocks(&self, kind: EventKind, _scenario: &Scenario) -> bool {
        match kind {
            EventKind::Type1 => self.free_channels() == 0,
            EventKind::Type2 => self.empty_superchannels() == 0,
        }
    }
}

impl BlockingState for ReducedState {
    fn blocks(&self, kind: EventKind, scenario: &Scenario) -> bool {
        match kind {
            EventKind::Type1 => self.free_channels(scenario) == 0,
            EventKind::Type2 => self.e == 0,
        }
    }
}

/// A blocking event materialized as an indicator over a state space.
#[derive(Debug, Clone)]
pub struct BlockingEvent {
    pub kind: EventKind,
    pub indicator: Vec<bool>,
}

pub fn blocking_event<S: BlockingState + Clone + Eq + std::hash::Hash>(
    kind: EventKind,
    space: &StateSpace<S>,
    scenario: &Scenario,
) -> BlockingEvent {
    BlockingEvent {
        kind,
        indicator: space
            .states()
            .iter()
            .map(|s| s.blocks(kind, scenario))
            .collect(),
    }
}

/// Result of a reachability check. `witness` holds a pair `(from, to)` with
/// `to` not accessible from `from` when the check fails. A proper, non-empty
/// top class leaves ergodicity undetermined by this check; only a full top
/// class certifies it.
#[derive(Debug, Clone)]
pub struct ErgodicityReport {
    pub irreducible: bool,
    /// States accessible from every state.
    pub top_class: Vec<usize>,
    pub witness: Option<(usize, usize)>,
}

fn strongly_connected_components(adjacency: &[Vec<usize>]) -> Vec<Vec<usize>> {
    const UNSET: usize = usize::MAX;
    let n = adjacency.len();
    let mut index = vec![UNSET; n];
    let mut lowlink = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack: Vec<usize> = Vec::new();
    let mut next = 0usize;
    let mut components = Vec::new();

    for root in 0..n {
        if index[root] != UNSET {
            continue;
        }
        let mut dfs: Vec<(usize, usize)> = vec![(root, 0)];
        index[root] = next;
        lowlink[root] = next;
        next += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(&(v, edge)) = dfs.last() {
            if edge < adjacency[v].len() {
                dfs.last_mut().unwrap().1 += 1;
                let w = adjacency[v][edge];
                if index[w] == UNSET {
                    index[w] = next;
                    lowlink[w] = next;
                    next += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    dfs.push((w, 0));
                } else if on_stack[w] {
                    lowlink[v] = lowlink[v].min(index[w]);
                }
            } else {
                dfs.pop();
                if let Some(&(parent, _)) = dfs.last() {
                    lowlink[parent] = lowlink[parent].min(lowlink[v]);
                }
                if lowlink[v] == index[v] {
                    let mut component = Vec::new();
                    loop {
                        let w = stack.pop().unwrap();
                        on_stack[w] = false;
                        component.push(w);
                        if w == v {
                            break;
                        }
                    }
                    components.push(component);
                }
            }
        }
    }
    components
}

fn top_class_report(adjacency: &[Vec<usize>]) -> ErgodicityReport {
    let n = adjacency.len();
    let components = strongly_connected_components(adjacency);
    if components.len() == 1 {
        let mut all: Vec<usize> = (0..n).collect();
        all.sort_unstable();
        return ErgodicityReport {
            irreducible: true,
            top_class: all,
            witness: None,
        };
    }

    let mut member_of = vec![0usize; n];
    for (id, component) in components.iter().enumerate() {
        for &v in component {
            member_of[v] = id;
        }
    }
    let mut has_outgoing = vec![false; components.len()];
    for (v, row) in adjacency.iter().enumerate() {
        for &w in row {
            if member_of[v] != member_of[w] {
                has_outgoing[member_of[v]] = true;
            }
        }
    }
    let sinks: Vec<usize> = (0..components.len())
        .filter(|&c| !has_outgoing[c])
        .collect();

    // The top class is the unique sink of the condensation; with several
    // sinks no state is accessible from everywhere.
    let (top_class, witness) = if sinks.len() == 1 {
        let mut inside = components[sinks[0]].clone();
        inside.sort_unstable();
        let from = inside[0];
        let to = (0..n).find(|v| member_of[*v] != sinks[0]).unwrap();
        (inside, Some((from, to)))
    } else {
        let from = *components[sinks[0]].iter().min().unwrap();
        let to = *components[sinks[1]].iter().min().unwrap();
        (Vec::new(), Some((from, to)))
    };
    ErgodicityReport {
        irreducible: false,
        top_class,
        witness,
    }
}

/// Irreducibility of a precise generator: every state reaches every state
/// through strictly positive rates.
pub fn check_irreducible(gen: &Generator) -> ErgodicityReport {
    let adjacency: Vec<Vec<usize>> = (0..gen.dim())
        .map(|x| gen.row(x).iter().map(|&(col, _)| col).collect())
        .collect();
    top_class_report(&adjacency)
}

/// Ergodicity check for a lower operator via upper reachability: the edge
/// `x -> y` is present when the largest rate over the family is positive,
/// which is exactly when the upper operator moves mass from `x` to `y`.
pub fn check_lower_operator_ergodic(op: &LowerOperator) -> ErgodicityReport {
    let n = op.dim();
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (x, row) in adjacency.iter_mut().enumerate() {
        for member in op.family() {
            for &(col, _) in member.row(x) {
                row.push(col);
            }
        }
        row.sort_unstable();
        row.dedup();
    }
    top_class_report(&adjacency)
}

#[derive(Debug, Error, Clone)]
pub enum AnalysisError {
    #[error(
        "enclosure violated for {policy}/{event} ({comparison}): \
         [pi_lower, policy_lower, exact, policy_upper, pi_upper] = {quintuple:?}, \
         approximate = {approximate}"
    )]
    EnclosureViolation {
        policy: Policy,
        event: EventKind,
        comparison: &'static str,
        quintuple: [f64; 5],
        approximate: f64,
    },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    StateSpace(#[from] StateSpaceError),
}

/// All blocking-probability values for one policy and event.
#[derive(Debug, Clone, Copy)]
pub struct EnclosureValues {
    pub policy: Policy,
    pub event: EventKind,
    pub exact: f64,
    pub approximate: f64,
    pub policy_lower: f64,
    pub policy_upper: f64,
    pub pi_lower: f64,
    pub pi_upper: f64,
    /// All iterative bound runs converged before the iteration cap.
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct EnclosureReport {
    pub rows: Vec<EnclosureValues>,
    pub phi: f64,
}

fn enclosure_slack(a: f64, b: f64, phi: f64) -> f64 {
    2.0 * phi * a.abs().max(b.abs()) + 1e-9
}

fn require_le(
    a: f64,
    b: f64,
    phi: f64,
    comparison: &'static str,
    row: &EnclosureValues,
) -> Result<(), AnalysisError> {
    if a <= b + enclosure_slack(a, b, phi) {
        Ok(())
    } else {
        Err(AnalysisError::EnclosureViolation {
            policy: row.policy,
            event: row.event,
            comparison,
            quintuple: [
                row.pi_lower,
                row.policy_lower,
                row.exact,
                row.policy_upper,
                row.pi_upper,
            ],
            approximate: row.approximate,
        })
    }
}

/// Computes, for every policy, the exact value, the approximation and the
/// policy-dependent and policy-independent bounds of one blocking
/// probability, and verifies the enclosure chain
/// `pi_lower <= policy_lower <= exact <= policy_upper <= pi_upper` together
/// with `policy_lower <= approximate <= policy_upper`, each up to solver
/// tolerance slack.
pub fn enclosure_report(
    scenario: &Scenario,
    kind: EventKind,
    phi: f64,
) -> Result<EnclosureReport, AnalysisError> {
    let detailed = enumerate_detailed(scenario)?;
    let reduced = enumerate_reduced(scenario)?;
    let detailed_event = blocking_event(kind, &detailed, scenario);
    let reduced_event = blocking_event(kind, &reduced, scenario);

    let bounds = |model: ImpreciseModel| -> Result<(f64, f64, bool), AnalysisError> {
        let family = build_extremal_family(scenario, model, &reduced);
        let op = LowerOperator::new(family).expect("non-empty family");
        let params = IterationParams::imprecise_default(op.norm()).phi(phi);
        let lower = limit_lower_probability(&op, &reduced_event.indicator, &params)?;
        let upper = limit_upper_probability(&op, &reduced_event.indicator, &params)?;
        Ok((
            lower.value,
            upper.value,
            lower.converged && upper.converged,
        ))
    };
    let (ra_lower, ra_upper, ra_ok) = bounds(ImpreciseModel::Ra)?;
    let (lm_lower, lm_upper, lm_ok) = bounds(ImpreciseModel::Lm)?;
    let (pi_lower, pi_upper, pi_ok) = bounds(ImpreciseModel::Pi)?;

    let approximate_of = |rp: ReducedPolicy| -> Result<f64, AnalysisError> {
        let gen = build_reduced_approx(scenario, rp, &reduced);
        let dist = stationary_by_linear_solve(&gen)?;
        Ok(event_probability(&dist, &reduced_event.indicator))
    };
    let approx_ra = approximate_of(ReducedPolicy::Ra)?;
    let approx_lm = approximate_of(ReducedPolicy::Lm)?;

    let mut rows = Vec::with_capacity(3);
    for policy in [Policy::Ra, Policy::Lf, Policy::Mf] {
        let gen = build_exact(scenario, policy, &detailed);
        let dist = stationary_by_linear_solve(&gen)?;
        let exact = event_probability(&dist, &detailed_event.indicator);
        let (policy_lower, policy_upper, approximate, converged) = match policy {
            Policy::Ra => (ra_lower, ra_upper, approx_ra, ra_ok),
            Policy::Lf | Policy::Mf => (lm_lower, lm_upper, approx_lm, lm_ok),
        };
        let row = EnclosureValues {
            policy,
            event: kind,
            exact,
            approximate,
            policy_lower,
            policy_upper,
            pi_lower,
            pi_upper,
            converged: converged && pi_ok,
        };
        require_le(row.pi_lower, row.policy_lower, phi, "pi_lower <= policy_lower", &row)?;
        require_le(row.policy_lower, row.exact, phi, "policy_lower <= exact", &row)?;
        require_le(row.exact, row.policy_upper, phi, "exact <= policy_upper", &row)?;
        require_le(row.policy_upper, row.pi_upper, phi, "policy_upper <= pi_upper", &row)?;
        require_le(
            row.policy_lower,
            row.approximate,
            phi,
            "policy_lower <= approximate",
            &row,
        )?;
        require_le(
            row.approximate,
            row.policy_upper,
            phi,
            "approximate <= policy_upper",
            &row,
        )?;
        rows.push(row);
    }
    Ok(EnclosureReport { rows, phi })
}
