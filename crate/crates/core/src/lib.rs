//! Blocking probabilities for a two-service flexi-grid optical link.
//!
//! A single link carries short flows, each taking one channel, and long
//! flows, each taking a superchannel of `n2` channels. This crate builds
//! continuous-time Markov chain models of the link under the random,
//! least-filled and most-filled allocation policies and computes the two
//! blocking probabilities three ways:
//!
//! * exactly, from a detailed occupancy chain (small systems only),
//! * approximately, from a reduced chain whose indeterminate rates are
//!   replaced by an equal-probability estimate,
//! * with guaranteed lower/upper bounds, from imprecise chains whose
//!   indeterminate rates only carry interval constraints — per policy or
//!   for every allocation policy at once.
//!
//! Solvers: fixed-step iteration for limit probabilities (the only known
//! method in the imprecise case), a sparse direct solve of the stationary
//! equations, and an embedded-jump-chain simulator with batch-means
//! confidence intervals.

pub mod analysis;
pub mod generators;
pub mod operators;
pub mod scenario;
pub mod solvers;
pub mod statespace;

pub use analysis::{
    blocking_event, check_irreducible, check_lower_operator_ergodic, enclosure_report,
    AnalysisError, BlockingEvent, EnclosureReport, EnclosureValues, ErgodicityReport, EventKind,
};
pub use generators::{
    build_exact, build_extremal_family, build_reduced_approx, build_sim_exact, build_sim_reduced,
    lone_type1_range, mu1_plus_estimate, rate_bounds, Generator, ImpreciseModel, Policy,
    RateBounds, ReducedPolicy, SimChain,
};
pub use operators::{LowerOperator, OperatorError};
pub use scenario::{Scenario, ScenarioError};
pub use solvers::{
    event_probability, gillespie_blocking_estimate, guaranteed_error_bound,
    limit_lower_probability, limit_upper_probability, stationary_by_linear_solve,
    step_halving_check, BoundResult, BoundSide, EventEstimate, IterationParams, SimulationParams,
    SimulationResult, SolverError, StepHalvingCheck,
};
pub use statespace::{
    detailed_count, enumerate_detailed, enumerate_reduced, gamma, gamma_inverse, reduced_count,
    DetailedState, ReducedState, StateSpace, StateSpaceError,
};
