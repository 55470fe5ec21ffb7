//! Subcommand implementations.

use std::collections::HashMap;
use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use flexigrid::{
    blocking_event, build_exact, build_extremal_family, build_reduced_approx, build_sim_exact,
    build_sim_reduced, check_irreducible, check_lower_operator_ergodic, detailed_count,
    enclosure_report, enumerate_detailed, enumerate_reduced, event_probability,
    gillespie_blocking_estimate, limit_lower_probability, limit_upper_probability, reduced_count,
    stationary_by_linear_solve, BlockingEvent, DetailedState, ErgodicityReport,
    EventKind, ImpreciseModel, IterationParams, LowerOperator, Policy, ReducedPolicy, ReducedState,
    Scenario, SimulationParams, StateSpace,
};

use crate::output::{csv_header, csv_row, Cell, ErrorRecord, Failure};
use crate::{CheckArgs, EnclosureArgs, Model, RunArgs, SizesArgs, Solver};

pub struct CommandOutcome {
    pub errors: Vec<ErrorRecord>,
}

impl CommandOutcome {
    pub fn exit_code(&self) -> i32 {
        self.errors
            .iter()
            .map(|e| e.failure.code())
            .max()
            .unwrap_or(0)
    }
}

pub fn sizes(args: &SizesArgs, out: &mut dyn Write) -> std::io::Result<CommandOutcome> {
    let mut errors = Vec::new();
    out.write_all(csv_header(&["m1", "n2", "det_count", "red_count"]).as_bytes())?;
    for &m1 in &args.grid.m1 {
        for &n2 in &args.grid.n2 {
            let scenario = match Scenario::from_load(m1, n2, 1.0) {
                Ok(sc) => sc,
                Err(e) => {
                    errors.push(ErrorRecord::new(
                        Failure::InvalidSpec,
                        format!("m1={m1} n2={n2}"),
                        e,
                    ));
                    continue;
                }
            };
            match detailed_count(&scenario) {
                Ok(det) => {
                    let red = reduced_count(&scenario);
                    out.write_all(
                        csv_row(&[
                            Cell::Int(m1.into()),
                            Cell::Int(n2.into()),
                            Cell::Int(det),
                            Cell::Int(red),
                        ])
                        .as_bytes(),
                    )?;
                }
                Err(e) => errors.push(ErrorRecord::new(
                    Failure::Capacity,
                    format!("m1={m1} n2={n2}"),
                    e,
                )),
            }
        }
    }
    Ok(CommandOutcome { errors })
}

/// Immutable state-space caches shared by the run units, keyed by (m1, n2).
struct SpaceCache {
    detailed: HashMap<(u32, u32), Arc<StateSpace<DetailedState>>>,
    reduced: HashMap<(u32, u32), Arc<StateSpace<ReducedState>>>,
}

fn scenario_of(m1: u32, n2: u32, rho: f64) -> Result<Scenario, ErrorRecord> {
    Scenario::from_load(m1, n2, rho).map_err(|e| {
        ErrorRecord::new(Failure::InvalidSpec, format!("m1={m1} n2={n2} rho={rho}"), e)
    })
}

/// Rejects exact-model construction when the detailed space exceeds the cap.
fn guard_capacity(scenario: &Scenario, cap: u128, context: &str) -> Result<(), ErrorRecord> {
    let count = detailed_count(scenario)
        .map_err(|e| ErrorRecord::new(Failure::Capacity, context.to_string(), e))?;
    if count > cap {
        return Err(ErrorRecord::new(
            Failure::Capacity,
            context.to_string(),
            format!("detailed space has {count} states, above the cap of {cap}"),
        ));
    }
    Ok(())
}

struct UnitResult {
    rows: Vec<String>,
    errors: Vec<ErrorRecord>,
}

struct RowContext<'a> {
    m1: u32,
    n2: u32,
    rho: f64,
    model: Model,
    timings: bool,
    args: &'a RunArgs,
}

impl RowContext<'_> {
    #[allow(clippy::too_many_arguments)]
    fn row(
        &self,
        solver: Solver,
        event: EventKind,
        value: Option<f64>,
        lower: Option<f64>,
        upper: Option<f64>,
        converged: Option<bool>,
        iterations: Option<u128>,
        ci_halfwidth: Option<f64>,
        elapsed: f64,
    ) -> String {
        let opt_float = |v: Option<f64>| v.map_or(Cell::Empty, Cell::Float);
        csv_row(&[
            Cell::Int(self.m1.into()),
            Cell::Int(self.n2.into()),
            Cell::Float(self.rho),
            Cell::Text(self.model.to_string()),
            Cell::Text(self.model.policy_label().to_string()),
            Cell::Text(solver.to_string()),
            Cell::Text(event.to_string()),
            opt_float(value),
            opt_float(lower),
            opt_float(upper),
            converged.map_or(Cell::Empty, Cell::Bool),
            iterations.map_or(Cell::Empty, Cell::Int),
            opt_float(ci_halfwidth),
            if self.timings {
                Cell::Float(elapsed)
            } else {
                Cell::Empty
            },
        ])
    }
}

fn precise_events<S>(scenario: &Scenario, space: &StateSpace<S>) -> [BlockingEvent; 2]
where
    S: flexigrid::analysis::BlockingState + Clone + Eq + std::hash::Hash,
{
    [
        blocking_event(EventKind::Type1, space, scenario),
        blocking_event(EventKind::Type2, space, scenario),
    ]
}

fn iterate_rows(
    ctx: &RowContext<'_>,
    op: &LowerOperator,
    events: &[BlockingEvent; 2],
    errors: &mut Vec<ErrorRecord>,
    rows: &mut Vec<String>,
) {
    let params = match ctx.args.delta {
        Some(delta) => IterationParams::precise_default(op.norm()).delta(delta),
        None => IterationParams::precise_default(op.norm()),
    }
    .phi(ctx.args.phi)
    .max_iters(ctx.args.max_iters);
    for event in events {
        let started = Instant::now();
        match limit_lower_probability(op, &event.indicator, &params) {
            Ok(result) => {
                if !result.converged {
                    errors.push(ErrorRecord::new(
                        Failure::NonConvergence,
                        ctx_label(ctx, Solver::Iterate, event.kind),
                        format!("iteration cap {} reached", params.max_iters),
                    ));
                }
                rows.push(ctx.row(
                    Solver::Iterate,
                    event.kind,
                    Some(result.value),
                    None,
                    None,
                    Some(result.converged),
                    Some(result.iterations.into()),
                    None,
                    started.elapsed().as_secs_f64(),
                ));
            }
            Err(e) => errors.push(ErrorRecord::new(
                Failure::NonConvergence,
                ctx_label(ctx, Solver::Iterate, event.kind),
                e,
            )),
        }
    }
}

fn ctx_label(ctx: &RowContext<'_>, solver: Solver, event: EventKind) -> String {
    format!(
        "m1={} n2={} rho={} model={} solver={solver} event={event}",
        ctx.m1, ctx.n2, ctx.rho, ctx.model
    )
}

fn linear_rows(
    ctx: &RowContext<'_>,
    gen: &flexigrid::Generator,
    events: &[BlockingEvent; 2],
    errors: &mut Vec<ErrorRecord>,
    rows: &mut Vec<String>,
) {
    let started = Instant::now();
    match stationary_by_linear_solve(gen) {
        Ok(dist) => {
            let elapsed = started.elapsed().as_secs_f64();
            for event in events {
                let value = event_probability(&dist, &event.indicator);
                rows.push(ctx.row(
                    Solver::Linear,
                    event.kind,
                    Some(value),
                    None,
                    None,
                    Some(true),
                    None,
                    None,
                    elapsed,
                ));
            }
        }
        Err(e) => errors.push(ErrorRecord::new(
            Failure::NonConvergence,
            ctx_label(ctx, Solver::Linear, EventKind::Type1),
            e,
        )),
    }
}

fn simulate_rows(
    ctx: &RowContext<'_>,
    chain: &flexigrid::SimChain,
    errors: &mut Vec<ErrorRecord>,
    rows: &mut Vec<String>,
) {
    let params = SimulationParams {
        batch_arrivals: ctx.args.batch_arrivals,
        min_batches: ctx.args.min_batches,
        max_batches: ctx.args.max_batches,
        phi: ctx.args.phi,
        seed: ctx.args.seed,
    };
    let started = Instant::now();
    match gillespie_blocking_estimate(chain, &params) {
        Ok(result) => {
            let elapsed = started.elapsed().as_secs_f64();
            if !result.converged {
                errors.push(ErrorRecord::new(
                    Failure::NonConvergence,
                    ctx_label(ctx, Solver::Simulate, EventKind::Type1),
                    format!(
                        "relative CI width above {} after {} batches",
                        params.phi, result.batches
                    ),
                ));
            }
            for (kind, estimate) in [
                (EventKind::Type1, result.bp1),
                (EventKind::Type2, result.bp2),
            ] {
                rows.push(ctx.row(
                    Solver::Simulate,
                    kind,
                    Some(estimate.mean),
                    None,
                    None,
                    Some(estimate.converged),
                    Some(result.batches.into()),
                    estimate.ci_halfwidth,
                    elapsed,
                ));
            }
        }
        Err(e) => errors.push(ErrorRecord::new(
            Failure::NonConvergence,
            ctx_label(ctx, Solver::Simulate, EventKind::Type1),
            e,
        )),
    }
}

fn bound_rows(
    ctx: &RowContext<'_>,
    model: ImpreciseModel,
    scenario: &Scenario,
    space: &StateSpace<ReducedState>,
    errors: &mut Vec<ErrorRecord>,
    rows: &mut Vec<String>,
) {
    let op = LowerOperator::new(build_extremal_family(scenario, model, space))
        .expect("extremal families are non-empty");
    let params = match ctx.args.delta {
        Some(delta) => IterationParams::imprecise_default(op.norm()).delta(delta),
        None => IterationParams::imprecise_default(op.norm()),
    }
    .phi(ctx.args.phi)
    .max_iters(ctx.args.max_iters);
    for event in precise_events(scenario, space) {
        let started = Instant::now();
        let lower = limit_lower_probability(&op, &event.indicator, &params);
        let upper = limit_upper_probability(&op, &event.indicator, &params);
        match (lower, upper) {
            (Ok(lower), Ok(upper)) => {
                let converged = lower.converged && upper.converged;
                if !converged {
                    errors.push(ErrorRecord::new(
                        Failure::NonConvergence,
                        ctx_label(ctx, Solver::Iterate, event.kind),
                        format!("iteration cap {} reached", params.max_iters),
                    ));
                }
                rows.push(ctx.row(
                    Solver::Iterate,
                    event.kind,
                    None,
                    Some(lower.value),
                    Some(upper.value),
                    Some(converged),
                    Some(u128::from(lower.iterations.max(upper.iterations))),
                    None,
                    started.elapsed().as_secs_f64(),
                ));
            }
            (lower, upper) => {
                for side in [lower, upper] {
                    if let Err(e) = side {
                        errors.push(ErrorRecord::new(
                            Failure::NonConvergence,
                            ctx_label(ctx, Solver::Iterate, event.kind),
                            e,
                        ));
                    }
                }
            }
        }
    }
}

fn run_unit(args: &RunArgs, cache: &SpaceCache, m1: u32, n2: u32, rho: f64, model: Model) -> UnitResult {
    let mut rows = Vec::new();
    let mut errors = Vec::new();
    let scenario = match scenario_of(m1, n2, rho) {
        Ok(sc) => sc,
        Err(e) => {
            return UnitResult {
                rows,
                errors: vec![e],
            }
        }
    };
    let ctx = RowContext {
        m1,
        n2,
        rho,
        model,
        timings: args.timings,
        args,
    };
    let solvers = &args.solvers;

    match model {
        Model::ExactRa | Model::ExactLf | Model::ExactMf => {
            let policy = match model {
                Model::ExactRa => Policy::Ra,
                Model::ExactLf => Policy::Lf,
                _ => Policy::Mf,
            };
            let context = format!("m1={m1} n2={n2} rho={rho} model={model}");
            if let Err(e) = guard_capacity(&scenario, args.state_cap, &context) {
                return UnitResult {
                    rows,
                    errors: vec![e],
                };
            }
            let space = cache.detailed.get(&(m1, n2)).expect("cached space");
            let events = precise_events(&scenario, space);
            if solvers.contains(&Solver::Iterate) || solvers.contains(&Solver::Linear) {
                let gen = build_exact(&scenario, policy, space);
                if solvers.contains(&Solver::Iterate) {
                    let op = LowerOperator::singleton(gen.clone());
                    iterate_rows(&ctx, &op, &events, &mut errors, &mut rows);
                }
                if solvers.contains(&Solver::Linear) {
                    linear_rows(&ctx, &gen, &events, &mut errors, &mut rows);
                }
            }
            if solvers.contains(&Solver::Simulate) {
                let chain = build_sim_exact(&scenario, policy, space);
                simulate_rows(&ctx, &chain, &mut errors, &mut rows);
            }
        }
        Model::ApproxRa | Model::ApproxLm => {
            let policy = match model {
                Model::ApproxRa => ReducedPolicy::Ra,
                _ => ReducedPolicy::Lm,
            };
            let space = cache.reduced.get(&(m1, n2)).expect("cached space");
            let events = precise_events(&scenario, space);
            if solvers.contains(&Solver::Iterate) || solvers.contains(&Solver::Linear) {
                let gen = build_reduced_approx(&scenario, policy, space);
                if solvers.contains(&Solver::Iterate) {
                    let op = LowerOperator::singleton(gen.clone());
                    iterate_rows(&ctx, &op, &events, &mut errors, &mut rows);
                }
                if solvers.contains(&Solver::Linear) {
                    linear_rows(&ctx, &gen, &events, &mut errors, &mut rows);
                }
            }
            if solvers.contains(&Solver::Simulate) {
                let chain = build_sim_reduced(&scenario, policy, space);
                simulate_rows(&ctx, &chain, &mut errors, &mut rows);
            }
        }
        Model::ImpreciseRa | Model::ImpreciseLm | Model::ImprecisePi => {
            let imodel = match model {
                Model::ImpreciseRa => ImpreciseModel::Ra,
                Model::ImpreciseLm => ImpreciseModel::Lm,
                _ => ImpreciseModel::Pi,
            };
            if solvers.contains(&Solver::Iterate) {
                let space = cache.reduced.get(&(m1, n2)).expect("cached space");
                bound_rows(&ctx, imodel, &scenario, space, &mut errors, &mut rows);
            } else {
                eprintln!(
                    "note: model {model} only supports the iterate solver; no rows emitted"
                );
            }
        }
    }
    UnitResult { rows, errors }
}

pub const RUN_COLUMNS: [&str; 14] = [
    "m1",
    "n2",
    "rho",
    "model",
    "policy",
    "solver",
    "event",
    "value",
    "lower",
    "upper",
    "converged",
    "iterations",
    "ci_halfwidth",
    "elapsed_seconds",
];

pub fn run(args: &RunArgs, out: &mut dyn Write) -> std::io::Result<CommandOutcome> {
    let mut errors = Vec::new();

    // Build the shared immutable space caches up front, sequentially.
    let mut cache = SpaceCache {
        detailed: HashMap::new(),
        reduced: HashMap::new(),
    };
    let needs_detailed = args.models.iter().any(Model::is_exact);
    let needs_reduced = args.models.iter().any(|m| !m.is_exact());
    for &m1 in &args.grid.m1 {
        for &n2 in &args.grid.n2 {
            let Ok(scenario) = Scenario::from_load(m1, n2, 1.0) else {
                continue; // reported per unit below
            };
            if needs_detailed
                && guard_capacity(&scenario, args.state_cap, "cache").is_ok()
                && !cache.detailed.contains_key(&(m1, n2))
            {
                match enumerate_detailed(&scenario) {
                    Ok(space) => {
                        cache.detailed.insert((m1, n2), Arc::new(space));
                    }
                    Err(e) => errors.push(ErrorRecord::new(
                        Failure::Capacity,
                        format!("m1={m1} n2={n2}"),
                        e,
                    )),
                }
            }
            if needs_reduced && !cache.reduced.contains_key(&(m1, n2)) {
                match enumerate_reduced(&scenario) {
                    Ok(space) => {
                        cache.reduced.insert((m1, n2), Arc::new(space));
                    }
                    Err(e) => errors.push(ErrorRecord::new(
                        Failure::Capacity,
                        format!("m1={m1} n2={n2}"),
                        e,
                    )),
                }
            }
        }
    }

    let mut units = Vec::new();
    for &m1 in &args.grid.m1 {
        for &n2 in &args.grid.n2 {
            for &rho in &args.rho {
                for &model in &args.models {
                    units.push((m1, n2, rho, model));
                }
            }
        }
    }

    out.write_all(csv_header(&RUN_COLUMNS).as_bytes())?;
    let results: Vec<UnitResult> = if args.parallel {
        units
            .par_iter()
            .map(|&(m1, n2, rho, model)| run_unit(args, &cache, m1, n2, rho, model))
            .collect()
    } else {
        units
            .iter()
            .map(|&(m1, n2, rho, model)| run_unit(args, &cache, m1, n2, rho, model))
            .collect()
    };
    for result in results {
        for row in &result.rows {
            out.write_all(row.as_bytes())?;
        }
        errors.extend(result.errors);
    }
    Ok(CommandOutcome { errors })
}

pub fn check(args: &CheckArgs, out: &mut dyn Write) -> std::io::Result<CommandOutcome> {
    let mut errors = Vec::new();
    out.write_all(
        csv_header(&[
            "m1",
            "n2",
            "rho",
            "model",
            "states",
            "irreducible",
            "top_class_size",
            "verdict",
            "witness_from",
            "witness_to",
        ])
        .as_bytes(),
    )?;
    for &m1 in &args.grid.m1 {
        for &n2 in &args.grid.n2 {
            for &rho in &args.rho {
                let scenario = match scenario_of(m1, n2, rho) {
                    Ok(sc) => sc,
                    Err(e) => {
                        errors.push(e);
                        continue;
                    }
                };
                for &model in &args.models {
                    let context = format!("m1={m1} n2={n2} rho={rho} model={model}");
                    let (report, states): (ErgodicityReport, usize) = if model.is_exact() {
                        if let Err(e) = guard_capacity(&scenario, args.state_cap, &context) {
                            errors.push(e);
                            continue;
                        }
                        let space = match enumerate_detailed(&scenario) {
                            Ok(s) => s,
                            Err(e) => {
                                errors.push(ErrorRecord::new(Failure::Capacity, context, e));
                                continue;
                            }
                        };
                        let policy = match model {
                            Model::ExactRa => Policy::Ra,
                            Model::ExactLf => Policy::Lf,
                            Model::ExactMf => Policy::Mf,
                            _ => unreachable!(),
                        };
                        (
                            check_irreducible(&build_exact(&scenario, policy, &space)),
                            space.len(),
                        )
                    } else {
                        let space = match enumerate_reduced(&scenario) {
                            Ok(s) => s,
                            Err(e) => {
                                errors.push(ErrorRecord::new(Failure::Capacity, context, e));
                                continue;
                            }
                        };
                        let report = match model {
                            Model::ApproxRa => check_irreducible(&build_reduced_approx(
                                &scenario,
                                ReducedPolicy::Ra,
                                &space,
                            )),
                            Model::ApproxLm => check_irreducible(&build_reduced_approx(
                                &scenario,
                                ReducedPolicy::Lm,
                                &space,
                            )),
                            Model::ImpreciseRa | Model::ImpreciseLm | Model::ImprecisePi => {
                                let imodel = match model {
                                    Model::ImpreciseRa => ImpreciseModel::Ra,
                                    Model::ImpreciseLm => ImpreciseModel::Lm,
                                    _ => ImpreciseModel::Pi,
                                };
                                let op = LowerOperator::new(build_extremal_family(
                                    &scenario, imodel, &space,
                                ))
                                .expect("non-empty family");
                                check_lower_operator_ergodic(&op)
                            }
                            _ => unreachable!(),
                        };
                        (report, space.len())
                    };
                    let verdict = if report.irreducible {
                        "ergodic"
                    } else {
                        "undetermined"
                    };
                    let (from, to) = match report.witness {
                        Some((f, t)) => (Cell::Int(f as u128), Cell::Int(t as u128)),
                        None => (Cell::Empty, Cell::Empty),
                    };
                    out.write_all(
                        csv_row(&[
                            Cell::Int(m1.into()),
                            Cell::Int(n2.into()),
                            Cell::Float(rho),
                            Cell::Text(model.to_string()),
                            Cell::Int(states as u128),
                            Cell::Bool(report.irreducible),
                            Cell::Int(report.top_class.len() as u128),
                            Cell::Text(verdict.to_string()),
                            from,
                            to,
                        ])
                        .as_bytes(),
                    )?;
                }
            }
        }
    }
    Ok(CommandOutcome { errors })
}

pub fn enclosure(args: &EnclosureArgs, out: &mut dyn Write) -> std::io::Result<CommandOutcome> {
    let mut errors = Vec::new();
    out.write_all(
        csv_header(&[
            "m1",
            "n2",
            "rho",
            "event",
            "policy",
            "pi_lower",
            "policy_lower",
            "exact",
            "approximate",
            "policy_upper",
            "pi_upper",
            "converged",
        ])
        .as_bytes(),
    )?;
    for &m1 in &args.grid.m1 {
        for &n2 in &args.grid.n2 {
            for &rho in &args.rho {
                let scenario = match scenario_of(m1, n2, rho) {
                    Ok(sc) => sc,
                    Err(e) => {
                        errors.push(e);
                        continue;
                    }
                };
                let context = format!("m1={m1} n2={n2} rho={rho}");
                if let Err(e) = guard_capacity(&scenario, args.state_cap, &context) {
                    errors.push(e);
                    continue;
                }
                for kind in [EventKind::Type1, EventKind::Type2] {
                    match enclosure_report(&scenario, kind, args.phi) {
                        Ok(report) => {
                            for row in &report.rows {
                                out.write_all(
                                    csv_row(&[
                                        Cell::Int(m1.into()),
                                        Cell::Int(n2.into()),
                                        Cell::Float(rho),
                                        Cell::Text(kind.to_string()),
                                        Cell::Text(row.policy.to_string()),
                                        Cell::Float(row.pi_lower),
                                        Cell::Float(row.policy_lower),
                                        Cell::Float(row.exact),
                                        Cell::Float(row.approximate),
                                        Cell::Float(row.policy_upper),
                                        Cell::Float(row.pi_upper),
                                        Cell::Bool(row.converged),
                                    ])
                                    .as_bytes(),
                                )?;
                            }
                        }
                        Err(e) => {
                            let failure = match &e {
                                flexigrid::AnalysisError::EnclosureViolation { .. } => {
                                    Failure::InvariantViolation
                                }
                                _ => Failure::NonConvergence,
                            };
                            errors.push(ErrorRecord::new(
                                failure,
                                format!("{context} event={kind}"),
                                e,
                            ));
                        }
                    }
                }
            }
        }
    }
    Ok(CommandOutcome { errors })
}
