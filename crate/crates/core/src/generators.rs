//! Transition rate matrix builders.
//!
//! Three kinds of matrices are built over the two state spaces:
//!
//! * exact policy-dependent generators over the detailed space (one per
//!   allocation policy),
//! * approximate generators over the reduced space, where the rate at which
//!   type 1 departures free a superchannel is replaced by an
//!   equal-probability estimate,
//! * extremal families over the reduced space realizing the imprecise
//!   models: two matrices per policy-dependent model (estimate replaced by
//!   its lower/upper bound everywhere) and four for the policy-independent
//!   model (additionally taking both extremes of the empty-superchannel
//!   routing rate).

use std::io::{self, Write};

use crate::scenario::Scenario;
use crate::statespace::{DetailedState, ReducedState, StateSpace};

/// Spectrum allocation policy for the exact detailed-state models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Policy {
    /// Random Allocation: a type 1 request picks a free channel uniformly.
    Ra,
    /// Least-Filled: route to the partially filled superchannel with the
    /// fewest type 1 flows.
    Lf,
    /// Most-Filled: route to the partially filled superchannel with the
    /// most type 1 flows.
    Mf,
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Policy::Ra => "RA",
            Policy::Lf => "LF",
            Policy::Mf => "MF",
        })
    }
}

/// Policy tag for the reduced-state models. Least-Filled and Most-Filled
/// collapse to a single reduced model (LM), so only exact builds distinguish
/// them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReducedPolicy {
    Ra,
    Lm,
}

impl std::fmt::Display for ReducedPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ReducedPolicy::Ra => "RA",
            ReducedPolicy::Lm => "LM",
        })
    }
}

/// Imprecise model selector: the two policy-dependent families and the
/// policy-independent envelope.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ImpreciseModel {
    Ra,
    Lm,
    Pi,
}

impl std::fmt::Display for ImpreciseModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ImpreciseModel::Ra => "RA",
            ImpreciseModel::Lm => "LM",
            ImpreciseModel::Pi => "PI",
        })
    }
}

/// A sparse transition rate matrix: non-negative off-diagonal rates and a
/// diagonal fixed to minus the row sum, so every row sums to zero by
/// construction.
#[derive(Debug, Clone)]
pub struct Generator {
    dim: usize,
    diag: Vec<f64>,
    rows: Vec<Vec<(usize, f64)>>,
}

impl Generator {
    /// Builds a generator from per-row off-diagonal entries `(column, rate)`.
    /// Rates must be non-negative and finite; zero rates are dropped and
    /// duplicate columns accumulated. Panics on malformed input: a violated
    /// generator invariant is a construction bug, not data to repair.
    pub fn from_off_diagonal_rows(off_rows: Vec<Vec<(usize, f64)>>) -> Self {
        let dim = off_rows.len();
        let mut diag = Vec::with_capacity(dim);
        let mut rows = Vec::with_capacity(dim);
        for (x, mut row) in off_rows.into_iter().enumerate() {
            row.sort_unstable_by_key(|&(col, _)| col);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
            for (col, rate) in row {
                assert!(col < dim, "column {col} out of range for dimension {dim}");
                assert!(col != x, "off-diagonal entry on the diagonal at row {x}");
                assert!(
                    rate.is_finite() && rate >= 0.0,
                    "off-diagonal rate {rate} at ({x}, {col}) must be finite and non-negative"
                );
                if rate == 0.0 {
                    continue;
                }
                match merged.last_mut() {
                    Some(last) if last.0 == col => last.1 += rate,
                    _ => merged.push((col, rate)),
                }
            }
            let total: f64 = merged.iter().map(|&(_, r)| r).sum();
            diag.push(-total);
            rows.push(merged);
        }
        Self { dim, diag, rows }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn diagonal(&self, x: usize) -> f64 {
        self.diag[x]
    }

    /// Off-diagonal entries of row `x`, sorted by column.
    pub fn row(&self, x: usize) -> &[(usize, f64)] {
        &self.rows[x]
    }

    /// Rate of the transition `x -> y` (diagonal for `x == y`).
    pub fn rate(&self, x: usize, y: usize) -> f64 {
        if x == y {
            return self.diag[x];
        }
        match self.rows[x].binary_search_by_key(&y, |&(col, _)| col) {
            Ok(pos) => self.rows[x][pos].1,
            Err(_) => 0.0,
        }
    }

    /// Matrix-vector product `Q f`.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.apply_into(f, &mut out);
        out
    }

    pub fn apply_into(&self, f: &[f64], out: &mut [f64]) {
        assert_eq!(f.len(), self.dim);
        assert_eq!(out.len(), self.dim);
        for x in 0..self.dim {
            out[x] = self.row_dot(x, f);
        }
    }

    /// `[Q f](x)` for a single row.
    pub fn row_dot(&self, x: usize, f: &[f64]) -> f64 {
        let mut acc = self.diag[x] * f[x];
        for &(col, rate) in &self.rows[x] {
            acc += rate * f[col];
        }
        acc
    }

    pub fn max_abs_diagonal(&self) -> f64 {
        self.diag.iter().fold(0.0, |m, &d| m.max(d.abs()))
    }

    pub fn nonzeros(&self) -> usize {
        self.rows.iter().map(|r| r.len()).sum::<usize>()
            + self.diag.iter().filter(|&&d| d != 0.0).count()
    }

    /// Largest number of nonzero entries in any row, diagonal included.
    pub fn max_row_nonzeros(&self) -> usize {
        (0..self.dim)
            .map(|x| self.rows[x].len() + usize::from(self.diag[x] != 0.0))
            .max()
            .unwrap_or(0)
    }

    /// Writes the matrix as `row col rate` triplets after a
    /// `# states=<n> model=<tag>` header line. Entries are emitted row-major
    /// with ascending columns, diagonal included.
    pub fn dump_triplets(&self, tag: &str, w: &mut impl Write) -> io::Result<()> {
        writeln!(w, "# states={} model={}", self.dim, tag)?;
        for x in 0..self.dim {
            let mut diag_written = false;
            for &(col, rate) in &self.rows[x] {
                if !diag_written && col > x && self.diag[x] != 0.0 {
                    writeln!(w, "{} {} {}", x, x, self.diag[x])?;
                    diag_written = true;
                }
                writeln!(w, "{} {} {}", x, col, rate)?;
            }
            if !diag_written && self.diag[x] != 0.0 {
                writeln!(w, "{} {} {}", x, x, self.diag[x])?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Arrival1,
    Arrival2,
    Departure,
}

/// Bounds on the indeterminate reduced-state rates: the superchannel-freeing
/// type 1 departure rate lies in `[i_min, i_max] * mu1` and the
/// empty-superchannel routing rate in the given lambda interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateBounds {
    pub mu1_plus_lo: f64,
    pub mu1_plus_hi: f64,
    pub lambda_minus_lo: f64,
    pub lambda_minus_hi: f64,
}

/// Minimum and maximum number of allocated type 1 flows that are alone in
/// their superchannel, among all detailed states mapping to `r`.
pub fn lone_type1_range(r: &ReducedState, scenario: &Scenario) -> (u32, u32) {
    let n2 = scenario.n2();
    let s = r.type1_superchannels(scenario);
    let lo = (2 * s).saturating_sub(r.i);
    let hi = (n2 * s - r.i) / (n2 - 1);
    debug_assert!(lo <= hi && hi <= r.i.max(lo));
    (lo, hi)
}

/// Rate bounds for a reduced state, degenerate whenever only one adjacent
/// state is feasible.
pub fn rate_bounds(r: &ReducedState, scenario: &Scenario) -> RateBounds {
    let (lo, hi) = lone_type1_range(r, scenario);
    let mu1 = scenario.mu1();
    let lambda1 = scenario.lambda1();
    let (lambda_lo, lambda_hi) = if r.i == scenario.n2() * r.type1_superchannels(scenario) {
        (lambda1, lambda1)
    } else if r.e == 0 {
        (0.0, 0.0)
    } else {
        (0.0, lambda1)
    };
    RateBounds {
        mu1_plus_lo: f64::from(lo) * mu1,
        mu1_plus_hi: f64::from(hi) * mu1,
        lambda_minus_lo: lambda_lo,
        lambda_minus_hi: lambda_hi,
    }
}

/// Counts of ordered ways to split a total into parts, each part in
/// `1..=n2`. `count(parts, total)` is exact for small systems and accurate
/// to f64 precision beyond that; it is only ever used inside ratios.
struct CompositionTable {
    counts: Vec<Vec<f64>>,
}

impl CompositionTable {
    fn new(max_parts: usize, max_total: usize, n2: u32) -> Self {
        let n2 = n2 as usize;
        let mut counts = vec![vec![0.0f64; max_total + 1]; max_parts + 1];
        counts[0][0] = 1.0;
        for p in 1..=max_parts {
            for t in 1..=max_total {
                let mut acc = 0.0;
                for c in 1..=n2.min(t) {
                    acc += counts[p - 1][t - c];
                }
                counts[p][t] = acc;
            }
        }
        Self { counts }
    }

    fn count(&self, parts: u32, total: u32) -> f64 {
        self.counts[parts as usize][total as usize]
    }

    /// Expected number of parts equal to 1 when every composition of
    /// `total` into `parts` parts is equally probable.
    fn expected_lone(&self, parts: u32, total: u32) -> f64 {
        if parts == 0 {
            return 0.0;
        }
        f64::from(parts) * self.count(parts - 1, total - 1) / self.count(parts, total)
    }
}

/// Equal-probability estimate of the superchannel-freeing type 1 departure
/// rate: `mu1` times the expected number of type 1 flows alone in their
/// superchannel, over all ways to distribute `i` flows across the occupied
/// superchannels.
pub fn mu1_plus_estimate(r: &ReducedState, scenario: &Scenario) -> f64 {
    let (lo, hi) = lone_type1_range(r, scenario);
    if lo == hi {
        return f64::from(lo) * scenario.mu1();
    }
    let s = r.type1_superchannels(scenario);
    let table = CompositionTable::new(s as usize, r.i as usize, scenario.n2());
    lone_estimate(&table, r.i, s, lo, hi) * scenario.mu1()
}

fn lone_estimate(table: &CompositionTable, i: u32, s: u32, lo: u32, hi: u32) -> f64 {
    let mean = table.expected_lone(s, i);
    debug_assert!(mean > f64::from(lo) - 1e-9 && mean < f64::from(hi) + 1e-9);
    mean.clamp(f64::from(lo), f64::from(hi))
}

fn detailed_transitions(
    scenario: &Scenario,
    policy: Policy,
    state: &DetailedState,
) -> Vec<(DetailedState, f64, Kind)> {
    let n2 = scenario.n2() as usize;
    let occ = state.occupancy();
    let occupied = state.type2_free_superchannels();
    let free = state.free_channels();
    let mut out = Vec::with_capacity(2 * n2 + 2);

    let moved = |changes: &[(usize, i32)]| {
        let mut next = occ.to_vec();
        for &(k, delta) in changes {
            next[k] = (i32::from(next[k]) + delta) as u16;
        }
        DetailedState::new(next)
    };

    if occ[0] > 0 {
        out.push((moved(&[(0, -1)]), scenario.lambda2(), Kind::Arrival2));
    }
    if occupied < scenario.m2() {
        let rate = f64::from(scenario.m2() - occupied) * scenario.mu2();
        out.push((moved(&[(0, 1)]), rate, Kind::Departure));
    }
    for k in 1..=n2 {
        if occ[k] > 0 {
            let rate = f64::from(k as u32 * u32::from(occ[k])) * scenario.mu1();
            out.push((moved(&[(k, -1), (k - 1, 1)]), rate, Kind::Departure));
        }
    }
    if free > 0 {
        match policy {
            Policy::Ra => {
                for k in 0..n2 {
                    if occ[k] > 0 {
                        let weight = u32::from(occ[k]) * (n2 as u32 - k as u32);
                        let rate = scenario.lambda1() * f64::from(weight) / f64::from(free);
                        out.push((moved(&[(k, -1), (k + 1, 1)]), rate, Kind::Arrival1));
                    }
                }
            }
            Policy::Lf | Policy::Mf => {
                let partial = (1..n2).filter(|&k| occ[k] > 0);
                let target = match policy {
                    Policy::Lf => partial.min(),
                    Policy::Mf => partial.max(),
                    Policy::Ra => unreachable!(),
                }
                .unwrap_or(0);
                debug_assert!(occ[target] > 0);
                out.push((
                    moved(&[(target, -1), (target + 1, 1)]),
                    scenario.lambda1(),
                    Kind::Arrival1,
                ));
            }
        }
    }
    out
}

#[derive(Clone, Copy)]
enum MuPlusRule<'a> {
    Estimate(&'a CompositionTable),
    Minimum,
    Maximum,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum LambdaMinusRule {
    RandomAllocation,
    LeastMostFilled,
    /// Route to an occupied superchannel whenever there is a choice.
    PreferOccupied,
    /// Route to an empty superchannel whenever there is a choice.
    PreferEmpty,
}

fn reduced_transitions(
    scenario: &Scenario,
    state: &ReducedState,
    mu_rule: MuPlusRule<'_>,
    lambda_rule: LambdaMinusRule,
) -> Vec<(ReducedState, f64, Kind)> {
    let n2 = scenario.n2();
    let (i, j, e) = (state.i, state.j, state.e);
    let s = state.type1_superchannels(scenario);
    let free = state.free_channels(scenario);
    let mut out = Vec::with_capacity(6);

    if e > 0 {
        out.push((
            ReducedState::new(i, j + 1, e - 1),
            scenario.lambda2(),
            Kind::Arrival2,
        ));
    }
    if j > 0 {
        out.push((
            ReducedState::new(i, j - 1, e + 1),
            f64::from(j) * scenario.mu2(),
            Kind::Departure,
        ));
    }
    if i > 0 {
        let (lo, hi) = lone_type1_range(state, scenario);
        let (freeing, staying) = match mu_rule {
            _ if lo == hi => exact_departure_split(scenario, i, lo),
            MuPlusRule::Minimum => exact_departure_split(scenario, i, lo),
            MuPlusRule::Maximum => exact_departure_split(scenario, i, hi),
            MuPlusRule::Estimate(table) => {
                let mean = lone_estimate(table, i, s, lo, hi);
                let freeing = mean * scenario.mu1();
                (freeing, f64::from(i) * scenario.mu1() - freeing)
            }
        };
        if freeing > 0.0 {
            out.push((ReducedState::new(i - 1, j, e + 1), freeing, Kind::Departure));
        }
        if staying > 0.0 {
            out.push((ReducedState::new(i - 1, j, e), staying, Kind::Departure));
        }
    }
    if free > 0 {
        let lambda1 = scenario.lambda1();
        if e == 0 {
            // No empty superchannel: the request lands in an occupied one.
            out.push((ReducedState::new(i + 1, j, e), lambda1, Kind::Arrival1));
        } else if i == n2 * s {
            // Every occupied superchannel is full: only an empty one fits.
            out.push((ReducedState::new(i + 1, j, e - 1), lambda1, Kind::Arrival1));
        } else {
            let to_empty = match lambda_rule {
                LambdaMinusRule::RandomAllocation => {
                    lambda1 * f64::from(e * n2) / f64::from(free)
                }
                LambdaMinusRule::LeastMostFilled => 0.0,
                LambdaMinusRule::PreferOccupied => 0.0,
                LambdaMinusRule::PreferEmpty => lambda1,
            };
            let to_occupied = lambda1 - to_empty;
            if to_empty > 0.0 {
                out.push((ReducedState::new(i + 1, j, e - 1), to_empty, Kind::Arrival1));
            }
            if to_occupied > 0.0 {
                out.push((ReducedState::new(i + 1, j, e), to_occupied, Kind::Arrival1));
            }
        }
    }
    debug_assert!(out.iter().all(|(r, _, _)| r.is_feasible(scenario)));
    out
}

/// Integer-exact split of the total type 1 departure rate `i * mu1` into a
/// superchannel-freeing part and a remainder.
fn exact_departure_split(scenario: &Scenario, i: u32, lone: u32) -> (f64, f64) {
    (
        f64::from(lone) * scenario.mu1(),
        f64::from(i - lone) * scenario.mu1(),
    )
}

fn assemble<S: Clone + Eq + std::hash::Hash + std::fmt::Debug>(
    space: &StateSpace<S>,
    mut transitions: impl FnMut(&S) -> Vec<(S, f64, Kind)>,
) -> Vec<Vec<(usize, f64)>> {
    let mut rows = Vec::with_capacity(space.len());
    for (_, state) in space.iter() {
        let row = transitions(state)
            .into_iter()
            .map(|(target, rate, _)| {
                let col = space
                    .index_of(&target)
                    .unwrap_or_else(|| panic!("transition target {target:?} not in state space"));
                (col, rate)
            })
            .collect();
        rows.push(row);
    }
    rows
}

/// Exact transition rate matrix over the detailed space for one policy.
pub fn build_exact(
    scenario: &Scenario,
    policy: Policy,
    space: &StateSpace<DetailedState>,
) -> Generator {
    Generator::from_off_diagonal_rows(assemble(space, |state| {
        detailed_transitions(scenario, policy, state)
    }))
}

/// Approximate transition rate matrix over the reduced space, using the
/// equal-probability estimate for the superchannel-freeing departure rate.
pub fn build_reduced_approx(
    scenario: &Scenario,
    policy: ReducedPolicy,
    space: &StateSpace<ReducedState>,
) -> Generator {
    let table = CompositionTable::new(
        scenario.m2() as usize,
        scenario.m1() as usize,
        scenario.n2(),
    );
    let lambda_rule = match policy {
        ReducedPolicy::Ra => LambdaMinusRule::RandomAllocation,
        ReducedPolicy::Lm => LambdaMinusRule::LeastMostFilled,
    };
    let gen = Generator::from_off_diagonal_rows(assemble(space, |state| {
        reduced_transitions(scenario, state, MuPlusRule::Estimate(&table), lambda_rule)
    }));
    debug_assert!(gen.max_row_nonzeros() <= 7);
    gen
}

/// The extremal generator family realizing an imprecise model: two matrices
/// for the policy-dependent models (lower/upper departure-split bound taken
/// everywhere), four for the policy-independent model (every combination of
/// departure-split bound and empty-superchannel routing extreme).
pub fn build_extremal_family(
    scenario: &Scenario,
    model: ImpreciseModel,
    space: &StateSpace<ReducedState>,
) -> Vec<Generator> {
    let combos: Vec<(MuPlusRule<'_>, LambdaMinusRule)> = match model {
        ImpreciseModel::Ra => vec![
            (MuPlusRule::Minimum, LambdaMinusRule::RandomAllocation),
            (MuPlusRule::Maximum, LambdaMinusRule::RandomAllocation),
        ],
        ImpreciseModel::Lm => vec![
            (MuPlusRule::Minimum, LambdaMinusRule::LeastMostFilled),
            (MuPlusRule::Maximum, LambdaMinusRule::LeastMostFilled),
        ],
        ImpreciseModel::Pi => vec![
            (MuPlusRule::Minimum, LambdaMinusRule::PreferOccupied),
            (MuPlusRule::Minimum, LambdaMinusRule::PreferEmpty),
            (MuPlusRule::Maximum, LambdaMinusRule::PreferOccupied),
            (MuPlusRule::Maximum, LambdaMinusRule::PreferEmpty),
        ],
    };
    combos
        .into_iter()
        .map(|(mu_rule, lambda_rule)| {
            let gen = Generator::from_off_diagonal_rows(assemble(space, |state| {
                reduced_transitions(scenario, state, mu_rule, lambda_rule)
            }));
            debug_assert!(gen.max_row_nonzeros() <= 7);
            gen
        })
        .collect()
}

/// An embedded jump chain with transitions partitioned by event class, for
/// simulation: a state blocks type 1 (type 2) requests exactly when it has
/// no type 1 (type 2) arrival transition.
#[derive(Debug, Clone)]
pub struct SimChain {
    departures: Vec<Vec<(usize, f64)>>,
    arrivals1: Vec<Vec<(usize, f64)>>,
    arrivals2: Vec<Vec<(usize, f64)>>,
    lambda1: f64,
    lambda2: f64,
}

impl SimChain {
    fn from_transitions(
        lambda1: f64,
        lambda2: f64,
        labeled: Vec<Vec<(usize, f64, Kind)>>,
    ) -> Self {
        let dim = labeled.len();
        let mut departures = vec![Vec::new(); dim];
        let mut arrivals1 = vec![Vec::new(); dim];
        let mut arrivals2 = vec![Vec::new(); dim];
        for (x, row) in labeled.into_iter().enumerate() {
            for (col, rate, kind) in row {
                if rate == 0.0 {
                    continue;
                }
                match kind {
                    Kind::Departure => departures[x].push((col, rate)),
                    Kind::Arrival1 => arrivals1[x].push((col, rate)),
                    Kind::Arrival2 => arrivals2[x].push((col, rate)),
                }
            }
        }
        Self {
            departures,
            arrivals1,
            arrivals2,
            lambda1,
            lambda2,
        }
    }

    pub fn len(&self) -> usize {
        self.departures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.departures.is_empty()
    }

    pub fn lambda1(&self) -> f64 {
        self.lambda1
    }

    pub fn lambda2(&self) -> f64 {
        self.lambda2
    }

    pub fn departures(&self, x: usize) -> &[(usize, f64)] {
        &self.departures[x]
    }

    pub fn type1_arrivals(&self, x: usize) -> &[(usize, f64)] {
        &self.arrivals1[x]
    }

    pub fn type2_arrivals(&self, x: usize) -> &[(usize, f64)] {
        &self.arrivals2[x]
    }

    pub fn type1_blocked(&self, x: usize) -> bool {
        self.arrivals1[x].is_empty()
    }

    pub fn type2_blocked(&self, x: usize) -> bool {
        self.arrivals2[x].is_empty()
    }
}

/// Labeled jump chain of the exact policy dynamics.
pub fn build_sim_exact(
    scenario: &Scenario,
    policy: Policy,
    space: &StateSpace<DetailedState>,
) -> SimChain {
    let labeled = space
        .states()
        .iter()
        .map(|state| {
            detailed_transitions(scenario, policy, state)
                .into_iter()
                .map(|(target, rate, kind)| {
                    (space.index_of(&target).expect("feasible target"), rate, kind)
                })
                .collect()
        })
        .collect();
    SimChain::from_transitions(scenario.lambda1(), scenario.lambda2(), labeled)
}

/// Labeled jump chain of the approximate reduced dynamics.
pub fn build_sim_reduced(
    scenario: &Scenario,
    policy: ReducedPolicy,
    space: &StateSpace<ReducedState>,
) -> SimChain {
    let table = CompositionTable::new(
        scenario.m2() as usize,
        scenario.m1() as usize,
        scenario.n2(),
    );
    let lambda_rule = match policy {
        ReducedPolicy::Ra => LambdaMinusRule::RandomAllocation,
        ReducedPolicy::Lm => LambdaMinusRule::LeastMostFilled,
    };
    let labeled = space
        .states()
        .iter()
        .map(|state| {
            reduced_transitions(scenario, state, MuPlusRule::Estimate(&table), lambda_rule)
                .into_iter()
                .map(|(target, rate, kind)| {
                    (space.index_of(&target).expect("feasible target"), rate, kind)
                })
                .collect()
        })
        .collect();
    SimChain::from_transitions(scenario.lambda1(), scenario.lambda2(), labeled)
}
