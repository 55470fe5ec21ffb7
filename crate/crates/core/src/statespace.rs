//! Enumeration and indexing of the detailed and reduced state spaces, and
//! the surjection between them.
//!
//! The detailed description tracks, for every occupancy level `k`, how many
//! superchannels hold exactly `k` type 1 flows and no type 2 flow. The
//! reduced description only keeps the triplet (allocated type 1 flows,
//! allocated type 2 flows, free superchannels). Both spaces are always
//! materialized in lexicographic order so that matrix layouts are stable.

use std::collections::HashMap;
use std::hash::Hash;

use thiserror::Error;

use crate::scenario::Scenario;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateSpaceError {
    #[error("state space with {count} states exceeds the addressable capacity")]
    CapacityExceeded { count: u128 },
    #[error("the detailed/reduced correspondence is only invertible for n2 = 2 (got n2 = {n2})")]
    NotInvertible { n2: u32 },
}

/// Occupancy vector `(i_0, ..., i_n2)`: `i_k` is the number of superchannels
/// holding exactly `k` type 1 flows and no type 2 flow.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DetailedState(Vec<u16>);

impl DetailedState {
    pub fn new(occupancy: Vec<u16>) -> Self {
        Self(occupancy)
    }

    pub fn occupancy(&self) -> &[u16] {
        &self.0
    }

    /// Number of superchannels not occupied by a type 2 flow (the sum of the
    /// occupancy vector, `I`).
    pub fn type2_free_superchannels(&self) -> u32 {
        self.0.iter().map(|&c| u32::from(c)).sum()
    }

    /// Number of free type 1 channels, `R = sum_{k < n2} i_k (n2 - k)`.
    pub fn free_channels(&self) -> u32 {
        let n2 = (self.0.len() - 1) as u32;
        self.0
            .iter()
            .enumerate()
            .take(self.0.len() - 1)
            .map(|(k, &c)| u32::from(c) * (n2 - k as u32))
            .sum()
    }

    /// Number of empty superchannels, `i_0`.
    pub fn empty_superchannels(&self) -> u32 {
        u32::from(self.0[0])
    }
}

/// Reduced description `(i, j, e)`: allocated type 1 flows, allocated type 2
/// flows and free superchannels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ReducedState {
    pub i: u32,
    pub j: u32,
    pub e: u32,
}

impl ReducedState {
    pub fn new(i: u32, j: u32, e: u32) -> Self {
        Self { i, j, e }
    }

    /// Number of free type 1 channels, `R = m1 - i - j * n2`.
    pub fn free_channels(&self, scenario: &Scenario) -> u32 {
        scenario.m1() - self.i - self.j * scenario.n2()
    }

    /// Number of superchannels holding at least one type 1 flow,
    /// `m2 - j - e`.
    pub fn type1_superchannels(&self, scenario: &Scenario) -> u32 {
        scenario.m2() - self.j - self.e
    }

    /// Both feasibility inequalities: `m2 <= i + j + e` (every superchannel
    /// is accounted for) and `i + (j + e) n2 <= m1`.
    pub fn is_feasible(&self, scenario: &Scenario) -> bool {
        let (m1, n2, m2) = (scenario.m1(), scenario.n2(), scenario.m2());
        m2 <= self.i + self.j + self.e && self.i + (self.j + self.e) * n2 <= m1
    }
}

/// An ordered state enumeration with an exact inverse lookup.
#[derive(Debug, Clone)]
pub struct StateSpace<S> {
    states: Vec<S>,
    index: HashMap<S, usize>,
}

impl<S: Clone + Eq + Hash> StateSpace<S> {
    fn from_states(states: Vec<S>) -> Self {
        let index = states
            .iter()
            .enumerate()
            .map(|(k, s)| (s.clone(), k))
            .collect();
        Self { states, index }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[S] {
        &self.states
    }

    pub fn state(&self, position: usize) -> &S {
        &self.states[position]
    }

    /// Exact position of a state in the enumeration order.
    pub fn index_of(&self, state: &S) -> Option<usize> {
        self.index.get(state).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &S)> {
        self.states.iter().enumerate()
    }
}

/// Closed-form size of the detailed space: `C(m2 + n2 + 1, n2 + 1)`.
pub fn detailed_count(scenario: &Scenario) -> Result<u128, StateSpaceError> {
    binomial(
        u128::from(scenario.m2()) + u128::from(scenario.n2()) + 1,
        u128::from(scenario.n2()) + 1,
    )
    .ok_or(StateSpaceError::CapacityExceeded { count: u128::MAX })
}

/// Size of the reduced space by direct summation over `u = j + e`.
pub fn reduced_count(scenario: &Scenario) -> u128 {
    let (m1, n2, m2) = (
        u128::from(scenario.m1()),
        u128::from(scenario.n2()),
        u128::from(scenario.m2()),
    );
    let mut total = 0u128;
    for u in 0..=m2 {
        let i_min = m2.saturating_sub(u);
        let i_max = m1 - u * n2;
        if i_max >= i_min {
            total += (u + 1) * (i_max - i_min + 1);
        }
    }
    total
}

fn binomial(n: u128, k: u128) -> Option<u128> {
    let k = k.min(n - k);
    let mut result: u128 = 1;
    for step in 1..=k {
        result = result.checked_mul(n - k + step)? / step;
    }
    Some(result)
}

fn check_capacity(count: u128) -> Result<usize, StateSpaceError> {
    usize::try_from(count).map_err(|_| StateSpaceError::CapacityExceeded { count })
}

/// Enumerates every occupancy vector with `sum <= m2`, in lexicographic
/// order. Fails fast from the closed-form count before allocating.
pub fn enumerate_detailed(
    scenario: &Scenario,
) -> Result<StateSpace<DetailedState>, StateSpaceError> {
    let count = detailed_count(scenario)?;
    let expected = check_capacity(count)?;
    if scenario.m2() > u32::from(u16::MAX) {
        return Err(StateSpaceError::CapacityExceeded { count });
    }

    let n2 = scenario.n2() as usize;
    let m2 = scenario.m2() as u16;
    let mut states = Vec::with_capacity(expected);
    let mut buffer = vec![0u16; n2 + 1];
    fill_detailed(&mut states, &mut buffer, 0, m2);
    debug_assert_eq!(states.len(), expected);
    Ok(StateSpace::from_states(states))
}

fn fill_detailed(states: &mut Vec<DetailedState>, buffer: &mut Vec<u16>, pos: usize, left: u16) {
    if pos == buffer.len() - 1 {
        for v in 0..=left {
            buffer[pos] = v;
            states.push(DetailedState(buffer.clone()));
        }
        buffer[pos] = 0;
        return;
    }
    for v in 0..=left {
        buffer[pos] = v;
        fill_detailed(states, buffer, pos + 1, left - v);
    }
    buffer[pos] = 0;
}

/// Enumerates every feasible `(i, j, e)` triplet in lexicographic order.
pub fn enumerate_reduced(scenario: &Scenario) -> Result<StateSpace<ReducedState>, StateSpaceError> {
    let count = reduced_count(scenario);
    let expected = check_capacity(count)?;

    let (m1, n2, m2) = (scenario.m1(), scenario.n2(), scenario.m2());
    let mut states = Vec::with_capacity(expected);
    for i in 0..=m1 {
        for j in 0..=m2 {
            if i + j * n2 > m1 {
                break;
            }
            for e in 0..=(m2 - j) {
                let state = ReducedState::new(i, j, e);
                if state.is_feasible(scenario) {
                    states.push(state);
                }
            }
        }
    }
    debug_assert_eq!(states.len(), expected);
    Ok(StateSpace::from_states(states))
}

/// The surjection from detailed to reduced states:
/// `(sum_k k i_k, m2 - sum_k i_k, i_0)`.
pub fn gamma(detailed: &DetailedState, scenario: &Scenario) -> ReducedState {
    let allocated: u32 = detailed
        .occupancy()
        .iter()
        .enumerate()
        .map(|(k, &c)| k as u32 * u32::from(c))
        .sum();
    let reduced = ReducedState::new(
        allocated,
        scenario.m2() - detailed.type2_free_superchannels(),
        detailed.empty_superchannels(),
    );
    debug_assert!(reduced.is_feasible(scenario));
    reduced
}

/// Inverse of [`gamma`], which exists only for `n2 = 2`:
/// `(e, 2 m2 - i - 2j - 2e, i + j + e - m2)`.
pub fn gamma_inverse(
    reduced: &ReducedState,
    scenario: &Scenario,
) -> Result<DetailedState, StateSpaceError> {
    if scenario.n2() != 2 {
        return Err(StateSpaceError::NotInvertible { n2: scenario.n2() });
    }
    let m2 = scenario.m2();
    let (i, j, e) = (reduced.i, reduced.j, reduced.e);
    let singles = 2 * m2 - i - 2 * j - 2 * e;
    let pairs = i + j + e - m2;
    Ok(DetailedState(vec![e as u16, singles as u16, pairs as u16]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario(m1: u32, n2: u32) -> Scenario {
        Scenario::new(m1, n2, 1.0, 1.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn detailed_counts_match_closed_form() {
        for (m1, n2, expected) in [(40u32, 4u32, 3003u128), (80, 4, 53130), (4, 2, 10)] {
            let sc = scenario(m1, n2);
            assert_eq!(detailed_count(&sc).unwrap(), expected);
            assert_eq!(enumerate_detailed(&sc).unwrap().len() as u128, expected);
        }
    }

    #[test]
    fn detailed_brute_force_small() {
        // m1 = 4, n2 = 2: all triples (i0, i1, i2) with sum <= 2.
        let sc = scenario(4, 2);
        let mut expected = Vec::new();
        for i0 in 0..=2u16 {
            for i1 in 0..=2 {
                for i2 in 0..=2 {
                    if i0 + i1 + i2 <= 2 {
                        expected.push(vec![i0, i1, i2]);
                    }
                }
            }
        }
        expected.sort();
        let space = enumerate_detailed(&sc).unwrap();
        let got: Vec<_> = space.states().iter().map(|s| s.occupancy().to_vec()).collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn reduced_counts_match_table() {
        for (m1, n2, expected) in [(40u32, 4u32, 726u128), (160, 4, 35301), (4, 2, 10)] {
            let sc = scenario(m1, n2);
            assert_eq!(reduced_count(&sc), expected);
            assert_eq!(enumerate_reduced(&sc).unwrap().len() as u128, expected);
        }
    }

    #[test]
    fn reduced_enumeration_matches_brute_force_scan() {
        let sc = scenario(12, 4);
        let space = enumerate_reduced(&sc).unwrap();
        let mut brute = Vec::new();
        for i in 0..=12 {
            for j in 0..=3 {
                for e in 0..=3 {
                    let r = ReducedState::new(i, j, e);
                    if r.is_feasible(&sc) {
                        brute.push(r);
                    }
                }
            }
        }
        brute.sort();
        assert_eq!(space.states(), &brute[..]);
    }

    #[test]
    fn index_is_left_inverse() {
        let sc = scenario(8, 4);
        let space = enumerate_detailed(&sc).unwrap();
        for (k, state) in space.iter() {
            assert_eq!(space.index_of(state), Some(k));
        }
    }

    #[test]
    fn gamma_examples() {
        let sc = scenario(40, 4);
        let d = DetailedState::new(vec![3, 2, 1, 0, 4]);
        assert_eq!(gamma(&d, &sc), ReducedState::new(20, 0, 3));

        let empty_link = DetailedState::new(vec![10, 0, 0, 0, 0]);
        assert_eq!(gamma(&empty_link, &sc), ReducedState::new(0, 0, 10));

        let all_type2 = DetailedState::new(vec![0, 0, 0, 0, 0]);
        assert_eq!(gamma(&all_type2, &sc), ReducedState::new(0, 10, 0));
    }

    #[test]
    fn gamma_inverse_round_trips() {
        let sc = scenario(8, 2);
        let r = ReducedState::new(3, 1, 1);
        let d = gamma_inverse(&r, &sc).unwrap();
        assert_eq!(d.occupancy(), &[1, 1, 1]);
        assert_eq!(gamma(&d, &sc), r);

        let empty = ReducedState::new(0, 0, 4);
        assert_eq!(gamma_inverse(&empty, &sc).unwrap().occupancy(), &[4, 0, 0]);

        let sc4 = scenario(8, 4);
        assert_eq!(
            gamma_inverse(&ReducedState::new(0, 0, 2), &sc4),
            Err(StateSpaceError::NotInvertible { n2: 4 })
        );
    }

    #[test]
    fn gamma_is_surjective_and_bijective_for_n2_2() {
        for (m1, n2) in [(8u32, 2u32), (12, 4)] {
            let sc = scenario(m1, n2);
            let det = enumerate_detailed(&sc).unwrap();
            let red = enumerate_reduced(&sc).unwrap();
            let mut hit = vec![false; red.len()];
            for (_, d) in det.iter() {
                let r = gamma(d, &sc);
                hit[red.index_of(&r).expect("gamma image feasible")] = true;
            }
            assert!(hit.iter().all(|&h| h), "gamma must cover the reduced space");
            if n2 == 2 {
                assert_eq!(det.len(), red.len());
            }
        }
    }

    #[test]
    fn capacity_fails_fast() {
        let sc = scenario(4_000_000, 1000);
        assert!(matches!(
            enumerate_detailed(&sc),
            Err(StateSpaceError::CapacityExceeded { .. })
        ));
    }
}
