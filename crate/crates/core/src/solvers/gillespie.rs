//! Blocking-probability estimation by simulating the embedded jump chain.
//!
//! Arrivals form a Poisson process whose epochs see the time-stationary
//! distribution, so it suffices to record, at every arrival epoch, whether
//! each request type would be blocked. Blocked arrivals are simulated as
//! self-loops so that arrival epochs appear in the jump chain at their true
//! rate. Output analysis uses batch means with a normal-approximation 95%
//! confidence interval over batches of a fixed number of arrivals.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::generators::SimChain;
use crate::solvers::SolverError;

/// Two-sided 95% normal quantile.
const Z_95: f64 = 1.959963984540054;

/// Warm-up is abandoned after this many windows even if the blocking
/// frequency has not stabilized.
const MAX_WARMUP_WINDOWS: u32 = 8;

#[derive(Debug, Clone, Copy)]
pub struct SimulationParams {
    /// Arrivals per batch (and per warm-up window).
    pub batch_arrivals: u64,
    /// Batches to simulate before the stopping rule may fire; at least 2 so
    /// the batch-means variance exists.
    pub min_batches: u32,
    pub max_batches: u32,
    /// Relative half-width tolerance: stop once the CI width over the mean
    /// falls below this for both events.
    pub phi: f64,
    pub seed: u64,
}

impl Default for SimulationParams {
    /// The settings used for the reference experiments: batches of 4e7
    /// arrivals, between 5 and 50 batches, relative tolerance 1e-3.
    fn default() -> Self {
        Self {
            batch_arrivals: 40_000_000,
            min_batches: 5,
            max_batches: 50,
            phi: 1e-3,
            seed: 0,
        }
    }
}

impl SimulationParams {
    fn validate(&self) -> Result<(), SolverError> {
        if self.batch_arrivals == 0 {
            return Err(SolverError::InvalidParams(
                "batch_arrivals must be positive".into(),
            ));
        }
        if self.min_batches < 2 {
            return Err(SolverError::InvalidParams(
                "min_batches must be at least 2".into(),
            ));
        }
        if self.min_batches > self.max_batches {
            return Err(SolverError::InvalidParams(
                "min_batches must not exceed max_batches".into(),
            ));
        }
        if !(self.phi > 0.0) {
            return Err(SolverError::InvalidParams("phi must be positive".into()));
        }
        Ok(())
    }
}

/// Estimate for one blocking event.
#[derive(Debug, Clone, Copy)]
pub struct EventEstimate {
    /// Mean of the batch means.
    pub mean: f64,
    /// 95% CI half-width over batch means; absent when the event was never
    /// observed (the CI is undefined, reported rather than failed).
    pub ci_halfwidth: Option<f64>,
    /// CI width divided by the mean.
    pub relative_error: Option<f64>,
    pub zero_mean: bool,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct SimulationResult {
    pub bp1: EventEstimate,
    pub bp2: EventEstimate,
    pub batches: u32,
    /// Arrivals observed inside batches (warm-up excluded).
    pub arrivals: u64,
    pub warmup_arrivals: u64,
    /// Total simulated time, warm-up included.
    pub sim_time: f64,
    /// Both events met the relative tolerance before `max_batches`.
    pub converged: bool,
}

struct StateTable {
    cumulative: Vec<f64>,
    target: Vec<usize>,
    arrival: Vec<bool>,
    total: f64,
    blocked1: bool,
    blocked2: bool,
}

fn build_tables(chain: &SimChain) -> Vec<StateTable> {
    (0..chain.len())
        .map(|x| {
            let mut cumulative = Vec::new();
            let mut target = Vec::new();
            let mut arrival = Vec::new();
            let mut total = 0.0;
            let mut push = |rate: f64, to: usize, is_arrival: bool, total: &mut f64| {
                *total += rate;
                cumulative.push(*total);
                target.push(to);
                arrival.push(is_arrival);
            };
            for &(to, rate) in chain.departures(x) {
                push(rate, to, false, &mut total);
            }
            if chain.type1_blocked(x) {
                push(chain.lambda1(), x, true, &mut total);
            } else {
                for &(to, rate) in chain.type1_arrivals(x) {
                    push(rate, to, true, &mut total);
                }
            }
            if chain.type2_blocked(x) {
                push(chain.lambda2(), x, true, &mut total);
            } else {
                for &(to, rate) in chain.type2_arrivals(x) {
                    push(rate, to, true, &mut total);
                }
            }
            StateTable {
                cumulative,
                target,
                arrival,
                total,
                blocked1: chain.type1_blocked(x),
                blocked2: chain.type2_blocked(x),
            }
        })
        .collect()
}

struct Window {
    arrivals: u64,
    blocked1: u64,
    blocked2: u64,
}

fn summarize(batch_means: &[f64], phi: f64) -> EventEstimate {
    let count = batch_means.len() as f64;
    let mean = batch_means.iter().sum::<f64>() / count;
    if mean == 0.0 {
        return EventEstimate {
            mean: 0.0,
            ci_halfwidth: None,
            relative_error: None,
            zero_mean: true,
            converged: false,
        };
    }
    let variance = batch_means
        .iter()
        .map(|m| (m - mean) * (m - mean))
        .sum::<f64>()
        / (count - 1.0);
    let halfwidth = Z_95 * (variance / count).sqrt();
    let relative = 2.0 * halfwidth / mean;
    EventEstimate {
        mean,
        ci_halfwidth: Some(halfwidth),
        relative_error: Some(relative),
        zero_mean: false,
        converged: relative < phi,
    }
}

/// Simulates the chain and estimates both blocking probabilities.
///
/// The run is bit-deterministic given the chain and parameters. Warm-up
/// discards at least one full window of arrivals and keeps discarding until
/// the blocking frequency of two consecutive windows agrees within 10%
/// relative (or [`MAX_WARMUP_WINDOWS`] is hit); batch accounting starts
/// afterwards.
pub fn gillespie_blocking_estimate(
    chain: &SimChain,
    params: &SimulationParams,
) -> Result<SimulationResult, SolverError> {
    params.validate()?;
    assert!(!chain.is_empty());
    let tables = build_tables(chain);
    let mut rng = ChaCha12Rng::seed_from_u64(params.seed);
    let mut state = 0usize;
    let mut sim_time = 0.0;

    let run_window = |state: &mut usize, sim_time: &mut f64, rng: &mut ChaCha12Rng| -> Window {
        let mut window = Window {
            arrivals: 0,
            blocked1: 0,
            blocked2: 0,
        };
        while window.arrivals < params.batch_arrivals {
            let table = &tables[*state];
            let draw: f64 = rng.gen::<f64>() * table.total;
            let slot = table
                .cumulative
                .partition_point(|&c| c <= draw)
                .min(table.cumulative.len() - 1);
            *sim_time += -(1.0 - rng.gen::<f64>()).ln() / table.total;
            if table.arrival[slot] {
                window.arrivals += 1;
                window.blocked1 += u64::from(table.blocked1);
                window.blocked2 += u64::from(table.blocked2);
            }
            *state = table.target[slot];
        }
        window
    };

    // Warm-up until the combined blocking frequency stabilizes.
    let mut warmup_windows = 1u32;
    let mut previous = run_window(&mut state, &mut sim_time, &mut rng);
    loop {
        if warmup_windows >= MAX_WARMUP_WINDOWS {
            break;
        }
        let next = run_window(&mut state, &mut sim_time, &mut rng);
        warmup_windows += 1;
        let prev_freq = (previous.blocked1 + previous.blocked2) as f64;
        let next_freq = (next.blocked1 + next.blocked2) as f64;
        let scale = prev_freq.max(next_freq);
        previous = next;
        if scale == 0.0 || (next_freq - prev_freq).abs() / scale < 0.1 {
            break;
        }
    }

    let mut means1 = Vec::with_capacity(params.max_batches as usize);
    let mut means2 = Vec::with_capacity(params.max_batches as usize);
    let per_batch = params.batch_arrivals as f64;
    let (bp1, bp2, converged) = loop {
        let window = run_window(&mut state, &mut sim_time, &mut rng);
        means1.push(window.blocked1 as f64 / per_batch);
        means2.push(window.blocked2 as f64 / per_batch);
        let batches = means1.len() as u32;
        if batches >= params.min_batches {
            let bp1 = summarize(&means1, params.phi);
            let bp2 = summarize(&means2, params.phi);
            let converged = bp1.converged && bp2.converged;
            if converged || batches >= params.max_batches {
                break (bp1, bp2, converged);
            }
        }
    };

    let batches = means1.len() as u32;
    Ok(SimulationResult {
        bp1,
        bp2,
        batches,
        arrivals: u64::from(batches) * params.batch_arrivals,
        warmup_arrivals: u64::from(warmup_windows) * params.batch_arrivals,
        sim_time,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{build_sim_exact, build_sim_reduced, Policy, ReducedPolicy};
    use crate::scenario::Scenario;
    use crate::statespace::{enumerate_detailed, enumerate_reduced};

    fn small_params(seed: u64) -> SimulationParams {
        SimulationParams {
            batch_arrivals: 20_000,
            min_batches: 4,
            max_batches: 12,
            phi: 1e-3,
            seed,
        }
    }

    #[test]
    fn fixed_seed_is_bit_deterministic() {
        let sc = Scenario::from_load(8, 2, 1.0).unwrap();
        let space = enumerate_detailed(&sc).unwrap();
        let chain = build_sim_exact(&sc, Policy::Ra, &space);
        let a = gillespie_blocking_estimate(&chain, &small_params(7)).unwrap();
        let b = gillespie_blocking_estimate(&chain, &small_params(7)).unwrap();
        assert_eq!(a.bp1.mean.to_bits(), b.bp1.mean.to_bits());
        assert_eq!(a.bp2.mean.to_bits(), b.bp2.mean.to_bits());
        assert_eq!(a.sim_time.to_bits(), b.sim_time.to_bits());

        let c = gillespie_blocking_estimate(&chain, &small_params(8)).unwrap();
        assert_ne!(a.bp1.mean.to_bits(), c.bp1.mean.to_bits());
    }

    #[test]
    fn estimates_track_the_linear_solve() {
        use crate::analysis::{blocking_event, EventKind};
        use crate::generators::build_exact;
        use crate::solvers::{event_probability, stationary_by_linear_solve};

        let sc = Scenario::from_load(8, 2, 1.0).unwrap();
        let space = enumerate_detailed(&sc).unwrap();
        let gen = build_exact(&sc, Policy::Ra, &space);
        let pi = stationary_by_linear_solve(&gen).unwrap();
        let exact1 = event_probability(&pi, &blocking_event(EventKind::Type1, &space, &sc).indicator);
        let exact2 = event_probability(&pi, &blocking_event(EventKind::Type2, &space, &sc).indicator);

        let chain = build_sim_exact(&sc, Policy::Ra, &space);
        let result = gillespie_blocking_estimate(&chain, &small_params(11)).unwrap();
        // Loose 5-sigma-style envelope; the acceptance suite does the
        // calibrated coverage sweep.
        let slack1 = 3.0 * result.bp1.ci_halfwidth.unwrap();
        let slack2 = 3.0 * result.bp2.ci_halfwidth.unwrap();
        assert!((result.bp1.mean - exact1).abs() < slack1.max(5e-3));
        assert!((result.bp2.mean - exact2).abs() < slack2.max(5e-3));
    }

    #[test]
    fn type2_only_limit_matches_erlang_b() {
        // With a vanishing type 1 load the superchannels behave as an
        // Erlang loss system with m2 servers.
        let sc = Scenario::new(8, 2, 1e-9, 2.0, 1.0, 1.0).unwrap();
        let space = enumerate_reduced(&sc).unwrap();
        let chain = build_sim_reduced(&sc, ReducedPolicy::Ra, &space);
        let params = SimulationParams {
            batch_arrivals: 50_000,
            min_batches: 5,
            max_batches: 20,
            phi: 1e-3,
            seed: 3,
        };
        let result = gillespie_blocking_estimate(&chain, &params).unwrap();
        let erlang_b = {
            let a: f64 = 2.0;
            let mut b = 1.0;
            for k in 1..=4u32 {
                b = a * b / (f64::from(k) + a * b);
            }
            b
        };
        let slack = (3.0 * result.bp2.ci_halfwidth.unwrap()).max(5e-3);
        assert!(
            (result.bp2.mean - erlang_b).abs() < slack,
            "{} vs {erlang_b}",
            result.bp2.mean
        );
    }

    #[test]
    fn zero_mean_event_is_reported_not_failed() {
        // Tiny type 2 load on a large link: type 1 blocking is never seen.
        let sc = Scenario::new(16, 2, 1e-6, 1e-6, 1.0, 1.0).unwrap();
        let space = enumerate_reduced(&sc).unwrap();
        let chain = build_sim_reduced(&sc, ReducedPolicy::Ra, &space);
        let params = SimulationParams {
            batch_arrivals: 1_000,
            min_batches: 2,
            max_batches: 3,
            phi: 1e-3,
            seed: 1,
        };
        let result = gillespie_blocking_estimate(&chain, &params).unwrap();
        assert!(result.bp1.zero_mean);
        assert!(result.bp1.ci_halfwidth.is_none());
        assert!(!result.converged);
    }

    #[test]
    fn rejects_invalid_params() {
        let sc = Scenario::from_load(8, 2, 1.0).unwrap();
        let space = enumerate_reduced(&sc).unwrap();
        let chain = build_sim_reduced(&sc, ReducedPolicy::Ra, &space);
        let mut params = small_params(0);
        params.min_batches = 1;
        assert!(matches!(
            gillespie_blocking_estimate(&chain, &params),
            Err(SolverError::InvalidParams(_))
        ));
    }
}
