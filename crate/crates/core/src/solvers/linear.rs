//! Stationary distribution of a precise chain by a sparse linear solve.
//!
//! The stationary row vector is the unique probability solution of
//! `pi Q = 0`. Replacing the last column of `Q` with ones turns this
//! together with the normalization into the square system `pi R = b`,
//! where `b` is zero except for a final one. The transposed system is
//! solved directly (sparse LU) for small systems and with
//! ILU(0)-preconditioned restarted GMRES beyond that, where the direct
//! factorization's fill-in no longer fits in memory.

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};

use crate::analysis::check_irreducible;
use crate::generators::Generator;
use crate::solvers::gmres::{gmres, ilu0, Csr, GmresSettings};
use crate::solvers::SolverError;

const RESIDUAL_TOL: f64 = 1e-10;

/// Largest dimension attempted with the direct factorization; failures
/// (fill-in out of memory, singular pivots) fall back to the iterative
/// path before any contract check.
const DIRECT_LIMIT: usize = 20_000;

/// Builds the transposed system `R^T`: row `y` holds column `y` of `Q` for
/// `y < n-1`, and the last row is all ones.
fn transposed_system(gen: &Generator) -> Csr {
    let n = gen.dim();
    let last = n - 1;
    let mut buckets: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    buckets[last] = (0..n).map(|x| (x, 1.0)).collect();
    for x in 0..n {
        if x != last {
            buckets[x].push((x, gen.diagonal(x)));
        }
        for &(col, rate) in gen.row(x) {
            if col != last {
                buckets[col].push((x, rate));
            }
        }
    }
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col = Vec::new();
    let mut val = Vec::new();
    row_ptr.push(0);
    for bucket in &mut buckets {
        bucket.sort_unstable_by_key(|&(x, _)| x);
        for &(x, v) in bucket.iter() {
            col.push(x);
            val.push(v);
        }
        row_ptr.push(col.len());
    }
    Csr {
        n,
        row_ptr,
        col,
        val,
    }
}

fn direct_solve(system: &Csr) -> Option<Vec<f64>> {
    let n = system.n;
    let mut triplets: Vec<Triplet<usize, usize, f64>> = Vec::with_capacity(system.val.len());
    for row in 0..n {
        let (cols, vals) = system.row(row);
        for (&c, &v) in cols.iter().zip(vals) {
            triplets.push(Triplet::new(row, c, v));
        }
    }
    let matrix = SparseColMat::try_new_from_triplets(n, n, &triplets).ok()?;
    let rhs = faer::Mat::from_fn(n, 1, |r, _| if r == n - 1 { 1.0 } else { 0.0 });
    let lu = matrix.sp_lu().ok()?;
    let solution = lu.solve(&rhs);
    Some((0..n).map(|x| solution[(x, 0)]).collect())
}

fn iterative_solve(system: &Csr) -> Result<Vec<f64>, SolverError> {
    let n = system.n;
    let precond = ilu0(system).ok_or(SolverError::SingularSystem)?;
    let mut b = vec![0.0; n];
    b[n - 1] = 1.0;
    Ok(gmres(system, &precond, &b, &GmresSettings::default()))
}

/// Solves for the stationary distribution of an irreducible generator.
///
/// Reducible generators have no unique stationary distribution and make the
/// system singular, so they are rejected up front. The result is checked
/// against the residual, non-negativity and normalization contracts (all at
/// `1e-10`) and then renormalized to sum exactly to one.
pub fn stationary_by_linear_solve(gen: &Generator) -> Result<Vec<f64>, SolverError> {
    let n = gen.dim();
    assert!(n > 0);
    if !check_irreducible(gen).irreducible {
        return Err(SolverError::SingularSystem);
    }
    let system = transposed_system(gen);
    let mut pi = match if n <= DIRECT_LIMIT {
        direct_solve(&system)
    } else {
        None
    } {
        Some(direct) if direct.iter().all(|v| v.is_finite()) => direct,
        _ => iterative_solve(&system)?,
    };

    if pi.iter().any(|v| !v.is_finite()) {
        return Err(SolverError::SingularSystem);
    }

    // Residual of the original system pi R = b.
    let last = n - 1;
    let mut residual = vec![0.0; n];
    for x in 0..n {
        residual[x] += pi[x] * gen.diagonal(x);
        for &(col, rate) in gen.row(x) {
            residual[col] += pi[x] * rate;
        }
    }
    let total: f64 = pi.iter().sum();
    residual[last] = total - 1.0;
    let worst = residual.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    if worst > RESIDUAL_TOL {
        return Err(SolverError::ToleranceNotMet {
            what: "residual",
            value: worst,
        });
    }
    let most_negative = pi.iter().fold(0.0f64, |m, &v| m.min(v));
    if most_negative < -RESIDUAL_TOL {
        return Err(SolverError::ToleranceNotMet {
            what: "negative probability mass",
            value: most_negative,
        });
    }
    if (total - 1.0).abs() > RESIDUAL_TOL {
        return Err(SolverError::ToleranceNotMet {
            what: "distribution sum",
            value: total,
        });
    }

    for v in &mut pi {
        *v = v.max(0.0);
    }
    let sum: f64 = pi.iter().sum();
    for v in &mut pi {
        *v /= sum;
    }
    Ok(pi)
}

/// Probability mass a distribution assigns to an event.
pub fn event_probability(distribution: &[f64], event: &[bool]) -> f64 {
    assert_eq!(distribution.len(), event.len());
    distribution
        .iter()
        .zip(event)
        .filter(|&(_, &inside)| inside)
        .map(|(&p, _)| p)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::Generator;

    #[test]
    fn two_state_birth_death() {
        let (a, b) = (2.0, 3.0);
        let gen = Generator::from_off_diagonal_rows(vec![vec![(1, a)], vec![(0, b)]]);
        let pi = stationary_by_linear_solve(&gen).unwrap();
        assert!((pi[0] - b / (a + b)).abs() < 1e-12);
        assert!((pi[1] - a / (a + b)).abs() < 1e-12);
    }

    #[test]
    fn symmetric_ring_is_uniform() {
        // Doubly stochastic toy generator: symmetric rates on a 5-cycle.
        let n = 5;
        let rows: Vec<Vec<(usize, f64)>> = (0..n)
            .map(|x| vec![((x + 1) % n, 1.0), ((x + n - 1) % n, 1.0)])
            .collect();
        let gen = Generator::from_off_diagonal_rows(rows);
        let pi = stationary_by_linear_solve(&gen).unwrap();
        for v in pi {
            assert!((v - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn disconnected_chain_is_singular() {
        // Two 2-state blocks: the stationary distribution is not unique.
        let gen = Generator::from_off_diagonal_rows(vec![
            vec![(1, 1.0)],
            vec![(0, 1.0)],
            vec![(3, 1.0)],
            vec![(2, 1.0)],
        ]);
        assert!(stationary_by_linear_solve(&gen).is_err());
    }

    #[test]
    fn iterative_path_matches_direct_path() {
        // A birth-death chain large enough to exercise every code path on
        // the same input.
        let n = 400;
        let rows: Vec<Vec<(usize, f64)>> = (0..n)
            .map(|x| {
                let mut row = Vec::new();
                if x + 1 < n {
                    row.push((x + 1, 1.5));
                }
                if x > 0 {
                    row.push((x - 1, 0.7 * x as f64));
                }
                row
            })
            .collect();
        let gen = Generator::from_off_diagonal_rows(rows);
        let system = transposed_system(&gen);
        let direct = direct_solve(&system).unwrap();
        let iterative = iterative_solve(&system).unwrap();
        for (a, b) in direct.iter().zip(&iterative) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn event_probability_sums_mass() {
        let dist = [0.1, 0.2, 0.3, 0.4];
        assert!((event_probability(&dist, &[true, false, true, false]) - 0.4).abs() < 1e-15);
        assert_eq!(event_probability(&dist, &[false; 4]), 0.0);
    }
}
