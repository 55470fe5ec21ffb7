//! Lower and upper transition rate operators.
//!
//! An imprecise chain is driven by a set of generators; its lower operator
//! maps `f` to the componentwise infimum of `Q f` over the set. The sets
//! built here are represented extensionally by their extremal matrices (two
//! or four), so applying the operator is a handful of sparse products
//! followed by a componentwise minimum.

use thiserror::Error;

use crate::generators::Generator;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OperatorError {
    #[error("operator family must be non-empty")]
    EmptyFamily,
    #[error("family members disagree on dimension: {first} vs {other}")]
    MixedDimensions { first: usize, other: usize },
    #[error("function has dimension {got}, operator expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("step {step} is not below the stability bound {limit}")]
    StepTooLarge { step: f64, limit: f64 },
}

/// A lower transition rate operator, realized by a non-empty family of
/// generators over a common state space.
#[derive(Debug, Clone)]
pub struct LowerOperator {
    family: Vec<Generator>,
    norm: f64,
}

impl LowerOperator {
    pub fn new(family: Vec<Generator>) -> Result<Self, OperatorError> {
        let first = family.first().ok_or(OperatorError::EmptyFamily)?.dim();
        for member in &family {
            if member.dim() != first {
                return Err(OperatorError::MixedDimensions {
                    first,
                    other: member.dim(),
                });
            }
        }
        // ||Q|| = max_x |[Q 1_x](x)|; the minimum over the family of the
        // x-th diagonal is the most negative one, so this is the largest
        // absolute diagonal over members and states.
        let norm = family
            .iter()
            .map(Generator::max_abs_diagonal)
            .fold(0.0, f64::max);
        Ok(Self { family, norm })
    }

    /// A precise chain as the degenerate one-member family.
    pub fn singleton(generator: Generator) -> Self {
        Self::new(vec![generator]).expect("one member")
    }

    pub fn family(&self) -> &[Generator] {
        &self.family
    }

    pub fn dim(&self) -> usize {
        self.family[0].dim()
    }

    /// The operator norm `max_x |[Q 1_x](x)|`.
    pub fn norm(&self) -> f64 {
        self.norm
    }

    fn check_dim(&self, f: &[f64]) -> Result<(), OperatorError> {
        if f.len() != self.dim() {
            return Err(OperatorError::DimensionMismatch {
                expected: self.dim(),
                got: f.len(),
            });
        }
        Ok(())
    }

    /// `[Q_lower f](x) = min over members of [Q f](x)`.
    pub fn apply_lower(&self, f: &[f64]) -> Result<Vec<f64>, OperatorError> {
        self.check_dim(f)?;
        let mut out = vec![0.0; self.dim()];
        self.apply_lower_into(f, &mut out);
        Ok(out)
    }

    pub(crate) fn apply_lower_into(&self, f: &[f64], out: &mut [f64]) {
        self.family[0].apply_into(f, out);
        for member in &self.family[1..] {
            for (x, slot) in out.iter_mut().enumerate() {
                let value = member.row_dot(x, f);
                if value < *slot {
                    *slot = value;
                }
            }
        }
    }

    /// Conjugate upper operator: `Q_upper f = -Q_lower(-f)`.
    pub fn apply_upper(&self, f: &[f64]) -> Result<Vec<f64>, OperatorError> {
        let negated: Vec<f64> = f.iter().map(|v| -v).collect();
        let mut out = self.apply_lower(&negated)?;
        for v in &mut out {
            *v = -*v;
        }
        Ok(out)
    }

    /// Approximates the transient lower expectation at horizon `t` by
    /// `(I + (t/n) Q_lower)^n f`. The step `t/n` must stay below
    /// `2 / ||Q_lower||`.
    pub fn transient_lower_expectation(
        &self,
        f: &[f64],
        horizon: f64,
        steps: u64,
    ) -> Result<Vec<f64>, OperatorError> {
        assert!(horizon >= 0.0 && horizon.is_finite());
        assert!(steps >= 1);
        self.check_dim(f)?;
        let step = horizon / steps as f64;
        if self.norm > 0.0 && step >= 2.0 / self.norm {
            return Err(OperatorError::StepTooLarge {
                step,
                limit: 2.0 / self.norm,
            });
        }
        let mut g = f.to_vec();
        if horizon == 0.0 {
            return Ok(g);
        }
        let mut qg = vec![0.0; self.dim()];
        for _ in 0..steps {
            self.apply_lower_into(&g, &mut qg);
            for (gv, qv) in g.iter_mut().zip(&qg) {
                *gv += step * *qv;
            }
        }
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{build_extremal_family, ImpreciseModel};
    use crate::scenario::Scenario;
    use crate::statespace::enumerate_reduced;
    use proptest::prelude::*;

    fn two_state(a: f64, b: f64) -> Generator {
        Generator::from_off_diagonal_rows(vec![vec![(1, a)], vec![(0, b)]])
    }

    fn pi_operator(m1: u32, n2: u32) -> LowerOperator {
        let sc = Scenario::new(m1, n2, 1.0, 1.0, 1.0, 1.0).unwrap();
        let space = enumerate_reduced(&sc).unwrap();
        LowerOperator::new(build_extremal_family(&sc, ImpreciseModel::Pi, &space)).unwrap()
    }

    #[test]
    fn singleton_is_plain_product() {
        let gen = two_state(1.0, 2.0);
        let op = LowerOperator::singleton(gen.clone());
        let f = vec![0.3, -1.7];
        assert_eq!(op.apply_lower(&f).unwrap(), gen.apply(&f));
        assert_eq!(op.apply_upper(&f).unwrap(), gen.apply(&f));
    }

    #[test]
    fn constant_functions_map_to_zero() {
        let op = pi_operator(8, 4);
        let f = vec![5.0; op.dim()];
        for v in op.apply_lower(&f).unwrap() {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn lower_below_every_member_and_upper() {
        let op = pi_operator(8, 4);
        let f: Vec<f64> = (0..op.dim()).map(|k| ((k * 37 % 11) as f64) - 5.0).collect();
        let lower = op.apply_lower(&f).unwrap();
        let upper = op.apply_upper(&f).unwrap();
        for member in op.family() {
            let qf = member.apply(&f);
            for x in 0..op.dim() {
                assert!(lower[x] <= qf[x] + 1e-12);
                assert!(upper[x] >= qf[x] - 1e-12);
            }
        }
        // Conjugacy is an involution.
        let neg: Vec<f64> = f.iter().map(|v| -v).collect();
        let upper_of_neg = op.apply_upper(&neg).unwrap();
        for x in 0..op.dim() {
            assert!((upper_of_neg[x] + lower[x]).abs() < 1e-12);
        }
    }

    #[test]
    fn norm_is_max_abs_diagonal() {
        let op = LowerOperator::singleton(two_state(3.0, 1.0));
        assert_eq!(op.norm(), 3.0);
    }

    #[test]
    fn norm_invariant_under_family_order() {
        let op = pi_operator(8, 4);
        let mut reversed: Vec<Generator> = op.family().to_vec();
        reversed.reverse();
        let swapped = LowerOperator::new(reversed).unwrap();
        assert_eq!(op.norm(), swapped.norm());
        let f: Vec<f64> = (0..op.dim()).map(|k| (k as f64).sin()).collect();
        assert_eq!(op.apply_lower(&f).unwrap(), swapped.apply_lower(&f).unwrap());
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let op = LowerOperator::singleton(two_state(1.0, 1.0));
        assert!(matches!(
            op.apply_lower(&[1.0, 2.0, 3.0]),
            Err(OperatorError::DimensionMismatch { expected: 2, got: 3 })
        ));
    }

    #[test]
    fn transient_zero_horizon_is_identity() {
        let op = pi_operator(8, 4);
        let f: Vec<f64> = (0..op.dim()).map(|k| k as f64).collect();
        assert_eq!(op.transient_lower_expectation(&f, 0.0, 5).unwrap(), f);
    }

    #[test]
    fn transient_constant_stays_constant() {
        let op = pi_operator(8, 4);
        let f = vec![0.25; op.dim()];
        let g = op.transient_lower_expectation(&f, 3.0, 1000).unwrap();
        for v in g {
            assert!((v - 0.25).abs() < 1e-10);
        }
    }

    #[test]
    fn transient_rejects_large_steps() {
        let op = LowerOperator::singleton(two_state(1.0, 1.0));
        assert!(matches!(
            op.transient_lower_expectation(&[1.0, 0.0], 10.0, 2),
            Err(OperatorError::StepTooLarge { .. })
        ));
    }

    #[test]
    fn per_row_minimizers_assemble_to_the_lower_value() {
        // Separately specified rows: picking the minimizing member per row
        // reproduces the lower operator exactly.
        let op = pi_operator(8, 4);
        let f: Vec<f64> = (0..op.dim()).map(|k| ((k * 13 % 7) as f64) * 0.5).collect();
        let lower = op.apply_lower(&f).unwrap();
        for x in 0..op.dim() {
            let best = op
                .family()
                .iter()
                .map(|m| m.row_dot(x, &f))
                .fold(f64::INFINITY, f64::min);
            assert_eq!(lower[x], best);
        }
    }

    proptest! {
        #[test]
        fn shift_invariance_and_homogeneity(shift in -10.0f64..10.0, scale in 0.0f64..10.0) {
            let op = pi_operator(8, 2);
            let f: Vec<f64> = (0..op.dim()).map(|k| ((k * 7 % 5) as f64) - 2.0).collect();
            let base = op.apply_lower(&f).unwrap();

            let shifted: Vec<f64> = f.iter().map(|v| v + shift).collect();
            let shifted_out = op.apply_lower(&shifted).unwrap();
            for x in 0..op.dim() {
                prop_assert!((shifted_out[x] - base[x]).abs() < 1e-9);
            }

            let scaled: Vec<f64> = f.iter().map(|v| v * scale).collect();
            let scaled_out = op.apply_lower(&scaled).unwrap();
            for x in 0..op.dim() {
                prop_assert!((scaled_out[x] - scale * base[x]).abs() < 1e-9);
            }
        }
    }
}
