//! System and traffic parameters shared by every model.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("m1 = {m1} must be a positive multiple of n2 = {n2}")]
    NonDivisible { m1: u32, n2: u32 },
    #[error("{name} = {value} must be strictly positive and finite")]
    NonPositiveRate { name: &'static str, value: f64 },
    #[error("n2 = {n2} must be at least 2")]
    N2TooSmall { n2: u32 },
}

/// A single optical link carrying two flow types.
///
/// Type 1 flows occupy one of `m1` channels; type 2 flows occupy a full
/// superchannel of `n2` channels, so the link holds `m2 = m1 / n2`
/// superchannels. Arrivals are Poisson with rates `lambda1`/`lambda2`
/// and holding times are exponential with rates `mu1`/`mu2`.
///
/// Immutable after construction; safe to share across threads.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scenario {
    m1: u32,
    n2: u32,
    lambda1: f64,
    lambda2: f64,
    mu1: f64,
    mu2: f64,
}

impl Scenario {
    /// Validates the raw parameters and builds a scenario.
    ///
    /// `m1` must be a positive multiple of `n2`, `n2` must be at least 2
    /// and all four rates must be strictly positive.
    pub fn new(
        m1: u32,
        n2: u32,
        lambda1: f64,
        lambda2: f64,
        mu1: f64,
        mu2: f64,
    ) -> Result<Self, ScenarioError> {
        if n2 < 2 {
            return Err(ScenarioError::N2TooSmall { n2 });
        }
        if m1 == 0 || m1 % n2 != 0 {
            return Err(ScenarioError::NonDivisible { m1, n2 });
        }
        for (name, value) in [
            ("lambda1", lambda1),
            ("lambda2", lambda2),
            ("mu1", mu1),
            ("mu2", mu2),
        ] {
            if !(value > 0.0) || !value.is_finite() {
                return Err(ScenarioError::NonPositiveRate { name, value });
            }
        }
        Ok(Self {
            m1,
            n2,
            lambda1,
            lambda2,
            mu1,
            mu2,
        })
    }

    /// Builds a scenario from a traffic load: unit service rates and
    /// `lambda1 = lambda2 = rho`.
    ///
    /// The load convention is sugar for the common experimental grid; the
    /// models themselves only ever see the four rates.
    pub fn from_load(m1: u32, n2: u32, rho: f64) -> Result<Self, ScenarioError> {
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(ScenarioError::NonPositiveRate {
                name: "rho",
                value: rho,
            });
        }
        Self::new(m1, n2, rho, rho, 1.0, 1.0)
    }

    /// Number of type 1 channels.
    pub fn m1(&self) -> u32 {
        self.m1
    }

    /// Channels per superchannel.
    pub fn n2(&self) -> u32 {
        self.n2
    }

    /// Number of superchannels, `m1 / n2` (exact integer arithmetic).
    pub fn m2(&self) -> u32 {
        self.m1 / self.n2
    }

    pub fn lambda1(&self) -> f64 {
        self.lambda1
    }

    pub fn lambda2(&self) -> f64 {
        self.lambda2
    }

    pub fn mu1(&self) -> f64 {
        self.mu1
    }

    pub fn mu2(&self) -> f64 {
        self.mu2
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accepts_table_parameters() {
        let sc = Scenario::new(40, 4, 2.0, 2.0, 1.0, 1.0).unwrap();
        assert_eq!(sc.m2(), 10);
    }

    #[test]
    fn rejects_non_divisible() {
        assert_eq!(
            Scenario::new(40, 3, 1.0, 1.0, 1.0, 1.0),
            Err(ScenarioError::NonDivisible { m1: 40, n2: 3 })
        );
        assert!(matches!(
            Scenario::new(0, 2, 1.0, 1.0, 1.0, 1.0),
            Err(ScenarioError::NonDivisible { .. })
        ));
    }

    #[test]
    fn rejects_small_n2() {
        assert_eq!(
            Scenario::new(8, 1, 1.0, 1.0, 1.0, 1.0),
            Err(ScenarioError::N2TooSmall { n2: 1 })
        );
    }

    #[test]
    fn rejects_bad_rates() {
        for bad in [0.0, -1.0, f64::NAN, f64::INFINITY] {
            assert!(matches!(
                Scenario::new(8, 2, bad, 1.0, 1.0, 1.0),
                Err(ScenarioError::NonPositiveRate { name: "lambda1", .. })
            ));
        }
    }

    #[test]
    fn smallest_desk_case() {
        let sc = Scenario::new(8, 2, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(sc.m2(), 4);
    }

    #[test]
    fn from_load_sets_unit_service_rates() {
        let sc = Scenario::from_load(40, 4, 10.0).unwrap();
        assert_eq!(sc.lambda1(), 10.0);
        assert_eq!(sc.lambda2(), 10.0);
        assert_eq!(sc.mu1(), 1.0);
        assert_eq!(sc.mu2(), 1.0);

        assert_eq!(Scenario::from_load(40, 4, 2.0).unwrap().lambda1(), 2.0);
        assert_eq!(Scenario::from_load(80, 4, 100.0).unwrap().lambda2(), 100.0);
        assert!(Scenario::from_load(40, 4, 0.0).is_err());
    }
}
