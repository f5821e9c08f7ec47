//! Census coverage-error accounting.
//!
//! A [`CoverageAccount`] holds a census count together with the undercount
//! and overcount that a coverage-measurement survey attributes to it. All
//! quantities are real-valued so the same arithmetic serves person counts
//! and rate-level synthetic data.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoverageError {
    #[error("true population C + N = {0} is not positive; the net error rate is undefined")]
    NonPositiveTruePopulation(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageAccount {
    pub census_count: f64,
    pub undercount: f64,
    pub overcount: f64,
}

impl CoverageAccount {
    pub fn new(census_count: f64, undercount: f64, overcount: f64) -> Self {
        Self {
            census_count,
            undercount,
            overcount,
        }
    }

    /// Gross coverage error `G = U + O`.
    pub fn gross_error(&self) -> f64 {
        self.undercount + self.overcount
    }

    /// Net coverage error `N = U - O`. Positive values are a net undercount.
    pub fn net_error(&self) -> f64 {
        self.undercount - self.overcount
    }

    /// True population `T = C + N`.
    pub fn true_population(&self) -> f64 {
        self.census_count + self.net_error()
    }

    /// Net coverage error rate in percent, `100 N / T`.
    pub fn net_error_rate(&self) -> Result<f64, CoverageError> {
        let t = self.true_population();
        if !(t > 0.0) {
            return Err(CoverageError::NonPositiveTruePopulation(t));
        }
        Ok(100.0 * self.net_error() / t)
    }
}

pub fn gross_error(account: &CoverageAccount) -> f64 {
    account.gross_error()
}

pub fn net_error(account: &CoverageAccount) -> f64 {
    account.net_error()
}

pub fn net_error_rate(account: &CoverageAccount) -> Result<f64, CoverageError> {
    account.net_error_rate()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn gross_error_examples() {
        assert_eq!(CoverageAccount::new(100.0, 5.0, 3.0).gross_error(), 8.0);
        assert_eq!(CoverageAccount::new(100.0, 0.0, 0.0).gross_error(), 0.0);
        let cancel = CoverageAccount::new(100.0, 7.0, 7.0);
        assert_eq!(cancel.gross_error(), 14.0);
        assert_eq!(cancel.net_error(), 0.0);
    }

    #[test]
    fn net_error_sign_convention() {
        assert_eq!(CoverageAccount::new(100.0, 5.0, 3.0).net_error(), 2.0);
        assert_eq!(CoverageAccount::new(100.0, 3.0, 5.0).net_error(), -2.0);
        assert_eq!(CoverageAccount::new(100.0, 0.0, 0.0).net_error(), 0.0);
    }

    #[test]
    fn net_error_rate_examples() {
        let rate = CoverageAccount::new(100.0, 5.0, 3.0)
            .net_error_rate()
            .unwrap();
        assert!((rate - 200.0 / 102.0).abs() < 1e-12);
        assert!((rate - 1.9608).abs() < 1e-4);
        assert_eq!(
            CoverageAccount::new(100.0, 4.0, 4.0)
                .net_error_rate()
                .unwrap(),
            0.0
        );
        assert_eq!(
            CoverageAccount::new(1.0, 0.0, 2.0).net_error_rate(),
            Err(CoverageError::NonPositiveTruePopulation(-1.0))
        );
    }

    proptest! {
        #[test]
        fn gross_bounds_net(c in 0.0f64..1e6, u in 0.0f64..1e5, o in 0.0f64..1e5) {
            let acc = CoverageAccount::new(c, u, o);
            prop_assert!(acc.gross_error() >= acc.net_error().abs());
        }

        #[test]
        fn swapping_parts_flips_rate_sign(c in 1.0f64..1e6, u in 0.0f64..1e3, o in 0.0f64..1e3) {
            prop_assume!(u != o);
            let a = CoverageAccount::new(c + 2e3, u, o).net_error_rate().unwrap();
            let b = CoverageAccount::new(c + 2e3, o, u).net_error_rate().unwrap();
            prop_assert!(a.signum() == -b.signum());
        }
    }
}
