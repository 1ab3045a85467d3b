//! Exact non-negative rationals for efficiency and loss factors.
//!
//! All ledger accounting is integer watt-hours, so efficiency and loss
//! arithmetic must round deterministically instead of going through
//! floating point.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// A non-negative rational `num / den` with `den > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratio {
    pub num: u32,
    pub den: u32,
}

impl Ratio {
    pub const ONE: Ratio = Ratio { num: 1, den: 1 };
    pub const ZERO: Ratio = Ratio { num: 0, den: 1 };

    pub fn new(num: u32, den: u32) -> Result<Self, ConfigError> {
        if den == 0 {
            return Err(ConfigError::ZeroDenominator);
        }
        Ok(Ratio { num, den })
    }

    /// `floor(value * num / den)`.
    pub fn mul_floor(&self, value: u64) -> u64 {
        (value as u128 * self.num as u128 / self.den as u128) as u64
    }

    /// `ceil(value * num / den)`.
    pub fn mul_ceil(&self, value: u64) -> u64 {
        let prod = value as u128 * self.num as u128;
        prod.div_ceil(self.den as u128) as u64
    }

    /// `ceil(value / (1 - self))`; the gross-up used to push `value`
    /// watt-hours through a lossy link. Requires `self < 1`.
    pub fn gross_up_ceil(&self, value: u64) -> u64 {
        debug_assert!(self.num < self.den, "gross-up needs a loss factor below 1");
        let remaining = (self.den - self.num) as u128;
        (value as u128 * self.den as u128).div_ceil(remaining) as u64
    }

    pub fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// True when `0 <= self <= 1`.
    pub fn is_fraction(&self) -> bool {
        self.num <= self.den
    }

    /// True when `0 <= self < 1`.
    pub fn is_proper_fraction(&self) -> bool {
        self.num < self.den
    }

    pub fn is_zero(&self) -> bool {
        self.num == 0
    }
}
