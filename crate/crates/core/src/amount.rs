//! Integer base-unit amounts.
//!
//! Every ledger computation in this crate runs on [`Amount`], a count of
//! zatoshis (10^-8 ZEC). Conversion to and from the decimal ZEC notation is
//! exact for any value with at most eight fractional digits.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of base units in one ZEC.
pub const ZAT_PER_ZEC: u64 = 100_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AmountError {
    #[error("amount overflow")]
    Overflow,
    #[error("invalid ZEC amount {0:?}")]
    Parse(String),
}

#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Amount(u64);

impl Amount {
    pub const ZERO: Amount = Amount(0);

    pub const fn from_zat(zat: u64) -> Self {
        Amount(zat)
    }

    /// Whole-ZEC constructor; panics on overflow, so only use with literals.
    pub const fn from_zec(zec: u64) -> Self {
        Amount(zec * ZAT_PER_ZEC)
    }

    pub const fn zat(self) -> u64 {
        self.0
    }

    pub const fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn checked_add(self, other: Amount) -> Result<Amount, AmountError> {
        self.0.checked_add(other.0).map(Amount).ok_or(AmountError::Overflow)
    }

    pub fn checked_sub(self, other: Amount) -> Option<Amount> {
        self.0.checked_sub(other.0).map(Amount)
    }

    pub fn abs_diff(self, other: Amount) -> Amount {
        Amount(self.0.abs_diff(other.0))
    }

    /// Sums an iterator of amounts, failing on overflow.
    pub fn sum<I: IntoIterator<Item = Amount>>(iter: I) -> Result<Amount, AmountError> {
        iter.into_iter().try_fold(Amount::ZERO, Amount::checked_add)
    }

    /// Number of significant fractional digits in the ZEC representation
    /// (0 for whole ZEC, 8 when the last zatoshi digit is nonzero).
    pub fn decimal_places(self) -> u32 {
        let mut frac = self.0 % ZAT_PER_ZEC;
        if frac == 0 {
            return 0;
        }
        let mut places = 8;
        while frac % 10 == 0 {
            frac /= 10;
            places -= 1;
        }
        places
    }

    /// Fixed eight-decimal ZEC string, e.g. `249.99990000`.
    pub fn to_zec_string(self) -> String {
        format!("{}.{:08}", self.0 / ZAT_PER_ZEC, self.0 % ZAT_PER_ZEC)
    }

    /// Lossy conversion for display and ratio reporting only.
    pub fn as_zec_f64(self) -> f64 {
        self.0 as f64 / ZAT_PER_ZEC as f64
    }
}

impl fmt::Display for Amount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_zec_string())
    }
}

impl FromStr for Amount {
    type Err = AmountError;

    /// Parses a decimal ZEC string with at most eight fractional digits.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || AmountError::Parse(s.to_string());
        let t = s.trim();
        if t.is_empty() {
            return Err(err());
        }
        let (whole, frac) = match t.split_once('.') {
            Some((w, f)) => (w, f),
            None => (t, ""),
        };
        if whole.is_empty() && frac.is_empty() {
            return Err(err());
        }
        if frac.len() > 8
            || !whole.bytes().all(|b| b.is_ascii_digit())
            || !frac.bytes().all(|b| b.is_ascii_digit())
        {
            return Err(err());
        }
        let whole: u64 = if whole.is_empty() {
            0
        } else {
            whole.parse().map_err(|_| err())?
        };
        let mut frac_zat: u64 = if frac.is_empty() {
            0
        } else {
            frac.parse().map_err(|_| err())?
        };
        for _ in frac.len()..8 {
            frac_zat *= 10;
        }
        whole
            .checked_mul(ZAT_PER_ZEC)
            .and_then(|w| w.checked_add(frac_zat))
            .map(Amount)
            .ok_or(AmountError::Overflow)
    }
}

/// Formats `num / den` as a percentage with one decimal place, rounded half
/// up, using integer arithmetic only. Returns `"0.0"` when `den` is zero.
pub fn percent_1dp(num: u128, den: u128) -> String {
    if den == 0 {
        return "0.0".to_string();
    }
    let tenths = (num * 1000 * 2 + den) / (den * 2);
    format!("{}.{}", tenths / 10, tenths % 10)
}
