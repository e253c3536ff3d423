//! Calendar months as a flat index, the simulator's only notion of time.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// A calendar month, stored as months since 0000-01.
///
/// Parses from and displays as `YYYY-MM`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Month(i32);

impl Month {
    pub fn new(year: i32, month: u32) -> Self {
        assert!((1..=12).contains(&month), "month must be in 1..=12");
        Month(year * 12 + month as i32 - 1)
    }

    pub fn year(self) -> i32 {
        self.0.div_euclid(12)
    }

    /// 1-based month within the year.
    pub fn month(self) -> u32 {
        (self.0.rem_euclid(12) + 1) as u32
    }

    pub fn index(self) -> i32 {
        self.0
    }

    pub fn plus_months(self, months: i32) -> Self {
        Month(self.0 + months)
    }

    /// Signed number of months from `earlier` to `self`.
    pub fn months_since(self, earlier: Month) -> i32 {
        self.0 - earlier.0
    }

    /// Fractional years from `earlier` to `self`.
    pub fn years_since(self, earlier: Month) -> f64 {
        f64::from(self.0 - earlier.0) / 12.0
    }

    pub fn is_december(self) -> bool {
        self.month() == 12
    }
}

impl fmt::Display for Month {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year(), self.month())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonthParseError(pub String);

impl fmt::Display for MonthParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid month {:?}: expected YYYY-MM", self.0)
    }
}

impl std::error::Error for MonthParseError {}

impl FromStr for Month {
    type Err = MonthParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (y, m) = s.split_once('-').ok_or_else(|| MonthParseError(s.into()))?;
        let year: i32 = y.parse().map_err(|_| MonthParseError(s.into()))?;
        let month: u32 = m.parse().map_err(|_| MonthParseError(s.into()))?;
        if !(1..=12).contains(&month) {
            return Err(MonthParseError(s.into()));
        }
        Ok(Month::new(year, month))
    }
}

impl TryFrom<String> for Month {
    type Error = MonthParseError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Month> for String {
    fn from(m: Month) -> String {
        m.to_string()
    }
}
