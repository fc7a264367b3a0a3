use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Outcome bands in percent units, left-closed: `[lower, upper)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum A1cCategory {
    Below6,
    From6To6_5,
    From6_5To7,
    From7To7_5,
    From7_5To8,
    From8To9,
    AtLeast9,
}

const CUTS: [f64; 6] = [6.0, 6.5, 7.0, 7.5, 8.0, 9.0];

impl A1cCategory {
    pub const ALL: [A1cCategory; 7] = [
        A1cCategory::Below6,
        A1cCategory::From6To6_5,
        A1cCategory::From6_5To7,
        A1cCategory::From7To7_5,
        A1cCategory::From7_5To8,
        A1cCategory::From8To9,
        A1cCategory::AtLeast9,
    ];

    pub const REFERENCE: A1cCategory = A1cCategory::Below6;

    pub fn of(value: f64) -> Result<Self> {
        if !value.is_finite() || value <= 0.0 {
            return Err(Error::data(format!("outcome value {value} cannot be categorized")));
        }
        Ok(Self::ALL[CUTS.iter().take_while(|c| value >= **c).count()])
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            A1cCategory::Below6 => "<6",
            A1cCategory::From6To6_5 => "6-6.5",
            A1cCategory::From6_5To7 => "6.5-7",
            A1cCategory::From7To7_5 => "7-7.5",
            A1cCategory::From7_5To8 => "7.5-8",
            A1cCategory::From8To9 => "8-9",
            A1cCategory::AtLeast9 => ">=9",
        }
    }

    /// Coefficient name of the category's indicator.
    pub fn term(self) -> String {
        format!("a1c {}", self.label())
    }

    pub fn lower_bound(self) -> f64 {
        match self.index() {
            0 => 0.0,
            k => CUTS[k - 1],
        }
    }
}

/// Shorthand for [`A1cCategory::of`].
pub fn categorize_a1c(value: f64) -> Result<A1cCategory> {
    A1cCategory::of(value)
}
