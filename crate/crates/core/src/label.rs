use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ternary stability verdict. The numeric codes match the 0/1/2 expert
/// scoring scale and are part of every CSV this crate writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StabilityLabel {
    Unstable = 0,
    Uncertain = 1,
    Stable = 2,
}

impl StabilityLabel {
    pub const ALL: [StabilityLabel; 3] = [Self::Unstable, Self::Uncertain, Self::Stable];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Self::Unstable),
            1 => Ok(Self::Uncertain),
            2 => Ok(Self::Stable),
            other => Err(Error::Data(format!("stability code must be 0, 1 or 2, got {other}"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Unstable => "unstable",
            Self::Uncertain => "uncertain",
            Self::Stable => "stable",
        }
    }

    /// Uncertain counts as potentially unstable.
    pub fn binarize(self) -> Binary {
        match self {
            Self::Stable => Binary::Stable,
            Self::Uncertain | Self::Unstable => Binary::Unstable,
        }
    }
}

impl fmt::Display for StabilityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StabilityLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unstable" | "0" => Ok(Self::Unstable),
            "uncertain" | "1" => Ok(Self::Uncertain),
            "stable" | "2" => Ok(Self::Stable),
            other => Err(Error::Data(format!("unknown stability label {other:?}"))),
        }
    }
}

/// Two-way verdict used for online classification and all confusion metrics.
/// `Unstable` is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Binary {
    Unstable,
    Stable,
}

impl Binary {
    pub fn as_str(self) -> &'static str {
        match self {
            Binary::Unstable => "unstable",
            Binary::Stable => "stable",
        }
    }

    pub fn is_unstable(self) -> bool {
        self == Binary::Unstable
    }

    /// Position on the 0..=2 scoring scale.
    pub fn score(self) -> f64 {
        match self {
            Binary::Unstable => 0.0,
            Binary::Stable => 2.0,
        }
    }

    pub fn flipped(self) -> Binary {
        match self {
            Binary::Unstable => Binary::Stable,
            Binary::Stable => Binary::Unstable,
        }
    }
}

impl fmt::Display for Binary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}
