use core::fmt;

use serde::{Deserialize, Serialize};

/// Binary diagnosis. `Defect` is the positive class everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Defect,
    NoDefect,
}

impl Label {
    pub fn is_defect(self) -> bool {
        self == Label::Defect
    }

    pub fn from_defect(defect: bool) -> Self {
        if defect {
            Label::Defect
        } else {
            Label::NoDefect
        }
    }

    /// SVM target: +1 for defect, -1 otherwise.
    pub fn signed(self) -> f64 {
        if self.is_defect() {
            1.0
        } else {
            -1.0
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Defect => "defect",
            Label::NoDefect => "no_defect",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum View {
    Sagittal,
    Coronal,
}

impl View {
    pub const BOTH: [View; 2] = [View::Sagittal, View::Coronal];

    pub fn as_str(self) -> &'static str {
        match self {
            View::Sagittal => "sagittal",
            View::Coronal => "coronal",
        }
    }
}

impl fmt::Display for View {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subset {
    Train,
    Validation,
    Test,
}

impl Subset {
    pub const ALL: [Subset; 3] = [Subset::Train, Subset::Validation, Subset::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Subset::Train => "train",
            Subset::Validation => "validation",
            Subset::Test => "test",
        }
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Error for an unrecognised token; carries the offending text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownToken(pub alloc::string::String);

impl fmt::Display for UnknownToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown token `{}`", self.0)
    }
}

impl core::error::Error for UnknownToken {}

macro_rules! from_str_via_as_str {
    ($ty:ty, $all:expr) => {
        impl core::str::FromStr for $ty {
            type Err = UnknownToken;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                $all.into_iter().find(|v| v.as_str() == s).ok_or_else(|| UnknownToken(s.into()))
            }
        }
    };
}

from_str_via_as_str!(Label, [Label::Defect, Label::NoDefect]);
from_str_via_as_str!(View, View::BOTH);
from_str_via_as_str!(Subset, Subset::ALL);
