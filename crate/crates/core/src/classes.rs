//! The four rail fastener categories.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown fastener class {0:?} (expected one of V, W300-1, WJ-7, WJ-8)")]
pub struct UnknownClass(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FastenerClass {
    V,
    W300_1,
    Wj7,
    Wj8,
}

impl FastenerClass {
    /// Report order.
    pub const ALL: [FastenerClass; 4] = [
        FastenerClass::V,
        FastenerClass::W300_1,
        FastenerClass::Wj7,
        FastenerClass::Wj8,
    ];

    /// Number of head outputs including background.
    pub const NUM_WITH_BACKGROUND: usize = 5;

    pub fn name(self) -> &'static str {
        match self {
            FastenerClass::V => "V",
            FastenerClass::W300_1 => "W300-1",
            FastenerClass::Wj7 => "WJ-7",
            FastenerClass::Wj8 => "WJ-8",
        }
    }

    /// Position in the classifier output; 0 is reserved for background.
    pub fn head_index(self) -> usize {
        self.ordinal() + 1
    }

    pub fn ordinal(self) -> usize {
        match self {
            FastenerClass::V => 0,
            FastenerClass::W300_1 => 1,
            FastenerClass::Wj7 => 2,
            FastenerClass::Wj8 => 3,
        }
    }

    pub fn from_head_index(i: usize) -> Option<Self> {
        i.checked_sub(1).and_then(|o| Self::ALL.get(o).copied())
    }
}

impl fmt::Display for FastenerClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FastenerClass {
    type Err = UnknownClass;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| UnknownClass(s.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for c in FastenerClass::ALL {
            assert_eq!(c.name().parse::<FastenerClass>().unwrap(), c);
            assert_eq!(FastenerClass::from_head_index(c.head_index()), Some(c));
        }
        assert!("WJ-9".parse::<FastenerClass>().is_err());
        assert_eq!(FastenerClass::from_head_index(0), None);
        assert_eq!(FastenerClass::from_head_index(5), None);
    }
}
