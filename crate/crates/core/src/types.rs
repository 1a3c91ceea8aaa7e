//! Identifiers, logical time and exact fractions shared by every layer.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Token amounts are integers; vesting and rewards round down.
pub type Amount = u64;

/// Logical time. Advanced only by `AdvanceTime` events.
pub type Tick = u64;

pub type ProposalId = u64;
pub type ResolutionId = u64;

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(s: impl Into<String>) -> Self {
                Self(s.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_string())
            }
        }
    };
}

string_id!(
    /// Opaque registry-controlled actor identifier.
    ActorId
);
string_id!(RoleId);
string_id!(
    /// Jurisdiction module identifier.
    ModuleId
);
string_id!(ConstraintId);
string_id!(ProviderId);
string_id!(Topic);
string_id!(CommitteeId);
string_id!(WorkstreamId);
string_id!(TaskId);

impl ActorId {
    /// Proposer recorded on proposals the engine raises by itself
    /// (breach removals, escalations, challenges).
    pub fn engine() -> Self {
        Self::new("@engine")
    }
}

/// Exact non-negative fraction, written `"num/den"` in config files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ratio {
    pub num: u64,
    pub den: u64,
}

impl Ratio {
    pub const fn new(num: u64, den: u64) -> Self {
        Self { num, den }
    }

    pub const ONE: Ratio = Ratio::new(1, 1);
    pub const HALF: Ratio = Ratio::new(1, 2);

    /// `part / whole >= self`, evaluated without rounding.
    pub fn le_share(&self, part: u128, whole: u128) -> bool {
        part * self.den as u128 >= self.num as u128 * whole
    }

    /// `part / whole > self`, evaluated without rounding.
    pub fn lt_share(&self, part: u128, whole: u128) -> bool {
        part * self.den as u128 > self.num as u128 * whole
    }

    pub fn is_valid(&self) -> bool {
        self.den > 0
    }

    pub fn cmp_ratio(&self, other: &Ratio) -> std::cmp::Ordering {
        (self.num as u128 * other.den as u128).cmp(&(other.num as u128 * self.den as u128))
    }

    pub fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

#[derive(Debug, thiserror::Error)]
#[error("invalid ratio {0:?}: expected \"num/den\" with den > 0")]
pub struct RatioParseError(String);

impl FromStr for Ratio {
    type Err = RatioParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || RatioParseError(s.to_string());
        let (n, d) = match s.split_once('/') {
            Some((n, d)) => (n.trim(), d.trim()),
            None => (s.trim(), "1"),
        };
        let num = n.parse().map_err(|_| err())?;
        let den = d.parse().map_err(|_| err())?;
        if den == 0 {
            return Err(err());
        }
        Ok(Ratio { num, den })
    }
}

impl Serialize for Ratio {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Ratio {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_parse_and_display() {
        let r: Ratio = "2/3".parse().unwrap();
        assert_eq!(r, Ratio::new(2, 3));
        assert_eq!(r.to_string(), "2/3");
        assert_eq!("1".parse::<Ratio>().unwrap(), Ratio::ONE);
        assert!("1/0".parse::<Ratio>().is_err());
        assert!("x/2".parse::<Ratio>().is_err());
    }

    #[test]
    fn ratio_share_comparisons_are_exact() {
        let two_thirds = Ratio::new(2, 3);
        // 40/60 equals 2/3 exactly: not strictly greater.
        assert!(!two_thirds.lt_share(40, 60));
        assert!(two_thirds.le_share(40, 60));
        assert!(two_thirds.lt_share(41, 60));
    }
}
