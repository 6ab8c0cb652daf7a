//! The five vulnerability families and their feature code layout.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

/// A vulnerability class. Each family owns an ordered list of boolean
/// feature codes (`A1..A6`, `B1..B8`, ...) and is modelled independently.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Family {
    RiskyMutableProxy,
    Erc721Reentrancy,
    UnlimitedMinting,
    MissingRequirements,
    PublicBurn,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::RiskyMutableProxy,
        Family::Erc721Reentrancy,
        Family::UnlimitedMinting,
        Family::MissingRequirements,
        Family::PublicBurn,
    ];

    /// Short tag used on the command line and in files.
    pub fn tag(self) -> &'static str {
        match self {
            Family::RiskyMutableProxy => "RMP",
            Family::Erc721Reentrancy => "ERC721R",
            Family::UnlimitedMinting => "UM",
            Family::MissingRequirements => "MR",
            Family::PublicBurn => "PB",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Family::RiskyMutableProxy => "Risky Mutable Proxy",
            Family::Erc721Reentrancy => "ERC-721 Reentrancy",
            Family::UnlimitedMinting => "Unlimited Minting",
            Family::MissingRequirements => "Missing Requirements",
            Family::PublicBurn => "Public Burn",
        }
    }

    /// Letter prefix of the feature codes.
    pub fn letter(self) -> char {
        match self {
            Family::RiskyMutableProxy => 'A',
            Family::Erc721Reentrancy => 'B',
            Family::UnlimitedMinting => 'C',
            Family::MissingRequirements => 'D',
            Family::PublicBurn => 'E',
        }
    }

    /// Number of boolean features.
    pub fn arity(self) -> usize {
        match self {
            Family::RiskyMutableProxy | Family::PublicBurn => 6,
            _ => 8,
        }
    }

    pub fn code(self, index: usize) -> String {
        format!("{}{}", self.letter(), index + 1)
    }

    pub fn codes(self) -> Vec<String> {
        (0..self.arity()).map(|i| self.code(i)).collect()
    }

    /// Resolves a feature code such as `C3` to its family and 0-based index.
    pub fn parse_code(code: &str) -> Option<(Family, usize)> {
        let mut chars = code.chars();
        let letter = chars.next()?.to_ascii_uppercase();
        let family = Family::ALL.into_iter().find(|f| f.letter() == letter)?;
        let number: usize = chars.as_str().parse().ok()?;
        if number == 0 || number > family.arity() || chars.as_str().starts_with('0') {
            return None;
        }
        Some((family, number - 1))
    }

    pub fn from_letter(letter: char) -> Option<Family> {
        let letter = letter.to_ascii_uppercase();
        Family::ALL.into_iter().find(|f| f.letter() == letter)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let wanted = s.trim();
        Family::ALL
            .into_iter()
            .find(|f| f.tag().eq_ignore_ascii_case(wanted))
            .ok_or_else(|| Error::UnknownFamily(wanted.to_string()))
    }
}

impl Serialize for Family {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.tag())
    }
}

impl<'de> Deserialize<'de> for Family {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let tag = String::deserialize(deserializer)?;
        tag.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arities_sum_to_36() {
        let total: usize = Family::ALL.iter().map(|f| f.arity()).sum();
        assert_eq!(total, 36);
    }

    #[test]
    fn code_parsing() {
        assert_eq!(Family::parse_code("A1"), Some((Family::RiskyMutableProxy, 0)));
        assert_eq!(Family::parse_code("e6"), Some((Family::PublicBurn, 5)));
        assert_eq!(Family::parse_code("A7"), None);
        assert_eq!(Family::parse_code("D0"), None);
        assert_eq!(Family::parse_code("D08"), None);
        assert_eq!(Family::parse_code("Z1"), None);
    }

    #[test]
    fn tags_round_trip() {
        for f in Family::ALL {
            assert_eq!(f.tag().parse::<Family>().unwrap(), f);
        }
        assert!("XYZ".parse::<Family>().is_err());
    }
}
