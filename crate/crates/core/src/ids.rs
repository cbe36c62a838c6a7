use std::fmt;

use serde::{Deserialize, Serialize};

/// Participant identity; doubles as the organization label for private data.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub String);

impl AgentId {
    pub fn new(s: impl Into<String>) -> Self {
        AgentId(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for AgentId {
    fn from(s: &str) -> Self {
        AgentId(s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenId(pub u32);

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "token-{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AuctionId(pub u64);

impl fmt::Display for AuctionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "auction-{}", self.0)
    }
}

/// Sale mechanism for a listing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    DirectSale,
    FirstPrice,
    SecondPrice,
}

impl Mechanism {
    pub const ALL: [Mechanism; 3] = [Mechanism::DirectSale, Mechanism::FirstPrice, Mechanism::SecondPrice];

    pub fn is_sealed(self) -> bool {
        !matches!(self, Mechanism::DirectSale)
    }

    /// Short code used on the command line.
    pub fn code(self) -> &'static str {
        match self {
            Mechanism::DirectSale => "ds",
            Mechanism::FirstPrice => "fp",
            Mechanism::SecondPrice => "sp",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Mechanism::DirectSale => "Direct Sale",
            Mechanism::FirstPrice => "First-Price",
            Mechanism::SecondPrice => "Second-Price",
        }
    }
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Mechanism {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ds" | "direct" | "direct_sale" | "direct-sale" => Ok(Mechanism::DirectSale),
            "fp" | "first" | "first_price" | "first-price" => Ok(Mechanism::FirstPrice),
            "sp" | "second" | "second_price" | "second-price" | "vickrey" => Ok(Mechanism::SecondPrice),
            other => Err(format!("unknown mechanism `{other}` (expected ds, fp or sp)")),
        }
    }
}
