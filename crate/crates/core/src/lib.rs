//! Deterministic tick-based simulator of a ledger-backed spectrum market.

pub mod agents;
pub mod auctionhouse;
pub mod economics;
pub mod ids;
pub mod ledger;
pub mod metrics;
pub mod money;
pub mod simctl;
