//! Scan of commit-phase world-state snapshots for leaked bid plaintext.

use serde::{Deserialize, Serialize};

use super::run::{PrivateBid, WorldSnapshot};
use crate::auctionhouse::auction_key;
use crate::ids::{AgentId, AuctionId};
use crate::money::Money;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub tick: u64,
    pub auction: AuctionId,
    pub bidder: AgentId,
    pub key: String,
    pub needle: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyReport {
    pub snapshots_scanned: usize,
    pub bids_checked: usize,
    pub findings: Vec<Finding>,
}

impl PrivacyReport {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }
}

/// True when `needle` occurs in `haystack` with no alphanumeric character
/// (or, for the cents form, a decimal point) directly on either side.
fn contains_word(haystack: &str, needle: &str) -> bool {
    let bytes = haystack.as_bytes();
    let boundary = |b: u8| !(b.is_ascii_alphanumeric() || b == b'.');
    haystack.match_indices(needle).any(|(i, _)| {
        let before = i == 0 || boundary(bytes[i - 1]);
        let end = i + needle.len();
        let after = end == bytes.len() || boundary(bytes[end]);
        before && after
    })
}

fn needles(value: Money) -> [String; 2] {
    [value.cents().to_string(), value.to_string()]
}

/// For every snapshot, looks for each bid committed to an auction still in
/// its commit phase inside that auction's public keys: its board entry
/// (minus the posted reserve), its commit records and the digests of its private bid entries. Reveals are
/// written only after close and so never appear in these snapshots.
pub fn verify_privacy(snapshots: &[WorldSnapshot], private_bids: &[PrivateBid]) -> PrivacyReport {
    let mut findings = Vec::new();
    let mut bids_checked = 0;
    for snap in snapshots {
        for &auction in &snap.auctions {
            let commit_prefix = format!("commit/{auction}/");
            let private_prefix = format!("bid:{auction}:");
            let scoped: Vec<(&String, String)> = snap
                .world
                .iter()
                .filter(|(k, _)| **k == auction_key(auction) || k.starts_with(&commit_prefix) || k.starts_with(&private_prefix))
                .map(|(k, v)| {
                    // the posted reserve is public by design
                    let mut v = v.clone();
                    if let Some(obj) = v.as_object_mut() {
                        obj.remove("reserve");
                    }
                    (k, v.to_string())
                })
                .collect();
            for bid in private_bids.iter().filter(|b| b.auction == auction && b.tick <= snap.tick) {
                bids_checked += 1;
                for needle in needles(bid.value) {
                    for (key, text) in &scoped {
                        if contains_word(text, &needle) {
                            findings.push(Finding {
                                tick: snap.tick,
                                auction,
                                bidder: bid.bidder.clone(),
                                key: (*key).clone(),
                                needle: needle.clone(),
                            });
                        }
                    }
                }
            }
        }
    }
    PrivacyReport { snapshots_scanned: snapshots.len(), bids_checked, findings }
}
