//! The hyper-energy server: inter-microgrid deficit/surplus matching.
//!
//! Works like a tracker: microgrids register, announce their slot
//! deficit or surplus, and the matcher splits deficits across surplus
//! neighbours under link capacities and transit losses. Service order
//! is tit-for-tat: microgrids that contributed more energy over their
//! lifetime are served first. The ordering never excludes anyone; it
//! only decides who gets scarce surplus first.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, ProtocolError, SimError};
use crate::packet::SlotIndex;
use crate::ratio::Ratio;
use crate::server::Announcement;

/// A direct interconnection between two microgrids. Capacity is shared
/// by both directions within a slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterconnectLink {
    pub link_id: String,
    pub endpoints: (String, String),
    pub capacity_wh_per_slot: u64,
    /// Fraction of sent energy lost in transit.
    pub loss_factor: Ratio,
}

impl InterconnectLink {
    pub fn connects(&self, a: &str, b: &str) -> bool {
        (self.endpoints.0 == a && self.endpoints.1 == b)
            || (self.endpoints.0 == b && self.endpoints.1 == a)
    }
}

/// One settled shipment of energy across a link.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transfer {
    pub slot: SlotIndex,
    pub from_microgrid: String,
    pub to_microgrid: String,
    pub sent_wh: u64,
    pub received_wh: u64,
    pub loss_wh: u64,
}

/// Lifetime net contribution per microgrid, in sent watt-hours.
///
/// Exporters are credited the full sent amount and importers debited
/// the same, so transit losses ride on the importer side and the
/// balances always sum to zero.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReciprocityLedger {
    balances: BTreeMap<String, i64>,
}

impl ReciprocityLedger {
    pub fn new(microgrids: impl IntoIterator<Item = String>) -> Self {
        ReciprocityLedger {
            balances: microgrids.into_iter().map(|id| (id, 0)).collect(),
        }
    }

    pub fn balance(&self, microgrid: &str) -> i64 {
        self.balances.get(microgrid).copied().unwrap_or(0)
    }

    pub fn set_balance(&mut self, microgrid: &str, balance: i64) {
        self.balances.insert(microgrid.to_string(), balance);
    }

    pub fn balances(&self) -> &BTreeMap<String, i64> {
        &self.balances
    }

    pub fn total(&self) -> i64 {
        self.balances.values().sum()
    }
}

/// Opt-in/opt-out state of one microgrid, with its change history.
/// Changes take effect from the next slot boundary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Registration {
    pub microgrid_id: String,
    initial: bool,
    /// (slot the change was requested, new flag); effective from slot+1.
    history: Vec<(SlotIndex, bool)>,
}

impl Registration {
    fn new(microgrid_id: String, opted_in: bool) -> Self {
        Registration {
            microgrid_id,
            initial: opted_in,
            history: Vec::new(),
        }
    }

    pub fn opted_in_at(&self, slot: SlotIndex) -> bool {
        self.history
            .iter()
            .rev()
            .find(|(changed, _)| changed.0 < slot.0)
            .map(|(_, flag)| *flag)
            .unwrap_or(self.initial)
    }

    pub fn history(&self) -> &[(SlotIndex, bool)] {
        &self.history
    }
}

/// The tracker's membership book.
#[derive(Debug, Clone, Default)]
pub struct Registry {
    entries: BTreeMap<String, Registration>,
}

impl Registry {
    pub fn new(initial: impl IntoIterator<Item = (String, bool)>) -> Self {
        Registry {
            entries: initial
                .into_iter()
                .map(|(id, flag)| (id.clone(), Registration::new(id, flag)))
                .collect(),
        }
    }

    /// Flips a microgrid's participation, effective from the next slot.
    pub fn register(
        &mut self,
        microgrid_id: &str,
        opted_in: bool,
        slot: SlotIndex,
    ) -> Result<&Registration, ConfigError> {
        let entry = self
            .entries
            .get_mut(microgrid_id)
            .ok_or_else(|| ConfigError::UnknownMicrogrid(microgrid_id.to_string()))?;
        entry.history.push((slot, opted_in));
        Ok(entry)
    }

    pub fn opted_in_at(&self, microgrid_id: &str, slot: SlotIndex) -> bool {
        self.entries
            .get(microgrid_id)
            .map(|e| e.opted_in_at(slot))
            .unwrap_or(false)
    }
}

/// Matches announced deficits against announced surpluses.
///
/// Deficits are served in descending reciprocity balance of the deficit
/// holder (ties by ascending id). Each deficit is filled multi-source
/// from surplus microgrids in descending remaining-surplus order (ties
/// by ascending id), constrained by the direct link's remaining
/// capacity and grossed up for losses: sent = ceil(needed / (1 -
/// loss)), capped by surplus and capacity. No direct link, no transfer;
/// leftover deficits stay unserved this slot.
pub fn match_announcements(
    announcements: &[Announcement],
    links: &[InterconnectLink],
    ledger: &ReciprocityLedger,
    slot: SlotIndex,
) -> Result<Vec<Transfer>, SimError> {
    let mut seen: Vec<&str> = Vec::new();
    for a in announcements {
        debug_assert!(
            a.deficit_wh == 0 || a.surplus_wh == 0,
            "announcement with both deficit and surplus"
        );
        if seen.contains(&a.microgrid_id.as_str()) {
            return Err(ProtocolError::DuplicateAnnouncement {
                microgrid: a.microgrid_id.clone(),
                slot: slot.0,
            }
            .into());
        }
        seen.push(&a.microgrid_id);
    }

    let mut deficits: Vec<(&str, u64)> = announcements
        .iter()
        .filter(|a| a.deficit_wh > 0)
        .map(|a| (a.microgrid_id.as_str(), a.deficit_wh))
        .collect();
    deficits.sort_by(|(id_a, _), (id_b, _)| {
        ledger
            .balance(id_b)
            .cmp(&ledger.balance(id_a))
            .then(id_a.cmp(id_b))
    });

    let mut surpluses: BTreeMap<&str, u64> = announcements
        .iter()
        .filter(|a| a.surplus_wh > 0)
        .map(|a| (a.microgrid_id.as_str(), a.surplus_wh))
        .collect();
    let mut link_remaining: BTreeMap<&str, u64> = links
        .iter()
        .map(|l| (l.link_id.as_str(), l.capacity_wh_per_slot))
        .collect();

    let mut transfers = Vec::new();
    for (sink, deficit) in deficits {
        let mut needed = deficit;
        let mut skip: Vec<&str> = Vec::new();
        while needed > 0 {
            let candidate = surpluses
                .iter()
                .filter(|(source, &surplus)| {
                    surplus > 0
                        && !skip.contains(*source)
                        && links.iter().any(|l| {
                            l.connects(source, sink) && link_remaining[l.link_id.as_str()] > 0
                        })
                })
                .max_by(|(id_a, sur_a), (id_b, sur_b)| {
                    sur_a.cmp(sur_b).then(id_b.cmp(id_a))
                })
                .map(|(source, _)| *source);
            let Some(source) = candidate else { break };
            let link = links
                .iter()
                .find(|l| l.connects(source, sink) && link_remaining[l.link_id.as_str()] > 0)
                .expect("candidate filter guarantees a usable link");
            let sent = link
                .loss_factor
                .gross_up_ceil(needed)
                .min(surpluses[source])
                .min(link_remaining[link.link_id.as_str()]);
            let loss = link.loss_factor.mul_ceil(sent);
            let received = sent.saturating_sub(loss);
            if received == 0 {
                // Losses eat the whole capped shipment; this source
                // cannot help this sink.
                skip.push(source);
                continue;
            }
            debug_assert!(received <= needed);
            *surpluses.get_mut(source).unwrap() -= sent;
            *link_remaining.get_mut(link.link_id.as_str()).unwrap() -= sent;
            needed -= received;
            transfers.push(Transfer {
                slot,
                from_microgrid: source.to_string(),
                to_microgrid: sink.to_string(),
                sent_wh: sent,
                received_wh: received,
                loss_wh: loss,
            });
        }
    }
    Ok(transfers)
}

/// Per-microgrid settlement of a slot's transfers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Settlement {
    pub incoming_wh: u64,
    pub outgoing_wh: u64,
    /// Transit losses on transfers received by this microgrid.
    pub incoming_loss_wh: u64,
}

/// Aggregates transfers per microgrid and audits link usage.
///
/// A link carrying more than its capacity is an internal invariant
/// failure and aborts the run.
pub fn settle(
    transfers: &[Transfer],
    links: &[InterconnectLink],
    slot: SlotIndex,
) -> Result<BTreeMap<String, Settlement>, SimError> {
    for link in links {
        let used: u64 = transfers
            .iter()
            .filter(|t| link.connects(&t.from_microgrid, &t.to_microgrid))
            .map(|t| t.sent_wh)
            .sum();
        if used > link.capacity_wh_per_slot {
            return Err(SimError::LinkOverCapacity {
                link: link.link_id.clone(),
                slot: slot.0,
                sent: used,
                capacity: link.capacity_wh_per_slot,
            });
        }
    }
    let mut settlements: BTreeMap<String, Settlement> = BTreeMap::new();
    for t in transfers {
        let to = settlements.entry(t.to_microgrid.clone()).or_default();
        to.incoming_wh += t.received_wh;
        to.incoming_loss_wh += t.loss_wh;
        let from = settlements.entry(t.from_microgrid.clone()).or_default();
        from.outgoing_wh += t.sent_wh;
    }
    Ok(settlements)
}

/// Credits exporters and debits importers by the sent amount.
pub fn update_reciprocity(ledger: &mut ReciprocityLedger, transfers: &[Transfer]) {
    for t in transfers {
        let sent = t.sent_wh as i64;
        *ledger
            .balances
            .entry(t.from_microgrid.clone())
            .or_insert(0) += sent;
        *ledger.balances.entry(t.to_microgrid.clone()).or_insert(0) -= sent;
    }
    debug_assert_eq!(ledger.total(), 0, "reciprocity balances must sum to zero");
}
