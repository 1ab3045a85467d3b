//! Run metrics, recomputed from ledgers and request outcomes at the end
//! of a run so the books are the single source of truth.

use serde::{Deserialize, Serialize};

use crate::schedule::RequestOutcome;
use crate::server::{self_sufficiency, SlotLedger};

/// Jain's fairness index over non-negative shares: `(sum x)^2 / (n *
/// sum x^2)`, in `[1/n, 1]`. Defined as 1 for an empty population and
/// for an all-zero one (everyone is equally unserved).
pub fn jain_index(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 1.0;
    }
    let sum: f64 = values.iter().sum();
    let sum_sq: f64 = values.iter().map(|v| v * v).sum();
    if sum_sq == 0.0 {
        return 1.0;
    }
    (sum * sum) / (values.len() as f64 * sum_sq)
}

/// A request outcome attributed to its household.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestRecord {
    pub household_id: String,
    #[serde(flatten)]
    pub outcome: RequestOutcome,
}

/// Headline metrics of one microgrid over the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicrogridMetrics {
    pub microgrid_id: String,
    pub self_sufficiency: f64,
    pub generation_wh: u64,
    pub consumption_wh: u64,
    pub imports_wh: u64,
    pub exports_wh: u64,
    pub curtailment_wh: u64,
    /// Stored minus discharged over the horizon (state-of-charge delta).
    pub storage_net_wh: i64,
    pub requested_wh: u64,
    pub served_wh: u64,
    pub unserved_energy_wh: u64,
    /// Energy consumed by uninterruptible runs that failed mid-way.
    pub wasted_wh: u64,
    /// Denied packets over requested packets.
    pub packet_blocking_rate: f64,
    pub import_share: f64,
    /// Jain index over household served-fractions.
    pub fairness_jain: f64,
    /// Imported energy priced at the network cost multiplier.
    pub network_cost_proxy: f64,
}

/// Community-level rollup. Inter-microgrid transfers are internal to
/// the community, so community self-sufficiency counts only external
/// imports, which are zero in a closed scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityMetrics {
    pub self_sufficiency: f64,
    pub mean_microgrid_self_sufficiency: f64,
    pub generation_wh: u64,
    pub consumption_wh: u64,
    pub transfer_volume_wh: u64,
    pub requested_wh: u64,
    pub served_wh: u64,
    pub unserved_energy_wh: u64,
    pub packet_blocking_rate: f64,
    pub fairness_jain: f64,
    pub network_cost_proxy: f64,
}

/// Served-fraction per household, for households with any demand.
fn household_fractions(records: &[RequestRecord], packet_size_wh: u32) -> Vec<f64> {
    let mut per_household: std::collections::BTreeMap<&str, (u64, u64)> =
        std::collections::BTreeMap::new();
    for record in records {
        let entry = per_household
            .entry(record.household_id.as_str())
            .or_insert((0, 0));
        entry.0 += record.outcome.useful_packets as u64 * packet_size_wh as u64;
        entry.1 += record.outcome.packet_count as u64 * packet_size_wh as u64;
    }
    per_household
        .values()
        .filter(|(_, requested)| *requested > 0)
        .map(|(served, requested)| *served as f64 / *requested as f64)
        .collect()
}

pub fn microgrid_metrics(
    microgrid_id: &str,
    ledgers: &[SlotLedger],
    records: &[RequestRecord],
    packet_size_wh: u32,
    network_cost_multiplier: f64,
) -> MicrogridMetrics {
    let sum = |f: fn(&SlotLedger) -> u64| ledgers.iter().map(f).sum::<u64>();
    let consumption = sum(|l| l.consumption_wh);
    let imports = sum(|l| l.imports_wh);
    let requested_packets: u64 = records.iter().map(|r| r.outcome.packet_count as u64).sum();
    let served_packets: u64 = records.iter().map(|r| r.outcome.useful_packets as u64).sum();
    let wasted_packets: u64 = records.iter().map(|r| r.outcome.wasted_packets as u64).sum();
    let unserved_packets = requested_packets - served_packets;
    let size = packet_size_wh as u64;
    MicrogridMetrics {
        microgrid_id: microgrid_id.to_string(),
        self_sufficiency: self_sufficiency(ledgers),
        generation_wh: sum(|l| l.generation_wh),
        consumption_wh: consumption,
        imports_wh: imports,
        exports_wh: sum(|l| l.exports_wh),
        curtailment_wh: sum(|l| l.curtailment_wh),
        storage_net_wh: sum(|l| l.storage_charge_wh) as i64 - sum(|l| l.storage_discharge_wh) as i64,
        requested_wh: requested_packets * size,
        served_wh: served_packets * size,
        unserved_energy_wh: unserved_packets * size,
        wasted_wh: wasted_packets * size,
        packet_blocking_rate: if requested_packets == 0 {
            0.0
        } else {
            unserved_packets as f64 / requested_packets as f64
        },
        import_share: if consumption == 0 {
            0.0
        } else {
            (imports.min(consumption)) as f64 / consumption as f64
        },
        fairness_jain: jain_index(&household_fractions(records, packet_size_wh)),
        network_cost_proxy: imports as f64 * network_cost_multiplier,
    }
}

pub fn community_metrics(
    per_microgrid: &[MicrogridMetrics],
    all_records: &[RequestRecord],
    packet_size_wh: u32,
    network_cost_multiplier: f64,
) -> CommunityMetrics {
    let consumption: u64 = per_microgrid.iter().map(|m| m.consumption_wh).sum();
    let requested: u64 = per_microgrid.iter().map(|m| m.requested_wh).sum();
    let served: u64 = per_microgrid.iter().map(|m| m.served_wh).sum();
    let unserved: u64 = per_microgrid.iter().map(|m| m.unserved_energy_wh).sum();
    let transfer_volume: u64 = per_microgrid.iter().map(|m| m.imports_wh).sum();
    let mean_ss = if per_microgrid.is_empty() {
        1.0
    } else {
        per_microgrid.iter().map(|m| m.self_sufficiency).sum::<f64>() / per_microgrid.len() as f64
    };
    CommunityMetrics {
        // No external grid exists in a closed scenario, so nothing the
        // community consumed came from outside it.
        self_sufficiency: 1.0,
        mean_microgrid_self_sufficiency: mean_ss,
        generation_wh: per_microgrid.iter().map(|m| m.generation_wh).sum(),
        consumption_wh: consumption,
        transfer_volume_wh: transfer_volume,
        requested_wh: requested,
        served_wh: served,
        unserved_energy_wh: unserved,
        packet_blocking_rate: if requested == 0 {
            0.0
        } else {
            unserved as f64 / requested as f64
        },
        fairness_jain: jain_index(&household_fractions(all_records, packet_size_wh)),
        network_cost_proxy: transfer_volume as f64 * network_cost_multiplier,
    }
}
