//! Packetized-energy domain types and demand quantization.
//!
//! Continuous appliance demand is chopped into fixed-size energy packets,
//! each one slot (one simulated minute) long. Every other part of the
//! simulator trades in these packets.

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, RequestError};

/// One minute of simulated time.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct SlotIndex(pub u32);

impl SlotIndex {
    pub fn next(self) -> SlotIndex {
        SlotIndex(self.0 + 1)
    }
}

impl std::fmt::Display for SlotIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Urgency level; higher values are served first.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct Priority(pub u8);

/// Whether a load can pause between packets or must run in one
/// contiguous block (space heating vs. a dishwasher cycle).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadClass {
    Interruptible,
    Uninterruptible,
}

/// Unique request identifier within one microgrid.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct RequestId(pub u64);

impl std::fmt::Display for RequestId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// The atomic unit of schedulable energy: a fixed number of watt-hours
/// delivered over exactly one slot from a source actor to a sink actor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnergyPacket {
    pub size_wh: u32,
    pub duration_slots: u32,
    pub source: String,
    pub sink: String,
}

impl EnergyPacket {
    /// Builds a packet, enforcing the scenario-wide size and the fixed
    /// one-slot duration.
    pub fn new(
        size_wh: u32,
        configured_size_wh: u32,
        source: impl Into<String>,
        sink: impl Into<String>,
    ) -> Result<Self, ConfigError> {
        if size_wh == 0 || configured_size_wh == 0 {
            return Err(ConfigError::ZeroPacketSize);
        }
        if size_wh != configured_size_wh {
            return Err(ConfigError::Invalid(format!(
                "packet of {size_wh} Wh does not match the configured size of {configured_size_wh} Wh"
            )));
        }
        Ok(EnergyPacket {
            size_wh,
            duration_slots: 1,
            source: source.into(),
            sink: sink.into(),
        })
    }
}

/// Where the energy behind a grant came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupplySource {
    LocalGeneration,
    Storage,
    Import,
}

/// One scheduling decision: packets granted to a request at a slot.
///
/// Packets within a slot are attributed to sources in the order
/// generation, storage, import; a packet only partially covered by
/// generation is attributed to storage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrantRecord {
    pub request_id: RequestId,
    pub slot: SlotIndex,
    pub packets_granted: u32,
    pub supply_source: SupplySource,
}

impl GrantRecord {
    /// Expands the grant into its individual packets.
    pub fn packets<'a>(
        &'a self,
        packet_size_wh: u32,
        source: &'a str,
        sink: &'a str,
    ) -> impl Iterator<Item = EnergyPacket> + 'a {
        (0..self.packets_granted).map(move |_| EnergyPacket {
            size_wh: packet_size_wh,
            duration_slots: 1,
            source: source.to_string(),
            sink: sink.to_string(),
        })
    }
}

/// An appliance's demand expressed in packets over a delivery window.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketRequest {
    pub request_id: RequestId,
    pub device_id: String,
    pub class: LoadClass,
    pub priority: Priority,
    pub packet_count: u32,
    pub earliest_start: SlotIndex,
    pub deadline: SlotIndex,
    pub arrival_slot: SlotIndex,
}

impl PacketRequest {
    /// Window length in slots, inclusive of both ends.
    pub fn window_len(&self) -> u32 {
        if self.earliest_start > self.deadline {
            0
        } else {
            self.deadline.0 - self.earliest_start.0 + 1
        }
    }

    pub fn in_window(&self, slot: SlotIndex) -> bool {
        self.earliest_start <= slot && slot <= self.deadline
    }

    /// True when a contiguous run of `packets` slots starting at `slot`
    /// still finishes by the deadline.
    pub fn contiguous_fit_from(&self, slot: SlotIndex, packets: u32) -> bool {
        debug_assert!(packets > 0);
        slot >= self.earliest_start && slot.0 + (packets - 1) <= self.deadline.0
    }
}

/// A broken request invariant. Violations are data, not failures:
/// `validate_request` reports all of them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RequestViolation {
    EmptyWindow,
    ContiguousBlockCannotFit,
    ZeroPackets,
    ArrivalAfterEarliestStart,
}

impl std::fmt::Display for RequestViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RequestViolation::EmptyWindow => write!(f, "empty window"),
            RequestViolation::ContiguousBlockCannotFit => {
                write!(f, "contiguous block cannot fit")
            }
            RequestViolation::ZeroPackets => write!(f, "zero packets"),
            RequestViolation::ArrivalAfterEarliestStart => {
                write!(f, "arrival after earliest start")
            }
        }
    }
}

/// Number of packets covering `total_wh`, rounding up so demand is never
/// under-provisioned. The rounded-up remainder is booked as curtailment
/// by the ledger, keeping conservation exact.
pub fn quantize_demand(total_wh: u64, packet_size_wh: u32) -> Result<u32, ConfigError> {
    if packet_size_wh == 0 {
        return Err(ConfigError::ZeroPacketSize);
    }
    Ok(total_wh.div_ceil(packet_size_wh as u64) as u32)
}

/// Builds a validated [`PacketRequest`] from raw demand.
#[allow(clippy::too_many_arguments)]
pub fn make_request(
    request_id: RequestId,
    device_id: impl Into<String>,
    class: LoadClass,
    priority: Priority,
    total_wh: u64,
    window: (SlotIndex, SlotIndex),
    arrival_slot: SlotIndex,
    packet_size_wh: u32,
) -> Result<PacketRequest, RequestError> {
    let device_id = device_id.into();
    let (earliest_start, deadline) = window;
    if earliest_start > deadline {
        return Err(RequestError::EmptyWindow {
            earliest_start: earliest_start.0,
            deadline: deadline.0,
        });
    }
    if arrival_slot > earliest_start {
        return Err(RequestError::ArrivalAfterStart {
            arrival_slot: arrival_slot.0,
            earliest_start: earliest_start.0,
        });
    }
    if total_wh == 0 {
        return Err(RequestError::ZeroEnergy(device_id));
    }
    let packet_count =
        quantize_demand(total_wh, packet_size_wh).map_err(|_| RequestError::ZeroEnergy(device_id.clone()))?;
    let window_len = deadline.0 - earliest_start.0 + 1;
    if class == LoadClass::Uninterruptible && window_len < packet_count {
        return Err(RequestError::InfeasibleWindow {
            device_id,
            packet_count,
            earliest_start: earliest_start.0,
            deadline: deadline.0,
            window_len,
        });
    }
    let request = PacketRequest {
        request_id,
        device_id,
        class,
        priority,
        packet_count,
        earliest_start,
        deadline,
        arrival_slot,
    };
    debug_assert!(validate_request(&request).is_empty());
    Ok(request)
}

/// Checks every request invariant and returns the full list of
/// violations (never just the first).
pub fn validate_request(r: &PacketRequest) -> Vec<RequestViolation> {
    let mut violations = Vec::new();
    if r.earliest_start > r.deadline {
        violations.push(RequestViolation::EmptyWindow);
    }
    if r.packet_count == 0 {
        violations.push(RequestViolation::ZeroPackets);
    }
    if r.class == LoadClass::Uninterruptible
        && r.earliest_start <= r.deadline
        && r.window_len() < r.packet_count
    {
        violations.push(RequestViolation::ContiguousBlockCannotFit);
    }
    if r.arrival_slot > r.earliest_start {
        violations.push(RequestViolation::ArrivalAfterEarliestStart);
    }
    violations
}
