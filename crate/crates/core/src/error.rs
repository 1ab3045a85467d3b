//! Error types shared across the simulator.

use thiserror::Error;

/// Invalid static configuration (packet size, ids, rationals).
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("packet size must be a positive number of watt-hours")]
    ZeroPacketSize,
    #[error("unknown microgrid id `{0}`")]
    UnknownMicrogrid(String),
    #[error("rational must have a nonzero denominator")]
    ZeroDenominator,
    #[error("{0}")]
    Invalid(String),
}

/// A malformed or infeasible packet request.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum RequestError {
    #[error("empty window: earliest_start {earliest_start} is after deadline {deadline}")]
    EmptyWindow { earliest_start: u32, deadline: u32 },
    #[error(
        "uninterruptible device `{device_id}` needs {packet_count} contiguous slots \
         but the window [{earliest_start}, {deadline}] holds only {window_len}"
    )]
    InfeasibleWindow {
        device_id: String,
        packet_count: u32,
        earliest_start: u32,
        deadline: u32,
        window_len: u32,
    },
    #[error("request for device `{0}` carries no energy")]
    ZeroEnergy(String),
    #[error("arrival slot {arrival_slot} is after earliest_start {earliest_start}")]
    ArrivalAfterStart { arrival_slot: u32, earliest_start: u32 },
}

/// Violations of the announcement/settlement protocol between the
/// energy servers and the hyper-energy server.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("duplicate announcement from microgrid `{microgrid}` at slot {slot}")]
    DuplicateAnnouncement { microgrid: String, slot: u32 },
    #[error(
        "settlement delivers {delivered} Wh into `{microgrid}` at slot {slot} \
         but its announced deficit was {announced} Wh"
    )]
    IncomingExceedsDeficit {
        microgrid: String,
        slot: u32,
        delivered: u64,
        announced: u64,
    },
    #[error(
        "settlement draws {drawn} Wh out of `{microgrid}` at slot {slot} \
         but its announced surplus was {announced} Wh"
    )]
    OutgoingExceedsSurplus {
        microgrid: String,
        slot: u32,
        drawn: u64,
        announced: u64,
    },
    #[error("announcement from microgrid `{microgrid}` at slot {slot} which is not opted in")]
    NotRegistered { microgrid: String, slot: u32 },
}

/// Fatal runtime failure; aborts the run with a slot-level diagnostic.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("invariant violated at slot {slot} in microgrid `{microgrid}`: {detail}")]
    Invariant {
        slot: u32,
        microgrid: String,
        detail: String,
    },
    #[error("link `{link}` over capacity at slot {slot}: sent {sent} Wh against capacity {capacity} Wh")]
    LinkOverCapacity {
        link: String,
        slot: u32,
        sent: u64,
        capacity: u64,
    },
    #[error("household `{household}` produced an infeasible request: {source}")]
    Hems {
        household: String,
        #[source]
        source: RequestError,
    },
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}
