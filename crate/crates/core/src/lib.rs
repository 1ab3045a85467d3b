//! Deterministic simulator of a packetized "Energy Internet": flexible
//! household loads are quantized into fixed-size energy packets and
//! multiplexed by a per-microgrid energy server, while a hyper-energy
//! server shares surplus electricity between networked microgrids with
//! tit-for-tat reciprocity ordering.
//!
//! All accounting is integer watt-hours with exact per-slot
//! conservation ledgers; runs are reproducible bit-for-bit from
//! (scenario, seed, mode).

pub mod engine;
pub mod error;
pub mod hems;
pub mod metrics;
pub mod oracle;
pub mod packet;
pub mod ratio;
pub mod report;
pub mod scenario;
pub mod schedule;
pub mod server;
pub mod sharing;

pub use engine::{run, run_uncoordinated, RunOptions, RunResult};
pub use error::{ConfigError, ProtocolError, RequestError, SimError};
pub use packet::{
    make_request, quantize_demand, validate_request, EnergyPacket, GrantRecord, LoadClass,
    PacketRequest, Priority, RequestId, SlotIndex, SupplySource,
};
pub use ratio::Ratio;
pub use scenario::{
    load_scenario_file, resolve_scenario, validate_scenario, Diagnostic, Mode, Scenario,
    ScenarioError, ScenarioFile,
};
pub use server::{self_sufficiency, Announcement, MicrogridState, SlotLedger, StorageUnit};
pub use sharing::{
    match_announcements, settle, update_reciprocity, InterconnectLink, ReciprocityLedger,
    Registry, Transfer,
};
