//! Brute-force oracles for property testing.
//!
//! `brute_force_schedule` enumerates every feasible per-slot packet
//! assignment of a small instance and returns the maximum servable
//! packet count; the greedy scheduler is checked against it exactly.
//! Instances above the enumeration bounds are refused rather than
//! silently truncated.

use thiserror::Error;

use crate::packet::{LoadClass, PacketRequest, Priority, RequestId, SlotIndex};
use crate::ratio::Ratio;
use crate::schedule::RequestQueue;

/// A request stripped to what scheduling feasibility depends on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleRequest {
    pub class: LoadClass,
    pub packet_count: u32,
    pub earliest_start: u32,
    pub deadline: u32,
}

/// A small scheduling instance: requests plus per-slot capacity in
/// packets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleInstance {
    pub requests: Vec<OracleRequest>,
    pub capacity_packets: Vec<u32>,
}

pub const MAX_ORACLE_REQUESTS: usize = 3;
pub const MAX_ORACLE_SLOTS: usize = 6;
pub const MAX_ORACLE_PACKETS: u32 = 4;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error(
        "instance outside enumeration bounds (max {MAX_ORACLE_REQUESTS} requests, \
         {MAX_ORACLE_SLOTS} slots, {MAX_ORACLE_PACKETS} packets per request)"
    )]
    OutOfBounds,
    #[error("request window extends past the last slot")]
    WindowOutsideHorizon,
}

/// Maximum total packets servable on the instance, by exhaustive
/// enumeration over per-slot assignments respecting windows, the
/// one-packet-per-request slot rate, uninterruptible contiguity, and
/// capacity.
pub fn brute_force_schedule(instance: &OracleInstance) -> Result<u32, OracleError> {
    let n = instance.requests.len();
    let slots = instance.capacity_packets.len();
    if n > MAX_ORACLE_REQUESTS
        || slots > MAX_ORACLE_SLOTS
        || instance
            .requests
            .iter()
            .any(|r| r.packet_count == 0 || r.packet_count > MAX_ORACLE_PACKETS)
    {
        return Err(OracleError::OutOfBounds);
    }
    if instance
        .requests
        .iter()
        .any(|r| r.deadline as usize >= slots || r.earliest_start > r.deadline)
    {
        return Err(OracleError::WindowOutsideHorizon);
    }

    #[derive(Clone)]
    struct SearchState {
        remaining: Vec<u32>,
        run_progress: Vec<Option<u32>>, // packets granted in the ongoing run
    }

    fn best(instance: &OracleInstance, slot: usize, state: &SearchState) -> u32 {
        let slots = instance.capacity_packets.len();
        if slot == slots {
            // Unfinished runs never happen: starting was only allowed
            // when completion fits, and broken runs prune the branch.
            return 0;
        }
        let n = instance.requests.len();
        let capacity = instance.capacity_packets[slot];
        let mut best_total = 0;
        'subset: for mask in 0u32..(1 << n) {
            if mask.count_ones() > capacity {
                continue;
            }
            let mut next = state.clone();
            for (i, request) in instance.requests.iter().enumerate() {
                let granted = mask & (1 << i) != 0;
                let in_window =
                    request.earliest_start as usize <= slot && slot <= request.deadline as usize;
                if granted {
                    if !in_window || next.remaining[i] == 0 {
                        continue 'subset;
                    }
                    if request.class == LoadClass::Uninterruptible {
                        match next.run_progress[i] {
                            Some(p) => next.run_progress[i] = Some(p + 1),
                            None => {
                                // Start only if the run completes by the deadline.
                                if slot + request.packet_count as usize - 1
                                    > request.deadline as usize
                                {
                                    continue 'subset;
                                }
                                next.run_progress[i] = Some(1);
                            }
                        }
                    }
                    next.remaining[i] -= 1;
                } else if request.class == LoadClass::Uninterruptible
                    && next.run_progress[i].is_some()
                    && next.remaining[i] > 0
                {
                    // Breaking a run wastes its packets; such schedules
                    // are dominated by never starting the run.
                    continue 'subset;
                }
            }
            let granted_now = mask.count_ones();
            let rest = best(instance, slot + 1, &next);
            best_total = best_total.max(granted_now + rest);
        }
        best_total
    }

    let state = SearchState {
        remaining: instance.requests.iter().map(|r| r.packet_count).collect(),
        run_progress: vec![None; n],
    };
    Ok(best(instance, 0, &state))
}

/// Runs the production scheduler over the same instance and returns the
/// useful packets it served.
pub fn run_scheduler_on_instance(instance: &OracleInstance, packet_size_wh: u32) -> u32 {
    let mut queue = RequestQueue::new(false);
    for (i, r) in instance.requests.iter().enumerate() {
        queue.push(PacketRequest {
            request_id: RequestId(i as u64),
            device_id: format!("r{i}"),
            class: r.class,
            priority: Priority(1),
            packet_count: r.packet_count,
            earliest_start: SlotIndex(r.earliest_start),
            deadline: SlotIndex(r.deadline),
            arrival_slot: SlotIndex(0),
        });
    }
    for (slot, &capacity) in instance.capacity_packets.iter().enumerate() {
        let slot = SlotIndex(slot as u32);
        queue.begin_slot(slot);
        queue.schedule_slot(capacity as u64 * packet_size_wh as u64, slot, packet_size_wh);
        queue.end_slot(slot);
    }
    queue.drain_remaining();
    queue.outcomes().iter().map(|o| o.useful_packets).sum()
}

pub const MAX_TRANSFER_SOURCES: usize = 3;
pub const MAX_TRANSFER_WH: u64 = 64;

/// A surplus neighbour as the transfer oracle sees it.
#[derive(Debug, Clone, Copy)]
pub struct OracleSource {
    pub surplus_wh: u64,
    pub link_capacity_wh: u64,
    pub loss_factor: Ratio,
}

/// Maximum energy a single deficit holder can receive, by exhaustive
/// enumeration over integer sent amounts per source.
pub fn brute_force_transfers(
    deficit_wh: u64,
    sources: &[OracleSource],
) -> Result<u64, OracleError> {
    if sources.len() > MAX_TRANSFER_SOURCES
        || deficit_wh > MAX_TRANSFER_WH
        || sources
            .iter()
            .any(|s| s.surplus_wh > MAX_TRANSFER_WH || s.link_capacity_wh > MAX_TRANSFER_WH)
    {
        return Err(OracleError::OutOfBounds);
    }
    fn explore(deficit: u64, sources: &[OracleSource], idx: usize, received_so_far: u64) -> u64 {
        if received_so_far >= deficit || idx == sources.len() {
            return received_so_far.min(deficit);
        }
        let source = sources[idx];
        let max_sent = source.surplus_wh.min(source.link_capacity_wh);
        let mut best = 0;
        for sent in 0..=max_sent {
            let received = sent.saturating_sub(source.loss_factor.mul_ceil(sent));
            let total = explore(deficit, sources, idx + 1, received_so_far + received);
            best = best.max(total);
        }
        best
    }
    Ok(explore(deficit_wh, sources, 0, 0))
}
