//! Per-slot packet multiplexing for one microgrid.
//!
//! Allocation order within a slot: (1) uninterruptible runs already
//! started must continue; (2) higher priority first; (3) earliest
//! deadline first within equal priority; (4) ascending request id.
//! Every request draws at most one packet per slot (an appliance runs
//! at its rated power), so interruptible requests at equal rank share
//! leftover capacity one packet each, round-robin.

use serde::{Deserialize, Serialize};

use crate::packet::{LoadClass, PacketRequest, Priority, RequestId, SlotIndex};

/// Terminal state of a request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestFate {
    /// All packets delivered (for uninterruptible loads, in one
    /// contiguous run).
    Completed,
    /// Deadline passed with packets outstanding, or an interrupted run
    /// could no longer fit before its deadline.
    Denied,
}

/// Final accounting for one request.
///
/// `wasted_packets` counts energy consumed by uninterruptible runs that
/// failed mid-way: it was drawn from the grid but never completed a
/// cycle, so it serves no demand.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestOutcome {
    pub request_id: RequestId,
    pub device_id: String,
    pub class: LoadClass,
    pub priority: Priority,
    pub packet_count: u32,
    pub earliest_start: SlotIndex,
    pub deadline: SlotIndex,
    pub fate: RequestFate,
    pub useful_packets: u32,
    pub wasted_packets: u32,
    pub unserved_packets: u32,
    #[serde(skip)]
    pub useful_slots: Vec<SlotIndex>,
    #[serde(skip)]
    pub wasted_slots: Vec<SlotIndex>,
}

/// What the slot's scheduling pass decided.
#[derive(Debug, Default)]
pub struct SlotSchedule {
    /// One entry per granted packet, in allocation order.
    pub granted: Vec<RequestId>,
    /// Requests eligible for a packet this slot that got none.
    pub deferred: Vec<RequestId>,
    /// Started runs that lost supply this slot and were re-queued whole.
    pub failed_runs: Vec<RequestId>,
    /// Requests denied by this pass (failed runs that no longer fit).
    pub denied: Vec<RequestId>,
}

/// Audit trail of one slot: who got packets, who was left wanting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotAuditRow {
    pub slot: SlotIndex,
    /// (request, priority, was a continuing run).
    pub granted: Vec<(RequestId, Priority, bool)>,
    /// Eligible requests that ended the slot without a packet.
    pub unmet_eligible: Vec<(RequestId, Priority)>,
}

#[derive(Debug)]
struct RequestState {
    request: PacketRequest,
    remaining: u32,
    run_started: Option<SlotIndex>,
    granted_this_slot: bool,
    wasted_packets: u32,
    run_slots: Vec<SlotIndex>,
    done_slots: Vec<SlotIndex>,
    wasted_slots: Vec<SlotIndex>,
}

impl RequestState {
    fn new(request: PacketRequest) -> Self {
        let remaining = request.packet_count;
        RequestState {
            request,
            remaining,
            run_started: None,
            granted_this_slot: false,
            wasted_packets: 0,
            run_slots: Vec::new(),
            done_slots: Vec::new(),
            wasted_slots: Vec::new(),
        }
    }

    /// Grantable right now: in window, under the per-slot rate cap, and
    /// not blocked by the contiguity admission rule.
    fn eligible(&self, slot: SlotIndex) -> bool {
        if self.remaining == 0 || self.granted_this_slot || !self.request.in_window(slot) {
            return false;
        }
        match self.request.class {
            LoadClass::Interruptible => true,
            LoadClass::Uninterruptible => match self.run_started {
                Some(_) => true,
                None => self
                    .request
                    .contiguous_fit_from(slot, self.request.packet_count),
            },
        }
    }
}

/// The pending request queue of one microgrid, with the scheduling
/// policy baked in.
#[derive(Debug, Default)]
pub struct RequestQueue {
    states: Vec<RequestState>,
    outcomes: Vec<RequestOutcome>,
    current_slot: Option<SlotIndex>,
    audit_enabled: bool,
    open_row: Option<SlotAuditRow>,
    audit_rows: Vec<SlotAuditRow>,
}

impl RequestQueue {
    pub fn new(audit_enabled: bool) -> Self {
        RequestQueue {
            audit_enabled,
            ..Default::default()
        }
    }

    pub fn push(&mut self, request: PacketRequest) {
        debug_assert!(crate::packet::validate_request(&request).is_empty());
        self.states.push(RequestState::new(request));
    }

    pub fn pending_len(&self) -> usize {
        self.states.len()
    }

    /// Opens a slot: resets per-slot rate caps and the audit row.
    pub fn begin_slot(&mut self, slot: SlotIndex) {
        debug_assert!(self.current_slot.map_or(true, |prev| prev < slot));
        self.current_slot = Some(slot);
        for state in &mut self.states {
            state.granted_this_slot = false;
        }
        if self.audit_enabled {
            self.open_row = Some(SlotAuditRow {
                slot,
                granted: Vec::new(),
                unmet_eligible: Vec::new(),
            });
        }
    }

    /// One scheduling pass against `supply_wh_total`. May be called
    /// again within the same slot to spend imported energy; requests
    /// already granted this slot are skipped by the rate cap.
    pub fn schedule_slot(
        &mut self,
        supply_wh_total: u64,
        slot: SlotIndex,
        packet_size_wh: u32,
    ) -> SlotSchedule {
        debug_assert_eq!(self.current_slot, Some(slot));
        let mut capacity = (supply_wh_total / packet_size_wh as u64) as u32;
        let mut outcome = SlotSchedule::default();
        let mut to_deny: Vec<RequestId> = Vec::new();

        let mut order: Vec<usize> = (0..self.states.len())
            .filter(|&i| {
                let s = &self.states[i];
                s.remaining > 0 && !s.granted_this_slot && s.request.in_window(slot)
            })
            .collect();
        order.sort_by(|&a, &b| {
            let (sa, sb) = (&self.states[a], &self.states[b]);
            sb.run_started
                .is_some()
                .cmp(&sa.run_started.is_some())
                .then(sb.request.priority.cmp(&sa.request.priority))
                .then(sa.request.deadline.cmp(&sb.request.deadline))
                .then(sa.request.request_id.cmp(&sb.request.request_id))
        });

        for idx in order {
            let state = &mut self.states[idx];
            let continuing = state.run_started.is_some();
            if continuing {
                if capacity >= 1 {
                    capacity -= 1;
                    Self::grant(state, slot, continuing, &mut outcome, &mut self.open_row);
                } else {
                    // Mid-run shortfall: the partial run is wasted and the
                    // request re-queues whole if a fresh run still fits.
                    let id = state.request.request_id;
                    state.wasted_packets += state.request.packet_count - state.remaining;
                    state.wasted_slots.append(&mut state.run_slots);
                    state.remaining = state.request.packet_count;
                    state.run_started = None;
                    outcome.failed_runs.push(id);
                    if !state
                        .request
                        .contiguous_fit_from(slot, state.request.packet_count)
                    {
                        outcome.denied.push(id);
                        to_deny.push(id);
                    }
                }
                continue;
            }
            if !self.states[idx].eligible(slot) {
                continue; // contiguity-blocked; waits in the queue
            }
            if capacity >= 1 {
                capacity -= 1;
                let state = &mut self.states[idx];
                if state.request.class == LoadClass::Uninterruptible {
                    state.run_started = Some(slot);
                }
                Self::grant(state, slot, false, &mut outcome, &mut self.open_row);
            } else {
                outcome.deferred.push(self.states[idx].request.request_id);
            }
        }

        // Sweep completions and failed-run denials out of the pending set.
        let mut idx = 0;
        while idx < self.states.len() {
            let state = &self.states[idx];
            if state.remaining == 0 {
                self.finish(idx, RequestFate::Completed);
            } else if to_deny.contains(&state.request.request_id) {
                self.finish(idx, RequestFate::Denied);
            } else {
                idx += 1;
            }
        }
        outcome
    }

    fn grant(
        state: &mut RequestState,
        slot: SlotIndex,
        continuing: bool,
        outcome: &mut SlotSchedule,
        open_row: &mut Option<SlotAuditRow>,
    ) {
        state.remaining -= 1;
        state.granted_this_slot = true;
        match state.request.class {
            LoadClass::Uninterruptible => state.run_slots.push(slot),
            LoadClass::Interruptible => state.done_slots.push(slot),
        }
        outcome.granted.push(state.request.request_id);
        if let Some(row) = open_row {
            row.granted
                .push((state.request.request_id, state.request.priority, continuing));
        }
    }

    /// Packets that could still be granted this slot if more supply
    /// arrived: one per eligible unmet request.
    pub fn grantable_unmet_packets(&self, slot: SlotIndex) -> u32 {
        self.states.iter().filter(|s| s.eligible(slot)).count() as u32
    }

    /// Closes the slot's audit row and expires requests whose deadline
    /// was this slot.
    pub fn end_slot(&mut self, slot: SlotIndex) {
        debug_assert_eq!(self.current_slot, Some(slot));
        if let Some(mut row) = self.open_row.take() {
            row.unmet_eligible = self
                .states
                .iter()
                .filter(|s| s.eligible(slot))
                .map(|s| (s.request.request_id, s.request.priority))
                .collect();
            self.audit_rows.push(row);
        }
        let mut idx = 0;
        while idx < self.states.len() {
            let state = &self.states[idx];
            if state.request.deadline <= slot {
                debug_assert!(
                    state.run_started.is_none() || state.remaining == 0,
                    "a run admitted under the contiguity rule cannot straddle its deadline"
                );
                self.finish(idx, RequestFate::Denied);
            } else {
                idx += 1;
            }
        }
    }

    fn finish(&mut self, idx: usize, fate: RequestFate) {
        let state = self.states.swap_remove(idx);
        let useful = match (fate, state.request.class) {
            (RequestFate::Completed, LoadClass::Uninterruptible) => state.run_slots.clone(),
            (RequestFate::Completed, LoadClass::Interruptible) => state.done_slots.clone(),
            (RequestFate::Denied, LoadClass::Interruptible) => state.done_slots.clone(),
            // A denied uninterruptible never completed a run; whatever
            // its last partial run consumed is wasted too.
            (RequestFate::Denied, LoadClass::Uninterruptible) => Vec::new(),
        };
        let mut wasted_slots = state.wasted_slots;
        let mut wasted = state.wasted_packets;
        let mut unserved = state.remaining;
        if fate == RequestFate::Denied && state.request.class == LoadClass::Uninterruptible {
            let partial = state.request.packet_count - state.remaining;
            wasted += partial;
            wasted_slots.extend(state.run_slots.iter().copied());
            unserved = state.request.packet_count;
        }
        self.outcomes.push(RequestOutcome {
            request_id: state.request.request_id,
            device_id: state.request.device_id,
            class: state.request.class,
            priority: state.request.priority,
            packet_count: state.request.packet_count,
            earliest_start: state.request.earliest_start,
            deadline: state.request.deadline,
            fate,
            useful_packets: useful.len() as u32,
            wasted_packets: wasted,
            unserved_packets: unserved,
            useful_slots: useful,
            wasted_slots,
        });
    }

    /// Denies everything still pending (used when a horizon ends before
    /// all deadlines, which validated scenarios do not produce).
    pub fn drain_remaining(&mut self) {
        while !self.states.is_empty() {
            self.finish(0, RequestFate::Denied);
        }
    }

    pub fn outcomes(&self) -> &[RequestOutcome] {
        &self.outcomes
    }

    pub fn into_results(self) -> (Vec<RequestOutcome>, Vec<SlotAuditRow>) {
        (self.outcomes, self.audit_rows)
    }
}
