//! The per-microgrid energy server.
//!
//! Each slot it multiplexes packet requests against local generation,
//! storage and imports, in that order, and books an integer-exact
//! conservation ledger. Local supply is always preferred: imports only
//! fund demand that generation and storage could not cover.

use serde::{Deserialize, Serialize};

use crate::error::{ProtocolError, SimError};
use crate::hems::{Forecast, HouseholdProfile};
use crate::packet::{GrantRecord, PacketRequest, SlotIndex, SupplySource};
use crate::ratio::Ratio;
use crate::schedule::{RequestQueue, SlotSchedule};

/// A battery (or equivalent) with charge-side losses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StorageUnit {
    pub capacity_wh: u64,
    pub soc_wh: u64,
    pub max_charge_wh_per_slot: u64,
    pub max_discharge_wh_per_slot: u64,
    /// Applied on charge; discharge is lossless.
    pub round_trip_efficiency: Ratio,
}

impl StorageUnit {
    /// Energy this unit can still deliver this slot.
    pub fn discharge_headroom(&self) -> u64 {
        self.soc_wh.min(self.max_discharge_wh_per_slot)
    }

    /// Largest draw from the bus whose stored amount still fits under
    /// the capacity, before the per-slot charge rate is applied.
    fn capacity_limited_draw(&self) -> u64 {
        let headroom = self.capacity_wh - self.soc_wh;
        let eff = self.round_trip_efficiency;
        if eff.num == 0 {
            return 0;
        }
        let d_max = ((headroom as u128 + 1) * eff.den as u128 - 1) / eff.num as u128;
        d_max.min(self.max_charge_wh_per_slot as u128) as u64
    }
}

/// One generation asset and its per-slot availability trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationAsset {
    pub asset_id: String,
    pub trace: Vec<u64>,
}

impl GenerationAsset {
    pub fn generation_at(&self, slot: SlotIndex) -> u64 {
        self.trace[slot.0 as usize]
    }
}

/// Supply visible to the scheduler at one slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SupplyBreakdown {
    pub generation_wh: u64,
    pub storage_discharge_headroom_wh: u64,
}

impl SupplyBreakdown {
    pub fn total(&self) -> u64 {
        self.generation_wh + self.storage_discharge_headroom_wh
    }
}

/// What the storage fleet did in one slot. Charging and discharging
/// never happen in the same slot within one microgrid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StorageAction {
    /// Energy drawn from the bus into chargers.
    pub drawn_wh: u64,
    /// Energy actually banked after charge-side losses.
    pub stored_wh: u64,
    /// Charge-side conversion loss, booked as curtailment.
    pub conversion_loss_wh: u64,
    /// Energy delivered from storage to the bus.
    pub discharged_wh: u64,
    /// Surplus the fleet could not absorb.
    pub surplus_remaining_wh: u64,
}

/// The slot's deficit or surplus, as announced to the hyper-energy
/// server. Never both positive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Announcement {
    pub microgrid_id: String,
    pub slot: SlotIndex,
    pub deficit_wh: u64,
    pub surplus_wh: u64,
}

/// Exact per-slot energy books of one microgrid.
///
/// Invariant, checked every slot with zero tolerance:
/// `generation + storage_discharge + imports =
///  consumption + storage_charge + exports + curtailment`.
/// Transit losses live on the link audit; `link_losses_attributed_wh`
/// is informational attribution of incoming-transfer losses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotLedger {
    pub slot: SlotIndex,
    pub generation_wh: u64,
    pub storage_discharge_wh: u64,
    pub imports_wh: u64,
    pub consumption_wh: u64,
    pub storage_charge_wh: u64,
    pub exports_wh: u64,
    pub curtailment_wh: u64,
    pub link_losses_attributed_wh: u64,
}

impl SlotLedger {
    pub fn balances(&self) -> bool {
        self.generation_wh + self.storage_discharge_wh + self.imports_wh
            == self.consumption_wh + self.storage_charge_wh + self.exports_wh + self.curtailment_wh
    }
}

/// Computes the supply the scheduler may draw on at `slot`.
pub fn available_supply(assets: &[GenerationAsset], storage: &[StorageUnit], slot: SlotIndex) -> SupplyBreakdown {
    SupplyBreakdown {
        generation_wh: assets.iter().map(|a| a.generation_at(slot)).sum(),
        storage_discharge_headroom_wh: storage.iter().map(|u| u.discharge_headroom()).sum(),
    }
}

/// Applies the slot's net position to the storage fleet.
///
/// Surplus charges units in declaration order within rate and capacity
/// limits; the banked amount is `floor(draw x efficiency)` and the
/// conversion remainder is booked as curtailment. Deficit discharges up
/// to headroom. The forecast input is kept on the interface for
/// anticipatory charge-shaping policies; the v1 policy charges
/// greedily, which already pre-positions energy ahead of forecast
/// demand, so it does not alter the decision.
pub fn dispatch_storage(
    storage: &mut [StorageUnit],
    net_position_wh: i64,
    forecast: &Forecast,
) -> StorageAction {
    let _ = forecast;
    let mut action = StorageAction::default();
    if net_position_wh > 0 {
        let mut remaining = net_position_wh as u64;
        for unit in storage.iter_mut() {
            if remaining == 0 {
                break;
            }
            let draw = remaining.min(unit.capacity_limited_draw());
            let stored = unit.round_trip_efficiency.mul_floor(draw);
            if stored == 0 {
                continue; // a draw that banks nothing is pure loss
            }
            unit.soc_wh += stored;
            debug_assert!(unit.soc_wh <= unit.capacity_wh);
            remaining -= draw;
            action.drawn_wh += draw;
            action.stored_wh += stored;
            action.conversion_loss_wh += draw - stored;
        }
        action.surplus_remaining_wh = remaining;
    } else if net_position_wh < 0 {
        let mut needed = net_position_wh.unsigned_abs();
        for unit in storage.iter_mut() {
            if needed == 0 {
                break;
            }
            let take = needed.min(unit.discharge_headroom());
            unit.soc_wh -= take;
            needed -= take;
            action.discharged_wh += take;
        }
        assert_eq!(
            needed, 0,
            "scheduler granted beyond generation plus discharge headroom"
        );
    }
    action
}

/// Fraction of consumption met without imports, as an exact rational
/// reported as a decimal. Defined as 1 when nothing was consumed.
/// Clamped into [0, 1]: sub-packet import remainders in degenerate
/// slots can push booked imports above import-funded consumption.
pub fn self_sufficiency(ledgers: &[SlotLedger]) -> f64 {
    let consumption: u64 = ledgers.iter().map(|l| l.consumption_wh).sum();
    let imports: u64 = ledgers.iter().map(|l| l.imports_wh).sum();
    if consumption == 0 {
        return 1.0;
    }
    let served_locally = consumption.saturating_sub(imports);
    served_locally as f64 / consumption as f64
}

/// Working state of the slot between the local phase and settlement.
#[derive(Debug)]
struct SlotWork {
    slot: SlotIndex,
    generation_wh: u64,
    consumption_wh: u64,
    storage_action: StorageAction,
    surplus_pool_wh: u64,
    announced: Announcement,
    imports_wh: u64,
    exports_wh: u64,
    import_leftover_wh: u64,
    link_losses_attributed_wh: u64,
}

/// One microgrid: its members, assets, pending requests, and books.
#[derive(Debug)]
pub struct MicrogridState {
    pub microgrid_id: String,
    pub households: Vec<HouseholdProfile>,
    pub assets: Vec<GenerationAsset>,
    pub storage: Vec<StorageUnit>,
    pub queue: RequestQueue,
    pub ledgers: Vec<SlotLedger>,
    pub grants: Vec<GrantRecord>,
    packet_size_wh: u32,
    work: Option<SlotWork>,
}

impl MicrogridState {
    pub fn new(
        microgrid_id: impl Into<String>,
        households: Vec<HouseholdProfile>,
        assets: Vec<GenerationAsset>,
        storage: Vec<StorageUnit>,
        packet_size_wh: u32,
        audit: bool,
    ) -> Self {
        MicrogridState {
            microgrid_id: microgrid_id.into(),
            households,
            assets,
            storage,
            queue: RequestQueue::new(audit),
            ledgers: Vec::new(),
            grants: Vec::new(),
            packet_size_wh,
            work: None,
        }
    }

    pub fn packet_size_wh(&self) -> u32 {
        self.packet_size_wh
    }

    pub fn soc_total_wh(&self) -> u64 {
        self.storage.iter().map(|u| u.soc_wh).sum()
    }

    /// Accepts requests arriving this slot into the pending queue.
    pub fn ingest(&mut self, requests: Vec<PacketRequest>) {
        for request in requests {
            self.queue.push(request);
        }
    }

    /// Schedules the slot against local supply, dispatches storage, and
    /// computes the announcement.
    pub fn local_phase(&mut self, slot: SlotIndex, forecast: &Forecast) -> Announcement {
        assert!(self.work.is_none(), "slot {slot} opened twice");
        self.queue.begin_slot(slot);
        let supply = available_supply(&self.assets, &self.storage, slot);
        let schedule = self
            .queue
            .schedule_slot(supply.total(), slot, self.packet_size_wh);
        let granted = schedule.granted.len() as u64;
        let consumption = granted * self.packet_size_wh as u64;
        self.record_local_grants(&schedule, slot, supply.generation_wh);

        let net = supply.generation_wh as i64 - consumption as i64;
        let storage_action = dispatch_storage(&mut self.storage, net, forecast);
        debug_assert!(
            storage_action.discharged_wh <= supply.storage_discharge_headroom_wh,
            "discharge beyond announced headroom"
        );

        let unmet_packets = self.queue.grantable_unmet_packets(slot);
        let announced = if unmet_packets > 0 {
            debug_assert!(
                storage_action.surplus_remaining_wh < self.packet_size_wh as u64,
                "a slot with unmet grantable demand left a whole packet of surplus"
            );
            Announcement {
                microgrid_id: self.microgrid_id.clone(),
                slot,
                deficit_wh: unmet_packets as u64 * self.packet_size_wh as u64,
                surplus_wh: 0,
            }
        } else {
            Announcement {
                microgrid_id: self.microgrid_id.clone(),
                slot,
                deficit_wh: 0,
                surplus_wh: storage_action.surplus_remaining_wh,
            }
        };

        self.work = Some(SlotWork {
            slot,
            generation_wh: supply.generation_wh,
            consumption_wh: consumption,
            storage_action,
            surplus_pool_wh: storage_action.surplus_remaining_wh,
            announced: announced.clone(),
            imports_wh: 0,
            exports_wh: 0,
            import_leftover_wh: 0,
            link_losses_attributed_wh: 0,
        });
        announced
    }

    fn record_local_grants(&mut self, schedule: &SlotSchedule, slot: SlotIndex, generation_wh: u64) {
        let gen_packets = (generation_wh / self.packet_size_wh as u64).min(schedule.granted.len() as u64);
        for (i, request_id) in schedule.granted.iter().enumerate() {
            let source = if (i as u64) < gen_packets {
                SupplySource::LocalGeneration
            } else {
                SupplySource::Storage
            };
            self.grants.push(GrantRecord {
                request_id: *request_id,
                slot,
                packets_granted: 1,
                supply_source: source,
            });
        }
    }

    /// Settles this slot's transfers: imports fund previously deferred
    /// grants by re-running the allocation order over the residual
    /// queue; exports reduce the announced surplus. Settlement beyond
    /// the announced amounts is a protocol violation.
    pub fn apply_transfers(
        &mut self,
        slot: SlotIndex,
        incoming_wh: u64,
        outgoing_wh: u64,
        incoming_loss_wh: u64,
    ) -> Result<(), SimError> {
        let packet_size = self.packet_size_wh;
        let microgrid_id = self.microgrid_id.clone();
        let work = self.work.as_mut().expect("apply_transfers before local_phase");
        assert_eq!(work.slot, slot);
        if incoming_wh > work.announced.deficit_wh {
            return Err(ProtocolError::IncomingExceedsDeficit {
                microgrid: microgrid_id,
                slot: slot.0,
                delivered: incoming_wh,
                announced: work.announced.deficit_wh,
            }
            .into());
        }
        if outgoing_wh > work.announced.surplus_wh {
            return Err(ProtocolError::OutgoingExceedsSurplus {
                microgrid: microgrid_id,
                slot: slot.0,
                drawn: outgoing_wh,
                announced: work.announced.surplus_wh,
            }
            .into());
        }

        if incoming_wh > 0 {
            let schedule = self.queue.schedule_slot(incoming_wh, slot, packet_size);
            let funded = schedule.granted.len() as u64 * packet_size as u64;
            let work = self.work.as_mut().unwrap();
            work.consumption_wh += funded;
            work.imports_wh = incoming_wh;
            work.import_leftover_wh = incoming_wh - funded;
            for request_id in &schedule.granted {
                self.grants.push(GrantRecord {
                    request_id: *request_id,
                    slot,
                    packets_granted: 1,
                    supply_source: SupplySource::Import,
                });
            }
        }
        let work = self.work.as_mut().unwrap();
        work.exports_wh = outgoing_wh;
        work.surplus_pool_wh -= outgoing_wh;
        work.link_losses_attributed_wh = incoming_loss_wh;
        Ok(())
    }

    /// Books the slot ledger, checks the balance identity exactly, and
    /// expires requests whose deadline was this slot.
    pub fn close_slot(&mut self, slot: SlotIndex) -> Result<&SlotLedger, SimError> {
        let work = self.work.take().expect("close_slot before local_phase");
        assert_eq!(work.slot, slot);
        let curtailment = work.storage_action.conversion_loss_wh
            + work.surplus_pool_wh
            + work.import_leftover_wh;
        let ledger = SlotLedger {
            slot,
            generation_wh: work.generation_wh,
            storage_discharge_wh: work.storage_action.discharged_wh,
            imports_wh: work.imports_wh,
            consumption_wh: work.consumption_wh,
            storage_charge_wh: work.storage_action.stored_wh,
            exports_wh: work.exports_wh,
            curtailment_wh: curtailment,
            link_losses_attributed_wh: work.link_losses_attributed_wh,
        };
        if !ledger.balances() {
            return Err(SimError::Invariant {
                slot: slot.0,
                microgrid: self.microgrid_id.clone(),
                detail: format!(
                    "ledger out of balance: {} + {} + {} != {} + {} + {} + {}",
                    ledger.generation_wh,
                    ledger.storage_discharge_wh,
                    ledger.imports_wh,
                    ledger.consumption_wh,
                    ledger.storage_charge_wh,
                    ledger.exports_wh,
                    ledger.curtailment_wh
                ),
            });
        }
        for unit in &self.storage {
            if unit.soc_wh > unit.capacity_wh {
                return Err(SimError::Invariant {
                    slot: slot.0,
                    microgrid: self.microgrid_id.clone(),
                    detail: format!(
                        "storage over capacity: soc {} against {}",
                        unit.soc_wh, unit.capacity_wh
                    ),
                });
            }
        }
        self.queue.end_slot(slot);
        self.ledgers.push(ledger);
        Ok(self.ledgers.last().unwrap())
    }
}
