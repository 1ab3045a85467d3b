//! The deterministic minute-resolution simulation loop.
//!
//! Per slot: ingest newly arrived packet requests, schedule each
//! microgrid against local supply, exchange announcements through the
//! hyper-energy server, settle transfers, close the slot's books, and
//! accumulate metrics. Identical (scenario, seed, mode) inputs produce
//! bit-identical results.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, SimError};
use crate::hems::{
    classify_and_aggregate, collect_demands, household_rng, update_forecast, Forecast,
    RequestIdAllocator,
};
use crate::metrics::{
    community_metrics, microgrid_metrics, CommunityMetrics, MicrogridMetrics, RequestRecord,
};
use crate::packet::{GrantRecord, RequestId, SlotIndex, SupplySource};
use crate::scenario::{Mode, Scenario, FORECAST_WINDOW_DAYS, SLOTS_PER_DAY};
use crate::schedule::{RequestFate, RequestOutcome, SlotAuditRow};
use crate::server::{
    available_supply, dispatch_storage, MicrogridState, SlotLedger,
};
use crate::sharing::{
    match_announcements, settle, update_reciprocity, ReciprocityLedger, Registry, Transfer,
};

/// Per-run switches on top of the scenario.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub seed_override: Option<u64>,
    pub mode_override: Option<Mode>,
    /// Collect per-slot scheduling audit rows (costs memory).
    pub audit: bool,
}

/// Echo of the configuration a result was produced from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub horizon_slots: u32,
    pub packet_size_wh: u32,
    pub seed: u64,
    pub mode: Mode,
    pub network_cost_multiplier: f64,
    pub microgrid_ids: Vec<String>,
    pub household_count: usize,
    pub link_count: usize,
}

/// Everything one microgrid produced over the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicrogridRunResult {
    pub microgrid_id: String,
    pub metrics: MicrogridMetrics,
    pub ledgers: Vec<SlotLedger>,
    pub requests: Vec<RequestRecord>,
    pub final_soc_wh: Vec<u64>,
    #[serde(skip)]
    pub grants: Vec<GrantRecord>,
    #[serde(skip)]
    pub audit_rows: Vec<SlotAuditRow>,
}

/// The full, reproducible output of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub config: ConfigEcho,
    pub microgrids: Vec<MicrogridRunResult>,
    pub community: CommunityMetrics,
    pub transfers: Vec<Transfer>,
    pub reciprocity: BTreeMap<String, i64>,
}

/// Runs a scenario in its configured (or overridden) mode.
pub fn run(scenario: &Scenario, options: &RunOptions) -> Result<RunResult, SimError> {
    check_consistency(scenario)?;
    let seed = options.seed_override.unwrap_or(scenario.seed);
    let mode = options.mode_override.unwrap_or(scenario.mode);
    match mode {
        Mode::Commons => run_commons(scenario, seed, options.audit),
        Mode::Uncoordinated => run_uncoordinated_inner(scenario, seed),
    }
}

/// Baseline run: requests are served only from their desired start, no
/// deferral and no inter-microgrid transfers.
pub fn run_uncoordinated(scenario: &Scenario) -> Result<RunResult, SimError> {
    run(
        scenario,
        &RunOptions {
            mode_override: Some(Mode::Uncoordinated),
            ..Default::default()
        },
    )
}

fn check_consistency(scenario: &Scenario) -> Result<(), SimError> {
    if scenario.horizon_slots == 0 {
        return Err(ConfigError::Invalid("horizon must be positive".into()).into());
    }
    if scenario.packet_size_wh == 0 {
        return Err(ConfigError::ZeroPacketSize.into());
    }
    let mut seen = std::collections::BTreeSet::new();
    for mg in &scenario.microgrids {
        if !seen.insert(mg.microgrid_id.as_str()) {
            return Err(ConfigError::Invalid(format!(
                "duplicate microgrid id `{}`",
                mg.microgrid_id
            ))
            .into());
        }
        for asset in &mg.assets {
            if asset.trace.len() != scenario.horizon_slots as usize {
                return Err(ConfigError::Invalid(format!(
                    "asset `{}` trace covers {} of {} slots",
                    asset.asset_id,
                    asset.trace.len(),
                    scenario.horizon_slots
                ))
                .into());
            }
        }
        for unit in &mg.storage {
            if unit.soc_wh > unit.capacity_wh {
                return Err(ConfigError::Invalid(format!(
                    "storage in `{}` starts above capacity",
                    mg.microgrid_id
                ))
                .into());
            }
        }
    }
    for link in &scenario.links {
        for end in [&link.endpoints.0, &link.endpoints.1] {
            if !seen.contains(end.as_str()) {
                return Err(ConfigError::UnknownMicrogrid(end.clone()).into());
            }
        }
    }
    Ok(())
}

fn config_echo(scenario: &Scenario, seed: u64, mode: Mode) -> ConfigEcho {
    ConfigEcho {
        horizon_slots: scenario.horizon_slots,
        packet_size_wh: scenario.packet_size_wh,
        seed,
        mode,
        network_cost_multiplier: scenario.network_cost_multiplier,
        microgrid_ids: scenario
            .microgrids
            .iter()
            .map(|m| m.microgrid_id.clone())
            .collect(),
        household_count: scenario.microgrids.iter().map(|m| m.households.len()).sum(),
        link_count: scenario.links.len(),
    }
}

fn day_bounds(day: u32, horizon: u32) -> (SlotIndex, SlotIndex) {
    let start = day * SLOTS_PER_DAY;
    let end = (start + SLOTS_PER_DAY).min(horizon);
    (SlotIndex(start), SlotIndex(end))
}

/// Generates one day of demand for every household of a microgrid and
/// buckets the requests by arrival slot.
#[allow(clippy::too_many_arguments)]
fn generate_day(
    scenario: &Scenario,
    mg_index: usize,
    day: u32,
    seed: u64,
    ids: &mut RequestIdAllocator,
    arrivals: &mut BTreeMap<u32, Vec<(crate::packet::PacketRequest, String)>>,
) -> Result<(), SimError> {
    let (day_start, day_end) = day_bounds(day, scenario.horizon_slots);
    let mg = &scenario.microgrids[mg_index];
    for household in &mg.households {
        let mut rng = household_rng(seed, &household.household_id, day);
        let events = collect_demands(household, day_start, day_end, &mut rng);
        let profile = classify_and_aggregate(
            &events,
            household,
            day,
            day_end,
            scenario.packet_size_wh,
            ids,
        )?;
        for request in profile.requests {
            arrivals
                .entry(request.arrival_slot.0)
                .or_default()
                .push((request, household.household_id.clone()));
        }
    }
    Ok(())
}

fn run_commons(scenario: &Scenario, seed: u64, audit: bool) -> Result<RunResult, SimError> {
    let horizon = scenario.horizon_slots;
    let mut states: Vec<MicrogridState> = scenario
        .microgrids
        .iter()
        .map(|mg| {
            MicrogridState::new(
                mg.microgrid_id.clone(),
                mg.households.clone(),
                mg.assets.clone(),
                mg.storage.clone(),
                scenario.packet_size_wh,
                audit,
            )
        })
        .collect();
    let registry = Registry::new(
        scenario
            .microgrids
            .iter()
            .map(|mg| (mg.microgrid_id.clone(), mg.opted_in)),
    );
    let mut reciprocity = ReciprocityLedger::new(
        scenario
            .microgrids
            .iter()
            .map(|mg| mg.microgrid_id.clone()),
    );

    let count = scenario.microgrids.len();
    let mut allocators = vec![RequestIdAllocator::new(); count];
    let mut arrivals: Vec<BTreeMap<u32, Vec<(crate::packet::PacketRequest, String)>>> =
        vec![BTreeMap::new(); count];
    let mut households_of: Vec<BTreeMap<RequestId, String>> = vec![BTreeMap::new(); count];
    let mut demand_history: Vec<Vec<Vec<u64>>> = vec![Vec::new(); count];
    let mut current_day_demand: Vec<Vec<u64>> = vec![vec![0; SLOTS_PER_DAY as usize]; count];
    let mut forecasts: Vec<Forecast> = vec![Forecast::zero(SLOTS_PER_DAY as usize); count];
    let mut all_transfers: Vec<Transfer> = Vec::new();

    for slot_value in 0..horizon {
        let slot = SlotIndex(slot_value);
        if slot_value % SLOTS_PER_DAY == 0 {
            let day = slot_value / SLOTS_PER_DAY;
            for m in 0..count {
                if day > 0 {
                    demand_history[m].push(std::mem::replace(
                        &mut current_day_demand[m],
                        vec![0; SLOTS_PER_DAY as usize],
                    ));
                }
                forecasts[m] = update_forecast(
                    &demand_history[m],
                    FORECAST_WINDOW_DAYS,
                    SLOTS_PER_DAY as usize,
                );
                generate_day(scenario, m, day, seed, &mut allocators[m], &mut arrivals[m])?;
            }
        }

        let mut announcements = Vec::new();
        for (m, state) in states.iter_mut().enumerate() {
            if let Some(batch) = arrivals[m].remove(&slot_value) {
                let mut requests = Vec::with_capacity(batch.len());
                for (request, household) in batch {
                    households_of[m].insert(request.request_id, household);
                    requests.push(request);
                }
                state.ingest(requests);
            }
            let announcement = state.local_phase(slot, &forecasts[m]);
            let participating = registry.opted_in_at(&state.microgrid_id, slot);
            if participating && (announcement.deficit_wh > 0 || announcement.surplus_wh > 0) {
                announcements.push(announcement);
            }
        }

        let transfers = match_announcements(&announcements, &scenario.links, &reciprocity, slot)?;
        let settlements = settle(&transfers, &scenario.links, slot)?;
        for (m, state) in states.iter_mut().enumerate() {
            let settlement = settlements
                .get(&state.microgrid_id)
                .copied()
                .unwrap_or_default();
            state.apply_transfers(
                slot,
                settlement.incoming_wh,
                settlement.outgoing_wh,
                settlement.incoming_loss_wh,
            )?;
            let ledger = state.close_slot(slot)?;
            current_day_demand[m][(slot_value % SLOTS_PER_DAY) as usize] = ledger.consumption_wh;
        }
        update_reciprocity(&mut reciprocity, &transfers);
        all_transfers.extend(transfers);
    }

    let reciprocity_map = reciprocity.balances().clone();
    let mut microgrids = Vec::with_capacity(count);
    let mut all_records = Vec::new();
    for (m, state) in states.into_iter().enumerate() {
        let MicrogridState {
            microgrid_id,
            storage,
            mut queue,
            ledgers,
            grants,
            ..
        } = state;
        queue.drain_remaining();
        let (outcomes, audit_rows) = queue.into_results();
        let records = attach_households(outcomes, &households_of[m]);
        let metrics = microgrid_metrics(
            &microgrid_id,
            &ledgers,
            &records,
            scenario.packet_size_wh,
            scenario.network_cost_multiplier,
        );
        all_records.extend(records.iter().cloned());
        microgrids.push(MicrogridRunResult {
            microgrid_id,
            metrics,
            ledgers,
            requests: records,
            final_soc_wh: storage.iter().map(|u| u.soc_wh).collect(),
            grants,
            audit_rows,
        });
    }
    let community = community_metrics(
        &microgrids.iter().map(|m| m.metrics.clone()).collect::<Vec<_>>(),
        &all_records,
        scenario.packet_size_wh,
        scenario.network_cost_multiplier,
    );
    Ok(RunResult {
        config: config_echo(scenario, seed, Mode::Commons),
        microgrids,
        community,
        transfers: all_transfers,
        reciprocity: reciprocity_map,
    })
}

fn attach_households(
    outcomes: Vec<RequestOutcome>,
    households: &BTreeMap<RequestId, String>,
) -> Vec<RequestRecord> {
    let mut records: Vec<RequestRecord> = outcomes
        .into_iter()
        .map(|outcome| RequestRecord {
            household_id: households
                .get(&outcome.request_id)
                .cloned()
                .unwrap_or_default(),
            outcome,
        })
        .collect();
    records.sort_by_key(|r| r.outcome.request_id);
    records
}

/// State of one pinned request in the uncoordinated baseline: it draws
/// one packet per slot over [start, start + packets) and whatever the
/// grid cannot cover in a slot is lost, not deferred.
struct PinnedRequest {
    request: crate::packet::PacketRequest,
    household: String,
    served: u32,
}

impl PinnedRequest {
    fn run_end(&self) -> u32 {
        self.request.earliest_start.0 + self.request.packet_count - 1
    }

    fn active_at(&self, slot: u32) -> bool {
        self.request.earliest_start.0 <= slot && slot <= self.run_end()
    }
}

fn run_uncoordinated_inner(scenario: &Scenario, seed: u64) -> Result<RunResult, SimError> {
    let horizon = scenario.horizon_slots;
    let count = scenario.microgrids.len();
    let mut allocators = vec![RequestIdAllocator::new(); count];
    let mut arrivals: Vec<BTreeMap<u32, Vec<(crate::packet::PacketRequest, String)>>> =
        vec![BTreeMap::new(); count];
    let mut pinned: Vec<Vec<PinnedRequest>> = (0..count).map(|_| Vec::new()).collect();
    let mut finished: Vec<Vec<RequestRecord>> = (0..count).map(|_| Vec::new()).collect();
    let mut storage: Vec<Vec<crate::server::StorageUnit>> = scenario
        .microgrids
        .iter()
        .map(|mg| mg.storage.clone())
        .collect();
    let mut ledgers: Vec<Vec<SlotLedger>> = (0..count).map(|_| Vec::new()).collect();
    let mut grants: Vec<Vec<GrantRecord>> = (0..count).map(|_| Vec::new()).collect();
    let no_forecast = Forecast::zero(0);

    for slot_value in 0..horizon {
        let slot = SlotIndex(slot_value);
        if slot_value % SLOTS_PER_DAY == 0 {
            let day = slot_value / SLOTS_PER_DAY;
            for m in 0..count {
                generate_day(scenario, m, day, seed, &mut allocators[m], &mut arrivals[m])?;
            }
        }
        for m in 0..count {
            if let Some(batch) = arrivals[m].remove(&slot_value) {
                for (request, household) in batch {
                    pinned[m].push(PinnedRequest {
                        request,
                        household,
                        served: 0,
                    });
                }
            }
            let mg = &scenario.microgrids[m];
            let supply = available_supply(&mg.assets, &storage[m], slot);
            let size = scenario.packet_size_wh as u64;
            let mut capacity = supply.total() / size;

            let mut order: Vec<usize> = (0..pinned[m].len())
                .filter(|&i| pinned[m][i].active_at(slot_value))
                .collect();
            order.sort_by(|&a, &b| {
                let (ra, rb) = (&pinned[m][a].request, &pinned[m][b].request);
                rb.priority
                    .cmp(&ra.priority)
                    .then(ra.deadline.cmp(&rb.deadline))
                    .then(ra.request_id.cmp(&rb.request_id))
            });
            let mut granted_ids = Vec::new();
            for idx in order {
                if capacity == 0 {
                    break;
                }
                capacity -= 1;
                pinned[m][idx].served += 1;
                granted_ids.push(pinned[m][idx].request.request_id);
            }
            let consumption = granted_ids.len() as u64 * size;
            let gen_packets = (supply.generation_wh / size).min(granted_ids.len() as u64);
            for (i, id) in granted_ids.iter().enumerate() {
                grants[m].push(GrantRecord {
                    request_id: *id,
                    slot,
                    packets_granted: 1,
                    supply_source: if (i as u64) < gen_packets {
                        SupplySource::LocalGeneration
                    } else {
                        SupplySource::Storage
                    },
                });
            }
            let net = supply.generation_wh as i64 - consumption as i64;
            let action = dispatch_storage(&mut storage[m], net, &no_forecast);
            let ledger = SlotLedger {
                slot,
                generation_wh: supply.generation_wh,
                storage_discharge_wh: action.discharged_wh,
                imports_wh: 0,
                consumption_wh: consumption,
                storage_charge_wh: action.stored_wh,
                exports_wh: 0,
                curtailment_wh: action.conversion_loss_wh + action.surplus_remaining_wh,
                link_losses_attributed_wh: 0,
            };
            if !ledger.balances() {
                return Err(SimError::Invariant {
                    slot: slot_value,
                    microgrid: mg.microgrid_id.clone(),
                    detail: "uncoordinated ledger out of balance".into(),
                });
            }
            ledgers[m].push(ledger);

            // Requests whose pinned run ended this slot are settled.
            let mut idx = 0;
            while idx < pinned[m].len() {
                if pinned[m][idx].run_end() == slot_value {
                    let done = pinned[m].swap_remove(idx);
                    let unserved = done.request.packet_count - done.served;
                    finished[m].push(RequestRecord {
                        household_id: done.household,
                        outcome: RequestOutcome {
                            request_id: done.request.request_id,
                            device_id: done.request.device_id,
                            class: done.request.class,
                            priority: done.request.priority,
                            packet_count: done.request.packet_count,
                            earliest_start: done.request.earliest_start,
                            deadline: done.request.deadline,
                            fate: if unserved == 0 {
                                RequestFate::Completed
                            } else {
                                RequestFate::Denied
                            },
                            useful_packets: done.served,
                            wasted_packets: 0,
                            unserved_packets: unserved,
                            useful_slots: Vec::new(),
                            wasted_slots: Vec::new(),
                        },
                    });
                } else {
                    idx += 1;
                }
            }
        }
    }

    let mut microgrids = Vec::with_capacity(count);
    let mut all_records = Vec::new();
    for (m, mg) in scenario.microgrids.iter().enumerate() {
        let mut records = std::mem::take(&mut finished[m]);
        records.sort_by_key(|r| r.outcome.request_id);
        let metrics = microgrid_metrics(
            &mg.microgrid_id,
            &ledgers[m],
            &records,
            scenario.packet_size_wh,
            scenario.network_cost_multiplier,
        );
        all_records.extend(records.iter().cloned());
        microgrids.push(MicrogridRunResult {
            microgrid_id: mg.microgrid_id.clone(),
            metrics,
            ledgers: std::mem::take(&mut ledgers[m]),
            requests: records,
            final_soc_wh: storage[m].iter().map(|u| u.soc_wh).collect(),
            grants: std::mem::take(&mut grants[m]),
            audit_rows: Vec::new(),
        });
    }
    let community = community_metrics(
        &microgrids.iter().map(|m| m.metrics.clone()).collect::<Vec<_>>(),
        &all_records,
        scenario.packet_size_wh,
        scenario.network_cost_multiplier,
    );
    Ok(RunResult {
        config: config_echo(scenario, seed, Mode::Uncoordinated),
        microgrids,
        community,
        transfers: Vec::new(),
        reciprocity: scenario
            .microgrids
            .iter()
            .map(|mg| (mg.microgrid_id.clone(), 0))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hems::{ApplianceSpec, HouseholdProfile};
    use crate::packet::{LoadClass, Priority};
    use crate::ratio::Ratio;
    use crate::scenario::MicrogridConfig;
    use crate::server::GenerationAsset;
    use crate::sharing::InterconnectLink;

    fn heater(device_id: &str, energy: u64, window: u32) -> ApplianceSpec {
        ApplianceSpec {
            device_id: device_id.into(),
            label: device_id.into(),
            class: LoadClass::Interruptible,
            priority: Priority(100),
            energy_per_activation_wh: energy,
            activations_per_day: 1,
            flexibility_window_slots: window,
        }
    }

    fn microgrid(id: &str, household: &str, trace: Vec<u64>, appliances: Vec<ApplianceSpec>) -> MicrogridConfig {
        MicrogridConfig {
            microgrid_id: id.into(),
            households: vec![HouseholdProfile {
                household_id: household.into(),
                appliances,
                preference_order: None,
            }],
            assets: vec![GenerationAsset {
                asset_id: format!("{id}-pv"),
                trace,
            }],
            storage: vec![],
            opted_in: true,
        }
    }

    fn scenario(microgrids: Vec<MicrogridConfig>, links: Vec<InterconnectLink>) -> Scenario {
        let horizon = microgrids[0].assets[0].trace.len() as u32;
        Scenario {
            horizon_slots: horizon,
            packet_size_wh: 10,
            seed: 11,
            mode: Mode::Commons,
            network_cost_multiplier: 2.0,
            microgrids,
            links,
        }
    }

    #[test]
    fn zero_demand_scenario_is_fully_self_sufficient() {
        let s = scenario(vec![microgrid("a", "h1", vec![50; 40], vec![])], vec![]);
        let result = run(&s, &RunOptions::default()).unwrap();
        assert_eq!(result.microgrids[0].metrics.self_sufficiency, 1.0);
        assert_eq!(result.community.unserved_energy_wh, 0);
        assert_eq!(result.community.fairness_jain, 1.0);
    }

    #[test]
    fn ample_generation_means_no_imports_and_no_blocking() {
        let s = scenario(
            vec![microgrid(
                "a",
                "h1",
                vec![100; 60],
                vec![heater("sh", 200, 40)],
            )],
            vec![],
        );
        let result = run(&s, &RunOptions::default()).unwrap();
        let m = &result.microgrids[0].metrics;
        assert_eq!(m.imports_wh, 0);
        assert_eq!(m.packet_blocking_rate, 0.0);
        assert_eq!(m.unserved_energy_wh, 0);
        assert_eq!(m.self_sufficiency, 1.0);
    }

    #[test]
    fn identical_runs_are_bit_identical() {
        let s = scenario(
            vec![
                microgrid("a", "h1", vec![30; 90], vec![heater("sh", 300, 60)]),
                microgrid("b", "h2", vec![5; 90], vec![heater("sh2", 200, 60)]),
            ],
            vec![InterconnectLink {
                link_id: "ab".into(),
                endpoints: ("a".into(), "b".into()),
                capacity_wh_per_slot: 50,
                loss_factor: Ratio::new(1, 10).unwrap(),
            }],
        );
        let r1 = run(&s, &RunOptions::default()).unwrap();
        let r2 = run(&s, &RunOptions::default()).unwrap();
        assert_eq!(
            serde_json::to_string(&r1).unwrap(),
            serde_json::to_string(&r2).unwrap()
        );
    }

    #[test]
    fn mirrored_microgrids_produce_mirrored_metrics() {
        // Same household demand streams (same household id), same traces.
        let s = scenario(
            vec![
                microgrid("a", "twin", vec![20; 120], vec![heater("sh", 300, 80)]),
                microgrid("b", "twin", vec![20; 120], vec![heater("sh", 300, 80)]),
            ],
            vec![InterconnectLink {
                link_id: "ab".into(),
                endpoints: ("a".into(), "b".into()),
                capacity_wh_per_slot: 50,
                loss_factor: Ratio::ZERO,
            }],
        );
        let result = run(&s, &RunOptions::default()).unwrap();
        let (a, b) = (&result.microgrids[0].metrics, &result.microgrids[1].metrics);
        assert_eq!(a.consumption_wh, b.consumption_wh);
        assert_eq!(a.unserved_energy_wh, b.unserved_energy_wh);
        assert_eq!(a.self_sufficiency, b.self_sufficiency);
        assert!(result.transfers.is_empty(), "identical twins have nothing to trade");
    }

    #[test]
    fn deficit_microgrid_imports_from_surplus_neighbour() {
        let s = scenario(
            vec![
                microgrid("rich", "h1", vec![100; 60], vec![]),
                microgrid("poor", "h2", vec![0; 60], vec![heater("sh", 100, 30)]),
            ],
            vec![InterconnectLink {
                link_id: "rp".into(),
                endpoints: ("rich".into(), "poor".into()),
                capacity_wh_per_slot: 100,
                loss_factor: Ratio::ZERO,
            }],
        );
        let result = run(&s, &RunOptions::default()).unwrap();
        let poor = &result.microgrids[1].metrics;
        assert_eq!(poor.unserved_energy_wh, 0);
        assert_eq!(poor.imports_wh, 100);
        assert_eq!(poor.self_sufficiency, 0.0);
        assert_eq!(poor.network_cost_proxy, 200.0);
        assert_eq!(result.reciprocity["rich"], 100);
        assert_eq!(result.reciprocity["poor"], -100);
        // Transfers are audited sent/received/loss-exact.
        for t in &result.transfers {
            assert_eq!(t.sent_wh, t.received_wh + t.loss_wh);
        }
    }

    #[test]
    fn opted_out_microgrid_neither_imports_nor_exports() {
        let mut rich = microgrid("rich", "h1", vec![100; 60], vec![]);
        rich.opted_in = false;
        let s = scenario(
            vec![
                rich,
                microgrid("poor", "h2", vec![0; 60], vec![heater("sh", 100, 30)]),
            ],
            vec![InterconnectLink {
                link_id: "rp".into(),
                endpoints: ("rich".into(), "poor".into()),
                capacity_wh_per_slot: 100,
                loss_factor: Ratio::ZERO,
            }],
        );
        let result = run(&s, &RunOptions::default()).unwrap();
        assert!(result.transfers.is_empty());
        assert_eq!(result.microgrids[0].metrics.exports_wh, 0);
        assert_eq!(result.microgrids[1].metrics.imports_wh, 0);
        assert_eq!(result.microgrids[1].metrics.unserved_energy_wh, 100);
    }

    #[test]
    fn uncoordinated_never_beats_commons_here() {
        // Generation arrives late; flexible demand wants to start early.
        let mut trace = vec![0u64; 120];
        for wh in trace.iter_mut().skip(60) {
            *wh = 40;
        }
        let s = scenario(
            vec![microgrid("a", "h1", trace, vec![heater("sh", 200, 100)])],
            vec![],
        );
        let commons = run(&s, &RunOptions::default()).unwrap();
        let baseline = run_uncoordinated(&s).unwrap();
        assert!(
            commons.community.unserved_energy_wh <= baseline.community.unserved_energy_wh,
            "commons {} vs uncoordinated {}",
            commons.community.unserved_energy_wh,
            baseline.community.unserved_energy_wh
        );
    }

    #[test]
    fn slack_supply_makes_the_modes_agree() {
        let s = scenario(
            vec![microgrid("a", "h1", vec![200; 90], vec![heater("sh", 150, 60)])],
            vec![],
        );
        let commons = run(&s, &RunOptions::default()).unwrap();
        let baseline = run_uncoordinated(&s).unwrap();
        assert_eq!(commons.community.served_wh, baseline.community.served_wh);
        assert_eq!(commons.community.unserved_energy_wh, 0);
        assert_eq!(baseline.community.unserved_energy_wh, 0);
    }

    #[test]
    fn no_supply_at_all_strands_demand_in_both_modes() {
        let s = scenario(
            vec![microgrid("a", "h1", vec![0; 60], vec![heater("sh", 100, 30)])],
            vec![],
        );
        let commons = run(&s, &RunOptions::default()).unwrap();
        let baseline = run_uncoordinated(&s).unwrap();
        assert_eq!(commons.community.unserved_energy_wh, 100);
        assert_eq!(baseline.community.unserved_energy_wh, 100);
    }
}
