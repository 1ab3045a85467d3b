//! Home energy management: per-household demand generation, request
//! classification, and demand forecasting.
//!
//! Each household draws its appliance activations for a day from a
//! dedicated random stream derived from (scenario seed, household id,
//! day index), so profiles are reproducible regardless of how many
//! other households or microgrids exist around them.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{RequestError, SimError};
use crate::packet::{
    make_request, validate_request, LoadClass, PacketRequest, Priority, RequestId, SlotIndex,
};

/// One flexible appliance of a household.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApplianceSpec {
    pub device_id: String,
    pub label: String,
    pub class: LoadClass,
    pub priority: Priority,
    pub energy_per_activation_wh: u64,
    pub activations_per_day: u32,
    pub flexibility_window_slots: u32,
}

/// A household and its appliances. `preference_order` breaks numeric
/// priority ties between the listed devices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HouseholdProfile {
    pub household_id: String,
    pub appliances: Vec<ApplianceSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preference_order: Option<Vec<String>>,
}

/// A raw appliance activation before packetization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivationEvent {
    pub device_id: String,
    pub desired_start_slot: SlotIndex,
    pub energy_wh: u64,
}

/// All packet requests of one household for one day, ordered by arrival
/// slot with priority and preference breaking ties.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DailyLoadProfile {
    pub household_id: String,
    pub day_index: u32,
    pub requests: Vec<PacketRequest>,
}

/// Per-slot expected demand for one day, averaged over a trailing
/// window of history.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Forecast {
    pub expected_wh_per_slot: Vec<u64>,
    pub window_days: u32,
}

impl Forecast {
    pub fn zero(slots_per_day: usize) -> Self {
        Forecast {
            expected_wh_per_slot: vec![0; slots_per_day],
            window_days: 0,
        }
    }
}

/// Hands out request ids in creation order. Ids are unique per
/// microgrid; scheduler ties fall back to ascending id, so creation
/// order encodes household preference.
#[derive(Debug, Default, Clone)]
pub struct RequestIdAllocator {
    next: u64,
}

impl RequestIdAllocator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn next_id(&mut self) -> RequestId {
        let id = RequestId(self.next);
        self.next += 1;
        id
    }
}

/// Derives the dedicated random stream for (seed, household, day).
///
/// Uses FNV-1a over the tuple's bytes so the stream is stable across
/// platforms and releases, unlike the std hasher.
pub fn household_rng(scenario_seed: u64, household_id: &str, day_index: u32) -> ChaCha8Rng {
    const FNV_OFFSET: u64 = 0xcbf29ce484222325;
    const FNV_PRIME: u64 = 0x100000001b3;
    let mut hash = FNV_OFFSET;
    let mut eat = |byte: u8| {
        hash ^= byte as u64;
        hash = hash.wrapping_mul(FNV_PRIME);
    };
    for b in scenario_seed.to_le_bytes() {
        eat(b);
    }
    for b in household_id.as_bytes() {
        eat(*b);
    }
    for b in day_index.to_le_bytes() {
        eat(b);
    }
    ChaCha8Rng::seed_from_u64(hash)
}

/// Draws every appliance activation of a household for one day.
///
/// Each appliance contributes exactly `activations_per_day` events with
/// a desired start drawn uniformly over the day minus its flexibility
/// window, so the delivery window always fits inside the day.
pub fn collect_demands(
    household: &HouseholdProfile,
    day_start: SlotIndex,
    day_end_exclusive: SlotIndex,
    rng: &mut ChaCha8Rng,
) -> Vec<ActivationEvent> {
    let day_len = day_end_exclusive.0.saturating_sub(day_start.0);
    let mut events = Vec::new();
    for appliance in &household.appliances {
        // Start slots that keep the whole flexibility window inside the day.
        let choices = day_len
            .saturating_sub(appliance.flexibility_window_slots)
            .saturating_add(1)
            .max(1);
        for _ in 0..appliance.activations_per_day {
            let offset = rng.gen_range(0..choices);
            events.push(ActivationEvent {
                device_id: appliance.device_id.clone(),
                desired_start_slot: SlotIndex(day_start.0 + offset),
                energy_wh: appliance.energy_per_activation_wh,
            });
        }
    }
    events
}

/// Packetizes a day's activation events into an ordered load profile.
///
/// Ordering is (arrival slot, priority desc, preference rank, appliance
/// declaration order); ids are then assigned in that order so the
/// scheduler's ascending-id tie break honors household preference.
pub fn classify_and_aggregate(
    events: &[ActivationEvent],
    household: &HouseholdProfile,
    day_index: u32,
    day_end_exclusive: SlotIndex,
    packet_size_wh: u32,
    ids: &mut RequestIdAllocator,
) -> Result<DailyLoadProfile, SimError> {
    let appliance_index = |device_id: &str| {
        household
            .appliances
            .iter()
            .position(|a| a.device_id == device_id)
    };
    let preference_rank = |device_id: &str| -> usize {
        household
            .preference_order
            .as_ref()
            .and_then(|order| order.iter().position(|d| d == device_id))
            .unwrap_or(usize::MAX)
    };

    let mut keyed: Vec<(&ActivationEvent, &ApplianceSpec)> = events
        .iter()
        .map(|event| {
            let idx = appliance_index(&event.device_id).unwrap_or_else(|| {
                panic!(
                    "event for unknown device `{}` in household `{}`",
                    event.device_id, household.household_id
                )
            });
            (event, &household.appliances[idx])
        })
        .collect();
    keyed.sort_by(|(ea, aa), (eb, ab)| {
        ea.desired_start_slot
            .cmp(&eb.desired_start_slot)
            .then(ab.priority.cmp(&aa.priority))
            .then(preference_rank(&ea.device_id).cmp(&preference_rank(&eb.device_id)))
            .then(
                appliance_index(&ea.device_id)
                    .unwrap()
                    .cmp(&appliance_index(&eb.device_id).unwrap()),
            )
    });

    let mut requests = Vec::with_capacity(keyed.len());
    for (event, appliance) in keyed {
        let start = event.desired_start_slot;
        let natural_end = start.0 + appliance.flexibility_window_slots - 1;
        let deadline = SlotIndex(natural_end.min(day_end_exclusive.0.saturating_sub(1)));
        let request = make_request(
            ids.next_id(),
            appliance.device_id.clone(),
            appliance.class,
            appliance.priority,
            event.energy_wh,
            (start, deadline),
            start,
            packet_size_wh,
        )
        .map_err(|source| SimError::Hems {
            household: household.household_id.clone(),
            source,
        })?;
        requests.push(request);
    }

    let profile = DailyLoadProfile {
        household_id: household.household_id.clone(),
        day_index,
        requests,
    };
    debug_assert!(profile
        .requests
        .iter()
        .all(|r| validate_request(r).is_empty()));
    Ok(profile)
}

/// Per-slot arithmetic mean over the trailing `window_days` of history,
/// rounded half-up to whole watt-hours. Empty history yields the zero
/// forecast.
pub fn update_forecast(history: &[Vec<u64>], window_days: u32, slots_per_day: usize) -> Forecast {
    if history.is_empty() || window_days == 0 {
        return Forecast::zero(slots_per_day);
    }
    let used = (window_days as usize).min(history.len());
    let tail = &history[history.len() - used..];
    let mut expected = vec![0u64; slots_per_day];
    for (slot, value) in expected.iter_mut().enumerate() {
        let sum: u128 = tail.iter().map(|day| day[slot] as u128).sum();
        let n = used as u128;
        *value = ((2 * sum + n) / (2 * n)) as u64;
    }
    Forecast {
        expected_wh_per_slot: expected,
        window_days: used as u32,
    }
}

/// Infeasible-request error with the owning household attached.
pub fn infeasible_in_household(household: &str, source: RequestError) -> SimError {
    SimError::Hems {
        household: household.to_string(),
        source,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn appliance(device_id: &str, priority: u8, class: LoadClass) -> ApplianceSpec {
        ApplianceSpec {
            device_id: device_id.into(),
            label: device_id.into(),
            class,
            priority: Priority(priority),
            energy_per_activation_wh: 100,
            activations_per_day: 1,
            flexibility_window_slots: 30,
        }
    }

    fn household(appliances: Vec<ApplianceSpec>) -> HouseholdProfile {
        HouseholdProfile {
            household_id: "h1".into(),
            appliances,
            preference_order: None,
        }
    }

    #[test]
    fn zero_activations_produce_no_events() {
        let mut spec = appliance("idle", 10, LoadClass::Interruptible);
        spec.activations_per_day = 0;
        let hh = household(vec![spec]);
        let mut rng = household_rng(1, "h1", 0);
        assert!(collect_demands(&hh, SlotIndex(0), SlotIndex(1440), &mut rng).is_empty());
    }

    #[test]
    fn activation_count_matches_spec() {
        let mut spec = appliance("heater", 10, LoadClass::Interruptible);
        spec.activations_per_day = 2;
        let hh = household(vec![spec]);
        let mut rng = household_rng(1, "h1", 0);
        let events = collect_demands(&hh, SlotIndex(0), SlotIndex(1440), &mut rng);
        assert_eq!(events.len(), 2);
    }

    #[test]
    fn same_seed_same_day_reproduces_events() {
        let hh = household(vec![
            appliance("a", 10, LoadClass::Interruptible),
            appliance("b", 20, LoadClass::Uninterruptible),
        ]);
        let run = || {
            let mut rng = household_rng(42, "h1", 3);
            collect_demands(&hh, SlotIndex(0), SlotIndex(1440), &mut rng)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn events_fit_windows_inside_the_day() {
        let mut spec = appliance("wide", 10, LoadClass::Interruptible);
        spec.flexibility_window_slots = 200;
        spec.activations_per_day = 50;
        let hh = household(vec![spec]);
        let mut rng = household_rng(7, "h1", 0);
        for event in collect_demands(&hh, SlotIndex(0), SlotIndex(240), &mut rng) {
            assert!(event.desired_start_slot.0 + 200 <= 240);
        }
    }

    #[test]
    fn higher_priority_precedes_at_equal_slots() {
        let laundry = appliance("laundry", 200, LoadClass::Uninterruptible);
        let ebike = appliance("e-bike", 100, LoadClass::Interruptible);
        let hh = household(vec![ebike, laundry]);
        let events = vec![
            ActivationEvent {
                device_id: "e-bike".into(),
                desired_start_slot: SlotIndex(10),
                energy_wh: 100,
            },
            ActivationEvent {
                device_id: "laundry".into(),
                desired_start_slot: SlotIndex(10),
                energy_wh: 100,
            },
        ];
        let mut ids = RequestIdAllocator::new();
        let profile =
            classify_and_aggregate(&events, &hh, 0, SlotIndex(1440), 10, &mut ids).unwrap();
        assert_eq!(profile.requests[0].device_id, "laundry");
        assert_eq!(profile.requests[1].device_id, "e-bike");
        assert!(profile.requests[0].request_id < profile.requests[1].request_id);
    }

    #[test]
    fn preference_order_breaks_equal_priority_ties() {
        let a = appliance("a", 50, LoadClass::Interruptible);
        let b = appliance("b", 50, LoadClass::Interruptible);
        let mut hh = household(vec![a, b]);
        hh.preference_order = Some(vec!["b".into(), "a".into()]);
        let events = vec![
            ActivationEvent {
                device_id: "a".into(),
                desired_start_slot: SlotIndex(5),
                energy_wh: 100,
            },
            ActivationEvent {
                device_id: "b".into(),
                desired_start_slot: SlotIndex(5),
                energy_wh: 100,
            },
        ];
        let mut ids = RequestIdAllocator::new();
        let profile =
            classify_and_aggregate(&events, &hh, 0, SlotIndex(1440), 10, &mut ids).unwrap();
        assert_eq!(profile.requests[0].device_id, "b");
        assert_eq!(profile.requests[1].device_id, "a");
    }

    #[test]
    fn empty_event_list_gives_empty_profile() {
        let hh = household(vec![]);
        let mut ids = RequestIdAllocator::new();
        let profile = classify_and_aggregate(&[], &hh, 0, SlotIndex(1440), 10, &mut ids).unwrap();
        assert!(profile.requests.is_empty());
    }

    #[test]
    fn infeasible_request_carries_household_context() {
        let mut spec = appliance("dw", 100, LoadClass::Uninterruptible);
        spec.flexibility_window_slots = 3;
        spec.energy_per_activation_wh = 50; // 5 packets of 10 Wh, window 3
        let hh = household(vec![spec]);
        let events = vec![ActivationEvent {
            device_id: "dw".into(),
            desired_start_slot: SlotIndex(0),
            energy_wh: 50,
        }];
        let mut ids = RequestIdAllocator::new();
        let err = classify_and_aggregate(&events, &hh, 0, SlotIndex(1440), 10, &mut ids)
            .unwrap_err();
        match err {
            SimError::Hems { household, .. } => assert_eq!(household, "h1"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn forecast_of_single_day_is_that_day() {
        let day = vec![5u64, 0, 17, 3];
        let f = update_forecast(&[day.clone()], 7, 4);
        assert_eq!(f.expected_wh_per_slot, day);
        assert_eq!(f.window_days, 1);
    }

    #[test]
    fn forecast_is_the_mean_of_the_window() {
        let history = vec![vec![10u64], vec![20u64]];
        assert_eq!(update_forecast(&history, 2, 1).expected_wh_per_slot, vec![15]);
    }

    #[test]
    fn forecast_uses_only_the_trailing_window() {
        // Oracle: recompute the trailing-window mean directly.
        let history = vec![vec![10u64], vec![20u64], vec![30u64]];
        let window = 2usize;
        let tail = &history[history.len() - window..];
        let oracle: u64 = {
            let sum: u64 = tail.iter().map(|d| d[0]).sum();
            let n = window as u64;
            (2 * sum + n) / (2 * n)
        };
        assert_eq!(oracle, 25);
        assert_eq!(
            update_forecast(&history, 2, 1).expected_wh_per_slot,
            vec![oracle]
        );
    }

    #[test]
    fn empty_history_yields_zero_forecast() {
        let f = update_forecast(&[], 7, 3);
        assert_eq!(f.expected_wh_per_slot, vec![0, 0, 0]);
        assert_eq!(f.window_days, 0);
    }

    proptest! {
        #[test]
        fn forecast_bounded_by_history_extremes(
            days in proptest::collection::vec(
                proptest::collection::vec(0u64..1_000, 4),
                1..6,
            ),
            window in 1u32..6,
        ) {
            let f = update_forecast(&days, window, 4);
            let used = (window as usize).min(days.len());
            let tail = &days[days.len() - used..];
            for slot in 0..4 {
                let lo = tail.iter().map(|d| d[slot]).min().unwrap();
                let hi = tail.iter().map(|d| d[slot]).max().unwrap();
                prop_assert!(f.expected_wh_per_slot[slot] >= lo);
                prop_assert!(f.expected_wh_per_slot[slot] <= hi);
            }
        }

        #[test]
        fn profile_energy_matches_quantized_event_energy(
            energies in proptest::collection::vec(1u64..500, 1..8),
            size in 1u32..40,
        ) {
            let appliances: Vec<ApplianceSpec> = energies
                .iter()
                .enumerate()
                .map(|(i, &wh)| ApplianceSpec {
                    device_id: format!("d{i}"),
                    label: format!("d{i}"),
                    class: LoadClass::Interruptible,
                    priority: Priority(1),
                    energy_per_activation_wh: wh,
                    activations_per_day: 1,
                    flexibility_window_slots: 600,
                })
                .collect();
            let hh = HouseholdProfile {
                household_id: "hh".into(),
                appliances,
                preference_order: None,
            };
            let mut rng = household_rng(9, "hh", 0);
            let events = collect_demands(&hh, SlotIndex(0), SlotIndex(1440), &mut rng);
            let mut ids = RequestIdAllocator::new();
            let profile =
                classify_and_aggregate(&events, &hh, 0, SlotIndex(1440), size, &mut ids).unwrap();
            let total_packets: u64 =
                profile.requests.iter().map(|r| r.packet_count as u64).sum();
            let expected: u64 = energies
                .iter()
                .map(|wh| wh.div_ceil(size as u64))
                .sum();
            prop_assert_eq!(total_packets, expected);
        }
    }
}
