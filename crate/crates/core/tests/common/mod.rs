//! Shared scenario generators for the integration and acceptance suites.
//!
//! Everything here is seeded and versioned: regenerating a suite with
//! the same version constant reproduces the same scenarios.

// Not every test binary uses every generator.
#![allow(dead_code)]

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use packetgrid_core::hems::{ApplianceSpec, HouseholdProfile};
use packetgrid_core::packet::{LoadClass, Priority};
use packetgrid_core::ratio::Ratio;
use packetgrid_core::scenario::{MicrogridConfig, Mode, Scenario};
use packetgrid_core::server::{GenerationAsset, StorageUnit};
use packetgrid_core::sharing::InterconnectLink;

/// Version of the generated suites; bump when the generators change.
pub const SUITE_VERSION: u64 = 1;

pub fn suite_rng(label: &str, index: u64) -> ChaCha8Rng {
    let mut hash: u64 = 0xcbf29ce484222325 ^ SUITE_VERSION;
    for b in label.bytes().chain(index.to_le_bytes()) {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    ChaCha8Rng::seed_from_u64(hash)
}

fn appliance(rng: &mut ChaCha8Rng, index: usize, packet_size: u32, max_window: u32) -> ApplianceSpec {
    // Keep the whole delivery window inside the shortest day.
    let max_energy = (max_window as u64 * packet_size as u64).min(400).max(20);
    let energy = rng.gen_range(20..=max_energy);
    let packets = energy.div_ceil(packet_size as u64) as u32;
    let class = if rng.gen_range(0..10) < 7 {
        LoadClass::Interruptible
    } else {
        LoadClass::Uninterruptible
    };
    let window_hi = packets
        .saturating_mul(6)
        .max(packets + 10)
        .min(max_window)
        .max(packets);
    let window = rng.gen_range(packets..=window_hi);
    ApplianceSpec {
        device_id: format!("d{index}"),
        label: format!("appliance {index}"),
        class,
        priority: Priority(rng.gen_range(0..=255)),
        energy_per_activation_wh: energy,
        activations_per_day: rng.gen_range(0..=2),
        flexibility_window_slots: window,
    }
}

fn trace(rng: &mut ChaCha8Rng, horizon: u32, peak: u64) -> Vec<u64> {
    // Blocky availability: stretches of output and stretches of calm.
    let mut values = Vec::with_capacity(horizon as usize);
    let mut remaining_block = 0u32;
    let mut level = 0u64;
    for _ in 0..horizon {
        if remaining_block == 0 {
            remaining_block = rng.gen_range(4..=24);
            level = if rng.gen_range(0..10) < 4 {
                0
            } else {
                rng.gen_range(1..=peak)
            };
        }
        remaining_block -= 1;
        values.push(level);
    }
    values
}

fn storage(rng: &mut ChaCha8Rng) -> StorageUnit {
    let capacity = rng.gen_range(100..=2000);
    let efficiencies = [(1u32, 1u32), (9, 10), (4, 5)];
    let eff = efficiencies[rng.gen_range(0..efficiencies.len())];
    StorageUnit {
        capacity_wh: capacity,
        soc_wh: rng.gen_range(0..=capacity),
        max_charge_wh_per_slot: rng.gen_range(20..=200),
        max_discharge_wh_per_slot: rng.gen_range(20..=200),
        round_trip_efficiency: Ratio::new(eff.0, eff.1).unwrap(),
    }
}

/// A random small scenario for conservation and soundness fuzzing.
pub fn fuzz_scenario(index: u64) -> Scenario {
    let mut rng = suite_rng("fuzz", index);
    let horizon: u32 = if rng.gen_range(0..50) == 0 {
        1_440
    } else {
        [24u32, 48, 96, 144, 240, 288][rng.gen_range(0..6)]
    };
    let packet_size = [5u32, 10, 20][rng.gen_range(0..3)];
    let mg_count = rng.gen_range(1..=3);
    let mut microgrids = Vec::with_capacity(mg_count);
    for m in 0..mg_count {
        let household_count = rng.gen_range(1..=3);
        let mut households = Vec::with_capacity(household_count);
        for h in 0..household_count {
            let appliance_count = rng.gen_range(1..=4);
            let appliances = (0..appliance_count)
                .map(|a| appliance(&mut rng, a, packet_size, horizon))
                .collect();
            households.push(HouseholdProfile {
                household_id: format!("mg{m}-h{h}"),
                appliances,
                preference_order: None,
            });
        }
        let asset_count = rng.gen_range(0..=2);
        let assets = (0..asset_count)
            .map(|a| GenerationAsset {
                asset_id: format!("mg{m}-gen{a}"),
                trace: trace(&mut rng, horizon, 150),
            })
            .collect();
        let storage_count = rng.gen_range(0..=2);
        let storage_units = (0..storage_count).map(|_| storage(&mut rng)).collect();
        microgrids.push(MicrogridConfig {
            microgrid_id: format!("mg{m}"),
            households,
            assets,
            storage: storage_units,
            opted_in: rng.gen_range(0..10) < 9,
        });
    }
    let mut links = Vec::new();
    for a in 0..mg_count {
        for b in (a + 1)..mg_count {
            if rng.gen_range(0..10) < 6 {
                let losses = [(0u32, 1u32), (1, 20), (1, 10)];
                let loss = losses[rng.gen_range(0..losses.len())];
                links.push(InterconnectLink {
                    link_id: format!("l{a}{b}"),
                    endpoints: (format!("mg{a}"), format!("mg{b}")),
                    capacity_wh_per_slot: rng.gen_range(20..=300),
                    loss_factor: Ratio::new(loss.0, loss.1).unwrap(),
                });
            }
        }
    }
    Scenario {
        horizon_slots: horizon,
        packet_size_wh: packet_size,
        seed: rng.gen(),
        mode: Mode::Commons,
        network_cost_multiplier: 2.0,
        microgrids,
        links,
    }
}

/// One scenario of the mode-comparison suite: two microgrids whose
/// generation windows are shifted in time, so demand flexibility and
/// sharing are both needed to serve everyone.
pub fn shifted_generation_scenario(index: u64) -> Scenario {
    let mut rng = suite_rng("shifted", index);
    let horizon = 240u32;
    let packet_size = 10u32;
    let half = horizon / 2;
    let peak_a: u64 = rng.gen_range(60..=140);
    let peak_b: u64 = rng.gen_range(60..=140);
    let trace_a: Vec<u64> = (0..horizon)
        .map(|s| if s < half { peak_a } else { 0 })
        .collect();
    let trace_b: Vec<u64> = (0..horizon)
        .map(|s| if s >= half { peak_b } else { 0 })
        .collect();

    let make_households = |mg: usize, budget_wh: u64, rng: &mut ChaCha8Rng| {
        let household_count = 2;
        let mut households = Vec::new();
        let mut spent = 0u64;
        for h in 0..household_count {
            let mut appliances = Vec::new();
            for a in 0..rng.gen_range(2..=3) {
                let energy = rng.gen_range(100..=400);
                if spent + energy > budget_wh {
                    break;
                }
                spent += energy;
                let packets = (energy as u64).div_ceil(packet_size as u64) as u32;
                let uninterruptible = rng.gen_range(0..100) < 15;
                let (class, window) = if uninterruptible {
                    (
                        LoadClass::Uninterruptible,
                        rng.gen_range(packets * 3..=(packets * 3).max(200)),
                    )
                } else {
                    (LoadClass::Interruptible, rng.gen_range(60..=180))
                };
                appliances.push(ApplianceSpec {
                    device_id: format!("d{a}"),
                    label: format!("flexible load {a}"),
                    class,
                    priority: Priority(rng.gen_range(50..=200)),
                    energy_per_activation_wh: energy,
                    activations_per_day: 1,
                    flexibility_window_slots: window.min(horizon),
                });
            }
            households.push(HouseholdProfile {
                household_id: format!("s{index}-mg{mg}-h{h}"),
                appliances,
                preference_order: None,
            });
        }
        households
    };

    // Keep total demand near total generation so timing actually bites.
    let budget_a = peak_a * half as u64 * 8 / 10;
    let budget_b = peak_b * half as u64 * 8 / 10;
    let storage_units = |rng: &mut ChaCha8Rng| {
        if rng.gen_range(0..10) < 4 {
            vec![StorageUnit {
                capacity_wh: rng.gen_range(200..=800),
                soc_wh: 0,
                max_charge_wh_per_slot: rng.gen_range(30..=80),
                max_discharge_wh_per_slot: rng.gen_range(30..=80),
                round_trip_efficiency: Ratio::new(9, 10).unwrap(),
            }]
        } else {
            Vec::new()
        }
    };

    let microgrids = vec![
        MicrogridConfig {
            microgrid_id: "early".into(),
            households: make_households(0, budget_a, &mut rng),
            assets: vec![GenerationAsset {
                asset_id: "gen-early".into(),
                trace: trace_a,
            }],
            storage: storage_units(&mut rng),
            opted_in: true,
        },
        MicrogridConfig {
            microgrid_id: "late".into(),
            households: make_households(1, budget_b, &mut rng),
            assets: vec![GenerationAsset {
                asset_id: "gen-late".into(),
                trace: trace_b,
            }],
            storage: storage_units(&mut rng),
            opted_in: true,
        },
    ];
    let losses = [(0u32, 1u32), (1, 20)];
    let loss = losses[rng.gen_range(0..losses.len())];
    Scenario {
        horizon_slots: horizon,
        packet_size_wh: packet_size,
        seed: rng.gen(),
        mode: Mode::Commons,
        network_cost_multiplier: 2.0,
        microgrids,
        links: vec![InterconnectLink {
            link_id: "bridge".into(),
            endpoints: ("early".into(), "late".into()),
            capacity_wh_per_slot: rng.gen_range(80..=250),
            loss_factor: Ratio::new(loss.0, loss.1).unwrap(),
        }],
    }
}

/// Desk-scale benchmark scenario: 10 microgrids x 50 households over a
/// full day at minute resolution.
pub fn desk_scale_scenario() -> Scenario {
    let mut rng = suite_rng("desk", 0);
    let horizon = 1_440u32;
    let packet_size = 10u32;
    let mut microgrids = Vec::with_capacity(10);
    for m in 0..10 {
        let mut households = Vec::with_capacity(50);
        for h in 0..50 {
            let mut appliances = Vec::new();
            for a in 0..5 {
                let energy: u64 = rng.gen_range(50..=600);
                let packets = energy.div_ceil(packet_size as u64) as u32;
                let uninterruptible = a == 0;
                appliances.push(ApplianceSpec {
                    device_id: format!("d{a}"),
                    label: format!("load {a}"),
                    class: if uninterruptible {
                        LoadClass::Uninterruptible
                    } else {
                        LoadClass::Interruptible
                    },
                    priority: Priority(rng.gen_range(0..=255)),
                    energy_per_activation_wh: energy,
                    activations_per_day: rng.gen_range(1..=2),
                    flexibility_window_slots: rng.gen_range(packets.max(30) * 2..=600),
                });
            }
            households.push(HouseholdProfile {
                household_id: format!("mg{m}-h{h}"),
                appliances,
                preference_order: None,
            });
        }
        let phase = (m as u32) * 120;
        let trace: Vec<u64> = (0..horizon)
            .map(|s| {
                let day_pos = (s + phase) % horizon;
                if (360..1080).contains(&day_pos) {
                    rng.gen_range(800..=1600)
                } else {
                    rng.gen_range(0..=100)
                }
            })
            .collect();
        microgrids.push(MicrogridConfig {
            microgrid_id: format!("mg{m}"),
            households,
            assets: vec![GenerationAsset {
                asset_id: format!("mg{m}-pv"),
                trace,
            }],
            storage: vec![StorageUnit {
                capacity_wh: 20_000,
                soc_wh: 5_000,
                max_charge_wh_per_slot: 400,
                max_discharge_wh_per_slot: 400,
                round_trip_efficiency: Ratio::new(9, 10).unwrap(),
            }],
            opted_in: true,
        });
    }
    let mut links = Vec::new();
    for a in 0..10usize {
        let b = (a + 1) % 10;
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        links.push(InterconnectLink {
            link_id: format!("ring-{lo}-{hi}"),
            endpoints: (format!("mg{lo}"), format!("mg{hi}")),
            capacity_wh_per_slot: 500,
            loss_factor: Ratio::new(1, 20).unwrap(),
        });
    }
    Scenario {
        horizon_slots: horizon,
        packet_size_wh: packet_size,
        seed: 2_024,
        mode: Mode::Commons,
        network_cost_multiplier: 2.0,
        microgrids,
        links,
    }
}
