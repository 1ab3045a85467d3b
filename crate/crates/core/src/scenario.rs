//! Scenario model: the JSON document describing a run, its validation
//! diagnostics, and CSV generation-trace ingestion.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hems::HouseholdProfile;
use crate::ratio::Ratio;
use crate::server::{GenerationAsset, StorageUnit};
use crate::sharing::InterconnectLink;

/// Slots per simulated day at minute resolution.
pub const SLOTS_PER_DAY: u32 = 1_440;

/// Days of demand history fed into each microgrid's forecast.
pub const FORECAST_WINDOW_DAYS: u32 = 7;

/// Coordination mode of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Packet multiplexing within each microgrid plus peer-to-peer
    /// sharing between them.
    #[default]
    Commons,
    /// Baseline: requests run at their desired start only, no deferral
    /// and no sharing.
    Uncoordinated,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mode::Commons => write!(f, "commons"),
            Mode::Uncoordinated => write!(f, "uncoordinated"),
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "commons" => Ok(Mode::Commons),
            "uncoordinated" => Ok(Mode::Uncoordinated),
            other => Err(format!("unknown mode `{other}` (expected commons|uncoordinated)")),
        }
    }
}

fn default_multiplier() -> f64 {
    2.0
}

fn default_opted_in() -> bool {
    true
}

/// A generation asset reference inside the scenario file; the trace CSV
/// path is relative to the scenario file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssetSpec {
    pub asset_id: String,
    pub trace_csv: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StorageSpec {
    pub capacity_wh: u64,
    #[serde(default)]
    pub initial_soc_wh: u64,
    pub max_charge_wh_per_slot: u64,
    pub max_discharge_wh_per_slot: u64,
    pub round_trip_efficiency: Ratio,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub link_id: String,
    pub endpoints: (String, String),
    pub capacity_wh_per_slot: u64,
    pub loss_factor: Ratio,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MicrogridSpec {
    pub microgrid_id: String,
    pub households: Vec<HouseholdProfile>,
    #[serde(default)]
    pub generation_assets: Vec<AssetSpec>,
    #[serde(default)]
    pub storage_units: Vec<StorageSpec>,
    #[serde(default = "default_opted_in")]
    pub opted_in: bool,
}

/// The scenario document as written on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub horizon_slots: u32,
    pub packet_size_wh: u32,
    pub seed: u64,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default = "default_multiplier")]
    pub network_cost_multiplier: f64,
    pub microgrids: Vec<MicrogridSpec>,
    #[serde(default)]
    pub links: Vec<LinkSpec>,
}

/// A fully resolved microgrid: traces loaded, storage instantiated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MicrogridConfig {
    pub microgrid_id: String,
    pub households: Vec<HouseholdProfile>,
    pub assets: Vec<GenerationAsset>,
    pub storage: Vec<StorageUnit>,
    pub opted_in: bool,
}

/// A runnable scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub horizon_slots: u32,
    pub packet_size_wh: u32,
    pub seed: u64,
    pub mode: Mode,
    pub network_cost_multiplier: f64,
    pub microgrids: Vec<MicrogridConfig>,
    pub links: Vec<InterconnectLink>,
}

/// One validation finding, addressed by JSON pointer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub pointer: String,
    pub message: String,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.pointer, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read `{path}`: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse `{path}`: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("trace `{path}`: {message}")]
    Trace { path: PathBuf, message: String },
    #[error("scenario is invalid: {0} violation(s)")]
    Invalid(usize),
}

/// Reads and parses a scenario file without validating it.
pub fn load_scenario_file(path: &Path) -> Result<ScenarioFile, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| ScenarioError::Parse {
        path: path.to_path_buf(),
        source,
    })
}

/// Shortest day length of the horizon: full days are `SLOTS_PER_DAY`
/// slots, a trailing partial day is shorter, and a horizon below one
/// day is a single short day.
pub fn min_day_len(horizon_slots: u32) -> u32 {
    if horizon_slots <= SLOTS_PER_DAY {
        horizon_slots
    } else {
        let remainder = horizon_slots % SLOTS_PER_DAY;
        if remainder == 0 {
            SLOTS_PER_DAY
        } else {
            remainder
        }
    }
}

/// Checks every scenario invariant and returns all findings.
/// `base_dir` anchors relative trace paths; trace contents are checked
/// too (existence, schema, horizon coverage).
pub fn validate_scenario(file: &ScenarioFile, base_dir: &Path) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut push = |pointer: String, message: String| out.push(Diagnostic { pointer, message });

    if file.horizon_slots == 0 {
        push("/horizon_slots".into(), "horizon must be positive".into());
    }
    if file.packet_size_wh == 0 {
        push("/packet_size_wh".into(), "packet size must be positive".into());
    }
    if !(file.network_cost_multiplier.is_finite() && file.network_cost_multiplier >= 0.0) {
        push(
            "/network_cost_multiplier".into(),
            "multiplier must be a finite non-negative number".into(),
        );
    }
    if file.microgrids.is_empty() {
        push("/microgrids".into(), "at least one microgrid is required".into());
    }

    let day_len = min_day_len(file.horizon_slots);
    let mut microgrid_ids = BTreeSet::new();
    let mut household_ids = BTreeSet::new();
    for (m, mg) in file.microgrids.iter().enumerate() {
        let mg_ptr = format!("/microgrids/{m}");
        if !microgrid_ids.insert(mg.microgrid_id.clone()) {
            push(
                format!("{mg_ptr}/microgrid_id"),
                format!("duplicate microgrid id `{}`", mg.microgrid_id),
            );
        }
        for (h, hh) in mg.households.iter().enumerate() {
            let hh_ptr = format!("{mg_ptr}/households/{h}");
            if !household_ids.insert(hh.household_id.clone()) {
                push(
                    format!("{hh_ptr}/household_id"),
                    format!(
                        "household id `{}` is not unique across the scenario",
                        hh.household_id
                    ),
                );
            }
            let mut device_ids = BTreeSet::new();
            for (a, appliance) in hh.appliances.iter().enumerate() {
                let ap_ptr = format!("{hh_ptr}/appliances/{a}");
                if !device_ids.insert(appliance.device_id.clone()) {
                    push(
                        format!("{ap_ptr}/device_id"),
                        format!("duplicate device id `{}`", appliance.device_id),
                    );
                }
                if appliance.energy_per_activation_wh == 0 {
                    push(
                        format!("{ap_ptr}/energy_per_activation_wh"),
                        "activation energy must be positive".into(),
                    );
                }
                if appliance.flexibility_window_slots == 0 {
                    push(
                        format!("{ap_ptr}/flexibility_window_slots"),
                        "flexibility window must be at least one slot".into(),
                    );
                } else {
                    if file.packet_size_wh > 0 {
                        let packets = appliance
                            .energy_per_activation_wh
                            .div_ceil(file.packet_size_wh as u64);
                        if (appliance.flexibility_window_slots as u64) < packets {
                            push(
                                format!("{ap_ptr}/flexibility_window_slots"),
                                format!(
                                    "window of {} slots cannot deliver {} packets at one packet per slot",
                                    appliance.flexibility_window_slots, packets
                                ),
                            );
                        }
                    }
                    if appliance.flexibility_window_slots > day_len {
                        push(
                            format!("{ap_ptr}/flexibility_window_slots"),
                            format!(
                                "window of {} slots does not fit the shortest day of {} slots",
                                appliance.flexibility_window_slots, day_len
                            ),
                        );
                    }
                }
            }
            if let Some(order) = &hh.preference_order {
                let mut seen = BTreeSet::new();
                for (p, device) in order.iter().enumerate() {
                    let ptr = format!("{hh_ptr}/preference_order/{p}");
                    if !device_ids.contains(device) {
                        push(ptr.clone(), format!("unknown device id `{device}`"));
                    }
                    if !seen.insert(device.clone()) {
                        push(ptr, format!("device `{device}` listed twice"));
                    }
                }
            }
        }
        for (s, storage) in mg.storage_units.iter().enumerate() {
            let st_ptr = format!("{mg_ptr}/storage_units/{s}");
            if storage.capacity_wh == 0 {
                push(format!("{st_ptr}/capacity_wh"), "capacity must be positive".into());
            }
            if storage.initial_soc_wh > storage.capacity_wh {
                push(
                    format!("{st_ptr}/initial_soc_wh"),
                    format!(
                        "initial state of charge {} exceeds capacity {}",
                        storage.initial_soc_wh, storage.capacity_wh
                    ),
                );
            }
            let eff = storage.round_trip_efficiency;
            if eff.den == 0 || eff.num == 0 || !eff.is_fraction() {
                push(
                    format!("{st_ptr}/round_trip_efficiency"),
                    "efficiency must be a rational in (0, 1]".into(),
                );
            }
        }
        for (a, asset) in mg.generation_assets.iter().enumerate() {
            let as_ptr = format!("{mg_ptr}/generation_assets/{a}");
            let path = base_dir.join(&asset.trace_csv);
            match load_trace(&path, &asset.asset_id, file.horizon_slots) {
                Ok(_) => {}
                Err(e) => push(format!("{as_ptr}/trace_csv"), e.to_string()),
            }
        }
    }

    let mut pairs = BTreeSet::new();
    let mut link_ids = BTreeSet::new();
    for (l, link) in file.links.iter().enumerate() {
        let ln_ptr = format!("/links/{l}");
        if !link_ids.insert(link.link_id.clone()) {
            push(
                format!("{ln_ptr}/link_id"),
                format!("duplicate link id `{}`", link.link_id),
            );
        }
        let (a, b) = (&link.endpoints.0, &link.endpoints.1);
        if a == b {
            push(
                format!("{ln_ptr}/endpoints"),
                "a link must connect two distinct microgrids".into(),
            );
        }
        for end in [a, b] {
            if !microgrid_ids.contains(end) {
                push(
                    format!("{ln_ptr}/endpoints"),
                    format!("unknown microgrid `{end}`"),
                );
            }
        }
        let key = if a <= b {
            (a.clone(), b.clone())
        } else {
            (b.clone(), a.clone())
        };
        if !pairs.insert(key) {
            push(
                format!("{ln_ptr}/endpoints"),
                format!("more than one link between `{a}` and `{b}`"),
            );
        }
        if link.capacity_wh_per_slot == 0 {
            push(
                format!("{ln_ptr}/capacity_wh_per_slot"),
                "link capacity must be positive".into(),
            );
        }
        if link.loss_factor.den == 0 || !link.loss_factor.is_proper_fraction() {
            push(
                format!("{ln_ptr}/loss_factor"),
                "loss factor must be a rational in [0, 1)".into(),
            );
        }
    }

    out
}

/// Loads one asset's generation trace from a CSV with the exact header
/// `slot,asset_id,generation_wh`. Every slot in `[0, horizon)` must
/// appear exactly once for the asset; missing slots are an ingestion
/// error, not zero-filled.
pub fn load_trace(path: &Path, asset_id: &str, horizon_slots: u32) -> Result<Vec<u64>, ScenarioError> {
    let trace_err = |message: String| ScenarioError::Trace {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| trace_err(format!("cannot open: {e}")))?;
    let headers = reader
        .headers()
        .map_err(|e| trace_err(format!("cannot read header: {e}")))?;
    let expected = ["slot", "asset_id", "generation_wh"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(trace_err(format!(
            "header must be `slot,asset_id,generation_wh`, found `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut values: BTreeMap<u32, u64> = BTreeMap::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| trace_err(format!("row {}: {e}", line + 2)))?;
        if record.get(1) != Some(asset_id) {
            continue;
        }
        let slot: u32 = record
            .get(0)
            .unwrap_or("")
            .parse()
            .map_err(|e| trace_err(format!("row {}: bad slot: {e}", line + 2)))?;
        let wh: u64 = record
            .get(2)
            .unwrap_or("")
            .parse()
            .map_err(|e| trace_err(format!("row {}: bad generation_wh: {e}", line + 2)))?;
        if slot >= horizon_slots {
            return Err(trace_err(format!(
                "asset `{asset_id}` has slot {slot} beyond the horizon of {horizon_slots}"
            )));
        }
        if values.insert(slot, wh).is_some() {
            return Err(trace_err(format!("asset `{asset_id}` has duplicate slot {slot}")));
        }
    }
    if values.len() != horizon_slots as usize {
        let first_missing = (0..horizon_slots)
            .find(|s| !values.contains_key(s))
            .unwrap_or(0);
        return Err(trace_err(format!(
            "asset `{asset_id}` covers {} of {} slots (first missing: {})",
            values.len(),
            horizon_slots,
            first_missing
        )));
    }
    Ok(values.into_values().collect())
}

/// Resolves a scenario file into a runnable scenario, loading traces.
pub fn resolve_scenario(file: &ScenarioFile, base_dir: &Path) -> Result<Scenario, ScenarioError> {
    let diagnostics = validate_scenario(file, base_dir);
    if !diagnostics.is_empty() {
        return Err(ScenarioError::Invalid(diagnostics.len()));
    }
    let mut microgrids = Vec::with_capacity(file.microgrids.len());
    for mg in &file.microgrids {
        let mut assets = Vec::with_capacity(mg.generation_assets.len());
        for asset in &mg.generation_assets {
            let trace = load_trace(
                &base_dir.join(&asset.trace_csv),
                &asset.asset_id,
                file.horizon_slots,
            )?;
            assets.push(GenerationAsset {
                asset_id: asset.asset_id.clone(),
                trace,
            });
        }
        let storage = mg
            .storage_units
            .iter()
            .map(|s| StorageUnit {
                capacity_wh: s.capacity_wh,
                soc_wh: s.initial_soc_wh,
                max_charge_wh_per_slot: s.max_charge_wh_per_slot,
                max_discharge_wh_per_slot: s.max_discharge_wh_per_slot,
                round_trip_efficiency: s.round_trip_efficiency,
            })
            .collect();
        microgrids.push(MicrogridConfig {
            microgrid_id: mg.microgrid_id.clone(),
            households: mg.households.clone(),
            assets,
            storage,
            opted_in: mg.opted_in,
        });
    }
    let links = file
        .links
        .iter()
        .map(|l| InterconnectLink {
            link_id: l.link_id.clone(),
            endpoints: l.endpoints.clone(),
            capacity_wh_per_slot: l.capacity_wh_per_slot,
            loss_factor: l.loss_factor,
        })
        .collect();
    Ok(Scenario {
        horizon_slots: file.horizon_slots,
        packet_size_wh: file.packet_size_wh,
        seed: file.seed,
        mode: file.mode,
        network_cost_multiplier: file.network_cost_multiplier,
        microgrids,
        links,
    })
}
