//! Report emission: run.json, metrics.csv, ledger.csv, transfers.csv
//! and a plain-text summary.
//!
//! Every renderer is a pure function of the run result, so regenerating
//! a bundle from the same inputs reproduces identical bytes. Schemas
//! are golden-file tested; extend them by appending columns.

use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use crate::engine::RunResult;

/// File names inside a report bundle.
pub const RUN_JSON: &str = "run.json";
pub const METRICS_CSV: &str = "metrics.csv";
pub const LEDGER_CSV: &str = "ledger.csv";
pub const TRANSFERS_CSV: &str = "transfers.csv";
pub const SUMMARY_TXT: &str = "summary.txt";

pub fn render_run_json(result: &RunResult) -> String {
    let mut text = serde_json::to_string_pretty(result).expect("run result serializes");
    text.push('\n');
    text
}

pub fn render_metrics_csv(result: &RunResult) -> String {
    let mut out = String::new();
    out.push_str(
        "scope,id,self_sufficiency,generation_wh,consumption_wh,imports_wh,exports_wh,\
         curtailment_wh,storage_net_wh,requested_wh,served_wh,unserved_energy_wh,wasted_wh,\
         packet_blocking_rate,import_share,fairness_jain,network_cost_proxy\n",
    );
    for mg in &result.microgrids {
        let m = &mg.metrics;
        writeln!(
            out,
            "microgrid,{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            m.microgrid_id,
            m.self_sufficiency,
            m.generation_wh,
            m.consumption_wh,
            m.imports_wh,
            m.exports_wh,
            m.curtailment_wh,
            m.storage_net_wh,
            m.requested_wh,
            m.served_wh,
            m.unserved_energy_wh,
            m.wasted_wh,
            m.packet_blocking_rate,
            m.import_share,
            m.fairness_jain,
            m.network_cost_proxy
        )
        .unwrap();
    }
    let c = &result.community;
    let exports: u64 = result.microgrids.iter().map(|m| m.metrics.exports_wh).sum();
    let curtailment: u64 = result.microgrids.iter().map(|m| m.metrics.curtailment_wh).sum();
    let storage_net: i64 = result.microgrids.iter().map(|m| m.metrics.storage_net_wh).sum();
    let wasted: u64 = result.microgrids.iter().map(|m| m.metrics.wasted_wh).sum();
    let import_share = if c.consumption_wh == 0 {
        0.0
    } else {
        c.transfer_volume_wh.min(c.consumption_wh) as f64 / c.consumption_wh as f64
    };
    writeln!(
        out,
        "community,community,{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        c.self_sufficiency,
        c.generation_wh,
        c.consumption_wh,
        c.transfer_volume_wh,
        exports,
        curtailment,
        storage_net,
        c.requested_wh,
        c.served_wh,
        c.unserved_energy_wh,
        wasted,
        c.packet_blocking_rate,
        import_share,
        c.fairness_jain,
        c.network_cost_proxy
    )
    .unwrap();
    out
}

pub fn render_ledger_csv(result: &RunResult) -> String {
    let mut out = String::new();
    out.push_str(
        "microgrid_id,slot,generation_wh,storage_discharge_wh,imports_wh,consumption_wh,\
         storage_charge_wh,exports_wh,curtailment_wh,link_losses_attributed_wh\n",
    );
    for mg in &result.microgrids {
        for l in &mg.ledgers {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                mg.microgrid_id,
                l.slot,
                l.generation_wh,
                l.storage_discharge_wh,
                l.imports_wh,
                l.consumption_wh,
                l.storage_charge_wh,
                l.exports_wh,
                l.curtailment_wh,
                l.link_losses_attributed_wh
            )
            .unwrap();
        }
    }
    out
}

pub fn render_transfers_csv(result: &RunResult) -> String {
    let mut out = String::new();
    out.push_str("slot,from,to,sent_wh,received_wh,loss_wh\n");
    for t in &result.transfers {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            t.slot, t.from_microgrid, t.to_microgrid, t.sent_wh, t.received_wh, t.loss_wh
        )
        .unwrap();
    }
    out
}

/// The one-line summary printed after a run.
pub fn one_line_summary(result: &RunResult) -> String {
    let c = &result.community;
    format!(
        "mode={} seed={} self_sufficiency={:.6} mean_microgrid_self_sufficiency={:.6} \
         unserved_wh={} blocking_rate={:.6} transfers_wh={} fairness={:.6} network_cost_proxy={:.1}",
        result.config.mode,
        result.config.seed,
        c.self_sufficiency,
        c.mean_microgrid_self_sufficiency,
        c.unserved_energy_wh,
        c.packet_blocking_rate,
        c.transfer_volume_wh,
        c.fairness_jain,
        c.network_cost_proxy
    )
}

pub fn render_summary(result: &RunResult) -> String {
    let mut out = String::new();
    writeln!(out, "{}", one_line_summary(result)).unwrap();
    writeln!(out).unwrap();
    for mg in &result.microgrids {
        let m = &mg.metrics;
        writeln!(
            out,
            "microgrid {}: self_sufficiency={:.6} consumption_wh={} imports_wh={} \
             exports_wh={} unserved_wh={} blocking_rate={:.6} fairness={:.6}",
            m.microgrid_id,
            m.self_sufficiency,
            m.consumption_wh,
            m.imports_wh,
            m.exports_wh,
            m.unserved_energy_wh,
            m.packet_blocking_rate,
            m.fairness_jain
        )
        .unwrap();
    }
    writeln!(out).unwrap();
    writeln!(out, "reciprocity balances (sent-wh terms):").unwrap();
    for (id, balance) in &result.reciprocity {
        writeln!(out, "  {id}: {balance}").unwrap();
    }
    out
}

/// Writes the full bundle into `out_dir`, creating it if needed.
/// Returns the files written, for cleanup on a later failure.
pub fn write_report_bundle(result: &RunResult, out_dir: &Path) -> io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for (name, content) in [
        (RUN_JSON, render_run_json(result)),
        (METRICS_CSV, render_metrics_csv(result)),
        (LEDGER_CSV, render_ledger_csv(result)),
        (TRANSFERS_CSV, render_transfers_csv(result)),
        (SUMMARY_TXT, render_summary(result)),
    ] {
        let path = out_dir.join(name);
        std::fs::write(&path, content)?;
        written.push(path);
    }
    Ok(written)
}
