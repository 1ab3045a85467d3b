//! Golden-file tests pinning the output schemas byte-for-byte.
//!
//! If a schema change is intentional, refresh the expected files with
//! `UPDATE_GOLDEN=1 cargo test --test golden` and review the diff.

use std::path::{Path, PathBuf};

use packetgrid_core::engine::{run, RunOptions};
use packetgrid_core::report::{
    render_ledger_csv, render_metrics_csv, render_run_json, render_summary,
    render_transfers_csv,
};
use packetgrid_core::scenario::{load_scenario_file, resolve_scenario, validate_scenario};

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn check(name: &str, actual: &str) {
    let path = golden_dir().join("expected").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("missing golden file {}: {e}", path.display()));
    assert_eq!(
        expected, actual,
        "{name} drifted from its golden copy; if intentional, refresh with UPDATE_GOLDEN=1"
    );
}

#[test]
fn report_schemas_are_stable() {
    let fixtures = golden_dir().join("fixtures");
    let file = load_scenario_file(&fixtures.join("scenario.json")).unwrap();
    assert!(validate_scenario(&file, &fixtures).is_empty());
    let scenario = resolve_scenario(&file, &fixtures).unwrap();
    let result = run(&scenario, &RunOptions::default()).unwrap();

    check("run.json", &render_run_json(&result));
    check("metrics.csv", &render_metrics_csv(&result));
    check("ledger.csv", &render_ledger_csv(&result));
    check("transfers.csv", &render_transfers_csv(&result));
    check("summary.txt", &render_summary(&result));
}
