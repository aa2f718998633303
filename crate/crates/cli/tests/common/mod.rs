//! Fixtures and process helpers shared by the black-box test targets.
#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

pub const BIN: &str = env!("CARGO_BIN_EXE_skypattern");

pub const TX_POWER_DBM: f64 = 20.0;
pub const FREQUENCY_HZ: f64 = 3.32e9;

pub fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .env_remove("SKYPATTERN_LOG")
        .output()
        .expect("spawn skypattern")
}

/// Runs and panics with stderr on a non-zero exit.
pub fn run_ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "skypattern {:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// The JSON object on the last stderr line of a failed run.
pub fn error_json(out: &Output) -> Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().unwrap_or("");
    serde_json::from_str(line).unwrap_or_else(|_| panic!("not a JSON error line: {line}"))
}

pub fn write_json(path: &Path, v: &Value) {
    if let Some(p) = path.parent() {
        std::fs::create_dir_all(p).unwrap();
    }
    std::fs::write(path, serde_json::to_string_pretty(v).unwrap()).unwrap();
}

pub fn station_json(extra: Value) -> Value {
    let mut s = json!({
        "label": "ugv",
        "latitude_deg": 35.7275,
        "longitude_deg": -78.6960,
        "altitude_m": 12.0,
        "tx_power_dbm": TX_POWER_DBM,
        "frequency_hz": FREQUENCY_HZ
    });
    if let (Some(base), Some(more)) = (s.as_object_mut(), extra.as_object()) {
        for (k, v) in more {
            base.insert(k.clone(), v.clone());
        }
    }
    s
}

pub fn orbit(radius_m: f64, altitude_m: f64, laps: f64, rate_hz: f64) -> Value {
    json!({
        "kind": "orbit",
        "radius_m": radius_m,
        "laps": laps,
        "altitude_m": altitude_m,
        "speed_mps": 5.0,
        "sample_rate_hz": rate_hz
    })
}

pub fn lawnmower(size_m: f64, spacing_m: f64, altitude_m: f64, rate_hz: f64) -> Value {
    json!({
        "kind": "lawnmower",
        "width_m": size_m,
        "height_m": size_m,
        "spacing_m": spacing_m,
        "altitude_m": altitude_m,
        "speed_mps": 5.0,
        "sample_rate_hz": rate_hz
    })
}

pub fn parametric(g0_db: f64, g1_db: f64, exponent: f64) -> Value {
    json!({"kind": "parametric", "g0_db": g0_db, "g1_db": g1_db, "exponent": exponent})
}

/// Parses a headered CSV of numbers and words into rows of strings.
pub fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

pub fn f(s: &str) -> f64 {
    s.parse().unwrap_or_else(|_| panic!("not a number: {s}"))
}
