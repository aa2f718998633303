//! Readers and writers for every file the toolkit consumes or produces.
//!
//! * flight logs: CSV `timestamp_s,lat_deg,lon_deg,alt_m,yaw_deg,pitch_deg,roll_deg,rsrp_dbm`,
//!   optionally preceded by `# alt_offset_m=<m>` to shift logged altitudes;
//! * station configuration: JSON;
//! * pattern grids: CSV with `#` metadata lines;
//! * residuals: CSV, one row per evaluated sample;
//! * reports: JSON.
//!
//! Floats are written with Rust's shortest round-trip formatting, so
//! reading a written file reproduces the in-memory values bit for bit.
//! Every file is written to a temporary sibling and renamed into place.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::ReportFile;
use crate::geometry::{wrap_deg, Attitude, GeodeticPosition};
use crate::link_budget::{GainSource, LinkBudgetParams, PowerPrediction};
use crate::pattern::PatternGrid;

pub const FLIGHT_LOG_HEADER: &str =
    "timestamp_s,lat_deg,lon_deg,alt_m,yaw_deg,pitch_deg,roll_deg,rsrp_dbm";
pub const PATTERN_HEADER: &str = "az_deg,el_deg,gain_db,count,variance_db2";
pub const RESIDUALS_HEADER: &str =
    "timestamp_s,d3d_m,phi_u_deg,theta_u_deg,rsrp_meas_dbm,rsrp_pred_dbm,abs_err_db,predictor";
pub const PREDICTIONS_HEADER: &str =
    "timestamp_s,tx_power_dbm,fspl_db,gain_applied_db,rsrp_pred_dbm,gain_source";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        column: usize,
        message: String,
    },
    #[error("{path}: missing or malformed header, expected `{expected}`")]
    MissingHeader { path: PathBuf, expected: String },
    #[error("{path}: file is empty")]
    EmptyFile { path: PathBuf },
    #[error("{path}: missing field `{name}`")]
    MissingField { path: PathBuf, name: String },
    #[error("{path}: value of `{name}` out of range: {detail}")]
    ValueOutOfRange {
        path: PathBuf,
        name: String,
        detail: String,
    },
    #[error("{path}: grid shape mismatch: {detail}")]
    GridShapeMismatch { path: PathBuf, detail: String },
    #[error("{path}:{line}: duplicate cell az={az} el={el}")]
    DuplicateCell {
        path: PathBuf,
        line: u64,
        az: f64,
        el: f64,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `contents` to `path` through a temporary file in the same
/// directory followed by a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), DataError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(path))?;
    tmp.write_all(contents).map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| DataError::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

fn read_text(path: &Path) -> Result<String, DataError> {
    fs::read_to_string(path).map_err(io_err(path))
}

/// `# key=value` metadata lines anywhere in a CSV text.
fn metadata_lines(text: &str) -> impl Iterator<Item = (u64, &str, &str)> {
    text.lines().enumerate().filter_map(|(n, line)| {
        let body = line.strip_prefix('#')?.trim();
        let (k, v) = body.split_once('=')?;
        Some((n as u64 + 1, k.trim(), v.trim()))
    })
}

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

// ---------------------------------------------------------------------------
// Ground station

/// A ground-station antenna and its link parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundStation {
    pub label: String,
    pub position: GeodeticPosition,
    pub tx_power_dbm: f64,
    pub frequency_hz: f64,
    pub boresight_azimuth_deg: f64,
    pub expected_uav_yaw_deg: f64,
    pub anechoic_gs_pattern: Option<PathBuf>,
    pub anechoic_uav_pattern: Option<PathBuf>,
}

impl GroundStation {
    pub fn link_params(&self) -> LinkBudgetParams {
        LinkBudgetParams {
            tx_power_dbm: self.tx_power_dbm,
            frequency_hz: self.frequency_hz,
        }
    }
}

/// On-disk form of [`GroundStation`]. Only position, power and frequency
/// are required; angles default to 0 and the label to `station`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationConfigFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub latitude_deg: Option<f64>,
    pub longitude_deg: Option<f64>,
    pub altitude_m: Option<f64>,
    pub tx_power_dbm: Option<f64>,
    pub frequency_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boresight_azimuth_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_uav_yaw_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anechoic_gs_pattern: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anechoic_uav_pattern: Option<String>,
}

impl StationConfigFile {
    pub fn from_station(s: &GroundStation) -> Self {
        Self {
            label: Some(s.label.clone()),
            latitude_deg: Some(s.position.latitude),
            longitude_deg: Some(s.position.longitude),
            altitude_m: Some(s.position.altitude),
            tx_power_dbm: Some(s.tx_power_dbm),
            frequency_hz: Some(s.frequency_hz),
            boresight_azimuth_deg: Some(s.boresight_azimuth_deg),
            expected_uav_yaw_deg: Some(s.expected_uav_yaw_deg),
            anechoic_gs_pattern: s
                .anechoic_gs_pattern
                .as_ref()
                .map(|p| p.display().to_string()),
            anechoic_uav_pattern: s
                .anechoic_uav_pattern
                .as_ref()
                .map(|p| p.display().to_string()),
        }
    }

    /// Validates the fields; relative pattern paths are resolved against
    /// `base_dir`.
    pub fn resolve(&self, path: &Path, base_dir: &Path) -> Result<GroundStation, DataError> {
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| DataError::MissingField {
                path: path.to_path_buf(),
                name: name.to_string(),
            })
        };
        let range = |name: &str, detail: String| DataError::ValueOutOfRange {
            path: path.to_path_buf(),
            name: name.to_string(),
            detail,
        };

        let lat = need(self.latitude_deg, "latitude_deg")?;
        let lon = need(self.longitude_deg, "longitude_deg")?;
        let alt = need(self.altitude_m, "altitude_m")?;
        let tx = need(self.tx_power_dbm, "tx_power_dbm")?;
        let freq = need(self.frequency_hz, "frequency_hz")?;

        if !(-90.0..=90.0).contains(&lat) {
            return Err(range("latitude_deg", format!("{lat} not in [-90, 90]")));
        }
        if !(-180.0..180.0).contains(&lon) {
            return Err(range("longitude_deg", format!("{lon} not in [-180, 180)")));
        }
        if !alt.is_finite() {
            return Err(range("altitude_m", format!("{alt} is not finite")));
        }
        if !tx.is_finite() {
            return Err(range("tx_power_dbm", format!("{tx} is not finite")));
        }
        if !(freq > 0.0 && freq.is_finite()) {
            return Err(range("frequency_hz", format!("{freq} must be > 0")));
        }
        let boresight = self.boresight_azimuth_deg.unwrap_or(0.0);
        if !(0.0..360.0).contains(&boresight) {
            return Err(range(
                "boresight_azimuth_deg",
                format!("{boresight} not in [0, 360)"),
            ));
        }
        let yaw = self.expected_uav_yaw_deg.unwrap_or(0.0);
        if !(0.0..360.0).contains(&yaw) {
            return Err(range(
                "expected_uav_yaw_deg",
                format!("{yaw} not in [0, 360)"),
            ));
        }
        let resolve = |p: &Option<String>| p.as_ref().map(|p| base_dir.join(p));
        Ok(GroundStation {
            label: self.label.clone().unwrap_or_else(|| "station".to_string()),
            position: GeodeticPosition {
                latitude: lat,
                longitude: lon,
                altitude: alt,
            },
            tx_power_dbm: tx,
            frequency_hz: freq,
            boresight_azimuth_deg: boresight,
            expected_uav_yaw_deg: yaw,
            anechoic_gs_pattern: resolve(&self.anechoic_gs_pattern),
            anechoic_uav_pattern: resolve(&self.anechoic_uav_pattern),
        })
    }
}

pub fn read_station_config(path: &Path) -> Result<GroundStation, DataError> {
    let text = read_text(path)?;
    let file: StationConfigFile =
        serde_json::from_str(&text).map_err(|source| DataError::Json {
            path: path.to_path_buf(),
            source,
        })?;
    let base = path.parent().unwrap_or(Path::new("."));
    file.resolve(path, base)
}

pub fn write_station_config(station: &GroundStation, path: &Path) -> Result<(), DataError> {
    let mut s = serde_json::to_string_pretty(&StationConfigFile::from_station(station)).map_err(
        |source| DataError::Json {
            path: path.to_path_buf(),
            source,
        },
    )?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

// ---------------------------------------------------------------------------
// Flight logs

/// One position-tagged RSRP measurement with the UAV attitude at that time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlightSample {
    pub timestamp_s: f64,
    pub position: GeodeticPosition,
    pub attitude: Attitude,
    pub rsrp_dbm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowRejection {
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FlightLog {
    pub samples: Vec<FlightSample>,
    pub rejected: Vec<RowRejection>,
    /// Non-fatal findings such as timestamps running backwards.
    pub warnings: Vec<String>,
    pub alt_offset_m: f64,
}

const FLIGHT_COLUMNS: [&str; 8] = [
    "timestamp_s",
    "lat_deg",
    "lon_deg",
    "alt_m",
    "yaw_deg",
    "pitch_deg",
    "roll_deg",
    "rsrp_dbm",
];

/// Parses a flight log. Malformed rows are collected in
/// [`FlightLog::rejected`] with their line numbers; only a missing header or
/// an empty file fail the whole read.
///
/// Yaw is wrapped into `[0, 360)` and roll into `[-180, 180)`; pitch outside
/// `[-90, 90]` rejects the row.
pub fn read_flight_log(path: &Path) -> Result<FlightLog, DataError> {
    let text = read_text(path)?;
    parse_flight_log(&text, path)
}

pub fn parse_flight_log(text: &str, path: &Path) -> Result<FlightLog, DataError> {
    if text
        .lines()
        .all(|l| l.trim().is_empty() || l.trim_start().starts_with('#'))
    {
        return Err(DataError::EmptyFile {
            path: path.to_path_buf(),
        });
    }
    let mut log = FlightLog::default();
    for (line, key, value) in metadata_lines(text) {
        if key == "alt_offset_m" {
            log.alt_offset_m = value
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| DataError::Parse {
                    path: path.to_path_buf(),
                    line,
                    column: 1,
                    message: format!("invalid alt_offset_m `{value}`"),
                })?;
        }
    }

    let mut rdr = csv_reader(text);
    let missing_header = || DataError::MissingHeader {
        path: path.to_path_buf(),
        expected: FLIGHT_LOG_HEADER.to_string(),
    };
    let headers = rdr.headers().map_err(|_| missing_header())?.clone();
    let mut cols = [0usize; 8];
    for (slot, name) in cols.iter_mut().zip(FLIGHT_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(missing_header)?;
    }

    let mut last_ts: Option<f64> = None;
    for rec in rdr.records() {
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                log.rejected.push(RowRejection {
                    line,
                    reason: format!("unreadable row: {e}"),
                });
                continue;
            }
        };
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        match parse_flight_row(&rec, &cols, log.alt_offset_m) {
            Ok(sample) => {
                if let Some(prev) = last_ts {
                    if sample.timestamp_s < prev {
                        log.warnings.push(format!(
                            "line {line}: timestamp {} precedes previous {prev}",
                            sample.timestamp_s
                        ));
                    }
                }
                last_ts = Some(sample.timestamp_s);
                log.samples.push(sample);
            }
            Err(reason) => log.rejected.push(RowRejection { line, reason }),
        }
    }
    Ok(log)
}

fn parse_flight_row(
    rec: &csv::StringRecord,
    cols: &[usize; 8],
    alt_offset: f64,
) -> Result<FlightSample, String> {
    let mut v = [0.0f64; 8];
    for (k, (&c, name)) in cols.iter().zip(FLIGHT_COLUMNS).enumerate() {
        let raw = rec
            .get(c)
            .ok_or_else(|| format!("missing field {name} (column {})", c + 1))?;
        let x: f64 = raw
            .parse()
            .map_err(|_| format!("{name} (column {}): cannot parse `{raw}`", c + 1))?;
        if !x.is_finite() {
            return Err(format!("{name} (column {}): non-finite value", c + 1));
        }
        v[k] = x;
    }
    let [ts, lat, lon, alt, yaw, pitch, roll, rsrp] = v;
    let position = GeodeticPosition {
        latitude: lat,
        longitude: lon,
        altitude: alt + alt_offset,
    };
    position
        .validate()
        .map_err(|e| format!("range violation: {e}"))?;
    if !(-90.0..=90.0).contains(&pitch) {
        return Err(format!("range violation: pitch {pitch} outside [-90, 90]"));
    }
    let roll = if (-180.0..180.0).contains(&roll) {
        roll
    } else {
        wrap_deg(roll + 180.0) - 180.0
    };
    let attitude = Attitude {
        yaw: wrap_deg(yaw),
        pitch,
        roll,
    };
    Ok(FlightSample {
        timestamp_s: ts,
        position,
        attitude,
        rsrp_dbm: rsrp,
    })
}

pub fn format_flight_log(samples: &[FlightSample]) -> String {
    let mut out = String::with_capacity(64 * (samples.len() + 1));
    out.push_str(FLIGHT_LOG_HEADER);
    out.push('\n');
    for s in samples {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            s.timestamp_s,
            s.position.latitude,
            s.position.longitude,
            s.position.altitude,
            s.attitude.yaw,
            s.attitude.pitch,
            s.attitude.roll,
            s.rsrp_dbm
        );
    }
    out
}

pub fn write_flight_log(samples: &[FlightSample], path: &Path) -> Result<(), DataError> {
    write_atomic(path, format_flight_log(samples).as_bytes())
}

// ---------------------------------------------------------------------------
// Pattern grids

fn sanitize_meta(s: &str) -> String {
    s.replace(['\n', '\r'], " ")
}

pub fn format_pattern(grid: &PatternGrid) -> String {
    let mut out = String::new();
    let freq = grid
        .meta
        .frequency_hz
        .map(|f| f.to_string())
        .unwrap_or_default();
    let _ = writeln!(out, "# frequency_hz={freq}");
    let _ = writeln!(out, "# az_bin_deg={}", grid.az_bin_deg());
    let _ = writeln!(out, "# el_bin_deg={}", grid.el_bin_deg());
    let _ = writeln!(out, "# label={}", sanitize_meta(&grid.meta.label));
    for (k, v) in &grid.meta.params {
        let _ = writeln!(out, "# {}={}", sanitize_meta(k), sanitize_meta(v));
    }
    out.push_str(PATTERN_HEADER);
    out.push('\n');
    for i in 0..grid.n_az() {
        for j in 0..grid.n_el() {
            let gain = grid.gain(i, j).map(|g| g.to_string()).unwrap_or_default();
            let var = grid
                .variance(i, j)
                .map(|v| v.to_string())
                .unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                grid.az_center(i),
                grid.el_center(j),
                gain,
                grid.count(i, j),
                var
            );
        }
    }
    out
}

pub fn write_pattern(grid: &PatternGrid, path: &Path) -> Result<(), DataError> {
    write_atomic(path, format_pattern(grid).as_bytes())
}

pub fn read_pattern(path: &Path) -> Result<PatternGrid, DataError> {
    let text = read_text(path)?;
    parse_pattern(&text, path)
}

/// Parses a pattern file. Every bin must appear exactly once.
pub fn parse_pattern(text: &str, path: &Path) -> Result<PatternGrid, DataError> {
    let parse_err = |line: u64, column: usize, message: String| DataError::Parse {
        path: path.to_path_buf(),
        line,
        column,
        message,
    };
    if text.trim().is_empty() {
        return Err(DataError::EmptyFile {
            path: path.to_path_buf(),
        });
    }

    let mut az_bin = None;
    let mut el_bin = None;
    let mut frequency_hz = None;
    let mut label = String::new();
    let mut params = BTreeMap::new();
    for (line, key, value) in metadata_lines(text) {
        let num = |v: &str| {
            v.parse::<f64>()
                .map_err(|_| parse_err(line, 1, format!("invalid {key} `{v}`")))
        };
        match key {
            "az_bin_deg" => az_bin = Some(num(value)?),
            "el_bin_deg" => el_bin = Some(num(value)?),
            "frequency_hz" if value.is_empty() => frequency_hz = None,
            "frequency_hz" => frequency_hz = Some(num(value)?),
            "label" => label = value.to_string(),
            _ => {
                params.insert(key.to_string(), value.to_string());
            }
        }
    }
    let inferred = infer_bin_widths(text);
    let az_bin = az_bin
        .or(inferred.map(|w| w.0))
        .ok_or_else(|| DataError::MissingField {
            path: path.to_path_buf(),
            name: "az_bin_deg".into(),
        })?;
    let el_bin = el_bin
        .or(inferred.map(|w| w.1))
        .ok_or_else(|| DataError::MissingField {
            path: path.to_path_buf(),
            name: "el_bin_deg".into(),
        })?;
    let mut grid =
        PatternGrid::empty(az_bin, el_bin).map_err(|e| DataError::GridShapeMismatch {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
    grid.meta.frequency_hz = frequency_hz;
    grid.meta.label = label;
    grid.meta.params = params;

    let mut rdr = csv_reader(text);
    let headers = rdr.headers().map_err(|_| DataError::MissingHeader {
        path: path.to_path_buf(),
        expected: PATTERN_HEADER.into(),
    })?;
    if headers.iter().collect::<Vec<_>>().join(",") != PATTERN_HEADER {
        return Err(DataError::MissingHeader {
            path: path.to_path_buf(),
            expected: PATTERN_HEADER.into(),
        });
    }

    let mut seen = HashSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(line, 1, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != 5 {
            return Err(parse_err(
                line,
                1,
                format!("expected 5 fields, got {}", rec.len()),
            ));
        }
        let float = |c: usize| -> Result<Option<f64>, DataError> {
            let raw = &rec[c];
            if raw.is_empty() {
                return Ok(None);
            }
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(Some(v)),
                _ => Err(parse_err(line, c + 1, format!("invalid number `{raw}`"))),
            }
        };
        let az = float(0)?.ok_or_else(|| parse_err(line, 1, "empty az_deg".into()))?;
        let el = float(1)?.ok_or_else(|| parse_err(line, 2, "empty el_deg".into()))?;
        let gain = float(2)?;
        let count: u64 = rec[3]
            .parse()
            .map_err(|_| parse_err(line, 4, format!("invalid count `{}`", &rec[3])))?;
        let variance = float(4)?;

        let (i, j) = locate_cell(&grid, az, el).ok_or_else(|| DataError::GridShapeMismatch {
            path: path.to_path_buf(),
            detail: format!("line {line}: az={az} el={el} is not a bin center"),
        })?;
        if !seen.insert((i, j)) {
            return Err(DataError::DuplicateCell {
                path: path.to_path_buf(),
                line,
                az,
                el,
            });
        }
        grid.set_cell(i, j, gain, count, variance);
    }
    if seen.len() != grid.len() {
        return Err(DataError::GridShapeMismatch {
            path: path.to_path_buf(),
            detail: format!(
                "{} of {} cells present ({} x {} grid)",
                seen.len(),
                grid.len(),
                grid.n_az(),
                grid.n_el()
            ),
        });
    }
    Ok(grid)
}

/// Bin widths implied by the lowest cell centers, for files written
/// without the width metadata.
fn infer_bin_widths(text: &str) -> Option<(f64, f64)> {
    let mut rdr = csv_reader(text);
    let (mut az_min, mut el_min) = (f64::INFINITY, f64::INFINITY);
    for rec in rdr.records() {
        let rec = rec.ok()?;
        let az: f64 = rec.get(0)?.parse().ok()?;
        let el: f64 = rec.get(1)?.parse().ok()?;
        az_min = az_min.min(az);
        el_min = el_min.min(el);
    }
    (az_min.is_finite() && el_min.is_finite()).then_some((2.0 * az_min, 2.0 * (el_min + 90.0)))
}

fn locate_cell(grid: &PatternGrid, az: f64, el: f64) -> Option<(usize, usize)> {
    let i = (az / grid.az_bin_deg() - 0.5).round();
    let j = ((el + 90.0) / grid.el_bin_deg() - 0.5).round();
    if i < 0.0 || j < 0.0 || i >= grid.n_az() as f64 || j >= grid.n_el() as f64 {
        return None;
    }
    let (i, j) = (i as usize, j as usize);
    let ok = (grid.az_center(i) - az).abs() < 1e-9 && (grid.el_center(j) - el).abs() < 1e-9;
    ok.then_some((i, j))
}

/// Loads an isolated-antenna pattern. The file must define every cell;
/// counts are set to 1 and variances dropped.
pub fn load_anechoic(path: &Path) -> Result<PatternGrid, DataError> {
    let mut grid = read_pattern(path)?;
    let missing = grid.missing_count();
    if missing > 0 {
        return Err(DataError::GridShapeMismatch {
            path: path.to_path_buf(),
            detail: format!("{missing} cells have no gain"),
        });
    }
    for i in 0..grid.n_az() {
        for j in 0..grid.n_el() {
            let g = grid.gain(i, j);
            grid.set_cell(i, j, g, 1, None);
        }
    }
    Ok(grid)
}

/// Count and variance per cell, for inspecting estimator confidence.
pub fn format_variance(grid: &PatternGrid) -> String {
    let mut out = String::from("az_deg,el_deg,count,variance_db2\n");
    for i in 0..grid.n_az() {
        for j in 0..grid.n_el() {
            let var = grid
                .variance(i, j)
                .map(|v| v.to_string())
                .unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{}",
                grid.az_center(i),
                grid.el_center(j),
                grid.count(i, j),
                var
            );
        }
    }
    out
}

pub fn write_variance(grid: &PatternGrid, path: &Path) -> Result<(), DataError> {
    write_atomic(path, format_variance(grid).as_bytes())
}

// ---------------------------------------------------------------------------
// Residuals

/// Per-sample prediction error record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub timestamp_s: f64,
    pub d3d_m: f64,
    pub phi_u_deg: f64,
    pub theta_u_deg: f64,
    pub rsrp_meas_dbm: f64,
    pub rsrp_pred_dbm: f64,
    pub abs_err_db: f64,
    pub predictor: GainSource,
}

pub fn format_residuals(rows: &[Residual]) -> String {
    let mut out = String::with_capacity(96 * (rows.len() + 1));
    out.push_str(RESIDUALS_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.timestamp_s,
            r.d3d_m,
            r.phi_u_deg,
            r.theta_u_deg,
            r.rsrp_meas_dbm,
            r.rsrp_pred_dbm,
            r.abs_err_db,
            r.predictor
        );
    }
    out
}

pub fn write_residuals(rows: &[Residual], path: &Path) -> Result<(), DataError> {
    write_atomic(path, format_residuals(rows).as_bytes())
}

pub fn read_residuals(path: &Path) -> Result<Vec<Residual>, DataError> {
    let text = read_text(path)?;
    let mut rdr = csv_reader(&text);
    let headers = rdr.headers().map_err(|_| DataError::MissingHeader {
        path: path.to_path_buf(),
        expected: RESIDUALS_HEADER.into(),
    })?;
    if headers.iter().collect::<Vec<_>>().join(",") != RESIDUALS_HEADER {
        return Err(DataError::MissingHeader {
            path: path.to_path_buf(),
            expected: RESIDUALS_HEADER.into(),
        });
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| DataError::Parse {
            path: path.to_path_buf(),
            line: e.position().map(|p| p.line()).unwrap_or(0),
            column: 1,
            message: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let perr = |column: usize, message: String| DataError::Parse {
            path: path.to_path_buf(),
            line,
            column,
            message,
        };
        if rec.len() != 8 {
            return Err(perr(1, format!("expected 8 fields, got {}", rec.len())));
        }
        let mut v = [0.0; 7];
        for (c, slot) in v.iter_mut().enumerate() {
            *slot = rec[c]
                .parse()
                .map_err(|_| perr(c + 1, format!("invalid number `{}`", &rec[c])))?;
        }
        let predictor = GainSource::parse(&rec[7])
            .ok_or_else(|| perr(8, format!("unknown predictor `{}`", &rec[7])))?;
        rows.push(Residual {
            timestamp_s: v[0],
            d3d_m: v[1],
            phi_u_deg: v[2],
            theta_u_deg: v[3],
            rsrp_meas_dbm: v[4],
            rsrp_pred_dbm: v[5],
            abs_err_db: v[6],
            predictor,
        });
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Predictions

/// A prediction with the link-budget terms it was assembled from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub timestamp_s: f64,
    pub tx_power_dbm: f64,
    pub fspl_db: f64,
    pub gain_applied_db: f64,
    pub rsrp_pred_dbm: f64,
    pub gain_source: GainSource,
}

impl PredictionRow {
    pub fn new(timestamp_s: f64, p: &PowerPrediction) -> Self {
        Self {
            timestamp_s,
            tx_power_dbm: p.tx_power_dbm,
            fspl_db: p.fspl_db,
            gain_applied_db: p.gain_applied_db,
            rsrp_pred_dbm: p.rsrp_dbm,
            gain_source: p.gain_source,
        }
    }
}

pub fn format_predictions(rows: &[PredictionRow]) -> String {
    let mut out = String::with_capacity(80 * (rows.len() + 1));
    out.push_str(PREDICTIONS_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.timestamp_s,
            r.tx_power_dbm,
            r.fspl_db,
            r.gain_applied_db,
            r.rsrp_pred_dbm,
            r.gain_source
        );
    }
    out
}

pub fn write_predictions(rows: &[PredictionRow], path: &Path) -> Result<(), DataError> {
    write_atomic(path, format_predictions(rows).as_bytes())
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRow>, DataError> {
    let text = read_text(path)?;
    let mut rdr = csv_reader(&text);
    let header_ok = rdr
        .headers()
        .map(|h| h.iter().collect::<Vec<_>>().join(",") == PREDICTIONS_HEADER)
        .unwrap_or(false);
    if !header_ok {
        return Err(DataError::MissingHeader {
            path: path.to_path_buf(),
            expected: PREDICTIONS_HEADER.into(),
        });
    }
    rdr.deserialize()
        .map(|row| {
            row.map_err(|e| DataError::Parse {
                path: path.to_path_buf(),
                line: e.position().map(|p| p.line()).unwrap_or(0),
                column: 1,
                message: e.to_string(),
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Reports

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), DataError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|source| DataError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, DataError> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|source| DataError::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_report(report: &ReportFile, path: &Path) -> Result<(), DataError> {
    write_json(report, path)
}

pub fn read_report(path: &Path) -> Result<ReportFile, DataError> {
    read_json(path)
}
