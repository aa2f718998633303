//! End-to-end learning of a combined pattern from flight logs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::{FlightSample, GroundStation};
use crate::geometry::{
    validate_fixed_orientation, GeometryError, RejectedSample, DEFAULT_ORIENTATION_TOL_DEG,
};
use crate::pattern::{
    accumulate, apply_min_count, complete_grid, extract_observations, Completion, PatternError,
    PatternGrid, DEFAULT_AZ_BIN_DEG, DEFAULT_COMPLETION_TOL_DB, DEFAULT_EL_BIN_DEG, DEFAULT_K_MIN,
    DEFAULT_MAX_ITERS,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnOptions {
    pub az_bin_deg: f64,
    pub el_bin_deg: f64,
    pub k_min: u64,
    pub tol_db: f64,
    pub max_iters: usize,
    pub orientation_tol_deg: f64,
}

impl Default for LearnOptions {
    fn default() -> Self {
        Self {
            az_bin_deg: DEFAULT_AZ_BIN_DEG,
            el_bin_deg: DEFAULT_EL_BIN_DEG,
            k_min: DEFAULT_K_MIN,
            tol_db: DEFAULT_COMPLETION_TOL_DB,
            max_iters: DEFAULT_MAX_ITERS,
            orientation_tol_deg: DEFAULT_ORIENTATION_TOL_DEG,
        }
    }
}

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("no samples passed the fixed-orientation check ({rejected} rejected)")]
    NoAcceptedSamples { rejected: usize },
    #[error("no bin reached the minimum count of {k_min}")]
    NoPopulatedBins { k_min: u64 },
    #[error(transparent)]
    Pattern(#[from] PatternError),
}

#[derive(Debug, Clone)]
pub struct LearnOutput {
    /// Per-bin means of every accepted sample, before the count filter.
    pub observed: PatternGrid,
    /// `observed` with sparse bins removed; the anchors for completion.
    pub filtered: PatternGrid,
    pub completion: Completion,
    pub rejected_orientation: Vec<RejectedSample>,
    pub geometry_failures: Vec<(usize, GeometryError)>,
    pub n_observations: usize,
}

/// Learns a completed combined pattern from one or more flights that share
/// a station and UAV orientation.
pub fn learn(
    flights: &[Vec<FlightSample>],
    station: &GroundStation,
    opts: &LearnOptions,
) -> Result<LearnOutput, LearnError> {
    let all: Vec<FlightSample> = flights.iter().flatten().copied().collect();
    let (accepted, rejected) =
        validate_fixed_orientation(&all, station.expected_uav_yaw_deg, opts.orientation_tol_deg);
    if accepted.is_empty() {
        return Err(LearnError::NoAcceptedSamples {
            rejected: rejected.len(),
        });
    }
    let (obs, failures) = extract_observations(&accepted, station, opts.orientation_tol_deg);
    let mut observed = accumulate(&obs, opts.az_bin_deg, opts.el_bin_deg)?;
    observed.meta.frequency_hz = Some(station.frequency_hz);
    observed.meta.label = station.label.clone();
    observed
        .meta
        .params
        .insert("samples".into(), obs.len().to_string());

    let mut filtered = apply_min_count(&observed, opts.k_min);
    filtered
        .meta
        .params
        .insert("k_min".into(), opts.k_min.to_string());
    if filtered.missing_count() == filtered.len() {
        return Err(LearnError::NoPopulatedBins { k_min: opts.k_min });
    }
    let mut completion = complete_grid(&filtered, opts.tol_db, opts.max_iters)?;
    let params = &mut completion.grid.meta.params;
    params.insert("completion_tol_db".into(), opts.tol_db.to_string());
    params.insert(
        "completion_iterations".into(),
        completion.iterations.to_string(),
    );
    params.insert(
        "completion_converged".into(),
        completion.converged.to_string(),
    );

    Ok(LearnOutput {
        observed,
        filtered,
        completion,
        rejected_orientation: rejected,
        geometry_failures: failures,
        n_observations: obs.len(),
    })
}
