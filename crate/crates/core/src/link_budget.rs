//! Free-space path loss and the two received-power predictors: the
//! anechoic two-pattern baseline and the learned combined pattern.
//!
//! Everything here is in dB; there is no linear-power arithmetic.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{wrap_deg, LinkAngles};
use crate::pattern::{PatternError, PatternGrid};

/// Speed of light in vacuum, m/s (exact SI value).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinkBudgetError {
    #[error("{name} must be positive, got {value}")]
    NonPositiveInput { name: &'static str, value: f64 },
    #[error("combined pattern has {missing} missing cells; run completion first")]
    IncompleteGrid { missing: usize },
    #[error(transparent)]
    Pattern(#[from] PatternError),
}

/// Free-space path loss in dB for a 3D distance in meters and a carrier
/// frequency in Hz.
pub fn fspl_db(d3d: f64, frequency_hz: f64) -> Result<f64, LinkBudgetError> {
    if d3d.is_nan() || d3d <= 0.0 {
        return Err(LinkBudgetError::NonPositiveInput {
            name: "d3d",
            value: d3d,
        });
    }
    if frequency_hz.is_nan() || frequency_hz <= 0.0 {
        return Err(LinkBudgetError::NonPositiveInput {
            name: "frequency",
            value: frequency_hz,
        });
    }
    Ok(20.0 * d3d.log10()
        + 20.0 * frequency_hz.log10()
        + 20.0 * (4.0 * PI / SPEED_OF_LIGHT).log10())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkBudgetParams {
    pub tx_power_dbm: f64,
    pub frequency_hz: f64,
}

impl LinkBudgetParams {
    pub fn new(tx_power_dbm: f64, frequency_hz: f64) -> Result<Self, LinkBudgetError> {
        if !frequency_hz.is_finite() || frequency_hz <= 0.0 {
            return Err(LinkBudgetError::NonPositiveInput {
                name: "frequency",
                value: frequency_hz,
            });
        }
        Ok(Self {
            tx_power_dbm,
            frequency_hz,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GainSource {
    CombinedLearned,
    AnechoicPair,
}

impl GainSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::CombinedLearned => "combined-learned",
            Self::AnechoicPair => "anechoic-pair",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "combined-learned" => Some(Self::CombinedLearned),
            "anechoic-pair" => Some(Self::AnechoicPair),
            _ => None,
        }
    }
}

impl std::fmt::Display for GainSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A received-power prediction and the terms it was built from.
///
/// `rsrp_dbm` is always computed as `(tx_power_dbm - fspl_db) + gain_applied_db`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerPrediction {
    pub rsrp_dbm: f64,
    pub tx_power_dbm: f64,
    pub fspl_db: f64,
    pub gain_applied_db: f64,
    pub gain_source: GainSource,
}

impl PowerPrediction {
    fn assemble(tx_power_dbm: f64, fspl_db: f64, gain: f64, source: GainSource) -> Self {
        Self {
            rsrp_dbm: tx_power_dbm - fspl_db + gain,
            tx_power_dbm,
            fspl_db,
            gain_applied_db: gain,
            gain_source: source,
        }
    }

    /// `rsrp - (tx - fspl + gain)`, which is exactly zero for every value
    /// produced by the predictors.
    pub fn identity_residual(&self) -> f64 {
        self.rsrp_dbm - (self.tx_power_dbm - self.fspl_db + self.gain_applied_db)
    }
}

/// Two-pattern prediction from separately measured UAV and station
/// antenna patterns. The station pattern is read at the azimuth relative to
/// its boresight.
pub fn predict_baseline(
    angles: &LinkAngles,
    params: &LinkBudgetParams,
    g_uav: &PatternGrid,
    g_gs: &PatternGrid,
    gs_boresight_deg: f64,
) -> Result<PowerPrediction, LinkBudgetError> {
    let fspl = fspl_db(angles.d3d, params.frequency_hz)?;
    let uav = g_uav.interpolate(angles.phi_u, angles.theta_u)?;
    let gs = g_gs.interpolate(wrap_deg(angles.phi_g - gs_boresight_deg), angles.theta_g)?;
    Ok(PowerPrediction::assemble(
        params.tx_power_dbm,
        fspl,
        uav + gs,
        GainSource::AnechoicPair,
    ))
}

/// Prediction from a single combined pattern indexed by UAV-frame angles.
pub fn predict_combined(
    angles: &LinkAngles,
    params: &LinkBudgetParams,
    g_com: &PatternGrid,
) -> Result<PowerPrediction, LinkBudgetError> {
    let missing = g_com.missing_count();
    if missing > 0 {
        return Err(LinkBudgetError::IncompleteGrid { missing });
    }
    let fspl = fspl_db(angles.d3d, params.frequency_hz)?;
    let gain = g_com.interpolate(angles.phi_u, angles.theta_u)?;
    Ok(PowerPrediction::assemble(
        params.tx_power_dbm,
        fspl,
        gain,
        GainSource::CombinedLearned,
    ))
}
