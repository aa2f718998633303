//! Prediction-error evaluation: MAE/RMSE, the empirical CDF of absolute
//! error, and the per-elevation error profile with sample density.

mod plot;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::{DataError, FlightSample, GroundStation, Residual};
use crate::geometry::{link_angles, GeometryError, LinkAngles};
use crate::link_budget::{
    predict_baseline, predict_combined, GainSource, LinkBudgetError, PowerPrediction,
};
use crate::pattern::PatternGrid;

pub use plot::render_plots;

pub const DEFAULT_EVAL_EL_BIN_DEG: f64 = 5.0;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no samples to evaluate")]
    EmptySamples,
    #[error("sample {index}: {source}")]
    Geometry {
        index: usize,
        #[source]
        source: GeometryError,
    },
    #[error("sample {index}: {source}")]
    Prediction {
        index: usize,
        #[source]
        source: LinkBudgetError,
    },
    #[error("reports cover different test sets ({a} vs {b} samples)")]
    MismatchedTestSets { a: usize, b: usize },
    #[error("elevation bin width must be positive, got {0}")]
    InvalidBinWidth(f64),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Which received-power model to evaluate.
#[derive(Debug, Clone, Copy)]
pub enum Predictor<'a> {
    Combined(&'a PatternGrid),
    Baseline {
        uav: &'a PatternGrid,
        gs: &'a PatternGrid,
    },
}

impl Predictor<'_> {
    pub fn source(&self) -> GainSource {
        match self {
            Self::Combined(_) => GainSource::CombinedLearned,
            Self::Baseline { .. } => GainSource::AnechoicPair,
        }
    }
}

/// Link angles and prediction for a single flight sample.
pub fn predict_sample(
    sample: &FlightSample,
    station: &GroundStation,
    predictor: &Predictor<'_>,
    orientation_tol_deg: f64,
) -> Result<(LinkAngles, PowerPrediction), EvalError> {
    let angles = link_angles(
        &sample.position,
        &sample.attitude,
        &station.position,
        orientation_tol_deg,
    )
    .map_err(|source| EvalError::Geometry { index: 0, source })?;
    let params = station.link_params();
    let pred = match predictor {
        Predictor::Combined(g) => predict_combined(&angles, &params, g),
        Predictor::Baseline { uav, gs } => {
            predict_baseline(&angles, &params, uav, gs, station.boresight_azimuth_deg)
        }
    }
    .map_err(|source| EvalError::Prediction { index: 0, source })?;
    Ok((angles, pred))
}

/// Predictions and residual records for every sample, in order.
pub fn predict_all(
    samples: &[FlightSample],
    station: &GroundStation,
    predictor: &Predictor<'_>,
    orientation_tol_deg: f64,
) -> Result<(Vec<PowerPrediction>, Vec<Residual>), EvalError> {
    let mut preds = Vec::with_capacity(samples.len());
    let mut rows = Vec::with_capacity(samples.len());
    for (index, s) in samples.iter().enumerate() {
        let (a, p) =
            predict_sample(s, station, predictor, orientation_tol_deg).map_err(|e| match e {
                EvalError::Geometry { source, .. } => EvalError::Geometry { index, source },
                EvalError::Prediction { source, .. } => EvalError::Prediction { index, source },
                other => other,
            })?;
        rows.push(Residual {
            timestamp_s: s.timestamp_s,
            d3d_m: a.d3d,
            phi_u_deg: a.phi_u,
            theta_u_deg: a.theta_u,
            rsrp_meas_dbm: s.rsrp_dbm,
            rsrp_pred_dbm: p.rsrp_dbm,
            abs_err_db: (s.rsrp_dbm - p.rsrp_dbm).abs(),
            predictor: p.gain_source,
        });
        preds.push(p);
    }
    Ok((preds, rows))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub abs_err_db: f64,
    pub cum_prob: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElevationBin {
    pub el_lo_deg: f64,
    pub el_hi_deg: f64,
    pub mae_db: f64,
    /// Fraction of all samples that fall in this bin.
    pub density: f64,
}

/// Evaluation of one predictor on one test set.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub mae: f64,
    pub rmse: f64,
    pub n_samples: usize,
    pub error_cdf: Vec<CdfPoint>,
    pub per_elevation: Vec<ElevationBin>,
    pub residuals: Vec<Residual>,
}

/// The JSON form of an [`EvalReport`] (residuals go to their own CSV).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub mae_db: f64,
    pub rmse_db: f64,
    pub n_samples: usize,
    pub error_cdf: Vec<CdfPoint>,
    pub per_elevation: Vec<ElevationBin>,
}

impl EvalReport {
    pub fn to_file(&self) -> ReportFile {
        ReportFile {
            mae_db: self.mae,
            rmse_db: self.rmse,
            n_samples: self.n_samples,
            error_cdf: self.error_cdf.clone(),
            per_elevation: self.per_elevation.clone(),
        }
    }

    pub fn predictor(&self) -> Option<GainSource> {
        self.residuals.first().map(|r| r.predictor)
    }
}

/// Predicts every test sample and summarizes the errors.
pub fn evaluate(
    samples: &[FlightSample],
    station: &GroundStation,
    predictor: &Predictor<'_>,
    el_bin_deg: f64,
    orientation_tol_deg: f64,
) -> Result<EvalReport, EvalError> {
    if samples.is_empty() {
        return Err(EvalError::EmptySamples);
    }
    let (_, residuals) = predict_all(samples, station, predictor, orientation_tol_deg)?;
    report_from_residuals(residuals, el_bin_deg)
}

/// Builds the report from residual records alone.
pub fn report_from_residuals(
    residuals: Vec<Residual>,
    el_bin_deg: f64,
) -> Result<EvalReport, EvalError> {
    if residuals.is_empty() {
        return Err(EvalError::EmptySamples);
    }
    if !(el_bin_deg > 0.0 && el_bin_deg.is_finite()) {
        return Err(EvalError::InvalidBinWidth(el_bin_deg));
    }
    let n = residuals.len();
    let nf = n as f64;
    let errs: Vec<f64> = residuals.iter().map(|r| r.abs_err_db).collect();
    let mae = errs.iter().sum::<f64>() / nf;
    let rmse = (errs.iter().map(|e| e * e).sum::<f64>() / nf).sqrt();
    let thetas: Vec<f64> = residuals.iter().map(|r| r.theta_u_deg).collect();
    Ok(EvalReport {
        mae,
        rmse,
        n_samples: n,
        error_cdf: empirical_cdf(&errs),
        per_elevation: elevation_profile(&thetas, &errs, el_bin_deg),
        residuals,
    })
}

/// Empirical CDF with one point per distinct value: `cum_prob` is the
/// fraction of samples less than or equal to `abs_err_db`.
pub fn empirical_cdf(values: &[f64]) -> Vec<CdfPoint> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut out: Vec<CdfPoint> = Vec::new();
    for (k, &v) in sorted.iter().enumerate() {
        let p = (k + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.abs_err_db == v => last.cum_prob = p,
            _ => out.push(CdfPoint {
                abs_err_db: v,
                cum_prob: p,
            }),
        }
    }
    out
}

/// Mean absolute error and sample share per elevation bin. Bins start at
/// 0 deg (or lower, to include below-horizon samples) and stop at 90 deg;
/// empty bins are omitted.
pub fn elevation_profile(thetas: &[f64], errs: &[f64], el_bin_deg: f64) -> Vec<ElevationBin> {
    let min_theta = thetas.iter().copied().fold(0.0f64, f64::min);
    let lo = (min_theta / el_bin_deg).floor() * el_bin_deg;
    let n_bins = ((90.0 - lo) / el_bin_deg).ceil().max(1.0) as usize;
    let mut sums = vec![0.0; n_bins];
    let mut counts = vec![0usize; n_bins];
    for (&t, &e) in thetas.iter().zip(errs) {
        let k = (((t - lo) / el_bin_deg).floor().max(0.0) as usize).min(n_bins - 1);
        sums[k] += e;
        counts[k] += 1;
    }
    let n = thetas.len() as f64;
    (0..n_bins)
        .filter(|&k| counts[k] > 0)
        .map(|k| ElevationBin {
            el_lo_deg: lo + k as f64 * el_bin_deg,
            el_hi_deg: (lo + (k + 1) as f64 * el_bin_deg).min(90.0),
            mae_db: sums[k] / counts[k] as f64,
            density: counts[k] as f64 / n,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Winner {
    A,
    B,
    Tie,
}

impl Winner {
    fn of(a: f64, b: f64) -> Self {
        if a < b {
            Self::A
        } else if b < a {
            Self::B
        } else {
            Self::Tie
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElevationDelta {
    pub el_lo_deg: f64,
    pub el_hi_deg: f64,
    pub mae_a_db: Option<f64>,
    pub mae_b_db: Option<f64>,
    pub delta_db: Option<f64>,
    pub winner: Option<Winner>,
}

/// Paired comparison of two reports over the same test set. Deltas are
/// `a - b`; lower error wins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub label_a: String,
    pub label_b: String,
    pub n_samples: usize,
    pub mae_a_db: f64,
    pub mae_b_db: f64,
    pub mae_delta_db: f64,
    pub rmse_a_db: f64,
    pub rmse_b_db: f64,
    pub rmse_delta_db: f64,
    pub mae_winner: Winner,
    pub rmse_winner: Winner,
    pub per_elevation: Vec<ElevationDelta>,
}

pub fn compare(
    a: &EvalReport,
    label_a: &str,
    b: &EvalReport,
    label_b: &str,
) -> Result<Comparison, EvalError> {
    if a.n_samples != b.n_samples {
        return Err(EvalError::MismatchedTestSets {
            a: a.n_samples,
            b: b.n_samples,
        });
    }
    let mut edges: Vec<(f64, f64)> = a
        .per_elevation
        .iter()
        .chain(&b.per_elevation)
        .map(|e| (e.el_lo_deg, e.el_hi_deg))
        .collect();
    edges.sort_by(|x, y| x.0.total_cmp(&y.0));
    edges.dedup();
    let find = |r: &EvalReport, lo: f64| {
        r.per_elevation
            .iter()
            .find(|e| e.el_lo_deg == lo)
            .map(|e| e.mae_db)
    };
    let per_elevation = edges
        .into_iter()
        .map(|(lo, hi)| {
            let (ma, mb) = (find(a, lo), find(b, lo));
            let both = ma.zip(mb);
            ElevationDelta {
                el_lo_deg: lo,
                el_hi_deg: hi,
                mae_a_db: ma,
                mae_b_db: mb,
                delta_db: both.map(|(x, y)| x - y),
                winner: both.map(|(x, y)| Winner::of(x, y)),
            }
        })
        .collect();
    Ok(Comparison {
        label_a: label_a.to_string(),
        label_b: label_b.to_string(),
        n_samples: a.n_samples,
        mae_a_db: a.mae,
        mae_b_db: b.mae,
        mae_delta_db: a.mae - b.mae,
        rmse_a_db: a.rmse,
        rmse_b_db: b.rmse,
        rmse_delta_db: a.rmse - b.rmse,
        mae_winner: Winner::of(a.mae, b.mae),
        rmse_winner: Winner::of(a.rmse, b.rmse),
        per_elevation,
    })
}

impl Comparison {
    /// One-row summary table: `test,train,mae_<b>_db,mae_<a>_db,delta_db,winner`.
    pub fn summary_table(&self, test: &str, train: &str) -> String {
        let winner = match self.mae_winner {
            Winner::A => self.label_a.as_str(),
            Winner::B => self.label_b.as_str(),
            Winner::Tie => "tie",
        };
        format!(
            "test,train,mae_{b}_db,mae_{a}_db,delta_db,winner\n{test},{train},{:.2},{:.2},{:.2},{winner}\n",
            self.mae_b_db,
            self.mae_a_db,
            self.mae_delta_db,
            a = self.label_a,
            b = self.label_b,
        )
    }
}

pub(crate) fn out_path(dir: &Path, prefix: &str, name: &str) -> PathBuf {
    if prefix.is_empty() {
        dir.join(name)
    } else {
        dir.join(format!("{prefix}_{name}"))
    }
}
