//! Angular gain grids: the per-bin mean estimator, minimum-count filtering,
//! and harmonic completion of unobserved bins.
//!
//! A grid covers the full sphere. Azimuth bin `i` spans
//! `[i * w_az, (i + 1) * w_az)`; elevation bin `j` spans
//! `[-90 + j * w_el, -90 + (j + 1) * w_el)` with `+90` assigned to the top
//! bin. Cell values live at bin centers. Storage is azimuth-major.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::{FlightSample, GroundStation};
use crate::geometry::{link_angles, wrap_deg, GeometryError};
use crate::link_budget::fspl_db;

pub const DEFAULT_AZ_BIN_DEG: f64 = 5.0;
pub const DEFAULT_EL_BIN_DEG: f64 = 2.0;
pub const DEFAULT_K_MIN: u64 = 5;
pub const DEFAULT_COMPLETION_TOL_DB: f64 = 1e-6;
pub const DEFAULT_MAX_ITERS: usize = 50_000;

const NODE_SNAP: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PatternError {
    #[error("bin width {width} deg does not evenly divide {span} deg")]
    InvalidBinWidth { width: f64, span: f64 },
    #[error("grid has no known cells to complete from")]
    EmptyGrid,
    #[error("grid has {missing} missing cells; run completion first")]
    IncompleteGrid { missing: usize },
    #[error("no gain available near az={az} el={el}")]
    MissingCell { az: f64, el: f64 },
    #[error("grids have different shapes")]
    ShapeMismatch,
}

fn bin_count(width: f64, span: f64) -> Result<usize, PatternError> {
    let bad = PatternError::InvalidBinWidth { width, span };
    if !(width.is_finite() && width > 0.0 && width <= span) {
        return Err(bad);
    }
    let n = (span / width).round();
    if (n * width - span).abs() > 1e-9 {
        return Err(bad);
    }
    Ok(n as usize)
}

/// Descriptive metadata carried alongside a grid and through its file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GridMeta {
    pub frequency_hz: Option<f64>,
    pub label: String,
    /// Creation parameters (bin widths are stored on the grid itself).
    pub params: BTreeMap<String, String>,
}

/// A regular azimuth x elevation grid of gains in dB.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternGrid {
    az_bin_deg: f64,
    el_bin_deg: f64,
    n_az: usize,
    n_el: usize,
    gains: Vec<Option<f64>>,
    counts: Vec<u64>,
    variances: Vec<Option<f64>>,
    pub meta: GridMeta,
}

impl PatternGrid {
    /// An all-missing grid.
    pub fn empty(az_bin_deg: f64, el_bin_deg: f64) -> Result<Self, PatternError> {
        let n_az = bin_count(az_bin_deg, 360.0)?;
        let n_el = bin_count(el_bin_deg, 180.0)?;
        let n = n_az * n_el;
        Ok(Self {
            az_bin_deg,
            el_bin_deg,
            n_az,
            n_el,
            gains: vec![None; n],
            counts: vec![0; n],
            variances: vec![None; n],
            meta: GridMeta::default(),
        })
    }

    /// A fully populated grid sampled from `gain(az, el)` at bin centers.
    /// Counts are set to the sentinel 1.
    pub fn from_fn(
        az_bin_deg: f64,
        el_bin_deg: f64,
        mut gain: impl FnMut(f64, f64) -> f64,
    ) -> Result<Self, PatternError> {
        let mut g = Self::empty(az_bin_deg, el_bin_deg)?;
        for i in 0..g.n_az {
            for j in 0..g.n_el {
                let v = gain(g.az_center(i), g.el_center(j));
                g.set_cell(i, j, Some(v), 1, None);
            }
        }
        Ok(g)
    }

    pub fn az_bin_deg(&self) -> f64 {
        self.az_bin_deg
    }

    pub fn el_bin_deg(&self) -> f64 {
        self.el_bin_deg
    }

    pub fn n_az(&self) -> usize {
        self.n_az
    }

    pub fn n_el(&self) -> usize {
        self.n_el
    }

    pub fn len(&self) -> usize {
        self.gains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gains.is_empty()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.n_el + j
    }

    pub fn az_center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.az_bin_deg
    }

    pub fn el_center(&self, j: usize) -> f64 {
        -90.0 + (j as f64 + 0.5) * self.el_bin_deg
    }

    /// Bin containing the angle pair (half-open intervals, azimuth wraps,
    /// elevation +90 goes to the top bin).
    pub fn bin_of(&self, phi: f64, theta: f64) -> (usize, usize) {
        let i = ((wrap_deg(phi) / self.az_bin_deg).floor() as usize).min(self.n_az - 1);
        let j = ((theta + 90.0) / self.el_bin_deg).floor().max(0.0) as usize;
        (i, j.min(self.n_el - 1))
    }

    pub fn gain(&self, i: usize, j: usize) -> Option<f64> {
        self.gains[self.index(i, j)]
    }

    pub fn count(&self, i: usize, j: usize) -> u64 {
        self.counts[self.index(i, j)]
    }

    pub fn variance(&self, i: usize, j: usize) -> Option<f64> {
        self.variances[self.index(i, j)]
    }

    pub fn set_cell(
        &mut self,
        i: usize,
        j: usize,
        gain: Option<f64>,
        count: u64,
        variance: Option<f64>,
    ) {
        let k = self.index(i, j);
        self.gains[k] = gain;
        self.counts[k] = count;
        self.variances[k] = variance;
    }

    pub fn gains(&self) -> &[Option<f64>] {
        &self.gains
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn variances(&self) -> &[Option<f64>] {
        &self.variances
    }

    pub fn missing_count(&self) -> usize {
        self.gains.iter().filter(|g| g.is_none()).count()
    }

    pub fn is_complete(&self) -> bool {
        self.missing_count() == 0
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.n_az == other.n_az && self.n_el == other.n_el
    }

    /// Gain at a continuous angle by bilinear interpolation between bin
    /// centers: periodic in azimuth, clamped in elevation. At a bin center
    /// the cell value is returned exactly.
    pub fn interpolate(&self, phi: f64, theta: f64) -> Result<f64, PatternError> {
        let x = wrap_deg(phi) / self.az_bin_deg - 0.5;
        let (i0, t) = split_coord(x);
        let i0 = i0.rem_euclid(self.n_az as i64) as usize;
        let i1 = (i0 + 1) % self.n_az;

        let y = (theta + 90.0) / self.el_bin_deg - 0.5;
        let top = (self.n_el - 1) as f64;
        let (j0, j1, s) = if y <= 0.0 {
            (0, 0, 0.0)
        } else if y >= top {
            (self.n_el - 1, self.n_el - 1, 0.0)
        } else {
            let (j0, s) = split_coord(y);
            let j0 = j0 as usize;
            (j0, (j0 + 1).min(self.n_el - 1), s)
        };

        let corners = [
            (i0, j0, (1.0 - t) * (1.0 - s)),
            (i1, j0, t * (1.0 - s)),
            (i0, j1, (1.0 - t) * s),
            (i1, j1, t * s),
        ];
        let mut acc = 0.0;
        for (i, j, w) in corners {
            if w == 0.0 {
                continue;
            }
            match self.gain(i, j) {
                Some(g) => acc += w * g,
                None => return Err(PatternError::MissingCell { az: phi, el: theta }),
            }
        }
        Ok(acc)
    }

    /// Count-weighted merge of two grids built from disjoint observation
    /// sets over the same bins. Means and counts combine exactly; variances
    /// are pooled.
    pub fn merge_weighted(&self, other: &Self) -> Result<Self, PatternError> {
        if !self.same_shape(other) {
            return Err(PatternError::ShapeMismatch);
        }
        let mut out = self.clone();
        for k in 0..self.len() {
            let (na, nb) = (self.counts[k], other.counts[k]);
            let n = na + nb;
            let (gain, var) = match (self.gains[k], other.gains[k]) {
                (None, None) => (None, None),
                (Some(_), None) => (self.gains[k], self.variances[k]),
                (None, Some(_)) => (other.gains[k], other.variances[k]),
                (Some(ma), Some(mb)) => {
                    let (fa, fb, fnn) = (na as f64, nb as f64, n as f64);
                    let mean = (fa * ma + fb * mb) / fnn;
                    let ssa = self.variances[k].unwrap_or(0.0) * (fa - 1.0).max(0.0);
                    let ssb = other.variances[k].unwrap_or(0.0) * (fb - 1.0).max(0.0);
                    let delta = mb - ma;
                    let ss = ssa + ssb + delta * delta * fa * fb / fnn;
                    (Some(mean), (n >= 2).then(|| ss / (fnn - 1.0)))
                }
            };
            out.gains[k] = gain;
            out.counts[k] = n;
            out.variances[k] = var;
        }
        Ok(out)
    }
}

fn split_coord(x: f64) -> (i64, f64) {
    let mut base = x.floor();
    let mut frac = x - base;
    if frac < NODE_SNAP {
        frac = 0.0;
    } else if 1.0 - frac < NODE_SNAP {
        base += 1.0;
        frac = 0.0;
    }
    (base as i64, frac)
}

/// One gain sample `P_rx - P_tx + FSPL` at a UAV-frame angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainObservation {
    pub phi_u: f64,
    pub theta_u: f64,
    pub gain_sample: f64,
}

/// Converts accepted flight samples to gain observations, one per sample in
/// input order. Samples whose geometry fails are reported by index and
/// skipped.
pub fn extract_observations(
    samples: &[FlightSample],
    station: &GroundStation,
    orientation_tol_deg: f64,
) -> (Vec<GainObservation>, Vec<(usize, GeometryError)>) {
    let mut obs = Vec::with_capacity(samples.len());
    let mut failed = Vec::new();
    for (idx, s) in samples.iter().enumerate() {
        match link_angles(
            &s.position,
            &s.attitude,
            &station.position,
            orientation_tol_deg,
        ) {
            Ok(a) => {
                // d3d > 0 and frequency > 0 are guaranteed at this point
                let fspl = fspl_db(a.d3d, station.frequency_hz).expect("validated inputs");
                obs.push(GainObservation {
                    phi_u: a.phi_u,
                    theta_u: a.theta_u,
                    gain_sample: s.rsrp_dbm - station.tx_power_dbm + fspl,
                });
            }
            Err(e) => failed.push((idx, e)),
        }
    }
    (obs, failed)
}

/// Collects gain samples per bin. Partial accumulators over disjoint
/// observation sets can be merged before finishing.
#[derive(Debug, Clone)]
pub struct GainAccumulator {
    shape: PatternGrid,
    bins: Vec<Vec<f64>>,
}

impl GainAccumulator {
    pub fn new(az_bin_deg: f64, el_bin_deg: f64) -> Result<Self, PatternError> {
        let shape = PatternGrid::empty(az_bin_deg, el_bin_deg)?;
        let bins = vec![Vec::new(); shape.len()];
        Ok(Self { shape, bins })
    }

    pub fn push(&mut self, obs: &GainObservation) {
        let (i, j) = self.shape.bin_of(obs.phi_u, obs.theta_u);
        let k = self.shape.index(i, j);
        self.bins[k].push(obs.gain_sample);
    }

    pub fn extend<'a>(&mut self, obs: impl IntoIterator<Item = &'a GainObservation>) {
        for o in obs {
            self.push(o);
        }
    }

    pub fn merge(&mut self, other: GainAccumulator) -> Result<(), PatternError> {
        if !self.shape.same_shape(&other.shape) {
            return Err(PatternError::ShapeMismatch);
        }
        for (a, b) in self.bins.iter_mut().zip(other.bins) {
            a.extend(b);
        }
        Ok(())
    }

    /// Per-bin arithmetic mean and unbiased variance. Samples are summed in
    /// sorted order so the result does not depend on arrival order.
    pub fn finish(mut self) -> PatternGrid {
        let mut grid = self.shape;
        for (k, bin) in self.bins.iter_mut().enumerate() {
            if bin.is_empty() {
                continue;
            }
            bin.sort_by(f64::total_cmp);
            let n = bin.len() as f64;
            let mean = bin.iter().sum::<f64>() / n;
            let var = (bin.len() >= 2)
                .then(|| bin.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0));
            grid.gains[k] = Some(mean);
            grid.counts[k] = bin.len() as u64;
            grid.variances[k] = var;
        }
        grid
    }
}

/// Bins the observations and returns the per-bin mean gain grid.
pub fn accumulate(
    observations: &[GainObservation],
    az_bin_deg: f64,
    el_bin_deg: f64,
) -> Result<PatternGrid, PatternError> {
    let mut acc = GainAccumulator::new(az_bin_deg, el_bin_deg)?;
    acc.extend(observations);
    Ok(acc.finish())
}

/// Demotes bins observed fewer than `k_min` times to missing. Demoted bins
/// get count 0 so that `count == 0` keeps meaning "missing".
pub fn apply_min_count(grid: &PatternGrid, k_min: u64) -> PatternGrid {
    let mut out = grid.clone();
    for k in 0..out.len() {
        if out.gains[k].is_some() && out.counts[k] < k_min {
            out.gains[k] = None;
            out.counts[k] = 0;
            out.variances[k] = None;
        }
    }
    out
}

/// Outcome of [`complete_grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub grid: PatternGrid,
    pub converged: bool,
    pub iterations: usize,
    pub max_update: f64,
}

/// Fills missing cells with the discrete harmonic extension of the known
/// cells.
///
/// Known cells are held fixed. Each missing cell converges to the mean of
/// its four neighbors, with azimuth wrapping around and a mirror boundary
/// past the poles (the out-of-grid neighbor is the cell itself). Gauss-Seidel
/// sweeps run until the largest per-cell update drops below `tol` or
/// `max_iters` sweeps have been made.
pub fn complete_grid(
    grid: &PatternGrid,
    tol: f64,
    max_iters: usize,
) -> Result<Completion, PatternError> {
    let missing: Vec<usize> = (0..grid.len())
        .filter(|&k| grid.gains[k].is_none())
        .collect();
    if missing.is_empty() {
        return Ok(Completion {
            grid: grid.clone(),
            converged: true,
            iterations: 0,
            max_update: 0.0,
        });
    }
    if missing.len() == grid.len() {
        return Err(PatternError::EmptyGrid);
    }

    let (n_az, n_el) = (grid.n_az, grid.n_el);
    let mut values: Vec<f64> = initial_guess(grid);

    let neighbors: Vec<Vec<usize>> = missing
        .iter()
        .map(|&k| {
            let (i, j) = (k / n_el, k % n_el);
            let mut nb = vec![
                ((i + n_az - 1) % n_az) * n_el + j,
                ((i + 1) % n_az) * n_el + j,
            ];
            if j > 0 {
                nb.push(k - 1);
            }
            if j + 1 < n_el {
                nb.push(k + 1);
            }
            nb.retain(|&m| m != k);
            nb
        })
        .collect();

    let mut iterations = 0;
    let mut max_update = f64::INFINITY;
    while iterations < max_iters {
        iterations += 1;
        max_update = 0.0;
        for (&k, nb) in missing.iter().zip(&neighbors) {
            if nb.is_empty() {
                continue;
            }
            let new = nb.iter().map(|&m| values[m]).sum::<f64>() / nb.len() as f64;
            max_update = f64::max(max_update, (new - values[k]).abs());
            values[k] = new;
        }
        if max_update < tol {
            break;
        }
    }

    let mut out = grid.clone();
    for &k in &missing {
        out.gains[k] = Some(values[k]);
    }
    Ok(Completion {
        grid: out,
        converged: max_update < tol,
        iterations,
        max_update,
    })
}

/// Missing cells start at the nearest known value in their azimuth column,
/// or the mean of all known cells when the column is empty.
fn initial_guess(grid: &PatternGrid) -> Vec<f64> {
    let known: Vec<f64> = grid.gains.iter().flatten().copied().collect();
    let global = known.iter().sum::<f64>() / known.len() as f64;
    let mut values = vec![global; grid.len()];
    for i in 0..grid.n_az {
        let column: Vec<(usize, f64)> = (0..grid.n_el)
            .filter_map(|j| grid.gain(i, j).map(|g| (j, g)))
            .collect();
        for j in 0..grid.n_el {
            let k = grid.index(i, j);
            values[k] = match grid.gains[k] {
                Some(g) => g,
                None => column
                    .iter()
                    .min_by_key(|(jj, _)| jj.abs_diff(j))
                    .map(|&(_, g)| g)
                    .unwrap_or(global),
            };
        }
    }
    values
}
