//! Synthetic flights over a known combined pattern.
//!
//! Trajectories are laid out in the station's local ENU frame (altitudes
//! are heights above the station antenna in that frame) and converted to
//! geodetic positions, so synthetic logs go through the same geodesy as
//! real ones. Received power follows the combined-pattern model plus
//! i.i.d. Gaussian noise in dB drawn from a seeded ChaCha generator.

use std::f64::consts::PI;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::{load_anechoic, DataError, FlightSample, GroundStation};
use crate::geometry::{
    enu_to_geodetic, link_angles, Attitude, EnuVector, GeometryError, DEFAULT_ORIENTATION_TOL_DEG,
};
use crate::link_budget::fspl_db;
use crate::pattern::{PatternError, PatternGrid};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid trajectory: {0}")]
    InvalidSpec(String),
    #[error("sample {index} is {distance} m from the station")]
    DegenerateTrajectory { index: usize, distance: f64 },
    #[error("noise sigma must be finite and >= 0, got {0}")]
    InvalidNoise(f64),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Pattern(#[from] PatternError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Path shape, in the station's horizontal plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TrajectoryKind {
    /// Circle of `radius_m` centered over the station, starting due north
    /// and flown clockwise.
    Orbit {
        radius_m: f64,
        #[serde(default = "one")]
        laps: f64,
    },
    /// Straight line of `length_m` through the point above the station,
    /// flown along `heading_deg`.
    Radial {
        length_m: f64,
        #[serde(default)]
        heading_deg: f64,
    },
    /// Serpentine sweep of a `width_m` (east) x `height_m` (north)
    /// rectangle centered on the station, with east-west passes
    /// `spacing_m` apart.
    Lawnmower {
        width_m: f64,
        height_m: f64,
        spacing_m: f64,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpec {
    #[serde(flatten)]
    pub kind: TrajectoryKind,
    pub altitude_m: f64,
    pub speed_mps: f64,
    pub sample_rate_hz: f64,
    #[serde(default)]
    pub attitude: Attitude,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default)]
    pub start_time_s: f64,
}

impl TrajectorySpec {
    pub fn validate(&self) -> Result<(), SimError> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(SimError::InvalidSpec(format!(
                    "{name} must be positive, got {v}"
                )))
            }
        };
        positive("speed_mps", self.speed_mps)?;
        positive("sample_rate_hz", self.sample_rate_hz)?;
        if !self.altitude_m.is_finite() {
            return Err(SimError::InvalidSpec("altitude_m must be finite".into()));
        }
        if !self.start_time_s.is_finite() {
            return Err(SimError::InvalidSpec("start_time_s must be finite".into()));
        }
        match &self.kind {
            TrajectoryKind::Orbit { radius_m, laps } => {
                positive("radius_m", *radius_m)?;
                positive("laps", *laps)?;
            }
            TrajectoryKind::Radial {
                length_m,
                heading_deg,
            } => {
                positive("length_m", *length_m)?;
                if !heading_deg.is_finite() {
                    return Err(SimError::InvalidSpec("heading_deg must be finite".into()));
                }
            }
            TrajectoryKind::Lawnmower {
                width_m,
                height_m,
                spacing_m,
            } => {
                positive("width_m", *width_m)?;
                positive("height_m", *height_m)?;
                positive("spacing_m", *spacing_m)?;
            }
        }
        self.attitude.validate()?;
        if self.attitude.pitch.abs() > DEFAULT_ORIENTATION_TOL_DEG
            || self.attitude.roll.abs() > DEFAULT_ORIENTATION_TOL_DEG
        {
            return Err(SimError::InvalidSpec(
                "attitude must be level to within the fixed-orientation tolerance".into(),
            ));
        }
        Ok(())
    }

    /// Horizontal waypoints (east, north) sampled every `speed / rate`
    /// meters of path.
    pub fn horizontal_track(&self) -> Vec<(f64, f64)> {
        let step = self.speed_mps / self.sample_rate_hz;
        match &self.kind {
            TrajectoryKind::Orbit { radius_m, laps } => {
                let total = 2.0 * PI * radius_m * laps;
                let n = (total / step).ceil() as usize;
                (0..n)
                    .map(|k| {
                        let a = k as f64 * step / radius_m;
                        (radius_m * a.sin(), radius_m * a.cos())
                    })
                    .collect()
            }
            TrajectoryKind::Radial {
                length_m,
                heading_deg,
            } => {
                let (s, c) = heading_deg.to_radians().sin_cos();
                let half = length_m / 2.0;
                let start = (-half * s, -half * c);
                let end = (half * s, half * c);
                sample_polyline(&[start, end], step)
            }
            TrajectoryKind::Lawnmower {
                width_m,
                height_m,
                spacing_m,
            } => {
                let passes = (height_m / spacing_m).floor() as usize + 1;
                let (w2, h2) = (width_m / 2.0, height_m / 2.0);
                let mut pts = Vec::with_capacity(2 * passes);
                for p in 0..passes {
                    let north = -h2 + p as f64 * spacing_m;
                    if p % 2 == 0 {
                        pts.push((-w2, north));
                        pts.push((w2, north));
                    } else {
                        pts.push((w2, north));
                        pts.push((-w2, north));
                    }
                }
                sample_polyline(&pts, step)
            }
        }
    }
}

/// Points every `step` meters along the polyline, including its start.
fn sample_polyline(pts: &[(f64, f64)], step: f64) -> Vec<(f64, f64)> {
    let seg_len: Vec<f64> = pts
        .windows(2)
        .map(|w| (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1))
        .collect();
    let total: f64 = seg_len.iter().sum();
    let n = (total / step).floor() as usize + 1;
    let mut out = Vec::with_capacity(n);
    let mut seg = 0;
    let mut seg_start = 0.0;
    for k in 0..n {
        let s = k as f64 * step;
        while seg + 1 < seg_len.len() && s > seg_start + seg_len[seg] {
            seg_start += seg_len[seg];
            seg += 1;
        }
        let (a, b) = (pts[seg], pts[seg + 1]);
        let t = if seg_len[seg] > 0.0 {
            ((s - seg_start) / seg_len[seg]).min(1.0)
        } else {
            0.0
        };
        out.push((a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1)));
    }
    out
}

/// The combined pattern the synthetic measurements are drawn from.
#[derive(Debug, Clone, PartialEq)]
pub enum TruthPattern {
    /// `g0 + g1 * cos^n(90 - theta)` above the horizon, `g0` below it.
    Parametric {
        g0_db: f64,
        g1_db: f64,
        exponent: f64,
    },
    /// A complete grid read by bilinear interpolation.
    Grid(PatternGrid),
}

impl TruthPattern {
    pub fn gain(&self, phi_u: f64, theta_u: f64) -> Result<f64, PatternError> {
        match self {
            Self::Parametric {
                g0_db,
                g1_db,
                exponent,
            } => {
                let base = (90.0 - theta_u).to_radians().cos().max(0.0);
                Ok(g0_db + g1_db * base.powf(*exponent))
            }
            Self::Grid(g) => g.interpolate(phi_u, theta_u),
        }
    }

    fn validate(&self) -> Result<(), SimError> {
        match self {
            Self::Parametric {
                g0_db,
                g1_db,
                exponent,
            } => {
                if !(g0_db.is_finite()
                    && g1_db.is_finite()
                    && *exponent > 0.0
                    && exponent.is_finite())
                {
                    return Err(SimError::InvalidSpec(
                        "parametric truth needs finite g0, g1 and a positive exponent".into(),
                    ));
                }
                Ok(())
            }
            Self::Grid(g) => {
                let missing = g.missing_count();
                if missing > 0 {
                    return Err(PatternError::IncompleteGrid { missing }.into());
                }
                Ok(())
            }
        }
    }
}

/// On-disk description of a [`TruthPattern`]; grid paths are relative to
/// the description file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TruthSpec {
    Parametric {
        g0_db: f64,
        g1_db: f64,
        exponent: f64,
    },
    Grid {
        path: String,
    },
}

impl TruthSpec {
    pub fn load(&self, base_dir: &Path) -> Result<TruthPattern, SimError> {
        Ok(match self {
            Self::Parametric {
                g0_db,
                g1_db,
                exponent,
            } => TruthPattern::Parametric {
                g0_db: *g0_db,
                g1_db: *g1_db,
                exponent: *exponent,
            },
            Self::Grid { path } => TruthPattern::Grid(load_anechoic(&base_dir.join(path))?),
        })
    }
}

/// Simulates a flight log. Identical inputs give identical samples.
pub fn generate_flight(
    spec: &TrajectorySpec,
    station: &GroundStation,
    truth: &TruthPattern,
    noise_sigma_db: f64,
) -> Result<Vec<FlightSample>, SimError> {
    spec.validate()?;
    truth.validate()?;
    if !(noise_sigma_db >= 0.0 && noise_sigma_db.is_finite()) {
        return Err(SimError::InvalidNoise(noise_sigma_db));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let noise =
        Normal::new(0.0, noise_sigma_db).map_err(|_| SimError::InvalidNoise(noise_sigma_db))?;

    let track = spec.horizontal_track();
    let mut out = Vec::with_capacity(track.len());
    for (index, &(east, north)) in track.iter().enumerate() {
        let enu = EnuVector::new(east, north, spec.altitude_m);
        let position = enu_to_geodetic(&enu, &station.position);
        let angles = match link_angles(
            &position,
            &spec.attitude,
            &station.position,
            DEFAULT_ORIENTATION_TOL_DEG,
        ) {
            Ok(a) => a,
            Err(GeometryError::ZeroDistance(distance)) => {
                return Err(SimError::DegenerateTrajectory { index, distance })
            }
            Err(e) => return Err(e.into()),
        };
        let fspl = fspl_db(angles.d3d, station.frequency_hz)
            .map_err(|e| SimError::InvalidSpec(e.to_string()))?;
        let gain = truth.gain(angles.phi_u, angles.theta_u)?;
        let eps = if noise_sigma_db > 0.0 {
            noise.sample(&mut rng)
        } else {
            0.0
        };
        out.push(FlightSample {
            timestamp_s: spec.start_time_s + index as f64 / spec.sample_rate_hz,
            position,
            attitude: spec.attitude,
            rsrp_dbm: station.tx_power_dbm - fspl + gain + eps,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{geodetic_to_enu, GeodeticPosition};

    fn station() -> GroundStation {
        GroundStation {
            label: "ugv".into(),
            position: GeodeticPosition::new(35.727, -78.696, 95.0).unwrap(),
            tx_power_dbm: 10.0,
            frequency_hz: 3.32e9,
            boresight_azimuth_deg: 0.0,
            expected_uav_yaw_deg: 0.0,
            anechoic_gs_pattern: None,
            anechoic_uav_pattern: None,
        }
    }

    fn orbit(radius: f64, altitude: f64) -> TrajectorySpec {
        TrajectorySpec {
            kind: TrajectoryKind::Orbit {
                radius_m: radius,
                laps: 1.0,
            },
            altitude_m: altitude,
            speed_mps: 10.0,
            sample_rate_hz: 5.0,
            attitude: Attitude::level(),
            rng_seed: 42,
            start_time_s: 0.0,
        }
    }

    #[test]
    fn isotropic_noise_free_is_pure_fspl() {
        let st = station();
        let truth = TruthPattern::Parametric {
            g0_db: 0.0,
            g1_db: 0.0,
            exponent: 1.0,
        };
        let log = generate_flight(&orbit(150.0, 40.0), &st, &truth, 0.0).unwrap();
        assert!(!log.is_empty());
        for s in &log {
            let a = link_angles(&s.position, &s.attitude, &st.position, 5.0).unwrap();
            assert_eq!(
                s.rsrp_dbm,
                st.tx_power_dbm - fspl_db(a.d3d, st.frequency_hz).unwrap()
            );
        }
    }

    #[test]
    fn seeded_noise_is_reproducible() {
        let st = station();
        let truth = TruthPattern::Parametric {
            g0_db: 1.0,
            g1_db: 5.0,
            exponent: 2.0,
        };
        let a = generate_flight(&orbit(150.0, 40.0), &st, &truth, 2.0).unwrap();
        let b = generate_flight(&orbit(150.0, 40.0), &st, &truth, 2.0).unwrap();
        assert_eq!(a, b);
        let mut other = orbit(150.0, 40.0);
        other.rng_seed = 43;
        let c = generate_flight(&other, &st, &truth, 2.0).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn orbit_has_constant_elevation() {
        let st = station();
        let truth = TruthPattern::Parametric {
            g0_db: 0.0,
            g1_db: 0.0,
            exponent: 1.0,
        };
        let alt = 200.0 * 45f64.to_radians().tan();
        let log = generate_flight(&orbit(200.0, alt), &st, &truth, 0.0).unwrap();
        for s in &log {
            let a = link_angles(&s.position, &s.attitude, &st.position, 5.0).unwrap();
            assert!((a.theta_g - 45.0).abs() < 1e-6, "{}", a.theta_g);
        }
    }

    #[test]
    fn radial_through_station_at_ground_level_is_degenerate() {
        let mut spec = orbit(1.0, 0.0);
        spec.kind = TrajectoryKind::Radial {
            length_m: 100.0,
            heading_deg: 0.0,
        };
        let truth = TruthPattern::Parametric {
            g0_db: 0.0,
            g1_db: 0.0,
            exponent: 1.0,
        };
        assert!(matches!(
            generate_flight(&spec, &station(), &truth, 0.0),
            Err(SimError::DegenerateTrajectory { .. })
        ));
    }

    #[test]
    fn lawnmower_covers_rectangle() {
        let mut spec = orbit(1.0, 50.0);
        spec.kind = TrajectoryKind::Lawnmower {
            width_m: 100.0,
            height_m: 40.0,
            spacing_m: 20.0,
        };
        let track = spec.horizontal_track();
        // three 100 m passes joined by two 20 m legs, 2 m apart
        assert_eq!(track.len(), 171);
        assert_eq!(track[0], (-50.0, -20.0));
        let last = track[track.len() - 1];
        assert!((last.0 - 50.0).abs() < 1e-9 && (last.1 - 20.0).abs() < 1e-9);
        let st = station();
        let truth = TruthPattern::Parametric {
            g0_db: 0.0,
            g1_db: 3.0,
            exponent: 1.0,
        };
        let log = generate_flight(&spec, &st, &truth, 0.0).unwrap();
        let v = geodetic_to_enu(&log[0].position, &st.position);
        assert!((v.east + 50.0).abs() < 1e-6 && (v.up - 50.0).abs() < 1e-6);
    }

    #[test]
    fn spec_json_shape() {
        let json = r#"{"kind": "orbit", "radius_m": 200, "altitude_m": 200, "speed_mps": 10, "sample_rate_hz": 10}"#;
        let spec: TrajectorySpec = serde_json::from_str(json).unwrap();
        assert_eq!(
            spec.kind,
            TrajectoryKind::Orbit {
                radius_m: 200.0,
                laps: 1.0
            }
        );
        assert_eq!(spec.attitude, Attitude::level());
    }

    #[test]
    fn parametric_truth_shape() {
        let t = TruthPattern::Parametric {
            g0_db: -3.0,
            g1_db: 10.0,
            exponent: 2.0,
        };
        assert_eq!(t.gain(0.0, 90.0).unwrap(), 7.0);
        assert!((t.gain(0.0, 0.0).unwrap() + 3.0).abs() < 1e-12);
        assert_eq!(t.gain(0.0, -30.0).unwrap(), -3.0);
    }
}
