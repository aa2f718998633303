//! Geodetic positions, UAV attitude and the link angles between a UAV and a
//! ground station.
//!
//! Azimuths are compass bearings (clockwise from true north, `[0, 360)`),
//! elevations are measured from the local horizontal plane (`90` = zenith).
//! All conversions use the full WGS-84 ellipsoid.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::FlightSample;

/// WGS-84 semi-major axis in meters.
pub const WGS84_A: f64 = 6_378_137.0;
/// WGS-84 flattening.
pub const WGS84_F: f64 = 1.0 / 298.257_223_563;
/// WGS-84 first eccentricity squared.
pub const WGS84_E2: f64 = WGS84_F * (2.0 - WGS84_F);

/// Default pitch/roll/yaw tolerance for the fixed-orientation regime, degrees.
pub const DEFAULT_ORIENTATION_TOL_DEG: f64 = 5.0;

/// Elevations within this many degrees of +-90 are treated as the pole and
/// get azimuth 0.
const POLE_EPS_DEG: f64 = 1e-9;

/// Minimum separation for which link angles are defined, meters.
pub const MIN_LINK_DISTANCE_M: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("latitude {0} outside [-90, 90]")]
    LatitudeOutOfRange(f64),
    #[error("longitude {0} outside [-180, 180)")]
    LongitudeOutOfRange(f64),
    #[error("altitude {0} is not finite")]
    NonFiniteAltitude(f64),
    #[error("{name} = {value} outside its valid range")]
    AttitudeOutOfRange { name: &'static str, value: f64 },
    #[error("UAV and station are {0} m apart; link angles are undefined")]
    ZeroDistance(f64),
    #[error("attitude pitch={pitch} roll={roll} exceeds the fixed-orientation tolerance {tol}")]
    OrientationOutOfScope { pitch: f64, roll: f64, tol: f64 },
}

/// Wraps an angle into `[0, 360)`.
pub fn wrap_deg(angle: f64) -> f64 {
    let r = angle.rem_euclid(360.0);
    // rem_euclid rounds tiny negatives up to exactly 360.0
    if r >= 360.0 {
        0.0
    } else {
        r
    }
}

/// Smallest absolute difference between two bearings, in `[0, 180]`.
pub fn circular_distance_deg(a: f64, b: f64) -> f64 {
    let d = wrap_deg(a - b);
    d.min(360.0 - d)
}

/// A WGS-84 geodetic position. Altitude is meters above the ellipsoid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeodeticPosition {
    pub latitude: f64,
    pub longitude: f64,
    pub altitude: f64,
}

impl GeodeticPosition {
    pub fn new(latitude: f64, longitude: f64, altitude: f64) -> Result<Self, GeometryError> {
        let p = Self {
            latitude,
            longitude,
            altitude,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(-90.0..=90.0).contains(&self.latitude) {
            return Err(GeometryError::LatitudeOutOfRange(self.latitude));
        }
        if !(-180.0..180.0).contains(&self.longitude) {
            return Err(GeometryError::LongitudeOutOfRange(self.longitude));
        }
        if !self.altitude.is_finite() {
            return Err(GeometryError::NonFiniteAltitude(self.altitude));
        }
        Ok(())
    }

    /// Earth-centered, earth-fixed coordinates in meters.
    pub fn to_ecef(&self) -> [f64; 3] {
        let (sin_lat, cos_lat) = self.latitude.to_radians().sin_cos();
        let (sin_lon, cos_lon) = self.longitude.to_radians().sin_cos();
        let n = WGS84_A / (1.0 - WGS84_E2 * sin_lat * sin_lat).sqrt();
        let h = self.altitude;
        [
            (n + h) * cos_lat * cos_lon,
            (n + h) * cos_lat * sin_lon,
            (n * (1.0 - WGS84_E2) + h) * sin_lat,
        ]
    }

    /// Inverse of [`to_ecef`](Self::to_ecef) (Bowring's method, refined by
    /// fixed-point iteration).
    pub fn from_ecef(ecef: [f64; 3]) -> Self {
        let [x, y, z] = ecef;
        let lon = y.atan2(x);
        let p = x.hypot(y);
        let b = WGS84_A * (1.0 - WGS84_F);
        let ep2 = (WGS84_A * WGS84_A - b * b) / (b * b);
        let theta = (z * WGS84_A).atan2(p * b);
        let (st, ct) = theta.sin_cos();
        let mut lat = (z + ep2 * b * st * st * st).atan2(p - WGS84_E2 * WGS84_A * ct * ct * ct);
        let mut h = 0.0;
        for _ in 0..4 {
            let (sin_lat, cos_lat) = lat.sin_cos();
            let n = WGS84_A / (1.0 - WGS84_E2 * sin_lat * sin_lat).sqrt();
            h = if cos_lat.abs() > 1e-12 {
                p / cos_lat - n
            } else {
                z.abs() / sin_lat.abs() - n * (1.0 - WGS84_E2)
            };
            lat = z.atan2(p * (1.0 - WGS84_E2 * n / (n + h)));
        }
        let mut longitude = lon.to_degrees();
        if longitude >= 180.0 {
            longitude -= 360.0;
        }
        Self {
            latitude: lat.to_degrees(),
            longitude,
            altitude: h,
        }
    }
}

/// UAV attitude in degrees. Yaw is a compass heading of the fuselage.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Attitude {
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
}

impl Attitude {
    pub fn new(yaw: f64, pitch: f64, roll: f64) -> Result<Self, GeometryError> {
        let a = Self { yaw, pitch, roll };
        a.validate()?;
        Ok(a)
    }

    pub fn level() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(0.0..360.0).contains(&self.yaw) {
            return Err(GeometryError::AttitudeOutOfRange {
                name: "yaw",
                value: self.yaw,
            });
        }
        if !(-90.0..=90.0).contains(&self.pitch) {
            return Err(GeometryError::AttitudeOutOfRange {
                name: "pitch",
                value: self.pitch,
            });
        }
        if !(-180.0..180.0).contains(&self.roll) {
            return Err(GeometryError::AttitudeOutOfRange {
                name: "roll",
                value: self.roll,
            });
        }
        Ok(())
    }
}

/// Local east/north/up displacement in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnuVector {
    pub east: f64,
    pub north: f64,
    pub up: f64,
}

impl EnuVector {
    pub fn new(east: f64, north: f64, up: f64) -> Self {
        Self { east, north, up }
    }

    pub fn norm(&self) -> f64 {
        (self.east * self.east + self.north * self.north + self.up * self.up).sqrt()
    }
}

fn enu_basis(origin: &GeodeticPosition) -> [[f64; 3]; 3] {
    let (sl, cl) = origin.latitude.to_radians().sin_cos();
    let (so, co) = origin.longitude.to_radians().sin_cos();
    [
        [-so, co, 0.0],
        [-sl * co, -sl * so, cl],
        [cl * co, cl * so, sl],
    ]
}

/// Displacement of `target` from `origin`, expressed in the ENU frame at
/// `origin`.
pub fn geodetic_to_enu(target: &GeodeticPosition, origin: &GeodeticPosition) -> EnuVector {
    let t = target.to_ecef();
    let o = origin.to_ecef();
    let d = [t[0] - o[0], t[1] - o[1], t[2] - o[2]];
    let [e, n, u] = enu_basis(origin);
    let dot = |r: [f64; 3]| r[0] * d[0] + r[1] * d[1] + r[2] * d[2];
    EnuVector {
        east: dot(e),
        north: dot(n),
        up: dot(u),
    }
}

/// Inverse of [`geodetic_to_enu`].
pub fn enu_to_geodetic(enu: &EnuVector, origin: &GeodeticPosition) -> GeodeticPosition {
    let o = origin.to_ecef();
    let [e, n, u] = enu_basis(origin);
    let mut p = o;
    for k in 0..3 {
        p[k] += e[k] * enu.east + n[k] * enu.north + u[k] * enu.up;
    }
    GeodeticPosition::from_ecef(p)
}

/// The four link angles and the 3D distance for one UAV position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkAngles {
    /// Azimuth of the UAV seen from the station.
    pub phi_g: f64,
    /// Elevation of the UAV above the station's horizontal plane.
    pub theta_g: f64,
    /// Azimuth of the station in the UAV body frame.
    pub phi_u: f64,
    /// Elevation in the UAV frame.
    pub theta_u: f64,
    pub d3d: f64,
}

/// Compass bearing and elevation of an ENU vector. At the poles the azimuth
/// is pinned to 0.
pub fn bearing_elevation(v: &EnuVector) -> (f64, f64, f64) {
    let d = v.norm();
    let theta = (v.up / d).clamp(-1.0, 1.0).asin().to_degrees();
    let phi = if 90.0 - theta.abs() <= POLE_EPS_DEG {
        0.0
    } else {
        wrap_deg(v.east.atan2(v.north).to_degrees())
    };
    (phi, theta, d)
}

/// Link angles from the UAV position and attitude relative to the station
/// antenna.
///
/// Only the fixed-orientation regime is supported: pitch and roll must be
/// within `orientation_tol_deg` of level, in which case the UAV-frame
/// elevation equals the station-frame elevation and the UAV-frame azimuth is
/// the back-bearing rotated by the yaw.
pub fn link_angles(
    uav: &GeodeticPosition,
    attitude: &Attitude,
    station: &GeodeticPosition,
    orientation_tol_deg: f64,
) -> Result<LinkAngles, GeometryError> {
    if attitude.pitch.abs() > orientation_tol_deg || attitude.roll.abs() > orientation_tol_deg {
        return Err(GeometryError::OrientationOutOfScope {
            pitch: attitude.pitch,
            roll: attitude.roll,
            tol: orientation_tol_deg,
        });
    }
    let enu = geodetic_to_enu(uav, station);
    let (phi_g, theta_g, d3d) = bearing_elevation(&enu);
    if d3d < MIN_LINK_DISTANCE_M {
        return Err(GeometryError::ZeroDistance(d3d));
    }
    Ok(LinkAngles {
        phi_g,
        theta_g,
        phi_u: wrap_deg(phi_g + 180.0 - attitude.yaw),
        theta_u: theta_g,
        d3d,
    })
}

/// Why a sample was excluded from the fixed-orientation set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrientationRejection {
    PitchExceedsTolerance,
    RollExceedsTolerance,
    YawDeviatesFromExpected,
}

impl OrientationRejection {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::PitchExceedsTolerance => "pitch-exceeds-tolerance",
            Self::RollExceedsTolerance => "roll-exceeds-tolerance",
            Self::YawDeviatesFromExpected => "yaw-deviates-from-expected",
        }
    }
}

impl std::fmt::Display for OrientationRejection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Reasons an attitude falls outside the fixed-orientation regime; empty
/// when it is accepted.
pub fn orientation_violations(
    attitude: &Attitude,
    expected_yaw: f64,
    tolerance: f64,
) -> Vec<OrientationRejection> {
    let mut reasons = Vec::new();
    if attitude.pitch.abs() > tolerance {
        reasons.push(OrientationRejection::PitchExceedsTolerance);
    }
    if attitude.roll.abs() > tolerance {
        reasons.push(OrientationRejection::RollExceedsTolerance);
    }
    if circular_distance_deg(attitude.yaw, expected_yaw) > tolerance {
        reasons.push(OrientationRejection::YawDeviatesFromExpected);
    }
    reasons
}

/// A sample excluded by [`validate_fixed_orientation`].
#[derive(Debug, Clone, PartialEq)]
pub struct RejectedSample {
    pub index: usize,
    pub sample: FlightSample,
    pub reasons: Vec<OrientationRejection>,
}

/// Splits samples into those flown in the fixed orientation and those that
/// are not, preserving order within each part.
pub fn validate_fixed_orientation(
    samples: &[FlightSample],
    expected_yaw: f64,
    tolerance: f64,
) -> (Vec<FlightSample>, Vec<RejectedSample>) {
    let mut accepted = Vec::with_capacity(samples.len());
    let mut rejected = Vec::new();
    for (index, s) in samples.iter().enumerate() {
        let reasons = orientation_violations(&s.attitude, expected_yaw, tolerance);
        if reasons.is_empty() {
            accepted.push(*s);
        } else {
            rejected.push(RejectedSample {
                index,
                sample: *s,
                reasons,
            });
        }
    }
    (accepted, rejected)
}
