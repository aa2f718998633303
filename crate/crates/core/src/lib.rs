//! Learning the combined effective radiation pattern of a UAV-mounted
//! antenna and a ground-station antenna from flight logs.
//!
//! The pipeline: flight samples flown at a fixed attitude are converted to
//! link angles ([`geometry`]), each measurement's gain
//! `P_rx - P_tx + FSPL` is averaged per angular bin ([`pattern`]), unobserved
//! bins are filled by harmonic completion, and the completed grid predicts
//! received power on new flights ([`link_budget`]) which is scored against
//! the measurements ([`eval`]). [`sim`] produces synthetic logs from a known
//! pattern and [`dataio`] holds every file format.

pub mod dataio;
pub mod eval;
pub mod geometry;
pub mod link_budget;
pub mod pattern;
pub mod pipeline;
pub mod sim;

pub use dataio::{FlightSample, GroundStation};
pub use geometry::{Attitude, GeodeticPosition, LinkAngles};
pub use link_budget::{fspl_db, GainSource, LinkBudgetParams, PowerPrediction};
pub use pattern::{GainObservation, PatternGrid};
