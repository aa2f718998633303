use std::fmt;

use serde::Serialize;
use skypattern_core::dataio::DataError;
use skypattern_core::eval::EvalError;
use skypattern_core::geometry::GeometryError;
use skypattern_core::link_budget::LinkBudgetError;
use skypattern_core::pattern::PatternError;
use skypattern_core::pipeline::LearnError;
use skypattern_core::sim::SimError;

const COMPLETE_HINT: &str = "run `skypattern complete` on the grid first";

/// A fatal error, printed as one JSON line on stderr.
#[derive(Debug, Clone, Serialize)]
pub struct CliError {
    pub error: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hint: Option<&'static str>,
}

impl CliError {
    pub fn new(error: &'static str, message: impl Into<String>) -> Self {
        Self {
            error,
            message: message.into(),
            hint: None,
        }
    }

    fn with_hint(mut self, hint: &'static str) -> Self {
        self.hint = Some(hint);
        self
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).unwrap_or_else(|_| {
            format!(
                "{{\"error\":\"{}\",\"message\":\"unprintable\"}}",
                self.error
            )
        })
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.error, self.message)
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        let kind = match &e {
            DataError::Io { .. } => "Io",
            DataError::Parse { .. } => "Parse",
            DataError::MissingHeader { .. } => "MissingHeader",
            DataError::EmptyFile { .. } => "EmptyFile",
            DataError::MissingField { .. } => "MissingField",
            DataError::ValueOutOfRange { .. } => "ValueOutOfRange",
            DataError::GridShapeMismatch { .. } => "GridShapeMismatch",
            DataError::DuplicateCell { .. } => "DuplicateCell",
            DataError::Json { .. } => "Json",
        };
        let err = Self::new(kind, e.to_string());
        if kind == "GridShapeMismatch" {
            err.with_hint(COMPLETE_HINT)
        } else {
            err
        }
    }
}

impl From<PatternError> for CliError {
    fn from(e: PatternError) -> Self {
        match &e {
            PatternError::InvalidBinWidth { .. } => Self::new("InvalidBinWidth", e.to_string()),
            PatternError::EmptyGrid => Self::new("EmptyGrid", e.to_string()),
            PatternError::IncompleteGrid { .. } => {
                Self::new("IncompleteGrid", e.to_string()).with_hint(COMPLETE_HINT)
            }
            PatternError::MissingCell { .. } => {
                Self::new("MissingCell", e.to_string()).with_hint(COMPLETE_HINT)
            }
            PatternError::ShapeMismatch => Self::new("ShapeMismatch", e.to_string()),
        }
    }
}

impl From<GeometryError> for CliError {
    fn from(e: GeometryError) -> Self {
        let kind = match &e {
            GeometryError::LatitudeOutOfRange(_)
            | GeometryError::LongitudeOutOfRange(_)
            | GeometryError::NonFiniteAltitude(_)
            | GeometryError::AttitudeOutOfRange { .. } => "ValueOutOfRange",
            GeometryError::ZeroDistance(_) => "ZeroDistance",
            GeometryError::OrientationOutOfScope { .. } => "OrientationOutOfScope",
        };
        Self::new(kind, e.to_string())
    }
}

impl From<LinkBudgetError> for CliError {
    fn from(e: LinkBudgetError) -> Self {
        match e {
            LinkBudgetError::NonPositiveInput { .. } => {
                Self::new("NonPositiveInput", e.to_string())
            }
            LinkBudgetError::IncompleteGrid { .. } => {
                Self::new("IncompleteGrid", e.to_string()).with_hint(COMPLETE_HINT)
            }
            LinkBudgetError::Pattern(p) => p.into(),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::EmptySamples => Self::new("EmptySamples", e.to_string()),
            EvalError::Geometry { index, source } => {
                let mut err = CliError::from(source);
                err.message = format!("sample {index}: {}", err.message);
                err
            }
            EvalError::Prediction { index, source } => {
                let mut err = CliError::from(source);
                err.message = format!("sample {index}: {}", err.message);
                err
            }
            EvalError::MismatchedTestSets { .. } => Self::new("MismatchedTestSets", e.to_string()),
            EvalError::InvalidBinWidth(_) => Self::new("InvalidBinWidth", e.to_string()),
            EvalError::Data(d) => d.into(),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidSpec(_) => Self::new("InvalidSpec", e.to_string()),
            SimError::DegenerateTrajectory { .. } => {
                Self::new("DegenerateTrajectory", e.to_string())
            }
            SimError::InvalidNoise(_) => Self::new("InvalidNoise", e.to_string()),
            SimError::Geometry(g) => g.into(),
            SimError::Pattern(p) => p.into(),
            SimError::Data(d) => d.into(),
        }
    }
}

impl From<LearnError> for CliError {
    fn from(e: LearnError) -> Self {
        match e {
            LearnError::NoAcceptedSamples { .. } => Self::new("NoAcceptedSamples", e.to_string()),
            LearnError::NoPopulatedBins { .. } => Self::new("NoPopulatedBins", e.to_string()),
            LearnError::Pattern(p) => p.into(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_line_is_single_line() {
        let e = CliError::new("Parse", "bad\nvalue");
        let line = e.to_json_line();
        assert!(!line.contains('\n'));
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        assert_eq!(v["error"], "Parse");
        assert!(v.get("hint").is_none());
    }

    #[test]
    fn incomplete_grid_carries_hint() {
        let e = CliError::from(LinkBudgetError::IncompleteGrid { missing: 3 });
        assert_eq!(e.error, "IncompleteGrid");
        assert!(e.hint.unwrap().contains("skypattern complete"));
        let nested = CliError::from(EvalError::Prediction {
            index: 7,
            source: LinkBudgetError::Pattern(PatternError::IncompleteGrid { missing: 1 }),
        });
        assert_eq!(nested.error, "IncompleteGrid");
        assert!(nested.message.starts_with("sample 7"));
    }
}
