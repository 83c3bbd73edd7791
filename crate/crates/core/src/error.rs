use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Errors raised by the pure pipeline stages.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Volume or mask metadata violates an invariant.
    InvalidVolume(String),
    /// Requested label has no voxels.
    EmptyMask {
        label: u32,
    },
    /// Phantom spacing cannot resolve the body.
    Resolution {
        voxels_across_radius: f64,
    },
    EmptyInput,
    TooSmall {
        voxels: usize,
        min: usize,
    },
    DegenerateGeometry(String),
    AmbiguousPose {
        angle_deg: f64,
    },
    ProjectionFailure,
    /// One of the sections the fixed rules depend on has too few valid cells.
    FeatureFailure {
        section: &'static str,
    },
    DivisionGuard {
        section: &'static str,
    },
    ScanExcluded {
        valid_vertebrae: usize,
    },
    MissingFeature(String),
    DegenerateLabels,
    Convergence {
        sweeps: usize,
    },
    InvalidConfig(String),
    EmptyEvaluation,
}

impl Error {
    /// Stable short code used in exclusion logs and reports.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidVolume(_) => "invalid_volume",
            Error::EmptyMask { .. } => "empty_mask",
            Error::Resolution { .. } => "resolution",
            Error::EmptyInput => "empty_input",
            Error::TooSmall { .. } => "too_small",
            Error::DegenerateGeometry(_) => "degenerate_geometry",
            Error::AmbiguousPose { .. } => "ambiguous_pose",
            Error::ProjectionFailure => "projection_failure",
            Error::FeatureFailure { .. } => "feature_failure",
            Error::DivisionGuard { .. } => "division_guard",
            Error::ScanExcluded { .. } => "no_reference",
            Error::MissingFeature(_) => "missing_feature",
            Error::DegenerateLabels => "degenerate_labels",
            Error::Convergence { .. } => "convergence",
            Error::InvalidConfig(_) => "invalid_config",
            Error::EmptyEvaluation => "empty_evaluation",
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidVolume(msg) => write!(f, "invalid volume: {msg}"),
            Error::EmptyMask { label } => write!(f, "label {label} not present in volume"),
            Error::Resolution { voxels_across_radius } => {
                write!(f, "spacing too coarse: {voxels_across_radius:.1} voxels across a radius (need >= 6)")
            }
            Error::EmptyInput => f.write_str("empty input mask"),
            Error::TooSmall { voxels, min } => {
                write!(f, "component has {voxels} voxels, minimum is {min}")
            }
            Error::DegenerateGeometry(msg) => write!(f, "degenerate geometry: {msg}"),
            Error::AmbiguousPose { angle_deg } => {
                write!(f, "inferior and posterior surfaces are {angle_deg:.1} deg from parallel")
            }
            Error::ProjectionFailure => f.write_str("height map has no valid cells"),
            Error::FeatureFailure { section } => {
                write!(f, "section {section} has too few valid cells")
            }
            Error::DivisionGuard { section } => write!(f, "section {section} has zero mean height"),
            Error::ScanExcluded { valid_vertebrae } => {
                write!(f, "scan has {valid_vertebrae} valid vertebrae, at least 2 are needed for a reference")
            }
            Error::MissingFeature(name) => write!(f, "feature {name} is missing"),
            Error::DegenerateLabels => f.write_str("labels contain a single class"),
            Error::Convergence { sweeps } => {
                write!(f, "coordinate descent did not converge in {sweeps} sweeps")
            }
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            Error::EmptyEvaluation => f.write_str("no vertebrae left after exclusions"),
        }
    }
}

impl core::error::Error for Error {}
