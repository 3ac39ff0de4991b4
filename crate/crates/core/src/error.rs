use thiserror::Error;

/// Failures of the delay-line model.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DelayLineError {
    /// The NMOS tail is driven at or below threshold; the clock does not propagate.
    #[error(
        "stall region: v_ctrl_n {v_ctrl_n} V is at or below the corner threshold {threshold} V"
    )]
    StallRegion { v_ctrl_n: f64, threshold: f64 },
    #[error("invalid delay-line configuration: {0}")]
    InvalidConfig(String),
    #[error("bias out of range: {0}")]
    BiasOutOfRange(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BiasError {
    #[error("control code {code} out of range for a {bits}-bit DAC")]
    CodeOutOfRange { code: u32, bits: u32 },
    #[error("invalid DAC configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DetectorError {
    #[error(
        "toggle detector window of {window_ps} ps is shorter than 1.5 input periods ({min_ps} ps)"
    )]
    WindowTooShort { window_ps: f64, min_ps: f64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ControllerError {
    /// A baseline search was clamped at a rail without locking.
    #[error("code range exhausted at code {code}")]
    RangeExhausted { code: u32 },
    #[error("invalid scheme parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("divider_n must be one of 1,2,4,6,8 (got {0})")]
    InvalidDivider(u32),
    #[error("steady-state window unavailable: {0}")]
    WindowUnavailable(String),
    #[error(transparent)]
    DelayLine(#[from] DelayLineError),
    #[error(transparent)]
    Bias(#[from] BiasError),
    #[error(transparent)]
    Controller(#[from] ControllerError),
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("invalid design point `{label}`: {reason}")]
    InvalidPoint { label: String, reason: String },
    #[error("frequency ratio must be positive (got {0})")]
    NonPositiveRatio(f64),
    #[error("malformed row {row}: {source}")]
    MalformedRow {
        row: usize,
        #[source]
        source: csv::Error,
    },
}

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("calibration parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("calibration invalid: {0}")]
    Invalid(String),
}
