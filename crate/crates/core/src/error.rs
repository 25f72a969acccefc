use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
    #[error("invalid mixture: {0}")]
    InvalidMixture(String),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("zero effective batch size")]
    ZeroEffectiveBatchSize,
    #[error("level overflow: k(d+1)^{level} exceeds the addressable state range")]
    LevelOverflow { level: usize },
    #[error("block outside truncation: level {level} ends at state {last_state} > n_max {n_max}")]
    BlockOutsideTruncation {
        level: usize,
        last_state: u64,
        n_max: usize,
    },
    #[error("invalid tolerance {0}; expected a value in (0, 1e-3]")]
    InvalidTolerance(f64),
    #[error("tolerance unachievable: {0}")]
    ToleranceUnachievable(String),
    #[error("empty grid")]
    EmptyGrid,
    #[error("grid point {0} outside the schedule horizon")]
    GridOutsideHorizon(f64),
    #[error("count overflow during simulation")]
    Overflow,
    #[error("division by zero active count at day {day}")]
    ZeroActive { day: usize },
    #[error("invalid window: {0}")]
    InvalidWindow(String),
    #[error("change point {t_c} out of range [2, {m}]")]
    ChangePointOutOfRange { t_c: usize, m: usize },
    #[error("non-monotone cumulative series at row {row}")]
    NonMonotoneCumulative { row: usize },
    #[error("degenerate scenario: expected count underflows to 0 at t = {t}")]
    DegenerateScenario { t: f64 },
    #[error("header mismatch: expected `{expected}`, found `{found}`")]
    HeaderMismatch { expected: String, found: String },
    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error("{identity} at row {row}")]
    Validation { row: usize, identity: String },
    #[error("unknown fixture `{0}`")]
    UnknownFixture(String),
    #[error("empty input")]
    EmptyInput,
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
