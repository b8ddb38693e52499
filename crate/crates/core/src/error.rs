use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("axis {axis} out of range for a {dim}-dimensional grid")]
    AxisOutOfRange { axis: usize, dim: usize },

    #[error("non-finite value in {what}")]
    NonFinite { what: &'static str },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameters: {}", .0.join("; "))]
    InvalidParams(Vec<String>),

    #[error("density {min:e} below floor {floor:e}")]
    DensityBelowFloor { min: f64, floor: f64 },

    #[error("density floor clamping changed the mass by {relative:e} (relative)")]
    FloorMassChange { relative: f64 },

    #[error("non-finite state at t = {t}")]
    NanDetected { t: f64 },

    #[error("need at least {need} points, got {got}")]
    InsufficientPoints { need: usize, got: usize },

    #[error("{0}")]
    Experiment(String),

    /// A time integration inside an experiment stopped early.
    #[error("solver aborted: {0}")]
    Aborted(String),

    #[error("short read at byte offset {offset}")]
    ShortRead { offset: usize },

    #[error("bad snapshot magic {found:?}")]
    MagicMismatch { found: [u8; 4] },

    #[error("unsupported snapshot version {found}")]
    VersionMismatch { found: u32 },

    #[error("snapshot: {0}")]
    Snapshot(String),

    #[error("invalid config:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
