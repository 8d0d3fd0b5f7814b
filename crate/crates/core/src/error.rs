use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("quadrature point count {0} outside the supported range 1..=20")]
    QuadratureRange(usize),

    #[error("interface {interface} has no {side} trace on a Dirichlet mesh; supply boundary data instead")]
    BoundaryTrace {
        interface: usize,
        side: &'static str,
    },

    #[error("mesh or degree mismatch between operands")]
    Mismatch,

    #[error("vector length {got} does not match system size {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("singular matrix: zero pivot at row {0}")]
    Singular(usize),

    #[error("negative cell average {value:e} in cell {cell}; positivity limiter cannot repair it")]
    NegativeAverage { cell: usize, value: f64 },

    #[error("invalid tableau: {0}")]
    InvalidTableau(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("solution blew up at step {step} (t = {t})")]
    Blowup { step: usize, t: f64 },

    #[error("no steady state after {0} steps")]
    NoSteadyState(usize),

    #[error("the Barenblatt profile is only defined for t > 0 (got {0})")]
    NonPositiveTime(f64),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
