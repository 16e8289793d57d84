use alloc::string::String;
use core::fmt;

/// Errors raised by the core library.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Error {
    /// Two objects that must share a dimension do not.
    DimensionMismatch { expected: usize, found: usize },
    /// Exact division by zero.
    DivisionByZero,
    /// A hyperplane was given a zero normal vector.
    ZeroNormal,
    /// A rational string failed to parse or was not in lowest terms.
    InvalidRational(String),
    /// A box with an empty or inverted side.
    InvalidBox(String),
    /// Layer shapes inside a network do not chain.
    LayerShape { layer: usize, detail: String },
    /// A neuron id outside the architecture.
    InvalidNeuron { layer: usize, index: usize },
    /// An invalid folding or cutting specification.
    InvalidSpec(String),
    /// An analysis entry point was handed a network with more than one output.
    VectorOutput(usize),
    /// The arrangement grew beyond the configured cell cap.
    CellLimitExceeded { limit: usize },
    /// A complex that does not match the network it is paired with.
    InconsistentComplex(String),
    /// A sampling grid larger than the configured cap.
    GridTooLarge { points: u128, cap: u128 },
    /// A non-positive trial count or similar argument error.
    InvalidArgument(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::DivisionByZero => f.write_str("division by zero"),
            Error::ZeroNormal => f.write_str("hyperplane normal is zero"),
            Error::InvalidRational(s) => write!(f, "invalid rational {s:?}"),
            Error::InvalidBox(s) => write!(f, "invalid box: {s}"),
            Error::LayerShape { layer, detail } => write!(f, "layer {layer}: {detail}"),
            Error::InvalidNeuron { layer, index } => {
                write!(f, "no neuron ({index},{layer}) in this architecture")
            }
            Error::InvalidSpec(s) => f.write_str(s),
            Error::VectorOutput(n) => {
                write!(f, "analysis requires a scalar output, network has {n} outputs")
            }
            Error::CellLimitExceeded { limit } => {
                write!(f, "arrangement exceeded the cell cap of {limit}")
            }
            Error::InconsistentComplex(s) => write!(f, "inconsistent complex: {s}"),
            Error::GridTooLarge { points, cap } => {
                write!(f, "grid of {points} points exceeds the cap of {cap}")
            }
            Error::InvalidArgument(s) => f.write_str(s),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
