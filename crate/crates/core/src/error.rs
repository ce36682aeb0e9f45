use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("training diverged at epoch {epoch}, batch {batch} (loss = {loss})")]
    Divergence { epoch: usize, batch: usize, loss: f64 },

    #[error("excluded class {class}: {source}")]
    ProtocolClass {
        class: usize,
        #[source]
        source: alloc::boxed::Box<Error>,
    },

    #[error("class {0} has no samples")]
    EmptyClass(usize),

    #[error("pairing error: {0}")]
    Pairing(String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(&'static str),

    #[error("neighbourhood graph is disconnected (component sizes {0:?})")]
    DisconnectedGraph(Vec<usize>),

    #[error("eigensolver did not converge after {0} sweeps")]
    NoConvergence(usize),
}

impl Error {
    /// Whether the failure is numerical (divergence, non-convergence,
    /// non-finite values) rather than a bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NonFinite(_)
            | Error::Divergence { .. }
            | Error::NoConvergence(_)
            | Error::UndefinedCorrelation(_)
            | Error::DisconnectedGraph(_) => true,
            Error::ProtocolClass { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

macro_rules! bail_shape {
    ($($arg:tt)*) => {
        return Err($crate::Error::Shape(alloc::format!($($arg)*)))
    };
}

macro_rules! bail_arg {
    ($($arg:tt)*) => {
        return Err($crate::Error::InvalidArgument(alloc::format!($($arg)*)))
    };
}

pub(crate) use bail_arg;
pub(crate) use bail_shape;
