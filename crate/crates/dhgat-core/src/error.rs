use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Error type shared by the algorithmic layers of the crate.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A malformed input row (1-based data row index).
    Parse { row: usize, message: String },
    /// A label string outside the six canonical LIAR names.
    UnknownLabel(String),
    /// A configuration value outside its documented domain.
    Config(String),
    /// Graph construction or lookup failure.
    Graph(String),
    /// Embedding rows missing for the listed record ids.
    MissingIds(Vec<String>),
    /// An embedding row whose width disagrees with the rest of the table.
    Dimension { row: usize, expected: usize, got: usize },
    /// Training aborted; carries the epoch and a diagnostic.
    Train { epoch: usize, message: String },
    /// A split or loss call received no labeled nodes.
    EmptyLabeledSet,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Parse { row, message } => write!(f, "parse error at data row {row}: {message}"),
            Error::UnknownLabel(s) => write!(f, "unknown label string: {s:?}"),
            Error::Config(m) => write!(f, "invalid configuration: {m}"),
            Error::Graph(m) => write!(f, "graph error: {m}"),
            Error::MissingIds(ids) => {
                write!(f, "embedding table is missing {} record id(s): ", ids.len())?;
                for (i, id) in ids.iter().take(8).enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{id}")?;
                }
                if ids.len() > 8 {
                    write!(f, ", ...")?;
                }
                Ok(())
            }
            Error::Dimension { row, expected, got } => {
                write!(f, "embedding row {row} has {got} values, expected {expected}")
            }
            Error::Train { epoch, message } => {
                write!(f, "training aborted at epoch {epoch}: {message}")
            }
            Error::EmptyLabeledSet => write!(f, "labeled node set is empty"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
