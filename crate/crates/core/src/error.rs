use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("corrupt encoding: {0}")]
    CorruptEncoding(String),

    #[error("corrupt partial product: {0}")]
    CorruptPartial(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("accumulator access out of bounds: cell {cell} >= {cells}")]
    Bounds { cell: usize, cells: usize },

    #[error("invalid density {0}, expected a value in [0, 1]")]
    Density(f64),

    #[error("bad file format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
