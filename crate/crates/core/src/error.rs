use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate grid: need 2 <= m < n, got m={m}, n={n}")]
    DegenerateGrid { m: u32, n: u32 },
    #[error("thin digit set: {0}")]
    ThinDigitSet(String),
    #[error("bad probabilities: {0}")]
    BadProbabilities(String),
    #[error("duplicate cell ({i},{j})")]
    DuplicateCell { i: u32, j: u32 },
    #[error("cell ({i},{j}) lies outside the {n}x{m} grid")]
    CellOutOfGrid { i: u32, j: u32, n: u32, m: u32 },
    #[error("cell ({i},{j}) is not in the digit set")]
    CellNotInG { i: u32, j: u32 },
    #[error("config: {0}")]
    Config(String),

    #[error("no bracket: lhs(0) = {lhs0} <= 1")]
    NoBracket { lhs0: f64 },
    #[error("bisection did not reach residual {tol} (got {residual})")]
    NoConvergence { residual: f64, tol: f64 },

    #[error("the empty word has no parent or rectangle")]
    EmptyWord,
    #[error("the empty cylinder pair has no parent")]
    EmptyPair,
    #[error("invalid word: {0}")]
    InvalidWord(String),
    #[error("cylinder pair does not satisfy the order alignment")]
    MisalignedPair,
    #[error("rectangle arithmetic overflows at order {order}")]
    DepthOverflow { order: usize },
    #[error("inadmissible anchor word: {0}")]
    BadTau(String),
    #[error("cardinality cap {cap} exceeded (found at least {found})")]
    CapExceeded { cap: usize, found: usize },

    #[error("codebook size must be at least 1 and at most the pool size (k={k}, pool={pool})")]
    BadK { k: usize, pool: usize },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by user input rather than computation.
    pub fn is_config(&self) -> bool {
        if let Error::Stage { source, .. } = self {
            return source.is_config();
        }
        matches!(
            self,
            Error::DegenerateGrid { .. }
                | Error::ThinDigitSet(_)
                | Error::BadProbabilities(_)
                | Error::DuplicateCell { .. }
                | Error::CellOutOfGrid { .. }
                | Error::CellNotInG { .. }
                | Error::Config(_)
                | Error::InvalidWord(_)
        )
    }

    /// Process exit status: 2 for configuration errors, 3 when a cardinality
    /// cap is hit, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Stage { source, .. } => source.exit_code(),
            Error::CapExceeded { .. } => 3,
            e if e.is_config() => 2,
            _ => 1,
        }
    }

    pub(crate) fn at(stage: &'static str) -> impl FnOnce(Error) -> Error {
        move |e| Error::Stage {
            stage,
            source: Box::new(e),
        }
    }
}
