use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("duplicate node `{0}`")]
    DuplicateNode(String),
    #[error("self-loop on node `{0}`")]
    SelfLoop(String),
    #[error("graph exceeds {max} nodes")]
    TooManyNodes { max: usize },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("sets are not pairwise disjoint")]
    Overlap,
    #[error("selection node `{0}` cannot be queried")]
    SelectionQueried(String),
    #[error("variable index {0} out of range")]
    UnknownVariable(usize),
    #[error("graph has a directed cycle")]
    Cyclic,
    #[error("bidirected edge `{0}` <-> `{1}` is not supported here")]
    Bidirected(String, String),
    #[error("insufficient rows: have {have}, need more than {need}")]
    InsufficientRows { have: usize, need: usize },
    #[error("column `{0}` has zero variance")]
    ConstantColumn(String),
    #[error("singular regression design")]
    SingularRegression,
    #[error("context level {level} has {rows} rows (need at least 3)")]
    SmallContextLevel { level: f64, rows: usize },
    #[error("column `{0}` is not discrete")]
    NotDiscrete(String),
    #[error("missing p-value `{key}` in {kind} hit")]
    MissingPValue { kind: String, key: String },
    #[error("rejection sampling exceeded {attempts} attempts with {accepted} accepted rows")]
    AttemptCapExceeded { attempts: u64, accepted: usize },
    #[error("random-graph sampler gave up after {0} retries")]
    RetriesExhausted(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("malformed data: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
