use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    Domain(String),
    #[error("domain not compactly contained: transversal radius {0} must be < 1")]
    NotCompact(f64),
    #[error("singular operator: smallest singular value estimate {sigma_min:.3e} (threshold {threshold:.3e})")]
    Singular { sigma_min: f64, threshold: f64 },
    #[error("linear algebra failure: {0}")]
    Linear(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("tangential geodesic (|p| = {0}) rejected")]
    Tangential(f64),
    #[error("neumann series diverged after {terms} terms (term norm {last:.3e})")]
    Divergence { terms: usize, last: f64 },
    #[error("neumann series did not reach tolerance in {0} terms")]
    NoConvergence(usize),
    #[error("no h in the ladder gives a contraction below {0}")]
    Ladder(f64),
    #[error("oscillatory chart does not fit: {0}")]
    ChartOverflow(String),
    #[error("lambda grid is not symmetric about zero")]
    GridAsymmetry,
    #[error("unknown phantom '{0}'")]
    UnknownPhantom(String),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("format: {0}")]
    Format(String),
    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage { stage, source: Box::new(self) }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
