use thiserror::Error;

pub type Result<T> = std::result::Result<T, MixError>;

#[derive(Debug, Error)]
pub enum MixError {
    /// A row's category counts do not add up to the variable's trial count.
    #[error("observation {obs}, variable {var}: counts sum to {sum}, expected {expected}")]
    RowSum {
        obs: usize,
        var: usize,
        sum: i64,
        expected: u32,
    },

    #[error("observation {obs}, variable {var}: negative count {value}")]
    NegativeCount { obs: usize, var: usize, value: i64 },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("model does not match dataset: {0}")]
    DimensionMismatch(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// Every component assigns zero density to an observation.
    #[error("degenerate likelihood: observation {obs} has zero density under every component")]
    DegenerateLikelihood { obs: usize },

    #[error("component {component} received zero total responsibility")]
    EmptyComponent { component: usize },

    #[error(
        "all {components} components annihilated at once (penalty {penalty:.4} per component \
         exceeds every responsibility mass); the dataset is too small for this K_max, try lowering it"
    )]
    AllAnnihilated { components: usize, penalty: f64 },

    #[error("separation undefined for a single component")]
    UndefinedSeparation,

    #[error("infinite divergence: component {from} has mass where component {to} has none (variable {var}, category {category})")]
    InfiniteDivergence {
        from: usize,
        to: usize,
        var: usize,
        category: usize,
    },

    #[error(
        "rejection budget of {budget} draws exhausted without hitting separation [{lo}, {hi}]; \
         achieved range [{min_seen:.5}, {max_seen:.5}], consider widening the interval"
    )]
    RejectionBudget {
        budget: usize,
        lo: f64,
        hi: f64,
        min_seen: f64,
        max_seen: f64,
    },

    #[error("undefined association: {0}")]
    UndefinedAssociation(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("every candidate K failed to fit: {0}")]
    NoCandidate(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("unsupported model file version {found} (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl MixError {
    /// Short machine-readable tag, used in CLI error records.
    pub fn kind(&self) -> &'static str {
        match self {
            MixError::RowSum { .. } | MixError::NegativeCount { .. } | MixError::InvalidDataset(_) => {
                "validation"
            }
            MixError::DimensionMismatch(_) | MixError::InvalidModel(_) => "model",
            MixError::DegenerateLikelihood { .. } => "degenerate_likelihood",
            MixError::EmptyComponent { .. } => "empty_component",
            MixError::AllAnnihilated { .. } => "annihilation",
            MixError::UndefinedSeparation | MixError::InfiniteDivergence { .. } => "separation",
            MixError::RejectionBudget { .. } => "rejection_budget",
            MixError::UndefinedAssociation(_) => "association",
            MixError::Config(_) => "config",
            MixError::NoCandidate(_) => "no_candidate",
            MixError::Parse { .. } | MixError::Csv(_) | MixError::Json(_) => "parse",
            MixError::SchemaVersion { .. } => "schema_version",
            MixError::Io(_) => "io",
        }
    }
}
