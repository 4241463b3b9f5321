use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("duplicate library entry {0:?}")]
    DuplicateLibraryEntry(String),
    #[error("duplicate object id {0}")]
    DuplicateId(u32),
    #[error("duplicate display name {0:?}")]
    DuplicateName(String),
    #[error("placement references unknown object id {0}")]
    UnknownObject(u32),
    #[error("object id {0} placed twice")]
    DuplicatePlacement(u32),
    #[error("object {0:?} has no placement")]
    Unplaced(String),
    #[error("malformed scene file: {0}")]
    Format(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TemplateError {
    #[error("template {template}: missing binding for placeholder {placeholder:?}")]
    MissingBinding {
        template: &'static str,
        placeholder: String,
    },
}

/// Failures reported by a completion backend.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    /// Connection refused, timeouts, 5xx and 429 responses. Retried.
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("credential error: {0}")]
    Credential(String),
    #[error("backend rejected the request: {0}")]
    Rejected(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("section {section:?}: {message}")]
pub struct ParseError {
    pub section: String,
    pub message: String,
}

impl ParseError {
    pub fn new(section: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            section: section.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatewayError {
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("gave up after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: BackendError },
    #[error(transparent)]
    Backend(BackendError),
    #[error("unparseable response after {attempts} attempts: {last}")]
    Parse { attempts: u32, last: ParseError },
}

/// Errors from the retrieval and extraction stages.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum StageError {
    #[error("empty description")]
    EmptyDescription,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("unresolved object name {0:?} in model output")]
    UnresolvedName(String),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("cannot orient an object towards its own position")]
    DegenerateOrientation,
    #[error("no free cell for {object:?}; blocked by {blockers:?}")]
    AllocationInfeasible {
        object: String,
        blockers: Vec<String>,
    },
    #[error("oracle capacity exceeded: {0}")]
    OracleCapacity(String),
    #[error(transparent)]
    Stage(#[from] StageError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodegenError {
    #[error("generated code still invalid after {rounds} feedback rounds: {report}")]
    Invalid {
        rounds: u32,
        report: Box<crate::codegen::CodeReport>,
    },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BenchError {
    #[error("pass@k needs 0 <= c <= n and 1 <= k <= n (got n={n}, c={c}, k={k})")]
    Bounds { n: u64, c: u64, k: u64 },
    #[error("empty suite")]
    EmptySuite,
    #[error("suite line {line}: {message}")]
    SuiteFormat { line: usize, message: String },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvolveError {
    #[error("empty description pool")]
    EmptyPool,
    #[error("rewrite method {0} does not apply to this description")]
    NotApplicable(&'static str),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("record line {line}: {message}")]
    Format { line: usize, message: String },
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed config {path}: {message}")]
    Malformed { path: String, message: String },
    #[error("invalid value for {key}: {message}")]
    Value { key: String, message: String },
}

/// Errors that abort a whole generation run.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("object retrieval: {0}")]
    Retrieval(StageError),
    #[error("layout extraction: {0}")]
    Extraction(StageError),
    #[error("placement assignment: {0}")]
    Assignment(EngineError),
    #[error("code generation: {0}")]
    Codegen(#[from] CodegenError),
    #[error(transparent)]
    Scene(#[from] SceneError),
}
