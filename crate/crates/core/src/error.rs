use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("mesh file parse error at line {line}: {msg}")]
    MeshParse { line: usize, msg: String },

    #[error("invalid mesh: {0}")]
    Mesh(String),

    #[error("element {element} is degenerate or tangled (signed area {area:.3e})")]
    TangledElement { element: usize, area: f64 },

    #[error("mechanism parse error at line {line}: {msg}")]
    MechanismParse { line: usize, msg: String },

    #[error("chemistry: {0}")]
    Chemistry(String),

    #[error("derivative recovery failed at node {node}: {msg}")]
    Recovery { node: usize, msg: String },

    #[error("monitor: {0}")]
    Monitor(String),

    #[error("mesh stepping stalled: time step underflow after {halvings} halvings")]
    MeshStall { halvings: u32 },

    #[error("assembly: {0}")]
    Assembly(String),

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("time step failed: {0}")]
    Step(String),

    #[error("pseudo-time march did not converge: scaled residual {residual:.3e} after {steps} steps")]
    NotConverged { steps: usize, residual: f64 },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CoreError {
    /// Exit code the CLI maps this error to: 1 for usage/input problems,
    /// 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CoreError::MeshParse { .. }
            | CoreError::Mesh(_)
            | CoreError::MechanismParse { .. }
            | CoreError::Config(_)
            | CoreError::Io(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
