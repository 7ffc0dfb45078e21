use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("empty layer has no modularity matrix")]
    EmptyLayer,

    #[error("graph has no edges in any layer")]
    EmptyGraph,

    #[error("node index {index} out of range for {num_nodes} nodes")]
    NodeOutOfRange { index: usize, num_nodes: usize },

    #[error("shape mismatch in {what}: expected {expected}, found {found}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("balance undefined for one community")]
    BalanceUndefined,

    #[error(
        "infeasible degree sequence: {unmatched} stubs left unmatched after {rounds} rewiring rounds; \
         try a lower mixing parameter, a smaller average degree or fewer communities"
    )]
    InfeasibleDegrees { unmatched: usize, rounds: usize },

    #[error("non-finite values in {0}")]
    NonFinite(&'static str),
}
