use thiserror::Error;

/// Errors raised by the simulation engines and the circuit front end.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("pauli length mismatch: {left} vs {right} qubits")]
    LengthMismatch { left: usize, right: usize },

    #[error("qubit {qubit} out of range for {num_qubits} qubits")]
    QubitOutOfRange { qubit: usize, num_qubits: usize },

    #[error("duplicate target qubit {0}")]
    DuplicateTarget(usize),

    #[error("gate {gate} expects {expected} targets, got {got}")]
    WrongArity {
        gate: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("malformed pauli string {0:?}")]
    BadPauli(String),

    #[error("pauli {0} is not hermitian")]
    NonHermitian(String),

    #[error("measurement of {0} is deterministic; no pivot exists")]
    NoPivot(String),

    #[error("pauli {0} is not in the stabilizer group up to sign")]
    NotInStabilizerGroup(String),

    #[error("{requested} qubits exceeds the supported maximum of {max}")]
    TooManyQubits { requested: usize, max: usize },

    #[error("coefficient capacity {capacity} exceeded ({needed} entries needed)")]
    Overflow { capacity: usize, needed: usize },

    #[error("corrupt state: {0}")]
    CorruptState(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("forced outcome has probability {probability:e}")]
    InconsistentForcing { probability: f64 },
}
