//! Monte Carlo simulation of noisy Clifford+T circuits in the generalized
//! stabilizer representation.
//!
//! A pure state is stored as a stabilizer–destabilizer [`Tableau`] together
//! with a sparse vector of complex coefficients over the orthonormal basis
//! the tableau induces. Clifford gates only touch the tableau; Pauli errors
//! permute coefficients; measurements filter and merge them; `T`/`T†` at most
//! double them. See [`GenStabState`].
//!
//! The crate is organised bottom-up:
//!
//! - [`pauli`]: bit-packed Pauli strings with exact phases.
//! - [`tableau`]: Clifford conjugation, index shifts and the measurement pivot.
//! - [`genstab`]: the generalized stabilizer state and coset-bound analysis.
//! - [`circuit`]: the circuit text format, IR and statistics.
//! - [`noise`]: Pauli channels and the uniform depolarizing transformer.
//! - [`sampler`]: shot-parallel sampling with postselection.
//! - [`exec`]: the interpreter shared by the sampler and the oracle.
//! - [`oracle`]: a dense state-vector reference and lockstep cross-checking.

pub mod circuit;
pub mod error;
pub mod exec;
pub mod gate;
pub mod genstab;
pub mod noise;
pub mod oracle;
pub mod pauli;
pub mod sampler;
pub mod tableau;

pub use circuit::{CircuitProgram, CircuitStats, Instruction};
pub use error::SimError;
pub use gate::Gate;
pub use genstab::{CosetAnalysis, GenStabState};
pub use noise::{NoiseKind, NoiseOp};
pub use pauli::{Pauli, PauliString};
pub use sampler::{RunStats, SamplerConfig};
pub use tableau::Tableau;
