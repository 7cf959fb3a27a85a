//! Error types shared across the crate.

use thiserror::Error;

/// Errors raised by the classical preprocessing, the compiler and the
/// verifier. Scheduling and configuration problems carry enough context to be
/// reported directly to a user.
#[derive(Debug, Error)]
pub enum Error {
    /// Not enough primes of the requested bit width to reach the configured
    /// redundancy threshold.
    #[error("exhausted {available} primes of {bits} bits before reaching the redundancy threshold")]
    NotEnoughPrimes { bits: u32, available: usize },

    /// A generator search was attempted on a number that is not prime.
    #[error("{0} is not prime; generator search is only defined for prime moduli")]
    NotPrime(u64),

    /// A power residue hit zero, i.e. the candidate prime divides the base.
    #[error("power residue of base {base} is divisible by {prime}; prime must be rejected")]
    ZeroResidue { base: u64, prime: u64 },

    /// A discrete logarithm does not exist for the requested value.
    #[error("no discrete logarithm of {value} to base {generator} modulo {prime}")]
    NoDiscreteLog { value: u64, generator: u64, prime: u64 },

    /// Residue count does not match the prime system.
    #[error("expected {expected} residues, got {got}")]
    ResidueCount { expected: usize, got: usize },

    /// Circuit validation found blocking problems.
    #[error("circuit failed validation with {0} error diagnostics")]
    InvalidCircuit(usize),

    /// A T injection landed on a set bit, which would introduce a phase the
    /// diagonal-classical execution model cannot represent.
    #[error("T injection at op {seq} hit a set bit; circuit is not diagonal-classical")]
    NonClassicalPhase { seq: u64 },

    /// A window configuration that cannot represent the requested modulus.
    #[error("adder width {f} cannot wrap modulus {modulus}: need 2^f > modulus")]
    AdderTooNarrow { f: u32, modulus: u64 },

    /// Requested module count exceeds the striping bound.
    #[error("{requested} modules requested but registers of {width} bits support at most {max} (two qubits per category per module)")]
    TooManyModules { requested: usize, width: u32, max: usize },

    /// The scheduler detected an operation that can never start.
    #[error("schedule deadlock at op {op_seq}: {reason}")]
    Deadlock { op_seq: u64, reason: String },

    /// Allocation request that the module cannot satisfy.
    #[error("allocation of {requested} patches exceeds remaining capacity {available}")]
    OutOfCapacity { requested: usize, available: usize },

    /// Configuration value out of range or inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// Underlying I/O failure while reading or writing artifacts.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed serialized data.
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
