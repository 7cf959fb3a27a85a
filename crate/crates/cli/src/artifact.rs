//! The compiled-circuit interchange file.
//!
//! A circuit file is a self-describing JSON document: the parameters the
//! circuit was compiled from, the (possibly module-rewritten) operation
//! stream, and the placement/communication summary.  Because compilation
//! is deterministic, `verify` can rebuild the reference from the recorded
//! parameters and compare operation by operation — any corruption of the
//! stored stream is pinpointed to a specific operation index before the
//! trajectory checks run.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use modshor_core::compile::{
    compile_modexp, compile_prime_iteration, CompiledModExp, ExpMode, PrimeIterationPlan,
    WindowConfig,
};
use modshor_core::distribute::{partition, CommStats, DistributedCircuit, ModuleLayout};
use modshor_core::ir::Circuit;

pub const FORMAT_TAG: &str = "modshor-circuit-v1";

/// Which compilation pipeline produced the file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    /// Plain windowed exponentiation `q_r ← g^{q_e} mod p`.
    Modexp,
    /// One full streamed prime iteration of the production pipeline.
    Iteration,
}

/// Everything needed to rebuild the circuit deterministically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompileParams {
    pub kind: ArtifactKind,
    pub prime: u64,
    pub base: u64,
    /// Exponent register width (modexp kind only).
    pub exponent_bits: u32,
    pub windows: WindowConfig,
    /// Uncompute the result register at the end (modexp kind only).
    pub uncompute_result: bool,
    /// Streaming windows emitted (iteration kind only).
    pub loading_windows: usize,
    pub n_qpu: u32,
    /// A memory module holds the streamed buffer (iteration kind, n_qpu > 1).
    pub memory_module: bool,
    pub seed: u64,
}

/// On-disk circuit document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CircuitFile {
    pub format: String,
    pub params: CompileParams,
    pub circuit: Circuit,
    /// `placement[register][bit]` = home module.
    pub placement: Vec<Vec<u32>>,
    pub n_modules: u32,
    pub comm: CommStats,
}

/// A freshly compiled reference: the distributed circuit plus the register
/// handles the oracle checks need.
pub struct Rebuilt {
    pub dist: DistributedCircuit,
    pub modexp: Option<CompiledModExp>,
    pub iteration: Option<PrimeIterationPlan>,
}

/// Compiles and partitions from `params` alone.
pub fn rebuild(params: &CompileParams) -> Result<Rebuilt> {
    let mut layout = ModuleLayout::new(params.n_qpu);
    if params.memory_module {
        layout = layout.with_memory_module();
    }
    match params.kind {
        ArtifactKind::Modexp => {
            let mode = if params.uncompute_result {
                ExpMode::UncomputeResult
            } else {
                ExpMode::KeepResult
            };
            let m = compile_modexp(
                params.prime,
                params.base,
                params.exponent_bits,
                &params.windows,
                mode,
            )?;
            let dist = partition(&m.circuit, &layout)?;
            Ok(Rebuilt { dist, modexp: Some(m), iteration: None })
        }
        ArtifactKind::Iteration => {
            let memory = params.memory_module.then_some(params.n_qpu);
            let plan = compile_prime_iteration(
                params.prime,
                params.base,
                &params.windows,
                params.loading_windows,
                memory,
                params.seed,
            )?;
            let dist = partition(&plan.circuit, &layout)?;
            Ok(Rebuilt { dist, modexp: None, iteration: Some(plan) })
        }
    }
}

impl CircuitFile {
    pub fn from_rebuilt(params: CompileParams, r: &Rebuilt) -> Self {
        CircuitFile {
            format: FORMAT_TAG.to_string(),
            params,
            circuit: r.dist.circuit.clone(),
            placement: r.dist.placement.clone(),
            n_modules: r.dist.n_modules,
            comm: r.dist.comm_stats(),
        }
    }

    pub fn to_json_bytes(&self) -> Vec<u8> {
        let mut v = serde_json::to_vec_pretty(self).expect("circuit file serializes");
        v.push(b'\n');
        v
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read circuit file {}", path.display()))?;
        let file: CircuitFile = serde_json::from_str(&text)
            .with_context(|| format!("{} is not a circuit file", path.display()))?;
        if file.format != FORMAT_TAG {
            bail!("{}: unsupported format tag {:?}", path.display(), file.format);
        }
        Ok(file)
    }
}

/// How a stored stream diverges from its deterministic rebuild.
#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub rebuilt_ok: bool,
    pub ops_compared: usize,
    /// Sequence id of the first operation that does not match the rebuild.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_divergent_op: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

/// Compares the stored circuit with its deterministic rebuild and names
/// the first divergent operation.
pub fn audit(file: &CircuitFile, reference: &DistributedCircuit) -> AuditReport {
    let stored = &file.circuit;
    let rebuilt = &reference.circuit;
    if stored.registers != rebuilt.registers {
        return AuditReport {
            rebuilt_ok: false,
            ops_compared: 0,
            first_divergent_op: None,
            detail: Some("register table differs from deterministic rebuild".into()),
        };
    }
    let n = stored.ops.len().min(rebuilt.ops.len());
    for i in 0..n {
        if stored.ops[i] != rebuilt.ops[i] {
            return AuditReport {
                rebuilt_ok: false,
                ops_compared: i + 1,
                first_divergent_op: Some(stored.ops[i].seq),
                detail: Some(format!(
                    "operation {} differs from deterministic rebuild",
                    stored.ops[i].seq
                )),
            };
        }
    }
    if stored.ops.len() != rebuilt.ops.len() {
        return AuditReport {
            rebuilt_ok: false,
            ops_compared: n,
            first_divergent_op: Some(n as u64),
            detail: Some(format!(
                "operation count differs: file has {}, rebuild has {}",
                stored.ops.len(),
                rebuilt.ops.len()
            )),
        };
    }
    AuditReport {
        rebuilt_ok: true,
        ops_compared: n,
        first_divergent_op: None,
        detail: None,
    }
}
