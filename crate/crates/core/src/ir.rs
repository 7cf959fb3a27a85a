//! Fundamental-operation circuit representation.
//!
//! Circuits are sequences of a dozen macro operations built around three
//! primitives: *loading* a table value into a scratch register addressed by
//! live qubits, *adding* one register into another, and *cleaning* a register
//! by X-basis measurement. Cleaning leaves behind a ±1 phase that depends on
//! the erased value and the measurement outcome; those phases are repaired
//! later by `Unlookup` operations that either cost real gates (table
//! fixups on live address windows) or are free classical frame bookkeeping.
//!
//! Paulis, Hadamards and phase gates are deliberately absent: everything the
//! pipeline compiles is a classical permutation plus diagonal ±1 phases, so
//! Pauli corrections ride in a tracked frame at zero cost, and any operation
//! that would require a ±i phase is a bug, not an approximation.
//!
//! The on-disk form is line-delimited JSON: a header line carrying the
//! register table, record count and metadata, then one operation per line in
//! sequence order with stable field ordering.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index into [`Circuit::registers`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RegisterId(pub u32);

/// Identifier of one X-basis measurement record. Outcomes are shared by all
/// trajectories of a verification run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RecordId(pub u32);

/// A single qubit: register plus bit position (LSB = 0).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Bit {
    pub reg: RegisterId,
    pub bit: u32,
}

impl Bit {
    pub fn new(reg: RegisterId, bit: u32) -> Self {
        Bit { reg, bit }
    }
}

/// Named quantum register.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Register {
    pub name: String,
    pub width: u32,
    /// Role tag ("exponent", "result", "scratch", "memory", ...) used by
    /// the distributor and reports; not semantically load-bearing.
    #[serde(skip_serializing_if = "Option::is_none")]
    #[serde(default)]
    pub role: Option<String>,
}

/// How an `Unlookup` is realised.
///
/// `Lookup` fixups are real phase-lookup circuits on a live address window
/// and carry gate cost. `Frame` fixups are classical phase bookkeeping:
/// diagonal corrections that commute through the permutation circuit and are
/// folded into the final readout, costing nothing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FixupKind {
    Lookup,
    Frame,
}

/// Phase content of an `Unlookup`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PhaseSpec {
    /// Explicit phase bit per address value.
    Bits(Vec<u8>),
    /// XOR of `parity(table[addr] & outcome(record))` over the listed pairs.
    /// This is the shape produced by merging the fixups of mirrored
    /// additions: each measurement contributed `(-1)^{table[addr] ∧ M}`.
    Tables(Vec<PhasePair>),
    /// `parity(addr_value & outcome(record))`: the frame form of cleaning a
    /// register whose erased value is live again at the fixup point.
    SelfParity { record: RecordId },
    /// Phase of a wrap-step cleaning, reconstructed from live data. The
    /// address is `index_bits` of table address followed by the accumulator
    /// value; wrapping occurred iff the reduced accumulator is smaller than
    /// the table entry, so the flip is
    /// `parity(wrap[acc < table[index]] & outcome(record))`.
    WrapCompare { table: Vec<u64>, wrap: [u64; 2], record: RecordId, index_bits: u32 },
}

/// One `(table, record)` contribution to a merged phase fixup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePair {
    pub table: Vec<u64>,
    pub record: RecordId,
}

/// The macro operations circuits are written in.
///
/// Sequence ids are carried alongside (see [`SeqOp`]); operations reference
/// registers by index and qubits by `(register, bit)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FundamentalOp {
    /// `target ^= table[addr]`, with `addr` read LSB-first from live qubits.
    /// An empty address makes this a constant XOR — a frame update with no
    /// gate cost, used to splice classical constants into adders.
    Load { addr: Vec<Bit>, table: Vec<u64>, target: RegisterId },
    /// `dest <- (dest + src) mod 2^width`; `src` is unchanged.
    Add { dest: RegisterId, src: RegisterId, width: u32 },
    /// Exchange two same-width registers (patch relabeling plus one move).
    SwapRegs { a: RegisterId, b: RegisterId },
    /// X-basis cleaning: the register collapses to zero and the trajectory
    /// phase picks up `parity(value ∧ outcome)`. `terminal` marks records
    /// whose phase is deliberately left to the final readout.
    MeasureX { register: RegisterId, record: RecordId, terminal: bool },
    /// Phase repair for earlier cleanings; see [`FixupKind`]. `split`
    /// selects the two-half one-hot realisation, cheaper for addresses of
    /// four or more bits.
    Unlookup { addr: Vec<Bit>, phase: PhaseSpec, kind: FixupKind, split: bool },
    /// One control fanned out over several targets; implemented as a
    /// sequential chain of CNOTs.
    CNOTCascade { control: Bit, targets: Vec<Bit> },
    /// Toffoli; realised from a factory resource state in the cost model.
    CCX { c1: Bit, c2: Bit, target: Bit },
    /// Bare T-state injection; only scheduling cost, classically inert on
    /// zero bits (injection on a set bit would create a ±i phase and is
    /// rejected by the verifier).
    TInject { target: Bit },
    /// Bring a register from the idle pool into use.
    AllocQubits { register: RegisterId },
    /// Return a register to the idle pool.
    FreeQubits { register: RegisterId },
    /// Move qubits between modules; placement only, no data change.
    Teleport { bits: Vec<Bit>, from_module: u32, to_module: u32 },
    /// Entangle one qubit per listed module with `source` so a following
    /// per-module cascade can fan a load out locally; placement only.
    GhzBroadcast { source: Bit, modules: Vec<u32> },
}

/// Operation plus its monotone sequence id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeqOp {
    pub seq: u64,
    pub op: FundamentalOp,
}

/// Free-form circuit annotations surfaced in the file header.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CircuitMeta {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub modulus: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prime: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exponent_width: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w1: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub we: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wm: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

/// A circuit: registers, operations in sequence order, measurement record
/// count and annotations.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Circuit {
    pub registers: Vec<Register>,
    pub records: u32,
    pub meta: CircuitMeta,
    pub ops: Vec<SeqOp>,
}

/// Severity of a validation diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Severity {
    Error,
    Warning,
}

/// One validation finding, reported as data rather than a panic.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Diagnostic {
    pub seq: Option<u64>,
    pub severity: Severity,
    pub message: String,
}

/// Layer weights for depth accounting.
///
/// A *layer* is one logical gate step; every layer on the critical path pays
/// one stabiliser cycle, so reported circuit depth counts two entries per
/// layer (the gate and its error-correction cycle). Cascades are sequential
/// chains of CNOTs; table loads walk their entries with one AND step each
/// and write value *differences* between consecutive entries; adders ripple
/// carry bit by bit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpWeights {
    /// Critical-path layers of one factory-fed Toffoli.
    pub ccx_layers: u64,
    /// Layers of a single CNOT.
    pub cnot_layers: u64,
    /// Toffolis per adder bit position.
    pub adder_ccx_per_bit: u64,
    /// CNOTs per adder bit position.
    pub adder_cnot_per_bit: u64,
    /// Layers of one X-basis measurement.
    pub measure_layers: u64,
    /// Layers of a register swap.
    pub swap_layers: u64,
}

impl Default for OpWeights {
    fn default() -> Self {
        OpWeights {
            ccx_layers: 4,
            cnot_layers: 1,
            adder_ccx_per_bit: 2,
            adder_cnot_per_bit: 2,
            measure_layers: 1,
            swap_layers: 1,
        }
    }
}

impl OpWeights {
    /// Light weights (single-layer primitives, adders collapsed to one
    /// layer) for conflict-model tests against an independent scheduler.
    pub fn unit() -> Self {
        OpWeights {
            ccx_layers: 1,
            cnot_layers: 1,
            adder_ccx_per_bit: 0,
            adder_cnot_per_bit: 0,
            measure_layers: 1,
            swap_layers: 1,
        }
    }

    /// Layer count of one operation executed within a single module.
    pub fn op_layers(&self, op: &FundamentalOp) -> u64 {
        match op {
            FundamentalOp::Load { addr, table, .. } => {
                if addr.is_empty() {
                    return 0; // constant XOR: Pauli frame update
                }
                let mut layers = 0u64;
                let mut prev = 0u64;
                for (i, &v) in table.iter().enumerate() {
                    if addr.len() > 1 || i == 0 {
                        // pointer walk / unary read step
                        if i > 0 || addr.len() > 1 {
                            layers += self.ccx_layers;
                        }
                    } else {
                        layers += self.cnot_layers; // 1-bit address: plain control
                    }
                    layers += (v ^ prev).count_ones() as u64 * self.cnot_layers;
                    prev = v;
                }
                layers
            }
            FundamentalOp::Add { width, .. } => {
                // special case used by unit-weight oracles
                if self.adder_ccx_per_bit == 0 && self.adder_cnot_per_bit == 0 {
                    return 1;
                }
                *width as u64
                    * (self.adder_ccx_per_bit * self.ccx_layers
                        + self.adder_cnot_per_bit * self.cnot_layers)
            }
            FundamentalOp::SwapRegs { .. } => self.swap_layers,
            FundamentalOp::MeasureX { .. } => self.measure_layers,
            FundamentalOp::Unlookup { addr, kind, split, .. } => match kind {
                FixupKind::Frame => 0,
                FixupKind::Lookup => {
                    let w = addr.len() as u64;
                    if *split {
                        // two half-width one-hot reads plus the phase pass
                        let half = 1u64 << w.div_ceil(2);
                        2 * half * self.ccx_layers + half * self.cnot_layers
                    } else {
                        // sequential walk like a plain table load
                        let entries = 1u64 << w;
                        entries * (self.ccx_layers + self.cnot_layers)
                    }
                }
            },
            FundamentalOp::CNOTCascade { targets, .. } => {
                targets.len() as u64 * self.cnot_layers
            }
            FundamentalOp::CCX { .. } => self.ccx_layers,
            FundamentalOp::TInject { .. } => 1,
            FundamentalOp::AllocQubits { .. } | FundamentalOp::FreeQubits { .. } => 0,
            FundamentalOp::Teleport { .. } | FundamentalOp::GhzBroadcast { .. } => 0,
        }
    }
}

impl Circuit {
    pub fn new(meta: CircuitMeta) -> Self {
        Circuit { registers: Vec::new(), records: 0, meta, ops: Vec::new() }
    }

    /// Declares a register and returns its id.
    pub fn add_register(&mut self, name: impl Into<String>, width: u32) -> RegisterId {
        self.registers.push(Register { name: name.into(), width, role: None });
        RegisterId(self.registers.len() as u32 - 1)
    }

    /// Appends an operation with the next sequence id.
    pub fn push(&mut self, op: FundamentalOp) -> u64 {
        let seq = self.ops.len() as u64;
        self.ops.push(SeqOp { seq, op });
        seq
    }

    /// Reserves the next measurement record id.
    pub fn new_record(&mut self) -> RecordId {
        let id = RecordId(self.records);
        self.records += 1;
        id
    }

    pub fn width(&self, reg: RegisterId) -> u32 {
        self.registers[reg.0 as usize].width
    }

    pub fn register_named(&self, name: &str) -> Option<RegisterId> {
        self.registers.iter().position(|r| r.name == name).map(|i| RegisterId(i as u32))
    }

    /// Width of the register each record measures, in op order.
    pub fn record_widths(&self) -> Vec<u32> {
        let mut widths = vec![0u32; self.records as usize];
        for sop in &self.ops {
            if let FundamentalOp::MeasureX { register, record, .. } = &sop.op {
                widths[record.0 as usize] = self.width(*register);
            }
        }
        widths
    }

    /// Qubits an operation reads or writes; the conflict set for depth and
    /// scheduling. Frame fixups and pure bookkeeping touch nothing.
    pub fn touched_bits(&self, op: &FundamentalOp) -> Vec<Bit> {
        let all = |reg: RegisterId| -> Vec<Bit> {
            (0..self.width(reg).min(64)).map(|b| Bit::new(reg, b)).collect()
        };
        match op {
            FundamentalOp::Load { addr, target, .. } => {
                let mut v = addr.clone();
                v.extend(all(*target));
                v
            }
            FundamentalOp::Add { dest, src, width } => {
                let mut v: Vec<Bit> = (0..*width).map(|b| Bit::new(*dest, b)).collect();
                v.extend((0..*width).map(|b| Bit::new(*src, b)));
                v
            }
            FundamentalOp::SwapRegs { a, b } => {
                let mut v = all(*a);
                v.extend(all(*b));
                v
            }
            FundamentalOp::MeasureX { register, .. } => all(*register),
            FundamentalOp::Unlookup { addr, kind, .. } => match kind {
                FixupKind::Frame => Vec::new(),
                FixupKind::Lookup => addr.clone(),
            },
            FundamentalOp::CNOTCascade { control, targets } => {
                let mut v = vec![*control];
                v.extend(targets.iter().copied());
                v
            }
            FundamentalOp::CCX { c1, c2, target } => vec![*c1, *c2, *target],
            FundamentalOp::TInject { target } => vec![*target],
            FundamentalOp::AllocQubits { .. } | FundamentalOp::FreeQubits { .. } => Vec::new(),
            FundamentalOp::Teleport { bits, .. } => bits.clone(),
            FundamentalOp::GhzBroadcast { source, .. } => vec![*source],
        }
    }

    /// Critical-path length at operation granularity: every gate-bearing
    /// operation counts one step, frame fixups and placement bookkeeping
    /// count zero. Operations conflict exactly when they touch a common
    /// qubit; conflict-free operations overlap freely.
    pub fn depth(&self) -> u64 {
        let mut bit_front: HashMap<Bit, u64> = HashMap::new();
        let mut max_end = 0u64;
        for sop in &self.ops {
            if !op_is_costed(&sop.op) {
                continue;
            }
            let touched = self.touched_bits(&sop.op);
            let start = touched.iter().filter_map(|b| bit_front.get(b)).copied().max().unwrap_or(0);
            let end = start + 1;
            for b in touched {
                bit_front.insert(b, end);
            }
            max_end = max_end.max(end);
        }
        max_end
    }

    /// Critical-path length in gate layers (no error-correction doubling).
    pub fn layer_critical_path(&self, weights: &OpWeights) -> u64 {
        let mut bit_front: HashMap<Bit, u64> = HashMap::new();
        let mut max_end = 0u64;
        for sop in &self.ops {
            let touched = self.touched_bits(&sop.op);
            let layers = weights.op_layers(&sop.op);
            if touched.is_empty() && layers == 0 {
                continue;
            }
            let start = touched.iter().filter_map(|b| bit_front.get(b)).copied().max().unwrap_or(0);
            let end = start + layers;
            for b in touched {
                bit_front.insert(b, end);
            }
            max_end = max_end.max(end);
        }
        max_end
    }

    /// Structural validation. Returns diagnostics as data; `severity ==
    /// Error` entries make the circuit unusable.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let nregs = self.registers.len() as u32;
        let err = |seq: Option<u64>, message: String| Diagnostic {
            seq,
            severity: Severity::Error,
            message,
        };

        for (i, r) in self.registers.iter().enumerate() {
            if r.width == 0 {
                out.push(err(None, format!("register `{}` has zero width", r.name)));
            }
            if self.registers[..i].iter().any(|q| q.name == r.name) {
                out.push(err(None, format!("duplicate register name `{}`", r.name)));
            }
        }

        let mut prev_seq: Option<u64> = None;
        let mut measured: Vec<Option<u64>> = vec![None; self.records as usize];
        let mut referenced: Vec<bool> = vec![false; self.records as usize];
        let mut terminal: Vec<bool> = vec![false; self.records as usize];

        let check_bit = |b: &Bit, out: &mut Vec<Diagnostic>, seq: u64| {
            if b.reg.0 >= nregs {
                out.push(Diagnostic {
                    seq: Some(seq),
                    severity: Severity::Error,
                    message: format!("bit references unknown register {}", b.reg.0),
                });
            } else if b.bit >= self.registers[b.reg.0 as usize].width {
                out.push(Diagnostic {
                    seq: Some(seq),
                    severity: Severity::Error,
                    message: format!(
                        "bit {} out of range for register `{}` of width {}",
                        b.bit,
                        self.registers[b.reg.0 as usize].name,
                        self.registers[b.reg.0 as usize].width
                    ),
                });
            }
        };
        let check_reg = |r: RegisterId, out: &mut Vec<Diagnostic>, seq: u64| {
            if r.0 >= nregs {
                out.push(Diagnostic {
                    seq: Some(seq),
                    severity: Severity::Error,
                    message: format!("unknown register {}", r.0),
                });
                return false;
            }
            true
        };

        for sop in &self.ops {
            let seq = sop.seq;
            if let Some(p) = prev_seq {
                if seq <= p {
                    out.push(err(Some(seq), format!("sequence id {seq} not above predecessor {p}")));
                }
            }
            prev_seq = Some(seq);

            match &sop.op {
                FundamentalOp::Load { addr, table, target } => {
                    for b in addr {
                        check_bit(b, &mut out, seq);
                    }
                    if check_reg(*target, &mut out, seq) {
                        let w = self.width(*target);
                        if w > 63 {
                            out.push(err(Some(seq), format!("load target wider than 63 bits ({w})")));
                        }
                        let expect = 1usize << addr.len();
                        if table.len() != expect {
                            out.push(err(
                                Some(seq),
                                format!("table length {} != 2^{} = {expect}", table.len(), addr.len()),
                            ));
                        }
                        if w < 64 {
                            if let Some(v) = table.iter().find(|&&v| v >> w != 0) {
                                out.push(err(Some(seq), format!("table value {v} exceeds target width {w}")));
                            }
                        }
                    }
                }
                FundamentalOp::Add { dest, src, width } => {
                    if check_reg(*dest, &mut out, seq) && check_reg(*src, &mut out, seq) {
                        if dest == src {
                            out.push(err(Some(seq), "add with aliased operands".into()));
                        }
                        if *width > self.width(*dest) || *width > self.width(*src) {
                            out.push(err(
                                Some(seq),
                                format!(
                                    "add width {width} exceeds operand widths {}/{}",
                                    self.width(*dest),
                                    self.width(*src)
                                ),
                            ));
                        }
                        if *width > 63 {
                            out.push(err(Some(seq), format!("add wider than 63 bits ({width})")));
                        }
                    }
                }
                FundamentalOp::SwapRegs { a, b } => {
                    if check_reg(*a, &mut out, seq) && check_reg(*b, &mut out, seq) {
                        if self.width(*a) != self.width(*b) {
                            out.push(err(Some(seq), "swap of registers with different widths".into()));
                        }
                    }
                }
                FundamentalOp::MeasureX { register, record, terminal: t } => {
                    check_reg(*register, &mut out, seq);
                    if record.0 >= self.records {
                        out.push(err(Some(seq), format!("record {} beyond declared count", record.0)));
                    } else if let Some(first) = measured[record.0 as usize] {
                        out.push(err(Some(seq), format!("record {} already produced at op {first}", record.0)));
                    } else {
                        measured[record.0 as usize] = Some(seq);
                        terminal[record.0 as usize] = *t;
                    }
                }
                FundamentalOp::Unlookup { addr, phase, kind, .. } => {
                    for b in addr {
                        check_bit(b, &mut out, seq);
                    }
                    if addr.len() > 63 {
                        out.push(err(Some(seq), format!("fixup address too wide ({} bits)", addr.len())));
                        continue;
                    }
                    let tabular = matches!(phase, PhaseSpec::Bits(_) | PhaseSpec::Tables(_));
                    if tabular && addr.len() > 32 {
                        out.push(err(
                            Some(seq),
                            format!("tabulated fixup address too wide ({} bits)", addr.len()),
                        ));
                        continue;
                    }
                    let mut refs: Vec<RecordId> = Vec::new();
                    match phase {
                        PhaseSpec::Bits(bits) => {
                            if bits.len() != 1 << addr.len() {
                                out.push(err(
                                    Some(seq),
                                    format!("phase table length {} != 2^{}", bits.len(), addr.len()),
                                ));
                            }
                        }
                        PhaseSpec::Tables(pairs) => {
                            for pair in pairs {
                                if pair.table.len() != 1 << addr.len() {
                                    out.push(err(
                                        Some(seq),
                                        format!("fixup table length {} != 2^{}", pair.table.len(), addr.len()),
                                    ));
                                }
                                refs.push(pair.record);
                            }
                        }
                        PhaseSpec::SelfParity { record } => refs.push(*record),
                        PhaseSpec::WrapCompare { table, record, index_bits, .. } => {
                            if *index_bits as usize > addr.len() || *index_bits > 32 {
                                out.push(err(
                                    Some(seq),
                                    format!("wrap fixup index width {index_bits} exceeds address {}", addr.len()),
                                ));
                            } else if table.len() != 1 << index_bits {
                                out.push(err(
                                    Some(seq),
                                    format!("wrap fixup table length {} != 2^{index_bits}", table.len()),
                                ));
                            }
                            refs.push(*record);
                        }
                    }
                    for r in refs {
                        if r.0 >= self.records {
                            out.push(err(Some(seq), format!("fixup references unknown record {}", r.0)));
                        } else {
                            referenced[r.0 as usize] = true;
                            if *kind == FixupKind::Lookup && measured[r.0 as usize].is_none() {
                                out.push(err(
                                    Some(seq),
                                    format!("lookup fixup precedes measurement of record {}", r.0),
                                ));
                            }
                        }
                    }
                }
                FundamentalOp::CNOTCascade { control, targets } => {
                    check_bit(control, &mut out, seq);
                    for t in targets {
                        check_bit(t, &mut out, seq);
                        if t == control {
                            out.push(err(Some(seq), "cascade target equals control".into()));
                        }
                    }
                }
                FundamentalOp::CCX { c1, c2, target } => {
                    for b in [c1, c2, target] {
                        check_bit(b, &mut out, seq);
                    }
                    if c1 == c2 || c1 == target || c2 == target {
                        out.push(err(Some(seq), "toffoli with repeated operand".into()));
                    }
                }
                FundamentalOp::TInject { target } => check_bit(target, &mut out, seq),
                FundamentalOp::AllocQubits { register } | FundamentalOp::FreeQubits { register } => {
                    check_reg(*register, &mut out, seq);
                }
                FundamentalOp::Teleport { bits, .. } => {
                    for b in bits {
                        check_bit(b, &mut out, seq);
                    }
                }
                FundamentalOp::GhzBroadcast { source, .. } => check_bit(source, &mut out, seq),
            }
        }

        for (i, m) in measured.iter().enumerate() {
            match m {
                None => out.push(Diagnostic {
                    seq: None,
                    severity: Severity::Error,
                    message: format!("record {i} declared but never measured"),
                }),
                Some(seq) => {
                    if !referenced[i] && !terminal[i] {
                        out.push(Diagnostic {
                            seq: Some(*seq),
                            severity: Severity::Warning,
                            message: format!("record {i} has no phase fixup and is not marked terminal"),
                        });
                    }
                }
            }
        }
        out
    }

    /// True when validation produced no `Error` diagnostics.
    pub fn is_valid(&self) -> bool {
        self.validate().iter().all(|d| d.severity != Severity::Error)
    }

    /// Errors out (with the diagnostic count) if validation fails.
    pub fn ensure_valid(&self) -> Result<()> {
        let errors = self.validate().into_iter().filter(|d| d.severity == Severity::Error).count();
        if errors > 0 {
            return Err(Error::InvalidCircuit(errors));
        }
        Ok(())
    }

    /// Writes the line-delimited JSON form: header, then one op per line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        let header = Header {
            format: FORMAT_NAME.into(),
            version: FORMAT_VERSION,
            registers: self.registers.clone(),
            records: self.records,
            meta: self.meta.clone(),
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for op in &self.ops {
            serde_json::to_writer(&mut w, op)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Reads the line-delimited JSON form produced by [`Self::write_jsonl`].
    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let head_line = lines
            .next()
            .ok_or_else(|| Error::Config("empty circuit file".into()))??;
        let header: Header = serde_json::from_str(&head_line)?;
        if header.format != FORMAT_NAME {
            return Err(Error::Config(format!("unrecognised circuit format `{}`", header.format)));
        }
        let mut circuit = Circuit {
            registers: header.registers,
            records: header.records,
            meta: header.meta,
            ops: Vec::new(),
        };
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            circuit.ops.push(serde_json::from_str(&line)?);
        }
        Ok(circuit)
    }

    /// Total Toffoli count of the circuit: explicit `CCX` ops plus the AND
    /// steps implied by multi-bit table loads and adder carries.
    pub fn toffoli_count(&self) -> u64 {
        let mut count = 0u64;
        for sop in &self.ops {
            count += match &sop.op {
                FundamentalOp::CCX { .. } => 1,
                FundamentalOp::Load { addr, table, .. } => {
                    if addr.len() > 1 {
                        table.len() as u64 - 1
                    } else {
                        0
                    }
                }
                FundamentalOp::Add { width, .. } => 2 * *width as u64,
                FundamentalOp::Unlookup { addr, kind: FixupKind::Lookup, split, .. } => {
                    if *split {
                        2 * (1u64 << (addr.len() as u64).div_ceil(2))
                    } else {
                        (1u64 << addr.len()) - 1
                    }
                }
                _ => 0,
            };
        }
        count
    }
}

/// True when the operation occupies hardware for a nonzero time: frame
/// fixups, constant loads, and placement bookkeeping are free.
fn op_is_costed(op: &FundamentalOp) -> bool {
    match op {
        FundamentalOp::Load { addr, .. } => !addr.is_empty(),
        FundamentalOp::Unlookup { kind, .. } => *kind == FixupKind::Lookup,
        FundamentalOp::AllocQubits { .. }
        | FundamentalOp::FreeQubits { .. }
        | FundamentalOp::Teleport { .. }
        | FundamentalOp::GhzBroadcast { .. } => false,
        _ => true,
    }
}

const FORMAT_NAME: &str = "modshor-circuit";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    registers: Vec<Register>,
    records: u32,
    meta: CircuitMeta,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_reg_circuit() -> (Circuit, RegisterId, RegisterId) {
        let mut c = Circuit::new(CircuitMeta::default());
        let a = c.add_register("q_h", 5);
        let b = c.add_register("q_l", 5);
        (c, a, b)
    }

    #[test]
    fn empty_circuit_has_zero_depth() {
        let (c, _, _) = two_reg_circuit();
        assert_eq!(c.depth(), 0);
        assert_eq!(c.layer_critical_path(&OpWeights::default()), 0);
    }

    #[test]
    fn single_op_has_depth_one() {
        let (mut c, a, b) = two_reg_circuit();
        c.push(FundamentalOp::CNOTCascade { control: Bit::new(a, 0), targets: vec![Bit::new(b, 0)] });
        assert_eq!(c.depth(), 1);
        assert_eq!(c.layer_critical_path(&OpWeights::default()), 1);
    }

    #[test]
    fn disjoint_adds_run_in_parallel() {
        let mut c = Circuit::new(CircuitMeta::default());
        let a = c.add_register("q_h", 5);
        let b = c.add_register("q_l", 5);
        let x = c.add_register("q_r", 5);
        let y = c.add_register("q_e", 5);
        c.push(FundamentalOp::Add { dest: a, src: b, width: 5 });
        c.push(FundamentalOp::Add { dest: x, src: y, width: 5 });
        assert_eq!(c.depth(), 1);
        // sharing a register forces sequence
        c.push(FundamentalOp::Add { dest: a, src: y, width: 5 });
        assert_eq!(c.depth(), 2);
    }

    #[test]
    fn depth_invariant_under_commuting_reorder() {
        let mut c = Circuit::new(CircuitMeta::default());
        let a = c.add_register("q_h", 4);
        let b = c.add_register("q_l", 4);
        let x = c.add_register("q_r", 4);
        let ops = [
            FundamentalOp::CNOTCascade { control: Bit::new(a, 0), targets: vec![Bit::new(a, 1)] },
            FundamentalOp::CNOTCascade { control: Bit::new(b, 0), targets: vec![Bit::new(b, 1)] },
            FundamentalOp::Add { dest: x, src: b, width: 4 },
        ];
        c.push(ops[0].clone());
        c.push(ops[1].clone());
        c.push(ops[2].clone());
        let mut swapped = Circuit::new(CircuitMeta::default());
        swapped.add_register("q_h", 4);
        swapped.add_register("q_l", 4);
        swapped.add_register("q_r", 4);
        // ops[0] and ops[1] are operand-disjoint, so exchanging them cannot
        // change the critical path
        swapped.push(ops[1].clone());
        swapped.push(ops[0].clone());
        swapped.push(ops[2].clone());
        assert_eq!(c.depth(), swapped.depth());
        assert_eq!(
            c.layer_critical_path(&OpWeights::default()),
            swapped.layer_critical_path(&OpWeights::default())
        );
    }

    #[test]
    fn validate_flags_table_length() {
        let (mut c, a, b) = two_reg_circuit();
        c.push(FundamentalOp::Load {
            addr: vec![Bit::new(a, 0), Bit::new(a, 1)],
            table: vec![1, 2, 3], // needs 4 entries
            target: b,
        });
        let diags = c.validate();
        assert!(diags.iter().any(|d| d.severity == Severity::Error && d.message.contains("table length")));
    }

    #[test]
    fn validate_flags_unmeasured_record_reference() {
        let (mut c, a, _) = two_reg_circuit();
        let rec = c.new_record();
        c.push(FundamentalOp::Unlookup {
            addr: vec![Bit::new(a, 0)],
            phase: PhaseSpec::Tables(vec![PhasePair { table: vec![0, 1], record: rec }]),
            kind: FixupKind::Lookup,
            split: false,
        });
        let diags = c.validate();
        assert!(diags.iter().any(|d| d.message.contains("precedes measurement")));
        assert!(diags.iter().any(|d| d.message.contains("never measured")));
    }

    #[test]
    fn validate_accepts_frame_fixup_before_measurement() {
        // Frame fixups are classical corrections folded into readout; they
        // may cite a record that is produced later.
        let (mut c, a, _) = two_reg_circuit();
        let rec = c.new_record();
        c.push(FundamentalOp::Unlookup {
            addr: (0..5).map(|i| Bit::new(a, i)).collect(),
            phase: PhaseSpec::SelfParity { record: rec },
            kind: FixupKind::Frame,
            split: false,
        });
        c.push(FundamentalOp::MeasureX { register: a, record: rec, terminal: false });
        assert!(c.is_valid(), "{:?}", c.validate());
    }

    #[test]
    fn jsonl_round_trip() {
        let (mut c, a, b) = two_reg_circuit();
        let rec = c.new_record();
        c.meta.prime = Some(13);
        c.meta.label = Some("round-trip".into());
        c.push(FundamentalOp::Load { addr: vec![Bit::new(a, 0)], table: vec![0, 21], target: b });
        c.push(FundamentalOp::Add { dest: a, src: b, width: 5 });
        c.push(FundamentalOp::MeasureX { register: b, record: rec, terminal: true });

        let mut buf = Vec::new();
        c.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 4, "header plus one line per op");

        let back = Circuit::read_jsonl(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn jsonl_is_byte_stable() {
        let (mut c, a, b) = two_reg_circuit();
        c.push(FundamentalOp::Load { addr: vec![Bit::new(a, 0)], table: vec![0, 3], target: b });
        let mut one = Vec::new();
        let mut two = Vec::new();
        c.write_jsonl(&mut one).unwrap();
        c.write_jsonl(&mut two).unwrap();
        assert_eq!(one, two);
    }
}
