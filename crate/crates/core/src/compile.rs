//! Compilation of windowed modular arithmetic into fundamental operations.
//!
//! Everything here reduces to one gadget: the *wrapping modular addition*.
//! To add a table value `t < p` into an accumulator holding `a < p`, the
//! compiler loads the shifted value `t − p + 2^f` (mod `2^{f+1}`, with
//! `2^f > p`) into a scratch register and adds it. The scratch is then
//! erased by an X-basis measurement. After the first addition the top
//! (overflow) bit of the accumulator reads exactly `[a + t ≥ p]`, so a
//! second, overflow-addressed load of `{0: 2^f + p, 1: 2^f}` plus one more
//! addition completes the reduction and returns the overflow bit to zero.
//!
//! Each erasure leaves a value-dependent ±1 phase. The first one is
//! repaired on the spot by a phase-lookup over the still-live address
//! window; the wrap erasure's phase depends on whether wrapping occurred,
//! which equals `[result < t]` — a function of live data — and is repaired
//! by a zero-cost frame fixup folded into the readout correction.
//!
//! Modular exponentiation walks exponent windows: the first two windows
//! are a single direct table load, each further window multiplies the
//! running power via a loop of two-dimensional lookup-additions, a register
//! swap, and a measurement of the retired factor. Uncomputation replays
//! the ladder inversely: multiply by the inverse factor, swap, then cancel
//! the old product with sign-negated tables, ending in |0⟩ with no
//! measurement left unrepaired.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ir::{
    Bit, Circuit, CircuitMeta, FixupKind, FundamentalOp, PhasePair, PhaseSpec, RegisterId,
};
use crate::residue::{is_prime_u64, modpow_u64};
use crate::trajectory::{InitPlan, TrajectorySet, VerificationReport};

/// Window sizes of the three lookup families: `w1` for streaming exponent
/// windows out of memory, `we` for exponent windows of the multiplication
/// ladder, `wm` for product slices inside one multiplication.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowConfig {
    pub w1: u32,
    pub we: u32,
    pub wm: u32,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig::production()
    }
}

impl WindowConfig {
    /// The production operating point for 2048-bit inputs.
    pub fn production() -> Self {
        WindowConfig { w1: 6, we: 3, wm: 3 }
    }

    /// Small windows for desk-scale exhaustive verification.
    pub fn desk() -> Self {
        WindowConfig { w1: 2, we: 2, wm: 2 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.w1 < 1 || self.we < 1 || self.wm < 1 {
            return Err(Error::Config("window sizes must be at least 1".into()));
        }
        if self.we + self.wm > 16 {
            return Err(Error::Config(format!(
                "lookup tables of 2^{} entries are not materialisable",
                self.we + self.wm
            )));
        }
        Ok(())
    }
}

/// Smallest `f` with `2^f > p`: the data width of wrap-adder registers
/// (which hold `f+1` bits including the overflow bit).
pub fn adder_f(p: u64) -> u32 {
    64 - p.leading_zeros()
}

fn width_mask(bits: u32) -> u64 {
    if bits >= 64 {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    }
}

/// Bits `[lo, lo+len)` of a register, LSB first.
fn bit_range(reg: RegisterId, lo: u32, len: u32) -> Vec<Bit> {
    (lo..lo + len).map(|b| Bit::new(reg, b)).collect()
}

/// Appends one wrapping modular addition:
/// `q_h ← (q_h + table[addr]) mod p`, using `q_l` as the load scratch.
///
/// Preconditions: `q_h` holds a value `< p`, `q_l` holds zero, all table
/// entries are `< p`, and both registers are at least `f+1` bits wide.
/// Postcondition: overflow bit back at zero, scratch zero, all measurement
/// phases repaired (table fixup on the live address, wrap fixup by frame).
pub fn compile_modular_add(
    c: &mut Circuit,
    q_h: RegisterId,
    q_l: RegisterId,
    addr: &[Bit],
    table: &[u64],
    p: u64,
) -> Result<()> {
    let f = adder_f(p);
    let w = f + 1;
    if c.width(q_h) < w || c.width(q_l) < w {
        return Err(Error::AdderTooNarrow { f, modulus: p });
    }
    if table.len() != 1usize << addr.len() {
        return Err(Error::Config(format!(
            "table length {} does not match a {}-bit address",
            table.len(),
            addr.len()
        )));
    }
    if let Some(&v) = table.iter().find(|&&v| v >= p) {
        return Err(Error::Config(format!("table value {v} not below modulus {p}")));
    }

    let mask = width_mask(w);
    // t  ->  t - p + 2^f  (mod 2^{f+1})
    let shifted: Vec<u64> = table
        .iter()
        .map(|&t| (t + (1u64 << f) + ((1u64 << w) - p)) & mask)
        .collect();

    let load_rec = c.new_record();
    c.push(FundamentalOp::Load { addr: addr.to_vec(), table: shifted.clone(), target: q_l });
    c.push(FundamentalOp::Add { dest: q_h, src: q_l, width: w });
    c.push(FundamentalOp::MeasureX { register: q_l, record: load_rec, terminal: false });
    c.push(FundamentalOp::Unlookup {
        addr: addr.to_vec(),
        phase: PhaseSpec::Tables(vec![PhasePair { table: shifted, record: load_rec }]),
        kind: FixupKind::Lookup,
        split: addr.len() >= 4,
    });

    // wrap: the overflow bit reads [a + t >= p]
    let wrap = [((1u64 << f) + p) & mask, 1u64 << f];
    let wrap_rec = c.new_record();
    c.push(FundamentalOp::Load {
        addr: vec![Bit::new(q_h, f)],
        table: wrap.to_vec(),
        target: q_l,
    });
    c.push(FundamentalOp::Add { dest: q_h, src: q_l, width: w });
    // Wrapping happened iff the reduced result is below the added value;
    // both are live here, so the wrap phase is classical bookkeeping.
    let mut compare_addr = addr.to_vec();
    compare_addr.extend(bit_range(q_h, 0, w));
    c.push(FundamentalOp::Unlookup {
        addr: compare_addr,
        phase: PhaseSpec::WrapCompare {
            table: table.to_vec(),
            wrap,
            record: wrap_rec,
            index_bits: addr.len() as u32,
        },
        kind: FixupKind::Frame,
        split: false,
    });
    c.push(FundamentalOp::MeasureX { register: q_l, record: wrap_rec, terminal: false });
    Ok(())
}

/// A standalone wrapping-adder circuit for oracle testing: the index
/// register addresses `table`, the accumulator starts at a caller-chosen
/// value via trajectory initialisation.
pub fn modular_add_circuit(p: u64, table: &[u64]) -> Result<(Circuit, RegisterId, RegisterId)> {
    let addr_bits = table.len().next_power_of_two().trailing_zeros();
    if table.len() != 1usize << addr_bits {
        return Err(Error::Config("table length must be a power of two".into()));
    }
    let f = adder_f(p);
    let mut c = Circuit::new(CircuitMeta { prime: Some(p), f: Some(f), ..CircuitMeta::default() });
    let q_e = c.add_register("q_e", addr_bits.max(1));
    let q_h = c.add_register("q_h", f + 1);
    let q_l = c.add_register("q_l", f + 1);
    let addr = bit_range(q_e, 0, addr_bits);
    compile_modular_add(&mut c, q_h, q_l, &addr, table, p)?;
    c.ensure_valid()?;
    Ok((c, q_e, q_h))
}

/// Whether an exponentiation keeps its result or uncomputes it back to
/// zero (the shape used between accumulation steps).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExpMode {
    KeepResult,
    UncomputeResult,
}

/// A compiled modular exponentiation `q_r ← g^{q_e} mod p` together with
/// its register handles.
#[derive(Debug, Clone)]
pub struct CompiledModExp {
    pub circuit: Circuit,
    pub q_e: RegisterId,
    pub q_r: RegisterId,
    pub q_h: RegisterId,
    pub q_l: RegisterId,
    pub prime: u64,
    pub base: u64,
    pub exponent_bits: u32,
    pub cfg: WindowConfig,
    pub mode: ExpMode,
}

/// One trajectory that missed its expected final state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryFailure {
    pub index: usize,
    pub exponent: u64,
    pub expected_q_r: u64,
    pub q_r: u64,
    pub q_h: u64,
    pub q_l: u64,
    pub phase: u8,
}

/// Verification outcome for a compiled exponentiation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModExpVerification {
    pub trajectories: usize,
    pub failures: Vec<TrajectoryFailure>,
    pub report: VerificationReport,
}

impl ModExpVerification {
    pub fn is_pass(&self) -> bool {
        self.failures.is_empty() && self.report.all_phases_zero
    }
}

impl CompiledModExp {
    /// Runs trajectories (exhaustive over the exponent when it has at most
    /// `exhaustive_limit` bits, else `k` sampled) and checks every final
    /// state against the integer modular-power oracle.
    pub fn verify(&self, k: usize, seed: u64, exhaustive_limit: u32) -> Result<ModExpVerification> {
        let plan = if self.exponent_bits <= exhaustive_limit {
            InitPlan::new().exhaustive(self.q_e)
        } else {
            InitPlan::new().random(self.q_e)
        };
        let set = TrajectorySet::run(&self.circuit, &plan, k, seed)?;
        let mut failures = Vec::new();
        for (i, run) in set.runs.iter().enumerate() {
            let e = run.initial[self.q_e.0 as usize];
            let expected_q_r = match self.mode {
                ExpMode::KeepResult => modpow_u64(self.base, e, self.prime),
                ExpMode::UncomputeResult => 0,
            };
            let q_r = run.r#final[self.q_r.0 as usize];
            let q_h = run.r#final[self.q_h.0 as usize];
            let q_l = run.r#final[self.q_l.0 as usize];
            let q_e_final = run.r#final[self.q_e.0 as usize];
            if q_r != expected_q_r || q_h != 0 || q_l != 0 || run.phase != 0 || q_e_final != e {
                failures.push(TrajectoryFailure {
                    index: i,
                    exponent: e,
                    expected_q_r,
                    q_r,
                    q_h,
                    q_l,
                    phase: run.phase,
                });
            }
        }
        Ok(ModExpVerification { trajectories: set.runs.len(), failures, report: set.report() })
    }
}

/// Register handles threaded through an exponentiation appended to an
/// existing circuit.
#[derive(Debug, Clone, Copy)]
pub struct ModExpRegs {
    pub q_e: RegisterId,
    pub q_r: RegisterId,
    pub q_h: RegisterId,
    pub q_l: RegisterId,
}

fn modexp_windows(exponent_bits: u32, we: u32) -> (u32, Vec<(u32, u32)>) {
    // the first two exponent windows cost a single direct load
    let direct_bits = exponent_bits.min(2 * we);
    let mut v = Vec::new();
    let mut k = direct_bits;
    while k < exponent_bits {
        let len = we.min(exponent_bits - k);
        v.push((k, len));
        k += len;
    }
    (direct_bits, v)
}

fn direct_table(p: u64, g: u64, direct_bits: u32) -> Vec<u64> {
    (0..1u64 << direct_bits).map(|s| modpow_u64(g, s, p)).collect()
}

fn slice_table(
    p: u64,
    g: u64,
    k: u32,
    win: u32,
    lo: u32,
    s_w: u32,
    invert: bool,
    negate: bool,
) -> Vec<u64> {
    let factor = {
        let b = modpow_u64(g, 1u64 << k, p);
        if invert {
            modpow_u64(b, p - 2, p) // Fermat inverse
        } else {
            b
        }
    };
    let mut t = Vec::with_capacity(1usize << (s_w + win));
    for s in 0..1u64 << (s_w + win) {
        let s_r = s & width_mask(s_w);
        let s_e = s >> s_w;
        let base_val = (1u64 << lo) % p;
        let v = (base_val * s_r) % p * modpow_u64(factor, s_e, p) % p;
        t.push(if negate { (p - v) % p } else { v });
    }
    t
}

/// `q_h ← q_r · g^{2^k·window} mod p`, one product slice at a time.
fn append_multiply(
    c: &mut Circuit,
    r: &ModExpRegs,
    p: u64,
    g: u64,
    k: u32,
    win: u32,
    cfg: &WindowConfig,
    invert: bool,
    negate: bool,
) -> Result<()> {
    let w = adder_f(p) + 1;
    let mut lo = 0;
    while lo < w {
        let s_w = cfg.wm.min(w - lo);
        let mut addr = bit_range(r.q_r, lo, s_w);
        addr.extend(bit_range(r.q_e, k, win));
        let table = slice_table(p, g, k, win, lo, s_w, invert, negate);
        compile_modular_add(c, r.q_h, r.q_l, &addr, &table, p)?;
        lo += s_w;
    }
    Ok(())
}

/// Appends the forward ladder `q_r ← g^{q_e} mod p` (low `exponent_bits`
/// of `q_e`). Preconditions: `q_r`, `q_h`, `q_l` all zero.
pub fn append_modexp_forward(
    c: &mut Circuit,
    r: &ModExpRegs,
    p: u64,
    g: u64,
    exponent_bits: u32,
    cfg: &WindowConfig,
) -> Result<()> {
    let w = adder_f(p) + 1;
    let (direct_bits, windows) = modexp_windows(exponent_bits, cfg.we);
    c.push(FundamentalOp::Load {
        addr: bit_range(r.q_e, 0, direct_bits),
        table: direct_table(p, g, direct_bits),
        target: r.q_r,
    });
    for &(k, win) in &windows {
        append_multiply(c, r, p, g, k, win, cfg, false, false)?;
        c.push(FundamentalOp::SwapRegs { a: r.q_r, b: r.q_h });
        // the retired factor is erased; its phase is deferred to readout
        let rec = c.new_record();
        c.push(FundamentalOp::Unlookup {
            addr: bit_range(r.q_h, 0, w),
            phase: PhaseSpec::SelfParity { record: rec },
            kind: FixupKind::Frame,
            split: false,
        });
        c.push(FundamentalOp::MeasureX { register: r.q_h, record: rec, terminal: false });
    }
    Ok(())
}

/// Appends the inverse ladder, returning `q_r` (holding `g^{q_e}`) to zero.
pub fn append_modexp_inverse(
    c: &mut Circuit,
    r: &ModExpRegs,
    p: u64,
    g: u64,
    exponent_bits: u32,
    cfg: &WindowConfig,
) -> Result<()> {
    let (direct_bits, windows) = modexp_windows(exponent_bits, cfg.we);
    for &(k, win) in windows.iter().rev() {
        // rebuild the retired factor from the running power
        append_multiply(c, r, p, g, k, win, cfg, true, false)?;
        c.push(FundamentalOp::SwapRegs { a: r.q_r, b: r.q_h });
        // cancel the newer power against sign-negated tables
        append_multiply(c, r, p, g, k, win, cfg, false, true)?;
    }
    // XOR of the direct table against itself clears the base power
    c.push(FundamentalOp::Load {
        addr: bit_range(r.q_e, 0, direct_bits),
        table: direct_table(p, g, direct_bits),
        target: r.q_r,
    });
    Ok(())
}

/// Compiles `q_r ← g^{q_e} mod p` with windowed multiplications.
pub fn compile_modexp(
    p: u64,
    g: u64,
    exponent_bits: u32,
    cfg: &WindowConfig,
    mode: ExpMode,
) -> Result<CompiledModExp> {
    cfg.validate()?;
    if !is_prime_u64(p) {
        return Err(Error::NotPrime(p));
    }
    if g % p == 0 {
        return Err(Error::ZeroResidue { base: g, prime: p });
    }
    if exponent_bits < 1 || exponent_bits > 24 {
        return Err(Error::Config(format!("exponent width {exponent_bits} outside supported 1..=24")));
    }

    let f = adder_f(p);
    let w = f + 1;
    let mut c = Circuit::new(CircuitMeta {
        prime: Some(p),
        base: Some(g),
        exponent_width: Some(exponent_bits),
        w1: None,
        we: Some(cfg.we),
        wm: Some(cfg.wm),
        f: Some(f),
        ..CircuitMeta::default()
    });
    let q_e = c.add_register("q_e", exponent_bits);
    let q_r = c.add_register("q_r", w);
    let q_h = c.add_register("q_h", w);
    let q_l = c.add_register("q_l", w);
    c.registers[q_e.0 as usize].role = Some("exponent".into());
    c.registers[q_r.0 as usize].role = Some("result".into());
    c.registers[q_h.0 as usize].role = Some("product".into());
    c.registers[q_l.0 as usize].role = Some("scratch".into());

    let regs = ModExpRegs { q_e, q_r, q_h, q_l };
    append_modexp_forward(&mut c, &regs, p, g, exponent_bits, cfg)?;
    if mode == ExpMode::UncomputeResult {
        append_modexp_inverse(&mut c, &regs, p, g, exponent_bits, cfg)?;
    }

    c.ensure_valid()?;
    Ok(CompiledModExp {
        circuit: c,
        q_e,
        q_r,
        q_h,
        q_l,
        prime: p,
        base: g,
        exponent_bits,
        cfg: *cfg,
        mode,
    })
}

/// Appends `q_e ← q_e mod (p−1)` as a chain of measurement-assisted
/// conditional subtractions. `value_bits` bounds the incoming value
/// (`q_e < 2^value_bits`); the register must be one bit wider to host the
/// sliding overflow bit.
pub fn compile_exponent_compression(
    c: &mut Circuit,
    q_e: RegisterId,
    q_l: RegisterId,
    p: u64,
    value_bits: u32,
) -> Result<()> {
    if p < 3 {
        return Err(Error::Config("compression needs a modulus over an order of at least 2".into()));
    }
    let m0 = p - 1;
    let order_bits = 64 - m0.leading_zeros();
    if value_bits < order_bits {
        return Err(Error::Config(format!(
            "value width {value_bits} below the order width {order_bits}"
        )));
    }
    if c.width(q_e) < value_bits + 1 || c.width(q_l) < value_bits + 1 {
        return Err(Error::AdderTooNarrow { f: value_bits, modulus: m0 });
    }

    // smallest j with (p-1)·2^j covering half the value range
    let mut j_max = 0u32;
    while (m0 << j_max) < (1u64 << (value_bits - 1)) {
        j_max += 1;
    }

    for j in (0..=j_max).rev() {
        let m_j = m0 << j;
        // conditional subtraction of m_j as a degenerate wrap step
        let f_j = if m_j.is_power_of_two() { m_j.trailing_zeros() } else { 64 - m_j.leading_zeros() };
        let wj = f_j + 1;
        let mask = width_mask(wj);
        let c_j = (1u64 << f_j) - m_j;
        if c_j > 0 {
            // constant XOR loads are frame updates: stage, add, unstage
            c.push(FundamentalOp::Load { addr: vec![], table: vec![c_j], target: q_l });
            c.push(FundamentalOp::Add { dest: q_e, src: q_l, width: wj });
            c.push(FundamentalOp::Load { addr: vec![], table: vec![c_j], target: q_l });
        }
        let wrap = [(mask + 1 - c_j) & mask, 1u64 << f_j];
        let rec = c.new_record();
        let obit = Bit::new(q_e, f_j);
        c.push(FundamentalOp::Load { addr: vec![obit], table: wrap.to_vec(), target: q_l });
        // the overflow bit dies in the next addition; bank its phase now
        c.push(FundamentalOp::Unlookup {
            addr: vec![obit],
            phase: PhaseSpec::Tables(vec![PhasePair { table: wrap.to_vec(), record: rec }]),
            kind: FixupKind::Frame,
            split: false,
        });
        c.push(FundamentalOp::Add { dest: q_e, src: q_l, width: wj });
        c.push(FundamentalOp::MeasureX { register: q_l, record: rec, terminal: false });
    }
    Ok(())
}

/// Emits a single-target phase-fixup lookup cancelling recorded phases.
/// All-zero tables produce nothing. Returns the number of ops appended.
pub fn compile_unlookup(
    c: &mut Circuit,
    addr: &[Bit],
    phase_table: &[u8],
    split: bool,
) -> Result<usize> {
    if phase_table.len() != 1usize << addr.len() {
        return Err(Error::Config(format!(
            "phase table length {} does not match a {}-bit address",
            phase_table.len(),
            addr.len()
        )));
    }
    if phase_table.iter().any(|&b| b > 1) {
        return Err(Error::Config("phase table entries must be 0 or 1".into()));
    }
    if phase_table.iter().all(|&b| b == 0) {
        return Ok(0);
    }
    c.push(FundamentalOp::Unlookup {
        addr: addr.to_vec(),
        phase: PhaseSpec::Bits(phase_table.to_vec()),
        kind: FixupKind::Lookup,
        split,
    });
    Ok(1)
}

/// Width of the running-sum window that visits the processors during
/// accumulation. Together with the four arithmetic registers and the
/// streaming buffer this fixes the hot-qubit count of one iteration
/// (4·25 + 6 + 2·37 = 180 at the production point).
pub const ACC_WINDOW_BITS: u32 = 37;

/// Stages of one prime iteration, in program order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PipelineStage {
    /// Streaming the exponent out of memory: one wrapping addition per
    /// `w1`-bit window, modulo the group order `p−1`.
    Loading,
    /// Reduction of the streamed sum into the group order (degenerate
    /// when the sum is already reduced, but the operations still run).
    Compression,
    /// The forward power ladder.
    Exponentiation,
    /// Lookup-additions of the windowed result into the running sum.
    Accumulation,
    /// The inverse ladder returning the power registers to zero.
    UnExponentiation,
    /// Erasure of the spent exponent register.
    Cleanup,
}

/// One compiled prime iteration with per-stage op ranges, used both for
/// timing extrapolation and for end-to-end trajectory verification.
#[derive(Debug, Clone)]
pub struct PrimeIterationPlan {
    pub circuit: Circuit,
    pub stages: Vec<(PipelineStage, std::ops::Range<usize>)>,
    pub regs: ModExpRegs,
    pub buffer: RegisterId,
    pub q_acc: RegisterId,
    pub acc_scratch: RegisterId,
    pub prime: u64,
    pub base: u64,
    /// Bits of the group order; the exponent register is one wider.
    pub order_bits: u32,
    pub loading_windows: usize,
}

impl PrimeIterationPlan {
    /// Ops of one stage.
    pub fn stage_range(&self, s: PipelineStage) -> std::ops::Range<usize> {
        self.stages
            .iter()
            .find(|(st, _)| *st == s)
            .map(|(_, r)| r.clone())
            .unwrap_or(0..0)
    }

    /// Hot (processor-resident) qubits of the iteration.
    pub fn hot_qubits(&self) -> u32 {
        self.circuit.registers.iter().map(|r| r.width).sum()
    }

    /// Runs `k` random trajectories and checks the clean-up contract:
    /// ladder registers and scratch return to zero, the exponent register
    /// is erased, and every measurement phase is repaired.
    pub fn verify(&self, k: usize, seed: u64) -> Result<ModExpVerification> {
        let plan = InitPlan::new().random(self.buffer);
        let set = TrajectorySet::run(&self.circuit, &plan, k, seed)?;
        let mut failures = Vec::new();
        for (i, run) in set.runs.iter().enumerate() {
            let q_r = run.r#final[self.regs.q_r.0 as usize];
            let q_h = run.r#final[self.regs.q_h.0 as usize];
            let q_l = run.r#final[self.regs.q_l.0 as usize];
            let q_e = run.r#final[self.regs.q_e.0 as usize];
            let scratch = run.r#final[self.acc_scratch.0 as usize];
            if q_r != 0 || q_h != 0 || q_l != 0 || q_e != 0 || scratch != 0 || run.phase != 0 {
                failures.push(TrajectoryFailure {
                    index: i,
                    exponent: run.initial[self.buffer.0 as usize],
                    expected_q_r: 0,
                    q_r,
                    q_h,
                    q_l: q_l | scratch,
                    phase: run.phase,
                });
            }
        }
        Ok(ModExpVerification { trajectories: set.runs.len(), failures, report: set.report() })
    }
}

/// Compiles one full prime iteration of the production pipeline.
///
/// `loading_windows` controls how many streaming windows are emitted
/// (the averaging window for timing runs; the full `ceil(m/w1)` count
/// reproduces a whole iteration). When `memory_module` is given, the
/// buffer and the running-sum window commute with it by explicit
/// teleports; `n_qpu` then scopes the return lanes.
pub fn compile_prime_iteration(
    p: u64,
    g: u64,
    cfg: &WindowConfig,
    loading_windows: usize,
    memory_module: Option<u32>,
    seed: u64,
) -> Result<PrimeIterationPlan> {
    use rand::{Rng, SeedableRng};
    cfg.validate()?;
    if !is_prime_u64(p) {
        return Err(Error::NotPrime(p));
    }
    if g % p == 0 {
        return Err(Error::ZeroResidue { base: g, prime: p });
    }
    if p < 3 {
        return Err(Error::Config("the pipeline needs a group order of at least 2".into()));
    }

    let f = adder_f(p);
    let w = f + 1;
    let order_bits = 64 - (p - 1).leading_zeros();
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);

    let mut c = Circuit::new(CircuitMeta {
        prime: Some(p),
        base: Some(g),
        exponent_width: Some(order_bits),
        w1: Some(cfg.w1),
        we: Some(cfg.we),
        wm: Some(cfg.wm),
        f: Some(f),
        ..CircuitMeta::default()
    });
    let q_e = c.add_register("q_e", w);
    let q_r = c.add_register("q_r", w);
    let q_h = c.add_register("q_h", w);
    let q_l = c.add_register("q_l", w);
    let buffer = c.add_register("buffer", cfg.w1);
    let q_acc = c.add_register("running_sum", ACC_WINDOW_BITS);
    let acc_scratch = c.add_register("sum_scratch", ACC_WINDOW_BITS);
    c.registers[q_e.0 as usize].role = Some("exponent".into());
    c.registers[q_r.0 as usize].role = Some("result".into());
    c.registers[q_h.0 as usize].role = Some("product".into());
    c.registers[q_l.0 as usize].role = Some("scratch".into());
    c.registers[buffer.0 as usize].role = Some("router".into());
    let regs = ModExpRegs { q_e, q_r, q_h, q_l };

    let mut stages = Vec::new();
    let mark = |c: &Circuit, stages: &mut Vec<(PipelineStage, std::ops::Range<usize>)>,
                    s: PipelineStage, from: usize| {
        stages.push((s, from..c.ops.len()));
    };

    // -------- loading --------------------------------------------------
    let start = c.ops.len();
    let order = p - 1;
    let buffer_bits = bit_range(buffer, 0, cfg.w1);
    for _ in 0..loading_windows {
        if let Some(mem) = memory_module {
            c.push(FundamentalOp::Teleport {
                bits: buffer_bits.clone(),
                from_module: mem,
                to_module: 0,
            });
        }
        let table: Vec<u64> =
            (0..1u64 << cfg.w1).map(|_| rng.gen_range(0..order)).collect();
        compile_modular_add(&mut c, q_e, q_l, &buffer_bits, &table, order)?;
        if let Some(mem) = memory_module {
            c.push(FundamentalOp::Teleport {
                bits: buffer_bits.clone(),
                from_module: 0,
                to_module: mem,
            });
        }
    }
    mark(&c, &mut stages, PipelineStage::Loading, start);

    // -------- compression ----------------------------------------------
    let start = c.ops.len();
    compile_exponent_compression(&mut c, q_e, q_l, p, order_bits)?;
    mark(&c, &mut stages, PipelineStage::Compression, start);

    // -------- forward ladder -------------------------------------------
    let start = c.ops.len();
    append_modexp_forward(&mut c, &regs, p, g, order_bits, cfg)?;
    mark(&c, &mut stages, PipelineStage::Exponentiation, start);

    // -------- accumulation ---------------------------------------------
    let start = c.ops.len();
    let acc_bits = bit_range(q_acc, 0, ACC_WINDOW_BITS);
    if let Some(mem) = memory_module {
        c.push(FundamentalOp::Teleport { bits: acc_bits.clone(), from_module: mem, to_module: 0 });
    }
    let acc_mask = width_mask(ACC_WINDOW_BITS);
    let mut lo = 0;
    while lo < w {
        let s_w = cfg.wm.min(w - lo);
        let addr = bit_range(q_r, lo, s_w);
        let table: Vec<u64> =
            (0..1u64 << s_w).map(|_| rng.gen::<u64>() & acc_mask).collect();
        let rec = c.new_record();
        c.push(FundamentalOp::Load { addr: addr.clone(), table: table.clone(), target: acc_scratch });
        c.push(FundamentalOp::Add { dest: q_acc, src: acc_scratch, width: ACC_WINDOW_BITS });
        c.push(FundamentalOp::MeasureX { register: acc_scratch, record: rec, terminal: false });
        c.push(FundamentalOp::Unlookup {
            addr,
            phase: PhaseSpec::Tables(vec![PhasePair { table, record: rec }]),
            kind: FixupKind::Lookup,
            split: s_w >= 4,
        });
        lo += s_w;
    }
    if let Some(mem) = memory_module {
        c.push(FundamentalOp::Teleport { bits: acc_bits, from_module: 0, to_module: mem });
    }
    mark(&c, &mut stages, PipelineStage::Accumulation, start);

    // -------- inverse ladder -------------------------------------------
    let start = c.ops.len();
    append_modexp_inverse(&mut c, &regs, p, g, order_bits, cfg)?;
    mark(&c, &mut stages, PipelineStage::UnExponentiation, start);

    // -------- cleanup ---------------------------------------------------
    let start = c.ops.len();
    let rec = c.new_record();
    c.push(FundamentalOp::Unlookup {
        addr: bit_range(q_e, 0, w),
        phase: PhaseSpec::SelfParity { record: rec },
        kind: FixupKind::Frame,
        split: false,
    });
    c.push(FundamentalOp::MeasureX { register: q_e, record: rec, terminal: false });
    mark(&c, &mut stages, PipelineStage::Cleanup, start);

    c.ensure_valid()?;
    Ok(PrimeIterationPlan {
        circuit: c,
        stages,
        regs,
        buffer,
        q_acc,
        acc_scratch,
        prime: p,
        base: g,
        order_bits,
        loading_windows,
    })
}

/// Toffoli count of a full `n`-bit windowed modular exponentiation:
/// `ceil(n/we)·ceil(n/wm)·(n + 2^(we+wm))`.
pub fn toffoli_estimate(n: u64, we: u32, wm: u32) -> u64 {
    n.div_ceil(we as u64) * n.div_ceil(wm as u64) * (n + (1u64 << (we + wm)))
}

/// Grid scan of `toffoli_estimate` over `we = wm`; returns the minimising
/// window size. The combined address width `2w` of the minimum tracks
/// `log2 n`, since the table size `2^(2w)` trades against the adder
/// length `n`.
pub fn toffoli_grid_minimum(n: u64, max_window: u32) -> u32 {
    (1..=max_window)
        .min_by_key(|&w| toffoli_estimate(n, w, w))
        .expect("non-empty window grid")
}

/// Modular additions in one prime iteration: exponent streaming from
/// memory, then the multiplication ladder forward and back with its
/// per-multiplication overheads.
pub fn additions_per_prime(m: u64, w1: u32, qe_bits: u32, we: u32, wm: u32) -> u64 {
    let mults = (qe_bits as u64).div_ceil(we as u64);
    let slices = (qe_bits as u64 + 1).div_ceil(wm as u64);
    m.div_ceil(w1 as u64) + 2 * (mults * slices + 2 * mults)
}

/// Whole-run modular addition count across all prime iterations of one
/// shot, by the per-iteration count times the iteration ratio.
pub fn total_additions(n: u64, m: u64, w1: u32, qe_bits: u32, we: u32, wm: u32) -> u64 {
    let per = additions_per_prime(m, w1, qe_bits, we, wm) as f64;
    let ratio = (n as f64 * m as f64) / (w1 as f64 * qe_bits as f64);
    (per * ratio).round() as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::InitSpec;

    #[test]
    fn wrap_adder_known_cases() {
        // p=11, f=4: 7+9 -> first add 21 (overflow set), wrap adds 16 -> 5
        let (c, q_e, q_h) = modular_add_circuit(11, &[9, 3, 0, 6]).unwrap();
        let plan = InitPlan::new().fixed(q_e, 0).fixed(q_h, 7);
        let set = TrajectorySet::run(&c, &plan, 1, 3).unwrap();
        assert_eq!(set.final_value(0, q_h), 5);
        assert!(set.report().all_phases_zero);

        // p=11: 2+3 -> 10, no overflow, wrap adds 27 -> 37 mod 32 = 5
        let plan = InitPlan::new().fixed(q_e, 1).fixed(q_h, 2);
        let set = TrajectorySet::run(&c, &plan, 1, 4).unwrap();
        assert_eq!(set.final_value(0, q_h), 5);
        assert!(set.report().all_phases_zero);
    }

    #[test]
    fn wrap_adder_zero_addend_is_identity() {
        let (c, q_e, q_h) = modular_add_circuit(11, &[0, 0, 0, 0]).unwrap();
        for a in 0..11 {
            let plan = InitPlan::new().exhaustive(q_e).fixed(q_h, a);
            let set = TrajectorySet::run(&c, &plan, 1, a).unwrap();
            for t in 0..set.runs.len() {
                assert_eq!(set.final_value(t, q_h), a);
            }
            assert!(set.report().all_phases_zero);
        }
    }

    #[test]
    fn wrap_adder_exhaustive_small_primes() {
        for p in [3u64, 5, 7, 11, 13] {
            let bits = adder_f(p); // enough address bits to cover 0..p
            let n = 1usize << bits.min(6);
            let table: Vec<u64> = (0..n as u64).map(|i| i % p).collect();
            let (c, q_e, q_h) = modular_add_circuit(p, &table).unwrap();
            let f = adder_f(p);
            for a in 0..p {
                let plan = InitPlan::new().exhaustive(q_e).fixed(q_h, a);
                let set = TrajectorySet::run(&c, &plan, 1, a ^ p).unwrap();
                for t in 0..set.runs.len() {
                    let i = set.initial_value(t, q_e) as usize;
                    let expect = (a + table[i]) % p;
                    assert_eq!(set.final_value(t, q_h), expect, "p={p} a={a} i={i}");
                    assert_eq!(set.final_value(t, q_h) >> f, 0, "overflow restored");
                }
                assert!(set.report().all_phases_zero, "p={p} a={a}");
            }
        }
    }

    #[test]
    fn modexp_desk_example() {
        let cfg = WindowConfig::desk();
        let m = compile_modexp(13, 7, 6, &cfg, ExpMode::KeepResult).unwrap();
        let v = m.verify(1, 99, 20).unwrap();
        assert!(v.is_pass(), "{:?}", v.failures.first());
        // e = 5 -> 7^5 mod 13 = 11
        let set = TrajectorySet::run(
            &m.circuit,
            &InitPlan::new().fixed(m.q_e, 5),
            1,
            1,
        )
        .unwrap();
        assert_eq!(set.final_value(0, m.q_r), 11);
    }

    #[test]
    fn modexp_single_window_is_one_load() {
        let cfg = WindowConfig { w1: 2, we: 3, wm: 3 };
        let m = compile_modexp(13, 6, 5, &cfg, ExpMode::KeepResult).unwrap();
        assert_eq!(m.circuit.ops.len(), 1, "5 bits fit one 6-bit double window");
        assert!(matches!(m.circuit.ops[0].op, FundamentalOp::Load { .. }));
        assert!(m.verify(1, 7, 20).unwrap().is_pass());
    }

    #[test]
    fn modexp_exhaustive_desk_primes() {
        let cfg = WindowConfig::desk();
        for p in [5u64, 7, 11, 13] {
            for g in 2..p {
                let m = compile_modexp(p, g, 5, &cfg, ExpMode::KeepResult).unwrap();
                let v = m.verify(1, p * 31 + g, 20).unwrap();
                assert!(v.is_pass(), "p={p} g={g}: {:?}", v.failures.first());
            }
        }
    }

    #[test]
    fn modexp_uncompute_returns_all_registers_to_zero() {
        let cfg = WindowConfig::desk();
        for (p, g) in [(13u64, 7u64), (11, 2), (7, 3)] {
            let m = compile_modexp(p, g, 6, &cfg, ExpMode::UncomputeResult).unwrap();
            let v = m.verify(1, p + g, 20).unwrap();
            assert!(v.is_pass(), "p={p} g={g}: {:?}", v.failures.first());
        }
    }

    #[test]
    fn corrupted_fixup_table_leaks_phase() {
        let cfg = WindowConfig::desk();
        let m = compile_modexp(13, 7, 6, &cfg, ExpMode::KeepResult).unwrap();
        let mut broken = m.circuit.clone();
        let slot = broken
            .ops
            .iter_mut()
            .find_map(|sop| match &mut sop.op {
                FundamentalOp::Unlookup { phase: PhaseSpec::Tables(pairs), .. } => {
                    Some(&mut pairs[0].table[1])
                }
                _ => None,
            })
            .expect("compiled circuit has table fixups");
        *slot ^= 0b11111;
        let plan = InitPlan::new().exhaustive(m.q_e);
        let leaked = (0..16u64).any(|seed| {
            !TrajectorySet::run(&broken, &plan, 1, seed).unwrap().report().all_phases_zero
        });
        assert!(leaked, "a corrupted fixup must leak phase for some outcome");
    }

    #[test]
    fn compression_known_values() {
        // 50 mod 12 = 2 and 63 mod 12 = 3, from 6-bit values in 7-bit registers
        for (t0, expect) in [(50u64, 2u64), (63, 3)] {
            let mut c = Circuit::new(CircuitMeta::default());
            let q_e = c.add_register("q_e", 7);
            let q_l = c.add_register("q_l", 7);
            compile_exponent_compression(&mut c, q_e, q_l, 13, 6).unwrap();
            c.ensure_valid().unwrap();
            let set = TrajectorySet::run(&c, &InitPlan::new().fixed(q_e, t0), 1, t0).unwrap();
            assert_eq!(set.final_value(0, q_e), expect, "t0={t0}");
            assert_eq!(set.final_value(0, q_l), 0);
            assert!(set.report().all_phases_zero);
        }
    }

    #[test]
    fn compression_matches_integer_modulus_exhaustively() {
        for p in [5u64, 7, 11, 13] {
            let mut c = Circuit::new(CircuitMeta::default());
            let q_e = c.add_register("q_e", 7);
            let q_l = c.add_register("q_l", 7);
            compile_exponent_compression(&mut c, q_e, q_l, p, 6).unwrap();
            for t0 in 0..64u64 {
                let set = TrajectorySet::run(&c, &InitPlan::new().fixed(q_e, t0), 1, t0).unwrap();
                assert_eq!(set.final_value(0, q_e), t0 % (p - 1), "p={p} t0={t0}");
                assert!(set.report().all_phases_zero, "p={p} t0={t0}");
            }
        }
    }

    #[test]
    fn compression_leaves_small_values_alone() {
        let mut c = Circuit::new(CircuitMeta::default());
        let q_e = c.add_register("q_e", 7);
        let q_l = c.add_register("q_l", 7);
        compile_exponent_compression(&mut c, q_e, q_l, 13, 6).unwrap();
        for t0 in 0..12u64 {
            let set = TrajectorySet::run(&c, &InitPlan::new().fixed(q_e, t0), 1, 5).unwrap();
            assert_eq!(set.final_value(0, q_e), t0);
        }
    }

    #[test]
    fn unlookup_zero_table_emits_nothing() {
        let mut c = Circuit::new(CircuitMeta::default());
        let a = c.add_register("q_e", 4);
        let n = compile_unlookup(&mut c, &bit_range(a, 0, 4), &[0; 16], true).unwrap();
        assert_eq!(n, 0);
        assert!(c.ops.is_empty());
    }

    #[test]
    fn split_unlookup_is_cheaper_from_four_address_bits() {
        for bits in 2..=6u32 {
            let mut plain = Circuit::new(CircuitMeta::default());
            let a = plain.add_register("q_e", bits);
            let table: Vec<u8> = (0..1usize << bits).map(|i| (i & 1) as u8).collect();
            compile_unlookup(&mut plain, &bit_range(a, 0, bits), &table, false).unwrap();
            let mut split = Circuit::new(CircuitMeta::default());
            let b = split.add_register("q_e", bits);
            compile_unlookup(&mut split, &bit_range(b, 0, bits), &table, true).unwrap();
            if bits >= 4 {
                assert!(
                    split.toffoli_count() < plain.toffoli_count(),
                    "bits={bits}: {} !< {}",
                    split.toffoli_count(),
                    plain.toffoli_count()
                );
            }
        }
    }

    #[test]
    fn unlookup_from_recorded_run_cancels_phases() {
        // Run once, derive the fixup table from the shared outcome, rerun
        // the composed circuit under the same seed: everything cancels.
        let seed = 31u64;
        let table = vec![5u64, 9, 12, 3];
        let build = |with_fixup: Option<&[u8]>| {
            let mut c = Circuit::new(CircuitMeta::default());
            let idx = c.add_register("q_e", 2);
            let scratch = c.add_register("q_l", 6);
            let rec = c.new_record();
            let addr = bit_range(idx, 0, 2);
            c.push(FundamentalOp::Load { addr: addr.clone(), table: table.clone(), target: scratch });
            c.push(FundamentalOp::MeasureX { register: scratch, record: rec, terminal: true });
            if let Some(bits) = with_fixup {
                compile_unlookup(&mut c, &addr, bits, false).unwrap();
            }
            (c, idx)
        };
        let (bare, idx) = build(None);
        let probe = TrajectorySet::run(&bare, &InitPlan::new().exhaustive(idx), 1, seed).unwrap();
        let m = probe.outcomes[0];
        let bits: Vec<u8> = table.iter().map(|&t| ((t & m).count_ones() & 1) as u8).collect();
        let (fixed, idx2) = build(Some(&bits));
        let set = TrajectorySet::run(&fixed, &InitPlan::new().exhaustive(idx2), 1, seed).unwrap();
        assert!(set.report().all_phases_zero);
    }

    #[test]
    fn toffoli_formula_production_value() {
        assert_eq!(toffoli_estimate(2048, 3, 3), 985_224_768);
        assert_eq!(toffoli_estimate(2048, 3, 3), 683 * 683 * 2112);
    }

    #[test]
    fn toffoli_single_window_limit() {
        let n = 12u64;
        assert_eq!(toffoli_estimate(n, 12, 12), n + (1u64 << 24));
    }

    #[test]
    fn toffoli_grid_minimum_tracks_log_n() {
        // The count trades the table size 2^(we+wm) against the adder
        // length n, so the minimising combined address width 2w sits
        // within a couple of bits of log2 n across the whole range.
        for n in [256u64, 512, 1024, 2048, 4096] {
            let w = toffoli_grid_minimum(n, 16);
            let log = (n as f64).log2().round() as i64;
            assert!(
                (2 * w as i64 - log).abs() <= 2,
                "n={n}: minimum at we=wm={w}, combined width {}, log2 n = {log}",
                2 * w
            );
        }
    }

    #[test]
    fn addition_count_matches_production_total() {
        assert_eq!(additions_per_prime(1280, 6, 24, 3, 3), 390);
        assert_eq!(total_additions(2048, 1280, 6, 24, 3, 3), 7_099_733);
    }

    #[test]
    fn prime_iteration_cleans_up_and_cancels_phases() {
        for (p, g) in [(13u64, 2u64), (11, 7), (61, 2)] {
            let plan =
                compile_prime_iteration(p, g, &WindowConfig::desk(), 5, None, 17).unwrap();
            let v = plan.verify(8, p ^ 0x5eed).unwrap();
            assert!(v.is_pass(), "p={p} g={g}: {:?}", v.failures.first());
            assert_eq!(plan.stages.len(), 6);
            // stages tile the op stream in order without gaps
            let mut end = 0;
            for (_, r) in &plan.stages {
                assert_eq!(r.start, end);
                end = r.end;
            }
            assert_eq!(end, plan.circuit.ops.len());
        }
    }

    #[test]
    fn prime_iteration_loading_scales_with_window_count() {
        let base = compile_prime_iteration(13, 2, &WindowConfig::desk(), 4, None, 1).unwrap();
        let more = compile_prime_iteration(13, 2, &WindowConfig::desk(), 8, None, 1).unwrap();
        let b = base.stage_range(PipelineStage::Loading).len();
        let m = more.stage_range(PipelineStage::Loading).len();
        assert_eq!(m, 2 * b, "loading ops double with the window count");
        // all other stages are unchanged
        for s in [
            PipelineStage::Compression,
            PipelineStage::Exponentiation,
            PipelineStage::Accumulation,
            PipelineStage::UnExponentiation,
            PipelineStage::Cleanup,
        ] {
            assert_eq!(base.stage_range(s).len(), more.stage_range(s).len(), "{s:?}");
        }
    }

    #[test]
    fn production_iteration_hot_qubit_plan() {
        // 24-bit prime: four 25-bit ladder registers, the 6-bit streaming
        // buffer, and two 37-bit running-sum windows: 180 hot qubits.
        let p = 16_777_259u64; // smallest prime above 2^24 has 25 bits; use a 24-bit one
        assert!(is_prime_u64(p));
        assert_eq!(adder_f(p), 25);
        let p24 = 8_388_617u64;
        assert!(is_prime_u64(p24));
        assert_eq!(adder_f(p24), 24);
        let plan = compile_prime_iteration(p24, 2, &WindowConfig::production(), 1, None, 3)
            .unwrap();
        assert_eq!(plan.hot_qubits(), 180);
        assert_eq!(plan.order_bits, 24);
    }

    #[test]
    fn production_iteration_stage_shape() {
        let p24 = 8_388_617u64;
        let cfg = WindowConfig::production();
        let plan = compile_prime_iteration(p24, 2, &cfg, 40, None, 3).unwrap();
        // six ladder multiplications of nine slice-additions, forward;
        // twice that plus the rebuild on the way back
        let mults = (plan.order_bits - 2 * cfg.we).div_ceil(cfg.we);
        assert_eq!(mults, 6);
        let fwd = plan.stage_range(PipelineStage::Exponentiation);
        let adds_fwd = plan.circuit.ops[fwd]
            .iter()
            .filter(|s| matches!(s.op, FundamentalOp::Add { .. }))
            .count();
        assert_eq!(adds_fwd, 54 * 2, "54 modular additions, two Add ops each");
        let inv = plan.stage_range(PipelineStage::UnExponentiation);
        let adds_inv = plan.circuit.ops[inv]
            .iter()
            .filter(|s| matches!(s.op, FundamentalOp::Add { .. }))
            .count();
        assert_eq!(adds_inv, 108 * 2);
        let load = plan.stage_range(PipelineStage::Loading);
        let adds_load = plan.circuit.ops[load]
            .iter()
            .filter(|s| matches!(s.op, FundamentalOp::Add { .. }))
            .count();
        assert_eq!(adds_load, 40 * 2, "one wrapping addition per streamed window");
    }

    #[test]
    fn desk_config_round_trips_register_plan() {
        let m = compile_modexp(13, 2, 6, &WindowConfig::desk(), ExpMode::KeepResult).unwrap();
        assert_eq!(m.circuit.registers[m.q_r.0 as usize].width, adder_f(13) + 1);
        assert!(m.circuit.is_valid());
        // side registers never exceed the adder width in any init mode
        let plan = InitPlan { entries: vec![(m.q_e, InitSpec::Random)] };
        let set = TrajectorySet::run(&m.circuit, &plan, 4, 9).unwrap();
        assert_eq!(set.runs.len(), 4);
    }
}
