//! Trajectory-based circuit verification.
//!
//! Every operation in the circuit language is a classical permutation of
//! basis states plus a diagonal ±1 phase, so a basis state pushed through
//! the circuit stays a basis state. A *trajectory* is one such basis state:
//! a `u64` value per register plus a single phase bit. Superposition is
//! captured statistically: the input register is initialised differently
//! per trajectory (sampled or exhaustive), while **measurement outcomes are
//! shared** — each record id is drawn once and every trajectory sees the
//! same bitstring, exactly as the branches of one physical run would.
//!
//! A compiled circuit is correct when, for every trajectory, the output
//! register lands on the expected function of the input and the accumulated
//! phase returns to +1 (all measurement back-action repaired). Because the
//! phase of each trajectory is linear in the erased values, checking a
//! spanning set of basis states certifies the full superposition.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::ir::{Circuit, FundamentalOp, PhaseSpec, RegisterId};

/// How one register is initialised across trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InitSpec {
    /// Same value in every trajectory.
    Fixed(u64),
    /// Fresh uniform value (masked to the register width) per trajectory.
    Random,
    /// Enumerate every value of the register; multiplies the trajectory
    /// count by `2^width`.
    Exhaustive,
}

/// Register initialisation plan. Registers not listed start at zero.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InitPlan {
    pub entries: Vec<(RegisterId, InitSpec)>,
}

impl InitPlan {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn fixed(mut self, reg: RegisterId, value: u64) -> Self {
        self.entries.push((reg, InitSpec::Fixed(value)));
        self
    }

    pub fn random(mut self, reg: RegisterId) -> Self {
        self.entries.push((reg, InitSpec::Random));
        self
    }

    pub fn exhaustive(mut self, reg: RegisterId) -> Self {
        self.entries.push((reg, InitSpec::Exhaustive));
        self
    }
}

/// One basis state traced through the circuit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryOutcome {
    /// Register values before the first operation.
    pub initial: Vec<u64>,
    /// Register values after the last operation.
    pub r#final: Vec<u64>,
    /// Accumulated phase exponent: 0 means +1, 1 means −1.
    pub phase: u8,
}

/// The result of pushing a family of trajectories through one circuit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectorySet {
    pub seed: u64,
    /// Shared measurement outcome per record id.
    pub outcomes: Vec<u64>,
    pub runs: Vec<TrajectoryOutcome>,
}

/// Condensed, hashable summary of a verification run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerificationReport {
    pub trajectories: usize,
    pub records: usize,
    pub all_phases_zero: bool,
    /// Indices of trajectories whose phase failed to return to +1.
    pub phase_failures: Vec<usize>,
    /// SHA-256 over seed, outcomes and every trajectory's initial/final
    /// values and phase; two runs agree iff their hashes agree.
    pub transcript_sha256: String,
}

impl TrajectorySet {
    /// Runs `k_random` sampled trajectories (times any exhaustive ranges in
    /// the plan) through `circuit`. Records are drawn once from `seed`
    /// before any trajectory starts, so outcome bitstrings depend only on
    /// the seed and the circuit — never on the trajectory count.
    pub fn run(circuit: &Circuit, plan: &InitPlan, k_random: usize, seed: u64) -> Result<Self> {
        circuit.ensure_valid()?;

        let mut record_rng = ChaCha12Rng::seed_from_u64(seed);
        record_rng.set_stream(0);
        let outcomes: Vec<u64> = circuit
            .record_widths()
            .iter()
            .map(|&w| record_rng.gen::<u64>() & width_mask(w))
            .collect();

        let exhaustive: Vec<(RegisterId, u32)> = plan
            .entries
            .iter()
            .filter_map(|&(reg, spec)| match spec {
                InitSpec::Exhaustive => Some((reg, circuit.width(reg))),
                _ => None,
            })
            .collect();
        let mut combos = 1usize;
        for &(reg, w) in &exhaustive {
            if w > 20 {
                return Err(Error::Config(format!(
                    "exhaustive initialisation of register {} would enumerate 2^{w} states",
                    reg.0
                )));
            }
            combos = combos
                .checked_mul(1usize << w)
                .ok_or_else(|| Error::Config("exhaustive plan overflows".into()))?;
        }
        let has_random = plan.entries.iter().any(|(_, s)| *s == InitSpec::Random);
        let per_combo = if has_random { k_random.max(1) } else { 1 };

        let mut runs = Vec::with_capacity(combos * per_combo);
        for combo in 0..combos {
            for sample in 0..per_combo {
                let t = combo * per_combo + sample;
                let mut init_rng = ChaCha12Rng::seed_from_u64(seed);
                init_rng.set_stream(1 + t as u64);

                let mut values = vec![0u64; circuit.registers.len()];
                let mut slice = combo;
                let mut ex_iter = exhaustive.iter();
                for &(reg, spec) in &plan.entries {
                    let w = circuit.width(reg).min(64);
                    values[reg.0 as usize] = match spec {
                        InitSpec::Fixed(v) => v & width_mask(w),
                        InitSpec::Random => init_rng.gen::<u64>() & width_mask(w),
                        InitSpec::Exhaustive => {
                            let (_, ew) = ex_iter.next().expect("plan drifted");
                            let size = 1usize << ew;
                            let v = (slice % size) as u64;
                            slice /= size;
                            v
                        }
                    };
                }
                let initial = values.clone();
                let phase = step_all(circuit, &mut values, &outcomes)?;
                runs.push(TrajectoryOutcome { initial, r#final: values, phase });
            }
        }

        Ok(TrajectorySet { seed, outcomes, runs })
    }

    /// Value of `reg` at the end of trajectory `t`.
    pub fn final_value(&self, t: usize, reg: RegisterId) -> u64 {
        self.runs[t].r#final[reg.0 as usize]
    }

    /// Value of `reg` before the circuit ran, for trajectory `t`.
    pub fn initial_value(&self, t: usize, reg: RegisterId) -> u64 {
        self.runs[t].initial[reg.0 as usize]
    }

    pub fn report(&self) -> VerificationReport {
        let phase_failures: Vec<usize> = self
            .runs
            .iter()
            .enumerate()
            .filter(|(_, r)| r.phase != 0)
            .map(|(i, _)| i)
            .collect();

        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update((self.outcomes.len() as u64).to_le_bytes());
        for &o in &self.outcomes {
            hasher.update(o.to_le_bytes());
        }
        for run in &self.runs {
            for &v in &run.initial {
                hasher.update(v.to_le_bytes());
            }
            for &v in &run.r#final {
                hasher.update(v.to_le_bytes());
            }
            hasher.update([run.phase]);
        }
        let digest = hasher.finalize();
        let transcript_sha256 = digest.iter().map(|b| format!("{b:02x}")).collect();

        VerificationReport {
            trajectories: self.runs.len(),
            records: self.outcomes.len(),
            all_phases_zero: phase_failures.is_empty(),
            phase_failures,
            transcript_sha256,
        }
    }
}

fn width_mask(width: u32) -> u64 {
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

fn parity(x: u64) -> u8 {
    (x.count_ones() & 1) as u8
}

fn read_bits(values: &[u64], bits: &[crate::ir::Bit]) -> u64 {
    let mut v = 0u64;
    for (i, b) in bits.iter().enumerate() {
        v |= ((values[b.reg.0 as usize] >> b.bit) & 1) << i;
    }
    v
}

/// Executes every operation on one trajectory, returning the final phase.
fn step_all(circuit: &Circuit, values: &mut [u64], outcomes: &[u64]) -> Result<u8> {
    let mut phase = 0u8;
    for sop in &circuit.ops {
        match &sop.op {
            FundamentalOp::Load { addr, table, target } => {
                let a = read_bits(values, addr) as usize;
                values[target.0 as usize] ^= table[a];
            }
            FundamentalOp::Add { dest, src, width } => {
                let mask = width_mask(*width);
                let d = values[dest.0 as usize];
                let s = values[src.0 as usize] & mask;
                let low = (d & mask).wrapping_add(s) & mask;
                values[dest.0 as usize] = (d & !mask) | low;
            }
            FundamentalOp::SwapRegs { a, b } => {
                values.swap(a.0 as usize, b.0 as usize);
            }
            FundamentalOp::MeasureX { register, record, .. } => {
                let v = values[register.0 as usize];
                phase ^= parity(v & outcomes[record.0 as usize]);
                values[register.0 as usize] = 0;
            }
            FundamentalOp::Unlookup { addr, phase: spec, .. } => {
                let a = read_bits(values, addr);
                phase ^= match spec {
                    PhaseSpec::Bits(bits) => bits[a as usize] & 1,
                    PhaseSpec::Tables(pairs) => {
                        let mut p = 0u8;
                        for pair in pairs {
                            p ^= parity(pair.table[a as usize] & outcomes[pair.record.0 as usize]);
                        }
                        p
                    }
                    PhaseSpec::SelfParity { record } => parity(a & outcomes[record.0 as usize]),
                    PhaseSpec::WrapCompare { table, wrap, record, index_bits } => {
                        let idx = (a & ((1u64 << index_bits) - 1)) as usize;
                        let acc = a >> index_bits;
                        let wrapped = (acc < table[idx]) as usize;
                        parity(wrap[wrapped] & outcomes[record.0 as usize])
                    }
                };
            }
            FundamentalOp::CNOTCascade { control, targets } => {
                if (values[control.reg.0 as usize] >> control.bit) & 1 == 1 {
                    for t in targets {
                        values[t.reg.0 as usize] ^= 1 << t.bit;
                    }
                }
            }
            FundamentalOp::CCX { c1, c2, target } => {
                let a = (values[c1.reg.0 as usize] >> c1.bit) & 1;
                let b = (values[c2.reg.0 as usize] >> c2.bit) & 1;
                if a & b == 1 {
                    values[target.reg.0 as usize] ^= 1 << target.bit;
                }
            }
            FundamentalOp::TInject { target } => {
                if (values[target.reg.0 as usize] >> target.bit) & 1 == 1 {
                    return Err(Error::NonClassicalPhase { seq: sop.seq });
                }
            }
            FundamentalOp::AllocQubits { .. }
            | FundamentalOp::FreeQubits { .. }
            | FundamentalOp::Teleport { .. }
            | FundamentalOp::GhzBroadcast { .. } => {}
        }
    }
    Ok(phase)
}
