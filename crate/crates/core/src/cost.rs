//! Hardware-model scheduling, wall-time estimation and parameter sweeps.
//!
//! Time is modelled in logical layers: every layer costs one code cycle of
//! stabiliser rounds (`10·d` µs) plus one measurement-and-feedforward
//! window (`t_mea`). Magic states come from a per-module factory that
//! fills sixteen cultivation slots every `t_T`, buffered by a four-token
//! staging row. Inter-module Bell pairs come from one machine-wide
//! generator producing a logical pair (a `d²` physical batch) every
//! `d²/comm_rate`; it runs continuously, filling link reservoirs ahead of
//! consumption, so communication hides behind computation until cumulative
//! demand overtakes the schedule. Ops execute strictly in order — every
//! gadget op is a multi-patch lattice-surgery operation on registers
//! striped across all modules, so each occupies the shared routing fabric
//! — and stalls emerge from the interleaving of computation with the two
//! supply processes instead of a closed form.
//!
//! Full-run numbers extrapolate one simulated prime iteration: the
//! streaming stage is measured over a fixed averaging window of loading
//! gadgets and rescaled to the full exponent length, and the whole
//! iteration is multiplied by the iteration ratio `n·ceil(m/w1)/|p|`.

use serde::{Deserialize, Serialize};

use crate::compile::{compile_prime_iteration, PipelineStage, WindowConfig};
use crate::distribute::{partition, DistributedCircuit, ModuleLayout};
use crate::error::{Error, Result};
use crate::ir::{FixupKind, FundamentalOp, OpWeights};
use crate::residue::is_prime_u64;
use rayon::prelude::*;

/// Error-corrected hardware operating point.
///
/// Deserializing fills omitted fields from [`HardwareModel::default`], the
/// production operating point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HardwareModel {
    /// Surface-code distance (odd, at least 3).
    pub code_distance: u32,
    /// Measurement-and-feedforward time per logical layer, µs.
    pub t_mea_us: f64,
    /// Magic-state cultivation period as a multiple of `t_mea`.
    pub t_t_factor: f64,
    /// Machine-wide physical Bell-pair generation rate, pairs per second.
    pub comm_rate_per_s: f64,
    /// Count syndrome rounds as `10(d+1)` instead of `10d`.
    pub clock_plus_one: bool,
    /// Extra latency on every teleport out of the memory module, µs.
    pub mem_read_latency_us: f64,
}

impl Default for HardwareModel {
    fn default() -> Self {
        HardwareModel::new(25)
    }
}

impl HardwareModel {
    pub fn new(code_distance: u32) -> Self {
        HardwareModel {
            code_distance,
            t_mea_us: 1000.0,
            t_t_factor: 5.0,
            comm_rate_per_s: 1e5,
            clock_plus_one: false,
            mem_read_latency_us: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.code_distance < 3 || self.code_distance % 2 == 0 {
            return Err(Error::Config(format!(
                "code distance {} must be odd and at least 3",
                self.code_distance
            )));
        }
        if !(self.t_mea_us > 0.0) {
            return Err(Error::Config("measurement time must be positive".into()));
        }
        Ok(())
    }

    /// Syndrome-cycle time of one logical layer without measurement, µs.
    pub fn clock_time_us(&self) -> f64 {
        let d = self.code_distance + u32::from(self.clock_plus_one);
        10.0 * d as f64
    }

    /// Full logical-layer time: syndrome rounds plus measurement, µs.
    pub fn layer_time_us(&self) -> f64 {
        self.clock_time_us() + self.t_mea_us
    }

    /// Magic-state cultivation period, µs.
    pub fn t_t_us(&self) -> f64 {
        self.t_t_factor * self.t_mea_us
    }

    /// Time to generate one logical Bell pair (`d²` physical pairs), µs.
    pub fn t_gen_us(&self) -> f64 {
        let d2 = (self.code_distance as f64) * (self.code_distance as f64);
        d2 / self.comm_rate_per_s * 1e6
    }

    /// Inter/intra time ratio against the bare syndrome clock.
    pub fn tau(&self) -> f64 {
        tau(self.code_distance, self.comm_rate_per_s, self.clock_time_us())
    }
}

/// Ratio of the logical inter-module communication time (`d²` physical
/// pairs at `comm_rate`) to the intra-module logical clock `t_intra`.
pub fn tau(d: u32, comm_rate_per_s: f64, t_intra_us: f64) -> f64 {
    let d2 = (d as f64) * (d as f64);
    (d2 / comm_rate_per_s * 1e6) / t_intra_us
}

/// Physical Bell-pair rate that realises a given `tau` at distance `d`.
pub fn comm_rate_for_tau(d: u32, tau: f64, t_intra_us: f64) -> f64 {
    let d2 = (d as f64) * (d as f64);
    d2 / (tau * t_intra_us) * 1e6
}

/// Physical qubits of `patches` logical surface patches at distance `d`
/// (data plus syndrome: `2d²` each).
pub fn physical_qubits(d: u32, patches: u32) -> u64 {
    2 * (d as u64) * (d as u64) * (patches as u64)
}

/// Storage-code shape of the memory module.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemoryCode {
    /// Physical qubits per storage block (data and checks).
    pub block_physical: u32,
    /// Logical qubits per storage block.
    pub block_logical: u32,
    /// Surface patches staged for lattice-surgery readout.
    pub staging_patches: u32,
    /// Distance of the staging patches.
    pub staging_d: u32,
}

impl MemoryCode {
    /// The high-rate block code used at the production scale.
    pub fn production() -> Self {
        MemoryCode { block_physical: 1020, block_logical: 16, staging_patches: 6, staging_d: 25 }
    }

    /// The compact block code used by the budget-constrained processors.
    pub fn compact() -> Self {
        MemoryCode { block_physical: 252, block_logical: 12, staging_patches: 12, staging_d: 9 }
    }

    /// Physical qubits to store `logical_bits`, including staging.
    pub fn physical(&self, logical_bits: u64) -> u64 {
        let blocks = logical_bits.div_ceil(self.block_logical as u64);
        blocks * self.block_physical as u64
            + physical_qubits(self.staging_d, self.staging_patches)
    }
}

/// Outcome of one scheduling pass.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScheduleOutcome {
    /// Total wall time of the op stream, µs.
    pub wall_us: f64,
    /// Logical layers executed (communication markers are free).
    pub layers: u64,
    /// Reported circuit depth: each layer is a gate step plus a
    /// correction cycle.
    pub depth: u64,
    /// Pure compute time `layers × layer_time`, µs.
    pub compute_us: f64,
    /// Generator busy time `hops × t_gen`, µs.
    pub comm_busy_us: f64,
    /// Stall time waiting on Bell-pair supply, µs.
    pub comm_wait_us: f64,
    /// Stall time waiting on magic-state supply, µs.
    pub factory_wait_us: f64,
    /// Logical pairs consumed (connection count).
    pub bell_logical: u64,
    /// Nearest-neighbour pair consumptions (chain hops).
    pub bell_hops: u64,
    /// Physical Bell pairs: `hops × d²`.
    pub bell_physical: u64,
    /// T gates consumed across all modules.
    pub t_gates: u64,
    /// Lower bound from the dependency critical path, µs.
    pub critical_path_us: f64,
    /// Wall time per pipeline stage when stage ranges were supplied.
    pub stage_us: Vec<(String, f64)>,
}

/// One per-module magic-state factory: sixteen cultivation slots refill
/// every `t_T` (rate `16/t_T` T per µs), smoothed by a four-token staging
/// row (32 T capacity). Ops cannot finish before their last T arrives.
struct Factory {
    tokens: f64,
    last_us: f64,
    rate: f64,
    cap: f64,
}

impl Factory {
    fn new(t_t_us: f64) -> Self {
        let cap = 32.0;
        Factory { tokens: cap, last_us: 0.0, rate: 16.0 / t_t_us, cap }
    }

    /// Earliest time `n` T gates are available for an op running over
    /// `[start, start+dur)`; consumes them.
    fn draw(&mut self, n: f64, start: f64, dur: f64) -> f64 {
        self.tokens = (self.tokens + (start - self.last_us) * self.rate).min(self.cap);
        self.last_us = start;
        let deficit = n - self.tokens;
        let t_ready = if deficit > 0.0 { start + deficit / self.rate } else { start };
        let end = (start + dur).max(t_ready);
        self.tokens = (self.tokens + (end - start) * self.rate - n).min(self.cap).max(0.0);
        self.last_us = end;
        end
    }
}

fn t_demand(
    op: &FundamentalOp,
    placement: &[Vec<u32>],
    router: usize,
    out: &mut Vec<(usize, f64)>,
) {
    out.clear();
    match op {
        FundamentalOp::Load { addr, table, .. } => {
            if addr.len() > 1 && table.len() > 1 {
                out.push((router, 8.0 * (table.len() as f64 - 1.0)));
            }
        }
        FundamentalOp::Add { dest, width, .. } => {
            for b in 0..*width {
                let m = placement[dest.0 as usize][b as usize] as usize;
                match out.iter_mut().find(|(mm, _)| *mm == m) {
                    Some((_, v)) => *v += 16.0,
                    None => out.push((m, 16.0)),
                }
            }
        }
        FundamentalOp::Unlookup { addr, kind, split, .. } => {
            if *kind == FixupKind::Lookup {
                let w = addr.len() as u32;
                let ccx =
                    if *split { (2u64 << w.div_ceil(2)) as f64 } else { ((1u64 << w) - 1) as f64 };
                out.push((router, 8.0 * ccx));
            }
        }
        FundamentalOp::CCX { target, .. } => {
            out.push((placement[target.reg.0 as usize][target.bit as usize] as usize, 8.0));
        }
        FundamentalOp::TInject { target } => {
            out.push((placement[target.reg.0 as usize][target.bit as usize] as usize, 1.0));
        }
        _ => {}
    }
}

/// Schedules a distributed circuit without stage attribution.
pub fn schedule(
    dist: &DistributedCircuit,
    hw: &HardwareModel,
    weights: &OpWeights,
) -> Result<ScheduleOutcome> {
    schedule_staged(dist, hw, weights, &[])
}

/// Schedules a distributed circuit, attributing wall time to the given
/// stage ranges (indices into the *source* op stream).
pub fn schedule_staged(
    dist: &DistributedCircuit,
    hw: &HardwareModel,
    weights: &OpWeights,
    stages: &[(PipelineStage, std::ops::Range<usize>)],
) -> Result<ScheduleOutcome> {
    hw.validate()?;
    let ops = &dist.circuit.ops;
    let t_l = hw.layer_time_us();
    let t_gen = hw.t_gen_us();

    // per-op communication demand in chain hops
    let mut demand = vec![0u64; ops.len()];
    let mut bell_logical = 0u64;
    let mut bell_hops = 0u64;
    for ev in &dist.events {
        demand[ev.seq as usize] += ev.hops;
        bell_logical += ev.logical;
        bell_hops += ev.hops;
    }
    if bell_hops > 0 && !(hw.comm_rate_per_s > 0.0 && t_gen.is_finite()) {
        let seq = demand.iter().position(|&d| d > 0).unwrap_or(0) as u64;
        return Err(Error::Deadlock {
            op_seq: seq,
            reason: "inter-module communication demanded but the Bell generator rate is zero"
                .into(),
        });
    }
    let t_per_module = dist.t_gates_per_module();
    let t_total: u64 = t_per_module.iter().sum();
    if t_total > 0 && !(hw.t_t_us() > 0.0) {
        return Err(Error::Deadlock {
            op_seq: 0,
            reason: "magic states demanded but the cultivation period is zero".into(),
        });
    }

    let mut factories: Vec<Factory> =
        (0..dist.n_modules).map(|_| Factory::new(hw.t_t_us())).collect();
    let router = dist.layout.router as usize;

    // Execution is globally in-order: every gadget op is a multi-patch
    // lattice-surgery operation on registers striped across all modules,
    // so each occupies the shared routing fabric and two ops never
    // overlap. Zero-layer markers pass through for free.
    let mut gen_free = 0.0f64;
    let mut now = 0.0f64;
    let mut layers = 0u64;
    let mut comm_wait = 0.0f64;
    let mut factory_wait = 0.0f64;
    let mut ends: Vec<f64> = Vec::with_capacity(ops.len());
    let mut tbuf: Vec<(usize, f64)> = Vec::new();

    for (i, sop) in ops.iter().enumerate() {
        let mut start = now;
        if let FundamentalOp::Teleport { from_module, .. } = &sop.op {
            if Some(*from_module) == dist.memory_module {
                start += hw.mem_read_latency_us;
            }
        }
        // the generator runs continuously, filling link reservoirs ahead
        // of consumption; an op waits only if cumulative pair production
        // has not yet covered cumulative demand
        if demand[i] > 0 {
            let gen_done = gen_free + demand[i] as f64 * t_gen;
            gen_free = gen_done;
            if gen_done > start {
                comm_wait += gen_done - start;
                start = gen_done;
            }
        }
        let op_layers = weights.op_layers(&sop.op);
        layers += op_layers;
        let dur = op_layers as f64 * t_l;
        let mut end = start + dur;
        t_demand(&sop.op, &dist.placement, router, &mut tbuf);
        for &(m, n) in &tbuf {
            let fin = factories[m].draw(n, start, dur);
            if fin > end {
                factory_wait += fin - end;
                end = fin;
            }
        }
        now = end;
        ends.push(end);
    }
    let wall = now;

    // stage attribution by running-maximum boundaries
    let mut stage_us = Vec::new();
    if !stages.is_empty() {
        let mut running = 0.0f64;
        let mut rmax: Vec<f64> = Vec::with_capacity(ends.len());
        for &e in &ends {
            running = running.max(e);
            rmax.push(running);
        }
        let boundary = |src_end: usize| -> f64 {
            // last rewritten op whose source index is below src_end
            let mut last = None;
            for (i, &s) in dist.source_of.iter().enumerate() {
                if s < src_end {
                    last = Some(i);
                } else {
                    break;
                }
            }
            last.map(|i| rmax[i]).unwrap_or(0.0)
        };
        let mut prev = 0.0f64;
        for (stage, range) in stages {
            let b = boundary(range.end);
            stage_us.push((format!("{stage:?}"), (b - prev).max(0.0)));
            prev = b;
        }
    }

    let d2 = (hw.code_distance as u64) * (hw.code_distance as u64);
    let compute_us = layers as f64 * t_l;
    Ok(ScheduleOutcome {
        wall_us: wall,
        layers,
        depth: 2 * layers,
        compute_us,
        comm_busy_us: bell_hops as f64 * t_gen,
        comm_wait_us: comm_wait,
        factory_wait_us: factory_wait,
        bell_logical,
        bell_hops,
        bell_physical: bell_hops * d2,
        t_gates: t_total,
        critical_path_us: dist.circuit.layer_critical_path(weights) as f64 * t_l,
        stage_us,
    })
}

/// Per-module entry of a [`ResourceReport`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModuleReport {
    pub module: u32,
    pub kind: String,
    pub data_qubits: u32,
    pub patches: u32,
    pub physical_qubits: u64,
    pub t_gates: u64,
}

/// Machine-readable summary of one scheduled run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResourceReport {
    pub wall_s: f64,
    pub wall_days: f64,
    pub layers: u64,
    pub depth: u64,
    pub tau: f64,
    /// Communication fully hidden behind computation.
    pub free_modularization: bool,
    pub bell_logical: u64,
    pub bell_hops: u64,
    pub bell_physical: u64,
    pub t_gates: u64,
    pub hot_qubits: u32,
    pub modules: Vec<ModuleReport>,
    pub comm_matrix: Vec<Vec<u64>>,
}

impl ResourceReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}

/// Builds the report for one scheduled distributed circuit.
pub fn resource_report(
    dist: &DistributedCircuit,
    hw: &HardwareModel,
    sched: &ScheduleOutcome,
    memory: &MemoryCode,
) -> ResourceReport {
    let stats = dist.comm_stats();
    let mut data = vec![0u32; dist.n_modules as usize];
    for reg in &dist.placement {
        for &m in reg {
            data[m as usize] += 1;
        }
    }
    let patches = dist.layout.caps.patches();
    let modules = (0..dist.n_modules)
        .map(|m| {
            let is_mem = Some(m) == dist.memory_module;
            ModuleReport {
                module: m,
                kind: if is_mem { "memory".into() } else { "processor".into() },
                data_qubits: data[m as usize],
                patches: if is_mem { 0 } else { patches },
                physical_qubits: if is_mem {
                    memory.physical(data[m as usize] as u64)
                } else {
                    physical_qubits(hw.code_distance, patches)
                },
                t_gates: stats.t_per_module[m as usize],
            }
        })
        .collect();
    let wall_s = sched.wall_us * 1e-6;
    ResourceReport {
        wall_s,
        wall_days: wall_s / 86_400.0,
        layers: sched.layers,
        depth: sched.depth,
        tau: hw.tau(),
        free_modularization: sched.comm_wait_us <= 0.01 * sched.wall_us,
        bell_logical: sched.bell_logical,
        bell_hops: sched.bell_hops,
        bell_physical: sched.bell_physical,
        t_gates: sched.t_gates,
        hot_qubits: dist.circuit.registers.iter().map(|r| r.width).sum(),
        modules,
        comm_matrix: stats.matrix,
    }
}

/// Full-shot time from one simulated prime iteration:
/// `t_shot = t_iteration × n·ceil(m/w1)/qe_bits`.
pub fn extrapolate_shot_time(t_iteration_s: f64, n: u64, m: u64, w1: u32, qe_bits: u32) -> f64 {
    t_iteration_s * n as f64 * m.div_ceil(w1 as u64) as f64 / qe_bits as f64
}

/// Smallest prime with exactly `bits` bits: the representative modulus of
/// one residue channel.
pub fn representative_prime(bits: u32) -> u64 {
    assert!((2..=32).contains(&bits), "representative prime width out of range");
    let mut p = (1u64 << (bits - 1)) + 1;
    while !is_prime_u64(p) {
        p += 2;
    }
    p
}

/// Inputs of a full production-scale estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductionParams {
    /// Modulus width of the factored number, bits.
    pub n: u64,
    /// Exponent length per iteration, bits.
    pub m: u64,
    /// Residue prime width, bits.
    pub prime_bits: u32,
    pub cfg: WindowConfig,
    /// Processors; 1 schedules the monolithic reference without memory
    /// streaming.
    pub n_qpu: u32,
    /// Loading gadgets simulated before rescaling to `ceil(m/w1)`.
    pub sim_loading_windows: usize,
    pub seed: u64,
}

impl Default for ProductionParams {
    fn default() -> Self {
        ProductionParams {
            n: 2048,
            m: 1280,
            prime_bits: 24,
            cfg: WindowConfig::production(),
            n_qpu: 6,
            sim_loading_windows: 40,
            seed: 7,
        }
    }
}

/// One extrapolated shot.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShotEstimate {
    /// Wall time of one full prime iteration, seconds.
    pub t_iteration_s: f64,
    pub t_shot_s: f64,
    pub t_shot_days: f64,
    /// Layers of one full prime iteration.
    pub layers_iteration: f64,
    /// Reported depth of the whole shot (`2 ×` layers).
    pub depth_total: f64,
    /// Prime iterations per shot.
    pub iterations: f64,
    /// Chain hops of one full prime iteration.
    pub hops_iteration: f64,
    pub schedule: ScheduleOutcome,
    pub report: ResourceReport,
}

fn stage_time(sched: &ScheduleOutcome, stage: PipelineStage) -> f64 {
    let name = format!("{stage:?}");
    sched.stage_us.iter().find(|(n, _)| *n == name).map(|(_, t)| *t).unwrap_or(0.0)
}

/// Simulates one prime iteration on the given hardware and extrapolates
/// the full shot. With `n_qpu == 1` this is the monolithic reference.
pub fn estimate_shot(params: &ProductionParams, hw: &HardwareModel) -> Result<ShotEstimate> {
    hw.validate()?;
    params.cfg.validate()?;
    if params.sim_loading_windows == 0 {
        return Err(Error::Config("the averaging window needs at least one gadget".into()));
    }
    let p = representative_prime(params.prime_bits);
    let distributed = params.n_qpu > 1;
    let memory_module = distributed.then_some(params.n_qpu);
    let plan = compile_prime_iteration(
        p,
        2,
        &params.cfg,
        params.sim_loading_windows,
        memory_module,
        params.seed,
    )?;
    let mut layout = ModuleLayout::new(params.n_qpu);
    if distributed {
        layout = layout.with_memory_module();
    }
    let dist = partition(&plan.circuit, &layout)?;
    let weights = OpWeights::default();
    let sched = schedule_staged(&dist, hw, &weights, &plan.stages)?;

    // rescale the averaged streaming stage to the full exponent length
    let full_windows = params.m.div_ceil(params.cfg.w1 as u64) as f64;
    let scale = full_windows / params.sim_loading_windows as f64;
    let loading_us = stage_time(&sched, PipelineStage::Loading);
    let t_pi_us = sched.wall_us - loading_us + loading_us * scale;

    let loading_range = plan.stage_range(PipelineStage::Loading);
    let loading_layers: u64 =
        plan.circuit.ops[loading_range.clone()].iter().map(|s| weights.op_layers(&s.op)).sum();
    let layers_iteration =
        sched.layers as f64 - loading_layers as f64 + loading_layers as f64 * scale;
    let loading_hops: u64 = dist
        .events
        .iter()
        .filter(|ev| loading_range.contains(&dist.source_of[ev.seq as usize]))
        .map(|ev| ev.hops)
        .sum();
    let hops_iteration =
        sched.bell_hops as f64 - loading_hops as f64 + loading_hops as f64 * scale;

    let iterations =
        params.n as f64 * full_windows / params.prime_bits as f64;
    let t_iteration_s = t_pi_us * 1e-6;
    let t_shot_s = t_iteration_s * iterations;
    let memory_code = MemoryCode::production();
    let mut report = resource_report(&dist, hw, &sched, &memory_code);
    // The circuit only carries hot registers; the memory module's cold
    // payload is the full m-bit streamed exponent, not the simulated slice.
    if let Some(mem) = dist.memory_module {
        if let Some(row) = report.modules.iter_mut().find(|r| r.module == mem) {
            row.data_qubits = params.m as u32;
            row.physical_qubits = memory_code.physical(params.m);
        }
    }
    Ok(ShotEstimate {
        t_iteration_s,
        t_shot_s,
        t_shot_days: t_shot_s / 86_400.0,
        layers_iteration,
        depth_total: 2.0 * layers_iteration * iterations,
        iterations,
        hops_iteration,
        schedule: sched,
        report,
    })
}

/// One row of a parameter sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: f64,
    pub wall_days: f64,
    pub qubits_per_qpu: u64,
    pub total_qubits: u64,
    pub slowdown_ratio: f64,
}

/// Renders sweep rows as CSV with a named axis column.
pub fn sweep_csv(axis_name: &str, rows: &[SweepRow]) -> String {
    let mut s = format!("{axis_name},wall_days,qubits_per_qpu,total_qubits,slowdown_ratio\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            r.axis, r.wall_days, r.qubits_per_qpu, r.total_qubits, r.slowdown_ratio
        ));
    }
    s
}

/// Shot time versus the streaming window width `w1`, at fixed hardware.
/// Slowdown is reported against the same run's pure compute time.
pub fn w1_sweep(
    params: &ProductionParams,
    hw: &HardwareModel,
    w1_range: std::ops::RangeInclusive<u32>,
) -> Result<Vec<SweepRow>> {
    let per_qpu = physical_qubits(hw.code_distance, ModuleLayout::new(1).caps.patches());
    let points: Vec<u32> = w1_range.collect();
    points
        .par_iter()
        .map(|&w1| -> Result<SweepRow> {
            let mut p = params.clone();
            p.cfg.w1 = w1;
            let est = estimate_shot(&p, hw)?;
            Ok(SweepRow {
                axis: w1 as f64,
                wall_days: est.t_shot_days,
                qubits_per_qpu: per_qpu,
                total_qubits: per_qpu * params.n_qpu as u64,
                slowdown_ratio: est.schedule.wall_us / est.schedule.compute_us,
            })
        })
        .collect()
}

/// Shot delay versus the cultivation period `t_T` (as multiples of
/// `t_mea`), against a factory fast enough to never throttle.
pub fn t_t_sweep(
    params: &ProductionParams,
    hw: &HardwareModel,
    factors: &[f64],
) -> Result<Vec<SweepRow>> {
    let mut fast = hw.clone();
    fast.t_t_factor = 1e-3;
    let base = estimate_shot(params, &fast)?.t_shot_days;
    let per_qpu = physical_qubits(hw.code_distance, ModuleLayout::new(1).caps.patches());
    factors
        .par_iter()
        .map(|&k| -> Result<SweepRow> {
            let mut h = hw.clone();
            h.t_t_factor = k;
            let est = estimate_shot(params, &h)?;
            Ok(SweepRow {
                axis: k,
                wall_days: est.t_shot_days,
                qubits_per_qpu: per_qpu,
                total_qubits: per_qpu * params.n_qpu as u64,
                slowdown_ratio: est.t_shot_days / base,
            })
        })
        .collect()
}

/// Largest `tau` whose shot time stays within one percent of the
/// `tau = 1` reference, for each measurement time in the grid: the
/// boundary of free modularization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FreeModRow {
    pub t_mea_us: f64,
    pub tau_boundary: f64,
}

pub fn free_modularization_scan(
    params: &ProductionParams,
    hw: &HardwareModel,
    t_mea_grid: &[f64],
    tau_grid: &[f64],
) -> Result<Vec<FreeModRow>> {
    t_mea_grid
        .par_iter()
        .map(|&t_mea| -> Result<FreeModRow> {
            let mut h = hw.clone();
            h.t_mea_us = t_mea;
            h.comm_rate_per_s = comm_rate_for_tau(h.code_distance, 1.0, h.clock_time_us());
            let base = estimate_shot(params, &h)?.t_shot_s;
            let boundary = tau_grid
                .par_iter()
                .map(|&tau| -> Result<f64> {
                    let mut ht = h.clone();
                    ht.comm_rate_per_s =
                        comm_rate_for_tau(ht.code_distance, tau, ht.clock_time_us());
                    let t = estimate_shot(params, &ht)?.t_shot_s;
                    Ok(if t <= 1.01 * base { tau } else { 0.0 })
                })
                .try_reduce(|| 0.0f64, |a, b| Ok(a.max(b)))?;
            Ok(FreeModRow { t_mea_us: t_mea, tau_boundary: boundary })
        })
        .collect()
}

/// Budget-constrained multi-processor configuration: clusters of
/// four-QPU compact processors sharing one block-code memory, swept over
/// the exponent split `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QgpuParams {
    pub n: u64,
    pub prime_bits: u32,
    pub cfg: WindowConfig,
    /// Physical-qubit budget of one machine.
    pub budget_physical: u64,
    /// QPUs per compact processor.
    pub proc_qpus: u32,
    /// Code distance of the compact processors.
    pub proc_d: u32,
    /// Logical patches per processor: the QPU blocks plus a routing
    /// spine for the shared memory interface.
    pub proc_patches: u32,
    pub memory: MemoryCode,
    pub t_mea_us: f64,
    pub comm_rate_per_s: f64,
    pub sim_loading_windows: usize,
    pub seed: u64,
}

impl Default for QgpuParams {
    fn default() -> Self {
        QgpuParams {
            n: 2048,
            prime_bits: 24,
            cfg: WindowConfig::production(),
            budget_physical: 1_000_000,
            proc_qpus: 4,
            proc_d: 9,
            proc_patches: 4 * ModuleLayout::new(1).caps.patches() + 36,
            memory: MemoryCode::compact(),
            t_mea_us: 1000.0,
            comm_rate_per_s: 1e5,
            sim_loading_windows: 40,
            seed: 7,
        }
    }
}

/// One point of the exponent-split sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QgpuRow {
    pub s: u32,
    /// Exponent length `n/2 + n/s`, bits.
    pub m_bits: u64,
    pub mem_physical: u64,
    pub n_processors: u64,
    pub shots: u32,
    pub per_shot_days: f64,
    pub total_days: f64,
    pub total_physical: u64,
}

pub fn qgpu_csv(rows: &[QgpuRow]) -> String {
    let mut s = String::from(
        "s,m_bits,mem_physical,n_processors,shots,per_shot_days,total_days,total_physical\n",
    );
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.s,
            r.m_bits,
            r.mem_physical,
            r.n_processors,
            r.shots,
            r.per_shot_days,
            r.total_days,
            r.total_physical
        ));
    }
    s
}

/// Sweeps the exponent split `s`: shorter exponents shrink both the
/// iteration count and the per-iteration streaming time, while `s+1`
/// shots must run; processors fill whatever budget the memory leaves.
pub fn qgpu_sweep(
    params: &QgpuParams,
    s_range: std::ops::RangeInclusive<u32>,
) -> Result<Vec<QgpuRow>> {
    let mut hw = HardwareModel::new(params.proc_d);
    hw.t_mea_us = params.t_mea_us;
    hw.comm_rate_per_s = params.comm_rate_per_s;
    let proc_physical = physical_qubits(params.proc_d, params.proc_patches);

    // one schedule of the compact processor serves every split: only the
    // streaming length changes with s
    let p = representative_prime(params.prime_bits);
    let plan = compile_prime_iteration(
        p,
        2,
        &params.cfg,
        params.sim_loading_windows,
        Some(params.proc_qpus),
        params.seed,
    )?;
    let layout = ModuleLayout::new(params.proc_qpus).with_memory_module();
    let dist = partition(&plan.circuit, &layout)?;
    let weights = OpWeights::default();
    let sched = schedule_staged(&dist, &hw, &weights, &plan.stages)?;
    let loading_us = stage_time(&sched, PipelineStage::Loading);
    let rest_us = sched.wall_us - loading_us;
    let per_window_us = loading_us / params.sim_loading_windows as f64;

    let mut rows = Vec::new();
    for s in s_range {
        if s == 0 {
            continue;
        }
        let m_bits = params.n / 2 + params.n.div_ceil(s as u64);
        let mem_physical = params.memory.physical(m_bits);
        let left = params.budget_physical.saturating_sub(mem_physical);
        let n_processors = left / proc_physical;
        if n_processors == 0 {
            return Err(Error::OutOfCapacity {
                requested: proc_physical as usize,
                available: left as usize,
            });
        }
        let windows = m_bits.div_ceil(params.cfg.w1 as u64) as f64;
        let t_pi_s = (rest_us + per_window_us * windows) * 1e-6;
        let iterations = params.n as f64 * windows / params.prime_bits as f64;
        let per_shot_days = t_pi_s * iterations / n_processors as f64 / 86_400.0;
        let shots = s + 1;
        rows.push(QgpuRow {
            s,
            m_bits,
            mem_physical,
            n_processors,
            shots,
            per_shot_days,
            total_days: per_shot_days * shots as f64,
            total_physical: n_processors * proc_physical + mem_physical,
        });
    }
    Ok(rows)
}

/// A bounded pool of workspace qubits: released qubits are reissued
/// before fresh ones, and exhaustion is an error rather than silent
/// growth.
#[derive(Debug, Clone)]
pub struct QubitPool {
    capacity: u32,
    free: Vec<u32>,
    next: u32,
    live: u32,
}

impl QubitPool {
    pub fn new(capacity: u32) -> Self {
        QubitPool { capacity, free: Vec::new(), next: 0, live: 0 }
    }

    pub fn alloc(&mut self) -> Result<u32> {
        let id = if let Some(id) = self.free.pop() {
            id
        } else if self.next < self.capacity {
            let id = self.next;
            self.next += 1;
            id
        } else {
            return Err(Error::OutOfCapacity { requested: 1, available: 0 });
        };
        self.live += 1;
        Ok(id)
    }

    pub fn release(&mut self, id: u32) {
        debug_assert!(id < self.next);
        self.free.push(id);
        self.live -= 1;
    }

    pub fn live(&self) -> u32 {
        self.live
    }

    /// Distinct qubits ever issued.
    pub fn high_water(&self) -> u32 {
        self.next
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{Bit, Circuit, CircuitMeta, RegisterId};

    fn hw25() -> HardwareModel {
        HardwareModel::new(25)
    }

    #[test]
    fn tau_and_qubit_formulas_are_exact() {
        assert_eq!(tau(25, 1e5, 250.0), 25.0);
        assert_eq!(physical_qubits(25, 49), 61_250);
        assert_eq!(physical_qubits(15, 49), 22_050);
        assert_eq!(physical_qubits(27, 49), 71_442);
        assert_eq!(6 * physical_qubits(25, 49), 367_500);
        // rate and tau are inverse to one another
        let rate = comm_rate_for_tau(25, 25.0, 250.0);
        assert!((rate - 1e5).abs() < 1e-6);
    }

    #[test]
    fn layer_time_composition() {
        let mut h = hw25();
        assert_eq!(h.clock_time_us(), 250.0);
        assert_eq!(h.layer_time_us(), 1250.0);
        assert_eq!(h.t_t_us(), 5000.0);
        h.clock_plus_one = true;
        assert_eq!(h.clock_time_us(), 260.0);
        h.t_mea_us = 250.0;
        assert_eq!(h.layer_time_us(), 510.0);
    }

    #[test]
    fn validation_rejects_even_distance() {
        let mut h = HardwareModel::new(24);
        assert!(h.validate().is_err());
        h.code_distance = 25;
        assert!(h.validate().is_ok());
    }

    fn tiny_circuit(ops: Vec<FundamentalOp>) -> (Circuit, RegisterId, RegisterId) {
        let mut c = Circuit::new(CircuitMeta::default());
        let a = c.add_register("q_h", 6);
        let b = c.add_register("q_l", 6);
        for op in ops {
            c.push(op);
        }
        (c, a, b)
    }

    #[test]
    fn empty_circuit_schedules_to_zero() {
        let (c, _, _) = tiny_circuit(vec![]);
        let d = partition(&c, &ModuleLayout::new(1)).unwrap();
        let s = schedule(&d, &hw25(), &OpWeights::default()).unwrap();
        assert_eq!(s.wall_us, 0.0);
        assert_eq!(s.layers, 0);
        assert_eq!(s.depth, 0);
    }

    #[test]
    fn single_cnot_costs_one_layer() {
        let (mut c, a, b) = tiny_circuit(vec![]);
        c.push(FundamentalOp::CNOTCascade { control: Bit::new(a, 0), targets: vec![Bit::new(b, 0)] });
        let d = partition(&c, &ModuleLayout::new(1)).unwrap();
        let s = schedule(&d, &hw25(), &OpWeights::default()).unwrap();
        assert_eq!(s.wall_us, 1250.0, "one layer at d=25 with 1 ms measurement");
        assert_eq!(s.depth, 2, "a layer is a gate step plus a correction cycle");
    }

    #[test]
    fn adder_wall_time_example() {
        let (c, _, _) =
            tiny_circuit(vec![FundamentalOp::Add { dest: RegisterId(0), src: RegisterId(1), width: 6 }]);
        let d = partition(&c, &ModuleLayout::new(1)).unwrap();
        let s = schedule(&d, &hw25(), &OpWeights::default()).unwrap();
        // 6 bits × 10 layers each × 1.25 ms
        assert_eq!(s.layers, 60);
        assert!((s.wall_us - 75_000.0).abs() < 1e-9);
    }

    #[test]
    fn infinite_comm_rate_matches_monolithic_wall() {
        let m = crate::compile::compile_modexp(
            13,
            7,
            8,
            &WindowConfig::desk(),
            crate::compile::ExpMode::KeepResult,
        )
        .unwrap();
        let w = OpWeights::default();
        let mono = schedule(&partition(&m.circuit, &ModuleLayout::new(1)).unwrap(), &hw25(), &w)
            .unwrap();
        let mut fast = hw25();
        fast.comm_rate_per_s = 1e18;
        let dist = schedule(&partition(&m.circuit, &ModuleLayout::new(3)).unwrap(), &fast, &w)
            .unwrap();
        assert_eq!(mono.layers, dist.layers, "markers add no layers");
        assert!(
            (mono.wall_us - dist.wall_us).abs() < 1e-3,
            "free communication hides completely: {} vs {}",
            mono.wall_us,
            dist.wall_us
        );
        assert!(dist.bell_hops > 0);
    }

    #[test]
    fn wall_time_monotone_in_comm_rate_mea_and_distance() {
        let m = crate::compile::compile_modexp(
            13,
            7,
            8,
            &WindowConfig::desk(),
            crate::compile::ExpMode::KeepResult,
        )
        .unwrap();
        let d = partition(&m.circuit, &ModuleLayout::new(3)).unwrap();
        let w = OpWeights::default();
        let wall = |hw: &HardwareModel| schedule(&d, hw, &w).unwrap().wall_us;
        // slower pair generation never speeds the run up
        let mut prev = f64::INFINITY;
        for rate in [1e3, 1e4, 1e5, 1e6, 1e9] {
            let mut h = hw25();
            h.comm_rate_per_s = rate;
            let t = wall(&h);
            assert!(t <= prev, "rate {rate}: {t} > {prev}");
            prev = t;
        }
        // longer measurement or larger distance never speeds it up
        let mut prev = 0.0;
        for t_mea in [250.0, 500.0, 1000.0, 2000.0] {
            let mut h = hw25();
            h.t_mea_us = t_mea;
            let t = wall(&h);
            assert!(t >= prev);
            prev = t;
        }
        let mut prev = 0.0;
        for d_code in [13, 17, 21, 25] {
            let h = HardwareModel::new(d_code);
            let t = wall(&h);
            assert!(t >= prev);
            prev = t;
        }
    }

    #[test]
    fn wall_never_beats_critical_path() {
        let m = crate::compile::compile_modexp(
            11,
            2,
            8,
            &WindowConfig::desk(),
            crate::compile::ExpMode::UncomputeResult,
        )
        .unwrap();
        for n in [1u32, 2, 3] {
            let d = partition(&m.circuit, &ModuleLayout::new(n)).unwrap();
            let s = schedule(&d, &hw25(), &OpWeights::default()).unwrap();
            assert!(s.wall_us >= s.critical_path_us);
            // in-order execution: never faster than the layer total
            assert!(s.wall_us >= s.compute_us * (1.0 - 1e-12));
        }
    }

    #[test]
    fn bell_accounting_is_conserved() {
        let m = crate::compile::compile_modexp(
            13,
            7,
            8,
            &WindowConfig::desk(),
            crate::compile::ExpMode::KeepResult,
        )
        .unwrap();
        let d = partition(&m.circuit, &ModuleLayout::new(3)).unwrap();
        let s = schedule(&d, &hw25(), &OpWeights::default()).unwrap();
        let stats = d.comm_stats();
        assert_eq!(s.bell_logical, stats.total_logical);
        assert_eq!(s.bell_hops, stats.total_hops);
        assert_eq!(s.bell_physical, stats.total_hops * 625);
    }

    #[test]
    fn zero_comm_rate_with_demand_deadlocks() {
        let m = crate::compile::compile_modexp(
            13,
            7,
            6,
            &WindowConfig::desk(),
            crate::compile::ExpMode::KeepResult,
        )
        .unwrap();
        let d = partition(&m.circuit, &ModuleLayout::new(2)).unwrap();
        let mut h = hw25();
        h.comm_rate_per_s = 0.0;
        let err = schedule(&d, &h, &OpWeights::default()).unwrap_err();
        assert!(matches!(err, Error::Deadlock { .. }));
    }

    #[test]
    fn slow_factory_throttles_t_heavy_ops() {
        // one 6-bit addition demands 96 T over 60 layers
        let (c, _, _) =
            tiny_circuit(vec![FundamentalOp::Add { dest: RegisterId(0), src: RegisterId(1), width: 6 }]);
        let d = partition(&c, &ModuleLayout::new(1)).unwrap();
        let fast = schedule(&d, &hw25(), &OpWeights::default()).unwrap();
        assert_eq!(fast.factory_wait_us, 0.0, "default cultivation keeps up");
        let mut slow = hw25();
        slow.t_t_factor = 100.0; // 0.16 T per ms against 1.28 demanded
        let s = schedule(&d, &slow, &OpWeights::default()).unwrap();
        assert!(s.factory_wait_us > 0.0);
        assert!(s.wall_us > fast.wall_us);
    }

    #[test]
    fn memory_read_latency_defers_streamed_ops() {
        let mut c = Circuit::new(CircuitMeta::default());
        let buf = c.add_register("buffer", 2);
        c.registers[buf.0 as usize].role = Some("router".into());
        c.push(FundamentalOp::Teleport {
            bits: vec![Bit::new(buf, 0), Bit::new(buf, 1)],
            from_module: 1,
            to_module: 0,
        });
        c.push(FundamentalOp::CNOTCascade {
            control: Bit::new(buf, 0),
            targets: vec![Bit::new(buf, 1)],
        });
        let layout = ModuleLayout::new(1).with_memory_module();
        let d = partition(&c, &layout).unwrap();
        // fast pair generation so the read latency is not hidden behind it
        let mut h = hw25();
        h.comm_rate_per_s = 1e12;
        let base = schedule(&d, &h, &OpWeights::default()).unwrap();
        h.mem_read_latency_us = 500.0;
        let s = schedule(&d, &h, &OpWeights::default()).unwrap();
        assert!(
            (s.wall_us - base.wall_us - 500.0).abs() < 0.1,
            "{} vs {}",
            s.wall_us,
            base.wall_us
        );
    }

    #[test]
    fn representative_primes() {
        assert_eq!(representative_prime(3), 5);
        assert_eq!(representative_prime(24), 8_388_617);
        assert_eq!(64 - representative_prime(24).leading_zeros(), 24);
    }

    #[test]
    fn extrapolation_identities() {
        // one window, exponent as wide as the modulus: the shot is one iteration
        assert_eq!(extrapolate_shot_time(3.0, 16, 16, 16, 16), 3.0);
        // production ratio: 2048 · 214 / 24
        let r = extrapolate_shot_time(1.0, 2048, 1280, 6, 24);
        assert!((r - 18_261.333333).abs() < 1e-3);
        // doubling the exponent (in whole windows) doubles the shot
        let once = extrapolate_shot_time(1.0, 2048, 1284, 6, 24);
        let twice = extrapolate_shot_time(1.0, 2048, 2568, 6, 24);
        assert!((twice / once - 2.0).abs() < 1e-9);
    }

    #[test]
    fn memory_code_footprints() {
        assert_eq!(MemoryCode::production().physical(1280), 80 * 1020 + 6 * 1250);
        assert_eq!(MemoryCode::compact().physical(1707), 143 * 252 + 12 * 162);
    }

    #[test]
    fn stage_times_tile_the_iteration() {
        let plan =
            compile_prime_iteration(61, 2, &WindowConfig::desk(), 4, None, 5).unwrap();
        let d = partition(&plan.circuit, &ModuleLayout::new(1)).unwrap();
        let s = schedule_staged(&d, &hw25(), &OpWeights::default(), &plan.stages).unwrap();
        assert_eq!(s.stage_us.len(), 6);
        let sum: f64 = s.stage_us.iter().map(|(_, t)| t).sum();
        assert!((sum - s.wall_us).abs() < 1e-6, "stages tile the wall time");
        assert!(s.stage_us.iter().all(|(_, t)| *t >= 0.0));
    }

    #[test]
    fn monolithic_production_estimate_in_expected_range() {
        let mut params = ProductionParams::default();
        params.n_qpu = 1;
        let est = estimate_shot(&params, &hw25()).unwrap();
        // table-driven expectation: ≈630k layers per iteration at 1.25 ms,
        // times 18,261 iterations ≈ 160-170 days
        assert!(
            est.t_shot_days > 120.0 && est.t_shot_days < 220.0,
            "monolithic shot {} days",
            est.t_shot_days
        );
        assert!(est.schedule.comm_wait_us == 0.0, "no communication when monolithic");
        assert!(est.report.free_modularization);
        // depth accounts for both the gate and correction cycles
        assert!((est.depth_total / (2.0 * est.layers_iteration * est.iterations) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn distributed_slowdown_bounded_and_positive() {
        let params = ProductionParams::default();
        let dist = estimate_shot(&params, &hw25()).unwrap();
        let mut mono_p = params.clone();
        mono_p.n_qpu = 1;
        let mono = estimate_shot(&mono_p, &hw25()).unwrap();
        let ratio = dist.t_shot_s / mono.t_shot_s;
        assert!(ratio > 1.0, "communication is not free at tau 25: {ratio}");
        assert!(ratio < 1.5, "but it stays moderate: {ratio}");
    }

    #[test]
    fn qubit_pool_reuses_before_growing() {
        let mut pool = QubitPool::new(3);
        let a = pool.alloc().unwrap();
        let b = pool.alloc().unwrap();
        assert_eq!((a, b), (0, 1));
        pool.release(a);
        assert_eq!(pool.alloc().unwrap(), 0, "released qubit is reissued first");
        assert_eq!(pool.alloc().unwrap(), 2);
        assert!(matches!(pool.alloc().unwrap_err(), Error::OutOfCapacity { .. }));
        assert_eq!(pool.high_water(), 3);
        assert_eq!(pool.live(), 3);
    }

    #[test]
    fn serial_t_injection_triples_depth_with_one_workspace_qubit() {
        // three T gates through one ancilla run serially; three ancillas
        // run in one step
        let mut one = Circuit::new(CircuitMeta::default());
        let w = one.add_register("workspace", 1);
        for _ in 0..3 {
            one.push(FundamentalOp::TInject { target: Bit::new(w, 0) });
        }
        let mut three = Circuit::new(CircuitMeta::default());
        let w3 = three.add_register("workspace", 3);
        for i in 0..3 {
            three.push(FundamentalOp::TInject { target: Bit::new(w3, i) });
        }
        assert_eq!(one.depth(), 3 * three.depth());
    }
}
