//! `modshor` — command-line front end for the residue-arithmetic
//! order-finding toolchain.
//!
//! Subcommands: `compile` (write a circuit file), `verify` (check a circuit
//! file against its deterministic rebuild and the modular-power oracle),
//! `estimate` (resource and wall-time report), `sweep` (parameter grids to
//! CSV), `dynarray` (shuttled-array interconnect analysis).
//!
//! Exit codes: `0` pass, `1` verification failure, `2` configuration or
//! usage error.  Every command is deterministic under a fixed seed.

mod artifact;

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, ensure, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use artifact::{audit, rebuild, ArtifactKind, AuditReport, CircuitFile, CompileParams};
use modshor_core::compile::{total_additions, ModExpVerification};
use modshor_core::cost::{
    comm_rate_for_tau, estimate_shot, qgpu_csv, qgpu_sweep, representative_prime, sweep_csv,
    t_t_sweep, w1_sweep, QgpuParams, ShotEstimate, SweepRow,
};
use modshor_core::ir::Bit;
use modshor_core::motion::{
    full_overlap_bandwidth, hybrid_qram_plan, modular_add_time, motion_case, motion_grid_csv,
    motion_phase_grid, motion_time, reservoir_ghz_per_move, MotionProfile, QramPlan, SweepPlan,
};
use modshor_core::residue::modpow_u64;
use modshor_core::scenario::{Interconnect, ScenarioConfig};
use modshor_core::trajectory::{InitPlan, TrajectorySet};

#[derive(Parser)]
#[command(
    name = "modshor",
    version,
    about = "Residue-arithmetic order-finding toolchain: compile, verify, estimate, sweep"
)]
struct Cli {
    /// Scenario config file, TOML or JSON (default: $MODSHOR_CONFIG if set,
    /// else built-in production defaults).
    #[arg(long, global = true, env = "MODSHOR_CONFIG")]
    config: Option<PathBuf>,
    #[command(flatten)]
    over: Overrides,
    #[command(subcommand)]
    cmd: Cmd,
}

/// Field-level overrides applied on top of the loaded config.
#[derive(Args, Debug, Clone)]
struct Overrides {
    /// Seed for every pseudo-random choice.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Modulus width being factored, bits.
    #[arg(long, global = true)]
    rsa_bits: Option<u64>,
    /// Residue prime width, bits.
    #[arg(long, global = true)]
    prime_bits: Option<u32>,
    /// Processing modules (1 = monolithic reference).
    #[arg(long, global = true)]
    n_qpu: Option<u32>,
    /// Shot/length trade-off parameter.
    #[arg(long = "s", global = true)]
    s: Option<u32>,
    /// Streaming window width, bits.
    #[arg(long, global = true)]
    w1: Option<u32>,
    /// Exponent window width, bits.
    #[arg(long, global = true)]
    we: Option<u32>,
    /// Product window width, bits.
    #[arg(long, global = true)]
    wm: Option<u32>,
    /// Surface-code distance.
    #[arg(long = "code-distance", alias = "d", global = true)]
    code_distance: Option<u32>,
    /// Logical measurement-and-feedforward time, µs.
    #[arg(long, global = true)]
    t_mea_us: Option<f64>,
    /// Magic-state cultivation period as a multiple of t_mea.
    #[arg(long, global = true)]
    t_t_factor: Option<f64>,
    /// Machine-wide Bell-pair generation rate, pairs/s.
    #[arg(long, global = true)]
    comm_rate: Option<f64>,
    /// Set the comm rate so the link-slowdown factor equals this value
    /// (takes precedence over --comm-rate).
    #[arg(long, global = true)]
    tau: Option<f64>,
    /// Count syndrome rounds as 10(d+1) instead of 10d.
    #[arg(long, global = true)]
    clock_plus_one: bool,
    /// Random trajectories per verification run.
    #[arg(long, global = true)]
    trajectories: Option<u32>,
    /// Use the shuttled-array interconnect with default motion limits.
    #[arg(long, global = true)]
    dynamic: bool,
}

impl Overrides {
    fn apply(&self, sc: &mut ScenarioConfig) {
        if let Some(v) = self.seed {
            sc.seed = v;
        }
        if let Some(v) = self.rsa_bits {
            sc.rsa_bits = v;
        }
        if let Some(v) = self.prime_bits {
            sc.prime_bits = v;
        }
        if let Some(v) = self.n_qpu {
            sc.n_qpu = v;
        }
        if let Some(v) = self.s {
            sc.s = v;
        }
        if let Some(v) = self.w1 {
            sc.windows.w1 = v;
        }
        if let Some(v) = self.we {
            sc.windows.we = v;
        }
        if let Some(v) = self.wm {
            sc.windows.wm = v;
        }
        if let Some(v) = self.code_distance {
            sc.hardware.code_distance = v;
        }
        if let Some(v) = self.t_mea_us {
            sc.hardware.t_mea_us = v;
        }
        if let Some(v) = self.t_t_factor {
            sc.hardware.t_t_factor = v;
        }
        if self.clock_plus_one {
            sc.hardware.clock_plus_one = true;
        }
        if let Some(v) = self.comm_rate {
            sc.hardware.comm_rate_per_s = v;
        }
        if let Some(v) = self.tau {
            sc.hardware.comm_rate_per_s = comm_rate_for_tau(
                sc.hardware.code_distance,
                v,
                sc.hardware.clock_time_us(),
            );
        }
        if let Some(v) = self.trajectories {
            sc.trajectories = v;
        }
        if self.dynamic && !sc.interconnect.is_dynamic() {
            sc.interconnect = Interconnect::Dynamic {
                profile: MotionProfile::production(),
                sweep: SweepPlan::production(),
            };
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Compile a circuit, distribute it across the configured modules and
    /// write the circuit file.
    Compile(CompileArgs),
    /// Check a circuit file: rebuild it deterministically, compare
    /// operation by operation, then run trajectory verification.
    Verify(VerifyArgs),
    /// Resource and wall-time estimate for the configured scenario.
    Estimate(EstimateArgs),
    /// Parameter sweep to CSV.
    Sweep(SweepArgs),
    /// Shuttled-array interconnect analysis.
    Dynarray(DynarrayArgs),
}

#[derive(Args)]
struct CompileArgs {
    /// Output path for the circuit file.
    #[arg(long, short)]
    out: PathBuf,
    /// Pipeline to compile.
    #[arg(long, value_enum, default_value = "modexp")]
    kind: ArtifactKind,
    /// Residue prime; defaults to the representative prime of the
    /// configured width.
    #[arg(long)]
    prime: Option<u64>,
    /// Exponentiation base.
    #[arg(long, default_value_t = 2)]
    base: u64,
    /// Exponent register width (modexp); defaults to the prime's bit length.
    #[arg(long)]
    exponent_bits: Option<u32>,
    /// Uncompute the result register at the end (modexp).
    #[arg(long)]
    uncompute: bool,
    /// Streaming windows to emit (iteration); defaults to the configured
    /// averaging window count.
    #[arg(long)]
    loading_windows: Option<usize>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Circuit file to verify.
    file: PathBuf,
    /// Random trajectories (overrides the config value).
    #[arg(long, short = 'k')]
    trajectories: Option<u32>,
    /// Exhaustively enumerate the exponent register (modexp files).
    #[arg(long)]
    exhaustive: bool,
    /// Also write the JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long, value_enum, default_value = "json")]
    format: OutFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutFormat {
    Json,
    Text,
}

#[derive(Args)]
struct SweepArgs {
    /// Axis to sweep.
    #[arg(long, value_enum)]
    axis: Axis,
    /// Grid values, comma separated; per-axis defaults otherwise.
    #[arg(long, value_delimiter = ',')]
    values: Vec<f64>,
    /// Second-axis speeds for the motion grid, m/s.
    #[arg(long, value_delimiter = ',')]
    speeds: Vec<f64>,
    /// Write the CSV here instead of stdout.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Axis {
    /// Link-slowdown factor of the photonic interconnect.
    #[value(name = "tau")]
    Tau,
    /// Logical measurement time, µs.
    #[value(name = "t_mea")]
    TMea,
    /// Surface-code distance.
    #[value(name = "d")]
    D,
    /// Streaming window width.
    #[value(name = "w1")]
    W1,
    /// Magic-state cultivation period, multiples of t_mea.
    #[value(name = "tT", alias = "t_t")]
    TT,
    /// Shot/length trade-off parameter on the budget machine.
    #[value(name = "s")]
    S,
    /// Motion-limit grid of the shuttled interconnect.
    #[value(name = "motion")]
    Motion,
}

#[derive(Args)]
struct DynarrayArgs {
    /// Run the desk-scale lookup-expansion equivalence check.
    #[arg(long)]
    check: bool,
    /// Surface patches per shuttled data array.
    #[arg(long, default_value_t = 49)]
    array_patches: u32,
    /// Logical qubits of the entanglement reservoir carried per move.
    #[arg(long, default_value_t = 3)]
    reservoir_logical: u32,
}

/// Process failure carrying its exit code.
struct Failure {
    code: u8,
    err: anyhow::Error,
}

impl Failure {
    fn config(err: anyhow::Error) -> Self {
        Failure { code: 2, err }
    }
    fn verification(err: anyhow::Error) -> Self {
        Failure { code: 1, err }
    }
}

type CmdResult = Result<(), Failure>;

/// Shorthand: treat any error in this fallible block as a config error.
fn cfg_err<T>(r: anyhow::Result<T>) -> Result<T, Failure> {
    r.map_err(Failure::config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.err);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> CmdResult {
    let mut sc = match &cli.config {
        Some(p) => cfg_err(ScenarioConfig::from_path(p).map_err(Into::into))?,
        None => ScenarioConfig::default(),
    };
    cli.over.apply(&mut sc);
    cfg_err(sc.validate().map_err(Into::into))?;
    match &cli.cmd {
        Cmd::Compile(a) => cmd_compile(&sc, a),
        Cmd::Verify(a) => cmd_verify(&sc, a),
        Cmd::Estimate(a) => cmd_estimate(&sc, a),
        Cmd::Sweep(a) => cmd_sweep(&sc, a),
        Cmd::Dynarray(a) => cmd_dynarray(&sc, a),
    }
}

fn bit_length(v: u64) -> u32 {
    64 - v.leading_zeros()
}

fn cmd_compile(sc: &ScenarioConfig, a: &CompileArgs) -> CmdResult {
    let prime = a.prime.unwrap_or_else(|| representative_prime(sc.prime_bits));
    let params = CompileParams {
        kind: a.kind,
        prime,
        base: a.base,
        exponent_bits: a.exponent_bits.unwrap_or_else(|| bit_length(prime)),
        windows: sc.windows,
        uncompute_result: a.uncompute,
        loading_windows: a.loading_windows.unwrap_or(sc.sim_loading_windows),
        n_qpu: sc.n_qpu,
        memory_module: a.kind == ArtifactKind::Iteration && sc.n_qpu > 1,
        seed: sc.seed,
    };
    let built = cfg_err(rebuild(&params))?;
    let file = CircuitFile::from_rebuilt(params, &built);
    cfg_err(
        std::fs::write(&a.out, file.to_json_bytes())
            .with_context(|| format!("cannot write {}", a.out.display())),
    )?;
    println!(
        "wrote {}: {} ops, {} registers, {} modules",
        a.out.display(),
        file.circuit.ops.len(),
        file.circuit.registers.len(),
        file.n_modules
    );
    Ok(())
}

#[derive(Serialize)]
struct VerifyOutput<'a> {
    file: String,
    audit: &'a AuditReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    verification: Option<&'a ModExpVerification>,
    pass: bool,
}

fn cmd_verify(sc: &ScenarioConfig, a: &VerifyArgs) -> CmdResult {
    let k = a.trajectories.unwrap_or(sc.trajectories) as usize;
    if k == 0 && !a.exhaustive {
        return Err(Failure::config(anyhow!(
            "at least one trajectory is required: set --trajectories N or --exhaustive"
        )));
    }
    let file = cfg_err(CircuitFile::load(&a.file))?;
    if a.exhaustive && file.params.kind == ArtifactKind::Iteration {
        return Err(Failure::config(anyhow!(
            "--exhaustive applies to modexp files; iteration files verify sampled buffers"
        )));
    }
    let reference = cfg_err(rebuild(&file.params))?;
    let audit_report = audit(&file, &reference.dist);

    // Simulate the stored stream even when the audit failed: the
    // trajectory mismatches then show what the corruption does.
    let verification = match file.params.kind {
        ArtifactKind::Modexp => {
            let mut probe = reference.modexp.expect("modexp rebuild carries handles");
            probe.circuit = file.circuit.clone();
            let limit = if a.exhaustive { 64 } else { 0 };
            probe.verify(k, sc.seed, limit).map_err(|e| Failure::verification(e.into()))?
        }
        ArtifactKind::Iteration => {
            let mut probe = reference.iteration.expect("iteration rebuild carries handles");
            probe.circuit = file.circuit.clone();
            probe.verify(k.max(1), sc.seed).map_err(|e| Failure::verification(e.into()))?
        }
    };

    let pass = audit_report.rebuilt_ok && verification.is_pass();
    let out = VerifyOutput {
        file: a.file.display().to_string(),
        audit: &audit_report,
        verification: Some(&verification),
        pass,
    };
    let text = serde_json::to_string_pretty(&out).expect("report serializes");
    println!("{text}");
    if let Some(p) = &a.out {
        cfg_err(
            std::fs::write(p, text.as_bytes())
                .with_context(|| format!("cannot write {}", p.display())),
        )?;
    }
    if !pass {
        let why = audit_report
            .detail
            .clone()
            .unwrap_or_else(|| format!("{} trajectories failed", verification.failures.len()));
        return Err(Failure::verification(anyhow!("{}: {}", a.file.display(), why)));
    }
    Ok(())
}

/// Timing of the shuttled interconnect for the configured scenario.
#[derive(Serialize)]
struct DynamicSection {
    motion_case: String,
    one_way_s: f64,
    round_trip_s: f64,
    qram: QramPlan,
    address_prep_s: f64,
    modular_add_s: f64,
    additions_total: u64,
    run_days: f64,
    bell_bandwidth_pairs_per_s: f64,
}

fn dynamic_section(sc: &ScenarioConfig, est: &ShotEstimate) -> anyhow::Result<Option<DynamicSection>> {
    let Interconnect::Dynamic { profile, sweep } = &sc.interconnect else {
        return Ok(None);
    };
    let qram = hybrid_qram_plan(sc.windows.w1, sc.windows.w1 / 2)?;
    let t_add = modular_add_time(sweep, &qram, profile, sc.hardware.t_mea_us);
    let additions = total_additions(
        sc.rsa_bits,
        sc.exponent_bits(),
        sc.windows.w1,
        sc.prime_bits,
        sc.windows.we,
        sc.windows.wm,
    );
    let one_way = motion_time(profile);
    let patches = est.report.modules.first().map(|m| m.patches).unwrap_or(49);
    Ok(Some(DynamicSection {
        motion_case: format!("{:?}", motion_case(profile)),
        one_way_s: one_way,
        round_trip_s: 2.0 * one_way,
        address_prep_s: qram.prep_time_s(sc.hardware.t_mea_us),
        qram,
        modular_add_s: t_add,
        additions_total: additions,
        run_days: modshor_core::motion::run_time_dynamic_days(additions, t_add),
        bell_bandwidth_pairs_per_s: full_overlap_bandwidth(
            profile,
            patches,
            sc.hardware.code_distance,
            sweep.static_modules,
        ),
    }))
}

#[derive(Serialize)]
struct EstimateOutput<'a> {
    scenario: &'a ScenarioConfig,
    estimate: &'a ShotEstimate,
    processor_physical_qubits: u64,
    total_physical_qubits: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    dynamic_interconnect: Option<DynamicSection>,
}

fn cmd_estimate(sc: &ScenarioConfig, a: &EstimateArgs) -> CmdResult {
    let params = sc.production_params();
    let est = cfg_err(estimate_shot(&params, &sc.hardware).map_err(Into::into))?;
    let processor: u64 = est
        .report
        .modules
        .iter()
        .filter(|m| m.kind == "processor")
        .map(|m| m.physical_qubits)
        .sum();
    let total: u64 = est.report.modules.iter().map(|m| m.physical_qubits).sum();
    let dynamic = cfg_err(dynamic_section(sc, &est))?;

    match a.format {
        OutFormat::Json => {
            let out = EstimateOutput {
                scenario: sc,
                estimate: &est,
                processor_physical_qubits: processor,
                total_physical_qubits: total,
                dynamic_interconnect: dynamic,
            };
            println!("{}", serde_json::to_string_pretty(&out).expect("report serializes"));
        }
        OutFormat::Text => {
            let mut s = String::new();
            let r = &est.report;
            let _ = writeln!(
                s,
                "scenario: {}-bit modulus, {}-bit primes, {} QPU(s), windows {}/{}/{}",
                sc.rsa_bits, sc.prime_bits, sc.n_qpu, sc.windows.w1, sc.windows.we, sc.windows.wm
            );
            let _ = writeln!(
                s,
                "hardware: d={}, t_mea={} µs, t_T={}·t_mea, comm {:.3e} pairs/s (τ={:.1})",
                sc.hardware.code_distance,
                sc.hardware.t_mea_us,
                sc.hardware.t_t_factor,
                sc.hardware.comm_rate_per_s,
                r.tau
            );
            for m in &r.modules {
                let _ = writeln!(
                    s,
                    "module {:>2} ({:<9}) {:>7} data qubits as {:>3} patches, {:>9} physical, {:>12} T gates",
                    m.module, m.kind, m.data_qubits, m.patches, m.physical_qubits, m.t_gates
                );
            }
            let _ = writeln!(s, "physical qubits: {processor} in processors, {total} total");
            let _ = writeln!(
                s,
                "one prime iteration: {:.1} s  ({:.1} iterations per shot)",
                est.t_iteration_s, est.iterations
            );
            let _ = writeln!(
                s,
                "one shot: {:.2} days, depth {:.4e}, {} Bell pairs/iteration (physical)",
                est.t_shot_days, est.depth_total, r.bell_physical
            );
            let _ = writeln!(
                s,
                "free modularization: {}",
                if r.free_modularization { "yes (communication hidden)" } else { "no" }
            );
            if let Some(d) = dynamic {
                let _ = writeln!(
                    s,
                    "shuttled interconnect: one-way {:.3} s ({}), modular addition {:.2} s, run {:.0} days",
                    d.one_way_s, d.motion_case, d.modular_add_s, d.run_days
                );
            }
            print!("{s}");
        }
    }
    Ok(())
}

fn defaults_for(axis: Axis) -> Vec<f64> {
    match axis {
        Axis::Tau => vec![1.0, 2.0, 5.0, 10.0, 25.0, 50.0],
        Axis::TMea => vec![100.0, 250.0, 500.0, 1000.0, 2000.0],
        Axis::D => vec![13.0, 17.0, 21.0, 25.0],
        Axis::W1 => (3..=9).map(f64::from).collect(),
        Axis::TT => vec![1.0, 2.0, 5.0, 10.0, 20.0, 50.0],
        Axis::S => (1..=20).map(f64::from).collect(),
        Axis::Motion => vec![5.0, 10.0, 20.0, 40.0, 80.0],
    }
}

fn shot_row(axis: f64, est: &ShotEstimate, mono_days: f64) -> SweepRow {
    let per_qpu = est
        .report
        .modules
        .iter()
        .filter(|m| m.kind == "processor")
        .map(|m| m.physical_qubits)
        .max()
        .unwrap_or(0);
    let total: u64 = est
        .report
        .modules
        .iter()
        .filter(|m| m.kind == "processor")
        .map(|m| m.physical_qubits)
        .sum();
    SweepRow {
        axis,
        wall_days: est.t_shot_days,
        qubits_per_qpu: per_qpu,
        total_qubits: total,
        slowdown_ratio: est.t_shot_days / mono_days,
    }
}

fn cmd_sweep(sc: &ScenarioConfig, a: &SweepArgs) -> CmdResult {
    let values = if a.values.is_empty() { defaults_for(a.axis) } else { a.values.clone() };
    let params = sc.production_params();
    let hw = &sc.hardware;

    let csv = match a.axis {
        Axis::Tau | Axis::TMea | Axis::D => {
            let mut rows = Vec::new();
            for &v in &values {
                let mut h = hw.clone();
                match a.axis {
                    Axis::Tau => {
                        h.comm_rate_per_s = comm_rate_for_tau(h.code_distance, v, h.clock_time_us())
                    }
                    Axis::TMea => h.t_mea_us = v,
                    Axis::D => h.code_distance = v as u32,
                    _ => unreachable!(),
                }
                let mut mono_params = params.clone();
                mono_params.n_qpu = 1;
                let mono = cfg_err(estimate_shot(&mono_params, &h).map_err(Into::into))?;
                let est = cfg_err(estimate_shot(&params, &h).map_err(Into::into))?;
                rows.push(shot_row(v, &est, mono.t_shot_days));
            }
            let name = match a.axis {
                Axis::Tau => "tau",
                Axis::TMea => "t_mea_us",
                _ => "code_distance",
            };
            sweep_csv(name, &rows)
        }
        Axis::W1 => {
            let mut rows = Vec::new();
            for &v in &values {
                let w = v as u32;
                rows.extend(cfg_err(w1_sweep(&params, hw, w..=w).map_err(Into::into))?);
            }
            sweep_csv("w1", &rows)
        }
        Axis::TT => {
            let rows = cfg_err(t_t_sweep(&params, hw, &values).map_err(Into::into))?;
            sweep_csv("t_t_factor", &rows)
        }
        Axis::S => {
            let qp = QgpuParams {
                n: sc.rsa_bits,
                prime_bits: sc.prime_bits,
                cfg: sc.windows,
                t_mea_us: hw.t_mea_us,
                comm_rate_per_s: hw.comm_rate_per_s,
                sim_loading_windows: sc.sim_loading_windows,
                seed: sc.seed,
                ..QgpuParams::default()
            };
            let mut rows = Vec::new();
            for &v in &values {
                let s = v as u32;
                rows.extend(cfg_err(qgpu_sweep(&qp, s..=s).map_err(Into::into))?);
            }
            qgpu_csv(&rows)
        }
        Axis::Motion => {
            let (profile, plan) = match &sc.interconnect {
                Interconnect::Dynamic { profile, sweep } => (*profile, *sweep),
                Interconnect::Photonic => (MotionProfile::production(), SweepPlan::production()),
            };
            let _ = profile;
            let qram = cfg_err(
                hybrid_qram_plan(sc.windows.w1, sc.windows.w1 / 2).map_err(Into::into),
            )?;
            let additions = total_additions(
                sc.rsa_bits,
                sc.exponent_bits(),
                sc.windows.w1,
                sc.prime_bits,
                sc.windows.we,
                sc.windows.wm,
            );
            let speeds =
                if a.speeds.is_empty() { vec![0.5, 1.0, 2.0, 4.0] } else { a.speeds.clone() };
            let rows = motion_phase_grid(
                &plan,
                &qram,
                sc.hardware.t_mea_us,
                additions,
                &values,
                &speeds,
            );
            motion_grid_csv(&rows)
        }
    };

    match &a.out {
        Some(p) => {
            cfg_err(
                std::fs::write(p, csv.as_bytes())
                    .with_context(|| format!("cannot write {}", p.display())),
            )?;
            println!("wrote {}", p.display());
        }
        None => print!("{csv}"),
    }
    Ok(())
}

#[derive(Serialize)]
struct DynarrayOutput {
    profile: MotionProfile,
    plan: SweepPlan,
    motion_case: String,
    one_way_s: f64,
    round_trip_s: f64,
    qram: QramPlan,
    address_prep_s: f64,
    modular_add_s: f64,
    additions_total: u64,
    run_days: f64,
    bell_bandwidth_pairs_per_s: f64,
    reservoir_ghz_per_move: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    expansion_check: Option<String>,
}

/// Desk-scale check that the hybrid lookup expansion is operationally
/// identical to a direct table load: exhaustive over all addresses, the
/// target must hold the table entry and every scratch line must be clear.
fn qram_expansion_check(seed: u64) -> anyhow::Result<()> {
    use modshor_core::ir::{Circuit, CircuitMeta};
    let p = 61u64;
    let table: Vec<u64> = (0..64).map(|i| modpow_u64(7, i, p)).collect();
    let plan = hybrid_qram_plan(6, 3)?;
    let mut c = Circuit::new(CircuitMeta::default());
    let addr = c.add_register("addr", 6);
    let data = c.add_register("data", 6);
    let bits: Vec<Bit> = (0..6).map(|i| Bit::new(addr, i)).collect();
    let hot = plan.expand_load(&mut c, &bits, &table, data)?;
    let set = TrajectorySet::run(&c, &InitPlan::new().exhaustive(addr), 0, seed)?;
    for t in 0..set.runs.len() {
        let a = set.initial_value(t, addr);
        let got = set.final_value(t, data);
        ensure!(
            got == table[a as usize],
            "address {a}: expansion loads {got} but the table holds {}",
            table[a as usize]
        );
        ensure!(set.final_value(t, hot) == 0, "address {a}: one-hot lines not restored");
    }
    ensure!(set.report().all_phases_zero, "expansion left a phase behind");
    Ok(())
}

fn cmd_dynarray(sc: &ScenarioConfig, a: &DynarrayArgs) -> CmdResult {
    let (profile, plan) = match &sc.interconnect {
        Interconnect::Dynamic { profile, sweep } => (*profile, *sweep),
        Interconnect::Photonic => (MotionProfile::production(), SweepPlan::production()),
    };
    cfg_err(profile.validate().map_err(Into::into))?;
    cfg_err(plan.validate().map_err(Into::into))?;
    let qram = cfg_err(hybrid_qram_plan(sc.windows.w1, sc.windows.w1 / 2).map_err(Into::into))?;
    let t_add = modular_add_time(&plan, &qram, &profile, sc.hardware.t_mea_us);
    let additions = total_additions(
        sc.rsa_bits,
        sc.exponent_bits(),
        sc.windows.w1,
        sc.prime_bits,
        sc.windows.we,
        sc.windows.wm,
    );
    let one_way = motion_time(&profile);

    let check = if a.check {
        match qram_expansion_check(sc.seed) {
            Ok(()) => Some("pass".to_string()),
            Err(e) => Some(format!("fail: {e:#}")),
        }
    } else {
        None
    };
    let failed = matches!(&check, Some(s) if s.starts_with("fail"));

    let out = DynarrayOutput {
        profile,
        plan,
        motion_case: format!("{:?}", motion_case(&profile)),
        one_way_s: one_way,
        round_trip_s: 2.0 * one_way,
        address_prep_s: qram.prep_time_s(sc.hardware.t_mea_us),
        qram,
        modular_add_s: t_add,
        additions_total: additions,
        run_days: modshor_core::motion::run_time_dynamic_days(additions, t_add),
        bell_bandwidth_pairs_per_s: full_overlap_bandwidth(
            &profile,
            a.array_patches,
            sc.hardware.code_distance,
            plan.static_modules,
        ),
        reservoir_ghz_per_move: reservoir_ghz_per_move(
            a.reservoir_logical,
            sc.hardware.code_distance,
        ),
        expansion_check: check,
    };
    println!("{}", serde_json::to_string_pretty(&out).expect("report serializes"));
    if failed {
        return Err(Failure::verification(anyhow!("lookup-expansion equivalence check failed")));
    }
    Ok(())
}
