//! Release acceptance suite.
//!
//! Each test is one acceptance criterion with its tolerance pinned in the
//! code, and prints a single `ACCEPTANCE <name>: PASS` line on success
//! (visible with `--nocapture`).  A failed criterion fails its test with
//! the measured value in the panic message.

use std::time::Instant;

use modshor_core::compile::{
    adder_f, compile_modexp, modular_add_circuit, toffoli_estimate, toffoli_grid_minimum,
    ExpMode, WindowConfig,
};
use modshor_core::cost::{
    estimate_shot, free_modularization_scan, physical_qubits, qgpu_sweep, t_t_sweep, tau,
    w1_sweep, HardwareModel, ProductionParams, QgpuParams,
};
use modshor_core::distribute::{partition, ModuleLayout};
use modshor_core::motion::{
    hybrid_qram_plan, modular_add_time, motion_time, run_time_dynamic_days, MotionProfile,
    SweepPlan,
};
use modshor_core::trajectory::{InitPlan, TrajectorySet};

fn pass(name: &str, t0: Instant) {
    println!("ACCEPTANCE {name}: PASS ({:.1} s)", t0.elapsed().as_secs_f64());
}

/// Exponentiation circuits for every small prime and every coprime base,
/// distributed over one to three modules, reproduce the integer modular
/// power on every 8-bit exponent with clean ancillas and repaired phases.
#[test]
fn c1_desk_exponentiation_verifies_on_1_to_3_modules() {
    let t0 = Instant::now();
    let cfg = WindowConfig::desk();
    let mut checked = 0usize;
    for p in [5u64, 7, 11, 13] {
        for g in 1..p {
            let compiled = compile_modexp(p, g, 8, &cfg, ExpMode::KeepResult).unwrap();
            for n_qpu in [1u32, 2, 3] {
                let dist = partition(&compiled.circuit, &ModuleLayout::new(n_qpu)).unwrap();
                let mut probe = compiled.clone();
                probe.circuit = dist.circuit;
                // exhaustive over all 256 exponents
                let v = probe.verify(0, 11, 8).unwrap();
                assert_eq!(v.trajectories, 256);
                assert!(
                    v.is_pass(),
                    "p={p} g={g} n_qpu={n_qpu}: {} failing trajectories, first {:?}",
                    v.failures.len(),
                    v.failures.first()
                );
                checked += v.trajectories;
            }
        }
    }
    assert_eq!(checked, 32 * 3 * 256);
    let elapsed = t0.elapsed().as_secs_f64();
    assert!(elapsed < 300.0, "desk verification took {elapsed:.0} s, budget 300 s");
    pass("desk exponentiation, 1-3 modules", t0);
}

/// The wrapping adder is exhaustively exact for every prime up to 61:
/// all (accumulator, addend) pairs end at `(a + f(i)) mod p` with the
/// overflow bit restored and the scratch register cleared, on the
/// minimal-width accumulator.
#[test]
fn c2_wrap_adder_exhaustive_small_primes() {
    let t0 = Instant::now();
    let primes = [3u64, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61];
    for &p in &primes {
        let f = adder_f(p);
        // minimal width: one bit fewer could not hold p-1
        assert!((1u64 << (f - 1)) < p && p <= (1u64 << f), "f={f} not minimal for p={p}");
        let len = (p as usize).next_power_of_two();
        let table: Vec<u64> = (0..len as u64).map(|i| i % p).collect();
        let (c, q_e, q_h) = modular_add_circuit(p, &table).unwrap();
        assert_eq!(c.width(q_h), f + 1);
        let q_l = c.register_named("q_l").unwrap();
        for a in 0..p {
            let plan = InitPlan::new().fixed(q_h, a).exhaustive(q_e);
            let set = TrajectorySet::run(&c, &plan, 0, 5).unwrap();
            assert!(set.report().all_phases_zero, "p={p} a={a}: phase left behind");
            for t in 0..set.runs.len() {
                let i = set.initial_value(t, q_e) as usize;
                let expect = (a + table[i]) % p;
                let got = set.final_value(t, q_h);
                assert_eq!(
                    got, expect,
                    "p={p}: {a} + f({i})={} gave {got}, want {expect}",
                    table[i]
                );
                assert_eq!(set.final_value(t, q_l), 0, "p={p} a={a} i={i}: scratch not cleared");
                assert_eq!(set.final_value(t, q_e), i as u64, "address register disturbed");
            }
        }
    }
    let elapsed = t0.elapsed().as_secs_f64();
    assert!(elapsed < 60.0, "adder sweep took {elapsed:.0} s, budget 60 s");
    pass("wrap adder exhaustive over primes 3..61", t0);
}

/// Physical-qubit arithmetic for the surface-code processors.
#[test]
fn c3_surface_code_qubit_counts() {
    let t0 = Instant::now();
    assert_eq!(physical_qubits(25, 49), 61_250);
    assert_eq!(6 * physical_qubits(25, 49), 367_500);
    assert_eq!(physical_qubits(15, 49), 22_050);
    assert_eq!(physical_qubits(27, 49), 71_442);
    pass("surface-code qubit counts", t0);
}

/// The link-slowdown factor at the production operating point.
#[test]
fn c4_link_slowdown_factor() {
    let t0 = Instant::now();
    let v = tau(25, 1e5, 250.0);
    assert!((v - 25.0).abs() < 1e-9, "tau = {v}");
    pass("link-slowdown factor", t0);
}

/// Shuttled-interconnect timings: one-way travel, one modular addition,
/// and the whole-run projections for two motion-limit settings.
#[test]
fn c5_shuttled_interconnect_timings() {
    let t0 = Instant::now();
    let plan = SweepPlan::production();
    let qram = hybrid_qram_plan(6, 3).unwrap();

    let base = MotionProfile::production();
    let one_way = motion_time(&base);
    assert!((one_way - 0.373).abs() <= 0.005, "one-way travel {one_way:.4} s");

    let add = modular_add_time(&plan, &qram, &base, 1000.0);
    assert!(
        (add - 3.62).abs() <= 0.02 * 3.62,
        "modular addition {add:.4} s outside 3.62 s ± 2%"
    );

    let run = run_time_dynamic_days(7_099_733, add);
    assert!((run - 297.0).abs() <= 0.02 * 297.0, "run {run:.1} days outside 297 ± 2%");

    let fast = MotionProfile { j_max: 900.0, a_max: 30.0, v_max: 3.0, ..base };
    let fast_add = modular_add_time(&plan, &qram, &fast, 1000.0);
    let fast_run = run_time_dynamic_days(7_099_733, fast_add);
    assert!(
        (fast_run - 244.7).abs() <= 0.02 * 244.7,
        "faster-motion run {fast_run:.1} days outside 244.7 ± 2%"
    );
    pass("shuttled interconnect timings", t0);
}

/// Monolithic production estimate from one simulated prime iteration with
/// a 40-gadget streaming average: shot time, total depth, and the
/// measurement-time fraction must land simultaneously.
#[test]
fn c6_monolithic_production_estimate() {
    let t0 = Instant::now();
    let params = ProductionParams { n_qpu: 1, ..ProductionParams::default() };
    let hw = HardwareModel::new(25);
    let est = estimate_shot(&params, &hw).unwrap();

    let days = est.t_shot_days;
    assert!(
        (days - 164.5).abs() <= 0.15 * 164.5,
        "monolithic shot {days:.1} days outside 164.5 ± 15%"
    );
    let depth = est.depth_total;
    assert!(
        (depth - 2.25e10).abs() <= 0.15 * 2.25e10,
        "total depth {depth:.3e} outside 2.25e10 ± 15%"
    );

    let mut fast = hw.clone();
    fast.t_mea_us = 250.0;
    let est_fast = estimate_shot(&params, &fast).unwrap();
    let ratio = est_fast.t_shot_days / days;
    assert!(
        (ratio - 0.396).abs() <= 0.03,
        "measurement-limited fraction {ratio:.4} outside 0.396 ± 0.03"
    );

    let elapsed = t0.elapsed().as_secs_f64();
    assert!(elapsed < 1800.0, "estimate took {elapsed:.0} s, budget 1800 s");
    pass("monolithic production estimate", t0);
}

/// Distributing over six modules at the default link rate slows the shot
/// by a small pinned factor, and the memory module consumes no magic
/// states at all.
#[test]
fn c7_six_module_slowdown_and_memory_t_count() {
    let t0 = Instant::now();
    let hw = HardwareModel::new(25);
    let mono = estimate_shot(&ProductionParams { n_qpu: 1, ..Default::default() }, &hw).unwrap();
    let dist = estimate_shot(&ProductionParams::default(), &hw).unwrap();

    let slowdown = dist.t_shot_days / mono.t_shot_days;
    assert!(
        (slowdown - 1.16).abs() <= 0.05,
        "six-module slowdown {slowdown:.4} outside 1.16 ± 0.05"
    );
    let memory = dist
        .report
        .modules
        .iter()
        .find(|m| m.kind == "memory")
        .expect("distributed run has a memory module");
    assert_eq!(memory.t_gates, 0, "memory module must consume no magic states");
    pass("six-module slowdown and memory magic-state count", t0);
}

/// Sweep shapes: the streaming-window minimum, the magic-state-period
/// tolerance, the communication-hiding boundary, and the
/// budget-constrained machine's optimum.
#[test]
fn c8_sweep_shapes() {
    let t0 = Instant::now();
    let params = ProductionParams::default();

    // (a) with communication free, the shot time is minimal at w1 = 6
    let mut free_comm = HardwareModel::new(25);
    free_comm.comm_rate_per_s = 1e12;
    let rows = w1_sweep(&params, &free_comm, 3..=9).unwrap();
    let best = rows
        .iter()
        .min_by(|a, b| a.wall_days.total_cmp(&b.wall_days))
        .unwrap();
    assert_eq!(
        best.axis, 6.0,
        "w1 minimum at {} ({:?})",
        best.axis,
        rows.iter().map(|r| (r.axis, r.wall_days)).collect::<Vec<_>>()
    );

    // (b) magic-state periods up to 10x the measurement time delay the
    // shot by at most 5%
    let hw = HardwareModel::new(25);
    let rows = t_t_sweep(&params, &hw, &[1.0, 2.0, 5.0, 10.0]).unwrap();
    for r in &rows {
        assert!(
            r.slowdown_ratio <= 1.05,
            "t_T = {}x delays by {:.3}, above 5%",
            r.axis,
            r.slowdown_ratio
        );
    }

    // (c) the largest hidden-communication tau grows monotonically with
    // the measurement time
    let taus: Vec<f64> = (1..=40).map(f64::from).collect();
    let scan = free_modularization_scan(
        &params,
        &hw,
        &[100.0, 250.0, 500.0, 1000.0, 2000.0],
        &taus,
    )
    .unwrap();
    for w in scan.windows(2) {
        assert!(
            w[1].tau_boundary >= w[0].tau_boundary,
            "boundary not monotone: {scan:?}"
        );
    }
    assert!(
        scan.last().unwrap().tau_boundary > scan[0].tau_boundary,
        "boundary flat across the grid: {scan:?}"
    );

    // (d) the budget machine: total wall minimal at s = 3 with a pinned
    // value, per-shot monotone decreasing with 4.9 ± 15% days at s = 20
    let rows = qgpu_sweep(&QgpuParams::default(), 1..=20).unwrap();
    let best = rows
        .iter()
        .min_by(|a, b| a.total_days.total_cmp(&b.total_days))
        .unwrap();
    assert_eq!(best.s, 3, "total minimum at s={}", best.s);
    assert!(
        (best.total_days - 37.3).abs() <= 0.15 * 37.3,
        "minimum total {:.2} days outside 37.3 ± 15%",
        best.total_days
    );
    for w in rows.windows(2) {
        assert!(
            w[1].per_shot_days <= w[0].per_shot_days + 1e-9,
            "per-shot time not monotone at s={}",
            w[1].s
        );
    }
    let last = rows.iter().find(|r| r.s == 20).unwrap();
    assert!(
        (last.per_shot_days - 4.9).abs() <= 0.15 * 4.9,
        "per-shot at s=20 is {:.2} days, outside 4.9 ± 15%",
        last.per_shot_days
    );
    pass("sweep shapes", t0);
}

/// The windowed multiplication ladder's Toffoli count at the production
/// window shape, and the window size that minimises it.
#[test]
fn c9_ladder_toffoli_count_and_window_minimum() {
    let t0 = Instant::now();
    assert_eq!(toffoli_estimate(2048, 3, 3), 985_224_768);
    let w = toffoli_grid_minimum(2048, 16);
    let combined = 2 * w;
    assert!(
        (9..=13).contains(&combined),
        "window minimum 2w = {combined} not near log2(2048) = 11"
    );
    pass("ladder Toffoli count and window minimum", t0);
}
