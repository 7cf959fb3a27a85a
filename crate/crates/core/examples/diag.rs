use modshor_core::cost::{
    estimate_shot, free_modularization_scan, qgpu_sweep, t_t_sweep, w1_sweep, HardwareModel,
    ProductionParams, QgpuParams,
};

fn main() {
    let hw = HardwareModel::new(25);
    let mut mono = ProductionParams::default();
    mono.n_qpu = 1;

    let m = estimate_shot(&mono, &hw).unwrap();
    println!(
        "mono: t_pi={:.1}s t0={:.2}d depth={:.4e} layers_pi={:.0}",
        m.t_iteration_s, m.t_shot_days, m.depth_total, m.layers_iteration
    );
    let mut fast = hw.clone();
    fast.t_mea_us = 250.0;
    let mf = estimate_shot(&mono, &fast).unwrap();
    println!("mono 250us: t0={:.2}d ratio={:.4}", mf.t_shot_days, mf.t_shot_s / m.t_shot_s);

    let dist_p = ProductionParams::default();
    let d = estimate_shot(&dist_p, &hw).unwrap();
    println!(
        "dist: t_pi={:.1}s t0={:.2}d slowdown={:.4} comm_wait={:.1}s mem_T={}",
        d.t_iteration_s,
        d.t_shot_days,
        d.t_shot_s / m.t_shot_s,
        d.schedule.comm_wait_us * 1e-6,
        d.report.modules.last().map(|mm| mm.t_gates).unwrap_or(99)
    );

    // w1 sweep at effectively free communication
    let mut free = hw.clone();
    free.comm_rate_per_s = 1e12;
    let rows = w1_sweep(&dist_p, &free, 3..=9).unwrap();
    for r in &rows {
        println!("w1={} wall={:.2}d slowdown={:.4}", r.axis, r.wall_days, r.slowdown_ratio);
    }

    // factory throttle vs cultivation period
    let rows = t_t_sweep(&dist_p, &hw, &[1.0, 2.0, 5.0, 10.0, 20.0, 50.0]).unwrap();
    for r in &rows {
        println!("t_T={}x wall={:.2}d delay={:.4}", r.axis, r.wall_days, r.slowdown_ratio);
    }

    // free-modularization boundary versus measurement time
    let taus: Vec<f64> = (1..=40).map(|k| k as f64).collect();
    let rows = free_modularization_scan(
        &dist_p,
        &hw,
        &[100.0, 250.0, 500.0, 1000.0, 2000.0],
        &taus,
    )
    .unwrap();
    for r in &rows {
        println!("t_mea={} tau*={}", r.t_mea_us, r.tau_boundary);
    }

    // budget-constrained split sweep
    let rows = qgpu_sweep(&QgpuParams::default(), 1..=20).unwrap();
    for r in &rows {
        println!(
            "s={} m={} N={} per_shot={:.3}d total={:.3}d mem={} totphys={}",
            r.s, r.m_bits, r.n_processors, r.per_shot_days, r.total_days, r.mem_physical,
            r.total_physical
        );
    }
}
