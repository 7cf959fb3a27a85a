//! Transportable-array interconnect: jerk-limited motion profiles,
//! drive-by-gate bandwidth, hybrid bucket-brigade multi-address loading,
//! and the run times they imply.
//!
//! Communication here is mechanical: dynamic atom arrays sweep past a
//! row of static modules, performing transversal `drive-by` entangling
//! gates while in motion. The cost of one table load is therefore a
//! motion profile — jerk-limited S-curves between the two ends of
//! travel — plus the preparation depth of the address expansion that
//! lets one sweep serve many table entries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ir::{Bit, Circuit, FundamentalOp, RegisterId};

/// Jerk-limited point-to-point motion task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MotionProfile {
    /// Maximum jerk, m/s³.
    pub j_max: f64,
    /// Maximum acceleration, m/s².
    pub a_max: f64,
    /// Maximum speed, m/s.
    pub v_max: f64,
    /// One-way travel distance, m.
    pub distance_m: f64,
}

impl Default for MotionProfile {
    fn default() -> Self {
        MotionProfile::production()
    }
}

impl MotionProfile {
    /// The production operating point: one-way travel of the dynamic
    /// arrays across the module row.
    pub fn production() -> Self {
        MotionProfile { j_max: 600.0, a_max: 20.0, v_max: 2.0, distance_m: 0.48 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.j_max > 0.0 && self.a_max > 0.0 && self.v_max > 0.0) {
            return Err(Error::Config("motion limits must be positive".into()));
        }
        if self.distance_m < 0.0 {
            return Err(Error::Config("travel distance cannot be negative".into()));
        }
        Ok(())
    }
}

/// Which constraint shapes the minimum-time profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MotionCase {
    /// Peak acceleration is never reached; four pure jerk ramps.
    JerkLimited,
    /// Peak acceleration is held but peak speed is never reached.
    AccelLimited,
    /// Peak speed is reached and held through a cruise phase.
    SpeedLimited,
}

/// Phase list of a minimum-time profile: `(duration_s, jerk)` segments.
fn phases(p: &MotionProfile) -> (MotionCase, Vec<(f64, f64)>) {
    let (j, a, v, d) = (p.j_max, p.a_max, p.v_max, p.distance_m);
    if d == 0.0 {
        return (MotionCase::JerkLimited, Vec::new());
    }
    // candidate 1: four jerk ramps, acceleration and speed peaks unreached
    let t_j = (d / (2.0 * j)).cbrt();
    if j * t_j <= a && j * t_j * t_j <= v {
        return (
            MotionCase::JerkLimited,
            vec![(t_j, j), (t_j, -j), (t_j, -j), (t_j, j)],
        );
    }
    // acceleration ramp that reaches the relevant peak
    let (t_ramp, t_flat) = if v * j >= a * a {
        // peak acceleration is reached on the way to full speed
        (a / j, v / a - a / j)
    } else {
        // speed limit arrives before peak acceleration
        ((v / j).sqrt(), 0.0)
    };
    // candidate 2: hold peak acceleration, never cruise
    if v * j >= a * a {
        // solve a·t² + (3a²/j)·t + 2a³/j² − d = 0 for the flat-accel time
        let b = 3.0 * a * a / j;
        let c = 2.0 * a * a * a / (j * j) - d;
        let disc = b * b - 4.0 * a * c;
        let t_flat_short = (-b + disc.max(0.0).sqrt()) / (2.0 * a);
        let v_peak = a * a / j + a * t_flat_short;
        if t_flat_short >= 0.0 && v_peak <= v {
            let tj = a / j;
            return (
                MotionCase::AccelLimited,
                vec![
                    (tj, j),
                    (t_flat_short, 0.0),
                    (tj, -j),
                    (tj, -j),
                    (t_flat_short, 0.0),
                    (tj, j),
                ],
            );
        }
    }
    // candidate 3: full ramp to peak speed plus a cruise phase
    let t_acc = 2.0 * t_ramp + t_flat;
    let x_acc = v * t_acc / 2.0;
    let t_cruise = (d - 2.0 * x_acc) / v;
    let mut ph = vec![(t_ramp, j)];
    if t_flat > 0.0 {
        ph.push((t_flat, 0.0));
    }
    ph.push((t_ramp, -j));
    ph.push((t_cruise.max(0.0), 0.0));
    ph.push((t_ramp, -j));
    if t_flat > 0.0 {
        ph.push((t_flat, 0.0));
    }
    ph.push((t_ramp, j));
    (MotionCase::SpeedLimited, ph)
}

/// Minimum one-way traversal time of a jerk-limited S-curve profile.
pub fn motion_time(p: &MotionProfile) -> f64 {
    phases(p).1.iter().map(|(t, _)| t).sum()
}

/// The constraint that limits the profile.
pub fn motion_case(p: &MotionProfile) -> MotionCase {
    phases(p).0
}

/// Final `(position, speed, acceleration)` after integrating the phase
/// list at fixed step width. Constant jerk integrates exactly within a
/// step, so the step width only controls where phase boundaries land.
pub fn integrate_profile(p: &MotionProfile, dt: f64) -> (f64, f64, f64) {
    let (_, ph) = phases(p);
    let (mut x, mut v, mut a) = (0.0f64, 0.0f64, 0.0f64);
    for (dur, j) in ph {
        let mut t = 0.0;
        while t < dur {
            let h = dt.min(dur - t);
            x += v * h + 0.5 * a * h * h + j * h * h * h / 6.0;
            v += a * h + 0.5 * j * h * h;
            a += j * h;
            t += h;
        }
    }
    (x, v, a)
}

/// Separation change between two atoms passing at perpendicular offset
/// `y_m` with relative speed `v_rel` during a gate of length `gate_s`
/// centred on closest approach.
pub fn drive_by_separation_change(y_m: f64, v_rel: f64, gate_s: f64) -> f64 {
    let x = v_rel * gate_s / 2.0;
    (y_m * y_m + x * x).sqrt() - y_m
}

/// Geometry and scheduling of the sweeping interconnect.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepPlan {
    /// Static module pitch, mm.
    pub pitch_mm: f64,
    /// Static modules along the row.
    pub static_modules: u32,
    /// Dynamic arrays moving rigidly together.
    pub dynamic_arrays: u32,
    /// Patch overlap zone between a dynamic and a static array.
    pub overlap_patches: (u32, u32),
    /// Portion of the overlap zone carrying table loads.
    pub load_patches: (u32, u32),
    /// Portion of the overlap zone storing generated Bell pairs.
    pub bell_patches: (u32, u32),
    /// Round-trip sweeps needed by one modular addition.
    pub round_trips: u32,
    /// One-way travel, m.
    pub one_way_m: f64,
}

impl Default for SweepPlan {
    fn default() -> Self {
        SweepPlan::production()
    }
}

impl SweepPlan {
    pub fn production() -> Self {
        SweepPlan {
            pitch_mm: 40.0,
            static_modules: 6,
            dynamic_arrays: 4,
            overlap_patches: (7, 2),
            load_patches: (5, 2),
            bell_patches: (2, 2),
            round_trips: 4,
            one_way_m: 0.48,
        }
    }

    /// Row length for other module counts at the same pitch.
    pub fn one_way_for(pitch_mm: f64, statics: u32, dynamics: u32) -> f64 {
        pitch_mm * 1e-3 * (statics + dynamics - 1) as f64
    }

    pub fn validate(&self) -> Result<()> {
        let fits = |zone: (u32, u32)| zone.0 <= self.overlap_patches.0 && zone.1 <= self.overlap_patches.1;
        if self.load_patches.0 * self.load_patches.1 + self.bell_patches.0 * self.bell_patches.1
            > self.overlap_patches.0 * self.overlap_patches.1
            || !fits(self.load_patches)
            || !fits(self.bell_patches)
        {
            return Err(Error::Config(
                "load and Bell allocations must fit inside the overlap zone".into(),
            ));
        }
        if self.round_trips == 0 || self.static_modules == 0 || self.dynamic_arrays == 0 {
            return Err(Error::Config("sweep plan counts must be positive".into()));
        }
        Ok(())
    }
}

/// Address expansion of the hybrid lookup: the low bits stay serial
/// while the high bits become a one-hot line per sub-table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QramPlan {
    pub linear_bits: u32,
    pub parallel_bits: u32,
    /// One-hot select lines: `2^parallel_bits`.
    pub one_hot_lines: u32,
    /// Physical copies of the select lines across the dynamic arrays.
    pub address_copies: u32,
    /// Preparation depth of the expansion before the sweep starts.
    pub prep_depth: u32,
}

/// Preparation depth of the production expansion (three parallel bits
/// duplicated across four arrays).
pub const QRAM_PREP_DEPTH: u32 = 663;

/// Splits an address into a serially-read low part and a one-hot
/// expanded high part.
pub fn hybrid_qram_plan(address_bits: u32, parallel_bits: u32) -> Result<QramPlan> {
    if parallel_bits > address_bits {
        return Err(Error::Config(format!(
            "cannot expand {parallel_bits} of {address_bits} address bits"
        )));
    }
    if parallel_bits > 10 {
        return Err(Error::Config("one-hot expansion beyond 2^10 lines is not materialisable".into()));
    }
    let lines = 1u32 << parallel_bits;
    Ok(QramPlan {
        linear_bits: address_bits - parallel_bits,
        parallel_bits,
        one_hot_lines: lines,
        address_copies: if parallel_bits == 0 { 0 } else { 2 * lines },
        prep_depth: if parallel_bits == 0 { 0 } else { QRAM_PREP_DEPTH },
    })
}

impl QramPlan {
    /// Expansion preparation time at the given measurement time.
    pub fn prep_time_s(&self, t_mea_us: f64) -> f64 {
        self.prep_depth as f64 * t_mea_us * 1e-6
    }

    /// Rewrites a table load into its bucket-brigade form: a one-hot
    /// conversion of the high address bits, one gated sub-table load per
    /// select line, and the inverse conversion. XOR-semantics make the
    /// composition exactly equivalent to the plain load.
    pub fn expand_load(
        &self,
        c: &mut Circuit,
        addr: &[Bit],
        table: &[u64],
        target: RegisterId,
    ) -> Result<RegisterId> {
        if addr.len() != (self.linear_bits + self.parallel_bits) as usize {
            return Err(Error::Config(format!(
                "expansion planned for {} address bits, got {}",
                self.linear_bits + self.parallel_bits,
                addr.len()
            )));
        }
        if table.len() != 1 << addr.len() {
            return Err(Error::Config(format!(
                "table of {} entries does not cover {} address bits",
                table.len(),
                addr.len()
            )));
        }
        if self.parallel_bits == 0 {
            c.push(FundamentalOp::Load { addr: addr.to_vec(), table: table.to_vec(), target });
            return Ok(target);
        }
        let lines = self.one_hot_lines;
        let hot = c.add_register("one_hot", lines);
        let hi = &addr[self.linear_bits as usize..];
        let lo = &addr[..self.linear_bits as usize];
        // one-hot conversion: line i fires exactly when the high bits
        // read i (a table load whose entries are the unit patterns)
        let one_hot_table: Vec<u64> = (0..1u64 << self.parallel_bits).map(|i| 1 << i).collect();
        c.push(FundamentalOp::Load {
            addr: hi.to_vec(),
            table: one_hot_table.clone(),
            target: hot,
        });
        // per-line gated sub-table loads against the low bits
        let low_entries = 1usize << self.linear_bits;
        for line in 0..lines {
            let mut sub = vec![0u64; 2 * low_entries];
            for (k, slot) in sub.iter_mut().enumerate().skip(low_entries) {
                let lo_val = k - low_entries;
                *slot = table[(line as usize) * low_entries + lo_val];
            }
            let mut gated_addr: Vec<Bit> = lo.to_vec();
            gated_addr.push(Bit::new(hot, line));
            c.push(FundamentalOp::Load { addr: gated_addr, table: sub, target });
        }
        // inverse one-hot conversion returns the select lines to zero
        c.push(FundamentalOp::Load { addr: hi.to_vec(), table: one_hot_table, target: hot });
        Ok(hot)
    }
}

/// One modular addition on the sweeping interconnect: the round-trip
/// sweeps plus the expansion preparation; the addition itself overlaps
/// the preparation of the next load.
pub fn modular_add_time(plan: &SweepPlan, qram: &QramPlan, p: &MotionProfile, t_mea_us: f64) -> f64 {
    let one_way = motion_time(&MotionProfile { distance_m: plan.one_way_m, ..*p });
    plan.round_trips as f64 * 2.0 * one_way + qram.prep_time_s(t_mea_us)
}

/// Whole-run wall time from an addition count and per-addition time.
pub fn run_time_dynamic_days(n_additions: u64, add_time_s: f64) -> f64 {
    n_additions as f64 * add_time_s / 86_400.0
}

/// Physical Bell pairs per second at full overlap: every physical qubit
/// of the sweeping array mediates one multi-module GHZ state per pass,
/// each costing one Bell pair per nearest-neighbour link.
pub fn full_overlap_bandwidth(p: &MotionProfile, patches: u32, d: u32, statics: u32) -> f64 {
    if patches == 0 || statics < 2 {
        return 0.0;
    }
    let ghz_per_move = (patches as f64) * 2.0 * (d as f64) * (d as f64);
    let pairs = ghz_per_move * (statics as f64 - 1.0);
    pairs / motion_time(p)
}

/// GHZ states producible per pass when pair storage is limited to a
/// small logical reservoir per module (data qubits of those patches).
pub fn reservoir_ghz_per_move(reservoir_logical: u32, d: u32) -> u64 {
    reservoir_logical as u64 * (d as u64) * (d as u64)
}

/// One row of the motion phase diagram.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MotionGridRow {
    pub a_max: f64,
    pub j_max: f64,
    pub v_max: f64,
    pub run_days: f64,
    pub bottleneck: String,
}

/// Sweeps peak acceleration (jerk tied at `30·a`) and peak speed,
/// reporting whole-run days and the limiting constraint.
pub fn motion_phase_grid(
    plan: &SweepPlan,
    qram: &QramPlan,
    t_mea_us: f64,
    n_additions: u64,
    a_values: &[f64],
    v_values: &[f64],
) -> Vec<MotionGridRow> {
    let mut rows = Vec::new();
    for &a in a_values {
        for &v in v_values {
            let p = MotionProfile { j_max: 30.0 * a, a_max: a, v_max: v, distance_m: plan.one_way_m };
            let add = modular_add_time(plan, qram, &p, t_mea_us);
            let bottleneck = match motion_case(&p) {
                MotionCase::SpeedLimited => "speed",
                MotionCase::AccelLimited | MotionCase::JerkLimited => "accel",
            };
            rows.push(MotionGridRow {
                a_max: a,
                j_max: 30.0 * a,
                v_max: v,
                run_days: run_time_dynamic_days(n_additions, add),
                bottleneck: bottleneck.into(),
            });
        }
    }
    rows
}

pub fn motion_grid_csv(rows: &[MotionGridRow]) -> String {
    let mut s = String::from("a_max,j_max,v_max,run_days,bottleneck\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            r.a_max, r.j_max, r.v_max, r.run_days, r.bottleneck
        ));
    }
    s
}
