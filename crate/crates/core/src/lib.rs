//! Core algorithms for compiling, distributing, verifying and costing
//! residue-arithmetic order finding on modular quantum processors.
//!
//! The crate is organised around a small pipeline:
//!
//! * [`residue`] — classical number theory: residue prime systems, per-prime
//!   generators, discrete-log substitution tables and CRT reconstruction.
//! * [`ir`] — the fundamental-operation circuit representation (loads, adds,
//!   X-basis cleanings, phase unlookups, communication placeholders) with
//!   validation, depth analysis and a line-delimited JSON file format.
//! * [`compile`] — lowering of windowed modular arithmetic onto the IR:
//!   wrapped modular addition, windowed modular exponentiation, exponent
//!   compression and measurement-based unlookups, plus closed-form gate
//!   counting.
//! * [`distribute`] — bit-striping of registers across processor modules,
//!   rewriting of loads and adds into GHZ broadcasts and overflow teleports,
//!   and communication accounting.
//! * [`trajectory`] — the classical-basis trajectory simulator used to verify
//!   compiled and distributed circuits exactly, including the shared
//!   measurement record and the ±1 phase ledger.
//! * [`cost`] — hardware-model based scheduling (factories, Bell-pair
//!   reservoirs, latency hiding), full-run extrapolation and the sweep/report
//!   machinery.
//! * [`motion`] — jerk-limited transport timing and addressing plans for the
//!   dynamic-array interconnect variant.
//! * [`scenario`] — the shared end-to-end configuration type consumed by the
//!   command line front end.

pub mod compile;
pub mod cost;
pub mod distribute;
pub mod error;
pub mod ir;
pub mod motion;
pub mod residue;
pub mod scenario;
pub mod trajectory;

pub use compile::{
    compile_prime_iteration, toffoli_estimate, CompiledModExp, PipelineStage, PrimeIterationPlan,
    WindowConfig,
};
pub use cost::{HardwareModel, ResourceReport, ScheduleOutcome};
pub use distribute::{CommStats, DistributedCircuit, ModuleLayout};
pub use error::Error;
pub use ir::{Circuit, FundamentalOp, RegisterId};
pub use motion::{
    hybrid_qram_plan, modular_add_time, motion_time, run_time_dynamic_days, MotionProfile,
    QramPlan, SweepPlan,
};
pub use residue::PrimeSystem;
pub use scenario::{Interconnect, ScenarioConfig};
pub use trajectory::{TrajectorySet, VerificationReport};
