//! Platoon simulation: scenario description, engine and trace output.

pub mod engine;
pub mod presets;
pub mod scenario;
pub mod trace;

pub use engine::{run_scenario, simulate, Diagnostics, RunOutput, Simulation};
pub use scenario::Scenario;
pub use trace::{read_trace_csv, write_trace_csv, Trace, TraceRow, VehicleSample};
