//! C ABI over `platoon`.
//!
//! Every function returns a [`PlatoonStatus`]. On failure the message is kept
//! per thread and read with [`platoon_last_error`]. Scenarios and runs are
//! opaque handles released with their `_free` functions. Panics are caught at
//! the boundary and reported as [`PlatoonStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use platoon::analysis::{self, LinearLoop, LoopVariant, TUNED_KP};
use platoon::coordination::{design_topology, Lookahead, TopologyOutcome};
use platoon::sim::{self, presets, RunOutput, Scenario};
use platoon::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlatoonStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Validation = 4,
    Divergence = 5,
    Unstable = 6,
    NotSettled = 7,
    NoFeasibleGain = 8,
    Io = 9,
    Format = 10,
    OutOfRange = 11,
    Panic = 12,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlatoonPreset {
    /// Four vehicles with stepped communication delays.
    DelaySteps = 0,
    /// One follower, zero delay, headway equal to the vehicle delay.
    SingleFollower = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlatoonLoopVariant {
    PureVelocity = 0,
    Combined = 1,
}

/// Single follower loop for the linear analyses.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlatoonLoop {
    pub time_constant: f64,
    pub gain_kv: f64,
    pub gain_kp: f64,
    pub overall_delay: f64,
    pub tau: f64,
    pub variant: PlatoonLoopVariant,
}

/// One vehicle in one trace row.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlatoonSample {
    pub time: f64,
    pub velocity: f64,
    pub distance: f64,
    pub virtual_distance: f64,
    pub beta: f64,
    pub overall_delay: f64,
    pub tau: f64,
    pub lookahead_index: usize,
    pub weight_l_minus_1: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlatoonHeadwayEvent {
    pub time: f64,
    pub vehicle: usize,
    pub from: f64,
    pub to: f64,
}

/// Outcome of [`platoon_design_topology`]. `min_required_beta` is set only
/// when `feasible` is false, the weights only when it is true.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlatoonTopology {
    pub feasible: bool,
    pub lookahead_index: usize,
    pub weight_l: f64,
    pub weight_l_minus_1: f64,
    pub min_required_beta: f64,
}

/// Opaque scenario handle.
pub struct PlatoonScenario(Scenario);

/// Opaque handle to a finished run.
pub struct PlatoonRun(RunOutput);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure {
    status: PlatoonStatus,
    message: String,
}

impl Failure {
    fn new(status: PlatoonStatus, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::NonFinite(_) | Error::InvalidParameter { .. } | Error::IndexMismatch { .. } => {
                PlatoonStatus::InvalidArgument
            }
            Error::Validation(_) => PlatoonStatus::Validation,
            Error::Divergence { .. } => PlatoonStatus::Divergence,
            Error::OutOfOrderSend { .. } => PlatoonStatus::InvalidArgument,
            Error::Unstable { .. } => PlatoonStatus::Unstable,
            Error::NotSettled { .. } => PlatoonStatus::NotSettled,
            Error::NoFeasibleGain { .. } => PlatoonStatus::NoFeasibleGain,
            Error::Io(_) => PlatoonStatus::Io,
            Error::Json(_) | Error::Csv(_) => PlatoonStatus::Format,
        };
        Failure::new(status, e.to_string())
    }
}

fn set_last_error(message: &str) {
    let text = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(text));
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> PlatoonStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
            PlatoonStatus::Ok
        }
        Ok(Err(f)) => {
            set_last_error(&f.message);
            f.status
        }
        Err(payload) => {
            let text = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(&format!("internal panic: {text}"));
            PlatoonStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(
            PlatoonStatus::NullPointer,
            format!("`{name}` is null"),
        ));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::new(PlatoonStatus::InvalidUtf8, format!("`{name}` is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure::new(PlatoonStatus::NullPointer, format!("`{name}` is null")))
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| Failure::new(PlatoonStatus::NullPointer, format!("`{name}` is null")))
}

/// Message of the last failed call on this thread, or null after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn platoon_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// The pinned follower gain `k_p` in 1/s.
#[no_mangle]
pub extern "C" fn platoon_tuned_kp() -> f64 {
    TUNED_KP
}

fn hand_out(out: &mut *mut PlatoonScenario, scenario: Scenario) {
    *out = Box::into_raw(Box::new(PlatoonScenario(scenario)));
}

/// Parses and validates a scenario document.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn platoon_scenario_from_json(
    json: *const c_char,
    out: *mut *mut PlatoonScenario,
) -> PlatoonStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let scenario = Scenario::from_json(str_arg(json, "json")?)?;
        hand_out(out, scenario);
        Ok(())
    })
}

/// Reads and validates a scenario file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn platoon_scenario_load(
    path: *const c_char,
    out: *mut *mut PlatoonScenario,
) -> PlatoonStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let scenario = Scenario::load(str_arg(path, "path")?)?;
        hand_out(out, scenario);
        Ok(())
    })
}

/// Builds one of the shipped scenarios.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn platoon_scenario_preset(
    preset: PlatoonPreset,
    out: *mut *mut PlatoonScenario,
) -> PlatoonStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let scenario = match preset {
            PlatoonPreset::DelaySteps => presets::delay_steps_platoon(),
            PlatoonPreset::SingleFollower => presets::single_follower_step(),
        };
        hand_out(out, scenario);
        Ok(())
    })
}

/// Releases a scenario. Null is ignored.
///
/// # Safety
/// `scenario` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn platoon_scenario_free(scenario: *mut PlatoonScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Number of vehicles including the leader.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn platoon_scenario_vehicle_count(
    scenario: *const PlatoonScenario,
    out: *mut usize,
) -> PlatoonStatus {
    guard(|| {
        *out_arg(out, "out")? = ref_arg(scenario, "scenario")?.0.n_vehicles();
        Ok(())
    })
}

/// Simulates a scenario.
///
/// # Safety
/// `scenario` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn platoon_run(
    scenario: *const PlatoonScenario,
    out: *mut *mut PlatoonRun,
) -> PlatoonStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let run = sim::simulate(&ref_arg(scenario, "scenario")?.0)?;
        *out = Box::into_raw(Box::new(PlatoonRun(run)));
        Ok(())
    })
}

/// Releases a run. Null is ignored.
///
/// # Safety
/// `run` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn platoon_run_free(run: *mut PlatoonRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Number of trace rows.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn platoon_run_row_count(
    run: *const PlatoonRun,
    out: *mut usize,
) -> PlatoonStatus {
    guard(|| {
        *out_arg(out, "out")? = ref_arg(run, "run")?.0.trace.rows.len();
        Ok(())
    })
}

/// Trace entry of `vehicle` in row `row`. Leader gap columns are zero.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn platoon_run_sample(
    run: *const PlatoonRun,
    row: usize,
    vehicle: usize,
    out: *mut PlatoonSample,
) -> PlatoonStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let trace = &ref_arg(run, "run")?.0.trace;
        let r = trace.rows.get(row).ok_or_else(|| {
            Failure::new(
                PlatoonStatus::OutOfRange,
                format!("row {row} of {}", trace.rows.len()),
            )
        })?;
        let s = r.vehicles.get(vehicle).ok_or_else(|| {
            Failure::new(
                PlatoonStatus::OutOfRange,
                format!("vehicle {vehicle} of {}", r.vehicles.len()),
            )
        })?;
        *out = PlatoonSample {
            time: r.time,
            velocity: s.velocity,
            distance: s.distance,
            virtual_distance: s.virtual_distance,
            beta: s.beta,
            overall_delay: s.overall_delay,
            tau: s.tau,
            lookahead_index: s.lookahead_index,
            weight_l_minus_1: s.weight_l_minus_1,
        };
        Ok(())
    })
}

/// Writes the trace as CSV.
///
/// # Safety
/// `run` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn platoon_run_write_csv(
    run: *const PlatoonRun,
    path: *const c_char,
) -> PlatoonStatus {
    guard(|| {
        let run = ref_arg(run, "run")?;
        sim::write_trace_csv(&run.0.trace, str_arg(path, "path")?)?;
        Ok(())
    })
}

/// Largest gap between the integrated and the assembled virtual distance.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn platoon_run_max_identity_residual(
    run: *const PlatoonRun,
    out: *mut f64,
) -> PlatoonStatus {
    guard(|| {
        *out_arg(out, "out")? = ref_arg(run, "run")?.0.diagnostics.max_identity_residual();
        Ok(())
    })
}

/// Number of headway changes during the run.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn platoon_run_headway_event_count(
    run: *const PlatoonRun,
    out: *mut usize,
) -> PlatoonStatus {
    guard(|| {
        *out_arg(out, "out")? = ref_arg(run, "run")?.0.diagnostics.headway_events.len();
        Ok(())
    })
}

/// Headway change number `index` in time order.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn platoon_run_headway_event(
    run: *const PlatoonRun,
    index: usize,
    out: *mut PlatoonHeadwayEvent,
) -> PlatoonStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let events = &ref_arg(run, "run")?.0.diagnostics.headway_events;
        let e = events.get(index).ok_or_else(|| {
            Failure::new(
                PlatoonStatus::OutOfRange,
                format!("event {index} of {}", events.len()),
            )
        })?;
        *out = PlatoonHeadwayEvent {
            time: e.time,
            vehicle: e.vehicle,
            from: e.from,
            to: e.to,
        };
        Ok(())
    })
}

/// Look-ahead index and weights for `vehicle` given `betas[0..n]` =
/// `β_1..β_vehicle`. `max_lookahead = 0` allows any index.
///
/// # Safety
/// `betas` must hold `n` values and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn platoon_design_topology(
    vehicle: usize,
    overall_delay: f64,
    betas: *const f64,
    n: usize,
    max_lookahead: usize,
    out: *mut PlatoonTopology,
) -> PlatoonStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        if betas.is_null() && n > 0 {
            return Err(Failure::new(PlatoonStatus::NullPointer, "`betas` is null"));
        }
        let betas = if n == 0 {
            &[][..]
        } else {
            std::slice::from_raw_parts(betas, n)
        };
        let lookahead = match max_lookahead {
            0 => Lookahead::Unlimited,
            k => Lookahead::Limited(k),
        };
        *out = match design_topology(vehicle, overall_delay, betas, lookahead)? {
            TopologyOutcome::Assigned(a) => PlatoonTopology {
                feasible: true,
                lookahead_index: a.lookahead_index,
                weight_l: a.weight_l,
                weight_l_minus_1: a.weight_l_minus_1,
                min_required_beta: 0.0,
            },
            TopologyOutcome::Infeasible { min_required_beta } => PlatoonTopology {
                feasible: false,
                min_required_beta,
                ..PlatoonTopology::default()
            },
        };
        Ok(())
    })
}

fn linear_loop(lp: &PlatoonLoop) -> LinearLoop {
    LinearLoop {
        time_constant: lp.time_constant,
        gain_kv: lp.gain_kv,
        gain_kp: lp.gain_kp,
        overall_delay: lp.overall_delay,
        tau: lp.tau,
        variant: match lp.variant {
            PlatoonLoopVariant::PureVelocity => LoopVariant::PureVelocity,
            PlatoonLoopVariant::Combined => LoopVariant::Combined,
        },
    }
}

/// Integral of one minus the unit velocity step response.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn platoon_delay_measure(
    loop_: PlatoonLoop,
    horizon: f64,
    out: *mut f64,
) -> PlatoonStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = analysis::delay_measure(&linear_loop(&loop_), horizon)?;
        Ok(())
    })
}

/// Whether the velocity step response never drops by more than `epsilon`.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn platoon_positivity_check(
    loop_: PlatoonLoop,
    horizon: f64,
    epsilon: f64,
    out: *mut bool,
) -> PlatoonStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = analysis::external_positivity_check(&linear_loop(&loop_), horizon, epsilon)?;
        Ok(())
    })
}

/// Largest `k_p` positive on every reachable operating point of the grid.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn platoon_tune_kp(
    time_constant: f64,
    gain_kv: f64,
    overall_delay_min: f64,
    overall_delay_max: f64,
    tau_max: f64,
    grid_step: f64,
    out: *mut f64,
) -> PlatoonStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = analysis::tune_kp(
            time_constant,
            gain_kv,
            (overall_delay_min, overall_delay_max),
            tau_max,
            grid_step,
        )?;
        Ok(())
    })
}

/// Writes the uncertain state-space model as JSON.
///
/// # Safety
/// `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn platoon_export_robust_model(
    time_constant: f64,
    gain_kv: f64,
    gain_kp: f64,
    overall_delay_min: f64,
    overall_delay_max: f64,
    tau_max: f64,
    path: *const c_char,
) -> PlatoonStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        analysis::export_robust_model(
            time_constant,
            gain_kv,
            gain_kp,
            overall_delay_min,
            overall_delay_max,
            tau_max,
            path,
        )?;
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn panics_become_status() {
        let status = guard(|| panic!("boom"));
        assert_eq!(status, PlatoonStatus::Panic);
        let msg = unsafe { CStr::from_ptr(platoon_last_error()) }
            .to_str()
            .unwrap();
        assert!(msg.contains("boom"));
        assert_eq!(guard(|| Ok(())), PlatoonStatus::Ok);
        assert!(platoon_last_error().is_null());
    }

    #[test]
    fn error_kinds_map_to_status() {
        let cases = [
            (Error::Validation("x".into()), PlatoonStatus::Validation),
            (Error::NonFinite("x"), PlatoonStatus::InvalidArgument),
            (
                Error::NotSettled { horizon: 1.0 },
                PlatoonStatus::NotSettled,
            ),
            (
                Error::NoFeasibleGain { floor: 1e-4 },
                PlatoonStatus::NoFeasibleGain,
            ),
            (
                Error::Unstable { max_real_part: 1.0 },
                PlatoonStatus::Unstable,
            ),
        ];
        for (e, want) in cases {
            assert_eq!(Failure::from(e).status, want);
        }
    }

    #[test]
    fn interior_nul_in_message_is_kept_printable() {
        set_last_error("a\0b");
        let msg = unsafe { CStr::from_ptr(platoon_last_error()) }
            .to_str()
            .unwrap();
        assert_eq!(msg, "a b");
    }
}
