//! Experiment description, read from and written to JSON.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::coordination::Lookahead;
use crate::network::{DelayProfile, MonitorMode, TIME_EPS};
use crate::{Error, Result, VehicleParams};

fn default_dwell() -> f64 {
    2.0
}

/// One platoon member. Vehicle 0 is the leader; its delay profile is unused.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleConfig {
    #[serde(flatten)]
    pub params: VehicleParams,
    /// End-to-end delay of every message this vehicle receives.
    #[serde(default)]
    pub delay: DelayProfile,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferencePoint {
    #[serde(rename = "time_s")]
    pub time: f64,
    #[serde(rename = "velocity_mps")]
    pub velocity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeaderMode {
    /// Velocity loop `u = k_v (v_ref − v)`.
    #[default]
    Controlled,
    /// The leader's velocity equals `v_ref` exactly.
    Prescribed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderConfig {
    #[serde(default)]
    pub mode: LeaderMode,
    /// Piecewise-constant, right-continuous reference velocity.
    pub reference: Vec<ReferencePoint>,
}

impl LeaderConfig {
    pub fn reference_at(&self, t: f64) -> f64 {
        self.reference
            .iter()
            .rev()
            .find(|p| p.time <= t + TIME_EPS)
            .or(self.reference.first())
            .map_or(0.0, |p| p.velocity)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum InitialCondition {
    /// Every gap equals `β_i v(0)` and every vehicle moves at `v(0)`.
    /// The velocity defaults to the leader reference at `t = 0`.
    Equilibrium {
        #[serde(
            rename = "velocity_mps",
            default,
            skip_serializing_if = "Option::is_none"
        )]
        velocity: Option<f64>,
    },
    /// All vehicles at rest with the given reduced gaps `d̃_1..d̃_{n−1}`.
    ColdStart {
        #[serde(rename = "gaps_m")]
        gaps: Vec<f64>,
    },
}

impl Default for InitialCondition {
    fn default() -> Self {
        InitialCondition::Equilibrium { velocity: None }
    }
}

/// Optional physical limits. Both are off by default.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Limits {
    #[serde(default)]
    pub nonnegative_velocity: bool,
    #[serde(
        rename = "max_abs_control_mps2",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub max_abs_control: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub name: String,
    #[serde(rename = "dt_s")]
    pub dt: f64,
    #[serde(rename = "duration_s")]
    pub duration: f64,
    /// Interval between telemetry messages; defaults to `dt`.
    #[serde(
        rename = "telemetry_period_s",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub telemetry_period: Option<f64>,
    /// Upper bound on every delay; also the fail-safe value of a windowed monitor.
    #[serde(rename = "tau_max_s")]
    pub tau_max: f64,
    pub vehicles: Vec<VehicleConfig>,
    pub leader: LeaderConfig,
    #[serde(default)]
    pub initial: InitialCondition,
    #[serde(default)]
    pub monitor: MonitorMode,
    #[serde(default)]
    pub lookahead: Lookahead,
    #[serde(rename = "headway_dwell_s", default = "default_dwell")]
    pub headway_dwell: f64,
    #[serde(default)]
    pub limits: Limits,
}

fn fail(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario =
            serde_json::from_str(text).map_err(|e| fail(format!("malformed scenario: {e}")))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn n_vehicles(&self) -> usize {
        self.vehicles.len()
    }

    /// Number of integration steps, `duration / dt` rounded to the nearest integer.
    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    /// Telemetry period in integration steps.
    pub fn telemetry_stride(&self) -> usize {
        self.telemetry_period
            .map_or(1, |p| (p / self.dt).round().max(1.0) as usize)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vehicles.len();
        if n < 2 {
            return Err(fail("at least two vehicles are required"));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(fail("dt_s must be finite and > 0"));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(fail("duration_s must be finite and > 0"));
        }
        if self.duration < self.dt {
            return Err(fail("duration_s must cover at least one step"));
        }
        if let Some(p) = self.telemetry_period {
            if !(p.is_finite() && p > 0.0) {
                return Err(fail("telemetry_period_s must be finite and > 0"));
            }
            let ratio = p / self.dt;
            if ratio < 1.0 - 1e-9 || (ratio - ratio.round()).abs() > 1e-6 {
                return Err(fail(
                    "telemetry_period_s must be a positive multiple of dt_s",
                ));
            }
        }
        if !(self.tau_max.is_finite() && self.tau_max >= 0.0) {
            return Err(fail("tau_max_s must be finite and >= 0"));
        }
        if !(self.headway_dwell.is_finite() && self.headway_dwell >= 0.0) {
            return Err(fail("headway_dwell_s must be finite and >= 0"));
        }
        for (i, v) in self.vehicles.iter().enumerate() {
            v.params
                .validate()
                .map_err(|e| fail(format!("vehicle {i}: {e}")))?;
            if self.dt > v.params.max_step() * (1.0 + 1e-12) {
                return Err(fail(format!(
                    "vehicle {i}: dt_s = {} exceeds T/3 = {}",
                    self.dt,
                    v.params.max_step()
                )));
            }
            if i > 0 {
                v.delay
                    .validate(self.tau_max)
                    .map_err(|e| fail(format!("vehicle {i} delay: {e}")))?;
            }
        }
        if self.leader.reference.is_empty() {
            return Err(fail("leader reference needs at least one point"));
        }
        let mut last = f64::NEG_INFINITY;
        for p in &self.leader.reference {
            if !(p.time.is_finite() && p.velocity.is_finite()) {
                return Err(fail("leader reference must be finite"));
            }
            if p.time <= last {
                return Err(fail("leader reference times must be strictly increasing"));
            }
            last = p.time;
        }
        match &self.initial {
            InitialCondition::Equilibrium { velocity: Some(v) } if !v.is_finite() => {
                return Err(fail("initial velocity must be finite"));
            }
            InitialCondition::ColdStart { gaps } => {
                if gaps.len() != n - 1 {
                    return Err(fail(format!(
                        "cold start needs {} gaps, got {}",
                        n - 1,
                        gaps.len()
                    )));
                }
                if gaps.iter().any(|g| !g.is_finite()) {
                    return Err(fail("cold start gaps must be finite"));
                }
            }
            _ => {}
        }
        if let MonitorMode::Windowed { window } = self.monitor {
            if !(window.is_finite() && window > 0.0) {
                return Err(fail("monitor window_s must be finite and > 0"));
            }
        }
        if let Lookahead::Limited(0) = self.lookahead {
            return Err(fail("lookahead must allow at least one vehicle"));
        }
        if let Some(u) = self.limits.max_abs_control {
            if !(u.is_finite() && u > 0.0) {
                return Err(fail("max_abs_control_mps2 must be finite and > 0"));
            }
        }
        Ok(())
    }
}
