//! Ready-made scenarios.

use crate::analysis::TUNED_KP;
use crate::coordination::Lookahead;
use crate::network::{DelayProfile, MonitorMode};
use crate::VehicleParams;

use super::scenario::{
    InitialCondition, LeaderConfig, LeaderMode, Limits, ReferencePoint, Scenario, VehicleConfig,
};

pub const TIME_CONSTANT: f64 = 0.3;
pub const GAIN_KV: f64 = 5.0 / 6.0;
pub const HEADWAY_DESIRED: f64 = 0.8;

pub fn vehicle(kp: f64) -> VehicleParams {
    VehicleParams {
        time_constant: TIME_CONSTANT,
        offset_alpha: 0.0,
        headway_desired: HEADWAY_DESIRED,
        gain_kv: GAIN_KV,
        gain_kp: kp,
    }
}

/// Four vehicles cruising at 5 m/s; the leader steps to 10 m/s at t = 2 s.
/// Vehicle 1 sees a constant 0.1 s delay. Vehicles 2 and 3 see 0.1 s, 0.3 s
/// from t = 10 s, 0.6 s from t = 20 s and 0.1 s again from t = 40 s. Each
/// follower combines at most two vehicles ahead.
pub fn delay_steps_platoon() -> Scenario {
    let steps = DelayProfile::from_steps(&[(0.0, 0.1), (10.0, 0.3), (20.0, 0.6), (40.0, 0.1)]);
    let delays = [
        DelayProfile::default(),
        DelayProfile::constant(0.1),
        steps.clone(),
        steps,
    ];
    Scenario {
        name: "delay-steps-platoon".into(),
        dt: 1e-3,
        duration: 80.0,
        telemetry_period: None,
        tau_max: 0.6,
        vehicles: delays
            .into_iter()
            .map(|delay| VehicleConfig {
                params: vehicle(TUNED_KP),
                delay,
            })
            .collect(),
        leader: LeaderConfig {
            mode: LeaderMode::Controlled,
            reference: vec![
                ReferencePoint {
                    time: 0.0,
                    velocity: 5.0,
                },
                ReferencePoint {
                    time: 2.0,
                    velocity: 10.0,
                },
            ],
        },
        initial: InitialCondition::Equilibrium { velocity: None },
        monitor: MonitorMode::Oracle,
        lookahead: Lookahead::Limited(2),
        headway_dwell: 2.0,
        limits: Limits::default(),
    }
}

/// Leader and one follower with an ideal channel, so the follower's headway
/// equals its vehicle delay `1/k_v = 1.2 s`. Both start at rest and the
/// leader reference is 2 m/s.
pub fn single_follower_step() -> Scenario {
    Scenario {
        name: "single-follower-step".into(),
        dt: 1e-3,
        duration: 70.0,
        telemetry_period: None,
        tau_max: 0.0,
        vehicles: vec![
            VehicleConfig {
                params: vehicle(TUNED_KP),
                delay: DelayProfile::default(),
            },
            VehicleConfig {
                params: VehicleParams {
                    headway_desired: 1.0 / GAIN_KV,
                    ..vehicle(TUNED_KP)
                },
                delay: DelayProfile::constant(0.0),
            },
        ],
        leader: LeaderConfig {
            mode: LeaderMode::Controlled,
            reference: vec![ReferencePoint {
                time: 0.0,
                velocity: 2.0,
            }],
        },
        initial: InitialCondition::Equilibrium {
            velocity: Some(0.0),
        },
        monitor: MonitorMode::Oracle,
        lookahead: Lookahead::Unlimited,
        headway_dwell: 2.0,
        limits: Limits::default(),
    }
}
