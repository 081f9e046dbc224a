//! Positivity of the leader-velocity-to-gap maps of a whole platoon.

use crate::error::{ensure_finite, invalid, Result};
use crate::network::MonitorMode;
use crate::sim::scenario::{InitialCondition, LeaderConfig, LeaderMode, ReferencePoint, Scenario};
use crate::sim::simulate;

/// Largest drop of each gap `d̃_i` below its running maximum after a unit
/// step of the leader velocity, relative to the gap's final value `β_i`.
/// Index 0 is vehicle 1.
pub fn leader_chain_drawdowns(platoon: &Scenario, horizon: f64) -> Result<Vec<f64>> {
    ensure_finite(horizon, "horizon")?;
    if horizon <= 0.0 {
        return Err(invalid("horizon", "must be > 0"));
    }
    for (i, v) in platoon.vehicles.iter().enumerate().skip(1) {
        let bps = &v.delay.breakpoints;
        if bps.iter().any(|b| b.drop || b.tau != bps[0].tau) {
            return Err(invalid(
                "delay",
                format!("vehicle {i} needs a constant delay"),
            ));
        }
    }
    let mut s = platoon.clone();
    s.duration = horizon;
    s.leader = LeaderConfig {
        mode: LeaderMode::Prescribed,
        reference: vec![ReferencePoint {
            time: 0.0,
            velocity: 1.0,
        }],
    };
    s.initial = InitialCondition::Equilibrium {
        velocity: Some(0.0),
    };
    s.monitor = MonitorMode::Oracle;
    let trace = simulate(&s)?.trace;
    let last = trace.rows.last().expect("at least one row");
    Ok((1..s.n_vehicles())
        .map(|i| {
            let mut peak = f64::NEG_INFINITY;
            let mut worst = 0.0f64;
            for row in &trace.rows {
                let d = row.vehicles[i].distance;
                peak = peak.max(d);
                worst = worst.max(peak - d);
            }
            worst / last.vehicles[i].beta
        })
        .collect())
}

/// Whether every gap responds monotonically, within `epsilon`, to a leader
/// velocity step. Delays must be constant.
pub fn leader_chain_positivity(
    platoon: &Scenario,
    horizon: f64,
    epsilon: f64,
) -> Result<Vec<bool>> {
    Ok(leader_chain_drawdowns(platoon, horizon)?
        .into_iter()
        .map(|d| d <= epsilon)
        .collect())
}
