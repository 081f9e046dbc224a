//! ACC/CACC control laws.
//!
//! The follower law controls the reduced distance to the virtual predecessor
//! with feedback factor `Δ̂` (the overall delay) and tracks the networked
//! reference velocity:
//!
//! ```text
//! u = k_p (d̃_s − Δ̂ v) + k_v (v_s − v)
//! ```
//!
//! A positive distance error (gap larger than its reference) commands
//! acceleration; with positive gains the resulting loop has characteristic
//! polynomial `s³ + s²/T + ((k_v + k_p Δ̂)/T) s + k_p/T`, which is Hurwitz
//! whenever `Δ̂ > T`.

use crate::error::{ensure_finite, invalid, Result};
use crate::VehicleParams;

/// Signals available to a follower's controller at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlInputs {
    pub own_velocity: f64,
    /// Networked reference velocity `v_s` (weighted, delayed upstream velocities).
    pub reference_velocity: f64,
    /// Reduced distance to the virtual predecessor `d̃_s`.
    pub virtual_distance: f64,
    /// Overall delay `Δ̂ = Δ + τ` used as feedback factor.
    pub overall_delay: f64,
}

impl ControlInputs {
    pub fn validate(&self) -> Result<()> {
        ensure_finite(self.own_velocity, "own velocity")?;
        ensure_finite(self.reference_velocity, "reference velocity")?;
        ensure_finite(self.virtual_distance, "virtual distance")?;
        ensure_finite(self.overall_delay, "overall delay")?;
        if self.overall_delay <= 0.0 {
            return Err(invalid("overall_delay", "must be > 0"));
        }
        Ok(())
    }
}

/// Reference for the virtual distance, `Δ̂ · v`.
pub fn compute_reference_distance(overall_delay: f64, velocity: f64) -> Result<f64> {
    ensure_finite(overall_delay, "overall delay")?;
    ensure_finite(velocity, "velocity")?;
    if overall_delay <= 0.0 {
        return Err(invalid("overall_delay", "must be > 0"));
    }
    Ok(overall_delay * velocity)
}

/// Combined velocity and virtual-distance control law.
pub fn compute_control(inputs: &ControlInputs, params: &VehicleParams) -> Result<f64> {
    inputs.validate()?;
    Ok(follower_law(
        inputs.own_velocity,
        inputs.reference_velocity,
        inputs.virtual_distance,
        inputs.overall_delay,
        params.gain_kv,
        params.gain_kp,
    ))
}

/// Unchecked form of [`compute_control`] for inner simulation loops.
#[inline]
pub fn follower_law(v: f64, v_s: f64, d_s: f64, overall_delay: f64, kv: f64, kp: f64) -> f64 {
    kp * (d_s - overall_delay * v) + kv * (v_s - v)
}

/// Pure velocity tracking used by the platoon leader.
#[inline]
pub fn leader_control(v: f64, v_ref: f64, kv: f64) -> f64 {
    kv * (v_ref - v)
}

/// Coefficients `[c2, c1, c0]` of the monic characteristic polynomial
/// `s³ + c2 s² + c1 s + c0` of the single-vehicle distance loop.
pub fn characteristic_polynomial(
    time_constant: f64,
    kv: f64,
    kp: f64,
    overall_delay: f64,
) -> [f64; 3] {
    [
        1.0 / time_constant,
        (kv + kp * overall_delay) / time_constant,
        kp / time_constant,
    ]
}
