//! Longitudinal vehicle model.
//!
//! Each vehicle is a first-order actuator lag in front of a double
//! integrator: `ȧ = (u − a)/T`, `v̇ = a`, `ṡ = v`, so the transfer function
//! from the control input to the velocity is `1/(s(Ts + 1))`. Positions are
//! shifted by vehicle length and standstill offset, which makes the reduced
//! gap to the predecessor a plain difference of shifted positions.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, invalid, Result};

/// Physical and controller parameters of one vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    /// Actuator time constant `T`.
    #[serde(rename = "time_constant_s")]
    pub time_constant: f64,
    /// Standstill offset `α` added to the velocity-dependent spacing.
    #[serde(rename = "offset_alpha_m", default)]
    pub offset_alpha: f64,
    /// Desired time headway `β_des`.
    #[serde(rename = "headway_desired_s")]
    pub headway_desired: f64,
    #[serde(rename = "gain_kv_per_s")]
    pub gain_kv: f64,
    #[serde(rename = "gain_kp_per_s")]
    pub gain_kp: f64,
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("time_constant_s", self.time_constant),
            ("offset_alpha_m", self.offset_alpha),
            ("headway_desired_s", self.headway_desired),
            ("gain_kv_per_s", self.gain_kv),
            ("gain_kp_per_s", self.gain_kp),
        ] {
            if !value.is_finite() {
                return Err(invalid(name, "must be finite"));
            }
        }
        if self.time_constant <= 0.0 {
            return Err(invalid("time_constant_s", "must be > 0"));
        }
        if self.offset_alpha < 0.0 {
            return Err(invalid("offset_alpha_m", "must be >= 0"));
        }
        if self.headway_desired <= 0.0 {
            return Err(invalid("headway_desired_s", "must be > 0"));
        }
        if self.gain_kv <= 0.0 {
            return Err(invalid("gain_kv_per_s", "must be > 0"));
        }
        if self.gain_kp <= 0.0 {
            return Err(invalid("gain_kp_per_s", "must be > 0"));
        }
        Ok(())
    }

    /// Delay measure of the pure velocity loop, `1/k_v`.
    pub fn vehicle_delay(&self) -> f64 {
        1.0 / self.gain_kv
    }

    /// Largest admissible integration step, `T/3`.
    pub fn max_step(&self) -> f64 {
        self.time_constant / 3.0
    }
}

/// Continuous state of one vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    /// Actuator-lagged acceleration.
    pub lag_state: f64,
    pub velocity: f64,
    /// Position shifted by vehicle length and standstill offset.
    pub shifted_position: f64,
}

impl VehicleState {
    pub const DIM: usize = 3;

    pub fn new(lag_state: f64, velocity: f64, shifted_position: f64) -> Self {
        Self {
            lag_state,
            velocity,
            shifted_position,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.lag_state.is_finite() && self.velocity.is_finite() && self.shifted_position.is_finite()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self::new(
            self.lag_state * c,
            self.velocity * c,
            self.shifted_position * c,
        )
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.lag_state, self.velocity, self.shifted_position]
    }

    pub fn from_slice(x: &[f64]) -> Self {
        Self::new(x[0], x[1], x[2])
    }

    /// Time derivative under control input `u`.
    #[inline]
    pub fn derivative(&self, u: f64, time_constant: f64) -> [f64; 3] {
        [
            (u - self.lag_state) / time_constant,
            self.lag_state,
            self.velocity,
        ]
    }

    /// Jerk `ȧ` implied by control input `u`.
    #[inline]
    pub fn jerk(&self, u: f64, time_constant: f64) -> f64 {
        (u - self.lag_state) / time_constant
    }
}

/// Classical fourth-order Runge-Kutta stepper with reusable scratch space.
#[derive(Debug, Clone)]
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    probe: Vec<f64>,
}

impl Rk4 {
    pub fn new(dim: usize) -> Self {
        Self {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            probe: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.k1.len()
    }

    /// Advances `x` from `t` to `t + dt` in place. `rhs(t, x, dx)` writes the
    /// derivative of `x` at time `t` into `dx`.
    pub fn step<F>(&mut self, x: &mut [f64], t: f64, dt: f64, mut rhs: F)
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        debug_assert_eq!(x.len(), self.dim());
        let half = 0.5 * dt;

        rhs(t, x, &mut self.k1);
        for ((p, xi), k) in self.probe.iter_mut().zip(x.iter()).zip(&self.k1) {
            *p = xi + half * k;
        }
        rhs(t + half, &self.probe, &mut self.k2);
        for ((p, xi), k) in self.probe.iter_mut().zip(x.iter()).zip(&self.k2) {
            *p = xi + half * k;
        }
        rhs(t + half, &self.probe, &mut self.k3);
        for ((p, xi), k) in self.probe.iter_mut().zip(x.iter()).zip(&self.k3) {
            *p = xi + dt * k;
        }
        rhs(t + dt, &self.probe, &mut self.k4);

        let sixth = dt / 6.0;
        for (i, xi) in x.iter_mut().enumerate() {
            *xi += sixth * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

/// Advances one vehicle by `dt` with the control input held constant.
pub fn step_vehicle(
    state: VehicleState,
    u: f64,
    dt: f64,
    params: &VehicleParams,
) -> Result<VehicleState> {
    if !state.is_finite() {
        return Err(crate::Error::NonFinite("vehicle state"));
    }
    ensure_finite(u, "control input")?;
    ensure_finite(dt, "step size")?;
    if dt <= 0.0 {
        return Err(invalid("dt", "must be > 0"));
    }
    if dt > params.max_step() * (1.0 + 1e-12) {
        return Err(invalid(
            "dt",
            format!("{dt} exceeds T/3 = {}", params.max_step()),
        ));
    }
    let tc = params.time_constant;
    let mut x = state.to_array();
    Rk4::new(VehicleState::DIM).step(&mut x, 0.0, dt, |_, x, dx| {
        dx.copy_from_slice(&VehicleState::from_slice(x).derivative(u, tc));
    });
    Ok(VehicleState::from_slice(&x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(tc: f64) -> VehicleParams {
        VehicleParams {
            time_constant: tc,
            offset_alpha: 0.0,
            headway_desired: 0.8,
            gain_kv: 5.0 / 6.0,
            gain_kp: 0.2,
        }
    }

    fn run_constant(u: f64, dt: f64, horizon: f64, p: &VehicleParams) -> Vec<VehicleState> {
        let n = (horizon / dt).round() as usize;
        let mut s = VehicleState::default();
        let mut out = vec![s];
        for _ in 0..n {
            s = step_vehicle(s, u, dt, p).unwrap();
            out.push(s);
        }
        out
    }

    // Closed form of the lag driven by a unit step from rest.
    fn lag_exact(t: f64, tc: f64) -> f64 {
        1.0 - (-t / tc).exp()
    }

    #[test]
    fn equilibrium_is_fixed_point() {
        let s = step_vehicle(VehicleState::default(), 0.0, 1e-3, &params(0.3)).unwrap();
        assert_eq!(s, VehicleState::default());
    }

    #[test]
    fn lag_reaches_one_minus_inverse_e_after_one_time_constant() {
        let p = params(0.3);
        let traj = run_constant(1.0, 1e-3, 0.3, &p);
        let a = traj.last().unwrap().lag_state;
        assert!((a - 0.632_120_558_828_557_7).abs() < 1e-9, "a = {a}");
    }

    #[test]
    fn lag_matches_closed_form_over_ten_seconds() {
        let p = params(0.3);
        let dt = 1e-3;
        let traj = run_constant(1.0, dt, 10.0, &p);
        let worst = traj
            .iter()
            .enumerate()
            .map(|(k, s)| (s.lag_state - lag_exact(k as f64 * dt, 0.3)).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-9, "max error {worst:e}");
    }

    #[test]
    fn velocity_slope_approaches_commanded_acceleration() {
        let p = params(0.3);
        let dt = 1e-3;
        let traj = run_constant(1.0, dt, 20.0, &p);
        let n = traj.len();
        let slope = (traj[n - 1].velocity - traj[n - 1001].velocity) / (1000.0 * dt);
        assert!((slope - 1.0).abs() < 1e-9, "slope {slope}");
        // v(t) = t − T(1 − e^{−t/T})
        let v_exact = 20.0 - 0.3 * lag_exact(20.0, 0.3);
        assert!((traj[n - 1].velocity - v_exact).abs() < 1e-9);
    }

    #[test]
    fn halving_step_reduces_global_error_by_at_least_eight() {
        let p = params(0.3);
        let error_at = |dt: f64| {
            let traj = run_constant(1.0, dt, 3.0, &p);
            traj.iter()
                .enumerate()
                .map(|(k, s)| (s.lag_state - lag_exact(k as f64 * dt, 0.3)).abs())
                .fold(0.0, f64::max)
        };
        let coarse = error_at(0.1);
        let fine = error_at(0.05);
        assert!(coarse / fine >= 8.0, "ratio {}", coarse / fine);
    }

    #[test]
    fn rejects_non_finite_and_oversized_steps() {
        let p = params(0.3);
        let s = VehicleState::default();
        assert!(step_vehicle(s, f64::NAN, 1e-3, &p).is_err());
        assert!(step_vehicle(VehicleState::new(f64::INFINITY, 0.0, 0.0), 0.0, 1e-3, &p).is_err());
        assert!(step_vehicle(s, 0.0, 0.0, &p).is_err());
        assert!(step_vehicle(s, 0.0, 0.2, &p).is_err());
        assert!(step_vehicle(s, 0.0, 0.1, &p).is_ok());
    }

    #[test]
    fn params_validation() {
        assert!(params(0.3).validate().is_ok());
        assert!(params(0.0).validate().is_err());
        let mut p = params(0.3);
        p.offset_alpha = -1.0;
        assert!(p.validate().is_err());
        p.offset_alpha = 0.0;
        p.gain_kp = 0.0;
        assert!(p.validate().is_err());
    }

    proptest! {
        #[test]
        fn step_is_linear(
            a in -5.0f64..5.0, v in -30.0f64..30.0, s in -500.0f64..500.0,
            u in -3.0f64..3.0, c in -4.0f64..4.0,
        ) {
            let p = params(0.3);
            let base = VehicleState::new(a, v, s);
            let lhs = step_vehicle(base.scaled(c), c * u, 1e-3, &p).unwrap();
            let rhs = step_vehicle(base, u, 1e-3, &p).unwrap().scaled(c);
            for (x, y) in lhs.to_array().iter().zip(rhs.to_array()) {
                prop_assert!((x - y).abs() <= 1e-9 * (1.0 + y.abs()));
            }
        }
    }
}
