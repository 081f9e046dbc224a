//! Single-vehicle closed loop driven by the virtual predecessor's velocity.
//!
//! The loop input is a unit step of `v_s`. The velocity term of the control
//! law sees `v_s` after the stationary communication delay `τ`, while the
//! distance to the virtual predecessor integrates the undelayed `v_s − v`:
//!
//! ```text
//! u   = k_p (d_s − Δ̂ v) + k_v (v_s(t − τ) − v)
//! ḋ_s = v_s − v
//! ```
//!
//! The delay enters as a pure transport delay of the step, so it is realized
//! exactly by switching the delayed input on at `t = τ`.

use nalgebra::{DMatrix, Matrix2, Matrix3};
use serde::{Deserialize, Serialize};

use crate::dynamics::Rk4;
use crate::error::{ensure_finite, invalid, Error, Result};

/// Default integration step of the time-domain checks.
pub const DEFAULT_DT: f64 = 1e-3;

/// Default relative tolerance of the monotonicity test.
pub const DEFAULT_EPSILON: f64 = 1e-6;

/// Eigenvalues must lie left of `−STABILITY_MARGIN`.
pub const STABILITY_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoopVariant {
    /// `u = k_v (v_s − v)`.
    PureVelocity,
    /// Velocity and virtual-distance feedback.
    #[default]
    Combined,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearLoop {
    pub time_constant: f64,
    pub gain_kv: f64,
    pub gain_kp: f64,
    /// `Δ̂`, unused by the pure velocity loop.
    pub overall_delay: f64,
    pub tau: f64,
    pub variant: LoopVariant,
}

impl LinearLoop {
    pub fn pure_velocity(time_constant: f64, gain_kv: f64, tau: f64) -> Self {
        Self {
            time_constant,
            gain_kv,
            gain_kp: 0.0,
            overall_delay: 0.0,
            tau,
            variant: LoopVariant::PureVelocity,
        }
    }

    pub fn combined(
        time_constant: f64,
        gain_kv: f64,
        gain_kp: f64,
        overall_delay: f64,
        tau: f64,
    ) -> Self {
        Self {
            time_constant,
            gain_kv,
            gain_kp,
            overall_delay,
            tau,
            variant: LoopVariant::Combined,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite(self.time_constant, "time constant")?;
        ensure_finite(self.gain_kv, "k_v")?;
        ensure_finite(self.gain_kp, "k_p")?;
        ensure_finite(self.overall_delay, "overall delay")?;
        ensure_finite(self.tau, "communication delay")?;
        if self.time_constant <= 0.0 {
            return Err(invalid("time_constant", "must be > 0"));
        }
        if self.tau < 0.0 {
            return Err(invalid("tau", "must be >= 0"));
        }
        Ok(())
    }

    /// System matrix of the undelayed loop; the delay does not enter it.
    pub fn system_matrix(&self) -> DMatrix<f64> {
        let t = self.time_constant;
        match self.variant {
            LoopVariant::PureVelocity => {
                // (a, v)
                let m = Matrix2::new(-1.0 / t, -self.gain_kv / t, 1.0, 0.0);
                DMatrix::from_iterator(2, 2, m.iter().copied())
            }
            LoopVariant::Combined => {
                // (a, v, d_s)
                let m = Matrix3::new(
                    -1.0 / t,
                    -(self.gain_kv + self.gain_kp * self.overall_delay) / t,
                    self.gain_kp / t,
                    1.0,
                    0.0,
                    0.0,
                    0.0,
                    -1.0,
                    0.0,
                );
                DMatrix::from_iterator(3, 3, m.iter().copied())
            }
        }
    }

    /// Largest real part among the closed-loop eigenvalues.
    pub fn spectral_abscissa(&self) -> f64 {
        max_real_eigenvalue(&self.system_matrix())
    }

    pub fn is_stable(&self) -> bool {
        self.spectral_abscissa() < -STABILITY_MARGIN
    }

    fn ensure_stable(&self) -> Result<()> {
        self.validate()?;
        let max_real_part = self.spectral_abscissa();
        if max_real_part < -STABILITY_MARGIN {
            Ok(())
        } else {
            Err(Error::Unstable { max_real_part })
        }
    }

    fn rhs(&self, input: f64, x: &[f64], dx: &mut [f64]) {
        let (a, v, ds) = (x[0], x[1], x[2]);
        let mut u = self.gain_kv * (input - v);
        if self.variant == LoopVariant::Combined {
            u += self.gain_kp * (ds - self.overall_delay * v);
        }
        dx[0] = (u - a) / self.time_constant;
        dx[1] = a;
        dx[2] = 1.0 - v;
        dx[3] = 1.0 - v;
    }
}

pub fn max_real_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Unit-step response integrator. State: `(a, v, d_s, ∫(1 − v))`.
struct StepResponse {
    lp: LinearLoop,
    dt: f64,
    x: [f64; 4],
    t: f64,
    rk: Rk4,
}

impl StepResponse {
    fn new(lp: LinearLoop, dt: f64) -> Result<Self> {
        ensure_finite(dt, "step size")?;
        if dt <= 0.0 {
            return Err(invalid("dt", "must be > 0"));
        }
        Ok(Self {
            lp,
            dt,
            x: [0.0; 4],
            t: 0.0,
            rk: Rk4::new(4),
        })
    }

    /// Integrates to `until`, calling `observe(t, v)` after every step.
    fn run_to(&mut self, until: f64, mut observe: impl FnMut(f64, f64)) {
        // The delayed input switches at τ; integrate up to it separately so
        // no step straddles the discontinuity.
        while self.t < until - 1e-12 {
            let before_switch = self.t < self.lp.tau - 1e-12;
            let end = if before_switch {
                self.lp.tau.min(until)
            } else {
                until
            };
            let n = ((end - self.t) / self.dt).ceil().max(1.0);
            let h = (end - self.t) / n;
            let input = if before_switch { 0.0 } else { 1.0 };
            let start = self.t;
            let lp = self.lp;
            for k in 0..n as usize {
                self.rk
                    .step(&mut self.x, 0.0, h, |_, x, dx| lp.rhs(input, x, dx));
                self.t = start + (k + 1) as f64 * h;
                observe(self.t, self.x[1]);
            }
            self.t = end;
        }
    }
}

/// Velocity step response sampled at `dt`, starting with `v(0) = 0`.
pub fn step_response(lp: &LinearLoop, horizon: f64, dt: f64) -> Result<Vec<(f64, f64)>> {
    lp.validate()?;
    let mut sr = StepResponse::new(*lp, dt)?;
    let mut out = vec![(0.0, 0.0)];
    sr.run_to(horizon, |t, v| out.push((t, v)));
    Ok(out)
}

/// `∫₀^∞ (1 − v(t)) dt` for a unit step of `v_s`.
///
/// The integral is carried as an extra state and the horizon is extended in
/// chunks of `horizon` until the last chunk adds less than `1e−6`.
pub fn delay_measure(lp: &LinearLoop, horizon: f64) -> Result<f64> {
    delay_measure_with_step(lp, horizon, DEFAULT_DT)
}

pub fn delay_measure_with_step(lp: &LinearLoop, horizon: f64, dt: f64) -> Result<f64> {
    const TAIL: f64 = 1e-6;
    const MAX_CHUNKS: usize = 200;
    lp.ensure_stable()?;
    ensure_finite(horizon, "horizon")?;
    if horizon <= 0.0 {
        return Err(invalid("horizon", "must be > 0"));
    }
    let mut sr = StepResponse::new(*lp, dt)?;
    let mut until = horizon.max(lp.tau);
    sr.run_to(until, |_, _| {});
    for _ in 0..MAX_CHUNKS {
        let before = sr.x[3];
        until += horizon;
        sr.run_to(until, |_, _| {});
        if (sr.x[3] - before).abs() < TAIL {
            return Ok(sr.x[3]);
        }
    }
    Err(Error::NotSettled { horizon: until })
}

/// `true` iff the velocity step response never falls more than
/// `epsilon` (relative to its unit final value) below its running maximum.
pub fn external_positivity_check(lp: &LinearLoop, horizon: f64, epsilon: f64) -> Result<bool> {
    external_positivity_check_with_step(lp, horizon, epsilon, DEFAULT_DT)
}

pub fn external_positivity_check_with_step(
    lp: &LinearLoop,
    horizon: f64,
    epsilon: f64,
    dt: f64,
) -> Result<bool> {
    lp.ensure_stable()?;
    ensure_finite(horizon, "horizon")?;
    ensure_finite(epsilon, "epsilon")?;
    if horizon <= 0.0 || epsilon < 0.0 {
        return Err(invalid("horizon", "horizon must be > 0 and epsilon >= 0"));
    }
    Ok(max_drawdown(lp, horizon, dt)? <= epsilon)
}

/// Largest drop of the velocity step response below its running maximum.
pub fn max_drawdown(lp: &LinearLoop, horizon: f64, dt: f64) -> Result<f64> {
    lp.validate()?;
    let mut sr = StepResponse::new(*lp, dt)?;
    let (mut peak, mut worst) = (0.0f64, 0.0f64);
    sr.run_to(horizon, |_, v| {
        peak = peak.max(v);
        worst = worst.max(peak - v);
    });
    Ok(worst)
}

/// One point of a frozen-parameter stability sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrozenPoint {
    pub overall_delay: f64,
    pub tau: f64,
    pub spectral_abscissa: f64,
}

impl FrozenPoint {
    pub fn is_stable(&self) -> bool {
        self.spectral_abscissa < -STABILITY_MARGIN
    }
}

/// Eigenvalue screen over a `(Δ̂, τ)` lattice of the combined loop. Necessary
/// for stability under time-varying parameters, not sufficient.
pub fn frozen_stability_grid(
    time_constant: f64,
    gain_kv: f64,
    gain_kp: f64,
    overall_delays: &[f64],
    taus: &[f64],
) -> Result<Vec<FrozenPoint>> {
    let mut out = Vec::with_capacity(overall_delays.len() * taus.len());
    for &d in overall_delays {
        for &tau in taus {
            let lp = LinearLoop::combined(time_constant, gain_kv, gain_kp, d, tau);
            lp.validate()?;
            out.push(FrozenPoint {
                overall_delay: d,
                tau,
                spectral_abscissa: lp.spectral_abscissa(),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::TUNED_KP;
    use crate::control::characteristic_polynomial;
    use proptest::prelude::*;

    const T: f64 = 0.3;
    const KV: f64 = 5.0 / 6.0;

    #[test]
    fn pure_velocity_loop_delay_is_inverse_gain() {
        let d = delay_measure(&LinearLoop::pure_velocity(T, KV, 0.0), 30.0).unwrap();
        assert!((d - 1.2).abs() < 1e-6, "{d}");
    }

    #[test]
    fn communication_delay_adds_to_pure_velocity_loop() {
        let d = delay_measure(&LinearLoop::pure_velocity(T, KV, 0.35), 30.0).unwrap();
        assert!((d - 1.55).abs() < 1e-6, "{d}");
    }

    #[test]
    fn stiff_tracker_has_near_zero_delay() {
        let d =
            delay_measure_with_step(&LinearLoop::pure_velocity(T, 1000.0, 0.0), 5.0, 1e-4).unwrap();
        assert!(d.abs() < 2e-3, "{d}");
    }

    #[test]
    fn combined_loop_delay_equals_feedback_factor() {
        for kp in [0.05, TUNED_KP, 3.0] {
            for tau in [0.0, 0.3] {
                let d = delay_measure(&LinearLoop::combined(T, KV, kp, 1.5, tau), 30.0).unwrap();
                assert!((d - 1.5).abs() < 1e-4, "kp {kp} tau {tau}: {d}");
            }
        }
    }

    #[test]
    fn unstable_loop_is_rejected() {
        let lp = LinearLoop::combined(T, KV, -0.1, 1.5, 0.0);
        assert!(matches!(
            delay_measure(&lp, 30.0),
            Err(Error::Unstable { .. })
        ));
        assert!(external_positivity_check(&lp, 30.0, 1e-6).is_err());
        let marginal = LinearLoop::combined(T, KV, 0.0, 1.5, 0.0);
        assert!(delay_measure(&marginal, 30.0).is_err());
    }

    #[test]
    fn lag_velocity_loop_is_positive() {
        let lp = LinearLoop::pure_velocity(T, KV, 0.0);
        assert!(external_positivity_check(&lp, 30.0, DEFAULT_EPSILON).unwrap());
        // Above critical damping the response overshoots.
        let fast = LinearLoop::pure_velocity(T, 4.0 * KV, 0.0);
        assert!(!external_positivity_check(&fast, 30.0, DEFAULT_EPSILON).unwrap());
    }

    #[test]
    fn tuned_gain_is_positive_without_delay() {
        for d in [1.2, 1.8] {
            let lp = LinearLoop::combined(T, KV, TUNED_KP, d, 0.0);
            assert!(external_positivity_check(&lp, 30.0, DEFAULT_EPSILON).unwrap());
        }
    }

    #[test]
    fn positivity_verdict_is_stable_under_refinement() {
        for (d, tau) in [(1.2, 0.0), (1.5, 0.3), (1.8, 0.6)] {
            let lp = LinearLoop::combined(T, KV, TUNED_KP, d, tau);
            let coarse =
                external_positivity_check_with_step(&lp, 30.0, DEFAULT_EPSILON, 1e-3).unwrap();
            let fine =
                external_positivity_check_with_step(&lp, 30.0, DEFAULT_EPSILON, 2.5e-4).unwrap();
            assert_eq!(coarse, fine, "Δ̂ {d} τ {tau}");
        }
    }

    #[test]
    fn step_response_switches_at_the_delay() {
        let r = step_response(&LinearLoop::pure_velocity(T, KV, 0.25), 1.0, 0.1).unwrap();
        for &(t, v) in &r {
            if t <= 0.25 + 1e-12 {
                assert_eq!(v, 0.0);
            }
        }
        assert!(r.iter().any(|&(t, _)| (t - 0.25).abs() < 1e-12));
        assert!((r.last().unwrap().0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matrix_matches_characteristic_polynomial() {
        let lp = LinearLoop::combined(T, KV, 0.4, 1.3, 0.0);
        let m = lp.system_matrix();
        let [c2, c1, c0] = characteristic_polynomial(T, KV, 0.4, 1.3);
        assert!((m.trace() + c2).abs() < 1e-12);
        assert!((m.determinant() + c0).abs() < 1e-12);
        // Sum of principal 2×2 minors.
        let minors = (0..3)
            .map(|k| {
                let (i, j) = ((k + 1) % 3, (k + 2) % 3);
                m[(i, i)] * m[(j, j)] - m[(i, j)] * m[(j, i)]
            })
            .sum::<f64>();
        assert!((minors - c1).abs() < 1e-12);
    }

    #[test]
    fn frozen_grid_flags_unstable_gains() {
        let g = frozen_stability_grid(T, KV, TUNED_KP, &[1.2, 1.8], &[0.0, 0.6]).unwrap();
        assert_eq!(g.len(), 4);
        assert!(g.iter().all(FrozenPoint::is_stable));
        let bad = frozen_stability_grid(T, KV, -TUNED_KP, &[1.2], &[0.0]).unwrap();
        assert!(!bad[0].is_stable());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        // For N(0) = D(0) the integral of 1 − N/D is (d1 − n1)/d0.
        #[test]
        fn quadrature_matches_final_value(
            tc in 0.1f64..1.0,
            kv in 0.2f64..3.0,
            kp in 0.05f64..2.0,
            delta in 0.5f64..3.0,
        ) {
            let lp = LinearLoop::combined(tc, kv, kp, delta, 0.0);
            prop_assume!(lp.spectral_abscissa() < -0.02);
            let (n1, d1, d0) = (kv, kv + kp * delta, kp);
            let oracle = (d1 - n1) / d0;
            let got = delay_measure(&lp, 50.0).unwrap();
            prop_assert!((got - oracle).abs() < 1e-4, "{got} vs {oracle}");
        }

        #[test]
        fn pure_loop_final_value(tc in 0.1f64..1.0, kv in 0.2f64..2.0, tau in 0.0f64..0.8) {
            let lp = LinearLoop::pure_velocity(tc, kv, tau);
            let got = delay_measure(&lp, 50.0).unwrap();
            prop_assert!((got - (1.0 / kv + tau)).abs() < 1e-4);
        }
    }
}
