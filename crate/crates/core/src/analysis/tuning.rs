//! Distance-gain selection by a positivity sweep over operating points.

use serde::{Deserialize, Serialize};

use super::linear::{external_positivity_check_with_step, LinearLoop, DEFAULT_DT, DEFAULT_EPSILON};
use crate::error::{ensure_finite, invalid, Error, Result};

/// Smallest gain the search will return.
pub const KP_FLOOR: f64 = 1e-4;
/// Bisection stops once the bracket is this narrow.
pub const KP_RESOLUTION: f64 = 1e-4;
/// Upper end of the bracket search.
pub const KP_CEILING: f64 = 1e3;
/// Step-response horizon of each positivity check.
pub const SWEEP_HORIZON: f64 = 30.0;

/// A frozen `(Δ̂, τ)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub overall_delay: f64,
    pub tau: f64,
}

/// Which `(Δ̂, τ)` pairs the sweep covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridPolicy {
    /// Every grid delay with both range endpoints.
    Full,
    /// Only pairs that can occur, i.e. `Δ̂ ≥ 1/k_v + τ`: the range endpoints
    /// that satisfy it plus the point `Δ̂ = 1/k_v + τ` itself.
    #[default]
    Reachable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuningProblem {
    pub time_constant: f64,
    pub gain_kv: f64,
    pub overall_delay_min: f64,
    pub overall_delay_max: f64,
    pub tau_max: f64,
    pub grid_step: f64,
    pub policy: GridPolicy,
}

impl TuningProblem {
    pub fn validate(&self) -> Result<()> {
        for (v, what) in [
            (self.time_constant, "time constant"),
            (self.gain_kv, "k_v"),
            (self.overall_delay_min, "minimum overall delay"),
            (self.overall_delay_max, "maximum overall delay"),
            (self.tau_max, "tau_max"),
            (self.grid_step, "grid step"),
        ] {
            ensure_finite(v, what)?;
        }
        if self.time_constant <= 0.0 {
            return Err(invalid("time_constant", "must be > 0"));
        }
        if self.gain_kv <= 0.0 {
            return Err(invalid(
                "gain_kv",
                "a stabilizing velocity loop needs k_v > 0",
            ));
        }
        if self.overall_delay_min <= 0.0 || self.overall_delay_max < self.overall_delay_min {
            return Err(invalid("overall_delay", "need 0 < min <= max"));
        }
        if self.tau_max < 0.0 {
            return Err(invalid("tau_max", "must be >= 0"));
        }
        if self.grid_step <= 0.0 {
            return Err(invalid("grid_step", "must be > 0"));
        }
        Ok(())
    }

    /// `0, h, 2h, …` up to `tau_max`, always including `tau_max`.
    pub fn tau_grid(&self) -> Vec<f64> {
        let n = (self.tau_max / self.grid_step - 1e-9).ceil().max(0.0) as usize;
        let mut g: Vec<f64> = (0..n).map(|k| k as f64 * self.grid_step).collect();
        g.push(self.tau_max);
        g
    }

    pub fn operating_points(&self) -> Vec<OperatingPoint> {
        let vehicle_delay = 1.0 / self.gain_kv;
        let (lo, hi) = (self.overall_delay_min, self.overall_delay_max);
        let mut pts = Vec::new();
        for tau in self.tau_grid() {
            let mut push = |d: f64| {
                if !pts
                    .iter()
                    .any(|p: &OperatingPoint| p.tau == tau && (p.overall_delay - d).abs() < 1e-12)
                {
                    pts.push(OperatingPoint {
                        overall_delay: d,
                        tau,
                    });
                }
            };
            match self.policy {
                GridPolicy::Full => {
                    push(lo);
                    push(hi);
                }
                GridPolicy::Reachable => {
                    let floor = vehicle_delay + tau;
                    for d in [lo, hi] {
                        if d >= floor - 1e-9 {
                            push(d);
                        }
                    }
                    if floor >= lo - 1e-9 && floor <= hi + 1e-9 {
                        push(floor);
                    }
                }
            }
        }
        pts
    }

    pub fn loop_at(&self, kp: f64, p: &OperatingPoint) -> LinearLoop {
        LinearLoop::combined(self.time_constant, self.gain_kv, kp, p.overall_delay, p.tau)
    }
}

/// Stable and externally positive at every point.
pub fn gain_is_admissible(
    problem: &TuningProblem,
    kp: f64,
    points: &[OperatingPoint],
    dt: f64,
) -> Result<bool> {
    for p in points {
        let lp = problem.loop_at(kp, p);
        if !lp.is_stable() {
            return Ok(false);
        }
        if !external_positivity_check_with_step(&lp, SWEEP_HORIZON, DEFAULT_EPSILON, dt)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Largest `k_p` (to [`KP_RESOLUTION`]) admissible at every operating point.
pub fn tune(problem: &TuningProblem) -> Result<f64> {
    problem.validate()?;
    let points = problem.operating_points();
    let ok = |kp: f64| gain_is_admissible(problem, kp, &points, DEFAULT_DT);
    if !ok(KP_FLOOR)? {
        return Err(Error::NoFeasibleGain { floor: KP_FLOOR });
    }
    let mut lo = KP_FLOOR;
    let mut hi = 1.0;
    while ok(hi)? {
        lo = hi;
        if hi >= KP_CEILING {
            return Ok(hi);
        }
        hi = (hi * 2.0).min(KP_CEILING);
    }
    while hi - lo > KP_RESOLUTION {
        let mid = 0.5 * (lo + hi);
        if ok(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// [`tune`] over the reachable grid.
pub fn tune_kp(
    time_constant: f64,
    gain_kv: f64,
    overall_delay_range: (f64, f64),
    tau_max: f64,
    grid_step: f64,
) -> Result<f64> {
    tune(&TuningProblem {
        time_constant,
        gain_kv,
        overall_delay_min: overall_delay_range.0,
        overall_delay_max: overall_delay_range.1,
        tau_max,
        grid_step,
        policy: GridPolicy::Reachable,
    })
}
