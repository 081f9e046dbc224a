//! Communication-structure design and online time-headway adaptation.
//!
//! Vehicle `i` follows a virtual predecessor whose velocity is the weighted
//! sum `v_s = â_l v_l + â_{l−1} v_{l−1}` of two upstream vehicles. The
//! look-ahead index `l` is chosen so that
//!
//! ```text
//! 0 ≤ Σ_{j=l}^{i} β_j − Δ̂_i ≤ β_l
//! ```
//!
//! holds. When no index satisfies it at the current headway, the vehicle
//! enlarges its own headway `β_i` to the smallest feasible value and tells the
//! vehicles behind it.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, invalid, Error, Result};

/// Slack used when testing the look-ahead condition against rounding.
const CONDITION_SLACK: f64 = 1e-12;

/// How far ahead a vehicle may take its virtual predecessor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "vehicles")]
pub enum Lookahead {
    /// Any `l_i ∈ 1..=i`.
    #[default]
    Unlimited,
    /// At most `n ≥ 1` vehicles ahead take part in `v_s`, i.e. `l_i ≥ i − n + 1`.
    Limited(usize),
}

impl Lookahead {
    /// Smallest admissible look-ahead index for vehicle `i`.
    pub fn min_index(self, i: usize) -> usize {
        match self {
            Lookahead::Unlimited => 1,
            Lookahead::Limited(n) => (i + 1).saturating_sub(n.max(1)).max(1),
        }
    }
}

/// Look-ahead index and the two non-zero weights of the virtual predecessor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopologyAssignment {
    pub vehicle: usize,
    /// `l_i`.
    pub lookahead_index: usize,
    /// `â_{i,l}`.
    pub weight_l: f64,
    /// `â_{i,l−1}`.
    pub weight_l_minus_1: f64,
}

impl TopologyAssignment {
    /// The fixed ACC assignment of the first follower, `â_{1,0} = 1`.
    pub fn first_follower() -> Self {
        Self {
            vehicle: 1,
            lookahead_index: 1,
            weight_l: 0.0,
            weight_l_minus_1: 1.0,
        }
    }

    /// Weight of vehicle `j` in the virtual predecessor's velocity.
    pub fn weight_of(&self, j: usize) -> f64 {
        if j == self.lookahead_index {
            self.weight_l
        } else if j + 1 == self.lookahead_index {
            self.weight_l_minus_1
        } else {
            0.0
        }
    }

    /// Indices of upstream vehicles whose reduced distances enter `d̃_s`.
    pub fn distance_indices(&self) -> std::ops::RangeInclusive<usize> {
        self.lookahead_index..=self.vehicle
    }
}

/// Result of [`design_topology`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TopologyOutcome {
    Assigned(TopologyAssignment),
    /// No admissible `l_i` exists at the given `β_i`.
    Infeasible {
        min_required_beta: f64,
    },
}

impl TopologyOutcome {
    pub fn assignment(&self) -> Option<TopologyAssignment> {
        match self {
            TopologyOutcome::Assigned(a) => Some(*a),
            TopologyOutcome::Infeasible { .. } => None,
        }
    }
}

fn check_headways(betas: &[f64], overall_delay: f64) -> Result<()> {
    ensure_finite(overall_delay, "overall delay")?;
    if overall_delay <= 0.0 {
        return Err(invalid("overall_delay", "must be > 0"));
    }
    for &b in betas {
        ensure_finite(b, "time headway")?;
        if b <= 0.0 {
            return Err(invalid("betas", "all time headways must be > 0"));
        }
    }
    Ok(())
}

/// Chooses `l_i` and the weights for vehicle `i`.
///
/// `betas` holds `β_1..=β_i` (index 0 is vehicle 1). The largest admissible
/// `l_i` wins, which keeps the set of vehicles whose distances must be
/// communicated as small as possible.
pub fn design_topology(
    vehicle: usize,
    overall_delay: f64,
    betas: &[f64],
    lookahead: Lookahead,
) -> Result<TopologyOutcome> {
    if vehicle == 0 {
        return Err(invalid("vehicle", "the leader has no virtual predecessor"));
    }
    if betas.len() != vehicle {
        return Err(invalid(
            "betas",
            format!("expected {vehicle} headways, got {}", betas.len()),
        ));
    }
    check_headways(betas, overall_delay)?;
    if vehicle == 1 {
        return Ok(TopologyOutcome::Assigned(
            TopologyAssignment::first_follower(),
        ));
    }

    let beta = |j: usize| betas[j - 1];
    // tail = Σ_{j=l+1}^{i} β_j while walking l downwards.
    let mut tail = 0.0;
    for l in (lookahead.min_index(vehicle)..=vehicle).rev() {
        let sum = tail + beta(l);
        let excess = sum - overall_delay;
        if excess >= -CONDITION_SLACK && excess <= beta(l) + CONDITION_SLACK {
            // â_{l−1} = (Δ̂ − Σ_{j=l+1}^{i} β_j)/β_l, â_l = 1 − â_{l−1}.
            let prev = ((overall_delay - tail) / beta(l)).clamp(0.0, 1.0);
            return Ok(TopologyOutcome::Assigned(TopologyAssignment {
                vehicle,
                lookahead_index: l,
                weight_l: 1.0 - prev,
                weight_l_minus_1: prev,
            }));
        }
        tail = sum;
    }
    let (ahead, _) = betas.split_at(vehicle - 1);
    Ok(TopologyOutcome::Infeasible {
        min_required_beta: min_beta_unchecked(
            vehicle,
            overall_delay,
            ahead,
            betas[vehicle - 1],
            lookahead,
        ),
    })
}

/// Smallest `β_i ≥ beta_desired` for which [`design_topology`] succeeds.
///
/// `betas_ahead` holds `β_1..β_{i−1}`. The first follower runs plain ACC and
/// its headway must equal the overall delay.
pub fn minimal_feasible_beta(
    vehicle: usize,
    overall_delay: f64,
    betas_ahead: &[f64],
    beta_desired: f64,
    lookahead: Lookahead,
) -> Result<f64> {
    if vehicle == 0 {
        return Err(invalid("vehicle", "the leader has no time headway"));
    }
    if betas_ahead.len() + 1 != vehicle {
        return Err(invalid(
            "betas_ahead",
            format!(
                "expected {} headways, got {}",
                vehicle - 1,
                betas_ahead.len()
            ),
        ));
    }
    check_headways(betas_ahead, overall_delay)?;
    ensure_finite(beta_desired, "desired headway")?;
    if beta_desired <= 0.0 {
        return Err(invalid("beta_desired", "must be > 0"));
    }
    Ok(min_beta_unchecked(
        vehicle,
        overall_delay,
        betas_ahead,
        beta_desired,
        lookahead,
    ))
}

fn min_beta_unchecked(
    vehicle: usize,
    overall_delay: f64,
    betas_ahead: &[f64],
    beta_desired: f64,
    lookahead: Lookahead,
) -> f64 {
    if vehicle == 1 {
        return overall_delay;
    }
    // For l < i the condition confines β_i to
    // [Δ̂ − Σ_{j=l}^{i−1} β_j, Δ̂ − Σ_{j=l+1}^{i−1} β_j]; l = i needs β_i ≥ Δ̂.
    let mut best = beta_desired.max(overall_delay);
    let mut upper_tail = 0.0; // Σ_{j=l+1}^{i−1} β_j
    for l in (lookahead.min_index(vehicle)..vehicle).rev() {
        let lower_tail = upper_tail + betas_ahead[l - 1];
        let hi = overall_delay - upper_tail;
        let lo = overall_delay - lower_tail;
        if hi + CONDITION_SLACK >= beta_desired {
            best = best.min(lo.max(beta_desired));
        }
        upper_tail = lower_tail;
    }
    best
}

/// Reduced distance to the virtual predecessor,
/// `d̃_s = Σ_{j=l+1}^{i} d̃_j + â_{l−1} d̃_l`.
///
/// `distances` must hold `d̃_l..=d̃_i` and `first_index` names the vehicle of
/// `distances[0]`.
pub fn virtual_distance(
    assignment: &TopologyAssignment,
    first_index: usize,
    distances: &[f64],
) -> Result<f64> {
    let (l, i) = (assignment.lookahead_index, assignment.vehicle);
    let last = (first_index + distances.len()).wrapping_sub(1);
    if first_index != l || distances.is_empty() || last != i {
        return Err(Error::IndexMismatch {
            got_from: first_index,
            got_to: last,
            want_from: l,
            want_to: i,
        });
    }
    let tail: f64 = distances[1..].iter().sum();
    Ok(tail + assignment.weight_l_minus_1 * distances[0])
}

/// Online headway state of one follower.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadwayState {
    /// `β_i(t)`.
    pub beta_current: f64,
    pub beta_desired: f64,
    /// `Δ̂_i(t)`.
    pub overall_delay: f64,
}

/// Outcome of one adaptation step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adaptation {
    pub state: HeadwayState,
    pub assignment: TopologyAssignment,
    /// `β_i` changed and the vehicles behind must be told.
    pub notify_downstream: bool,
}

/// One pass of the monitor-and-adapt loop for vehicle `i`.
///
/// Sets `Δ̂ = Δ + τ`, moves `β_i` to the smallest feasible headway not below
/// the desired one and recomputes the communication structure. Weight changes
/// alone do not trigger a notification.
pub fn adapt_step(
    vehicle: usize,
    state: &HeadwayState,
    measured_tau: f64,
    betas_ahead: &[f64],
    vehicle_delay: f64,
    lookahead: Lookahead,
) -> Result<Adaptation> {
    ensure_finite(measured_tau, "measured delay")?;
    if measured_tau < 0.0 {
        return Err(invalid("measured_tau", "must be >= 0"));
    }
    let overall_delay = vehicle_delay + measured_tau;
    let target = minimal_feasible_beta(
        vehicle,
        overall_delay,
        betas_ahead,
        state.beta_desired,
        lookahead,
    )?;
    finish_adaptation(
        vehicle,
        state,
        overall_delay,
        target,
        betas_ahead,
        lookahead,
    )
}

fn finish_adaptation(
    vehicle: usize,
    state: &HeadwayState,
    overall_delay: f64,
    beta: f64,
    betas_ahead: &[f64],
    lookahead: Lookahead,
) -> Result<Adaptation> {
    let mut betas = betas_ahead.to_vec();
    betas.push(beta);
    let assignment = design_topology(vehicle, overall_delay, &betas, lookahead)?
        .assignment()
        .ok_or_else(|| {
            invalid(
                "beta",
                format!("headway {beta} is infeasible for vehicle {vehicle}"),
            )
        })?;
    Ok(Adaptation {
        state: HeadwayState {
            beta_current: beta,
            beta_desired: state.beta_desired,
            overall_delay,
        },
        assignment,
        notify_downstream: beta != state.beta_current,
    })
}

/// [`adapt_step`] with hysteresis on headway decreases.
///
/// Increases take effect immediately. A decrease is applied only once the
/// smaller headway has been feasible without interruption for `dwell` seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadwayAdapter {
    pub vehicle: usize,
    pub state: HeadwayState,
    pub assignment: TopologyAssignment,
    pub vehicle_delay: f64,
    pub lookahead: Lookahead,
    pub dwell: f64,
    lower_since: Option<f64>,
}

impl HeadwayAdapter {
    /// Initial adaptation at `t = 0`; the dwell does not apply.
    pub fn new(
        vehicle: usize,
        beta_desired: f64,
        vehicle_delay: f64,
        initial_tau: f64,
        betas_ahead: &[f64],
        lookahead: Lookahead,
        dwell: f64,
    ) -> Result<Self> {
        let seed = HeadwayState {
            beta_current: beta_desired,
            beta_desired,
            overall_delay: vehicle_delay + initial_tau,
        };
        let a = adapt_step(
            vehicle,
            &seed,
            initial_tau,
            betas_ahead,
            vehicle_delay,
            lookahead,
        )?;
        Ok(Self {
            vehicle,
            state: a.state,
            assignment: a.assignment,
            vehicle_delay,
            lookahead,
            dwell,
            lower_since: None,
        })
    }

    /// Returns `true` when `β_i` changed.
    pub fn update(&mut self, now: f64, measured_tau: f64, betas_ahead: &[f64]) -> Result<bool> {
        ensure_finite(measured_tau, "measured delay")?;
        if measured_tau < 0.0 {
            return Err(invalid("measured_tau", "must be >= 0"));
        }
        let overall_delay = self.vehicle_delay + measured_tau;
        let target = minimal_feasible_beta(
            self.vehicle,
            overall_delay,
            betas_ahead,
            self.state.beta_desired,
            self.lookahead,
        )?;
        let current = self.state.beta_current;
        let beta = if target >= current {
            self.lower_since = None;
            target
        } else {
            let since = *self.lower_since.get_or_insert(now);
            if now - since >= self.dwell - 1e-9 {
                self.lower_since = None;
                target
            } else {
                current
            }
        };
        let a = finish_adaptation(
            self.vehicle,
            &self.state,
            overall_delay,
            beta,
            betas_ahead,
            self.lookahead,
        )?;
        self.state = a.state;
        self.assignment = a.assignment;
        Ok(a.notify_downstream)
    }
}
