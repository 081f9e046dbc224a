//! Fixed-step platoon simulation.
//!
//! All vehicles are integrated together as one ODE with RK4. A follower
//! measures its own gap by radar and receives every upstream velocity and
//! gap through a delayed channel. Each step runs:
//!
//! 1. poll channels and refresh the held remote signals,
//! 2. measure the delay and adapt headway and communication structure,
//! 3. record the trace row,
//! 4. integrate over `[t, t + dt]`, evaluating the control law at every stage,
//! 5. send telemetry stamped with the new time.

use crate::control::{follower_law, leader_control};
use crate::coordination::{HeadwayAdapter, TopologyAssignment};
use crate::dynamics::Rk4;
use crate::network::{Channel, DelayMonitor, Delivered, HeldSignal, Message, Payload, Sample};
use crate::{Error, Result};

use super::scenario::{InitialCondition, LeaderMode, Scenario};
use super::trace::{Trace, TraceRow, VehicleSample};

/// States per vehicle: lag, velocity, shifted position and the integrated
/// virtual distance used as a cross-check.
const STRIDE: usize = 4;
const LAG: usize = 0;
const VEL: usize = 1;
const POS: usize = 2;
const INTEGRATED: usize = 3;

/// Any state beyond this magnitude aborts the run.
pub const DIVERGENCE_BOUND: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadwayEvent {
    pub time: f64,
    pub vehicle: usize,
    pub from: f64,
    pub to: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TopologyEvent {
    pub time: f64,
    pub assignment: TopologyAssignment,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    /// Per trace row and vehicle: `|∫(v_s − v) dt + Σw − d̃_s|`, where the
    /// integral uses the undelayed velocities, `w` the jumps caused by
    /// weight changes and `d̃_s` is assembled from the true gaps.
    pub identity_residual: Vec<Vec<f64>>,
    pub headway_events: Vec<HeadwayEvent>,
    pub topology_events: Vec<TopologyEvent>,
    pub messages_sent: u64,
    pub messages_dropped: u64,
}

impl Diagnostics {
    pub fn max_identity_residual(&self) -> f64 {
        self.identity_residual
            .iter()
            .flatten()
            .copied()
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: Trace,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone)]
struct Follower {
    /// `channels[j]` carries messages from vehicle `j < i`.
    channels: Vec<Channel>,
    velocity: Vec<HeldSignal>,
    /// Entry 0 is unused; the leader has no gap.
    distance: Vec<HeldSignal>,
    /// Last known `β_1..β_{i−1}`.
    betas_ahead: Vec<f64>,
    monitor: DelayMonitor,
    adapter: HeadwayAdapter,
    tau: f64,
}

/// Stepwise simulation of one scenario.
#[derive(Debug, Clone)]
pub struct Simulation {
    scenario: Scenario,
    n: usize,
    dt: f64,
    steps: usize,
    stride: usize,
    k: usize,
    x: Vec<f64>,
    dx: Vec<f64>,
    rk: Rk4,
    followers: Vec<Follower>,
    inbox: Vec<Delivered>,
    trace: Trace,
    diagnostics: Diagnostics,
}

fn gap(x: &[f64], i: usize) -> f64 {
    x[STRIDE * (i - 1) + POS] - x[STRIDE * i + POS]
}

/// Virtual-predecessor velocity and distance from the true, undelayed states.
fn true_virtual(a: &TopologyAssignment, x: &[f64]) -> (f64, f64) {
    let l = a.lookahead_index;
    let v = |j: usize| x[STRIDE * j + VEL];
    let vs = a.weight_l * v(l) + a.weight_l_minus_1 * v(l - 1);
    let tail: f64 = (l + 1..=a.vehicle).map(|j| gap(x, j)).sum();
    (vs, tail + a.weight_l_minus_1 * gap(x, l))
}

impl Follower {
    /// Virtual-predecessor velocity and distance as seen by vehicle `i`.
    fn perceived(&self, i: usize, x: &[f64], t: f64) -> (f64, f64) {
        let a = &self.adapter.assignment;
        let l = a.lookahead_index;
        let vel = |j: usize| {
            if j == i {
                x[STRIDE * i + VEL]
            } else {
                self.velocity[j].value_at(t)
            }
        };
        let dist = |j: usize| {
            if j == i {
                gap(x, i)
            } else {
                self.distance[j].value_at(t)
            }
        };
        let vs = a.weight_l * vel(l) + a.weight_l_minus_1 * vel(l - 1);
        let tail: f64 = (l + 1..=i).map(dist).sum();
        (vs, tail + a.weight_l_minus_1 * dist(l))
    }
}

impl Simulation {
    pub fn new(scenario: &Scenario) -> Result<Self> {
        scenario.validate()?;
        let s = scenario.clone();
        let n = s.n_vehicles();
        let dt = s.dt;
        let stride = s.telemetry_stride();
        let horizon = stride as f64 * dt;

        let mut followers: Vec<Follower> = Vec::with_capacity(n - 1);
        let mut betas = Vec::with_capacity(n - 1);
        for i in 1..n {
            let cfg = &s.vehicles[i];
            let tau = cfg.delay.tau_at(0.0);
            let mut monitor = DelayMonitor::new(s.monitor, s.tau_max);
            let measured = monitor.measure(0.0, tau)?;
            let adapter = HeadwayAdapter::new(
                i,
                cfg.params.headway_desired,
                cfg.params.vehicle_delay(),
                measured,
                &betas,
                s.lookahead,
                s.headway_dwell,
            )?;
            followers.push(Follower {
                channels: (0..i).map(|_| Channel::new(cfg.delay.clone())).collect(),
                velocity: Vec::new(),
                distance: Vec::new(),
                betas_ahead: betas.clone(),
                monitor,
                tau,
                adapter,
            });
            betas.push(followers[i - 1].adapter.state.beta_current);
        }

        let mut x = vec![0.0; STRIDE * n];
        let v_ref0 = s.leader.reference_at(0.0);
        match &s.initial {
            InitialCondition::Equilibrium { velocity } => {
                let v0 = velocity.unwrap_or(v_ref0);
                for i in 0..n {
                    x[STRIDE * i + VEL] = v0;
                    if i > 0 {
                        x[STRIDE * i + POS] = x[STRIDE * (i - 1) + POS] - betas[i - 1] * v0;
                    }
                }
            }
            InitialCondition::ColdStart { gaps } => {
                for i in 1..n {
                    x[STRIDE * i + POS] = x[STRIDE * (i - 1) + POS] - gaps[i - 1];
                }
                if s.leader.mode == LeaderMode::Prescribed {
                    x[VEL] = v_ref0;
                }
            }
        }
        for (k, f) in followers.iter().enumerate() {
            let i = k + 1;
            x[STRIDE * i + INTEGRATED] = true_virtual(&f.adapter.assignment, &x).1;
        }

        let mut sim = Self {
            n,
            dt,
            steps: s.steps(),
            stride,
            k: 0,
            dx: vec![0.0; x.len()],
            rk: Rk4::new(x.len()),
            x,
            followers,
            inbox: Vec::new(),
            trace: Trace::new(n),
            diagnostics: Diagnostics::default(),
            scenario: s,
        };

        // Remote signals before the first delivery are taken as constant at
        // their initial values.
        for f in &mut sim.followers {
            let i = f.channels.len();
            let x = &sim.x;
            f.velocity = (0..i)
                .map(|j| HeldSignal::new(Sample::constant(x[STRIDE * j + VEL]), 0.0, horizon))
                .collect();
            f.distance = (0..i)
                .map(|j| {
                    HeldSignal::new(
                        Sample::constant(if j == 0 { 0.0 } else { gap(x, j) }),
                        0.0,
                        horizon,
                    )
                })
                .collect();
        }
        let samples = sim.telemetry_samples(0.0);
        for f in &mut sim.followers {
            let i = f.channels.len();
            f.velocity = (0..i)
                .map(|j| HeldSignal::new(samples[j].0, 0.0, horizon))
                .collect();
            f.distance = (0..i)
                .map(|j| HeldSignal::new(samples[j].1, 0.0, horizon))
                .collect();
        }
        sim.send_telemetry(0.0)?;
        Ok(sim)
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn time(&self) -> f64 {
        self.k as f64 * self.dt
    }

    pub fn is_finished(&self) -> bool {
        self.trace.rows.len() > self.steps
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn diagnostics(&self) -> &Diagnostics {
        &self.diagnostics
    }

    /// Current `(a, v, s̃)` of vehicle `i`.
    pub fn vehicle_state(&self, i: usize) -> [f64; 3] {
        let b = STRIDE * i;
        [self.x[b + LAG], self.x[b + VEL], self.x[b + POS]]
    }

    /// Runs one step. Returns `false` once the final row has been recorded.
    pub fn advance(&mut self) -> Result<bool> {
        if self.is_finished() {
            return Ok(false);
        }
        let t = self.time();
        self.receive(t)?;
        self.adapt(t)?;
        self.record(t);
        if self.k == self.steps {
            return Ok(false);
        }
        self.integrate(t);
        self.k += 1;
        let t_next = self.time();
        self.apply_limits(t_next);
        self.check_divergence(t_next)?;
        if self.k.is_multiple_of(self.stride) {
            self.send_telemetry(t_next)?;
        }
        Ok(true)
    }

    pub fn run(mut self) -> Result<RunOutput> {
        while self.advance()? {}
        let mut diagnostics = self.diagnostics;
        for f in &self.followers {
            for c in &f.channels {
                diagnostics.messages_sent += c.sent();
                diagnostics.messages_dropped += c.dropped();
            }
        }
        Ok(RunOutput {
            trace: self.trace,
            diagnostics,
        })
    }

    fn receive(&mut self, t: f64) -> Result<()> {
        for f in &mut self.followers {
            for (j, ch) in f.channels.iter_mut().enumerate() {
                self.inbox.clear();
                ch.poll_into(t, &mut self.inbox);
                for d in &self.inbox {
                    match d.message.payload {
                        Payload::Velocity(s) => {
                            f.velocity[j].update(s, d.delivery_time);
                            f.monitor.record(d.message.send_time, d.delivery_time);
                        }
                        Payload::ReducedDistance(s) => {
                            f.distance[j].update(s, d.delivery_time);
                        }
                        Payload::HeadwayChange { beta, .. } => {
                            if j == 0 {
                                return Err(Error::Validation(
                                    "the leader has no time headway".into(),
                                ));
                            }
                            f.betas_ahead[j - 1] = beta;
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn adapt(&mut self, t: f64) -> Result<()> {
        for k in 0..self.followers.len() {
            let i = k + 1;
            let f = &mut self.followers[k];
            f.tau = self.scenario.vehicles[i].delay.tau_at(t);
            let measured = f.monitor.measure(t, f.tau)?;
            let before = f.adapter.assignment;
            let beta_before = f.adapter.state.beta_current;
            let changed = f.adapter.update(t, measured, &f.betas_ahead)?;
            let after = f.adapter.assignment;
            if after != before {
                // A jump of the weights is an impulse in the distance dynamics.
                let jump = true_virtual(&after, &self.x).1 - true_virtual(&before, &self.x).1;
                self.x[STRIDE * i + INTEGRATED] += jump;
                self.diagnostics.topology_events.push(TopologyEvent {
                    time: t,
                    assignment: after,
                });
            }
            if changed {
                let beta = f.adapter.state.beta_current;
                self.diagnostics.headway_events.push(HeadwayEvent {
                    time: t,
                    vehicle: i,
                    from: beta_before,
                    to: beta,
                });
                let msg = Message {
                    sender: i,
                    send_time: t,
                    payload: Payload::HeadwayChange {
                        beta,
                        effective_time: t,
                    },
                };
                for m in self.followers.iter_mut().skip(i) {
                    m.channels[i].send(msg)?;
                }
            }
        }
        Ok(())
    }

    fn record(&mut self, t: f64) {
        let x = &self.x;
        let mut vehicles = Vec::with_capacity(self.n);
        vehicles.push(VehicleSample {
            velocity: x[VEL],
            ..VehicleSample::default()
        });
        let mut residual = vec![0.0; self.n];
        for (k, f) in self.followers.iter().enumerate() {
            let i = k + 1;
            let a = &f.adapter.assignment;
            let (_, ds) = f.perceived(i, x, t);
            residual[i] = (x[STRIDE * i + INTEGRATED] - true_virtual(a, x).1).abs();
            vehicles.push(VehicleSample {
                velocity: x[STRIDE * i + VEL],
                distance: gap(x, i),
                virtual_distance: ds,
                beta: f.adapter.state.beta_current,
                overall_delay: f.adapter.state.overall_delay,
                tau: f.tau,
                lookahead_index: a.lookahead_index,
                weight_l_minus_1: a.weight_l_minus_1,
            });
        }
        self.trace.rows.push(TraceRow { time: t, vehicles });
        self.diagnostics.identity_residual.push(residual);
    }

    fn integrate(&mut self, t: f64) {
        let v_ref = self.scenario.leader.reference_at(t);
        let rhs = Rhs {
            scenario: &self.scenario,
            followers: &self.followers,
            v_ref,
        };
        if self.scenario.leader.mode == LeaderMode::Prescribed {
            self.x[LAG] = 0.0;
            self.x[VEL] = v_ref;
        }
        self.rk
            .step(&mut self.x, t, self.dt, |t, x, dx| rhs.eval(t, x, dx));
    }

    fn apply_limits(&mut self, t: f64) {
        if self.scenario.leader.mode == LeaderMode::Prescribed {
            self.x[LAG] = 0.0;
            self.x[VEL] = self.scenario.leader.reference_at(t);
        }
        if self.scenario.limits.nonnegative_velocity {
            for i in 0..self.n {
                let b = STRIDE * i;
                if self.x[b + VEL] < 0.0 {
                    self.x[b + VEL] = 0.0;
                    self.x[b + LAG] = self.x[b + LAG].max(0.0);
                }
            }
        }
    }

    fn check_divergence(&self, t: f64) -> Result<()> {
        const NAMES: [&str; STRIDE] = ["lag state", "velocity", "position", "virtual distance"];
        for (idx, &v) in self.x.iter().enumerate() {
            if !v.is_finite() || v.abs() > DIVERGENCE_BOUND {
                return Err(Error::Divergence {
                    time: t,
                    vehicle: idx / STRIDE,
                    quantity: NAMES[idx % STRIDE],
                    value: v,
                });
            }
        }
        Ok(())
    }

    /// Velocity and gap samples of every vehicle with their derivatives at `t`.
    fn telemetry_samples(&mut self, t: f64) -> Vec<(Sample, Sample)> {
        let rhs = Rhs {
            scenario: &self.scenario,
            followers: &self.followers,
            v_ref: self.scenario.leader.reference_at(t),
        };
        rhs.eval(t, &self.x, &mut self.dx);
        let (x, dx) = (&self.x, &self.dx);
        (0..self.n)
            .map(|j| {
                let b = STRIDE * j;
                let vel = Sample {
                    value: x[b + VEL],
                    rate: dx[b + VEL],
                    rate_change: dx[b + LAG],
                };
                let dist = if j == 0 {
                    Sample::default()
                } else {
                    let p = b - STRIDE;
                    Sample {
                        value: gap(x, j),
                        rate: dx[p + POS] - dx[b + POS],
                        rate_change: dx[p + VEL] - dx[b + VEL],
                    }
                };
                (vel, dist)
            })
            .collect()
    }

    fn send_telemetry(&mut self, t: f64) -> Result<()> {
        let samples = self.telemetry_samples(t);
        for f in &mut self.followers {
            for (j, ch) in f.channels.iter_mut().enumerate() {
                ch.send(Message {
                    sender: j,
                    send_time: t,
                    payload: Payload::Velocity(samples[j].0),
                })?;
                if j > 0 {
                    ch.send(Message {
                        sender: j,
                        send_time: t,
                        payload: Payload::ReducedDistance(samples[j].1),
                    })?;
                }
            }
        }
        Ok(())
    }
}

struct Rhs<'a> {
    scenario: &'a Scenario,
    followers: &'a [Follower],
    v_ref: f64,
}

impl Rhs<'_> {
    fn eval(&self, t: f64, x: &[f64], dx: &mut [f64]) {
        let s = self.scenario;
        let clamp = |u: f64| match s.limits.max_abs_control {
            Some(m) => u.clamp(-m, m),
            None => u,
        };
        match s.leader.mode {
            LeaderMode::Controlled => {
                let p = &s.vehicles[0].params;
                let u = clamp(leader_control(x[VEL], self.v_ref, p.gain_kv));
                dx[LAG] = (u - x[LAG]) / p.time_constant;
                dx[VEL] = x[LAG];
                dx[POS] = x[VEL];
            }
            LeaderMode::Prescribed => {
                dx[LAG] = 0.0;
                dx[VEL] = 0.0;
                dx[POS] = self.v_ref;
            }
        }
        dx[INTEGRATED] = 0.0;
        for (k, f) in self.followers.iter().enumerate() {
            let i = k + 1;
            let b = STRIDE * i;
            let p = &s.vehicles[i].params;
            let (vs, ds) = f.perceived(i, x, t);
            let u = clamp(follower_law(
                x[b + VEL],
                vs,
                ds,
                f.adapter.state.overall_delay,
                p.gain_kv,
                p.gain_kp,
            ));
            dx[b + LAG] = (u - x[b + LAG]) / p.time_constant;
            dx[b + VEL] = x[b + LAG];
            dx[b + POS] = x[b + VEL];
            dx[b + INTEGRATED] = true_virtual(&f.adapter.assignment, x).0 - x[b + VEL];
        }
    }
}

/// Runs `scenario` to completion and returns its trace.
pub fn run_scenario(scenario: &Scenario) -> Result<Trace> {
    Ok(Simulation::new(scenario)?.run()?.trace)
}

/// Like [`run_scenario`] but also returns run diagnostics.
pub fn simulate(scenario: &Scenario) -> Result<RunOutput> {
    Simulation::new(scenario)?.run()
}
