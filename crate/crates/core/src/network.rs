//! Simulated V2V channels with time-varying delay.
//!
//! Every (sender, receiver) pair owns a FIFO [`Channel`]. A message sent at
//! `t` becomes deliverable at `t + τ(t)`, clamped so it never overtakes the
//! message before it. Receivers keep the latest sample of each remote signal
//! in a [`HeldSignal`].

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, invalid, Error, Result};

/// Tolerance for comparing simulation timestamps built from `k · dt`.
pub const TIME_EPS: f64 = 1e-9;

/// One breakpoint of a piecewise-constant delay schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayBreakpoint {
    #[serde(rename = "time_s")]
    pub time: f64,
    #[serde(rename = "tau_s")]
    pub tau: f64,
    /// Messages sent while this segment is active are lost.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub drop: bool,
}

/// Right-continuous piecewise-constant end-to-end delay `τ(t)`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DelayProfile {
    pub breakpoints: Vec<DelayBreakpoint>,
}

impl DelayProfile {
    pub fn constant(tau: f64) -> Self {
        Self::from_steps(&[(0.0, tau)])
    }

    pub fn from_steps(steps: &[(f64, f64)]) -> Self {
        Self {
            breakpoints: steps
                .iter()
                .map(|&(time, tau)| DelayBreakpoint {
                    time,
                    tau,
                    drop: false,
                })
                .collect(),
        }
    }

    pub fn validate(&self, tau_max: f64) -> Result<()> {
        let mut last = f64::NEG_INFINITY;
        for bp in &self.breakpoints {
            ensure_finite(bp.time, "delay breakpoint time")?;
            ensure_finite(bp.tau, "delay breakpoint tau")?;
            if bp.time <= last {
                return Err(invalid("breakpoints", "times must be strictly increasing"));
            }
            if bp.tau < 0.0 {
                return Err(invalid("tau_s", "must be >= 0"));
            }
            if bp.tau > tau_max + TIME_EPS {
                return Err(invalid(
                    "tau_s",
                    format!("{} exceeds tau_max = {tau_max}", bp.tau),
                ));
            }
            last = bp.time;
        }
        Ok(())
    }

    fn segment(&self, t: f64) -> Option<&DelayBreakpoint> {
        self.breakpoints
            .iter()
            .rev()
            .find(|bp| bp.time <= t + TIME_EPS)
    }

    /// Delay experienced by a message sent at `t`; zero before the first breakpoint.
    pub fn tau_at(&self, t: f64) -> f64 {
        self.segment(t).map_or(0.0, |bp| bp.tau)
    }

    pub fn drops_at(&self, t: f64) -> bool {
        self.segment(t).is_some_and(|bp| bp.drop)
    }

    pub fn max_tau(&self) -> f64 {
        self.breakpoints.iter().map(|bp| bp.tau).fold(0.0, f64::max)
    }
}

/// A sampled signal with its first two time derivatives at the sample instant.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Sample {
    pub value: f64,
    pub rate: f64,
    pub rate_change: f64,
}

impl Sample {
    pub fn constant(value: f64) -> Self {
        Self {
            value,
            rate: 0.0,
            rate_change: 0.0,
        }
    }

    fn is_finite(&self) -> bool {
        self.value.is_finite() && self.rate.is_finite() && self.rate_change.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Payload {
    Velocity(Sample),
    ReducedDistance(Sample),
    /// The sender changed its time headway.
    HeadwayChange {
        beta: f64,
        effective_time: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub sender: usize,
    pub send_time: f64,
    pub payload: Payload,
}

impl Message {
    fn validate(&self) -> Result<()> {
        ensure_finite(self.send_time, "send time")?;
        let ok = match self.payload {
            Payload::Velocity(s) | Payload::ReducedDistance(s) => s.is_finite(),
            Payload::HeadwayChange {
                beta,
                effective_time,
            } => beta.is_finite() && effective_time.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::NonFinite("message payload"))
        }
    }
}

/// A message together with the time it becomes deliverable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Delivered {
    pub message: Message,
    pub delivery_time: f64,
}

/// FIFO link with time-varying delay.
#[derive(Debug, Clone)]
pub struct Channel {
    profile: DelayProfile,
    queue: VecDeque<Delivered>,
    last_send: f64,
    last_delivery: f64,
    sent: u64,
    dropped: u64,
}

impl Channel {
    pub fn new(profile: DelayProfile) -> Self {
        Self {
            profile,
            queue: VecDeque::new(),
            last_send: f64::NEG_INFINITY,
            last_delivery: f64::NEG_INFINITY,
            sent: 0,
            dropped: 0,
        }
    }

    pub fn profile(&self) -> &DelayProfile {
        &self.profile
    }

    /// Enqueues `msg`. Send times must not decrease.
    pub fn send(&mut self, msg: Message) -> Result<()> {
        msg.validate()?;
        if msg.send_time < self.last_send {
            return Err(Error::OutOfOrderSend {
                send_time: msg.send_time,
                last_send_time: self.last_send,
            });
        }
        self.last_send = msg.send_time;
        self.sent += 1;
        if self.profile.drops_at(msg.send_time) {
            self.dropped += 1;
            return Ok(());
        }
        let delivery_time =
            (msg.send_time + self.profile.tau_at(msg.send_time)).max(self.last_delivery);
        self.last_delivery = delivery_time;
        self.queue.push_back(Delivered {
            message: msg,
            delivery_time,
        });
        Ok(())
    }

    /// Removes and returns every message deliverable at `now`, oldest first.
    pub fn poll(&mut self, now: f64) -> Vec<Delivered> {
        let mut out = Vec::new();
        self.poll_into(now, &mut out);
        out
    }

    /// Like [`Channel::poll`] but appends to `out`.
    pub fn poll_into(&mut self, now: f64, out: &mut Vec<Delivered>) {
        while let Some(front) = self.queue.front() {
            if front.delivery_time > now + TIME_EPS {
                break;
            }
            out.extend(self.queue.pop_front());
        }
    }

    pub fn in_flight(&self) -> usize {
        self.queue.len()
    }

    pub fn sent(&self) -> u64 {
        self.sent
    }

    pub fn dropped(&self) -> u64 {
        self.dropped
    }
}

/// Free-function form of [`Channel::send`].
pub fn channel_send(channel: &mut Channel, msg: Message) -> Result<()> {
    channel.send(msg)
}

/// Free-function form of [`Channel::poll`].
pub fn channel_poll(channel: &mut Channel, now: f64) -> Vec<Message> {
    channel.poll(now).into_iter().map(|d| d.message).collect()
}

/// Receiver-side copy of a remote signal.
///
/// Between arrivals the last sample is held. Within one telemetry period after
/// its arrival the sample is advanced along its own derivatives, which makes
/// a stream of per-step samples reproduce a pure transport delay to third
/// order instead of adding a staircase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeldSignal {
    sample: Sample,
    delivered_at: f64,
    horizon: f64,
}

impl HeldSignal {
    pub fn new(sample: Sample, delivered_at: f64, horizon: f64) -> Self {
        Self {
            sample,
            delivered_at,
            horizon,
        }
    }

    pub fn update(&mut self, sample: Sample, delivered_at: f64) {
        self.sample = sample;
        self.delivered_at = delivered_at;
    }

    pub fn sample(&self) -> Sample {
        self.sample
    }

    pub fn value_at(&self, t: f64) -> f64 {
        let h = (t - self.delivered_at).clamp(0.0, self.horizon);
        let s = &self.sample;
        s.value + h * (s.rate + 0.5 * h * s.rate_change)
    }
}

/// Window maximum of observed end-to-end delays.
///
/// Returns `tau_max` when no entry was received inside `[now − window, now]`.
pub fn monitor_delay(
    receive_log: &[(f64, f64)],
    now: f64,
    window: f64,
    tau_max: f64,
) -> Result<f64> {
    ensure_finite(window, "monitor window")?;
    if window <= 0.0 {
        return Err(invalid("window", "must be > 0"));
    }
    Ok(receive_log
        .iter()
        .filter(|(_, rx)| *rx >= now - window - TIME_EPS && *rx <= now + TIME_EPS)
        .map(|(tx, rx)| rx - tx)
        .fold(None, |acc: Option<f64>, d| {
            Some(acc.map_or(d, |a| a.max(d)))
        })
        .unwrap_or(tau_max))
}

/// Source of the delay value fed to headway adaptation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum MonitorMode {
    /// The true scheduled delay.
    #[default]
    Oracle,
    /// [`monitor_delay`] over a sliding window of received telemetry.
    Windowed {
        #[serde(rename = "window_s")]
        window: f64,
    },
}

/// Per-receiver delay monitor.
#[derive(Debug, Clone)]
pub struct DelayMonitor {
    mode: MonitorMode,
    tau_max: f64,
    log: VecDeque<(f64, f64)>,
}

impl DelayMonitor {
    pub fn new(mode: MonitorMode, tau_max: f64) -> Self {
        Self {
            mode,
            tau_max,
            log: VecDeque::new(),
        }
    }

    pub fn record(&mut self, send_time: f64, receive_time: f64) {
        if let MonitorMode::Windowed { window } = self.mode {
            self.log.push_back((send_time, receive_time));
            while self
                .log
                .front()
                .is_some_and(|(_, rx)| *rx < receive_time - window - TIME_EPS)
            {
                self.log.pop_front();
            }
        }
    }

    pub fn measure(&mut self, now: f64, true_tau: f64) -> Result<f64> {
        match self.mode {
            MonitorMode::Oracle => Ok(true_tau),
            MonitorMode::Windowed { window } => {
                let log = self.log.make_contiguous();
                monitor_delay(log, now, window, self.tau_max)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vel(sender: usize, t: f64, v: f64) -> Message {
        Message {
            sender,
            send_time: t,
            payload: Payload::Velocity(Sample::constant(v)),
        }
    }

    #[test]
    fn constant_delay_schedules_delivery() {
        let mut ch = Channel::new(DelayProfile::constant(0.1));
        ch.send(vel(0, 1.0, 3.0)).unwrap();
        assert!(ch.poll(1.05).is_empty());
        let got = ch.poll(1.1);
        assert_eq!(got.len(), 1);
        assert!((got[0].delivery_time - 1.1).abs() < 1e-12);
    }

    #[test]
    fn delay_decrease_does_not_reorder() {
        let mut ch = Channel::new(DelayProfile::from_steps(&[(0.0, 0.6), (1.05, 0.1)]));
        ch.send(vel(0, 1.0, 1.0)).unwrap();
        ch.send(vel(0, 1.1, 2.0)).unwrap();
        assert!(ch.poll(1.59).is_empty());
        let got = ch.poll(1.6);
        assert_eq!(got.len(), 2);
        assert_eq!(got[0].delivery_time, got[1].delivery_time);
        assert!((got[1].delivery_time - 1.6).abs() < 1e-12);
        assert_eq!(got[0].message.send_time, 1.0);
        assert_eq!(got[1].message.send_time, 1.1);
    }

    #[test]
    fn ideal_channel_delivers_at_send_time() {
        let mut ch = Channel::new(DelayProfile::constant(0.0));
        ch.send(vel(0, 2.5, 1.0)).unwrap();
        assert_eq!(ch.poll(2.5).len(), 1);
    }

    #[test]
    fn poll_consumes() {
        let mut ch = Channel::new(DelayProfile::constant(0.2));
        assert!(ch.poll(0.0).is_empty());
        ch.send(vel(1, 0.0, 1.0)).unwrap();
        ch.send(vel(1, 0.1, 2.0)).unwrap();
        let got = channel_poll(&mut ch, 0.3);
        assert_eq!(got.len(), 2);
        assert_eq!(got[0].send_time, 0.0);
        assert!(channel_poll(&mut ch, 0.3).is_empty());
    }

    #[test]
    fn rejects_out_of_order_and_non_finite() {
        let mut ch = Channel::new(DelayProfile::constant(0.1));
        channel_send(&mut ch, vel(0, 1.0, 1.0)).unwrap();
        assert!(matches!(
            ch.send(vel(0, 0.5, 1.0)),
            Err(Error::OutOfOrderSend { .. })
        ));
        assert!(ch.send(vel(0, 2.0, f64::NAN)).is_err());
    }

    #[test]
    fn drop_markers_lose_messages() {
        let mut profile = DelayProfile::from_steps(&[(0.0, 0.1), (1.0, 0.1), (2.0, 0.1)]);
        profile.breakpoints[1].drop = true;
        let mut ch = Channel::new(profile);
        for k in 0..30 {
            ch.send(vel(0, k as f64 * 0.1, 0.0)).unwrap();
        }
        assert_eq!(ch.sent(), 30);
        assert_eq!(ch.dropped(), 10);
        assert_eq!(ch.poll(100.0).len(), 20);
    }

    #[test]
    fn profile_lookup_is_right_continuous() {
        let p = DelayProfile::from_steps(&[(0.0, 0.1), (10.0, 0.3)]);
        assert_eq!(p.tau_at(9.999), 0.1);
        assert_eq!(p.tau_at(10.0), 0.3);
        assert_eq!(p.tau_at(10_000.0 * 1e-3), 0.3);
        assert_eq!(p.tau_at(-1.0), 0.0);
        assert!(p.validate(0.6).is_ok());
        assert!(p.validate(0.2).is_err());
        assert!(DelayProfile::from_steps(&[(1.0, 0.1), (0.5, 0.1)])
            .validate(1.0)
            .is_err());
    }

    #[test]
    fn monitor_examples() {
        let log = [(0.0, 0.1), (0.1, 0.4), (0.2, 0.4)];
        assert!((monitor_delay(&log, 0.5, 1.0, 0.6).unwrap() - 0.3).abs() < 1e-12);
        assert_eq!(monitor_delay(&[], 5.0, 1.0, 0.6).unwrap(), 0.6);
        assert!((monitor_delay(&[(1.0, 1.45)], 1.5, 1.0, 0.6).unwrap() - 0.45).abs() < 1e-12);
        // Entries outside the window are ignored.
        assert_eq!(monitor_delay(&[(0.0, 0.9)], 5.0, 1.0, 0.6).unwrap(), 0.6);
        assert!(monitor_delay(&log, 0.5, 0.0, 0.6).is_err());
    }

    #[test]
    fn windowed_monitor_prunes_and_fails_safe() {
        let mut m = DelayMonitor::new(MonitorMode::Windowed { window: 0.5 }, 0.6);
        assert_eq!(m.measure(0.0, 0.0).unwrap(), 0.6);
        m.record(0.0, 0.2);
        m.record(0.3, 0.4);
        assert!((m.measure(0.4, 0.0).unwrap() - 0.2).abs() < 1e-12);
        assert!((m.measure(0.8, 0.0).unwrap() - 0.1).abs() < 1e-12);
        let mut oracle = DelayMonitor::new(MonitorMode::Oracle, 0.6);
        assert_eq!(oracle.measure(3.0, 0.25).unwrap(), 0.25);
    }

    #[test]
    fn constant_delay_reproduces_transport_delay() {
        let dt = 1e-3;
        let tau = 0.25;
        let signal = |t: f64| (0.7 * t).sin() + 0.1 * t;
        let mut ch = Channel::new(DelayProfile::constant(tau));
        let mut held = HeldSignal::new(Sample::constant(signal(0.0)), 0.0, dt);
        let mut worst: f64 = 0.0;
        for k in 0..5000 {
            let t = k as f64 * dt;
            ch.send(vel(0, t, signal(t))).unwrap();
            for d in ch.poll(t) {
                if let Payload::Velocity(s) = d.message.payload {
                    held.update(s, d.delivery_time);
                }
            }
            if t >= tau {
                worst = worst.max((held.value_at(t) - signal(t - tau)).abs());
            }
        }
        // one-step quantization bound
        assert!(worst < 1.0 * dt, "{worst}");
    }

    #[test]
    fn held_signal_extrapolates_within_horizon_only() {
        let s = Sample {
            value: 1.0,
            rate: 2.0,
            rate_change: 4.0,
        };
        let h = HeldSignal::new(s, 10.0, 0.1);
        assert_eq!(h.value_at(9.0), 1.0);
        assert!((h.value_at(10.05) - (1.0 + 0.1 + 0.005)).abs() < 1e-12);
        assert_eq!(h.value_at(10.2), h.value_at(50.0));
    }

    proptest! {
        #[test]
        fn every_message_delivered_once_in_order(
            gaps in prop::collection::vec(0.0f64..0.2, 1..200),
            steps in prop::collection::vec((0.0f64..5.0, 0.0f64..0.8), 1..6),
        ) {
            let mut steps = steps;
            steps.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            steps.dedup_by(|a, b| (a.0 - b.0).abs() < 1e-6);
            let mut ch = Channel::new(DelayProfile::from_steps(&steps));
            let mut t = 0.0;
            let mut sent = Vec::new();
            let mut got = Vec::new();
            for (k, g) in gaps.iter().enumerate() {
                t += g;
                ch.send(vel(0, t, k as f64)).unwrap();
                sent.push(t);
                got.extend(ch.poll(t));
            }
            got.extend(ch.poll(t + 10.0));
            prop_assert_eq!(got.len(), sent.len());
            let mut last_delivery = f64::NEG_INFINITY;
            for (k, d) in got.iter().enumerate() {
                prop_assert_eq!(d.message.send_time, sent[k]);
                prop_assert!(d.delivery_time >= d.message.send_time);
                prop_assert!(d.delivery_time >= last_delivery);
                last_delivery = d.delivery_time;
            }
        }
    }
}
