//! Uncertain state-space model of the distance loop for robust-stability tools.
//!
//! State `x = (v, z, d_s)` with `z = ∫u`, so the plant reads `v̇ = (z − v)/T`.
//! Inputs are `(v_s, w, u_δ1, u_δ2, u_δ3)`, where `w` is the weight-switching
//! disturbance and `u_δ = δ y_δ` closes the uncertainty channels:
//!
//! - channels 0 and 1 carry the same delay operator `δ_τ(s) = (e^{−sτ} − 1)/s`,
//!   with gain bound `τ_max`,
//! - channel 2 carries `δ_Δ ∈ [−1, 1]` with `Δ̂ = Δ̄ (1 + r_Δ δ_Δ)`.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::linear::max_real_eigenvalue;
use crate::error::{ensure_finite, invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    Delay,
    Parametric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyChannel {
    pub kind: ChannelKind,
    /// Bound on the gain of the operator closing this channel.
    pub gain_bound: f64,
    /// Index into `u_δ`, i.e. column `2 + input_index` of `B`.
    pub input_index: usize,
    /// Index into `y_δ`, i.e. row of `C` and `D`.
    pub output_index: usize,
    /// Channels with the same id are closed by one and the same operator.
    pub operator_id: usize,
    /// `false` when the bound is zero and the channel can be dropped.
    pub active: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustModel {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
    #[serde(rename = "D")]
    pub d: Vec<Vec<f64>>,
    #[serde(rename = "nominal_delta_bar_s")]
    pub delta_bar: f64,
    #[serde(rename = "scaling_r_delta")]
    pub r_delta: f64,
    #[serde(rename = "tau_max_s")]
    pub tau_max: f64,
    #[serde(rename = "time_constant_s")]
    pub time_constant: f64,
    #[serde(rename = "gain_kv_per_s")]
    pub gain_kv: f64,
    #[serde(rename = "gain_kp_per_s")]
    pub gain_kp: f64,
    pub state_names: Vec<String>,
    pub input_names: Vec<String>,
    pub output_names: Vec<String>,
    /// Number of leading inputs that are exogenous, not uncertainty channels.
    pub exogenous_inputs: usize,
    pub channels: Vec<UncertaintyChannel>,
}

fn rows<const C: usize>(r: &[[f64; C]]) -> Vec<Vec<f64>> {
    r.iter().map(|row| row.to_vec()).collect()
}

/// Assembles the model for `Δ̂ ∈ [delta_min, delta_max]` and `τ ≤ tau_max`.
pub fn robust_model(
    time_constant: f64,
    gain_kv: f64,
    gain_kp: f64,
    delta_min: f64,
    delta_max: f64,
    tau_max: f64,
) -> Result<RobustModel> {
    for (v, what) in [
        (time_constant, "time constant"),
        (gain_kv, "k_v"),
        (gain_kp, "k_p"),
        (delta_min, "delta_min"),
        (delta_max, "delta_max"),
        (tau_max, "tau_max"),
    ] {
        ensure_finite(v, what)?;
    }
    if time_constant <= 0.0 {
        return Err(invalid("time_constant", "must be > 0"));
    }
    if gain_kv <= 0.0 || gain_kp <= 0.0 {
        return Err(invalid("gains", "k_v and k_p must be > 0"));
    }
    if delta_min <= 0.0 || delta_max < delta_min {
        return Err(invalid("delta", "need 0 < delta_min <= delta_max"));
    }
    if tau_max < 0.0 {
        return Err(invalid("tau_max", "must be >= 0"));
    }
    let (t, kv, kp) = (time_constant, gain_kv, gain_kp);
    let delta_bar = 0.5 * (delta_max + delta_min);
    let r_delta = (delta_max - delta_min) / (delta_max + delta_min);

    let a = [
        [-1.0 / t, 1.0 / t, 0.0],
        [-kv - kp * delta_bar, 0.0, kp],
        [-1.0, 0.0, 0.0],
    ];
    let b = [
        [0.0, 0.0, kv / t, -kp / t, 0.0],
        [kv, 0.0, 0.0, 0.0, -kp],
        [1.0, 1.0, 0.0, 0.0, 0.0],
    ];
    let c = [
        [0.0, 0.0, 0.0],
        [delta_bar, 0.0, -1.0],
        [r_delta * delta_bar, 0.0, 0.0],
    ];
    let d = [
        [1.0, 0.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0, 1.0],
        [0.0, 0.0, 0.0, 0.0, 0.0],
    ];
    let names = |n: &[&str]| n.iter().map(|s| s.to_string()).collect();
    let channel = |kind, gain_bound: f64, index, operator_id| UncertaintyChannel {
        kind,
        gain_bound,
        input_index: index,
        output_index: index,
        operator_id,
        active: gain_bound > 0.0,
    };
    Ok(RobustModel {
        a: rows(&a),
        b: rows(&b),
        c: rows(&c),
        d: rows(&d),
        delta_bar,
        r_delta,
        tau_max,
        time_constant,
        gain_kv,
        gain_kp,
        state_names: names(&["v", "z", "d_s"]),
        input_names: names(&[
            "v_s",
            "w",
            "u_delta_tau_v",
            "u_delta_tau_d",
            "u_delta_param",
        ]),
        output_names: names(&["y_delta_tau_v", "y_delta_tau_d", "y_delta_param"]),
        exogenous_inputs: 2,
        channels: vec![
            channel(ChannelKind::Delay, tau_max, 0, 0),
            channel(ChannelKind::Delay, tau_max, 1, 0),
            UncertaintyChannel {
                active: r_delta > 0.0,
                ..channel(ChannelKind::Parametric, 1.0, 2, 1)
            },
        ],
    })
}

/// [`robust_model`] written as JSON to `path`.
pub fn export_robust_model(
    time_constant: f64,
    gain_kv: f64,
    gain_kp: f64,
    delta_min: f64,
    delta_max: f64,
    tau_max: f64,
    path: impl AsRef<Path>,
) -> Result<RobustModel> {
    let m = robust_model(
        time_constant,
        gain_kv,
        gain_kp,
        delta_min,
        delta_max,
        tau_max,
    )?;
    m.save(path)?;
    Ok(m)
}

fn matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let (r, c) = (rows.len(), rows.first().map_or(0, Vec::len));
    DMatrix::from_fn(r, c, |i, j| rows[i][j])
}

impl RobustModel {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn a_matrix(&self) -> DMatrix<f64> {
        matrix(&self.a)
    }

    pub fn b_matrix(&self) -> DMatrix<f64> {
        matrix(&self.b)
    }

    pub fn c_matrix(&self) -> DMatrix<f64> {
        matrix(&self.c)
    }

    pub fn d_matrix(&self) -> DMatrix<f64> {
        matrix(&self.d)
    }

    pub fn nominal_spectral_abscissa(&self) -> f64 {
        max_real_eigenvalue(&self.a_matrix())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::TUNED_KP;
    use crate::control::characteristic_polynomial;

    const T: f64 = 0.3;
    const KV: f64 = 5.0 / 6.0;

    fn model() -> RobustModel {
        robust_model(T, KV, TUNED_KP, 1.2, 1.8, 0.6).unwrap()
    }

    #[test]
    fn bounds_arithmetic() {
        let m = model();
        assert_eq!(m.delta_bar, 1.5);
        assert!((m.r_delta - 0.2).abs() < 1e-15);
        let flat = robust_model(T, KV, TUNED_KP, 1.5, 1.5, 0.0).unwrap();
        assert_eq!(flat.r_delta, 0.0);
        assert!(flat.channels.iter().all(|c| !c.active));
    }

    #[test]
    fn dimensions() {
        let m = model();
        assert_eq!(m.a_matrix().shape(), (3, 3));
        assert_eq!(m.b_matrix().shape(), (3, 5));
        assert_eq!(m.c_matrix().shape(), (3, 3));
        assert_eq!(m.d_matrix().shape(), (3, 5));
        assert_eq!(m.channels.len(), 3);
        assert_eq!(m.channels[0].operator_id, m.channels[1].operator_id);
        assert_ne!(m.channels[0].operator_id, m.channels[2].operator_id);
        assert!(m
            .channels
            .iter()
            .all(|c| c.input_index < 3 && c.output_index < 3));
    }

    #[test]
    fn nominal_model_is_hurwitz_and_matches_loop() {
        let m = model();
        assert!(m.nominal_spectral_abscissa() < 0.0);
        let a = m.a_matrix();
        let [c2, _, c0] = characteristic_polynomial(T, KV, TUNED_KP, 1.5);
        assert!((a.trace() + c2).abs() < 1e-12);
        assert!((a.determinant() + c0).abs() < 1e-12);
    }

    // Closing the parametric channel with δ must reproduce the nominal
    // matrix at Δ̂ = Δ̄ (1 + r δ).
    #[test]
    fn parametric_channel_shifts_overall_delay() {
        let m = model();
        for delta in [-1.0, 0.5, 1.0] {
            // y_3 = C_3 x, u_3 = δ y_3, which enters through column 4 of B.
            let b = m.b_matrix();
            let c = m.c_matrix();
            let closed = m.a_matrix() + b.column(4) * (c.row(2) * delta);
            let d_hat = m.delta_bar * (1.0 + m.r_delta * delta);
            let direct = robust_model(T, KV, TUNED_KP, d_hat, d_hat, 0.6)
                .unwrap()
                .a_matrix();
            assert!((closed - direct).abs().max() < 1e-12, "δ = {delta}");
        }
    }

    #[test]
    fn flipped_sign_is_not_hurwitz() {
        let mut m = model();
        m.a[1][2] = -m.a[1][2];
        assert!(m.nominal_spectral_abscissa() >= 0.0);
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let m = robust_model(T, KV, 0.7526123456789, 1.2, 1.8, 0.6).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        m.save(&path).unwrap();
        let back = RobustModel::load(&path).unwrap();
        assert_eq!(back, m);
        for (x, y) in back.a.iter().flatten().zip(m.a.iter().flatten()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        let text = std::fs::read_to_string(&path).unwrap();
        for key in [
            "\"A\"",
            "\"B\"",
            "\"C\"",
            "\"D\"",
            "nominal_delta_bar_s",
            "scaling_r_delta",
            "tau_max_s",
            "channels",
        ] {
            assert!(text.contains(key), "{key}");
        }
    }

    #[test]
    fn rejects_bad_bounds() {
        assert!(robust_model(T, KV, TUNED_KP, 1.8, 1.2, 0.6).is_err());
        assert!(robust_model(T, KV, TUNED_KP, 0.0, 1.2, 0.6).is_err());
        assert!(robust_model(T, KV, TUNED_KP, 1.2, 1.8, -0.1).is_err());
    }
}
