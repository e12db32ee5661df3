//! Per-vehicle performance reward and the SVO-weighted social utility.

use crate::dynamics::{ControlInput, VehicleGeometry, VehicleState};
use crate::error::{Error, Result};
use crate::math::{cos, sin, Vec2};
use crate::safety::{aggregate_ttc_cost, TtcParams};
use crate::trajectory::{eval_desired, DesiredTrajectory};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct CostWeights {
    pub k_v: f64,
    pub k_u: f64,
    pub k_speeding: f64,
    pub k_lat: f64,
    pub k_lon: f64,
    pub k_ttc: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self { k_v: 0.05, k_u: 1.0, k_speeding: 5.0, k_lat: 1.0, k_lon: 0.1, k_ttc: 10.0 }
    }
}

impl CostWeights {
    pub fn is_valid(&self) -> bool {
        [self.k_v, self.k_u, self.k_speeding, self.k_lat, self.k_lon, self.k_ttc]
            .iter()
            .all(|w| *w >= 0.0 && w.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AgentProfile {
    /// Social value orientation in `[0, pi/2]`; 0 is egoistic.
    pub svo_theta: f64,
    /// Personal speed limit, m/s.
    pub v_max: f64,
    pub weights: CostWeights,
    pub geometry: VehicleGeometry,
}

impl AgentProfile {
    pub fn new(svo_theta: f64, v_max: f64) -> Self {
        Self { svo_theta, v_max, weights: CostWeights::default(), geometry: VehicleGeometry::default() }
    }
}

/// Linear excess over the personal speed limit.
#[inline]
pub fn speeding_slack(v: f64, v_max: f64) -> f64 {
    (v - v_max).max(0.0)
}

/// Longitudinal and lateral error of `pos` from a reference point with heading `phi`.
#[inline]
pub fn tracking_errors(pos: Vec2, ref_pos: Vec2, phi: f64) -> (f64, f64) {
    let e = (pos - ref_pos).to_frame(phi);
    (e.x, e.y)
}

/// Terms of the reward that depend only on the vehicle itself at one step.
/// `s` is the accumulated path length used to look up the reference.
#[inline]
pub(crate) fn own_stage_reward(
    state: &VehicleState,
    control: Option<&ControlInput>,
    s: f64,
    desired: &DesiredTrajectory,
    profile: &AgentProfile,
) -> f64 {
    let w = &profile.weights;
    let slack = speeding_slack(state.v, profile.v_max);
    let p = eval_desired(desired, s);
    let (e_lon, e_lat) = tracking_errors(state.position(), Vec2::new(p.x, p.y), p.phi);
    let effort = control.map_or(0.0, ControlInput::norm_sq);
    w.k_v * state.v * state.v - w.k_u * effort - w.k_speeding * slack * slack - w.k_lat * e_lat * e_lat
        - w.k_lon * e_lon * e_lon
}

/// Another vehicle's horizon as seen by the reward.
#[derive(Debug, Clone, Copy)]
pub struct AdoRollout<'a> {
    pub states: &'a [VehicleState],
    pub geometry: &'a VehicleGeometry,
}

/// Sum over the horizon of speed reward minus effort, speeding, tracking and
/// TTC penalties. TTC costs are computed unit-weighted and scaled by `k_ttc`
/// here, exactly once.
pub fn performance_reward(
    states: &[VehicleState],
    controls: &[ControlInput],
    desired: &DesiredTrajectory,
    ados: &[AdoRollout<'_>],
    profile: &AgentProfile,
    ttc: &TtcParams,
) -> Result<f64> {
    if states.len() != controls.len() + 1 {
        return Err(Error::HorizonMismatch { expected: controls.len() + 1, found: states.len() });
    }
    if let Some(bad) = ados.iter().find(|a| a.states.len() != states.len()) {
        return Err(Error::HorizonMismatch { expected: states.len(), found: bad.states.len() });
    }
    let unit = TtcParams { k_ttc: 1.0, ..*ttc };
    let mut total = 0.0;
    let mut s = 0.0;
    for (t, st) in states.iter().enumerate() {
        if t > 0 {
            s += (st.position() - states[t - 1].position()).norm();
        }
        total += own_stage_reward(st, controls.get(t), s, desired, profile);
        let mut c_ttc = 0.0;
        for ado in ados {
            c_ttc += aggregate_ttc_cost(st, &ado.states[t], &profile.geometry, ado.geometry, &unit)?;
        }
        total -= profile.weights.k_ttc * c_ttc;
    }
    Ok(total)
}

/// `sum_j cos(theta) R_i + sin(theta) R_j`; with no ados, `cos(theta) R_i`.
pub fn social_utility(ego_reward: f64, ado_rewards: &[f64], theta: f64) -> f64 {
    let (s, c) = (sin(theta), cos(theta));
    if ado_rewards.is_empty() {
        return c * ego_reward;
    }
    ado_rewards.iter().map(|r| c * ego_reward + s * r).sum()
}
