//! Piecewise-cubic desired trajectories and the warm-start bank.

use alloc::vec::Vec;

use crate::dynamics::{rollout, ControlInput, ControlLimits, VehicleGeometry, VehicleState};
use crate::error::{Error, Result};
use crate::math::{atan, tan};
use crate::road::RoadSpec;

/// `c[0] + c[1] s + c[2] s^2 + c[3] s^3`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Cubic {
    pub c: [f64; 4],
}

impl Cubic {
    pub const fn new(c: [f64; 4]) -> Self {
        Self { c }
    }

    pub const fn constant(v: f64) -> Self {
        Self { c: [v, 0.0, 0.0, 0.0] }
    }

    pub const fn line(v0: f64, slope: f64) -> Self {
        Self { c: [v0, slope, 0.0, 0.0] }
    }

    #[inline]
    pub fn eval(&self, s: f64) -> f64 {
        let c = &self.c;
        ((c[3] * s + c[2]) * s + c[1]) * s + c[0]
    }

    #[inline]
    pub fn deriv(&self, s: f64) -> f64 {
        let c = &self.c;
        (3.0 * c[3] * s + 2.0 * c[2]) * s + c[1]
    }
}

/// One polynomial piece, active for local progress in `[0, length]`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Segment {
    pub length: f64,
    pub x: Cubic,
    pub y: Cubic,
    pub phi: Cubic,
}

impl Segment {
    fn straight(x0: f64, y0: f64, length: f64) -> Self {
        Self { length, x: Cubic::line(x0, 1.0), y: Cubic::constant(y0), phi: Cubic::constant(0.0) }
    }

    fn end(&self) -> DesiredPoint {
        self.at(self.length)
    }

    #[inline]
    fn at(&self, s: f64) -> DesiredPoint {
        DesiredPoint { x: self.x.eval(s), y: self.y.eval(s), phi: self.phi.eval(s) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum TrajectoryLabel {
    KeepLane,
    ChangeLeft,
    ChangeRight,
    FinishMidChange,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesiredPoint {
    pub x: f64,
    pub y: f64,
    pub phi: f64,
}

/// Three chained cubic pieces in arc progress `s`. Past the last piece the
/// path continues straight along its final heading.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DesiredTrajectory {
    pub segments: [Segment; 3],
    pub label: TrajectoryLabel,
    pub target_lane: usize,
}

impl DesiredTrajectory {
    /// Arc progress at which the second and third pieces begin.
    pub fn breakpoints(&self) -> (f64, f64) {
        let s1 = self.segments[0].length;
        (s1, s1 + self.segments[1].length)
    }

    pub fn total_length(&self) -> f64 {
        self.segments.iter().map(|s| s.length).sum()
    }

    /// Straight lane-keeping reference along `lane_y` starting at `x0`.
    pub fn keep_lane(x0: f64, lane_y: f64, piece_length: f64, lane: usize) -> Self {
        let a = Segment::straight(x0, lane_y, piece_length);
        let b = Segment::straight(x0 + piece_length, lane_y, piece_length);
        let c = Segment::straight(x0 + 2.0 * piece_length, lane_y, piece_length);
        Self { segments: [a, b, c], label: TrajectoryLabel::KeepLane, target_lane: lane }
    }

    /// Lateral transition from `(x0, y0)` with initial heading `phi0` to
    /// `y1` over `change_length`, followed by two straight pieces.
    pub fn lateral_change(
        x0: f64,
        y0: f64,
        phi0: f64,
        y1: f64,
        change_length: f64,
        label: TrajectoryLabel,
        lane: usize,
    ) -> Result<Self> {
        let y = fit_hermite_cubic(y0, tan(phi0), y1, 0.0, change_length)?;
        let phi = fit_heading_cubic(&y, atan(tan(phi0)), change_length);
        let first = Segment { length: change_length, x: Cubic::line(x0, 1.0), y, phi };
        let e = first.end();
        let tail = change_length.max(10.0);
        let second = Segment::straight(e.x, e.y, tail);
        let third = Segment::straight(e.x + tail, e.y, tail);
        Ok(Self { segments: [first, second, third], label, target_lane: lane })
    }
}

/// Cubic with `y(0)=0, y'(0)=0, y(s1)=w, y'(s1)=0`, as `[c0, c1, c2, c3]`.
pub fn fit_lane_change_cubic(w: f64, s1: f64) -> Result<[f64; 4]> {
    Ok(fit_hermite_cubic(0.0, 0.0, w, 0.0, s1)?.c)
}

/// Cubic Hermite interpolant between `(0, y0, m0)` and `(len, y1, m1)`.
pub fn fit_hermite_cubic(y0: f64, m0: f64, y1: f64, m1: f64, len: f64) -> Result<Cubic> {
    if !(len > 0.0) {
        return Err(Error::NonPositiveLength(len));
    }
    let dy = y1 - y0;
    let c2 = (3.0 * dy - (2.0 * m0 + m1) * len) / (len * len);
    let c3 = (-2.0 * dy + (m0 + m1) * len) / (len * len * len);
    Ok(Cubic::new([y0, m0, c2, c3]))
}

/// Least-squares cubic for `atan(y'(s))` pinned to `phi0` at 0 and 0 at `len`.
fn fit_heading_cubic(y: &Cubic, phi0: f64, len: f64) -> Cubic {
    // phi(s) = phi0 (1 - s/len) + q1(s) a + q2(s) b, q1 = s(s - len), q2 = s^2 (s - len)
    const SAMPLES: usize = 33;
    let (mut a11, mut a12, mut a22, mut r1, mut r2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for k in 0..SAMPLES {
        let s = len * k as f64 / (SAMPLES - 1) as f64;
        let target = atan(y.deriv(s)) - phi0 * (1.0 - s / len);
        let q1 = s * (s - len);
        let q2 = s * q1;
        a11 += q1 * q1;
        a12 += q1 * q2;
        a22 += q2 * q2;
        r1 += q1 * target;
        r2 += q2 * target;
    }
    let det = a11 * a22 - a12 * a12;
    let (a, b) = if det.abs() > 1e-300 {
        ((r1 * a22 - r2 * a12) / det, (a11 * r2 - a12 * r1) / det)
    } else {
        (0.0, 0.0)
    };
    Cubic::new([phi0, -phi0 / len - a * len, a - b * len, b])
}

/// Evaluates the reference at arc progress `s` (negative values clamp to 0).
pub fn eval_desired(traj: &DesiredTrajectory, s: f64) -> DesiredPoint {
    let mut local = s.max(0.0);
    for seg in &traj.segments {
        if local <= seg.length {
            return seg.at(local);
        }
        local -= seg.length;
    }
    let end = traj.segments[2].end();
    DesiredPoint {
        x: end.x + local * crate::math::cos(end.phi),
        y: end.y + local * crate::math::sin(end.phi),
        phi: end.phi,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct BankConfig {
    /// Look-ahead factor: a full lane change spans `4 v t_lane` metres.
    pub t_lane: f64,
    /// Lateral offset from every lane center above which a finishing maneuver is offered.
    pub mid_change_threshold: f64,
    /// Floor on the length of any polynomial piece, m.
    pub min_piece_length: f64,
}

impl Default for BankConfig {
    fn default() -> Self {
        Self { t_lane: 1.25, mid_change_threshold: 0.5, min_piece_length: 10.0 }
    }
}

fn change_length(v: f64, dy: f64, road: &RoadSpec, cfg: &BankConfig) -> f64 {
    let frac = (dy.abs() / road.lane_width).max(0.5);
    (4.0 * v * cfg.t_lane * frac).max(cfg.min_piece_length)
}

/// Keep-lane first, then lane changes where a target lane exists, then a
/// finishing maneuver when the vehicle sits between lanes.
pub fn generate_bank(state: &VehicleState, road: &RoadSpec, cfg: &BankConfig) -> Vec<DesiredTrajectory> {
    let lane = road.nearest_lane(state.y);
    let center = road.lane_center(lane);
    let piece = (4.0 * state.v * cfg.t_lane).max(cfg.min_piece_length);
    let phi0 = state.phi.clamp(-0.5, 0.5);

    let mut bank = Vec::with_capacity(4);
    bank.push(DesiredTrajectory::keep_lane(state.x, center, piece, lane));

    let mut push_change = |target: usize, label: TrajectoryLabel| {
        let y1 = road.lane_center(target);
        let len = change_length(state.v, y1 - state.y, road, cfg);
        if let Ok(t) = DesiredTrajectory::lateral_change(state.x, state.y, phi0, y1, len, label, target) {
            bank.push(t);
        }
    };
    if lane + 1 < road.lane_count {
        push_change(lane + 1, TrajectoryLabel::ChangeLeft);
    }
    if lane > 0 {
        push_change(lane - 1, TrajectoryLabel::ChangeRight);
    }

    let offset = state.y - center;
    if offset.abs() > cfg.mid_change_threshold {
        // Moving away from the nearest center means the change is still in
        // progress toward the neighbouring lane.
        let heading_out = phi0 * offset > 0.0 && phi0.abs() > 0.01;
        let target = if heading_out {
            if offset > 0.0 && lane + 1 < road.lane_count {
                lane + 1
            } else if offset < 0.0 && lane > 0 {
                lane - 1
            } else {
                lane
            }
        } else {
            lane
        };
        push_change(target, TrajectoryLabel::FinishMidChange);
    }
    bank
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum WarmStartKind {
    /// Constant action rolled through the dynamics; exactly feasible.
    ControlSeeded,
    /// Sampled from a reference path with finite-difference controls; may
    /// violate the dynamics.
    StateSeeded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    pub controls: Vec<ControlInput>,
    pub states: Vec<VehicleState>,
    pub provenance: WarmStartKind,
    /// Index into the bank of the reference this start should track.
    pub desired: usize,
}

/// One state-seeded start per reference, plus coast / brake / accelerate.
pub fn generate_warm_starts(
    state: &VehicleState,
    bank: &[DesiredTrajectory],
    horizon: usize,
    dt: f64,
    geom: &VehicleGeometry,
    limits: &ControlLimits,
) -> Vec<WarmStart> {
    let horizon = horizon.max(1);
    let mut out = Vec::with_capacity(bank.len() + 3);
    for (idx, traj) in bank.iter().enumerate() {
        out.push(state_seeded(state, traj, idx, horizon, dt, geom, limits));
    }
    for v_u in [0.0, -limits.v_u / 2.0, limits.v_u / 2.0] {
        let controls = alloc::vec![ControlInput::new(0.0, v_u); horizon];
        // Unchecked inputs are finite by construction.
        let states = rollout(state, &controls, dt, geom).unwrap_or_else(|_| alloc::vec![*state; horizon + 1]);
        out.push(WarmStart { controls, states, provenance: WarmStartKind::ControlSeeded, desired: 0 });
    }
    out
}

fn state_seeded(
    state: &VehicleState,
    traj: &DesiredTrajectory,
    idx: usize,
    horizon: usize,
    dt: f64,
    geom: &VehicleGeometry,
    limits: &ControlLimits,
) -> WarmStart {
    let ds = state.v * dt;
    let pts: Vec<DesiredPoint> = (0..=horizon + 1).map(|k| eval_desired(traj, k as f64 * ds)).collect();
    let steer = |k: usize| -> f64 {
        if ds <= 0.0 {
            return state.delta;
        }
        let dphi = crate::math::normalize_angle(pts[k + 1].phi - pts[k].phi);
        atan(geom.wheelbase * dphi / ds).clamp(-geom.delta_max, geom.delta_max)
    };

    let mut states = Vec::with_capacity(horizon + 1);
    states.push(*state);
    for k in 1..=horizon {
        let p = pts[k];
        states.push(VehicleState::new(p.x, p.y, p.phi, steer(k), state.v));
    }
    let controls = (0..horizon)
        .map(|k| limits.clamp(ControlInput::new((states[k + 1].delta - states[k].delta) / dt, 0.0)))
        .collect();
    WarmStart { controls, states, provenance: WarmStartKind::StateSeeded, desired: idx }
}
