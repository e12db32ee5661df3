//! Kinematic bicycle model and horizon rollouts.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{cos, normalize_angle, sin, sqrt, tan, Vec2};

/// Pose, steering angle and speed of one vehicle at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    pub phi: f64,
    pub delta: f64,
    pub v: f64,
}

impl VehicleState {
    pub const fn new(x: f64, y: f64, phi: f64, delta: f64, v: f64) -> Self {
        Self { x, y, phi, delta, v }
    }

    #[inline]
    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    #[inline]
    pub fn velocity(&self) -> Vec2 {
        Vec2::new(self.v * cos(self.phi), self.v * sin(self.phi))
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite()
            && self.y.is_finite()
            && self.phi.is_finite()
            && self.delta.is_finite()
            && self.v.is_finite()
    }

    pub(crate) fn as_array(&self) -> [f64; 5] {
        [self.x, self.y, self.phi, self.delta, self.v]
    }
}

/// Steering-rate and acceleration applied over one planning step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ControlInput {
    /// Steering-angle rate, rad/s.
    pub delta_u: f64,
    /// Speed rate, m/s^2.
    pub v_u: f64,
}

impl ControlInput {
    pub const ZERO: ControlInput = ControlInput { delta_u: 0.0, v_u: 0.0 };

    pub const fn new(delta_u: f64, v_u: f64) -> Self {
        Self { delta_u, v_u }
    }

    #[inline]
    pub fn norm_sq(&self) -> f64 {
        self.delta_u * self.delta_u + self.v_u * self.v_u
    }
}

/// Symmetric bounds on the control inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct ControlLimits {
    pub delta_u: f64,
    pub v_u: f64,
}

impl Default for ControlLimits {
    fn default() -> Self {
        Self { delta_u: 0.5, v_u: 3.0 }
    }
}

impl ControlLimits {
    pub fn contains(&self, u: &ControlInput) -> bool {
        u.delta_u.abs() <= self.delta_u && u.v_u.abs() <= self.v_u
    }

    pub fn clamp(&self, u: ControlInput) -> ControlInput {
        ControlInput {
            delta_u: u.delta_u.clamp(-self.delta_u, self.delta_u),
            v_u: u.v_u.clamp(-self.v_u, self.v_u),
        }
    }

    /// Squared amount by which `u` exceeds the bounds.
    pub fn violation_sq(&self, u: &ControlInput) -> f64 {
        let a = (u.delta_u.abs() - self.delta_u).max(0.0);
        let b = (u.v_u.abs() - self.v_u).max(0.0);
        a * a + b * b
    }
}

/// Footprint and steering geometry. Two circles of equal radius placed at
/// `circle_offsets` along the longitudinal axis cover the body rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct VehicleGeometry {
    pub length: f64,
    pub width: f64,
    pub wheelbase: f64,
    pub circle_radius: f64,
    pub circle_offsets: [f64; 2],
    /// Steering-angle bound, rad.
    pub delta_max: f64,
}

impl VehicleGeometry {
    /// Places one circle at the center of each half of the body rectangle,
    /// with the radius reaching that half's corners.
    pub fn from_dimensions(length: f64, width: f64, wheelbase: f64, delta_max: f64) -> Self {
        let off = length / 4.0;
        let r = sqrt(off * off + width * width / 4.0);
        Self {
            length,
            width,
            wheelbase,
            circle_radius: r,
            circle_offsets: [-off, off],
            delta_max,
        }
    }
}

impl Default for VehicleGeometry {
    fn default() -> Self {
        Self::from_dimensions(4.5, 1.8, 2.9, 0.5)
    }
}

/// Forward-Euler step without input validation. Used in the solver's inner loop.
#[inline]
pub fn step_unchecked(s: &VehicleState, u: &ControlInput, dt: f64, geom: &VehicleGeometry) -> VehicleState {
    let (sp, cp) = (sin(s.phi), cos(s.phi));
    VehicleState {
        x: s.x + s.v * cp * dt,
        y: s.y + s.v * sp * dt,
        phi: normalize_angle(s.phi + s.v / geom.wheelbase * tan(s.delta) * dt),
        delta: (s.delta + u.delta_u * dt).clamp(-geom.delta_max, geom.delta_max),
        v: (s.v + u.v_u * dt).max(0.0),
    }
}

/// Advances one vehicle by `dt` seconds.
pub fn step(
    state: &VehicleState,
    u: &ControlInput,
    dt: f64,
    geom: &VehicleGeometry,
) -> Result<VehicleState> {
    if !state.is_finite() {
        return Err(Error::NonFiniteState(format!("{state:?}")));
    }
    if !(u.delta_u.is_finite() && u.v_u.is_finite()) {
        return Err(Error::NonFiniteState(format!("control {u:?}")));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidConfig(format!("dt must be positive, got {dt}")));
    }
    Ok(step_unchecked(state, u, dt, geom))
}

/// Rolls `controls` forward from `state`; the result has `controls.len() + 1` entries.
pub fn rollout(
    state: &VehicleState,
    controls: &[ControlInput],
    dt: f64,
    geom: &VehicleGeometry,
) -> Result<Vec<VehicleState>> {
    let mut out = Vec::with_capacity(controls.len() + 1);
    out.push(*state);
    let mut cur = *state;
    for u in controls {
        cur = step(&cur, u, dt, geom)?;
        out.push(cur);
    }
    Ok(out)
}

pub(crate) fn rollout_into(
    state: &VehicleState,
    controls: &[ControlInput],
    dt: f64,
    geom: &VehicleGeometry,
    out: &mut Vec<VehicleState>,
) {
    out.clear();
    out.push(*state);
    let mut cur = *state;
    for u in controls {
        cur = step_unchecked(&cur, u, dt, geom);
        out.push(cur);
    }
}
