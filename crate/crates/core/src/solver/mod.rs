//! Time-limited best-response solving and feasibility-aware candidate selection.

mod optimize;
mod problem;
mod select;

use alloc::vec::Vec;

use crate::dynamics::{ControlInput, ControlLimits, VehicleState};
use crate::safety::TtcParams;

pub use optimize::solve_time_limited;
pub use problem::{assemble_problem, BestResponseProblem, ProblemAgent};
pub use select::{constraint_violation, select_solution};

/// A control sequence and the states it produces (or is predicted to produce).
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Plan {
    pub controls: Vec<ControlInput>,
    pub states: Vec<VehicleState>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct SolverConfig {
    /// Planning steps per horizon.
    pub horizon: usize,
    pub dt: f64,
    pub limits: ControlLimits,
    pub ttc: TtcParams,
    /// Extra clearance around the collision ellipse, m.
    pub collision_margin: f64,
    /// Vehicles farther than this from the ego are left out of its problem, m.
    pub interaction_radius: f64,
    /// Feasibility threshold on the squared constraint residual.
    pub eps_f: f64,
    pub k_slack: f64,
    /// Optimizer iterations allowed per warm start.
    pub max_iterations: usize,
    /// Shared wall-clock budget per solve in seconds. `None` runs the
    /// deterministic iteration budget only.
    pub time_limit: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            horizon: 10,
            dt: 0.2,
            limits: ControlLimits::default(),
            ttc: TtcParams::default(),
            collision_margin: 0.3,
            interaction_radius: 50.0,
            eps_f: 1e-3,
            k_slack: 1e3,
            max_iterations: 40,
            time_limit: None,
        }
    }
}

/// Outcome of one optimizer attempt.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveCandidate {
    /// One sequence per solved agent, ego first.
    pub controls: Vec<Vec<ControlInput>>,
    pub states: Vec<Vec<VehicleState>>,
    /// Social utility of the solved agents (maximized).
    pub objective: f64,
    /// Squared norm of the constraint residuals.
    pub violation: f64,
    pub wall_time: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Reference the ego tracked, as an index into the problem's bank.
    pub desired: usize,
}

impl SolveCandidate {
    /// Selection cost: negated objective.
    pub fn cost(&self) -> f64 {
        -self.objective
    }
}

/// Monotonic time source in seconds.
pub trait Clock {
    fn now(&self) -> f64;
}

/// Clock that never advances; wall-clock budgets never expire with it.
#[derive(Debug, Clone, Copy, Default)]
pub struct FrozenClock;

impl Clock for FrozenClock {
    fn now(&self) -> f64 {
        0.0
    }
}

#[cfg(feature = "std")]
#[derive(Debug, Clone, Copy)]
pub struct WallClock(std::time::Instant);

#[cfg(feature = "std")]
impl Default for WallClock {
    fn default() -> Self {
        Self(std::time::Instant::now())
    }
}

#[cfg(feature = "std")]
impl Clock for WallClock {
    fn now(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}
