use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::{assign_population, spawn_vehicles, step_world, SpeedRange, WorldState};
use crate::dynamics::{ControlInput, VehicleGeometry, VehicleState};
use crate::error::{Error, Result};
use crate::ibr::{run_ibr, IbrConfig, SolveDiagnostics};
use crate::reward::{AgentProfile, CostWeights};
use crate::road::RoadSpec;
use crate::solver::{Clock, SolverConfig};
use crate::AgentId;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct SimConfig {
    pub n_agents: usize,
    /// Traffic density used for spawning, vehicles per hour.
    pub density: f64,
    pub road: RoadSpec,
    pub speeds: SpeedRange,
    pub p_cooperative: f64,
    pub theta_prosocial: f64,
    pub theta_egoistic: f64,
    /// Sub-steps to simulate.
    pub n_steps: usize,
    /// Sub-steps executed between replans.
    pub execute_steps: usize,
    /// Replace the wall-clock solver budget by the iteration budget alone.
    pub deterministic: bool,
    /// Wall-clock budget per best-response solve when not deterministic, s.
    pub time_limit: f64,
    pub solver: SolverConfig,
    pub ibr: IbrConfig,
    pub weights: CostWeights,
    pub geometry: VehicleGeometry,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_agents: 24,
            density: 3000.0,
            road: RoadSpec::default(),
            speeds: SpeedRange::default(),
            p_cooperative: 0.0,
            theta_prosocial: core::f64::consts::FRAC_PI_4,
            theta_egoistic: 0.05,
            n_steps: 500,
            execute_steps: 2,
            deterministic: true,
            time_limit: 2.0,
            solver: SolverConfig::default(),
            ibr: IbrConfig::default(),
            weights: CostWeights::default(),
            geometry: VehicleGeometry::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(Error::InvalidConfig("n_steps must be positive".into()));
        }
        if self.execute_steps == 0 || self.execute_steps > self.solver.horizon {
            return Err(Error::InvalidConfig(format!(
                "execute_steps must lie in 1..={}, got {}",
                self.solver.horizon, self.execute_steps
            )));
        }
        if !(self.solver.dt > 0.0) {
            return Err(Error::InvalidConfig("dt must be positive".into()));
        }
        if !self.weights.is_valid() {
            return Err(Error::InvalidConfig("cost weights must be finite and non-negative".into()));
        }
        if !self.deterministic && !(self.time_limit > 0.0) {
            return Err(Error::InvalidConfig("time_limit must be positive".into()));
        }
        self.ibr.validate()
    }

    fn effective_solver(&self) -> SolverConfig {
        SolverConfig { time_limit: if self.deterministic { None } else { Some(self.time_limit) }, ..self.solver }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CollisionEvent {
    /// Sub-step after which the overlap was detected.
    pub step: usize,
    pub agents: (AgentId, AgentId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case", tag = "status", content = "reason"))]
pub enum RunStatus {
    Completed,
    Collision,
    Failed(String),
}

/// Per-replan record of the coordination outcome.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ReplanRecord {
    pub step: usize,
    pub rounds: usize,
    pub change_norms: Vec<f64>,
    pub non_converged: bool,
    pub solves: Vec<Option<SolveDiagnostics>>,
    pub failures: Vec<(AgentId, String)>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WorldTrace {
    pub config: SimConfig,
    pub seed: u64,
    /// Road as sized for the run.
    pub road: RoadSpec,
    pub profiles: Vec<AgentProfile>,
    /// `states[k][i]`: agent `i` after sub-step `k`; entry 0 is the spawn.
    pub states: Vec<Vec<VehicleState>>,
    /// `controls[k][i]`: control agent `i` applied to reach `states[k + 1]`.
    pub controls: Vec<Vec<ControlInput>>,
    /// Violation of the plan each control came from, against the other plans.
    pub violations: Vec<Vec<f64>>,
    pub replans: Vec<ReplanRecord>,
    pub collisions: Vec<CollisionEvent>,
    pub status: RunStatus,
}

impl WorldTrace {
    /// Sub-steps recorded after the spawn.
    pub fn steps(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    pub fn n_agents(&self) -> usize {
        self.profiles.len()
    }

    /// Replans whose final plans were not all feasible.
    pub fn violation_flags(&self) -> usize {
        self.replans.iter().filter(|r| r.non_converged).count()
    }

    pub fn is_flagged(&self) -> bool {
        self.status != RunStatus::Completed
    }
}

/// Builds the initial world for `config` and `seed`: spawn, size the road
/// for the run, then assign the population.
pub fn initial_world(config: &SimConfig, seed: u64) -> Result<WorldState> {
    let spawned = spawn_vehicles(
        seed,
        config.n_agents,
        config.density,
        &config.road,
        &config.speeds,
        &config.weights,
        &config.geometry,
        config.theta_egoistic,
    )?;
    let front = spawned.states.iter().map(|s| s.x).fold(0.0, f64::max);
    let headroom = (config.speeds.max + config.solver.limits.v_u * config.solver.dt) * config.n_steps as f64 * config.solver.dt;
    let mut world = assign_population(&spawned, seed, config.p_cooperative, config.theta_prosocial, config.theta_egoistic)?;
    world.road.length = world.road.length.max(front + headroom + 2.0 * config.geometry.length);
    Ok(world)
}

/// Spawns, assigns the population and alternates coordination with partial
/// plan execution until `n_steps` sub-steps are recorded or a collision
/// ends the run. Errors mark the trace failed instead of propagating.
pub fn run_simulation(config: &SimConfig, seed: u64, clock: &dyn Clock) -> WorldTrace {
    let world = config.validate().and_then(|_| initial_world(config, seed));
    run_from(config, seed, world, clock)
}

/// Like [`run_simulation`] from a hand-built initial world (scenario tests).
pub fn run_simulation_from(config: &SimConfig, world: WorldState, clock: &dyn Clock) -> WorldTrace {
    run_from(config, 0, config.validate().map(|_| world), clock)
}

fn run_from(config: &SimConfig, seed: u64, world: Result<WorldState>, clock: &dyn Clock) -> WorldTrace {
    let mut trace = WorldTrace {
        config: config.clone(),
        seed,
        road: config.road,
        profiles: Vec::new(),
        states: Vec::new(),
        controls: Vec::new(),
        violations: Vec::new(),
        replans: Vec::new(),
        collisions: Vec::new(),
        status: RunStatus::Completed,
    };
    if let Err(e) = world.and_then(|w| simulate(config, w, clock, &mut trace)) {
        log::warn!("run with seed {seed} failed: {e}");
        trace.status = RunStatus::Failed(e.to_string());
    }
    trace
}

fn simulate(config: &SimConfig, mut world: WorldState, clock: &dyn Clock, trace: &mut WorldTrace) -> Result<()> {
    let solver = config.effective_solver();
    trace.road = world.road;
    trace.profiles = world.profiles.clone();
    trace.states.push(world.states.clone());

    while trace.steps() < config.n_steps {
        let plans = run_ibr(&world, &config.ibr, &solver, clock)?;
        trace.replans.push(ReplanRecord {
            step: world.step,
            rounds: plans.rounds,
            change_norms: plans.change_norms.clone(),
            non_converged: plans.non_converged,
            solves: plans.diagnostics.clone(),
            failures: plans.failures.clone(),
        });
        let execute = config.execute_steps.min(config.n_steps - trace.steps());
        let outcome = step_world(&world, &plans.plans, execute, solver.dt)?;
        for (states, controls) in outcome.states.into_iter().zip(outcome.controls) {
            if let Some(bad) = states.iter().position(|s| !s.is_finite()) {
                return Err(Error::NonFiniteState(format!("agent {bad} at step {}", trace.steps() + 1)));
            }
            trace.states.push(states);
            trace.controls.push(controls);
            trace.violations.push(plans.violations.clone());
        }
        world = outcome.world;
        if !outcome.collisions.is_empty() {
            log::warn!("seed {}: collision at step {}: {:?}", trace.seed, world.step, outcome.collisions);
            trace.collisions = outcome.collisions;
            trace.status = RunStatus::Collision;
            break;
        }
    }
    Ok(())
}
