//! Iterative best response with imagined shared control.
//!
//! Each round every agent solves its own best-response problem in which a
//! small neighbourhood of vehicles is optimized jointly with it. Only the
//! solving agent keeps its part of the solution; the neighbours' controls are
//! imagined. The neighbourhood shrinks round by round down to zero.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dynamics::rollout;
use crate::error::{Error, Result};
use crate::math::ceil;
use crate::solver::{
    assemble_problem, constraint_violation, select_solution, solve_time_limited, Clock, Plan, SolveCandidate,
    SolverConfig,
};
use crate::trajectory::{generate_bank, generate_warm_starts, BankConfig, TrajectoryLabel};
use crate::world::WorldState;
use crate::AgentId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum AgentOrder {
    /// Descending longitudinal position, ties by id.
    FrontToBack,
    /// A fresh seeded shuffle every round.
    RandomPerRound { seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct IbrConfig {
    /// Shared-control neighbourhood size per round; its length is the number of rounds.
    pub shrink_schedule: Vec<usize>,
    pub agent_order: AgentOrder,
    /// A round in which no plan moves more than this (control-sequence norm) ends the iteration.
    pub delta_conv: f64,
    pub bank: BankConfig,
}

impl IbrConfig {
    /// `[n_sc, ceil(n_sc / 2), 0]`, collapsing repeated sizes, so `n_sc = 1` gives `[1, 0]`
    /// and `n_sc = 0` a single egoistic round.
    pub fn with_shared_control(n_sc: usize) -> Self {
        let mut schedule = vec![n_sc];
        let half = (ceil(n_sc as f64 / 2.0)) as usize;
        if half < n_sc && half > 0 {
            schedule.push(half);
        }
        if n_sc > 0 {
            schedule.push(0);
        }
        Self {
            shrink_schedule: schedule,
            agent_order: AgentOrder::FrontToBack,
            delta_conv: 1e-2,
            bank: BankConfig::default(),
        }
    }

    pub fn rounds(&self) -> usize {
        self.shrink_schedule.len()
    }

    /// Initial neighbourhood size.
    pub fn n_sc(&self) -> usize {
        self.shrink_schedule.first().copied().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.shrink_schedule;
        if s.last() != Some(&0) {
            return Err(Error::InvalidConfig("shrink schedule must end with 0".into()));
        }
        if s.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::InvalidConfig(format!("shrink schedule {s:?} must be non-increasing")));
        }
        if !(self.delta_conv >= 0.0) {
            return Err(Error::InvalidConfig("delta_conv must be non-negative".into()));
        }
        Ok(())
    }
}

impl Default for IbrConfig {
    fn default() -> Self {
        Self::with_shared_control(1)
    }
}

/// Outcome of one agent's most recent best-response solve.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SolveDiagnostics {
    pub violation: f64,
    pub wall_time: f64,
    pub converged: bool,
    pub iterations: usize,
    pub label: TrajectoryLabel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanSet {
    /// One plan per agent, indexed by id.
    pub plans: Vec<Plan>,
    /// Rounds actually executed.
    pub rounds: usize,
    /// Largest control-sequence change of any agent, per executed round.
    pub change_norms: Vec<f64>,
    /// Violation of each final plan against the others' final plans.
    pub violations: Vec<f64>,
    /// True when some final plan exceeds the feasibility threshold.
    pub non_converged: bool,
    pub diagnostics: Vec<Option<SolveDiagnostics>>,
    /// Solves that failed; the agent kept its previous plan.
    pub failures: Vec<(AgentId, String)>,
}

/// The `size` nearest other vehicles within `radius`, by distance then id.
pub fn neighborhood(agent: AgentId, world: &WorldState, size: usize, radius: f64) -> Vec<AgentId> {
    if size == 0 || agent >= world.states.len() {
        return Vec::new();
    }
    let origin = world.states[agent].position();
    let mut near: Vec<(f64, AgentId)> = world
        .states
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != agent)
        .map(|(j, s)| ((s.position() - origin).norm(), j))
        .filter(|&(d, _)| d <= radius)
        .collect();
    near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    near.into_iter().take(size).map(|(_, j)| j).collect()
}

fn agent_order(world: &WorldState, order: AgentOrder, round: usize) -> Vec<AgentId> {
    let mut ids: Vec<AgentId> = (0..world.states.len()).collect();
    match order {
        AgentOrder::FrontToBack => {
            ids.sort_by(|&a, &b| world.states[b].x.total_cmp(&world.states[a].x).then(a.cmp(&b)));
        }
        AgentOrder::RandomPerRound { seed } => {
            let mix = seed ^ ((world.step as u64) << 32) ^ round as u64;
            ids.shuffle(&mut ChaCha8Rng::seed_from_u64(mix));
        }
    }
    ids
}

fn control_change(a: &Plan, b: &Plan) -> f64 {
    let mut s = 0.0;
    for (u, w) in a.controls.iter().zip(&b.controls) {
        let (d1, d2) = (u.delta_u - w.delta_u, u.v_u - w.v_u);
        s += d1 * d1 + d2 * d2;
    }
    crate::math::sqrt(s)
}

/// Lane-keeping plan every agent starts from.
fn initial_plan(world: &WorldState, id: AgentId, ibr: &IbrConfig, solver: &SolverConfig) -> Result<Plan> {
    let s = world.states[id];
    let geom = &world.profiles[id].geometry;
    let bank = generate_bank(&s, &world.road, &ibr.bank);
    let ws = generate_warm_starts(&s, &bank[..1], solver.horizon, solver.dt, geom, &solver.limits);
    let controls: Vec<_> = ws[0].controls.iter().map(|u| solver.limits.clamp(*u)).collect();
    let states = rollout(&s, &controls, solver.dt, geom)?;
    Ok(Plan { controls, states })
}

fn best_response(
    world: &WorldState,
    id: AgentId,
    shared: &[AgentId],
    plans: &[Plan],
    ibr: &IbrConfig,
    solver: &SolverConfig,
    clock: &dyn Clock,
) -> Result<(SolveCandidate, TrajectoryLabel)> {
    let s = world.states[id];
    let bank = generate_bank(&s, &world.road, &ibr.bank);
    let labels: Vec<TrajectoryLabel> = bank.iter().map(|b| b.label).collect();
    let ws = generate_warm_starts(&s, &bank, solver.horizon, solver.dt, &world.profiles[id].geometry, &solver.limits);
    let problem = assemble_problem(id, world, shared, plans, bank, solver)?;
    let mut cands = solve_time_limited(&problem, &ws, clock);
    let pick = select_solution(&cands, solver.eps_f, solver.k_slack)
        .ok_or_else(|| Error::InvalidConfig("no warm starts".into()))?;
    let best = cands.swap_remove(pick);
    if !best.states[0].iter().all(|st| st.is_finite()) {
        return Err(Error::NonFiniteState(format!("plan of agent {id}")));
    }
    let label = labels[best.desired];
    Ok((best, label))
}

/// Coordinates one replanning cycle for every agent in `world`.
pub fn run_ibr(world: &WorldState, ibr: &IbrConfig, solver: &SolverConfig, clock: &dyn Clock) -> Result<PlanSet> {
    ibr.validate()?;
    let n = world.states.len();
    if world.profiles.len() != n {
        return Err(Error::InvalidConfig(format!("{} states but {} profiles", n, world.profiles.len())));
    }
    let mut plans = Vec::with_capacity(n);
    for id in 0..n {
        plans.push(initial_plan(world, id, ibr, solver)?);
    }
    let mut diagnostics = vec![None; n];
    let mut failures = Vec::new();
    let mut change_norms = Vec::new();

    for (round, &size) in ibr.shrink_schedule.iter().enumerate() {
        let mut max_change: f64 = 0.0;
        for id in agent_order(world, ibr.agent_order, round) {
            let shared = neighborhood(id, world, size, solver.interaction_radius);
            match best_response(world, id, &shared, &plans, ibr, solver, clock) {
                Ok((cand, label)) => {
                    let mut it = cand.controls.into_iter().zip(cand.states);
                    let (controls, states) = it.next().expect("ego is always solved");
                    let new = Plan { controls, states };
                    max_change = max_change.max(control_change(&new, &plans[id]));
                    plans[id] = new;
                    diagnostics[id] = Some(SolveDiagnostics {
                        violation: cand.violation,
                        wall_time: cand.wall_time,
                        converged: cand.converged,
                        iterations: cand.iterations,
                        label,
                    });
                }
                Err(e) => {
                    log::warn!("agent {id} keeps its previous plan in round {round}: {e}");
                    failures.push((id, format!("round {round}: {e}")));
                }
            }
        }
        change_norms.push(max_change);
        log::debug!("step {} round {round} (n_sc {size}): max plan change {max_change:.3e}", world.step);
        if max_change <= ibr.delta_conv {
            break;
        }
    }

    let violations = final_violations(world, &plans, solver)?;
    let non_converged = violations.iter().any(|&v| v > solver.eps_f);
    Ok(PlanSet { rounds: change_norms.len(), plans, change_norms, violations, non_converged, diagnostics, failures })
}

/// Violation of every agent's plan with all other plans held fixed.
pub fn final_violations(world: &WorldState, plans: &[Plan], solver: &SolverConfig) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(plans.len());
    for (id, plan) in plans.iter().enumerate() {
        let mut bank = generate_bank(&world.states[id], &world.road, &BankConfig::default());
        bank.truncate(1);
        let problem = assemble_problem(id, world, &[], plans, bank, solver)?;
        let cand = SolveCandidate {
            controls: vec![plan.controls.clone()],
            states: vec![plan.states.clone()],
            objective: 0.0,
            violation: 0.0,
            wall_time: 0.0,
            converged: true,
            iterations: 0,
            desired: 0,
        };
        out.push(constraint_violation(&cand, &problem));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::VehicleState;
    use crate::reward::AgentProfile;
    use crate::road::RoadSpec;
    use crate::solver::FrozenClock;

    fn world(states: Vec<VehicleState>, thetas: &[f64], vmax: &[f64]) -> WorldState {
        let profiles = thetas.iter().zip(vmax).map(|(&t, &v)| AgentProfile::new(t, v)).collect();
        WorldState { step: 0, states, profiles, road: RoadSpec::default() }
    }

    fn lane(k: usize) -> f64 {
        RoadSpec::default().lane_center(k)
    }

    #[test]
    fn schedules() {
        assert_eq!(IbrConfig::with_shared_control(1).shrink_schedule, vec![1, 0]);
        assert_eq!(IbrConfig::with_shared_control(2).shrink_schedule, vec![2, 1, 0]);
        assert_eq!(IbrConfig::with_shared_control(4).shrink_schedule, vec![4, 2, 0]);
        assert_eq!(IbrConfig::with_shared_control(0).shrink_schedule, vec![0]);
        let bad = IbrConfig { shrink_schedule: vec![1, 2, 0], ..IbrConfig::default() };
        assert!(bad.validate().is_err());
        let bad = IbrConfig { shrink_schedule: vec![2, 1], ..IbrConfig::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn neighborhood_rules() {
        let w = world(
            vec![
                VehicleState::new(0.0, 0.0, 0.0, 0.0, 10.0),
                VehicleState::new(8.0, 0.0, 0.0, 0.0, 10.0),
                VehicleState::new(-10.0, 0.0, 0.0, 0.0, 10.0),
                VehicleState::new(10.0, 0.0, 0.0, 0.0, 10.0),
                VehicleState::new(60.0, 0.0, 0.0, 0.0, 10.0),
            ],
            &[0.0; 5],
            &[12.0; 5],
        );
        assert!(neighborhood(0, &w, 0, 50.0).is_empty());
        assert_eq!(neighborhood(0, &w, 1, 50.0), vec![1]);
        // 2 and 3 are equidistant: lower id first
        assert_eq!(neighborhood(0, &w, 2, 50.0), vec![1, 2]);
        assert_eq!(neighborhood(0, &w, 10, 50.0), vec![1, 2, 3]);
    }

    #[test]
    fn front_to_back_order() {
        let w = world(
            vec![
                VehicleState::new(0.0, 0.0, 0.0, 0.0, 10.0),
                VehicleState::new(30.0, 0.0, 0.0, 0.0, 10.0),
                VehicleState::new(30.0, 3.7, 0.0, 0.0, 10.0),
            ],
            &[0.0; 3],
            &[12.0; 3],
        );
        assert_eq!(agent_order(&w, AgentOrder::FrontToBack, 0), vec![1, 2, 0]);
        let a = agent_order(&w, AgentOrder::RandomPerRound { seed: 3 }, 1);
        assert_eq!(a, agent_order(&w, AgentOrder::RandomPerRound { seed: 3 }, 1));
    }

    #[test]
    fn distant_agents_plan_as_if_alone() {
        let solver = SolverConfig::default();
        let ibr = IbrConfig::default();
        let a = VehicleState::new(0.0, lane(1), 0.0, 0.0, 12.0);
        let b = VehicleState::new(300.0, lane(0), 0.0, 0.0, 12.5);
        let both = run_ibr(&world(vec![a, b], &[0.05, 0.7], &[12.0, 13.0]), &ibr, &solver, &FrozenClock).unwrap();
        let only_a = run_ibr(&world(vec![a], &[0.05], &[12.0]), &ibr, &solver, &FrozenClock).unwrap();
        let only_b = run_ibr(&world(vec![b], &[0.7], &[13.0]), &ibr, &solver, &FrozenClock).unwrap();
        assert_eq!(both.plans[0], only_a.plans[0]);
        assert_eq!(both.plans[1], only_b.plans[0]);
    }

    #[test]
    fn violation_flag_matches_recomputation_and_is_deterministic() {
        let solver = SolverConfig::default();
        let ibr = IbrConfig::with_shared_control(2);
        let w = world(
            vec![
                VehicleState::new(0.0, lane(1), 0.0, 0.0, 13.4),
                VehicleState::new(14.0, lane(1), 0.0, 0.0, 11.2),
                VehicleState::new(6.0, lane(0), 0.0, 0.0, 12.0),
            ],
            &[0.05, core::f64::consts::FRAC_PI_4, 0.05],
            &[13.4, 11.2, 12.0],
        );
        let a = run_ibr(&w, &ibr, &solver, &FrozenClock).unwrap();
        let b = run_ibr(&w, &ibr, &solver, &FrozenClock).unwrap();
        assert_eq!(a, b);
        let again = final_violations(&w, &a.plans, &solver).unwrap();
        assert_eq!(again, a.violations);
        assert_eq!(a.non_converged, again.iter().any(|&v| v > solver.eps_f));
        assert!(a.change_norms.iter().all(|c| c.is_finite()));
        assert!(a.rounds >= 1 && a.rounds <= 3);
    }
}
