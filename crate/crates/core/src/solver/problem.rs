use alloc::vec::Vec;

use super::{Plan, SolverConfig};
use crate::dynamics::{ControlInput, VehicleState};
use crate::error::{Error, Result};
use crate::math::{cos, sin};
use crate::reward::{own_stage_reward, AgentProfile};
use crate::safety::{aggregate_ttc_cost_lenient, ellipse_separation, TtcParams};
use crate::trajectory::DesiredTrajectory;
use crate::world::WorldState;
use crate::AgentId;

/// One vehicle taking part in a best-response problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemAgent {
    pub id: AgentId,
    pub profile: AgentProfile,
    pub initial: VehicleState,
    /// Lane-keeping reference used for this agent's own reward terms.
    pub reference: DesiredTrajectory,
    /// Fixed prediction for non-solved agents; initial guess for shared ones.
    pub plan: Plan,
}

/// The ego's best-response problem. `agents[..n_solved]` carry decision
/// variables (ego first, then its shared-control neighbourhood); the rest
/// are fixed to their predicted plans.
#[derive(Debug, Clone)]
pub struct BestResponseProblem {
    pub agents: Vec<ProblemAgent>,
    pub n_solved: usize,
    /// The ego's candidate references.
    pub desired: Vec<DesiredTrajectory>,
    pub config: SolverConfig,
    /// Weight of each agent's reward in the joint objective.
    pub(crate) coef: Vec<f64>,
    /// Objective contribution of terms that involve fixed agents only.
    pub(crate) constant: f64,
    pub(crate) scale: f64,
    pub(crate) unit_ttc: TtcParams,
}

pub fn assemble_problem(
    ego: AgentId,
    world: &WorldState,
    shared: &[AgentId],
    predictions: &[Plan],
    desired: Vec<DesiredTrajectory>,
    config: &SolverConfig,
) -> Result<BestResponseProblem> {
    let n = world.states.len();
    if ego >= n {
        return Err(Error::UnknownAgent(ego));
    }
    let mut order: Vec<AgentId> = Vec::with_capacity(n);
    order.push(ego);
    for &s in shared {
        if s >= n {
            return Err(Error::UnknownAgent(s));
        }
        if order.contains(&s) {
            return Err(Error::DuplicateAgent(s));
        }
        order.push(s);
    }
    let n_solved = order.len();
    let origin = world.states[ego].position();
    for id in 0..n {
        if order.contains(&id) {
            continue;
        }
        if (world.states[id].position() - origin).norm() <= config.interaction_radius {
            order.push(id);
        }
    }

    let t = config.horizon;
    let mut agents = Vec::with_capacity(order.len());
    for (k, &id) in order.iter().enumerate() {
        let state = world.states[id];
        let plan = match predictions.get(id) {
            Some(p) if p.controls.len() >= t && p.states.len() > t => Plan {
                controls: p.controls[..t].to_vec(),
                states: p.states[..=t].to_vec(),
            },
            _ if k == 0 => Plan::default(),
            _ => return Err(Error::MissingPrediction(id)),
        };
        let lane = world.road.nearest_lane(state.y);
        let reference = DesiredTrajectory::keep_lane(state.x, world.road.lane_center(lane), 1e3, lane);
        agents.push(ProblemAgent { id, profile: world.profiles[id], initial: state, reference, plan });
    }
    if desired.is_empty() {
        return Err(Error::InvalidConfig("ego needs at least one desired trajectory".into()));
    }
    Ok(BestResponseProblem::new(agents, n_solved, desired, *config))
}

impl BestResponseProblem {
    pub(crate) fn new(agents: Vec<ProblemAgent>, n_solved: usize, desired: Vec<DesiredTrajectory>, config: SolverConfig) -> Self {
        let n = agents.len();
        let others = n.saturating_sub(1);
        let mut coef = alloc::vec![0.0; n];
        for a in 0..n_solved {
            let theta = agents[a].profile.svo_theta;
            if others == 0 {
                coef[a] += cos(theta);
                continue;
            }
            coef[a] += others as f64 * cos(theta);
            for (x, c) in coef.iter_mut().enumerate() {
                if x != a {
                    *c += sin(theta);
                }
            }
        }
        let scale = (config.horizon + 1) as f64 * others.max(1) as f64 * n_solved as f64;
        let mut p = Self {
            agents,
            n_solved,
            desired,
            config,
            coef,
            constant: 0.0,
            scale,
            unit_ttc: TtcParams { k_ttc: 1.0, ..config.ttc },
        };
        p.constant = p.fixed_terms();
        p
    }

    pub fn ego(&self) -> &ProblemAgent {
        &self.agents[0]
    }

    pub fn horizon(&self) -> usize {
        self.config.horizon
    }

    pub fn solved_ids(&self) -> impl Iterator<Item = AgentId> + '_ {
        self.agents[..self.n_solved].iter().map(|a| a.id)
    }

    pub fn decision_variable_count(&self) -> usize {
        2 * self.config.horizon * self.n_solved
    }

    /// Ellipse separation groups: one per (solved agent, other vehicle, step).
    pub fn constraint_group_count(&self) -> usize {
        self.n_solved * self.agents.len().saturating_sub(1) * (self.config.horizon + 1)
    }

    /// Reward weight of problem agent `k` in the joint social utility.
    pub fn reward_weight(&self, k: usize) -> f64 {
        self.coef[k]
    }

    fn fixed_terms(&self) -> f64 {
        let t_max = self.config.horizon;
        let n = self.agents.len();
        let mut total = 0.0;
        for x in self.n_solved..n {
            let ag = &self.agents[x];
            let mut s = 0.0;
            for t in 0..=t_max {
                if t > 0 {
                    s += (ag.plan.states[t].position() - ag.plan.states[t - 1].position()).norm();
                }
                total += self.coef[x]
                    * own_stage_reward(&ag.plan.states[t], ag.plan.controls.get(t), s, &ag.reference, &ag.profile);
            }
        }
        for x in self.n_solved..n {
            for y in (x + 1)..n {
                for t in 0..=t_max {
                    total -= self.pair_term(x, y, &self.agents[x].plan.states[t], &self.agents[y].plan.states[t]);
                }
            }
        }
        total
    }

    /// Own-reward contribution of problem agent `a` at step `t`, weighted.
    #[inline]
    pub(crate) fn own_term(
        &self,
        a: usize,
        state: &VehicleState,
        control: Option<&ControlInput>,
        arc: f64,
        desired: &DesiredTrajectory,
    ) -> f64 {
        self.coef[a] * own_stage_reward(state, control, arc, desired, &self.agents[a].profile)
    }

    /// Weighted TTC penalty shared by agents `a` and `b` (both directions), positive.
    #[inline]
    pub(crate) fn pair_term(&self, a: usize, b: usize, sa: &VehicleState, sb: &VehicleState) -> f64 {
        let (pa, pb) = (&self.agents[a].profile, &self.agents[b].profile);
        let mut v = 0.0;
        let wa = self.coef[a] * pa.weights.k_ttc;
        if wa != 0.0 {
            v += wa * aggregate_ttc_cost_lenient(sa, sb, &pa.geometry, &pb.geometry, &self.unit_ttc);
        }
        let wb = self.coef[b] * pb.weights.k_ttc;
        if wb != 0.0 {
            v += wb * aggregate_ttc_cost_lenient(sb, sa, &pb.geometry, &pa.geometry, &self.unit_ttc);
        }
        v
    }

    #[inline]
    pub(crate) fn separation(&self, a: usize, b: usize, sa: &VehicleState, sb: &VehicleState) -> f64 {
        ellipse_separation(
            sa,
            sb,
            &self.agents[a].profile.geometry,
            &self.agents[b].profile.geometry,
            self.config.collision_margin,
        )
    }

    /// Reference tracked by problem agent `a` when the ego follows bank entry `desired`.
    #[inline]
    pub(crate) fn reference_of(&self, a: usize, desired: usize) -> &DesiredTrajectory {
        if a == 0 {
            &self.desired[desired]
        } else {
            &self.agents[a].reference
        }
    }

    /// States of problem agent `k`: `solved[k]` when it is a decision agent.
    #[inline]
    pub(crate) fn states_of<'a>(&'a self, k: usize, solved: &'a [Vec<VehicleState>]) -> &'a [VehicleState] {
        if k < self.n_solved {
            &solved[k]
        } else {
            &self.agents[k].plan.states
        }
    }

    /// Joint social utility of the solved agents for the given states and controls.
    pub fn objective(&self, states: &[Vec<VehicleState>], controls: &[Vec<ControlInput>], desired: usize) -> f64 {
        let n = self.agents.len();
        let t_max = self.config.horizon;
        let mut total = self.constant;
        for a in 0..self.n_solved {
            let reference = self.reference_of(a, desired);
            let mut s = 0.0;
            for t in 0..=t_max {
                if t > 0 {
                    s += (states[a][t].position() - states[a][t - 1].position()).norm();
                }
                total += self.own_term(a, &states[a][t], controls[a].get(t), s, reference);
            }
        }
        for a in 0..self.n_solved {
            for b in 0..n {
                if b == a || (b < self.n_solved && b < a) {
                    continue;
                }
                let sb = self.states_of(b, states);
                for t in 0..=t_max {
                    total -= self.pair_term(a, b, &states[a][t], &sb[t]);
                }
            }
        }
        total
    }
}
