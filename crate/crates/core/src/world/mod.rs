//! Highway world: spawning, population assignment and the simulation loop.

mod sim;

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{step_unchecked, ControlInput, VehicleGeometry, VehicleState};
use crate::error::{Error, Result};
use crate::math::{ln, round};
use crate::reward::{AgentProfile, CostWeights};
use crate::road::RoadSpec;
use crate::safety::collision_check;
use crate::solver::Plan;
use crate::AgentId;

pub use sim::{initial_world, run_simulation, run_simulation_from, CollisionEvent, ReplanRecord, RunStatus, SimConfig, WorldTrace};

/// Snapshot of every vehicle at one simulation step.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WorldState {
    pub step: usize,
    pub states: Vec<VehicleState>,
    pub profiles: Vec<AgentProfile>,
    pub road: RoadSpec,
}

/// Range of desired speeds, m/s.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct SpeedRange {
    pub min: f64,
    pub max: f64,
}

impl Default for SpeedRange {
    fn default() -> Self {
        Self { min: 11.2, max: 13.4 }
    }
}

impl SpeedRange {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.min + self.max)
    }
}

/// Mean spacing between consecutive vehicles of one lane, m.
pub fn mean_lane_gap(density_veh_per_hour: f64, lane_count: usize, v_nom: f64) -> f64 {
    v_nom * 3600.0 * lane_count as f64 / density_veh_per_hour
}

/// Minimum spawn spacing: one and a half vehicle lengths, center to center.
pub fn min_spawn_gap(geom: &VehicleGeometry) -> f64 {
    1.5 * geom.length
}

/// Places `n_agents` lane-centered vehicles with exponential per-lane
/// spacing, driving at their desired speed. Profiles start egoistic with
/// `weights` and `geometry`; see [`assign_population`].
#[allow(clippy::too_many_arguments)]
pub fn spawn_vehicles(
    seed: u64,
    n_agents: usize,
    density_veh_per_hour: f64,
    road: &RoadSpec,
    speeds: &SpeedRange,
    weights: &CostWeights,
    geometry: &VehicleGeometry,
    theta_egoistic: f64,
) -> Result<WorldState> {
    if n_agents == 0 {
        return Err(Error::InvalidConfig("at least one agent is required".into()));
    }
    if !(density_veh_per_hour > 0.0 && density_veh_per_hour.is_finite()) {
        return Err(Error::InvalidConfig("density must be positive".into()));
    }
    if road.lane_count == 0 || !(road.lane_width > 0.0) {
        return Err(Error::InvalidConfig("road needs at least one lane of positive width".into()));
    }
    if !(speeds.min > 0.0 && speeds.max >= speeds.min) {
        return Err(Error::InvalidConfig("speed range must be positive and ordered".into()));
    }
    let min_gap = min_spawn_gap(geometry);
    let per_lane = n_agents.div_ceil(road.lane_count);
    let required = per_lane as f64 * min_gap;
    if road.length < required {
        return Err(Error::RoadTooShort { length: road.length, required });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lanes: Vec<usize> = (0..n_agents).map(|i| i % road.lane_count).collect();
    lanes.shuffle(&mut rng);

    let mean_gap = mean_lane_gap(density_veh_per_hour, road.lane_count, speeds.midpoint());
    let mut cursor: Vec<Option<f64>> = vec![None; road.lane_count];
    let mut states = Vec::with_capacity(n_agents);
    let mut profiles = Vec::with_capacity(n_agents);
    for &lane in &lanes {
        // Inverse-CDF exponential draw; 1 - u avoids ln(0).
        let u: f64 = rng.gen();
        let gap = -mean_gap * ln(1.0 - u);
        let x = match cursor[lane] {
            None => gap,
            Some(prev) => prev + gap.max(min_gap),
        };
        cursor[lane] = Some(x);
        let v_max = if speeds.max > speeds.min { rng.gen_range(speeds.min..=speeds.max) } else { speeds.min };
        states.push(VehicleState::new(x, road.lane_center(lane), 0.0, 0.0, v_max));
        profiles.push(AgentProfile { svo_theta: theta_egoistic, v_max, weights: *weights, geometry: *geometry });
    }
    Ok(WorldState { step: 0, states, profiles, road: *road })
}

/// Gives exactly `round(p n)` agents the prosocial angle and the rest the
/// egoistic one. The prosocial set is a prefix of a seeded permutation, so
/// under one seed it only grows with `p`.
pub fn assign_population(
    world: &WorldState,
    seed: u64,
    p_cooperative: f64,
    theta_prosocial: f64,
    theta_egoistic: f64,
) -> Result<WorldState> {
    if !(0.0..=1.0).contains(&p_cooperative) {
        return Err(Error::InvalidConfig("p_cooperative must lie in [0, 1]".into()));
    }
    let n = world.profiles.len();
    let count = round(p_cooperative * n as f64) as usize;
    let order = population_order(n, seed);
    let mut out = world.clone();
    for p in &mut out.profiles {
        p.svo_theta = theta_egoistic;
    }
    for &id in &order[..count] {
        out.profiles[id].svo_theta = theta_prosocial;
    }
    Ok(out)
}

/// Order in which agents turn prosocial as the proportion grows.
pub fn population_order(n: usize, seed: u64) -> Vec<AgentId> {
    let mut ids: Vec<AgentId> = (0..n).collect();
    // Decorrelated from the spawn stream of the same seed.
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5e_ed50_c1a1_u64));
    ids
}

/// Result of executing part of every plan.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub world: WorldState,
    /// States after each executed sub-step.
    pub states: Vec<Vec<VehicleState>>,
    /// Controls applied at each executed sub-step.
    pub controls: Vec<Vec<ControlInput>>,
    /// Overlaps found after the last executed sub-step; execution stops there.
    pub collisions: Vec<CollisionEvent>,
}

/// Applies the first `execute_steps` controls of every plan, checking all
/// pairs for overlap after each sub-step. Stops after the first sub-step
/// with a collision.
pub fn step_world(world: &WorldState, plans: &[Plan], execute_steps: usize, dt: f64) -> Result<StepOutcome> {
    let n = world.states.len();
    if plans.len() != n {
        return Err(Error::InvalidConfig("one plan per agent is required".into()));
    }
    if let Some(p) = plans.iter().find(|p| p.controls.len() < execute_steps) {
        return Err(Error::HorizonMismatch { expected: execute_steps, found: p.controls.len() });
    }
    let mut cur = world.clone();
    let mut out = StepOutcome { world: cur.clone(), states: Vec::new(), controls: Vec::new(), collisions: Vec::new() };
    for k in 0..execute_steps {
        let controls: Vec<ControlInput> = plans.iter().map(|p| p.controls[k]).collect();
        for (i, s) in cur.states.iter_mut().enumerate() {
            *s = step_unchecked(s, &controls[i], dt, &cur.profiles[i].geometry);
        }
        cur.step += 1;
        out.states.push(cur.states.clone());
        out.controls.push(controls);
        let found = collisions_at(&cur);
        if !found.is_empty() {
            out.collisions = found;
            break;
        }
    }
    out.world = cur;
    Ok(out)
}

/// Every overlapping pair in `world`.
pub fn collisions_at(world: &WorldState) -> Vec<CollisionEvent> {
    let mut out = Vec::new();
    let n = world.states.len();
    for a in 0..n {
        for b in (a + 1)..n {
            let (sa, sb) = (&world.states[a], &world.states[b]);
            if (sa.position() - sb.position()).norm() > 2.0 * (world.profiles[a].geometry.length + world.profiles[b].geometry.length) {
                continue;
            }
            if collision_check(sa, sb, &world.profiles[a].geometry, &world.profiles[b].geometry) {
                out.push(CollisionEvent { step: world.step, agents: (a, b) });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn spawn(seed: u64, n: usize) -> WorldState {
        spawn_vehicles(
            seed,
            n,
            3000.0,
            &RoadSpec::default(),
            &SpeedRange::default(),
            &CostWeights::default(),
            &VehicleGeometry::default(),
            0.05,
        )
        .unwrap()
    }

    #[test]
    fn mean_gap_formula() {
        assert_abs_diff_eq!(mean_lane_gap(3000.0, 3, 12.3), 44.28, epsilon = 1e-9);
    }

    #[test]
    fn single_agent_is_lane_centered_at_desired_speed() {
        let w = spawn(1, 1);
        let s = w.states[0];
        let road = RoadSpec::default();
        assert_eq!(s.y, road.lane_center(road.nearest_lane(s.y)));
        assert_eq!(s.v, w.profiles[0].v_max);
        assert_eq!((s.phi, s.delta), (0.0, 0.0));
    }

    #[test]
    fn spawn_is_seeded() {
        assert_eq!(spawn(9, 24), spawn(9, 24));
        assert_ne!(spawn(9, 24), spawn(10, 24));
    }

    #[test]
    fn short_road_is_rejected() {
        let road = RoadSpec { length: 20.0, ..RoadSpec::default() };
        let err = spawn_vehicles(0, 24, 3000.0, &road, &SpeedRange::default(), &CostWeights::default(), &VehicleGeometry::default(), 0.05);
        match err {
            Err(Error::RoadTooShort { required, .. }) => assert_abs_diff_eq!(required, 8.0 * 6.75, epsilon = 1e-9),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empirical_gap_mean() {
        // Average gap between same-lane neighbours over many seeds approaches
        // the configured mean (the minimum gap truncation shifts it slightly up).
        let mut sum = 0.0;
        let mut count = 0.0;
        for seed in 0..200 {
            let w = spawn(seed, 24);
            for lane in 0..3 {
                let mut xs: Vec<f64> = w
                    .states
                    .iter()
                    .filter(|s| w.road.nearest_lane(s.y) == lane)
                    .map(|s| s.x)
                    .collect();
                xs.sort_by(f64::total_cmp);
                for pair in xs.windows(2) {
                    sum += pair[1] - pair[0];
                    count += 1.0;
                }
            }
        }
        let mean = sum / count;
        // E[max(X, m)] for X ~ Exp(mean 44.28), m = 6.75
        let mu = 44.28;
        let expected = 6.75 + mu * (-6.75_f64 / mu).exp();
        assert!((mean - expected).abs() / expected < 0.03, "{mean} vs {expected}");
    }

    #[test]
    fn population_counts() {
        let w = spawn(3, 24);
        let count = |p: f64| {
            assign_population(&w, 3, p, core::f64::consts::FRAC_PI_4, 0.05)
                .unwrap()
                .profiles
                .iter()
                .filter(|p| p.svo_theta == core::f64::consts::FRAC_PI_4)
                .count()
        };
        assert_eq!(count(0.0), 0);
        assert_eq!(count(0.25), 6);
        assert_eq!(count(1.0), 24);
        assert!(assign_population(&w, 3, 1.5, 0.7, 0.05).is_err());
    }

    #[test]
    fn coasting_far_apart_advances_positions() {
        let w = spawn(4, 6);
        let plans: Vec<Plan> = w
            .states
            .iter()
            .map(|_| Plan { controls: vec![ControlInput::ZERO; 10], states: vec![] })
            .collect();
        let out = step_world(&w, &plans, 2, 0.2).unwrap();
        for (a, b) in w.states.iter().zip(&out.world.states) {
            assert_abs_diff_eq!(b.x - a.x, a.v * 0.4, epsilon = 1e-9);
        }
        assert_eq!(out.world.step, 2);
        assert_eq!(out.states.len(), 2);
    }

    #[test]
    fn engineered_overlap_is_recorded() {
        let mut w = spawn(4, 2);
        w.states[0] = VehicleState::new(0.0, 1.85, 0.0, 0.0, 10.0);
        w.states[1] = VehicleState::new(6.0, 1.85, 0.0, 0.0, 0.0);
        let plans = vec![Plan { controls: vec![ControlInput::ZERO; 4], states: vec![] }; 2];
        let out = step_world(&w, &plans, 4, 0.2).unwrap();
        assert_eq!(out.collisions.len(), 1);
        assert_eq!(out.collisions[0].agents, (0, 1));
        assert!(out.states.len() < 4);
    }

    proptest! {
        #[test]
        fn prosocial_sets_are_nested(seed in any::<u64>(), n in 1usize..40, p1 in 0.0..1.0f64, p2 in 0.0..1.0f64) {
            let w = spawn(seed % 1000, n);
            let (lo, hi) = if p1 <= p2 { (p1, p2) } else { (p2, p1) };
            let a = assign_population(&w, seed, lo, 0.7, 0.05).unwrap();
            let b = assign_population(&w, seed, hi, 0.7, 0.05).unwrap();
            for (x, y) in a.profiles.iter().zip(&b.profiles) {
                prop_assert!(!(x.svo_theta == 0.7 && y.svo_theta != 0.7));
            }
        }

        #[test]
        fn spawn_respects_minimum_gap(seed in any::<u64>(), n in 1usize..40, density in 500.0..9000.0f64) {
            let w = spawn_vehicles(seed, n, density, &RoadSpec::default(), &SpeedRange::default(),
                &CostWeights::default(), &VehicleGeometry::default(), 0.05).unwrap();
            for a in 0..n {
                let p = &w.profiles[a];
                prop_assert!(p.v_max >= 11.2 && p.v_max <= 13.4);
                for b in (a + 1)..n {
                    if w.states[a].y == w.states[b].y {
                        prop_assert!((w.states[a].x - w.states[b].x).abs() >= 6.75 - 1e-9);
                    }
                }
            }
            prop_assert!(collisions_at(&w).is_empty());
        }
    }
}
