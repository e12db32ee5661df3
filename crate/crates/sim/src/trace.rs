//! JSON-lines run traces. The first line is a header tagged with the schema
//! version and carrying everything but the per-step data; then one record
//! per sub-step per agent, in step-major order. Step 0 is the spawn and has
//! no control.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use svo_core::world::{CollisionEvent, ReplanRecord, RunStatus};
use svo_core::{AgentProfile, ControlInput, RoadSpec, SimConfig, VehicleState, WorldTrace};

use crate::error::{Result, SimError};

pub const TRACE_SCHEMA: &str = "svo-sim/trace/v1";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    schema: String,
    run_id: String,
    seed: u64,
    n_agents: usize,
    steps: usize,
    status: RunStatus,
    collisions: Vec<CollisionEvent>,
    road: RoadSpec,
    profiles: Vec<AgentProfile>,
    config: SimConfig,
    replans: Vec<ReplanRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub agent_id: usize,
    pub x: f64,
    pub y: f64,
    pub phi: f64,
    pub delta: f64,
    pub v: f64,
    pub delta_u: Option<f64>,
    pub v_u: Option<f64>,
    pub violation: Option<f64>,
}

pub fn write_trace<W: Write>(mut out: W, run_id: &str, trace: &WorldTrace) -> Result<()> {
    let header = Header {
        schema: TRACE_SCHEMA.into(),
        run_id: run_id.into(),
        seed: trace.seed,
        n_agents: trace.n_agents(),
        steps: trace.steps(),
        status: trace.status.clone(),
        collisions: trace.collisions.clone(),
        road: trace.road,
        profiles: trace.profiles.clone(),
        config: trace.config.clone(),
        replans: trace.replans.clone(),
    };
    let io = |e| SimError::io(run_id, e);
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n").map_err(io)?;
    for (t, states) in trace.states.iter().enumerate() {
        for (agent_id, s) in states.iter().enumerate() {
            let control = t.checked_sub(1).map(|k| trace.controls[k][agent_id]);
            let record = StepRecord {
                t,
                agent_id,
                x: s.x,
                y: s.y,
                phi: s.phi,
                delta: s.delta,
                v: s.v,
                delta_u: control.map(|u| u.delta_u),
                v_u: control.map(|u| u.v_u),
                violation: t.checked_sub(1).map(|k| trace.violations[k][agent_id]),
            };
            serde_json::to_writer(&mut out, &record)?;
            out.write_all(b"\n").map_err(io)?;
        }
    }
    out.flush().map_err(io)
}

/// Reads a trace back, checking the schema tag and that every (step, agent)
/// record is present exactly once and in order.
pub fn read_trace<R: BufRead>(input: R) -> Result<(String, WorldTrace)> {
    let mut lines = input.lines();
    let mut next = || lines.next().transpose().map_err(|e| SimError::io("<trace>", e));
    let first = next()?.ok_or_else(|| SimError::Trace("empty trace".into()))?;
    let header: Header = serde_json::from_str(&first)?;
    if header.schema != TRACE_SCHEMA {
        return Err(SimError::Trace(format!("unsupported schema {:?}", header.schema)));
    }
    let n = header.n_agents;
    let mut trace = WorldTrace {
        config: header.config,
        seed: header.seed,
        road: header.road,
        profiles: header.profiles,
        states: Vec::with_capacity(header.steps + 1),
        controls: Vec::with_capacity(header.steps),
        violations: Vec::with_capacity(header.steps),
        replans: header.replans,
        collisions: header.collisions,
        status: header.status,
    };
    if trace.profiles.len() != n {
        return Err(SimError::Trace(format!("{} profiles for {n} agents", trace.profiles.len())));
    }
    let expected_steps = if n == 0 { 0 } else { header.steps + 1 };
    for t in 0..expected_steps {
        let (mut states, mut controls, mut violations) = (Vec::with_capacity(n), Vec::new(), Vec::new());
        for agent in 0..n {
            let line = next()?.ok_or_else(|| SimError::Trace(format!("missing record t={t} agent={agent}")))?;
            let r: StepRecord = serde_json::from_str(&line)?;
            if (r.t, r.agent_id) != (t, agent) {
                return Err(SimError::Trace(format!(
                    "expected record t={t} agent={agent}, found t={} agent={}",
                    r.t, r.agent_id
                )));
            }
            states.push(VehicleState { x: r.x, y: r.y, phi: r.phi, delta: r.delta, v: r.v });
            if t > 0 {
                match (r.delta_u, r.v_u, r.violation) {
                    (Some(delta_u), Some(v_u), Some(violation)) => {
                        controls.push(ControlInput { delta_u, v_u });
                        violations.push(violation);
                    }
                    _ => return Err(SimError::Trace(format!("record t={t} agent={agent} lacks its control"))),
                }
            }
        }
        trace.states.push(states);
        if t > 0 {
            trace.controls.push(controls);
            trace.violations.push(violations);
        }
    }
    if let Some(extra) = next()? {
        if !extra.trim().is_empty() {
            return Err(SimError::Trace("records beyond the declared step count".into()));
        }
    }
    Ok((header.run_id, trace))
}
