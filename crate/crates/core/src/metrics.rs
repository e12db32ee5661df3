//! Speed metrics: per-agent average speed, individual and population speed
//! improvement ratios, and subgroup statistics.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::world::{RunStatus, WorldTrace};
use crate::AgentId;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("trace is flagged: {0}")]
    Flagged(String),
    #[error("trace has no recorded steps")]
    Empty,
    #[error("unknown agent {0}")]
    UnknownAgent(AgentId),
    #[error("run and baseline differ: {0}")]
    Mismatch(String),
}

/// Mean recorded speed of `agent` over sub-steps 1..N.
pub fn average_speed(trace: &WorldTrace, agent: AgentId) -> Result<f64, MetricsError> {
    match &trace.status {
        RunStatus::Completed => {}
        RunStatus::Collision => return Err(MetricsError::Flagged("collision".into())),
        RunStatus::Failed(r) => return Err(MetricsError::Flagged(r.clone())),
    }
    if agent >= trace.n_agents() {
        return Err(MetricsError::UnknownAgent(agent));
    }
    let steps = &trace.states[1.min(trace.states.len())..];
    if steps.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(steps.iter().map(|s| s[agent].v).sum::<f64>() / steps.len() as f64)
}

/// FNV-1a over the spawn states and desired speeds. Runs that share a seed
/// must share this value to be comparable.
pub fn spawn_checksum(trace: &WorldTrace) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |v: f64| {
        for b in v.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    };
    if let Some(first) = trace.states.first() {
        for s in first {
            eat(s.x);
            eat(s.y);
            eat(s.v);
        }
    }
    for p in &trace.profiles {
        eat(p.v_max);
    }
    h
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RunMetrics {
    pub seed: u64,
    pub p_cooperative: f64,
    pub n_sc: usize,
    pub density: f64,
    /// Average speed per agent.
    pub speeds: Vec<f64>,
    pub population_mean: f64,
    pub thetas: Vec<f64>,
    pub v_max: Vec<f64>,
    pub spawn_checksum: u64,
}

impl RunMetrics {
    /// Metrics of an unflagged trace.
    pub fn from_trace(trace: &WorldTrace) -> Result<Self, MetricsError> {
        let speeds = (0..trace.n_agents()).map(|i| average_speed(trace, i)).collect::<Result<Vec<_>, _>>()?;
        let population_mean = if speeds.is_empty() { 0.0 } else { speeds.iter().sum::<f64>() / speeds.len() as f64 };
        Ok(Self {
            seed: trace.seed,
            p_cooperative: trace.config.p_cooperative,
            n_sc: trace.config.ibr.n_sc(),
            density: trace.config.density,
            speeds,
            population_mean,
            thetas: trace.profiles.iter().map(|p| p.svo_theta).collect(),
            v_max: trace.profiles.iter().map(|p| p.v_max).collect(),
            spawn_checksum: spawn_checksum(trace),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PairedComparison {
    pub run: RunMetrics,
    pub baseline: RunMetrics,
    /// `V_i / V_i^e`; `None` for agents whose baseline speed is zero.
    pub isi: Vec<Option<f64>>,
    /// `sum V_i / sum V_i^e` over the agents with an ISI.
    pub psi: f64,
    pub excluded: Vec<AgentId>,
}

/// Ratios of `run` speeds to `baseline` speeds, agent by agent and in total.
pub fn compute_isi_psi(run: &RunMetrics, baseline: &RunMetrics) -> Result<PairedComparison, MetricsError> {
    if run.seed != baseline.seed {
        return Err(MetricsError::Mismatch(alloc::format!("seed {} vs {}", run.seed, baseline.seed)));
    }
    if run.speeds.len() != baseline.speeds.len() {
        return Err(MetricsError::Mismatch(alloc::format!(
            "{} agents vs {}",
            run.speeds.len(),
            baseline.speeds.len()
        )));
    }
    if run.spawn_checksum != baseline.spawn_checksum {
        return Err(MetricsError::Mismatch("spawn checksum".into()));
    }
    let mut isi = Vec::with_capacity(run.speeds.len());
    let mut excluded = Vec::new();
    let (mut num, mut den) = (0.0, 0.0);
    for (i, (&v, &ve)) in run.speeds.iter().zip(&baseline.speeds).enumerate() {
        if ve > 0.0 {
            isi.push(Some(v / ve));
            num += v;
            den += ve;
        } else {
            isi.push(None);
            excluded.push(i);
        }
    }
    let psi = if den > 0.0 { num / den } else { f64::NAN };
    Ok(PairedComparison { run: run.clone(), baseline: baseline.clone(), isi, psi, excluded })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Grouping {
    /// Upper and lower half by spawn-time desired speed within each run.
    SpeedMedianSplit,
    /// Agents egoistic in every mixed run of their seed.
    PersistentEgoistic,
    /// Agents prosocial in every mixed run of their seed.
    PersistentProsocial,
}

/// Distribution summary; quartiles use linear interpolation between order statistics.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GroupStats {
    pub name: String,
    pub count: usize,
    pub mean: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub values: Vec<f64>,
}

impl GroupStats {
    pub fn from_values(name: &str, mut values: Vec<f64>) -> Self {
        values.sort_by(f64::total_cmp);
        let count = values.len();
        let mean = if count == 0 { f64::NAN } else { values.iter().sum::<f64>() / count as f64 };
        Self {
            name: name.into(),
            count,
            mean,
            q1: quantile(&values, 0.25),
            median: quantile(&values, 0.5),
            q3: quantile(&values, 0.75),
            values,
        }
    }
}

/// Quantile of sorted data by linear interpolation; NaN when empty.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = pos as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SubgroupReport {
    pub grouping: Grouping,
    pub groups: Vec<GroupStats>,
    /// (seed, p) of comparisons left out by the grouping's exclusion rule.
    pub excluded_runs: Vec<(u64, f64)>,
}

fn is_pure(p: f64) -> bool {
    p <= 0.0 || p >= 1.0
}

/// Pools ISI values of `comparisons` into the groups of `grouping`.
/// Persistent groupings skip runs with no mixing (p = 0 or 1), where one of
/// the two groups cannot exist; an agent is persistent when its angle is
/// the same in every remaining run of its seed. `theta_prosocial` tells the
/// two angles apart.
pub fn subgroup_report(comparisons: &[PairedComparison], grouping: Grouping, theta_prosocial: f64) -> SubgroupReport {
    let mut excluded_runs = Vec::new();
    match grouping {
        Grouping::SpeedMedianSplit => {
            let (mut high, mut low) = (Vec::new(), Vec::new());
            for c in comparisons {
                let mut ids: Vec<AgentId> = (0..c.run.v_max.len()).collect();
                ids.sort_by(|&a, &b| c.run.v_max[a].total_cmp(&c.run.v_max[b]).then(a.cmp(&b)));
                let half = ids.len() / 2;
                for (rank, &id) in ids.iter().enumerate() {
                    if let Some(v) = c.isi[id] {
                        if rank < half {
                            low.push(v);
                        } else {
                            high.push(v);
                        }
                    }
                }
            }
            SubgroupReport {
                grouping,
                groups: alloc::vec![GroupStats::from_values("high-speed", high), GroupStats::from_values("low-speed", low)],
                excluded_runs,
            }
        }
        Grouping::PersistentEgoistic | Grouping::PersistentProsocial => {
            let want_prosocial = grouping == Grouping::PersistentProsocial;
            // Per seed: whether each agent kept the wanted angle in every mixed run.
            let mut persistent: BTreeMap<u64, Vec<bool>> = BTreeMap::new();
            for c in comparisons {
                if is_pure(c.run.p_cooperative) {
                    continue;
                }
                let entry = persistent.entry(c.run.seed).or_insert_with(|| alloc::vec![true; c.run.thetas.len()]);
                for (keep, &theta) in entry.iter_mut().zip(&c.run.thetas) {
                    *keep &= (theta == theta_prosocial) == want_prosocial;
                }
            }
            let mut values = Vec::new();
            for c in comparisons {
                if is_pure(c.run.p_cooperative) {
                    excluded_runs.push((c.run.seed, c.run.p_cooperative));
                    continue;
                }
                let members = &persistent[&c.run.seed];
                values.extend(c.isi.iter().zip(members).filter(|(_, &m)| m).filter_map(|(v, _)| *v));
            }
            let name = if want_prosocial { "persistent-prosocial" } else { "persistent-egoistic" };
            SubgroupReport { grouping, groups: alloc::vec![GroupStats::from_values(name, values)], excluded_runs }
        }
    }
}
