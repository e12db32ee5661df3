//! Experiment matrix: runs every (seed, proportion, variant) combination on
//! a worker pool and pairs each mixed run with the fully egoistic run of
//! the same seed and variant.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::Serialize;
use svo_core::metrics::{subgroup_report, GroupStats, Grouping, SubgroupReport};
use svo_core::solver::{Clock, FrozenClock, WallClock};
use svo_core::world::RunStatus;
use svo_core::{compute_isi_psi, run_simulation, IbrConfig, PairedComparison, RunMetrics, SimConfig, WorldTrace};

use crate::config::MatrixConfig;
use crate::error::{Result, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunSpec {
    pub seed: u64,
    pub p_cooperative: f64,
    pub n_sc: usize,
    pub density: f64,
    pub n_agents: usize,
}

impl RunSpec {
    pub fn run_id(&self) -> String {
        format!(
            "seed{}-p{:.3}-nsc{}-d{}-n{}",
            self.seed, self.p_cooperative, self.n_sc, self.density, self.n_agents
        )
    }

    pub fn config(&self, base: &SimConfig) -> SimConfig {
        SimConfig {
            n_agents: self.n_agents,
            density: self.density,
            p_cooperative: self.p_cooperative,
            ibr: IbrConfig { shrink_schedule: IbrConfig::with_shared_control(self.n_sc).shrink_schedule, ..base.ibr.clone() },
            ..base.clone()
        }
    }

    fn cmp_key(&self, other: &Self) -> Ordering {
        self.seed
            .cmp(&other.seed)
            .then(self.p_cooperative.total_cmp(&other.p_cooperative))
            .then(self.n_sc.cmp(&other.n_sc))
            .then(self.density.total_cmp(&other.density))
            .then(self.n_agents.cmp(&other.n_agents))
    }

    fn same_cell(&self, other: &Self) -> bool {
        self.seed == other.seed && self.same_variant(other)
    }

    fn same_variant(&self, other: &Self) -> bool {
        self.n_sc == other.n_sc && self.density == other.density && self.n_agents == other.n_agents
    }
}

/// All runs of the matrix, deduplicated, ordered by (seed, p, n_sc, density).
pub fn plan_runs(base: &SimConfig, matrix: &MatrixConfig) -> Vec<RunSpec> {
    let mut specs: Vec<RunSpec> = matrix
        .variants
        .iter()
        .flat_map(|v| {
            matrix.seeds.iter().flat_map(move |&seed| {
                matrix.proportions.iter().map(move |&p| RunSpec {
                    seed,
                    p_cooperative: p,
                    n_sc: v.n_sc,
                    density: v.density,
                    n_agents: v.n_agents.unwrap_or(base.n_agents),
                })
            })
        })
        .collect();
    specs.sort_by(RunSpec::cmp_key);
    specs.dedup_by(|a, b| a.cmp_key(b) == Ordering::Equal);
    specs
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub spec: RunSpec,
    pub trace: WorldTrace,
    /// `Err` holds why the run cannot enter a comparison.
    pub metrics: std::result::Result<RunMetrics, String>,
}

pub fn execute_run(base: &SimConfig, spec: RunSpec) -> RunOutcome {
    let config = spec.config(base);
    log::info!("run {} started", spec.run_id());
    let trace = if config.deterministic {
        run_simulation(&config, spec.seed, &FrozenClock)
    } else {
        run_simulation(&config, spec.seed, &WallClock::default() as &dyn Clock)
    };
    let metrics = RunMetrics::from_trace(&trace).map_err(|e| e.to_string());
    log::info!("run {} finished: {:?}", spec.run_id(), trace.status);
    RunOutcome { spec, trace, metrics }
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub spec: RunSpec,
    pub baseline_spec: RunSpec,
    pub paired: PairedComparison,
}

#[derive(Debug, Clone, Serialize)]
pub struct Skipped {
    pub run_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct VariantReport {
    pub n_sc: usize,
    pub density: f64,
    pub n_agents: usize,
    /// ISI against the fully egoistic run.
    pub speed_split: SubgroupReport,
    pub persistent_egoistic: SubgroupReport,
    pub persistent_prosocial: SubgroupReport,
    /// ISI of mixed runs against the half-prosocial run of the same seed.
    pub persistent_egoistic_vs_half: SubgroupReport,
    pub persistent_prosocial_vs_half: SubgroupReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantileRow {
    pub n_sc: usize,
    pub density: f64,
    pub n_agents: usize,
    pub p_cooperative: f64,
    pub metric: &'static str,
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl QuantileRow {
    fn new(spec: &RunSpec, metric: &'static str, values: Vec<f64>) -> Self {
        let s = GroupStats::from_values(metric, values);
        Self {
            n_sc: spec.n_sc,
            density: spec.density,
            n_agents: spec.n_agents,
            p_cooperative: spec.p_cooperative,
            metric,
            count: s.count,
            mean: s.mean,
            min: s.values.first().copied().unwrap_or(f64::NAN),
            q1: s.q1,
            median: s.median,
            q3: s.q3,
            max: s.values.last().copied().unwrap_or(f64::NAN),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepResults {
    pub runs: Vec<RunOutcome>,
    pub comparisons: Vec<Comparison>,
    pub skipped: Vec<Skipped>,
    pub reports: Vec<VariantReport>,
    pub quantiles: Vec<QuantileRow>,
}

impl SweepResults {
    pub fn failed_runs(&self) -> Vec<String> {
        self.runs
            .iter()
            .filter(|r| matches!(r.trace.status, RunStatus::Failed(_)))
            .map(|r| r.spec.run_id())
            .collect()
    }
}

/// Runs the whole matrix on `jobs` threads. Results come back in plan order
/// whatever the scheduling, so deterministic runs give identical results.
pub fn run_experiment_matrix(base: &SimConfig, matrix: &MatrixConfig, jobs: usize) -> Result<SweepResults> {
    matrix.validate()?;
    base.validate().map_err(|e| SimError::Config(e.to_string()))?;
    let specs = plan_runs(base, matrix);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| SimError::Config(format!("worker pool: {e}")))?;
    let runs: Vec<RunOutcome> = pool.install(|| specs.par_iter().map(|&s| execute_run(base, s)).collect());
    Ok(analyze(runs, base.theta_prosocial))
}

fn pair(run: &RunOutcome, baseline: &RunOutcome) -> std::result::Result<PairedComparison, String> {
    let r = run.metrics.as_ref().map_err(|e| format!("run unusable: {e}"))?;
    let b = baseline.metrics.as_ref().map_err(|e| format!("baseline {} unusable: {e}", baseline.spec.run_id()))?;
    compute_isi_psi(r, b).map_err(|e| e.to_string())
}

/// Pairs runs with their baselines and builds subgroup and quantile tables.
pub fn analyze(runs: Vec<RunOutcome>, theta_prosocial: f64) -> SweepResults {
    let mut comparisons = Vec::new();
    let mut skipped = Vec::new();
    for run in runs.iter().filter(|r| r.spec.p_cooperative != 0.0) {
        let baseline = runs.iter().find(|b| b.spec.p_cooperative == 0.0 && b.spec.same_cell(&run.spec));
        let Some(baseline) = baseline else {
            skipped.push(Skipped { run_id: run.spec.run_id(), reason: "no p = 0 baseline for this seed".into() });
            continue;
        };
        match pair(run, baseline) {
            Ok(paired) => comparisons.push(Comparison { spec: run.spec, baseline_spec: baseline.spec, paired }),
            Err(reason) => skipped.push(Skipped { run_id: run.spec.run_id(), reason }),
        }
    }

    let mut variants: Vec<RunSpec> = Vec::new();
    for r in &runs {
        if !variants.iter().any(|v| v.same_variant(&r.spec)) {
            variants.push(r.spec);
        }
    }
    variants.sort_by(|a, b| a.n_sc.cmp(&b.n_sc).then(a.density.total_cmp(&b.density)).then(a.n_agents.cmp(&b.n_agents)));

    let mut reports = Vec::new();
    let mut quantiles = Vec::new();
    for v in &variants {
        let ours: Vec<PairedComparison> =
            comparisons.iter().filter(|c| c.spec.same_variant(v)).map(|c| c.paired.clone()).collect();
        let vs_half: Vec<PairedComparison> = runs
            .iter()
            .filter(|r| r.spec.same_variant(v) && r.spec.p_cooperative > 0.0 && r.spec.p_cooperative < 1.0)
            .filter_map(|r| {
                let half = runs.iter().find(|h| h.spec.p_cooperative == 0.5 && h.spec.same_cell(&r.spec))?;
                pair(r, half).ok()
            })
            .collect();
        reports.push(VariantReport {
            n_sc: v.n_sc,
            density: v.density,
            n_agents: v.n_agents,
            speed_split: subgroup_report(&ours, Grouping::SpeedMedianSplit, theta_prosocial),
            persistent_egoistic: subgroup_report(&ours, Grouping::PersistentEgoistic, theta_prosocial),
            persistent_prosocial: subgroup_report(&ours, Grouping::PersistentProsocial, theta_prosocial),
            persistent_egoistic_vs_half: subgroup_report(&vs_half, Grouping::PersistentEgoistic, theta_prosocial),
            persistent_prosocial_vs_half: subgroup_report(&vs_half, Grouping::PersistentProsocial, theta_prosocial),
        });

        let mut ps: Vec<f64> = ours.iter().map(|c| c.run.p_cooperative).collect();
        ps.sort_by(f64::total_cmp);
        ps.dedup();
        for p in ps {
            let at_p: Vec<&PairedComparison> = ours.iter().filter(|c| c.run.p_cooperative == p).collect();
            let isi = at_p.iter().flat_map(|c| c.isi.iter().flatten().copied()).collect();
            let psi = at_p.iter().map(|c| c.psi).collect();
            let spec = RunSpec { p_cooperative: p, ..*v };
            quantiles.push(QuantileRow::new(&spec, "isi", isi));
            quantiles.push(QuantileRow::new(&spec, "psi", psi));
        }
    }
    SweepResults { runs, comparisons, skipped, reports, quantiles }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Variant;

    fn tiny() -> SimConfig {
        SimConfig { n_agents: 2, n_steps: 2, ..SimConfig::default() }
    }

    #[test]
    fn two_seeds_five_proportions() {
        let matrix = MatrixConfig { seeds: vec![1, 2], ..MatrixConfig::default() };
        let specs = plan_runs(&tiny(), &matrix);
        assert_eq!(specs.len(), 10);
        let res = run_experiment_matrix(&tiny(), &matrix, 2).unwrap();
        assert_eq!(res.runs.len(), 10);
        assert_eq!(res.comparisons.len(), 8);
        assert!(res.skipped.is_empty());
        // isi + psi rows for four proportions
        assert_eq!(res.quantiles.len(), 8);
    }

    #[test]
    fn plan_is_ordered_and_deduplicated() {
        let matrix = MatrixConfig {
            seeds: vec![3, 1],
            proportions: vec![0.5, 0.0, 0.5],
            variants: vec![
                Variant { n_sc: 2, density: 3000.0, n_agents: Some(8) },
                Variant { n_sc: 1, density: 3000.0, n_agents: None },
            ],
        };
        let specs = plan_runs(&tiny(), &matrix);
        assert_eq!(specs.len(), 8);
        assert!(specs.windows(2).all(|w| w[0].cmp_key(&w[1]) == Ordering::Less));
        assert_eq!(specs[0], RunSpec { seed: 1, p_cooperative: 0.0, n_sc: 1, density: 3000.0, n_agents: 2 });
    }

    #[test]
    fn missing_baseline_is_reported() {
        let matrix = MatrixConfig { seeds: vec![5], proportions: vec![0.5, 1.0], ..MatrixConfig::default() };
        let res = run_experiment_matrix(&tiny(), &matrix, 1).unwrap();
        assert!(res.comparisons.is_empty());
        assert_eq!(res.skipped.len(), 2);
        assert!(res.skipped[0].reason.contains("baseline"));
    }

    #[test]
    fn results_do_not_depend_on_thread_count() {
        let matrix = MatrixConfig { seeds: vec![1, 2], proportions: vec![0.0, 1.0], ..MatrixConfig::default() };
        let a = run_experiment_matrix(&tiny(), &matrix, 1).unwrap();
        let b = run_experiment_matrix(&tiny(), &matrix, 3).unwrap();
        let traces = |r: &SweepResults| r.runs.iter().map(|o| o.trace.clone()).collect::<Vec<_>>();
        assert_eq!(traces(&a), traces(&b));
        assert_eq!(a.quantiles, b.quantiles);
    }
}
